//! A farm of simulated things publishing Neubot-like tuples, a benchmark
//! harness measuring broker delivery, and a replayer for recorded logs.
//!
//! Farm configuration file (TOML):
//!
//! ```toml
//! things = 3
//! period_ms = 100
//! duration_ms = 10000
//! topology = "shared_queue"     # or "queue_per_thing"
//! seed = 42
//! clock = "virtual"             # or "real"
//! queue = "farm"                # shared queue name, or prefix per thing
//!
//! [[attributes]]
//! name = "download_speed"
//! generator = { kind = "sine", mean = 50.0, amplitude = 20.0, period_ms = 86400000, noise = 5.0 }
//!
//! [[attributes]]
//! name = "isp_grade"
//! generator = { kind = "uniform", min = 0.0, max = 1.0 }
//! ```

mod farm;
mod replay;

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::broker::DEFAULT_MEMORY_CAPACITY;
use crate::error::SimError;
use crate::model::{Timestamp, Tuple, Value, SRC_KEY, TS_KEY};

pub use farm::{run_farm, LatencySummary, RunReport, REPORT_CSV_HEADER};
pub use replay::{replay_log, ReplayOptions, ReplayReport, Speed};

const DAY_MS: u64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    SharedQueue,
    QueuePerThing,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::SharedQueue => "shared",
            Topology::QueuePerThing => "per-thing",
        }
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shared" | "shared_queue" | "shared-queue" => Ok(Topology::SharedQueue),
            "per-thing" | "per_thing" | "queue_per_thing" | "queue-per-thing" => Ok(Topology::QueuePerThing),
            other => Err(format!("unknown topology `{other}` (expected shared or per-thing)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Virtual,
    Real,
}

impl FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "virtual" => Ok(ClockMode::Virtual),
            "real" => Ok(ClockMode::Real),
            other => Err(format!("unknown clock mode `{other}` (expected virtual or real)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Const {
        value: f64,
    },
    /// Uniform over `[min, max)`.
    Uniform {
        min: f64,
        max: f64,
    },
    /// `mean + amplitude * sin(2π t / period)` plus uniform noise in
    /// `[-noise, noise]`, floored at zero.
    Sine {
        mean: f64,
        amplitude: f64,
        period_ms: u64,
        noise: f64,
    },
}

impl Generator {
    fn validate(&self) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            Generator::Const { value } if finite(&[value]) => Ok(()),
            Generator::Uniform { min, max } if finite(&[min, max]) && min <= max => Ok(()),
            Generator::Sine {
                mean,
                amplitude,
                period_ms,
                noise,
            } if finite(&[mean, amplitude, noise]) && period_ms > 0 && noise >= 0.0 => Ok(()),
            _ => Err(format!("invalid generator {self:?}")),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, now: Timestamp) -> f64 {
        match *self {
            Generator::Const { value } => value,
            Generator::Uniform { min, max } => {
                if min == max {
                    min
                } else {
                    rng.gen_range(min..max)
                }
            }
            Generator::Sine {
                mean,
                amplitude,
                period_ms,
                noise,
            } => {
                let phase = (now.0 % period_ms) as f64 / period_ms as f64;
                let jitter = noise * (rng.gen::<f64>() * 2.0 - 1.0);
                (mean + amplitude * (TAU * phase).sin() + jitter).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeModel {
    pub name: String,
    pub generator: Generator,
}

/// Download and upload speeds following a noisy daily cycle.
pub fn neubot_model() -> Vec<AttributeModel> {
    vec![
        AttributeModel {
            name: "download_speed".into(),
            generator: Generator::Sine {
                mean: 50.0,
                amplitude: 20.0,
                period_ms: DAY_MS,
                noise: 5.0,
            },
        },
        AttributeModel {
            name: "upload_speed".into(),
            generator: Generator::Sine {
                mean: 12.0,
                amplitude: 4.0,
                period_ms: DAY_MS,
                noise: 1.5,
            },
        },
    ]
}

fn default_queue() -> String {
    "farm".into()
}

fn default_capacity() -> usize {
    DEFAULT_MEMORY_CAPACITY
}

fn default_publishers() -> usize {
    4
}

fn default_consumers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmConfig {
    pub things: usize,
    pub period_ms: u64,
    pub duration_ms: u64,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default = "neubot_model")]
    pub attributes: Vec<AttributeModel>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockMode,
    /// Shared queue name, or the prefix of `<queue>.<i>` per-thing queues.
    #[serde(default = "default_queue")]
    pub queue: String,
    /// Virtual-clock start instant; defaults to the epoch.
    #[serde(default)]
    pub start_ms: u64,
    #[serde(default = "default_capacity")]
    pub queue_capacity: usize,
    /// Publisher threads in real-clock runs.
    #[serde(default = "default_publishers")]
    pub publishers: usize,
    /// Consumer threads. Each queue has exactly one consumer, so this is
    /// capped at the number of queues.
    #[serde(default = "default_consumers")]
    pub consumers: usize,
}

impl FarmConfig {
    pub fn new(things: usize, period_ms: u64, duration_ms: u64) -> Self {
        FarmConfig {
            things,
            period_ms,
            duration_ms,
            topology: Topology::SharedQueue,
            attributes: neubot_model(),
            seed: 0,
            clock: ClockMode::Virtual,
            queue: default_queue(),
            start_ms: 0,
            queue_capacity: DEFAULT_MEMORY_CAPACITY,
            publishers: default_publishers(),
            consumers: default_consumers(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: FarmConfig =
            toml::from_str(&text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.things == 0 {
            return bad("things must be at least 1".into());
        }
        if self.period_ms == 0 {
            return bad("period must be at least 1 ms".into());
        }
        if self.attributes.is_empty() {
            return bad("at least one attribute generator is required".into());
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be at least 1".into());
        }
        if self.consumers == 0 {
            return bad("consumers must be at least 1".into());
        }
        for a in &self.attributes {
            if a.name.is_empty() || a.name == TS_KEY || a.name == SRC_KEY {
                return bad(format!("invalid attribute name `{}`", a.name));
            }
            a.generator.validate().map_err(SimError::InvalidConfig)?;
        }
        Ok(())
    }

    /// Tuples each thing publishes.
    pub fn tuples_per_thing(&self) -> u64 {
        self.duration_ms / self.period_ms
    }

    /// Phase offset of thing `i`, spreading things evenly over one period.
    pub fn offset(&self, i: usize) -> u64 {
        (i as u128 * self.period_ms as u128 / self.things as u128) as u64
    }

    pub fn queue_name(&self, thing: usize) -> String {
        match self.topology {
            Topology::SharedQueue => self.queue.clone(),
            Topology::QueuePerThing => format!("{}.{thing}", self.queue),
        }
    }

    /// Consumer threads actually used.
    pub fn effective_consumers(&self) -> usize {
        self.consumers.clamp(1, self.queue_names().len())
    }

    pub fn queue_names(&self) -> Vec<String> {
        match self.topology {
            Topology::SharedQueue => vec![self.queue.clone()],
            Topology::QueuePerThing => (0..self.things).map(|i| self.queue_name(i)).collect(),
        }
    }
}

pub fn thing_id(i: usize) -> String {
    format!("thing-{i}")
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for one thing.
pub fn thing_rng(seed: u64, thing: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(thing as u64)))
}

/// One tuple from `thing`, stamped `now`, attributes drawn from `model`.
pub fn generate_tuple(thing: &str, model: &[AttributeModel], rng: &mut ChaCha8Rng, now: Timestamp) -> Tuple {
    let attrs = model
        .iter()
        .map(|a| (a.name.clone(), Value::Float(a.generator.sample(rng, now))))
        .collect();
    Tuple::new(now, thing, attrs).expect("validated models produce valid tuples")
}

/// The farm's tuples on a virtual timeline in timestamp order, paired with
/// the index of the producing thing. Thing `i` publishes at
/// `start + offset(i) + k * period` for `k < tuples_per_thing`.
pub struct FarmStream<'a> {
    config: &'a FarmConfig,
    rngs: Vec<ChaCha8Rng>,
    ids: Vec<String>,
    k: u64,
    thing: usize,
}

impl<'a> FarmStream<'a> {
    pub fn new(config: &'a FarmConfig) -> Self {
        FarmStream {
            rngs: (0..config.things).map(|i| thing_rng(config.seed, i)).collect(),
            ids: (0..config.things).map(thing_id).collect(),
            config,
            k: 0,
            thing: 0,
        }
    }
}

impl Iterator for FarmStream<'_> {
    type Item = (usize, Tuple);

    fn next(&mut self) -> Option<Self::Item> {
        if self.k >= self.config.tuples_per_thing() {
            return None;
        }
        let i = self.thing;
        let ts = Timestamp(self.config.start_ms + self.config.offset(i) + self.k * self.config.period_ms);
        let t = generate_tuple(&self.ids[i], &self.config.attributes, &mut self.rngs[i], ts);
        self.thing += 1;
        if self.thing == self.config.things {
            self.thing = 0;
            self.k += 1;
        }
        Some((i, t))
    }
}

/// Writes the farm's virtual-clock output as an NDJSON log.
pub fn write_farm_log(config: &FarmConfig, out: &mut impl Write) -> Result<u64, SimError> {
    config.validate()?;
    let mut n = 0;
    for (_, t) in FarmStream::new(config) {
        writeln!(out, "{}", t.to_ndjson()).map_err(|source| SimError::Io {
            path: "<output>".into(),
            source,
        })?;
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn const_generator() {
        let mut rng = thing_rng(1, 0);
        let g = Generator::Const { value: 5.0 };
        assert!((0..10).all(|i| g.sample(&mut rng, Timestamp(i)) == 5.0));
    }

    #[test]
    fn uniform_is_reproducible() {
        let g = Generator::Uniform { min: 0.0, max: 1.0 };
        let draw = || {
            let mut rng = thing_rng(7, 3);
            (0..100).map(|i| g.sample(&mut rng, Timestamp(i))).collect::<Vec<_>>()
        };
        let a = draw();
        assert_eq!(a, draw());
        assert!(a.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn things_get_distinct_streams() {
        let g = Generator::Uniform { min: 0.0, max: 1.0 };
        let mut r0 = thing_rng(42, 0);
        let mut r1 = thing_rng(42, 1);
        let a: Vec<f64> = (0..10_000).map(|i| g.sample(&mut r0, Timestamp(i))).collect();
        let b: Vec<f64> = (0..10_000).map(|i| g.sample(&mut r1, Timestamp(i))).collect();
        let collisions = a.iter().zip(&b).filter(|(x, y)| x == y).count();
        assert_eq!(collisions, 0);
    }

    #[test]
    fn stream_is_ordered_and_counted() {
        let mut c = FarmConfig::new(3, 100, 10_000);
        c.start_ms = 1_000;
        let ts: Vec<(usize, u64)> = FarmStream::new(&c).map(|(i, t)| (i, t.timestamp().0)).collect();
        assert_eq!(ts.len(), 300);
        assert!(ts.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(&ts[..4], &[(0, 1_000), (1, 1_033), (2, 1_066), (0, 1_100)]);
    }

    #[test]
    fn toml_config_round_trip() {
        let text = r#"
            things = 10
            period_ms = 50
            duration_ms = 1000
            topology = "queue_per_thing"
            seed = 9

            [[attributes]]
            name = "x"
            generator = { kind = "uniform", min = 1.0, max = 2.0 }
        "#;
        let c: FarmConfig = toml::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.topology, Topology::QueuePerThing);
        assert_eq!(c.queue, "farm");
        assert_eq!(c.queue_names().len(), 10);
        let again: FarmConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
        let mut bad = c.clone();
        bad.things = 0;
        assert!(bad.validate().is_err());
        bad = c;
        bad.attributes[0].generator = Generator::Uniform { min: 2.0, max: 1.0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn logs_are_byte_identical() {
        let c = FarmConfig::new(4, 250, 5_000);
        let mut a = Vec::new();
        let mut b = Vec::new();
        assert_eq!(write_farm_log(&c, &mut a).unwrap(), 80);
        write_farm_log(&c, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
