//! Append-only NDJSON spill segments: `<dir>/<segment-index>.ndjson`.

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::BrokerError;
use crate::model::Tuple;

pub(crate) const SEGMENT_LIMIT: u64 = 65_536;

struct Segment {
    path: PathBuf,
    written: u64,
    read: u64,
    writer: Option<BufWriter<File>>,
    reader: Option<BufReader<File>>,
}

pub(crate) struct SpillLog {
    dir: PathBuf,
    segments: VecDeque<Segment>,
    next_index: u64,
    segment_limit: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BrokerError + '_ {
    move |source| BrokerError::Spill {
        path: path.to_path_buf(),
        source,
    }
}

impl SpillLog {
    pub(crate) fn new(dir: PathBuf, segment_limit: u64) -> Self {
        SpillLog {
            dir,
            segments: VecDeque::new(),
            next_index: 0,
            segment_limit: segment_limit.max(1),
        }
    }

    #[cfg(test)]
    pub(crate) fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub(crate) fn append(&mut self, tuple: &Tuple) -> Result<(), BrokerError> {
        let needs_new = match self.segments.back() {
            None => true,
            Some(seg) => seg.writer.is_none() || seg.written >= self.segment_limit,
        };
        if needs_new {
            if let Some(seg) = self.segments.back_mut() {
                seal(seg)?;
            }
            fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
            let path = self.dir.join(format!("{}.ndjson", self.next_index));
            self.next_index += 1;
            let file = OpenOptions::new()
                .create(true)
                .truncate(true)
                .write(true)
                .open(&path)
                .map_err(io_err(&path))?;
            self.segments.push_back(Segment {
                path,
                written: 0,
                read: 0,
                writer: Some(BufWriter::new(file)),
                reader: None,
            });
        }
        let seg = self.segments.back_mut().expect("segment exists");
        let writer = seg.writer.as_mut().expect("active segment has a writer");
        let mut line = tuple.to_ndjson();
        line.push('\n');
        writer
            .write_all(line.as_bytes())
            .map_err(io_err(&seg.path))?;
        seg.written += 1;
        Ok(())
    }

    /// Moves up to `max` of the oldest spilled tuples into `out`, deleting
    /// segments once fully consumed.
    pub(crate) fn read_into(
        &mut self,
        out: &mut VecDeque<Tuple>,
        max: usize,
    ) -> Result<usize, BrokerError> {
        let mut moved = 0;
        let mut line = String::new();
        while moved < max {
            let Some(seg) = self.segments.front_mut() else {
                break;
            };
            if seg.read == seg.written {
                if seg.writer.is_some() {
                    break;
                }
                let seg = self.segments.pop_front().expect("front exists");
                drop(seg.reader);
                fs::remove_file(&seg.path).map_err(io_err(&seg.path))?;
                continue;
            }
            // Readers only see sealed segments; appends move to a new one.
            seal(seg)?;
            if seg.reader.is_none() {
                let file = File::open(&seg.path).map_err(io_err(&seg.path))?;
                seg.reader = Some(BufReader::new(file));
            }
            let reader = seg.reader.as_mut().expect("reader opened");
            line.clear();
            let n = reader.read_line(&mut line).map_err(io_err(&seg.path))?;
            if n == 0 {
                return Err(BrokerError::Spill {
                    path: seg.path.clone(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        "spill segment shorter than recorded",
                    ),
                });
            }
            let tuple = Tuple::from_ndjson(&line).map_err(|source| BrokerError::CorruptSpill {
                path: seg.path.clone(),
                source,
            })?;
            out.push_back(tuple);
            seg.read += 1;
            moved += 1;
        }
        // Drop a trailing fully-read sealed segment eagerly.
        if let Some(seg) = self
            .segments
            .pop_front_if(|seg| seg.read == seg.written && seg.writer.is_none())
        {
            drop(seg.reader);
            fs::remove_file(&seg.path).map_err(io_err(&seg.path))?;
        }
        Ok(moved)
    }

    pub(crate) fn remove_all(&mut self) {
        self.segments.clear();
        let _ = fs::remove_dir_all(&self.dir);
    }
}

fn seal(seg: &mut Segment) -> Result<(), BrokerError> {
    if let Some(mut w) = seg.writer.take() {
        w.flush().map_err(io_err(&seg.path))?;
    }
    Ok(())
}
