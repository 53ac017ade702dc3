#![allow(dead_code)]

use std::io::Write;
use std::sync::{Arc, Mutex};

/// The four Neubot queries, verbatim.
pub const NEUBOT_QUERIES: [&str; 4] = [
    "EVERY 20 seconds compute the mean value of download_speed \n      of the last 10 minutes \nFROM influxdb database neubot series speedtest and streaming\n     RabbitMQ queue neubotspeed",
    "EVERY 60 seconds compute the max value of download_speed \n      of the last 3 minutes \nFROM  cassandra database neubot series speedtests and streaming \n      rabbitmq queue neubotspeed",
    "EVERY \t5 minutes compute the mean of the download_speed \n        of the last 120 days \nFROM \tcassandra database neubot series speedtests and streaming \n        rabbitmq queue neubotspeed",
    "EVERY   30 seconds compute the mean value of upload_speed \n        starting 10 days ago \nFROM \tcassandra database neubot series speedtests and streaming \n        rabbitmq queue neubotspeed",
];

/// "every two minutes give me the fastest download speed of the last 8
/// minutes", in grammar keywords, reading from the live stream.
pub const FASTEST_DOWNLOAD: &str =
    "EVERY 2 minutes compute the max value of download_speed of the last 8 minutes FROM streaming rabbitmq queue neubotspeed";

/// An in-memory output sink shareable with a pipeline thread.
#[derive(Clone, Default)]
pub struct SharedBuf(pub Arc<Mutex<Vec<u8>>>);

impl SharedBuf {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
