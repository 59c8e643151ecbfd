//! N-MNIST address-event files: one file per sample, 40-bit records of
//! x (8 bits), y (8 bits), polarity (1 bit) and a 23-bit µs timestamp.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Event, EventSample, SENSOR_SIZE};
use crate::error::{Error, Result};

pub const RECORD_BYTES: usize = 5;

pub fn decode_event(r: &[u8]) -> Event {
    Event {
        x: r[0],
        y: r[1],
        polarity: r[2] >> 7,
        t_us: ((r[2] as u32 & 0x7f) << 16) | ((r[3] as u32) << 8) | r[4] as u32,
    }
}

pub fn encode_event(e: &Event) -> [u8; RECORD_BYTES] {
    [
        e.x,
        e.y,
        (e.polarity << 7) | ((e.t_us >> 16) & 0x7f) as u8,
        (e.t_us >> 8) as u8,
        e.t_us as u8,
    ]
}

pub fn parse_events(bytes: &[u8]) -> Result<Vec<Event>> {
    if bytes.len() % RECORD_BYTES != 0 {
        let whole = bytes.len() - bytes.len() % RECORD_BYTES;
        return Err(Error::format(
            whole as u64,
            format!("{} trailing bytes do not form a {RECORD_BYTES}-byte record", bytes.len() - whole),
        ));
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, r)| {
            let e = decode_event(r);
            if e.x as usize >= SENSOR_SIZE || e.y as usize >= SENSOR_SIZE {
                Err(Error::format(
                    (i * RECORD_BYTES) as u64,
                    format!("event ({}, {}) outside the {SENSOR_SIZE}x{SENSOR_SIZE} sensor", e.x, e.y),
                ))
            } else {
                Ok(e)
            }
        })
        .collect()
}

pub fn load_sample(path: &Path, label: u8) -> Result<EventSample> {
    let bytes = fs::read(path)?;
    let mut events = parse_events(&bytes)?;
    events.sort_by_key(|e| e.t_us);
    Ok(EventSample { events, label })
}

#[derive(Debug, Clone, Default)]
pub struct NmnistSet {
    pub samples: Vec<EventSample>,
    /// Files that held no events; they are still present in `samples`.
    pub empty: Vec<PathBuf>,
}

/// Loads `dir/<label>/*.bin` for labels 0 to 9, sorted by file name.
pub fn load_nmnist(dir: &Path) -> Result<NmnistSet> {
    let mut set = NmnistSet::default();
    for label in 0u8..10 {
        let class_dir = dir.join(label.to_string());
        if !class_dir.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&class_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        for f in files {
            let s = load_sample(&f, label)?;
            if s.events.is_empty() {
                log::warn!("empty N-MNIST sample {}", f.display());
                set.empty.push(f);
            }
            set.samples.push(s);
        }
    }
    Ok(set)
}
