//! Dataset ingestion and spike encoding.

pub mod idx;
pub mod nmnist;

use std::ops::Range;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use idx::load_idx;
pub use nmnist::load_nmnist;

/// Side length of the N-MNIST sensor.
pub const SENSOR_SIZE: usize = 34;
/// Input channels for event data: two polarities of a 34x34 sensor.
pub const EVENT_CHANNELS: usize = 2 * SENSOR_SIZE * SENSOR_SIZE;
pub const IMAGE_CHANNELS: usize = 28 * 28;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// Row-major intensities in [0, 1].
    pub pixels: Vec<f32>,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub x: u8,
    pub y: u8,
    pub polarity: u8,
    pub t_us: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSample {
    pub events: Vec<Event>,
    pub label: u8,
}

/// Binary input raster stored sparsely: the active channels of each 1 ms
/// step, sorted and without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InputRaster {
    pub n_input: usize,
    pub steps: Vec<Vec<u32>>,
}

impl InputRaster {
    pub fn empty(n_input: usize, duration: usize) -> Self {
        InputRaster { n_input, steps: vec![Vec::new(); duration] }
    }

    pub fn duration(&self) -> usize {
        self.steps.len()
    }

    pub fn n_spikes(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    pub fn is_active(&self, t: usize, channel: u32) -> bool {
        self.steps[t].binary_search(&channel).is_ok()
    }
}

/// Independent Bernoulli spikes with per-step probability
/// `intensity * r_max_hz / 1000`.
pub fn poisson_encode(
    pixels: &[f32],
    duration: usize,
    r_max_hz: f64,
    rng: &mut seed::Rng,
) -> Result<InputRaster> {
    let p_max = r_max_hz / 1000.0;
    if !(0.0..=1.0).contains(&p_max) {
        return Err(Error::Config(format!(
            "r_max = {r_max_hz} Hz gives a per-ms probability outside [0, 1]"
        )));
    }
    let active: Vec<(u32, f64)> = pixels
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, &x)| (i as u32, x as f64 * p_max))
        .collect();
    let mut raster = InputRaster::empty(pixels.len(), duration);
    for step in raster.steps.iter_mut() {
        for &(ch, p) in &active {
            if rng.random::<f64>() < p {
                step.push(ch);
            }
        }
    }
    Ok(raster)
}

pub fn event_channel(e: &Event) -> u32 {
    (e.polarity as usize * SENSOR_SIZE * SENSOR_SIZE + e.y as usize * SENSOR_SIZE + e.x as usize) as u32
}

/// Bins events with start time in `[start_ms, start_ms + duration)` into
/// 1 ms steps; repeated events in one bin collapse to one spike.
pub fn events_to_raster_window(events: &[Event], start_ms: usize, duration: usize) -> InputRaster {
    let mut raster = InputRaster::empty(EVENT_CHANNELS, duration);
    for e in events {
        let ms = (e.t_us / 1000) as usize;
        if ms >= start_ms && ms < start_ms + duration {
            raster.steps[ms - start_ms].push(event_channel(e));
        }
    }
    for s in raster.steps.iter_mut() {
        s.sort_unstable();
        s.dedup();
    }
    raster
}

pub fn events_to_raster(sample: &EventSample, duration: usize) -> InputRaster {
    events_to_raster_window(&sample.events, 0, duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Gaussian noise with standard deviation `sigma` in raw 0-255 pixel
    /// units, clipped back to the valid range.
    PixelNoise { sigma: f64 },
    /// Gaussian jitter of every event time, standard deviation in ms.
    /// Events leaving `[0, duration_ms)` are dropped.
    TimeShift { sigma_ms: f64, duration_ms: usize },
}

impl Perturbation {
    pub fn pixel_default() -> Self {
        Perturbation::PixelNoise { sigma: 125.0 }
    }

    pub fn time_default() -> Self {
        Perturbation::TimeShift { sigma_ms: 10.0, duration_ms: 250 }
    }
}

pub fn perturb_image(sample: &ImageSample, sigma: f64, rng: &mut seed::Rng) -> ImageSample {
    if sigma == 0.0 {
        return sample.clone();
    }
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let pixels = sample
        .pixels
        .iter()
        .map(|&x| ((x as f64 * 255.0 + noise.sample(rng)).clamp(0.0, 255.0) / 255.0) as f32)
        .collect();
    ImageSample { pixels, label: sample.label }
}

pub fn perturb_events(
    sample: &EventSample,
    sigma_ms: f64,
    duration_ms: usize,
    rng: &mut seed::Rng,
) -> EventSample {
    let limit = duration_ms as f64 * 1000.0;
    let jitter = Normal::new(0.0, sigma_ms * 1000.0).expect("finite sigma");
    let mut events: Vec<Event> = sample
        .events
        .iter()
        .filter_map(|e| {
            let t = e.t_us as f64 + if sigma_ms == 0.0 { 0.0 } else { jitter.sample(rng) };
            (t >= 0.0 && t < limit).then(|| Event { t_us: t.floor() as u32, ..*e })
        })
        .collect();
    events.sort_by_key(|e| e.t_us);
    EventSample { events, label: sample.label }
}

/// A loaded dataset, either static images or event streams.
#[derive(Debug, Clone)]
pub enum Stimuli {
    Images(Vec<ImageSample>),
    Events(Vec<EventSample>),
}

/// How stimuli become input spikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    pub r_max_hz: f64,
    /// Presentation length for spike counting, ms.
    pub sample_ms: usize,
    /// Snapshot length during liquid initialisation, ms.
    pub snapshot_ms: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig { r_max_hz: 250.0, sample_ms: 250, snapshot_ms: 20 }
    }
}

impl Stimuli {
    pub fn len(&self) -> usize {
        match self {
            Stimuli::Images(v) => v.len(),
            Stimuli::Events(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_input(&self) -> usize {
        match self {
            Stimuli::Images(v) => v.first().map_or(IMAGE_CHANNELS, |s| s.pixels.len()),
            Stimuli::Events(_) => EVENT_CHANNELS,
        }
    }

    pub fn label(&self, i: usize) -> u8 {
        match self {
            Stimuli::Images(v) => v[i].label,
            Stimuli::Events(v) => v[i].label,
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Stimuli {
        match self {
            Stimuli::Images(v) => Stimuli::Images(idx.iter().map(|&i| v[i].clone()).collect()),
            Stimuli::Events(v) => Stimuli::Events(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    pub fn slice(&self, r: Range<usize>) -> Stimuli {
        self.subset(&r.collect::<Vec<_>>())
    }

    /// Full-length presentation of sample `i`.
    pub fn encode(&self, i: usize, cfg: &EncodingConfig, rng: &mut seed::Rng) -> Result<InputRaster> {
        match self {
            Stimuli::Images(v) => poisson_encode(&v[i].pixels, cfg.sample_ms, cfg.r_max_hz, rng),
            Stimuli::Events(v) => Ok(events_to_raster(&v[i], cfg.sample_ms)),
        }
    }

    /// Short snapshot of sample `i`: a fresh Poisson encode for images, a
    /// window starting uniformly in `[0, sample_ms - snapshot_ms]` for events.
    pub fn snapshot(&self, i: usize, cfg: &EncodingConfig, rng: &mut seed::Rng) -> Result<InputRaster> {
        match self {
            Stimuli::Images(v) => poisson_encode(&v[i].pixels, cfg.snapshot_ms, cfg.r_max_hz, rng),
            Stimuli::Events(v) => {
                let last = cfg.sample_ms.saturating_sub(cfg.snapshot_ms);
                let start = rng.random_range(0..=last);
                Ok(events_to_raster_window(&v[i].events, start, cfg.snapshot_ms))
            }
        }
    }

    /// Perturbed copy; sample `i` uses its own generator so the result is
    /// independent of iteration order.
    pub fn perturbed(&self, kind: Perturbation, seed: u64) -> Stimuli {
        use crate::seed::stream;
        match (self, kind) {
            (Stimuli::Images(v), Perturbation::PixelNoise { sigma }) => Stimuli::Images(
                v.iter()
                    .enumerate()
                    .map(|(i, s)| perturb_image(s, sigma, &mut seed::item_rng(seed, stream::PERTURB, i as u64)))
                    .collect(),
            ),
            (Stimuli::Events(v), Perturbation::TimeShift { sigma_ms, duration_ms }) => Stimuli::Events(
                v.iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let mut rng = seed::item_rng(seed, stream::PERTURB, i as u64);
                        perturb_events(s, sigma_ms, duration_ms, &mut rng)
                    })
                    .collect(),
            ),
            _ => self.clone(),
        }
    }

    pub fn default_perturbation(&self) -> Perturbation {
        match self {
            Stimuli::Images(_) => Perturbation::pixel_default(),
            Stimuli::Events(_) => Perturbation::time_default(),
        }
    }
}

/// Loads `<dir>/images-idx3-ubyte[.gz]` and `<dir>/labels-idx1-ubyte[.gz]`,
/// or the standard `train-*`/`t10k-*` names when `prefix` is given.
pub fn load_idx_dir(dir: &Path, prefix: Option<&str>) -> Result<Vec<ImageSample>> {
    let stem = |kind: &str| match prefix {
        Some(p) => format!("{p}-{kind}"),
        None => kind.to_string(),
    };
    let find = |name: String| -> Result<std::path::PathBuf> {
        for candidate in [dir.join(format!("{name}.gz")), dir.join(&name)] {
            if candidate.exists() {
                return Ok(candidate);
            }
        }
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{name} not found in {}", dir.display()),
        )))
    };
    load_idx(&find(stem("images-idx3-ubyte"))?, &find(stem("labels-idx1-ubyte"))?)
}

/// Index ranges of a train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// Standard layout: the last `n_val` training samples become the
    /// validation set; the test file is separate.
    pub fn holdout(n_train_file: usize, n_val: usize, n_test_file: usize) -> Result<Self> {
        if n_val > n_train_file {
            return Err(Error::Config(format!("cannot hold out {n_val} of {n_train_file} samples")));
        }
        Ok(Split {
            train: 0..n_train_file - n_val,
            val: n_train_file - n_val..n_train_file,
            test: 0..n_test_file,
        })
    }

    /// Contiguous slices of one pool: `[train | val | test]`.
    pub fn contiguous(n_total: usize, n_train: usize, n_val: usize, n_test: usize) -> Result<Self> {
        if n_train + n_val + n_test > n_total {
            return Err(Error::Config(format!(
                "{n_train} + {n_val} + {n_test} samples requested from a pool of {n_total}"
            )));
        }
        Ok(Split {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: n_train + n_val..n_train + n_val + n_test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_intensity_never_spikes() {
        let mut rng = seed::rng(1, 0);
        let r = poisson_encode(&[0.0; 784], 1000, 250.0, &mut rng).unwrap();
        assert_eq!(r.n_spikes(), 0);
    }

    #[test]
    fn rate_out_of_range_is_config_error() {
        let mut rng = seed::rng(1, 0);
        assert!(matches!(poisson_encode(&[1.0], 10, 1500.0, &mut rng), Err(Error::Config(_))));
        assert!(matches!(poisson_encode(&[1.0], 10, -1.0, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn full_intensity_count_is_binomial() {
        // Bin(250, 0.25): mean 62.5, sd sqrt(46.875); the mean over 400
        // channels has sd 0.342.
        let mut rng = seed::rng(2, 0);
        let r = poisson_encode(&[1.0; 400], 250, 250.0, &mut rng).unwrap();
        let mean = r.n_spikes() as f64 / 400.0;
        assert!((mean - 62.5).abs() < 3.0 * (46.875f64 / 400.0).sqrt(), "{mean}");
    }

    #[test]
    fn encode_is_deterministic() {
        let px: Vec<f32> = (0..784).map(|i| (i % 7) as f32 / 6.0).collect();
        let a = poisson_encode(&px, 50, 250.0, &mut seed::rng(9, 4)).unwrap();
        let b = poisson_encode(&px, 50, 250.0, &mut seed::rng(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn event_binning_edges() {
        let ev = |t_us, x, y, polarity| Event { x, y, polarity, t_us };
        let s = EventSample {
            events: vec![ev(999, 1, 0, 0), ev(251_000, 2, 2, 1), ev(5_100, 3, 4, 1), ev(5_900, 3, 4, 1)],
            label: 0,
        };
        let r = events_to_raster(&s, 250);
        assert_eq!(r.n_input, 2312);
        assert_eq!(r.steps[0], vec![1]);
        assert_eq!(r.steps[5], vec![1156 + 4 * 34 + 3]);
        assert_eq!(r.n_spikes(), 2);
    }

    #[test]
    fn pixel_noise_statistics() {
        // Clipping is common at sigma 125, so the generator is checked
        // separately from the clipped images.
        let mut rng = seed::rng(3, 0);
        let n = Normal::new(0.0, 125.0).unwrap();
        let draws: Vec<f64> = (0..1_000_000).map(|_| n.sample(&mut rng)).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        assert!((sd - 125.0).abs() < 1.25, "{sd}");

        let img = ImageSample { pixels: vec![0.5; 784], label: 1 };
        let noisy = perturb_image(&img, 125.0, &mut rng);
        assert!(noisy.pixels.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(noisy.pixels.iter().any(|&x| x == 0.0) && noisy.pixels.iter().any(|&x| x == 1.0));
        assert_eq!(perturb_image(&img, 0.0, &mut rng), img);
    }

    #[test]
    fn time_shift_drops_out_of_range() {
        let s = EventSample {
            events: vec![
                Event { x: 0, y: 0, polarity: 0, t_us: 2_000 },
                Event { x: 1, y: 0, polarity: 0, t_us: 100_000 },
            ],
            label: 3,
        };
        assert_eq!(perturb_events(&s, 0.0, 250, &mut seed::rng(0, 0)), s);
        // Deterministic shift to -3 ms via a degenerate window.
        let early = EventSample { events: vec![Event { t_us: 0, ..s.events[0] }], label: 3 };
        let mut dropped = 0;
        let mut rng = seed::rng(5, 0);
        for _ in 0..200 {
            if perturb_events(&early, 10.0, 250, &mut rng).events.is_empty() {
                dropped += 1;
            }
        }
        // An event at t = 0 leaves [0, T) whenever the shift is negative.
        assert!((dropped as f64 - 100.0).abs() < 4.0 * 7.1, "{dropped}");
    }

    #[test]
    fn splits() {
        let s = Split::holdout(60_000, 10_000, 10_000).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (50_000, 10_000, 10_000));
        assert_eq!(s.val.start, s.train.end);
        assert!(Split::contiguous(100, 60, 30, 20).is_err());
    }

    proptest! {
        #[test]
        fn contiguous_split_partitions_pool(total in 0usize..500, a in 0usize..200, b in 0usize..200, c in 0usize..200) {
            if let Ok(s) = Split::contiguous(total, a, b, c) {
                let mut seen = vec![0u8; total];
                for i in s.train.clone().chain(s.val.clone()).chain(s.test.clone()) {
                    seen[i] += 1;
                }
                prop_assert!(seen.iter().all(|&k| k <= 1));
                prop_assert_eq!(seen.iter().filter(|&&k| k == 1).count(), a + b + c);
            }
        }

        #[test]
        fn event_binning_ignores_order(mut evs in proptest::collection::vec((0u8..34, 0u8..34, 0u8..2, 0u32..300_000), 0..200)) {
            let make = |v: &[(u8, u8, u8, u32)]| EventSample {
                events: v.iter().map(|&(x, y, polarity, t_us)| Event { x, y, polarity, t_us }).collect(),
                label: 0,
            };
            let a = events_to_raster(&make(&evs), 250);
            evs.reverse();
            let b = events_to_raster(&make(&evs), 250);
            prop_assert_eq!(a, b);
        }
    }
}
