//! Survival datasets, time normalization and the `K`-bin time grid.
//!
//! Observed times are mapped onto `[0, 1)` so that the earliest event lands
//! at `0.1 / K`, the latest event at `(K - 2.1) / K`, and anything at or
//! beyond `T¹max` collapses onto `(K - 1) / K`. Bin `k` (1-based) covers
//! `[(k - 1) / K, k / K)`; bin `K` is reserved for censored samples that
//! outlive every observed event.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Variance floor used when standardizing covariates.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Clamp `x` into `[a, b]`.
pub fn crop(x: f64, a: f64, b: f64) -> Result<f64> {
    if a > b {
        return Err(Error::InvalidBounds { lower: a, upper: b });
    }
    Ok(if x < a {
        a
    } else if x > b {
        b
    } else {
        x
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

impl Sample {
    pub fn new(features: Vec<f64>, time: f64, event: bool) -> Result<Self> {
        if !time.is_finite() || time <= 0.0 {
            return Err(Error::OutOfRange {
                what: "observed time must be finite and > 0".into(),
                value: time,
            });
        }
        Ok(Self {
            features,
            time,
            event,
        })
    }
}

/// Discretization of study time into `K` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub k_bins: usize,
    /// Earliest event time (raw units).
    pub t_min: f64,
    /// Latest event time (raw units).
    pub t_max: f64,
    /// Raw-time width of one bin, `(t_max - t_min) / (K - 2.2)`.
    pub delta_t: f64,
    pub t_min_prime: f64,
    pub t_max_1: f64,
    pub t_max_2: f64,
}

impl TimeGrid {
    /// Build a grid from the minimum and maximum event times.
    pub fn from_event_range(t_min: f64, t_max: f64, k_bins: usize) -> Result<Self> {
        if k_bins < 3 {
            return Err(Error::DegenerateGrid(format!(
                "k_bins must be >= 3, got {k_bins}"
            )));
        }
        if !(t_min.is_finite() && t_max.is_finite()) || t_max <= t_min {
            return Err(Error::DegenerateGrid(format!(
                "need two distinct event times, got t_min={t_min}, t_max={t_max}"
            )));
        }
        let delta_t = (t_max - t_min) / (k_bins as f64 - 2.2);
        let t_min_prime = t_min - 0.1 * delta_t;
        let t_max_1 = t_min_prime + (k_bins as f64 - 1.0) * delta_t;
        let t_max_2 = t_min_prime + k_bins as f64 * delta_t;
        Ok(Self {
            k_bins,
            t_min,
            t_max,
            delta_t,
            t_min_prime,
            t_max_1,
            t_max_2,
        })
    }

    /// Normalized time `t̃ ∈ [0, (K-1)/K]`.
    pub fn normalize(&self, t: f64) -> f64 {
        normalize_time(t, self)
    }

    /// Normalized time and its 1-based bin.
    pub fn bin_of(&self, t: f64) -> (f64, usize) {
        let units = self.grid_units(t);
        let bin = (units.floor() as usize + 1).min(self.k_bins);
        (units / self.k_bins as f64, bin)
    }

    /// Time measured in bin widths from `T′min`, cropped to `[0, K-1]`.
    ///
    /// Cropping on this axis is the same as cropping `t` to
    /// `[T′min, T¹max]` since the map is affine and increasing, but it keeps
    /// the landmark values (`0.1`, `K - 2.1`, `K - 1`) exact.
    fn grid_units(&self, t: f64) -> f64 {
        let upper = self.k_bins as f64 - 1.0;
        if t >= self.t_max_1 {
            return upper;
        }
        // measured from whichever event landmark is closer
        let span = self.k_bins as f64 - 2.2;
        let frac = (t - self.t_min) / (self.t_max - self.t_min);
        let units = if frac <= 0.5 {
            0.1 + frac * span
        } else {
            (self.k_bins as f64 - 2.1) - (1.0 - frac) * span
        };
        units.clamp(0.0, upper)
    }

    /// Normalized position of the latest training event, `(K - 2.1) / K`.
    pub fn normalized_t_max(&self) -> f64 {
        self.normalize(self.t_max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# training time grid\n");
        let _ = writeln!(s, "k_bins={}", self.k_bins);
        let _ = writeln!(s, "t_min={:e}", self.t_min);
        let _ = writeln!(s, "t_max={:e}", self.t_max);
        let _ = writeln!(s, "delta_t={:e}", self.delta_t);
        let _ = writeln!(s, "t_min_prime={:e}", self.t_min_prime);
        let _ = writeln!(s, "t_max_1={:e}", self.t_max_1);
        let _ = writeln!(s, "t_max_2={:e}", self.t_max_2);
        s
    }

    /// Parse the `key=value` form written by [`TimeGrid::to_text`]. Only
    /// `k_bins`, `t_min` and `t_max` are authoritative; the derived constants
    /// are recomputed and must agree.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("grid file: malformed line `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            kv.get(key)
                .ok_or_else(|| Error::Config(format!("grid file: missing `{key}`")))
        };
        let parse_f = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("grid file: `{key}`: {e}")))
        };
        let k_bins = get("k_bins")?
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("grid file: `k_bins`: {e}")))?;
        let grid = Self::from_event_range(parse_f("t_min")?, parse_f("t_max")?, k_bins)?;
        if let Some(v) = kv.get("delta_t") {
            let stored: f64 = v
                .parse()
                .map_err(|e| Error::Config(format!("grid file: `delta_t`: {e}")))?;
            if stored != grid.delta_t {
                return Err(Error::Config(format!(
                    "grid file: delta_t {stored} inconsistent with t_min/t_max/k_bins"
                )));
            }
        }
        Ok(grid)
    }
}

/// Build the grid from the event samples (δ = 1) of `dataset`.
pub fn build_time_grid(dataset: &SurvivalDataset, k_bins: usize) -> Result<TimeGrid> {
    let mut events = dataset
        .samples
        .iter()
        .filter(|s| s.event)
        .map(|s| s.time);
    let first = events
        .next()
        .ok_or_else(|| Error::DegenerateGrid("dataset has no events".into()))?;
    let (t_min, t_max) = events.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t)));
    if t_min == t_max {
        return Err(Error::DegenerateGrid(
            "fewer than two distinct event times".into(),
        ));
    }
    TimeGrid::from_event_range(t_min, t_max, k_bins)
}

pub fn normalize_time(t: f64, grid: &TimeGrid) -> f64 {
    grid.grid_units(t) / grid.k_bins as f64
}

/// 1-based bin `k` with `(k - 1) / K <= t_norm < k / K`.
pub fn assign_bin(t_norm: f64, k_bins: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&t_norm) {
        return Err(Error::OutOfRange {
            what: "normalized time must lie in [0, 1)".into(),
            value: t_norm,
        });
    }
    Ok(((t_norm * k_bins as f64).floor() as usize + 1).min(k_bins))
}

/// Midpoint `(2k - 1) / (2K)` of bin `k`.
pub fn bin_midpoint(k: usize, k_bins: usize) -> Result<f64> {
    if k == 0 || k > k_bins {
        return Err(Error::OutOfRange {
            what: format!("bin index must be in 1..={k_bins}"),
            value: k as f64,
        });
    }
    Ok((2 * k - 1) as f64 / (2 * k_bins) as f64)
}

/// Per-column z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Empty("cannot standardize an empty dataset".into()));
        }
        let d = samples[0].features.len();
        let mut means = vec![0.0; d];
        for s in samples {
            for (m, x) in means.iter_mut().zip(&s.features) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut vars = vec![0.0; d];
        for s in samples {
            for ((v, x), m) in vars.iter_mut().zip(&s.features).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|v| (v / n as f64).max(VARIANCE_FLOOR).sqrt())
            .collect();
        Ok(Self { means, stds })
    }

    pub fn apply(&self, samples: &mut [Sample]) -> Result<()> {
        for s in samples {
            if s.features.len() != self.means.len() {
                return Err(Error::Shape(format!(
                    "sample has {} features, scaler expects {}",
                    s.features.len(),
                    self.means.len()
                )));
            }
            for ((x, m), sd) in s.features.iter_mut().zip(&self.means).zip(&self.stds) {
                *x = (*x - m) / sd;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SurvivalDataset {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
    pub grid: Option<TimeGrid>,
    /// Statistics used to standardize `samples`, if any.
    pub scaler: Option<Standardizer>,
}

impl SurvivalDataset {
    pub fn new(samples: Vec<Sample>, feature_names: Vec<String>) -> Result<Self> {
        let d = feature_names.len();
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.features.len() != d)
        {
            return Err(Error::Shape(format!(
                "sample {i} has {} features, expected {d}",
                s.features.len()
            )));
        }
        Ok(Self {
            samples,
            feature_names,
            grid: None,
            scaler: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.event).collect()
    }

    pub fn censor_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| !s.event).count() as f64 / self.samples.len() as f64
    }

    /// Attach `grid` and return the binned view.
    pub fn bin(&mut self, grid: &TimeGrid) -> Vec<BinnedSample> {
        self.grid = Some(grid.clone());
        bin_samples(&self.samples, grid)
    }

    /// Fit a scaler on this dataset, standardize in place and remember it.
    pub fn standardize(&mut self) -> Result<()> {
        let scaler = Standardizer::fit(&self.samples)?;
        scaler.apply(&mut self.samples)?;
        self.scaler = Some(scaler);
        Ok(())
    }

    /// The samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            grid: self.grid.clone(),
            scaler: self.scaler.clone(),
        }
    }
}

/// A sample placed on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSample {
    pub features: Vec<f64>,
    pub t_norm: f64,
    /// 1-based bin index.
    pub bin: usize,
    pub event: bool,
}

pub fn bin_samples(samples: &[Sample], grid: &TimeGrid) -> Vec<BinnedSample> {
    samples
        .iter()
        .map(|s| {
            let (t_norm, bin) = grid.bin_of(s.time);
            BinnedSample {
                features: s.features.clone(),
                t_norm,
                bin,
                event: s.event,
            }
        })
        .collect()
}

/// Read a survival CSV without touching the covariates.
pub fn load_csv_raw(
    path: impl AsRef<Path>,
    time_column: &str,
    event_column: &str,
) -> Result<SurvivalDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let time_idx = find(time_column)?;
    let event_idx = find(event_column)?;
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != time_idx && i != event_idx)
        .collect();
    let feature_names = feature_idx.iter().map(|&i| headers[i].to_string()).collect();

    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut samples = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(row, format!("column `{}`: non-numeric value `{raw}`", &headers[i])))
        };
        let time = cell(time_idx)?;
        if time <= 0.0 {
            return Err(parse_err(row, format!("non-positive time {time}")));
        }
        let event = match cell(event_idx)? {
            0.0 => false,
            1.0 => true,
            v => return Err(parse_err(row, format!("event must be 0 or 1, got {v}"))),
        };
        let features = feature_idx
            .iter()
            .map(|&i| cell(i))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            features,
            time,
            event,
        });
    }
    SurvivalDataset::new(samples, feature_names)
}

/// Read a survival CSV and z-score every covariate column using statistics
/// from the whole file. The statistics are kept in `scaler`.
pub fn load_csv(
    path: impl AsRef<Path>,
    time_column: &str,
    event_column: &str,
) -> Result<SurvivalDataset> {
    let mut ds = load_csv_raw(path, time_column, event_column)?;
    ds.standardize()?;
    Ok(ds)
}

/// Write `dataset` as CSV: feature columns first, then time and event.
pub fn write_csv(
    dataset: &SurvivalDataset,
    path: impl AsRef<Path>,
    time_column: &str,
    event_column: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(time_column);
    header.push(event_column);
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut row: Vec<String> = s.features.iter().map(|x| x.to_string()).collect();
        row.push(s.time.to_string());
        row.push(if s.event { "1".into() } else { "0".into() });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Partition sizes by largest remainder; ties go to the earlier partition.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {total}")));
    }
    let exact = ratios.map(|r| n as f64 * r);
    let mut sizes = exact.map(|e| e.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Row indices of the train/validation/test parts: a seeded Fisher–Yates
/// shuffle cut by [`split_sizes`].
pub fn split_indices(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3]> {
    let sizes = split_sizes(n, [ratios.0, ratios.1, ratios.2])?;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let c = idx.split_off(sizes[0] + sizes[1]);
    let b = idx.split_off(sizes[0]);
    Ok([idx, b, c])
}

/// Split into train/validation/test following [`split_indices`].
pub fn split_dataset(
    dataset: &SurvivalDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset, SurvivalDataset)> {
    let [a, b, c] = split_indices(dataset.len(), ratios, seed)?;
    Ok((dataset.subset(&a), dataset.subset(&b), dataset.subset(&c)))
}
