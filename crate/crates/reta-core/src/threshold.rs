//! Per-class adaptive rejection thresholds.
//!
//! Matching and non-matching reconstruction errors are partitioned by class,
//! each side is fitted with a Gaussian kernel density (Silverman bandwidth),
//! and the class threshold is the point minimizing the total
//! misclassification probability between the two densities under equal
//! priors: `R(t) = P_match(error > t) + P_nonmatch(error < t)`. At the
//! minimum the fitted densities cross, which is where accepting starts
//! costing more than rejecting.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of points in the threshold search grid.
pub const GRID_POINTS: usize = 1000;

/// Smallest admissible kernel bandwidth; keeps degenerate samples finite.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Match,
    NonMatch,
}

/// One reconstruction-error observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    pub class_id: usize,
    pub kind: ErrorKind,
    pub value: f64,
}

impl ErrorSample {
    pub fn new(class_id: usize, kind: ErrorKind, value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::argument(format!(
                "reconstruction error must be finite and >= 0, got {value}"
            )));
        }
        Ok(ErrorSample {
            class_id,
            kind,
            value,
        })
    }
}

/// Gaussian-kernel density over stored samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: Vec<f64>,
    bandwidth: f64,
}

/// Linear-interpolation percentile of sorted data, q in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Standard normal pdf.
fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal cdf. The erfc form keeps the lower tail accurate down to
/// subnormal densities instead of rounding to 0 near z = -8.
fn big_phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function, `1 - Phi(z)`, accurate in the upper
/// tail for the same reason.
fn survival(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Fit a KDE with Silverman's bandwidth,
/// `h = 0.9 * min(sigma, IQR / 1.34) * n^(-1/5)`, floored at 1e-6.
pub fn fit_kde(values: &[f64]) -> Result<KdeModel> {
    if values.is_empty() {
        return Err(Error::argument("cannot fit a KDE to zero samples"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite KDE sample {v}")));
    }
    let mut samples = values.to_vec();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let n = samples.len() as f64;
    let sigma = if samples.len() > 1 {
        let mean = samples.iter().sum::<f64>() / n;
        (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let iqr = percentile(&samples, 0.75) - percentile(&samples, 0.25);
    let spread = sigma.min(iqr / 1.34);
    let bandwidth = (0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR);
    Ok(KdeModel { samples, bandwidth })
}

impl KdeModel {
    /// Build from explicit samples and bandwidth (mostly for tests and file
    /// loading); samples are sorted, bandwidth is floored.
    pub fn with_bandwidth(values: &[f64], bandwidth: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::argument("cannot build a KDE with zero samples"));
        }
        let mut samples = values.to_vec();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(KdeModel {
            samples,
            bandwidth: bandwidth.max(BANDWIDTH_FLOOR),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// `(1/(n h)) sum_j phi((x - s_j) / h)`.
    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.samples.iter().map(|&s| phi((x - s) / h)).sum();
        sum / (self.samples.len() as f64 * h)
    }

    /// `(1/n) sum_j Phi((x - s_j) / h)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.samples.iter().map(|&s| big_phi((x - s) / h)).sum();
        sum / self.samples.len() as f64
    }

    /// `1 - cdf(x)`, evaluated tail-first so well-separated clusters retain
    /// a strictly positive (if tiny) upper tail.
    pub fn survival(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.samples.iter().map(|&s| survival((x - s) / h)).sum();
        sum / self.samples.len() as f64
    }
}

/// Misclassification probability at threshold t under equal priors:
/// `P_match(error > t) + P_nonmatch(error < t)`.
pub fn misclassification_risk(matching: &KdeModel, nonmatching: &KdeModel, t: f64) -> f64 {
    matching.survival(t) + nonmatching.cdf(t)
}

/// Threshold search result: the minimizer and the grid resolution it was
/// found at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub grid_step: f64,
}

/// Minimize the risk over a 1000-point grid spanning all samples of both
/// models plus three max-bandwidths of margin. Ties break toward the
/// smallest t.
pub fn compute_threshold(matching: &KdeModel, nonmatching: &KdeModel) -> ThresholdFit {
    let min = matching.samples[0].min(nonmatching.samples[0]);
    let max = matching.samples[matching.samples.len() - 1]
        .max(nonmatching.samples[nonmatching.samples.len() - 1]);
    let h_max = matching.bandwidth.max(nonmatching.bandwidth);
    let lo = min - 3.0 * h_max;
    let hi = max + 3.0 * h_max;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;

    let mut best_t = lo;
    let mut best_r = f64::INFINITY;
    for i in 0..GRID_POINTS {
        let t = lo + step * i as f64;
        let r = misclassification_risk(matching, nonmatching, t);
        if r < best_r {
            best_r = r;
            best_t = t;
        }
    }
    ThresholdFit {
        threshold: best_t,
        grid_step: step,
    }
}

/// Split samples into per-class (match values, nonmatch values) pairs,
/// preserving input order.
pub fn partition_errors(
    samples: &[ErrorSample],
    n_classes: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut parts = vec![(Vec::new(), Vec::new()); n_classes];
    for s in samples {
        let slot = parts.get_mut(s.class_id).ok_or_else(|| {
            Error::argument(format!(
                "class id {} out of range for {n_classes} classes",
                s.class_id
            ))
        })?;
        match s.kind {
            ErrorKind::Match => slot.0.push(s.value),
            ErrorKind::NonMatch => slot.1.push(s.value),
        }
    }
    Ok(parts)
}

/// Calibration output for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholdEntry {
    pub threshold: f64,
    pub match_bandwidth: Option<f64>,
    pub nonmatch_bandwidth: Option<f64>,
    pub match_n: usize,
    pub nonmatch_n: usize,
    pub fallback: bool,
    pub grid_step: f64,
}

/// Per-class rejection thresholds, indexed by known-class id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassThresholds {
    entries: Vec<ClassThresholdEntry>,
}

impl ClassThresholds {
    pub fn n_classes(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, class_id: usize) -> Option<&ClassThresholdEntry> {
        self.entries.get(class_id)
    }

    pub fn entries(&self) -> &[ClassThresholdEntry] {
        &self.entries
    }

    /// Serialize as a JSON object keyed by class id in ascending order.
    pub fn to_json(&self) -> Result<String> {
        let mut map = serde_json::Map::new();
        for (id, entry) in self.entries.iter().enumerate() {
            map.insert(id.to_string(), serde_json::to_value(entry)?);
        }
        Ok(serde_json::to_string_pretty(&serde_json::Value::Object(
            map,
        ))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, ClassThresholdEntry> = serde_json::from_str(text)?;
        let mut entries = vec![None; map.len()];
        for (key, entry) in map {
            let id: usize = key.parse().map_err(|_| Error::Format {
                what: "thresholds file",
                detail: format!("class key {key:?} is not an integer"),
            })?;
            if id >= entries.len() {
                return Err(Error::Format {
                    what: "thresholds file",
                    detail: format!("class ids are not contiguous from 0 (saw {id})"),
                });
            }
            entries[id] = Some(entry);
        }
        let entries: Option<Vec<_>> = entries.into_iter().collect();
        entries
            .map(|entries| ClassThresholds { entries })
            .ok_or(Error::Format {
                what: "thresholds file",
                detail: "duplicate or missing class ids".into(),
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }
}

/// Fit both KDEs and the threshold for every class.
///
/// Classes with fewer than two match or two nonmatch samples cannot support
/// a density fit; they fall back to the largest observed match error for the
/// class (or the largest match error overall if the class has none), which
/// accepts everything seen and nothing worse.
pub fn calibrate(samples: &[ErrorSample], n_classes: usize) -> Result<ClassThresholds> {
    if n_classes == 0 {
        return Err(Error::argument("need at least one class to calibrate"));
    }
    let parts = partition_errors(samples, n_classes)?;
    let global_max_match = samples
        .iter()
        .filter(|s| s.kind == ErrorKind::Match)
        .map(|s| s.value)
        .fold(0.0f64, f64::max);

    let entries = parts
        .iter()
        .map(|(matches, nonmatches)| {
            if matches.len() < 2 || nonmatches.len() < 2 {
                let threshold = matches.iter().cloned().fold(f64::NAN, f64::max);
                let threshold = if threshold.is_nan() {
                    global_max_match
                } else {
                    threshold
                };
                return Ok(ClassThresholdEntry {
                    threshold,
                    match_bandwidth: None,
                    nonmatch_bandwidth: None,
                    match_n: matches.len(),
                    nonmatch_n: nonmatches.len(),
                    fallback: true,
                    grid_step: 0.0,
                });
            }
            let match_kde = fit_kde(matches)?;
            let nonmatch_kde = fit_kde(nonmatches)?;
            let fit = compute_threshold(&match_kde, &nonmatch_kde);
            Ok(ClassThresholdEntry {
                threshold: fit.threshold,
                match_bandwidth: Some(match_kde.bandwidth()),
                nonmatch_bandwidth: Some(nonmatch_kde.bandwidth()),
                match_n: match_kde.n(),
                nonmatch_n: nonmatch_kde.n(),
                fallback: false,
                grid_step: fit.grid_step,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassThresholds { entries })
}
