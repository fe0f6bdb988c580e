//! PCM audio and the LFCC front-end.
//!
//! The feature pipeline: pre-emphasis (0.97), Hamming-windowed framing,
//! magnitude-squared FFT, triangular filterbank spaced linearly from 0 to
//! Nyquist, `log(max(energy, floor))`, orthonormal DCT-II, then crop or
//! zero-pad the time axis to a fixed frame count. Everything here is a pure
//! function of its inputs.

mod cache;
mod wav;

pub use cache::{read_feature_cache, write_feature_cache};
pub use wav::{read_wav, write_wav};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PRE_EMPHASIS: f64 = 0.97;

/// Mono audio at a known sample rate, amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::argument("sample rate must be positive"));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample {v}")));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// LFCC front-end settings.
///
/// The defaults are conventional anti-spoofing values: 25 ms frames with a
/// 10 ms hop at 16 kHz, a 512-point FFT, 20 linear filters and 20 retained
/// coefficients, cropped or padded to 64 frames.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LfccConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub n_filters: usize,
    pub n_coeffs: usize,
    pub log_floor: f64,
    pub target_frames: usize,
}

impl Default for LfccConfig {
    fn default() -> Self {
        LfccConfig {
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            n_filters: 20,
            n_coeffs: 20,
            log_floor: 1e-8,
            target_frames: 64,
        }
    }
}

impl LfccConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (f64::from(sample_rate) * self.frame_len_ms / 1000.0).round() as usize
    }

    pub fn hop(&self, sample_rate: u32) -> usize {
        (f64::from(sample_rate) * self.hop_ms / 1000.0).round() as usize
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let frame_len = self.frame_len(sample_rate);
        if frame_len == 0 || self.hop(sample_rate) == 0 {
            return Err(Error::argument("frame and hop must be at least one sample"));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::argument(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.fft_size < frame_len {
            return Err(Error::argument(format!(
                "fft_size {} smaller than frame length {frame_len}",
                self.fft_size
            )));
        }
        if self.n_coeffs > self.n_filters {
            return Err(Error::argument(format!(
                "n_coeffs {} exceeds n_filters {}",
                self.n_coeffs, self.n_filters
            )));
        }
        if self.n_filters == 0 {
            return Err(Error::argument("n_filters must be positive"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::argument("log_floor must be positive"));
        }
        if self.target_frames == 0 {
            return Err(Error::argument("target_frames must be positive"));
        }
        Ok(())
    }
}

/// LFCC frames-by-coefficients matrix for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    /// Source clip identifier, informational only.
    pub provenance: String,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, provenance: String) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(Error::shape(
                format!("{rows}x{cols}"),
                format!("{} values", values.len()),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite feature value {v}")));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            values,
            provenance,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// View as a `[1, rows, cols]` network input.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.rows, self.cols], self.values.clone()).expect("finite features")
    }
}

/// Orthonormal DCT-II.
///
/// `y[k] = s(k) * sum_n x[n] cos(pi (2n+1) k / (2N))` with `s(0) = sqrt(1/N)`
/// and `s(k) = sqrt(2/N)` otherwise.
pub fn dct_ii(input: &[f64]) -> Result<Vec<f64>> {
    if input.is_empty() {
        return Err(Error::argument("dct_ii input must be non-empty"));
    }
    let n = input.len();
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = 0.0;
        for (i, &x) in input.iter().enumerate() {
            acc += x * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n as f64))
                .cos();
        }
        out.push(acc * if k == 0 { scale0 } else { scale });
    }
    Ok(out)
}

/// Number of full frames that fit: `1 + (n - frame_len) / hop`.
pub fn num_frames(n_samples: usize, frame_len: usize, hop: usize) -> usize {
    if n_samples < frame_len {
        0
    } else {
        1 + (n_samples - frame_len) / hop
    }
}

fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos()
        })
        .collect()
}

/// Triangular filters spaced linearly from 0 to Nyquist, as weights over the
/// one-sided FFT bins.
fn linear_filterbank(
    n_filters: usize,
    fft_size: usize,
    sample_rate: u32,
) -> Vec<Vec<(usize, f64)>> {
    let nyquist = f64::from(sample_rate) / 2.0;
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|m| m as f64 * nyquist / (n_filters + 1) as f64)
        .collect();
    let bin_hz = f64::from(sample_rate) / fft_size as f64;
    let n_bins = fft_size / 2 + 1;

    (0..n_filters)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut taps = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f < center {
                    (f - lo) / (center - lo)
                } else if f == center {
                    1.0
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                if w > 0.0 {
                    taps.push((k, w));
                }
            }
            taps
        })
        .collect()
}

/// Filterbank log-energies per frame, the stage right before the DCT.
fn filterbank_log_energies(clip: &AudioClip, config: &LfccConfig) -> Result<Vec<Vec<f64>>> {
    config.validate(clip.sample_rate)?;
    let frame_len = config.frame_len(clip.sample_rate);
    let hop = config.hop(clip.sample_rate);
    let n_frames = num_frames(clip.samples.len(), frame_len, hop);
    if n_frames == 0 {
        return Err(Error::argument(format!(
            "clip of {} samples is shorter than one {frame_len}-sample frame",
            clip.samples.len()
        )));
    }

    // Pre-emphasis over the whole clip; x[-1] is taken as 0.
    let mut emphasized = Vec::with_capacity(clip.samples.len());
    let mut prev = 0.0;
    for &s in &clip.samples {
        emphasized.push(s - PRE_EMPHASIS * prev);
        prev = s;
    }

    let window = hamming(frame_len);
    let filters = linear_filterbank(config.n_filters, config.fft_size, clip.sample_rate);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(config.fft_size);

    let mut energies = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); config.fft_size];
    for frame in 0..n_frames {
        let start = frame * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < frame_len {
                Complex::new(emphasized[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..config.fft_size / 2 + 1]
            .iter()
            .map(|c| c.re * c.re + c.im * c.im)
            .collect();
        let row: Vec<f64> = filters
            .iter()
            .map(|taps| {
                let e: f64 = taps.iter().map(|&(k, w)| w * power[k]).sum();
                e.max(config.log_floor).ln()
            })
            .collect();
        energies.push(row);
    }
    Ok(energies)
}

/// Full LFCC feature matrix for one clip, cropped or zero-padded to
/// `target_frames` rows.
pub fn lfcc(clip: &AudioClip, config: &LfccConfig) -> Result<FeatureMatrix> {
    let energies = filterbank_log_energies(clip, config)?;
    let mut values = Vec::with_capacity(config.target_frames * config.n_coeffs);
    for row in energies.iter().take(config.target_frames) {
        let ceps = dct_ii(row)?;
        values.extend_from_slice(&ceps[..config.n_coeffs]);
    }
    // zero-pad the time axis at the end
    values.resize(config.target_frames * config.n_coeffs, 0.0);
    FeatureMatrix::new(
        config.target_frames,
        config.n_coeffs,
        values,
        String::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine_clip(freq: f64, secs: f64, rate: u32) -> AudioClip {
        let n = (secs * f64::from(rate)) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin() * 0.8)
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn dct_constant_vector_excites_only_coefficient_zero() {
        let y = dct_ii(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-12);
        for &v in &y[1..] {
            assert!(v.abs() < 1e-12);
        }
        let z = dct_ii(&[0.0; 4]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(dct_ii(&[]).is_err());
    }

    #[test]
    fn dct_matches_naive_cosine_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = dct_ii(&x).unwrap();
        // independent naive evaluation
        let n = x.len() as f64;
        for k in 0..x.len() {
            let mut acc = 0.0;
            for (i, &v) in x.iter().enumerate() {
                let angle = std::f64::consts::PI / n * (i as f64 + 0.5) * k as f64;
                acc += v * angle.cos();
            }
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            assert!((y[k] - scale * acc).abs() < 1e-9, "coefficient {k}");
        }
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        for n in [2usize, 5, 16, 32] {
            let mut rows = Vec::new();
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                rows.push(dct_ii(&e).unwrap());
            }
            // G^T G = I: columns of the transform matrix are orthonormal
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n).map(|i| rows[a][i] * rows[b][i]).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-9, "n={n} ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn one_second_clip_has_98_raw_frames() {
        let cfg = LfccConfig::default();
        assert_eq!(cfg.frame_len(16000), 400);
        assert_eq!(cfg.hop(16000), 160);
        assert_eq!(num_frames(16000, 400, 160), 98);
    }

    #[test]
    fn all_zero_clip_gives_floor_energy_and_dc_only() {
        let cfg = LfccConfig::default();
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let energies = filterbank_log_energies(&clip, &cfg).unwrap();
        let floor_log = cfg.log_floor.ln();
        for row in &energies {
            for &e in row {
                assert!((e - floor_log).abs() < 1e-12);
            }
        }
        let features = lfcc(&clip, &cfg).unwrap();
        let expected_dc = floor_log * (cfg.n_filters as f64).sqrt();
        for r in 0..98.min(cfg.target_frames) {
            let row = features.row(r);
            assert!((row[0] - expected_dc).abs() < 1e-9);
            for &v in &row[1..] {
                assert!(v.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sine_energy_lands_in_filter_nearest_its_frequency() {
        // Independent oracle: naive DFT power spectrum + its own triangle
        // weights, computed without the fft crate or the pipeline code.
        let cfg = LfccConfig::default();
        let clip = sine_clip(1000.0, 0.2, 16000);
        let energies = filterbank_log_energies(&clip, &cfg).unwrap();

        let nyquist = 8000.0;
        let centers: Vec<f64> = (1..=cfg.n_filters)
            .map(|m| m as f64 * nyquist / (cfg.n_filters + 1) as f64)
            .collect();
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 1000.0)
                    .abs()
                    .partial_cmp(&(b.1 - 1000.0).abs())
                    .unwrap()
            })
            .unwrap()
            .0;

        // oracle frame: pre-emphasis + hamming + naive DFT over frame 3
        let frame_len = cfg.frame_len(16000);
        let hop = cfg.hop(16000);
        let start = 3 * hop;
        let mut frame = Vec::with_capacity(frame_len);
        for i in 0..frame_len {
            let x = clip.samples[start + i];
            let prev = if start + i == 0 {
                0.0
            } else {
                clip.samples[start + i - 1]
            };
            let w = 0.54
                - 0.46
                    * (2.0 * std::f64::consts::PI * i as f64 / (frame_len - 1) as f64).cos();
            frame.push((x - 0.97 * prev) * w);
        }
        let n = cfg.fft_size;
        let mut power = vec![0.0f64; n / 2 + 1];
        #[allow(clippy::needless_range_loop)]
        for k in 0..=n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in frame.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            power[k] = re * re + im * im;
        }
        let bin_hz = 16000.0 / n as f64;
        let mut oracle_energies = vec![0.0f64; cfg.n_filters];
        for (m, oe) in oracle_energies.iter_mut().enumerate() {
            let lo = m as f64 * nyquist / 21.0;
            let center = (m + 1) as f64 * nyquist / 21.0;
            let hi = (m + 2) as f64 * nyquist / 21.0;
            let mut acc = 0.0;
            for (k, &p) in power.iter().enumerate() {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f < center {
                    (f - lo) / (center - lo)
                } else if (f - center).abs() < 1e-12 {
                    1.0
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                acc += w * p;
            }
            *oe = acc.max(cfg.log_floor).ln();
        }
        let oracle_argmax = oracle_energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let impl_argmax = energies[3]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;

        assert_eq!(impl_argmax, oracle_argmax);
        assert_eq!(impl_argmax, nearest);
        // the oracle and the pipeline agree numerically, not just on argmax
        for (a, b) in energies[3].iter().zip(&oracle_energies) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn output_shape_is_fixed_regardless_of_duration() {
        let cfg = LfccConfig::default();
        for secs in [0.1, 0.5, 1.0, 2.5] {
            let clip = sine_clip(440.0, secs, 16000);
            let f = lfcc(&clip, &cfg).unwrap();
            assert_eq!((f.rows(), f.cols()), (cfg.target_frames, cfg.n_coeffs));
        }
    }

    #[test]
    fn short_clip_is_an_argument_error() {
        let cfg = LfccConfig::default();
        let clip = AudioClip::new(vec![0.1; 399], 16000).unwrap();
        assert!(matches!(lfcc(&clip, &cfg), Err(Error::Argument(_))));
        let empty = AudioClip::new(vec![], 16000).unwrap();
        assert!(matches!(lfcc(&empty, &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn lfcc_is_deterministic() {
        let cfg = LfccConfig::default();
        let clip = sine_clip(750.0, 1.0, 16000);
        let a = lfcc(&clip, &cfg).unwrap();
        let b = lfcc(&clip, &cfg).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn hop_shift_moves_frames_by_one_row() {
        let cfg = LfccConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..16000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let clip = AudioClip::new(samples.clone(), 16000).unwrap();
        let shifted = AudioClip::new(samples[160..].to_vec(), 16000).unwrap();
        let a = lfcc(&clip, &cfg).unwrap();
        let b = lfcc(&shifted, &cfg).unwrap();
        // row 0 of the shifted clip touches the pre-emphasis boundary; compare
        // interior rows only.
        for r in 1..40 {
            for (x, y) in a.row(r + 1).iter().zip(b.row(r)) {
                assert!((x - y).abs() < 1e-6, "row {r}");
            }
        }
    }
}
