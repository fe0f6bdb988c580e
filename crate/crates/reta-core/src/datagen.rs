//! Seeded synthetic multi-vendor corpus.
//!
//! Each vendor recipe is a harmonic stack with its own fundamental, decay,
//! spectral tilt, noise floor, comb-filter coloration and per-clip jitter;
//! together these mimic the way different generation systems leave
//! different spectral fingerprints. Unknown-vendor classes appear only in
//! the test split. Everything derives from the corpus seed, per clip, so
//! regeneration is byte-identical.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::signal::{write_wav, AudioClip};

/// Gain of the comb-filter tap; the delay is per recipe.
const COMB_GAIN: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VendorRecipe {
    pub class_id: usize,
    pub fundamental_hz: f64,
    pub n_harmonics: usize,
    pub harmonic_decay: f64,
    pub spectral_tilt_db_per_octave: f64,
    pub noise_floor_db: f64,
    pub comb_delay_samples: usize,
    pub jitter_pct: f64,
}

impl VendorRecipe {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.n_harmonics == 0 {
            return Err(Error::argument("recipe needs at least one harmonic"));
        }
        if !(self.fundamental_hz > 0.0)
            || self.fundamental_hz >= f64::from(sample_rate) / 2.0
        {
            return Err(Error::argument(format!(
                "fundamental {} Hz outside (0, Nyquist)",
                self.fundamental_hz
            )));
        }
        if !(0.0..=1.0).contains(&self.harmonic_decay) {
            return Err(Error::argument("harmonic_decay must be in [0, 1]"));
        }
        if !(0.0..100.0).contains(&self.jitter_pct) {
            return Err(Error::argument("jitter_pct must be in [0, 100)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::argument(format!("unknown split {other:?}"))),
        }
    }
}

/// Corpus layout: which recipes exist, how many clips per class per split,
/// and the clip format. Unknown recipes get test clips only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub known_recipes: Vec<VendorRecipe>,
    pub unknown_recipes: Vec<VendorRecipe>,
    pub clips_train: usize,
    pub clips_dev: usize,
    pub clips_test: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    pub compressed: bool,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            known_recipes: default_known_recipes(),
            unknown_recipes: default_unknown_recipes(),
            clips_train: 24,
            clips_dev: 8,
            clips_test: 10,
            clip_seconds: 1.0,
            sample_rate: 16000,
            compressed: false,
            seed: 7,
        }
    }
}

/// Six known vendors. Class 5 stands in for real speech: dense harmonics,
/// steep tilt, the most noise and jitter.
pub fn default_known_recipes() -> Vec<VendorRecipe> {
    vec![
        VendorRecipe {
            class_id: 0,
            fundamental_hz: 110.0,
            n_harmonics: 12,
            harmonic_decay: 0.75,
            spectral_tilt_db_per_octave: -3.0,
            noise_floor_db: -50.0,
            comb_delay_samples: 0,
            jitter_pct: 0.5,
        },
        VendorRecipe {
            class_id: 1,
            fundamental_hz: 155.0,
            n_harmonics: 18,
            harmonic_decay: 0.92,
            spectral_tilt_db_per_octave: -6.0,
            noise_floor_db: -45.0,
            comb_delay_samples: 24,
            jitter_pct: 0.3,
        },
        VendorRecipe {
            class_id: 2,
            fundamental_hz: 210.0,
            n_harmonics: 8,
            harmonic_decay: 0.6,
            spectral_tilt_db_per_octave: -2.0,
            noise_floor_db: -55.0,
            comb_delay_samples: 48,
            jitter_pct: 0.8,
        },
        VendorRecipe {
            class_id: 3,
            fundamental_hz: 260.0,
            n_harmonics: 15,
            harmonic_decay: 0.85,
            spectral_tilt_db_per_octave: -9.0,
            noise_floor_db: -40.0,
            comb_delay_samples: 12,
            jitter_pct: 0.2,
        },
        VendorRecipe {
            class_id: 4,
            fundamental_hz: 330.0,
            n_harmonics: 10,
            harmonic_decay: 0.7,
            spectral_tilt_db_per_octave: -4.5,
            noise_floor_db: -35.0,
            comb_delay_samples: 80,
            jitter_pct: 1.0,
        },
        VendorRecipe {
            class_id: 5,
            fundamental_hz: 135.0,
            n_harmonics: 25,
            harmonic_decay: 0.95,
            spectral_tilt_db_per_octave: -12.0,
            noise_floor_db: -30.0,
            comb_delay_samples: 0,
            jitter_pct: 2.5,
        },
    ]
}

/// Two vendors that only ever appear in the test split.
pub fn default_unknown_recipes() -> Vec<VendorRecipe> {
    vec![
        VendorRecipe {
            class_id: 6,
            fundamental_hz: 185.0,
            n_harmonics: 20,
            harmonic_decay: 0.88,
            spectral_tilt_db_per_octave: -7.5,
            noise_floor_db: -38.0,
            comb_delay_samples: 36,
            jitter_pct: 0.6,
        },
        VendorRecipe {
            class_id: 7,
            fundamental_hz: 415.0,
            n_harmonics: 6,
            harmonic_decay: 0.55,
            spectral_tilt_db_per_octave: -1.5,
            noise_floor_db: -48.0,
            comb_delay_samples: 64,
            jitter_pct: 1.5,
        },
    ]
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.known_recipes.is_empty() {
            return Err(Error::argument("need at least one known recipe"));
        }
        if self.clips_train == 0 || self.clips_test == 0 {
            return Err(Error::argument("need train and test clips per class"));
        }
        if !(self.clip_seconds > 0.0) {
            return Err(Error::argument("clip_seconds must be positive"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for r in self.known_recipes.iter().chain(&self.unknown_recipes) {
            r.validate(self.sample_rate)?;
            if !ids.insert(r.class_id) {
                return Err(Error::argument(format!(
                    "duplicate class id {} across recipes",
                    r.class_id
                )));
            }
        }
        Ok(())
    }

    pub fn n_known(&self) -> usize {
        self.known_recipes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub class_id: usize,
    pub split: Split,
    pub is_unknown: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer.write_record(["path", "class_id", "split", "is_unknown"])?;
        for row in &self.rows {
            writer.write_record([
                row.path.as_str(),
                &row.class_id.to_string(),
                row.split.as_str(),
                if row.is_unknown { "true" } else { "false" },
            ])?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::argument(format!("csv flush: {e}")))?;
        fs::write(path.as_ref(), bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path.as_ref())?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != 4 {
                return Err(Error::Format {
                    what: "manifest",
                    detail: format!("expected 4 columns, got {}", record.len()),
                });
            }
            rows.push(ManifestRow {
                path: record[0].to_string(),
                class_id: record[1].parse().map_err(|_| Error::Format {
                    what: "manifest",
                    detail: format!("bad class_id {:?}", &record[1]),
                })?,
                split: record[2].parse()?,
                is_unknown: &record[3] == "true",
            });
        }
        Ok(Manifest { rows })
    }
}

/// Synthesize one clip: jittered harmonic stack, Gaussian noise floor, comb
/// coloration, peak-normalized to 0.9.
pub fn synth_clip(
    recipe: &VendorRecipe,
    duration_secs: f64,
    sample_rate: u32,
    rng: &mut ChaCha8Rng,
) -> Result<AudioClip> {
    recipe.validate(sample_rate)?;
    if !(duration_secs > 0.0) {
        return Err(Error::argument("duration must be positive"));
    }
    let n = (duration_secs * f64::from(sample_rate)).round() as usize;
    let nyquist = f64::from(sample_rate) / 2.0;

    let jitter = recipe.jitter_pct / 100.0 * rng.gen_range(-1.0..1.0);
    let f0 = recipe.fundamental_hz * (1.0 + jitter);
    let phases: Vec<f64> = (0..recipe.n_harmonics)
        .map(|_| rng.gen_range(0.0..2.0 * std::f64::consts::PI))
        .collect();

    let mut samples = vec![0.0f64; n];
    for (h, &phase) in phases.iter().enumerate() {
        let harmonic = (h + 1) as f64;
        let freq = f0 * harmonic;
        if freq >= nyquist {
            break;
        }
        let tilt = 10f64.powf(recipe.spectral_tilt_db_per_octave * harmonic.log2() / 20.0);
        let amp = recipe.harmonic_decay.powi(h as i32) * tilt;
        let step = 2.0 * std::f64::consts::PI * freq / f64::from(sample_rate);
        for (i, s) in samples.iter_mut().enumerate() {
            *s += amp * (step * i as f64 + phase).sin();
        }
    }

    let noise_amp = 10f64.powf(recipe.noise_floor_db / 20.0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for s in samples.iter_mut() {
        *s += noise_amp * normal.sample(rng);
    }

    if recipe.comb_delay_samples > 0 {
        let d = recipe.comb_delay_samples;
        for i in (d..n).rev() {
            samples[i] += COMB_GAIN * samples[i - d];
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = 0.9 / peak;
        samples.iter_mut().for_each(|s| *s *= scale);
    }
    AudioClip::new(samples, sample_rate)
}

/// Low-pass FIR at 4 kHz (101-tap windowed sinc).
fn lowpass_fir(sample_rate: u32) -> Vec<f64> {
    let taps = 101usize;
    let center = (taps - 1) as f64 / 2.0;
    let fc = 4000.0 / f64::from(sample_rate); // cycles per sample
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - center;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
            };
            let window = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let gain: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= gain);
    h
}

/// Simulated compression: 4 kHz low-pass, 8-bit mu-law companding roundtrip
/// (mu = 255), and a -30 dBFS noise floor. Length is preserved.
pub fn degrade(clip: &AudioClip, rng: &mut ChaCha8Rng) -> AudioClip {
    let fir = lowpass_fir(clip.sample_rate);
    let half = (fir.len() - 1) / 2;
    let n = clip.samples.len();

    let mut filtered = vec![0.0f64; n];
    for (i, out) in filtered.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &tap) in fir.iter().enumerate() {
            let j = i as isize - k as isize + half as isize;
            if j >= 0 && (j as usize) < n {
                acc += tap * clip.samples[j as usize];
            }
        }
        *out = acc;
    }

    const MU: f64 = 255.0;
    let noise_amp = 10f64.powf(-30.0 / 20.0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let samples = filtered
        .iter()
        .map(|&x| {
            let x = x.clamp(-1.0, 1.0);
            let compressed = x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln();
            // 8-bit quantization in the companded domain
            let quantized = (compressed * 127.0).round() / 127.0;
            let expanded = quantized.signum() * ((1.0 + MU).powf(quantized.abs()) - 1.0) / MU;
            (expanded + noise_amp * normal.sample(rng)).clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip::new(samples, clip.sample_rate).expect("finite degraded samples")
}

/// Write the corpus WAVs under `out_dir` and return the manifest (paths are
/// relative to `out_dir`). Deterministic per seed; the compressed condition
/// degrades every clip.
pub fn generate_corpus(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let corpus_seed = derive_seed(spec.seed, "corpus");
    let mut rows = Vec::new();

    let mut emit = |recipe: &VendorRecipe, split: Split, count: usize, is_unknown: bool| {
        let class_dir = out_dir.join(format!("class{}", recipe.class_id));
        let split_dir = class_dir.join(split.as_str());
        fs::create_dir_all(&split_dir)?;
        for idx in 0..count {
            let key = format!("clip/{}/{}/{}", recipe.class_id, split, idx);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(corpus_seed, &key));
            let mut clip = synth_clip(recipe, spec.clip_seconds, spec.sample_rate, &mut rng)?;
            if spec.compressed {
                clip = degrade(&clip, &mut rng);
            }
            let rel = format!("class{}/{}/{:04}.wav", recipe.class_id, split, idx);
            write_wav(&clip, out_dir.join(&rel))?;
            rows.push(ManifestRow {
                path: rel,
                class_id: recipe.class_id,
                split,
                is_unknown,
            });
        }
        Ok::<(), Error>(())
    };

    for recipe in &spec.known_recipes {
        emit(recipe, Split::Train, spec.clips_train, false)?;
        emit(recipe, Split::Dev, spec.clips_dev, false)?;
        emit(recipe, Split::Test, spec.clips_test, false)?;
    }
    for recipe in &spec.unknown_recipes {
        emit(recipe, Split::Test, spec.clips_test, true)?;
    }
    Ok(Manifest { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{lfcc, LfccConfig};
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;
    use tempfile::tempdir;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn test_recipe() -> VendorRecipe {
        default_known_recipes()[1].clone()
    }

    #[test]
    fn synth_is_peak_normalized_and_deterministic() {
        let recipe = test_recipe();
        let clip = synth_clip(&recipe, 1.0, 16000, &mut rng(3)).unwrap();
        assert_eq!(clip.samples.len(), 16000);
        let peak = clip.samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
        assert!(peak <= 0.9 + 1e-6);
        assert!(peak > 0.5);

        let again = synth_clip(&recipe, 1.0, 16000, &mut rng(3)).unwrap();
        assert_eq!(clip.samples, again.samples);
        let other = synth_clip(&recipe, 1.0, 16000, &mut rng(4)).unwrap();
        assert_ne!(clip.samples, other.samples);
    }

    #[test]
    fn synth_rejects_invalid_recipes() {
        let mut recipe = test_recipe();
        recipe.fundamental_hz = 9000.0; // above Nyquist at 16 kHz
        assert!(synth_clip(&recipe, 1.0, 16000, &mut rng(1)).is_err());
        let mut recipe = test_recipe();
        recipe.n_harmonics = 0;
        assert!(synth_clip(&recipe, 1.0, 16000, &mut rng(1)).is_err());
    }

    #[test]
    fn comb_delay_alone_separates_mean_lfcc_vectors() {
        let cfg = LfccConfig::default();
        let base = VendorRecipe {
            comb_delay_samples: 0,
            ..test_recipe()
        };
        let combed = VendorRecipe {
            comb_delay_samples: 48,
            ..base.clone()
        };
        let mean_vec = |recipe: &VendorRecipe, seed: u64| -> Vec<f64> {
            let clip = synth_clip(recipe, 1.0, 16000, &mut rng(seed)).unwrap();
            let f = lfcc(&clip, &cfg).unwrap();
            let mut mean = vec![0.0; f.cols()];
            for r in 0..f.rows() {
                for (m, v) in mean.iter_mut().zip(f.row(r)) {
                    *m += v / f.rows() as f64;
                }
            }
            mean
        };
        let a: Vec<Vec<f64>> = (0..6).map(|s| mean_vec(&base, 100 + s)).collect();
        let b: Vec<Vec<f64>> = (0..6).map(|s| mean_vec(&combed, 200 + s)).collect();

        // standardize per coefficient over the pooled clips
        let dim = a[0].len();
        let all: Vec<&Vec<f64>> = a.iter().chain(&b).collect();
        let mut mu = vec![0.0; dim];
        for v in &all {
            for (m, x) in mu.iter_mut().zip(v.iter()) {
                *m += x / all.len() as f64;
            }
        }
        let mut sd = vec![0.0; dim];
        for v in &all {
            for ((s, x), m) in sd.iter_mut().zip(v.iter()).zip(&mu) {
                *s += (x - m) * (x - m) / all.len() as f64;
            }
        }
        let sd: Vec<f64> = sd.iter().map(|v| v.sqrt().max(1e-12)).collect();
        let group_mean = |vs: &[Vec<f64>]| -> Vec<f64> {
            let mut m = vec![0.0; dim];
            for v in vs {
                for (i, x) in v.iter().enumerate() {
                    m[i] += ((x - mu[i]) / sd[i]) / vs.len() as f64;
                }
            }
            m
        };
        let ga = group_mean(&a);
        let gb = group_mean(&b);
        let dist: f64 = ga
            .iter()
            .zip(&gb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.5, "standardized mean-LFCC distance {dist}");
    }

    /// One-sided power spectrum via the fft crate (the implementation under
    /// test uses a time-domain FIR, so this is an independent route).
    fn band_energy(clip: &AudioClip, from_hz: f64) -> f64 {
        let n = clip.samples.len().next_power_of_two();
        let mut buf: Vec<Complex<f64>> = clip
            .samples
            .iter()
            .map(|&s| Complex::new(s, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let bin_hz = f64::from(clip.sample_rate) / n as f64;
        buf[..n / 2 + 1]
            .iter()
            .enumerate()
            .filter(|(k, _)| *k as f64 * bin_hz >= from_hz)
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    #[test]
    fn degrade_attenuates_high_frequencies() {
        // strong high-frequency content: 6 kHz tone
        let n = 16000;
        let samples: Vec<f64> = (0..n)
            .map(|i| 0.9 * (2.0 * std::f64::consts::PI * 6000.0 * i as f64 / 16000.0).sin())
            .collect();
        let clip = AudioClip::new(samples, 16000).unwrap();
        let degraded = degrade(&clip, &mut rng(5));
        assert_eq!(degraded.samples.len(), clip.samples.len());

        let before = band_energy(&clip, 5000.0);
        let after = band_energy(&degraded, 5000.0);
        let reduction_db = 10.0 * (before / after).log10();
        assert!(reduction_db >= 20.0, "only {reduction_db:.1} dB reduction");
    }

    #[test]
    fn degrade_keeps_silence_near_silent() {
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let degraded = degrade(&clip, &mut rng(6));
        let rms = (degraded.samples.iter().map(|s| s * s).sum::<f64>()
            / degraded.samples.len() as f64)
            .sqrt();
        assert!(rms < 10f64.powf(-28.0 / 20.0), "rms {rms}");
    }

    #[test]
    fn corpus_counts_and_split_structure() {
        let dir = tempdir().unwrap();
        let spec = CorpusSpec {
            clips_train: 10,
            clips_dev: 5,
            clips_test: 5,
            clip_seconds: 0.05,
            ..CorpusSpec::default()
        };
        let manifest = generate_corpus(&spec, dir.path()).unwrap();
        assert_eq!(manifest.rows.len(), 6 * 20 + 2 * 5);
        assert!(manifest
            .split(Split::Train)
            .all(|r| !r.is_unknown));
        assert!(manifest
            .split(Split::Dev)
            .all(|r| !r.is_unknown));
        assert!(manifest
            .rows
            .iter()
            .filter(|r| r.is_unknown)
            .all(|r| r.split == Split::Test));
        // paths unique and present on disk
        let mut paths: Vec<&str> = manifest.rows.iter().map(|r| r.path.as_str()).collect();
        paths.sort_unstable();
        paths.dedup();
        assert_eq!(paths.len(), manifest.rows.len());
        for row in &manifest.rows {
            assert!(dir.path().join(&row.path).is_file());
        }
    }

    #[test]
    fn corpus_is_seed_deterministic() {
        let spec = CorpusSpec {
            clips_train: 2,
            clips_dev: 1,
            clips_test: 1,
            clip_seconds: 0.05,
            ..CorpusSpec::default()
        };
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let manifest_a = generate_corpus(&spec, dir_a.path()).unwrap();
        let manifest_b = generate_corpus(&spec, dir_b.path()).unwrap();
        assert_eq!(manifest_a, manifest_b);
        for row in &manifest_a.rows {
            let a = std::fs::read(dir_a.path().join(&row.path)).unwrap();
            let b = std::fs::read(dir_b.path().join(&row.path)).unwrap();
            assert_eq!(a, b, "clip bytes differ for {}", row.path);
        }
        // manifest file bytes identical too
        let ma = dir_a.path().join("manifest.csv");
        let mb = dir_b.path().join("manifest.csv");
        manifest_a.save(&ma).unwrap();
        manifest_b.save(&mb).unwrap();
        assert_eq!(std::fs::read(&ma).unwrap(), std::fs::read(&mb).unwrap());
    }

    #[test]
    fn manifest_csv_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let manifest = Manifest {
            rows: vec![
                ManifestRow {
                    path: "class0/train/0000.wav".into(),
                    class_id: 0,
                    split: Split::Train,
                    is_unknown: false,
                },
                ManifestRow {
                    path: "class6/test/0001.wav".into(),
                    class_id: 6,
                    split: Split::Test,
                    is_unknown: true,
                },
            ],
        };
        manifest.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("path,class_id,split,is_unknown\n"));
        assert!(!text.contains('\r'));
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn duplicate_class_ids_rejected() {
        let mut spec = CorpusSpec::default();
        spec.unknown_recipes[0].class_id = 0;
        assert!(spec.validate().is_err());
    }
}
