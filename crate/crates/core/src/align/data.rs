//! Synthetic paired data: every persona is a latent vector, and the "image"
//! and "text" features are two independent noisy linear views of it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::AlignError;
use crate::engine::mix_seed;
use crate::target::{builtin_profile_corpus, ProfileSummary};

const MIXING_STREAM: u64 = 0x11;
const PERSONA_STREAM: u64 = 0x12;
const DISTRACTOR_STREAM: u64 = 0x13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub pairs: usize,
    pub latent_dim: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    /// Standard deviation of the per-view observation noise.
    pub noise: f64,
    pub distractors: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            pairs: 20,
            latent_dim: 8,
            image_dim: 16,
            text_dim: 16,
            noise: 0.05,
            distractors: 0,
            seed: 0,
        }
    }
}

/// One persona: the seed its latent was drawn from, both views, and the
/// profile the text view describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaRecord {
    pub latent_seed: u64,
    pub image_features: Vec<f64>,
    pub text_features: Vec<f64>,
    pub profile_text: String,
    pub profile: ProfileSummary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentDataset {
    pub records: Vec<PersonaRecord>,
    /// Text-side views of latents that have no image partner.
    pub distractors: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

fn view(mix: &Array2<f64>, latent: &Array1<f64>, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let clean = mix.dot(latent);
    clean.iter().map(|v| v + noise * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn latent(seed: u64, dim: usize) -> (Array1<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
    (z, rng)
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if self.pairs < 2 {
            return Err(AlignError::Config("need at least 2 pairs".into()));
        }
        if self.latent_dim == 0 || self.image_dim == 0 || self.text_dim == 0 {
            return Err(AlignError::Config("dimensions must be >= 1".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(AlignError::Config("noise must be >= 0".into()));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<AlignmentDataset, AlignError> {
        self.validate()?;
        let mut mix_rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, MIXING_STREAM));
        let scale = 1.0 / (self.latent_dim as f64).sqrt();
        let m_image = gaussian(&mut mix_rng, self.image_dim, self.latent_dim) * scale;
        let m_text = gaussian(&mut mix_rng, self.text_dim, self.latent_dim) * scale;
        let profiles = builtin_profile_corpus();

        let records = (0..self.pairs)
            .map(|i| {
                let latent_seed = mix_seed(mix_seed(self.seed, PERSONA_STREAM), i as u64);
                let (z, mut rng) = latent(latent_seed, self.latent_dim);
                let profile = profiles[i % profiles.len()].clone();
                PersonaRecord {
                    latent_seed,
                    image_features: view(&m_image, &z, self.noise, &mut rng),
                    text_features: view(&m_text, &z, self.noise, &mut rng),
                    profile_text: profile.describe(),
                    profile,
                }
            })
            .collect();
        let distractors = (0..self.distractors)
            .map(|i| {
                let (z, mut rng) = latent(mix_seed(mix_seed(self.seed, DISTRACTOR_STREAM), i as u64), self.latent_dim);
                view(&m_text, &z, self.noise, &mut rng)
            })
            .collect();
        Ok(AlignmentDataset { records, distractors })
    }
}

fn to_matrix(rows: impl ExactSizeIterator<Item = Vec<f64>>, what: &str) -> Result<Array2<f64>, AlignError> {
    let n = rows.len();
    let flat: Vec<Vec<f64>> = rows.collect();
    let width = flat.first().map_or(0, Vec::len);
    if flat.iter().any(|r| r.len() != width) {
        return Err(AlignError::Shape(format!("{what} rows have unequal lengths")));
    }
    Array2::from_shape_vec((n, width), flat.concat()).map_err(|e| AlignError::Shape(e.to_string()))
}

impl AlignmentDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn image_matrix(&self) -> Result<Array2<f64>, AlignError> {
        to_matrix(self.records.iter().map(|r| r.image_features.clone()), "image")
    }

    pub fn text_matrix(&self) -> Result<Array2<f64>, AlignError> {
        to_matrix(self.records.iter().map(|r| r.text_features.clone()), "text")
    }

    /// The first `count` distractors as a matrix.
    pub fn distractor_matrix(&self, count: usize) -> Result<Array2<f64>, AlignError> {
        if count > self.distractors.len() {
            return Err(AlignError::Config(format!(
                "{count} distractors requested, dataset has {}",
                self.distractors.len()
            )));
        }
        let width = self.records.first().map_or(0, |r| r.text_features.len());
        if count == 0 {
            return Ok(Array2::zeros((0, width)));
        }
        to_matrix(self.distractors[..count].iter().cloned(), "distractor")
    }

    /// Writes paired records as JSON Lines. Distractors are not persisted;
    /// they are regenerated from the synthetic config.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), AlignError> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(|e| AlignError::Json { line: 0, source: e })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, AlignError> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| AlignError::Json { line: i + 1, source: e })?);
        }
        Ok(AlignmentDataset { records, distractors: Vec::new() })
    }
}

/// Two whitespace-separated columns: step and loss.
pub fn write_loss_curve(path: &Path, curve: &[f64]) -> Result<(), AlignError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# step loss")?;
    for (step, loss) in curve.iter().enumerate() {
        writeln!(w, "{step} {loss:.12e}")?;
    }
    w.flush()?;
    Ok(())
}
