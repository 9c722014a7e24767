use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::AlignmentDataset;
use super::infonce::{infonce_gradient, infonce_loss, AlignmentBatch, Encoder, EncoderPair, MergedEncoderPair};
use super::AlignError;
use crate::target::ProfileSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub tau: f64,
    pub rank: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Unpaired text rows appended to every image-to-text denominator.
    pub distractors: usize,
    pub embedding_dim: usize,
    /// Pairs per step; `None` uses the whole dataset.
    pub batch_size: Option<usize>,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            learning_rate: 1.0,
            steps: 500,
            tau: 0.1,
            rank: 4,
            alpha: 4.0,
            seed: 0,
            distractors: 0,
            embedding_dim: 8,
            batch_size: None,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(AlignError::Config("learning_rate must be >= 0".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(AlignError::Config("tau must be > 0".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(AlignError::Config("alpha must be > 0".into()));
        }
        if self.rank == 0 || self.embedding_dim == 0 {
            return Err(AlignError::Config("rank and embedding_dim must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(AlignError::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAlignment {
    pub encoders: EncoderPair,
    /// Full-dataset loss before each step, then once more after the last.
    pub loss_curve: Vec<f64>,
}

impl TrainedAlignment {
    pub fn initial_loss(&self) -> f64 {
        self.loss_curve[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_curve.last().expect("curve always has the initial point")
    }
}

/// Seeded initialization shared by training and the untrained baseline.
pub fn init_encoders(dataset: &AlignmentDataset, cfg: &AlignmentConfig) -> Result<EncoderPair, AlignError> {
    cfg.validate()?;
    let first = dataset.records.first().ok_or(AlignError::EmptyBatch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let image = Encoder::random(first.image_features.len(), cfg.embedding_dim, cfg.rank, cfg.alpha, &mut rng)?;
    let text = Encoder::random(first.text_features.len(), cfg.embedding_dim, cfg.rank, cfg.alpha, &mut rng)?;
    EncoderPair::new(image, text)
}

fn step(enc: &mut Encoder, grad: &super::infonce::AdapterGradient, lr: f64) {
    enc.adapter.a.scaled_add(-lr, &grad.a);
    enc.adapter.b.scaled_add(-lr, &grad.b);
}

fn diverged_at<T>(step: usize, r: Result<T, AlignError>) -> Result<T, AlignError> {
    match r {
        Err(AlignError::NonFinite { .. }) => Err(AlignError::Diverged { step, loss: f64::NAN }),
        other => other,
    }
}

/// Plain gradient descent on the adapters of both encoders.
pub fn train_alignment(dataset: &AlignmentDataset, cfg: &AlignmentConfig) -> Result<TrainedAlignment, AlignError> {
    cfg.validate()?;
    if dataset.len() < 2 {
        return Err(AlignError::Config("training needs at least 2 pairs".into()));
    }
    let mut enc = init_encoders(dataset, cfg)?;
    let image = dataset.image_matrix()?;
    let text = dataset.text_matrix()?;
    let distractors = dataset.distractor_matrix(cfg.distractors)?;
    let full = AlignmentBatch::with_distractors(image.clone(), text.clone(), distractors.clone(), cfg.tau)?;

    let n = dataset.len();
    let batch_size = cfg.batch_size.unwrap_or(n).min(n);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5E_ED0F_BA7C);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut curve = Vec::with_capacity(cfg.steps + 1);
    for s in 0..cfg.steps {
        let batch = if batch_size == n {
            full.clone()
        } else {
            if cursor + batch_size > n {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            let idx = &order[cursor..cursor + batch_size];
            cursor += batch_size;
            AlignmentBatch::with_distractors(
                image.select(Axis(0), idx),
                text.select(Axis(0), idx),
                distractors.clone(),
                cfg.tau,
            )?
        };
        let loss = diverged_at(s, infonce_loss(&full, &enc))?.loss;
        if !loss.is_finite() {
            return Err(AlignError::Diverged { step: s, loss });
        }
        curve.push(loss);
        let grad = diverged_at(s, infonce_gradient(&batch, &enc))?;
        if !grad.norm().is_finite() {
            return Err(AlignError::Diverged { step: s, loss: grad.loss });
        }
        step(&mut enc.image, &grad.image, cfg.learning_rate);
        step(&mut enc.text, &grad.text, cfg.learning_rate);
    }
    let last = diverged_at(cfg.steps, infonce_loss(&full, &enc))?.loss;
    if !last.is_finite() {
        return Err(AlignError::Diverged { step: cfg.steps, loss: last });
    }
    curve.push(last);
    tracing::debug!(initial = curve[0], last, steps = cfg.steps, "alignment training finished");
    Ok(TrainedAlignment { encoders: enc, loss_curve: curve })
}

fn nearest(query: ArrayView1<'_, f64>, keys: &Array2<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, k) in keys.outer_iter().enumerate() {
        let s = query.dot(&k);
        if s > best.1 {
            best = (j, s);
        }
    }
    best.0
}

fn embed_rows(
    w: &Array2<f64>,
    rows: ArrayView2<'_, f64>,
    f: impl Fn(ArrayView1<'_, f64>) -> Result<ndarray::Array1<f64>, AlignError>,
) -> Result<Array2<f64>, AlignError> {
    let mut out = Array2::zeros((rows.nrows(), w.nrows()));
    for (i, r) in rows.outer_iter().enumerate() {
        out.row_mut(i).assign(&f(r)?);
    }
    Ok(out)
}

/// Fraction of images whose most similar text (cosine, ties to the lowest
/// index) is their own partner.
pub fn retrieval_accuracy(
    enc: &MergedEncoderPair,
    images: ArrayView2<'_, f64>,
    texts: ArrayView2<'_, f64>,
) -> Result<f64, AlignError> {
    if images.nrows() == 0 || images.nrows() != texts.nrows() {
        return Err(AlignError::Shape("retrieval needs equally many images and texts".into()));
    }
    let zi = embed_rows(&enc.image, images, |r| enc.embed_image(r))?;
    let zt = embed_rows(&enc.text, texts, |r| enc.embed_text(r))?;
    let hits = zi.outer_iter().enumerate().filter(|(i, z)| nearest(z.view(), &zt) == *i).count();
    Ok(hits as f64 / images.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub profile: ProfileSummary,
    pub text_features: Vec<f64>,
}

impl CorpusEntry {
    pub fn from_dataset(dataset: &AlignmentDataset) -> Vec<CorpusEntry> {
        dataset
            .records
            .iter()
            .map(|r| CorpusEntry { profile: r.profile.clone(), text_features: r.text_features.clone() })
            .collect()
    }
}

/// Profile whose text embedding is closest to the image embedding.
pub fn infer_profile(
    image_features: ArrayView1<'_, f64>,
    enc: &MergedEncoderPair,
    corpus: &[CorpusEntry],
) -> Result<ProfileSummary, AlignError> {
    if corpus.is_empty() {
        return Err(AlignError::EmptyCorpus);
    }
    let q = enc.embed_image(image_features)?;
    let mut keys = Array2::zeros((corpus.len(), q.len()));
    for (j, entry) in corpus.iter().enumerate() {
        keys.row_mut(j).assign(&enc.embed_text(ArrayView1::from(&entry.text_features))?);
    }
    Ok(corpus[nearest(q.view(), &keys)].profile.clone())
}
