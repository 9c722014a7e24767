use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::lora::{merge_adapter, BaseProjection, LoraAdapter};
use super::AlignError;

/// Linear encoder: frozen base projection plus a trainable adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub base: BaseProjection,
    pub adapter: LoraAdapter,
}

impl Encoder {
    pub fn new(base: BaseProjection, adapter: LoraAdapter) -> Result<Self, AlignError> {
        adapter.check_against(&base)?;
        Ok(Encoder { base, adapter })
    }

    pub fn random<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self, AlignError> {
        let base = BaseProjection::random(out_dim, in_dim, rng)?;
        let adapter = LoraAdapter::init(&base, rank, alpha, rng)?;
        Ok(Encoder { base, adapter })
    }

    pub fn in_dim(&self) -> usize {
        self.base.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.base.out_dim()
    }

    /// Unnormalized outputs for every row of `x`, along with `x Aᵀ`.
    fn project(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>), AlignError> {
        if x.ncols() != self.in_dim() {
            return Err(AlignError::Shape(format!(
                "features have {} columns, encoder expects {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let u = x.dot(&self.adapter.a.t());
        let h = x.dot(&self.base.weights().t()) + u.dot(&self.adapter.b.t()) * self.adapter.scale();
        Ok((h, u))
    }
}

/// Image-side and text-side encoders sharing an embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPair {
    pub image: Encoder,
    pub text: Encoder,
}

impl EncoderPair {
    pub fn new(image: Encoder, text: Encoder) -> Result<Self, AlignError> {
        if image.out_dim() != text.out_dim() {
            return Err(AlignError::Shape(format!(
                "embedding dims differ: image {} vs text {}",
                image.out_dim(),
                text.out_dim()
            )));
        }
        Ok(EncoderPair { image, text })
    }

    pub fn embedding_dim(&self) -> usize {
        self.image.out_dim()
    }

    pub fn merge(&self) -> Result<MergedEncoderPair, AlignError> {
        Ok(MergedEncoderPair {
            image: merge_adapter(&self.image.base, &self.image.adapter)?,
            text: merge_adapter(&self.text.base, &self.text.adapter)?,
        })
    }

    /// Same encoders with the image and text roles exchanged.
    pub fn swapped(&self) -> Self {
        EncoderPair { image: self.text.clone(), text: self.image.clone() }
    }
}

/// Encoders after merging, used for inference only.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedEncoderPair {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
}

impl MergedEncoderPair {
    pub fn embed_image(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, AlignError> {
        embed(&self.image, x, "image")
    }

    pub fn embed_text(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, AlignError> {
        embed(&self.text, x, "text")
    }
}

fn embed(w: &Array2<f64>, x: ArrayView1<'_, f64>, side: &'static str) -> Result<Array1<f64>, AlignError> {
    if x.len() != w.ncols() {
        return Err(AlignError::Shape(format!("{side} input has length {}, expected {}", x.len(), w.ncols())));
    }
    let h = w.dot(&x);
    let n = h.dot(&h).sqrt();
    if !n.is_finite() {
        return Err(AlignError::NonFinite { side, row: 0 });
    }
    if n == 0.0 {
        return Err(AlignError::ZeroNorm { side, row: 0 });
    }
    Ok(h / n)
}

/// Matched feature pairs; row `i` of `image` pairs with row `i` of `text`.
/// Distractors are extra text-side rows with no image partner.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentBatch {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
    pub distractors: Array2<f64>,
    pub tau: f64,
}

impl AlignmentBatch {
    pub fn new(image: Array2<f64>, text: Array2<f64>, tau: f64) -> Result<Self, AlignError> {
        let distractors = Array2::zeros((0, text.ncols()));
        Self::with_distractors(image, text, distractors, tau)
    }

    pub fn with_distractors(
        image: Array2<f64>,
        text: Array2<f64>,
        distractors: Array2<f64>,
        tau: f64,
    ) -> Result<Self, AlignError> {
        if image.nrows() == 0 {
            return Err(AlignError::EmptyBatch);
        }
        if image.nrows() != text.nrows() {
            return Err(AlignError::Shape(format!(
                "{} image rows vs {} text rows",
                image.nrows(),
                text.nrows()
            )));
        }
        if distractors.ncols() != text.ncols() {
            return Err(AlignError::Shape("distractor width differs from text width".into()));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(AlignError::Config(format!("tau must be > 0, got {tau}")));
        }
        Ok(AlignmentBatch { image, text, distractors, tau })
    }

    pub fn len(&self) -> usize {
        self.image.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.image.nrows() == 0
    }

    /// The same pairs with the two modalities exchanged. Distractors are
    /// dropped because they have no image-side counterpart.
    pub fn swapped(&self) -> Self {
        AlignmentBatch {
            image: self.text.clone(),
            text: self.image.clone(),
            distractors: Array2::zeros((0, self.image.ncols())),
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub image_to_text: f64,
    pub text_to_image: f64,
    /// `N x (N + distractors)` matrix of `s_ij = z_i . z_j / tau`.
    pub similarity: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradient {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl AdapterGradient {
    pub fn sum_sq(&self) -> f64 {
        self.a.iter().chain(self.b.iter()).map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    pub image: AdapterGradient,
    pub text: AdapterGradient,
}

impl PairGradient {
    pub fn norm(&self) -> f64 {
        (self.image.sum_sq() + self.text.sum_sq()).sqrt()
    }
}

fn normalize_rows(h: &Array2<f64>, side: &'static str) -> Result<(Array2<f64>, Array1<f64>), AlignError> {
    let norms = h.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(row) = norms.iter().position(|n| !n.is_finite()) {
        return Err(AlignError::NonFinite { side, row });
    }
    if let Some(row) = norms.iter().position(|n| *n == 0.0) {
        return Err(AlignError::ZeroNorm { side, row });
    }
    let z = h / &norms.view().insert_axis(Axis(1));
    Ok((z, norms))
}

fn log_sum_exp<'a>(xs: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    m + xs.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Symmetric loss from a precomputed similarity matrix whose first `N`
/// columns are the matched text rows.
pub fn infonce_from_similarity(s: ArrayView2<'_, f64>) -> Result<(f64, f64, f64), AlignError> {
    let n = s.nrows();
    if n == 0 {
        return Err(AlignError::EmptyBatch);
    }
    if s.ncols() < n {
        return Err(AlignError::Shape("similarity matrix has fewer columns than rows".into()));
    }
    let mut it = 0.0;
    let mut ti = 0.0;
    for i in 0..n {
        it += log_sum_exp(s.row(i).iter()) - s[[i, i]];
        let col = s.column(i);
        ti += log_sum_exp(col.iter()) - s[[i, i]];
    }
    let (it, ti) = (it / n as f64, ti / n as f64);
    Ok((0.5 * (it + ti), it, ti))
}

struct Forward {
    xt: Array2<f64>,
    zi: Array2<f64>,
    zt: Array2<f64>,
    ni: Array1<f64>,
    nt: Array1<f64>,
    ui: Array2<f64>,
    ut: Array2<f64>,
    s: Array2<f64>,
}

fn forward(batch: &AlignmentBatch, enc: &EncoderPair) -> Result<Forward, AlignError> {
    if enc.image.out_dim() != enc.text.out_dim() {
        return Err(AlignError::Shape("encoder output dims differ".into()));
    }
    enc.image.adapter.check_against(&enc.image.base)?;
    enc.text.adapter.check_against(&enc.text.base)?;
    let xt = concatenate(Axis(0), &[batch.text.view(), batch.distractors.view()])
        .map_err(|e| AlignError::Shape(e.to_string()))?;
    let (hi, ui) = enc.image.project(batch.image.view())?;
    let (ht, ut) = enc.text.project(xt.view())?;
    let (zi, ni) = normalize_rows(&hi, "image")?;
    let (zt, nt) = normalize_rows(&ht, "text")?;
    let s = zi.dot(&zt.t()) / batch.tau;
    Ok(Forward { xt, zi, zt, ni, nt, ui, ut, s })
}

/// Symmetric contrastive loss `0.5 * (L_IT + L_TI)`. Distractor columns
/// enlarge the image-to-text denominators only.
pub fn infonce_loss(batch: &AlignmentBatch, enc: &EncoderPair) -> Result<LossOutput, AlignError> {
    let f = forward(batch, enc)?;
    let (loss, image_to_text, text_to_image) = infonce_from_similarity(f.s.view())?;
    Ok(LossOutput { loss, image_to_text, text_to_image, similarity: f.s })
}

fn backprop_norm(dz: &Array2<f64>, z: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let proj = (dz * z).sum_axis(Axis(1)).insert_axis(Axis(1));
    (dz - z * &proj) / norms.view().insert_axis(Axis(1))
}

fn adapter_grad(dh: &Array2<f64>, u: &Array2<f64>, x: ArrayView2<'_, f64>, adapter: &LoraAdapter) -> AdapterGradient {
    let s = adapter.scale();
    let b = dh.t().dot(u) * s;
    let du = dh.dot(&adapter.b) * s;
    let a = du.t().dot(&x);
    AdapterGradient { a, b }
}

/// Analytic gradient of the symmetric loss with respect to both adapters.
/// Base projections are frozen and receive no gradient.
pub fn infonce_gradient(batch: &AlignmentBatch, enc: &EncoderPair) -> Result<PairGradient, AlignError> {
    let f = forward(batch, enc)?;
    let (loss, _, _) = infonce_from_similarity(f.s.view())?;
    let n = batch.len();
    let cols = f.s.ncols();
    let mut g = Array2::<f64>::zeros((n, cols));
    let w = 0.5 / n as f64;
    for i in 0..n {
        let row = f.s.row(i);
        let lse = log_sum_exp(row.iter());
        for j in 0..cols {
            g[[i, j]] += w * (row[j] - lse).exp();
        }
        g[[i, i]] -= 2.0 * w;
    }
    for j in 0..n {
        let col = f.s.column(j);
        let lse = log_sum_exp(col.iter());
        for i in 0..n {
            g[[i, j]] += w * (col[i] - lse).exp();
        }
    }
    let dzi = g.dot(&f.zt) / batch.tau;
    let dzt = g.t().dot(&f.zi) / batch.tau;
    let dhi = backprop_norm(&dzi, &f.zi, &f.ni);
    let dht = backprop_norm(&dzt, &f.zt, &f.nt);
    Ok(PairGradient {
        loss,
        image: adapter_grad(&dhi, &f.ui, batch.image.view(), &enc.image.adapter),
        text: adapter_grad(&dht, &f.ut, f.xt.view(), &enc.text.adapter),
    })
}
