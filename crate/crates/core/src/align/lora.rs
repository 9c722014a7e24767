use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use super::AlignError;

/// Frozen `d x k` projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseProjection {
    w0: Array2<f64>,
}

impl BaseProjection {
    pub fn new(w0: Array2<f64>) -> Result<Self, AlignError> {
        if w0.nrows() == 0 || w0.ncols() == 0 {
            return Err(AlignError::Shape("base projection must be at least 1x1".into()));
        }
        Ok(BaseProjection { w0 })
    }

    /// Gaussian entries scaled by `1/sqrt(k)`.
    pub fn random<R: Rng>(d: usize, k: usize, rng: &mut R) -> Result<Self, AlignError> {
        let scale = 1.0 / (k as f64).sqrt();
        Self::new(Array2::from_shape_fn((d, k), |_| rng.sample::<f64, _>(StandardNormal) * scale))
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w0
    }

    pub fn out_dim(&self) -> usize {
        self.w0.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w0.ncols()
    }
}

/// Low-rank update `(alpha / r) * B A` with `A: r x k`, `B: d x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn new(a: Array2<f64>, b: Array2<f64>, alpha: f64) -> Result<Self, AlignError> {
        if a.nrows() == 0 || a.nrows() != b.ncols() {
            return Err(AlignError::Shape(format!(
                "A is {:?}, B is {:?}: ranks disagree",
                a.dim(),
                b.dim()
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(AlignError::Config(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(LoraAdapter { a, b, alpha })
    }

    /// Standard initialization: A Gaussian (scaled by `1/sqrt(k)`), B zero, so
    /// the adapted layer starts out equal to the base layer.
    pub fn init<R: Rng>(
        base: &BaseProjection,
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self, AlignError> {
        let (d, k) = (base.out_dim(), base.in_dim());
        if rank == 0 || rank > d.min(k) {
            return Err(AlignError::Config(format!("rank {rank} must lie in 1..={}", d.min(k))));
        }
        let scale = 1.0 / (k as f64).sqrt();
        let a = Array2::from_shape_fn((rank, k), |_| rng.sample::<f64, _>(StandardNormal) * scale);
        Self::new(a, Array2::zeros((d, rank)), alpha)
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub fn check_against(&self, base: &BaseProjection) -> Result<(), AlignError> {
        let (d, k) = (base.out_dim(), base.in_dim());
        if self.a.ncols() != k || self.b.nrows() != d {
            return Err(AlignError::Shape(format!(
                "adapter A {:?} / B {:?} does not fit base {d}x{k}",
                self.a.dim(),
                self.b.dim()
            )));
        }
        if self.rank() > d.min(k) {
            return Err(AlignError::Shape(format!("rank {} exceeds min(d, k)", self.rank())));
        }
        Ok(())
    }

    /// `delta W = (alpha / r) B A`.
    pub fn delta(&self) -> Array2<f64> {
        self.b.dot(&self.a) * self.scale()
    }
}

/// Adapter-path output `W0 x + (alpha / r) B (A x)`.
pub fn lora_forward(
    base: &BaseProjection,
    adapter: &LoraAdapter,
    x: ArrayView1<'_, f64>,
) -> Result<Array1<f64>, AlignError> {
    adapter.check_against(base)?;
    if x.len() != base.in_dim() {
        return Err(AlignError::Shape(format!(
            "input has length {}, expected {}",
            x.len(),
            base.in_dim()
        )));
    }
    let low = adapter.a.dot(&x);
    Ok(base.w0.dot(&x) + adapter.b.dot(&low) * adapter.scale())
}

/// Folds the adapter into a single projection `W0 + (alpha / r) B A`.
pub fn merge_adapter(base: &BaseProjection, adapter: &LoraAdapter) -> Result<Array2<f64>, AlignError> {
    adapter.check_against(base)?;
    Ok(&base.w0 + &adapter.delta())
}
