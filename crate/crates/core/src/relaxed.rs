//! Relaxed 2DPCA: a blend of the unsupervised Ls scatter with a class-weighted
//! scatter whose weights come from the within-class spectra.

use crate::dataset::{center, mean_image, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig_topk, Mat};
use crate::lp::{fit_side, pow_sum, side_samples, Deflation, Init, Side, SolverConfig, UnilateralBasis, Variant};
use crate::pca2d::check_k;
use crate::recognition::BilateralModel;

/// `C_j = (1/n_j) Σ (X − Ψ_j)ᵀ(X − Ψ_j)` for every class, `Ψ_j` the class mean.
pub fn class_covariances(train: &LabeledDataset) -> Vec<Mat> {
    let (_, w) = train.dims();
    (0..train.num_classes())
        .map(|j| {
            let class = train.class(j);
            let mean = mean_image(class.iter().map(|s| &s.image));
            let mut c = Mat::zeros(w, w);
            for s in class {
                s.image.sub(&mean).gram_acc(1.0, &mut c);
            }
            c.scale_in_place(1.0 / class.len() as f64);
            c
        })
        .collect()
}

/// Map from a class's largest within-class eigenvalue to a non-negative score.
#[derive(Clone, Copy, Debug, Default)]
pub enum WeightFn {
    #[default]
    Identity,
    /// `λ + ε`, keeping every class strictly positive for `ε > 0`.
    Shifted(f64),
    Custom(fn(f64) -> f64),
}

impl PartialEq for WeightFn {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (WeightFn::Identity, WeightFn::Identity) => true,
            (WeightFn::Shifted(a), WeightFn::Shifted(b)) => a.to_bits() == b.to_bits(),
            (WeightFn::Custom(a), WeightFn::Custom(b)) => std::ptr::fn_addr_eq(*a, *b),
            _ => false,
        }
    }
}

impl WeightFn {
    pub fn apply(&self, lambda: f64) -> f64 {
        match self {
            WeightFn::Identity => lambda,
            WeightFn::Shifted(eps) => lambda + eps,
            WeightFn::Custom(f) => f(lambda),
        }
    }
}

/// Per-class weights `ω`, non-negative and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightingVector {
    pub omega: Vec<f64>,
    /// Largest eigenvalue of each within-class covariance.
    pub lambda_max: Vec<f64>,
    /// True when every score was zero and uniform weights were substituted.
    pub uniform_fallback: bool,
}

/// `ω_j = f(λ_max(C_j)) / Σ_i f(λ_max(C_i))`, uniform when the sum is zero.
pub fn weighting_vector(train: &LabeledDataset, weight_fn: WeightFn) -> Result<WeightingVector> {
    let lambda_max = class_covariances(train)
        .iter()
        .map(|c| Ok(sym_eig_topk(c, 1)?[0].value.max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = lambda_max.iter().map(|&l| weight_fn.apply(l)).collect();
    if scores.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::InvalidSpec("weight function must return finite, non-negative values".into()));
    }
    let total: f64 = scores.iter().sum();
    let m = scores.len();
    let (omega, uniform_fallback) = if total == 0.0 {
        (vec![1.0 / m as f64; m], true)
    } else {
        (scores.iter().map(|f| f / total).collect(), false)
    };
    Ok(WeightingVector {
        omega,
        lambda_max,
        uniform_fallback,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxConfig {
    pub gamma: f64,
    pub s: f64,
    pub p: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    pub deflation: Deflation,
    pub k1: usize,
    pub k2: usize,
    pub weight_fn: WeightFn,
}

impl RelaxConfig {
    pub fn new(gamma: f64, s: f64, p: f64, k1: usize, k2: usize) -> Self {
        let base = SolverConfig::default();
        RelaxConfig {
            gamma,
            s,
            p,
            tol: base.tol,
            max_iter: base.max_iter,
            init: base.init,
            deflation: base.deflation,
            k1,
            k2,
            weight_fn: WeightFn::Identity,
        }
    }

    /// Inner fixed-point settings shared with the unrelaxed solver.
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            s: self.s,
            p: self.p,
            tol: self.tol,
            max_iter: self.max_iter,
            init: self.init,
            variant: Variant::G2dpca,
            deflation: self.deflation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidSpec(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if let WeightFn::Shifted(eps) = self.weight_fn {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::InvalidSpec(format!("shift must be finite and >= 0, got {eps}")));
            }
        }
        self.solver().validate()
    }
}

/// `J = γ·G + (1−γ)·G̃`, both terms centered on the global mean.
pub fn relaxed_objective(
    u: &[f64],
    v: &[f64],
    train: &LabeledDataset,
    omega: &[f64],
    gamma: f64,
    s: f64,
) -> Result<f64> {
    let (h, w) = train.dims();
    if u.len() != h || v.len() != w {
        return Err(Error::InvalidInput(format!(
            "directions of length ({}, {}) do not fit {h}x{w} samples",
            u.len(),
            v.len()
        )));
    }
    if omega.len() != train.num_classes() {
        return Err(Error::InvalidInput("one weight per class required".into()));
    }
    let psi = mean_image(train.images());
    let mut g = 0.0;
    let mut g_tilde = 0.0;
    for (j, &wj) in omega.iter().enumerate() {
        let class = train.class(j);
        let a = wj / class.len() as f64;
        for sample in class {
            let y = sample.image.sub(&psi);
            let uy = y.t_mul_vec(u);
            let yv = y.mul_vec(v);
            g += pow_sum(&uy, s) + pow_sum(&yv, s);
            let scaled = |z: &[f64]| z.iter().map(|x| a * x).collect::<Vec<_>>();
            g_tilde += pow_sum(&scaled(&uy), s) + pow_sum(&scaled(&yv), s);
        }
    }
    Ok(gamma * g + (1.0 - gamma) * g_tilde)
}

/// Per-sample weight `γ + (1−γ)(ω_j/n_j)^s`, in dataset order. Scaling a
/// sample by `a ≥ 0` scales its ascent contribution by `a^s`, which is how the
/// class-weighted term folds into a single weighted sum.
pub(crate) fn sample_weights(train: &LabeledDataset, omega: &[f64], gamma: f64, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(train.len());
    for (j, &n) in train.class_sizes().iter().enumerate() {
        let a = omega[j] / n as f64;
        let c = if gamma == 1.0 { 1.0 } else { gamma + (1.0 - gamma) * a.powf(s) };
        out.extend(std::iter::repeat_n(c, n));
    }
    out
}

/// A fitted relaxed model. `d()` holds the right-side objectives used to
/// weight feature columns.
#[derive(Clone, Debug, PartialEq)]
pub struct R2dpcaModel {
    pub left: UnilateralBasis,
    pub right: UnilateralBasis,
    pub weights: WeightingVector,
    pub mean: Mat,
    pub config: RelaxConfig,
}

impl R2dpcaModel {
    pub fn u(&self) -> &Mat {
        &self.left.w
    }

    pub fn v(&self) -> &Mat {
        &self.right.w
    }

    pub fn d(&self) -> &[f64] {
        &self.right.objectives
    }

    pub fn truncated(&self, k1: usize, k2: usize) -> Result<Self> {
        Ok(R2dpcaModel {
            left: self.left.truncated(k1)?,
            right: self.right.truncated(k2)?,
            weights: self.weights.clone(),
            mean: self.mean.clone(),
            config: RelaxConfig { k1, k2, ..self.config },
        })
    }
}

impl BilateralModel for R2dpcaModel {
    fn left_basis(&self) -> &Mat {
        &self.left.w
    }

    fn right_basis(&self) -> &Mat {
        &self.right.w
    }

    fn mean(&self) -> &Mat {
        &self.mean
    }

    fn feature_weights(&self) -> Vec<f64> {
        self.right.objectives.clone()
    }
}

/// Greedy weighted fit of `k1` left and `k2` right vectors on globally centered samples.
pub fn fit_r2dpca(train: &LabeledDataset, cfg: &RelaxConfig) -> Result<R2dpcaModel> {
    cfg.validate()?;
    let (h, w) = train.dims();
    check_k(cfg.k1, h, "k1")?;
    check_k(cfg.k2, w, "k2")?;
    let weights = weighting_vector(train, cfg.weight_fn)?;
    let c = sample_weights(train, &weights.omega, cfg.gamma, cfg.s);
    let solver = cfg.solver();
    let (centered, mean) = center(train);
    let left = fit_side(&side_samples(&centered, Side::Left), &c, cfg.k1, Side::Left, &solver)?;
    let right = fit_side(&centered, &c, cfg.k2, Side::Right, &solver)?;
    Ok(R2dpcaModel {
        left,
        right,
        weights,
        mean,
        config: *cfg,
    })
}
