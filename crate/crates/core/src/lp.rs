//! Generalized Lp/Ls projection vectors: maximize `Σ‖Yᵢw‖_s^s` subject to
//! `‖w‖_p = 1` by fixed-point iteration, then deflate and repeat.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::dataset::{center, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, lp_norm, signed_power, sym_eig_topk, Mat, MIN_P};
use crate::pca2d::check_k;
use crate::recognition::BilateralModel;

/// Relative slack allowed on the ascent guarantee for `s ≥ 1, p ≥ 1`.
pub const ASCENT_SLACK: f64 = 1e-10;

/// Starting point of the fixed-point iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Dominant L2 eigenvector of the (weighted) side covariance.
    Spectral,
    /// Uniform entries in `[-1, 1]` from a seeded SplitMix64 stream.
    Random(u64),
}

/// Named members of the G2DPCA family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Variant {
    /// `s = 2, p = 2`.
    TwoDpca,
    /// L1 dispersion under an L2 constraint: `s = 1, p = 2`.
    TwoDpcaL1,
    /// Sparse L1 surrogate: `s = 1, p = 2 + ρ` with `ρ ∈ (−1, 0)`.
    TwoDpcaL1S { rho: f64 },
    /// Free `(s, p)`.
    G2dpca,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::TwoDpca => "2dpca",
            Variant::TwoDpcaL1 => "2dpca-l1",
            Variant::TwoDpcaL1S { .. } => "2dpcal1-s",
            Variant::G2dpca => "g2dpca",
        }
    }
}

/// How samples are deflated between successive vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deflation {
    /// `Y(I − WWᵀ)` with the Lp-unit columns as found.
    Verbatim,
    /// `Y(I − QQᵀ)` with `Q` an L2-orthonormal basis of `span(W)`.
    Orthonormalized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub s: f64,
    pub p: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    pub variant: Variant,
    pub deflation: Deflation,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            s: 2.0,
            p: 2.0,
            tol: 1e-6,
            max_iter: 200,
            init: Init::Spectral,
            variant: Variant::G2dpca,
            deflation: Deflation::Verbatim,
        }
    }
}

impl SolverConfig {
    pub fn g2dpca(s: f64, p: f64) -> Self {
        SolverConfig {
            s,
            p,
            ..Default::default()
        }
    }

    /// Configuration for a named variant; `s` and `p` follow the preset.
    pub fn preset(variant: Variant) -> Result<Self> {
        let (s, p) = match variant {
            Variant::TwoDpca | Variant::G2dpca => (2.0, 2.0),
            Variant::TwoDpcaL1 => (1.0, 2.0),
            Variant::TwoDpcaL1S { rho } => {
                if !(rho > -1.0 && rho < 0.0) {
                    return Err(Error::InvalidSpec(format!("rho must lie in (-1, 0), got {rho}")));
                }
                (1.0, 2.0 + rho)
            }
        };
        Ok(SolverConfig {
            s,
            p,
            variant,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 1.0 && self.s.is_finite()) {
            return Err(Error::InvalidSpec(format!("s must be a finite value >= 1, got {}", self.s)));
        }
        if self.p.is_nan() || self.p < MIN_P {
            return Err(Error::InvalidSpec(format!("p must be >= {MIN_P} or infinite, got {}", self.p)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidSpec(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidSpec("max_iter must be at least 1".into()));
        }
        let expected = match self.variant {
            Variant::TwoDpca => Some((2.0, 2.0)),
            Variant::TwoDpcaL1 => Some((1.0, 2.0)),
            Variant::TwoDpcaL1S { .. } => Some(SolverConfig::preset(self.variant)?.sp()),
            Variant::G2dpca => None,
        };
        if let Some(sp) = expected {
            if sp != self.sp() {
                return Err(Error::InvalidSpec(format!(
                    "variant {} requires (s, p) = {sp:?}, got {:?}",
                    self.variant.name(),
                    self.sp()
                )));
            }
        }
        Ok(())
    }

    fn sp(&self) -> (f64, f64) {
        (self.s, self.p)
    }

    fn monotone(&self) -> bool {
        self.s >= 1.0 && self.p >= 1.0
    }
}

/// Result of one fixed-point solve.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstVector {
    pub w: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective at the initial point followed by one entry per iteration.
    pub trace: Vec<f64>,
}

/// `Σ‖z‖_s^s`.
pub(crate) fn pow_sum(z: &[f64], s: f64) -> f64 {
    if s == 2.0 {
        z.iter().map(|x| x * x).sum()
    } else if s == 1.0 {
        z.iter().map(|x| x.abs()).sum()
    } else {
        z.iter().map(|x| x.abs().powf(s)).sum()
    }
}

fn objective(ys: &[Mat], weights: &[f64], w: &[f64], s: f64) -> f64 {
    ys.iter().zip(weights).map(|(y, c)| c * pow_sum(&y.mul_vec(w), s)).sum()
}

/// `Σ cᵢ Yᵢᵀ[|Yᵢw|^{s−1} ∘ sign(Yᵢw)]`.
fn ascent_direction(ys: &[Mat], weights: &[f64], w: &[f64], s: f64) -> Vec<f64> {
    let mut acc = vec![0.0; w.len()];
    for (y, &c) in ys.iter().zip(weights) {
        let z = signed_power(&y.mul_vec(w), s - 1.0);
        y.t_mul_vec_acc(&z, c, &mut acc);
    }
    acc
}

fn normalize_p(v: Vec<f64>, p: f64) -> Result<Vec<f64>> {
    let n = lp_norm(&v, p)?;
    if n == 0.0 {
        return Err(Error::DegenerateDirection("normalizing a zero vector".into()));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

/// One constrained update from the ascent direction `raw`.
fn constrained_step(raw: Vec<f64>, prev: &[f64], p: f64) -> Result<Vec<f64>> {
    if p.is_infinite() {
        Ok(signed_power(&raw, 0.0))
    } else if p == 1.0 {
        // single largest coordinate, lowest index on ties
        let mut j = 0;
        for i in 1..raw.len() {
            if raw[i].abs() > raw[j].abs() {
                j = i;
            }
        }
        let mut w = vec![0.0; raw.len()];
        w[j] = raw[j].signum();
        Ok(w)
    } else if p > 1.0 {
        let q = p / (p - 1.0);
        normalize_p(signed_power(&raw, q - 1.0), p)
    } else {
        let scaled = prev.iter().zip(&raw).map(|(w, r)| w.abs().powf(2.0 - p) * r).collect();
        normalize_p(scaled, p)
    }
}

fn initial_vector(ys: &[Mat], weights: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let d = ys[0].cols();
    let start = match cfg.init {
        Init::Spectral => {
            let mut cov = Mat::zeros(d, d);
            for (y, &c) in ys.iter().zip(weights) {
                y.gram_acc(c, &mut cov);
            }
            let cov = Mat::from_fn(d, d, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
            sym_eig_topk(&cov, 1)?.swap_remove(0).vector
        }
        Init::Random(seed) => {
            let mut rng = SplitMix64::seed_from_u64(seed);
            (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()
        }
    };
    normalize_p(start, cfg.p)
}

fn check_samples(ys: &[Mat]) -> Result<usize> {
    let d = ys
        .first()
        .ok_or_else(|| Error::InvalidInput("no samples to fit".into()))?
        .cols();
    if d == 0 || ys.iter().any(|y| y.cols() != d) {
        return Err(Error::InvalidInput("samples must share a positive column count".into()));
    }
    Ok(d)
}

/// Weighted fixed-point solve, reporting every iterate to `observer`.
/// Called with each iterate and its objective.
pub(crate) type Observer<'a> = dyn FnMut(&[f64], f64) + 'a;

pub(crate) fn solve_weighted(
    ys: &[Mat],
    weights: &[f64],
    cfg: &SolverConfig,
    mut observer: Option<&mut Observer>,
) -> Result<FirstVector> {
    cfg.validate()?;
    check_samples(ys)?;
    debug_assert_eq!(ys.len(), weights.len());
    let mut w = initial_vector(ys, weights, cfg)?;
    let mut f = objective(ys, weights, &w, cfg.s);
    let mut trace = vec![f];
    if let Some(obs) = observer.as_mut() {
        obs(&w, f);
    }
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let raw = ascent_direction(ys, weights, &w, cfg.s);
        if raw.iter().all(|&x| x == 0.0) {
            return Err(Error::DegenerateDirection(
                "every sample is orthogonal to the current iterate".into(),
            ));
        }
        let next = constrained_step(raw, &w, cfg.p)?;
        let f_next = objective(ys, weights, &next, cfg.s);
        if cfg.monotone() && f_next < f - ASCENT_SLACK * f.abs() {
            return Err(Error::NumericFailure(format!(
                "objective decreased from {f} to {f_next} at iteration {iterations}"
            )));
        }
        if let Some(obs) = observer.as_mut() {
            obs(&next, f_next);
        }
        trace.push(f_next);
        let delta = (f_next - f).abs() / f.abs();
        w = next;
        f = f_next;
        if delta <= cfg.tol {
            break;
        }
    }
    Ok(FirstVector {
        w,
        objective: f,
        iterations,
        trace,
    })
}

/// First projection vector of `max Σ‖Yᵢw‖_s^s s.t. ‖w‖_p = 1`.
pub fn solve_first_vector(ys: &[Mat], cfg: &SolverConfig) -> Result<FirstVector> {
    solve_weighted(ys, &vec![1.0; ys.len()], cfg, None)
}

/// As [`solve_first_vector`], calling `observer(w, f)` at the start point and after every iteration.
pub fn solve_first_vector_observed(
    ys: &[Mat],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&[f64], f64),
) -> Result<FirstVector> {
    solve_weighted(ys, &vec![1.0; ys.len()], cfg, Some(observer))
}

/// `Yᵢ(I − WWᵀ)` for every sample. An empty `W` leaves samples unchanged.
pub fn deflate(samples: &[Mat], w: &Mat) -> Result<Vec<Mat>> {
    if w.cols() == 0 {
        return Ok(samples.to_vec());
    }
    samples
        .iter()
        .map(|y| {
            if y.cols() != w.rows() {
                return Err(Error::InvalidInput(format!(
                    "cannot deflate {}x{} sample by a basis with {} rows",
                    y.rows(),
                    y.cols(),
                    w.rows()
                )));
            }
            Ok(y.sub(&y.matmul(w).matmul_t(w)))
        })
        .collect()
}

/// L2-orthonormal basis of the column span (modified Gram–Schmidt).
fn orthonormalize(w: &Mat) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(w.cols());
    for j in 0..w.cols() {
        let mut v = w.column(j);
        for c in &cols {
            let a = dot(&v, c);
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= a * y);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Mat::from_columns(w.rows(), &cols)
}

/// Which factor of a bilateral projection a basis belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `u` vectors acting on columns, fitted on `Xᵢᵀ`.
    Left,
    /// `v` vectors acting on rows, fitted on `Xᵢ`.
    Right,
}

/// Greedily fitted projection vectors of one side.
#[derive(Clone, Debug, PartialEq)]
pub struct UnilateralBasis {
    pub w: Mat,
    pub objectives: Vec<f64>,
    pub iterations: Vec<usize>,
    pub side: Side,
}

impl UnilateralBasis {
    pub fn truncated(&self, k: usize) -> Result<Self> {
        check_k(k, self.w.cols(), "k")?;
        Ok(UnilateralBasis {
            w: self.w.leading_columns(k),
            objectives: self.objectives[..k].to_vec(),
            iterations: self.iterations[..k].to_vec(),
            side: self.side,
        })
    }
}

pub(crate) fn side_samples(centered: &[Mat], side: Side) -> Vec<Mat> {
    match side {
        Side::Right => centered.to_vec(),
        Side::Left => centered.iter().map(Mat::transpose).collect(),
    }
}

/// Solve, append, deflate; `k` times. Each vector is solved on the original
/// samples deflated by every vector found so far.
pub(crate) fn fit_side(
    ys: &[Mat],
    weights: &[f64],
    k: usize,
    side: Side,
    cfg: &SolverConfig,
) -> Result<UnilateralBasis> {
    let d = check_samples(ys)?;
    check_k(k, d, "k")?;
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut objectives = Vec::with_capacity(k);
    let mut iterations = Vec::with_capacity(k);
    for _ in 0..k {
        let basis = Mat::from_columns(d, &found);
        let basis = match cfg.deflation {
            Deflation::Verbatim => basis,
            Deflation::Orthonormalized => orthonormalize(&basis),
        };
        let deflated = deflate(ys, &basis)?;
        let fv = solve_weighted(&deflated, weights, cfg, None)?;
        found.push(fv.w);
        objectives.push(fv.objective);
        iterations.push(fv.iterations);
    }
    Ok(UnilateralBasis {
        w: Mat::from_columns(d, &found),
        objectives,
        iterations,
        side,
    })
}

/// `k` projection vectors of one side of the centered training set.
pub fn fit_unilateral(train: &LabeledDataset, k: usize, side: Side, cfg: &SolverConfig) -> Result<UnilateralBasis> {
    let (centered, _) = center(train);
    let ys = side_samples(&centered, side);
    fit_side(&ys, &vec![1.0; ys.len()], k, side, cfg)
}

/// Independent left (`k1` vectors) and right (`k2` vectors) fits.
pub fn fit_bilateral(
    train: &LabeledDataset,
    k1: usize,
    k2: usize,
    cfg: &SolverConfig,
) -> Result<(UnilateralBasis, UnilateralBasis)> {
    let model = LpModel::fit(train, k1, k2, cfg)?;
    Ok((model.left, model.right))
}

/// A fitted G2DPCA-family model.
#[derive(Clone, Debug, PartialEq)]
pub struct LpModel {
    pub left: UnilateralBasis,
    pub right: UnilateralBasis,
    pub mean: Mat,
    pub config: SolverConfig,
}

impl LpModel {
    pub fn fit(train: &LabeledDataset, k1: usize, k2: usize, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w) = train.dims();
        check_k(k1, h, "k1")?;
        check_k(k2, w, "k2")?;
        let (centered, mean) = center(train);
        let ones = vec![1.0; centered.len()];
        let left = fit_side(&side_samples(&centered, Side::Left), &ones, k1, Side::Left, cfg)?;
        let right = fit_side(&centered, &ones, k2, Side::Right, cfg)?;
        Ok(LpModel {
            left,
            right,
            mean,
            config: *cfg,
        })
    }

    pub fn truncated(&self, k1: usize, k2: usize) -> Result<Self> {
        Ok(LpModel {
            left: self.left.truncated(k1)?,
            right: self.right.truncated(k2)?,
            mean: self.mean.clone(),
            config: self.config,
        })
    }
}

impl BilateralModel for LpModel {
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
