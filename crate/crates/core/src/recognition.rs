//! Feature galleries, the weighted nearest-neighbour classifier, low-rank
//! reconstruction and projection diagnostics.

use rayon::prelude::*;

use crate::dataset::{mean_image, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{norm2, Mat};
use crate::lp::Side;

/// Anything that compresses `X` to `Uᵀ(X − Ψ)V`.
pub trait BilateralModel {
    /// `h×k1`.
    fn left_basis(&self) -> &Mat;
    /// `w×k2`.
    fn right_basis(&self) -> &Mat;
    /// `h×w`.
    fn mean(&self) -> &Mat;
    /// Per-column weights applied to feature differences (`k2` entries).
    fn feature_weights(&self) -> Vec<f64>;
}

/// Matrix norm used for classifier distances and reconstruction ratios.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MatrixNorm {
    #[default]
    Frobenius,
    Spectral,
}

impl MatrixNorm {
    pub fn of(self, m: &Mat) -> f64 {
        match self {
            MatrixNorm::Frobenius => m.frobenius_norm(),
            MatrixNorm::Spectral => m.spectral_norm(),
        }
    }
}

/// `Uᵀ(X − Ψ)V`.
pub fn extract_feature<M: BilateralModel + ?Sized>(model: &M, x: &Mat) -> Result<Mat> {
    let mean = model.mean();
    if x.shape() != mean.shape() {
        return Err(Error::InvalidInput(format!(
            "sample is {}x{}, model expects {}x{}",
            x.rows(),
            x.cols(),
            mean.rows(),
            mean.cols()
        )));
    }
    Ok(model.left_basis().t_matmul(&x.sub(mean)).matmul(model.right_basis()))
}

/// Projected training samples with their labels and column weights.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGallery {
    pub features: Vec<Mat>,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn extract_features<M: BilateralModel + Sync + ?Sized>(model: &M, ds: &LabeledDataset) -> Result<FeatureGallery> {
    let weights = model.feature_weights();
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("feature weights must be finite and non-negative".into()));
    }
    let features = ds
        .samples()
        .par_iter()
        .map(|s| extract_feature(model, &s.image))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureGallery {
        features,
        labels: ds.labels(),
        weights,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Index of the nearest gallery entry.
    pub nearest: usize,
    pub distance: f64,
}

/// `‖(A − B)·diag(d)‖`.
pub fn weighted_distance(a: &Mat, b: &Mat, d: &[f64], norm: MatrixNorm) -> f64 {
    let diff = Mat::from_fn(a.rows(), a.cols(), |i, j| (a[(i, j)] - b[(i, j)]) * d[j]);
    norm.of(&diff)
}

/// Nearest gallery entry for one probe feature; ties go to the lowest index.
pub fn nearest(gallery: &FeatureGallery, probe: &Mat, norm: MatrixNorm) -> Result<Prediction> {
    if gallery.features.is_empty() {
        return Err(Error::InvalidInput("empty gallery".into()));
    }
    let mut best = Prediction {
        label: gallery.labels[0],
        nearest: 0,
        distance: f64::INFINITY,
    };
    for (i, f) in gallery.features.iter().enumerate() {
        if f.shape() != probe.shape() {
            return Err(Error::InvalidInput("probe and gallery features differ in shape".into()));
        }
        let d = weighted_distance(probe, f, &gallery.weights, norm);
        if d < best.distance {
            best = Prediction {
                label: gallery.labels[i],
                nearest: i,
                distance: d,
            };
        }
    }
    Ok(best)
}

/// Labels every probe image by its nearest weighted gallery feature.
pub fn classify<M: BilateralModel + Sync + ?Sized>(
    gallery: &FeatureGallery,
    probes: &[Mat],
    model: &M,
    norm: MatrixNorm,
) -> Result<Vec<Prediction>> {
    probes
        .par_iter()
        .map(|t| nearest(gallery, &extract_feature(model, t)?, norm))
        .collect()
}

/// Fraction of `predictions` matching `truth`.
pub fn accuracy(predictions: &[Prediction], truth: &[usize]) -> f64 {
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p.label == **t).count();
    hits as f64 / predictions.len() as f64
}

/// `U·F·Vᵀ + Ψ`.
pub fn reconstruct<M: BilateralModel + ?Sized>(model: &M, feature: &Mat) -> Result<Mat> {
    let (u, v) = (model.left_basis(), model.right_basis());
    if feature.shape() != (u.cols(), v.cols()) {
        return Err(Error::InvalidInput(format!(
            "feature is {}x{}, model produces {}x{}",
            feature.rows(),
            feature.cols(),
            u.cols(),
            v.cols()
        )));
    }
    Ok(u.matmul(feature).matmul_t(v).add(model.mean()))
}

/// `1 − ‖X_rec − X‖ / ‖X‖`.
pub fn reconstruction_ratio(x: &Mat, x_rec: &Mat, norm: MatrixNorm) -> Result<f64> {
    if x.shape() != x_rec.shape() {
        return Err(Error::InvalidInput("reconstruction differs in shape from the original".into()));
    }
    let denom = norm.of(x);
    if denom == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(1.0 - norm.of(&x_rec.sub(x)) / denom)
}

/// Sample variance (denominator `n − 1`) of the projections of `ds` onto the
/// first vector of the chosen side, taken with unit L2 length. Each sample is
/// centered on the mean of `ds`; when a projection is itself a vector the
/// variances of its entries are summed.
pub fn projection_variance<M: BilateralModel + ?Sized>(model: &M, ds: &LabeledDataset, side: Side) -> Result<f64> {
    if ds.len() < 2 {
        return Err(Error::InvalidInput("variance needs at least two samples".into()));
    }
    let basis = match side {
        Side::Left => model.left_basis(),
        Side::Right => model.right_basis(),
    };
    if basis.cols() == 0 {
        return Err(Error::InvalidInput("model has no projection vector on that side".into()));
    }
    let first = basis.column(0);
    let n2 = norm2(&first);
    let dir: Vec<f64> = first.iter().map(|x| x / n2).collect();
    let mean = mean_image(ds.images());
    let project = |x: &Mat| -> Result<Vec<f64>> {
        if x.shape() != model.mean().shape() {
            return Err(Error::InvalidInput("sample dimensions differ from the model".into()));
        }
        let y = x.sub(&mean);
        Ok(match side {
            Side::Right => y.mul_vec(&dir),
            Side::Left => y.t_mul_vec(&dir),
        })
    };
    let mut total = 0.0;
    for x in ds.images() {
        total += project(x)?.iter().map(|z| z * z).sum::<f64>();
    }
    Ok(total / (ds.len() - 1) as f64)
}
