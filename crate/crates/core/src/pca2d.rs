//! Classic bilateral 2DPCA: eigenbases of the column and row covariances.

use crate::dataset::{center, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig_topk, Mat};
use crate::recognition::BilateralModel;

/// Column-direction (`h×h`) and row-direction (`w×w`) covariance matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CovPair {
    pub e1: Mat,
    pub e2: Mat,
}

/// `E1 = (1/n)Σ YᵢYᵢᵀ`, `E2 = (1/n)Σ YᵢᵀYᵢ` over centered samples `Yᵢ`.
pub(crate) fn covariances_of(centered: &[Mat]) -> CovPair {
    let (h, w) = centered[0].shape();
    let mut e1 = Mat::zeros(h, h);
    let mut e2 = Mat::zeros(w, w);
    for y in centered {
        y.transpose().gram_acc(1.0, &mut e1);
        y.gram_acc(1.0, &mut e2);
    }
    let inv = 1.0 / centered.len() as f64;
    e1.scale_in_place(inv);
    e2.scale_in_place(inv);
    CovPair { e1, e2 }
}

pub fn covariances(train: &LabeledDataset) -> CovPair {
    let (centered, _) = center(train);
    covariances_of(&centered)
}

/// Orthonormal left/right bases with their eigenvalues and the training mean.
#[derive(Clone, Debug, PartialEq)]
pub struct BilateralProjector {
    pub u: Mat,
    pub v: Mat,
    pub eigvals_left: Vec<f64>,
    pub eigvals_right: Vec<f64>,
    pub mean: Mat,
}

impl BilateralProjector {
    /// Keeps the leading `k1` left and `k2` right eigenvectors.
    pub fn truncated(&self, k1: usize, k2: usize) -> Result<Self> {
        check_k(k1, self.u.cols(), "k1")?;
        check_k(k2, self.v.cols(), "k2")?;
        Ok(BilateralProjector {
            u: self.u.leading_columns(k1),
            v: self.v.leading_columns(k2),
            eigvals_left: self.eigvals_left[..k1].to_vec(),
            eigvals_right: self.eigvals_right[..k2].to_vec(),
            mean: self.mean.clone(),
        })
    }
}

pub(crate) fn check_k(k: usize, max: usize, name: &str) -> Result<()> {
    if k == 0 || k > max {
        return Err(Error::InvalidSpec(format!("{name} must be in 1..={max}, got {k}")));
    }
    Ok(())
}

/// Top-`k1` eigenvectors of `E1` and top-`k2` of `E2`.
pub fn fit_2dpca(train: &LabeledDataset, k1: usize, k2: usize) -> Result<BilateralProjector> {
    let (h, w) = train.dims();
    check_k(k1, h, "k1")?;
    check_k(k2, w, "k2")?;
    let (centered, mean) = center(train);
    let cov = covariances_of(&centered);
    let left = sym_eig_topk(&cov.e1, k1)?;
    let right = sym_eig_topk(&cov.e2, k2)?;
    Ok(BilateralProjector {
        u: Mat::from_columns(h, &left.iter().map(|p| p.vector.clone()).collect::<Vec<_>>()),
        v: Mat::from_columns(w, &right.iter().map(|p| p.vector.clone()).collect::<Vec<_>>()),
        eigvals_left: left.iter().map(|p| p.value).collect(),
        eigvals_right: right.iter().map(|p| p.value).collect(),
        mean,
    })
}

/// `Uᵀ(X − Ψ)V`.
pub fn project(x: &Mat, proj: &BilateralProjector) -> Result<Mat> {
    crate::recognition::extract_feature(proj, x)
}

impl BilateralModel for BilateralProjector {
    fn left_basis(&self) -> &Mat {
        &self.u
    }

    fn right_basis(&self) -> &Mat {
        &self.v
    }

    fn mean(&self) -> &Mat {
        &self.mean
    }

    /// Classic 2DPCA compares features with an unweighted distance.
    fn feature_weights(&self) -> Vec<f64> {
        vec![1.0; self.v.cols()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::linalg::{dot, sym_eig};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    fn dataset(images: Vec<Mat>) -> LabeledDataset {
        LabeledDataset::new(images.into_iter().map(|image| Sample { image, label: 0 }).collect()).unwrap()
    }

    fn random_images(n: usize, h: usize, w: usize, seed: u64) -> Vec<Mat> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        (0..n).map(|_| Mat::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))).collect()
    }

    /// Random `d×k` matrix with orthonormal columns (Gram–Schmidt).
    fn random_orthonormal(d: usize, k: usize, rng: &mut SplitMix64) -> Mat {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < k {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            for c in &cols {
                let a = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= a * y);
            }
            let n = dot(&v, &v).sqrt();
            if n > 1e-8 {
                cols.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        Mat::from_columns(d, &cols)
    }

    #[test]
    fn single_sample_has_zero_covariance() {
        let cov = covariances(&dataset(random_images(1, 3, 2, 1)));
        assert!(cov.e1.as_slice().iter().all(|&x| x == 0.0));
        assert!(cov.e2.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn antipodal_pair_gives_gram() {
        let a = random_images(1, 3, 4, 2).pop().unwrap();
        let cov = covariances(&dataset(vec![a.clone(), a.scale(-1.0)]));
        assert!(cov.e2.max_abs_diff(&a.t_matmul(&a)) < 1e-15);
        assert!(cov.e1.max_abs_diff(&a.matmul_t(&a)) < 1e-15);
    }

    #[test]
    fn covariances_match_literal_summation() {
        let imgs = random_images(5, 3, 4, 3);
        let cov = covariances(&dataset(imgs.clone()));
        let n = imgs.len() as f64;
        let mut psi = [[0.0; 4]; 3];
        for x in &imgs {
            for i in 0..3 {
                for j in 0..4 {
                    psi[i][j] += x[(i, j)] / n;
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                let mut s = 0.0;
                for x in &imgs {
                    for i in 0..3 {
                        s += (x[(i, a)] - psi[i][a]) * (x[(i, b)] - psi[i][b]);
                    }
                }
                assert!((cov.e2[(a, b)] - s / n).abs() < 1e-13);
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for x in &imgs {
                    for j in 0..4 {
                        s += (x[(a, j)] - psi[a][j]) * (x[(b, j)] - psi[b][j]);
                    }
                }
                assert!((cov.e1[(a, b)] - s / n).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rank_one_data_recovers_factors() {
        let a = [0.6, -0.8, 0.0];
        let b = [0.0, 0.5, 0.5, -0.5, 0.5];
        let coeffs = [2.0, -1.0, 0.5, -1.5];
        let imgs: Vec<Mat> = coeffs.iter().map(|c| Mat::from_fn(3, 5, |i, j| c * a[i] * b[j])).collect();
        let proj = fit_2dpca(&dataset(imgs), 1, 1).unwrap();
        let u = proj.u.column(0);
        let v = proj.v.column(0);
        assert!((dot(&u, &a).abs() - 1.0).abs() < 1e-12);
        assert!((dot(&v, &b).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_bases_are_orthogonal() {
        let proj = fit_2dpca(&dataset(random_images(6, 4, 3, 4)), 4, 3).unwrap();
        assert!(proj.u.t_matmul(&proj.u).max_abs_diff(&Mat::identity(4)) < 1e-10);
        assert!(proj.v.t_matmul(&proj.v).max_abs_diff(&Mat::identity(3)) < 1e-10);
    }

    #[test]
    fn trace_beats_random_orthonormal_competitors() {
        let ds = dataset(random_images(10, 5, 6, 5));
        let cov = covariances(&ds);
        let proj = fit_2dpca(&ds, 2, 2).unwrap();
        let best_left = proj.u.t_matmul(&cov.e1.matmul(&proj.u)).trace();
        let best_right = proj.v.t_matmul(&cov.e2.matmul(&proj.v)).trace();
        let mut rng = SplitMix64::seed_from_u64(6);
        for _ in 0..1000 {
            let u = random_orthonormal(5, 2, &mut rng);
            let v = random_orthonormal(6, 2, &mut rng);
            assert!(u.t_matmul(&cov.e1.matmul(&u)).trace() <= best_left + 1e-12);
            assert!(v.t_matmul(&cov.e2.matmul(&v)).trace() <= best_right + 1e-12);
        }
    }

    #[test]
    fn eigenvalue_sum_equals_trace() {
        let ds = dataset(random_images(8, 4, 5, 7));
        let cov = covariances(&ds);
        let proj = fit_2dpca(&ds, 2, 3).unwrap();
        let tr = proj.v.t_matmul(&cov.e2.matmul(&proj.v)).trace();
        let sum: f64 = proj.eigvals_right.iter().sum();
        assert!((tr - sum).abs() < 1e-10);
        assert!(proj.eigvals_right.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn square_single_sample_spectra_coincide() {
        let x = random_images(1, 4, 4, 8).pop().unwrap();
        let g1 = sym_eig(&x.matmul_t(&x)).unwrap();
        let g2 = sym_eig(&x.t_matmul(&x)).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a.value - b.value).abs() < 1e-10);
        }
    }

    #[test]
    fn project_examples() {
        let ds = dataset(random_images(7, 3, 4, 9));
        let full = fit_2dpca(&ds, 3, 4).unwrap();
        let zero = project(&full.mean, &full).unwrap();
        assert!(zero.as_slice().iter().all(|x| x.abs() < 1e-15));

        let x = random_images(1, 3, 4, 10).pop().unwrap();
        let p = project(&x, &full).unwrap();
        assert!((p.frobenius_norm() - x.sub(&full.mean).frobenius_norm()).abs() < 1e-12);

        let part = full.truncated(2, 3).unwrap();
        let p = project(&x, &part).unwrap();
        let y = x.sub(&part.mean);
        for a in 0..2 {
            for b in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..4 {
                        s += part.u[(i, a)] * y[(i, j)] * part.v[(j, b)];
                    }
                }
                assert!((p[(a, b)] - s).abs() < 1e-14);
            }
        }
        assert!(matches!(project(&Mat::zeros(4, 3), &full), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn k_out_of_range() {
        let ds = dataset(random_images(3, 2, 3, 11));
        assert!(matches!(fit_2dpca(&ds, 0, 1), Err(Error::InvalidSpec(_))));
        assert!(matches!(fit_2dpca(&ds, 1, 4), Err(Error::InvalidSpec(_))));
    }
}
