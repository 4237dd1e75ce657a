//! Cyclic Jacobi eigensolver for real symmetric matrices.

use super::Mat;
use crate::error::{Error, Result};

/// Maximum number of full cyclic sweeps before giving up.
pub const JACOBI_SWEEP_CAP: usize = 100;

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAG_TOL: f64 = 1e-15;

/// Eigenvalue with a unit eigenvector whose largest-magnitude entry is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Full spectrum of a symmetric matrix, eigenvalues in non-increasing order.
pub fn sym_eig(a: &Mat) -> Result<Vec<EigPair>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::InvalidInput(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("eigensolver input has non-finite entries".into()));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::InvalidInput("eigensolver input is not symmetric".into()));
    }

    // work on the exactly symmetrized copy
    let mut m = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Mat::identity(n);
    let fro = m.frobenius_norm();

    let mut converged = false;
    for sweep in 0..JACOBI_SWEEP_CAP {
        let off = off_diagonal_norm(&m);
        if off == 0.0 || off <= OFF_DIAG_TOL * fro {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let g = 100.0 * apq.abs();
                // after a few sweeps, drop entries below the diagonal's resolution
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                rotate(&mut m, &mut v, p, q, t);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&m);
        if !(off == 0.0 || off <= OFF_DIAG_TOL * fro) {
            return Err(Error::NumericFailure(format!(
                "Jacobi eigensolver did not converge in {JACOBI_SWEEP_CAP} sweeps (off-diagonal norm {off:e})"
            )));
        }
    }

    let mut pairs: Vec<EigPair> = (0..n)
        .map(|i| {
            let mut vector = v.column(i);
            fix_sign(&mut vector);
            EigPair {
                value: m[(i, i)],
                vector,
            }
        })
        .collect();
    // stable: equal eigenvalues keep their Jacobi order
    pairs.sort_by(|x, y| y.value.total_cmp(&x.value));
    Ok(pairs)
}

/// The `k` largest eigenpairs of a symmetric matrix.
pub fn sym_eig_topk(a: &Mat, k: usize) -> Result<Vec<EigPair>> {
    if k == 0 || k > a.rows() {
        return Err(Error::InvalidSpec(format!(
            "requested {k} eigenpairs of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let mut pairs = sym_eig(a)?;
    pairs.truncate(k);
    Ok(pairs)
}

fn off_diagonal_norm(m: &Mat) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Applies the plane rotation annihilating `m[p][q]`, accumulating it into `v`.
fn rotate(m: &mut Mat, v: &mut Mat, p: usize, q: usize, t: f64) {
    let n = m.rows();
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let apq = m[(p, q)];
    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = m[(r, p)];
        let arq = m[(r, q)];
        let new_rp = c * arp - s * arq;
        let new_rq = s * arp + c * arq;
        m[(r, p)] = new_rp;
        m[(p, r)] = new_rp;
        m[(r, q)] = new_rq;
        m[(q, r)] = new_rq;
    }
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = c * vrp - s * vrq;
        v[(r, q)] = s * vrp + c * vrq;
    }
}

/// Flips `v` so that its largest-magnitude entry (lowest index on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm2};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let b = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        b.add(&b.transpose())
    }

    fn check_decomposition(a: &Mat, pairs: &[EigPair]) {
        let tol = 1e-10 * (1.0 + a.frobenius_norm());
        for (i, pair) in pairs.iter().enumerate() {
            let av = a.mul_vec(&pair.vector);
            let resid: Vec<f64> = av.iter().zip(&pair.vector).map(|(x, y)| x - pair.value * y).collect();
            assert!(norm2(&resid) <= tol, "residual {}", norm2(&resid));
            assert!((norm2(&pair.vector) - 1.0).abs() < 1e-12);
            for other in &pairs[..i] {
                assert!(dot(&other.vector, &pair.vector).abs() < 1e-10);
                assert!(other.value >= pair.value);
            }
        }
    }

    /// Closed-form eigenvalues of a symmetric 3x3 matrix (trigonometric cubic solution).
    fn cubic_eigenvalues(a: &Mat) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = a.sub(&Mat::identity(3).scale(q)).scale(1.0 / p);
        let det_b = b[(0, 0)] * (b[(1, 1)] * b[(2, 2)] - b[(1, 2)] * b[(2, 1)])
            - b[(0, 1)] * (b[(1, 0)] * b[(2, 2)] - b[(1, 2)] * b[(2, 0)])
            + b[(0, 2)] * (b[(1, 0)] * b[(2, 1)] - b[(1, 1)] * b[(2, 0)]);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn diagonal_matrix() {
        let a = Mat::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let top = sym_eig_topk(&a, 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].value, 3.0);
        assert_eq!(top[0].vector, vec![1.0, 0.0]);
    }

    #[test]
    fn analytic_two_by_two() {
        let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let pairs = sym_eig_topk(&a, 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pairs[0].value - 3.0).abs() < 1e-14);
        assert!((pairs[0].vector[0] - h).abs() < 1e-14 && (pairs[0].vector[1] - h).abs() < 1e-14);
        assert!((pairs[1].value - 1.0).abs() < 1e-14);
        check_decomposition(&a, &pairs);
    }

    #[test]
    fn random_six_by_six_residuals() {
        for seed in 0..20 {
            let a = random_symmetric(6, seed);
            let pairs = sym_eig_topk(&a, 3).unwrap();
            check_decomposition(&a, &pairs);
        }
    }

    #[test]
    fn three_by_three_matches_characteristic_roots() {
        for seed in 100..130 {
            let a = random_symmetric(3, seed);
            let expected = cubic_eigenvalues(&a);
            let pairs = sym_eig(&a).unwrap();
            for (pair, e) in pairs.iter().zip(expected) {
                assert!((pair.value - e).abs() < 1e-11, "{} vs {e}", pair.value);
            }
        }
    }

    #[test]
    fn psd_spectrum_is_nonnegative() {
        for seed in 0..10 {
            let mut rng = SplitMix64::seed_from_u64(seed);
            let b = Mat::from_fn(4, 7, |_, _| rng.random_range(-1.0..1.0));
            let a = b.matmul_t(&b).matmul(&Mat::identity(4));
            let a = Mat::from_fn(4, 4, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
            let c = b.t_matmul(&b);
            for m in [a, c] {
                for pair in sym_eig(&m).unwrap() {
                    assert!(pair.value >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn sign_convention_and_ties() {
        let a = Mat::from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]).unwrap();
        let pairs = sym_eig(&a).unwrap();
        for p in &pairs {
            let best = p.vector.iter().fold(0.0_f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(best > 0.0);
        }
        let mut v = vec![0.5, -0.5];
        fix_sign(&mut v);
        assert_eq!(v, vec![0.5, -0.5]);
        let mut v = vec![-0.5, 0.5];
        fix_sign(&mut v);
        assert_eq!(v, vec![0.5, -0.5]);
    }

    #[test]
    fn rejects_bad_input() {
        let asym = Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&asym), Err(Error::InvalidInput(_))));
        assert!(matches!(sym_eig(&Mat::zeros(2, 3)), Err(Error::InvalidInput(_))));
        assert!(matches!(sym_eig_topk(&Mat::identity(2), 3), Err(Error::InvalidSpec(_))));
        assert!(matches!(sym_eig_topk(&Mat::identity(2), 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn deterministic_bits() {
        let a = random_symmetric(9, 7);
        assert_eq!(sym_eig(&a).unwrap(), sym_eig(&a).unwrap());
    }

    #[test]
    fn zero_matrix() {
        let pairs = sym_eig(&Mat::zeros(3, 3)).unwrap();
        assert!(pairs.iter().all(|p| p.value == 0.0));
    }
}
