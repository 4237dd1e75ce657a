//! Flat binary model container.
//!
//! Layout (little-endian): magic `B2DP`, version byte, kind byte, then
//! `h, w, k1, k2` as u32, a kind-specific configuration header, and the
//! row-major f64 payloads of `Ψ`, `U`, `V` followed by the per-vector values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lp::{Deflation, Init, LpModel, Side, SolverConfig, UnilateralBasis, Variant};
use crate::pca2d::BilateralProjector;
use crate::recognition::BilateralModel;
use crate::relaxed::{R2dpcaModel, RelaxConfig, WeightFn, WeightingVector};

pub const MAGIC: &[u8; 4] = b"B2DP";
pub const VERSION: u8 = 1;

const KIND_PCA2D: u8 = 0;
const KIND_LP: u8 = 1;
const KIND_RELAXED: u8 = 2;

/// Any model the container can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Pca2d(BilateralProjector),
    Lp(LpModel),
    Relaxed(R2dpcaModel),
}

impl ModelFile {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelFile::Pca2d(_) => "2dpca-eig",
            ModelFile::Lp(m) => m.config.variant.name(),
            ModelFile::Relaxed(_) => "r2dpca",
        }
    }

    fn inner(&self) -> &dyn BilateralModel {
        match self {
            ModelFile::Pca2d(m) => m,
            ModelFile::Lp(m) => m,
            ModelFile::Relaxed(m) => m,
        }
    }

    pub fn truncated(&self, k1: usize, k2: usize) -> Result<Self> {
        Ok(match self {
            ModelFile::Pca2d(m) => ModelFile::Pca2d(m.truncated(k1, k2)?),
            ModelFile::Lp(m) => ModelFile::Lp(m.truncated(k1, k2)?),
            ModelFile::Relaxed(m) => ModelFile::Relaxed(m.truncated(k1, k2)?),
        })
    }
}

impl BilateralModel for ModelFile {
    fn left_basis(&self) -> &Mat {
        self.inner().left_basis()
    }

    fn right_basis(&self) -> &Mat {
        self.inner().right_basis()
    }

    fn mean(&self) -> &Mat {
        self.inner().mean()
    }

    fn feature_weights(&self) -> Vec<f64> {
        self.inner().feature_weights()
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }

    fn counts(&mut self, v: &[usize]) {
        v.iter().for_each(|&x| self.u32(x));
    }

    fn solver(&mut self, s: f64, p: f64, tol: f64, max_iter: usize, init: Init, deflation: Deflation) {
        self.f64(s);
        self.f64(p);
        self.f64(tol);
        self.u32(max_iter);
        match init {
            Init::Spectral => {
                self.u8(0);
                self.u64(0);
            }
            Init::Random(seed) => {
                self.u8(1);
                self.u64(seed);
            }
        }
        self.u8(match deflation {
            Deflation::Verbatim => 0,
            Deflation::Orthonormalized => 1,
        });
    }
}

fn encode_lp(out: &mut Writer, m: &LpModel) {
    let (tag, rho) = match m.config.variant {
        Variant::TwoDpca => (0, 0.0),
        Variant::TwoDpcaL1 => (1, 0.0),
        Variant::TwoDpcaL1S { rho } => (2, rho),
        Variant::G2dpca => (3, 0.0),
    };
    out.u8(tag);
    out.f64(rho);
    let c = &m.config;
    out.solver(c.s, c.p, c.tol, c.max_iter, c.init, c.deflation);
}

/// Serializes a model. A relaxed model with `γ = 1` is the unrelaxed model
/// and is stored as such, so both produce identical bytes.
pub fn to_bytes(model: &ModelFile) -> Result<Vec<u8>> {
    if let ModelFile::Relaxed(m) = model {
        if m.config.gamma == 1.0 {
            return to_bytes(&ModelFile::Lp(LpModel {
                left: m.left.clone(),
                right: m.right.clone(),
                mean: m.mean.clone(),
                config: m.config.solver(),
            }));
        }
    }
    let (h, w) = model.mean().shape();
    let mut out = Writer(MAGIC.to_vec());
    out.u8(VERSION);
    out.u8(match model {
        ModelFile::Pca2d(_) => KIND_PCA2D,
        ModelFile::Lp(_) => KIND_LP,
        ModelFile::Relaxed(_) => KIND_RELAXED,
    });
    for d in [h, w, model.left_basis().cols(), model.right_basis().cols()] {
        out.u32(d);
    }
    match model {
        ModelFile::Pca2d(_) => {}
        ModelFile::Lp(m) => encode_lp(&mut out, m),
        ModelFile::Relaxed(m) => {
            let c = &m.config;
            out.f64(c.gamma);
            out.solver(c.s, c.p, c.tol, c.max_iter, c.init, c.deflation);
            match c.weight_fn {
                WeightFn::Identity => {
                    out.u8(0);
                    out.f64(0.0);
                }
                WeightFn::Shifted(eps) => {
                    out.u8(1);
                    out.f64(eps);
                }
                WeightFn::Custom(_) => {
                    return Err(Error::InvalidSpec("a custom weight function cannot be saved".into()));
                }
            }
        }
    }
    out.f64s(model.mean().as_slice());
    out.f64s(model.left_basis().as_slice());
    out.f64s(model.right_basis().as_slice());
    match model {
        ModelFile::Pca2d(m) => {
            out.f64s(&m.eigvals_left);
            out.f64s(&m.eigvals_right);
        }
        ModelFile::Lp(LpModel { left, right, .. }) | ModelFile::Relaxed(R2dpcaModel { left, right, .. }) => {
            out.f64s(&left.objectives);
            out.f64s(&right.objectives);
            out.counts(&left.iterations);
            out.counts(&right.iterations);
        }
    }
    if let ModelFile::Relaxed(m) = model {
        out.u32(m.weights.omega.len());
        out.f64s(&m.weights.omega);
        out.f64s(&m.weights.lambda_max);
        out.u8(m.weights.uniform_fallback as u8);
    }
    Ok(out.0)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn fail<T>(&self, at: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::format(self.path, at as u64, msg))
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        match self.bytes.get(self.pos..self.pos + n) {
            Some(b) => {
                self.pos += n;
                Ok(b)
            }
            None => self.fail(self.bytes.len(), "truncated model file"),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn counts(&mut self, n: usize) -> Result<Vec<usize>> {
        (0..n).map(|_| self.u32()).collect()
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Mat> {
        let at = self.pos;
        let data = self.f64s(rows * cols)?;
        Mat::from_vec(rows, cols, data).or_else(|e| self.fail(at, e.to_string()))
    }

    fn tag(&mut self, max: u8, what: &str) -> Result<u8> {
        let at = self.pos;
        let t = self.u8()?;
        if t > max {
            return self.fail(at, format!("unknown {what} tag {t}"));
        }
        Ok(t)
    }

    fn solver(&mut self) -> Result<(f64, f64, f64, usize, Init, Deflation)> {
        let (s, p, tol, max_iter) = (self.f64()?, self.f64()?, self.f64()?, self.u32()?);
        let init_tag = self.tag(1, "init")?;
        let seed = self.u64()?;
        let init = if init_tag == 0 { Init::Spectral } else { Init::Random(seed) };
        let deflation = if self.tag(1, "deflation")? == 0 {
            Deflation::Verbatim
        } else {
            Deflation::Orthonormalized
        };
        Ok((s, p, tol, max_iter, init, deflation))
    }
}

fn basis(w: Mat, objectives: Vec<f64>, iterations: Vec<usize>, side: Side) -> UnilateralBasis {
    UnilateralBasis {
        w,
        objectives,
        iterations,
        side,
    }
}

/// Decodes a container; `path` is only used to label errors.
pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<ModelFile> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return r.fail(0, "not a model file (bad magic)");
    }
    let version = r.u8()?;
    if version != VERSION {
        return r.fail(4, format!("unsupported model version {version}"));
    }
    let kind = r.tag(KIND_RELAXED, "model kind")?;
    let dims_at = r.pos;
    let (h, w, k1, k2) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    if h == 0 || w == 0 || k1 == 0 || k2 == 0 || k1 > h || k2 > w {
        return r.fail(dims_at, format!("inconsistent dimensions h={h} w={w} k1={k1} k2={k2}"));
    }
    let lp_config = |r: &mut Reader| -> Result<SolverConfig> {
        let tag = r.tag(3, "variant")?;
        let rho = r.f64()?;
        let variant = match tag {
            0 => Variant::TwoDpca,
            1 => Variant::TwoDpcaL1,
            2 => Variant::TwoDpcaL1S { rho },
            _ => Variant::G2dpca,
        };
        let (s, p, tol, max_iter, init, deflation) = r.solver()?;
        Ok(SolverConfig {
            s,
            p,
            tol,
            max_iter,
            init,
            variant,
            deflation,
        })
    };
    let header_at = r.pos;
    let model = match kind {
        KIND_PCA2D => {
            let mean = r.mat(h, w)?;
            let u = r.mat(h, k1)?;
            let v = r.mat(w, k2)?;
            ModelFile::Pca2d(BilateralProjector {
                u,
                v,
                eigvals_left: r.f64s(k1)?,
                eigvals_right: r.f64s(k2)?,
                mean,
            })
        }
        KIND_LP => {
            let config = lp_config(&mut r)?;
            config.validate().or_else(|e| r.fail(header_at, e.to_string()))?;
            let mean = r.mat(h, w)?;
            let u = r.mat(h, k1)?;
            let v = r.mat(w, k2)?;
            let (fl, fr) = (r.f64s(k1)?, r.f64s(k2)?);
            let (il, ir) = (r.counts(k1)?, r.counts(k2)?);
            ModelFile::Lp(LpModel {
                left: basis(u, fl, il, Side::Left),
                right: basis(v, fr, ir, Side::Right),
                mean,
                config,
            })
        }
        _ => {
            let gamma = r.f64()?;
            let (s, p, tol, max_iter, init, deflation) = r.solver()?;
            let wf_tag = r.tag(1, "weight function")?;
            let eps = r.f64()?;
            let config = RelaxConfig {
                gamma,
                s,
                p,
                tol,
                max_iter,
                init,
                deflation,
                k1,
                k2,
                weight_fn: if wf_tag == 0 { WeightFn::Identity } else { WeightFn::Shifted(eps) },
            };
            config.validate().or_else(|e| r.fail(header_at, e.to_string()))?;
            let mean = r.mat(h, w)?;
            let u = r.mat(h, k1)?;
            let v = r.mat(w, k2)?;
            let (fl, fr) = (r.f64s(k1)?, r.f64s(k2)?);
            let (il, ir) = (r.counts(k1)?, r.counts(k2)?);
            let m = r.u32()?;
            let omega = r.f64s(m)?;
            let lambda_max = r.f64s(m)?;
            let uniform_fallback = r.tag(1, "fallback flag")? == 1;
            ModelFile::Relaxed(R2dpcaModel {
                left: basis(u, fl, il, Side::Left),
                right: basis(v, fr, ir, Side::Right),
                weights: WeightingVector {
                    omega,
                    lambda_max,
                    uniform_fallback,
                },
                mean,
                config,
            })
        }
    };
    if r.pos != bytes.len() {
        return r.fail(r.pos, "trailing bytes after model payload");
    }
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::random_dataset;
    use crate::pca2d::fit_2dpca;
    use crate::relaxed::fit_r2dpca;

    fn all_kinds() -> Vec<ModelFile> {
        let ds = random_dataset(&[4, 5], 4, 3, 1);
        let lp_cfg = SolverConfig {
            init: Init::Random(9),
            ..SolverConfig::preset(Variant::TwoDpcaL1S { rho: -0.5 }).unwrap()
        };
        let relax = RelaxConfig {
            weight_fn: WeightFn::Shifted(0.25),
            ..RelaxConfig::new(0.3, 1.0, f64::INFINITY, 2, 2)
        };
        vec![
            ModelFile::Pca2d(fit_2dpca(&ds, 3, 2).unwrap()),
            ModelFile::Lp(LpModel::fit(&ds, 2, 3, &lp_cfg).unwrap()),
            ModelFile::Relaxed(fit_r2dpca(&ds, &relax).unwrap()),
        ]
    }

    #[test]
    fn round_trip_every_kind() {
        let dir = tempfile::tempdir().unwrap();
        for (i, m) in all_kinds().into_iter().enumerate() {
            let p = dir.path().join(format!("m{i}.b2dp"));
            save_model(&p, &m).unwrap();
            assert_eq!(load_model(&p).unwrap(), m);
            let bytes = fs::read(&p).unwrap();
            assert_eq!(&bytes[..4], b"B2DP");
            assert_eq!(bytes[4], VERSION);
        }
    }

    #[test]
    fn unrelaxed_relaxed_model_is_stored_as_lp() {
        let ds = random_dataset(&[4, 5], 4, 3, 2);
        let cfg = RelaxConfig::new(1.0, 1.5, 2.5, 2, 2);
        let relaxed = ModelFile::Relaxed(fit_r2dpca(&ds, &cfg).unwrap());
        let lp = ModelFile::Lp(LpModel::fit(&ds, 2, 2, &cfg.solver()).unwrap());
        assert_eq!(to_bytes(&relaxed).unwrap(), to_bytes(&lp).unwrap());
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let path = Path::new("mem");
        let good = to_bytes(&all_kinds()[1]).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let mut bad_kind = good.clone();
        bad_kind[5] = 9;
        let truncated = &good[..good.len() - 3];
        let mut trailing = good.clone();
        trailing.push(0);
        for (bytes, offset) in [
            (&bad_magic[..], 0u64),
            (&bad_kind[..], 5),
            (truncated, truncated.len() as u64),
            (&trailing[..], good.len() as u64),
        ] {
            match from_bytes(bytes, path) {
                Err(Error::Format { offset: o, .. }) => assert_eq!(o, offset),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn custom_weight_fn_cannot_be_saved() {
        fn f(l: f64) -> f64 {
            l + 1.0
        }
        let ds = random_dataset(&[3, 3], 2, 2, 3);
        let cfg = RelaxConfig {
            weight_fn: WeightFn::Custom(f),
            ..RelaxConfig::new(0.5, 2.0, 2.0, 1, 1)
        };
        let m = ModelFile::Relaxed(fit_r2dpca(&ds, &cfg).unwrap());
        assert!(matches!(to_bytes(&m), Err(Error::InvalidSpec(_))));
    }
}
