//! Experiment orchestration: plan files, accuracy sweeps over methods and
//! feature counts, and the two-Gaussian generalization study.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::dataset::{
    center, gen_gaussian_classes, load_idx, load_image_dir, read_snapshot, split, Gaussian2, LabeledDataset,
    PerClassTrain, Sample, SplitSpec,
};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lp::{Deflation, Init, LpModel, Side, SolverConfig, Variant};
use crate::model_io::ModelFile;
use crate::pca2d::fit_2dpca;
use crate::recognition::{accuracy, classify, extract_features, projection_variance, MatrixNorm};
use crate::relaxed::{fit_r2dpca, R2dpcaModel, RelaxConfig, WeightFn};

/// Where a labeled dataset comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// One subdirectory of PGM images per class.
    Dir(PathBuf),
    /// CSV snapshot.
    Snapshot(PathBuf),
    /// IDX image and label files.
    Idx { images: PathBuf, labels: PathBuf },
}

impl FromStr for DataSource {
    type Err = Error;

    /// `idx:IMAGES,LABELS`, a path ending in `.csv`, or a directory.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("idx:") {
            let (images, labels) = rest
                .split_once(',')
                .ok_or_else(|| Error::InvalidSpec(format!("expected idx:IMAGES,LABELS, got {s:?}")))?;
            return Ok(DataSource::Idx {
                images: images.into(),
                labels: labels.into(),
            });
        }
        if s.is_empty() {
            return Err(Error::InvalidSpec("empty dataset source".into()));
        }
        if s.ends_with(".csv") {
            Ok(DataSource::Snapshot(s.into()))
        } else {
            Ok(DataSource::Dir(s.into()))
        }
    }
}

impl DataSource {
    /// Resolves relative paths against `base`.
    pub fn relative_to(self, base: &Path) -> Self {
        let join = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        match self {
            DataSource::Dir(p) => DataSource::Dir(join(p)),
            DataSource::Snapshot(p) => DataSource::Snapshot(join(p)),
            DataSource::Idx { images, labels } => DataSource::Idx {
                images: join(images),
                labels: join(labels),
            },
        }
    }

    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DataSource::Dir(p) => load_image_dir(p),
            DataSource::Snapshot(p) => read_snapshot(p),
            DataSource::Idx { images, labels } => load_idx(images, labels),
        }
    }
}

/// A fitting method with everything but the feature counts fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Eigendecomposition-based bilateral 2DPCA.
    Eig2dpca,
    /// A member of the generalized Ls/Lp family.
    Lp(SolverConfig),
    /// Relaxed fit; `k1`/`k2` in the config are replaced at fit time.
    Relaxed(RelaxConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Eig2dpca => "2dpca-eig",
            Method::Lp(c) => c.variant.name(),
            Method::Relaxed(_) => "r2dpca",
        }
    }

    /// `(s, p, γ)` for result tables.
    pub fn parameters(&self) -> (f64, f64, f64) {
        match self {
            Method::Eig2dpca => (2.0, 2.0, 1.0),
            Method::Lp(c) => (c.s, c.p, 1.0),
            Method::Relaxed(c) => (c.s, c.p, c.gamma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::Eig2dpca => Ok(()),
            Method::Lp(c) => c.validate(),
            Method::Relaxed(c) => RelaxConfig { k1: 1, k2: 1, ..*c }.validate(),
        }
    }

    pub fn fit(&self, train: &LabeledDataset, k1: usize, k2: usize) -> Result<ModelFile> {
        Ok(match self {
            Method::Eig2dpca => ModelFile::Pca2d(fit_2dpca(train, k1, k2)?),
            Method::Lp(c) => ModelFile::Lp(LpModel::fit(train, k1, k2, c)?),
            Method::Relaxed(c) => ModelFile::Relaxed(fit_r2dpca(train, &RelaxConfig { k1, k2, ..*c })?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodEntry {
    pub label: String,
    pub method: Method,
}

/// A validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub source: DataSource,
    /// Fixed probe set; when absent the source is split per seed.
    pub test_source: Option<DataSource>,
    pub per_class_train: PerClassTrain,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodEntry>,
    /// Feature counts; each point uses `k1 = k2 = k`.
    pub ks: Vec<usize>,
    pub norm: MatrixNorm,
    pub results: Option<PathBuf>,
    pub figure: Option<PathBuf>,
    /// Record wall-clock fit time; disabled runs print `NA` and are byte-reproducible.
    pub timing: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanToml {
    dataset: DatasetToml,
    split: Option<SplitToml>,
    methods: Vec<MethodToml>,
    sweep: SweepToml,
    output: Option<OutputToml>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetToml {
    source: String,
    test_source: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PerClassToml {
    Uniform(usize),
    PerClass(Vec<usize>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitToml {
    per_class_train: Option<PerClassToml>,
    #[serde(default)]
    seeds: Vec<u64>,
}

/// One `[[methods]]` entry; also the flag surface of the command-line tool.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MethodToml {
    pub method: String,
    pub label: Option<String>,
    pub s: Option<f64>,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub weight_fn: Option<String>,
    pub epsilon: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub init_seed: Option<u64>,
    pub deflation: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepToml {
    k: Option<Vec<usize>>,
    k_min: Option<usize>,
    k_max: Option<usize>,
    norm: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputToml {
    results: Option<PathBuf>,
    figure: Option<PathBuf>,
    #[serde(default)]
    timing: bool,
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

pub fn parse_norm(s: &str) -> Result<MatrixNorm> {
    match s {
        "frobenius" => Ok(MatrixNorm::Frobenius),
        "spectral" => Ok(MatrixNorm::Spectral),
        _ => Err(spec_err(format!("unknown norm {s:?} (frobenius | spectral)"))),
    }
}

impl MethodToml {
    /// Builds and validates the method; preset variants reject conflicting `s`/`p`.
    pub fn build(&self) -> Result<MethodEntry> {
        let deflation = match self.deflation.as_deref() {
            None | Some("verbatim") => Deflation::Verbatim,
            Some("orthonormalized") => Deflation::Orthonormalized,
            Some(other) => return Err(spec_err(format!("unknown deflation {other:?}"))),
        };
        let init = self.init_seed.map_or(Init::Spectral, Init::Random);
        let defaults = SolverConfig::default();
        let tol = self.tol.unwrap_or(defaults.tol);
        let max_iter = self.max_iter.unwrap_or(defaults.max_iter);
        let lp = |variant: Variant| -> Result<Method> {
            let base = SolverConfig::preset(variant)?;
            let cfg = SolverConfig {
                s: self.s.unwrap_or(base.s),
                p: self.p.unwrap_or(base.p),
                tol,
                max_iter,
                init,
                deflation,
                variant,
            };
            Ok(Method::Lp(cfg))
        };
        let not_for = |field: &str, present: bool| -> Result<()> {
            if present {
                Err(spec_err(format!("{field} does not apply to method {:?}", self.method)))
            } else {
                Ok(())
            }
        };
        if self.method != "r2dpca" {
            not_for("gamma", self.gamma.is_some())?;
            not_for("weight_fn", self.weight_fn.is_some() || self.epsilon.is_some())?;
        }
        if self.method != "2dpcal1-s" {
            not_for("rho", self.rho.is_some())?;
        }
        let method = match self.method.as_str() {
            "2dpca-eig" => {
                not_for("s/p/solver settings", self.s.is_some() || self.p.is_some() || self.init_seed.is_some())?;
                Method::Eig2dpca
            }
            "2dpca" => lp(Variant::TwoDpca)?,
            "2dpca-l1" => lp(Variant::TwoDpcaL1)?,
            "2dpcal1-s" => lp(Variant::TwoDpcaL1S {
                rho: self.rho.ok_or_else(|| spec_err("2dpcal1-s requires rho"))?,
            })?,
            "g2dpca" => lp(Variant::G2dpca)?,
            "r2dpca" => {
                let weight_fn = match (self.weight_fn.as_deref(), self.epsilon) {
                    (None | Some("identity"), None) => WeightFn::Identity,
                    (Some("shifted"), eps) => WeightFn::Shifted(eps.unwrap_or(0.0)),
                    (None | Some("identity"), Some(_)) => {
                        return Err(spec_err("epsilon requires weight_fn = \"shifted\""))
                    }
                    (Some(other), _) => return Err(spec_err(format!("unknown weight_fn {other:?}"))),
                };
                let gamma = self.gamma.ok_or_else(|| spec_err("r2dpca requires gamma"))?;
                Method::Relaxed(RelaxConfig {
                    tol,
                    max_iter,
                    init,
                    deflation,
                    weight_fn,
                    ..RelaxConfig::new(gamma, self.s.unwrap_or(2.0), self.p.unwrap_or(2.0), 1, 1)
                })
            }
            other => {
                return Err(spec_err(format!(
                    "unknown method {other:?} (2dpca-eig | 2dpca | 2dpca-l1 | 2dpcal1-s | g2dpca | r2dpca)"
                )))
            }
        };
        method.validate()?;
        Ok(MethodEntry {
            label: self.label.clone().unwrap_or_else(|| method.name().to_string()),
            method,
        })
    }
}

impl ExperimentPlan {
    /// Parses plan text; relative paths resolve against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let raw: PlanToml = toml::from_str(text).map_err(|e| spec_err(format!("plan file: {e}")))?;
        let source = raw.dataset.source.parse::<DataSource>()?.relative_to(base);
        let test_source = raw
            .dataset
            .test_source
            .map(|s| s.parse::<DataSource>().map(|d| d.relative_to(base)))
            .transpose()?;
        let (per_class, seeds) = match raw.split {
            Some(s) => (s.per_class_train, s.seeds),
            None => (None, Vec::new()),
        };
        let per_class_train = match (per_class, &test_source) {
            (Some(PerClassToml::Uniform(n)), _) => PerClassTrain::Uniform(n),
            (Some(PerClassToml::PerClass(v)), _) => PerClassTrain::PerClass(v),
            (None, Some(_)) => PerClassTrain::Uniform(0),
            (None, None) => return Err(spec_err("[split] per_class_train is required without a test_source")),
        };
        let seeds = if seeds.is_empty() { vec![0] } else { seeds };
        if raw.methods.is_empty() {
            return Err(spec_err("plan lists no [[methods]]"));
        }
        let methods = raw.methods.iter().map(MethodToml::build).collect::<Result<Vec<_>>>()?;
        let ks = match (raw.sweep.k, raw.sweep.k_min, raw.sweep.k_max) {
            (Some(ks), None, None) => ks,
            (None, lo, Some(hi)) => (lo.unwrap_or(1)..=hi).collect(),
            _ => return Err(spec_err("[sweep] needs either k = [..] or k_max (with optional k_min)")),
        };
        if ks.is_empty() || ks.contains(&0) {
            return Err(spec_err("[sweep] feature counts must be a nonempty list of positive integers"));
        }
        let norm = raw.sweep.norm.as_deref().map_or(Ok(MatrixNorm::Frobenius), parse_norm)?;
        let (results, figure, timing) = match raw.output {
            Some(o) => (
                o.results.map(|p| base.join(p)),
                o.figure.map(|p| base.join(p)),
                o.timing,
            ),
            None => (None, None, false),
        };
        Ok(ExperimentPlan {
            source,
            test_source,
            per_class_train,
            seeds,
            methods,
            ks,
            norm,
            results,
            figure,
            timing,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentPlan::from_toml_str(&text, base)
    }

    /// Largest requested feature count.
    pub fn k_max(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(0)
    }

    /// Checks the feature counts against image dimensions.
    pub fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        let k = self.k_max();
        if k > h.min(w) {
            return Err(spec_err(format!("k = {k} exceeds image dimensions {h}x{w}")));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoosePlanToml {
    dataset: Option<DatasetToml>,
    split: Option<SplitToml>,
    methods: Option<Vec<MethodToml>>,
    sweep: Option<SweepToml>,
    #[allow(dead_code)]
    output: Option<OutputToml>,
}

/// Defaults for single-run commands read from a plan file. Every section is
/// optional; only the first `[[methods]]` entry and the first seed are used.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub source: Option<DataSource>,
    pub test_source: Option<DataSource>,
    pub method: Option<MethodToml>,
    pub k: Option<usize>,
    pub per_class_train: Option<usize>,
    pub seed: Option<u64>,
    pub norm: Option<MatrixNorm>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let raw: LoosePlanToml = toml::from_str(text).map_err(|e| spec_err(format!("config file: {e}")))?;
        let mut cfg = RunConfig::default();
        if let Some(d) = raw.dataset {
            cfg.source = Some(d.source.parse::<DataSource>()?.relative_to(base));
            cfg.test_source = d.test_source.map(|s| s.parse::<DataSource>().map(|d| d.relative_to(base))).transpose()?;
        }
        if let Some(s) = raw.split {
            cfg.per_class_train = match s.per_class_train {
                None => None,
                Some(PerClassToml::Uniform(n)) => Some(n),
                Some(PerClassToml::PerClass(_)) => {
                    return Err(spec_err("single-run commands take a uniform per_class_train"))
                }
            };
            cfg.seed = s.seeds.first().copied();
        }
        cfg.method = raw.methods.and_then(|m| m.into_iter().next());
        if let Some(sw) = raw.sweep {
            cfg.k = sw.k.and_then(|ks| ks.into_iter().max()).or(sw.k_max);
            cfg.norm = sw.norm.as_deref().map(parse_norm).transpose()?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// One `(method, k, seed)` measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub s: f64,
    pub p: f64,
    pub gamma: f64,
    pub k: usize,
    pub seed: u64,
    /// Accuracy, or the error tag of a failed fit.
    pub accuracy: std::result::Result<f64, String>,
    pub fit_seconds: Option<f64>,
}

/// Train/test pair per seed.
fn seed_splits(plan: &ExperimentPlan) -> Result<Vec<(u64, LabeledDataset, LabeledDataset)>> {
    let data = plan.source.load()?;
    match &plan.test_source {
        Some(t) => {
            let test = t.load()?;
            if test.dims() != data.dims() {
                return Err(Error::InvalidInput("train and test images differ in size".into()));
            }
            Ok(plan.seeds.iter().map(|&s| (s, data.clone(), test.clone())).collect())
        }
        None => plan
            .seeds
            .iter()
            .map(|&seed| {
                let spec = SplitSpec {
                    per_class_train: plan.per_class_train.clone(),
                    seed,
                };
                let (train, test) = split(&data, &spec)?;
                Ok((seed, train, test))
            })
            .collect(),
    }
}

fn evaluate(
    entry: &MethodEntry,
    train: &LabeledDataset,
    test: &LabeledDataset,
    plan: &ExperimentPlan,
    seed: u64,
) -> Vec<SweepRow> {
    let (s, p, gamma) = entry.method.parameters();
    let row = |k: usize, accuracy, fit_seconds| SweepRow {
        method: entry.label.clone(),
        s,
        p,
        gamma,
        k,
        seed,
        accuracy,
        fit_seconds,
    };
    let k_max = plan.k_max();
    let start = Instant::now();
    // Greedy fits are prefix-consistent, so one fit at k_max serves every k.
    let full = match entry.method.fit(train, k_max, k_max) {
        Ok(m) => m,
        Err(e) => return plan.ks.iter().map(|&k| row(k, Err(e.tag().to_string()), None)).collect(),
    };
    let seconds = plan.timing.then(|| start.elapsed().as_secs_f64());
    let probes: Vec<Mat> = test.images().cloned().collect();
    let truth = test.labels();
    plan.ks
        .iter()
        .map(|&k| {
            let acc = full.truncated(k, k).and_then(|m| {
                let gallery = extract_features(&m, train)?;
                Ok(accuracy(&classify(&gallery, &probes, &m, plan.norm)?, &truth))
            });
            row(k, acc.map_err(|e| e.tag().to_string()), seconds)
        })
        .collect()
}

/// Fits every method on every seed's split and scores every `k`. Rows follow
/// plan order (seed, then method, then k) whatever the execution order.
pub fn run_accuracy_sweep(plan: &ExperimentPlan) -> Result<Vec<SweepRow>> {
    let splits = seed_splits(plan)?;
    let (h, w) = splits[0].1.dims();
    plan.check_dims(h, w)?;
    let jobs: Vec<(usize, usize)> = (0..splits.len())
        .flat_map(|i| (0..plan.methods.len()).map(move |j| (i, j)))
        .collect();
    let rows: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (seed, train, test) = &splits[i];
            evaluate(&plan.methods[j], train, test, plan, *seed)
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Shortest round-trip decimal, `inf` for infinity.
pub fn fmt_real(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        x.to_string()
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(header).expect("in-memory write");
    for r in rows {
        wr.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(wr.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    csv_string(
        &["method", "s", "p", "gamma", "k", "seed", "accuracy", "fit_seconds"],
        rows.iter().map(|r| {
            vec![
                r.method.clone(),
                fmt_real(r.s),
                fmt_real(r.p),
                fmt_real(r.gamma),
                r.k.to_string(),
                r.seed.to_string(),
                match &r.accuracy {
                    Ok(a) => format!("{a:.6}"),
                    Err(tag) => format!("error:{tag}"),
                },
                r.fit_seconds.map_or("NA".into(), |t| format!("{t:.6}")),
            ]
        }),
    )
}

/// Mean accuracy per `(method, k)` over seeds, in order of first appearance.
/// Failed points are skipped; a pair with no successes reports `NA`.
pub fn figure_csv(rows: &[SweepRow]) -> String {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.k);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    csv_string(
        &["method", "k", "accuracy"],
        keys.into_iter().map(|(method, k)| {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.k == k)
                .filter_map(|r| r.accuracy.as_ref().ok().copied())
                .collect();
            let mean = if accs.is_empty() {
                "NA".to_string()
            } else {
                format!("{:.6}", accs.iter().sum::<f64>() / accs.len() as f64)
            };
            vec![method, k.to_string(), mean]
        }),
    )
}

/// Writes `text` to `path`.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parameters of the two-Gaussian generalization study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyConfig {
    /// Training points per class; each class has `2n` points in total.
    pub n: usize,
    pub mean_1: [f64; 2],
    pub mean_2: [f64; 2],
    pub cov: [Gaussian2; 2],
    pub gamma: f64,
    pub s: f64,
    pub p: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n: 10,
            mean_1: [0.0, 0.0],
            mean_2: [5.0, 2.0],
            cov: [
                Gaussian2::isotropic(1.0),
                Gaussian2 {
                    std: [2.0, 0.5],
                    corr: 0.5,
                },
            ],
            gamma: 0.5,
            s: 2.0,
            p: 2.0,
        }
    }
}

/// Projection variances on the first right vector: `[train, test, whole]`
/// for the unrelaxed fit and the relaxed fit.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyRow {
    pub seed: u64,
    pub unrelaxed: [f64; 3],
    pub relaxed: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToySummary {
    pub rows: Vec<ToyRow>,
    pub mean_unrelaxed: [f64; 3],
    pub mean_relaxed: [f64; 3],
}

fn concat(a: &LabeledDataset, b: &LabeledDataset) -> Result<LabeledDataset> {
    LabeledDataset::new(a.samples().iter().chain(b.samples()).cloned().collect::<Vec<Sample>>())
}

fn toy_fit(train: &LabeledDataset, gamma: f64, s: f64, p: f64) -> Result<R2dpcaModel> {
    let cfg = RelaxConfig::new(gamma, s, p, 1, 1);
    let (centered, _) = center(train);
    if centered.iter().all(|y| y.as_slice().iter().all(|&x| x == 0.0)) {
        // No scatter at all: every unit direction is optimal; take the first axis.
        let (h, w) = train.dims();
        let axis = |d: usize| Mat::from_fn(d, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let probe = RelaxConfig { k1: 1, k2: 1, ..cfg };
        probe.validate()?;
        return Ok(R2dpcaModel {
            left: crate::lp::UnilateralBasis {
                w: axis(h),
                objectives: vec![0.0],
                iterations: vec![0],
                side: Side::Left,
            },
            right: crate::lp::UnilateralBasis {
                w: axis(w),
                objectives: vec![0.0],
                iterations: vec![0],
                side: Side::Right,
            },
            weights: crate::relaxed::weighting_vector(train, WeightFn::Identity)?,
            mean: crate::dataset::mean_image(train.images()),
            config: probe,
        });
    }
    fit_r2dpca(train, &cfg)
}

/// Variances for one train/test pair.
pub fn toy_row(seed: u64, train: &LabeledDataset, test: &LabeledDataset, cfg: &ToyConfig) -> Result<ToyRow> {
    let whole = concat(train, test)?;
    let base = toy_fit(train, 1.0, 2.0, 2.0)?;
    let relaxed = toy_fit(train, cfg.gamma, cfg.s, cfg.p)?;
    let vars = |m: &R2dpcaModel| -> Result<[f64; 3]> {
        Ok([
            projection_variance(m, train, Side::Right)?,
            projection_variance(m, test, Side::Right)?,
            projection_variance(m, &whole, Side::Right)?,
        ])
    };
    Ok(ToyRow {
        seed,
        unrelaxed: vars(&base)?,
        relaxed: vars(&relaxed)?,
    })
}

/// For each seed: draw `4n` points in two classes, train on `n` per class,
/// and compare projection variances of the unrelaxed and relaxed fits.
pub fn run_toy_generalization(cfg: &ToyConfig, seeds: &[u64]) -> Result<ToySummary> {
    if cfg.n < 2 {
        return Err(spec_err(format!("toy study needs n >= 2, got {}", cfg.n)));
    }
    if seeds.is_empty() {
        return Err(spec_err("toy study needs at least one seed"));
    }
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let data = gen_gaussian_classes(2 * cfg.n, cfg.mean_1, cfg.mean_2, cfg.cov, seed)?;
            let (train, test) = split(&data, &SplitSpec::uniform(cfg.n, seed))?;
            toy_row(seed, &train, &test, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |pick: &dyn Fn(&ToyRow) -> [f64; 3]| {
        let mut acc = [0.0; 3];
        for r in &rows {
            let v = pick(r);
            (0..3).for_each(|i| acc[i] += v[i]);
        }
        acc.map(|x| x / rows.len() as f64)
    };
    let mean_unrelaxed = mean(&|r| r.unrelaxed);
    let mean_relaxed = mean(&|r| r.relaxed);
    Ok(ToySummary {
        rows,
        mean_unrelaxed,
        mean_relaxed,
    })
}

impl fmt::Display for ToySummary {
    /// CSV with one row per seed and a final `mean` row.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = |seed: String, a: [f64; 3], b: [f64; 3]| {
            vec![seed, fmt_real(a[0]), fmt_real(b[0]), fmt_real(a[1]), fmt_real(b[1]), fmt_real(a[2]), fmt_real(b[2])]
        };
        let text = csv_string(
            &[
                "seed",
                "variance_train_2dpca",
                "variance_train_r2dpca",
                "variance_test_2dpca",
                "variance_test_r2dpca",
                "variance_whole_2dpca",
                "variance_whole_r2dpca",
            ],
            self.rows
                .iter()
                .map(|r| line(r.seed.to_string(), r.unrelaxed, r.relaxed))
                .chain(std::iter::once(line("mean".into(), self.mean_unrelaxed, self.mean_relaxed))),
        );
        f.write_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_snapshot;

    fn plan_text(source: &str, extra_methods: &str) -> String {
        format!(
            r#"
[dataset]
source = "{source}"

[split]
per_class_train = 3
seeds = [4]

[[methods]]
method = "2dpca-eig"
{extra_methods}

[sweep]
k = [1, 2, 3]
"#
        )
    }

    /// Two classes whose images live on disjoint pixel supports.
    fn separable(per_class: usize) -> LabeledDataset {
        let mut samples = Vec::new();
        for label in 0..2 {
            for i in 0..per_class {
                let level = 1.0 + 0.05 * i as f64;
                let image = Mat::from_fn(4, 4, |r, c| if (r < 2) == (label == 0) { level + 0.01 * c as f64 } else { 0.0 });
                samples.push(Sample { image, label });
            }
        }
        LabeledDataset::new(samples).unwrap()
    }

    #[test]
    fn data_source_syntax() {
        assert_eq!(
            "idx:a,b".parse::<DataSource>().unwrap(),
            DataSource::Idx { images: "a".into(), labels: "b".into() }
        );
        assert_eq!("x.csv".parse::<DataSource>().unwrap(), DataSource::Snapshot("x.csv".into()));
        assert_eq!("faces".parse::<DataSource>().unwrap(), DataSource::Dir("faces".into()));
        assert!("idx:only".parse::<DataSource>().is_err());
    }

    #[test]
    fn plan_parses_methods_and_ranges() {
        let text = r#"
[dataset]
source = "d.csv"
[split]
per_class_train = [2, 3]
seeds = [1, 2]
[[methods]]
method = "r2dpca"
gamma = 0.0
s = 1.0
p = 2.2
weight_fn = "shifted"
epsilon = 0.1
[[methods]]
method = "2dpcal1-s"
rho = -0.5
label = "sparse"
[sweep]
k_min = 2
k_max = 5
norm = "spectral"
[output]
results = "out/r.csv"
"#;
        let plan = ExperimentPlan::from_toml_str(text, Path::new("/base")).unwrap();
        assert_eq!(plan.source, DataSource::Snapshot("/base/d.csv".into()));
        assert_eq!(plan.ks, vec![2, 3, 4, 5]);
        assert_eq!(plan.seeds, vec![1, 2]);
        assert_eq!(plan.norm, MatrixNorm::Spectral);
        assert_eq!(plan.results, Some(PathBuf::from("/base/out/r.csv")));
        match plan.methods[0].method {
            Method::Relaxed(c) => {
                assert_eq!((c.gamma, c.s, c.p), (0.0, 1.0, 2.2));
                assert_eq!(c.weight_fn, WeightFn::Shifted(0.1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(plan.methods[1].label, "sparse");
        assert_eq!(plan.methods[1].method.parameters(), (1.0, 1.5, 1.0));
    }

    #[test]
    fn run_config_reads_partial_files() {
        let text = "[dataset]\nsource = \"idx:a,b\"\n[[methods]]\nmethod = \"r2dpca\"\ngamma = 0.5\n[sweep]\nk = [3, 7, 5]\n";
        let cfg = RunConfig::from_toml_str(text, Path::new("/d")).unwrap();
        assert_eq!(cfg.source, Some(DataSource::Idx { images: "/d/a".into(), labels: "/d/b".into() }));
        assert_eq!(cfg.k, Some(7));
        assert_eq!(cfg.method.unwrap().gamma, Some(0.5));
        assert_eq!(RunConfig::from_toml_str("", Path::new(".")).unwrap(), RunConfig::default());
        assert!(RunConfig::from_toml_str("[bogus]\n", Path::new(".")).is_err());
    }

    #[test]
    fn invalid_plans_rejected() {
        let base = Path::new(".");
        let bad_method = "[[methods]]\nmethod = \"lda\"";
        let preset_conflict = "[[methods]]\nmethod = \"2dpca-l1\"\np = 1.0";
        let gamma_range = "[[methods]]\nmethod = \"r2dpca\"\ngamma = 2.0";
        let stray_gamma = "[[methods]]\nmethod = \"g2dpca\"\ngamma = 0.5";
        for extra in [bad_method, preset_conflict, gamma_range, stray_gamma] {
            let text = plan_text("d.csv", extra);
            assert!(matches!(ExperimentPlan::from_toml_str(&text, base), Err(Error::InvalidSpec(_))), "{extra}");
        }
        let no_sweep = "[dataset]\nsource = \"d.csv\"\n[split]\nper_class_train = 1\n[[methods]]\nmethod = \"2dpca\"\n[sweep]\n";
        assert!(ExperimentPlan::from_toml_str(no_sweep, base).is_err());
        let unknown_key = plan_text("d.csv", "colour = true");
        assert!(ExperimentPlan::from_toml_str(&unknown_key, base).is_err());
    }

    #[test]
    fn one_method_three_ks_gives_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&separable(5), dir.path().join("d.csv")).unwrap();
        let plan = ExperimentPlan::from_toml_str(&plan_text("d.csv", ""), dir.path()).unwrap();
        let rows = run_accuracy_sweep(&plan).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 2, 3]);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("method,s,p,gamma,k,seed,accuracy,fit_seconds\n"));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().ends_with(",NA"));
    }

    #[test]
    fn separable_classes_are_recognized_perfectly() {
        let ds = separable(6);
        // brute-force check: every image is nearer to its own class than to the other
        for a in ds.samples() {
            let own = ds.samples().iter().filter(|b| b.label == a.label).map(|b| a.image.sub(&b.image).frobenius_norm()).fold(0.0, f64::max);
            let other = ds.samples().iter().filter(|b| b.label != a.label).map(|b| a.image.sub(&b.image).frobenius_norm()).fold(f64::INFINITY, f64::min);
            assert!(own < other);
        }
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&ds, dir.path().join("d.csv")).unwrap();
        let methods = "[[methods]]\nmethod = \"2dpca-l1\"\n[[methods]]\nmethod = \"r2dpca\"\ngamma = 0.0\n[[methods]]\nmethod = \"g2dpca\"\ns = 1.5\np = 3.0";
        let text = plan_text("d.csv", methods).replace("k = [1, 2, 3]", "k = [4]");
        let plan = ExperimentPlan::from_toml_str(&text, dir.path()).unwrap();
        for row in run_accuracy_sweep(&plan).unwrap() {
            assert_eq!(row.accuracy, Ok(1.0), "{}", row.method);
        }
    }

    #[test]
    fn sweep_output_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&crate::dataset::tests::random_dataset(&[6, 6, 6], 5, 4, 3), dir.path().join("d.csv")).unwrap();
        let methods = "[[methods]]\nmethod = \"r2dpca\"\ngamma = 0.5\ns = 1.0\np = 1.5";
        let plan = ExperimentPlan::from_toml_str(&plan_text("d.csv", methods), dir.path()).unwrap();
        let a = run_accuracy_sweep(&plan).unwrap();
        let b = run_accuracy_sweep(&plan).unwrap();
        assert_eq!(sweep_csv(&a), sweep_csv(&b));
        assert_eq!(figure_csv(&a), figure_csv(&b));
        assert!(figure_csv(&a).starts_with("method,k,accuracy\n"));
    }

    #[test]
    fn failed_points_are_tagged_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        // all-zero images: the Lp fits have no ascent direction
        let samples = (0..8)
            .map(|i| Sample { image: Mat::zeros(3, 3), label: i % 2 })
            .collect();
        write_snapshot(&LabeledDataset::new(samples).unwrap(), dir.path().join("d.csv")).unwrap();
        let methods = "[[methods]]\nmethod = \"g2dpca\"\ninit_seed = 3";
        let plan = ExperimentPlan::from_toml_str(&plan_text("d.csv", methods), dir.path()).unwrap();
        let rows = run_accuracy_sweep(&plan).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows[3..].iter().all(|r| r.accuracy == Err("degenerate-direction".into())));
        assert!(sweep_csv(&rows).contains("error:degenerate-direction"));
    }

    #[test]
    fn k_beyond_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&separable(4), dir.path().join("d.csv")).unwrap();
        let text = plan_text("d.csv", "").replace("k = [1, 2, 3]", "k = [5]");
        let plan = ExperimentPlan::from_toml_str(&text, dir.path()).unwrap();
        assert!(matches!(run_accuracy_sweep(&plan), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn toy_schema_and_means() {
        let summary = run_toy_generalization(&ToyConfig::default(), &[1, 2, 3]).unwrap();
        let text = summary.to_string();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "seed,variance_train_2dpca,variance_train_r2dpca,variance_test_2dpca,variance_test_r2dpca,variance_whole_2dpca,variance_whole_r2dpca"
        );
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().last().unwrap().starts_with("mean,"));
        let m = summary.rows.iter().map(|r| r.relaxed[2]).sum::<f64>() / 3.0;
        assert!((summary.mean_relaxed[2] - m).abs() < 1e-12);
    }

    #[test]
    fn toy_identical_points_have_zero_variance() {
        let pt = Mat::from_vec(1, 2, vec![0.5, -1.0]).unwrap();
        let ds = LabeledDataset::new((0..8).map(|i| Sample { image: pt.clone(), label: i / 4 }).collect()).unwrap();
        let (train, test) = split(&ds, &SplitSpec::uniform(2, 0)).unwrap();
        let row = toy_row(0, &train, &test, &ToyConfig::default()).unwrap();
        assert_eq!(row.unrelaxed, [0.0; 3]);
        assert_eq!(row.relaxed, [0.0; 3]);
    }

    #[test]
    fn toy_rejects_bad_arguments() {
        assert!(run_toy_generalization(&ToyConfig { n: 1, ..Default::default() }, &[0]).is_err());
        assert!(run_toy_generalization(&ToyConfig::default(), &[]).is_err());
    }
}
