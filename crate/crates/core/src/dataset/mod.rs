//! Labeled matrix datasets: loading, deterministic splitting, centering and
//! the synthetic two-class point clouds.

mod idx;
mod pgm;
mod snapshot;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub use idx::{load_idx, write_idx};
pub use pgm::{load_image_dir, read_pgm, write_pgm};
pub use snapshot::{read_snapshot, write_snapshot};

/// One image with its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Mat,
    pub label: usize,
}

/// Samples grouped contiguously by class, classes `0..m` all nonempty.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    class_sizes: Vec<usize>,
    h: usize,
    w: usize,
}

impl LabeledDataset {
    /// Groups `samples` by label, keeping the relative order inside each class.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no samples".into()))?;
        let (h, w) = first.image.shape();
        if h == 0 || w == 0 {
            return Err(Error::InvalidInput("images must have positive dimensions".into()));
        }
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.image.shape() != (h, w)) {
            return Err(Error::InvalidInput(format!(
                "sample {i} is {}x{}, expected {h}x{w}",
                s.image.rows(),
                s.image.cols()
            )));
        }
        let m = samples.iter().map(|s| s.label).max().unwrap_or(0) + 1;
        let mut class_sizes = vec![0; m];
        for s in &samples {
            class_sizes[s.label] += 1;
        }
        if let Some(empty) = class_sizes.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!(
                "class {empty} has no samples; labels must cover 0..{m}"
            )));
        }
        let mut samples = samples;
        samples.sort_by_key(|s| s.label);
        Ok(LabeledDataset {
            samples,
            class_sizes,
            h,
            w,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn images(&self) -> impl ExactSizeIterator<Item = &Mat> {
        self.samples.iter().map(|s| &s.image)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of classes.
    pub fn num_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// Image height and width.
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Samples of class `j`.
    pub fn class(&self, j: usize) -> &[Sample] {
        let start: usize = self.class_sizes[..j].iter().sum();
        &self.samples[start..start + self.class_sizes[j]]
    }

    /// Index of the first sample of each class.
    pub fn class_offsets(&self) -> Vec<usize> {
        self.class_sizes
            .iter()
            .scan(0, |acc, &n| {
                let start = *acc;
                *acc += n;
                Some(start)
            })
            .collect()
    }

    fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        LabeledDataset::new(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }
}

/// How many samples of each class go to the training side.
#[derive(Clone, Debug, PartialEq)]
pub enum PerClassTrain {
    Uniform(usize),
    PerClass(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub per_class_train: PerClassTrain,
    pub seed: u64,
}

impl SplitSpec {
    pub fn uniform(per_class_train: usize, seed: u64) -> Self {
        SplitSpec {
            per_class_train: PerClassTrain::Uniform(per_class_train),
            seed,
        }
    }

    fn train_count(&self, class: usize) -> Option<usize> {
        match &self.per_class_train {
            PerClassTrain::Uniform(n) => Some(*n),
            PerClassTrain::PerClass(v) => v.get(class).copied(),
        }
    }
}

/// Global sample indices on each side of a split, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws the per-class training subsets: one SplitMix64 stream seeded with
/// `spec.seed`, a Fisher–Yates shuffle per class in class order.
pub fn split_indices(ds: &LabeledDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    if let PerClassTrain::PerClass(v) = &spec.per_class_train {
        if v.len() != ds.num_classes() {
            return Err(Error::InvalidSpec(format!(
                "per-class train list has {} entries for {} classes",
                v.len(),
                ds.num_classes()
            )));
        }
    }
    let mut rng = SplitMix64::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (j, (&n_j, offset)) in ds.class_sizes().iter().zip(ds.class_offsets()).enumerate() {
        let t = spec.train_count(j).unwrap_or(0);
        if t == 0 || t >= n_j {
            return Err(Error::InvalidSpec(format!(
                "class {j} has {n_j} samples; per-class train count must be in 1..{n_j}, got {t}"
            )));
        }
        let mut order: Vec<usize> = (0..n_j).collect();
        order.shuffle(&mut rng);
        let (tr, te) = order.split_at_mut(t);
        tr.sort_unstable();
        te.sort_unstable();
        train.extend(tr.iter().map(|i| offset + i));
        test.extend(te.iter().map(|i| offset + i));
    }
    Ok(SplitIndices { train, test })
}

/// Splits into `(train, test)` per [`split_indices`].
pub fn split(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let idx = split_indices(ds, spec)?;
    Ok((ds.subset(&idx.train)?, ds.subset(&idx.test)?))
}

/// Element-wise mean of equally shaped matrices, accumulated as offsets from
/// the first image so that a set of identical images has exactly that image as
/// its mean.
pub fn mean_image<'a>(images: impl IntoIterator<Item = &'a Mat>) -> Mat {
    let mut it = images.into_iter();
    let first = it.next().expect("mean of an empty image set");
    let mut offset = Mat::zeros(first.rows(), first.cols());
    let mut n = 1usize;
    for m in it {
        offset.add_assign(&m.sub(first));
        n += 1;
    }
    offset.scale_in_place(1.0 / n as f64);
    first.add(&offset)
}

/// Subtracts the global mean image `Ψ` from every sample.
pub fn center(ds: &LabeledDataset) -> (Vec<Mat>, Mat) {
    let mean = mean_image(ds.images());
    let centered = ds.images().map(|x| x.sub(&mean)).collect();
    (centered, mean)
}

/// Axis standard deviations and correlation of a 2-D Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian2 {
    pub std: [f64; 2],
    pub corr: f64,
}

impl Gaussian2 {
    pub fn isotropic(std: f64) -> Self {
        Gaussian2 {
            std: [std, std],
            corr: 0.0,
        }
    }
}

/// Two classes of 2-D Gaussian points stored as `1×2` samples, class 0 first.
pub fn gen_gaussian_classes(
    n_per_class: usize,
    mean_1: [f64; 2],
    mean_2: [f64; 2],
    cov: [Gaussian2; 2],
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_class < 2 {
        return Err(Error::InvalidSpec(format!(
            "need at least 2 points per class, got {n_per_class}"
        )));
    }
    for g in &cov {
        let ok = g.std.iter().all(|s| s.is_finite() && *s > 0.0) && g.corr.abs() < 1.0;
        if !ok {
            return Err(Error::InvalidSpec(format!("degenerate covariance {g:?}")));
        }
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for (label, (mean, g)) in [(mean_1, cov[0]), (mean_2, cov[1])].into_iter().enumerate() {
        let tail = (1.0 - g.corr * g.corr).sqrt();
        for _ in 0..n_per_class {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let x = mean[0] + g.std[0] * z1;
            let y = mean[1] + g.std[1] * (g.corr * z1 + tail * z2);
            samples.push(Sample {
                image: Mat::from_vec(1, 2, vec![x, y])?,
                label,
            });
        }
    }
    LabeledDataset::new(samples)
}
