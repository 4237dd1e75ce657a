//! IDX (MNIST) image/label files.

use std::fs;
use std::path::Path;

use super::{LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::linalg::Mat;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, bytes.len() as u64, "truncated header"))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image file and its label file. Pixels are scaled by `1/255`
/// and samples regrouped by class, keeping file order inside each class.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ipath, lpath) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(ipath)?;
    let labels = read_file(lpath)?;

    let magic = read_u32(&images, 0, ipath)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(ipath, 0, format!("bad image magic 0x{magic:08x}")));
    }
    let n = read_u32(&images, 4, ipath)? as usize;
    let rows = read_u32(&images, 8, ipath)? as usize;
    let cols = read_u32(&images, 12, ipath)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(ipath, 8, "zero image dimension"));
    }
    let payload = n * rows * cols;
    if images.len() < 16 + payload {
        return Err(Error::format(
            ipath,
            images.len() as u64,
            format!("truncated payload: expected {} bytes, found {}", 16 + payload, images.len()),
        ));
    }

    let magic = read_u32(&labels, 0, lpath)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(lpath, 0, format!("bad label magic 0x{magic:08x}")));
    }
    let n_labels = read_u32(&labels, 4, lpath)? as usize;
    if n_labels != n {
        return Err(Error::format(
            lpath,
            4,
            format!("label count {n_labels} does not match image count {n}"),
        ));
    }
    if labels.len() < 8 + n {
        return Err(Error::format(
            lpath,
            labels.len() as u64,
            format!("truncated payload: expected {} bytes, found {}", 8 + n, labels.len()),
        ));
    }

    let size = rows * cols;
    let samples = (0..n)
        .map(|i| {
            let px = &images[16 + i * size..16 + (i + 1) * size];
            Sample {
                image: Mat::from_fn(rows, cols, |r, c| px[r * cols + c] as f64 / 255.0),
                label: labels[8 + i] as usize,
            }
        })
        .collect();
    LabeledDataset::new(samples).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::format(lpath, 8, msg),
        other => other,
    })
}

/// Writes samples as an IDX pair, pixels clamped to `[0,1]` and quantized to bytes.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    samples: &[Sample],
) -> Result<()> {
    let (rows, cols) = samples.first().map_or((0, 0), |s| s.image.shape());
    let mut img = Vec::with_capacity(16 + samples.len() * rows * cols);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for v in [samples.len(), rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    let mut lab = Vec::with_capacity(8 + samples.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    for s in samples {
        if s.image.shape() != (rows, cols) {
            return Err(Error::InvalidInput("IDX samples must share dimensions".into()));
        }
        if s.label > u8::MAX as usize {
            return Err(Error::InvalidInput(format!("label {} does not fit a byte", s.label)));
        }
        img.extend(s.image.as_slice().iter().map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8));
        lab.push(s.label as u8);
    }
    let ip = images_path.as_ref();
    let lp = labels_path.as_ref();
    fs::write(ip, img).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, lab).map_err(|e| Error::io(lp, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn crafted_pair_scales_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let mut img = header(IMAGES_MAGIC, &[2, 1, 2]);
        img.extend_from_slice(&[0, 255, 255, 0]);
        let mut lab = header(LABELS_MAGIC, &[2]);
        lab.extend_from_slice(&[1, 0]);
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.dims(), (1, 2));
        // regrouped: the label-0 image [255, 0] comes first
        assert_eq!(ds.samples()[0].image.as_slice(), &[1.0, 0.0]);
        assert_eq!(ds.samples()[1].image.as_slice(), &[0.0, 1.0]);
        assert_eq!(ds.labels(), vec![0, 1]);
    }

    #[test]
    fn shuffled_labels_match_histogram() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let labels: Vec<u8> = [3u8, 0, 2, 2, 1, 3, 3, 0, 1, 2, 2, 0].to_vec();
        let mut img = header(IMAGES_MAGIC, &[labels.len() as u32, 2, 2]);
        for (i, _) in labels.iter().enumerate() {
            img.extend_from_slice(&[i as u8; 4]);
        }
        let mut lab = header(LABELS_MAGIC, &[labels.len() as u32]);
        lab.extend_from_slice(&labels);
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        let mut hist = vec![0usize; 4];
        labels.iter().for_each(|&l| hist[l as usize] += 1);
        assert_eq!(ds.class_sizes(), hist.as_slice());
        // within-class file order kept
        let class2: Vec<f64> = ds.class(2).iter().map(|s| s.image[(0, 0)] * 255.0).collect();
        assert_eq!(class2, vec![2.0, 3.0, 9.0, 10.0]);
    }

    #[test]
    fn format_errors_name_file_and_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let mut lab = header(LABELS_MAGIC, &[2]);
        lab.extend_from_slice(&[0, 1]);
        fs::write(&lp, &lab).unwrap();

        fs::write(&ip, header(0x0000_0801, &[2, 1, 1])).unwrap();
        match load_idx(&ip, &lp) {
            Err(Error::Format { path, offset, .. }) => {
                assert_eq!(path, ip);
                assert_eq!(offset, 0);
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut img = header(IMAGES_MAGIC, &[2, 1, 2]);
        img.extend_from_slice(&[1, 2, 3]);
        fs::write(&ip, &img).unwrap();
        match load_idx(&ip, &lp) {
            Err(Error::Format { path, offset, .. }) => {
                assert_eq!(path, ip);
                assert_eq!(offset, 19);
            }
            other => panic!("unexpected {other:?}"),
        }

        img.push(4);
        fs::write(&ip, &img).unwrap();
        let mut bad_lab = header(LABELS_MAGIC, &[3]);
        bad_lab.extend_from_slice(&[0, 1, 1]);
        fs::write(&lp, bad_lab).unwrap();
        match load_idx(&ip, &lp) {
            Err(Error::Format { path, offset, .. }) => {
                assert_eq!(path, lp);
                assert_eq!(offset, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_idx(dir.path().join("a"), dir.path().join("b")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let samples = vec![
            Sample { image: Mat::from_vec(2, 1, vec![0.0, 1.0]).unwrap(), label: 0 },
            Sample { image: Mat::from_vec(2, 1, vec![128.0 / 255.0, 0.5]).unwrap(), label: 1 },
        ];
        write_idx(&ip, &lp, &samples).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.samples()[0], samples[0]);
        assert_eq!(ds.samples()[1].image[(0, 0)], 128.0 / 255.0);
    }
}
