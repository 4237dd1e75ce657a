//! Grayscale netpbm (PGM P2/P5) images and class-per-directory corpora.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::linalg::Mat;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(self.path, start as u64, format!("expected {what}")))
    }
}

/// Reads a P2 or P5 graymap with `maxval ≤ 255`, scaling pixels by `1/maxval`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::format(path, 0, "unsupported format: not a P2/P5 graymap")),
    };
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 2,
        path,
    };
    let width = cur.next_uint("width")? as usize;
    let height = cur.next_uint("height")? as usize;
    let maxval_at = cur.pos as u64;
    let maxval = cur.next_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(path, 3, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(path, maxval_at, format!("unsupported maxval {maxval}")));
    }
    let scale = 1.0 / maxval as f64;
    let n = width * height;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        let raster = bytes.get(start..start + n).ok_or_else(|| {
            Error::format(path, bytes.len() as u64, format!("truncated raster: need {n} bytes"))
        })?;
        for (i, &p) in raster.iter().enumerate() {
            if p as u32 > maxval {
                return Err(Error::format(path, (start + i) as u64, "pixel exceeds maxval"));
            }
            data.push(p as f64 * scale);
        }
    } else {
        for _ in 0..n {
            let at = cur.pos as u64;
            let p = cur.next_uint("pixel value")?;
            if p > maxval {
                return Err(Error::format(path, at, "pixel exceeds maxval"));
            }
            data.push(p as f64 * scale);
        }
    }
    Mat::from_vec(height, width, data)
}

/// Writes a binary P5 graymap, clamping to `[0,1]` and rescaling to `[0,255]`.
pub fn write_pgm(path: impl AsRef<Path>, image: &Mat) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", image.cols(), image.rows()).into_bytes();
    out.extend(image.as_slice().iter().map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let ty = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
        if ty.is_dir() == want_dirs && !entry.file_name().to_string_lossy().starts_with('.') {
            out.push(entry.path());
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

/// Loads `root/<class>/<image>.pgm`. Classes are numbered by lexicographic
/// subdirectory name and samples within a class ordered by file name.
pub fn load_image_dir(root: impl AsRef<Path>) -> Result<LabeledDataset> {
    let root = root.as_ref();
    let classes = sorted_entries(root, true)?;
    if classes.is_empty() {
        return Err(Error::format(root, 0, "no class subdirectories"));
    }
    let mut files = Vec::new();
    for (label, dir) in classes.iter().enumerate() {
        let entries = sorted_entries(dir, false)?;
        if entries.is_empty() {
            return Err(Error::format(dir, 0, "class directory has no images"));
        }
        files.extend(entries.into_iter().map(|p| (label, p)));
    }
    // decoded in parallel, collected in serial order
    let images: Vec<Mat> = files.par_iter().map(|(_, p)| read_pgm(p)).collect::<Result<_>>()?;
    let dims = images[0].shape();
    if let Some(i) = images.iter().position(|m| m.shape() != dims) {
        return Err(Error::format(
            &files[i].1,
            0,
            format!(
                "image is {}x{}, expected {}x{}",
                images[i].rows(),
                images[i].cols(),
                dims.0,
                dims.1
            ),
        ));
    }
    LabeledDataset::new(
        images
            .into_iter()
            .zip(files)
            .map(|(image, (label, _))| Sample { image, label })
            .collect(),
    )
}
