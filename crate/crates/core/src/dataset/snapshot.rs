//! Plain-text CSV snapshot: `label,h,w,p_0,...,p_{hw-1}`.

use std::path::Path;

use super::{LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::linalg::Mat;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::format(path, offset, e.to_string())
}

/// Writes pixels with shortest round-trip formatting, so reading back is bit-exact.
pub fn write_snapshot(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = ds.dims();
    let mut wr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["label".to_string(), "h".into(), "w".into()];
    header.extend((0..h * w).map(|i| format!("p_{i}")));
    wr.write_record(&header).map_err(|e| csv_err(path, e))?;
    for s in ds.samples() {
        let mut rec = vec![s.label.to_string(), h.to_string(), w.to_string()];
        rec.extend(s.image.as_slice().iter().map(|x| x.to_string()));
        wr.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut samples = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::format(path, offset, format!("missing field {i}")))
        };
        let uint = |i: usize| -> Result<usize> {
            field(i)?
                .parse()
                .map_err(|_| Error::format(path, offset, format!("field {i} is not an integer")))
        };
        let (label, h, w) = (uint(0)?, uint(1)?, uint(2)?);
        if rec.len() != 3 + h * w {
            return Err(Error::format(
                path,
                offset,
                format!("expected {} pixels, found {}", h * w, rec.len().saturating_sub(3)),
            ));
        }
        let px = (3..rec.len())
            .map(|i| {
                field(i)?
                    .parse::<f64>()
                    .map_err(|_| Error::format(path, offset, format!("field {i} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        let image = Mat::from_vec(h, w, px).map_err(|e| Error::format(path, offset, e.to_string()))?;
        samples.push(Sample { image, label });
    }
    LabeledDataset::new(samples).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::format(path, 0, msg),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::random_dataset;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("snap.csv");
        let ds = random_dataset(&[3, 2, 4], 3, 2, 8);
        write_snapshot(&ds, &p).unwrap();
        let back = read_snapshot(&p).unwrap();
        assert_eq!(back, ds);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("label,h,w,p_0,p_1,p_2,p_3,p_4,p_5\n"));
    }

    #[test]
    fn malformed_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "label,h,w,p_0,p_1\n0,1,2,0.5,abc\n").unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Format { .. })));
        std::fs::write(&p, "label,h,w,p_0\n0,1,2,0.5\n").unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Format { .. })));
    }
}
