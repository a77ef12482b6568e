use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

/// CSV with a header row. The column named `label` holds non-negative
/// integer classes; every other column is a numeric feature.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::Malformed(format!("{}: no `label` column", path.display())))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (i, field) in rec.iter().enumerate() {
            let bad = || Error::Malformed(format!("{}: row {}, column `{}`: `{field}`", path.display(), line + 1, &headers[i]));
            if i == label_col {
                labels.push(field.trim().parse::<usize>().map_err(|_| bad())?);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| bad())?;
                if !v.is_finite() {
                    return Err(bad());
                }
                data.push(v);
            }
        }
    }
    let cols = headers.len() - 1;
    let classes = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
    Dataset::new(DenseMatrix::from_vec(labels.len(), cols, data)?, labels, classes, None, Split::Train)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_label_column_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "x,label,y\n0.5,1,2\n-1,0,3.5\n").unwrap();
        let ds = load_csv(&p).unwrap();
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.features.data(), &[0.5, 2.0, -1.0, 3.5]);
        assert_eq!(ds.classes, 2);
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "x,label\nabc,1\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Malformed(_))));
        std::fs::write(&p, "x,y\n1,2\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Malformed(_))));
        std::fs::write(&p, "x,label\n1,2,3\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Malformed(_))));
        assert!(matches!(load_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }
}
