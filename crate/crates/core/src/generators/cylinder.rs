use std::path::PathBuf;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshots::{read_csv, SnapshotMatrix};

/// Window applied to each snapshot after loading. Ranges are half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Crop {
    /// Keep state components `start..end`.
    Rows { start: usize, end: usize },
    /// Treat each snapshot as a row-major `grid_rows x grid_cols` field and
    /// keep the rectangle `row_start..row_end` by `col_start..col_end`.
    Grid { grid_rows: usize, grid_cols: usize, row_start: usize, row_end: usize, col_start: usize, col_end: usize },
}

impl Crop {
    fn indices(&self, n_state: usize) -> Result<Vec<usize>> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Crop::Rows { start, end } => {
                if start >= end || end > n_state {
                    return bad(format!("row crop {start}..{end} outside 0..{n_state}"));
                }
                Ok((start..end).collect())
            }
            Crop::Grid { grid_rows, grid_cols, row_start, row_end, col_start, col_end } => {
                if grid_rows * grid_cols != n_state {
                    return bad(format!("grid {grid_rows}x{grid_cols} does not match state size {n_state}"));
                }
                if row_start >= row_end || row_end > grid_rows || col_start >= col_end || col_end > grid_cols {
                    return bad(format!(
                        "grid crop {row_start}..{row_end} x {col_start}..{col_end} outside {grid_rows}x{grid_cols}"
                    ));
                }
                Ok((row_start..row_end).flat_map(|r| (col_start..col_end).map(move |c| r * grid_cols + c)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSource {
    pub path: PathBuf,
    #[serde(default)]
    pub crop: Option<Crop>,
}

pub fn load_cylinder(src: &CylinderSource) -> Result<SnapshotMatrix> {
    let series = read_csv(&src.path)?;
    let Some(crop) = src.crop else {
        return Ok(series);
    };
    let keep = crop.indices(series.n_state())?;
    let values = Mat::from_fn(keep.len(), series.n_time(), |i, k| series.values()[(keep[i], k)]);
    SnapshotMatrix::new(values, series.dt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::write_csv;

    #[test]
    fn published_window_crop() {
        let (gr, gc, nt) = (199, 449, 3);
        let values = Mat::from_fn(gr * gc, nt, |i, k| (i * 10 + k) as f64);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wake.csv");
        write_csv(&SnapshotMatrix::new(values, 0.2).unwrap(), &path).unwrap();

        let full = load_cylinder(&CylinderSource { path: path.clone(), crop: None }).unwrap();
        assert_eq!((full.n_state(), full.n_time()), (gr * gc, nt));

        let crop =
            Crop::Grid { grid_rows: gr, grid_cols: gc, row_start: 40, row_end: 159, col_start: 10, col_end: 171 };
        let s = load_cylinder(&CylinderSource { path, crop: Some(crop) }).unwrap();
        assert_eq!((s.n_state(), s.n_time()), (19_159, nt));
        assert_eq!(s.values()[(0, 1)], ((40 * gc + 10) * 10 + 1) as f64);
        assert_eq!(s.values()[(161, 0)], ((41 * gc + 10) * 10) as f64);
        assert_eq!(s.dt(), 0.2);
    }

    #[test]
    fn row_crop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_csv(&SnapshotMatrix::new(Mat::from_fn(6, 2, |i, k| (i + k) as f64), 1.0).unwrap(), &path).unwrap();
        let s = load_cylinder(&CylinderSource { path: path.clone(), crop: Some(Crop::Rows { start: 2, end: 5 }) })
            .unwrap();
        assert_eq!(s.n_state(), 3);
        assert_eq!(s.values()[(0, 1)], 3.0);
        assert!(load_cylinder(&CylinderSource { path, crop: Some(Crop::Rows { start: 2, end: 9 }) }).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let src = CylinderSource { path: "/nonexistent/wake.csv".into(), crop: None };
        assert!(matches!(load_cylinder(&src), Err(Error::Io { .. })));
    }
}
