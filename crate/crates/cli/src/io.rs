//! File ingestion and emission: design/outcome CSVs, graph edge lists, and
//! deterministic float formatting for byte-reproducible outputs.

use crate::error::AppError;
use glmfunk::Graph;
use ndarray::{Array1, Array2};
use std::fs;
use std::path::Path;

/// Reserved design column holding the fixed offset term.
pub const OFFSET_COLUMN: &str = "offset";
/// Reserved identifier column present in every data CSV.
pub const UNIT_ID_COLUMN: &str = "unit_id";

/// 17 significant digits: round-trips f64 exactly.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// In-memory dataset after ingestion, keyed by integer unit ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub unit_ids: Vec<usize>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub offsets: Option<Array1<f64>>,
    pub feature_names: Vec<String>,
}

/// Design matrix slice of a CSV: unit ids, feature columns, optional offset.
#[derive(Debug, Clone)]
pub struct DesignTable {
    pub unit_ids: Vec<usize>,
    pub x: Array2<f64>,
    pub offsets: Option<Array1<f64>>,
    pub feature_names: Vec<String>,
}

fn reject_nonfinite(value: f64, row: usize, column: &str) -> Result<f64, AppError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AppError::Data(format!(
            "non-finite value in row {row}, column {column:?}"
        )))
    }
}

/// Read a design CSV: header row with `unit_id`, optional `offset`, and one
/// column per feature.
pub fn read_design(path: &Path) -> Result<DesignTable, AppError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| AppError::Data(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let id_col = headers
        .iter()
        .position(|h| h == UNIT_ID_COLUMN)
        .ok_or_else(|| AppError::Data(format!("{}: missing unit_id column", path.display())))?;
    let offset_col = headers.iter().position(|h| h == OFFSET_COLUMN);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != id_col && Some(c) != offset_col)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut unit_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offsets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AppError::Data(format!("row {}: {e}", r + 1)))?;
        let id: usize = record
            .get(id_col)
            .ok_or_else(|| AppError::Data(format!("row {}: missing unit_id", r + 1)))?
            .trim()
            .parse()
            .map_err(|_| AppError::Data(format!("row {}: invalid unit_id", r + 1)))?;
        unit_ids.push(id);
        if let Some(oc) = offset_col {
            let v: f64 = record
                .get(oc)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| AppError::Data(format!("row {}: invalid offset", r + 1)))?;
            offsets.push(reject_nonfinite(v, r + 1, OFFSET_COLUMN)?);
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for (&c, name) in feature_cols.iter().zip(&feature_names) {
            let v: f64 = record
                .get(c)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| {
                    AppError::Data(format!("row {}: invalid value in column {name:?}", r + 1))
                })?;
            row.push(reject_nonfinite(v, r + 1, name)?);
        }
        rows.push(row);
    }
    let n = rows.len();
    let p = feature_names.len();
    let mut x = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Ok(DesignTable {
        unit_ids,
        x,
        offsets: if offset_col.is_some() {
            Some(Array1::from_vec(offsets))
        } else {
            None
        },
        feature_names,
    })
}

/// Read an outcome CSV with columns `unit_id,y`.
pub fn read_outcome(path: &Path) -> Result<(Vec<usize>, Array1<f64>), AppError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| AppError::Data(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let id_col = headers
        .iter()
        .position(|h| h == UNIT_ID_COLUMN)
        .ok_or_else(|| AppError::Data(format!("{}: missing unit_id column", path.display())))?;
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| AppError::Data(format!("{}: missing y column", path.display())))?;
    let mut ids = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AppError::Data(format!("row {}: {e}", r + 1)))?;
        let id: usize = record
            .get(id_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| AppError::Data(format!("row {}: invalid unit_id", r + 1)))?;
        let v: f64 = record
            .get(y_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| AppError::Data(format!("row {}: invalid y", r + 1)))?;
        ids.push(id);
        y.push(reject_nonfinite(v, r + 1, "y")?);
    }
    Ok((ids, Array1::from_vec(y)))
}

/// Join a design table and an outcome file into a Dataset ordered by unit
/// id; ids must be exactly 0..n−1 (any row order).
pub fn load_dataset(design_path: &Path, outcome_path: &Path) -> Result<Dataset, AppError> {
    let design = read_design(design_path)?;
    let (out_ids, y_raw) = read_outcome(outcome_path)?;
    let n = design.unit_ids.len();
    if out_ids.len() != n {
        return Err(AppError::Data(format!(
            "design has {n} rows but outcome has {}",
            out_ids.len()
        )));
    }
    let mut order = vec![usize::MAX; n];
    for (pos, &id) in design.unit_ids.iter().enumerate() {
        if id >= n {
            return Err(AppError::Data(format!(
                "unit_id {id} out of range; fit data must use ids 0..{}",
                n - 1
            )));
        }
        if order[id] != usize::MAX {
            return Err(AppError::Data(format!("duplicate unit_id {id} in design")));
        }
        order[id] = pos;
    }
    let mut y = Array1::zeros(n);
    let mut seen = vec![false; n];
    for (pos, &id) in out_ids.iter().enumerate() {
        if id >= n || seen[id] {
            return Err(AppError::Data(format!(
                "outcome unit_id {id} missing from or duplicated in design"
            )));
        }
        seen[id] = true;
        y[id] = y_raw[pos];
    }
    let p = design.feature_names.len();
    let mut x = Array2::zeros((n, p));
    let mut offsets = design.offsets.as_ref().map(|_| Array1::zeros(n));
    for id in 0..n {
        let pos = order[id];
        for j in 0..p {
            x[[id, j]] = design.x[[pos, j]];
        }
        if let (Some(o), Some(src)) = (offsets.as_mut(), design.offsets.as_ref()) {
            o[id] = src[pos];
        }
    }
    Ok(Dataset {
        unit_ids: (0..n).collect(),
        x,
        y,
        offsets,
        feature_names: design.feature_names,
    })
}

pub fn read_graph(path: &Path, min_nodes: Option<usize>) -> Result<Graph, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    Ok(Graph::parse_edge_list(&text, min_nodes)?)
}

pub fn write_graph(path: &Path, g: &Graph) -> Result<(), AppError> {
    fs::write(path, g.to_edge_list())?;
    Ok(())
}

/// Write a two-column CSV of (unit_id, value) with full float precision.
pub fn write_value_csv(
    path: &Path,
    header: &str,
    ids: &[usize],
    values: &Array1<f64>,
) -> Result<(), AppError> {
    let mut s = String::from(header);
    s.push('\n');
    for (&id, &v) in ids.iter().zip(values.iter()) {
        s.push_str(&format!("{id},{}\n", fmt_full(v)));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Write a named-value CSV of (name, value) with full float precision.
pub fn write_named_csv(
    path: &Path,
    header: &str,
    names: &[String],
    values: &Array1<f64>,
) -> Result<(), AppError> {
    let mut s = String::from(header);
    s.push('\n');
    for (name, &v) in names.iter().zip(values.iter()) {
        s.push_str(&format!("{name},{}\n", fmt_full(v)));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Write a design CSV (unit_id + features, optional offset column).
pub fn write_design_csv(
    path: &Path,
    feature_names: &[String],
    x: &Array2<f64>,
    offsets: Option<&Array1<f64>>,
) -> Result<(), AppError> {
    let mut s = String::from(UNIT_ID_COLUMN);
    if offsets.is_some() {
        s.push(',');
        s.push_str(OFFSET_COLUMN);
    }
    for name in feature_names {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for i in 0..x.nrows() {
        s.push_str(&i.to_string());
        if let Some(o) = offsets {
            s.push(',');
            s.push_str(&fmt_full(o[i]));
        }
        for j in 0..x.ncols() {
            s.push(',');
            s.push_str(&fmt_full(x[[i, j]]));
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_outcome_csv(path: &Path, y: &Array1<f64>) -> Result<(), AppError> {
    let mut s = String::from("unit_id,y\n");
    for (i, &v) in y.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", fmt_full(v)));
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn fmt_full_round_trips() {
        for v in [
            0.1,
            -1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -2.5e17,
            0.0,
        ] {
            let s = fmt_full(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn design_and_outcome_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let design = write_tmp(
            &dir,
            "design.csv",
            "unit_id,offset,a,b\n1,0.5,1.0,2.0\n0,-0.5,3.0,4.0\n",
        );
        let outcome = write_tmp(&dir, "outcome.csv", "unit_id,y\n0,7.0\n1,8.0\n");
        let ds = load_dataset(&design, &outcome).unwrap();
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        // rows reordered by unit id
        assert_eq!(ds.x[[0, 0]], 3.0);
        assert_eq!(ds.x[[1, 0]], 1.0);
        assert_eq!(ds.y[0], 7.0);
        assert_eq!(ds.offsets.as_ref().unwrap()[0], -0.5);
    }

    #[test]
    fn nan_is_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let design = write_tmp(&dir, "design.csv", "unit_id,a\n0,NaN\n");
        let err = read_design(&design).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains('a'), "{msg}");
    }

    #[test]
    fn bad_unit_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let design = write_tmp(&dir, "design.csv", "unit_id,a\n0,1.0\n5,2.0\n");
        let outcome = write_tmp(&dir, "outcome.csv", "unit_id,y\n0,1.0\n1,2.0\n");
        assert!(load_dataset(&design, &outcome).is_err());
    }
}
