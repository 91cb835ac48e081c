use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::TrainConfig;
use super::{train, TrainReport};
use crate::error::{invalid_field, Error, Result};
use crate::metrics::{csv_err, format_float};
use crate::synthgen::Instance;

/// One swept configuration field. `field` is a dotted path into the
/// config JSON, e.g. `focal_r` or `optimizer.lr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub field: String,
    pub values: Vec<Value>,
}

/// Cartesian product of axes; the first axis varies slowest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    pub axes: Vec<GridAxis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub id: String,
    pub overrides: Vec<(String, Value)>,
    pub config: TrainConfig,
}

impl AblationCell {
    pub fn label(&self) -> String {
        self.overrides
            .iter()
            .map(|(f, v)| format!("{f}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| invalid_field(path, format!("`{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(invalid_field(path, "no such configuration field"));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .get_mut(*part)
            .ok_or_else(|| invalid_field(path, "no such configuration field"))?;
    }
    unreachable!("split yields at least one part")
}

/// Applies `(path, value)` overrides to a config, validating the result.
pub fn apply_overrides(base: &TrainConfig, overrides: &[(String, Value)]) -> Result<TrainConfig> {
    let mut v = serde_json::to_value(base)?;
    for (path, value) in overrides {
        set_path(&mut v, path, value.clone())?;
    }
    let cfg: TrainConfig = serde_json::from_value(v).map_err(|e| {
        let fields: Vec<&str> = overrides.iter().map(|(f, _)| f.as_str()).collect();
        invalid_field(fields.join(","), e.to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl AblationGrid {
    /// Expands the grid against `base`. An empty grid, or any axis without
    /// values, yields no cells.
    pub fn cells(&self, base: &TrainConfig) -> Result<Vec<AblationCell>> {
        if self.axes.is_empty() || self.axes.iter().any(|a| a.values.is_empty()) {
            return Ok(Vec::new());
        }
        let total: usize = self.axes.iter().map(|a| a.values.len()).product();
        let mut cells = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut overrides = vec![(String::new(), Value::Null); self.axes.len()];
            for (slot, axis) in overrides.iter_mut().zip(&self.axes).rev() {
                let n = axis.values.len();
                *slot = (axis.field.clone(), axis.values[rem % n].clone());
                rem /= n;
            }
            let id = format!("c{idx:03}");
            let config = apply_overrides(base, &overrides).map_err(|e| Error::Cell {
                cell: id.clone(),
                source: Box::new(e),
            })?;
            cells.push(AblationCell { id, overrides, config });
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub cell: AblationCell,
    pub report: TrainReport,
}

/// Trains every cell, up to `jobs` at a time. `sink` sees results in cell
/// order regardless of which finishes first; an error stops the sweep
/// after the results before it have been delivered.
pub fn ablate(
    cells: &[AblationCell],
    train_set: &[Instance],
    test_set: &[Instance],
    jobs: usize,
    mut sink: impl FnMut(&AblationResult) -> Result<()>,
) -> Result<()> {
    for chunk in cells.chunks(jobs.max(1)) {
        let results: Vec<Result<AblationResult>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|cell| {
                    scope.spawn(move || {
                        train(train_set, test_set, &cell.config)
                            .map(|o| AblationResult {
                                cell: cell.clone(),
                                report: o.report,
                            })
                            .map_err(|e| Error::Cell {
                                cell: cell.id.clone(),
                                source: Box::new(e),
                            })
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("ablation worker panicked"))
                .collect()
        });
        for r in results {
            sink(&r?)?;
        }
    }
    Ok(())
}

pub fn ablation_csv_header(recall_k: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = [
        "cell",
        "overrides",
        "epochs",
        "combined_loss",
        "train_center_mass",
        "test_center_mass",
        "train_accuracy",
        "test_accuracy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(recall_k.iter().map(|k| format!("test_recall@{k}")));
    h
}

impl AblationResult {
    /// Final-epoch metrics, columns matching [`ablation_csv_header`].
    pub fn csv_record(&self, recall_k: &[usize]) -> Vec<String> {
        let last = self.report.last();
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        let test = last.test.as_ref();
        let mut rec = vec![
            self.cell.id.clone(),
            self.cell.label(),
            self.report.epochs.len().to_string(),
            format_float(last.train.combined_loss),
            opt(last.train.center_mass),
            opt(test.and_then(|t| t.center_mass)),
            format_float(last.train.accuracy),
            opt(test.map(|t| t.accuracy)),
        ];
        for k in recall_k {
            rec.push(opt(test.and_then(|t| t.recall.iter().find(|r| r.k == *k)).map(|r| r.recall)));
        }
        rec
    }

    /// Long-format `cell,k,recall` rows for the final epoch.
    pub fn curve_records(&self) -> Vec<Vec<String>> {
        self.report
            .last()
            .test
            .iter()
            .flat_map(|t| t.recall.iter())
            .map(|r| vec![self.cell.id.clone(), r.k.to_string(), format_float(r.recall)])
            .collect()
    }
}

/// Writes the one-row-per-cell comparison table.
pub fn write_ablation_csv<W: Write>(out: W, results: &[AblationResult], recall_k: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ablation_csv_header(recall_k)).map_err(csv_err)?;
    for r in results {
        w.write_record(r.csv_record(recall_k)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_recall_curves_csv<W: Write>(out: W, results: &[AblationResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "k", "recall"]).map_err(csv_err)?;
    for r in results {
        for rec in r.curve_records() {
            w.write_record(rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn grid(axes: Value) -> AblationGrid {
        serde_json::from_value(json!({ "axes": axes })).unwrap()
    }

    #[test]
    fn cartesian_expansion() {
        let g = grid(json!([
            {"field": "focal_r", "values": [0, 1, 2, 3, 4]},
        ]));
        let cells = g.cells(&TrainConfig::default()).unwrap();
        assert_eq!(cells.len(), 5);
        assert_eq!(cells[3].config.focal_r, 3);

        let g = grid(json!([
            {"field": "strategy", "values": ["unsup", "row", "mat", "mat_focal"]},
            {"field": "optimizer.lr", "values": [0.01, 0.02]},
        ]));
        let cells = g.cells(&TrainConfig::default()).unwrap();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[1].label(), "strategy=\"unsup\";optimizer.lr=0.02");
        assert_eq!(cells[1].config.optimizer.lr(), 0.02);
    }

    #[test]
    fn empty_grid_has_no_cells() {
        assert!(AblationGrid::default().cells(&TrainConfig::default()).unwrap().is_empty());
        let g = grid(json!([{"field": "focal_r", "values": []}]));
        assert!(g.cells(&TrainConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn bad_overrides_identify_cell_and_field() {
        let g = grid(json!([{"field": "focal_r", "values": [2, 9]}]));
        let err = g.cells(&TrainConfig::default()).unwrap_err().to_string();
        assert!(err.contains("c001") && err.contains("focal_r"), "{err}");
        let g = grid(json!([{"field": "nope", "values": [1]}]));
        assert!(g.cells(&TrainConfig::default()).unwrap_err().to_string().contains("nope"));
    }
}
