//! Relationship proposals from focus weights, relationship recall@K, word
//! importance, and center-mass summaries.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionState, EntitySet};
use crate::error::{Error, Result};
use crate::focus_loss::{center_mass, TargetMatrix};
use crate::numeric::RealMatrix;
use crate::supervision::{entity_gt_matching, GroundTruthObject, DEFAULT_IOU_THRESHOLD};

/// A proposed relation between two distinct entities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationPair {
    pub subject: usize,
    pub object: usize,
    pub weight: f64,
}

/// A ground-truth relation between two annotated objects, matched without
/// regard to orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct GroundTruthRelation {
    pub subject: usize,
    pub object: usize,
}

impl From<[usize; 2]> for GroundTruthRelation {
    fn from([subject, object]: [usize; 2]) -> Self {
        Self { subject, object }
    }
}

impl From<GroundTruthRelation> for [usize; 2] {
    fn from(r: GroundTruthRelation) -> Self {
        [r.subject, r.object]
    }
}

impl GroundTruthRelation {
    pub fn unordered(&self) -> (usize, usize) {
        (self.subject.min(self.object), self.subject.max(self.object))
    }
}

/// The `k` highest-weighted off-diagonal entries, heaviest first, ties
/// broken by `(row, col)`.
///
/// Unless `ordered` is set, `(i, j)` and `(j, i)` collapse into one proposal
/// that keeps the heavier orientation (the `i < j` one on a tie).
pub fn top_k_pairs(focus_weights: &RealMatrix, k: usize, ordered: bool) -> Result<Vec<RelationPair>> {
    if !focus_weights.is_square() {
        return Err(Error::InvalidArgument {
            arg: "focus_weights",
            reason: format!(
                "expected a square matrix, got {}x{}",
                focus_weights.rows(),
                focus_weights.cols()
            ),
        });
    }
    if k < 1 {
        return Err(Error::InvalidArgument {
            arg: "k",
            reason: "must be at least 1".into(),
        });
    }
    let n = focus_weights.rows();
    let mut candidates = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = focus_weights.get(i, j);
            if !ordered {
                let mirrored = focus_weights.get(j, i);
                let keep = w > mirrored || (w == mirrored && i < j);
                if !keep {
                    continue;
                }
            }
            candidates.push(RelationPair {
                subject: i,
                object: j,
                weight: w,
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(a.subject.cmp(&b.subject))
            .then(a.object.cmp(&b.object))
    });
    candidates.truncate(k);
    Ok(candidates)
}

/// Outcome of [`relation_recall`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recall {
    pub matched: usize,
    pub total: usize,
}

impl Recall {
    /// `matched / total`, or 1.0 when there is nothing to recall.
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.total == 0
    }
}

/// Fraction of unique ground-truth relations covered by the first `k`
/// proposals. A proposal covers a relation when its two entities best-match
/// (IoU > 0.5) the relation's two objects, in either orientation.
pub fn relation_recall(
    pairs: &[RelationPair],
    entities: &EntitySet,
    gt_objects: &[GroundTruthObject],
    gt_relations: &[GroundTruthRelation],
    k: usize,
) -> Result<Recall> {
    let unique: BTreeSet<(usize, usize)> = gt_relations
        .iter()
        .filter(|r| r.subject != r.object)
        .map(GroundTruthRelation::unordered)
        .collect();
    if unique.is_empty() {
        return Ok(Recall { matched: 0, total: 0 });
    }
    let matches = entity_gt_matching(entities, gt_objects, DEFAULT_IOU_THRESHOLD)?;
    let mut covered = BTreeSet::new();
    for p in pairs.iter().take(k) {
        let (Some(Some(a)), Some(Some(b))) = (matches.get(p.subject), matches.get(p.object)) else {
            continue;
        };
        let key = ((*a).min(*b), (*a).max(*b));
        if unique.contains(&key) {
            covered.insert(key);
        }
    }
    Ok(Recall {
        matched: covered.len(),
        total: unique.len(),
    })
}

/// `beta_i = sum_j W~[j][i]`: attention mass each entity receives.
pub fn word_importance(focus_weights: &RealMatrix) -> Vec<f64> {
    focus_weights.col_sums()
}

/// Mean center-mass over instances that label at least one relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterMassSummary {
    pub mean: Option<f64>,
    pub counted: usize,
    pub excluded: usize,
}

impl CenterMassSummary {
    /// True when every instance had an empty target.
    pub fn is_vacuous(&self) -> bool {
        self.mean.is_none()
    }
}

pub fn center_mass_report(
    states: &[AttentionState],
    targets: &[TargetMatrix],
) -> Result<CenterMassSummary> {
    if states.len() != targets.len() {
        return Err(Error::InvalidArgument {
            arg: "targets",
            reason: format!("{} states but {} targets", states.len(), targets.len()),
        });
    }
    let mut total = 0.0;
    let mut counted = 0;
    for (s, t) in states.iter().zip(targets) {
        if t.has_no_relations() {
            continue;
        }
        total += center_mass(&s.focus_weights, t)?;
        counted += 1;
    }
    Ok(CenterMassSummary {
        mean: (counted > 0).then(|| total / counted as f64),
        counted,
        excluded: states.len() - counted,
    })
}

/// One row of the per-instance metric dump.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub instance_id: usize,
    pub k: usize,
    pub recall: f64,
    pub center_mass: Option<f64>,
}

/// Formats a float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `instance_id,k,recall,center_mass`; an empty center-mass field
/// marks an instance without labeled relations.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance_id", "k", "recall", "center_mass"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.instance_id.to_string(),
            r.k.to_string(),
            format_float(r.recall),
            r.center_mass.map(format_float).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(
            format!("{other:?}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{forward, AttentionParams};
    use crate::supervision::BBox;

    #[test]
    fn top_k_examples() {
        let uniform = RealMatrix::filled(2, 2, 0.25);
        let p = top_k_pairs(&uniform, 1, false).unwrap();
        assert_eq!((p.len(), p[0].subject, p[0].object), (1, 0, 1));

        let mut w = vec![0.05; 9];
        w[2 * 3] = 0.5;
        let w = RealMatrix::new(3, 3, w).unwrap();
        let p = top_k_pairs(&w, 2, false).unwrap();
        assert_eq!((p[0].subject, p[0].object), (2, 0));

        let p = top_k_pairs(&RealMatrix::filled(4, 4, 1.0 / 16.0), 100, false).unwrap();
        assert_eq!(p.len(), 6);
        let p = top_k_pairs(&RealMatrix::filled(4, 4, 1.0 / 16.0), 100, true).unwrap();
        assert_eq!(p.len(), 12);

        assert!(top_k_pairs(&uniform, 0, false).is_err());
        assert!(top_k_pairs(&RealMatrix::zeros(2, 3), 1, false).is_err());
    }

    #[test]
    fn top_k_ties_are_lexicographic() {
        let w = RealMatrix::from_rows(&[
            vec![0.0, 0.1, 0.2],
            vec![0.2, 0.0, 0.1],
            vec![0.1, 0.2, 0.0],
        ])
        .unwrap();
        let p = top_k_pairs(&w, 3, false).unwrap();
        let got: Vec<_> = p.iter().map(|p| (p.subject, p.object)).collect();
        assert_eq!(got, vec![(0, 2), (1, 0), (2, 1)]);
    }

    fn unit_grid(n: usize) -> (EntitySet, Vec<GroundTruthObject>) {
        let boxes: Vec<BBox> = (0..n)
            .map(|i| BBox::new(2.0 * i as f64, 0.0, 2.0 * i as f64 + 1.0, 1.0).unwrap())
            .collect();
        let gt = boxes
            .iter()
            .map(|&bbox| GroundTruthObject { bbox, category: 0 })
            .collect();
        let e = EntitySet::new(RealMatrix::zeros(n, 1)).with_boxes(boxes).unwrap();
        (e, gt)
    }

    #[test]
    fn recall_examples() {
        let (e, gt) = unit_grid(4);
        let rels = [GroundTruthRelation::from([0, 1]), GroundTruthRelation::from([3, 2])];
        let exact = [
            RelationPair { subject: 1, object: 0, weight: 0.5 },
            RelationPair { subject: 2, object: 3, weight: 0.4 },
        ];
        assert_eq!(relation_recall(&exact, &e, &gt, &rels, 2).unwrap().value(), 1.0);
        assert_eq!(relation_recall(&exact, &e, &gt, &rels, 1).unwrap().value(), 0.5);

        let dup = [GroundTruthRelation::from([0, 1]), GroundTruthRelation::from([1, 0])];
        let r = relation_recall(&exact, &e, &gt, &dup, 5).unwrap();
        assert_eq!((r.matched, r.total), (1, 1));

        let r = relation_recall(&exact, &e, &gt, &[], 5).unwrap();
        assert!(r.is_vacuous());
        assert_eq!(r.value(), 1.0);
    }

    #[test]
    fn word_importance_examples() {
        assert_eq!(word_importance(&RealMatrix::filled(2, 2, 0.25)), vec![0.5, 0.5]);
        let point = RealMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(word_importance(&point), vec![0.0, 1.0]);
        for b in word_importance(&RealMatrix::filled(3, 3, 1.0 / 9.0)) {
            assert!((b - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn center_mass_report_examples() {
        let zero = EntitySet::new(RealMatrix::zeros(3, 2));
        let s = forward(&zero, &AttentionParams::init(2, 2, 0)).unwrap();
        let t = TargetMatrix::from_pairs(3, &[(0, 1), (1, 0)]).unwrap();
        let r = center_mass_report(std::slice::from_ref(&s), std::slice::from_ref(&t)).unwrap();
        assert!((r.mean.unwrap() - 2.0 / 9.0).abs() < 1e-15);

        let r = center_mass_report(&[s.clone(), s.clone()], &vec![TargetMatrix::zeros(3); 2]).unwrap();
        assert!(r.is_vacuous());
        assert_eq!(r.excluded, 2);

        assert!(center_mass_report(&[s], &[]).is_err());
    }

    #[test]
    fn metrics_csv_layout() {
        let rows = [
            MetricRow { instance_id: 0, k: 5, recall: 0.5, center_mass: Some(2.0 / 9.0) },
            MetricRow { instance_id: 1, k: 5, recall: 1.0, center_mass: None },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "instance_id,k,recall,center_mass\n\
             0,5,5.0000000000000000e-1,2.2222222222222221e-1\n\
             1,5,1.0000000000000000e0,\n"
        );
        let parsed: f64 = "2.2222222222222221e-1".parse().unwrap();
        assert_eq!(parsed, 2.0 / 9.0);
    }
}
