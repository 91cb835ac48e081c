//! Brute-force reference for relation recall, written directly from the
//! definition with no shared code paths.

use fan_core::attention::EntitySet;
use fan_core::metrics::{GroundTruthRelation, Recall};
use fan_core::numeric::RealMatrix;
use fan_core::supervision::{BBox, GroundTruthObject};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// The kept orientation of an unordered pair: the heavier direction, or
/// `(min, max)` when both directions weigh the same.
fn kept(w: &RealMatrix, i: usize, j: usize) -> (f64, usize, usize) {
    let (a, b) = (w.get(i, j), w.get(j, i));
    if a > b || (a == b && i < j) {
        (a, i, j)
    } else {
        (b, j, i)
    }
}

/// Whether the unordered pair `{i, j}` ranks among the first `k` proposals:
/// fewer than `k` other pairs beat it on weight, then on (row, col).
fn in_top_k(w: &RealMatrix, i: usize, j: usize, k: usize) -> bool {
    let n = w.rows();
    let (mine, mr, mc) = kept(w, i, j);
    let mut better = 0;
    for a in 0..n {
        for b in a + 1..n {
            if (a, b) == (i.min(j), i.max(j)) {
                continue;
            }
            let (s, r, c) = kept(w, a, b);
            if s > mine || (s == mine && (r, c) < (mr, mc)) {
                better += 1;
            }
        }
    }
    better < k
}

fn best_match(b: &BBox, gt: &[GroundTruthObject]) -> Option<usize> {
    let mut best = None;
    let mut best_iou = f64::NEG_INFINITY;
    for (g, o) in gt.iter().enumerate() {
        let v = overlap(b, &o.bbox);
        if v > best_iou {
            best_iou = v;
            best = Some(g);
        }
    }
    best.filter(|_| best_iou > 0.5)
}

pub fn brute_force_recall(
    w: &RealMatrix,
    boxes: &[BBox],
    gt: &[GroundTruthObject],
    relations: &[GroundTruthRelation],
    k: usize,
) -> Recall {
    let n = w.rows();
    let mut unique: Vec<(usize, usize)> = Vec::new();
    for r in relations {
        if r.subject == r.object {
            continue;
        }
        let key = (r.subject.min(r.object), r.subject.max(r.object));
        if !unique.contains(&key) {
            unique.push(key);
        }
    }
    let mut matched = 0;
    for &(ga, gb) in &unique {
        let mut hit = false;
        for i in 0..n {
            for j in i + 1..n {
                if !in_top_k(w, i, j, k) {
                    continue;
                }
                let (mi, mj) = (best_match(&boxes[i], gt), best_match(&boxes[j], gt));
                if (mi, mj) == (Some(ga), Some(gb)) || (mi, mj) == (Some(gb), Some(ga)) {
                    hit = true;
                }
            }
        }
        matched += usize::from(hit);
    }
    Recall { matched, total: unique.len() }
}

pub struct RandomCase {
    pub focus: RealMatrix,
    pub entities: EntitySet,
    pub gt: Vec<GroundTruthObject>,
    pub relations: Vec<GroundTruthRelation>,
}

/// Boxes snap to a coarse lattice so exact overlaps, partial overlaps and
/// tied IoUs all occur; weights are quantized so ranking ties occur too.
pub fn random_case(r: &mut ChaCha8Rng) -> RandomCase {
    let n = r.gen_range(1..=6);
    let g = r.gen_range(1..=5);
    let lattice_box = |r: &mut ChaCha8Rng| {
        let x = f64::from(r.gen_range(0..4u8)) * 0.5;
        let y = f64::from(r.gen_range(0..2u8)) * 0.5;
        let s = [1.0, 1.0, 1.5][r.gen_range(0..3)];
        BBox::new(x, y, x + s, y + 1.0).unwrap()
    };
    let gt: Vec<GroundTruthObject> = (0..g)
        .map(|c| GroundTruthObject { bbox: lattice_box(r), category: c % 3 })
        .collect();
    let boxes: Vec<BBox> = (0..n).map(|_| lattice_box(r)).collect();
    let raw = RealMatrix::from_fn(n, n, |_, _| f64::from(r.gen_range(0..5u8)));
    let total = raw.sum().max(1.0);
    let focus = raw.scale(1.0 / total);
    let relations = (0..r.gen_range(0..6))
        .map(|_| GroundTruthRelation { subject: r.gen_range(0..g), object: r.gen_range(0..g) })
        .collect();
    let entities = EntitySet::new(RealMatrix::zeros(n, 1)).with_boxes(boxes).unwrap();
    RandomCase { focus, entities, gt, relations }
}
