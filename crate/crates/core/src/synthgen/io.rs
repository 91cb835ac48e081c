//! JSONL dataset files: one instance per line.
//!
//! ```text
//! {"id":0,"entities":{"features":[[..],..],"boxes":[[x1,y1,x2,y2],..],"categories":[..]},
//!  "target":[[m,n],..],"gt_objects":[{"box":[..],"category":c},..],
//!  "gt_relations":[[a,b],..],"label":k}
//! ```
//!
//! `target` lists the positions of ones. `gt_objects` may be omitted, in
//! which case each boxed entity is its own ground-truth object.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::Instance;
use crate::attention::EntitySet;
use crate::error::{Error, Result};
use crate::focus_loss::TargetMatrix;
use crate::metrics::GroundTruthRelation;
use crate::numeric::RealMatrix;
use crate::supervision::{BBox, GroundTruthObject, LexicalCategory};

#[derive(Serialize, Deserialize)]
struct EntitiesRecord {
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boxes: Option<Vec<BBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<usize>,
    entities: EntitiesRecord,
    target: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_objects: Option<Vec<GroundTruthObject>>,
    #[serde(default)]
    gt_relations: Vec<GroundTruthRelation>,
    label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tags: Option<Vec<LexicalCategory>>,
}

impl InstanceRecord {
    fn from_instance(id: usize, inst: &Instance) -> Self {
        Self {
            id: Some(id),
            entities: EntitiesRecord {
                features: inst.entities.features().to_rows(),
                boxes: inst.entities.boxes().map(<[BBox]>::to_vec),
                categories: inst.entities.categories().map(<[usize]>::to_vec),
            },
            target: inst.target.pairs().into_iter().map(|(a, b)| [a, b]).collect(),
            gt_objects: Some(inst.gt_objects.clone()),
            gt_relations: inst.gt_relations.clone(),
            label: inst.label,
            tokens: inst.tokens.clone(),
            tags: inst.tags.clone(),
        }
    }

    fn into_instance(self) -> Result<Instance> {
        let features = RealMatrix::from_rows(&self.entities.features)?;
        let n = features.rows();
        let mut entities = EntitySet::new(features);
        if let Some(b) = self.entities.boxes {
            entities = entities.with_boxes(b)?;
        }
        if let Some(c) = self.entities.categories {
            entities = entities.with_categories(c)?;
        }
        let pairs: Vec<(usize, usize)> = self.target.iter().map(|&[a, b]| (a, b)).collect();
        let target = TargetMatrix::from_pairs(n, &pairs)?;
        let gt_objects = match self.gt_objects {
            Some(g) => g,
            None => match entities.boxes() {
                Some(boxes) => boxes
                    .iter()
                    .enumerate()
                    .map(|(i, &bbox)| GroundTruthObject {
                        bbox,
                        category: entities.categories().map_or(0, |c| c[i]),
                    })
                    .collect(),
                None => Vec::new(),
            },
        };
        if let Some(r) = self
            .gt_relations
            .iter()
            .find(|r| r.subject >= gt_objects.len() || r.object >= gt_objects.len())
        {
            return Err(Error::InvalidArgument {
                arg: "gt_relations",
                reason: format!(
                    "relation [{}, {}] refers past {} ground-truth objects",
                    r.subject,
                    r.object,
                    gt_objects.len()
                ),
            });
        }
        for (name, len) in [
            ("tokens", self.tokens.as_ref().map(Vec::len)),
            ("tags", self.tags.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len.filter(|&l| l != n) {
                return Err(Error::InvalidArgument {
                    arg: name,
                    reason: format!("expected {n} entries, got {len}"),
                });
            }
        }
        Ok(Instance {
            entities,
            target,
            gt_objects,
            gt_relations: self.gt_relations,
            label: self.label,
            tokens: self.tokens,
            tags: self.tags,
        })
    }
}

/// Serializes one instance as a single JSON line (no trailing newline).
pub fn instance_to_json(id: usize, inst: &Instance) -> Result<String> {
    Ok(serde_json::to_string(&InstanceRecord::from_instance(id, inst))?)
}

pub fn instance_from_json(line: &str) -> Result<Instance> {
    serde_json::from_str::<InstanceRecord>(line)?.into_instance()
}

pub fn write_jsonl<W: Write>(mut out: W, instances: &[Instance]) -> Result<()> {
    for (i, inst) in instances.iter().enumerate() {
        writeln!(out, "{}", instance_to_json(i, inst)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset, reporting the 1-based line of the first bad record.
/// Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R, source_name: &str) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = instance_from_json(&line).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}
