//! Deterministic synthetic co-occurrence tasks.
//!
//! A [`WorldSpec`] fixes category prototypes, which category pairs are
//! related, and which planted pair decides the scene label. Every instance
//! is a pure function of `(spec, seed)`; see [`rng`] for the stream
//! algorithm.

pub mod io;
pub mod rng;

use serde::{Deserialize, Serialize};

use crate::attention::EntitySet;
use crate::error::{invalid_field, Result};
use crate::focus_loss::TargetMatrix;
use crate::metrics::GroundTruthRelation;
use crate::numeric::RealMatrix;
use crate::supervision::{
    build_language_target, BBox, GroundTruthObject, LanguageMode, LexicalCategory,
    LexicalPairTable,
};

pub use rng::CounterRng;

/// A planted category pair and the label it implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRule {
    pub pair: [usize; 2],
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub num_categories: usize,
    pub embed_dim: usize,
    /// `num_categories x embed_dim`. When absent, drawn as standard normal
    /// entries from `CounterRng::new(prototype_seed)`, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototypes: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub prototype_seed: u64,
    /// Symmetric 0/1 matrix over categories; 1 marks related categories.
    pub affinity: Vec<Vec<u8>>,
    pub noise_sigma: f64,
    /// Inclusive `[min, max]` entity count.
    pub entities_per_instance: [usize; 2],
    pub num_scene_labels: usize,
    /// The first rule (in order) whose pair is present decides the label.
    pub scene_rule: Vec<SceneRule>,
    /// Categories used to fill an instance after planting a rule pair.
    /// Defaults to every category.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filler_categories: Option<Vec<usize>>,
}

impl WorldSpec {
    /// The bundled demo world: 12 categories in 16 dimensions and three
    /// scene labels. Each label is planted by one related category pair;
    /// the six filler categories relate to nothing.
    pub fn demo() -> Self {
        let c = 12;
        let mut affinity = vec![vec![0u8; c]; c];
        for (a, b) in [(0, 1), (2, 3), (4, 5)] {
            affinity[a][b] = 1;
            affinity[b][a] = 1;
        }
        Self {
            num_categories: c,
            embed_dim: 16,
            prototypes: None,
            prototype_seed: 2019,
            affinity,
            noise_sigma: 0.3,
            entities_per_instance: [8, 12],
            num_scene_labels: 3,
            scene_rule: vec![
                SceneRule { pair: [0, 1], label: 0 },
                SceneRule { pair: [2, 3], label: 1 },
                SceneRule { pair: [4, 5], label: 2 },
            ],
            filler_categories: Some((6..12).collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_categories;
        if c == 0 {
            return Err(invalid_field("num_categories", "must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(invalid_field("embed_dim", "must be at least 1"));
        }
        if let Some(p) = &self.prototypes {
            if p.len() != c {
                return Err(invalid_field(
                    "prototypes",
                    format!("expected {c} rows, got {}", p.len()),
                ));
            }
            for (i, row) in p.iter().enumerate() {
                if row.len() != self.embed_dim {
                    return Err(invalid_field(
                        format!("prototypes[{i}]"),
                        format!("expected {} values, got {}", self.embed_dim, row.len()),
                    ));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(invalid_field(format!("prototypes[{i}]"), "non-finite value"));
                }
            }
        }
        if self.affinity.len() != c || self.affinity.iter().any(|r| r.len() != c) {
            return Err(invalid_field("affinity", format!("expected a {c}x{c} matrix")));
        }
        for i in 0..c {
            if self.affinity[i][i] != 0 {
                return Err(invalid_field("affinity", format!("diagonal entry {i} must be 0")));
            }
            for j in 0..c {
                let v = self.affinity[i][j];
                if v > 1 {
                    return Err(invalid_field("affinity", format!("entry ({i}, {j}) is not 0/1")));
                }
                if v != self.affinity[j][i] {
                    return Err(invalid_field(
                        "affinity",
                        format!("not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid_field("noise_sigma", "must be finite and non-negative"));
        }
        let [lo, hi] = self.entities_per_instance;
        if lo < 2 || lo > hi {
            return Err(invalid_field(
                "entities_per_instance",
                format!("need 2 <= min <= max, got [{lo}, {hi}]"),
            ));
        }
        if self.num_scene_labels == 0 {
            return Err(invalid_field("num_scene_labels", "must be at least 1"));
        }
        for (i, rule) in self.scene_rule.iter().enumerate() {
            if rule.pair.iter().any(|&p| p >= c) || rule.pair[0] == rule.pair[1] {
                return Err(invalid_field(
                    format!("scene_rule[{i}].pair"),
                    format!("{:?} must name two distinct categories below {c}", rule.pair),
                ));
            }
            if rule.label >= self.num_scene_labels {
                return Err(invalid_field(
                    format!("scene_rule[{i}].label"),
                    format!("{} >= num_scene_labels {}", rule.label, self.num_scene_labels),
                ));
            }
        }
        if let Some(f) = &self.filler_categories {
            if f.is_empty() || f.iter().any(|&x| x >= c) {
                return Err(invalid_field(
                    "filler_categories",
                    format!("must be a non-empty list of categories below {c}"),
                ));
            }
        }
        Ok(())
    }

    /// The prototype matrix, generating it from `prototype_seed` if needed.
    pub fn prototype_matrix(&self) -> Result<RealMatrix> {
        match &self.prototypes {
            Some(rows) => RealMatrix::from_rows(rows),
            None => {
                let mut rng = CounterRng::new(self.prototype_seed);
                Ok(RealMatrix::from_fn(self.num_categories, self.embed_dim, |_, _| {
                    rng.gaussian()
                }))
            }
        }
    }

    fn fillers(&self) -> Vec<usize> {
        self.filler_categories
            .clone()
            .unwrap_or_else(|| (0..self.num_categories).collect())
    }

    /// Label of the first rule whose categories both occur, else 0.
    pub fn scene_label(&self, categories: &[usize]) -> usize {
        self.scene_rule
            .iter()
            .find(|r| r.pair.iter().all(|p| categories.contains(p)))
            .map_or(0, |r| r.label)
    }
}

/// One generated example.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub entities: EntitySet,
    pub target: TargetMatrix,
    pub gt_objects: Vec<GroundTruthObject>,
    pub gt_relations: Vec<GroundTruthRelation>,
    pub label: usize,
    /// Token ids and lexical tags for document instances.
    pub tokens: Option<Vec<u32>>,
    pub tags: Option<Vec<LexicalCategory>>,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same instance with entities reordered (`i`-th becomes `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        Self {
            entities: self.entities.permuted(perm),
            target: self.target.permuted(perm),
            gt_objects: self.gt_objects.clone(),
            gt_relations: self.gt_relations.clone(),
            label: self.label,
            tokens: self.tokens.as_ref().map(|t| perm.iter().map(|&i| t[i]).collect()),
            tags: self.tags.as_ref().map(|t| perm.iter().map(|&i| t[i]).collect()),
        }
    }
}

/// Unit squares on a grid with one empty cell between neighbours, so
/// distinct entities never overlap.
pub fn grid_boxes(n: usize) -> Vec<BBox> {
    let width = (n as f64).sqrt().ceil().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let (x, y) = ((2 * (i % width)) as f64, (2 * (i / width)) as f64);
            BBox { x1: x, y1: y, x2: x + 1.0, y2: y + 1.0 }
        })
        .collect()
}

/// Samples entity categories: one scene rule's pair is planted at random
/// positions, the rest come from the filler categories.
fn sample_categories(spec: &WorldSpec, rng: &mut CounterRng) -> Vec<usize> {
    let [lo, hi] = spec.entities_per_instance;
    let n = rng.range_inclusive(lo, hi);
    let fillers = spec.fillers();
    let mut cats: Vec<usize> = (0..n).map(|_| fillers[rng.below(fillers.len())]).collect();
    if !spec.scene_rule.is_empty() {
        let rule = spec.scene_rule[rng.below(spec.scene_rule.len())];
        let first = rng.below(n);
        let mut second = rng.below(n - 1);
        if second >= first {
            second += 1;
        }
        cats[first] = rule.pair[0];
        cats[second] = rule.pair[1];
    }
    cats
}

fn noisy_features(
    spec: &WorldSpec,
    prototypes: &RealMatrix,
    cats: &[usize],
    rng: &mut CounterRng,
) -> RealMatrix {
    RealMatrix::from_fn(cats.len(), spec.embed_dim, |r, c| {
        let noise = if spec.noise_sigma > 0.0 {
            spec.noise_sigma * rng.gaussian()
        } else {
            0.0
        };
        prototypes.get(cats[r], c) + noise
    })
}

fn assemble(
    cats: Vec<usize>,
    features: RealMatrix,
    target: TargetMatrix,
    label: usize,
) -> Result<Instance> {
    let boxes = grid_boxes(cats.len());
    let gt_objects = boxes
        .iter()
        .zip(&cats)
        .map(|(&bbox, &category)| GroundTruthObject { bbox, category })
        .collect();
    let gt_relations = target
        .pairs()
        .into_iter()
        .filter(|&(a, b)| a < b)
        .map(|(a, b)| GroundTruthRelation { subject: a, object: b })
        .collect();
    let entities = EntitySet::new(features)
        .with_boxes(boxes)?
        .with_categories(cats)?;
    Ok(Instance {
        entities,
        target,
        gt_objects,
        gt_relations,
        label,
        tokens: None,
        tags: None,
    })
}

pub fn generate_instance(spec: &WorldSpec, seed: u64) -> Result<Instance> {
    generate_instance_from(spec, &spec.prototype_matrix()?, CounterRng::new(seed))
}

/// Generates from an explicit stream with already-resolved prototypes.
pub fn generate_instance_from(
    spec: &WorldSpec,
    prototypes: &RealMatrix,
    mut rng: CounterRng,
) -> Result<Instance> {
    spec.validate()?;
    let cats = sample_categories(spec, &mut rng);
    let features = noisy_features(spec, prototypes, &cats, &mut rng);
    let n = cats.len();
    let t = RealMatrix::from_fn(n, n, |a, b| {
        if a != b && spec.affinity[cats[a]][cats[b]] == 1 {
            1.0
        } else {
            0.0
        }
    });
    let label = spec.scene_label(&cats);
    assemble(cats, features, TargetMatrix::new(t)?, label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub train_label_counts: Vec<usize>,
    pub test_label_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl Dataset {
    pub fn summary(&self, num_labels: usize) -> DatasetSummary {
        let counts = |xs: &[Instance]| {
            let mut c = vec![0; num_labels];
            for x in xs {
                if x.label >= c.len() {
                    c.resize(x.label + 1, 0);
                }
                c[x.label] += 1;
            }
            c
        };
        DatasetSummary {
            n_train: self.train.len(),
            n_test: self.test.len(),
            train_label_counts: counts(&self.train),
            test_label_counts: counts(&self.test),
        }
    }
}

/// Train and test instances come from the disjoint child streams 0 and 1 of
/// `CounterRng::new(seed)`; instance `i` uses child `i` of its split.
pub fn generate_dataset(spec: &WorldSpec, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    check_counts(n_train, n_test)?;
    spec.validate()?;
    let prototypes = spec.prototype_matrix()?;
    split_streams(seed, n_train, n_test, |rng| generate_instance_from(spec, &prototypes, rng))
}

fn check_counts(n_train: usize, n_test: usize) -> Result<()> {
    if n_train == 0 {
        return Err(invalid_field("n_train", "must be at least 1"));
    }
    if n_test == 0 {
        return Err(invalid_field("n_test", "must be at least 1"));
    }
    Ok(())
}

fn split_streams(
    seed: u64,
    n_train: usize,
    n_test: usize,
    generate: impl Fn(CounterRng) -> Result<Instance>,
) -> Result<Dataset> {
    let root = CounterRng::new(seed);
    let split = |stream: u64, count: usize| -> Result<Vec<Instance>> {
        let s = root.split(stream);
        (0..count).map(|i| generate(s.split(i as u64))).collect()
    };
    Ok(Dataset {
        train: split(0, n_train)?,
        test: split(1, n_test)?,
    })
}

/// A world whose categories are words: category id = token id, each with a
/// lexical tag. Scene rules act as keyword-pair rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentSpec {
    pub world: WorldSpec,
    /// Lexical tag of every token id.
    pub lexicon: Vec<LexicalCategory>,
    /// Valid tag pairs; the standard table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_table: Option<Vec<[LexicalCategory; 2]>>,
}

impl DocumentSpec {
    pub fn demo() -> Self {
        use LexicalCategory::*;
        let world = WorldSpec::demo();
        let lexicon = vec![
            Noun, Verb, Adverb, Adjective, Noun, Adjective, Determiner, Noun, Preposition, Verb,
            Conjunction, Pronoun,
        ];
        Self {
            world,
            lexicon,
            pair_table: None,
        }
    }

    pub fn table(&self) -> LexicalPairTable {
        match &self.pair_table {
            Some(p) => p.iter().map(|[a, b]| (*a, *b)).collect(),
            None => LexicalPairTable::standard(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.lexicon.len() != self.world.num_categories {
            return Err(invalid_field(
                "lexicon",
                format!(
                    "expected {} tags, got {}",
                    self.world.num_categories,
                    self.lexicon.len()
                ),
            ));
        }
        Ok(())
    }
}

/// A token sequence with semantic supervision and a keyword-pair label.
pub fn generate_document_instance(spec: &DocumentSpec, seed: u64) -> Result<Instance> {
    spec.validate()?;
    let prototypes = spec.world.prototype_matrix()?;
    generate_document_from(spec, &prototypes, &spec.table(), CounterRng::new(seed))
}

fn generate_document_from(
    spec: &DocumentSpec,
    prototypes: &RealMatrix,
    table: &LexicalPairTable,
    mut rng: CounterRng,
) -> Result<Instance> {
    let world = &spec.world;
    let cats = sample_categories(world, &mut rng);
    let features = noisy_features(world, prototypes, &cats, &mut rng);
    let tokens: Vec<u32> = cats.iter().map(|&c| c as u32).collect();
    let tags: Vec<LexicalCategory> = cats.iter().map(|&c| spec.lexicon[c]).collect();
    let target = build_language_target(&tags, Some(&tokens), table, LanguageMode::Semantic)?;
    let label = world.scene_label(&cats);
    let mut inst = assemble(cats, features, target, label)?;
    inst.tokens = Some(tokens);
    inst.tags = Some(tags);
    Ok(inst)
}

/// Document counterpart of [`generate_dataset`], with the same stream layout.
pub fn generate_document_dataset(
    spec: &DocumentSpec,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Dataset> {
    check_counts(n_train, n_test)?;
    spec.validate()?;
    let prototypes = spec.world.prototype_matrix()?;
    let table = spec.table();
    split_streams(seed, n_train, n_test, |rng| {
        generate_document_from(spec, &prototypes, &table, rng)
    })
}
