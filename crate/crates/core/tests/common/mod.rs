#![allow(dead_code)]

pub mod recall_oracle;

use fan_core::numeric::RealMatrix;
use fan_core::synthgen::{generate_instance, Instance, SceneRule, WorldSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Four entities in three dimensions, three scene labels.
pub fn tiny_world() -> WorldSpec {
    let c = 6;
    let mut affinity = vec![vec![0u8; c]; c];
    for (a, b) in [(0, 1), (2, 3), (4, 5), (1, 4)] {
        affinity[a][b] = 1;
        affinity[b][a] = 1;
    }
    WorldSpec {
        num_categories: c,
        embed_dim: 3,
        prototypes: None,
        prototype_seed: 5,
        affinity,
        noise_sigma: 0.5,
        entities_per_instance: [4, 4],
        num_scene_labels: 3,
        scene_rule: vec![
            SceneRule { pair: [0, 1], label: 0 },
            SceneRule { pair: [2, 3], label: 1 },
            SceneRule { pair: [4, 5], label: 2 },
        ],
        filler_categories: None,
    }
}

pub fn tiny_instance(seed: u64) -> Instance {
    generate_instance(&tiny_world(), seed).unwrap()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
