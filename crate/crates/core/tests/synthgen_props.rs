mod common;

use std::collections::HashSet;

use fan_core::synthgen::io::{read_jsonl, write_jsonl};
use fan_core::synthgen::{
    generate_dataset, generate_document_instance, generate_instance, CounterRng, DocumentSpec,
    WorldSpec,
};

fn fingerprint(inst: &fan_core::synthgen::Instance) -> Vec<u64> {
    inst.entities.features().data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn generation_is_a_pure_function_of_spec_and_seed() {
    let spec = WorldSpec::demo();
    let a = generate_dataset(&spec, 20, 10, 3).unwrap();
    let b = generate_dataset(&spec, 20, 10, 3).unwrap();
    assert_eq!(a, b);
    let c = generate_dataset(&spec, 20, 10, 4).unwrap();
    assert_ne!(a, c);
    let mut x = Vec::new();
    let mut y = Vec::new();
    write_jsonl(&mut x, &a.train).unwrap();
    write_jsonl(&mut y, &b.train).unwrap();
    assert_eq!(x, y);
}

#[test]
fn prefixes_are_stable_across_dataset_sizes() {
    let spec = WorldSpec::demo();
    let small = generate_dataset(&spec, 5, 5, 11).unwrap();
    let large = generate_dataset(&spec, 50, 30, 11).unwrap();
    assert_eq!(small.train[..], large.train[..5]);
    assert_eq!(small.test[..], large.test[..5]);
}

#[test]
fn no_duplicate_instances_across_splits() {
    let ds = generate_dataset(&WorldSpec::demo(), 200, 100, 0).unwrap();
    let mut seen = HashSet::new();
    for inst in ds.train.iter().chain(&ds.test) {
        assert!(seen.insert(fingerprint(inst)), "duplicate instance");
    }
}

#[test]
fn split_streams_do_not_collide() {
    let root = CounterRng::new(0);
    let mut seen = HashSet::new();
    for stream in 0..4 {
        let s = root.split(stream);
        for i in 0..500 {
            let mut r = s.split(i);
            for _ in 0..4 {
                assert!(seen.insert(r.next_u64()), "collision in stream {stream} child {i}");
            }
        }
    }
}

#[test]
fn every_instance_plants_its_scene_pair() {
    let spec = WorldSpec::demo();
    let ds = generate_dataset(&spec, 100, 50, 5).unwrap();
    for inst in ds.train.iter().chain(&ds.test) {
        let cats = inst.entities.categories().unwrap();
        let rule = spec.scene_rule.iter().find(|r| r.label == inst.label).unwrap();
        assert!(cats.contains(&rule.pair[0]) && cats.contains(&rule.pair[1]));
        assert!(!inst.target.has_no_relations());
        assert!(inst.target.is_symmetric());
        assert_eq!(inst.gt_relations.len(), inst.target.positives() / 2);
    }
    let summary = ds.summary(spec.num_scene_labels);
    assert!(summary.train_label_counts.iter().all(|&c| c > 10), "{summary:?}");
}

#[test]
fn noiseless_pooled_features_are_linearly_separable() {
    let spec = WorldSpec { noise_sigma: 0.0, ..WorldSpec::demo() };
    let ds = generate_dataset(&spec, 200, 1, 0).unwrap();
    let data: Vec<(Vec<f64>, usize)> = ds
        .train
        .iter()
        .map(|i| {
            let mut x = i.entities.features().col_means();
            x.push(1.0);
            (x, i.label)
        })
        .collect();
    let dim = data[0].0.len();
    let classes = spec.num_scene_labels;
    let mut w = vec![vec![0.0; dim]; classes];
    let score = |w: &[Vec<f64>], x: &[f64], c: usize| w[c].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    // Multiclass perceptron with a strict margin: a tie counts as a mistake.
    let mut converged = false;
    for _ in 0..20_000 {
        let mut mistakes = 0;
        for (x, y) in &data {
            let truth = score(&w, x, *y);
            if let Some(rival) = (0..classes).find(|&c| c != *y && score(&w, x, c) >= truth) {
                mistakes += 1;
                for k in 0..dim {
                    w[*y][k] += x[k];
                    w[rival][k] -= x[k];
                }
            }
        }
        if mistakes == 0 {
            converged = true;
            break;
        }
    }
    assert!(converged, "perceptron did not separate the noiseless scenes");
}

#[test]
fn documents_carry_tags_and_round_trip() {
    let spec = DocumentSpec::demo();
    let docs: Vec<_> = (0..10).map(|s| generate_document_instance(&spec, s).unwrap()).collect();
    for d in &docs {
        let tags = d.tags.as_ref().unwrap();
        assert_eq!(tags.len(), d.len());
        assert!(d.target.is_symmetric());
    }
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &docs).unwrap();
    assert_eq!(read_jsonl(&buf[..], "docs.jsonl").unwrap(), docs);
}

#[test]
fn single_instance_generation_matches_seed() {
    let spec = WorldSpec::demo();
    assert_eq!(generate_instance(&spec, 42).unwrap(), generate_instance(&spec, 42).unwrap());
}
