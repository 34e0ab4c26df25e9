mod common;

use std::fs;

use common::*;
use rand::Rng;
use semchange::cohort::VolatilityTable;
use semchange::neighbors::{change_series, score_tokens};
use semchange::synth::{evaluate_recovery, generate, pair_agreement, read_labels, DriftSpec, Pattern, SynthConfig};
use semchange::{ClusterReport, ScoringConfig, TemporalDataset};

fn planted_config(planted: &[String]) -> ScoringConfig {
    let mut config = ScoringConfig::default();
    config.filter = config.filter.with_targets(planted.iter().cloned());
    config
}

fn specs() -> Vec<DriftSpec> {
    let start = month("2012-01");
    vec![
        DriftSpec::new("flat", Pattern::Stable, start, 1.0),
        DriftSpec::new("peak", Pattern::SuddenPeak, start.offset(6), 1.0),
        DriftSpec::new("ramp", Pattern::Gradual, start.offset(2), 1.0),
        DriftSpec::new("wave", Pattern::Seasonal, start.offset(1), 1.0).with_period(6),
    ]
}

#[test]
fn stable_and_distractor_scores_are_exactly_zero() {
    let data = generate(&specs(), &SynthConfig::new(month("2012-01"), 16, 400, 24, 81)).unwrap();
    let config = planted_config(&data.planted_tokens());
    let flat = change_series(&data.dataset, "flat", &config).unwrap();
    assert_eq!(flat.points.len(), 16);
    assert!(flat.points.iter().all(|p| p.score == Some(0.0)));

    let tokens: Vec<String> = data.dataset.vocabulary().into_iter().collect();
    let all: Vec<_> = score_tokens(&data.dataset, &tokens, &config).into_iter().map(Result::unwrap).collect();
    let table = VolatilityTable::from_series(&all);
    let vol = |t: &str| table.entries.iter().find(|e| e.token == t).unwrap().volatility;
    for d in &data.distractors {
        assert_eq!(vol(d), 0.0, "{d}");
    }
    for t in ["peak", "ramp", "wave"] {
        assert!(vol(t) > 0.0);
    }
}

#[test]
fn sudden_peak_rises_only_during_the_spike() {
    let start = month("2012-01");
    let onset = start.offset(6);
    let data = generate(&specs(), &SynthConfig::new(start, 16, 400, 24, 82)).unwrap();
    let config = planted_config(&data.planted_tokens());
    let anchor = &data.dataset.snapshots()[0];
    let oracle: Vec<f64> = data
        .dataset
        .snapshots()
        .iter()
        .map(|s| score_oracle(anchor, s, "peak", 25, &config.filter, 2).score.unwrap())
        .collect();
    let scored = change_series(&data.dataset, "peak", &config).unwrap().scores();
    for (a, b) in scored.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
    let peak = oracle.iter().copied().fold(0.0, f64::max);
    let argmax = oracle.iter().position(|&v| v == peak).unwrap() as i64;
    assert!((6..9).contains(&argmax), "{oracle:?}");
    for (i, &v) in oracle.iter().enumerate() {
        let m = start.offset(i as i64);
        if m >= onset.offset(3) || m < onset {
            assert!(v < 0.1 * peak, "{m}: {v} vs peak {peak}");
        }
    }
}

#[test]
fn planted_tokens_live_between_their_prototypes() {
    let data = generate(&specs(), &SynthConfig::new(month("2012-01"), 16, 400, 24, 83)).unwrap();
    for (token, label) in &data.labels {
        assert_eq!(label.prototype_a.len(), 25);
        assert!(label.prototype_a.iter().all(|t| !label.prototype_b.contains(t)), "{token}");
        assert!(label.prototype_a.iter().chain(&label.prototype_b).all(|t| data.distractors.contains(t)));
    }
    for s in data.dataset.snapshots() {
        assert_eq!(s.len(), 400);
    }
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn same_seed_writes_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::new(month("2012-01"), 8, 200, 16, 84);
    generate(&specs(), &cfg).unwrap().write(&tmp.path().join("a")).unwrap();
    generate(&specs(), &cfg).unwrap().write(&tmp.path().join("b")).unwrap();
    let a = dir_bytes(&tmp.path().join("a"));
    assert_eq!(a, dir_bytes(&tmp.path().join("b")));
    assert_eq!(a.len(), 8 + 3);

    let other = SynthConfig { seed: 85, ..cfg };
    generate(&specs(), &other).unwrap().write(&tmp.path().join("c")).unwrap();
    assert_ne!(a, dir_bytes(&tmp.path().join("c")));
}

#[test]
fn written_dataset_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(&specs(), &SynthConfig::new(month("2012-01"), 10, 150, 12, 86)).unwrap();
    data.write(tmp.path()).unwrap();
    let loaded = TemporalDataset::load(tmp.path()).unwrap();
    assert_eq!(loaded.months(), data.dataset.months());
    for (a, b) in loaded.snapshots().iter().zip(data.dataset.snapshots()) {
        assert_eq!(a, b);
    }
    assert_eq!(read_labels(&tmp.path().join("labels.json")).unwrap(), data.labels);
}

#[test]
fn agreement_worked_examples() {
    let truth: Vec<u8> = [vec![0; 10], vec![1; 10]].concat();
    assert_eq!(pair_agreement(&truth, &truth), 1.0);
    assert!((pair_agreement(&truth, &[0u8; 20]) - 90.0 / 190.0).abs() < 1e-15);
}

#[test]
fn random_clusterings_sit_at_the_label_baseline() {
    let start = month("2012-01");
    let mut planted = Vec::new();
    for i in 0..6 {
        planted.push(DriftSpec::new(format!("s{i}"), Pattern::Stable, start, 1.0));
        planted.push(DriftSpec::new(format!("p{i}"), Pattern::SuddenPeak, start.offset(2), 1.0));
        planted.push(DriftSpec::new(format!("g{i}"), Pattern::Gradual, start, 1.0));
    }
    planted.push(DriftSpec::new("w0", Pattern::Seasonal, start, 1.0).with_period(2));
    planted.push(DriftSpec::new("w1", Pattern::Seasonal, start, 1.0).with_period(2));
    let data = generate(&planted, &SynthConfig { prototype_size: 4, ..SynthConfig::new(start, 6, 200, 8, 87) }).unwrap();

    let tokens: Vec<String> = data.labels.keys().cloned().collect();
    let n = tokens.len() as f64;
    let pairs = n * (n - 1.0) / 2.0;
    let same: f64 = [6.0, 6.0, 6.0, 2.0].iter().map(|g: &f64| g * (g - 1.0) / 2.0).sum();
    let k = 4.0;
    let baseline = (same / pairs) / k + (1.0 - same / pairs) * (1.0 - 1.0 / k);

    let mut r = rng(88);
    let trials = 4000;
    let mut total = 0.0;
    for _ in 0..trials {
        let assignments: Vec<usize> = tokens.iter().map(|_| r.random_range(0..4)).collect();
        let mut sizes = vec![0; 4];
        for &a in &assignments {
            sizes[a] += 1;
        }
        let report = ClusterReport { tokens: tokens.clone(), assignments, n_clusters: 4, sizes, merges: vec![] };
        total += evaluate_recovery(&data.labels, &report).unwrap();
    }
    let mean = total / trials as f64;
    assert!((mean - baseline).abs() < 0.01, "mean {mean} vs baseline {baseline}");
}

#[test]
fn generation_rejects_impossible_requests() {
    let start = month("2012-01");
    let late = DriftSpec::new("x", Pattern::SuddenPeak, start.offset(40), 1.0);
    assert!(generate(&[late], &SynthConfig::new(start, 12, 200, 16, 1)).is_err());
    assert!(generate(&specs(), &SynthConfig::new(start, 12, 20, 16, 1)).is_err());
    assert!(generate(&specs(), &SynthConfig::new(start, 12, 200, 4, 1)).is_err());
}
