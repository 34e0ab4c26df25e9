use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use semchange::synth::{generate, read_labels, DriftSpec, Pattern, SynthConfig};
use semchange::Month;
use semchange_cli::{
    cmd_cluster, cmd_concreteness, cmd_neighbors, cmd_score, cmd_synth, read_series_dir, series_file_name, ClusterArgs,
    ConcretenessArgs, FilterArgs, NeighborArgs, NeighborhoodArgs, ScoreArgs, SynthArgs,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn month(s: &str) -> Month {
    s.parse().unwrap()
}

fn neighborhood(k: usize) -> NeighborhoodArgs {
    NeighborhoodArgs {
        k,
        pool: 500,
        min_components: 2,
        filter: FilterArgs { keep_hashtags: false, keep_targets: false, exclude: None },
    }
}

fn score_args(dataset: &Path, targets: &Path, out: &Path) -> ScoreArgs {
    ScoreArgs {
        dataset: dataset.to_path_buf(),
        targets: targets.display().to_string(),
        neighborhood: neighborhood(25),
        out: out.to_path_buf(),
    }
}

fn cluster_args(series: &Path, clusters: usize, labels: Option<PathBuf>, out: &Path) -> ClusterArgs {
    ClusterArgs {
        series: series.to_path_buf(),
        window: 5,
        degree: 3,
        clusters,
        neighbors: 10,
        linkage: "average".into(),
        labels,
        out: out.to_path_buf(),
    }
}

fn synth_fixture(out: &Path) {
    cmd_synth(&SynthArgs { spec: fixture("synth_small.json"), seed: None, out: out.to_path_buf() }).unwrap();
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn score_writes_one_series_per_planted_token() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fixture(&data);
    let out = tmp.path().join("score");
    let outcome = cmd_score(&score_args(&data, &data.join("targets.txt"), &out)).unwrap();
    assert_eq!(outcome.scored.len(), 4);
    assert!(outcome.failed.is_empty());

    let files = fs::read_dir(out.join("series")).unwrap().count();
    assert_eq!(files, 4);
    let labels = read_labels(&data.join("labels.json")).unwrap();
    for s in read_series_dir(&out.join("series")).unwrap() {
        let first = labels[&s.token].spec.first.unwrap_or(month("2014-01"));
        assert_eq!(s.anchor_month, first, "{}", s.token);
        assert_eq!(s.points[0].score, Some(0.0));
        assert!(out.join("series").join(series_file_name(&s.token)).exists());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 18 + 1);
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 5);
    assert_eq!(manifest["config"]["neighborhood"]["k"], 25);
}

#[test]
fn absent_target_is_reported_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fixture(&data);
    let targets = tmp.path().join("targets.txt");
    fs::write(&targets, "🌵\nnowhere\n").unwrap();
    let out = tmp.path().join("score");
    let outcome = cmd_score(&score_args(&data, &targets, &out)).unwrap();
    assert_eq!(outcome.scored, ["🌵"]);
    assert_eq!(outcome.failed.len(), 1);
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert!(errors.lines().nth(1).unwrap().starts_with("nowhere,"));

    // Through the binary: a warning on stderr and a zero exit status.
    let status = Command::new(env!("CARGO_BIN_EXE_semchange"))
        .args(["score", "--dataset"])
        .arg(&data)
        .arg("--targets")
        .arg(&targets)
        .arg("--out")
        .arg(tmp.path().join("bin"))
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("nowhere"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fixture(&data);
    let targets = data.join("targets.txt");
    for run in ["one", "two"] {
        let out = tmp.path().join(run);
        cmd_score(&score_args(&data, &targets, &out.join("score"))).unwrap();
        cmd_cluster(&cluster_args(&out.join("score/series"), 2, Some(data.join("labels.json")), &out.join("cluster")))
            .unwrap();
    }
    assert_eq!(tree(&tmp.path().join("one")), tree(&tmp.path().join("two")));

    // Writing into the same directory again changes nothing either.
    let before = tree(&tmp.path().join("one"));
    cmd_score(&score_args(&data, &targets, &tmp.path().join("one/score"))).unwrap();
    assert_eq!(tree(&tmp.path().join("one")), before);
}

fn forty_token_set(dir: &Path, groups: &[Pattern]) {
    let start = month("2012-01");
    let per = 40 / groups.len();
    let specs: Vec<DriftSpec> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, &pattern)| {
            (0..per).map(move |i| {
                let onset = match pattern {
                    Pattern::SuddenPeak => start.offset(10 + (i as i64 % 5)),
                    Pattern::Gradual => start.offset(2 + (i as i64 % 4)),
                    Pattern::Seasonal => start.offset(i as i64 % 3),
                    Pattern::Stable => start,
                };
                let spec = DriftSpec::new(format!("g{g}_{i:02}"), pattern, onset, 1.0);
                if pattern == Pattern::Seasonal { spec.with_period(8) } else { spec }
            })
        })
        .collect();
    generate(&specs, &SynthConfig::new(start, 30, 1200, 32, 99)).unwrap().write(dir).unwrap();
}

#[test]
fn cluster_reports_requested_count() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    forty_token_set(&data, &[Pattern::SuddenPeak, Pattern::Gradual, Pattern::Seasonal, Pattern::Stable]);
    let score = tmp.path().join("score");
    cmd_score(&score_args(&data, &data.join("targets.txt"), &score)).unwrap();
    let series = score.join("series");
    let outcome = cmd_cluster(&cluster_args(&series, 4, None, &tmp.path().join("c4"))).unwrap();
    assert_eq!(outcome.n_clusters, 4);
    assert_eq!(outcome.sizes.iter().sum::<usize>(), 40);
    for name in ["profiles.csv", "distances.csv", "features.csv", "assignments.csv", "linkage.csv", "shapes.csv"] {
        assert!(tmp.path().join("c4").join(name).exists(), "{name}");
    }
    assert_eq!(fs::read_to_string(tmp.path().join("c4/linkage.csv")).unwrap().lines().count(), 40);
    assert!(cmd_cluster(&cluster_args(&series, 41, None, &tmp.path().join("c41"))).is_err());
}

#[test]
fn two_planted_groups_are_recovered() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    forty_token_set(&data, &[Pattern::SuddenPeak, Pattern::Gradual]);
    let score = tmp.path().join("score");
    cmd_score(&score_args(&data, &data.join("targets.txt"), &score)).unwrap();
    let outcome =
        cmd_cluster(&cluster_args(&score.join("series"), 2, Some(data.join("labels.json")), &tmp.path().join("c")))
            .unwrap();
    let recovery = outcome.recovery.unwrap();
    assert!(recovery >= 0.9, "{recovery}");
    let written: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("c/recovery.json")).unwrap()).unwrap();
    assert_eq!(written["pairwise_agreement"], recovery);
}

#[test]
fn neighbors_at_the_peak_come_from_the_second_prototype() {
    let tmp = tempfile::tempdir().unwrap();
    let start = month("2013-01");
    let specs = [DriftSpec::new("spike", Pattern::SuddenPeak, start.offset(4), 1.0)];
    let cfg = SynthConfig { prototype_size: 5, ..SynthConfig::new(start, 10, 200, 64, 17) };
    let data = generate(&specs, &cfg).unwrap();
    data.write(tmp.path()).unwrap();
    let label = &data.labels["spike"];

    let args = |m: &str| NeighborArgs {
        dataset: tmp.path().to_path_buf(),
        token: "spike".into(),
        month: Some(m.into()),
        targets: None,
        neighborhood: neighborhood(5),
    };
    let neighbours = |m: &str| -> Vec<String> {
        let mut buf = Vec::new();
        cmd_neighbors(&args(m), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().to_string()).collect()
    };
    let at_peak = neighbours("2013-06");
    assert_eq!(at_peak.len(), 5);
    assert!(at_peak.iter().all(|n| label.prototype_b.contains(n)), "{at_peak:?}");
    let before = neighbours("2013-02");
    assert!(before.iter().all(|n| label.prototype_a.contains(n)), "{before:?}");
}

#[test]
fn concreteness_fixture_reproduces_the_reference_statistic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ConcretenessArgs {
        volatility: Some(fixture("volatility.csv")),
        series: None,
        senses: fixture("senses.tsv"),
        lexicon: fixture("lexicon.tsv"),
        fraction: 0.10,
        population_mean: Some(3.04),
        out: tmp.path().to_path_buf(),
    };
    let report = cmd_concreteness(&args).unwrap();
    assert_eq!(report.selected.len(), 53);
    assert_eq!(report.matched.len(), 16);
    assert_eq!(report.unmatched.len(), 37);
    assert!((report.test.t_statistic - 13.485118991768).abs() < 1e-9);
    assert!((13.0..=14.0).contains(&report.test.t_statistic));
    assert!(report.test.p_value < 1e-8);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["n"], 16);
    assert_eq!(json["mu"], 3.04);

    let again = tempfile::tempdir().unwrap();
    cmd_concreteness(&ConcretenessArgs { out: again.path().to_path_buf(), ..args }).unwrap();
    assert_eq!(tree(tmp.path()), tree(again.path()));
}

#[test]
fn synth_rejects_an_empty_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("empty.json");
    fs::write(&spec, r#"{"start":"2014-01","months":12,"vocab_size":100,"dim":16,"seed":1,"tokens":[]}"#).unwrap();
    let args = SynthArgs { spec: spec.clone(), seed: None, out: tmp.path().join("out") };
    assert!(cmd_synth(&args).is_err());

    let output = Command::new(env!("CARGO_BIN_EXE_semchange"))
        .args(["synth", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(tmp.path().join("bin"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
}

#[test]
fn cohorts_command_writes_its_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_fixture(&data);
    let score = tmp.path().join("score");
    cmd_score(&score_args(&data, &data.join("targets.txt"), &score)).unwrap();
    let out = tmp.path().join("cohorts");
    let status = Command::new(env!("CARGO_BIN_EXE_semchange"))
        .args(["cohorts", "--cuts", "0,50", "--fraction", "0.5", "--series"])
        .arg(score.join("series"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let top = fs::read_to_string(out.join("top_fraction.txt")).unwrap();
    assert_eq!(top.lines().count(), 2);
    assert!(!top.contains("🌕"));
    let vol = fs::read_to_string(out.join("volatility.csv")).unwrap();
    assert_eq!(vol.lines().count(), 5);
}
