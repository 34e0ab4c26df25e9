//! The `semchange` command line: file-based stages over the `semchange` library.
//!
//! ```text
//! synth  -> dataset dir (YYYY-MM.vec, labels.json, targets.txt)
//! score  -> series/*.csv
//! cluster, cohorts, concreteness -> reports
//! neighbors -> ranked neighbour lists on stdout
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use semchange::cohort::{
    aggregate_curve, cohort_curves, percentile_cohorts, read_volatility_csv, top_fraction,
    write_curves_csv, write_volatility_csv, VolatilityTable,
};
use semchange::concreteness::{concreteness_report, ConcretenessLexicon, SenseMap};
use semchange::neighbors::{read_series_csv, score_tokens, top_k_neighbors, write_series_csv};
use semchange::pipeline::{run_pipeline, write_profiles_csv};
use semchange::shape::{
    characteristic_shapes, distance_matrix, hierarchical_cluster, nearest_shape_features,
    write_shapes_csv,
};
use semchange::snapshot::is_emoji;
use semchange::synth::{evaluate_recovery, generate, read_labels, SynthPlan};
use semchange::{ChangeSeries, Linkage, Month, ScoringConfig, SmootherConfig, TemporalDataset, TokenFilter};

pub mod manifest;

use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "semchange", version, about = "Semantic change scoring over monthly embedding snapshots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score targets' change against their anchor month.
    Score(ScoreArgs),
    /// Smooth, compare (DTW) and cluster scored series.
    Cluster(ClusterArgs),
    /// Volatility table, percentile cohorts and aggregate curves.
    Cohorts(CohortArgs),
    /// Concreteness t-test for the most volatile tokens.
    Concreteness(ConcretenessArgs),
    /// Print a token's ranked nearest neighbours per month.
    Neighbors(NeighborArgs),
    /// Generate a synthetic dataset with planted drift.
    Synth(SynthArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score(a) => cmd_score(&a).map(|_| ()),
        Command::Cluster(a) => {
            let outcome = cmd_cluster(&a)?;
            println!("{} clusters, sizes {:?}", outcome.n_clusters, outcome.sizes);
            if let Some(score) = outcome.recovery {
                println!("recovery agreement: {score:.4}");
            }
            Ok(())
        }
        Command::Cohorts(a) => cmd_cohorts(&a),
        Command::Concreteness(a) => cmd_concreteness(&a).map(|_| ()),
        Command::Neighbors(a) => cmd_neighbors(&a, &mut std::io::stdout().lock()),
        Command::Synth(a) => cmd_synth(&a),
    }
}

// Manifests key inputs by content hash, so configs keep only file names and
// stay identical across output locations.
fn file_name<S: serde::Serializer>(path: &Path, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()))
}

fn opt_file_name<S: serde::Serializer>(path: &Option<PathBuf>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match path {
        Some(p) => file_name(p, s),
        None => s.serialize_none(),
    }
}

fn target_name<S: serde::Serializer>(targets: &str, s: S) -> std::result::Result<S::Ok, S::Error> {
    file_name(Path::new(targets), s)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterArgs {
    /// Allow hashtags as neighbours.
    #[arg(long)]
    pub keep_hashtags: bool,
    /// Allow target-class tokens (emoji and listed targets) as neighbours.
    #[arg(long)]
    pub keep_targets: bool,
    /// File of literal tokens never used as neighbours, one per line.
    #[arg(long)]
    #[serde(serialize_with = "opt_file_name")]
    pub exclude: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NeighborhoodArgs {
    #[arg(long, default_value_t = 25)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub pool: usize,
    #[arg(long, default_value_t = 2)]
    pub min_components: usize,
    #[command(flatten)]
    pub filter: FilterArgs,
}

impl NeighborhoodArgs {
    fn scoring_config(&self, targets: &[String]) -> Result<ScoringConfig> {
        let mut filter = TokenFilter {
            exclude_hashtags: !self.filter.keep_hashtags,
            exclude_targets: !self.filter.keep_targets,
            ..TokenFilter::default()
        }
        .with_targets(targets.iter().cloned());
        if let Some(path) = &self.filter.exclude {
            filter.custom_exclusions = read_token_list(path)?.into_iter().collect();
        }
        let config = ScoringConfig {
            k: self.k,
            pool: self.pool,
            min_components: self.min_components,
            filter,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    #[serde(serialize_with = "file_name")]
    pub dataset: PathBuf,
    /// Target list file (one token per line) or `auto` for every emoji token.
    #[arg(long, default_value = "auto")]
    #[serde(serialize_with = "target_name")]
    pub targets: String,
    #[command(flatten)]
    pub neighborhood: NeighborhoodArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn read_token_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen = BTreeSet::new();
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|t| !t.is_empty() && seen.insert(t.to_string()))
        .map(str::to_string)
        .collect())
}

/// File name for a token's series: the token itself when it is plain ASCII,
/// otherwise `u` + hex of its UTF-8 bytes.
pub fn series_file_name(token: &str) -> String {
    let plain = !token.is_empty()
        && !token.starts_with('.')
        && token.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if plain {
        format!("{token}.csv")
    } else {
        format!("u{}.csv", hex::encode(token.as_bytes()))
    }
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_file(out: &Path, name: &str, manifest: &mut Manifest, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    body(&mut buf)?;
    fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
    manifest.add_output(out, &path)?;
    Ok(path)
}

fn dataset_inputs(dataset: &Path, manifest: &mut Manifest) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(dataset)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vec"))
        .collect();
    files.sort();
    for f in files {
        manifest.add_input(&f)?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct ScoreOutcome {
    pub scored: Vec<String>,
    pub failed: Vec<(String, String)>,
}

pub fn cmd_score(args: &ScoreArgs) -> Result<ScoreOutcome> {
    let dataset = TemporalDataset::load(&args.dataset)
        .with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    let targets: Vec<String> = if args.targets == "auto" {
        dataset.vocabulary().into_iter().filter(|t| is_emoji(t)).collect()
    } else {
        read_token_list(Path::new(&args.targets))?
    };
    if targets.is_empty() {
        bail!("no target tokens to score");
    }
    let config = args.neighborhood.scoring_config(&targets)?;

    create_out(&args.out)?;
    let series_dir = args.out.join("series");
    if series_dir.exists() {
        fs::remove_dir_all(&series_dir)?;
    }
    let mut manifest = Manifest::new("score", args)?;
    dataset_inputs(&args.dataset, &mut manifest)?;
    if args.targets != "auto" {
        manifest.add_input(Path::new(&args.targets))?;
    }

    let results = score_tokens(&dataset, &targets, &config);
    let mut scored = Vec::new();
    let mut failed = Vec::new();
    for (token, result) in targets.iter().zip(results) {
        match result {
            Ok(series) => {
                write_file(&args.out, &format!("series/{}", series_file_name(token)), &mut manifest, |buf| {
                    Ok(write_series_csv(buf, std::slice::from_ref(&series))?)
                })?;
                scored.push(token.clone());
            }
            Err(e) => {
                eprintln!("warning: {token}: {e}");
                failed.push((token.clone(), e.to_string()));
            }
        }
    }
    write_file(&args.out, "errors.csv", &mut manifest, |buf| {
        writeln!(buf, "token,error")?;
        for (t, e) in &failed {
            writeln!(buf, "{},{}", csv_field(t), csv_field(e))?;
        }
        Ok(())
    })?;
    manifest.write(&args.out)?;
    Ok(ScoreOutcome { scored, failed })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads every `*.csv` series file in `dir`, in file-name order.
pub fn read_series_dir(dir: &Path) -> Result<Vec<ChangeSeries>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading series directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in files {
        let file = fs::File::open(&f)?;
        all.extend(read_series_csv(file).with_context(|| format!("parsing {}", f.display()))?);
    }
    Ok(all)
}

fn series_inputs(dir: &Path, manifest: &mut Manifest) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    for f in files {
        manifest.add_input(&f)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClusterArgs {
    /// Directory of series CSVs (the `series/` folder written by `score`).
    #[arg(long)]
    #[serde(serialize_with = "file_name")]
    pub series: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long)]
    pub clusters: usize,
    /// Most similar shapes one-hot encoded per token.
    #[arg(long, default_value_t = 10)]
    pub neighbors: usize,
    #[arg(long, default_value = "average")]
    pub linkage: String,
    /// `labels.json` of a synthetic dataset; writes recovery.json when given.
    #[arg(long)]
    #[serde(serialize_with = "opt_file_name")]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct ClusterOutcome {
    pub n_clusters: usize,
    pub sizes: Vec<usize>,
    pub recovery: Option<f64>,
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<ClusterOutcome> {
    let smoother = SmootherConfig {
        window: args.window,
        degree: args.degree,
    };
    smoother.validate()?;
    let linkage: Linkage = args.linkage.parse()?;
    let series = read_series_dir(&args.series)?;
    let mut profiles = Vec::new();
    let mut usable = Vec::new();
    for s in &series {
        match run_pipeline(s, smoother) {
            Ok(p) => {
                profiles.push(p);
                usable.push(s.clone());
            }
            Err(e) => eprintln!("warning: skipping {}: {e}", s.token),
        }
    }
    if profiles.len() < 2 {
        bail!("need at least 2 usable series to cluster, found {}", profiles.len());
    }
    if args.clusters < 1 || args.clusters > profiles.len() {
        bail!(
            "--clusters must be between 1 and the number of usable series ({}), got {}",
            profiles.len(),
            args.clusters
        );
    }
    let matrix = distance_matrix(&profiles)?;
    let features = nearest_shape_features(&matrix, args.neighbors);
    let report = hierarchical_cluster(&features, args.clusters, linkage)?;
    let curves = characteristic_shapes(&report, &profiles, Some(&usable))?;

    create_out(&args.out)?;
    let mut manifest = Manifest::new("cluster", args)?;
    series_inputs(&args.series, &mut manifest)?;
    profiles.sort_by(|a, b| a.token.cmp(&b.token));
    write_file(&args.out, "profiles.csv", &mut manifest, |b| Ok(write_profiles_csv(b, &profiles)?))?;
    write_file(&args.out, "distances.csv", &mut manifest, |b| Ok(matrix.write_csv(b)?))?;
    write_file(&args.out, "features.csv", &mut manifest, |b| {
        writeln!(b, "token,neighbors")?;
        for f in &features {
            writeln!(b, "{},{}", csv_field(&f.token), csv_field(&f.neighbors.join(" ")))?;
        }
        Ok(())
    })?;
    write_file(&args.out, "assignments.csv", &mut manifest, |b| Ok(report.write_assignments_csv(b)?))?;
    write_file(&args.out, "linkage.csv", &mut manifest, |b| Ok(report.write_linkage_csv(b)?))?;
    write_file(&args.out, "shapes.csv", &mut manifest, |b| Ok(write_shapes_csv(b, &curves)?))?;

    let recovery = match &args.labels {
        Some(path) => {
            manifest.add_input(path)?;
            let labels = read_labels(path)?;
            let score = evaluate_recovery(&labels, &report)?;
            write_file(&args.out, "recovery.json", &mut manifest, |b| {
                let body = serde_json::json!({ "pairwise_agreement": score, "labeled_tokens": labels.len() });
                writeln!(b, "{}", serde_json::to_string_pretty(&body)?)?;
                Ok(())
            })?;
            Some(score)
        }
        None => None,
    };
    manifest.write(&args.out)?;
    Ok(ClusterOutcome {
        n_clusters: report.n_clusters,
        sizes: report.sizes.clone(),
        recovery,
    })
}

fn parse_cuts(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().with_context(|| format!("bad cut {c:?}")))
        .collect()
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CohortArgs {
    #[arg(long)]
    #[serde(serialize_with = "file_name")]
    pub series: PathBuf,
    #[arg(long, default_value = "50,75,90,95,99")]
    pub cuts: String,
    #[arg(long, default_value_t = 0.10)]
    pub fraction: f64,
    /// Optional `token<TAB>group` file; writes one aggregate curve per group.
    #[arg(long)]
    #[serde(serialize_with = "opt_file_name")]
    pub tags: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn cmd_cohorts(args: &CohortArgs) -> Result<()> {
    let cuts = parse_cuts(&args.cuts)?;
    let series = read_series_dir(&args.series)?;
    let table = VolatilityTable::from_series(&series);
    let assignment = percentile_cohorts(&table, &cuts)?;
    let curves = cohort_curves(&series, &assignment);
    let all: Vec<&ChangeSeries> = series.iter().collect();
    let overall = aggregate_curve("all", &all);
    let top = top_fraction(&table, args.fraction)?;

    create_out(&args.out)?;
    let mut manifest = Manifest::new("cohorts", args)?;
    series_inputs(&args.series, &mut manifest)?;
    write_file(&args.out, "volatility.csv", &mut manifest, |b| {
        Ok(write_volatility_csv(b, &table, Some(&assignment))?)
    })?;
    write_file(&args.out, "cohort_curves.csv", &mut manifest, |b| Ok(write_curves_csv(b, &curves)?))?;
    write_file(&args.out, "overall_curve.csv", &mut manifest, |b| {
        Ok(write_curves_csv(b, std::slice::from_ref(&overall))?)
    })?;
    write_file(&args.out, "top_fraction.txt", &mut manifest, |b| {
        for t in &top {
            writeln!(b, "{t}")?;
        }
        Ok(())
    })?;
    write_file(&args.out, "excluded.csv", &mut manifest, |b| {
        writeln!(b, "token,n_points")?;
        for (t, n) in &table.excluded {
            writeln!(b, "{},{n}", csv_field(t))?;
        }
        Ok(())
    })?;
    if let Some(tags) = &args.tags {
        manifest.add_input(tags)?;
        let text = fs::read_to_string(tags)?;
        let mut groups: std::collections::BTreeMap<String, Vec<&ChangeSeries>> = Default::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (token, group) = line
                .split_once('\t')
                .with_context(|| format!("expected token<TAB>group, got {line:?}"))?;
            if let Some(s) = series.iter().find(|s| s.token == token) {
                groups.entry(group.trim().to_string()).or_default().push(s);
            }
        }
        let group_curves: Vec<_> = groups.iter().map(|(g, m)| aggregate_curve(g.clone(), m)).collect();
        write_file(&args.out, "tag_curves.csv", &mut manifest, |b| Ok(write_curves_csv(b, &group_curves)?))?;
    }
    manifest.write(&args.out)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConcretenessArgs {
    /// `volatility.csv` written by `cohorts`.
    #[arg(long, conflicts_with = "series", required_unless_present = "series")]
    #[serde(serialize_with = "opt_file_name")]
    pub volatility: Option<PathBuf>,
    /// Series directory; volatility is computed from it.
    #[arg(long)]
    #[serde(serialize_with = "opt_file_name")]
    pub series: Option<PathBuf>,
    /// `token<TAB>lemma1,lemma2,...`
    #[arg(long)]
    #[serde(serialize_with = "file_name")]
    pub senses: PathBuf,
    /// `lemma<TAB>rating`
    #[arg(long)]
    #[serde(serialize_with = "file_name")]
    pub lexicon: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    pub fraction: f64,
    /// Compare against this mean instead of the supplied lexicon's mean.
    #[arg(long)]
    pub population_mean: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn cmd_concreteness(args: &ConcretenessArgs) -> Result<semchange::concreteness::ConcretenessReport> {
    let mut manifest = Manifest::new("concreteness", args)?;
    let table = match (&args.volatility, &args.series) {
        (Some(path), _) => {
            manifest.add_input(path)?;
            read_volatility_csv(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?)?
        }
        (None, Some(dir)) => {
            series_inputs(dir, &mut manifest)?;
            VolatilityTable::from_series(&read_series_dir(dir)?)
        }
        (None, None) => bail!("one of --volatility or --series is required"),
    };
    manifest.add_input(&args.senses)?;
    manifest.add_input(&args.lexicon)?;
    let senses = SenseMap::parse(fs::File::open(&args.senses)?)?;
    let mut lexicon = ConcretenessLexicon::parse(fs::File::open(&args.lexicon)?)?;
    if let Some(mu) = args.population_mean {
        lexicon = lexicon.with_population_mean(mu);
    }
    let report = concreteness_report(&table, &senses, &lexicon, args.fraction)?;

    create_out(&args.out)?;
    write_file(&args.out, "report.json", &mut manifest, |b| {
        writeln!(b, "{}", report.to_json()?)?;
        Ok(())
    })?;
    manifest.write(&args.out)?;
    println!(
        "t = {:.4}, p = {:.3e}, n = {} matched of {} selected",
        report.test.t_statistic,
        report.test.p_value,
        report.test.n,
        report.selected.len()
    );
    Ok(report)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NeighborArgs {
    #[arg(long)]
    #[serde(serialize_with = "file_name")]
    pub dataset: PathBuf,
    #[arg(long)]
    pub token: String,
    /// Only this month (YYYY-MM); every month containing the token otherwise.
    #[arg(long)]
    pub month: Option<String>,
    /// Extra target tokens to keep out of neighbour lists.
    #[arg(long)]
    #[serde(serialize_with = "opt_file_name")]
    pub targets: Option<PathBuf>,
    #[command(flatten)]
    pub neighborhood: NeighborhoodArgs,
}

/// Writes `month,rank,neighbor,similarity` rows for the token.
pub fn cmd_neighbors<W: Write>(args: &NeighborArgs, out: &mut W) -> Result<()> {
    let dataset = TemporalDataset::load(&args.dataset)?;
    let mut targets = vec![args.token.clone()];
    if let Some(path) = &args.targets {
        targets.extend(read_token_list(path)?);
    }
    let config = args.neighborhood.scoring_config(&targets)?;
    let months: Vec<Month> = match &args.month {
        Some(m) => vec![m.parse()?],
        None => dataset
            .snapshots()
            .iter()
            .filter(|s| s.contains(&args.token))
            .map(|s| s.month())
            .collect(),
    };
    if months.is_empty() {
        bail!("token {:?} appears in no snapshot", args.token);
    }
    writeln!(out, "month,rank,neighbor,similarity")?;
    for m in months {
        let snapshot = dataset
            .snapshot(m)
            .with_context(|| format!("no snapshot for {m}"))?;
        let list = top_k_neighbors(snapshot, &args.token, &config)?;
        for (rank, (n, sim)) in list.neighbors.iter().enumerate() {
            writeln!(out, "{m},{},{},{}", rank + 1, csv_field(n), semchange::format::sig9(*sim))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// JSON plan: start, months, vocab_size, dim, seed, tokens[...].
    #[arg(long)]
    #[serde(serialize_with = "file_name")]
    pub spec: PathBuf,
    /// Overrides the plan's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut plan: SynthPlan = serde_json::from_str(&text).context("parsing synth spec")?;
    if let Some(seed) = args.seed {
        plan.config.seed = seed;
    }
    if plan.tokens.is_empty() {
        bail!("synth spec lists no planted tokens");
    }
    let data = generate(&plan.tokens, &plan.config)?;
    data.write(&args.out)?;
    println!(
        "wrote {} months, {} planted + {} distractor tokens to {}",
        data.dataset.len(),
        data.labels.len(),
        data.distractors.len(),
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_safe() {
        assert_eq!(series_file_name("peak_01"), "peak_01.csv");
        assert_eq!(series_file_name("🌵"), "uf09f8cb5.csv");
        assert_eq!(series_file_name("../x"), "u2e2e2f78.csv");
        assert_eq!(series_file_name("a b"), "u612062.csv");
    }

    #[test]
    fn cuts_parse() {
        assert_eq!(parse_cuts("50, 75,90").unwrap(), [50.0, 75.0, 90.0]);
        assert!(parse_cuts("50,x").is_err());
    }
}
