//! The `stcl` command line: a deterministic pipeline over the documented
//! file formats. Every subcommand takes all randomness from `--seed` and
//! writes a JSON echo of its arguments next to its outputs, so reruns with
//! identical inputs produce byte-identical artifact trees.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    attention_distance, delta_log_amplitude, retrieve_topk, AttentionTensor, FeatureMap,
    SpectrumConfig,
};
use crate::contrast::{embed_observations, train_contrastive, LossConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_by_area, classification_metrics, cross_validate, recall_at_k, train_linear_probe,
    EmbeddingSet, ProbeTask, RegressionTask, VprTask, DEFAULT_MATCH_THRESHOLD_M,
};
use crate::geo::{AreaSet, GridIndex, DEFAULT_CELL_SIZE_DEG};
use crate::io::{load_matrix, load_metadata, load_tensor_file, save_checkpoint, save_matrix};
use crate::pairs::{
    audit_manifest, load_manifest, mine_self_pairs, mine_spatial_pairs, mine_temporal_pairs,
    save_manifest, subsample_pairs, PairManifest, SpatialMineParams, TemporalMineParams,
};
use crate::synth::{generate_city, SynthConfig};

#[derive(Parser, Serialize)]
#[command(name = "stcl", version, about = "Spatiotemporal contrastive learning toolkit")]
struct Cli {
    /// Cap the worker thread count (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic city with ground-truth latent factors.
    Synth(SynthArgs),
    /// Mine positive-pair manifests.
    #[command(subcommand)]
    Mine(MineCommand),
    /// Train a toy encoder on a pair manifest.
    Train(TrainArgs),
    /// Place recognition: Recall@K over a task JSON.
    EvalVpr(EvalVprArgs),
    /// Socioeconomic regression: LASSO over area-aggregated features.
    EvalSocio(EvalSocioArgs),
    /// Perception classification: linear probe over labeled embeddings.
    EvalSafety(EvalSafetyArgs),
    /// Attention distance per layer and head from an attention tensor.
    AnalyzeAttn(AnalyzeAttnArgs),
    /// Delta log amplitude of feature-map spectra per layer.
    AnalyzeFreq(AnalyzeFreqArgs),
    /// Top-k nearest neighbors of a query with metadata joined.
    Retrieve(RetrieveArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    areas: usize,
    #[arg(long, default_value_t = 20)]
    locations: usize,
    #[arg(long, default_value_t = 4)]
    captures: usize,
    #[arg(long, default_value_t = 32)]
    obs_dim: usize,
    #[arg(long, default_value_t = 8)]
    d_static: usize,
    #[arg(long, default_value_t = 4)]
    d_area: usize,
    #[arg(long, default_value_t = 4)]
    d_dyn: usize,
    #[arg(long, default_value_t = 1.0)]
    static_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    area_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    dyn_scale: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_scale: f64,
    #[arg(long, default_value_t = 2015)]
    first_year: i32,
    #[arg(long, default_value_t = 0.0)]
    origin_lat: f64,
    #[arg(long, default_value_t = 0.0)]
    origin_lon: f64,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MineCommand {
    /// Same location (within --max-dist-m), same heading, distinct times.
    Temporal(MineTemporalArgs),
    /// Two records from one urban area, headings unconstrained.
    Spatial(MineSpatialArgs),
    /// A seeded sample of records paired with themselves.
    #[command(name = "self")]
    SelfPairs(MineSelfArgs),
    /// Uniform subsample of an existing manifest.
    Subsample(SubsampleArgs),
}

#[derive(Args, Serialize)]
struct MineTemporalArgs {
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5.0)]
    max_dist_m: f64,
    #[arg(long, default_value_t = 1)]
    pairs_per_location: usize,
    #[arg(long, default_value_t = 0.0)]
    heading_tol_deg: f64,
    #[arg(long, default_value_t = DEFAULT_CELL_SIZE_DEG)]
    cell_size_deg: f64,
}

#[derive(Args, Serialize)]
struct MineSpatialArgs {
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Area definition JSON; omitted = use the records' own area ids.
    #[arg(long)]
    areas: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pairs_per_area: usize,
    #[arg(long)]
    max_year_gap: Option<i32>,
}

#[derive(Args, Serialize)]
struct MineSelfArgs {
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    count: usize,
}

#[derive(Args, Serialize)]
struct SubsampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    target: usize,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    observations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    base_lr: f64,
    #[arg(long, default_value_t = 1e-6)]
    weight_decay: f64,
    #[arg(long, default_value_t = 5)]
    warmup_epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    temperature: f64,
    /// Disable the symmetrized (two-direction) batch loss.
    #[arg(long, default_value_t = false)]
    no_symmetrize: bool,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [256, 128])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    aug_sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    aug_dropout: f64,
}

#[derive(Args, Serialize)]
struct EvalVprArgs {
    /// Task JSON naming query/database embedding and metadata files.
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 15, 20, 25])]
    k: Vec<usize>,
}

#[derive(Args, Serialize)]
struct EvalSocioArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    /// Target CSV: `area_id,label,value`; labels may carry a `topic:` prefix.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(Args, Serialize)]
struct EvalSafetyArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Score CSV: `id,score`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 3.5)]
    low: f64,
    #[arg(long, default_value_t = 6.5)]
    high: f64,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
}

#[derive(Args, Serialize)]
struct AnalyzeAttnArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AnalyzeFreqArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    low_cut: f64,
    #[arg(long, default_value_t = 0.9)]
    high_cut: f64,
    /// Report log base 10 instead of natural log.
    #[arg(long, default_value_t = false)]
    log10: bool,
}

#[derive(Args, Serialize)]
struct RetrieveArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    query_id: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
}

/// Parse `argv`, run the subcommand, and return the process exit code.
/// Failures print a single machine-parsable `error: ...` line on stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // May fail if the global pool already exists in-process; the cap is
        // then whatever the first caller configured.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

/// [`run_cli`] over `std::env::args_os`.
pub fn run_from_env() -> i32 {
    run_cli(std::env::args_os())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Mine(m) => match m {
            MineCommand::Temporal(a) => cmd_mine_temporal(cli, a),
            MineCommand::Spatial(a) => cmd_mine_spatial(cli, a),
            MineCommand::SelfPairs(a) => cmd_mine_self(cli, a),
            MineCommand::Subsample(a) => cmd_subsample(cli, a),
        },
        Command::Train(a) => cmd_train(cli, a),
        Command::EvalVpr(a) => cmd_eval_vpr(cli, a),
        Command::EvalSocio(a) => cmd_eval_socio(cli, a),
        Command::EvalSafety(a) => cmd_eval_safety(cli, a),
        Command::AnalyzeAttn(a) => cmd_analyze_attn(cli, a),
        Command::AnalyzeFreq(a) => cmd_analyze_freq(cli, a),
        Command::Retrieve(a) => cmd_retrieve(cli, a),
    }
}

/// Write the parsed arguments next to a directory output.
fn echo_config_dir(dir: &Path, cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("run_config.json"), serde_json::to_string_pretty(cli)?)?;
    Ok(())
}

/// Write the parsed arguments next to a file output (`<file>.config.json`).
fn echo_config_file(file: &Path, cli: &Cli) -> Result<()> {
    if let Some(parent) = file.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut os = file.as_os_str().to_owned();
    os.push(".config.json");
    std::fs::write(PathBuf::from(os), serde_json::to_string_pretty(cli)?)?;
    Ok(())
}

fn source_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_areas: a.areas,
        locations_per_area: a.locations,
        captures_per_location: a.captures,
        d_static: a.d_static,
        d_area: a.d_area,
        d_dyn: a.d_dyn,
        obs_dim: a.obs_dim,
        static_scale: a.static_scale,
        area_scale: a.area_scale,
        dyn_scale: a.dyn_scale,
        noise_scale: a.noise_scale,
        first_year: a.first_year,
        origin_lat: a.origin_lat,
        origin_lon: a.origin_lon,
        seed: a.seed,
    };
    let city = generate_city(&cfg)?;
    echo_config_dir(&a.out, cli)?;
    city.save(&a.out)?;
    // Perception-style scores for the safety probe protocol.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(a.out.join("scores.csv"))?;
    w.write_record(["id", "score"])?;
    for (id, score) in &city.truth.capture_score {
        w.write_record([id.as_str(), &score.to_string()])?;
    }
    w.flush()?;
    println!("synth: {} records, {} areas -> {}", city.records.len(), a.areas, a.out.display());
    Ok(())
}

fn audit_or_fail(manifest: &PairManifest, records: &[crate::geo::ImageRecord]) -> Result<()> {
    let report = audit_manifest(manifest, records);
    if !report.passed() {
        return Err(Error::InvalidInput(format!(
            "manifest audit failed with {} violations; first: {}",
            report.violations.len(),
            report.violations[0].reason
        )));
    }
    Ok(())
}

fn cmd_mine_temporal(cli: &Cli, a: &MineTemporalArgs) -> Result<()> {
    let records = load_metadata(&a.metadata)?;
    let index = GridIndex::build(&records, a.cell_size_deg)?;
    let params = TemporalMineParams {
        max_dist_m: a.max_dist_m,
        pairs_per_location: a.pairs_per_location,
        heading_tol_deg: a.heading_tol_deg,
    };
    let manifest =
        mine_temporal_pairs(&records, &index, &params, a.seed, &source_name(&a.metadata))?;
    audit_or_fail(&manifest, &records)?;
    echo_config_file(&a.out, cli)?;
    save_manifest(&manifest, &a.out)?;
    println!(
        "mine temporal: {} pairs from {} groups ({} skipped) -> {}",
        manifest.len(),
        manifest.summary.groups_total,
        manifest.summary.groups_skipped,
        a.out.display()
    );
    Ok(())
}

fn cmd_mine_spatial(cli: &Cli, a: &MineSpatialArgs) -> Result<()> {
    let records = load_metadata(&a.metadata)?;
    let areas = match &a.areas {
        Some(path) => Some(AreaSet::from_json(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let params =
        SpatialMineParams { pairs_per_area: a.pairs_per_area, max_year_gap: a.max_year_gap };
    let manifest =
        mine_spatial_pairs(&records, areas.as_ref(), &params, a.seed, &source_name(&a.metadata))?;
    // The audit compares area ids on the records; re-derive the assignment
    // when an explicit area set was supplied.
    let audited_records = match &areas {
        Some(set) => crate::geo::assign_area(&records, set)?,
        None => records,
    };
    audit_or_fail(&manifest, &audited_records)?;
    echo_config_file(&a.out, cli)?;
    save_manifest(&manifest, &a.out)?;
    println!(
        "mine spatial: {} pairs from {} areas ({} skipped) -> {}",
        manifest.len(),
        manifest.summary.groups_total,
        manifest.summary.groups_skipped,
        a.out.display()
    );
    Ok(())
}

fn cmd_mine_self(cli: &Cli, a: &MineSelfArgs) -> Result<()> {
    let records = load_metadata(&a.metadata)?;
    let manifest = mine_self_pairs(&records, a.count, a.seed, &source_name(&a.metadata))?;
    audit_or_fail(&manifest, &records)?;
    echo_config_file(&a.out, cli)?;
    save_manifest(&manifest, &a.out)?;
    println!("mine self: {} pairs -> {}", manifest.len(), a.out.display());
    Ok(())
}

fn cmd_subsample(cli: &Cli, a: &SubsampleArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let sub = subsample_pairs(&manifest, a.target, a.seed)?;
    echo_config_file(&a.out, cli)?;
    save_manifest(&sub, &a.out)?;
    println!("subsample: {} of {} pairs -> {}", sub.len(), manifest.len(), a.out.display());
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let observations = load_matrix(&a.observations)?;
    let train_cfg = TrainConfig {
        batch_size: a.batch_size,
        base_lr: a.base_lr,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        warmup_epochs: a.warmup_epochs,
        seed: a.seed,
        hidden_widths: a.widths.clone(),
        embed_dim: a.embed_dim,
        aug_noise_sigma: a.aug_sigma,
        aug_dropout_p: a.aug_dropout,
    };
    let loss_cfg = LossConfig { temperature: a.temperature, symmetrized: !a.no_symmetrize };
    let out = train_contrastive(&manifest, &observations, &train_cfg, &loss_cfg)?;
    echo_config_dir(&a.out, cli)?;
    save_checkpoint(&out.encoder, &train_cfg, &loss_cfg, &a.out.join("checkpoint.bin"))?;
    let mut w =
        csv::WriterBuilder::new().has_headers(false).from_path(a.out.join("loss_curve.csv"))?;
    w.write_record(["epoch", "mean_loss"])?;
    for (epoch, loss) in out.loss_curve.iter().enumerate() {
        w.write_record([epoch.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    let embeddings = embed_observations(&out.encoder, &observations)?;
    save_matrix(&embeddings, &a.out.join("embeddings.bin"))?;
    println!(
        "train: {} pairs, {} epochs, loss {:.4} -> {:.4}; artifacts in {}",
        manifest.len(),
        a.epochs,
        out.loss_curve.first().copied().unwrap_or(f64::NAN),
        out.loss_curve.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

/// Task JSON consumed by `eval-vpr`. Relative paths resolve against the
/// task file's directory.
#[derive(Serialize, Deserialize)]
pub struct VprTaskFile {
    pub query_embeddings: PathBuf,
    pub query_metadata: PathBuf,
    pub db_embeddings: PathBuf,
    pub db_metadata: PathBuf,
    #[serde(default = "default_threshold")]
    pub match_threshold_m: f64,
    /// Explicit ground-truth lists; replaces the geographic threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<BTreeMap<String, Vec<String>>>,
}

fn default_threshold() -> f64 {
    DEFAULT_MATCH_THRESHOLD_M
}

#[derive(Serialize)]
struct VprReport {
    threshold_m: f64,
    mode: &'static str,
    normalized_on_load: bool,
    recall: Vec<crate::eval::RecallReport>,
}

fn cmd_eval_vpr(cli: &Cli, a: &EvalVprArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.task)?;
    let spec: VprTaskFile = serde_json::from_str(&text)?;
    let base = a.task.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let (queries, q_changed) = EmbeddingSet::load(&resolve(&spec.query_embeddings))?;
    let (database, d_changed) = EmbeddingSet::load(&resolve(&spec.db_embeddings))?;
    let q_records = load_metadata(&resolve(&spec.query_metadata))?;
    let d_records = load_metadata(&resolve(&spec.db_metadata))?;
    let mut task =
        VprTask::from_records(queries, &q_records, database, &d_records, spec.match_threshold_m)?;
    let mode = if spec.matches.is_some() { "explicit" } else { "geographic" };
    if let Some(lists) = spec.matches {
        task.explicit_matches =
            Some(lists.into_iter().map(|(q, ids)| (q, ids.into_iter().collect())).collect());
    }
    let mut recall = Vec::with_capacity(a.k.len());
    for &k in &a.k {
        recall.push(recall_at_k(&task, k)?);
    }
    let report = VprReport {
        threshold_m: spec.match_threshold_m,
        mode,
        normalized_on_load: q_changed || d_changed,
        recall,
    };
    echo_config_file(&a.out, cli)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)?)?;
    for r in &report.recall {
        println!(
            "recall@{}: {:.4} ({} evaluated, {} excluded)",
            r.k, r.recall, r.evaluated, r.excluded_no_valid_match
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SocioLabelReport {
    label: String,
    topic: String,
    n_areas: usize,
    chosen_lambda: f64,
    test_r2: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct SocioReport {
    labels: Vec<SocioLabelReport>,
    topic_totals: BTreeMap<String, f64>,
    overall_total: f64,
    areas_with_features: usize,
}

fn cmd_eval_socio(cli: &Cli, a: &EvalSocioArgs) -> Result<()> {
    let (embeddings, _) = EmbeddingSet::load(&a.embeddings)?;
    let records = load_metadata(&a.metadata)?;
    let (area_ids, features) = aggregate_by_area(&embeddings, &records)?;
    let area_index: BTreeMap<&str, usize> =
        area_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&a.targets)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    if headers != ["area_id", "label", "value"] {
        return Err(Error::Format(format!(
            "bad targets header: expected area_id,label,value got {}",
            headers.join(",")
        )));
    }
    let mut by_label: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let area = row.get(0).unwrap_or("");
        let label = row.get(1).unwrap_or("").to_string();
        let value: f64 = row
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Format(format!("targets row {}: bad value", i + 2)))?;
        if let Some(&slot) = area_index.get(area) {
            by_label.entry(label).or_default().push((slot, value));
        }
    }
    if by_label.is_empty() {
        return Err(Error::InvalidInput("no target rows matched the aggregated areas".into()));
    }

    let mut label_reports = Vec::new();
    let mut topic_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, rows) in by_label {
        let mut x = Array2::zeros((rows.len(), features.ncols()));
        let mut y = Array1::zeros(rows.len());
        for (r, (slot, value)) in rows.iter().enumerate() {
            x.row_mut(r).assign(&features.row(*slot));
            y[r] = *value;
        }
        let task = RegressionTask {
            features: x,
            targets: y,
            split_fraction: a.split,
            folds: a.folds,
            lambda_grid: None,
        };
        let report = cross_validate(&task, a.seed)?;
        let topic =
            label.split_once(':').map(|(t, _)| t.to_string()).unwrap_or_else(|| label.clone());
        topic_values.entry(topic.clone()).or_default().push(report.test_r2);
        label_reports.push(SocioLabelReport {
            label,
            topic,
            n_areas: rows.len(),
            chosen_lambda: report.chosen_lambda,
            test_r2: report.test_r2,
            warnings: report.warnings,
        });
    }
    let topic_totals: BTreeMap<String, f64> = topic_values
        .into_iter()
        .map(|(t, vs)| {
            let mean = vs.iter().sum::<f64>() / vs.len() as f64;
            (t, mean)
        })
        .collect();
    let overall_total =
        label_reports.iter().map(|l| l.test_r2).sum::<f64>() / label_reports.len() as f64;
    let report = SocioReport {
        labels: label_reports,
        topic_totals,
        overall_total,
        areas_with_features: area_ids.len(),
    };
    echo_config_file(&a.out, cli)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "eval-socio: overall mean test R2 {:.4} over {} labels",
        report.overall_total,
        report.labels.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SafetyReport {
    n_labeled: usize,
    train_size: usize,
    test_size: usize,
    accuracy: f64,
    recall: f64,
    f1: f64,
    auc: Option<f64>,
}

fn cmd_eval_safety(cli: &Cli, a: &EvalSafetyArgs) -> Result<()> {
    let (embeddings, _) = EmbeddingSet::load(&a.embeddings)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&a.labels)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    if headers != ["id", "score"] {
        return Err(Error::Format(format!(
            "bad labels header: expected id,score got {}",
            headers.join(",")
        )));
    }
    let mut scores_by_id: BTreeMap<String, f64> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let id = row.get(0).unwrap_or("").to_string();
        let score: f64 = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Format(format!("labels row {}: bad score", i + 2)))?;
        scores_by_id.insert(id, score);
    }
    let missing: Vec<&str> = scores_by_id
        .keys()
        .filter(|id| embeddings.position(id).is_none())
        .map(|s| s.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnknownId(format!(
            "{} labeled ids have no embedding; first: {}",
            missing.len(),
            missing[0]
        )));
    }
    // Labeled subset in embedding order.
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    for (i, id) in embeddings.ids.iter().enumerate() {
        if let Some(&s) = scores_by_id.get(id) {
            rows.push(i);
            scores.push(s);
        }
    }
    let mut features = Array2::zeros((rows.len(), embeddings.dim()));
    for (r, &i) in rows.iter().enumerate() {
        features.row_mut(r).assign(&embeddings.matrix.row(i));
    }
    let mut task = ProbeTask::from_scores(&features, &scores, a.low, a.high)?;
    task.split_fraction = a.split;
    task.epochs = a.epochs;
    let out = train_linear_probe(&task, a.lr, a.seed)?;
    let metrics = classification_metrics(&out.test_scores, &out.test_labels, 0.5)?;
    let report = SafetyReport {
        n_labeled: task.labels.len(),
        train_size: out.train_size,
        test_size: out.test_size,
        accuracy: metrics.accuracy,
        recall: metrics.recall,
        f1: metrics.f1,
        auc: metrics.auc,
    };
    echo_config_file(&a.out, cli)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "eval-safety: accuracy {:.4} recall {:.4} f1 {:.4} auc {:?}",
        report.accuracy, report.recall, report.f1, report.auc
    );
    Ok(())
}

fn cmd_analyze_attn(cli: &Cli, a: &AnalyzeAttnArgs) -> Result<()> {
    let tensor = load_tensor_file(&a.tensor)?;
    let attn = AttentionTensor::from_tensor_file(&tensor)?;
    let distances = attention_distance(&attn)?;
    echo_config_dir(&a.out, cli)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(a.out.join("attention_by_head.csv"))?;
    w.write_record(["layer", "head", "value"])?;
    for (layer, head, value) in &distances.per_head {
        w.write_record([layer.to_string(), head.to_string(), value.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(a.out.join("attention_by_layer.csv"))?;
    w.write_record(["layer", "value"])?;
    for (layer, value) in &distances.per_layer {
        w.write_record([layer.to_string(), value.to_string()])?;
    }
    w.flush()?;
    println!("analyze-attn: {} layers x {} heads -> {}", attn.layers, attn.heads, a.out.display());
    Ok(())
}

fn cmd_analyze_freq(cli: &Cli, a: &AnalyzeFreqArgs) -> Result<()> {
    let tensor = load_tensor_file(&a.tensor)?;
    let fmap = FeatureMap::from_tensor_file(&tensor)?;
    let cfg = SpectrumConfig {
        low_cut: a.low_cut,
        high_cut: a.high_cut,
        log10: a.log10,
        ..Default::default()
    };
    let deltas = delta_log_amplitude(&fmap, &cfg)?;
    echo_config_dir(&a.out, cli)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(a.out.join("delta_log_amplitude.csv"))?;
    w.write_record(["layer", "value"])?;
    for (layer, value) in &deltas {
        w.write_record([layer.to_string(), value.to_string()])?;
    }
    w.flush()?;
    println!("analyze-freq: {} layers -> {}", fmap.layers, a.out.display());
    Ok(())
}

fn cmd_retrieve(cli: &Cli, a: &RetrieveArgs) -> Result<()> {
    let (embeddings, _) = EmbeddingSet::load(&a.embeddings)?;
    let records = load_metadata(&a.metadata)?;
    let result = retrieve_topk(&a.query_id, &embeddings, &records, a.k)?;
    echo_config_file(&a.out, cli)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&result)?)?;
    for hit in &result.hits {
        println!(
            "#{} {} cos_dist {:.4} geo {:.1} m year {} heading {}",
            hit.rank, hit.id, hit.cosine_distance, hit.geo_distance_m, hit.capture_year, hit.heading_deg
        );
    }
    Ok(())
}
