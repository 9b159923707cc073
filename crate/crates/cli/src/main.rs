//! `shopseg` command-line front end.
//!
//! Exit status: 0 on success, 1 on validation or runtime errors, 2 on usage
//! errors. Diagnostics go to stderr; data goes to files under `--out` or to
//! stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use shopseg::pipeline::{self, ExpertBounds, RfmMode, SmPipelineModel};
use shopseg::syngen::{self, GeneratorConfig};
use shopseg::validity::{self, SelectionPolicy};
use shopseg::{features, txmodel, Assignment, Config, Dataset};

mod manifest;
mod report;

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "shopseg", version, about = "Customer segmentation from retail receipts")]
struct Cli {
    /// TOML run configuration (k-means, feature and report settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a receipts file and print a dataset summary.
    Ingest(IngestArgs),
    /// Recency / frequency / monetary segmentation.
    Rfm(RfmArgs),
    /// Purchased-product-structure segmentation.
    Pps(PpsArgs),
    /// Two-stage shopping-mission segmentation.
    Sm(SmArgs),
    /// Sweep k and tabulate variance ratio and Davies-Bouldin.
    SelectK(SelectKArgs),
    /// Purity matrix and crosstabs between assignment files.
    Compare(CompareArgs),
    /// Assign new receipts with a trained shopping-mission model.
    Score(ScoreArgs),
    /// Generate synthetic receipts with planted ground truth.
    Syngen(SyngenArgs),
    /// Heatmap payloads for center matrices and crosstabs of earlier runs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Receipt lines CSV.
    #[arg(long)]
    receipts: PathBuf,
    /// Category table CSV (`category_id,label`).
    #[arg(long)]
    categories: PathBuf,
    /// First day of the analysis window (YYYY-MM-DD, inclusive).
    #[arg(long)]
    window_start: NaiveDate,
    /// Last day of the analysis window (YYYY-MM-DD, inclusive).
    #[arg(long)]
    window_end: NaiveDate,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum RfmModeArg {
    Kmeans,
    Expert,
}

#[derive(Debug, Args, Serialize)]
struct RfmArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "kmeans")]
    mode: RfmModeArg,
    #[arg(long)]
    k: Option<usize>,
    /// `feature,edge` CSV with strictly increasing edges per feature.
    #[arg(long)]
    bounds_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PpsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SmArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of basket clusters (archetypes).
    #[arg(long, alias = "k")]
    k_basket: usize,
    /// Number of customer segments.
    #[arg(long)]
    k_customer: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FeatureSet {
    Rfm,
    Pps,
    SmBasket,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyArg {
    DbMin,
    VarianceElbow,
    ReportOnly,
}

impl From<PolicyArg> for SelectionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::DbMin => SelectionPolicy::DbMin,
            PolicyArg::VarianceElbow => SelectionPolicy::VarianceElbow,
            PolicyArg::ReportOnly => SelectionPolicy::ReportOnly,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SelectKArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    features: FeatureSet,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long)]
    k_max: usize,
    #[arg(long, value_enum, default_value = "db-min")]
    policy: PolicyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    /// Assignment CSVs (`entity_id,cluster`), or `FILE#column` for a
    /// ground-truth label column.
    #[arg(long, num_args = 2.., required = true)]
    assignments: Vec<String>,
    /// Display names, one per assignment file.
    #[arg(long, num_args = 1..)]
    names: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SyngenArgs {
    /// Generator TOML; defaults to the built-in 8-category configuration.
    #[arg(long)]
    generator_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    customers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Output directories of earlier `rfm`, `pps` or `sm` runs.
    #[arg(long, num_args = 1.., required = true)]
    run: Vec<PathBuf>,
    /// Assignment files to crosstab each run's segments against
    /// (`FILE` or `FILE#column`).
    #[arg(long, num_args = 1..)]
    compare_to: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn snapshot<T: Serialize>(args: &T, cfg: &Config) -> serde_json::Value {
    serde_json::json!({ "args": args, "config": cfg })
}

fn load_dataset(data: &DataArgs, manifest: Option<&mut RunManifest>) -> Result<(Dataset, txmodel::AnalysisWindow)> {
    let window = txmodel::AnalysisWindow::new(data.window_start, data.window_end)?;
    let dataset = txmodel::ingest_receipts(&data.receipts, &data.categories, window)?;
    if let Some(m) = manifest {
        m.add_input(&data.receipts)?;
        m.add_input(&data.categories)?;
    }
    Ok((dataset, window))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(std::io::BufWriter<std::fs::File>) -> shopseg::Result<()>,
{
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(std::io::BufWriter::new(file))?;
    Ok(())
}

/// Loads `FILE` as an assignment CSV, or `FILE#column` as a label column.
pub(crate) fn load_assignment(spec: &str) -> Result<Assignment> {
    match spec.rsplit_once('#') {
        Some((path, column)) => Ok(syngen::read_truth_labels(Path::new(path), column)?),
        None => {
            let file = std::fs::File::open(spec).with_context(|| format!("opening {spec}"))?;
            Assignment::read_csv(file).with_context(|| format!("reading {spec}"))
        }
    }
}

pub(crate) fn assignment_name(spec: &str) -> String {
    let (path, column) = match spec.rsplit_once('#') {
        Some((p, c)) => (p, Some(c)),
        None => (spec, None),
    };
    let p = Path::new(path);
    let stem = p
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = if stem == "assignments" {
        p.parent()
            .and_then(Path::file_name)
            .map_or(stem.clone(), |d| d.to_string_lossy().into_owned())
    } else {
        stem
    };
    match column {
        Some(c) => format!("{base}.{c}"),
        None => base,
    }
}

fn cmd_ingest(args: &IngestArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("ingest", snapshot(args, cfg), None);
    let (dataset, window) = load_dataset(&args.data, Some(&mut manifest))?;
    let histories = txmodel::build_histories(&dataset);
    let summary = serde_json::json!({
        "fingerprint": dataset.fingerprint(),
        "categories": dataset.categories().len(),
        "baskets": dataset.baskets().len(),
        "lines": dataset.n_lines(),
        "customers": histories.len(),
        "dropped_outside_window": dataset.dropped_outside_window(),
        "total_value": dataset.total_value().to_string(),
        "window_days": window.length_days(),
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    print!("{text}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        write_file(&out.join("summary.json"), &text)?;
        manifest.finish(out)?;
    }
    Ok(())
}

fn cmd_rfm(args: &RfmArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("rfm", snapshot(args, cfg), Some(args.seed));
    let (dataset, window) = load_dataset(&args.data, Some(&mut manifest))?;
    let mode = match args.mode {
        RfmModeArg::Kmeans => RfmMode::KMeans {
            k: args.k.context("--k is required in kmeans mode")?,
        },
        RfmModeArg::Expert => {
            let path = args
                .bounds_file
                .as_ref()
                .context("--bounds-file is required in expert mode")?;
            manifest.add_input(path)?;
            let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            RfmMode::Expert(ExpertBounds::read_csv(file)?)
        }
    };
    let outcome = pipeline::run_rfm(&dataset, &window, &mode, args.seed, cfg)?;
    outcome.report.write_to_dir(&args.out)?;
    write_with(&args.out.join("features.csv"), |w| outcome.features.write_csv(w))?;
    if let Some(model) = &outcome.model {
        write_file(&args.out.join("model.json"), &(model.to_json()? + "\n"))?;
    }
    for note in &outcome.report.notes {
        log::warn!("{note}");
    }
    manifest.finish(&args.out)
}

fn cmd_pps(args: &PpsArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("pps", snapshot(args, cfg), Some(args.seed));
    let (dataset, _) = load_dataset(&args.data, Some(&mut manifest))?;
    let outcome = pipeline::run_pps(&dataset, args.k, args.seed, cfg)?;
    outcome.report.write_to_dir(&args.out)?;
    write_with(&args.out.join("features.csv"), |w| outcome.features.write_csv(w))?;
    write_file(&args.out.join("model.json"), &(outcome.model.to_json()? + "\n"))?;
    for note in &outcome.report.notes {
        log::warn!("{note}");
    }
    manifest.finish(&args.out)
}

fn cmd_sm(args: &SmArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("sm", snapshot(args, cfg), Some(args.seed));
    let (dataset, _) = load_dataset(&args.data, Some(&mut manifest))?;
    let outcome = pipeline::run_sm(&dataset, args.k_basket, args.k_customer, args.seed, cfg)?;
    outcome.basket_report.write_to_dir(&args.out.join("basket"))?;
    outcome.customer_report.write_to_dir(&args.out.join("customer"))?;
    write_with(&args.out.join("basket_features.csv"), |w| {
        outcome.basket_features.write_csv(w)
    })?;
    write_with(&args.out.join("customer_features.csv"), |w| {
        outcome.customer_features.write_csv(w)
    })?;
    write_file(&args.out.join("sm_model.json"), &(outcome.model.to_json()? + "\n"))?;
    for note in outcome.basket_report.notes.iter().chain(&outcome.customer_report.notes) {
        log::warn!("{note}");
    }
    manifest.finish(&args.out)
}

fn cmd_select_k(args: &SelectKArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("select-k", snapshot(args, cfg), Some(args.seed));
    let (dataset, window) = load_dataset(&args.data, Some(&mut manifest))?;
    let histories = txmodel::build_histories(&dataset);
    let ids = dataset.category_ids();
    let matrix = match args.features {
        FeatureSet::Rfm => {
            let m = features::rfm_matrix(&features::rfm_features(&histories, &window));
            if cfg.features.standardize_rfm {
                m.standardized()
            } else {
                m
            }
        }
        FeatureSet::Pps => features::pps_matrix(&features::pps_features(&histories, &ids), &ids),
        FeatureSet::SmBasket => {
            let q = features::compute_q95(dataset.baskets())?;
            features::basket_sm_matrix(
                &features::basket_sm_features(dataset.baskets(), &ids, q),
                &ids,
                cfg.features.value_weight,
            )
        }
    };
    let sweep = validity::select_k(
        &matrix,
        args.k_min,
        args.k_max,
        &cfg.kmeans(args.k_min, args.seed),
        args.policy.into(),
    )?;
    let mut table = Vec::new();
    sweep.write_csv(&mut table)?;
    print!("{}", String::from_utf8(table.clone())?);
    match sweep.recommended {
        Some(k) => log::info!(
            "recommended k = {k} ({:?}); review the table before adopting it",
            sweep.policy
        ),
        None => log::info!("no recommendation under report_only"),
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("sweep.csv"), &table)?;
        let selection = serde_json::json!({ "policy": sweep.policy, "recommended": sweep.recommended });
        write_file(
            &out.join("selection.json"),
            &(serde_json::to_string_pretty(&selection)? + "\n"),
        )?;
        manifest.finish(out)?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("compare", snapshot(args, cfg), None);
    if !args.names.is_empty() && args.names.len() != args.assignments.len() {
        bail!("--names needs one name per assignment file");
    }
    let assignments = args
        .assignments
        .iter()
        .map(|s| load_assignment(s))
        .collect::<Result<Vec<_>>>()?;
    for spec in &args.assignments {
        manifest.add_input(Path::new(spec.rsplit_once('#').map_or(spec.as_str(), |(p, _)| p)))?;
    }
    let names: Vec<String> = if args.names.is_empty() {
        let mut names: Vec<String> = args.assignments.iter().map(|s| assignment_name(s)).collect();
        for i in 1..names.len() {
            if names[..i].contains(&names[i]) {
                names[i] = format!("{}_{}", names[i], i + 1);
            }
        }
        names
    } else {
        args.names.clone()
    };
    let purity = validity::purity_matrix(&assignments)?;

    let mut table = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut table);
        let mut header = vec!["purity".to_string()];
        header.extend(names.iter().cloned());
        wtr.write_record(&header)?;
        for (name, row) in names.iter().zip(&purity) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
    }
    print!("{}", String::from_utf8(table.clone())?);

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("purity.csv"), &table)?;
        let payload = serde_json::json!({ "row_labels": names, "column_labels": names, "values": purity });
        write_file(
            &out.join("purity.json"),
            &(serde_json::to_string_pretty(&payload)? + "\n"),
        )?;
        for i in 0..assignments.len() {
            for j in 0..assignments.len() {
                if i == j {
                    continue;
                }
                let ct = validity::crosstab(&assignments[i], &assignments[j])?;
                let stem = format!("crosstab_{}_vs_{}", names[i], names[j]);
                write_with(&out.join(format!("{stem}.csv")), |w| ct.write_csv(w))?;
                write_file(&out.join(format!("{stem}.json")), &(ct.to_heatmap_json()? + "\n"))?;
            }
        }
        manifest.finish(out)?;
    }
    Ok(())
}

fn cmd_score(args: &ScoreArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("score", snapshot(args, cfg), None);
    manifest.add_input(&args.model)?;
    let text = std::fs::read_to_string(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let model = SmPipelineModel::from_json(&text)?;
    let (dataset, _) = load_dataset(&args.data, Some(&mut manifest))?;
    let scored = pipeline::score(&model, &dataset)?;
    std::fs::create_dir_all(&args.out)?;
    write_with(&args.out.join("basket_assignments.csv"), |w| {
        scored.basket_assignment.write_csv(w)
    })?;
    write_with(&args.out.join(pipeline::ASSIGNMENTS_FILE), |w| {
        scored.customer_assignment.write_csv(w)
    })?;
    manifest.finish(&args.out)
}

fn cmd_syngen(args: &SyngenArgs, cfg: &Config) -> Result<()> {
    let mut manifest = RunManifest::start("syngen", snapshot(args, cfg), None);
    let mut gen = match &args.generator_config {
        Some(path) => {
            manifest.add_input(path)?;
            GeneratorConfig::from_toml(&std::fs::read_to_string(path)?)?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = args.seed {
        gen.seed = seed;
    }
    if let Some(n) = args.customers {
        gen.n_customers = n;
    }
    manifest.seed = Some(gen.seed);
    let data = syngen::generate(&gen)?;
    data.write_to_dir(&args.out)?;
    log::info!(
        "generated {} baskets for {} customers ({} .. {})",
        data.baskets.len(),
        gen.n_customers,
        data.window.start(),
        data.window.end()
    );
    manifest.config["generator"] = serde_json::to_value(&gen)?;
    manifest.finish(&args.out)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, &cfg),
        Command::Rfm(a) => cmd_rfm(a, &cfg),
        Command::Pps(a) => cmd_pps(a, &cfg),
        Command::Sm(a) => cmd_sm(a, &cfg),
        Command::SelectK(a) => cmd_select_k(a, &cfg),
        Command::Compare(a) => cmd_compare(a, &cfg),
        Command::Score(a) => cmd_score(a, &cfg),
        Command::Syngen(a) => cmd_syngen(a, &cfg),
        Command::Report(a) => report::cmd_report(a.run.as_slice(), &a.compare_to, &a.out, snapshot(a, &cfg)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage errors with status 2 and help/version with 0.
            e.exit();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
