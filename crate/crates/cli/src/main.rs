//! `dimred` command-line tool: synthetic data, single reductions and the
//! leave-one-out benchmark.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use dimred::data::{apply_normalization, fit_normalization, load_csv, load_csv_multi, write_csv};
use dimred::synthgen::{generate, generate_multi, MultiTaskSpec, SynthSpec};
use dimred::{
    emit_report, run_benchmark, Affect, BenchmarkConfig, Dataset, ModalityData, NormalizationMode, PipelineConfig,
    Reducer, ReducerKind, ReportFormat,
};

/// Share of NCA weight mass the selected features must cover.
const NCA_MASS: f64 = 0.95;

#[derive(Parser)]
#[command(name = "dimred", version, about = "Feature selection and dimensionality reduction benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset with planted informative features.
    Synth(SynthArgs),
    /// Fit one reducer on a labeled CSV and write the reduced matrix.
    Reduce(ReduceArgs),
    /// Run the leave-one-out benchmark over modalities, affects and methods.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Informative columns per label column.
    #[arg(long)]
    informative: usize,
    #[arg(long, default_value_t = 2.0)]
    sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write one label column per affect instead of a single `label`.
    #[arg(long, value_delimiter = ',', value_parser = parse_affect)]
    affects: Option<Vec<Affect>>,
    /// Also write the planted column indices as JSON.
    #[arg(long)]
    planted: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long, value_parser = parse_method)]
    method: ReducerKind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "label")]
    label: String,
    /// Reduced CSV; defaults to `<stem>.<method>.csv` next to the input.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fitted-reducer JSON; defaults to `<stem>.<method>.json`.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pipeline settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Scale with training-fold statistics only.
    PerFold,
    /// Scale with statistics over every row before splitting.
    PaperNormalization,
}

#[derive(Args)]
struct EvaluateArgs {
    /// `NAME=PATH`, repeated once per modality.
    #[arg(long = "modality", required = true, value_parser = parse_modality)]
    modalities: Vec<(String, PathBuf)>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<ReducerKind>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_affect)]
    affects: Option<Vec<Affect>>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Label column used when a file has no per-affect columns.
    #[arg(long, default_value = "label")]
    label: String,
    /// Benchmark settings as JSON; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "report.md")]
    markdown: PathBuf,
    #[arg(long, default_value = "report.csv")]
    csv: PathBuf,
    /// Per-fold records as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<ReducerKind, String> {
    s.trim().parse().map_err(|e: dimred::Error| e.to_string())
}

fn parse_affect(s: &str) -> Result<Affect, String> {
    s.trim().parse().map_err(|e: dimred::Error| e.to_string())
}

fn parse_modality(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Compute(String),
}

impl From<dimred::Error> for Failure {
    fn from(e: dimred::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("DIMRED_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("DIMRED_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Compute(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let mut buf = Vec::new();
    let planted = match &a.affects {
        None => {
            let (ds, planted) = generate(&SynthSpec {
                n_samples: a.n,
                n_features: a.d,
                n_informative: a.informative,
                separation: a.sep,
                seed: a.seed,
            })
            .map_err(|e| Failure::Usage(e.to_string()))?;
            write_csv(&mut buf, &ds.features, &ds.feature_names, &[("label", &ds.labels)])?;
            json!({ "label": planted })
        }
        Some(affects) => {
            let data = generate_multi(&MultiTaskSpec {
                n_samples: a.n,
                n_features: a.d,
                informative_per_task: vec![a.informative; affects.len()],
                separation: a.sep,
                seed: a.seed,
            })
            .map_err(|e| Failure::Usage(e.to_string()))?;
            let labels: Vec<(&str, _)> = affects.iter().map(|af| af.name()).zip(&data.labels).collect();
            write_csv(&mut buf, &data.features, &data.feature_names, &labels)?;
            let map: serde_json::Map<_, _> = affects
                .iter()
                .zip(&data.planted)
                .map(|(af, p)| (af.name().to_string(), json!(p)))
                .collect();
            serde_json::Value::Object(map)
        }
    };
    write_file(&a.out, &buf)?;
    if let Some(path) = &a.planted {
        write_file(path, pretty(&planted).as_bytes())?;
    }
    Ok(())
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value");
    s.push('\n');
    s
}

fn default_output(input: &Path, method: ReducerKind, ext: &str) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    input.with_file_name(format!("{stem}.{}.{ext}", method.name()))
}

fn cmd_reduce(a: ReduceArgs) -> Result<(), Failure> {
    let cfg: PipelineConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    let ds = load_csv(&a.input, &a.label)?;
    // Reducers expect inputs in [0, 1]; there is no held-out row here, so
    // the scaling uses every row.
    let norm = fit_normalization(&ds.features);
    let scaled = ds.with_features(apply_normalization(&ds.features, &norm)?, ds.feature_names.clone())?;
    let reducer = Reducer::fit(a.method, &scaled, &cfg, a.seed)?;

    let names = reducer.output_names(&ds.feature_names);
    let mut buf = Vec::new();
    match reducer.selected_features() {
        // Selections keep the original values of the chosen columns.
        Some([]) => write_labels_only(&mut buf, &a.label, &ds)?,
        Some(cols) => write_csv(&mut buf, &ds.features.select_columns(cols)?, &names, &[(&a.label, &ds.labels)])?,
        None => match reducer {
            Reducer::Raw { .. } => write_csv(&mut buf, &ds.features, &names, &[(&a.label, &ds.labels)])?,
            _ => write_csv(&mut buf, &reducer.apply(&scaled.features)?, &names, &[(&a.label, &ds.labels)])?,
        },
    }
    let out = a.out.clone().unwrap_or_else(|| default_output(&a.input, a.method, "csv"));
    let sidecar = a.sidecar.clone().unwrap_or_else(|| default_output(&a.input, a.method, "json"));
    write_file(&out, &buf)?;
    write_file(&sidecar, pretty(&describe(&a, &ds, &cfg, &reducer, &names)).as_bytes())?;
    Ok(())
}

fn write_labels_only(buf: &mut Vec<u8>, label: &str, ds: &Dataset) -> Result<(), Failure> {
    let mut s = format!("{label}\n");
    for l in ds.labels.as_slice() {
        s.push_str(&format!("{l}\n"));
    }
    buf.write_all(s.as_bytes()).map_err(|e| Failure::Compute(e.to_string()))
}

fn describe(
    a: &ReduceArgs,
    ds: &Dataset,
    cfg: &PipelineConfig,
    reducer: &Reducer,
    names: &[String],
) -> serde_json::Value {
    let mut v = json!({
        "method": a.method.name(),
        "input": a.input.display().to_string(),
        "label": a.label,
        "seed": a.seed,
        "n_samples": ds.n_samples(),
        "n_features": ds.n_features(),
        "output_dim": reducer.output_dim(),
        "output_columns": names,
        "params": cfg,
        "model": reducer,
    });
    let extra = match reducer {
        Reducer::Raw { .. } => json!({}),
        Reducer::Pca { model } => json!({ "m": model.retained_m, "eigenvalues": model.eigenvalues }),
        Reducer::ReliefF { model } => json!({
            "m": model.pca.retained_m,
            "weights": model.weights.weights,
            "indices": model.features,
        }),
        Reducer::Sfs { result } => json!({ "indices": result.selected, "cv_trace": result.cv_trace }),
        Reducer::Mrmr { selection } => json!({
            "m": selection.chosen_m,
            "indices": selection.chosen(),
            "order": selection.order,
            "scores": selection.scores,
        }),
        Reducer::Nca { result } => json!({
            "indices": result.selected,
            "weights": result.weights,
            "mass_cut": NCA_MASS,
            "converged": result.converged,
        }),
    };
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v
}

/// Reads one modality file. Files with per-affect label columns use them;
/// otherwise the `label` column stands in for every requested affect.
fn load_modality(name: &str, path: &Path, label: &str, affects: &[Affect]) -> Result<ModalityData, Failure> {
    let header = fs::read_to_string(path)
        .map_err(|e| Failure::Compute(format!("cannot read {}: {e}", path.display())))?
        .lines()
        .next()
        .unwrap_or("")
        .split(',')
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let per_affect = Affect::ALL.iter().all(|a| header.iter().any(|h| h == a.name()));
    if per_affect {
        let cols: Vec<&str> = Affect::ALL.iter().map(|a| a.name()).collect();
        let table = load_csv_multi(path, &cols)?;
        Ok(ModalityData {
            name: name.to_string(),
            features: table.features,
            feature_names: table.feature_names,
            labels: Affect::ALL.into_iter().zip(table.labels.into_iter().map(|(_, l)| l)).collect(),
        })
    } else {
        let ds = load_csv(path, label)?;
        Ok(ModalityData {
            name: name.to_string(),
            labels: affects.iter().map(|&a| (a, ds.labels.clone())).collect(),
            features: ds.features,
            feature_names: ds.feature_names,
        })
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let mut cfg: BenchmarkConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    if let Some(af) = &a.affects {
        cfg.affects = af.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    match a.mode {
        Some(Mode::PerFold) => cfg.pipeline.mode = NormalizationMode::PerFold,
        Some(Mode::PaperNormalization) => cfg.pipeline.mode = NormalizationMode::Global,
        None => {}
    }
    let mut seen = std::collections::BTreeSet::new();
    for (name, _) in &a.modalities {
        if !seen.insert(name) {
            return Err(Failure::Usage(format!("modality {name} given twice")));
        }
    }
    let inputs = a
        .modalities
        .iter()
        .map(|(name, path)| load_modality(name, path, &a.label, &cfg.affects))
        .collect::<Result<Vec<_>, _>>()?;
    let report = run_benchmark(&inputs, &cfg)?;
    let md = emit_report(&report, ReportFormat::Markdown)?;
    write_file(&a.markdown, md.as_bytes())?;
    write_file(&a.csv, emit_report(&report, ReportFormat::Csv)?.as_bytes())?;
    if let Some(p) = &a.json {
        write_file(p, pretty(&report).as_bytes())?;
    }
    print!("{md}");
    Ok(())
}
