use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nextgrade::eval::{SelectionConfig, SelectionMode};
use nextgrade::importance::{Grouping, SelectionRule};
use nextgrade::models::ModelFamily;
use nextgrade::pipeline::{rerender_report, run_evaluate, run_importance, run_synth, RunConfig};
use nextgrade::synth::SynthConfig;

const OUT_ENV: &str = "NEXTGRADE_OUT";

#[derive(Parser)]
#[command(name = "nextgrade", version, about = "Next-term grade prediction and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic transcript with planted effects.
    Synth(SynthArgs),
    /// Run the sequential per-term evaluation and write reports.
    Evaluate(RunArgs),
    /// Fit per-term models and write MADImp / Gini importance reports.
    Importance(ImportanceArgs),
    /// Re-render segment and heatmap CSVs from a report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
    /// JSON file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    students: Option<usize>,
    #[arg(long)]
    terms: Option<usize>,
    #[arg(long)]
    noise_features: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Transcript CSV to evaluate on.
    #[arg(long, conflicts_with = "synth")]
    input: Option<PathBuf>,
    /// Evaluate on the default synthetic dataset generated with this seed.
    #[arg(long)]
    synth: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = OUT_ENV)]
    output: Option<PathBuf>,
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    feature_policy: Option<PathBuf>,
    /// Leave summer terms out of the cohort×term heatmap.
    #[arg(long)]
    exclude_summers: bool,
    /// Enable MADImp feature selection for fm with this share threshold.
    #[arg(long)]
    select_threshold: Option<f64>,
    /// Enable MADImp feature selection for fm keeping the top N features.
    #[arg(long, conflicts_with = "select_threshold")]
    select_top: Option<usize>,
    /// Enable MADImp feature selection for fm keeping features with at least the uniform share.
    #[arg(long, conflicts_with_all = ["select_threshold", "select_top"])]
    select_above_mean: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Prequential)]
    select_mode: ModeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Prequential,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Block,
    Column,
}

#[derive(Args)]
struct ImportanceArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = GroupingArg::Block)]
    grouping: GroupingArg,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a report.json written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    /// Directory for the CSV tables; defaults to the report's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_models(names: &[String]) -> Result<Vec<ModelFamily>> {
    names
        .iter()
        .map(|n| n.trim().parse::<ModelFamily>().map_err(anyhow::Error::from))
        .collect()
}

fn build_config(args: &RunArgs, default_models: Option<Vec<ModelFamily>>) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            let Some(seed) = args.seed else {
                bail!("--seed is required without --config");
            };
            let Some(output) = args.output.clone() else {
                bail!("--output (or {OUT_ENV}) is required without --config");
            };
            RunConfig {
                input: None,
                synth: None,
                schema: Default::default(),
                models: ModelFamily::ALL.to_vec(),
                hyperparameters: Default::default(),
                feature_policy: None,
                output,
                seed,
                exclude_summers: false,
                feature_selection: None,
                terms: None,
            }
        }
    };
    if let Some(p) = &args.input {
        cfg.input = Some(p.clone());
        cfg.synth = None;
    }
    if let Some(s) = args.synth {
        cfg.synth = Some(SynthConfig { seed: s, ..SynthConfig::default() });
        cfg.input = None;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.output {
        cfg.output = o.clone();
    }
    if let Some(m) = &args.models {
        cfg.models = parse_models(m)?;
    } else if let Some(m) = default_models {
        cfg.models = m;
    }
    if let Some(p) = &args.feature_policy {
        cfg.feature_policy = Some(p.clone());
    }
    if args.exclude_summers {
        cfg.exclude_summers = true;
    }
    let rule = match (args.select_threshold, args.select_top, args.select_above_mean) {
        (Some(t), _, _) => Some(SelectionRule::Threshold(t)),
        (_, Some(n), _) => Some(SelectionRule::TopN(n)),
        (_, _, true) => Some(SelectionRule::AboveMean),
        _ => None,
    };
    if let Some(rule) = rule {
        let mode = match args.select_mode {
            ModeArg::Prequential => SelectionMode::Prequential,
            ModeArg::Global => SelectionMode::Global,
        };
        cfg.feature_selection = Some(SelectionConfig { mode, rule });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let mut cfg: SynthConfig = match &a.config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => SynthConfig::default(),
            };
            cfg.seed = a.seed;
            if let Some(n) = a.students {
                cfg.n_students = n;
            }
            if let Some(n) = a.terms {
                cfg.n_terms = n;
            }
            if let Some(n) = a.noise_features {
                cfg.n_noise_features = n;
            }
            let data = run_synth(&cfg, &a.out)?;
            eprintln!("wrote {} records to {}", data.records.len(), a.out.display());
        }
        Command::Evaluate(a) => {
            let cfg = build_config(&a, None)?;
            for e in run_evaluate(&cfg)? {
                let rmse = e.report.rmse("overall").map_or("n/a".to_string(), |r| format!("{r:.4}"));
                eprintln!("{:<12} overall RMSE {rmse}", e.family.name());
                for w in &e.report.warnings {
                    eprintln!("  warning: {w}");
                }
            }
        }
        Command::Importance(a) => {
            let cfg = build_config(&a.run, Some(vec![ModelFamily::Fm, ModelFamily::Pmlr, ModelFamily::Rf]))?;
            let grouping = match a.grouping {
                GroupingArg::Block => Grouping::Block,
                GroupingArg::Column => Grouping::Column,
            };
            for r in run_importance(&cfg, &cfg.models, grouping)? {
                eprintln!("{} ({})", r.model, r.method);
                for (f, s) in r.ranked().into_iter().take(10) {
                    eprintln!("  {f:<20} {:.4}", s.total);
                }
            }
        }
        Command::Report(a) => {
            let out = a
                .out
                .or_else(|| a.report.parent().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let r = rerender_report(&a.report, &out)?;
            eprintln!("re-rendered {} report into {}", r.model, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
