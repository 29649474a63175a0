//! Experiment runner.
//!
//! ```text
//! testbed run --template all --count 200 --predictors cv,p4p-norelation,p4p,nopredict --output out/
//! testbed run --scenarios scenarios/ --predictors p4p --threshold 0.9 --workers 8 --output out/
//! testbed compare out/cv.json out/p4p.json
//! testbed generate --template unprotected-left-turn --count 20 --output scenarios/
//! ```

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conflict_testbed::experiment::{
    compare, load_scenario_dir, run_predictor, scenarios_from_files, ExperimentSettings,
};
use conflict_testbed::geometry::STEP_SECONDS;
use conflict_testbed::predictor::PredictorKind;
use conflict_testbed::relation::{HeuristicModel, RelationModel, TableModel};
use conflict_testbed::results::{load_results, save_results};
use conflict_testbed::scenario::save_scenario;
use conflict_testbed::synthetic::{generate_batch, Template};

#[derive(Parser)]
#[command(name = "testbed", version, about = "Closed-loop predictor evaluation with conflict-aware metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out every scenario under each predictor and write one results file per predictor.
    Run(RunArgs),
    /// Print the comparison table of existing results files.
    Compare {
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
    /// Write synthetic scenario files.
    Generate(GenerateArgs),
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false)]
struct Source {
    /// Directory of scenario files (*.json).
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Synthetic templates, comma separated, or "all".
    #[arg(long, value_delimiter = ',', value_parser = parse_template)]
    template: Option<Vec<TemplateArg>>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Number of synthetic scenarios (with --template).
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Predictors to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_predictor, default_value = "cv,p4p-norelation,p4p,nopredict")]
    predictors: Vec<PredictorKind>,
    /// p_yield at or above which an agent is taken to yield.
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    /// Master seed for scenario generation and rollouts.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Closed-loop horizon in seconds.
    #[arg(long, default_value_t = 8.0)]
    horizon: f64,
    /// Output directory for results files and the comparison table.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Relation probabilities per (scenario, agent, step); the heuristic fills gaps.
    #[arg(long)]
    relation_table: Option<PathBuf>,
    /// Replay logged futures instead of reactive agents.
    #[arg(long)]
    log_replay: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_template, default_value = "all")]
    template: Vec<TemplateArg>,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also record constant-speed ground-truth futures.
    #[arg(long)]
    with_futures: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy)]
enum TemplateArg {
    All,
    One(Template),
}

fn parse_template(s: &str) -> Result<TemplateArg, String> {
    if s == "all" {
        return Ok(TemplateArg::All);
    }
    s.parse().map(TemplateArg::One).map_err(|e| e.to_string())
}

fn parse_predictor(s: &str) -> Result<PredictorKind, String> {
    s.parse().map_err(|e: conflict_testbed::predictor::PredictorError| e.to_string())
}

fn templates(args: &[TemplateArg]) -> Vec<Template> {
    if args.iter().any(|t| matches!(t, TemplateArg::All)) {
        return Template::ALL.to_vec();
    }
    let mut out = Vec::new();
    for t in args {
        if let TemplateArg::One(t) = t {
            if !out.contains(t) {
                out.push(*t);
            }
        }
    }
    out
}

type AnyResult<T> = Result<T, Box<dyn Error>>;

fn run(args: RunArgs) -> AnyResult<()> {
    let steps = args.horizon / STEP_SECONDS;
    if !(steps >= 1.0 && (steps - steps.round()).abs() < 1e-9) {
        return Err(format!("--horizon must be a positive multiple of {STEP_SECONDS} s").into());
    }
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err("--threshold must lie in [0, 1]".into());
    }
    let mut predictors = Vec::new();
    for p in args.predictors {
        if !predictors.contains(&p) {
            predictors.push(p);
        }
    }
    let (scenarios, source) = match (&args.source.scenarios, &args.source.template) {
        (Some(dir), _) => (load_scenario_dir(dir)?, format!("dir:{}", dir.display())),
        (None, Some(t)) => {
            let t = templates(t);
            let files = generate_batch(&t, args.count, args.seed, false)?;
            let names: Vec<&str> = t.iter().map(|t| t.name()).collect();
            (scenarios_from_files(&files)?, format!("synthetic:{}:{}", names.join(","), args.count))
        }
        (None, None) => unreachable!("clap requires a scenario source"),
    };
    let model: Box<dyn RelationModel> = match &args.relation_table {
        Some(p) => Box::new(TableModel::load(p)?),
        None => Box::new(HeuristicModel::default()),
    };
    let mut settings = ExperimentSettings {
        seed: args.seed,
        horizon_steps: steps.round() as usize,
        reactive: !args.log_replay,
        scenario_source: source,
        workers: args.workers,
        ..ExperimentSettings::default()
    };
    settings.predictor.relation_threshold = args.threshold;

    // Everything runs before anything is written.
    let mut results = Vec::with_capacity(predictors.len());
    for &p in &predictors {
        eprintln!("running {p} on {} scenarios", scenarios.len());
        results.push(run_predictor(&scenarios, p, model.as_ref(), &settings)?);
    }
    let table = compare(&results)?;
    fs::create_dir_all(&args.output).map_err(|e| format!("cannot create {}: {e}", args.output.display()))?;
    for r in &results {
        save_results(r, &args.output.join(format!("{}.json", r.config.predictor)))?;
    }
    let table_path = args.output.join("compare.txt");
    fs::write(&table_path, &table).map_err(|e| format!("cannot write {}: {e}", table_path.display()))?;
    print!("{table}");
    Ok(())
}

fn compare_files(paths: &[PathBuf]) -> AnyResult<()> {
    let results = paths.iter().map(|p| load_results(p)).collect::<Result<Vec<_>, _>>()?;
    print!("{}", compare(&results)?);
    Ok(())
}

fn generate(args: GenerateArgs) -> AnyResult<()> {
    let files = generate_batch(&templates(&args.template), args.count, args.seed, args.with_futures)?;
    fs::create_dir_all(&args.output).map_err(|e| format!("cannot create {}: {e}", args.output.display()))?;
    for f in &files {
        save_scenario(f, &scenario_path(&args.output, &f.scenario_id))?;
    }
    eprintln!("wrote {} scenarios to {}", files.len(), args.output.display());
    Ok(())
}

fn scenario_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare { results } => compare_files(&results),
        Command::Generate(a) => generate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
