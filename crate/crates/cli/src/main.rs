//! `riskgen`: train naturalness models, generate scenario sets at chosen
//! risk levels, score an ego across them, and replay stored scenarios.
//!
//! Exit codes: 0 ok, 1 usage or other error, 2 too few training events,
//! 3 missing model, 4 simulation abort, 5 incomplete score grid,
//! 6 missing record.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riskgen::naturalness::{FlowModel, TrainConfig};
use riskgen::pipeline::{self, RunConfig, TrainSource};
use riskgen::scenario::{builtin_catalog, to_config_string};
use riskgen::scoring::DEFAULT_OMEGAS;
use riskgen::Error;

#[derive(Parser)]
#[command(name = "riskgen", version, about = "Traffic scenario generation at a chosen risk level")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a naturalness model for one logical scenario
    Train(TrainArgs),
    /// Search scenario sets at one or more risk levels
    Generate(GenerateArgs),
    /// Score a complete grid of generated cells
    Score(ScoreArgs),
    /// Re-simulate a stored scenario record
    Replay(ReplayArgs),
    /// List the built-in logical scenarios
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Catalog id or scenario config path
    #[arg(long)]
    ls: String,
    /// NGSIM-style trajectory CSV
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    csv: Option<PathBuf>,
    /// Number of synthetic episodes instead of a CSV
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    /// Model path, default models/<ls>.flow
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    ls: String,
    /// Comma-separated risk levels in [0, 1]
    #[arg(long, value_delimiter = ',', value_parser = parse_omega)]
    omega: Vec<f64>,
    /// Population size
    #[arg(short = 'N', long)]
    population: Option<usize>,
    /// Iterations
    #[arg(short = 'M', long)]
    iterations: Option<usize>,
    #[arg(long)]
    c_spec: Option<f64>,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run config (TOML); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default models/<ls>.flow
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Risk levels of the grid
    #[arg(long, value_delimiter = ',', value_parser = parse_omega)]
    omega: Vec<f64>,
    /// Scenario ids of the grid, default the whole catalog
    #[arg(long, value_delimiter = ',')]
    ls: Vec<String>,
    #[arg(long, default_value_t = riskgen::scoring::DEFAULT_N_S)]
    n_s: usize,
}

#[derive(Args)]
struct ReplayArgs {
    /// A scenario_<k>.record file
    #[arg(long)]
    record: PathBuf,
    #[arg(long, default_value = "replay")]
    out: PathBuf,
}

#[derive(Args)]
struct CatalogArgs {
    /// Also write one config file per scenario into this directory
    #[arg(long)]
    write: Option<PathBuf>,
}

fn parse_omega(s: &str) -> Result<f64, String> {
    let w: f64 = s.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    if (0.0..=1.0).contains(&w) {
        Ok(w)
    } else {
        Err(format!("{w} is outside [0, 1]"))
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8) -> impl Fn(Error) -> Failure {
    move |e| Failure { code, message: e.to_string() }
}

type Outcome = Result<(), Failure>;

fn threads() -> Result<usize, Failure> {
    match std::env::var("OSG_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| Failure {
            code: 1,
            message: format!("OSG_THREADS must be a non-negative integer, got {v:?}"),
        }),
        Err(_) => Ok(0),
    }
}

fn train(a: TrainArgs) -> Outcome {
    let ls = pipeline::resolve_ls(&a.ls).map_err(fail(1))?;
    let source = match (a.csv, a.synthetic) {
        (Some(path), _) => TrainSource::Csv(path),
        (None, Some(episodes)) => TrainSource::Synthetic { episodes },
        (None, None) => unreachable!("clap requires one source"),
    };
    let mut cfg = TrainConfig::default();
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let (model, report) = pipeline::train(&ls, &source, &cfg, a.seed).map_err(|e| match e {
        Error::TooFewSamples { .. } | Error::Empty(_) => fail(2)(e),
        e => fail(1)(e),
    })?;
    let out = a.out.unwrap_or_else(|| Path::new("models").join(format!("{}.flow", ls.id)));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| fail(1)(Error::Empty(format!("{}: {e}", dir.display()))))?;
    }
    model.save(&out).map_err(fail(1))?;
    let report_path = out.with_extension("report.toml");
    let text = toml::to_string(&report).expect("report serializes");
    std::fs::write(&report_path, text).map_err(|e| Failure { code: 1, message: format!("{}: {e}", report_path.display()) })?;
    println!(
        "{}: {} samples, validation log-likelihood {:.4}, epochs {} -> {}",
        ls.id,
        report.n_samples,
        report.final_validation_loglik,
        report.epochs_run,
        out.display()
    );
    Ok(())
}

fn generate(a: GenerateArgs) -> Outcome {
    let threads = threads()?;
    let ls = pipeline::resolve_ls(&a.ls).map_err(fail(1))?;
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) })?;
            toml::from_str::<RunConfig>(&text).map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) })?
        }
        None => RunConfig::default(),
    };
    if !a.omega.is_empty() {
        cfg.omegas = a.omega;
    }
    cfg.population = a.population.unwrap_or(cfg.population);
    cfg.iterations = a.iterations.unwrap_or(cfg.iterations);
    cfg.c_spec = a.c_spec.unwrap_or(cfg.c_spec);
    cfg.n_s = a.n_s.unwrap_or(cfg.n_s);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.validate().map_err(fail(1))?;

    let model_path = a.model.unwrap_or_else(|| Path::new("models").join(format!("{}.flow", ls.id)));
    let bytes = std::fs::read(&model_path).map_err(|e| Failure {
        code: 3,
        message: format!("model {}: {e}", model_path.display()),
    })?;
    let model = FlowModel::from_text(&String::from_utf8_lossy(&bytes)).map_err(fail(3))?;
    let cells = pipeline::generate(&ls, &model, &bytes, &cfg, &a.out, threads).map_err(|e| match e {
        Error::Evaluation { .. } => fail(4)(e),
        e => fail(1)(e),
    })?;
    for c in cells {
        let i = c.indicators;
        println!("{} omega={} Q={:.2} CR={} ACT={} ACD={}", c.scenario_id, c.omega, c.q, i.cr, i.act_s, i.acd_m);
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Outcome {
    let ids: Vec<String> = if a.ls.is_empty() { builtin_catalog().into_iter().map(|ls| ls.id).collect() } else { a.ls };
    let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
    let omegas = if a.omega.is_empty() { DEFAULT_OMEGAS.to_vec() } else { a.omega };
    let missing = pipeline::missing_cells(&a.out, &ids, &omegas);
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|(id, w)| format!("({id}, {w})")).collect();
        return Err(Failure { code: 5, message: format!("incomplete grid, missing {}", list.join(" ")) });
    }
    let book = pipeline::score(&a.out, &ids, &omegas, a.n_s).map_err(fail(1))?;
    print!("{:<8}", "omega");
    for id in &ids {
        print!("{id:>9}");
    }
    println!();
    for &w in &omegas {
        print!("{w:<8}");
        for c in book.cells.iter().filter(|c| c.omega == w) {
            print!("{:>9.2}", c.q);
        }
        println!();
    }
    println!("total Q = {:.2}", book.total);
    Ok(())
}

fn replay(a: ReplayArgs) -> Outcome {
    if !a.record.is_file() {
        return Err(Failure { code: 6, message: format!("no record at {}", a.record.display()) });
    }
    let r = pipeline::replay(&a.record, &a.out).map_err(fail(1))?;
    println!(
        "minTTC {} s, {} collision(s); wrote {} and {}",
        r.risk.min_ttc_s,
        r.risk.collision_count,
        r.trace_path.display(),
        r.ttc_path.display()
    );
    Ok(())
}

fn catalog(a: CatalogArgs) -> Outcome {
    for ls in builtin_catalog() {
        let names: Vec<&str> = ls.parameters.iter().map(|p| p.name.as_str()).collect();
        println!("{:<7} D={} {}", ls.id, ls.dim(), names.join(","));
        if let Some(dir) = &a.write {
            let path = dir.join(format!("{}.toml", ls.id));
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(&path, to_config_string(&ls)))
                .map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Score(a) => score(a),
        Command::Replay(a) => replay(a),
        Command::Catalog(a) => catalog(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
