use std::path::{Path, PathBuf};
use std::process::ExitCode;

use causal_bias::audit::{
    self, AdjustMode, AuditConfig, BiasSelection, DataSource, SelftestOptions,
};
use causal_bias::error::{Error, ErrorClass};
use causal_bias::graph::CausalGraph;
use causal_bias::scm::{self, Axis, ScmSpec, SweepBias, SweepConfig};
use clap::{Args, Parser, Subcommand};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (report format 1)");

#[derive(Debug, Parser)]
#[command(name = "causal-bias", version = VERSION, about = "Measure confounding, selection, measurement and interaction bias in disparity estimates")]
struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute every applicable bias from data and a causal graph.
    Audit(AuditArgs),
    /// Evaluate a linear closed form over a parameter grid.
    Sweep(SweepArgs),
    /// Run the built-in oracle equivalence checks.
    Selftest(SelftestArgs),
    /// Sample a built-in generative model to CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Built-in generative model, e.g. binary-confounding.
    #[arg(long)]
    model: Option<String>,
    /// Model parameters as key=value pairs separated by commas.
    #[arg(long, default_value = "")]
    params: String,
    /// Number of samples drawn from the model.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    data: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Graph file.
    #[arg(long)]
    graph: PathBuf,
    /// Sensitive variable(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    sensitive: Vec<String>,
    /// Outcome variable; defaults to the node with role=outcome.
    #[arg(long)]
    outcome: Option<String>,
    /// `auto` or a comma separated subset of conf,sel,meas,int.
    #[arg(long, default_value = "auto")]
    bias: String,
    /// Adjust for each confounder separately or all jointly.
    #[arg(long, default_value = "each")]
    adjust: String,
    /// Rename CSV columns to graph nodes: column=node, comma separated.
    #[arg(long, value_delimiter = ',')]
    map: Vec<String>,
    #[arg(long, env = "CAUSAL_BIAS_SEED", default_value_t = 0)]
    seed: u64,
    /// Tolerance for entries whose two routes agree exactly.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Monte Carlo tolerance in units of 1/sqrt(n).
    #[arg(long, default_value_t = 3.0)]
    mc_multiplier: f64,
    /// Error mechanism P(t1|z0),P(t0|z1) when the latent confounder is not in the data.
    #[arg(long, value_delimiter = ',', value_name = "FP,FN")]
    error_mechanism: Vec<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// conf, sel or meas.
    #[arg(long)]
    bias: String,
    /// Axes as name=start:stop:step, comma separated.
    #[arg(long)]
    axes: String,
    /// Value of every parameter not on an axis.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    hold: f64,
    /// Use the standardized closed forms.
    #[arg(long)]
    std: bool,
    /// Grid CSV; slice files are written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, env = "CAUSAL_BIAS_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, env = "CAUSAL_BIAS_SEED", default_value_t = 0)]
    seed: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 2,
        ErrorClass::Structure => 3,
        ErrorClass::Numerical => 4,
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn model_structure(m: &ModelArgs, seed: u64) -> Result<scm::Structure, Error> {
    let name = m
        .model
        .as_deref()
        .ok_or_else(|| Error::InvalidQuery("--model is required".into()))?;
    audit::model_from_params(name, &audit::parse_assignments(&m.params)?, seed)
}

fn audit_cmd(args: &AuditArgs) -> Result<u8, Error> {
    let text = std::fs::read_to_string(&args.graph)
        .map_err(|e| Error::Io(format!("{}: {e}", args.graph.display())))?;
    let graph = CausalGraph::parse(&text)?;
    let data = match &args.data {
        Some(p) => DataSource::Csv(p.clone()),
        None => DataSource::Model {
            structure: model_structure(&args.model, args.seed)?,
            n: args.model.n,
        },
    };
    let mut config = AuditConfig::new(data, graph);
    config.sensitive = args.sensitive.clone();
    config.outcome = args.outcome.clone();
    config.biases = args.bias.parse::<BiasSelection>()?;
    config.adjust = args.adjust.parse::<AdjustMode>()?;
    config.seed = args.seed;
    config.exact_tolerance = args.tolerance;
    config.mc_multiplier = args.mc_multiplier;
    for m in &args.map {
        let (from, to) = m
            .split_once('=')
            .ok_or_else(|| Error::InvalidQuery(format!("--map entry `{m}` is not column=node")))?;
        config.map.push((from.trim().to_string(), to.trim().to_string()));
    }
    match args.error_mechanism[..] {
        [] => {}
        [fp, fnr] => config.error_mechanism = Some(causal_bias::closed_forms::ErrorMechanism::new(fp, fnr)?),
        _ => return Err(Error::InvalidQuery("--error-mechanism takes two values: FP,FN".into())),
    }
    let report = audit::run_audit(&config)?;
    for e in &report.entries {
        if e.within_tolerance == Some(false) {
            eprintln!(
                "warning: {:?} {} closed form and oracle differ by {:.3e} (tolerance {:.1e})",
                e.kind,
                e.label,
                e.abs_diff.unwrap_or(f64::NAN),
                e.tolerance.unwrap_or(f64::NAN)
            );
        }
        if let Some(note) = &e.note {
            eprintln!("note: {:?} {}: {note}", e.kind, e.label);
        }
    }
    write_output(args.out.as_deref(), &report.to_json())?;
    Ok(0)
}

fn sweep_cmd(args: &SweepArgs) -> Result<u8, Error> {
    let axes = args
        .axes
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Axis::parse)
        .collect::<Result<Vec<_>, _>>()?;
    let config = SweepConfig {
        bias: args.bias.parse::<SweepBias>()?,
        axes,
        hold: args.hold,
        standardized: args.std,
    };
    let out = audit::run_sweep(&config, &args.out)?;
    for cell in &out.singular {
        eprintln!("singular cell {:?}: {}", cell.coordinates, cell.message);
    }
    Ok(0)
}

fn selftest_cmd(args: &SelftestArgs) -> Result<u8, Error> {
    let report = audit::run_selftest(&SelftestOptions::new(args.seed));
    print!("{}", report.render());
    Ok(if report.passed() { 0 } else { 1 })
}

fn simulate_cmd(args: &SimulateArgs) -> Result<u8, Error> {
    let structure = model_structure(&args.model, args.seed)?;
    let data = scm::simulate(&ScmSpec::new(structure, args.model.n, args.seed)?)?;
    match &args.out {
        Some(path) => data.write_csv(path)?,
        None => data.write_csv_to(std::io::stdout().lock())?,
    }
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Audit(a) => audit_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Selftest(a) => selftest_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::InvalidQuery(format!("--threads: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn version_mentions_report_format() {
        assert!(VERSION.ends_with(&format!("(report format {})", audit::FORMAT_VERSION)));
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
