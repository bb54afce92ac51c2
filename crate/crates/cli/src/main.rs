use std::path::PathBuf;
use std::process::ExitCode;

use afem::driver::{self, AfemConfig, AfemTrace, Mode, Strategy, TraceField};
use afem::Error;
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "afem", version, about = "Adaptive finite elements for clustered eigenvalues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop and write the trace.
    Run(RunArgs),
    /// Fit a log-log slope to a trace CSV.
    Fit(FitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// square, lshape, oscillator or file:<spec.json>
    #[arg(long, default_value = "square")]
    problem: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    degree: u8,
    /// Dörfler parameter in (0, 1); 0.5 is the tested default.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// 1-based index of the tracked cluster.
    #[arg(long, conflicts_with = "first_n")]
    cluster: Option<usize>,
    /// Expected multiplicity of the tracked cluster.
    #[arg(long, default_value_t = 1)]
    multiplicity: usize,
    /// Track the first N eigenvalues instead of one cluster.
    #[arg(long)]
    first_n: Option<usize>,
    #[arg(long, default_value_t = 50_000)]
    max_dof: usize,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    /// Bisections per marked element.
    #[arg(long = "b", default_value_t = 1)]
    bisections: u32,
    #[arg(long, default_value_t = 1e-10)]
    eig_tol: f64,
    /// Relative gap below which eigenvalues are grouped into one cluster.
    #[arg(long, default_value_t = 1e-3)]
    cluster_tol: f64,
    /// Uniform refinements of the coarse mesh (problem default if omitted).
    #[arg(long)]
    pre_refine: Option<usize>,
    /// Refine every element instead of Dörfler marking.
    #[arg(long)]
    uniform: bool,
    /// Skip the gap computation against the exact eigenspace.
    #[arg(long)]
    no_gap: bool,
    /// Write 0 in the seconds column so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Trace CSV output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Trace JSON output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Log-log SVG plot output.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Directory for per-iteration VTK meshes.
    #[arg(long)]
    mesh_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Trace CSV written by `afem run`.
    trace: PathBuf,
    /// Column to fit: eta, eta2, osc2, gap2, lambda_<i>, n_dofs, n_elements, ...
    #[arg(long, default_value = "eta2")]
    y: String,
    #[arg(long, default_value = "n_dofs")]
    x: String,
    /// Use the last `window` rows.
    #[arg(long, default_value_t = 6)]
    window: usize,
    /// Fit |lambda - exact| when the column is an eigenvalue.
    #[arg(long)]
    exact: Option<f64>,
}

fn field(name: &str, exact: Option<f64>) -> anyhow::Result<TraceField> {
    Ok(match name {
        "iter" => TraceField::Iteration,
        "n_elements" => TraceField::Elements,
        "added_elements" => TraceField::ElementsAdded,
        "n_dofs" => TraceField::Dofs,
        "marked" => TraceField::Marked,
        "eta" => TraceField::Eta,
        "eta2" => TraceField::Eta2,
        "osc2" => TraceField::Osc2,
        "gap2" => TraceField::Gap2,
        "seconds" => TraceField::Seconds,
        _ => match name.strip_prefix("lambda_").and_then(|i| i.parse::<usize>().ok()) {
            Some(member) => match exact {
                Some(exact) => TraceField::LambdaError { member, exact },
                None => TraceField::Lambda(member),
            },
            None => bail!("unknown trace column '{name}'"),
        },
    })
}

fn config(args: &RunArgs) -> AfemConfig {
    let mode = match (args.first_n, args.cluster) {
        (Some(n), _) => Mode::FirstN(n),
        (None, index) => Mode::Cluster {
            index: index.unwrap_or(1),
            multiplicity: args.multiplicity,
        },
    };
    AfemConfig {
        problem: args.problem.clone(),
        degree: args.degree as usize,
        theta: args.theta,
        bisections: args.bisections,
        mode,
        strategy: if args.uniform { Strategy::Uniform } else { Strategy::Dorfler },
        max_dof: args.max_dof,
        max_iterations: args.max_iterations,
        eig_tol: args.eig_tol,
        compute_gap: !args.no_gap,
        cluster_tol: args.cluster_tol,
        pre_refinements: args.pre_refine,
        include_timing: !args.no_timing,
        mesh_out: args.mesh_out.clone(),
        ..Default::default()
    }
}

fn summarize(trace: &AfemTrace) {
    let Some(last) = trace.last() else { return };
    println!(
        "{}: {} iterations, stopped by {:?}; {} elements, {} DOFs",
        trace.problem,
        trace.rows.len(),
        trace.stop,
        last.n_elements,
        last.n_dofs
    );
    for (i, l) in last.lambdas.iter().enumerate() {
        println!("  lambda_{} = {l}", trace.first_index + i + 1);
    }
    println!("  eta2 = {:e}, osc2 = {:e}", last.eta2, last.osc2);
    if let Some(g) = last.gap2 {
        println!("  gap2 = {g:e}");
    }
    if let Ok(s) = driver::fit_slope(trace, TraceField::Eta, TraceField::Dofs, 6) {
        println!("  eta slope vs DOFs over the last 6 iterations: {s:.3}");
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let trace = driver::run_afem(&config(&args))?;
    if let Some(path) = &args.trace {
        trace.write_csv(path)?;
    }
    if let Some(path) = &args.json {
        trace.write_json(path)?;
    }
    if let Some(path) = &args.plot {
        driver::emit_plot(&trace, path)?;
    }
    summarize(&trace);
    Ok(())
}

fn fit(args: FitArgs) -> anyhow::Result<()> {
    let rows = driver::read_csv(&args.trace).with_context(|| format!("reading {}", args.trace.display()))?;
    let n = rows.len();
    let trace = AfemTrace {
        problem: String::new(),
        degree: 1,
        first_index: 0,
        rows,
        cluster_sizes: vec![Vec::new(); n],
        stop: driver::StopReason::MaxIterations,
        final_mesh: None,
    };
    let slope = driver::fit_slope(&trace, field(&args.y, args.exact)?, field(&args.x, None)?, args.window)?;
    println!("{slope}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e @ Error::ClusterIdentityLost(_)) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Fit(args) => match fit(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
