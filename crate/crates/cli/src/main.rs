use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfsync_cli::config::{generate_graph, load_graph, load_params, ExperimentConfig};
use selfsync_cli::experiments::{run_example1, run_example2, Example1Config, Preset};
use selfsync_cli::{CliError, CliResult};
use selfsync_core::{
    analyze, debias_two_step, predict, simulate, DebiasMode, DelayMode, Digraph, NodeParams,
    SimConfig,
};

const DEFAULT_K: f64 = 30.0;
const DEFAULT_TS: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "selfsync",
    version,
    about = "Delayed self-synchronization consensus simulator"
)]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (stdout when omitted).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Connectivity class, SCCs and the left null vector of the Laplacian.
    Analyze {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Closed-form consensus values per root component.
    Predict {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        k: Option<f64>,
        /// Quantize delays to this sampling interval.
        #[arg(long)]
        ts: Option<f64>,
        /// Use the stored delays as they are.
        #[arg(long)]
        nominal: bool,
    },
    /// Integrate the dynamics and write the trajectory CSV.
    Simulate {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        dynamics: DynamicsArgs,
    },
    /// Delay-independent estimate from a pair of runs.
    Debias {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[arg(long, value_parser = parse_debias_mode)]
        mode: Option<DebiasMode>,
    },
    /// Simulation against closed form on a preset or user topology.
    Example1 {
        #[arg(long)]
        preset: Option<Preset>,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[arg(long)]
        zero_delays: bool,
        /// Directory for trajectory.csv, prediction.json and report.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Monte-Carlo distributed ML estimation over random radio networks.
    Example2 {
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        area_side: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        zero_delays: bool,
        /// Also write the summary statistics as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GraphArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Radio model JSON to generate the graph from.
    #[arg(long)]
    radio: Option<PathBuf>,
    /// Seed for the radio model.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ParamArgs {
    /// Node parameter JSON: {"c": [..], "u": [..]} or {"a": [..], "sigma2": [..], "y": [..]}.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct DynamicsArgs {
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    ts: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
}

fn parse_debias_mode(s: &str) -> Result<DebiasMode, String> {
    match s {
        "simulated" => Ok(DebiasMode::Simulated),
        "analytic" => Ok(DebiasMode::Analytic),
        other => Err(format!(
            "unknown mode {other:?} (expected simulated or analytic)"
        )),
    }
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn graph_from(args: &GraphArgs, cfg: &ExperimentConfig) -> CliResult<Digraph> {
    let seed = args.seed.or(cfg.seed);
    match (&args.graph, &args.radio) {
        (Some(_), Some(_)) => usage("--graph and --radio are mutually exclusive"),
        (Some(path), None) => load_graph(path),
        (None, Some(path)) => generate_graph(&selfsync_cli::config::read_json(path)?, seed),
        (None, None) => match (&cfg.graph, &cfg.radio) {
            (Some(_), Some(_)) => usage("config sets both graph and radio"),
            (Some(path), None) => load_graph(path),
            (None, Some(radio)) => generate_graph(radio, seed),
            (None, None) => usage("a graph is required (--graph or --radio)"),
        },
    }
}

fn params_from(args: &ParamArgs, cfg: &ExperimentConfig) -> CliResult<NodeParams> {
    match args.params.as_ref().or(cfg.params.as_ref()) {
        Some(path) => load_params(path),
        None => usage("node parameters are required (--params)"),
    }
}

fn sim_config(args: &DynamicsArgs, cfg: &ExperimentConfig) -> CliResult<SimConfig> {
    let Some(horizon) = args.horizon.or(cfg.horizon) else {
        return usage("--horizon is required");
    };
    if horizon == 0 {
        return usage("--horizon must be at least one step");
    }
    let mut sim = SimConfig::new(
        args.k.or(cfg.k).unwrap_or(DEFAULT_K),
        args.ts.or(cfg.ts).unwrap_or(DEFAULT_TS),
        horizon,
    );
    if let Some(init) = &cfg.initial {
        sim.initial = init.clone();
    }
    if let Err(e) = sim.validate() {
        return usage(e.to_string());
    }
    Ok(sim)
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            write(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(path, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serialization is infallible");
    emit(out, |w| writeln!(w, "{text}"))
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out = cli.out.as_deref().or(cfg.out.as_deref());

    match cli.command {
        Command::Analyze { graph } => {
            let g = graph_from(&graph, &cfg)?;
            emit_json(out, &analyze(&g)?)
        }
        Command::Predict {
            graph,
            params,
            k,
            ts,
            nominal,
        } => {
            if nominal && ts.is_some() {
                return usage("--nominal and --ts are contradictory");
            }
            let g = graph_from(&graph, &cfg)?;
            let p = params_from(&params, &cfg)?;
            let delays = match ts.or(cfg.ts) {
                Some(ts) if !nominal => DelayMode::Quantized { ts },
                _ => DelayMode::Nominal,
            };
            let pred = predict(&g, &p, k.or(cfg.k).unwrap_or(DEFAULT_K), delays)?;
            emit(out, |w| writeln!(w, "{}", pred.to_json()))
        }
        Command::Simulate {
            graph,
            params,
            dynamics,
        } => {
            let sim = sim_config(&dynamics, &cfg)?;
            let g = graph_from(&graph, &cfg)?;
            let p = params_from(&params, &cfg)?;
            let traj = simulate(&g, &p, &sim)?;
            emit(out, |w| traj.write_csv(w))
        }
        Command::Debias {
            graph,
            params,
            dynamics,
            mode,
        } => {
            let mode = mode.or(cfg.debias_mode).unwrap_or(DebiasMode::Simulated);
            let sim = match mode {
                DebiasMode::Simulated => sim_config(&dynamics, &cfg)?,
                DebiasMode::Analytic => SimConfig::new(
                    dynamics.k.or(cfg.k).unwrap_or(DEFAULT_K),
                    dynamics.ts.or(cfg.ts).unwrap_or(DEFAULT_TS),
                    1,
                ),
            };
            let g = graph_from(&graph, &cfg)?;
            let p = params_from(&params, &cfg)?;
            let detector = cfg.detector.unwrap_or_default();
            emit_json(out, &debias_two_step(&g, &p, &sim, mode, &detector)?)
        }
        Command::Example1 {
            preset,
            graph,
            params,
            dynamics,
            zero_delays,
            out_dir,
        } => {
            let defaults = Example1Config::default();
            let horizon = dynamics.horizon.or(cfg.horizon).unwrap_or(defaults.horizon);
            if horizon == 0 {
                return usage("--horizon must be at least one step");
            }
            let e1 = Example1Config {
                k: dynamics.k.or(cfg.k).unwrap_or(defaults.k),
                ts: dynamics.ts.or(cfg.ts).unwrap_or(defaults.ts),
                horizon,
                zero_delays: zero_delays || cfg.zero_delays.unwrap_or(false),
                detector: cfg.detector.unwrap_or(defaults.detector),
            };
            let user_graph = graph.graph.is_some() || graph.radio.is_some();
            let (g, p) = match preset.or(cfg.preset) {
                Some(_) if user_graph || params.params.is_some() => {
                    return usage("--preset cannot be combined with --graph, --radio or --params")
                }
                Some(pr) => (pr.graph(e1.ts), pr.params()),
                None => (graph_from(&graph, &cfg)?, params_from(&params, &cfg)?),
            };
            let report = run_example1(&g, &p, &e1, out_dir.as_deref())?;
            emit_json(out, &report)
        }
        Command::Example2 {
            runs,
            seed,
            nodes,
            horizon,
            area_side,
            threshold,
            zero_delays,
            summary,
        } => {
            let mut e2 = cfg.example2.clone().unwrap_or_default();
            let overrides = [
                (runs.or(cfg.mc_runs), &mut e2.runs),
                (nodes, &mut e2.nodes),
                (horizon.or(cfg.horizon), &mut e2.horizon),
            ];
            for (value, slot) in overrides {
                if let Some(v) = value {
                    *slot = v;
                }
            }
            if let Some(s) = seed.or(cfg.seed) {
                e2.seed = s;
            }
            if let Some(d) = area_side {
                e2.area_side = d;
            }
            if let Some(t) = threshold {
                e2.hear_threshold = t;
            }
            e2.zero_delays |= zero_delays || cfg.zero_delays.unwrap_or(false);
            let mc = run_example2(&e2)?;
            if let Some(path) = &summary {
                emit_json(Some(path), &mc)?;
            }
            emit(out, |w| mc.write_csv(w))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
