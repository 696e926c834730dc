//! The two reference experiments: topology presets with a simulation versus
//! closed-form overlay, and the Monte-Carlo distributed ML study.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use selfsync_core::{
    centralized_ml, centralized_ml_std, detect_consensus, ensure_connectivity, ml_setup, predict,
    simulate, ConnectivitySearch, ConnectivityTarget, ConsensusPrediction, ConsensusVerdict,
    DelayMode, DetectorConfig, Digraph, Fading, InitialCondition, NodeParams, RadioConfig,
    SimConfig, Simulator,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Three strongly connected components in a chain; one root.
    Fig1a,
    /// Two root cycles, each with a tree hanging off it, both feeding a
    /// shared middle cycle.
    Fig1b,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1a" => Ok(Self::Fig1a),
            "fig1b" => Ok(Self::Fig1b),
            other => Err(format!(
                "unknown preset {other:?} (expected fig1a or fig1b)"
            )),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fig1a => "fig1a",
            Self::Fig1b => "fig1b",
        })
    }
}

/// Lag, in samples, of every preset link.
pub const PRESET_LAG: usize = 50;

impl Preset {
    /// The preset topology with every delay equal to `PRESET_LAG * ts`.
    pub fn graph(self, ts: f64) -> Digraph {
        let tau = PRESET_LAG as f64 * ts;
        let links: &[(usize, usize, f64)] = match self {
            Self::Fig1a => &[
                (1, 0, 1.0),
                (2, 1, 0.8),
                (0, 2, 1.2),
                (0, 1, 0.5),
                (4, 3, 0.9),
                (5, 4, 1.1),
                (3, 5, 0.7),
                (3, 4, 0.6),
                (7, 6, 1.0),
                (8, 7, 0.6),
                (6, 8, 1.3),
                (8, 6, 0.4),
                (3, 2, 0.8),
                (6, 5, 0.9),
                (7, 4, 0.5),
            ],
            Self::Fig1b => &[
                (1, 0, 1.0),
                (2, 1, 0.8),
                (0, 2, 1.2),
                (4, 3, 0.9),
                (5, 4, 1.1),
                (3, 5, 0.7),
                (3, 4, 0.6),
                (7, 6, 1.0),
                (8, 7, 0.6),
                (6, 8, 1.3),
                (6, 2, 0.8),
                (8, 5, 0.6),
                (9, 0, 1.0),
                (10, 3, 0.7),
            ],
        };
        let n = self.params().len();
        let tuples: Vec<_> = links.iter().map(|&(d, s, a)| (d, s, a, tau)).collect();
        Digraph::from_tuples(n, &tuples).expect("preset topology is valid")
    }

    pub fn params(self) -> NodeParams {
        let u = match self {
            Self::Fig1a => vec![1.0, 2.5, 4.0, 0.5, 3.0, 1.5, 2.0, 5.0, 3.5],
            Self::Fig1b => vec![1.0, 2.5, 4.0, 6.0, 5.0, 7.5, 2.0, 3.0, 3.5, 0.5, 1.5],
        };
        let c = match self {
            Self::Fig1a => vec![1.0, 2.0, 1.0, 1.5, 1.0, 1.0, 1.0, 0.5, 1.0],
            Self::Fig1b => vec![1.0, 2.0, 1.0, 1.0, 1.5, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0],
        };
        NodeParams::new(c, u).expect("preset parameters are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub k: f64,
    pub ts: f64,
    pub horizon: usize,
    /// Replace every delay by zero before simulating and predicting.
    pub zero_delays: bool,
    pub detector: DetectorConfig,
}

impl Default for Example1Config {
    fn default() -> Self {
        Self {
            k: 30.0,
            ts: 1e-3,
            horizon: 20_000,
            zero_delays: false,
            detector: DetectorConfig::default(),
        }
    }
}

/// Predicted and detected consensus value for one root component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCheck {
    pub root: Vec<usize>,
    pub predicted: f64,
    /// Mean detected derivative over the cluster members, when they all
    /// settled into one group.
    pub detected: Option<f64>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Report {
    pub prediction: ConsensusPrediction,
    pub verdict: ConsensusVerdict,
    pub clusters: Vec<ClusterCheck>,
}

/// Simulates `graph`, classifies the tail of the trajectory and lines each
/// detected group up with its closed-form value.
pub fn run_example1(
    graph: &Digraph,
    params: &NodeParams,
    cfg: &Example1Config,
    out_dir: Option<&Path>,
) -> CliResult<Example1Report> {
    let zeroed;
    let graph = if cfg.zero_delays {
        zeroed = graph.with_delays(|_| 0.0)?;
        &zeroed
    } else {
        graph
    };
    let sim = SimConfig {
        k: cfg.k,
        ts: cfg.ts,
        horizon: cfg.horizon,
        initial: InitialCondition::Zero,
    };
    let prediction = predict(graph, params, cfg.k, DelayMode::Quantized { ts: cfg.ts })?;
    let traj = simulate(graph, params, &sim)?;
    let verdict = detect_consensus(&traj, &cfg.detector);

    let clusters = prediction
        .clusters
        .iter()
        .map(|cl| {
            let detected = common_group_omega(&verdict, &cl.members);
            ClusterCheck {
                root: cl.root.clone(),
                predicted: cl.omega,
                detected,
                rel_error: detected.map(|d| ((d - cl.omega) / cl.omega).abs()),
            }
        })
        .collect();
    let report = Example1Report {
        prediction,
        verdict,
        clusters,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("trajectory.csv");
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        traj.write_csv(BufWriter::new(file))
            .map_err(|e| CliError::io(&path, e))?;
        write_text(&dir.join("prediction.json"), &report.prediction.to_json())?;
        write_text(&dir.join("report.json"), &to_pretty_json(&report))?;
    }
    Ok(report)
}

fn common_group_omega(verdict: &ConsensusVerdict, members: &[usize]) -> Option<f64> {
    match verdict {
        ConsensusVerdict::Global { omega } => Some(*omega),
        ConsensusVerdict::Clustered { groups, .. } => groups
            .iter()
            .find(|g| members.iter().all(|m| g.members.contains(m)))
            .map(|g| g.omega),
        ConsensusVerdict::None { .. } => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Example2Config {
    pub nodes: usize,
    pub runs: usize,
    pub seed: u64,
    pub k: f64,
    pub ts: f64,
    pub horizon: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    /// Delay of the longest possible link (the area diagonal), in samples.
    /// The propagation speed is solved from it.
    pub max_delay_steps: f64,
    pub hear_threshold: f64,
    pub tx_power: f64,
    /// Observation gain `A_i`, shared by all nodes.
    pub amplitude: f64,
    /// Noise variance `sigma_i^2`, shared by all nodes.
    pub noise_variance: f64,
    /// The parameter being estimated.
    pub xi: f64,
    pub zero_delays: bool,
    pub max_attempts: usize,
}

impl Default for Example2Config {
    fn default() -> Self {
        Self {
            nodes: 40,
            runs: 100,
            seed: 1,
            k: 30.0,
            ts: 1e-3,
            horizon: 20_000,
            area_side: 20.0,
            max_delay_steps: 100.0,
            hear_threshold: 0.05,
            tx_power: 1.0,
            amplitude: 1.0,
            noise_variance: 1.0,
            xi: 1.0,
            zero_delays: false,
            max_attempts: 32,
        }
    }
}

impl Example2Config {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.runs == 0 {
            return bad("at least one Monte-Carlo run is required");
        }
        if self.nodes == 0 {
            return bad("node count must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least one step");
        }
        if !(self.max_delay_steps.is_finite() && self.max_delay_steps > 0.0) {
            return bad("max_delay_steps must be positive");
        }
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return bad("noise variance must be positive");
        }
        Ok(())
    }

    pub fn wave_speed(&self) -> f64 {
        self.area_side * std::f64::consts::SQRT_2 / (self.max_delay_steps * self.ts)
    }

    fn radio(&self, seed: u64) -> RadioConfig {
        RadioConfig {
            tx_power: Some(vec![self.tx_power; self.nodes]),
            hear_threshold: self.hear_threshold,
            fading: Fading::Rayleigh,
            wave_speed: self.wave_speed(),
            ..RadioConfig::new(self.nodes, self.area_side, seed)
        }
    }
}

/// The four estimators tracked per step.
pub const CURVES: [&str; 4] = ["centralized", "no_delay", "delayed", "two_step"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub name: String,
    /// Mean over runs of the final-step estimate.
    pub final_mean: f64,
    /// Population standard deviation over runs of the final-step estimate.
    pub final_std: f64,
    pub final_bias: f64,
    pub final_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub runs: usize,
    pub horizon: usize,
    pub ts: f64,
    pub xi: f64,
    /// `1 / sum(A_i^2 / sigma_i^2)`.
    pub ml_variance: f64,
    pub curves: Vec<CurveStats>,
    /// Per-step mean over runs, `mean[curve][step]`.
    #[serde(skip)]
    pub mean: [Vec<f64>; 4],
    /// Per-step population standard deviation over runs.
    #[serde(skip)]
    pub std: [Vec<f64>; 4],
    /// Final-step value of each curve in each run.
    pub finals: Vec<[f64; 4]>,
}

impl McSummary {
    pub fn curve(&self, name: &str) -> &CurveStats {
        self.curves
            .iter()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("no curve named {name}"))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "step,mean_a,mean_b,mean_c,mean_d,std_a,std_b,std_c,std_d"
        )?;
        for s in 0..self.horizon {
            write!(w, "{s}")?;
            for series in self.mean.iter().chain(self.std.iter()) {
                write!(w, ",{:?}", series[s])?;
            }
            writeln!(w)?;
        }
        w.flush()
    }
}

/// Per-run node-averaged curves, `[curve][step]`.
struct RunCurves {
    curves: [Vec<f64>; 4],
}

/// Seed of run `r`: the `r`-th output of a generator keyed by the base seed,
/// so runs are independent of scheduling.
fn run_seed(base: u64, run: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_word_pos(2 * run as u128);
    rng.random()
}

/// Stream for observation noise; netgen only touches the low streams.
const NOISE_STREAM: u64 = u64::MAX;

fn one_run(cfg: &Example2Config, run: usize) -> CliResult<RunCurves> {
    let seed = run_seed(cfg.seed, run);
    let mut search = ConnectivitySearch::new(ConnectivityTarget::Sc);
    search.max_attempts = cfg.max_attempts;
    let net = ensure_connectivity(&cfg.radio(seed), &search)
        .map_err(|e| CliError::Run { run, source: e })?;
    let delayed = if cfg.zero_delays {
        net.graph.with_delays(|_| 0.0)?
    } else {
        net.graph
    };
    let undelayed = delayed.with_delays(|_| 0.0)?;

    let n = cfg.nodes;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(NOISE_STREAM);
    let noise = Normal::new(0.0, cfg.noise_variance.sqrt()).expect("variance checked");
    let a = vec![cfg.amplitude; n];
    let sigma2 = vec![cfg.noise_variance; n];
    let y: Vec<f64> = (0..n)
        .map(|_| cfg.amplitude * cfg.xi + noise.sample(&mut noise_rng))
        .collect();
    let params = ml_setup(&a, &sigma2, &y)?;
    let ones = params.with_unit_statistics();
    let ml = centralized_ml(&a, &sigma2, &y);

    let init = InitialCondition::Zero;
    let mut no_delay = Simulator::new(&undelayed, &params, cfg.k, cfg.ts, &init)?;
    let mut with_y = Simulator::new(&delayed, &params, cfg.k, cfg.ts, &init)?;
    let mut with_ones = Simulator::new(&delayed, &ones, cfg.k, cfg.ts, &init)?;

    let h = cfg.horizon;
    let mut curves = [vec![ml; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
    let inv_n = 1.0 / n as f64;
    for s in 0..h {
        curves[1][s] = no_delay.advance()?.iter().sum::<f64>() * inv_n;
        let dy = with_y.advance()?;
        curves[2][s] = dy.iter().sum::<f64>() * inv_n;
        let d1 = with_ones.advance()?;
        curves[3][s] = dy.iter().zip(d1).map(|(a, b)| a / b).sum::<f64>() * inv_n;
    }
    Ok(RunCurves { curves })
}

/// Runs the Monte-Carlo study in parallel and reduces the runs in index
/// order, so the result does not depend on thread scheduling.
pub fn run_example2(cfg: &Example2Config) -> CliResult<McSummary> {
    cfg.validate()?;
    let runs: Vec<RunCurves> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| one_run(cfg, r))
        .collect::<CliResult<_>>()?;

    let h = cfg.horizon;
    let count = runs.len() as f64;
    let mut mean: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
    let mut std: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
    for c in 0..4 {
        for s in 0..h {
            let m = runs.iter().map(|r| r.curves[c][s]).sum::<f64>() / count;
            let v = runs
                .iter()
                .map(|r| (r.curves[c][s] - m).powi(2))
                .sum::<f64>()
                / count;
            mean[c][s] = m;
            std[c][s] = v.sqrt();
        }
    }
    let finals: Vec<[f64; 4]> = runs
        .iter()
        .map(|r| std::array::from_fn(|c| r.curves[c][h - 1]))
        .collect();
    let curves = CURVES
        .iter()
        .enumerate()
        .map(|(c, name)| CurveStats {
            name: name.to_string(),
            final_mean: mean[c][h - 1],
            final_std: std[c][h - 1],
            final_bias: mean[c][h - 1] - cfg.xi,
            final_variance: std[c][h - 1].powi(2),
        })
        .collect();
    let ml_std = centralized_ml_std(
        &vec![cfg.amplitude; cfg.nodes],
        &vec![cfg.noise_variance; cfg.nodes],
    );
    Ok(McSummary {
        runs: cfg.runs,
        horizon: h,
        ts: cfg.ts,
        xi: cfg.xi,
        ml_variance: ml_std * ml_std,
        curves,
        mean,
        std,
        finals,
    })
}

pub(crate) fn to_pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization is infallible")
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}
