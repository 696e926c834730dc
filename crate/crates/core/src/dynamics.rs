//! Discrete-time integration of the delayed coupled integrators
//!
//! ```text
//! xdot_i(t) = u_i + (K / c_i) * sum_{j heard by i} a_ij * (x_j(t - tau_ij) - x_i(t))
//! ```
//!
//! by forward Euler with per-link integer lags, and detection of consensus on
//! the state derivative.

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::digraph::Digraph;
use crate::error::{Error, Result};

/// Per-node consensus weights `c` and local statistics `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub c: Vec<f64>,
    pub u: Vec<f64>,
}

impl NodeParams {
    pub fn new(c: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if c.len() != u.len() {
            return Err(Error::InvalidParameter(format!(
                "c has {} entries but u has {}",
                c.len(),
                u.len()
            )));
        }
        if let Some(i) = c.iter().position(|&ci| !(ci.is_finite() && ci > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "consensus weight c[{i}] = {} must be positive",
                c[i]
            )));
        }
        if let Some(i) = u.iter().position(|ui| !ui.is_finite()) {
            return Err(Error::InvalidParameter(format!("u[{i}] is not finite")));
        }
        Ok(Self { c, u })
    }

    /// Unit weights.
    pub fn uniform(u: Vec<f64>) -> Self {
        Self {
            c: vec![1.0; u.len()],
            u,
        }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Same weights with every statistic replaced by one.
    pub fn with_unit_statistics(&self) -> Self {
        Self {
            c: self.c.clone(),
            u: vec![1.0; self.u.len()],
        }
    }

    /// `sum(w_i c_i u_i) / sum(w_i c_i)`.
    pub fn weighted_average(&self, weights: &[f64]) -> f64 {
        let (num, den) = weights
            .iter()
            .zip(self.c.iter().zip(&self.u))
            .fold((0.0, 0.0), |(num, den), (&w, (&c, &u))| {
                (num + w * c * u, den + w * c)
            });
        num / den
    }

    fn check_against(&self, g: &Digraph) -> Result<()> {
        if self.len() != g.node_count() {
            return Err(Error::InvalidParameter(format!(
                "parameters describe {} nodes but the graph has {}",
                self.len(),
                g.node_count()
            )));
        }
        Ok(())
    }
}

/// History `x_i(t)` on `[-tau, 0]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    #[default]
    Zero,
    /// One constant per node.
    Constant(Vec<f64>),
    /// `samples[i][k]` is `x_i(-k * T_s)`; the oldest sample is held for
    /// lags beyond the supplied length.
    Sampled(Vec<Vec<f64>>),
}

impl InitialCondition {
    fn value(&self, node: usize, steps_back: usize) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(v) => v[node],
            Self::Sampled(s) => {
                let seq = &s[node];
                seq[steps_back.min(seq.len() - 1)]
            }
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        match self {
            Self::Zero => Ok(()),
            Self::Constant(v) if v.len() != n => bad(format!(
                "constant history has {} entries, expected {n}",
                v.len()
            )),
            Self::Constant(v) if v.iter().any(|x| !x.is_finite()) => {
                bad("constant history is not finite".into())
            }
            Self::Sampled(s) if s.len() != n => bad(format!(
                "sampled history has {} nodes, expected {n}",
                s.len()
            )),
            Self::Sampled(s) if s.iter().any(|seq| seq.is_empty()) => {
                bad("sampled history sequences must be non-empty".into())
            }
            Self::Sampled(s) if s.iter().flatten().any(|x| !x.is_finite()) => {
                bad("sampled history is not finite".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Global coupling gain.
    pub k: f64,
    /// Sampling interval in seconds.
    pub ts: f64,
    /// Number of Euler steps.
    pub horizon: usize,
    #[serde(default)]
    pub initial: InitialCondition,
}

impl SimConfig {
    pub fn new(k: f64, ts: f64, horizon: usize) -> Self {
        Self {
            k,
            ts,
            horizon,
            initial: InitialCondition::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling gain K = {} must be positive",
                self.k
            )));
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling interval {} must be positive",
                self.ts
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter(
                "horizon must be at least one step".into(),
            ));
        }
        Ok(())
    }
}

/// Integer lags `m = round_half_even(tau / T_s)`, aligned with
/// `Digraph::edges()`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDelays {
    pub ts: f64,
    pub lags: Vec<usize>,
    pub max_lag: usize,
}

impl QuantizedDelays {
    /// Effective delay `m * T_s` of edge `e`.
    pub fn delay(&self, e: usize) -> f64 {
        self.lags[e] as f64 * self.ts
    }

    /// The graph with every delay replaced by its quantized value.
    pub fn apply(&self, g: &Digraph) -> Digraph {
        let mut e = 0;
        g.with_delays(|_| {
            let d = self.delay(e);
            e += 1;
            d
        })
        .expect("quantized delays are finite and nonnegative")
    }
}

pub fn quantize_delays(g: &Digraph, ts: f64) -> QuantizedDelays {
    let lags: Vec<usize> = g
        .edges()
        .iter()
        .map(|e| (e.delay_s / ts).round_ties_even() as usize)
        .collect();
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    QuantizedDelays { ts, lags, max_lag }
}

// At 1 the Euler update stops being a convex combination of past states.
const STIFFNESS_WARN: f64 = 0.5;

/// Step-by-step integrator.
///
/// The state history lives in a ring of `max_lag + 1` snapshots so that
/// `x_j[n - m_ij]` is always available.
pub struct Simulator<'a> {
    graph: &'a Digraph,
    u: Vec<f64>,
    coupling: Vec<f64>,
    ts: f64,
    lags: Vec<usize>,
    ring: Vec<f64>,
    ring_len: usize,
    step: usize,
    deriv: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        graph: &'a Digraph,
        params: &NodeParams,
        k: f64,
        ts: f64,
        initial: &InitialCondition,
    ) -> Result<Self> {
        params.check_against(graph)?;
        let n = graph.node_count();
        initial.check(n)?;
        let q = quantize_delays(graph, ts);
        let ring_len = q.max_lag + 1;
        let mut ring = vec![0.0; ring_len * n];
        for back in 0..ring_len {
            let slot = (ring_len - back) % ring_len;
            for i in 0..n {
                ring[slot * n + i] = initial.value(i, back);
            }
        }
        let coupling: Vec<f64> = params.c.iter().map(|&c| k / c).collect();

        let stiffness = (0..n)
            .map(|i| ts * coupling[i] * graph.inflow(i))
            .fold(0.0, f64::max);
        if stiffness > STIFFNESS_WARN {
            log::warn!(
                "explicit Euler stiffness T_s*(K/c_i)*sum_j a_ij reaches {stiffness:.3} (> {STIFFNESS_WARN}); \
                 derivative transients may be poorly resolved"
            );
        }

        Ok(Self {
            graph,
            u: params.u.clone(),
            coupling,
            ts,
            lags: q.lags,
            ring,
            ring_len,
            step: 0,
            deriv: vec![0.0; n],
        })
    }

    /// Index of the next step to be taken.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Current state `x[step]`.
    pub fn state(&self) -> &[f64] {
        let n = self.graph.node_count();
        let slot = self.step % self.ring_len;
        &self.ring[slot * n..(slot + 1) * n]
    }

    /// Evaluates `xdot[step]`, advances to `x[step + 1]` and returns the
    /// derivative.
    pub fn advance(&mut self) -> Result<&[f64]> {
        let n = self.graph.node_count();
        let cur = self.step % self.ring_len;
        let next = (self.step + 1) % self.ring_len;
        let edges = self.graph.edges();
        let mut e = 0;
        for i in 0..n {
            let xi = self.ring[cur * n + i];
            let mut acc = 0.0;
            for edge in self.graph.incoming(i) {
                let lag = self.lags[e];
                let slot = (self.step + self.ring_len - lag) % self.ring_len;
                acc += edge.gain * (self.ring[slot * n + edge.src] - xi);
                e += 1;
            }
            let d = self.u[i] + self.coupling[i] * acc;
            if !d.is_finite() {
                return Err(Error::NonFiniteState {
                    step: self.step,
                    node: i,
                });
            }
            self.deriv[i] = d;
        }
        debug_assert_eq!(e, edges.len());
        // The next slot holds x[step - max_lag], which no later step reads.
        for i in 0..n {
            let x = self.ring[cur * n + i] + self.ts * self.deriv[i];
            if !x.is_finite() {
                return Err(Error::NonFiniteState {
                    step: self.step,
                    node: i,
                });
            }
            self.ring[next * n + i] = x;
        }
        self.step += 1;
        Ok(&self.deriv)
    }
}

/// Sampled states and derivatives, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub ts: f64,
    /// `horizon + 1` rows: `x[0] ..= x[horizon]`.
    states: Vec<f64>,
    /// `horizon` rows: `xdot[0] .. xdot[horizon - 1]`.
    derivs: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.derivs.len() / self.n
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.ts
    }

    pub fn state(&self, step: usize) -> &[f64] {
        &self.states[step * self.n..(step + 1) * self.n]
    }

    pub fn deriv(&self, step: usize) -> &[f64] {
        &self.derivs[step * self.n..(step + 1) * self.n]
    }

    pub fn final_derivs(&self) -> &[f64] {
        self.deriv(self.horizon() - 1)
    }

    /// CSV with header `t,x_0..x_{n-1},xdot_0..xdot_{n-1}` and one row per
    /// step; floats are written in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = String::from("t");
        for i in 0..self.n {
            header.push_str(&format!(",x_{i}"));
        }
        for i in 0..self.n {
            header.push_str(&format!(",xdot_{i}"));
        }
        writeln!(w, "{header}")?;
        let mut line = String::new();
        for step in 0..self.horizon() {
            line.clear();
            line.push_str(&format!("{:?}", self.time(step)));
            for v in self.state(step).iter().chain(self.deriv(step)) {
                line.push_str(&format!(",{v:?}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub fn simulate(g: &Digraph, params: &NodeParams, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut sim = Simulator::new(g, params, cfg.k, cfg.ts, &cfg.initial)?;
    let n = g.node_count();
    let mut states = Vec::with_capacity((cfg.horizon + 1) * n);
    let mut derivs = Vec::with_capacity(cfg.horizon * n);
    states.extend_from_slice(sim.state());
    for _ in 0..cfg.horizon {
        derivs.extend_from_slice(sim.advance()?);
        states.extend_from_slice(sim.state());
    }
    Ok(Trajectory {
        n,
        ts: cfg.ts,
        states,
        derivs,
    })
}

/// Runs `cfg.horizon` steps keeping only the trailing detector window, then
/// classifies it. Equivalent to `detect_consensus(&simulate(..)?, detector)`
/// without storing the trajectory.
pub fn simulate_and_detect(
    g: &Digraph,
    params: &NodeParams,
    cfg: &SimConfig,
    detector: &DetectorConfig,
) -> Result<ConsensusVerdict> {
    cfg.validate()?;
    let mut sim = Simulator::new(g, params, cfg.k, cfg.ts, &cfg.initial)?;
    let window = detector.window.max(1).min(cfg.horizon);
    let mut tail: VecDeque<Vec<f64>> = VecDeque::with_capacity(window);
    for _ in 0..cfg.horizon {
        let d = sim.advance()?;
        if tail.len() == window {
            let mut row = tail.pop_front().expect("window is non-empty");
            row.copy_from_slice(d);
            tail.push_back(row);
        } else {
            tail.push_back(d.to_vec());
        }
    }
    let rows: Vec<&[f64]> = tail.iter().map(Vec::as_slice).collect();
    Ok(detect_in_window(&rows, detector))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Number of trailing samples inspected.
    pub window: usize,
    /// Maximum derivative range over the window for a settled node,
    /// relative to the derivative scale.
    pub eps_drift: f64,
    /// Maximum gap between neighbouring settled values within one group,
    /// relative to the derivative scale.
    pub eps_sync: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: 200,
            eps_drift: 1e-8,
            eps_sync: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeGroup {
    pub members: Vec<usize>,
    /// Mean terminal derivative of the members.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsensusVerdict {
    Global {
        omega: f64,
    },
    Clustered {
        groups: Vec<DerivativeGroup>,
        unsettled: Vec<usize>,
    },
    None {
        unsettled: Vec<usize>,
    },
}

impl ConsensusVerdict {
    pub fn global_omega(&self) -> Option<f64> {
        match self {
            Self::Global { omega } => Some(*omega),
            _ => None,
        }
    }

    /// The group containing `node`, if it settled.
    pub fn group_of(&self, node: usize) -> Option<DerivativeGroup> {
        match self {
            Self::Global { omega } => Some(DerivativeGroup {
                members: Vec::new(),
                omega: *omega,
            }),
            Self::Clustered { groups, .. } => {
                groups.iter().find(|g| g.members.contains(&node)).cloned()
            }
            Self::None { .. } => None,
        }
    }
}

/// Classifies the last `cfg.window` derivative samples (all samples if the
/// trajectory is shorter).
pub fn detect_consensus(traj: &Trajectory, cfg: &DetectorConfig) -> ConsensusVerdict {
    let h = traj.horizon();
    let start = h.saturating_sub(cfg.window.max(1));
    let rows: Vec<&[f64]> = (start..h).map(|s| traj.deriv(s)).collect();
    detect_in_window(&rows, cfg)
}

/// Same as [`detect_consensus`] on an explicit window of derivative rows
/// (oldest first).
pub fn detect_in_window(rows: &[&[f64]], cfg: &DetectorConfig) -> ConsensusVerdict {
    let Some(last) = rows.last() else {
        return ConsensusVerdict::None {
            unsettled: Vec::new(),
        };
    };
    let n = last.len();
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let mut settled = Vec::new();
    let mut unsettled = Vec::new();
    for i in 0..n {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[i]), hi.max(r[i]))
            });
        if hi - lo <= cfg.eps_drift * scale {
            settled.push(i);
        } else {
            unsettled.push(i);
        }
    }

    settled.sort_by(|&a, &b| last[a].total_cmp(&last[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &settled {
        match groups.last_mut() {
            Some(g) if last[i] - last[*g.last().unwrap()] <= cfg.eps_sync * scale => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let mut groups: Vec<DerivativeGroup> = groups
        .into_iter()
        .map(|mut members| {
            let omega = members.iter().map(|&i| last[i]).sum::<f64>() / members.len() as f64;
            members.sort_unstable();
            DerivativeGroup { members, omega }
        })
        .collect();
    groups.sort_by_key(|g| g.members[0]);

    if unsettled.is_empty() && groups.len() == 1 {
        ConsensusVerdict::Global {
            omega: groups[0].omega,
        }
    } else if groups.len() >= 2 {
        ConsensusVerdict::Clustered { groups, unsettled }
    } else {
        ConsensusVerdict::None { unsettled }
    }
}
