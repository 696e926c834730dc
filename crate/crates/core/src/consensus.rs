//! Closed-form synchronized derivatives, cluster prediction, two-pass
//! debiasing and decision statistics.
//!
//! For a root component `R` with left-null-vector block `gamma`, every node
//! reached only from `R` converges to
//!
//! ```text
//!            sum_{i in R} gamma_i c_i u_i
//! omega = ------------------------------------------------------------
//!         sum_{i in R} gamma_i c_i + K sum_{i in R} sum_j gamma_i a_ij tau_ij
//! ```
//!
//! Note that "K" is the coupling gain here; the number of clusters is simply
//! `clusters.len()`.

use serde::{Deserialize, Serialize};

use crate::connectivity::{analyze, ConnectivityClass, ConnectivityReport};
use crate::digraph::Digraph;
use crate::dynamics::{
    quantize_delays, simulate_and_detect, DetectorConfig, NodeParams, SimConfig,
};
use crate::error::{Error, Result};

/// Which delays enter the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// The graph's delays as stored.
    Nominal,
    /// Delays rounded to the simulator's lag grid, `round(tau / ts) * ts`.
    Quantized { ts: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPrediction {
    /// Nodes reached by this root component and no other.
    pub members: Vec<usize>,
    pub root: Vec<usize>,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusPrediction {
    pub class: ConnectivityClass,
    pub clusters: Vec<ClusterPrediction>,
    pub global_omega: Option<f64>,
    /// Nodes reached by two or more root components.
    pub unresolved: Vec<usize>,
}

impl ConsensusPrediction {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prediction serialization is infallible")
    }

    pub fn cluster_of(&self, node: usize) -> Option<&ClusterPrediction> {
        self.clusters.iter().find(|c| c.members.contains(&node))
    }
}

pub fn predict(
    g: &Digraph,
    params: &NodeParams,
    k: f64,
    delays: DelayMode,
) -> Result<ConsensusPrediction> {
    let report = analyze(g)?;
    predict_with_report(g, &report, params, k, delays)
}

/// [`predict`] reusing an existing connectivity report.
pub fn predict_with_report(
    g: &Digraph,
    report: &ConnectivityReport,
    params: &NodeParams,
    k: f64,
    delays: DelayMode,
) -> Result<ConsensusPrediction> {
    if params.len() != g.node_count() {
        return Err(Error::InvalidParameter(format!(
            "parameters describe {} nodes but the graph has {}",
            params.len(),
            g.node_count()
        )));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coupling gain {k} must be positive"
        )));
    }
    if let DelayMode::Quantized { ts } = delays {
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling interval {ts} must be positive"
            )));
        }
    }
    let edge_delays: Vec<f64> = match delays {
        DelayMode::Nominal => g.edges().iter().map(|e| e.delay_s).collect(),
        DelayMode::Quantized { ts } => {
            let q = quantize_delays(g, ts);
            (0..g.edge_count()).map(|e| q.delay(e)).collect()
        }
    };
    // Offsets of each node's incoming slice in the edge list.
    let mut offset = Vec::with_capacity(g.node_count());
    let mut acc = 0;
    for i in 0..g.node_count() {
        offset.push(acc);
        acc += g.incoming(i).len();
    }

    let classification = &report.classification;
    let gamma = &report.gamma;
    let component_of = &classification.decomposition.component_of;
    // Root components reaching each component.
    let root_ancestors: Vec<Vec<usize>> = classification
        .decomposition
        .ancestors()
        .into_iter()
        .map(|a| {
            a.into_iter()
                .filter(|c| classification.root_sccs.contains(c))
                .collect()
        })
        .collect();

    let mut clusters = Vec::with_capacity(classification.root_sccs.len());
    for &root_component in &classification.root_sccs {
        let root = classification.decomposition.sccs[root_component].clone();
        let weight: f64 = root.iter().map(|&i| gamma[i] * params.c[i]).sum();
        let mut average = 0.0;
        let mut delay_mass = 0.0;
        for &i in &root {
            average += (gamma[i] * params.c[i] / weight) * params.u[i];
            for (e, edge) in g.incoming(i).iter().enumerate() {
                delay_mass += gamma[i] * edge.gain * edge_delays[offset[i] + e];
            }
        }
        let members = (0..g.node_count())
            .filter(|&q| root_ancestors[component_of[q]] == [root_component])
            .collect();
        // Weights are normalized before touching u so that a single-node
        // root yields u_r exactly.
        let omega = average / (1.0 + k * delay_mass / weight);
        clusters.push(ClusterPrediction {
            members,
            root,
            omega,
        });
    }
    let unresolved = (0..g.node_count())
        .filter(|&q| root_ancestors[component_of[q]].len() > 1)
        .collect();
    let global_omega = match clusters.as_slice() {
        [only] => Some(only.omega),
        _ => None,
    };
    Ok(ConsensusPrediction {
        class: classification.class,
        clusters,
        global_omega,
        unresolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebiasMode {
    Simulated,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebiasOutcome {
    /// `omega(u) / omega(1)`.
    pub ratio: f64,
    pub omega_y: f64,
    pub omega_ones: f64,
}

const MIN_NORMALIZER: f64 = 1e-12;

/// Runs the dynamics with the given statistics and again with all-ones
/// statistics; the ratio of the two consensus derivatives cancels the
/// delay-dependent denominator.
pub fn debias_two_step(
    g: &Digraph,
    params: &NodeParams,
    cfg: &SimConfig,
    mode: DebiasMode,
    detector: &DetectorConfig,
) -> Result<DebiasOutcome> {
    let ones = params.with_unit_statistics();
    let (omega_y, omega_ones) = match mode {
        DebiasMode::Analytic => {
            let report = analyze(g)?;
            let delays = DelayMode::Quantized { ts: cfg.ts };
            let global = |p: &NodeParams| -> Result<f64> {
                predict_with_report(g, &report, p, cfg.k, delays)?
                    .global_omega
                    .ok_or_else(|| {
                        Error::NoGlobalConsensus(format!(
                            "graph is {}",
                            report.classification.class
                        ))
                    })
            };
            (global(params)?, global(&ones)?)
        }
        DebiasMode::Simulated => {
            let run = |p: &NodeParams| -> Result<f64> {
                let verdict = simulate_and_detect(g, p, cfg, detector)?;
                verdict.global_omega().ok_or_else(|| {
                    Error::NoGlobalConsensus(format!("detector verdict {verdict:?}"))
                })
            };
            let (a, b) = std::thread::scope(|s| {
                let first = s.spawn(|| run(params));
                let second = run(&ones);
                (first.join().expect("simulation thread panicked"), second)
            });
            (a?, b?)
        }
    };
    if !(omega_ones.abs() >= MIN_NORMALIZER) {
        return Err(Error::DegenerateNormalization(omega_ones));
    }
    Ok(DebiasOutcome {
        ratio: omega_y / omega_ones,
        omega_y,
        omega_ones,
    })
}

/// Outer function applied to the network-wide weighted average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionFunction {
    Identity,
    /// Turns an average of logarithms into a geometric mean.
    Exp,
    /// Detection test: 1 when the statistic reaches `lambda`, else 0.
    Threshold {
        lambda: f64,
    },
}

impl std::str::FromStr for DecisionFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "exp" => Ok(Self::Exp),
            _ => match s.strip_prefix("threshold:") {
                Some(l) => l
                    .parse()
                    .map(|lambda| Self::Threshold { lambda })
                    .map_err(|_| Error::InvalidParameter(format!("bad threshold level in {s:?}"))),
                None => Err(Error::InvalidParameter(format!(
                    "unknown decision function {s:?} (expected identity, exp or threshold:<level>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionStatistic {
    pub h: DecisionFunction,
    pub value: f64,
}

pub fn apply_decision(h: DecisionFunction, weighted_avg: f64) -> DecisionStatistic {
    let value = match h {
        DecisionFunction::Identity => weighted_avg,
        DecisionFunction::Exp => weighted_avg.exp(),
        DecisionFunction::Threshold { lambda } => {
            if weighted_avg >= lambda {
                1.0
            } else {
                0.0
            }
        }
    };
    DecisionStatistic { h, value }
}

/// Parameters for linear ML estimation of `xi` from `y_i = A_i xi + w_i`,
/// `w_i ~ N(0, sigma2_i)`: `u_i = y_i / A_i`, `c_i = A_i^2 / sigma2_i`.
pub fn ml_setup(a: &[f64], sigma2: &[f64], y: &[f64]) -> Result<NodeParams> {
    if a.len() != sigma2.len() || a.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "ML fields have mismatched lengths ({}, {}, {})",
            a.len(),
            sigma2.len(),
            y.len()
        )));
    }
    if let Some(i) = a.iter().position(|&ai| ai == 0.0 || !ai.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "A[{i}] = {} must be nonzero",
            a[i]
        )));
    }
    if let Some(i) = sigma2.iter().position(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "noise variance sigma2[{i}] = {} must be positive",
            sigma2[i]
        )));
    }
    let u = y.iter().zip(a).map(|(yi, ai)| yi / ai).collect();
    let c = a.iter().zip(sigma2).map(|(ai, s)| ai * ai / s).collect();
    NodeParams::new(c, u)
}

/// Centralized ML estimate `sum(A_i y_i / sigma2_i) / sum(A_i^2 / sigma2_i)`.
pub fn centralized_ml(a: &[f64], sigma2: &[f64], y: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(sigma2)
        .zip(y)
        .map(|((a, s), y)| a * y / s)
        .sum();
    let den: f64 = a.iter().zip(sigma2).map(|(a, s)| a * a / s).sum();
    num / den
}

/// Standard deviation of the centralized ML estimate, `1 / sqrt(sum A_i^2 / sigma2_i)`.
pub fn centralized_ml_std(a: &[f64], sigma2: &[f64]) -> f64 {
    let info: f64 = a.iter().zip(sigma2).map(|(a, s)| a * a / s).sum();
    info.sqrt().recip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(delay: f64) -> Digraph {
        Digraph::from_tuples(2, &[(0, 1, 1.0, delay), (1, 0, 1.0, delay)]).unwrap()
    }

    #[test]
    fn delay_free_prediction_is_weighted_average() {
        let g = Digraph::from_tuples(3, &[(0, 1, 2.0, 0.0), (1, 2, 1.0, 0.0), (2, 0, 0.5, 0.0)])
            .unwrap();
        let params = NodeParams::new(vec![1.0, 2.0, 3.0], vec![4.0, -1.0, 0.5]).unwrap();
        let report = analyze(&g).unwrap();
        let p = predict_with_report(&g, &report, &params, 30.0, DelayMode::Nominal).unwrap();
        let expected = params.weighted_average(&report.gamma);
        assert!((p.global_omega.unwrap() - expected).abs() < 1e-12);
        assert_eq!(p.clusters[0].members, vec![0, 1, 2]);
        assert!(p.unresolved.is_empty());
    }

    #[test]
    fn out_branching_follows_root() {
        let g = Digraph::from_tuples(4, &[(0, 3, 1.0, 0.2), (1, 0, 0.3, 0.1), (2, 0, 2.0, 0.05)])
            .unwrap();
        let params = NodeParams::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 7.5]).unwrap();
        let p = predict(&g, &params, 30.0, DelayMode::Nominal).unwrap();
        assert_eq!(p.global_omega, Some(7.5));
        assert_eq!(p.class, ConnectivityClass::QscNotSc);
    }

    #[test]
    fn two_node_delayed_prediction() {
        let p = predict(
            &two_node(0.5),
            &NodeParams::uniform(vec![0.0, 2.0]),
            1.0,
            DelayMode::Nominal,
        )
        .unwrap();
        assert!((p.global_omega.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quantized_mode_uses_rounded_delays() {
        // 0.26 s on a 0.1 s grid becomes 0.3 s.
        let g = two_node(0.26);
        let params = NodeParams::uniform(vec![0.0, 2.0]);
        let q = predict(&g, &params, 1.0, DelayMode::Quantized { ts: 0.1 }).unwrap();
        let expected = 2.0 / (2.0 + 0.6);
        assert!((q.global_omega.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn clusters_and_unresolved_nodes() {
        // roots {0,1} and {2,3}; node 4 hears both; node 5 hears only node 0.
        let g = Digraph::from_tuples(
            6,
            &[
                (0, 1, 1.0, 0.0),
                (1, 0, 1.0, 0.0),
                (2, 3, 1.0, 0.0),
                (3, 2, 1.0, 0.0),
                (4, 0, 1.0, 0.0),
                (4, 2, 1.0, 0.0),
                (5, 0, 1.0, 0.0),
            ],
        )
        .unwrap();
        let params = NodeParams::uniform(vec![1.0, 3.0, 10.0, 20.0, 0.0, 0.0]);
        let p = predict(&g, &params, 1.0, DelayMode::Nominal).unwrap();
        assert_eq!(p.global_omega, None);
        assert_eq!(p.clusters.len(), 2);
        assert_eq!(p.clusters[0].members, vec![0, 1, 5]);
        assert_eq!(p.clusters[1].members, vec![2, 3]);
        assert!((p.clusters[0].omega - 2.0).abs() < 1e-12);
        assert!((p.clusters[1].omega - 15.0).abs() < 1e-12);
        assert_eq!(p.unresolved, vec![4]);
    }

    #[test]
    fn prediction_json_shape() {
        let p = predict(
            &Digraph::from_tuples(2, &[(0, 1, 1.0, 0.0)]).unwrap(),
            &NodeParams::uniform(vec![1.0, 2.0]),
            1.0,
            DelayMode::Nominal,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["class"], "QSC_NOT_SC");
        assert_eq!(v["global_omega"], 2.0);
        assert_eq!(v["clusters"][0]["root"], serde_json::json!([1]));
        assert_eq!(v["clusters"][0]["members"], serde_json::json!([0, 1]));
        assert_eq!(v["unresolved"], serde_json::json!([]));
    }

    #[test]
    fn analytic_debias_two_node() {
        let cfg = SimConfig::new(1.0, 0.01, 100);
        let out = debias_two_step(
            &two_node(0.5),
            &NodeParams::uniform(vec![0.0, 2.0]),
            &cfg,
            DebiasMode::Analytic,
            &DetectorConfig::default(),
        )
        .unwrap();
        assert!((out.omega_y - 2.0 / 3.0).abs() < 1e-12);
        assert!((out.omega_ones - 2.0 / 3.0).abs() < 1e-12);
        assert!((out.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn debias_requires_global_consensus() {
        let g = Digraph::new(2, vec![]).unwrap();
        let err = debias_two_step(
            &g,
            &NodeParams::uniform(vec![1.0, 2.0]),
            &SimConfig::new(1.0, 0.01, 100),
            DebiasMode::Analytic,
            &DetectorConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoGlobalConsensus(_)));
    }

    #[test]
    fn decision_functions() {
        assert_eq!(
            apply_decision(DecisionFunction::Identity, 2.0 / 3.0).value,
            2.0 / 3.0
        );
        // geometric mean of (1, 4) through the average of logarithms
        let params = NodeParams::uniform(vec![1f64.ln(), 4f64.ln()]);
        let avg = params.weighted_average(&[1.0, 1.0]);
        assert!((apply_decision(DecisionFunction::Exp, avg).value - 2.0).abs() < 1e-15);
        let t = DecisionFunction::Threshold { lambda: 0.0 };
        assert_eq!(apply_decision(t, -0.2).value, 0.0);
        assert_eq!(apply_decision(t, 0.0).value, 1.0);
        assert_eq!(
            "threshold:0.5".parse::<DecisionFunction>().unwrap(),
            DecisionFunction::Threshold { lambda: 0.5 }
        );
        assert!("median".parse::<DecisionFunction>().is_err());
    }

    #[test]
    fn ml_setup_single_node() {
        let p = ml_setup(&[2.0], &[1.0], &[6.0]).unwrap();
        assert_eq!(p.u, vec![3.0]);
        assert_eq!(p.c, vec![4.0]);
        assert_eq!(p.weighted_average(&[1.0]), 3.0);
    }

    #[test]
    fn ml_setup_matches_centralized_estimate() {
        let (a, s, y) = ([1.0, 2.0], [1.0, 2.0], [1.0, 6.0]);
        let p = ml_setup(&a, &s, &y).unwrap();
        assert_eq!(p.c, vec![1.0, 2.0]);
        assert_eq!(p.u, vec![1.0, 3.0]);
        assert!((p.weighted_average(&[1.0, 1.0]) - 7.0 / 3.0).abs() < 1e-15);
        assert!((centralized_ml(&a, &s, &y) - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ml_setup_noiseless_recovers_parameter() {
        let a = [0.5, -2.0, 3.0];
        let y: Vec<f64> = a.iter().map(|ai| ai * 1.75).collect();
        let p = ml_setup(&a, &[1.0, 0.3, 4.0], &y).unwrap();
        assert!((p.weighted_average(&[1.0; 3]) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn ml_setup_rejects_zero_gain() {
        assert!(ml_setup(&[0.0], &[1.0], &[1.0]).is_err());
        assert!(ml_setup(&[1.0], &[0.0], &[1.0]).is_err());
        assert!(ml_setup(&[1.0, 2.0], &[1.0], &[1.0]).is_err());
    }
}
