//! Random geometric sensor networks.
//!
//! Nodes are dropped uniformly on a square. Every ordered pair gets a
//! candidate amplitude, either deterministic path loss
//! `sqrt(P_j / d^eta)` or Rayleigh fading with `E[a^2] = P_j / (1 + d^2)`,
//! and the link exists when the amplitude reaches the hearing threshold.
//! Delays are `T_ij + d_ij / wave_speed`.
//!
//! Placement uses RNG stream `2k` and channel draws stream `2k + 1` of a
//! ChaCha8 generator seeded with `seed`, where `k` is the attempt index, so
//! a seed fixes the whole network bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectivity::{classify, ConnectivityClass};
use crate::digraph::{Digraph, Edge};
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    #[default]
    None,
    Rayleigh,
}

fn default_path_loss() -> f64 {
    2.0
}

fn default_wave_speed() -> f64 {
    SPEED_OF_LIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    /// Side of the square area, meters.
    pub area_side: f64,
    pub n: usize,
    /// Per-node transmit power; `None` means unit power everywhere.
    #[serde(default)]
    pub tx_power: Option<Vec<f64>>,
    #[serde(default = "default_path_loss")]
    pub path_loss_exponent: f64,
    /// Minimum received amplitude for a link to exist.
    #[serde(default)]
    pub hear_threshold: f64,
    #[serde(default)]
    pub fading: Fading,
    /// Clock offsets `T_ij` (row `i` = listener); `None` means zero.
    #[serde(default)]
    pub delay_offsets: Option<Vec<Vec<f64>>>,
    /// Propagation speed, m/s. Lowering it stretches delays without
    /// changing the geometry.
    #[serde(default = "default_wave_speed")]
    pub wave_speed: f64,
    #[serde(default)]
    pub seed: u64,
}

impl RadioConfig {
    pub fn new(n: usize, area_side: f64, seed: u64) -> Self {
        Self {
            area_side,
            n,
            tx_power: None,
            path_loss_exponent: default_path_loss(),
            hear_threshold: 0.0,
            fading: Fading::None,
            delay_offsets: None,
            wave_speed: SPEED_OF_LIGHT,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.area_side.is_finite() && self.area_side > 0.0) {
            return bad(format!("area side {} must be positive", self.area_side));
        }
        if self.n == 0 {
            return bad("node count must be positive".into());
        }
        if !(self.hear_threshold.is_finite() && self.hear_threshold >= 0.0) {
            return bad(format!(
                "hearing threshold {} must be nonnegative",
                self.hear_threshold
            ));
        }
        if !(self.wave_speed.is_finite() && self.wave_speed > 0.0) {
            return bad(format!("wave speed {} must be positive", self.wave_speed));
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent >= 0.0) {
            return bad(format!(
                "path-loss exponent {} must be nonnegative",
                self.path_loss_exponent
            ));
        }
        if let Some(p) = &self.tx_power {
            if p.len() != self.n || p.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return bad("tx_power must hold one positive value per node".into());
            }
        }
        if let Some(t) = &self.delay_offsets {
            if t.len() != self.n
                || t.iter().any(|row| row.len() != self.n)
                || t.iter().flatten().any(|&x| !(x.is_finite() && x >= 0.0))
            {
                return bad("delay_offsets must be an n x n matrix of nonnegative seconds".into());
            }
        }
        Ok(())
    }

    fn power(&self, j: usize) -> f64 {
        self.tx_power.as_ref().map_or(1.0, |p| p[j])
    }

    fn offset(&self, i: usize, j: usize) -> f64 {
        self.delay_offsets.as_ref().map_or(0.0, |t| t[i][j])
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub fn place_nodes(cfg: &RadioConfig) -> Result<Vec<Position>> {
    cfg.validate()?;
    Ok(place_with(cfg, &mut cfg.rng(0)))
}

fn place_with(cfg: &RadioConfig, rng: &mut ChaCha8Rng) -> Vec<Position> {
    (0..cfg.n)
        .map(|_| Position {
            x: rng.random_range(0.0..=cfg.area_side),
            y: rng.random_range(0.0..=cfg.area_side),
        })
        .collect()
}

pub fn build_channel(cfg: &RadioConfig, positions: &[Position]) -> Result<Digraph> {
    cfg.validate()?;
    build_with(cfg, positions, cfg.hear_threshold, &mut cfg.rng(1))
}

/// Rayleigh amplitude with `E[a^2] = power / (1 + d^2)`.
pub(crate) fn rayleigh_amplitude<R: Rng>(rng: &mut R, power: f64, distance: f64) -> f64 {
    let scale = (power / (2.0 * (1.0 + distance * distance))).sqrt();
    let uniform: f64 = rng.random();
    scale * (-2.0 * (1.0 - uniform).ln()).sqrt()
}

fn build_with(
    cfg: &RadioConfig,
    positions: &[Position],
    threshold: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Digraph> {
    if positions.len() != cfg.n {
        return Err(Error::InvalidParameter(format!(
            "{} positions for {} nodes",
            positions.len(),
            cfg.n
        )));
    }
    let mut edges = Vec::new();
    for i in 0..cfg.n {
        for j in 0..cfg.n {
            if i == j {
                continue;
            }
            let d = positions[i].distance(&positions[j]);
            let gain = match cfg.fading {
                Fading::None => {
                    if d == 0.0 && cfg.path_loss_exponent > 0.0 {
                        return Err(Error::CoincidentNodes(i, j));
                    }
                    (cfg.power(j) / d.powf(cfg.path_loss_exponent)).sqrt()
                }
                Fading::Rayleigh => rayleigh_amplitude(rng, cfg.power(j), d),
            };
            if gain >= threshold && gain > 0.0 {
                edges.push(Edge {
                    dst: i,
                    src: j,
                    gain,
                    delay_s: cfg.offset(i, j) + d / cfg.wave_speed,
                });
            }
        }
    }
    Digraph::new(cfg.n, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityTarget {
    Sc,
    Qsc,
}

impl ConnectivityTarget {
    fn accepts(self, class: ConnectivityClass) -> bool {
        match self {
            Self::Sc => class == ConnectivityClass::Sc,
            Self::Qsc => class.is_qsc(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectivitySearch {
    pub target: ConnectivityTarget,
    pub max_attempts: usize,
    /// Factor applied to the hearing threshold after each failed attempt.
    pub threshold_shrink: f64,
}

impl ConnectivitySearch {
    pub fn new(target: ConnectivityTarget) -> Self {
        Self {
            target,
            max_attempts: 32,
            threshold_shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedNetwork {
    pub graph: Digraph,
    pub positions: Vec<Position>,
    /// Hearing threshold that produced `graph`.
    pub threshold: f64,
    /// 1-based attempt index that succeeded.
    pub attempts: usize,
}

/// Redraws the network on fresh RNG streams, lowering the threshold after
/// each failure, until its class meets `search.target`.
pub fn ensure_connectivity(
    cfg: &RadioConfig,
    search: &ConnectivitySearch,
) -> Result<GeneratedNetwork> {
    cfg.validate()?;
    let mut threshold = cfg.hear_threshold;
    for attempt in 0..search.max_attempts {
        let stream = 2 * attempt as u64;
        let positions = place_with(cfg, &mut cfg.rng(stream));
        let graph = build_with(cfg, &positions, threshold, &mut cfg.rng(stream + 1))?;
        if search.target.accepts(classify(&graph).class) {
            return Ok(GeneratedNetwork {
                graph,
                positions,
                threshold,
                attempts: attempt + 1,
            });
        }
        threshold *= search.threshold_shrink;
    }
    Err(Error::ConnectivityBudgetExhausted {
        target: format!("{:?}", search.target).to_uppercase(),
        attempts: search.max_attempts,
    })
}
