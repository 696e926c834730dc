//! Strongly connected components, connectivity class and the left null
//! vector of the Laplacian.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::digraph::{laplacian, Digraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectivityClass {
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "QSC_NOT_SC")]
    QscNotSc,
    #[serde(rename = "WC_NOT_QSC")]
    WcNotQsc,
    #[serde(rename = "DISCONNECTED")]
    Disconnected,
}

impl ConnectivityClass {
    /// Some node reaches every node (SC or QSC).
    pub fn is_qsc(self) -> bool {
        matches!(self, Self::Sc | Self::QscNotSc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sc => "SC",
            Self::QscNotSc => "QSC_NOT_SC",
            Self::WcNotQsc => "WC_NOT_QSC",
            Self::Disconnected => "DISCONNECTED",
        }
    }
}

impl std::fmt::Display for ConnectivityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// SCC partition plus the condensation DAG.
///
/// Components are numbered by their smallest member, and members are sorted.
/// A condensation edge `(dst, src)` means some node of component `dst` hears
/// some node of component `src`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SccDecomposition {
    pub sccs: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
    pub condensation: Vec<(usize, usize)>,
}

impl SccDecomposition {
    /// Components with no inflow from other components.
    pub fn sources(&self) -> Vec<usize> {
        let mut has_inflow = vec![false; self.sccs.len()];
        for &(dst, _) in &self.condensation {
            has_inflow[dst] = true;
        }
        (0..self.sccs.len()).filter(|&c| !has_inflow[c]).collect()
    }

    /// For every component, the set of components that reach it (itself
    /// included), as a sorted list.
    pub fn ancestors(&self) -> Vec<Vec<usize>> {
        let k = self.sccs.len();
        let mut reached: Vec<BTreeSet<usize>> = (0..k).map(|c| BTreeSet::from([c])).collect();
        let mut children = vec![Vec::new(); k];
        for &(dst, src) in &self.condensation {
            children[src].push(dst);
        }
        for start in 0..k {
            let mut stack = vec![start];
            let mut seen = vec![false; k];
            seen[start] = true;
            while let Some(c) = stack.pop() {
                for &d in &children[c] {
                    if !seen[d] {
                        seen[d] = true;
                        reached[d].insert(start);
                        stack.push(d);
                    }
                }
            }
        }
        reached
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect()
    }
}

pub fn scc_decompose(g: &Digraph) -> SccDecomposition {
    let n = g.node_count();
    let mut pg = DiGraph::<(), ()>::with_capacity(n, g.edge_count());
    let ids: Vec<_> = (0..n).map(|_| pg.add_node(())).collect();
    for e in g.edges() {
        pg.add_edge(ids[e.src], ids[e.dst], ());
    }
    let mut sccs: Vec<Vec<usize>> = petgraph::algo::tarjan_scc(&pg)
        .into_iter()
        .map(|c| {
            let mut members: Vec<usize> = c.into_iter().map(|ix| ix.index()).collect();
            members.sort_unstable();
            members
        })
        .collect();
    sccs.sort_unstable_by_key(|c| c[0]);

    let mut component_of = vec![0; n];
    for (c, members) in sccs.iter().enumerate() {
        for &v in members {
            component_of[v] = c;
        }
    }
    let condensation: BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .map(|e| (component_of[e.dst], component_of[e.src]))
        .filter(|(d, s)| d != s)
        .collect();

    SccDecomposition {
        sccs,
        component_of,
        condensation: condensation.into_iter().collect(),
    }
}

/// Combinatorial part of the connectivity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    #[serde(flatten)]
    pub decomposition: SccDecomposition,
    pub class: ConnectivityClass,
    /// Indices into `decomposition.sccs` of the components with no inflow.
    pub root_sccs: Vec<usize>,
    pub balanced: bool,
}

impl Classification {
    pub fn sccs(&self) -> &[Vec<usize>] {
        &self.decomposition.sccs
    }

    pub fn root_members(&self) -> impl Iterator<Item = &[usize]> {
        self.root_sccs
            .iter()
            .map(|&c| self.decomposition.sccs[c].as_slice())
    }
}

const BALANCE_RTOL: f64 = 1e-12;

pub fn classify(g: &Digraph) -> Classification {
    let decomposition = scc_decompose(g);
    let root_sccs = decomposition.sources();

    // In a finite DAG every component descends from some source, so a
    // unique source reaches everything.
    let class = if decomposition.sccs.len() == 1 {
        ConnectivityClass::Sc
    } else if root_sccs.len() == 1 {
        ConnectivityClass::QscNotSc
    } else if weakly_connected(g) {
        ConnectivityClass::WcNotQsc
    } else {
        ConnectivityClass::Disconnected
    };

    let outflow = g.outflow();
    let balanced = (0..g.node_count()).all(|i| {
        let inflow = g.inflow(i);
        let scale = inflow.abs().max(outflow[i].abs()).max(1.0);
        (inflow - outflow[i]).abs() <= BALANCE_RTOL * scale
    });

    Classification {
        decomposition,
        class,
        root_sccs,
        balanced,
    }
}

fn weakly_connected(g: &Digraph) -> bool {
    let n = g.node_count();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.dst].push(e.src);
        adj[e.src].push(e.dst);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Full report: classification plus `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    #[serde(flatten)]
    pub classification: Classification,
    pub gamma: Vec<f64>,
}

pub fn analyze(g: &Digraph) -> Result<ConnectivityReport> {
    let classification = classify(g);
    let gamma = left_null_vector(g, &classification)?;
    Ok(ConnectivityReport {
        classification,
        gamma,
    })
}

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITERS: usize = 200_000;

/// Nonnegative `gamma` with `gamma^T L = 0`.
///
/// `gamma` is supported exactly on the root components. Each root
/// component's block is the Perron vector of the Laplacian restricted to
/// that component (its rows only involve its own columns because a root
/// component hears nobody outside itself), scaled to unit 2-norm.
pub fn left_null_vector(g: &Digraph, classification: &Classification) -> Result<Vec<f64>> {
    let l = laplacian(g);
    let mut gamma = vec![0.0; g.node_count()];
    for members in classification.root_members() {
        let block = DMatrix::from_fn(members.len(), members.len(), |p, q| {
            l[(members[p], members[q])]
        });
        let v = root_block_null_vector(&block).map_err(|_| Error::RankDeficient {
            component: members.to_vec(),
        })?;
        for (&node, &value) in members.iter().zip(v.iter()) {
            gamma[node] = value;
        }
    }
    Ok(gamma)
}

/// Positive unit-norm left null vector of an irreducible Laplacian block.
///
/// Shifted power iteration on `I - sigma L^T` (column-stochastic, primitive)
/// gives the Perron direction; one bordered linear solve then polishes the
/// residual to round-off.
pub(crate) fn root_block_null_vector(block: &DMatrix<f64>) -> Result<DVector<f64>> {
    let s = block.nrows();
    let rank_deficient = || Error::RankDeficient {
        component: (0..s).collect(),
    };
    if s == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let max_diag = block.diagonal().max();
    if !(max_diag > 0.0) {
        return Err(rank_deficient());
    }
    let sigma = 0.5 / max_diag;
    let lt = block.transpose();

    let mut v = DVector::from_element(s, 1.0 / s as f64);
    for _ in 0..POWER_MAX_ITERS {
        let mut next = &v - (&lt * &v) * sigma;
        let total = next.sum();
        next /= total;
        let change = (&next - &v).amax();
        v = next;
        if change <= POWER_TOL {
            break;
        }
    }

    // Bordered system: replace the row carrying the largest weight by the
    // normalization sum(gamma) = 1. Rows of L^T are linearly dependent
    // (they sum to zero), so dropping one keeps full rank iff the null
    // space is one-dimensional.
    let pivot = v.imax();
    let mut system = lt.clone();
    system.row_mut(pivot).fill(1.0);
    let mut rhs = DVector::zeros(s);
    rhs[pivot] = 1.0;
    let polished = system.lu().solve(&rhs).ok_or_else(rank_deficient)?;

    let tol = 1e-9 * polished.amax();
    if polished.iter().any(|&x| !x.is_finite() || x <= tol) {
        return Err(rank_deficient());
    }
    // The polished vector must agree in direction with the Perron iterate;
    // disagreement means the solve landed elsewhere in a larger null space.
    let direction_gap = (&polished / polished.sum() - &v).amax();
    if direction_gap > 1e-6 {
        return Err(rank_deficient());
    }
    Ok(&polished / polished.norm())
}
