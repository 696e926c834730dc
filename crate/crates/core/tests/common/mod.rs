#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfsync_core::{Digraph, Edge};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Each ordered pair is linked with probability `p`; gains in (0, 2],
/// delays in [0, max_delay].
pub fn random_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64, max_delay: f64) -> Digraph {
    random_digraph_with_gain_floor(rng, n, p, max_delay, 0.0)
}

/// As [`random_digraph`] with gains drawn from `(min_gain, 2]`.
pub fn random_digraph_with_gain_floor(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: f64,
    max_delay: f64,
    min_gain: f64,
) -> Digraph {
    let mut edges = Vec::new();
    for dst in 0..n {
        for src in 0..n {
            if dst != src && rng.random::<f64>() < p {
                edges.push(Edge {
                    dst,
                    src,
                    gain: 2.0 - (2.0 - min_gain) * rng.random::<f64>(),
                    delay_s: max_delay * rng.random::<f64>(),
                });
            }
        }
    }
    Digraph::new(n, edges).unwrap()
}

/// Unit directed cycle `i` hears `i + 1`.
pub fn unit_cycle(n: usize, delays: &[f64]) -> Digraph {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0, delays[i])).collect();
    Digraph::from_tuples(n, &edges).unwrap()
}

/// Random spanning out-branching rooted at `root`: every other node hears
/// exactly one earlier node of a random ordering starting at `root`.
pub fn random_out_branching(
    rng: &mut ChaCha8Rng,
    n: usize,
    root: usize,
    max_delay: f64,
) -> Digraph {
    let mut order: Vec<usize> = (0..n).filter(|&v| v != root).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order.insert(0, root);
    let edges = (1..n)
        .map(|k| Edge {
            dst: order[k],
            src: order[rng.random_range(0..k)],
            gain: 2.0 * (1.0 - rng.random::<f64>()),
            delay_s: max_delay * rng.random::<f64>(),
        })
        .collect();
    Digraph::new(n, edges).unwrap()
}

/// `reach[a][b]`: a directed path carries information from `a` to `b`
/// (every node reaches itself). Floyd-Warshall closure.
pub fn reachability(g: &Digraph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut reach = vec![vec![false; n]; n];
    for (v, row) in reach.iter_mut().enumerate() {
        row[v] = true;
    }
    for e in g.edges() {
        reach[e.src][e.dst] = true;
    }
    for k in 0..n {
        for a in 0..n {
            if reach[a][k] {
                for b in 0..n {
                    if reach[k][b] {
                        reach[a][b] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Nodes that reach every node.
pub fn reaches_all(g: &Digraph) -> Vec<usize> {
    let reach = reachability(g);
    (0..g.node_count())
        .filter(|&r| reach[r].iter().all(|&x| x))
        .collect()
}

/// Nodes whose every ancestor is also a descendant, i.e. members of a
/// component with no inflow.
pub fn root_component_nodes(g: &Digraph) -> Vec<usize> {
    let reach = reachability(g);
    let n = g.node_count();
    (0..n)
        .filter(|&v| (0..n).all(|a| !reach[a][v] || reach[v][a]))
        .collect()
}
