mod common;

use common::{random_digraph, reachability, reaches_all, rng, root_component_nodes, unit_cycle};
use proptest::prelude::*;
use selfsync_core::{analyze, classify, laplacian, ConnectivityClass, Digraph, Edge};

fn brute_force_class(g: &Digraph) -> ConnectivityClass {
    let n = g.node_count();
    let reach = reachability(g);
    let strongly = (0..n).all(|a| (0..n).all(|b| reach[a][b]));
    // Pairwise definition: every ordered pair has a common ancestor.
    let quasi = (0..n).all(|a| (0..n).all(|b| (0..n).any(|r| reach[r][a] && reach[r][b])));
    // The single-root formulation must agree with the pairwise one.
    assert_eq!(quasi, !reaches_all(g).is_empty());

    let mut undirected = vec![vec![false; n]; n];
    for (v, row) in undirected.iter_mut().enumerate() {
        row[v] = true;
    }
    for e in g.edges() {
        undirected[e.src][e.dst] = true;
        undirected[e.dst][e.src] = true;
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                if undirected[a][k] && undirected[k][b] {
                    undirected[a][b] = true;
                }
            }
        }
    }
    let weakly = undirected[0].iter().all(|&x| x);

    match (strongly, quasi, weakly) {
        (true, _, _) => ConnectivityClass::Sc,
        (false, true, _) => ConnectivityClass::QscNotSc,
        (false, false, true) => ConnectivityClass::WcNotQsc,
        _ => ConnectivityClass::Disconnected,
    }
}

fn graph_from_mask(n: usize, mask: u64) -> Digraph {
    let mut edges = Vec::new();
    let mut bit = 0;
    for dst in 0..n {
        for src in 0..n {
            if dst == src {
                continue;
            }
            if mask >> bit & 1 == 1 {
                edges.push(Edge {
                    dst,
                    src,
                    gain: 1.0,
                    delay_s: 0.0,
                });
            }
            bit += 1;
        }
    }
    Digraph::new(n, edges).unwrap()
}

#[test]
fn classify_matches_brute_force_exhaustively() {
    for n in 1..=5usize {
        let pairs = n * (n - 1);
        for mask in 0..(1u64 << pairs) {
            let g = graph_from_mask(n, mask);
            let c = classify(&g);
            assert_eq!(c.class, brute_force_class(&g), "n={n} mask={mask:#x}");
            if c.class.is_qsc() {
                assert_eq!(c.root_sccs.len(), 1);
            }
            if c.class == ConnectivityClass::Sc {
                assert_eq!(c.sccs().len(), 1);
            }
            let mut covered: Vec<usize> = c.sccs().iter().flatten().copied().collect();
            covered.sort_unstable();
            assert_eq!(covered, (0..n).collect::<Vec<_>>());
            let mut roots: Vec<usize> = c.root_members().flatten().copied().collect();
            roots.sort_unstable();
            assert_eq!(roots, root_component_nodes(&g), "n={n} mask={mask:#x}");
        }
    }
}

#[test]
fn condensation_is_acyclic_and_faithful() {
    let mut r = rng(17);
    for _ in 0..200 {
        let g = random_digraph(&mut r, 8, 0.2, 0.0);
        let c = classify(&g);
        let d = &c.decomposition;
        let reach = reachability(&g);
        for &(dst, src) in &d.condensation {
            assert!(g
                .edges()
                .iter()
                .any(|e| d.component_of[e.dst] == dst && d.component_of[e.src] == src));
            // acyclic: no node of dst reaches back into src
            assert!(!reach[d.sccs[dst][0]][d.sccs[src][0]]);
        }
        for e in g.edges() {
            let (a, b) = (d.component_of[e.dst], d.component_of[e.src]);
            assert!(a == b || d.condensation.contains(&(a, b)));
        }
    }
}

#[test]
fn gamma_support_and_residual_on_random_digraphs() {
    let mut r = rng(2024);
    for trial in 0..200 {
        let n = 1 + trial % 8;
        let p = [0.15, 0.3, 0.5][trial % 3];
        let g = random_digraph(&mut r, n, p, 0.0);
        let report = analyze(&g).unwrap();
        let l = laplacian(&g);
        let gamma = nalgebra::DVector::from_vec(report.gamma.clone());
        let residual = (l.transpose() * &gamma).amax();
        let l_inf = (0..n).map(|i| l.row(i).abs().sum()).fold(0.0, f64::max);
        assert!(
            residual <= 1e-10 * l_inf.max(f64::MIN_POSITIVE),
            "trial {trial}: {residual}"
        );
        assert!(report.gamma.iter().all(|&x| x >= 0.0));

        let support: Vec<usize> = (0..n).filter(|&i| report.gamma[i] > 0.0).collect();
        if report.classification.class.is_qsc() {
            assert_eq!(support, reaches_all(&g), "trial {trial}");
            assert!((gamma.norm() - 1.0).abs() < 1e-12);
        } else {
            assert_eq!(support, root_component_nodes(&g), "trial {trial}");
        }
    }
}

#[test]
fn balanced_strongly_connected_gamma_is_uniform() {
    for n in [2, 3, 5, 8] {
        let g = unit_cycle(n, &vec![0.0; n]);
        let c = classify(&g);
        assert!(c.balanced);
        let gamma = analyze(&g).unwrap().gamma;
        let target = 1.0 / (n as f64).sqrt();
        assert!(gamma.iter().all(|&x| (x - target).abs() < 1e-10));
    }
    // A balanced graph that is not a plain cycle: two overlapping weighted cycles.
    let g = Digraph::from_tuples(
        4,
        &[
            (0, 1, 1.0, 0.0),
            (1, 2, 1.0, 0.0),
            (2, 3, 1.0, 0.0),
            (3, 0, 1.0, 0.0),
            (0, 2, 0.5, 0.0),
            (2, 0, 0.5, 0.0),
        ],
    )
    .unwrap();
    assert!(classify(&g).balanced);
    let gamma = analyze(&g).unwrap().gamma;
    assert!(gamma.iter().all(|&x| (x - 0.5).abs() < 1e-10));
}

#[test]
fn two_root_forest_example() {
    // {0,1} and {2,3} are 2-cycles, node 4 hears 0 and 2.
    let g = Digraph::from_tuples(
        5,
        &[
            (0, 1, 1.0, 0.0),
            (1, 0, 1.0, 0.0),
            (2, 3, 1.0, 0.0),
            (3, 2, 1.0, 0.0),
            (4, 0, 1.0, 0.0),
            (4, 2, 1.0, 0.0),
        ],
    )
    .unwrap();
    let r = analyze(&g).unwrap();
    assert_eq!(r.classification.class, ConnectivityClass::WcNotQsc);
    let h = 1.0 / 2f64.sqrt();
    for (got, want) in r.gamma.iter().zip([h, h, h, h, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn laplacian_rows_sum_to_zero(
        n in 1usize..9,
        seed in any::<u64>(),
        p in 0.0f64..1.0,
    ) {
        let g = random_digraph(&mut rng(seed), n, p, 0.0);
        let l = laplacian(&g);
        for i in 0..n {
            let row = l.row(i);
            let scale = row.abs().sum().max(1.0);
            prop_assert!(row.sum().abs() <= 1e-14 * scale);
            prop_assert_eq!(l[(i, i)], g.inflow(i));
        }
    }

    #[test]
    fn graph_json_round_trips(n in 1usize..7, seed in any::<u64>(), p in 0.0f64..1.0) {
        let g = random_digraph(&mut rng(seed), n, p, 0.2);
        prop_assert_eq!(Digraph::from_json(&g.to_json()).unwrap(), g);
    }
}
