mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use gibbs_surfaces::cluster::{
    cluster_swap_at, edge_coupling_constant, from_derived, offset_bounds, quantize_residual, shifted_analysis,
    swappable_set, swendsen_wang_update, synchronize_clusters, to_derived, Triplet, RESIDUAL_SCALE,
};
use gibbs_surfaces::sampler::{cftp_sample, CftpOptions};
use gibbs_surfaces::tilings::{enumerate_tilings, matching_to_height, SquareRegion};
use gibbs_surfaces::{EdgePotential, Graph, HeightConfig, PeriodicPotential, RngStream, Site, ValueDomain};

fn random_config(g: &Arc<Graph>, rng: &mut RngStream, lo: i64, hi: i64) -> HeightConfig<i64> {
    let vals = (0..g.len()).map(|_| lo + rng.below((hi - lo + 1) as usize) as i64).collect();
    HeightConfig::new(g.clone(), vals).unwrap()
}

fn random_triplet(g: &Arc<Graph>, rng: &mut RngStream) -> Triplet<i64> {
    let a = random_config(g, rng, -2, 2);
    let b = random_config(g, rng, -2, 2);
    Triplet::with_fresh_residuals(a, b, rng).unwrap()
}

fn interior_window(g: &Graph, w: i64, h: i64) -> Vec<bool> {
    g.sites().iter().map(|s| s.x > 0 && s.y > 0 && s.x < w - 1 && s.y < h - 1).collect()
}

#[test]
fn derived_coordinates_round_trip() {
    let pot = PeriodicPotential::sos_abs();
    let g = Arc::new(Graph::rectangle(3, 3));
    let mut rng = RngStream::new(11, 0);
    for _ in 0..1000 {
        let tr = random_triplet(&g, &mut rng);
        let d = to_derived(&pot, &tr).unwrap();
        for v in 0..g.len() {
            let (a, b) = (tr.phi1.get(v), tr.phi2.get(v));
            assert_eq!(d.xi[v], (a.min(b), a.max(b)));
            assert_eq!(d.zeta[v] as i64, (a - b).signum());
        }
        assert_eq!(from_derived(&pot, &g, &d).unwrap(), tr);
    }
    let g1 = Arc::new(Graph::path(2));
    let tr = Triplet::new(
        HeightConfig::new(g1.clone(), vec![3i64, 3]).unwrap(),
        HeightConfig::new(g1.clone(), vec![1i64, 1]).unwrap(),
        vec![0.0],
    )
    .unwrap();
    let mut d = to_derived(&pot, &tr).unwrap();
    assert_eq!(d.xi[0], (1, 3));
    assert_eq!(d.zeta[0], 1);
    d.total[0] = -0.5;
    assert_eq!(from_derived(&pot, &g1, &d).unwrap_err().kind(), "NegativeResidual");
}

#[test]
fn coupling_constant_examples() {
    let g = Graph::path(2);
    let abs = PeriodicPotential::sos_abs();
    assert_eq!(edge_coupling_constant(&abs, &g, &[(0i64, 2), (1, 3)], 0).unwrap(), -2.0);
    assert_eq!(edge_coupling_constant(&abs, &g, &[(1i64, 1), (0, 4)], 0).unwrap(), 0.0);
    let sq = PeriodicPotential::isotropic(ValueDomain::DiscreteInteger, EdgePotential::Quadratic { coefficient: 1.0 });
    assert_eq!(edge_coupling_constant(&sq, &g, &[(0i64, 1), (0, 1)], 0).unwrap(), -2.0);
    let one = abs.lipschitz_truncate(1.0).unwrap();
    assert_eq!(edge_coupling_constant(&one, &g, &[(0i64, 1), (0, 1)], 0).unwrap(), -2.0);
    assert_eq!(edge_coupling_constant(&one, &g, &[(0i64, 1), (1, 2)], 0).unwrap(), f64::NEG_INFINITY);
    assert!(edge_coupling_constant(&one, &g, &[(0i64, 0), (3, 3)], 0).is_err());
}

#[test]
fn equal_surfaces_close_every_edge() {
    let pot = PeriodicPotential::sos_abs();
    let g = Arc::new(Graph::rectangle(4, 3));
    let mut rng = RngStream::new(2, 0);
    let a = random_config(&g, &mut rng, -3, 3);
    let tr = Triplet::with_fresh_residuals(a.clone(), a.clone(), &mut rng).unwrap();
    let set = swappable_set(&pot, &tr, &vec![true; g.len()]);
    assert!(set.closed.iter().all(|&c| c));
    assert_eq!(set.clusters.len(), g.len());
    assert!(set.clusters.iter().all(|c| c.zeta == 0));
    let out = swendsen_wang_update(&pot, &tr, &vec![true; g.len()], &mut rng);
    assert_eq!(out.phi1, a);
    assert_eq!(out.phi2, a);
}

#[test]
fn satisfied_edge_closes_with_probability_of_its_deficit() {
    // |η|, ξ(x) = (0,2), ξ(y) = (1,3) aligned: swapping one endpoint costs |K| = 2
    let pot = PeriodicPotential::sos_abs();
    let g = Arc::new(Graph::path(2));
    let phi1 = HeightConfig::new(g.clone(), vec![2i64, 3]).unwrap();
    let phi2 = HeightConfig::new(g.clone(), vec![0i64, 1]).unwrap();
    let k = edge_coupling_constant(&pot, &g, &[(0i64, 2), (1, 3)], 0).unwrap();
    let mut rng = RngStream::new(8, 8);
    let trials = 100_000;
    let mut closed = 0u32;
    for _ in 0..trials {
        let tr = Triplet::with_fresh_residuals(phi1.clone(), phi2.clone(), &mut rng).unwrap();
        if swappable_set(&pot, &tr, &[true, true]).closed[0] {
            closed += 1;
        }
    }
    let p = (-k.abs()).exp();
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    let f = closed as f64 / trials as f64;
    assert!((f - p).abs() < 4.0 * sd, "{f} vs {p}");
}

#[test]
fn domino_clusters_are_components_of_nonzero_difference() {
    let d = PeriodicPotential::domino();
    let tilings = enumerate_tilings(&SquareRegion::rectangle(4, 4)).unwrap();
    let heights: Vec<HeightConfig<i64>> = tilings.iter().map(|t| matching_to_height(t).unwrap()).collect();
    let g = heights[0].graph_arc().clone();
    let mut rng = RngStream::new(4, 4);
    let window = vec![true; g.len()];
    for a in &heights {
        for b in &heights {
            let tr = Triplet::with_fresh_residuals(a.clone(), b.clone(), &mut rng).unwrap();
            let set = swappable_set(&d, &tr, &window);
            for (e, edge) in g.edges().iter().enumerate() {
                assert_eq!(set.closed[e], tr.zeta(edge.tail) == 0 || tr.zeta(edge.head) == 0);
            }
            // union-find oracle over {φ₁ ≠ φ₂}
            let mut comp: Vec<usize> = (0..g.len()).collect();
            loop {
                let mut changed = false;
                for edge in g.edges() {
                    if tr.zeta(edge.tail) != 0 && tr.zeta(edge.head) != 0 {
                        let m = comp[edge.tail].min(comp[edge.head]);
                        if comp[edge.tail] != m || comp[edge.head] != m {
                            comp[edge.tail] = m;
                            comp[edge.head] = m;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            for u in 0..g.len() {
                for v in 0..g.len() {
                    assert_eq!(set.label[u] == set.label[v], comp[u] == comp[v]);
                }
                assert_eq!(set.cluster_of(u).zeta, tr.zeta(u));
            }
        }
    }
}

#[test]
fn single_interior_cluster_swaps_half_the_time() {
    let pot = PeriodicPotential::sos_abs();
    let g = Arc::new(Graph::rectangle(3, 3));
    let centre = g.index_of(Site::new(1, 1)).unwrap();
    let phi1 = HeightConfig::constant(g.clone(), 0i64);
    let phi2 = HeightConfig::from_fn(g.clone(), |s| i64::from(s == Site::new(1, 1)));
    let tr = Triplet::new(phi1, phi2, vec![0.0; g.edges().len()]).unwrap();
    let window = interior_window(&g, 3, 3);
    let mut rng = RngStream::new(99, 0);
    let trials = 100_000;
    let mut swapped = 0u32;
    for _ in 0..trials {
        let out = swendsen_wang_update(&pot, &tr, &window, &mut rng);
        if out.phi1.get(centre) == 1 {
            swapped += 1;
            assert_eq!(out.phi2.get(centre), 0);
        }
    }
    let sd = (0.25 / trials as f64).sqrt();
    assert!((swapped as f64 / trials as f64 - 0.5).abs() < 3.0 * sd);
}

#[test]
fn swap_is_an_energy_preserving_involution() {
    let pot = PeriodicPotential::sos_abs();
    let g = Arc::new(Graph::rectangle(4, 4));
    let window = interior_window(&g, 4, 4);
    let mut rng = RngStream::new(5, 5);
    let mut nontrivial = 0;
    for _ in 0..1000 {
        let tr = random_triplet(&g, &mut rng);
        let x = rng.below(g.len());
        let once = cluster_swap_at(&pot, &tr, &window, x);
        let t0 = to_derived(&pot, &tr).unwrap().total;
        let t1 = to_derived(&pot, &once).unwrap().total;
        assert_eq!(t0, t1);
        assert!(once.residual.iter().all(|&r| r >= 0.0 && (r * RESIDUAL_SCALE).fract() == 0.0));
        assert_eq!(cluster_swap_at(&pot, &once, &window, x), tr);
        if once != tr {
            nontrivial += 1;
        }
        let set = swappable_set(&pot, &tr, &window);
        if !set.cluster_of(x).interior {
            assert_eq!(once, tr);
        }
        for c in &set.clusters {
            assert!(c.vertices.iter().all(|&v| tr.zeta(v) == c.zeta));
        }
    }
    assert!(nontrivial > 50);
}

#[test]
fn update_keeps_sign_constant_on_clusters() {
    let pot = PeriodicPotential::sos_abs();
    let g = Arc::new(Graph::rectangle(4, 4));
    let window = interior_window(&g, 4, 4);
    let mut rng = RngStream::new(6, 0);
    let mut tr = random_triplet(&g, &mut rng);
    for _ in 0..200 {
        let before = to_derived(&pot, &tr).unwrap().xi;
        tr = swendsen_wang_update(&pot, &tr, &window, &mut rng);
        assert_eq!(to_derived(&pot, &tr).unwrap().xi, before);
        let set = swappable_set(&pot, &tr, &window);
        for c in &set.clusters {
            assert!(c.vertices.iter().all(|&v| tr.zeta(v) == c.zeta));
        }
    }
}

#[test]
fn coin_synchronised_pair_is_ordered() {
    let pot = PeriodicPotential::sos_abs().lipschitz_truncate(1.0).unwrap();
    let g = Arc::new(Graph::rectangle(5, 5));
    let window = interior_window(&g, 5, 5);
    let outer: Vec<usize> = (0..g.len()).filter(|&v| !window[v]).collect();
    let b1: BTreeMap<usize, i64> = outer.iter().map(|&v| (v, 0)).collect();
    let b2: BTreeMap<usize, i64> = outer.iter().map(|&v| (v, 1)).collect();
    let mut rng = RngStream::new(12, 0);
    for s in 0..200 {
        let a = cftp_sample(&pot, &g, &b1, &RngStream::new(s, 1), CftpOptions::default()).unwrap().config;
        let b = cftp_sample(&pot, &g, &b2, &RngStream::new(s, 2), CftpOptions::default()).unwrap().config;
        let (p, q) = synchronize_clusters(&pot, a, b, &window, &mut rng).unwrap();
        assert!(p.le(&q));
        assert!(pot.hamiltonian_interior(&p, None).unwrap().is_finite());
        assert!(pot.hamiltonian_interior(&q, None).unwrap().is_finite());
    }
}

#[test]
fn offset_bounds_for_uniform_shift() {
    let pot = PeriodicPotential::sos_abs();
    let g = Arc::new(Graph::rectangle(5, 5));
    let window = interior_window(&g, 5, 5);
    let mut rng = RngStream::new(21, 0);
    for _ in 0..20 {
        let a = random_config(&g, &mut rng, -2, 2);
        let b = HeightConfig::from_fn(g.clone(), |s| a.at(s).unwrap() + 5);
        let tr = Triplet::with_fresh_residuals(a.clone(), b, &mut rng).unwrap();
        for c in -2..=8 {
            let s = shifted_analysis(&pot, &tr, c as f64, &window);
            assert_eq!(s.t_plus.is_empty(), c >= 5, "c = {c}");
        }
        assert_eq!(offset_bounds(&pot, &tr, &window).b_plus, 5.0);
        let same = Triplet::with_fresh_residuals(a.clone(), a, &mut rng).unwrap();
        let ob = offset_bounds(&pot, &same, &window);
        assert_eq!(ob.b_plus, ob.b_minus);
    }
}

#[test]
fn quantized_residuals_sit_on_the_grid() {
    for r in [0.0, 1e-12, 0.3, 1.0, 7.123456789] {
        let q = quantize_residual(r);
        assert!(q <= r && r - q < 1.0 / RESIDUAL_SCALE);
        assert_eq!((q * RESIDUAL_SCALE).fract(), 0.0);
    }
}
