mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use gibbs_surfaces::enumerate::{Enumeration, HeightWindow};
use gibbs_surfaces::feasibility::parse_slope;
use gibbs_surfaces::sampler::{
    cftp_sample, random_round, site_conditional, torus_sample, CftpOptions, HeatBath, SiteConditional, SiteOrder,
};
use gibbs_surfaces::tilings::{enumerate_tilings, matching_to_height, SquareRegion};
use gibbs_surfaces::{Graph, HeightConfig, PeriodicPotential, RngStream, Site};

fn abs1() -> PeriodicPotential {
    PeriodicPotential::sos_abs().lipschitz_truncate(1.0).unwrap()
}

#[test]
fn abs_site_between_two_zeros() {
    let g = Arc::new(Graph::path(3));
    let c = HeightConfig::new(g, vec![0i64, 5, 0]).unwrap();
    let cond = site_conditional(&PeriodicPotential::sos_abs(), &c, 1).unwrap();
    let e2 = (-2f64).exp();
    assert!((cond.probability(0) - (1.0 - e2) / (1.0 + e2)).abs() < 1e-12);
    let z = (1.0 + e2) / (1.0 - e2);
    for h in -6i64..=6 {
        assert!((cond.probability(h) - (-2.0 * h.abs() as f64).exp() / z).abs() < 1e-12, "{h}");
    }
}

#[test]
fn domino_conditionals_are_uniform_on_allowed_heights() {
    let d = PeriodicPotential::domino();
    let mut point_masses = 0;
    for t in enumerate_tilings(&SquareRegion::rectangle(4, 4)).unwrap() {
        let h = matching_to_height(&t).unwrap();
        let g = h.graph_arc().clone();
        for v in 0..g.len() {
            let s = g.site(v);
            if s.x == 0 || s.y == 0 || s.x == 4 || s.y == 4 {
                continue;
            }
            let cur = h.get(v);
            let allowed: Vec<i64> = (cur - 4..=cur + 4)
                .filter(|&a| {
                    let mut c = h.clone();
                    c.set(v, a);
                    d.hamiltonian_interior(&c, None).unwrap().is_finite()
                })
                .collect();
            let cond = site_conditional(&d, &h, v).unwrap();
            for a in cur - 6..=cur + 6 {
                let expect = if allowed.contains(&a) { 1.0 / allowed.len() as f64 } else { 0.0 };
                assert!((cond.probability(a) - expect).abs() < 1e-12);
            }
            if allowed.len() == 1 {
                point_masses += 1;
            }
        }
    }
    assert!(point_masses > 0);
}

#[test]
fn gaussian_conditional() {
    let g = Arc::new(Graph::path(3));
    let c = HeightConfig::new(g, vec![0.3f64, 9.0, 2.1]).unwrap();
    for coef in [1.0, 0.5, 3.0] {
        match site_conditional(&PeriodicPotential::gaussian(coef), &c, 1).unwrap() {
            SiteConditional::Gaussian { mean, variance } => {
                assert!((mean - 1.2).abs() < 1e-12);
                assert!((variance - 1.0 / (4.0 * coef)).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }
    let g = Arc::new(Graph::rectangle(3, 3));
    let c = HeightConfig::from_fn(g, |s| (s.x * 2 + s.y) as f64);
    match site_conditional(&PeriodicPotential::gaussian(1.0), &c, 4).unwrap() {
        SiteConditional::Gaussian { mean, variance } => {
            assert!((mean - 3.0).abs() < 1e-12);
            assert!((variance - 0.125).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn frozen_graph_is_unchanged() {
    let g = Arc::new(Graph::rectangle(3, 2));
    let pot = Arc::new(PeriodicPotential::sos_abs());
    let hb = HeatBath::new(pot, g.clone(), 0..g.len());
    let c0 = HeightConfig::from_fn(g, |s| s.x - s.y);
    let mut c = c0.clone();
    hb.run(&mut c, &RngStream::new(1, 0), 0, 10).unwrap();
    assert_eq!(c, c0);
}

#[test]
fn one_free_site_is_sampled_exactly() {
    let pot = abs1();
    let g = Arc::new(Graph::path(3));
    let boundary = BTreeMap::from([(0usize, 0i64), (2, 0)]);
    let en = Enumeration::new(&pot, g.clone(), &boundary, HeightWindow::Extensions, 100).unwrap();
    let pi = en.probabilities();
    let hb = HeatBath::new(Arc::new(pot.clone()), g.clone(), [0, 2]);
    for i in 0..en.len() {
        let mut p = vec![0.0; en.len()];
        p[i] = 1.0;
        let q = hb.push_forward(&en, &p).unwrap();
        for (a, b) in q.iter().zip(&pi) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    let rng = RngStream::new(77, 3);
    let mut counts = vec![0u64; en.len()];
    let mut c = HeightConfig::new(g, vec![0i64, 0, 0]).unwrap();
    for k in 0..20_000 {
        hb.sweep(&mut c, &rng, k).unwrap();
        counts[en.index_of_config(&c).unwrap()] += 1;
    }
    assert!(common::chi2_p(&counts, &pi) > 1e-4);
}

#[test]
fn kernel_matrix_agrees_with_push_forward() {
    let pot = abs1();
    let g = Arc::new(Graph::rectangle(3, 3));
    let boundary: BTreeMap<usize, i64> = (0..g.len()).filter(|&v| v != 4 && v != 5).map(|v| (v, (v % 2) as i64)).collect();
    let en = Enumeration::new(&pot, g.clone(), &boundary, HeightWindow::Extensions, 1000).unwrap();
    for order in [SiteOrder::Checkerboard, SiteOrder::RandomScan] {
        let hb = HeatBath::new(Arc::new(pot.clone()), g.clone(), boundary.keys().copied()).with_order(order);
        let k = hb.kernel_matrix(&en).unwrap();
        let p: Vec<f64> = (0..en.len()).map(|i| (i + 1) as f64).collect();
        let total: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|x| x / total).collect();
        let q = hb.push_forward(&en, &p).unwrap();
        for j in 0..en.len() {
            let via_matrix: f64 = (0..en.len()).map(|i| p[i] * k[i][j]).sum();
            assert!((via_matrix - q[j]).abs() < 1e-14);
        }
        for row in &k {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn torus_sample_keeps_homology() {
    let pot = PeriodicPotential::sos_abs().lipschitz_truncate(2.0).unwrap();
    let u = parse_slope("1/2,1/4").unwrap();
    for seed in 0..5 {
        let c = torus_sample::<i64>(&pot, 4, &u, 30, &RngStream::new(seed, 0)).unwrap();
        assert_eq!(c.fundamental_cycle_sums(), Some([2.0, 1.0]));
        assert!(pot.hamiltonian_interior(&c, None).unwrap().is_finite());
    }
    let g = PeriodicPotential::gaussian(1.0);
    let c = torus_sample::<f64>(&g, 4, &parse_slope("0.3,-0.2").unwrap(), 10, &RngStream::new(1, 1)).unwrap();
    let sums = c.fundamental_cycle_sums().unwrap();
    assert!((sums[0] - 1.2).abs() < 1e-9 && (sums[1] + 0.8).abs() < 1e-9);
    assert!(torus_sample::<i64>(&PeriodicPotential::domino(), 4, &parse_slope("1,0").unwrap(), 1, &RngStream::new(0, 0)).is_err());
}

#[test]
fn torus_chain_matches_class_enumeration() {
    let pot = PeriodicPotential::sos_abs().lipschitz_truncate(2.0).unwrap();
    let u = parse_slope("1/3,0").unwrap();
    let graph = gibbs_surfaces::feasibility::slope_torus(&pot, 3, &u).unwrap();
    let en = Enumeration::new(&pot, graph.clone(), &BTreeMap::from([(0usize, 0i64)]), HeightWindow::Extensions, 1_000_000).unwrap();
    // law of the increment φ(1,0) − φ(0,0)
    let v = graph.index_of(Site::new(1, 0)).unwrap();
    let exact = en.marginal(v);
    let keys: Vec<i64> = exact.keys().copied().collect();
    let mut counts = vec![0u64; keys.len()];
    for seed in 0..3000 {
        let c = torus_sample::<i64>(&pot, 3, &u, 40, &RngStream::new(seed, 9)).unwrap();
        let d = c.get(v) - c.get(0);
        counts[keys.iter().position(|&k| k == d).unwrap()] += 1;
    }
    let probs: Vec<f64> = keys.iter().map(|k| exact[k]).collect();
    let p = common::chi2_p(&counts, &probs);
    assert!(p > 1e-4, "p = {p}");
}

#[test]
fn cftp_is_deterministic_and_exact() {
    let d = PeriodicPotential::domino();
    let region = SquareRegion::rectangle(2, 2);
    let g = Arc::new(region.vertex_graph());
    let boundary = gibbs_surfaces::tilings::boundary_heights(&region, &g).unwrap();
    let rng = RngStream::new(5, 0);
    let a = cftp_sample(&d, &g, &boundary, &rng, CftpOptions::default()).unwrap();
    let b = cftp_sample(&d, &g, &boundary, &rng, CftpOptions::default()).unwrap();
    assert_eq!(a.config, b.config);
    assert_eq!(a.sweeps, b.sweeps);
    let mut seen = BTreeMap::<Vec<i64>, u64>::new();
    for s in 0..4000 {
        let out = cftp_sample(&d, &g, &boundary, &RngStream::new(s, 1), CftpOptions::default()).unwrap();
        *seen.entry(out.config.values().to_vec()).or_default() += 1;
    }
    assert_eq!(seen.len(), 2);
    let counts: Vec<u64> = seen.values().copied().collect();
    assert!(common::chi2_p(&counts, &[0.5, 0.5]) > 1e-4);
}

#[test]
fn cftp_with_forced_interior() {
    let pot = abs1();
    let g = Arc::new(Graph::path(3));
    let out = cftp_sample(&pot, &g, &BTreeMap::from([(0usize, 0i64), (2, 2)]), &RngStream::new(0, 0), CftpOptions::default()).unwrap();
    assert_eq!(out.config.values(), &[0, 1, 2]);
    assert!(cftp_sample(&PeriodicPotential::sos_abs(), &g, &BTreeMap::from([(0usize, 0i64)]), &RngStream::new(0, 0), CftpOptions::default()).is_err());
}

#[test]
fn random_rounding() {
    let g = Arc::new(Graph::path(3));
    let c = HeightConfig::new(g, vec![0.2, 0.7, -1.5]).unwrap();
    assert_eq!(c.random_round_with(0.4).values(), &[0, 1, -2]);
    assert_eq!(c.random_round_with(0.0).values(), &[0, 0, -2]);
    let mut rng = RngStream::new(3, 3);
    let mut sums = [0i64; 3];
    let trials = 20_000;
    let mut shapes = BTreeSet::new();
    for _ in 0..trials {
        let r = random_round(&c, &mut rng).unwrap();
        for (s, h) in sums.iter_mut().zip(r.values()) {
            *s += h;
        }
        shapes.insert(r.values().to_vec());
    }
    // unbiased: E floor(x + U) = x, each count binomial with p ≤ 1/2
    let sd = (0.25 / trials as f64).sqrt();
    for (s, x) in sums.iter().zip([0.2, 0.7, -1.5]) {
        assert!((*s as f64 / trials as f64 - x).abs() < 5.0 * sd);
    }
    // one shared ε: the rounding errors are comonotone
    assert!(shapes.len() <= 4);
    let t = HeightConfig::constant(Arc::new(Graph::torus(2, [0.5, 0.0])), 0.0f64);
    assert!(random_round(&t, &mut rng).is_err());
}
