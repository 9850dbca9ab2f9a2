mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use gibbs_surfaces::enumerate::HeightWindow;
use gibbs_surfaces::feasibility::{parse_slope, slope_torus};
use gibbs_surfaces::observables::{
    convexity_margin, empirical_gradient_measure, fkg_check, height_offset_estimate, log_concavity_check,
    log_partition_exact, log_partition_region, sigma_estimate, thermodynamic_integration, torus_exact_sum,
    variance_profile_from_samples, Event, PatternShape, Quadrature, SigmaEstimate, SigmaMethod, SigmaOptions, TiOptions,
    Translates, Verdict,
};
use gibbs_surfaces::sampler::torus_sample;
use gibbs_surfaces::tilings::{boundary_heights, SquareRegion};
use gibbs_surfaces::{Graph, HeightConfig, Period, PeriodicPotential, RngStream, Site};

fn abs_c(c: f64) -> PeriodicPotential {
    PeriodicPotential::sos_abs().lipschitz_truncate(c).unwrap()
}

#[test]
fn single_edge_series() {
    let g = Graph::path(2);
    let lz = log_partition_region(&PeriodicPotential::sos_abs(), &g, &BTreeMap::from([(0, 0)]), 1_000_000).unwrap();
    // Σ_h e^{-|h|} = (1 + e^{-1}) / (1 − e^{-1})
    let q = (-1f64).exp();
    let series = ((1.0 + q) / (1.0 - q)).ln();
    assert!((lz - series).abs() < 1e-12);
    assert!((lz - 0.771937).abs() < 1e-6);
}

#[test]
fn trees_factor_over_edges() {
    for k in 1..6 {
        let g = Graph::path(k + 1);
        let flat = PeriodicPotential::isotropic(gibbs_surfaces::ValueDomain::DiscreteInteger, gibbs_surfaces::EdgePotential::flat(-1, 1));
        let lz = log_partition_region(&flat, &g, &BTreeMap::from([(0, 0)]), 1_000_000).unwrap();
        assert!((lz - k as f64 * 3f64.ln()).abs() < 1e-12);
        let lz = log_partition_region(&abs_c(2.0), &g, &BTreeMap::from([(0, 0)]), 1_000_000).unwrap();
        let s: f64 = (-2i32..=2).map(|h| (-(h.abs() as f64)).exp()).sum();
        assert!((lz - k as f64 * s.ln()).abs() < 1e-12);
    }
}

#[test]
fn region_partition_matches_brute_force() {
    let pot = abs_c(1.0);
    let g = Arc::new(Graph::rectangle(3, 3));
    let boundary: BTreeMap<usize, i64> = (0..g.len()).filter(|&v| v != 4).map(|v| (v, (v % 3) as i64 - 1)).collect();
    let brute = common::brute_gibbs(&pot, &g, &boundary, -3, 3);
    let z: f64 = brute.iter().map(|s| (-s.1).exp()).sum();
    let lz = log_partition_region(&pot, &g, &boundary, 1000).unwrap();
    assert!((lz - z.ln()).abs() < 1e-12);
}

#[test]
fn domino_torus_counts() {
    let d = PeriodicPotential::domino();
    let u = parse_slope("0,0").unwrap();
    let g = slope_torus(&d, 2, &u).unwrap();
    let count = common::brute_gibbs(&d, &g, &BTreeMap::from([(0usize, 0i64)]), -3, 3).len();
    let lz = torus_exact_sum(&d, 2, &u, 1.0, 1_000_000).unwrap().log_z;
    assert!((lz - (count as f64).ln()).abs() < 1e-12);
    for n in [2, 4] {
        for u in ["0,0", "1/4,0", "1/4,1/4", "1/2,0"] {
            let s = parse_slope(u).unwrap();
            let a = log_partition_exact(&d, n, &s, SigmaMethod::ExactSum, 10_000_000).unwrap();
            let b = log_partition_exact(&d, n, &s, SigmaMethod::TransferMatrix, 10_000_000).unwrap();
            assert!((a - b).abs() < 1e-9, "n={n} u={u}: {a} vs {b}");
        }
    }
    assert!(log_partition_exact(&d, 3, &u, SigmaMethod::ExactSum, 1000).is_err());
}

#[test]
fn torus_sum_matches_brute_force() {
    let pot = abs_c(1.0);
    for u in ["0,0", "1/3,0", "1/3,2/3"] {
        let s = parse_slope(u).unwrap();
        let g = slope_torus(&pot, 3, &s).unwrap();
        let brute = common::brute_gibbs(&pot, &g, &BTreeMap::from([(0usize, 0i64)]), -4, 4);
        let z: f64 = brute.iter().map(|s| (-s.1).exp()).sum();
        let ex = torus_exact_sum(&pot, 3, &s, 1.0, 10_000_000).unwrap();
        assert!((ex.log_z - z.ln()).abs() < 1e-12, "{u}");
        let mean: f64 = brute.iter().map(|s| s.1 * (-s.1).exp()).sum::<f64>() / z;
        assert!((ex.mean_energy - mean).abs() < 1e-10);
        let tm = log_partition_exact(&pot, 3, &s, SigmaMethod::TransferMatrix, 10_000_000).unwrap();
        assert!((tm - ex.log_z).abs() < 1e-9);
    }
}

#[test]
fn truncation_only_adds_states() {
    let u = parse_slope("1/3,0").unwrap();
    let a = log_partition_exact(&abs_c(1.0), 3, &u, SigmaMethod::ExactSum, 100_000_000).unwrap();
    let b = log_partition_exact(&abs_c(2.0), 3, &u, SigmaMethod::ExactSum, 100_000_000).unwrap();
    assert!(b > a);
    let opts = SigmaOptions::default();
    let rng = RngStream::new(0, 0);
    let s1 = sigma_estimate(&abs_c(1.0), &u, 3, SigmaMethod::TransferMatrix, &opts, &rng).unwrap();
    let s2 = sigma_estimate(&abs_c(2.0), &u, 3, SigmaMethod::TransferMatrix, &opts, &rng).unwrap();
    assert!(s1.value >= s2.value);
    assert!((s1.value + a / 9.0).abs() < 1e-9);
}

#[test]
fn thermodynamic_integration_tracks_exact_value() {
    let pot = abs_c(1.0);
    let u = parse_slope("0,0").unwrap();
    let exact = log_partition_exact(&pot, 3, &u, SigmaMethod::ExactSum, 10_000_000).unwrap();
    for rule in [Quadrature::Trapezoid, Quadrature::ClenshawCurtis] {
        let opts = TiOptions { points: 17, batches: 20, sweeps: 4000, burn_in: 200, quadrature: rule, tolerance: None, parallel: false };
        let (lz, se) = thermodynamic_integration(&pot, 3, &u, &opts, &RngStream::new(31, 0)).unwrap();
        // sampling error plus a quadrature allowance
        assert!((lz - exact).abs() < 4.0 * se + 0.02, "{rule:?}: {lz} ± {se} vs {exact}");
    }
    // the domino Hamiltonian vanishes on its support, so only the count remains
    let d = PeriodicPotential::domino();
    let opts = TiOptions { points: 5, batches: 4, sweeps: 40, burn_in: 4, quadrature: Quadrature::Trapezoid, tolerance: None, parallel: false };
    let (lz, se) = thermodynamic_integration(&d, 4, &u, &opts, &RngStream::new(1, 0)).unwrap();
    let exact = log_partition_exact(&d, 4, &u, SigmaMethod::TransferMatrix, 10_000_000).unwrap();
    assert!((lz - exact).abs() < 1e-9 && se == 0.0);
}

fn fake(value: f64, stderr: f64, class: [i64; 2], method: SigmaMethod) -> SigmaEstimate {
    SigmaEstimate { slope: [0.0, 0.0], class, n: 4, value, log_z: 0.0, method, stderr }
}

#[test]
fn convexity_verdicts() {
    let opts = SigmaOptions::default();
    let rng = RngStream::new(0, 0);
    let d = PeriodicPotential::domino();
    let z = sigma_estimate(&d, &parse_slope("0,0").unwrap(), 4, SigmaMethod::TransferMatrix, &opts, &rng).unwrap();
    assert_eq!(convexity_margin(&z, &z, &z).unwrap().verdict, Verdict::Inconclusive);
    let a = sigma_estimate(&d, &parse_slope("-1/4,0").unwrap(), 4, SigmaMethod::TransferMatrix, &opts, &rng).unwrap();
    let b = sigma_estimate(&d, &parse_slope("1/4,0").unwrap(), 4, SigmaMethod::TransferMatrix, &opts, &rng).unwrap();
    let r = convexity_margin(&a, &b, &z).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.margin > 0.0);
    assert_eq!(convexity_margin(&a, &z, &b).unwrap_err().kind(), "SlopeMismatch");
    // σ linear in the slope: zero margin
    let m = SigmaMethod::ExactSum;
    let lin = convexity_margin(&fake(1.0, 0.0, [0, 0], m), &fake(3.0, 0.0, [2, 0], m), &fake(2.0, 0.0, [1, 0], m)).unwrap();
    assert_eq!(lin.verdict, Verdict::Inconclusive);
    let concave = convexity_margin(&fake(1.0, 0.0, [0, 0], m), &fake(1.0, 0.0, [2, 0], m), &fake(2.0, 0.0, [1, 0], m)).unwrap();
    assert_eq!(concave.verdict, Verdict::Fail);
    let t = SigmaMethod::ThermodynamicIntegration;
    let noisy = convexity_margin(&fake(1.0, 0.1, [0, 0], t), &fake(1.2, 0.1, [2, 0], t), &fake(1.0, 0.1, [1, 0], t)).unwrap();
    assert_eq!(noisy.verdict, Verdict::Inconclusive);
    let clear = convexity_margin(&fake(1.0, 0.01, [0, 0], t), &fake(1.2, 0.01, [2, 0], t), &fake(1.0, 0.01, [1, 0], t)).unwrap();
    assert_eq!(clear.verdict, Verdict::Pass);
}

#[test]
fn empirical_gradients() {
    let g = Arc::new(Graph::torus(4, [0.0, 0.0]));
    let flat = HeightConfig::constant(g, 3i64);
    let m = empirical_gradient_measure(&[flat], Period::square(2), PatternShape::Star, Translates::Invariance);
    assert_eq!(m.total, 4);
    assert_eq!(m.frequencies(), BTreeMap::from([(vec![0, 0, 0, 0], 1.0)]));
    let m = empirical_gradient_measure(&[HeightConfig::constant(Arc::new(Graph::torus(4, [0.0, 0.0])), 0i64)], Period::square(2), PatternShape::Block(2), Translates::All);
    assert_eq!(m.total, 16);

    // the mean increment over all translates is the torus slope
    let d = PeriodicPotential::domino();
    let u = parse_slope("1/2,0").unwrap();
    let samples: Vec<HeightConfig<i64>> = (0..6).map(|s| torus_sample(&d, 4, &u, 5, &RngStream::new(s, 0)).unwrap()).collect();
    let m = empirical_gradient_measure(&samples, d.period(), PatternShape::Star, Translates::All);
    let mean = |i: usize| m.frequencies().iter().map(|(k, f)| k[i] as f64 * f).sum::<f64>();
    assert!((mean(0) - 0.5).abs() < 1e-12 && mean(1).abs() < 1e-12);
    // at the edge of the allowed set the configuration is frozen: two phases of weight 1/2
    let inv = empirical_gradient_measure(&samples, d.period(), PatternShape::Star, Translates::Invariance);
    assert_eq!(inv.counts.len(), 1);
    let block = empirical_gradient_measure(&samples[..1], Period::square(1), PatternShape::Star, Translates::All);
    let freqs: Vec<f64> = block.frequencies().values().copied().collect();
    assert!(freqs.iter().all(|&f| (f - 0.5).abs() < 1e-12), "{freqs:?}");

    let mut rev = samples.clone();
    rev.reverse();
    assert_eq!(empirical_gradient_measure(&rev, d.period(), PatternShape::Block(2), Translates::All), empirical_gradient_measure(&samples, d.period(), PatternShape::Block(2), Translates::All));
}

#[test]
fn variance_profiles() {
    let g = Arc::new(Graph::torus(4, [0.0, 0.0]));
    let flat = vec![HeightConfig::constant(g, 0i64); 10];
    let p = variance_profile_from_samples(&flat, Period::square(1), &[1, 2, 3], 4).unwrap();
    assert!(p.variances.iter().all(|&v| v == 0.0) && p.c_hat == 0.0);

    // every ±1 walk on a path: Var(φ(x + j) − φ(x)) = j exactly
    let k = 10;
    let g = Arc::new(Graph::path(k + 1));
    let walks: Vec<HeightConfig<i64>> = (0..1u32 << k)
        .map(|bits| {
            let mut h = vec![0i64; k + 1];
            for i in 0..k {
                h[i + 1] = h[i] + if bits >> i & 1 == 1 { 1 } else { -1 };
            }
            HeightConfig::new(g.clone(), h).unwrap()
        })
        .collect();
    let p = variance_profile_from_samples(&walks, Period::square(1), &[1, 2, 4, 8], 8).unwrap();
    for (j, v) in [1.0, 2.0, 4.0, 8.0].iter().zip(&p.variances) {
        assert!((v - j).abs() < 1e-12);
    }
    assert_eq!(p.c_hat, 1.0);
    assert_eq!(p.verdict, Verdict::Pass);
}

#[test]
fn height_offsets() {
    let g = Arc::new(Graph::rectangle(7, 7));
    let flat = HeightConfig::constant(g.clone(), 0i64);
    assert_eq!(height_offset_estimate(&flat, Site::new(3, 3), &[0, 1, 2, 3]).unwrap(), vec![0.0; 4]);
    let plane = HeightConfig::from_fn(g.clone(), |s| (s.x + 2 * s.y) as f64 + 0.4);
    for v in height_offset_estimate(&plane, Site::new(3, 3), &[1, 2, 3]).unwrap() {
        assert!((v - 9.4).abs() < 1e-12);
    }
    assert_eq!(height_offset_estimate(&flat, Site::new(3, 3), &[4]).unwrap_err().kind(), "BoxExceedsSupport");
    // lifted heights on a torus extend past one period
    let t = HeightConfig::constant(Arc::new(Graph::torus(4, [4.0, 0.0])), 0.0);
    // the column x = -1 lifts to φ(3, y) − 4
    let v = height_offset_estimate(&t, Site::new(0, 0), &[1]).unwrap();
    assert!((v[0] + 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn fkg_correlations() {
    let pot = abs_c(1.0);
    let g = Arc::new(Graph::path(4));
    let boundary = BTreeMap::from([(0usize, 0i64), (3, 1)]);
    let up1 = |c: &HeightConfig<i64>| c.get(1) >= 1;
    let up2 = |c: &HeightConfig<i64>| c.get(2) >= 1;
    let a = Event { name: "up1", holds: &up1 };
    let b = Event { name: "up2", holds: &up2 };
    let r = fkg_check(&pot, g.clone(), &boundary, HeightWindow::Extensions, &a, &b).unwrap();
    let law = common::gibbs_law(&common::brute_gibbs(&pot, &g, &boundary, -3, 4));
    let mu = |f: &dyn Fn(&[i64]) -> bool| law.iter().filter(|(s, _)| f(s)).map(|(_, p)| p).sum::<f64>();
    let (ma, mb, mab) = (mu(&|s| s[1] >= 1), mu(&|s| s[2] >= 1), mu(&|s| s[1] >= 1 && s[2] >= 1));
    assert!((r.mu_a - ma).abs() < 1e-12 && (r.mu_b - mb).abs() < 1e-12 && (r.mu_ab - mab).abs() < 1e-12);
    assert!(r.correlation > 0.0);
    assert_eq!(r.verdict, Verdict::Pass);
    let same = fkg_check(&pot, g.clone(), &boundary, HeightWindow::Extensions, &a, &a).unwrap();
    assert!((same.correlation - same.mu_a * (1.0 - same.mu_a)).abs() < 1e-12);

    let down = |c: &HeightConfig<i64>| c.get(1) <= 0;
    let bad = Event { name: "down", holds: &down };
    assert_eq!(fkg_check(&pot, g, &boundary, HeightWindow::Extensions, &a, &bad).unwrap_err().kind(), "NotIncreasing");

    let region = SquareRegion::rectangle(2, 2);
    let vg = Arc::new(region.vertex_graph());
    let bh = boundary_heights(&region, &vg).unwrap();
    let centre = vg.index_of(Site::new(1, 1)).unwrap();
    let hi = move |c: &HeightConfig<i64>| c.get(centre) >= 0;
    let e = Event { name: "centre", holds: &hi };
    let r = fkg_check(&PeriodicPotential::domino(), vg, &bh, HeightWindow::Extensions, &e, &e).unwrap();
    assert_eq!(r.states, 2);
    assert!(r.mtp2_violation.is_none());
}

#[test]
fn log_concavity() {
    let g = Arc::new(Graph::path(3));
    let boundary = BTreeMap::from([(0usize, 0i64), (2, 0)]);
    let r = log_concavity_check(&PeriodicPotential::sos_abs().lipschitz_truncate(3.0).unwrap(), g.clone(), &boundary, HeightWindow::Extensions, 1).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    // P(h) ∝ e^{-2|h|} on |h| ≤ 3
    let z: f64 = (-3i32..=3).map(|h| (-2.0 * h.abs() as f64).exp()).sum();
    for &(h, lp) in &r.log_marginal {
        assert!((lp - (-2.0 * h.abs() as f64 - z.ln())).abs() < 1e-12);
    }

    let region = SquareRegion::rectangle(4, 4);
    let vg = Arc::new(region.vertex_graph());
    let bh = boundary_heights(&region, &vg).unwrap();
    let centre = vg.index_of(Site::new(2, 2)).unwrap();
    let r = log_concavity_check(&PeriodicPotential::domino(), vg, &bh, HeightWindow::Extensions, centre).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.log_marginal.len() >= 2);

    // a double well breaks it
    let well = PeriodicPotential::tabulated(-1, vec![0.0, 2.0, 0.0]);
    let r = log_concavity_check(&well, g, &boundary, HeightWindow::Extensions, 1).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert_eq!(r.violation, Some(0));
}
