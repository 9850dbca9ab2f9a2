//! Deterministic battery of exact-oracle checks on tiny fixtures, run by the
//! `verify` command. The report text depends only on the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cluster::{edge_coupling_constant, synchronize_clusters};
use crate::config::{Boundary, HeightConfig};
use crate::enumerate::{Enumeration, HeightWindow};
use crate::error::{Error, Result};
use crate::feasibility::{self, FeasibilityGraph};
use crate::lattice::Graph;
use crate::observables::{self, Event, SigmaMethod, SigmaOptions, Verdict};
use crate::potential::PeriodicPotential;
use crate::rng::RngStream;
use crate::sampler::{cftp_sample, CftpOptions, HeatBath};
use crate::tilings::{self, SquareRegion};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "{passed}/{} checks passed (seed {})", self.checks.len(), self.seed);
        out
    }
}

fn check(checks: &mut Vec<Check>, name: &str, result: Result<(bool, String)>) {
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error {}: {e}", e.kind())));
    checks.push(Check { name: name.to_string(), passed, detail });
}

/// Domino region together with its vertex graph and boundary heights.
pub fn domino_fixture(region: &SquareRegion) -> Result<(Arc<Graph>, Boundary<i64>)> {
    let graph = region.vertex_graph();
    let boundary = tilings::boundary_heights(region, &graph)?;
    Ok((Arc::new(graph), boundary))
}

/// Rectangle of `w × h` vertices with height 0 on the outer ring.
pub fn flat_ring_fixture(w: usize, h: usize) -> (Arc<Graph>, Boundary<i64>) {
    let graph = Graph::rectangle(w, h);
    let boundary = graph
        .sites()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.x == 0 || s.y == 0 || s.x == w as i64 - 1 || s.y == h as i64 - 1)
        .map(|(v, _)| (v, 0))
        .collect();
    (Arc::new(graph), boundary)
}

/// Largest `|(πP)_j − π_j|` for the exact one-sweep kernel `P`.
pub fn stationarity_defect(pot: &PeriodicPotential, graph: Arc<Graph>, boundary: &Boundary<i64>, dynamics: &HeatBath) -> Result<f64> {
    let en = Enumeration::new(pot, graph, boundary, HeightWindow::Extensions, 100_000)?;
    let p = en.probabilities();
    let mat = dynamics.kernel_matrix(&en)?;
    let mut worst: f64 = 0.0;
    for j in 0..p.len() {
        let pj: f64 = (0..p.len()).map(|i| p[i] * mat[i][j]).sum();
        worst = worst.max((pj - p[j]).abs());
    }
    Ok(worst)
}

/// Pearson χ² p-value of observed counts against expected probabilities, pooling
/// cells with expectation below 5.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut o, mut e) = (0.0, 0.0);
    for i in order {
        o += counts[i] as f64;
        e += probs[i] * total as f64;
        if e >= 5.0 {
            stat += (o - e).powi(2) / e;
            cells += 1;
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 {
        stat += (o - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).expect("positive dof").cdf(stat)
}

fn tilings_checks(checks: &mut Vec<Check>) {
    check(checks, "tile-count-2x2", (|| {
        let n = tilings::count_tilings_bruteforce(&SquareRegion::rectangle(2, 2))?;
        Ok((n == 2, format!("count {n}")))
    })());
    check(checks, "kasteleyn-matches-bruteforce", (|| {
        let mut tested = 0;
        for w in 1..=4 {
            for h in 1..=4 {
                let r = SquareRegion::rectangle(w, h);
                let brute = tilings::count_tilings_bruteforce(&r)?;
                if tilings::count_tilings_kasteleyn(&r) != BigUint::from(brute) {
                    return Ok((false, format!("{w}x{h}: brute {brute}")));
                }
                tested += 1;
            }
        }
        Ok((true, format!("{tested} rectangles")))
    })());
    check(checks, "fibonacci-2xn", (|| {
        let counts: Vec<u64> =
            (1..=10).map(|n| tilings::count_tilings_bruteforce(&SquareRegion::rectangle(2, n))).collect::<Result<_>>()?;
        let ok = counts[0] == 1 && counts[1] == 2 && counts.windows(3).all(|w| w[2] == w[1] + w[0]);
        Ok((ok, format!("2x10 count {}", counts[9])))
    })());
    check(checks, "height-round-trip", (|| {
        let r = SquareRegion::rectangle(4, 3);
        let all = tilings::enumerate_tilings(&r)?;
        for t in &all {
            let phi = tilings::matching_to_height(t)?;
            if tilings::height_to_matching(&r, &phi)? != *t {
                return Ok((false, "round trip changed a tiling".into()));
            }
        }
        Ok((true, format!("{} tilings of 4x3", all.len())))
    })());
}

fn feasibility_checks(checks: &mut Vec<Check>) {
    check(checks, "domino-slope-polytope", (|| {
        let pot = PeriodicPotential::domino();
        let poly = feasibility::allowed_slope_polytope(&pot, feasibility::default_cycle_bound(&pot));
        let facets = poly.reduced_facets();
        let half = BigRational::new(1.into(), 2.into());
        let mut expected: Vec<([i64; 2], BigRational)> =
            [[1, 1], [1, -1], [-1, 1], [-1, -1]].into_iter().map(|n| (n, half.clone())).collect();
        expected.sort();
        let mut got = facets.clone();
        got.sort();
        Ok((got == expected, format!("{} facets", facets.len())))
    })());
    check(checks, "distances-match-path-enumeration", (|| {
        let pot = PeriodicPotential::domino();
        let graph = Graph::rectangle(3, 3);
        let fg = FeasibilityGraph::from_graph(&pot, &graph);
        let d = fg.all_pairs()?;
        let brute = brute_distances(&fg);
        let ok = d == brute;
        Ok((ok, format!("{} vertices", fg.len())))
    })());
    check(checks, "negative-cycle-witness", (|| {
        let pot = PeriodicPotential::domino();
        let g = feasibility::slope_torus(&pot, 4, &observables::slope(1, 0, 1))?;
        let fg = FeasibilityGraph::from_graph(&pot, &g);
        let Some((cycle, weight)) = fg.negative_cycle() else { return Ok((false, "no cycle found".into())) };
        let mut sum = 0.0;
        for k in 0..cycle.len() {
            let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
            let w = fg.arcs().iter().filter(|c| c.from == a && c.to == b).map(|c| c.weight).fold(f64::INFINITY, f64::min);
            sum += w;
        }
        Ok((sum < 0.0 && sum <= weight + 1e-9, format!("cycle of {} vertices, weight {sum}", cycle.len())))
    })());
}

/// Shortest walk weights by enumerating simple paths (graphs without negative cycles).
pub fn brute_distances(fg: &FeasibilityGraph) -> Vec<Vec<f64>> {
    let n = fg.len();
    let mut out = vec![vec![f64::INFINITY; n]; n];
    fn go(fg: &FeasibilityGraph, v: usize, w: f64, seen: &mut Vec<bool>, row: &mut Vec<f64>) {
        if w < row[v] {
            row[v] = w;
        }
        for a in fg.arcs().iter().filter(|a| a.from == v) {
            if !seen[a.to] {
                seen[a.to] = true;
                go(fg, a.to, w + a.weight, seen, row);
                seen[a.to] = false;
            }
        }
    }
    for (s, row) in out.iter_mut().enumerate() {
        let mut seen = vec![false; n];
        seen[s] = true;
        go(fg, s, 0.0, &mut seen, row);
    }
    out
}

fn sampler_checks(checks: &mut Vec<Check>, rng: &RngStream) {
    check(checks, "sweep-kernel-fixes-gibbs", (|| {
        let trunc = PeriodicPotential::sos_abs().lipschitz_truncate(1.0)?;
        let (g1, b1) = flat_ring_fixture(4, 4);
        let d1 = stationarity_defect(&trunc, g1.clone(), &b1, &HeatBath::new(Arc::new(trunc.clone()), g1, b1.keys().copied()))?;
        let domino = PeriodicPotential::domino();
        let (g2, b2) = domino_fixture(&SquareRegion::rectangle(4, 4))?;
        let d2 = stationarity_defect(&domino, g2.clone(), &b2, &HeatBath::new(Arc::new(domino.clone()), g2, b2.keys().copied()))?;
        let worst = d1.max(d2);
        Ok((worst <= 1e-12, format!("max deviation {worst:.3e}")))
    })());
    check(checks, "cftp-matches-enumeration", (|| {
        let pot = PeriodicPotential::domino();
        let (g, b) = domino_fixture(&SquareRegion::rectangle(4, 4))?;
        let en = Enumeration::new(&pot, g.clone(), &b, HeightWindow::Extensions, 10_000)?;
        let mut counts = vec![0u64; en.len()];
        let samples = 2000;
        for k in 0..samples {
            let out = cftp_sample(&pot, &g, &b, &rng.substream(1000 + k), CftpOptions::default())?;
            counts[en.index_of_config(&out.config).ok_or(Error::InvalidArgument("sample outside support".into()))?] += 1;
        }
        let p = chi_square_p(&counts, &en.probabilities());
        Ok((p > 0.001, format!("{samples} samples over {} states, p = {p:.4}", en.len())))
    })());
}

fn cluster_checks(checks: &mut Vec<Check>, rng: &RngStream) {
    check(checks, "coupling-constants-nonpositive", (|| {
        let pot = PeriodicPotential::sos_abs().lipschitz_truncate(3.0)?;
        let g = Graph::path(2);
        let mut r = rng.substream(2000);
        let mut worst = f64::NEG_INFINITY;
        let mut admissible = 0;
        while admissible < 1000 {
            let xi: Vec<(i64, i64)> = (0..2)
                .map(|_| {
                    let (a, b) = (r.below(7) as i64 - 3, r.below(7) as i64 - 3);
                    (a.min(b), a.max(b))
                })
                .collect();
            match edge_coupling_constant(&pot, &g, &xi, 0) {
                Ok(k) => {
                    worst = worst.max(k);
                    admissible += 1;
                }
                Err(Error::InfiniteEnergy(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok((worst <= 0.0, format!("largest K {worst} over {admissible} pairs")))
    })());
    check(checks, "synchronized-coupling-ordered", (|| {
        let pot = PeriodicPotential::sos_abs().lipschitz_truncate(1.0)?;
        let (g, b) = flat_ring_fixture(4, 4);
        let b2: Boundary<i64> = b.iter().map(|(&v, &h)| (v, h + 1)).collect();
        let window: Vec<bool> = (0..g.len()).map(|v| !b.contains_key(&v)).collect();
        let trials = 500;
        let mut violations = 0;
        for k in 0..trials {
            let p1 = cftp_sample(&pot, &g, &b, &rng.substream(3000 + 2 * k), CftpOptions::default())?.config;
            let p2 = cftp_sample(&pot, &g, &b2, &rng.substream(3001 + 2 * k), CftpOptions::default())?.config;
            let mut r = rng.substream(100_000 + k);
            let (q1, q2) = synchronize_clusters(&pot, p1, p2, &window, &mut r)?;
            if !q1.le(&q2) {
                violations += 1;
            }
        }
        Ok((violations == 0, format!("{violations} violations in {trials} trials")))
    })());
}

fn observable_checks(checks: &mut Vec<Check>) {
    check(checks, "single-edge-log-partition", (|| {
        let lz = observables::log_partition_region(&PeriodicPotential::sos_abs(), &Graph::path(2), &BTreeMap::from([(0, 0)]), 1000)?;
        let e = (-1f64).exp();
        let want = (1.0 + 2.0 * e / (1.0 - e)).ln();
        Ok(((lz - want).abs() < 1e-12, format!("log Z {lz:.12}")))
    })());
    check(checks, "exact-methods-agree", (|| {
        let domino = PeriodicPotential::domino();
        let u = observables::slope(0, 0, 1);
        let a = observables::log_partition_exact(&domino, 4, &u, SigmaMethod::ExactSum, 1 << 24)?;
        let b = observables::log_partition_exact(&domino, 4, &u, SigmaMethod::TransferMatrix, 1 << 24)?;
        Ok(((a - b).abs() < 1e-10, format!("log Z {a:.12} vs {b:.12}")))
    })());
    check(checks, "domino-sigma-convexity", (|| {
        let domino = PeriodicPotential::domino();
        let opts = SigmaOptions::default();
        let rng = RngStream::new(0, 0);
        let est = |p: i64| observables::sigma_estimate(&domino, &observables::slope(p, 0, 4), 4, SigmaMethod::TransferMatrix, &opts, &rng);
        let rep = observables::convexity_margin(&est(1)?, &est(-1)?, &est(0)?)?;
        Ok((rep.verdict == Verdict::Pass, format!("margin {:.12}", rep.margin)))
    })());
    check(checks, "fkg-and-mtp2-domino", (|| {
        let pot = PeriodicPotential::domino();
        let (g, b) = domino_fixture(&SquareRegion::rectangle(4, 4))?;
        let low = feasibility::extend_boundary_min::<i64>(&pot, &g, &b)?;
        let x1 = g.index_of(crate::lattice::Site::new(1, 1)).expect("vertex");
        let x2 = g.index_of(crate::lattice::Site::new(3, 2)).expect("vertex");
        let (t1, t2) = (low.get(x1), low.get(x2));
        let f = move |c: &HeightConfig<i64>| c.get(x1) > t1;
        let h = move |c: &HeightConfig<i64>| c.get(x2) > t2;
        let a = Event { name: "phi(1,1) above minimum", holds: &f };
        let b2 = Event { name: "phi(3,2) above minimum", holds: &h };
        let rep = observables::fkg_check(&pot, g, &b, HeightWindow::Extensions, &a, &b2)?;
        Ok((rep.verdict == Verdict::Pass, format!("correlation {:.6e}, {} states", rep.correlation, rep.states)))
    })());
    check(checks, "log-concave-marginal", (|| {
        let pot = PeriodicPotential::domino();
        let (g, b) = domino_fixture(&SquareRegion::rectangle(4, 4))?;
        let x0 = g.index_of(crate::lattice::Site::new(2, 2)).expect("centre vertex");
        let rep = observables::log_concavity_check(&pot, g, &b, HeightWindow::Extensions, x0)?;
        Ok((rep.verdict == Verdict::Pass, format!("{} heights", rep.log_marginal.len())))
    })());
}

/// Runs every check; randomized checks draw from substreams of `seed`.
pub fn run_battery(seed: u64) -> VerifyReport {
    let rng = RngStream::new(seed, 0);
    let mut checks = Vec::new();
    tilings_checks(&mut checks);
    feasibility_checks(&mut checks);
    sampler_checks(&mut checks, &rng);
    cluster_checks(&mut checks, &rng);
    observable_checks(&mut checks);
    VerifyReport { seed, checks }
}
