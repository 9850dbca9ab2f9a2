//! Torus partition functions, surface tension estimates, and exact or sampled
//! diagnostics of the finite-volume measures.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Boundary, Height, HeightConfig};
use crate::energy::{log_sum_exp, Energy, LogSum};
use crate::enumerate::{Enumeration, HeightWindow};
use crate::error::{Error, Result};
use crate::feasibility::{self, Slope};
use crate::lattice::{Dir, Graph, Period, Site};
use crate::potential::PeriodicPotential;
use crate::rng::RngStream;
use crate::sampler::TorusChain;

/// Energy excess beyond which an unbounded height range is cut off in exact sums.
pub const TRUNCATION_EXCESS: f64 = 45.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMethod {
    ExactSum,
    TransferMatrix,
    ThermodynamicIntegration,
}

impl SigmaMethod {
    pub fn is_exact(self) -> bool {
        self != SigmaMethod::ThermodynamicIntegration
    }
}

/// `−|T_n|⁻¹ log Z` on the `n`-torus in the slope class with offsets `class`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaEstimate {
    pub slope: [f64; 2],
    /// Integer homology offsets `⌊u n⌋` (discrete mode).
    pub class: [i64; 2],
    pub n: usize,
    pub value: f64,
    pub log_z: f64,
    pub method: SigmaMethod,
    pub stderr: f64,
}

/// Exact `log Z` and `⟨H⟩` of a discrete system, summing over heights of the free
/// vertices in breadth-first order from the pinned ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExactSum {
    pub log_z: f64,
    pub mean_energy: f64,
    pub states: u64,
}

struct Dfs<'a> {
    pot: &'a PeriodicPotential,
    graph: &'a Graph,
    order: Vec<usize>,
    due: Vec<Vec<usize>>,
    values: Vec<i64>,
    beta: f64,
    max_states: u64,
    states: u64,
    z: LogSum,
    zh: LogSum,
}

impl Dfs<'_> {
    fn eta(&self, e: usize) -> f64 {
        let edge = self.graph.edge(e);
        (self.values[edge.head] - self.values[edge.tail]) as f64 + edge.shift
    }

    fn local(&mut self, k: usize, h: i64) -> Energy {
        self.values[self.order[k]] = h;
        let mut total = Energy::ZERO;
        for &e in &self.due[k] {
            total = total + self.pot.graph_edge_energy(self.graph, e, self.eta(e));
        }
        total
    }

    fn range(&self, k: usize) -> (f64, f64) {
        let v = self.order[k];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for &e in &self.due[k] {
            let edge = self.graph.edge(e);
            if edge.tail == edge.head {
                continue;
            }
            let (slo, shi) = self.pot.edge_support(self.graph.edge_base(e), edge.dir);
            if edge.tail == v {
                let c = self.values[edge.head] as f64 + edge.shift;
                lo = lo.max(c - shi);
                hi = hi.min(c - slo);
            } else {
                let c = self.values[edge.tail] as f64 - edge.shift;
                lo = lo.max(c + slo);
                hi = hi.min(c + shi);
            }
        }
        (lo.ceil(), hi.floor())
    }

    fn candidates(&mut self, k: usize) -> Result<Vec<(i64, f64)>> {
        let (lo, hi) = self.range(k);
        if lo > hi {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        if lo.is_finite() && hi.is_finite() {
            for h in lo as i64..=hi as i64 {
                if let Energy::Finite(x) = self.local(k, h) {
                    out.push((h, x));
                }
            }
            return Ok(out);
        }
        if self.beta <= 0.0 {
            return Err(Error::NotLipschitz);
        }
        // walk to the minimiser of the convex local energy, then outward
        let v = self.order[k];
        let start = self.due[k]
            .iter()
            .find(|&&e| self.graph.edge(e).tail != self.graph.edge(e).head)
            .map(|&e| self.values[self.graph.other(e, v)])
            .unwrap_or(0)
            .clamp(lo.max(-1e15) as i64, hi.min(1e15) as i64);
        let mut m = start;
        let mut best = self.local(k, m).to_f64();
        for step in [1i64, -1] {
            loop {
                let next = m + step;
                if (next as f64) < lo || (next as f64) > hi {
                    break;
                }
                let e = self.local(k, next).to_f64();
                if e < best {
                    m = next;
                    best = e;
                } else {
                    break;
                }
            }
        }
        if !best.is_finite() {
            return Ok(out);
        }
        out.push((m, best));
        for step in [1i64, -1] {
            let mut h = m + step;
            while (h as f64) >= lo && (h as f64) <= hi {
                let e = self.local(k, h).to_f64();
                if !(self.beta * (e - best) <= TRUNCATION_EXCESS) {
                    break;
                }
                out.push((h, e));
                h += step;
            }
        }
        Ok(out)
    }

    fn go(&mut self, k: usize, energy: f64) -> Result<()> {
        if k == self.order.len() {
            self.states += 1;
            if self.states > self.max_states {
                return Err(Error::StateSpaceTooLarge(format!("more than {} configurations", self.max_states)));
            }
            self.z.add(-self.beta * energy);
            if energy > 0.0 {
                self.zh.add(-self.beta * energy + energy.ln());
            }
            return Ok(());
        }
        for (h, e) in self.candidates(k)? {
            self.values[self.order[k]] = h;
            self.go(k + 1, energy + e)?;
        }
        Ok(())
    }
}

/// Exact sum over configurations equal to `pinned` on its keys. Edges between two
/// pinned vertices count only when `pinned_edges` is set.
pub fn exact_sum(
    pot: &PeriodicPotential,
    graph: &Graph,
    pinned: &BTreeMap<usize, i64>,
    pinned_edges: bool,
    beta: f64,
    max_states: u64,
) -> Result<ExactSum> {
    if !pot.is_discrete() {
        return Err(Error::InvalidArgument("exact sums need a discrete potential".into()));
    }
    if pinned.is_empty() {
        return Err(Error::InvalidArgument("exact sums need a pinned vertex".into()));
    }
    let n = graph.len();
    let mut pos = vec![usize::MAX; n];
    let mut order = Vec::new();
    let mut queue: VecDeque<usize> = pinned.keys().copied().collect();
    let mut reached = vec![false; n];
    for &v in pinned.keys() {
        reached[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &e in graph.incident(v) {
            let w = graph.other(e, v);
            if !reached[w] {
                reached[w] = true;
                pos[w] = order.len();
                order.push(w);
                queue.push_back(w);
            }
        }
    }
    if order.len() + pinned.len() != n {
        return Err(Error::InvalidArgument("every component needs a pinned vertex".into()));
    }
    let mut due = vec![Vec::new(); order.len()];
    let mut values = vec![0i64; n];
    let mut base = 0.0;
    for (&v, &h) in pinned {
        values[v] = h;
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        match (pos[edge.tail], pos[edge.head]) {
            (usize::MAX, usize::MAX) => {
                if pinned_edges {
                    let eta = (values[edge.head] - values[edge.tail]) as f64 + edge.shift;
                    match pot.graph_edge_energy(graph, e, eta) {
                        Energy::Finite(x) => base += x,
                        Energy::Infinite => {
                            return Ok(ExactSum { log_z: f64::NEG_INFINITY, mean_energy: f64::NAN, states: 0 })
                        }
                    }
                }
            }
            (usize::MAX, p) | (p, usize::MAX) => due[p].push(e),
            (a, b) => due[a.max(b)].push(e),
        }
    }
    let mut dfs = Dfs { pot, graph, order, due, values, beta, max_states, states: 0, z: LogSum::default(), zh: LogSum::default() };
    dfs.go(0, base)?;
    let log_z = dfs.z.value();
    Ok(ExactSum { log_z, mean_energy: (dfs.zh.value() - log_z).exp(), states: dfs.states })
}

/// Torus graph of the slope class of `u`, or `None` when that class is infeasible.
fn class_torus(pot: &PeriodicPotential, n: usize, u: &Slope) -> Result<Option<Arc<Graph>>> {
    if !feasibility::torus_slope_feasible(pot, n, u)? {
        return Ok(None);
    }
    Ok(Some(feasibility::slope_torus(pot, n, u)?))
}

/// `log Z` (and `⟨H⟩`) over the slope class on `T_n`, reference vertex pinned at 0,
/// at inverse temperature `beta`; `log Z = −∞` for an infeasible class.
pub fn torus_exact_sum(pot: &PeriodicPotential, n: usize, u: &Slope, beta: f64, max_states: u64) -> Result<ExactSum> {
    match class_torus(pot, n, u)? {
        None => Ok(ExactSum { log_z: f64::NEG_INFINITY, mean_energy: f64::NAN, states: 0 }),
        Some(g) => exact_sum(pot, &g, &BTreeMap::from([(0, 0)]), true, beta, max_states),
    }
}

/// `log Z` of a region with fixed boundary heights: `H_Λ` counts every edge with a free
/// endpoint.
pub fn log_partition_region(pot: &PeriodicPotential, graph: &Graph, boundary: &Boundary<i64>, max_states: u64) -> Result<f64> {
    Ok(exact_sum(pot, graph, boundary, false, 1.0, max_states)?.log_z)
}

/// Column shapes `s` with `s[0] = 0` of finite vertical energy in column `c`.
fn column_shapes(pot: &PeriodicPotential, n: usize, c: i64, k2: i64, beta: f64) -> Vec<(Vec<i64>, f64)> {
    let mut out = Vec::new();
    let mut s = vec![0i64; n];
    fn go(pot: &PeriodicPotential, n: usize, c: i64, k2: i64, beta: f64, y: usize, s: &mut Vec<i64>, e: f64, out: &mut Vec<(Vec<i64>, f64)>) {
        let base = Site::new(c, y as i64);
        if y == n - 1 {
            let eta = s[0] - s[n - 1] + k2;
            if let Energy::Finite(x) = pot.edge_energy(base, Dir::E2, eta as f64) {
                out.push((s.clone(), e + beta * x));
            }
            return;
        }
        let (lo, hi) = pot.edge_support(base, Dir::E2);
        for eta in lo as i64..=hi as i64 {
            if let Energy::Finite(x) = pot.edge_energy(base, Dir::E2, eta as f64) {
                s[y + 1] = s[y] + eta;
                go(pot, n, c, k2, beta, y + 1, s, e + beta * x, out);
            }
        }
    }
    go(pot, n, c, k2, beta, 0, &mut s, 0.0, &mut out);
    out
}

/// `log Z` over the slope class by a column transfer matrix. Column states are a
/// shape relative to the bottom vertex plus the running sum of bottom increments.
pub fn log_partition_transfer(pot: &PeriodicPotential, n: usize, u: &Slope, beta: f64, max_states: u64) -> Result<f64> {
    if !pot.is_discrete() || !pot.is_lipschitz() {
        return Err(Error::NotLipschitz);
    }
    if class_torus(pot, n, u)?.is_none() {
        return Ok(f64::NEG_INFINITY);
    }
    let offsets = feasibility::torus_offsets(pot, n, u);
    let (k1, k2) = (offsets[0] as i64, offsets[1] as i64);
    let shapes: Vec<Vec<(Vec<i64>, f64)>> = (0..n as i64).map(|c| column_shapes(pot, n, c, k2, beta)).collect();
    let widest = shapes.iter().map(Vec::len).max().unwrap_or(0) as u64;
    if widest.pow(3).saturating_mul(n as u64) > max_states.saturating_mul(64) {
        return Err(Error::StateSpaceTooLarge(format!("{widest} column shapes")));
    }
    // horizontal energy and allowed bottom increments between consecutive columns
    let transition = |c: usize, s: &[i64], t: &[i64]| -> Vec<(i64, f64)> {
        let mut lo = i64::MIN;
        let mut hi = i64::MAX;
        for y in 0..n {
            let (a, b) = pot.edge_support(Site::new(c as i64, y as i64), Dir::E1);
            lo = lo.max(a as i64 - t[y] + s[y]);
            hi = hi.min(b as i64 - t[y] + s[y]);
        }
        let mut out = Vec::new();
        for d in lo..=hi {
            let mut e = 0.0;
            let mut ok = true;
            for y in 0..n {
                match pot.edge_energy(Site::new(c as i64, y as i64), Dir::E1, (d + t[y] - s[y]) as f64) {
                    Energy::Finite(x) => e += beta * x,
                    Energy::Infinite => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                out.push((d, e));
            }
        }
        out
    };
    let mut total = LogSum::default();
    for (s0, (shape0, v0)) in shapes[0].iter().enumerate() {
        let mut cur: BTreeMap<(usize, i64), f64> = BTreeMap::from([((s0, 0), 1.0)]);
        let mut log_scale = -v0;
        for c in 0..n {
            let next_c = (c + 1) % n;
            let mut next: BTreeMap<(usize, i64), f64> = BTreeMap::new();
            for (&(si, b), &w) in &cur {
                let s = &shapes[c][si].0;
                for (ti, (t, vt)) in shapes[next_c].iter().enumerate() {
                    if next_c == 0 && ti != s0 {
                        continue;
                    }
                    let vert = if next_c == 0 { 0.0 } else { *vt };
                    for (d, e) in transition(c, s, t) {
                        *next.entry((ti, b + d)).or_insert(0.0) += w * (-(e + vert)).exp();
                    }
                }
            }
            let m = next.values().copied().fold(0.0, f64::max);
            if m == 0.0 {
                cur.clear();
                break;
            }
            for w in next.values_mut() {
                *w /= m;
            }
            log_scale += m.ln();
            cur = next;
        }
        let _ = shape0;
        if let Some(w) = cur.get(&(s0, k1)) {
            total.add(log_scale + w.ln());
        }
    }
    Ok(total.value())
}

/// Exact `log Z` by either exact method.
pub fn log_partition_exact(pot: &PeriodicPotential, n: usize, u: &Slope, method: SigmaMethod, max_states: u64) -> Result<f64> {
    match method {
        SigmaMethod::ExactSum => Ok(torus_exact_sum(pot, n, u, 1.0, max_states)?.log_z),
        SigmaMethod::TransferMatrix => log_partition_transfer(pot, n, u, 1.0, max_states),
        SigmaMethod::ThermodynamicIntegration => Err(Error::InvalidArgument("not an exact method".into())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    #[default]
    Trapezoid,
    ClenshawCurtis,
}

/// `m` Chebyshev–Lobatto points on `[0, 1]`, increasing, with weights.
pub fn beta_grid(m: usize, rule: Quadrature) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 2);
    let big_n = m - 1;
    let nodes: Vec<f64> = (0..m).map(|k| 0.5 * (1.0 - (std::f64::consts::PI * k as f64 / big_n as f64).cos())).collect();
    let weights = match rule {
        Quadrature::Trapezoid => (0..m)
            .map(|k| {
                let left = if k > 0 { nodes[k] - nodes[k - 1] } else { 0.0 };
                let right = if k + 1 < m { nodes[k + 1] - nodes[k] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect(),
        Quadrature::ClenshawCurtis => (0..m)
            .map(|k| {
                let c = if k == 0 || k == big_n { 1.0 } else { 2.0 };
                let mut s = 0.0;
                for j in 1..=big_n / 2 {
                    let b = if 2 * j == big_n { 1.0 } else { 2.0 };
                    let angle = 2.0 * std::f64::consts::PI * (j * k) as f64 / big_n as f64;
                    s += b / (4.0 * (j * j) as f64 - 1.0) * angle.cos();
                }
                // halved for the interval [0, 1]
                0.5 * c / big_n as f64 * (1.0 - s)
            })
            .collect(),
    };
    (nodes, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TiOptions {
    pub points: usize,
    pub batches: usize,
    /// Measured sweeps per inverse temperature.
    pub sweeps: u64,
    pub burn_in: u64,
    pub quadrature: Quadrature,
    /// Maximal acceptable standard error of `σ̂`.
    pub tolerance: Option<f64>,
    pub parallel: bool,
}

impl Default for TiOptions {
    fn default() -> Self {
        TiOptions { points: 21, batches: 32, sweeps: 3200, burn_in: 400, quadrature: Quadrature::Trapezoid, tolerance: None, parallel: true }
    }
}

/// Mean and standard error from consecutive batch means.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches.max(1);
    if size == 0 {
        let m = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        return (m, f64::INFINITY);
    }
    let means: Vec<f64> = (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0).max(1.0);
    (m, (var / batches as f64).sqrt())
}

/// Thermodynamic integration `log Z(1) = log N₀ − ∫₀¹ ⟨H⟩_β dβ` with `N₀` counted by
/// transfer matrix; returns `(log Z, stderr)`.
pub fn thermodynamic_integration(pot: &PeriodicPotential, n: usize, u: &Slope, opts: &TiOptions, rng: &RngStream) -> Result<(f64, f64)> {
    if !pot.is_discrete() || !pot.is_lipschitz() {
        return Err(Error::NotLipschitz);
    }
    if !feasibility::torus_slope_feasible(pot, n, u)? {
        return Err(Error::InfeasibleSlope);
    }
    let log_n0 = log_partition_transfer(&pot.support_indicator()?, n, u, 1.0, u64::MAX / 128)?;
    let (betas, weights) = beta_grid(opts.points, opts.quadrature);
    let shared = Arc::new(pot.clone());
    let run = |k: usize| -> Result<(f64, f64)> {
        let mut chain = TorusChain::<i64>::new(shared.clone(), n, u, rng.substream(rng.stream_id().wrapping_add(1 + k as u64)))?
            .with_beta(betas[k]);
        chain.advance(opts.burn_in)?;
        let mut hs = Vec::with_capacity(opts.sweeps as usize);
        for _ in 0..opts.sweeps {
            chain.advance(1)?;
            hs.push(pot.hamiltonian_interior(&chain.config, None)?.to_f64());
        }
        Ok(batch_means(&hs, opts.batches))
    };
    let stats: Vec<Result<(f64, f64)>> = if opts.parallel {
        (0..betas.len()).into_par_iter().map(run).collect()
    } else {
        (0..betas.len()).map(run).collect()
    };
    let mut integral = 0.0;
    let mut var = 0.0;
    for (w, s) in weights.iter().zip(stats) {
        let (m, se) = s?;
        integral += w * m;
        var += (w * se).powi(2);
    }
    Ok((log_n0 - integral, var.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaOptions {
    pub max_states: u64,
    pub ti: TiOptions,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        SigmaOptions { max_states: 50_000_000, ti: TiOptions::default() }
    }
}

pub fn sigma_estimate(
    pot: &PeriodicPotential,
    u: &Slope,
    n: usize,
    method: SigmaMethod,
    opts: &SigmaOptions,
    rng: &RngStream,
) -> Result<SigmaEstimate> {
    let offsets = feasibility::torus_offsets(pot, n, u);
    let area = (n * n) as f64;
    let (log_z, stderr) = match method {
        SigmaMethod::ExactSum | SigmaMethod::TransferMatrix => (log_partition_exact(pot, n, u, method, opts.max_states)?, 0.0),
        SigmaMethod::ThermodynamicIntegration => {
            let (lz, se) = thermodynamic_integration(pot, n, u, &opts.ti, rng)?;
            if let Some(tol) = opts.ti.tolerance {
                if se / area > tol {
                    return Err(Error::InsufficientBudget(format!("stderr {} exceeds {tol}", se / area)));
                }
            }
            (lz, se)
        }
    };
    Ok(SigmaEstimate {
        slope: feasibility::slope_to_f64(u),
        class: [offsets[0] as i64, offsets[1] as i64],
        n,
        value: if log_z == f64::NEG_INFINITY { f64::INFINITY } else { -log_z / area },
        log_z,
        method,
        stderr: stderr / area,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub margin: f64,
    pub stderr: f64,
    pub verdict: Verdict,
}

/// `(σ(u₁) + σ(u₂))/2 − σ((u₁ + u₂)/2)` with a verdict.
pub fn convexity_margin(e1: &SigmaEstimate, e2: &SigmaEstimate, mid: &SigmaEstimate) -> Result<ConvexityReport> {
    if e1.n != e2.n || e1.n != mid.n {
        return Err(Error::SlopeMismatch(format!("torus sizes {}, {}, {}", e1.n, e2.n, mid.n)));
    }
    if e1.method != e2.method || e1.method != mid.method {
        return Err(Error::SlopeMismatch("estimates use different methods".into()));
    }
    for i in 0..2 {
        if 2 * mid.class[i] != e1.class[i] + e2.class[i] {
            return Err(Error::SlopeMismatch(format!(
                "class {:?} is not the midpoint of {:?} and {:?}",
                mid.class, e1.class, e2.class
            )));
        }
    }
    let margin = 0.5 * (e1.value + e2.value) - mid.value;
    let stderr = ((e1.stderr.powi(2) + e2.stderr.powi(2)) / 4.0 + mid.stderr.powi(2)).sqrt();
    let verdict = if e1.method.is_exact() {
        let eps = 1e-12 * (1.0 + e1.value.abs() + e2.value.abs() + mid.value.abs());
        if margin > eps {
            Verdict::Pass
        } else if margin < -eps {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    } else if margin > 3.0 * stderr {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(ConvexityReport { margin, stderr, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternShape {
    /// The four increments at a vertex: `∇₁φ(x), ∇₂φ(x), ∇₁φ(x − e₁), ∇₂φ(x − e₂)`.
    Star,
    /// All increments of edges with both ends in the `k × k` block at `x`.
    Block(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Translates {
    /// `x ∈ ℒ` only.
    #[default]
    Invariance,
    All,
}

/// Frequencies of local increment patterns; continuous increments are keyed in units
/// of `1e-9`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalGradientMeasure {
    pub shape: PatternShape,
    pub counts: BTreeMap<Vec<i64>, u64>,
    pub total: u64,
}

impl EmpiricalGradientMeasure {
    pub fn frequencies(&self) -> BTreeMap<Vec<i64>, f64> {
        self.counts.iter().map(|(k, &c)| (k.clone(), c as f64 / self.total as f64)).collect()
    }
}

fn pattern_offsets(shape: PatternShape) -> Vec<((i64, i64), (i64, i64))> {
    match shape {
        PatternShape::Star => vec![((0, 0), (1, 0)), ((0, 0), (0, 1)), ((-1, 0), (0, 0)), ((0, -1), (0, 0))],
        PatternShape::Block(k) => {
            let k = k as i64;
            let mut out = Vec::new();
            for x in 0..k {
                for y in 0..k {
                    if x + 1 < k {
                        out.push(((x, y), (x + 1, y)));
                    }
                    if y + 1 < k {
                        out.push(((x, y), (x, y + 1)));
                    }
                }
            }
            out
        }
    }
}

pub fn empirical_gradient_measure<H: Height>(
    samples: &[HeightConfig<H>],
    period: Period,
    shape: PatternShape,
    translates: Translates,
) -> EmpiricalGradientMeasure {
    let offsets = pattern_offsets(shape);
    let scale = if H::DOMAIN.is_discrete() { 1.0 } else { 1e9 };
    let mut counts = BTreeMap::new();
    let mut total = 0;
    for config in samples {
        for &x in config.graph().sites() {
            if translates == Translates::Invariance && !period.contains(x) {
                continue;
            }
            let key: Option<Vec<i64>> = offsets
                .iter()
                .map(|&((ax, ay), (bx, by))| {
                    let a = config.lifted(x.offset(ax, ay))?;
                    let b = config.lifted(x.offset(bx, by))?;
                    Some(((b - a) * scale).round() as i64)
                })
                .collect();
            if let Some(k) = key {
                *counts.entry(k).or_insert(0u64) += 1;
                total += 1;
            }
        }
    }
    EmpiricalGradientMeasure { shape, counts, total }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceProfile {
    pub distances: Vec<usize>,
    /// `Var(φ(x + j e₁) − φ(x))`, largest over the `ℒ`-class of `x`.
    pub variances: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Largest single-increment variance over edge classes.
    pub c_hat: f64,
    /// `Var(j) ≤ j Ĉ + 3 stderr` at each distance.
    pub within_bound: Vec<bool>,
    pub verdict: Verdict,
    /// `Var(16) / Var(2)` when both distances are present.
    pub roughness: Option<f64>,
    pub samples: usize,
}

/// Variances of `φ(x + j e₁) − φ(x)`, pooled over the sites of each `ℒ`-class (lifted
/// heights on a torus), with batch-mean standard errors over the sample sequence.
pub fn variance_profile_from_samples<H: Height>(
    samples: &[HeightConfig<H>],
    period: Period,
    distances: &[usize],
    batches: usize,
) -> Result<VarianceProfile> {
    if samples.is_empty() {
        return Err(Error::InsufficientBudget("no samples".into()));
    }
    let stats = |j: i64, dir: Dir, class: Option<usize>| -> Vec<(f64, f64)> {
        samples
            .iter()
            .map(|c| {
                let (mut s1, mut s2, mut k) = (0.0, 0.0, 0.0);
                for &x in c.graph().sites() {
                    if class.is_some_and(|cl| period.class_index(x) != cl) {
                        continue;
                    }
                    let (dx, dy) = dir.vector();
                    let (Some(a), Some(b)) = (c.lifted(x), c.lifted(x.offset(dx * j, dy * j))) else { continue };
                    let d = b - a;
                    s1 += d;
                    s2 += d * d;
                    k += 1.0;
                }
                if k == 0.0 {
                    (f64::NAN, f64::NAN)
                } else {
                    (s1 / k, s2 / k)
                }
            })
            .collect()
    };
    let estimate = |m: &[(f64, f64)]| -> (f64, f64) {
        let var_of = |part: &[(f64, f64)]| {
            let n = part.len() as f64;
            let m1 = part.iter().map(|p| p.0).sum::<f64>() / n;
            let m2 = part.iter().map(|p| p.1).sum::<f64>() / n;
            (m2 - m1 * m1).max(0.0)
        };
        let v = var_of(m);
        let size = m.len() / batches.max(2);
        if size == 0 {
            return (v, f64::INFINITY);
        }
        let b = m.len() / size;
        let vb: Vec<f64> = (0..b).map(|i| var_of(&m[i * size..(i + 1) * size])).collect();
        let mean = vb.iter().sum::<f64>() / b as f64;
        let sd = (vb.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b as f64 - 1.0)).sqrt();
        (v, sd / (b as f64).sqrt())
    };
    let mut c_hat: f64 = 0.0;
    for dir in Dir::ALL {
        for cl in 0..period.index() {
            let m = stats(1, dir, Some(cl));
            if m.iter().all(|p| p.0.is_finite()) {
                c_hat = c_hat.max(estimate(&m).0);
            }
        }
    }
    let mut variances = Vec::new();
    let mut stderrs = Vec::new();
    let mut within = Vec::new();
    for &j in distances {
        // largest over the ℒ-class of the starting vertex
        let (v, se) = (0..period.index())
            .map(|cl| estimate(&stats(j as i64, Dir::E1, Some(cl))))
            .filter(|p| p.0.is_finite())
            .fold((0.0, 0.0), |best, p| if p.0 > best.0 { p } else { best });
        within.push(v <= j as f64 * c_hat + 3.0 * se);
        variances.push(v);
        stderrs.push(se);
    }
    let at = |j: usize| distances.iter().position(|&d| d == j).map(|i| variances[i]);
    let roughness = match (at(16), at(2)) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let verdict = if within.iter().all(|&w| w) { Verdict::Pass } else { Verdict::Fail };
    Ok(VarianceProfile { distances: distances.to_vec(), variances, stderrs, c_hat, within_bound: within, verdict, roughness, samples: samples.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileOptions {
    pub burn_in: u64,
    pub samples: usize,
    /// Sweeps between recorded samples.
    pub spacing: u64,
    pub batches: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { burn_in: 2000, samples: 3200, spacing: 4, batches: 32 }
    }
}

/// Variance profile of a heat-bath chain on the slope-`u` torus.
pub fn variance_profile(
    pot: &PeriodicPotential,
    n: usize,
    u: &Slope,
    distances: &[usize],
    opts: &ProfileOptions,
    rng: &RngStream,
) -> Result<VarianceProfile> {
    let mut chain = TorusChain::<i64>::new(Arc::new(pot.clone()), n, u, rng.clone())?.with_parallel(true);
    chain.advance(opts.burn_in)?;
    let mut samples = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        chain.advance(opts.spacing)?;
        samples.push(chain.config.clone());
    }
    variance_profile_from_samples(&samples, pot.period(), distances, opts.batches)
}

/// Averages of `φ` over the boxes `[c − k, c + k]²` for each `k` in `sizes` (lifted
/// heights on a torus; no re-pinning).
pub fn height_offset_estimate<H: Height>(config: &HeightConfig<H>, centre: Site, sizes: &[i64]) -> Result<Vec<f64>> {
    sizes
        .iter()
        .map(|&k| {
            let mut sum = 0.0;
            for x in -k..=k {
                for y in -k..=k {
                    sum += config.lifted(centre.offset(x, y)).ok_or(Error::BoxExceedsSupport(k))?;
                }
            }
            Ok(sum / ((2 * k + 1) * (2 * k + 1)) as f64)
        })
        .collect()
}

/// An increasing event on height configurations.
pub struct Event<'a> {
    pub name: &'a str,
    pub holds: &'a dyn Fn(&HeightConfig<i64>) -> bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FkgReport {
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu_ab: f64,
    pub correlation: f64,
    /// A pair of state indices violating `H(max) + H(min) ≤ H(φ₁) + H(φ₂)`.
    pub mtp2_violation: Option<(usize, usize)>,
    pub states: usize,
    pub verdict: Verdict,
}

fn leq(a: &[i64], b: &[i64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Exact FKG correlation of two increasing events and an exhaustive MTP₂ check.
pub fn fkg_check(
    pot: &PeriodicPotential,
    graph: Arc<Graph>,
    boundary: &Boundary<i64>,
    window: HeightWindow,
    a: &Event,
    b: &Event,
) -> Result<FkgReport> {
    let en = Enumeration::new(pot, graph, boundary, window, 200_000)?;
    let states = en.states();
    let configs: Vec<HeightConfig<i64>> = (0..en.len()).map(|i| en.config(i)).collect();
    let ia: Vec<bool> = configs.iter().map(|c| (a.holds)(c)).collect();
    let ib: Vec<bool> = configs.iter().map(|c| (b.holds)(c)).collect();
    for (ev, ind) in [(a, &ia), (b, &ib)] {
        for i in 0..states.len() {
            if !ind[i] {
                continue;
            }
            if let Some(j) = (0..states.len()).find(|&j| !ind[j] && leq(&states[i], &states[j])) {
                let _ = j;
                return Err(Error::NotIncreasing(ev.name.to_string()));
            }
        }
    }
    let p = en.probabilities();
    let mu = |ind: &dyn Fn(usize) -> bool| (0..p.len()).filter(|&i| ind(i)).map(|i| p[i]).sum::<f64>();
    let mu_a = mu(&|i| ia[i]);
    let mu_b = mu(&|i| ib[i]);
    let mu_ab = mu(&|i| ia[i] && ib[i]);
    let correlation = mu_ab - mu_a * mu_b;
    let energies = en.energies();
    let mut violation = None;
    'outer: for i in 0..states.len() {
        for j in i + 1..states.len() {
            let hi: Vec<i64> = states[i].iter().zip(&states[j]).map(|(x, y)| *x.max(y)).collect();
            let lo: Vec<i64> = states[i].iter().zip(&states[j]).map(|(x, y)| *x.min(y)).collect();
            let ok = match (en.index_of(&hi), en.index_of(&lo)) {
                (Some(h), Some(l)) => {
                    let lhs = energies[h] + energies[l];
                    let rhs = energies[i] + energies[j];
                    lhs <= rhs + 1e-12 * (1.0 + rhs.abs())
                }
                _ => false,
            };
            if !ok {
                violation = Some((i, j));
                break 'outer;
            }
        }
    }
    let verdict = if correlation >= -1e-12 && violation.is_none() { Verdict::Pass } else { Verdict::Fail };
    Ok(FkgReport { mu_a, mu_b, mu_ab, correlation, mtp2_violation: violation, states: states.len(), verdict })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogConcavityReport {
    /// `(height, log probability)` over the support.
    pub log_marginal: Vec<(i64, f64)>,
    /// First height where `f(a)² < f(a−1) f(a+1)`.
    pub violation: Option<i64>,
    pub verdict: Verdict,
}

/// Exact log-concavity of the law of `φ(x0)`, in log space.
pub fn log_concavity_check(
    pot: &PeriodicPotential,
    graph: Arc<Graph>,
    boundary: &Boundary<i64>,
    window: HeightWindow,
    x0: usize,
) -> Result<LogConcavityReport> {
    let en = Enumeration::new(pot, graph, boundary, window, 2_000_000)?;
    let mut logs: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    if let Some(&h) = boundary.get(&x0) {
        logs.insert(h, vec![0.0]);
    } else {
        let k = en.free().iter().position(|&v| v == x0).ok_or_else(|| Error::InvalidArgument("vertex not in graph".into()))?;
        for (s, e) in en.states().iter().zip(en.energies()) {
            logs.entry(s[k]).or_default().push(-e);
        }
    }
    let log_marginal: Vec<(i64, f64)> = logs.into_iter().map(|(h, l)| (h, log_sum_exp(l) - en.log_z())).collect();
    let lf = |a: i64| log_marginal.iter().find(|p| p.0 == a).map_or(f64::NEG_INFINITY, |p| p.1);
    let (lo, hi) = (log_marginal[0].0, log_marginal[log_marginal.len() - 1].0);
    let mut violation = None;
    for a in lo..=hi {
        let (l, m, r) = (lf(a - 1), lf(a), lf(a + 1));
        if 2.0 * m < l + r - 1e-12 * (1.0 + m.abs()) {
            violation = Some(a);
            break;
        }
    }
    let verdict = if violation.is_none() { Verdict::Pass } else { Verdict::Fail };
    Ok(LogConcavityReport { log_marginal, violation, verdict })
}

/// A rational slope from two integers over a common denominator.
pub fn slope(p1: i64, p2: i64, q: i64) -> Slope {
    [Rational64::new(p1, q), Rational64::new(p2, q)]
}
