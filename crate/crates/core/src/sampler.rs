//! Heat-bath dynamics, slope-constrained torus chains and coupling from the past.
//!
//! Randomness is keyed by `(sweep, vertex)`: the update of vertex `v` in sweep `k`
//! uses the uniform at counter `2 k N + v` of the stream (`N` vertices), and random
//! scan draws its site choices from counters `2 k N + N ..`. Any execution order of a
//! checkerboard half-sweep therefore produces the same bits.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{Boundary, Height, HeightConfig};
use crate::energy::Energy;
use crate::enumerate::Enumeration;
use crate::error::{Error, Result};
use crate::feasibility::{self, FeasibilityGraph, Slope};
use crate::lattice::{Graph, GraphKind, Site};
use crate::potential::{EdgePotential, PeriodicPotential};
use crate::rng::RngStream;

/// Relative mass below which discrete tails are dropped.
const TAIL_MASS: f64 = 1e-15;
/// Upper bound on the number of heights in one conditional table.
const MAX_TABLE: usize = 1 << 20;
/// Energy excess beyond which continuous conditionals are truncated (`e^{-37} ≈ 1e-16`).
const CONT_CUTOFF: f64 = 37.0;

/// One-dimensional conditional law of a single height.
#[derive(Clone, Debug, PartialEq)]
pub enum SiteConditional {
    /// Probabilities of `start, start + 1, ...`.
    Discrete { start: i64, probs: Vec<f64> },
    Gaussian { mean: f64, variance: f64 },
    /// Density sampled at increasing `nodes`, with cumulative mass `cdf` (ending at 1)
    /// under the piecewise-linear density.
    Tabulated { nodes: Vec<f64>, density: Vec<f64>, cdf: Vec<f64> },
}

fn open_unit(u: f64) -> f64 {
    // maps [0,1) into (0,1) without moving interior points by more than 2^-54
    let k = (u * 9_007_199_254_740_992.0).floor();
    (k + 0.5) / 9_007_199_254_740_992.0
}

impl SiteConditional {
    /// Inverse-CDF sample at uniform `u ∈ [0, 1)`; monotone in `u`.
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            SiteConditional::Discrete { start, probs } => {
                let target = u;
                let mut cum = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    cum += p;
                    if target < cum {
                        return (*start + i as i64) as f64;
                    }
                }
                (*start + probs.len() as i64 - 1) as f64
            }
            SiteConditional::Gaussian { mean, variance } => {
                let z = Normal::standard().inverse_cdf(open_unit(u));
                mean + variance.sqrt() * z
            }
            SiteConditional::Tabulated { nodes, density, cdf } => invert_piecewise(nodes, density, cdf, u),
        }
    }

    /// Probability of an integer height (discrete laws only).
    pub fn probability(&self, a: i64) -> f64 {
        match self {
            SiteConditional::Discrete { start, probs } => {
                let i = a - start;
                if i < 0 || i as usize >= probs.len() {
                    0.0
                } else {
                    probs[i as usize]
                }
            }
            _ => 0.0,
        }
    }
}

fn invert_piecewise(nodes: &[f64], density: &[f64], cdf: &[f64], u: f64) -> f64 {
    let i = cdf.partition_point(|&c| c <= u).clamp(1, nodes.len() - 1) - 1;
    let (x0, x1) = (nodes[i], nodes[i + 1]);
    let (f0, f1) = (density[i], density[i + 1]);
    let h = x1 - x0;
    let need = u - cdf[i];
    // mass on [x0, x0 + s]: f0 s + (f1 - f0) s² / (2h)
    let a = (f1 - f0) / (2.0 * h);
    let s = if a.abs() < 1e-300 {
        if f0 > 0.0 {
            need / f0
        } else {
            0.0
        }
    } else {
        let disc = (f0 * f0 + 4.0 * a * need).max(0.0);
        (-f0 + disc.sqrt()) / (2.0 * a)
    };
    x0 + s.clamp(0.0, h)
}

/// Energy of the edges at `v` with `v` set to `a`.
fn local_energy<H: Height>(pot: &PeriodicPotential, graph: &Graph, vals: &[H], v: usize, a: f64) -> Energy {
    let mut total = Energy::ZERO;
    for &e in graph.incident(v) {
        let edge = graph.edge(e);
        let eta = if edge.tail == edge.head {
            edge.shift
        } else if edge.tail == v {
            vals[edge.head].to_f64() - a + edge.shift
        } else {
            a - vals[edge.tail].to_f64() + edge.shift
        };
        total = total + pot.graph_edge_energy(graph, e, eta);
        if total.is_infinite() {
            break;
        }
    }
    total
}

/// Interval of heights at `v` allowed by the supports of the incident edges.
fn local_range<H: Height>(pot: &PeriodicPotential, graph: &Graph, vals: &[H], v: usize) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for &e in graph.incident(v) {
        let edge = graph.edge(e);
        if edge.tail == edge.head {
            continue;
        }
        let (slo, shi) = pot.edge_support(graph.edge_base(e), edge.dir);
        if edge.tail == v {
            let c = vals[edge.head].to_f64() + edge.shift;
            lo = lo.max(c - shi);
            hi = hi.min(c - slo);
        } else {
            let c = vals[edge.tail].to_f64() - edge.shift;
            lo = lo.max(c + slo);
            hi = hi.min(c + shi);
        }
    }
    (lo, hi)
}

/// Mean of the neighbour-implied heights, a starting point for minimisation.
fn neighbour_centre<H: Height>(graph: &Graph, vals: &[H], v: usize) -> f64 {
    let mut sum = 0.0;
    let mut k = 0.0;
    for &e in graph.incident(v) {
        let edge = graph.edge(e);
        if edge.tail == edge.head {
            continue;
        }
        sum += if edge.tail == v {
            vals[edge.head].to_f64() + edge.shift
        } else {
            vals[edge.tail].to_f64() - edge.shift
        };
        k += 1.0;
    }
    if k == 0.0 {
        0.0
    } else {
        sum / k
    }
}

fn empty_support(v: usize, graph: &Graph) -> Error {
    Error::EmptySupport(format!("no finite-energy height at vertex {}", graph.site(v)))
}

/// Log-weights `-β E(a)` of the discrete conditional at `v`, written into `buf`;
/// returns the first height of the table.
fn discrete_log_weights<H: Height>(
    pot: &PeriodicPotential,
    graph: &Graph,
    vals: &[H],
    v: usize,
    beta: f64,
    buf: &mut Vec<f64>,
) -> Result<i64> {
    buf.clear();
    let (lo, hi) = local_range(pot, graph, vals, v);
    let (lo, hi) = (lo.ceil(), hi.floor());
    if lo > hi {
        return Err(empty_support(v, graph));
    }
    let lw = |a: f64| match local_energy(pot, graph, vals, v, a) {
        Energy::Finite(x) => -beta * x,
        Energy::Infinite => f64::NEG_INFINITY,
    };
    if lo.is_finite() && hi.is_finite() {
        if hi - lo + 1.0 > MAX_TABLE as f64 {
            return Err(Error::StateSpaceTooLarge(format!("conditional at {} spans {} heights", graph.site(v), hi - lo + 1.0)));
        }
        let mut a = lo;
        while a <= hi {
            buf.push(lw(a));
            a += 1.0;
        }
        if buf.iter().all(|w| *w == f64::NEG_INFINITY) {
            return Err(empty_support(v, graph));
        }
        return Ok(lo as i64);
    }
    if beta <= 0.0 {
        return Err(Error::NotLipschitz);
    }
    // unbounded: walk to the minimiser of the convex local energy, then extend the
    // table outward until the remaining tail mass is negligible
    let mut m = neighbour_centre(graph, vals, v).round().clamp(lo, hi);
    let mut best = lw(m);
    for step in [1.0, -1.0] {
        loop {
            let next = m + step;
            if next < lo || next > hi {
                break;
            }
            let w = lw(next);
            if w > best {
                m = next;
                best = w;
            } else {
                break;
            }
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(empty_support(v, graph));
    }
    let extend = |dir: f64| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let mut prev = best;
        let mut a = m + dir;
        let cut = best + TAIL_MASS.ln();
        while a >= lo && a <= hi {
            let w = lw(a);
            if w == f64::NEG_INFINITY {
                break;
            }
            out.push(w);
            // geometric tail bound: mass beyond a is at most e^w / (1 - ratio)
            let log_ratio = w - prev;
            if log_ratio < 0.0 && w - (-log_ratio.exp_m1()).ln() < cut {
                break;
            }
            if out.len() > MAX_TABLE {
                return Err(Error::StateSpaceTooLarge(format!("conditional at {} does not decay", graph.site(v))));
            }
            prev = w;
            a += dir;
        }
        Ok(out)
    };
    let left = extend(-1.0)?;
    let right = extend(1.0)?;
    let start = m as i64 - left.len() as i64;
    buf.extend(left.iter().rev());
    buf.push(best);
    buf.extend(right);
    Ok(start)
}

fn sample_log_weights(start: i64, lw: &[f64], u: f64) -> i64 {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = lw.iter().map(|w| (w - max).exp()).sum();
    let target = u * total;
    let mut cum = 0.0;
    let mut last = start;
    for (i, w) in lw.iter().enumerate() {
        let p = (w - max).exp();
        if p == 0.0 {
            continue;
        }
        cum += p;
        last = start + i as i64;
        if target < cum {
            return last;
        }
    }
    last
}

fn is_gaussian_site(pot: &PeriodicPotential, graph: &Graph, v: usize) -> bool {
    graph.incident(v).iter().all(|&e| {
        matches!(pot.class(graph.edge_base(e), graph.edge(e).dir).shape, EdgePotential::Quadratic { .. })
    })
}

fn gaussian_params<H: Height>(pot: &PeriodicPotential, graph: &Graph, vals: &[H], v: usize, beta: f64) -> Result<(f64, f64)> {
    // E(a) = Σ c_e (a - m_e)^2 + const
    let (mut sc, mut scm) = (0.0, 0.0);
    for &e in graph.incident(v) {
        let edge = graph.edge(e);
        if edge.tail == edge.head {
            continue;
        }
        let EdgePotential::Quadratic { coefficient } = pot.class(graph.edge_base(e), edge.dir).shape else {
            unreachable!("checked by is_gaussian_site")
        };
        let m = if edge.tail == v {
            vals[edge.head].to_f64() + edge.shift
        } else {
            vals[edge.tail].to_f64() - edge.shift
        };
        sc += coefficient;
        scm += coefficient * m;
    }
    if sc * beta <= 0.0 {
        return Err(Error::DivergentNormalizer(format!("flat conditional at {}", graph.site(v))));
    }
    Ok((scm / sc, 1.0 / (2.0 * beta * sc)))
}

/// Density nodes for a general continuous conditional by adaptive trapezoid
/// refinement with relative tolerance 1e-10.
fn continuous_table<H: Height>(
    pot: &PeriodicPotential,
    graph: &Graph,
    vals: &[H],
    v: usize,
    beta: f64,
) -> Result<SiteConditional> {
    let (lo, hi) = local_range(pot, graph, vals, v);
    if lo > hi {
        return Err(empty_support(v, graph));
    }
    let energy = |a: f64| local_energy(pot, graph, vals, v, a).to_f64();
    // golden-section search for the minimiser on a bracket
    let c = neighbour_centre(graph, vals, v).clamp(lo, hi);
    let mut width = 1.0;
    let (mut a, mut b) = ((c - width).max(lo), (c + width).min(hi));
    while (a > lo && energy(a) <= energy(c)) || (b < hi && energy(b) <= energy(c)) {
        width *= 2.0;
        if width > 1e12 {
            return Err(Error::DivergentNormalizer(format!("conditional at {} does not decay", graph.site(v))));
        }
        a = (c - width).max(lo);
        b = (c + width).min(hi);
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..200 {
        if energy(x1) <= energy(x2) {
            b = x2;
        } else {
            a = x1;
        }
        x1 = b - g * (b - a);
        x2 = a + g * (b - a);
        if b - a < 1e-12 * (1.0 + a.abs()) {
            break;
        }
    }
    let m = 0.5 * (a + b);
    let emin = energy(m);
    if !emin.is_finite() {
        return Err(empty_support(v, graph));
    }
    let dens = |x: f64| {
        let e = energy(x);
        if e.is_finite() {
            (-beta * (e - emin)).exp()
        } else {
            0.0
        }
    };
    // truncation points where the density falls below e^{-37}
    let reach = |dir: f64, bound: f64| {
        let mut step = 1.0;
        loop {
            let x = m + dir * step;
            if (dir < 0.0 && x <= bound) || (dir > 0.0 && x >= bound) {
                return bound;
            }
            if beta * (energy(x) - emin) > CONT_CUTOFF {
                return x;
            }
            step *= 2.0;
            if step > 1e12 {
                return x;
            }
        }
    };
    let left = reach(-1.0, lo);
    let right = reach(1.0, hi);
    let mut nodes = vec![left];
    let mut stack = vec![(left, right, dens(left), dens(right), 0u32)];
    let scale = (right - left).max(1e-300);
    let mut out: Vec<(f64, f64)> = vec![(left, dens(left))];
    while let Some((x0, x1, f0, f1, depth)) = stack.pop() {
        let xm = 0.5 * (x0 + x1);
        let fm = dens(xm);
        let coarse = 0.5 * (f0 + f1) * (x1 - x0);
        let fine = 0.25 * (f0 + 2.0 * fm + f1) * (x1 - x0);
        if depth < 6 || ((coarse - fine).abs() > 1e-10 * (x1 - x0) / scale && depth < 40) {
            // push right half first so left halves are emitted in order
            stack.push((xm, x1, fm, f1, depth + 1));
            stack.push((x0, xm, f0, fm, depth + 1));
        } else {
            out.push((x1, f1));
        }
    }
    nodes.clear();
    let mut density = Vec::with_capacity(out.len());
    for (x, f) in out {
        nodes.push(x);
        density.push(f);
    }
    let mut cdf = vec![0.0; nodes.len()];
    for i in 1..nodes.len() {
        cdf[i] = cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * (nodes[i] - nodes[i - 1]);
    }
    let total = cdf[cdf.len() - 1];
    if !(total > 0.0) {
        return Err(empty_support(v, graph));
    }
    for c in &mut cdf {
        *c /= total;
    }
    for d in &mut density {
        *d /= total;
    }
    Ok(SiteConditional::Tabulated { nodes, density, cdf })
}

/// The law of the height at `v` given all other heights, at inverse temperature `beta`.
pub fn site_conditional_beta<H: Height>(
    pot: &PeriodicPotential,
    config: &HeightConfig<H>,
    v: usize,
    beta: f64,
) -> Result<SiteConditional> {
    let graph = config.graph();
    let vals = config.values();
    if pot.is_discrete() {
        let mut buf = Vec::new();
        let start = discrete_log_weights(pot, graph, vals, v, beta, &mut buf)?;
        let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = buf.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(SiteConditional::Discrete { start, probs: w.into_iter().map(|x| x / total).collect() })
    } else if is_gaussian_site(pot, graph, v) {
        let (mean, variance) = gaussian_params(pot, graph, vals, v, beta)?;
        Ok(SiteConditional::Gaussian { mean, variance })
    } else {
        continuous_table(pot, graph, vals, v, beta)
    }
}

pub fn site_conditional<H: Height>(pot: &PeriodicPotential, config: &HeightConfig<H>, v: usize) -> Result<SiteConditional> {
    site_conditional_beta(pot, config, v, 1.0)
}

fn draw<H: Height>(pot: &PeriodicPotential, graph: &Graph, vals: &[H], v: usize, beta: f64, u: f64, buf: &mut Vec<f64>) -> Result<H> {
    if pot.is_discrete() {
        let start = discrete_log_weights(pot, graph, vals, v, beta, buf)?;
        Ok(H::from_f64(sample_log_weights(start, buf, u) as f64))
    } else if is_gaussian_site(pot, graph, v) {
        let (mean, variance) = gaussian_params(pot, graph, vals, v, beta)?;
        Ok(H::from_f64(mean + variance.sqrt() * Normal::standard().inverse_cdf(open_unit(u))))
    } else {
        Ok(H::from_f64(continuous_table(pot, graph, vals, v, beta)?.sample(u)))
    }
}

/// Site visiting order for a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiteOrder {
    /// Even sublattice (`x + y` even) first, then odd, each in vertex order.
    #[default]
    Checkerboard,
    /// `N` uniformly chosen free sites per sweep.
    RandomScan,
}

/// Heat-bath dynamics on a fixed graph with a fixed set of frozen vertices.
#[derive(Clone, Debug)]
pub struct HeatBath {
    pot: Arc<PeriodicPotential>,
    graph: Arc<Graph>,
    free: Vec<usize>,
    colours: [Vec<usize>; 2],
    order: SiteOrder,
    beta: f64,
    parallel: bool,
}

impl HeatBath {
    /// Dynamics updating every vertex not in `fixed`.
    pub fn new(pot: Arc<PeriodicPotential>, graph: Arc<Graph>, fixed: impl IntoIterator<Item = usize>) -> HeatBath {
        let mut frozen = vec![false; graph.len()];
        for v in fixed {
            frozen[v] = true;
        }
        let free: Vec<usize> = (0..graph.len()).filter(|&v| !frozen[v]).collect();
        let colours = [
            free.iter().copied().filter(|&v| graph.parity(v) == 0).collect(),
            free.iter().copied().filter(|&v| graph.parity(v) == 1).collect(),
        ];
        HeatBath { pot, graph, free, colours, order: SiteOrder::Checkerboard, beta: 1.0, parallel: false }
    }

    /// Torus dynamics with the reference vertex pinned.
    pub fn torus(pot: Arc<PeriodicPotential>, graph: Arc<Graph>) -> HeatBath {
        HeatBath::new(pot, graph, [0])
    }

    pub fn with_order(mut self, order: SiteOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Update each checkerboard colour class in parallel. Only honoured when the
    /// checkerboard colouring is proper, so results stay bit-identical.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel && self.graph.is_bipartite_checkerboard();
        self
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn potential(&self) -> &Arc<PeriodicPotential> {
        &self.pot
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Counter of the first uniform used by sweep `k`.
    fn base_counter(&self, sweep: u64) -> u128 {
        2 * sweep as u128 * self.graph.len() as u128
    }

    /// One sweep keyed by `sweep` index in `rng`'s stream.
    pub fn sweep<H: Height>(&self, config: &mut HeightConfig<H>, rng: &RngStream, sweep: u64) -> Result<()> {
        let n = self.graph.len();
        let mut uniforms = vec![0.0; 2 * n];
        rng.fill_uniform_at(self.base_counter(sweep), &mut uniforms);
        self.sweep_with(config, &uniforms)
    }

    /// One sweep driven by explicit uniforms: entry `v` drives vertex `v`; for random
    /// scan, entries `N..2N` choose the sites.
    pub fn sweep_with<H: Height>(&self, config: &mut HeightConfig<H>, uniforms: &[f64]) -> Result<()> {
        debug_assert!(Arc::ptr_eq(config.graph_arc(), &self.graph) || **config.graph_arc() == *self.graph);
        let n = self.graph.len();
        match self.order {
            SiteOrder::Checkerboard => {
                for colour in &self.colours {
                    if self.parallel && colour.len() >= 64 {
                        let vals = config.values();
                        let new: Vec<Result<H>> = colour
                            .par_iter()
                            .map_init(Vec::new, |buf, &v| draw(&self.pot, &self.graph, vals, v, self.beta, uniforms[v], buf))
                            .collect();
                        for (&v, h) in colour.iter().zip(new) {
                            config.set(v, h?);
                        }
                    } else {
                        let mut buf = Vec::new();
                        for &v in colour {
                            let h = draw(&self.pot, &self.graph, config.values(), v, self.beta, uniforms[v], &mut buf)?;
                            config.set(v, h);
                        }
                    }
                }
            }
            SiteOrder::RandomScan => {
                if self.free.is_empty() {
                    return Ok(());
                }
                let mut buf = Vec::new();
                for k in 0..n {
                    let pick = self.free[((uniforms[n + k] * self.free.len() as f64) as usize).min(self.free.len() - 1)];
                    let u = uniforms[k];
                    let h = draw(&self.pot, &self.graph, config.values(), pick, self.beta, u, &mut buf)?;
                    config.set(pick, h);
                }
            }
        }
        Ok(())
    }

    /// Sites in the order one checkerboard sweep visits them.
    pub fn schedule(&self) -> Vec<usize> {
        self.colours.concat()
    }

    /// Sparse single-site heat-bath kernel at `v` over the states of `en`.
    fn site_kernel(&self, en: &Enumeration, configs: &[HeightConfig<i64>], v: usize) -> Result<Vec<Vec<(usize, f64)>>> {
        configs
            .iter()
            .map(|c| {
                let cond = site_conditional_beta(&self.pot, c, v, self.beta)?;
                let SiteConditional::Discrete { start, probs } = cond else { unreachable!() };
                let mut row = Vec::new();
                let mut next = c.clone();
                for (k, &p) in probs.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    next.set(v, start + k as i64);
                    let j = en
                        .index_of_config(&next)
                        .ok_or_else(|| Error::InvalidArgument("heat bath leaves the enumerated state space".into()))?;
                    row.push((j, p));
                }
                Ok(row)
            })
            .collect()
    }

    /// The sweep as a sequence of sparse kernels applied left to right, with a
    /// repetition count.
    fn sweep_kernels(&self, en: &Enumeration) -> Result<(Vec<Vec<Vec<(usize, f64)>>>, usize)> {
        if !self.pot.is_discrete() {
            return Err(Error::InvalidArgument("kernel matrices need a discrete potential".into()));
        }
        let configs: Vec<HeightConfig<i64>> = (0..en.len()).map(|i| en.config(i)).collect();
        match self.order {
            SiteOrder::Checkerboard => {
                let kernels = self.schedule().into_iter().map(|v| self.site_kernel(en, &configs, v)).collect::<Result<_>>()?;
                Ok((kernels, 1))
            }
            SiteOrder::RandomScan => {
                if self.free.is_empty() {
                    return Ok((Vec::new(), 0));
                }
                let w = 1.0 / self.free.len() as f64;
                let mut avg: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); en.len()];
                for &v in &self.free {
                    for (i, row) in self.site_kernel(en, &configs, v)?.into_iter().enumerate() {
                        for (j, p) in row {
                            *avg[i].entry(j).or_insert(0.0) += w * p;
                        }
                    }
                }
                let kernel = avg.into_iter().map(|r| r.into_iter().collect()).collect();
                Ok((vec![kernel], self.graph.len()))
            }
        }
    }

    /// Exact transition matrix of one sweep on an enumerated state space (discrete
    /// potentials). Random scan uses `N` independent uniform site picks.
    pub fn kernel_matrix(&self, en: &Enumeration) -> Result<Vec<Vec<f64>>> {
        let m = en.len();
        let (kernels, reps) = self.sweep_kernels(en)?;
        let mut mat: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        for _ in 0..reps {
            for k in &kernels {
                for row in mat.iter_mut() {
                    *row = apply_sparse(row, k);
                }
            }
        }
        Ok(mat)
    }

    /// Exact law after one sweep started from the law `p` on the states of `en`,
    /// without forming the full matrix.
    pub fn push_forward(&self, en: &Enumeration, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != en.len() {
            return Err(Error::InvalidArgument(format!("{} weights for {} states", p.len(), en.len())));
        }
        let (kernels, reps) = self.sweep_kernels(en)?;
        let mut out = p.to_vec();
        for _ in 0..reps {
            for k in &kernels {
                out = apply_sparse(&out, k);
            }
        }
        Ok(out)
    }

    pub fn run<H: Height>(&self, config: &mut HeightConfig<H>, rng: &RngStream, first_sweep: u64, sweeps: u64) -> Result<()> {
        for k in first_sweep..first_sweep + sweeps {
            self.sweep(config, rng, k)?;
        }
        Ok(())
    }
}

fn apply_sparse(row: &[f64], kernel: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    for (i, &x) in row.iter().enumerate() {
        if x != 0.0 {
            for &(j, p) in &kernel[i] {
                out[j] += x * p;
            }
        }
    }
    out
}

/// Free function form of one heat-bath sweep: every vertex outside `boundary` is
/// resampled once in `order`.
pub fn heat_bath_sweep<H: Height>(
    pot: &PeriodicPotential,
    config: &mut HeightConfig<H>,
    boundary: &Boundary<H>,
    order: SiteOrder,
    rng: &RngStream,
    sweep: u64,
) -> Result<()> {
    for (&v, &h) in boundary {
        config.set(v, h);
    }
    HeatBath::new(Arc::new(pot.clone()), config.graph_arc().clone(), boundary.keys().copied())
        .with_order(order)
        .sweep(config, rng, sweep)
}

/// Starting configuration on a slope torus: a ground state when one is cheap to find,
/// otherwise the shortest-path configuration, otherwise the rounded plane.
pub fn torus_initial<H: Height>(pot: &PeriodicPotential, graph: &Arc<Graph>, u: &Slope) -> Result<HeightConfig<H>> {
    let GraphKind::Torus { n, offsets } = graph.kind().clone() else {
        return Err(Error::InvalidArgument("torus_initial needs a torus".into()));
    };
    let fg = FeasibilityGraph::from_graph(pot, graph);
    if fg.negative_cycle().is_some() {
        return Err(Error::InfeasibleSlope);
    }
    if pot.is_discrete() && pot.is_lipschitz() {
        if let Ok(gs) = feasibility::ground_state_energy(pot, n, u, 2e5) {
            let vals = gs.witness.values().iter().map(|&h| H::from_f64(h as f64)).collect();
            return HeightConfig::new(graph.clone(), vals);
        }
    }
    match feasibility::torus_feasible_config::<H>(pot, graph) {
        Ok(c) => return Ok(c),
        Err(Error::NotLipschitz) => {}
        Err(e) => return Err(e),
    }
    let nf = n as f64;
    let plane = HeightConfig::from_fn(graph.clone(), |s: Site| {
        let h = offsets[0] * s.x as f64 / nf + offsets[1] * s.y as f64 / nf;
        H::from_f64(if pot.is_discrete() { h.floor() } else { h })
    });
    match pot.hamiltonian_interior(&plane, None)? {
        Energy::Finite(_) => Ok(plane),
        Energy::Infinite => Err(Error::EmptySupport("no finite-energy starting configuration found".into())),
    }
}

/// A heat-bath chain on the slope-`u` torus that conserves the homology class.
#[derive(Clone, Debug)]
pub struct TorusChain<H> {
    pub dynamics: HeatBath,
    pub config: HeightConfig<H>,
    pub rng: RngStream,
    pub sweeps_done: u64,
}

impl<H: Height> TorusChain<H> {
    pub fn new(pot: Arc<PeriodicPotential>, n: usize, u: &Slope, rng: RngStream) -> Result<Self> {
        let graph = feasibility::slope_torus(&pot, n, u)?;
        let config = torus_initial(&pot, &graph, u)?;
        let dynamics = HeatBath::torus(pot, graph);
        Ok(TorusChain { dynamics, config, rng, sweeps_done: 0 })
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.dynamics = self.dynamics.with_beta(beta);
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.dynamics = self.dynamics.with_parallel(parallel);
        self
    }

    pub fn advance(&mut self, sweeps: u64) -> Result<()> {
        self.dynamics.run(&mut self.config, &self.rng, self.sweeps_done, sweeps)?;
        self.sweeps_done += sweeps;
        Ok(())
    }
}

/// Heat-bath sample on the `n`-torus in the slope class of `u` (rounded to
/// `⌊un⌋/n` in discrete mode) after `sweeps` sweeps.
pub fn torus_sample<H: Height>(pot: &PeriodicPotential, n: usize, u: &Slope, sweeps: u64, rng: &RngStream) -> Result<HeightConfig<H>> {
    if !feasibility::torus_slope_feasible(pot, n, u)? {
        return Err(Error::InfeasibleSlope);
    }
    let mut chain = TorusChain::<H>::new(Arc::new(pot.clone()), n, u, rng.clone())?;
    chain.advance(sweeps)?;
    Ok(chain.config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CftpOptions {
    /// Largest epoch length tried before giving up.
    pub max_sweeps: u64,
}

impl Default for CftpOptions {
    fn default() -> Self {
        CftpOptions { max_sweeps: 1 << 20 }
    }
}

#[derive(Clone, Debug)]
pub struct CftpOutcome {
    pub config: HeightConfig<i64>,
    /// Length of the coalescing epoch.
    pub sweeps: u64,
    pub epochs: u32,
}

/// Exact sample from the finite-volume Gibbs measure with the given boundary
/// heights, by monotone coupling from the past from the maximal and minimal
/// extensions of the boundary.
pub fn cftp_sample(
    pot: &PeriodicPotential,
    graph: &Arc<Graph>,
    boundary: &BTreeMap<usize, i64>,
    rng: &RngStream,
    opts: CftpOptions,
) -> Result<CftpOutcome> {
    if !pot.is_discrete() || !pot.is_lipschitz() {
        return Err(Error::NotLipschitz);
    }
    let top0 = feasibility::extend_boundary::<i64>(pot, graph, boundary)?;
    let bottom0 = feasibility::extend_boundary_min::<i64>(pot, graph, boundary)?;
    let dynamics = HeatBath::new(Arc::new(pot.clone()), graph.clone(), boundary.keys().copied());
    cftp_with(&dynamics, top0, bottom0, rng, opts)
}

/// Coupling from the past between two ordered starting states. The sweep at time
/// `-t` uses the randomness of sweep index `t - 1`, so epochs share their recent past.
pub fn cftp_with(
    dynamics: &HeatBath,
    top0: HeightConfig<i64>,
    bottom0: HeightConfig<i64>,
    rng: &RngStream,
    opts: CftpOptions,
) -> Result<CftpOutcome> {
    let mut t = 1u64;
    let mut epochs = 0;
    loop {
        epochs += 1;
        let mut top = top0.clone();
        let mut bottom = bottom0.clone();
        if top == bottom {
            return Ok(CftpOutcome { config: top, sweeps: t, epochs });
        }
        for time in (1..=t).rev() {
            dynamics.sweep(&mut top, rng, time - 1)?;
            dynamics.sweep(&mut bottom, rng, time - 1)?;
            if let Some(v) = (0..top.values().len()).find(|&v| bottom.get(v) > top.get(v)) {
                return Err(Error::CouplingViolation(top.graph().site(v)));
            }
        }
        if top == bottom {
            return Ok(CftpOutcome { config: top, sweeps: t, epochs });
        }
        if t >= opts.max_sweeps {
            return Err(Error::NoCoalescence(opts.max_sweeps));
        }
        t = (2 * t).min(opts.max_sweeps);
    }
}

/// Add one uniform `ε ∈ [0,1)` to every height and take floors. Torus offsets must be
/// integers so the rounded lift stays periodic.
pub fn random_round(config: &HeightConfig<f64>, rng: &mut RngStream) -> Result<HeightConfig<i64>> {
    if let GraphKind::Torus { offsets, .. } = config.graph().kind() {
        if offsets.iter().any(|o| o.fract() != 0.0) {
            return Err(Error::InvalidArgument("random rounding needs integer torus offsets".into()));
        }
    }
    Ok(config.random_round_with(rng.uniform()))
}
