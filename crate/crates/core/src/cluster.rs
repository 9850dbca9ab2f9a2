//! Residual-energy coupling of two surfaces and cluster swapping.
//!
//! A triplet `(φ₁, φ₂, r)` carries one residual `r(e) ≥ 0` per graph edge; the total
//! `t(e) = Φ_e(φ₁) + Φ_e(φ₂) + r(e)` is what every swap preserves. Sign convention:
//! `ζ = +1` where `φ₁ > φ₂`, `-1` where `φ₁ < φ₂`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{Height, HeightConfig};
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::lattice::Graph;
use crate::potential::PeriodicPotential;
use crate::rng::RngStream;

/// Residuals are kept on this dyadic grid so that `r + E_old − E_new` is exact for
/// integer-valued energies.
pub const RESIDUAL_SCALE: f64 = (1u64 << 36) as f64;

pub fn quantize_residual(r: f64) -> f64 {
    (r * RESIDUAL_SCALE).floor() / RESIDUAL_SCALE
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triplet<H> {
    pub phi1: HeightConfig<H>,
    pub phi2: HeightConfig<H>,
    pub residual: Vec<f64>,
}

impl<H: Height> Triplet<H> {
    pub fn new(phi1: HeightConfig<H>, phi2: HeightConfig<H>, residual: Vec<f64>) -> Result<Self> {
        if phi1.graph() != phi2.graph() {
            return Err(Error::InvalidArgument("surfaces live on different graphs".into()));
        }
        if residual.len() != phi1.graph().edges().len() {
            return Err(Error::InvalidArgument(format!(
                "{} residuals for {} edges",
                residual.len(),
                phi1.graph().edges().len()
            )));
        }
        if let Some(e) = residual.iter().position(|r| !(*r >= 0.0)) {
            return Err(Error::NegativeResidual { edge: e, total: f64::NAN, potential: f64::NAN });
        }
        Ok(Triplet { phi1, phi2, residual })
    }

    /// Independent rate-1 exponential residuals.
    pub fn with_fresh_residuals(phi1: HeightConfig<H>, phi2: HeightConfig<H>, rng: &mut RngStream) -> Result<Self> {
        let residual = (0..phi1.graph().edges().len()).map(|_| quantize_residual(rng.exponential())).collect();
        Triplet::new(phi1, phi2, residual)
    }

    pub fn graph(&self) -> &Graph {
        self.phi1.graph()
    }

    pub fn zeta(&self, v: usize) -> i8 {
        let (a, b) = (self.phi1.get(v), self.phi2.get(v));
        if a > b {
            1
        } else if a < b {
            -1
        } else {
            0
        }
    }
}

/// Energy of edge `e` when its tail has height `a` and its head height `b`.
fn edge_energy(pot: &PeriodicPotential, graph: &Graph, e: usize, a: f64, b: f64) -> Energy {
    pot.graph_edge_energy(graph, e, b - a + graph.edge(e).shift)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedCoords<H> {
    /// `(min, max)` of the two heights.
    pub xi: Vec<(H, H)>,
    pub zeta: Vec<i8>,
    pub total: Vec<f64>,
}

pub fn to_derived<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>) -> Result<DerivedCoords<H>> {
    let g = tr.graph();
    let n = g.len();
    let mut xi = Vec::with_capacity(n);
    let mut zeta = Vec::with_capacity(n);
    for v in 0..n {
        let (a, b) = (tr.phi1.get(v), tr.phi2.get(v));
        xi.push(if a <= b { (a, b) } else { (b, a) });
        zeta.push(tr.zeta(v));
    }
    let mut total = Vec::with_capacity(g.edges().len());
    for (e, edge) in g.edges().iter().enumerate() {
        let e1 = edge_energy(pot, g, e, tr.phi1.get(edge.tail).to_f64(), tr.phi1.get(edge.head).to_f64());
        let e2 = edge_energy(pot, g, e, tr.phi2.get(edge.tail).to_f64(), tr.phi2.get(edge.head).to_f64());
        match e1 + e2 {
            Energy::Finite(x) => total.push(x + tr.residual[e]),
            Energy::Infinite => return Err(Error::InfiniteEnergy(e)),
        }
    }
    Ok(DerivedCoords { xi, zeta, total })
}

pub fn from_derived<H: Height>(
    pot: &PeriodicPotential,
    graph: &std::sync::Arc<Graph>,
    coords: &DerivedCoords<H>,
) -> Result<Triplet<H>> {
    let (mut v1, mut v2) = (Vec::with_capacity(graph.len()), Vec::with_capacity(graph.len()));
    for (&(lo, hi), &z) in coords.xi.iter().zip(&coords.zeta) {
        if z > 0 {
            v1.push(hi);
            v2.push(lo);
        } else {
            v1.push(lo);
            v2.push(hi);
        }
    }
    let phi1 = HeightConfig::new(graph.clone(), v1)?;
    let phi2 = HeightConfig::new(graph.clone(), v2)?;
    let mut residual = Vec::with_capacity(graph.edges().len());
    for (e, edge) in graph.edges().iter().enumerate() {
        let e1 = edge_energy(pot, graph, e, phi1.get(edge.tail).to_f64(), phi1.get(edge.head).to_f64());
        let e2 = edge_energy(pot, graph, e, phi2.get(edge.tail).to_f64(), phi2.get(edge.head).to_f64());
        let potential = (e1 + e2).to_f64();
        let r = coords.total[e] - potential;
        if !(r >= 0.0) {
            return Err(Error::NegativeResidual { edge: e, total: coords.total[e], potential });
        }
        residual.push(r);
    }
    Triplet::new(phi1, phi2, residual)
}

/// `K_e = [V(ξ₁(y) − ξ₁(x)) + V(ξ₂(y) − ξ₂(x))] − [V(ξ₁(y) − ξ₂(x)) + V(ξ₂(y) − ξ₁(x))]`,
/// `-∞` when the crossed arrangement is infeasible.
pub fn edge_coupling_constant<H: Height>(pot: &PeriodicPotential, graph: &Graph, xi: &[(H, H)], e: usize) -> Result<f64> {
    let edge = graph.edge(e);
    let (x1, x2) = (xi[edge.tail].0.to_f64(), xi[edge.tail].1.to_f64());
    let (y1, y2) = (xi[edge.head].0.to_f64(), xi[edge.head].1.to_f64());
    let aligned = edge_energy(pot, graph, e, x1, y1) + edge_energy(pot, graph, e, x2, y2);
    let crossed = edge_energy(pot, graph, e, x2, y1) + edge_energy(pot, graph, e, x1, y2);
    match (aligned, crossed) {
        (Energy::Infinite, _) => Err(Error::InfiniteEnergy(e)),
        (Energy::Finite(_), Energy::Infinite) => Ok(f64::NEG_INFINITY),
        (Energy::Finite(a), Energy::Finite(c)) => Ok(a - c),
    }
}

/// Current and head-swapped energies of edge `e`:
/// `(Φ_e(φ₁) + Φ_e(φ₂), V(φ₂(y) − φ₁(x)) + V(φ₁(y) − φ₂(x)))`.
pub fn swap_energies<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>, e: usize) -> (Energy, Energy) {
    let g = tr.graph();
    let edge = g.edge(e);
    let (a1, a2) = (tr.phi1.get(edge.tail).to_f64(), tr.phi2.get(edge.tail).to_f64());
    let (b1, b2) = (tr.phi1.get(edge.head).to_f64(), tr.phi2.get(edge.head).to_f64());
    let current = edge_energy(pot, g, e, a1, b1) + edge_energy(pot, g, e, a2, b2);
    let swapped = edge_energy(pot, g, e, a1, b2) + edge_energy(pot, g, e, a2, b1);
    (current, swapped)
}

/// Whether `t(e)` covers the energy of the pair with one endpoint swapped.
pub fn is_swappable<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>, e: usize) -> bool {
    let edge = tr.graph().edge(e);
    if tr.zeta(edge.tail) == 0 || tr.zeta(edge.head) == 0 {
        return true;
    }
    match swap_energies(pot, tr, e) {
        (Energy::Finite(cur), Energy::Finite(sw)) => cur + tr.residual[e] >= sw,
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cluster {
    /// Vertex indices in increasing order.
    pub vertices: Vec<usize>,
    pub zeta: i8,
    /// All vertices lie in the window.
    pub interior: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwappableSet {
    pub closed: Vec<bool>,
    /// Cluster index of each vertex.
    pub label: Vec<usize>,
    /// Open clusters ordered by smallest vertex.
    pub clusters: Vec<Cluster>,
}

impl SwappableSet {
    pub fn cluster_of(&self, v: usize) -> &Cluster {
        &self.clusters[self.label[v]]
    }

    /// Rows `x,y,zeta,cluster,boundary_touch`.
    pub fn to_csv(&self, graph: &Graph) -> String {
        let mut out = String::from("x,y,zeta,cluster,boundary_touch\n");
        for v in 0..graph.len() {
            let c = self.cluster_of(v);
            let s = graph.site(v);
            let _ = writeln!(out, "{},{},{},{},{}", s.x, s.y, c.zeta, self.label[v], !c.interior);
        }
        out
    }
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // the smaller index becomes the root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

fn clusters_from(graph: &Graph, closed: Vec<bool>, zeta: impl Fn(usize) -> i8, window: &[bool]) -> SwappableSet {
    let n = graph.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for (e, edge) in graph.edges().iter().enumerate() {
        if !closed[e] {
            union(&mut parent, edge.tail, edge.head);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut clusters: Vec<Cluster> = Vec::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        if label[r] == usize::MAX {
            label[r] = clusters.len();
            clusters.push(Cluster { vertices: Vec::new(), zeta: zeta(v), interior: true });
        }
        let c = label[r];
        label[v] = c;
        clusters[c].vertices.push(v);
        clusters[c].interior &= window[v];
    }
    SwappableSet { closed, label, clusters }
}

/// `window[v]` is true for vertices of Λ.
pub fn swappable_set<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>, window: &[bool]) -> SwappableSet {
    let g = tr.graph();
    let closed = (0..g.edges().len()).map(|e| is_swappable(pot, tr, e)).collect();
    clusters_from(g, closed, |v| tr.zeta(v), window)
}

/// Exchange `φ₁` and `φ₂` on `vertices`, moving energy into residuals so that every
/// `t(e)` is unchanged.
fn exchange<H: Height>(pot: &PeriodicPotential, tr: &mut Triplet<H>, vertices: &[usize]) {
    let g = tr.phi1.graph_arc().clone();
    let mut touched: Vec<usize> = vertices.iter().flat_map(|&v| g.incident(v).iter().copied()).collect();
    touched.sort_unstable();
    touched.dedup();
    let before: Vec<f64> = touched.iter().map(|&e| swap_energies(pot, tr, e).0.to_f64()).collect();
    for &v in vertices {
        let (a, b) = (tr.phi1.get(v), tr.phi2.get(v));
        tr.phi1.set(v, b);
        tr.phi2.set(v, a);
    }
    for (&e, old) in touched.iter().zip(before) {
        let new = swap_energies(pot, tr, e).0.to_f64();
        if new != old {
            tr.residual[e] += old - new;
        }
    }
}

/// The involution `R^x_Λ`: swap the open cluster of `x` if it lies inside the window.
pub fn cluster_swap_at<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>, window: &[bool], x: usize) -> Triplet<H> {
    let set = swappable_set(pot, tr, window);
    let c = set.cluster_of(x);
    let mut out = tr.clone();
    if c.interior && c.zeta != 0 {
        exchange(pot, &mut out, &c.vertices);
    }
    out
}

/// Flip the interior clusters with `ζ ≠ 0` selected by `flips`, one entry per such
/// cluster in cluster order.
pub fn apply_cluster_flips<H: Height>(pot: &PeriodicPotential, tr: &mut Triplet<H>, set: &SwappableSet, flips: &[bool]) {
    let mut k = 0;
    for c in &set.clusters {
        if c.interior && c.zeta != 0 {
            if flips[k] {
                exchange(pot, tr, &c.vertices);
            }
            k += 1;
        }
    }
}

/// Number of interior clusters with `ζ ≠ 0`, i.e. the number of coins an update uses.
pub fn coin_count(set: &SwappableSet) -> usize {
    set.clusters.iter().filter(|c| c.interior && c.zeta != 0).count()
}

/// Fresh residuals, then an independent fair coin for each interior open cluster
/// deciding whether it is swapped.
pub fn swendsen_wang_update<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>, window: &[bool], rng: &mut RngStream) -> Triplet<H> {
    let mut out = tr.clone();
    for r in &mut out.residual {
        *r = quantize_residual(rng.exponential());
    }
    let set = swappable_set(pot, &out, window);
    let flips: Vec<bool> = (0..coin_count(&set)).map(|_| rng.coin()).collect();
    apply_cluster_flips(pot, &mut out, &set, &flips);
    out
}

/// The coin-synchronised coupling: after fresh residuals, every interior cluster with
/// `ζ ≠ 0` is set to `φ₁ = φ₂ = ξ₁` or `φ₁ = φ₂ = ξ₂` by a fair coin. Marginals are
/// unchanged, and when `φ₁ ≤ φ₂` off the window the result is ordered everywhere.
pub fn synchronize_clusters<H: Height>(
    pot: &PeriodicPotential,
    phi1: HeightConfig<H>,
    phi2: HeightConfig<H>,
    window: &[bool],
    rng: &mut RngStream,
) -> Result<(HeightConfig<H>, HeightConfig<H>)> {
    let mut tr = Triplet::with_fresh_residuals(phi1, phi2, rng)?;
    let set = swappable_set(pot, &tr, window);
    for c in &set.clusters {
        if c.interior && c.zeta != 0 {
            let upper = rng.coin();
            for &v in &c.vertices {
                let (a, b) = (tr.phi1.get(v), tr.phi2.get(v));
                let h = if (a > b) == upper { a } else { b };
                tr.phi1.set(v, h);
                tr.phi2.set(v, h);
            }
        }
    }
    Ok((tr.phi1, tr.phi2))
}

/// Finite-window view of the shifted pair `(φ₁ + c, φ₂, r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftedAnalysis {
    pub c: f64,
    pub closed: Vec<bool>,
    /// Vertices of boundary-touching open clusters with `φ₂ − φ₁ − c > 0`.
    pub t_plus: Vec<usize>,
    /// Vertices of boundary-touching open clusters with `φ₂ − φ₁ − c < 0`.
    pub t_minus: Vec<usize>,
}

pub fn shifted_analysis<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>, c: f64, window: &[bool]) -> ShiftedAnalysis {
    let shifted = HeightConfig::from_fn(tr.phi1.graph_arc().clone(), |s| {
        let v = tr.phi1.graph().index_of(s).expect("own site");
        H::from_f64(tr.phi1.get(v).to_f64() + c)
    });
    let st = Triplet { phi1: shifted, phi2: tr.phi2.clone(), residual: tr.residual.clone() };
    let set = swappable_set(pot, &st, window);
    let (mut t_plus, mut t_minus) = (Vec::new(), Vec::new());
    for cl in &set.clusters {
        if cl.interior {
            continue;
        }
        // ζ of the shifted pair is −1 where φ₂ > φ₁ + c
        match cl.zeta {
            -1 => t_plus.extend(&cl.vertices),
            1 => t_minus.extend(&cl.vertices),
            _ => {}
        }
    }
    t_plus.sort_unstable();
    t_minus.sort_unstable();
    ShiftedAnalysis { c, closed: set.closed, t_plus, t_minus }
}

/// Window estimates of `B⁺ = inf{c : T⁺_c = ∅}` and `B⁻ = sup{c : T⁻_c = ∅}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffsetBounds {
    pub b_plus: f64,
    pub b_minus: f64,
    pub candidates: Vec<f64>,
}

/// Scan candidate shifts: integers spanning the observed differences in discrete mode,
/// the sorted observed differences in continuous mode.
pub fn offset_bounds<H: Height>(pot: &PeriodicPotential, tr: &Triplet<H>, window: &[bool]) -> OffsetBounds {
    let diffs: Vec<f64> = (0..tr.graph().len()).map(|v| tr.phi2.get(v).to_f64() - tr.phi1.get(v).to_f64()).collect();
    let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let candidates: Vec<f64> = if pot.is_discrete() {
        ((lo as i64 - 1)..=(hi as i64 + 1)).map(|c| c as f64).collect()
    } else {
        let mut d = diffs.clone();
        d.push(lo - 1.0);
        d.push(hi + 1.0);
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    };
    let mut b_plus = f64::INFINITY;
    let mut b_minus = f64::NEG_INFINITY;
    for &c in &candidates {
        let a = shifted_analysis(pot, tr, c, window);
        if a.t_plus.is_empty() && c < b_plus {
            b_plus = c;
        }
        if a.t_minus.is_empty() && c > b_minus {
            b_minus = c;
        }
    }
    OffsetBounds { b_plus, b_minus, candidates }
}
