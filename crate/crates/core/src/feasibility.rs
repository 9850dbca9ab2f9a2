//! Which boundary data and slopes admit finite-energy surfaces.
//!
//! Every edge `x → y` with finite-support interval `[lo, hi]` gives the difference
//! constraints `φ(y) - φ(x) ≤ hi` and `φ(x) - φ(y) ≤ -lo`, i.e. arcs of weight
//! `d(x,y) = hi` and `d(y,x) = -lo`. Shortest paths `D` then decide extension
//! problems; negative cycles certify that nothing is feasible.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::config::{Height, HeightConfig};
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::lattice::{Dir, Graph, Site};
use crate::potential::PeriodicPotential;

/// Finite-support endpoints of one edge, `up = sup`, `down = -inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IncrementBounds {
    pub up: f64,
    pub down: f64,
}

pub fn increment_bounds(pot: &PeriodicPotential, base: Site, dir: Dir) -> IncrementBounds {
    let (lo, hi) = pot.edge_support(base, dir);
    IncrementBounds { up: hi, down: -lo }
}

/// Directed arc `from → to` meaning `φ(to) - φ(from) ≤ weight`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraint {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Difference-constraint graph over the vertices of a region or torus.
#[derive(Clone, Debug)]
pub struct FeasibilityGraph {
    labels: Vec<Site>,
    arcs: Vec<Constraint>,
}

/// Result of a multi-source shortest-path computation: `rows[i][v] = D(sources[i], v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTable {
    pub sources: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl FeasibilityGraph {
    /// Arcs from every edge of `graph`; infinite bounds produce no arc.
    pub fn from_graph(pot: &PeriodicPotential, graph: &Graph) -> FeasibilityGraph {
        let mut arcs = Vec::with_capacity(2 * graph.edges().len());
        for (e, edge) in graph.edges().iter().enumerate() {
            let b = increment_bounds(pot, graph.edge_base(e), edge.dir);
            // η = φ(head) - φ(tail) + shift ∈ [-down, up]
            if b.up.is_finite() {
                arcs.push(Constraint { from: edge.tail, to: edge.head, weight: b.up - edge.shift });
            }
            if b.down.is_finite() {
                arcs.push(Constraint { from: edge.head, to: edge.tail, weight: b.down + edge.shift });
            }
        }
        FeasibilityGraph { labels: graph.sites().to_vec(), arcs }
    }

    /// A graph from explicit arcs; `labels` name the vertices for witnesses.
    pub fn from_arcs(labels: Vec<Site>, arcs: Vec<Constraint>) -> FeasibilityGraph {
        assert!(arcs.iter().all(|a| a.from < labels.len() && a.to < labels.len()));
        FeasibilityGraph { labels, arcs }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn arcs(&self) -> &[Constraint] {
        &self.arcs
    }

    pub fn labels(&self) -> &[Site] {
        &self.labels
    }

    /// Bellman–Ford from the given initial potentials. Returns distances and
    /// predecessor arcs, or the vertex relaxed in round `n` if a negative cycle is
    /// reachable.
    fn relax(&self, mut dist: Vec<f64>) -> std::result::Result<(Vec<f64>, Vec<usize>), usize> {
        let n = self.len();
        let mut pred = vec![usize::MAX; n];
        for round in 0..=n {
            let mut changed = None;
            for (i, a) in self.arcs.iter().enumerate() {
                let du = dist[a.from];
                if du == f64::INFINITY {
                    continue;
                }
                let cand = du + a.weight;
                if cand < dist[a.to] {
                    dist[a.to] = cand;
                    pred[a.to] = i;
                    changed = Some(a.to);
                }
            }
            match changed {
                None => return Ok((dist, pred)),
                Some(v) if round == n => return Err(v),
                Some(_) => {}
            }
        }
        unreachable!("loop returns by round n")
    }

    fn cycle_from(&self, start: usize, pred: &[usize]) -> (Vec<usize>, f64) {
        let mut v = start;
        for _ in 0..self.len() {
            v = self.arcs[pred[v]].from;
        }
        let mut cycle = vec![v];
        let mut weight = self.arcs[pred[v]].weight;
        let mut u = self.arcs[pred[v]].from;
        while u != v {
            cycle.push(u);
            weight += self.arcs[pred[u]].weight;
            u = self.arcs[pred[u]].from;
        }
        cycle.reverse();
        // rotate so the lexicographically smallest site leads
        let lead = (0..cycle.len()).min_by_key(|&i| self.labels[cycle[i]]).unwrap();
        cycle.rotate_left(lead);
        (cycle, weight)
    }

    /// A negative cycle, as vertex indices in arc order starting from the
    /// lexicographically smallest site, with its total weight.
    pub fn negative_cycle(&self) -> Option<(Vec<usize>, f64)> {
        // self-loops are invisible to relaxation bookkeeping; check them directly
        if let Some(a) = self.arcs.iter().find(|a| a.from == a.to && a.weight < 0.0) {
            return Some((vec![a.from], a.weight));
        }
        let n = self.len();
        let mut pred = vec![usize::MAX; n];
        let mut dist = vec![0.0; n];
        for round in 0..=n {
            let mut changed = None;
            for (i, a) in self.arcs.iter().enumerate() {
                let cand = dist[a.from] + a.weight;
                if cand < dist[a.to] {
                    dist[a.to] = cand;
                    pred[a.to] = i;
                    changed = Some(a.to);
                }
            }
            match changed {
                None => return None,
                Some(v) if round == n => return Some(self.cycle_from(v, &pred)),
                Some(_) => {}
            }
        }
        None
    }

    fn negative_cycle_error(&self) -> Result<()> {
        match self.negative_cycle() {
            Some((cycle, weight)) => Err(Error::NegativeCycle {
                cycle: cycle.into_iter().map(|v| self.labels[v]).collect(),
                weight,
            }),
            None => Ok(()),
        }
    }

    /// `D(source, ·)` for each source.
    pub fn shortest_distances(&self, sources: &[usize]) -> Result<DistanceTable> {
        self.negative_cycle_error()?;
        let mut rows = Vec::with_capacity(sources.len());
        for &s in sources {
            let mut dist = vec![f64::INFINITY; self.len()];
            dist[s] = 0.0;
            let (dist, _) = self.relax(dist).expect("no negative cycle");
            rows.push(dist);
        }
        Ok(DistanceTable { sources: sources.to_vec(), rows })
    }

    pub fn all_pairs(&self) -> Result<Vec<Vec<f64>>> {
        let all: Vec<usize> = (0..self.len()).collect();
        Ok(self.shortest_distances(&all)?.rows)
    }

    /// Pointwise-maximal extension `φ(y) = min_x φ'(x) + D(x, y)` of partial data.
    pub fn max_extension(&self, partial: &BTreeMap<usize, f64>) -> Result<Vec<f64>> {
        if partial.is_empty() {
            return Err(Error::InvalidArgument("extension needs at least one pinned vertex".into()));
        }
        self.negative_cycle_error()?;
        let mut init = vec![f64::INFINITY; self.len()];
        for (&v, &h) in partial {
            init[v] = h;
        }
        let (dist, pred) = self.relax(init).expect("no negative cycle");
        for (&y, &h) in partial {
            if dist[y] < h - 1e-9 {
                // follow predecessors back to the pinned vertex that undercuts y
                let mut x = y;
                let mut steps = 0;
                while pred[x] != usize::MAX && steps <= self.len() {
                    x = self.arcs[pred[x]].from;
                    steps += 1;
                }
                return Err(Error::Infeasible { x: self.labels[x], y: self.labels[y] });
            }
        }
        if dist.iter().any(|d| d.is_infinite()) {
            return Err(Error::NotLipschitz);
        }
        Ok(dist)
    }

    /// Pointwise-minimal extension `φ(y) = max_x φ'(x) - D(y, x)`.
    pub fn min_extension(&self, partial: &BTreeMap<usize, f64>) -> Result<Vec<f64>> {
        let reversed = FeasibilityGraph {
            labels: self.labels.clone(),
            arcs: self.arcs.iter().map(|a| Constraint { from: a.to, to: a.from, weight: a.weight }).collect(),
        };
        let negated: BTreeMap<usize, f64> = partial.iter().map(|(&v, &h)| (v, -h)).collect();
        match reversed.max_extension(&negated) {
            Ok(d) => Ok(d.into_iter().map(|v| -v).collect()),
            Err(Error::Infeasible { x, y }) => Err(Error::Infeasible { x: y, y: x }),
            Err(Error::NegativeCycle { mut cycle, weight }) => {
                cycle.reverse();
                let lead = (0..cycle.len()).min_by_key(|&i| cycle[i]).unwrap();
                cycle.rotate_left(lead);
                Err(Error::NegativeCycle { cycle, weight })
            }
            Err(e) => Err(e),
        }
    }
}

fn typed<H: Height>(graph: &Arc<Graph>, values: Vec<f64>) -> HeightConfig<H> {
    HeightConfig::new(graph.clone(), values.into_iter().map(H::from_f64).collect()).expect("one value per vertex")
}

fn partial_f64<H: Height>(graph: &Graph, partial: &BTreeMap<usize, H>) -> Result<BTreeMap<usize, f64>> {
    partial
        .iter()
        .map(|(&v, &h)| {
            if v >= graph.len() {
                Err(Error::InvalidArgument(format!("vertex {v} out of range")))
            } else {
                Ok((v, h.to_f64()))
            }
        })
        .collect()
}

/// Maximal finite-energy extension of `partial` to the whole graph.
pub fn extend_boundary<H: Height>(
    pot: &PeriodicPotential,
    graph: &Arc<Graph>,
    partial: &BTreeMap<usize, H>,
) -> Result<HeightConfig<H>> {
    let fg = FeasibilityGraph::from_graph(pot, graph);
    Ok(typed(graph, fg.max_extension(&partial_f64(graph, partial)?)?))
}

/// Minimal finite-energy extension of `partial` to the whole graph.
pub fn extend_boundary_min<H: Height>(
    pot: &PeriodicPotential,
    graph: &Arc<Graph>,
    partial: &BTreeMap<usize, H>,
) -> Result<HeightConfig<H>> {
    let fg = FeasibilityGraph::from_graph(pot, graph);
    Ok(typed(graph, fg.min_extension(&partial_f64(graph, partial)?)?))
}

/// A slope `(u1, u2)` with exact rational coordinates.
pub type Slope = [Rational64; 2];

/// Parse `"a,b"` where each coordinate is an integer, a fraction `p/q`, or a decimal.
pub fn parse_slope(text: &str) -> Result<Slope> {
    let bad = || Error::InvalidArgument(format!("expected slope u1,u2, got {text:?}"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let coord = |t: &str| -> Result<Rational64> {
        let t = t.trim();
        if let Some((p, q)) = t.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            return Ok(Rational64::new(p, q));
        }
        if let Ok(i) = t.parse::<i64>() {
            return Ok(Rational64::from_integer(i));
        }
        // decimal literal, read exactly
        let (neg, body) = t.strip_prefix('-').map_or((false, t), |r| (true, r));
        let (int, frac) = body.split_once('.').ok_or_else(bad)?;
        if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10i64.pow(frac.len() as u32);
        let int: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let num = int * den + frac.parse::<i64>().map_err(|_| bad())?;
        Ok(Rational64::new(if neg { -num } else { num }, den))
    };
    Ok([coord(a)?, coord(b)?])
}

pub fn slope_to_f64(u: &Slope) -> [f64; 2] {
    [u[0].to_f64().unwrap(), u[1].to_f64().unwrap()]
}

/// Homology offsets of the `n`-torus at slope `u`: `⌊u n⌋` in discrete mode, `u n`
/// otherwise.
pub fn torus_offsets(pot: &PeriodicPotential, n: usize, u: &Slope) -> [f64; 2] {
    let n = Rational64::from_integer(n as i64);
    let k = |c: Rational64| {
        let v = c * n;
        if pot.is_discrete() {
            v.floor().to_integer() as f64
        } else {
            v.to_f64().unwrap()
        }
    };
    [k(u[0]), k(u[1])]
}

fn check_torus(pot: &PeriodicPotential, n: usize) -> Result<()> {
    let p = pot.period();
    if n == 0 || !p.contains(Site::new(n as i64, 0)) || !p.contains(Site::new(0, n as i64)) {
        return Err(Error::InvalidArgument(format!("torus side {n} is not a multiple of the period")));
    }
    Ok(())
}

/// The `n`-torus graph at slope `u` (offsets per [`torus_offsets`]).
pub fn slope_torus(pot: &PeriodicPotential, n: usize, u: &Slope) -> Result<Arc<Graph>> {
    check_torus(pot, n)?;
    Ok(Arc::new(Graph::torus(n, torus_offsets(pot, n, u))))
}

/// Whether some finite-energy configuration on the `n`-torus has slope `u`.
pub fn torus_slope_feasible(pot: &PeriodicPotential, n: usize, u: &Slope) -> Result<bool> {
    let g = slope_torus(pot, n, u)?;
    Ok(FeasibilityGraph::from_graph(pot, &g).negative_cycle().is_none())
}

/// A feasible configuration on the torus, pinned at the reference vertex:
/// `φ(v) = D(0, v)`.
pub fn torus_feasible_config<H: Height>(pot: &PeriodicPotential, graph: &Arc<Graph>) -> Result<HeightConfig<H>> {
    let fg = FeasibilityGraph::from_graph(pot, graph);
    if fg.negative_cycle().is_some() {
        return Err(Error::InfeasibleSlope);
    }
    let partial = BTreeMap::from([(0usize, 0.0)]);
    Ok(typed(graph, fg.max_extension(&partial)?))
}

/// `(w, u) ≤ offset`: a constraint on slopes from a cycle of the fundamental torus
/// whose lift has displacement `w`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Halfspace {
    pub normal: [i64; 2],
    #[serde(serialize_with = "ser_rational")]
    pub offset: BigRational,
    /// Representatives visited, in order.
    pub cycle: Vec<Site>,
}

fn ser_rational<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopePolytope {
    pub halfspaces: Vec<Halfspace>,
    /// Indices of halfspaces that are facets of the polytope.
    pub facets: Vec<usize>,
    /// Vertices in counter-clockwise order, when the polytope is bounded and nonempty.
    #[serde(serialize_with = "ser_points")]
    pub vertices: Option<Vec<[BigRational; 2]>>,
    pub empty: bool,
    pub cycle_bound: usize,
    /// A facet came from a cycle of exactly the length bound.
    pub truncated: bool,
}

fn ser_points<S: serde::Serializer>(p: &Option<Vec<[BigRational; 2]>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    match p {
        None => s.serialize_none(),
        Some(pts) => {
            let mut seq = s.serialize_seq(Some(pts.len()))?;
            for pt in pts {
                seq.serialize_element(&[pt[0].to_string(), pt[1].to_string()])?;
            }
            seq.end()
        }
    }
}

fn rat(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite bound")
}

fn big(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

impl SlopePolytope {
    pub fn contains(&self, u: &[BigRational; 2]) -> bool {
        !self.empty
            && self.halfspaces.iter().all(|h| big(h.normal[0]) * &u[0] + big(h.normal[1]) * &u[1] <= h.offset)
    }

    /// Every constraint holds strictly.
    pub fn contains_strictly(&self, u: &[BigRational; 2]) -> bool {
        !self.empty
            && self.halfspaces.iter().all(|h| {
                (h.normal == [0, 0] && h.offset >= BigRational::zero())
                    || big(h.normal[0]) * &u[0] + big(h.normal[1]) * &u[1] < h.offset
            })
    }

    /// Facets in reduced form `(n1, n2, c)` with `gcd(n1, n2) = 1`, sorted and deduplicated.
    pub fn reduced_facets(&self) -> Vec<([i64; 2], BigRational)> {
        let mut out: Vec<([i64; 2], BigRational)> = self
            .facets
            .iter()
            .map(|&i| {
                let h = &self.halfspaces[i];
                let g = num_integer::gcd(h.normal[0], h.normal[1]);
                ([h.normal[0] / g, h.normal[1] / g], &h.offset / big(g))
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        out.dedup();
        out
    }

    /// CSV with one halfspace per row: `n1,n2,offset,cycle` (cycle as `x:y` steps).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n1,n2,offset,facet,cycle\n");
        for (i, h) in self.halfspaces.iter().enumerate() {
            let cyc: Vec<String> = h.cycle.iter().map(|s| format!("{}:{}", s.x, s.y)).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                h.normal[0],
                h.normal[1],
                h.offset,
                self.facets.contains(&i),
                cyc.join(" ")
            ));
        }
        out
    }
}

struct QuotientArc {
    to: usize,
    jump: [i64; 2],
    weight: f64,
}

/// Default cycle-length bound, four times the period diameter.
pub fn default_cycle_bound(pot: &PeriodicPotential) -> usize {
    4 * pot.period().diameter() as usize
}

/// Intersection of the halfspaces from all simple cycles of length at most
/// `cycle_bound` on the fundamental torus `ℤ²/ℒ`.
pub fn allowed_slope_polytope(pot: &PeriodicPotential, cycle_bound: usize) -> SlopePolytope {
    let period = pot.period();
    let reps = period.representatives();
    let nv = reps.len();
    let mut out: Vec<Vec<QuotientArc>> = (0..nv).map(|_| Vec::new()).collect();
    for (i, &r) in reps.iter().enumerate() {
        for dir in Dir::ALL {
            let lifted = r.step(dir);
            let head = period.reduce(lifted);
            let j = period.class_index(head);
            let disp = [lifted.x - head.x, lifted.y - head.y];
            let b = increment_bounds(pot, r, dir);
            if b.up.is_finite() {
                out[i].push(QuotientArc { to: j, jump: disp, weight: b.up });
            }
            if b.down.is_finite() {
                out[j].push(QuotientArc { to: i, jump: [-disp[0], -disp[1]], weight: b.down });
            }
        }
    }

    let mut raw: Vec<(Vec<usize>, [i64; 2], f64)> = Vec::new();
    // simple cycles rooted at their smallest vertex
    fn dfs(
        out: &[Vec<QuotientArc>],
        root: usize,
        v: usize,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        jump: [i64; 2],
        weight: f64,
        bound: usize,
        found: &mut Vec<(Vec<usize>, [i64; 2], f64)>,
    ) {
        for a in &out[v] {
            let j = [jump[0] + a.jump[0], jump[1] + a.jump[1]];
            let w = weight + a.weight;
            if a.to == root {
                found.push((path.clone(), j, w));
            } else if a.to > root && !on_path[a.to] && path.len() < bound {
                on_path[a.to] = true;
                path.push(a.to);
                dfs(out, root, a.to, path, on_path, j, w, bound, found);
                path.pop();
                on_path[a.to] = false;
            }
        }
    }
    let mut on_path = vec![false; nv];
    for root in 0..nv {
        let mut path = vec![root];
        on_path[root] = true;
        dfs(&out, root, root, &mut path, &mut on_path, [0, 0], 0.0, cycle_bound, &mut raw);
        on_path[root] = false;
    }

    let mut empty = false;
    let mut halfspaces: Vec<Halfspace> = Vec::new();
    for (path, jump, weight) in raw {
        if jump == [0, 0] {
            if weight < 0.0 {
                empty = true;
            }
            continue;
        }
        let offset = rat(weight);
        if halfspaces.iter().any(|h| h.normal == jump && h.offset <= offset) {
            continue;
        }
        halfspaces.retain(|h| !(h.normal == jump && h.offset > offset));
        halfspaces.push(Halfspace { normal: jump, offset, cycle: path.iter().map(|&v| reps[v]).collect() });
    }
    halfspaces.sort_by(|a, b| a.normal.cmp(&b.normal).then(a.offset.cmp(&b.offset)));

    let (vertices, facets, empty) = if empty { (None, Vec::new(), true) } else { polygon(&halfspaces) };
    let truncated = facets.iter().any(|&i| halfspaces[i].cycle.len() == cycle_bound);
    SlopePolytope { halfspaces, facets, vertices, empty, cycle_bound, truncated }
}

/// Vertices (if bounded), facet indices and emptiness of `{u : (n_i, u) ≤ c_i}`.
fn polygon(hs: &[Halfspace]) -> (Option<Vec<[BigRational; 2]>>, Vec<usize>, bool) {
    // clip with a box large enough to contain every true vertex
    let max_c = hs.iter().map(|h| h.offset.abs()).fold(BigRational::one(), |m, c| if c > m { c } else { m });
    let max_n = hs.iter().flat_map(|h| h.normal).map(|v| v.abs()).max().unwrap_or(1);
    let boxed = (max_c + BigRational::one()) * big(4 * (max_n + 1));
    let mut lines: Vec<([BigRational; 2], BigRational)> =
        hs.iter().map(|h| ([big(h.normal[0]), big(h.normal[1])], h.offset.clone())).collect();
    let real = lines.len();
    for (a, b) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        lines.push(([big(a), big(b)], boxed.clone()));
    }
    let inside = |p: &[BigRational; 2]| lines.iter().all(|(n, c)| &n[0] * &p[0] + &n[1] * &p[1] <= *c);
    let mut pts: Vec<[BigRational; 2]> = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (n1, c1) = &lines[i];
            let (n2, c2) = &lines[j];
            let det = &n1[0] * &n2[1] - &n1[1] * &n2[0];
            if det.is_zero() {
                continue;
            }
            let p = [(c1 * &n2[1] - c2 * &n1[1]) / &det, (&n1[0] * c2 - &n2[0] * c1) / &det];
            if inside(&p) && !pts.contains(&p) {
                pts.push(p);
            }
        }
    }
    if pts.is_empty() {
        return (None, Vec::new(), true);
    }
    let on = |k: usize, p: &[BigRational; 2]| {
        let (n, c) = &lines[k];
        &n[0] * &p[0] + &n[1] * &p[1] == *c
    };
    let facets: Vec<usize> = (0..real).filter(|&k| pts.iter().filter(|p| on(k, p)).count() >= 2).collect();
    let touches_box = pts.iter().any(|p| (real..lines.len()).any(|k| on(k, p)));
    if touches_box {
        return (None, facets, false);
    }
    // counter-clockwise order around the centroid
    let len = big(pts.len() as i64);
    let cx = pts.iter().fold(BigRational::zero(), |s, p| s + &p[0]) / &len;
    let cy = pts.iter().fold(BigRational::zero(), |s, p| s + &p[1]) / &len;
    pts.sort_by(|a, b| {
        let ang = |p: &[BigRational; 2]| (&p[1] - &cy).to_f64().unwrap().atan2((&p[0] - &cx).to_f64().unwrap());
        ang(a).total_cmp(&ang(b))
    });
    (Some(pts), facets, false)
}

/// Exact minimum energy on the slope-`u` torus class with a minimiser.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub witness: HeightConfig<i64>,
    pub states_bound: f64,
}

/// Branch-and-bound over heights in the feasible ranges, bounding by the energy of
/// completed edges plus the minimum energy of every edge still open.
pub fn ground_state_energy(pot: &PeriodicPotential, n: usize, u: &Slope, max_states: f64) -> Result<GroundState> {
    if !pot.is_discrete() {
        return Err(Error::InvalidArgument("ground states need the discrete domain".into()));
    }
    if !pot.is_lipschitz() {
        return Err(Error::NotLipschitz);
    }
    let graph = slope_torus(pot, n, u)?;
    let fg = FeasibilityGraph::from_graph(pot, &graph);
    if fg.negative_cycle().is_some() {
        return Err(Error::InfeasibleSlope);
    }
    let pin = BTreeMap::from([(0usize, 0.0)]);
    let hi = fg.max_extension(&pin)?;
    let lo = fg.min_extension(&pin)?;
    let states: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a + 1.0).product();
    if states > max_states {
        return Err(Error::StateSpaceTooLarge(format!("{states:.3e} height assignments exceed {max_states:.3e}")));
    }
    let nv = graph.len();
    // edges complete once their later endpoint is assigned
    let mut closing: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (e, edge) in graph.edges().iter().enumerate() {
        closing[edge.tail.max(edge.head)].push(e);
    }
    let edge_min: Vec<f64> = (0..graph.edges().len())
        .map(|e| {
            let cls = pot.class(graph.edge_base(e), graph.edge(e).dir);
            cls.shape.minimum(pot.domain()).map_or(f64::INFINITY, |m| m + cls.constant)
        })
        .collect();
    // remaining[v] = sum of minimal energies of edges closed at vertices > v
    let mut remaining = vec![0.0; nv + 1];
    for v in (0..nv).rev() {
        remaining[v] = remaining[v + 1] + closing[v].iter().map(|&e| edge_min[e]).sum::<f64>();
    }

    struct Search<'a> {
        pot: &'a PeriodicPotential,
        graph: &'a Graph,
        closing: &'a [Vec<usize>],
        remaining: &'a [f64],
        lo: Vec<i64>,
        hi: Vec<i64>,
        vals: Vec<i64>,
        best: f64,
        best_vals: Vec<i64>,
    }
    impl Search<'_> {
        fn go(&mut self, v: usize, acc: f64) {
            if v == self.vals.len() {
                if acc < self.best {
                    self.best = acc;
                    self.best_vals = self.vals.clone();
                }
                return;
            }
            let (lo, hi) = if v == 0 { (0, 0) } else { (self.lo[v], self.hi[v]) };
            for a in lo..=hi {
                self.vals[v] = a;
                let mut e_acc = acc;
                for &e in &self.closing[v] {
                    let edge = self.graph.edge(e);
                    let eta = (self.vals[edge.head] - self.vals[edge.tail]) as f64 + edge.shift;
                    match self.pot.graph_edge_energy(self.graph, e, eta) {
                        Energy::Finite(x) => e_acc += x,
                        Energy::Infinite => {
                            e_acc = f64::INFINITY;
                            break;
                        }
                    }
                }
                if e_acc + self.remaining[v + 1] < self.best {
                    self.go(v + 1, e_acc);
                }
            }
        }
    }
    let mut s = Search {
        pot,
        graph: &graph,
        closing: &closing,
        remaining: &remaining,
        lo: lo.iter().map(|&x| x as i64).collect(),
        hi: hi.iter().map(|&x| x as i64).collect(),
        vals: vec![0; nv],
        best: f64::INFINITY,
        best_vals: Vec::new(),
    };
    s.go(0, 0.0);
    if s.best.is_infinite() {
        return Err(Error::InfeasibleSlope);
    }
    let witness = HeightConfig::new(graph.clone(), s.best_vals)?;
    Ok(GroundState { energy: s.best, witness, states_bound: states })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> Rational64 {
        Rational64::new(p, q)
    }

    #[test]
    fn domino_bounds() {
        let d = PeriodicPotential::domino();
        assert_eq!(increment_bounds(&d, Site::new(0, 0), Dir::E2), IncrementBounds { up: 0.0, down: 1.0 });
        let q = PeriodicPotential::isotropic(
            crate::potential::ValueDomain::DiscreteInteger,
            crate::potential::EdgePotential::Quadratic { coefficient: 1.0 },
        );
        let b = increment_bounds(&q, Site::new(0, 0), Dir::E1);
        assert!(b.up.is_infinite() && b.down.is_infinite());
    }

    #[test]
    fn negative_cycle_witness() {
        let labels = vec![Site::new(1, 0), Site::new(0, 0), Site::new(0, 1), Site::new(1, 1)];
        let arcs = (0..4).map(|i| Constraint { from: i, to: (i + 1) % 4, weight: -1.0 }).collect();
        let fg = FeasibilityGraph::from_arcs(labels, arcs);
        let (cycle, w) = fg.negative_cycle().unwrap();
        assert_eq!(w, -4.0);
        assert_eq!(cycle, vec![1, 2, 3, 0]);
        assert!(matches!(fg.shortest_distances(&[0]), Err(Error::NegativeCycle { weight, .. }) if weight == -4.0));
    }

    #[test]
    fn slope_parse() {
        assert_eq!(parse_slope("1/4, 0").unwrap(), [r(1, 4), r(0, 1)]);
        assert_eq!(parse_slope("0.6,-0.25").unwrap(), [r(3, 5), r(-1, 4)]);
        assert!(parse_slope("a,b").is_err());
    }

    #[test]
    fn domino_slopes() {
        let d = PeriodicPotential::domino();
        assert!(torus_slope_feasible(&d, 4, &[r(0, 1), r(0, 1)]).unwrap());
        assert!(!torus_slope_feasible(&d, 10, &[r(3, 5), r(0, 1)]).unwrap());
        assert!(torus_slope_feasible(&d, 4, &[r(1, 2), r(0, 1)]).unwrap());
        assert!(torus_slope_feasible(&d, 3, &[r(0, 1), r(0, 1)]).is_err());
    }

    #[test]
    fn domino_polytope() {
        let p = allowed_slope_polytope(&PeriodicPotential::domino(), 8);
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        let facets = p.reduced_facets();
        let expected: Vec<([i64; 2], BigRational)> =
            vec![([-1, -1], half.clone()), ([-1, 1], half.clone()), ([1, -1], half.clone()), ([1, 1], half.clone())];
        assert_eq!(facets, expected);
        assert_eq!(p.vertices.as_ref().unwrap().len(), 4);
        assert!(!p.truncated);
    }
}
