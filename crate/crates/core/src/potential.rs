//! Lattice-periodic nearest-neighbour edge potentials.
//!
//! A [`PeriodicPotential`] assigns a convex function `V_{x,y}` to every edge class
//! (direction plus residue of the tail modulo the invariance lattice). The energy of
//! an edge `{x, y}` with `x` lexicographically before `y` is `V_{x,y}(φ(y) - φ(x))`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::lattice::{Dir, Graph, Period, Site};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueDomain {
    #[serde(rename = "discrete")]
    DiscreteInteger,
    #[serde(rename = "continuous")]
    ContinuousReal,
}

impl ValueDomain {
    pub fn is_discrete(self) -> bool {
        matches!(self, ValueDomain::DiscreteInteger)
    }
}

/// One convex function of the increment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EdgePotential {
    /// Linear between `knots` (strictly increasing) with the given `values`. Outside
    /// the knot range the function continues with `left_slope` / `right_slope`, or is
    /// `+∞` when the slope is absent.
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left_slope: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right_slope: Option<f64>,
    },
    /// `coefficient · η²`.
    Quadratic { coefficient: f64 },
    /// `values[j - start]` at integers `j`, `+∞` outside the table. Between integers
    /// the table is interpolated linearly.
    Tabulated { start: i64, values: Vec<f64> },
    /// The largest convex function agreeing with `inner` on the integers.
    Interpolated { inner: Box<EdgePotential> },
}

fn is_int(v: f64) -> bool {
    v.fract() == 0.0
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

impl EdgePotential {
    /// `|η|`.
    pub fn abs() -> EdgePotential {
        EdgePotential::PiecewiseLinear {
            knots: vec![0.0],
            values: vec![0.0],
            left_slope: Some(-1.0),
            right_slope: Some(1.0),
        }
    }

    /// Zero on the integer interval `[lo, hi]`, `+∞` elsewhere.
    pub fn flat(lo: i64, hi: i64) -> EdgePotential {
        assert!(lo <= hi);
        EdgePotential::Tabulated { start: lo, values: vec![0.0; (hi - lo + 1) as usize] }
    }

    /// Evaluate `f` on the integers `lo..=hi` as a table.
    pub fn tabulate(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> EdgePotential {
        EdgePotential::Tabulated { start: lo, values: (lo..=hi).map(f).collect() }
    }

    pub fn eval(&self, eta: f64) -> Energy {
        match self {
            EdgePotential::PiecewiseLinear { knots, values, left_slope, right_slope } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if eta < first {
                    return match left_slope {
                        Some(s) => Energy::Finite(values[0] + s * (eta - first)),
                        None => Energy::Infinite,
                    };
                }
                if eta > last {
                    return match right_slope {
                        Some(s) => Energy::Finite(values[values.len() - 1] + s * (eta - last)),
                        None => Energy::Infinite,
                    };
                }
                let i = knots.partition_point(|&k| k < eta);
                if knots[i] == eta {
                    return Energy::Finite(values[i]);
                }
                let t = (eta - knots[i - 1]) / (knots[i] - knots[i - 1]);
                Energy::Finite(lerp(values[i - 1], values[i], t))
            }
            EdgePotential::Quadratic { coefficient } => Energy::Finite(coefficient * eta * eta),
            EdgePotential::Tabulated { start, values } => {
                let rel = eta - *start as f64;
                let top = (values.len() - 1) as f64;
                if !(0.0..=top).contains(&rel) {
                    return Energy::Infinite;
                }
                let j = rel.floor();
                if rel == j {
                    return Energy::Finite(values[j as usize]);
                }
                let j = j as usize;
                Energy::Finite(lerp(values[j], values[j + 1], rel - j as f64))
            }
            EdgePotential::Interpolated { inner } => {
                if is_int(eta) {
                    return inner.eval(eta);
                }
                let j = eta.floor();
                match (inner.eval(j), inner.eval(j + 1.0)) {
                    (Energy::Finite(a), Energy::Finite(b)) => Energy::Finite(lerp(a, b, eta - j)),
                    _ => Energy::Infinite,
                }
            }
        }
    }

    /// Closure of the set where the function is finite, as `(inf, sup)`; either end may
    /// be infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            EdgePotential::PiecewiseLinear { knots, left_slope, right_slope, .. } => (
                if left_slope.is_some() { f64::NEG_INFINITY } else { knots[0] },
                if right_slope.is_some() { f64::INFINITY } else { knots[knots.len() - 1] },
            ),
            EdgePotential::Quadratic { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            EdgePotential::Tabulated { start, values } => {
                (*start as f64, (*start + values.len() as i64 - 1) as f64)
            }
            EdgePotential::Interpolated { inner } => {
                let (lo, hi) = inner.support();
                (lo.ceil(), hi.floor())
            }
        }
    }

    /// Support restricted to the value domain (rounded inward to integers in
    /// discrete mode).
    pub fn support_in(&self, domain: ValueDomain) -> (f64, f64) {
        let (lo, hi) = self.support();
        match domain {
            ValueDomain::DiscreteInteger => (lo.ceil(), hi.floor()),
            ValueDomain::ContinuousReal => (lo, hi),
        }
    }

    /// An integer minimiser and the minimum over the integers of the support.
    pub fn argmin_int(&self) -> Option<(i64, f64)> {
        let candidates: Vec<f64> = match self {
            EdgePotential::PiecewiseLinear { knots, .. } => {
                let (lo, hi) = self.support_in(ValueDomain::DiscreteInteger);
                let mut c: Vec<f64> = knots.iter().flat_map(|k| [k.floor(), k.ceil()]).collect();
                c.extend([lo, hi]);
                c.retain(|v| v.is_finite() && *v >= lo && *v <= hi);
                c
            }
            EdgePotential::Quadratic { .. } => vec![0.0],
            EdgePotential::Tabulated { start, values } => {
                (0..values.len()).map(|i| (*start + i as i64) as f64).collect()
            }
            EdgePotential::Interpolated { inner } => return inner.argmin_int(),
        };
        candidates
            .into_iter()
            .filter_map(|c| self.eval(c).finite().map(|v| (c as i64, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Infimum over the value domain; `None` if the function is `+∞` everywhere or
    /// unbounded below.
    pub fn minimum(&self, domain: ValueDomain) -> Option<f64> {
        match domain {
            ValueDomain::DiscreteInteger => self.argmin_int().map(|(_, v)| v),
            ValueDomain::ContinuousReal => match self {
                EdgePotential::PiecewiseLinear { values, left_slope, right_slope, .. } => {
                    if left_slope.is_some_and(|s| s > 0.0) || right_slope.is_some_and(|s| s < 0.0) {
                        None
                    } else {
                        values.iter().copied().reduce(f64::min)
                    }
                }
                EdgePotential::Quadratic { coefficient } => (*coefficient >= 0.0).then_some(0.0),
                EdgePotential::Tabulated { values, .. } => values.iter().copied().reduce(f64::min),
                EdgePotential::Interpolated { inner } => inner.argmin_int().map(|(_, v)| v),
            },
        }
    }

    fn check_shape(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigParse(m.to_string()));
        match self {
            EdgePotential::PiecewiseLinear { knots, values, left_slope, right_slope } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return bad("piecewise potential needs equally many knots and values (at least one)");
                }
                if knots.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("knots must be strictly increasing");
                }
                let finite = knots.iter().chain(values).chain(left_slope).chain(right_slope);
                if finite.into_iter().any(|v| !v.is_finite()) {
                    return bad("knots, values and slopes must be finite");
                }
            }
            EdgePotential::Quadratic { coefficient } => {
                if !coefficient.is_finite() || *coefficient < 0.0 {
                    return bad("quadratic coefficient must be finite and nonnegative");
                }
            }
            EdgePotential::Tabulated { values, .. } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return bad("table must be nonempty with finite entries");
                }
            }
            EdgePotential::Interpolated { inner } => inner.check_shape()?,
        }
        Ok(())
    }

    /// Convexity on the value domain, up to a relative tolerance.
    pub fn is_convex(&self, domain: ValueDomain) -> bool {
        let tol = 1e-12;
        let table_convex = |values: &[f64]| {
            values.windows(3).all(|w| {
                let scale = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                w[0] + w[2] - 2.0 * w[1] >= -tol * scale
            })
        };
        match self {
            EdgePotential::PiecewiseLinear { knots, values, left_slope, right_slope } => {
                let mut slopes: Vec<f64> = left_slope.iter().copied().collect();
                slopes.extend(knots.windows(2).zip(values.windows(2)).map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0])));
                slopes.extend(right_slope.iter().copied());
                let _ = domain;
                slopes.windows(2).all(|s| s[1] >= s[0] - tol * (1.0 + s[0].abs()))
            }
            EdgePotential::Quadratic { coefficient } => *coefficient >= 0.0,
            EdgePotential::Tabulated { values, .. } => table_convex(values),
            EdgePotential::Interpolated { inner } => inner.is_convex(ValueDomain::DiscreteInteger),
        }
    }

    /// Whether `V → ∞` at each unbounded end of the support.
    pub fn diverges(&self) -> bool {
        match self {
            EdgePotential::PiecewiseLinear { left_slope, right_slope, .. } => {
                left_slope.is_none_or(|s| s < 0.0) && right_slope.is_none_or(|s| s > 0.0)
            }
            EdgePotential::Quadratic { coefficient } => *coefficient > 0.0,
            EdgePotential::Tabulated { .. } => true,
            EdgePotential::Interpolated { inner } => inner.diverges(),
        }
    }

    pub fn is_lipschitz(&self) -> bool {
        let (lo, hi) = self.support();
        lo.is_finite() && hi.is_finite()
    }

    fn probe_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = (-40..=40).map(|j| j as f64).collect();
        pts.extend([-0.5, 0.25, 0.5, 1.5, 2.75]);
        match self {
            EdgePotential::PiecewiseLinear { knots, .. } => pts.extend(knots.iter().copied()),
            EdgePotential::Tabulated { start, values } => {
                pts.extend([*start as f64, (*start + values.len() as i64 - 1) as f64])
            }
            EdgePotential::Interpolated { inner } => pts.extend(inner.probe_points()),
            EdgePotential::Quadratic { .. } => {}
        }
        let mirrored: Vec<f64> = pts.iter().map(|p| -p).collect();
        pts.extend(mirrored);
        pts
    }

    /// `V(η) = V(-η)` on a probe set covering every knot and the integers near 0.
    pub fn is_symmetric(&self) -> bool {
        let (lo, hi) = self.support();
        if lo != -hi {
            return false;
        }
        self.probe_points().into_iter().all(|p| match (self.eval(p), self.eval(-p)) {
            (Energy::Finite(a), Energy::Finite(b)) => (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
            (a, b) => a == b,
        })
    }
}

/// Edge potential of one edge class: `shape(η) + constant`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPotential {
    pub shape: EdgePotential,
    pub constant: f64,
}

impl ClassPotential {
    pub fn new(shape: EdgePotential) -> ClassPotential {
        ClassPotential { shape, constant: 0.0 }
    }

    pub fn eval(&self, eta: f64) -> Energy {
        self.shape.eval(eta) + self.constant
    }
}

/// An edge class: a direction and a residue of the tail modulo the invariance lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeClass {
    pub dir: Dir,
    pub base: Site,
}

/// Parity label `ε`: 0, 1, 2, 3 for residues mod 2 equal to (0,0), (0,1), (1,1), (1,0).
pub fn epsilon(s: Site) -> i64 {
    match (s.x.rem_euclid(2), s.y.rem_euclid(2)) {
        (0, 0) => 0,
        (0, 1) => 1,
        (1, 1) => 2,
        _ => 3,
    }
}

/// A lattice-periodic nearest-neighbour potential. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicPotential {
    domain: ValueDomain,
    period: Period,
    /// Indexed by `dir.index() * period.index() + period.class_index(base)`.
    classes: Vec<ClassPotential>,
}

/// Per-class outcome of [`PeriodicPotential::validate_sap`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: EdgeClass,
    pub convex: bool,
    pub positive: bool,
    pub diverges: bool,
    pub lipschitz: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SapReport {
    pub classes: Vec<ClassReport>,
    pub isotropic: bool,
    pub lipschitz: bool,
}

impl SapReport {
    /// Convex, nonnegative and divergent on every class.
    pub fn valid(&self) -> bool {
        self.classes.iter().all(|c| c.convex && c.positive && c.diverges)
    }
}

impl PeriodicPotential {
    pub fn new(domain: ValueDomain, period: Period, classes: BTreeMap<EdgeClass, ClassPotential>) -> Result<Self> {
        let mut slots: Vec<Option<ClassPotential>> = vec![None; 2 * period.index()];
        for (class, pot) in classes {
            if period.reduce(class.base) != class.base {
                return Err(Error::ConfigParse(format!("class base {} is not a reduced representative", class.base)));
            }
            pot.shape.check_shape()?;
            slots[class.dir.index() * period.index() + period.class_index(class.base)] = Some(pot);
        }
        let reps = period.representatives();
        let mut out = Vec::with_capacity(slots.len());
        for (i, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(p) => out.push(p),
                None => {
                    let dir = Dir::ALL[i / period.index()];
                    let base = reps[i % period.index()];
                    return Err(Error::ConfigParse(format!("no potential for edge class {dir:?} at {base}")));
                }
            }
        }
        Ok(PeriodicPotential { domain, period, classes: out })
    }

    /// The same edge potential on every edge, `ℒ = ℤ²`.
    pub fn isotropic(domain: ValueDomain, shape: EdgePotential) -> PeriodicPotential {
        shape.check_shape().expect("valid preset shape");
        PeriodicPotential {
            domain,
            period: Period::UNIT,
            classes: vec![ClassPotential::new(shape.clone()), ClassPotential::new(shape)],
        }
    }

    /// The domino-tiling potential on `ℒ = 2ℤ²`: for an edge `x → y`, increment 0
    /// costs nothing, +1 is allowed iff `ε(x) > ε(y)`, −1 iff `ε(x) < ε(y)`.
    pub fn domino() -> PeriodicPotential {
        let period = Period::square(2);
        let mut classes = BTreeMap::new();
        for base in period.representatives() {
            for dir in Dir::ALL {
                let (ex, ey) = (epsilon(base), epsilon(base.step(dir)));
                let shape = if ex > ey { EdgePotential::flat(0, 1) } else { EdgePotential::flat(-1, 0) };
                classes.insert(EdgeClass { dir, base }, ClassPotential::new(shape));
            }
        }
        PeriodicPotential::new(ValueDomain::DiscreteInteger, period, classes).expect("domino classes are total")
    }

    /// Discrete solid-on-solid model, `V(η) = |η|` on ℤ.
    pub fn sos_abs() -> PeriodicPotential {
        PeriodicPotential::isotropic(ValueDomain::DiscreteInteger, EdgePotential::abs())
    }

    /// Continuous Gaussian model, `V(η) = c η²`.
    pub fn gaussian(coefficient: f64) -> PeriodicPotential {
        PeriodicPotential::isotropic(ValueDomain::ContinuousReal, EdgePotential::Quadratic { coefficient })
    }

    /// Discrete isotropic potential from a table starting at `start`.
    pub fn tabulated(start: i64, values: Vec<f64>) -> PeriodicPotential {
        PeriodicPotential::isotropic(ValueDomain::DiscreteInteger, EdgePotential::Tabulated { start, values })
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn is_discrete(&self) -> bool {
        self.domain.is_discrete()
    }

    /// All edge classes with their potentials, E1 classes first.
    pub fn classes(&self) -> impl Iterator<Item = (EdgeClass, &ClassPotential)> {
        let reps = self.period.representatives();
        let per = self.period.index();
        self.classes.iter().enumerate().map(move |(i, p)| (EdgeClass { dir: Dir::ALL[i / per], base: reps[i % per] }, p))
    }

    pub fn class_of(&self, base: Site, dir: Dir) -> EdgeClass {
        EdgeClass { dir, base: self.period.reduce(base) }
    }

    pub fn class(&self, base: Site, dir: Dir) -> &ClassPotential {
        &self.classes[dir.index() * self.period.index() + self.period.class_index(base)]
    }

    /// `V_{x,y}(η)` for the edge from `base` to `base + dir`.
    pub fn edge_energy(&self, base: Site, dir: Dir, eta: f64) -> Energy {
        self.class(base, dir).eval(eta)
    }

    /// Energy of graph edge `e` at increment `eta` (the increment already includes any
    /// torus shift).
    pub fn graph_edge_energy(&self, graph: &Graph, e: usize, eta: f64) -> Energy {
        self.edge_energy(graph.edge_base(e), graph.edge(e).dir, eta)
    }

    /// Finite-support interval of the class potential, in the value domain.
    pub fn edge_support(&self, base: Site, dir: Dir) -> (f64, f64) {
        self.class(base, dir).shape.support_in(self.domain)
    }

    pub fn is_lipschitz(&self) -> bool {
        self.classes.iter().all(|c| c.shape.is_lipschitz())
    }

    /// Whether all classes carry the same symmetric potential.
    pub fn is_isotropic(&self) -> bool {
        let first = &self.classes[0];
        self.classes.iter().all(|c| c == first) && first.shape.is_symmetric()
    }

    pub fn validate_sap(&self) -> SapReport {
        let classes: Vec<ClassReport> = self
            .classes()
            .map(|(class, p)| ClassReport {
                class,
                convex: p.shape.is_convex(self.domain),
                positive: p.shape.minimum(self.domain).is_some_and(|m| m + p.constant >= -1e-12),
                diverges: p.shape.diverges(),
                lipschitz: p.shape.is_lipschitz(),
            })
            .collect();
        let lipschitz = classes.iter().all(|c| c.lipschitz);
        SapReport { classes, isotropic: self.is_isotropic(), lipschitz }
    }

    /// Every class shifted so its minimum over the value domain is 0.
    pub fn normalized(&self) -> Result<PeriodicPotential> {
        let mut out = self.clone();
        for c in &mut out.classes {
            let m = c.shape.minimum(self.domain).ok_or_else(|| Error::EmptySupport("class potential has no finite minimum".into()))?;
            c.constant = -m;
        }
        Ok(out)
    }

    pub fn with_added_constant(&self, c: f64) -> PeriodicPotential {
        let mut out = self.clone();
        for cls in &mut out.classes {
            cls.constant += c;
        }
        out
    }

    /// Replace every `V` by `V` where `V ≤ cutoff` and `+∞` elsewhere.
    pub fn lipschitz_truncate(&self, cutoff: f64) -> Result<PeriodicPotential> {
        if !self.is_discrete() {
            return Err(Error::InvalidArgument("Lipschitz truncation needs the discrete domain".into()));
        }
        if cutoff.is_nan() || cutoff < 0.0 {
            return Err(Error::InvalidArgument(format!("cutoff {cutoff} must be nonnegative")));
        }
        let mut out = self.clone();
        for (i, cls) in out.classes.iter_mut().enumerate() {
            let within = |j: i64| cls.eval(j as f64).finite().is_some_and(|v| v <= cutoff);
            let (j0, _) = cls.shape.argmin_int().ok_or_else(|| Error::EmptySupport(format!("class {i} has empty support")))?;
            if !within(j0) {
                return Err(Error::EmptySupport(format!("no increment of class {i} has energy at most {cutoff}")));
            }
            let (mut lo, mut hi) = (j0, j0);
            while within(lo - 1) {
                lo -= 1;
            }
            while within(hi + 1) {
                hi += 1;
            }
            let shape = &cls.shape;
            cls.shape = EdgePotential::tabulate(lo, hi, |j| shape.eval(j as f64).to_f64());
        }
        Ok(out)
    }

    /// Zero on each class's integer support, `+∞` elsewhere (Lipschitz, discrete only).
    pub fn support_indicator(&self) -> Result<PeriodicPotential> {
        if !self.is_discrete() || !self.is_lipschitz() {
            return Err(Error::NotLipschitz);
        }
        let mut out = self.clone();
        for cls in &mut out.classes {
            let (lo, hi) = cls.shape.support_in(ValueDomain::DiscreteInteger);
            if lo > hi {
                return Err(Error::EmptySupport("class with no integer in its support".into()));
            }
            cls.shape = EdgePotential::flat(lo as i64, hi as i64);
            cls.constant = 0.0;
        }
        Ok(out)
    }

    /// Continuous potential whose classes are the convex interpolations of this
    /// discrete potential.
    pub fn convex_interpolation(&self) -> PeriodicPotential {
        let mut out = self.clone();
        out.domain = ValueDomain::ContinuousReal;
        for c in &mut out.classes {
            c.shape = convex_interpolation(&c.shape);
        }
        out
    }

    /// Sum of edge energies over all edges of the config's graph with both endpoints
    /// in `region` (all edges when `region` is `None`).
    pub fn hamiltonian_interior<H: crate::config::Height>(
        &self,
        config: &crate::config::HeightConfig<H>,
        region: Option<&[Site]>,
    ) -> Result<Energy> {
        let graph = config.graph();
        let mask = match region {
            None => vec![true; graph.len()],
            Some(sites) => {
                let mut mask = vec![false; graph.len()];
                for &s in sites {
                    let v = graph.index_of(s).ok_or(Error::MissingHeight(s))?;
                    mask[v] = true;
                }
                mask
            }
        };
        let mut total = Energy::ZERO;
        for (e, edge) in graph.edges().iter().enumerate() {
            if mask[edge.tail] && mask[edge.head] {
                total = total + self.graph_edge_energy(graph, e, config.increment(e));
                if total.is_infinite() {
                    break;
                }
            }
        }
        Ok(total)
    }

    /// Parse a potential from a command-line spec: `domino`, `sos-abs`,
    /// `gaussian:C`, `tabulated:START:v0,v1,...`, or the path of a TOML file.
    pub fn from_spec(spec: &str) -> Result<PeriodicPotential> {
        if let Some(p) = preset(spec)? {
            return Ok(p);
        }
        let text = std::fs::read_to_string(spec)
            .map_err(|e| Error::ConfigParse(format!("potential {spec:?} is neither a preset nor a readable file: {e}")))?;
        PeriodicPotential::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<PeriodicPotential> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        PeriodicPotential::from_table(table)
    }

    pub fn from_table(mut table: toml::Table) -> Result<PeriodicPotential> {
        let cfg = |m: String| Error::ConfigParse(m);
        if let Some(p) = table.remove("preset") {
            let name = p.as_str().ok_or_else(|| cfg("preset must be a string".into()))?;
            if !table.is_empty() {
                return Err(cfg("a preset potential file takes no other keys".into()));
            }
            return preset(name)?.ok_or_else(|| cfg(format!("unknown preset {name:?}")));
        }
        let domain: ValueDomain = table
            .remove("domain")
            .ok_or_else(|| cfg("missing key `domain`".into()))?
            .try_into()
            .map_err(|e: toml::de::Error| cfg(format!("domain: {e}")))?;
        let period: [[i64; 2]; 2] = match table.remove("period") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| cfg(format!("period: {e}")))?,
            None => [[1, 0], [0, 1]],
        };
        let period = Period::from_generators(period).map_err(|e| cfg(e.to_string()))?;
        let entries = match table.remove("class") {
            Some(toml::Value::Array(a)) => a,
            Some(_) => return Err(cfg("`class` must be an array of tables".into())),
            None => return Err(cfg("missing `[[class]]` entries".into())),
        };
        if let Some(k) = table.keys().next() {
            return Err(cfg(format!("unknown key {k:?}")));
        }
        let mut classes = BTreeMap::new();
        for entry in entries {
            let toml::Value::Table(mut t) = entry else {
                return Err(cfg("class entries must be tables".into()));
            };
            let dirs: Vec<Dir> = match t.remove("dir") {
                Some(v) => vec![v.try_into().map_err(|e: toml::de::Error| cfg(format!("dir: {e}")))?],
                None => Dir::ALL.to_vec(),
            };
            let bases: Vec<Site> = match t.remove("base") {
                Some(v) => {
                    let [x, y]: [i64; 2] = v.try_into().map_err(|e: toml::de::Error| cfg(format!("base: {e}")))?;
                    vec![Site::new(x, y)]
                }
                None => period.representatives(),
            };
            let constant = match t.remove("constant") {
                Some(v) => v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(|| cfg("constant must be a number".into()))?,
                None => 0.0,
            };
            let shape = if let Some(p) = t.remove("preset") {
                let name = p.as_str().ok_or_else(|| cfg("preset must be a string".into()))?;
                if !t.is_empty() {
                    return Err(cfg("a preset class takes no shape keys".into()));
                }
                shape_preset(name)?
            } else {
                toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| cfg(format!("class shape: {e}")))?
            };
            for &dir in &dirs {
                for &base in &bases {
                    classes.insert(EdgeClass { dir, base: period.reduce(base) }, ClassPotential { shape: shape.clone(), constant });
                }
            }
        }
        PeriodicPotential::new(domain, period, classes)
    }

    /// Lossless TOML form: every class is written out explicitly.
    pub fn to_toml(&self) -> String {
        let mut root = toml::Table::new();
        root.insert("domain".into(), toml::Value::try_from(self.domain).expect("domain serializes"));
        root.insert("period".into(), toml::Value::try_from(self.period.basis()).expect("matrix serializes"));
        let mut arr = Vec::new();
        for (class, pot) in self.classes() {
            let mut t = match toml::Value::try_from(&pot.shape).expect("shape serializes") {
                toml::Value::Table(t) => t,
                _ => unreachable!("shapes serialize to tables"),
            };
            t.insert("dir".into(), toml::Value::try_from(class.dir).expect("dir serializes"));
            t.insert("base".into(), toml::Value::try_from([class.base.x, class.base.y]).expect("base serializes"));
            t.insert("constant".into(), toml::Value::Float(pot.constant));
            arr.push(toml::Value::Table(t));
        }
        root.insert("class".into(), toml::Value::Array(arr));
        toml::to_string(&root).expect("potential serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn shape_preset(name: &str) -> Result<EdgePotential> {
    if name == "sos-abs" {
        return Ok(EdgePotential::abs());
    }
    if let Some(c) = name.strip_prefix("gaussian:") {
        let coefficient: f64 = c.parse().map_err(|_| Error::ConfigParse(format!("bad gaussian coefficient {c:?}")))?;
        let shape = EdgePotential::Quadratic { coefficient };
        shape.check_shape()?;
        return Ok(shape);
    }
    if let Some(rest) = name.strip_prefix("tabulated:") {
        let (start, values) = rest
            .split_once(':')
            .ok_or_else(|| Error::ConfigParse(format!("expected tabulated:START:v0,v1,..., got {name:?}")))?;
        let start: i64 = start.parse().map_err(|_| Error::ConfigParse(format!("bad table start {start:?}")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::ConfigParse(format!("bad table value {v:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let shape = EdgePotential::Tabulated { start, values };
        shape.check_shape()?;
        return Ok(shape);
    }
    Err(Error::ConfigParse(format!("unknown class preset {name:?}")))
}

fn preset(name: &str) -> Result<Option<PeriodicPotential>> {
    Ok(Some(match name {
        "domino" => PeriodicPotential::domino(),
        "sos-abs" => PeriodicPotential::sos_abs(),
        _ if name.starts_with("gaussian:") => {
            PeriodicPotential::isotropic(ValueDomain::ContinuousReal, shape_preset(name)?)
        }
        _ if name.starts_with("tabulated:") => {
            PeriodicPotential::isotropic(ValueDomain::DiscreteInteger, shape_preset(name)?)
        }
        _ => return Ok(None),
    }))
}

/// Largest convex function that agrees with a discrete potential on the integers:
/// linear on every `[j, j+1]` where both ends are finite, `+∞` outside the integer span.
pub fn convex_interpolation(v: &EdgePotential) -> EdgePotential {
    match v {
        EdgePotential::Interpolated { .. } => v.clone(),
        EdgePotential::Tabulated { .. } => v.clone(),
        _ => EdgePotential::Interpolated { inner: Box::new(v.clone()) },
    }
}
