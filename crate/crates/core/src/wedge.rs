//! Wedge normalisation of an isotropic continuous potential:
//! `V̄(η) = V(η) − log g(F(η))` with `F` the distribution function of `e^{-V}` and
//! `g(s) = 2 − 4|s − 1/2|`.

use serde::Serialize;

use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::potential::EdgePotential;

/// Relative tolerance of the adaptive trapezoid rule.
pub const QUAD_TOL: f64 = 1e-10;
/// Integrands are dropped where `e^{-(V - V_min)}` falls below this.
pub const QUAD_FLOOR: f64 = 1e-16;

/// Adaptive trapezoid rule on `[a, b]` with relative tolerance `rel_tol`.
pub fn adaptive_trapezoid(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // a coarse pass sets the absolute scale
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let xs: Vec<f64> = (0..=pieces).map(|i| if i == pieces { b } else { a + h * i as f64 }).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let coarse: f64 = (0..pieces).map(|i| 0.5 * (fs[i] + fs[i + 1]) * (xs[i + 1] - xs[i])).sum();
    let abs_tol = rel_tol * coarse.abs().max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    for i in 0..pieces {
        total += refine(f, xs[i], xs[i + 1], fs[i], fs[i + 1], abs_tol / pieces as f64, 0);
    }
    total
}

fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = 0.5 * (fa + fb) * (b - a);
    let halves = 0.25 * (fa + 2.0 * fm + fb) * (b - a);
    // Richardson: the halves carry a quarter of the coarse error
    if (whole - halves).abs() <= 3.0 * tol || depth >= 48 {
        halves + (halves - whole) / 3.0
    } else {
        refine(f, a, m, fa, fm, tol / 2.0, depth + 1) + refine(f, m, b, fm, fb, tol / 2.0, depth + 1)
    }
}

fn energy(v: &EdgePotential, eta: f64) -> f64 {
    v.eval(eta).to_f64()
}

/// Point beyond which `V(η) - base` exceeds `-ln QUAD_FLOOR`, searching from `from`
/// in direction `dir`; clipped to the support.
fn cutoff(v: &EdgePotential, from: f64, base: f64, dir: f64) -> Result<f64> {
    let (lo, hi) = v.support();
    let bound = if dir < 0.0 { lo } else { hi };
    let limit = -QUAD_FLOOR.ln();
    let mut step = 1.0;
    loop {
        let x = from + dir * step;
        if (dir < 0.0 && x <= bound) || (dir > 0.0 && x >= bound) {
            return Ok(bound);
        }
        if energy(v, x) - base > limit {
            return Ok(x);
        }
        step *= 2.0;
        if step > 1e15 {
            return Err(Error::DivergentNormalizer("e^{-V} does not decay".into()));
        }
    }
}

/// `log ∫_η^{∞} e^{-V}` (`upper`) or `log ∫_{-∞}^η e^{-V}`, computed relative to `V(η)`.
fn log_tail(v: &EdgePotential, eta: f64, upper: bool) -> Result<f64> {
    let base = energy(v, eta);
    if !base.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let dir = if upper { 1.0 } else { -1.0 };
    let end = cutoff(v, eta, base, dir)?;
    let f = |x: f64| {
        let e = energy(v, x);
        if e.is_finite() {
            (base - e).exp()
        } else {
            0.0
        }
    };
    let (a, b) = if upper { (eta, end) } else { (end, eta) };
    let integral = adaptive_trapezoid(&f, a, b, QUAD_TOL);
    Ok(integral.ln() - base)
}

/// `log ∫ e^{-V}`, with a minimiser of `V`.
pub fn log_normalizer(v: &EdgePotential) -> Result<(f64, f64)> {
    if !v.diverges() {
        return Err(Error::DivergentNormalizer("potential does not diverge at infinity".into()));
    }
    let (lo, hi) = v.support();
    // golden-section search for the minimiser of the convex V
    let (mut a, mut b) = (lo.max(-1e6), hi.min(1e6));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if energy(v, x1) <= energy(v, x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let m = 0.5 * (a + b);
    let base = energy(v, m);
    let left = cutoff(v, m, base, -1.0)?;
    let right = cutoff(v, m, base, 1.0)?;
    let f = |x: f64| {
        let e = energy(v, x);
        if e.is_finite() {
            (base - e).exp()
        } else {
            0.0
        }
    };
    let z = adaptive_trapezoid(&f, left, m, QUAD_TOL) + adaptive_trapezoid(&f, m, right, QUAD_TOL);
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::DivergentNormalizer(format!("quadrature gave {z}")));
    }
    Ok((z.ln() - base, m))
}

/// Evenly spaced grid `lo, ..., hi` with `points` entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn nodes(&self) -> Vec<f64> {
        let k = self.points.max(2) - 1;
        (0..=k).map(|i| self.lo + (self.hi - self.lo) * i as f64 / k as f64).collect()
    }
}

/// Tabulated `V̄` on a grid, linear in between.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WedgePotential {
    #[serde(skip)]
    pub base: EdgePotential,
    pub grid: Vec<f64>,
    /// `F(η)` at the grid.
    pub cdf: Vec<f64>,
    /// `V̄(η)` at the grid (`+∞` where `F ∈ {0, 1}`).
    pub values: Vec<f64>,
    pub log_z: f64,
}

impl WedgePotential {
    pub fn eval(&self, eta: f64) -> Energy {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if eta < lo || eta > hi {
            return Energy::Infinite;
        }
        let i = self.grid.partition_point(|&g| g <= eta).clamp(1, self.grid.len() - 1);
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let t = (eta - x0) / (x1 - x0);
        Energy::from_f64(self.values[i - 1] + t * (self.values[i] - self.values[i - 1]))
    }

    /// Minimum of `V̄ − V` over the grid; at least `-log 2`.
    pub fn min_excess(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&x, &vb)| vb - energy(&self.base, x))
            .filter(|d| d.is_finite())
            .fold(f64::INFINITY, f64::min)
    }

    /// Discrete second differences on the (uniform) grid are at least `-tol`.
    pub fn is_convex_on_grid(&self, tol: f64) -> bool {
        self.values.windows(3).all(|w| !w.iter().all(|v| v.is_finite()) || w[0] + w[2] - 2.0 * w[1] >= -tol)
    }

    pub fn is_symmetric_on_grid(&self, tol: f64) -> bool {
        let n = self.values.len();
        (0..n).all(|i| {
            let (a, b) = (self.values[i], self.values[n - 1 - i]);
            (a == b) || (a - b).abs() <= tol * (1.0 + a.abs())
        })
    }
}

/// Wedge-normalise `v` on the grid. `F` and `1 − F` are both computed as tail
/// integrals so the far tails keep full relative precision.
pub fn wedge_normalize(v: &EdgePotential, grid: GridSpec) -> Result<WedgePotential> {
    let (log_z, median_guess) = log_normalizer(v)?;
    let nodes = grid.nodes();
    let mut cdf = Vec::with_capacity(nodes.len());
    let mut values = Vec::with_capacity(nodes.len());
    for &x in &nodes {
        let ve = energy(v, x);
        if !ve.is_finite() {
            cdf.push(if x < median_guess { 0.0 } else { 1.0 });
            values.push(f64::INFINITY);
            continue;
        }
        let lower = log_tail(v, x, false)? - log_z;
        let upper = log_tail(v, x, true)? - log_z;
        cdf.push(lower.exp());
        // g(F) = 4 min(F, 1 − F)
        let log_min = lower.min(upper);
        values.push(ve - (4f64.ln() + log_min));
    }
    Ok(WedgePotential { base: v.clone(), grid: nodes, cdf, values, log_z })
}
