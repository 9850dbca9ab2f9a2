//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use gibbs_surfaces::{Energy, Graph, HeightConfig, PeriodicPotential, Site};

/// Every assignment of heights in `lo..=hi` to the unpinned vertices with finite
/// energy, by backtracking, with its energy summed over edges having at least one
/// unpinned endpoint.
pub fn brute_gibbs(
    pot: &PeriodicPotential,
    graph: &Arc<Graph>,
    pinned: &BTreeMap<usize, i64>,
    lo: i64,
    hi: i64,
) -> Vec<(HeightConfig<i64>, f64)> {
    let free: Vec<usize> = (0..graph.len()).filter(|v| !pinned.contains_key(v)).collect();
    let mut order = vec![usize::MAX; graph.len()];
    for (k, &v) in free.iter().enumerate() {
        order[v] = k;
    }
    // edges charged when their later free endpoint is assigned
    let mut charge: Vec<Vec<usize>> = vec![Vec::new(); free.len()];
    for (e, edge) in graph.edges().iter().enumerate() {
        let rank = |v: usize| if pinned.contains_key(&v) { None } else { Some(order[v]) };
        match (rank(edge.tail), rank(edge.head)) {
            (None, None) => {}
            (a, b) => charge[a.max(b).unwrap()].push(e),
        }
    }
    let mut values = vec![0i64; graph.len()];
    for (&v, &h) in pinned {
        values[v] = h;
    }
    let mut out = Vec::new();
    fn go(
        k: usize,
        energy: f64,
        ctx: (&PeriodicPotential, &Arc<Graph>, &[usize], &[Vec<usize>], i64, i64),
        values: &mut Vec<i64>,
        out: &mut Vec<(HeightConfig<i64>, f64)>,
    ) {
        let (pot, graph, free, charge, lo, hi) = ctx;
        if k == free.len() {
            out.push((HeightConfig::new(graph.clone(), values.clone()).unwrap(), energy));
            return;
        }
        'h: for h in lo..=hi {
            values[free[k]] = h;
            let mut e_total = energy;
            for &e in &charge[k] {
                let edge = graph.edge(e);
                let eta = (values[edge.head] - values[edge.tail]) as f64 + edge.shift;
                match pot.graph_edge_energy(graph, e, eta) {
                    Energy::Finite(x) => e_total += x,
                    Energy::Infinite => continue 'h,
                }
            }
            go(k + 1, e_total, ctx, values, out);
        }
    }
    go(0, 0.0, (pot, graph, &free, &charge, lo, hi), &mut values, &mut out);
    out
}

/// Normalised Boltzmann weights of `brute_gibbs` output, keyed by the value vector.
pub fn gibbs_law(states: &[(HeightConfig<i64>, f64)]) -> BTreeMap<Vec<i64>, f64> {
    let m = states.iter().map(|s| -s.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = states.iter().map(|s| (-s.1 - m).exp()).sum();
    states.iter().map(|(c, e)| (c.values().to_vec(), (-e - m).exp() / z)).collect()
}

/// Shortest path weights by depth-first enumeration of simple paths.
pub fn path_distances(n: usize, arcs: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    fn go(arcs: &[(usize, usize, f64)], v: usize, w: f64, seen: &mut [bool], row: &mut [f64]) {
        row[v] = row[v].min(w);
        for &(a, b, x) in arcs {
            if a == v && !seen[b] {
                seen[b] = true;
                go(arcs, b, w + x, seen, row);
                seen[b] = false;
            }
        }
    }
    (0..n)
        .map(|s| {
            let mut row = vec![f64::INFINITY; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            go(arcs, s, 0.0, &mut seen, &mut row);
            row
        })
        .collect()
}

/// All domino tilings of a set of squares, each as a sorted list of square pairs.
pub fn tilings_of(squares: &BTreeSet<(i64, i64)>) -> Vec<Vec<((i64, i64), (i64, i64))>> {
    fn go(left: &mut BTreeSet<(i64, i64)>, acc: &mut Vec<((i64, i64), (i64, i64))>, out: &mut Vec<Vec<((i64, i64), (i64, i64))>>) {
        let Some(&first) = left.iter().next() else {
            let mut t = acc.clone();
            t.sort();
            out.push(t);
            return;
        };
        left.remove(&first);
        for other in [(first.0 + 1, first.1), (first.0, first.1 + 1)] {
            if left.remove(&other) {
                acc.push((first, other));
                go(left, acc, out);
                acc.pop();
                left.insert(other);
            }
        }
        left.insert(first);
    }
    let mut out = Vec::new();
    go(&mut squares.clone(), &mut Vec::new(), &mut out);
    out
}

/// Tilings of a `w × h` rectangle by a column profile recursion.
pub fn rectangle_count(w: usize, h: usize) -> u128 {
    // state: bitmask of cells in the current column already covered from the left
    let mut ways = vec![0u128; 1 << h];
    ways[0] = 1;
    for _ in 0..w {
        let mut next = vec![0u128; 1 << h];
        for (mask, &count) in ways.iter().enumerate() {
            if count == 0 {
                continue;
            }
            fill(h, mask, 0, 0, count, &mut next);
        }
        ways = next;
    }
    fn fill(h: usize, mask: usize, row: usize, out_mask: usize, count: u128, next: &mut [u128]) {
        if row == h {
            next[out_mask] += count;
            return;
        }
        if mask & (1 << row) != 0 {
            fill(h, mask, row + 1, out_mask, count, next);
            return;
        }
        // horizontal domino sticking into the next column
        fill(h, mask, row + 1, out_mask | (1 << row), count, next);
        // vertical domino within this column
        if row + 1 < h && mask & (1 << (row + 1)) == 0 {
            fill(h, mask, row + 2, out_mask, count, next);
        }
    }
    ways[0]
}

/// Every polyomino with at most `max` squares up to translation, each normalised so its
/// minimum coordinates are zero.
pub fn polyominoes(max: usize) -> Vec<BTreeSet<(i64, i64)>> {
    let mut seen: BTreeSet<Vec<(i64, i64)>> = BTreeSet::new();
    let mut layer: Vec<BTreeSet<(i64, i64)>> = vec![BTreeSet::from([(0, 0)])];
    let mut all = layer.clone();
    for _ in 1..max {
        let mut next = Vec::new();
        for p in &layer {
            for &(x, y) in p {
                for n in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                    if p.contains(&n) {
                        continue;
                    }
                    let mut q = p.clone();
                    q.insert(n);
                    let q = normalise(&q);
                    let key: Vec<(i64, i64)> = q.iter().copied().collect();
                    if seen.insert(key) {
                        next.push(q);
                    }
                }
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
    }
    all
}

pub fn normalise(p: &BTreeSet<(i64, i64)>) -> BTreeSet<(i64, i64)> {
    let mx = p.iter().map(|s| s.0).min().unwrap();
    let my = p.iter().map(|s| s.1).min().unwrap();
    p.iter().map(|&(x, y)| (x - mx, y - my)).collect()
}

/// No holes: every cell of the complement inside the padded bounding box reaches the
/// outside through the complement.
pub fn hole_free(p: &BTreeSet<(i64, i64)>) -> bool {
    let (x0, x1) = (p.iter().map(|s| s.0).min().unwrap() - 1, p.iter().map(|s| s.0).max().unwrap() + 1);
    let (y0, y1) = (p.iter().map(|s| s.1).min().unwrap() - 1, p.iter().map(|s| s.1).max().unwrap() + 1);
    let mut reach = BTreeSet::from([(x0, y0)]);
    let mut stack = vec![(x0, y0)];
    while let Some((x, y)) = stack.pop() {
        for n in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if n.0 < x0 || n.0 > x1 || n.1 < y0 || n.1 > y1 || p.contains(&n) {
                continue;
            }
            if reach.insert(n) {
                stack.push(n);
            }
        }
    }
    let cells = ((x1 - x0 + 1) * (y1 - y0 + 1)) as usize;
    reach.len() + p.len() == cells
}

pub fn to_sites(p: &BTreeSet<(i64, i64)>) -> Vec<Site> {
    p.iter().map(|&(x, y)| Site::new(x, y)).collect()
}

/// Pearson χ² p-value, pooling the least likely cells until each pooled cell
/// expects at least five counts.
pub fn chi2_p(observed: &[u64], expected_prob: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let mut idx: Vec<usize> = (0..observed.len()).collect();
    idx.sort_by(|&a, &b| expected_prob[a].total_cmp(&expected_prob[b]));
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for i in idx {
        o += observed[i] as f64;
        e += expected_prob[i] * n as f64;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    statrs::function::gamma::gamma_ur((cells.len() - 1) as f64 / 2.0, stat / 2.0)
}

/// Dyadic bounds `lo/2^B ≤ e^{-1} ≤ hi/2^B` from alternating partial sums of the
/// series, rounded outward.
pub const INV_E_BITS: u32 = 96;

pub fn inv_e_bounds() -> (BigInt, BigInt) {
    let mut sum = BigRational::zero();
    let mut term = BigRational::one();
    let mut partial = Vec::new();
    for k in 0..34u32 {
        if k > 0 {
            term = term / BigRational::from_integer(BigInt::from(k));
        }
        if k % 2 == 0 {
            sum += &term;
        } else {
            sum -= &term;
        }
        partial.push(sum.clone());
    }
    let (a, b) = (partial[32].clone(), partial[33].clone());
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let scale = BigRational::from_integer(BigInt::one() << INV_E_BITS);
    ((lo * &scale).floor().to_integer(), (hi * &scale).ceil().to_integer())
}

/// Certified signs of integer polynomials at `q = e^{-1}`, by interval evaluation
/// with integer powers of the dyadic bounds scaled to a common denominator.
pub struct InvESign {
    degree: usize,
    lo: Vec<BigInt>,
    hi: Vec<BigInt>,
}

impl InvESign {
    pub fn new(degree: usize) -> InvESign {
        let (l, h) = inv_e_bounds();
        let mut lo = Vec::with_capacity(degree + 1);
        let mut hi = Vec::with_capacity(degree + 1);
        let (mut pl, mut ph) = (BigInt::one(), BigInt::one());
        for k in 0..=degree {
            let pad = INV_E_BITS as usize * (degree - k);
            lo.push(&pl << pad);
            hi.push(&ph << pad);
            pl *= &l;
            ph *= &h;
        }
        InvESign { degree, lo, hi }
    }

    /// `Some(0)` only when every coefficient vanishes; `None` when the interval
    /// straddles zero.
    pub fn sign(&self, coeffs: &BTreeMap<i64, BigInt>) -> Option<i8> {
        if coeffs.values().all(|c| c.is_zero()) {
            return Some(0);
        }
        let (mut min, mut max) = (BigInt::zero(), BigInt::zero());
        for (&k, c) in coeffs {
            assert!(k >= 0 && k as usize <= self.degree, "degree {k} beyond {}", self.degree);
            let (a, b) = (c * &self.lo[k as usize], c * &self.hi[k as usize]);
            if a < b {
                min += a;
                max += b;
            } else {
                min += b;
                max += a;
            }
        }
        if min > BigInt::zero() {
            Some(1)
        } else if max < BigInt::zero() {
            Some(-1)
        } else {
            None
        }
    }
}

/// Vertices at lattice distance one from `sites` but outside it.
pub fn ring(sites: &BTreeSet<(i64, i64)>) -> BTreeSet<(i64, i64)> {
    let mut out = BTreeSet::new();
    for &(x, y) in sites {
        for n in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if !sites.contains(&n) {
                out.insert(n);
            }
        }
    }
    out
}
