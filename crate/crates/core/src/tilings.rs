//! Domino tilings as height functions of the domino potential.
//!
//! Square `(i, j)` is the unit square with lower-left corner `(i, j)`. Heights live on
//! the square corners; `ψ = 4φ + ε` changes by `±1` along a side no domino crosses and
//! by `∓3` along a side a domino crosses.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

use crate::config::HeightConfig;
use crate::error::{Error, Result};
use crate::feasibility;
use crate::lattice::{parse_dims, Dir, Graph, Site};
use crate::potential::{epsilon, PeriodicPotential};
use crate::rng::RngStream;
use crate::sampler::{cftp_sample, CftpOptions};

/// Largest region handled by exhaustive search.
pub const BRUTE_FORCE_LIMIT: usize = 36;

/// A finite set of unit squares.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SquareRegion {
    squares: BTreeSet<Site>,
}

impl SquareRegion {
    pub fn new(squares: impl IntoIterator<Item = Site>) -> SquareRegion {
        SquareRegion { squares: squares.into_iter().collect() }
    }

    /// `w × h` squares with lower-left corner at the origin.
    pub fn rectangle(w: usize, h: usize) -> SquareRegion {
        SquareRegion::new((0..w as i64).flat_map(|x| (0..h as i64).map(move |y| Site::new(x, y))))
    }

    /// Parse `"WxH"`.
    pub fn parse(text: &str) -> Result<SquareRegion> {
        let (w, h) = parse_dims(text)?;
        Ok(SquareRegion::rectangle(w, h))
    }

    /// Parse a picture: `#` marks a square, any other character a gap, the last
    /// line is row `y = 0`.
    pub fn from_ascii(text: &str) -> Result<SquareRegion> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let h = lines.len() as i64;
        let squares: BTreeSet<Site> = lines
            .iter()
            .enumerate()
            .flat_map(|(row, l)| {
                l.chars().enumerate().filter(|&(_, c)| c == '#').map(move |(x, _)| Site::new(x as i64, h - 1 - row as i64))
            })
            .collect();
        if squares.is_empty() {
            return Err(Error::ConfigParse("region picture has no `#` squares".into()));
        }
        Ok(SquareRegion { squares })
    }

    pub fn squares(&self) -> &BTreeSet<Site> {
        &self.squares
    }

    pub fn len(&self) -> usize {
        self.squares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squares.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.squares.contains(&s)
    }

    pub fn translated(&self, dx: i64, dy: i64) -> SquareRegion {
        SquareRegion::new(self.squares.iter().map(|s| s.offset(dx, dy)))
    }

    /// Squares with even / odd `i + j`.
    pub fn colour_counts(&self) -> (usize, usize) {
        let even = self.squares.iter().filter(|s| (s.x + s.y).rem_euclid(2) == 0).count();
        (even, self.len() - even)
    }

    /// Connected with connected complement (squares adjacent through sides).
    pub fn is_simply_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let adj = |s: Site| [s.offset(1, 0), s.offset(-1, 0), s.offset(0, 1), s.offset(0, -1)];
        let first = *self.squares.iter().next().unwrap();
        let mut seen = BTreeSet::from([first]);
        let mut queue = vec![first];
        while let Some(s) = queue.pop() {
            for t in adj(s) {
                if self.contains(t) && seen.insert(t) {
                    queue.push(t);
                }
            }
        }
        if seen.len() != self.len() {
            return false;
        }
        // no holes: the complement within a one-square margin is connected
        let xs = self.squares.iter().map(|s| s.x);
        let ys = self.squares.iter().map(|s| s.y);
        let (x0, x1) = (xs.clone().min().unwrap() - 1, xs.max().unwrap() + 1);
        let (y0, y1) = (ys.clone().min().unwrap() - 1, ys.max().unwrap() + 1);
        let inside = |s: Site| s.x >= x0 && s.x <= x1 && s.y >= y0 && s.y <= y1;
        let total = ((x1 - x0 + 1) * (y1 - y0 + 1)) as usize - self.len();
        let start = Site::new(x0, y0);
        let mut seen = BTreeSet::from([start]);
        let mut queue = vec![start];
        while let Some(s) = queue.pop() {
            for t in adj(s) {
                if inside(t) && !self.contains(t) && seen.insert(t) {
                    queue.push(t);
                }
            }
        }
        seen.len() == total
    }

    /// Corners of the squares, with every square side as an edge.
    pub fn vertex_graph(&self) -> Graph {
        let mut sites = BTreeSet::new();
        let mut sides = BTreeSet::new();
        for s in &self.squares {
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                sites.insert(s.offset(dx, dy));
            }
            sides.insert((*s, Dir::E1));
            sides.insert((s.offset(0, 1), Dir::E1));
            sides.insert((*s, Dir::E2));
            sides.insert((s.offset(1, 0), Dir::E2));
        }
        Graph::with_edges(sites, sides).expect("sides join corners")
    }

    /// The two squares (if present) on either side of the side `(tail, dir)`.
    fn squares_of_side(&self, tail: Site, dir: Dir) -> [Option<Site>; 2] {
        let (a, b) = match dir {
            Dir::E1 => (tail.offset(0, -1), tail),
            Dir::E2 => (tail.offset(-1, 0), tail),
        };
        [self.contains(a).then_some(a), self.contains(b).then_some(b)]
    }

    /// Vertices on at least one side bordering a single square.
    pub fn boundary_vertices(&self, graph: &Graph) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for edge in graph.edges() {
            let tail = graph.site(edge.tail);
            if self.squares_of_side(tail, edge.dir).iter().flatten().count() == 1 {
                out.insert(edge.tail);
                out.insert(edge.head);
            }
        }
        out
    }
}

/// A perfect matching of the squares of a region; each domino is stored with its
/// lexicographically smaller square first, and dominoes are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DominoMatching {
    region: SquareRegion,
    dominoes: Vec<(Site, Site)>,
}

fn adjacent(a: Site, b: Site) -> bool {
    (a.x - b.x).abs() + (a.y - b.y).abs() == 1
}

impl DominoMatching {
    pub fn new(region: SquareRegion, dominoes: impl IntoIterator<Item = (Site, Site)>) -> Result<DominoMatching> {
        let mut ds: Vec<(Site, Site)> = dominoes.into_iter().map(|(a, b)| if a < b { (a, b) } else { (b, a) }).collect();
        ds.sort();
        let mut covered = BTreeSet::new();
        for &(a, b) in &ds {
            if !adjacent(a, b) || !region.contains(a) || !region.contains(b) {
                return Err(Error::InvalidArgument(format!("domino {a}-{b} is not inside the region")));
            }
            if !covered.insert(a) || !covered.insert(b) {
                return Err(Error::InvalidArgument(format!("domino {a}-{b} overlaps another")));
            }
        }
        if covered.len() != region.len() {
            return Err(Error::InvalidArgument("matching does not cover the region".into()));
        }
        Ok(DominoMatching { region, dominoes: ds })
    }

    pub fn region(&self) -> &SquareRegion {
        &self.region
    }

    pub fn dominoes(&self) -> &[(Site, Site)] {
        &self.dominoes
    }

    fn partner_map(&self) -> BTreeMap<Site, Site> {
        self.dominoes.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
    }

    /// Rows `x1,y1,x2,y2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,y1,x2,y2\n");
        for (a, b) in &self.dominoes {
            let _ = writeln!(out, "{},{},{},{}", a.x, a.y, b.x, b.y);
        }
        out
    }
}

/// Change of `ψ` from `tail` to `head` across a side, given whether it is crossed.
fn psi_step(tail: Site, head: Site, crossed: bool) -> i64 {
    let d = (epsilon(head) - epsilon(tail)).rem_euclid(4);
    match (d, crossed) {
        (1, false) => 1,
        (1, true) => -3,
        (3, false) => -1,
        (3, true) => 3,
        _ => unreachable!("neighbouring corners differ in ε by an odd amount"),
    }
}

/// Heights of a tiling, with `φ = 0` at the lexicographically smallest corner.
pub fn matching_to_height(m: &DominoMatching) -> Result<HeightConfig<i64>> {
    let graph = Arc::new(m.region.vertex_graph());
    let partner = m.partner_map();
    let crossed = |tail: Site, dir: Dir| match m.region.squares_of_side(tail, dir) {
        [Some(a), Some(b)] => partner.get(&a) == Some(&b),
        _ => false,
    };
    let n = graph.len();
    let mut psi: Vec<Option<i64>> = vec![None; n];
    if n == 0 {
        return HeightConfig::new(graph, Vec::new());
    }
    psi[0] = Some(epsilon(graph.site(0)));
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        let pv = psi[v].unwrap();
        for &e in graph.incident(v) {
            let edge = graph.edge(e);
            let (ts, hs) = (graph.site(edge.tail), graph.site(edge.head));
            let step = psi_step(ts, hs, crossed(ts, edge.dir));
            let (w, pw) = if edge.tail == v { (edge.head, pv + step) } else { (edge.tail, pv - step) };
            match psi[w] {
                None => {
                    psi[w] = Some(pw);
                    queue.push_back(w);
                }
                Some(existing) if existing != pw => return Err(Error::InconsistentCycle(graph.site(w))),
                _ => {}
            }
        }
    }
    let values = psi
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let p = p.ok_or(Error::InconsistentCycle(graph.site(v)))?;
            Ok((p - epsilon(graph.site(v))) / 4)
        })
        .collect::<Result<Vec<i64>>>()?;
    HeightConfig::new(graph, values)
}

/// The tiling whose height function is `phi` (given on the region's vertex graph).
pub fn height_to_matching(region: &SquareRegion, phi: &HeightConfig<i64>) -> Result<DominoMatching> {
    let graph = phi.graph();
    let mut dominoes = Vec::new();
    for edge in graph.edges() {
        let (ts, hs) = (graph.site(edge.tail), graph.site(edge.head));
        let dpsi = 4 * (phi.get(edge.head) - phi.get(edge.tail)) + epsilon(hs) - epsilon(ts);
        let squares = region.squares_of_side(ts, edge.dir);
        match dpsi.abs() {
            1 => {}
            3 => match squares {
                [Some(a), Some(b)] => dominoes.push((a, b)),
                _ => return Err(Error::NotAHeightFunction(format!("boundary side {ts}-{hs} is crossed"))),
            },
            k => return Err(Error::NotAHeightFunction(format!("ψ changes by {k} along {ts}-{hs}"))),
        }
    }
    DominoMatching::new(region.clone(), dominoes).map_err(|e| Error::NotAHeightFunction(e.to_string()))
}

fn square_index(region: &SquareRegion) -> (Vec<Site>, BTreeMap<Site, usize>) {
    let list: Vec<Site> = region.squares.iter().copied().collect();
    let idx = list.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    (list, idx)
}

/// Visit every tiling by backtracking; the first uncovered square in lexicographic
/// order is always paired with its upper or right neighbour.
fn backtrack(region: &SquareRegion, mut visit: impl FnMut(&[(usize, usize)])) -> Result<()> {
    if region.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::RegionTooLarge(region.len(), BRUTE_FORCE_LIMIT));
    }
    if region.len() % 2 == 1 {
        return Ok(());
    }
    let (list, idx) = square_index(region);
    let partners: Vec<[Option<usize>; 2]> = list
        .iter()
        .map(|s| [idx.get(&s.offset(0, 1)).copied(), idx.get(&s.offset(1, 0)).copied()])
        .collect();
    fn go(
        partners: &[[Option<usize>; 2]],
        full: u64,
        filled: u64,
        stack: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if filled == full {
            visit(stack);
            return;
        }
        let i = (!filled).trailing_zeros() as usize;
        for p in partners[i].iter().flatten() {
            if filled & (1 << p) == 0 {
                stack.push((i, *p));
                go(partners, full, filled | (1 << i) | (1 << p), stack, visit);
                stack.pop();
            }
        }
    }
    let full = if list.len() == 64 { u64::MAX } else { (1u64 << list.len()) - 1 };
    let mut stack = Vec::new();
    go(&partners, full, 0, &mut stack, &mut |s| visit(s));
    Ok(())
}

pub fn count_tilings_bruteforce(region: &SquareRegion) -> Result<u64> {
    let mut count = 0;
    backtrack(region, |_| count += 1)?;
    Ok(count)
}

pub fn enumerate_tilings(region: &SquareRegion) -> Result<Vec<DominoMatching>> {
    let (list, _) = square_index(region);
    let mut out = Vec::new();
    backtrack(region, |pairs| {
        let ds = pairs.iter().map(|&(a, b)| (list[a], list[b]));
        out.push(DominoMatching::new(region.clone(), ds).expect("backtracking yields matchings"));
    })?;
    Ok(out)
}

/// Determinant by fraction-free (Bareiss) elimination.
pub fn bareiss_determinant(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&r| !m[r][k].is_zero()) else {
                return BigInt::zero();
            };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

/// `|det K|` for the Kasteleyn matrix with horizontal weight 1 and vertical weight
/// `(-1)^x`; every inner face then has sign product −1.
pub fn count_tilings_kasteleyn(region: &SquareRegion) -> BigUint {
    let (even, odd): (Vec<Site>, Vec<Site>) = region.squares.iter().partition(|s| (s.x + s.y).rem_euclid(2) == 0);
    if even.len() != odd.len() {
        return BigUint::zero();
    }
    let col: BTreeMap<Site, usize> = odd.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let n = even.len();
    let mut m = vec![vec![BigInt::zero(); n]; n];
    for (r, b) in even.iter().enumerate() {
        for (w, vertical) in [(b.offset(1, 0), false), (b.offset(-1, 0), false), (b.offset(0, 1), true), (b.offset(0, -1), true)] {
            if let Some(&c) = col.get(&w) {
                let x = b.x.min(w.x);
                m[r][c] = if vertical && x.rem_euclid(2) == 1 { BigInt::from(-1) } else { BigInt::one() };
            }
        }
    }
    bareiss_determinant(m).abs().to_biguint().expect("absolute value")
}

/// Heights on the boundary corners, which are the same for every tiling.
pub fn boundary_heights(region: &SquareRegion, graph: &Graph) -> Result<BTreeMap<usize, i64>> {
    let bverts = region.boundary_vertices(graph);
    let mut psi: BTreeMap<usize, i64> = BTreeMap::new();
    for &start in &bverts {
        if psi.contains_key(&start) {
            continue;
        }
        psi.insert(start, epsilon(graph.site(start)));
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let pv = psi[&v];
            for &e in graph.incident(v) {
                let edge = graph.edge(e);
                let ts = graph.site(edge.tail);
                if region.squares_of_side(ts, edge.dir).iter().flatten().count() != 1 {
                    continue;
                }
                let step = psi_step(ts, graph.site(edge.head), false);
                let (w, pw) = if edge.tail == v { (edge.head, pv + step) } else { (edge.tail, pv - step) };
                match psi.get(&w) {
                    None => {
                        psi.insert(w, pw);
                        queue.push_back(w);
                    }
                    Some(&p) if p != pw => return Err(Error::Untileable),
                    _ => {}
                }
            }
        }
        // one boundary loop per simply connected region
        if psi.len() != bverts.len() {
            return Err(Error::InvalidArgument("region boundary is not a single closed curve".into()));
        }
    }
    Ok(psi.into_iter().map(|(v, p)| (v, (p - epsilon(graph.site(v))) / 4)).collect())
}

/// Exactly uniform tiling by coupling from the past on heights.
pub fn uniform_tiling_sample(region: &SquareRegion, rng: &RngStream) -> Result<DominoMatching> {
    let (even, odd) = region.colour_counts();
    if region.is_empty() || even != odd {
        return Err(Error::Untileable);
    }
    let graph = Arc::new(region.vertex_graph());
    let boundary = boundary_heights(region, &graph)?;
    let pot = PeriodicPotential::domino();
    let out = match cftp_sample(&pot, &graph, &boundary, rng, CftpOptions::default()) {
        Ok(o) => o,
        Err(Error::Infeasible { .. }) | Err(Error::NegativeCycle { .. }) | Err(Error::EmptySupport(_)) => {
            return Err(Error::Untileable)
        }
        Err(e) => return Err(e),
    };
    height_to_matching(region, &out.config)
}

/// Whether `region` has at least one tiling, decided by feasibility of the boundary.
pub fn is_tileable(region: &SquareRegion) -> Result<bool> {
    let (even, odd) = region.colour_counts();
    if even != odd {
        return Ok(false);
    }
    if region.is_empty() {
        return Ok(true);
    }
    let graph = Arc::new(region.vertex_graph());
    let boundary = match boundary_heights(region, &graph) {
        Ok(b) => b,
        Err(Error::Untileable) => return Ok(false),
        Err(e) => return Err(e),
    };
    match feasibility::extend_boundary::<i64>(&PeriodicPotential::domino(), &graph, &boundary) {
        Ok(_) => Ok(true),
        Err(Error::Infeasible { .. }) | Err(Error::NegativeCycle { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// One loop of the symmetric difference of two tilings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DifferenceCycle {
    /// Squares in cyclic order, alternating dominoes of the first and second tiling,
    /// starting at the smallest square with its first-tiling partner next.
    pub squares: Vec<Site>,
    /// Corner vertices (indices into the vertex graph) enclosed by the loop.
    pub interior: Vec<usize>,
    /// `φ₂ − φ₁` just inside minus just outside: `±1`.
    pub sign: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricDifference {
    /// `φ₂ − φ₁` on the vertex graph.
    pub difference: HeightConfig<i64>,
    pub cycles: Vec<DifferenceCycle>,
}

/// Ray casting from the corner `v` along `+e₁` against the polygon through the
/// centres of `squares`.
fn encloses(squares: &[Site], v: Site) -> bool {
    let mut inside = false;
    for k in 0..squares.len() {
        let (a, b) = (squares[k], squares[(k + 1) % squares.len()]);
        // vertical segment at x = a.x + 1/2 from a.y + 1/2 to b.y + 1/2
        if a.x == b.x && a.x >= v.x && v.y > a.y.min(b.y) && v.y <= a.y.max(b.y) {
            inside = !inside;
        }
    }
    inside
}

pub fn symmetric_difference_cycles(t1: &DominoMatching, t2: &DominoMatching) -> Result<SymmetricDifference> {
    if t1.region != t2.region {
        return Err(Error::InvalidArgument("tilings of different regions".into()));
    }
    let h1 = matching_to_height(t1)?;
    let h2 = matching_to_height(t2)?;
    let graph = h1.graph_arc().clone();
    let diff: Vec<i64> = (0..graph.len()).map(|v| h2.get(v) - h1.get(v)).collect();
    let difference = HeightConfig::new(graph.clone(), diff)?;
    let (p1, p2) = (t1.partner_map(), t2.partner_map());
    let mut seen = BTreeSet::new();
    let mut cycles = Vec::new();
    for &s in t1.region.squares() {
        if seen.contains(&s) || p1[&s] == p2[&s] {
            continue;
        }
        let mut loop_squares = vec![s];
        seen.insert(s);
        let mut cur = s;
        let mut use_first = true;
        loop {
            let next = if use_first { p1[&cur] } else { p2[&cur] };
            use_first = !use_first;
            if next == s {
                break;
            }
            seen.insert(next);
            loop_squares.push(next);
            cur = next;
        }
        let interior: Vec<usize> = (0..graph.len()).filter(|&v| encloses(&loop_squares, graph.site(v))).collect();
        // the side shared by the first two squares has one endpoint on each side
        let (a, b) = (loop_squares[0], loop_squares[1]);
        let (c1, c2) = if a.x == b.x {
            let y = a.y.max(b.y);
            (Site::new(a.x, y), Site::new(a.x + 1, y))
        } else {
            let x = a.x.max(b.x);
            (Site::new(x, a.y), Site::new(x, a.y + 1))
        };
        let (i1, i2) = (graph.index_of(c1).unwrap(), graph.index_of(c2).unwrap());
        let (inner, outer) = if interior.contains(&i1) { (i1, i2) } else { (i2, i1) };
        let sign = difference.get(inner) - difference.get(outer);
        cycles.push(DifferenceCycle { squares: loop_squares, interior, sign });
    }
    Ok(SymmetricDifference { difference, cycles })
}

/// Exchange the dominoes of the two tilings along the selected cycles.
pub fn swap_cycles(
    t1: &DominoMatching,
    t2: &DominoMatching,
    cycles: &[DifferenceCycle],
) -> Result<(DominoMatching, DominoMatching)> {
    let on_cycle: BTreeSet<Site> = cycles.iter().flat_map(|c| c.squares.iter().copied()).collect();
    let keep = |m: &DominoMatching| m.dominoes.iter().copied().filter(|(a, _)| !on_cycle.contains(a)).collect::<Vec<_>>();
    let moved = |m: &DominoMatching| m.dominoes.iter().copied().filter(|(a, _)| on_cycle.contains(a)).collect::<Vec<_>>();
    let mut n1 = keep(t1);
    n1.extend(moved(t2));
    let mut n2 = keep(t2);
    n2.extend(moved(t1));
    Ok((DominoMatching::new(t1.region.clone(), n1)?, DominoMatching::new(t2.region.clone(), n2)?))
}
