//! Sites of ℤ², invariance lattices, and the finite graphs (regions and tori) that
//! every sampler and solver runs on.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vertex of ℤ². The derived ordering is lexicographic in `(x, y)`, so for a
/// nearest-neighbour edge `{s, s + e}` the tail `s` always precedes the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub const fn new(x: i64, y: i64) -> Site {
        Site { x, y }
    }

    pub fn step(self, dir: Dir) -> Site {
        let (dx, dy) = dir.vector();
        Site::new(self.x + dx, self.y + dy)
    }

    pub fn back(self, dir: Dir) -> Site {
        let (dx, dy) = dir.vector();
        Site::new(self.x - dx, self.y - dy)
    }

    pub fn offset(self, dx: i64, dy: i64) -> Site {
        Site::new(self.x + dx, self.y + dy)
    }

    /// The four lattice neighbours, in the order +e1, +e2, -e1, -e2.
    pub fn neighbours(self) -> [Site; 4] {
        [self.offset(1, 0), self.offset(0, 1), self.offset(-1, 0), self.offset(0, -1)]
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Unit lattice direction of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dir {
    #[serde(rename = "e1")]
    E1,
    #[serde(rename = "e2")]
    E2,
}

impl Dir {
    pub const ALL: [Dir; 2] = [Dir::E1, Dir::E2];

    pub fn vector(self) -> (i64, i64) {
        match self {
            Dir::E1 => (1, 0),
            Dir::E2 => (0, 1),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Dir::E1 => 0,
            Dir::E2 => 1,
        }
    }
}

/// A full-rank sublattice ℒ ⊂ ℤ², held in Hermite normal form with basis
/// `(a, 0)` and `(b, c)`, `a, c > 0`, `0 ≤ b < a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Period {
    a: i64,
    b: i64,
    c: i64,
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, s, t) = ext_gcd(b, a.rem_euclid(b));
        // a = q b + r  =>  g = s b + t r = t a + (s - q t) b
        let q = a.div_euclid(b);
        (g, t, s - q * t)
    }
}

impl Period {
    pub const UNIT: Period = Period { a: 1, b: 0, c: 1 };

    /// The lattice generated by the two rows of `m`.
    pub fn from_generators(m: [[i64; 2]; 2]) -> Result<Period> {
        let [[x1, y1], [x2, y2]] = m;
        let det = x1 * y2 - x2 * y1;
        if det == 0 {
            return Err(Error::InvalidArgument(format!("period matrix {m:?} is singular")));
        }
        if y1 == 0 && y2 == 0 {
            unreachable!("nonzero determinant");
        }
        let (g, s, t) = ext_gcd(y1, y2);
        let (g, s, t) = if g < 0 { (-g, -s, -t) } else { (g, s, t) };
        let wx = s * x1 + t * x2;
        let a = det.abs() / g;
        Ok(Period { a, b: wx.rem_euclid(a), c: g })
    }

    pub fn square(side: i64) -> Period {
        assert!(side > 0);
        Period { a: side, b: 0, c: side }
    }

    /// Hermite-normal-form basis rows `[[a, 0], [b, c]]`.
    pub fn basis(&self) -> [[i64; 2]; 2] {
        [[self.a, 0], [self.b, self.c]]
    }

    /// Number of residue classes, `|ℤ² / ℒ|`.
    pub fn index(&self) -> usize {
        (self.a * self.c) as usize
    }

    pub fn contains(&self, v: Site) -> bool {
        self.reduce(v) == Site::new(0, 0)
    }

    /// Canonical representative of `s + ℒ`, with `0 ≤ x < a`, `0 ≤ y < c`.
    pub fn reduce(&self, s: Site) -> Site {
        let k = s.y.div_euclid(self.c);
        let x = (s.x - k * self.b).rem_euclid(self.a);
        Site::new(x, s.y - k * self.c)
    }

    /// Dense index of the residue class of `s`, in `0..self.index()`.
    pub fn class_index(&self, s: Site) -> usize {
        let r = self.reduce(s);
        (r.y * self.a + r.x) as usize
    }

    /// All representatives in class-index order.
    pub fn representatives(&self) -> Vec<Site> {
        let mut out = Vec::with_capacity(self.index());
        for y in 0..self.c {
            for x in 0..self.a {
                out.push(Site::new(x, y));
            }
        }
        out
    }

    /// Largest lattice distance between representatives, a proxy for the diameter
    /// of the fundamental torus.
    pub fn diameter(&self) -> i64 {
        (self.a / 2 + self.c / 2).max(1)
    }
}

/// An undirected nearest-neighbour edge stored with its lexicographic orientation.
/// On a torus, `shift` is the height offset picked up when the edge wraps around,
/// so the increment across the edge is `φ(head) - φ(tail) + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub dir: Dir,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphKind {
    /// A finite subset of ℤ² with a chosen set of nearest-neighbour edges.
    Region,
    /// The `n × n` torus with lifted heights satisfying
    /// `φ(x + n e_i) = φ(x) + offsets[i]`.
    Torus { n: usize, offsets: [f64; 2] },
}

/// A finite graph embedded in ℤ². Vertices are kept in lexicographic order and
/// addressed by dense index.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    edges: Vec<Edge>,
    incident: Vec<Vec<usize>>,
    kind: GraphKind,
}

impl Graph {
    fn build(mut sites: Vec<Site>, pairs: Vec<(Site, Dir, f64)>, kind: GraphKind) -> Result<Graph> {
        sites.sort();
        sites.dedup();
        let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut edges = Vec::with_capacity(pairs.len());
        let mut incident = vec![Vec::new(); sites.len()];
        let torus_n = match kind {
            GraphKind::Torus { n, .. } => Some(n as i64),
            GraphKind::Region => None,
        };
        for (tail_site, dir, shift) in pairs {
            let mut head_site = tail_site.step(dir);
            if let Some(n) = torus_n {
                head_site = Site::new(head_site.x.rem_euclid(n), head_site.y.rem_euclid(n));
            }
            let (Some(&tail), Some(&head)) = (index.get(&tail_site), index.get(&head_site)) else {
                return Err(Error::InvalidArgument(format!(
                    "edge {tail_site} -> {head_site} leaves the vertex set"
                )));
            };
            let id = edges.len();
            edges.push(Edge { tail, head, dir, shift });
            incident[tail].push(id);
            if head != tail {
                incident[head].push(id);
            }
        }
        Ok(Graph { sites, index, edges, incident, kind })
    }

    /// Induced subgraph of ℤ² on the given sites.
    pub fn region(sites: impl IntoIterator<Item = Site>) -> Graph {
        let sites: Vec<Site> = sites.into_iter().collect();
        let set: std::collections::HashSet<Site> = sites.iter().copied().collect();
        let mut sorted: Vec<Site> = set.iter().copied().collect();
        sorted.sort();
        let mut pairs = Vec::new();
        for &s in &sorted {
            for dir in Dir::ALL {
                if set.contains(&s.step(dir)) {
                    pairs.push((s, dir, 0.0));
                }
            }
        }
        Graph::build(sorted, pairs, GraphKind::Region).expect("induced edges stay inside")
    }

    /// Sites with an explicit edge list, each edge given by its tail and direction.
    pub fn with_edges(
        sites: impl IntoIterator<Item = Site>,
        edges: impl IntoIterator<Item = (Site, Dir)>,
    ) -> Result<Graph> {
        let mut pairs: Vec<(Site, Dir, f64)> = edges.into_iter().map(|(s, d)| (s, d, 0.0)).collect();
        pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        pairs.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        Graph::build(sites.into_iter().collect(), pairs, GraphKind::Region)
    }

    /// Axis-aligned box of `w × h` vertices with lower-left corner at the origin.
    pub fn rectangle(w: usize, h: usize) -> Graph {
        Graph::region((0..w as i64).flat_map(|x| (0..h as i64).map(move |y| Site::new(x, y))))
    }

    /// A path of `len` vertices along e1, used for one-dimensional chains.
    pub fn path(len: usize) -> Graph {
        Graph::rectangle(len, 1)
    }

    /// The `n × n` torus; wrap-around edges carry the homology offsets.
    pub fn torus(n: usize, offsets: [f64; 2]) -> Graph {
        assert!(n >= 1, "torus side must be positive");
        let ni = n as i64;
        let sites: Vec<Site> = (0..ni).flat_map(|x| (0..ni).map(move |y| Site::new(x, y))).collect();
        let mut pairs = Vec::with_capacity(2 * n * n);
        for &s in &sites {
            for dir in Dir::ALL {
                let wraps = match dir {
                    Dir::E1 => s.x == ni - 1,
                    Dir::E2 => s.y == ni - 1,
                };
                let shift = if wraps { offsets[dir.index()] } else { 0.0 };
                pairs.push((s, dir, shift));
            }
        }
        Graph::build(sites, pairs, GraphKind::Torus { n, offsets }).expect("torus edges wrap")
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> Site {
        self.sites[i]
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn index_of(&self, s: Site) -> Option<usize> {
        match self.kind {
            GraphKind::Torus { n, .. } => {
                let n = n as i64;
                self.index.get(&Site::new(s.x.rem_euclid(n), s.y.rem_euclid(n))).copied()
            }
            GraphKind::Region => self.index.get(&s).copied(),
        }
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index.contains_key(&s)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Edge ids incident to vertex `v`.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    /// The other endpoint of edge `e` seen from `v`.
    pub fn other(&self, e: usize, v: usize) -> usize {
        let edge = &self.edges[e];
        if edge.tail == v {
            edge.head
        } else {
            edge.tail
        }
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    pub fn torus_side(&self) -> Option<usize> {
        match self.kind {
            GraphKind::Torus { n, .. } => Some(n),
            GraphKind::Region => None,
        }
    }

    /// Position in ℤ² of the tail of an edge, used to look up its edge class.
    pub fn edge_base(&self, e: usize) -> Site {
        self.sites[self.edges[e].tail]
    }

    /// Vertices whose four lattice neighbours are all in the graph (every vertex on a torus).
    pub fn interior(&self) -> Vec<usize> {
        if self.torus_side().is_some() {
            return (0..self.len()).collect();
        }
        (0..self.len())
            .filter(|&v| self.sites[v].neighbours().iter().all(|s| self.contains(*s)))
            .collect()
    }

    /// Checkerboard colour, `(x + y) mod 2`. On odd tori the colouring is not proper
    /// across the seam.
    pub fn parity(&self, v: usize) -> usize {
        let s = self.sites[v];
        (s.x + s.y).rem_euclid(2) as usize
    }

    /// Whether the checkerboard colouring is a proper 2-colouring of this graph.
    pub fn is_bipartite_checkerboard(&self) -> bool {
        self.edges.iter().all(|e| self.parity(e.tail) != self.parity(e.head))
    }

    /// Connected components by breadth-first search, labelled in vertex order.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.len()];
        let mut next = 0;
        for start in 0..self.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(v) = stack.pop() {
                for &e in &self.incident[v] {
                    let w = self.other(e, v);
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Parse `"WxH"` into a pair of positive sizes.
pub fn parse_dims(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("expected WxH, got {text:?}"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}
