//! Height configurations on regions and tori.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Graph, GraphKind, Site};
use crate::potential::ValueDomain;

/// Scalar type of heights: `i64` for the discrete domain, `f64` for the continuous one.
pub trait Height: Copy + PartialEq + PartialOrd + Debug + Default + Send + Sync + 'static {
    const DOMAIN: ValueDomain;

    fn to_f64(self) -> f64;

    /// Convert from a float; discrete heights require an integral value.
    fn from_f64(v: f64) -> Self;
}

impl Height for i64 {
    const DOMAIN: ValueDomain = ValueDomain::DiscreteInteger;

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f64(v: f64) -> Self {
        debug_assert!(v.fract() == 0.0, "non-integral discrete height {v}");
        v as i64
    }
}

impl Height for f64 {
    const DOMAIN: ValueDomain = ValueDomain::ContinuousReal;

    fn to_f64(self) -> f64 {
        self
    }

    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Fixed heights on a subset of vertices (keyed by vertex index).
pub type Boundary<H> = BTreeMap<usize, H>;

/// Heights on every vertex of a graph. On a torus the stored values are one period
/// of the lifted height, which satisfies `φ(x + n e_i) = φ(x) + offsets[i]`; the
/// reference vertex (the first one) is pinned at 0 there.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightConfig<H> {
    graph: Arc<Graph>,
    values: Vec<H>,
}

impl<H: Height> HeightConfig<H> {
    pub fn new(graph: Arc<Graph>, values: Vec<H>) -> Result<Self> {
        if values.len() != graph.len() {
            return Err(Error::InvalidArgument(format!(
                "{} heights for {} vertices",
                values.len(),
                graph.len()
            )));
        }
        Ok(HeightConfig { graph, values })
    }

    pub fn constant(graph: Arc<Graph>, h: H) -> Self {
        let n = graph.len();
        HeightConfig { graph, values: vec![h; n] }
    }

    pub fn from_fn(graph: Arc<Graph>, f: impl Fn(Site) -> H) -> Self {
        let values = graph.sites().iter().map(|&s| f(s)).collect();
        HeightConfig { graph, values }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn values(&self) -> &[H] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [H] {
        &mut self.values
    }

    pub fn get(&self, v: usize) -> H {
        self.values[v]
    }

    pub fn set(&mut self, v: usize, h: H) {
        self.values[v] = h;
    }

    /// Height at a site of the graph (torus sites are reduced, without lifting).
    pub fn at(&self, s: Site) -> Result<H> {
        self.graph.index_of(s).map(|v| self.values[v]).ok_or(Error::MissingHeight(s))
    }

    /// Reference vertex used for pinning: the lexicographically smallest site.
    pub fn reference(&self) -> usize {
        0
    }

    /// Increment across edge `e`, `φ(head) - φ(tail) + shift`.
    pub fn increment(&self, e: usize) -> f64 {
        let edge = self.graph.edge(e);
        self.values[edge.head].to_f64() - self.values[edge.tail].to_f64() + edge.shift
    }

    /// Lifted height at any site of ℤ² for a torus, or the stored height on a region.
    pub fn lifted(&self, s: Site) -> Option<f64> {
        match self.graph.kind() {
            GraphKind::Region => self.graph.index_of(s).map(|v| self.values[v].to_f64()),
            GraphKind::Torus { n, offsets } => {
                let n = *n as i64;
                let (qx, qy) = (s.x.div_euclid(n), s.y.div_euclid(n));
                let v = self.graph.index_of(s)?;
                Some(self.values[v].to_f64() + qx as f64 * offsets[0] + qy as f64 * offsets[1])
            }
        }
    }

    /// On a torus, the total increment along the row through the reference vertex and
    /// along its column (the two fundamental cycles).
    pub fn fundamental_cycle_sums(&self) -> Option<[f64; 2]> {
        let n = self.graph.torus_side()? as i64;
        let row: f64 = (0..n)
            .map(|x| self.lifted(Site::new(x + 1, 0)).unwrap() - self.lifted(Site::new(x, 0)).unwrap())
            .sum();
        let col: f64 = (0..n)
            .map(|y| self.lifted(Site::new(0, y + 1)).unwrap() - self.lifted(Site::new(0, y)).unwrap())
            .sum();
        Some([row, col])
    }

    pub fn le(&self, other: &Self) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }

    /// Rows `x,y,height` with a header, in vertex order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,height\n");
        for (s, h) in self.graph.sites().iter().zip(&self.values) {
            let _ = writeln!(out, "{},{},{}", s.x, s.y, h.to_f64());
        }
        out
    }
}

impl HeightConfig<f64> {
    /// Add `eps ∈ [0, 1)` to every height and round down.
    pub fn random_round_with(&self, eps: f64) -> HeightConfig<i64> {
        assert!((0.0..1.0).contains(&eps));
        let values = self.values.iter().map(|h| (h + eps).floor() as i64).collect();
        HeightConfig { graph: self.graph.clone(), values }
    }
}
