//! Exhaustive enumeration of finite-volume Gibbs measures on small discrete systems.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::config::{Boundary, HeightConfig};
use crate::energy::{log_sum_exp, Energy};
use crate::error::{Error, Result};
use crate::feasibility;
use crate::lattice::Graph;
use crate::potential::PeriodicPotential;

/// Height range of the free vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeightWindow {
    /// Between the minimal and maximal extensions of the boundary (Lipschitz only);
    /// this covers every finite-energy configuration.
    Extensions,
    /// `lo..=hi` at every free vertex: the Gibbs measure conditioned on the window.
    Fixed(i64, i64),
}

/// All finite-energy configurations of the free vertices with their energies
/// `H_Λ` (edges with at least one free endpoint).
#[derive(Clone, Debug)]
pub struct Enumeration {
    graph: Arc<Graph>,
    boundary: Boundary<i64>,
    free: Vec<usize>,
    states: Vec<Vec<i64>>,
    energies: Vec<f64>,
    log_z: f64,
    index: HashMap<Vec<i64>, usize>,
}

impl Enumeration {
    pub fn new(
        pot: &PeriodicPotential,
        graph: Arc<Graph>,
        boundary: &Boundary<i64>,
        window: HeightWindow,
        max_states: usize,
    ) -> Result<Enumeration> {
        if !pot.is_discrete() {
            return Err(Error::InvalidArgument("enumeration needs a discrete potential".into()));
        }
        let free: Vec<usize> = (0..graph.len()).filter(|v| !boundary.contains_key(v)).collect();
        let (lo, hi): (Vec<i64>, Vec<i64>) = match window {
            HeightWindow::Extensions => {
                if boundary.is_empty() {
                    return Err(Error::InvalidArgument("extension window needs boundary heights".into()));
                }
                let top = feasibility::extend_boundary::<i64>(pot, &graph, boundary)?;
                let bottom = feasibility::extend_boundary_min::<i64>(pot, &graph, boundary)?;
                free.iter().map(|&v| (bottom.get(v), top.get(v))).unzip()
            }
            HeightWindow::Fixed(a, b) => free.iter().map(|_| (a, b)).unzip(),
        };
        let bound: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1).max(0) as f64).product();
        if bound > max_states as f64 * 64.0 {
            return Err(Error::StateSpaceTooLarge(format!("{bound} candidate states")));
        }
        let mut values = vec![0i64; graph.len()];
        let mut assigned = vec![false; graph.len()];
        for (&v, &h) in boundary {
            values[v] = h;
            assigned[v] = true;
        }
        // edges become checkable once both endpoints are assigned
        let mut pos = vec![usize::MAX; graph.len()];
        for (i, &v) in free.iter().enumerate() {
            pos[v] = i;
        }
        let mut due: Vec<Vec<usize>> = vec![Vec::new(); free.len()];
        for (e, edge) in graph.edges().iter().enumerate() {
            let (pt, ph) = (pos[edge.tail], pos[edge.head]);
            if pt == usize::MAX && ph == usize::MAX {
                continue;
            }
            let last = match (pt, ph) {
                (usize::MAX, p) | (p, usize::MAX) => p,
                (a, b) => a.max(b),
            };
            due[last].push(e);
        }
        let mut out = Enumeration {
            graph: graph.clone(),
            boundary: boundary.clone(),
            free: free.clone(),
            states: Vec::new(),
            energies: Vec::new(),
            log_z: f64::NEG_INFINITY,
            index: HashMap::new(),
        };
        struct Dfs<'a> {
            pot: &'a PeriodicPotential,
            graph: &'a Graph,
            free: &'a [usize],
            lo: &'a [i64],
            hi: &'a [i64],
            due: &'a [Vec<usize>],
            values: Vec<i64>,
            max_states: usize,
        }
        fn go(s: &mut Dfs, out: &mut Enumeration, k: usize, energy: f64) -> Result<()> {
            if k == s.free.len() {
                if out.states.len() >= s.max_states {
                    return Err(Error::StateSpaceTooLarge(format!("more than {} states", s.max_states)));
                }
                out.states.push(s.free.iter().map(|&v| s.values[v]).collect());
                out.energies.push(energy);
                return Ok(());
            }
            let v = s.free[k];
            for h in s.lo[k]..=s.hi[k] {
                s.values[v] = h;
                let mut e = Energy::Finite(energy);
                for &ed in &s.due[k] {
                    let edge = s.graph.edge(ed);
                    let eta = (s.values[edge.head] - s.values[edge.tail]) as f64 + edge.shift;
                    e = e + s.pot.graph_edge_energy(s.graph, ed, eta);
                }
                if let Energy::Finite(x) = e {
                    go(s, out, k + 1, x)?;
                }
            }
            Ok(())
        }
        let mut dfs = Dfs { pot, graph: &graph, free: &free, lo: &lo, hi: &hi, due: &due, values, max_states };
        go(&mut dfs, &mut out, 0, 0.0)?;
        if out.states.is_empty() {
            return Err(Error::EmptySupport("no finite-energy configuration in the window".into()));
        }
        out.log_z = log_sum_exp(out.energies.iter().map(|e| -e));
        out.index = out.states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn boundary(&self) -> &Boundary<i64> {
        &self.boundary
    }

    /// Heights of the free vertices, in the order of [`Enumeration::free`].
    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn probability(&self, i: usize) -> f64 {
        (-self.energies[i] - self.log_z).exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.probability(i)).collect()
    }

    pub fn index_of(&self, free_values: &[i64]) -> Option<usize> {
        self.index.get(free_values).copied()
    }

    /// Index of a full configuration, if its free part is enumerated.
    pub fn index_of_config(&self, config: &HeightConfig<i64>) -> Option<usize> {
        let key: Vec<i64> = self.free.iter().map(|&v| config.get(v)).collect();
        self.index_of(&key)
    }

    pub fn config(&self, i: usize) -> HeightConfig<i64> {
        let mut values = vec![0i64; self.graph.len()];
        for (&v, &h) in &self.boundary {
            values[v] = h;
        }
        for (&v, &h) in self.free.iter().zip(&self.states[i]) {
            values[v] = h;
        }
        HeightConfig::new(self.graph.clone(), values).expect("sizes match")
    }

    /// Exact law of the height at vertex `v`.
    pub fn marginal(&self, v: usize) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        if let Some(&h) = self.boundary.get(&v) {
            out.insert(h, 1.0);
            return out;
        }
        let k = self.free.iter().position(|&f| f == v).expect("vertex in graph");
        let mut logs: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (s, e) in self.states.iter().zip(&self.energies) {
            logs.entry(s[k]).or_default().push(-e);
        }
        for (h, l) in logs {
            out.insert(h, (log_sum_exp(l) - self.log_z).exp());
        }
        out
    }

    /// Exact probability of an event on configurations.
    pub fn probability_of(&self, event: impl Fn(&HeightConfig<i64>) -> bool) -> f64 {
        (0..self.len()).filter(|&i| event(&self.config(i))).map(|i| self.probability(i)).sum()
    }
}
