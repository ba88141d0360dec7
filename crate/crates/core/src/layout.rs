//! Knowledge graph over non-common categories and its Fruchterman-Reingold
//! embedding in the plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cooccurrence::{csv_field, CommonObjectSet, CorrelationMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Category index, `a < b`.
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextGraph {
    /// Category indices, ascending.
    pub nodes: Vec<usize>,
    pub edges: Vec<Edge>,
}

impl ContextGraph {
    pub fn node_position(&self, category: usize) -> Option<usize> {
        self.nodes.binary_search(&category).ok()
    }
}

/// Nodes are all categories outside `common`; an edge joins every pair with
/// positive correlation, weighted by that correlation.
pub fn build_graph(rho: &CorrelationMatrix, common: &CommonObjectSet) -> ContextGraph {
    let nodes: Vec<usize> = (0..rho.n()).filter(|c| !common.contains(*c)).collect();
    let mut edges = Vec::new();
    for (i, &a) in nodes.iter().enumerate() {
        for &b in &nodes[i + 1..] {
            let w = rho.get(a, b).max(0.0);
            if w > 0.0 {
                edges.push(Edge { a, b, weight: w });
            }
        }
    }
    ContextGraph { nodes, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub iterations: usize,
    pub area: f64,
    /// Defaults to `0.1 * sqrt(area)` when absent.
    pub initial_temperature: Option<f64>,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            iterations: 500,
            area: 1.0,
            initial_temperature: None,
        }
    }
}

impl LayoutParams {
    pub fn temperature(&self) -> f64 {
        self.initial_temperature
            .unwrap_or_else(|| 0.1 * self.area.sqrt())
    }

    pub fn k_ideal(&self, n_nodes: usize) -> f64 {
        (self.area / n_nodes as f64).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Parameter("layout iterations must be >= 1".into()));
        }
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(Error::Parameter(format!(
                "layout area must be > 0, got {}",
                self.area
            )));
        }
        let t = self.temperature();
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Parameter(format!("invalid initial temperature {t}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Category index of each laid-out node, ascending.
    pub nodes: Vec<usize>,
    pub positions: Vec<[f64; 2]>,
    pub params: LayoutParams,
    pub seed: u64,
}

impl Layout {
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("category,x,y\n");
        for (&c, p) in self.nodes.iter().zip(&self.positions) {
            out.push_str(&format!("{},{},{}\n", csv_field(&names[c]), p[0], p[1]));
        }
        out
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Layout {
        let mut out = self.clone();
        for p in &mut out.positions {
            p[0] += dx;
            p[1] += dy;
        }
        out
    }
}

/// Weighted Fruchterman-Reingold layout.
///
/// Repulsion `k²/d` acts between every node pair and attraction `w·d²/k`
/// along each edge. Per-iteration displacement is capped by a temperature
/// that decays linearly to zero. Starting positions are uniform in the unit
/// square, drawn from a generator seeded with `seed`.
pub fn fr_layout(graph: &ContextGraph, params: &LayoutParams, seed: u64) -> Result<Layout> {
    params.validate()?;
    let n = graph.nodes.len();
    if n == 0 {
        return Err(Error::Parameter("cannot lay out an empty graph".into()));
    }
    let k = params.k_ideal(n);
    let t0 = params.temperature();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
        .collect();

    let edges: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .map(|e| {
            let u = graph
                .node_position(e.a)
                .expect("edge endpoint not in node set");
            let v = graph
                .node_position(e.b)
                .expect("edge endpoint not in node set");
            (u, v, e.weight)
        })
        .collect();

    let mut disp = vec![[0.0f64; 2]; n];
    for iter in 0..params.iterations {
        let temperature = t0 * (1.0 - iter as f64 / params.iterations as f64);
        disp.iter_mut().for_each(|d| *d = [0.0, 0.0]);

        for u in 0..n {
            for v in u + 1..n {
                let (dir, d) = separation(pos[u], pos[v], u, v);
                let f = k * k / d;
                disp[u][0] += dir[0] * f;
                disp[u][1] += dir[1] * f;
                disp[v][0] -= dir[0] * f;
                disp[v][1] -= dir[1] * f;
            }
        }
        for &(u, v, w) in &edges {
            let (dir, d) = separation(pos[u], pos[v], u, v);
            let f = w * d * d / k;
            disp[u][0] -= dir[0] * f;
            disp[u][1] -= dir[1] * f;
            disp[v][0] += dir[0] * f;
            disp[v][1] += dir[1] * f;
        }

        for (p, d) in pos.iter_mut().zip(&disp) {
            let len = d[0].hypot(d[1]);
            if len > 0.0 {
                let step = len.min(temperature) / len;
                p[0] += d[0] * step;
                p[1] += d[1] * step;
            }
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Numerical {
                    iteration: iter,
                    detail: format!("non-finite coordinate {p:?}"),
                });
            }
        }
    }

    Ok(Layout {
        nodes: graph.nodes.clone(),
        positions: pos,
        params: params.clone(),
        seed,
    })
}

/// Unit vector from `q` to `p` and their distance. Coincident points get a
/// fixed direction derived from the node indices and a tiny distance.
fn separation(p: [f64; 2], q: [f64; 2], u: usize, v: usize) -> ([f64; 2], f64) {
    const MIN_DIST: f64 = 1e-9;
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let d = dx.hypot(dy);
    if d < MIN_DIST {
        let angle = (u * 31 + v * 17) as f64;
        return ([angle.cos(), angle.sin()], MIN_DIST);
    }
    ([dx / d, dy / d], d)
}
