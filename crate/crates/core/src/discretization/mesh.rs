use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned convex domain: an interval or a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extents {
    Interval([f64; 2]),
    Rectangle([[f64; 2]; 2]),
}

impl Extents {
    pub fn dim(&self) -> usize {
        match self {
            Extents::Interval(_) => 1,
            Extents::Rectangle(_) => 2,
        }
    }
}

/// Uniform P1 mesh. Nodes are numbered row-major (x fastest); each 2D cell
/// is split into two counter-clockwise triangles along its (x0,y0)-(x1,y1)
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    extents: Extents,
    resolution: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    /// node -> index among free (interior) nodes
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
    /// per element: measure and constant basis gradients
    measures: Vec<f64>,
    basis_grads: Vec<[[f64; 2]; 3]>,
    lumped_mass: Vec<f64>,
}

impl Mesh {
    pub fn new(extents: Extents, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidMesh(format!("resolution {resolution} < 2")));
        }
        let non_degenerate = |[a, b]: [f64; 2]| a.is_finite() && b.is_finite() && b > a;
        match extents {
            Extents::Interval(iv) if !non_degenerate(iv) => {
                return Err(Error::InvalidMesh(format!("degenerate interval {iv:?}")))
            }
            Extents::Rectangle([ix, iy]) if !(non_degenerate(ix) && non_degenerate(iy)) => {
                return Err(Error::InvalidMesh(format!("degenerate rectangle {:?}", [ix, iy])))
            }
            _ => {}
        }
        let n = resolution;
        let mut nodes = Vec::new();
        let mut elements = Vec::new();
        let mut boundary = Vec::new();
        match extents {
            Extents::Interval([x0, x1]) => {
                let h = (x1 - x0) / n as f64;
                for i in 0..=n {
                    let x = if i == n { x1 } else { x0 + i as f64 * h };
                    nodes.push([x, 0.0]);
                    boundary.push(i == 0 || i == n);
                }
                for i in 0..n {
                    elements.push([i, i + 1, usize::MAX]);
                }
            }
            Extents::Rectangle([[x0, x1], [y0, y1]]) => {
                let hx = (x1 - x0) / n as f64;
                let hy = (y1 - y0) / n as f64;
                for j in 0..=n {
                    let y = if j == n { y1 } else { y0 + j as f64 * hy };
                    for i in 0..=n {
                        let x = if i == n { x1 } else { x0 + i as f64 * hx };
                        nodes.push([x, y]);
                        boundary.push(i == 0 || i == n || j == 0 || j == n);
                    }
                }
                let id = |i: usize, j: usize| j * (n + 1) + i;
                for j in 0..n {
                    for i in 0..n {
                        let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                        elements.push([a, b, c]);
                        elements.push([a, c, d]);
                    }
                }
            }
        }
        let dim = extents.dim();
        let mut free_index = vec![None; nodes.len()];
        let mut free_nodes = Vec::new();
        for (k, &b) in boundary.iter().enumerate() {
            if !b {
                free_index[k] = Some(free_nodes.len());
                free_nodes.push(k);
            }
        }
        let mut measures = Vec::with_capacity(elements.len());
        let mut basis_grads = Vec::with_capacity(elements.len());
        for el in &elements {
            let (m, g) = element_geometry(dim, &nodes, el);
            if !(m > 0.0) {
                return Err(Error::InvalidMesh("element with non-positive measure".into()));
            }
            measures.push(m);
            basis_grads.push(g);
        }
        let mut lumped_mass = vec![0.0; nodes.len()];
        for (el, &m) in elements.iter().zip(&measures) {
            for &v in &el[..dim + 1] {
                lumped_mass[v] += m / (dim + 1) as f64;
            }
        }
        Ok(Self {
            dim,
            extents,
            resolution,
            nodes,
            elements,
            boundary,
            free_index,
            free_nodes,
            measures,
            basis_grads,
            lumped_mass,
        })
    }

    pub fn interval(x0: f64, x1: f64, resolution: usize) -> Result<Arc<Self>> {
        Self::new(Extents::Interval([x0, x1]), resolution).map(Arc::new)
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2], resolution: usize) -> Result<Arc<Self>> {
        Self::new(Extents::Rectangle([x, y]), resolution).map(Arc::new)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn extents(&self) -> Extents {
        self.extents
    }
    pub fn resolution(&self) -> usize {
        self.resolution
    }
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }
    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }
    pub fn node(&self, k: usize) -> [f64; 2] {
        self.nodes[k]
    }
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }
    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_index[node]
    }
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }
    /// Vertices per element (2 in 1D, 3 in 2D).
    pub fn nverts(&self) -> usize {
        self.dim + 1
    }
    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim + 1]
    }
    pub fn measure(&self, e: usize) -> f64 {
        self.measures[e]
    }
    pub fn basis_grads(&self, e: usize) -> &[[f64; 2]] {
        &self.basis_grads[e][..self.dim + 1]
    }
    /// Diagonal of the lumped (nodal-quadrature) mass matrix.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }
    /// Uniform mesh width along x.
    pub fn h(&self) -> f64 {
        match self.extents {
            Extents::Interval([a, b]) => (b - a) / self.resolution as f64,
            Extents::Rectangle([[a, b], [c, d]]) => {
                ((b - a) / self.resolution as f64).max((d - c) / self.resolution as f64)
            }
        }
    }

    /// Node-to-node adjacency through shared elements.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for e in 0..self.num_elements() {
            let vs = self.element_nodes(e);
            for &a in vs {
                for &b in vs {
                    if a != b && !adj[a].contains(&b) {
                        adj[a].push(b);
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

fn element_geometry(dim: usize, nodes: &[[f64; 2]], el: &[usize; 3]) -> (f64, [[f64; 2]; 3]) {
    if dim == 1 {
        let len = nodes[el[1]][0] - nodes[el[0]][0];
        (len, [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0, 0.0]])
    } else {
        let [x0, y0] = nodes[el[0]];
        let [x1, y1] = nodes[el[1]];
        let [x2, y2] = nodes[el[2]];
        let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
        let g1 = [(y2 - y0) / det, -(x2 - x0) / det];
        let g2 = [-(y1 - y0) / det, (x1 - x0) / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        (0.5 * det, [g0, g1, g2])
    }
}

/// Nodal P1 field on a shared mesh.
#[derive(Debug, Clone)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.same_mesh(other) && self.values == other.values
    }
}

impl GridFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::LengthMismatch { expected: mesh.num_nodes(), got: values.len() });
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self { values: vec![0.0; mesh.num_nodes()], mesh: mesh.clone() }
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> Self {
        Self { values: vec![c; mesh.num_nodes()], mesh: mesh.clone() }
    }

    /// Nodal interpolant of `f(x, y)` (y is 0 in 1D).
    pub fn interpolate(mesh: &Arc<Mesh>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&[x, y]| f(x, y)).collect();
        Self { values, mesh: mesh.clone() }
    }

    /// Builds a field from values on free nodes; boundary values are zero.
    pub fn from_free(mesh: &Arc<Mesh>, free: &[f64]) -> Self {
        let mut values = vec![0.0; mesh.num_nodes()];
        for (k, &node) in mesh.free_nodes().iter().enumerate() {
            values[node] = free[k];
        }
        Self { values, mesh: mesh.clone() }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_mesh(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh
    }

    pub fn check_same_mesh(&self, other: &Self) -> Result<()> {
        if self.same_mesh(other) {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    /// Values restricted to free nodes.
    pub fn free_values(&self) -> Vec<f64> {
        self.mesh.free_nodes().iter().map(|&k| self.values[k]).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), mesh: self.mesh.clone() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.same_mesh(other));
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { values, mesh: self.mesh.clone() }
    }

    /// `self + alpha * other`
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV with one row per node: `x,value` in 1D, `x,y,value` in 2D.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let two_d = self.mesh.dim() == 2;
        out.push_str(if two_d { "x,y,value\n" } else { "x,value\n" });
        for (&[x, y], v) in self.mesh.nodes().iter().zip(&self.values) {
            if two_d {
                let _ = writeln!(out, "{x:.17e},{y:.17e},{v:.17e}");
            } else {
                let _ = writeln!(out, "{x:.17e},{v:.17e}");
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the CSV produced by [`GridFunction::to_csv`]. Rows must match
    /// the mesh nodes in order (coordinates are checked to 1e-9).
    pub fn from_csv(mesh: &Arc<Mesh>, text: &str) -> Result<Self> {
        let cols = mesh.dim() + 1;
        let mut values = Vec::with_capacity(mesh.num_nodes());
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('x') {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", line_no + 1)))?;
            if fields.len() != cols {
                return Err(Error::Parse(format!(
                    "line {}: expected {cols} columns, got {}",
                    line_no + 1,
                    fields.len()
                )));
            }
            let k = values.len();
            if k >= mesh.num_nodes() {
                return Err(Error::LengthMismatch { expected: mesh.num_nodes(), got: k + 1 });
            }
            let node = mesh.node(k);
            for d in 0..mesh.dim() {
                if (node[d] - fields[d]).abs() > 1e-9 {
                    return Err(Error::Parse(format!(
                        "line {}: coordinate {} does not match node {k}",
                        line_no + 1,
                        fields[d]
                    )));
                }
            }
            values.push(fields[cols - 1]);
        }
        Self::new(mesh.clone(), values)
    }

    pub fn read_csv(mesh: &Arc<Mesh>, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(mesh, &std::fs::read_to_string(path)?)
    }
}
