//! Radial meshes on the ball of radius R: nodes `0 = r_0 < ... < r_M = R`,
//! faces at cell midpoints, and quadrature weights against the surface
//! measure `r^(N-1) dr` (the sphere-area constant is omitted everywhere,
//! consistently on both sides of every identity).

use crate::error::{Error, Result};
use std::ops::{Index, IndexMut};

/// Node distribution of the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grading {
    Uniform,
    /// Cell widths grow geometrically away from the origin, clustering
    /// nodes where the datum may blow up.
    GeometricTowardZero,
}

/// Ratio of the last to the first cell width under geometric grading.
const GEOMETRIC_GROWTH: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialMesh {
    n_dim: u32,
    radius: f64,
    nodes: Vec<f64>,
    faces: Vec<f64>,
    /// Cell volumes around each node: integral of r^(N-1) between the
    /// adjacent faces (half-cells at the ends). Positive, and they sum to
    /// R^N / N exactly.
    node_weights: Vec<f64>,
    /// r_f^(N-1) at each face.
    face_weights: Vec<f64>,
}

impl RadialMesh {
    /// Build a mesh with `cells` cells (`cells + 1` nodes) on `[0, R]`.
    pub fn assemble(n_dim: u32, radius: f64, cells: usize, grading: Grading) -> Result<Self> {
        if n_dim < 1 {
            return Err(Error::Parameter("mesh dimension must be >= 1".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
        }
        if cells < 4 {
            return Err(Error::Parameter(format!(
                "mesh too small: need at least 4 cells, got {cells}"
            )));
        }
        let m = cells;
        let mut nodes = Vec::with_capacity(m + 1);
        match grading {
            Grading::Uniform => {
                for i in 0..=m {
                    nodes.push(radius * i as f64 / m as f64);
                }
            }
            Grading::GeometricTowardZero => {
                let g = GEOMETRIC_GROWTH.powf(1.0 / (m - 1) as f64);
                // widths proportional to g^i, normalized to total R
                let total: f64 = (0..m).map(|i| g.powi(i as i32)).sum();
                let mut r = 0.0;
                nodes.push(0.0);
                for i in 0..m {
                    r += radius * g.powi(i as i32) / total;
                    nodes.push(r);
                }
                nodes[m] = radius;
            }
        }
        let faces: Vec<f64> = (0..m).map(|i| 0.5 * (nodes[i] + nodes[i + 1])).collect();
        let n = n_dim as f64;
        let shell = |a: f64, b: f64| (b.powi(n_dim as i32) - a.powi(n_dim as i32)) / n;
        let mut node_weights = Vec::with_capacity(m + 1);
        node_weights.push(shell(0.0, faces[0]));
        for i in 1..m {
            node_weights.push(shell(faces[i - 1], faces[i]));
        }
        node_weights.push(shell(faces[m - 1], radius));
        let face_weights: Vec<f64> =
            faces.iter().map(|&r| r.powi(n_dim as i32 - 1)).collect();
        Ok(Self { n_dim, radius, nodes, faces, node_weights, face_weights })
    }

    pub fn n_dim(&self) -> u32 {
        self.n_dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of cells M; there are M+1 nodes and M faces.
    pub fn cells(&self) -> usize {
        self.faces.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn face_weights(&self) -> &[f64] {
        &self.face_weights
    }

    /// Width of cell `f` (between nodes `f` and `f + 1`).
    pub fn cell_width(&self, f: usize) -> f64 {
        self.nodes[f + 1] - self.nodes[f]
    }

    /// Total weight; equals R^N / N up to rounding.
    pub fn total_weight(&self) -> f64 {
        self.node_weights.iter().sum()
    }

    /// Weighted sum of a nodal field against the cell volumes.
    pub fn weighted_sum(&self, field: &ScalarField) -> f64 {
        debug_assert_eq!(field.len(), self.node_count());
        self.node_weights.iter().zip(field.iter()).map(|(&w, &v)| w * v).sum()
    }

    /// Weighted sum skipping non-finite nodal values. Raw data with an
    /// integrable blow-up at the origin are sampled as `+inf` there; the
    /// origin cell is dropped rather than letting the sentinel poison the
    /// quadrature.
    pub fn weighted_sum_finite(&self, field: &ScalarField) -> f64 {
        debug_assert_eq!(field.len(), self.node_count());
        self.node_weights
            .iter()
            .zip(field.iter())
            .filter(|(_, &v)| v.is_finite())
            .map(|(&w, &v)| w * v)
            .sum()
    }
}

/// Nodal values on a mesh (length M+1).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(mesh: &RadialMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::Parameter(format!(
                "scalar field length {} does not match node count {}",
                values.len(),
                mesh.node_count()
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(mesh: &RadialMesh) -> Self {
        Self(vec![0.0; mesh.node_count()])
    }

    pub fn constant(mesh: &RadialMesh, value: f64) -> Self {
        Self(vec![value; mesh.node_count()])
    }

    pub fn from_fn(mesh: &RadialMesh, f: impl Fn(f64) -> f64) -> Self {
        Self(mesh.nodes().iter().map(|&r| f(r)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest finite entry (ignores infinities, e.g. a blown-up origin node).
    pub fn max_finite(&self) -> f64 {
        self.0
            .iter()
            .cloned()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Face values on a mesh (length M = node count - 1). Houses gradients and
/// the vector field z.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField(Vec<f64>);

impl FaceField {
    pub fn new(mesh: &RadialMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.cells() {
            return Err(Error::Parameter(format!(
                "face field length {} does not match face count {}",
                values.len(),
                mesh.cells()
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(mesh: &RadialMesh) -> Self {
        Self(vec![0.0; mesh.cells()])
    }

    pub fn from_fn(mesh: &RadialMesh, f: impl Fn(f64) -> f64) -> Self {
        Self(mesh.faces().iter().map(|&r| f(r)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn sup_abs(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

impl Index<usize> for FaceField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for FaceField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}
