//! Representational dissimilarity matrices and the graph matrices built
//! from them.

use std::fmt;

use crate::bitvec::{hamming_matrix, BitMatrix};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

const SYMMETRY_TOL: f64 = 1e-12;
const ADJACENCY_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    NormalizedHamming,
    Cosine,
}

impl Metric {
    /// Largest admissible entry.
    pub fn upper_bound(self) -> f64 {
        match self {
            Metric::NormalizedHamming => 1.0,
            Metric::Cosine => 2.0,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::NormalizedHamming => "normalized-hamming",
            Metric::Cosine => "cosine",
        })
    }
}

/// Symmetric, zero-diagonal matrix of pairwise dissimilarities.
#[derive(Clone, Debug, PartialEq)]
pub struct DissimMatrix {
    values: Matrix,
    metric: Metric,
    layer_tag: Option<usize>,
}

impl DissimMatrix {
    pub fn new(values: Matrix, metric: Metric, layer_tag: Option<usize>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Shape(format!(
                "dissimilarity matrix must be square, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        let asym = values.max_asymmetry().unwrap_or(0.0);
        if asym > SYMMETRY_TOL {
            return Err(Error::Input(format!("asymmetry {asym:e}")));
        }
        for i in 0..values.rows() {
            if values[(i, i)] != 0.0 {
                return Err(Error::Input(format!("diagonal entry {i} is nonzero")));
            }
        }
        let hi = metric.upper_bound();
        if let Some(v) = values.as_slice().iter().find(|v| !(0.0..=hi).contains(*v)) {
            return Err(Error::Range(format!("{metric} entry {v} outside [0, {hi}]")));
        }
        Ok(DissimMatrix::from_parts(values, metric, layer_tag))
    }

    pub(crate) fn from_parts(values: Matrix, metric: Metric, layer_tag: Option<usize>) -> Self {
        DissimMatrix {
            values,
            metric,
            layer_tag,
        }
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn layer_tag(&self) -> Option<usize> {
        self.layer_tag
    }

    pub fn with_layer_tag(mut self, layer_tag: Option<usize>) -> Self {
        self.layer_tag = layer_tag;
        self
    }

    /// Strict upper triangle in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.values.row(i)[i + 1..]);
        }
        out
    }
}

/// `L = D - A` together with the adjacency it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianMatrix {
    values: Matrix,
    adjacency: Matrix,
}

impl LaplacianMatrix {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }
}

pub fn rdm_hamming(bits: &BitMatrix, layer_tag: Option<usize>) -> Result<DissimMatrix> {
    Ok(hamming_matrix(bits)?.with_layer_tag(layer_tag))
}

/// Cosine distance `1 - cos(θ)` between rows of `embeddings`.
pub fn rdm_cosine(embeddings: &Matrix, layer_tag: Option<usize>) -> Result<DissimMatrix> {
    let n = embeddings.rows();
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 rows, got {n}")));
    }
    let sq_norms: Vec<f64> = embeddings.row_iter().map(|r| dot(r, r)).collect();
    if let Some(i) = sq_norms.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Degenerate(format!(
            "row {i} has squared norm {}; cosine distance is undefined",
            sq_norms[i]
        )));
    }
    let mut values = Matrix::zeros(n, n);
    for j in 0..n {
        for k in j + 1..n {
            let cos = dot(embeddings.row(j), embeddings.row(k)) / (sq_norms[j] * sq_norms[k]).sqrt();
            let d = (1.0 - cos).clamp(0.0, 2.0);
            values[(j, k)] = d;
            values[(k, j)] = d;
        }
    }
    Ok(DissimMatrix::from_parts(values, Metric::Cosine, layer_tag))
}

/// Similarity graph `A = 1 - R` with self-loops removed.
pub fn adjacency_from_dissim(rdm: &DissimMatrix) -> Result<Matrix> {
    let r = rdm.values();
    if let Some(v) = r.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!(
            "dissimilarity {v} outside [0, 1]; adjacency needs a normalized metric"
        )));
    }
    let n = rdm.n();
    Ok(Matrix::from_fn(n, n, |j, k| if j == k { 0.0 } else { 1.0 - r[(j, k)] }))
}

/// Graph Laplacian `L = diag(A e) - A` of a symmetric non-negative weight matrix.
pub fn laplacian(adjacency: &Matrix) -> Result<LaplacianMatrix> {
    let asym = adjacency
        .max_asymmetry()
        .ok_or_else(|| Error::Input(format!(
            "adjacency must be square, got {}x{}",
            adjacency.rows(),
            adjacency.cols()
        )))?;
    if asym > ADJACENCY_SYMMETRY_TOL {
        return Err(Error::Input(format!("adjacency asymmetry {asym:e}")));
    }
    if let Some(w) = adjacency.as_slice().iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::Input(format!("edge weight {w} is negative or non-finite")));
    }
    let n = adjacency.rows();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i != j {
                degree += adjacency[(i, j)];
                values[(i, j)] = -adjacency[(i, j)];
            }
        }
        // a self-loop adds the same weight to D and A, so it cancels
        values[(i, i)] = degree;
    }
    Ok(LaplacianMatrix {
        values,
        adjacency: adjacency.clone(),
    })
}

/// Pearson correlation of the strict upper triangles of two RDMs.
pub fn pearson_rdm(a: &DissimMatrix, b: &DissimMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::Shape(format!("RDMs of size {} and {}", a.n(), b.n())));
    }
    if a.n() < 3 {
        return Err(Error::Shape(format!(
            "need at least 3 samples for a correlation, got {}",
            a.n()
        )));
    }
    pearson(&a.upper_triangle(), &b.upper_triangle())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Shape(format!(
            "correlation of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "zero variance; correlation is undefined".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
