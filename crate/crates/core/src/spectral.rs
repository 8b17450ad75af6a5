//! Dense symmetric eigensolver and Laplacian-based partitioning.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rdm::LaplacianMatrix;

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const INPUT_SYMMETRY_TOL: f64 = 1e-9;
/// Eigenvalues at or below this fraction of the largest one count as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-8;
/// Fiedler entries this close to zero sit on the partition boundary.
pub const SIGN_TOL: f64 = 1e-12;
const MAX_BIJECTION_CLASSES: usize = 10;

/// Full eigendecomposition; eigenvalues ascending, eigenvectors as the
/// matching columns of an orthonormal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    pub sweeps: usize,
}

impl EigenResult {
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k)
    }
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps rotate every off-diagonal pair in row order until the largest
/// off-diagonal magnitude drops below `1e-12·‖M‖_F`.
pub fn eig_symmetric(m: &Matrix) -> Result<EigenResult> {
    let asym = m.max_asymmetry().ok_or_else(|| {
        Error::Input(format!("matrix must be square, got {}x{}", m.rows(), m.cols()))
    })?;
    let n = m.rows();
    if n == 0 {
        return Err(Error::Input("matrix is empty".into()));
    }
    if asym > INPUT_SYMMETRY_TOL {
        return Err(Error::Input(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }

    let mut a: Vec<f64> = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])).into_vec();
    // rows of `vt` are the eigenvectors
    let mut vt = Matrix::identity(n).into_vec();
    let tol = OFF_DIAGONAL_TOL * m.frobenius_norm();
    let skip_below = tol * 1e-3;

    let max_off = |a: &[f64]| {
        let mut worst = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                worst = worst.max(a[p * n + q].abs());
            }
        }
        worst
    };

    let mut sweeps = 0;
    loop {
        let off = max_off(&a);
        if off <= tol {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence {
                sweeps,
                off_diag: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip_below {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[k * n + p] = new_kp;
                    a[p * n + k] = new_kp;
                    a[k * n + q] = new_kq;
                    a[q * n + k] = new_kq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let (head, tail) = vt.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |row, col| vt[order[col] * n + row]);
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}

/// Number of eigenvalues within `1e-8·λ_max` of zero.
pub fn zero_multiplicity(eigenvalues: &[f64]) -> usize {
    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let thr = ZERO_EIGENVALUE_TOL * scale;
    eigenvalues.iter().filter(|v| v.abs() <= thr).count()
}

/// Flips `v` so its first entry larger than `1e-12` in magnitude is positive
/// and scales it to unit length.
pub fn canonicalize_sign(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let flip = v
        .iter()
        .find(|x| x.abs() > SIGN_TOL)
        .is_some_and(|&x| x < 0.0);
    let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    let scale = if flip { -scale } else { scale };
    for x in v.iter_mut() {
        *x *= scale;
    }
}

fn connected_spectrum(l: &LaplacianMatrix) -> Result<EigenResult> {
    if l.n() < 2 {
        return Err(Error::Shape(format!(
            "a partition needs at least 2 vertices, got {}",
            l.n()
        )));
    }
    let eig = eig_symmetric(l.values())?;
    let components = zero_multiplicity(&eig.eigenvalues);
    if components != 1 {
        return Err(Error::Multiplicity { components });
    }
    Ok(eig)
}

/// Second-smallest eigenpair `(λ₂, v₂)` of a connected graph's Laplacian.
pub fn fiedler_vector(l: &LaplacianMatrix) -> Result<(f64, Vec<f64>)> {
    let eig = connected_spectrum(l)?;
    let mut v = eig.eigenvector(1);
    canonicalize_sign(&mut v);
    Ok((eig.eigenvalues[1], v))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Cluster id per vertex, in `[0, n_clusters)`.
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
    /// Sign-canonicalized `v₂`.
    pub fiedler_vector: Vec<f64>,
    /// Eigenvalues of the eigenvectors whose signs defined the clusters.
    pub eigenvalues: Vec<f64>,
    /// Cluster ids no vertex landed in.
    pub empty_clusters: Vec<usize>,
}

impl Partition {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Two-way split on the sign of `v₂`: negative entries form cluster 0,
/// positive and (numerically) zero entries cluster 1.
pub fn fiedler_partition(l: &LaplacianMatrix) -> Result<Partition> {
    sign_pattern_partition(l, 1)
}

/// `2^levels`-way split: bit `k` of a vertex's cluster id is the sign bit of
/// its entry in the eigenvector of the `(k+1)`-th smallest nonzero
/// eigenvalue (zero counted as positive).
pub fn sign_pattern_partition(l: &LaplacianMatrix, levels: usize) -> Result<Partition> {
    if levels == 0 || levels >= usize::BITS as usize - 1 {
        return Err(Error::Param(format!("levels must be in 1..{}, got {levels}", usize::BITS - 1)));
    }
    let n_clusters = 1usize << levels;
    if levels > 1 && l.n() <= n_clusters {
        return Err(Error::Param(format!(
            "{n_clusters} clusters need more than {n_clusters} vertices, got {}",
            l.n()
        )));
    }
    let eig = connected_spectrum(l)?;
    let vectors: Vec<Vec<f64>> = (1..=levels)
        .map(|k| {
            let mut v = eig.eigenvector(k);
            canonicalize_sign(&mut v);
            v
        })
        .collect();
    let assignment: Vec<usize> = (0..l.n())
        .map(|i| {
            vectors
                .iter()
                .enumerate()
                .map(|(k, v)| usize::from(v[i] >= -SIGN_TOL) << k)
                .sum()
        })
        .collect();
    let mut partition = Partition {
        assignment,
        n_clusters,
        fiedler_vector: vectors[0].clone(),
        eigenvalues: eig.eigenvalues[1..=levels].to_vec(),
        empty_clusters: Vec::new(),
    };
    partition.empty_clusters = partition
        .cluster_sizes()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 0)
        .map(|(c, _)| c)
        .collect();
    Ok(partition)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionAccuracy {
    pub overall: f64,
    /// Distinct class labels, ascending.
    pub classes: Vec<usize>,
    /// Accuracy per entry of `classes`.
    pub per_class: Vec<f64>,
    /// `mapping[cluster]` is the class label that cluster is scored as.
    pub mapping: Vec<usize>,
}

/// Scores a partition against ground-truth labels under the cluster→class
/// bijection with the highest overall accuracy (first one in lexicographic
/// order on ties).
pub fn partition_accuracy(p: &Partition, labels: &[usize]) -> Result<PartitionAccuracy> {
    let n = p.assignment.len();
    if labels.len() != n {
        return Err(Error::Evaluation(format!(
            "{} labels for {n} vertices",
            labels.len()
        )));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let k = p.n_clusters;
    if classes.len() != k {
        return Err(Error::Evaluation(format!(
            "{} classes but {k} clusters",
            classes.len()
        )));
    }
    if k > MAX_BIJECTION_CLASSES {
        return Err(Error::Evaluation(format!(
            "exhaustive bijection search supports at most {MAX_BIJECTION_CLASSES} classes, got {k}"
        )));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    let mut class_sizes = vec![0usize; k];
    for (&c, &y) in p.assignment.iter().zip(labels) {
        let j = classes.binary_search(&y).unwrap();
        confusion[c][j] += 1;
        class_sizes[j] += 1;
    }

    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = (0usize, perm.clone());
    let mut first = true;
    loop {
        let hits: usize = perm.iter().enumerate().map(|(c, &j)| confusion[c][j]).sum();
        if first || hits > best.0 {
            best = (hits, perm.clone());
            first = false;
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (hits, perm) = best;
    let mut per_class = vec![0.0; k];
    for (c, &j) in perm.iter().enumerate() {
        per_class[j] = confusion[c][j] as f64 / class_sizes[j] as f64;
    }
    Ok(PartitionAccuracy {
        overall: hits as f64 / n as f64,
        mapping: perm.iter().map(|&j| classes[j]).collect(),
        classes,
        per_class,
    })
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdm::laplacian;

    fn lap(edges: &[(usize, usize, f64)], n: usize) -> LaplacianMatrix {
        let mut a = Matrix::zeros(n, n);
        for &(i, j, w) in edges {
            a[(i, j)] += w;
            a[(j, i)] += w;
        }
        laplacian(&a).unwrap()
    }

    fn p3() -> LaplacianMatrix {
        lap(&[(0, 1, 1.0), (1, 2, 1.0)], 3)
    }

    fn triangle_ring(n_triangles: usize, bridge: f64, closed: bool) -> LaplacianMatrix {
        let mut edges = Vec::new();
        for t in 0..n_triangles {
            let b = 3 * t;
            edges.extend([(b, b + 1, 1.0), (b + 1, b + 2, 1.0), (b, b + 2, 1.0)]);
            if t + 1 < n_triangles || closed {
                edges.push((b + 2, (b + 3) % (3 * n_triangles), bridge));
            }
        }
        lap(&edges, 3 * n_triangles)
    }

    #[test]
    fn diagonal_matrix() {
        let m = Matrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let e = eig_symmetric(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.eigenvector(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(e.eigenvector(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(e.eigenvector(2), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn path_and_complete_graph_spectra() {
        let e = eig_symmetric(p3().values()).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([0.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        let k4 = Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let e = eig_symmetric(laplacian(&k4).unwrap().values()).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([0.0, 4.0, 4.0, 4.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(eig_symmetric(&Matrix::zeros(2, 3)), Err(Error::Input(_))));
        assert!(matches!(eig_symmetric(&Matrix::zeros(0, 0)), Err(Error::Input(_))));
        let asym = Matrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]).unwrap();
        assert!(matches!(eig_symmetric(&asym), Err(Error::Input(_))));
        assert_eq!(eig_symmetric(&Matrix::zeros(1, 1)).unwrap().eigenvalues, vec![0.0]);
    }

    #[test]
    fn fiedler_of_path() {
        let (l2, v) = fiedler_vector(&p3()).unwrap();
        assert!((l2 - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in v.iter().zip([h, 0.0, -h]) {
            assert!((got - want).abs() < 1e-12);
        }
        let p = fiedler_partition(&p3()).unwrap();
        // the middle vertex has v2 = 0 and joins cluster 1
        assert_eq!(p.assignment, vec![1, 1, 0]);
    }

    #[test]
    fn fiedler_of_single_edge() {
        let w = 0.3;
        let (l2, v) = fiedler_vector(&lap(&[(0, 1, w)], 2)).unwrap();
        assert!((l2 - 2.0 * w).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-14 && (v[1] + h).abs() < 1e-14);
    }

    #[test]
    fn weak_bridge_separates_triangles() {
        let l = triangle_ring(2, 0.01, false);
        let (l2, v) = fiedler_vector(&l).unwrap();
        assert!(l2 < 0.05);
        assert!(v[..3].iter().all(|&x| x > 0.0) && v[3..].iter().all(|&x| x < 0.0));
        let p = fiedler_partition(&l).unwrap();
        assert_eq!(p.assignment, vec![1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn block_similarity_recovers_classes() {
        let n = 20;
        let a = Matrix::from_fn(n, n, |i, j| match (i == j, i / 10 == j / 10) {
            (true, _) => 0.0,
            (false, true) => 0.9,
            (false, false) => 0.1,
        });
        let p = fiedler_partition(&laplacian(&a).unwrap()).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i / 10).collect();
        assert_eq!(partition_accuracy(&p, &labels).unwrap().overall, 1.0);
        assert!(p.assignment[..10].iter().all(|&c| c == p.assignment[0]));
        assert!(p.assignment[10..].iter().all(|&c| c != p.assignment[0]));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let l = lap(&[(0, 1, 1.0), (2, 3, 1.0), (4, 5, 1.0)], 6);
        match fiedler_vector(&l) {
            Err(Error::Multiplicity { components }) => assert_eq!(components, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(fiedler_partition(&lap(&[], 1)).is_err());
    }

    #[test]
    fn one_level_sign_pattern_is_fiedler() {
        let l = triangle_ring(3, 0.2, true);
        assert_eq!(sign_pattern_partition(&l, 1).unwrap(), fiedler_partition(&l).unwrap());
    }

    #[test]
    fn four_triangle_ring_splits_into_four() {
        let l = triangle_ring(4, 0.01, true);
        let p = sign_pattern_partition(&l, 2).unwrap();
        assert_eq!(p.n_clusters, 4);
        assert!(p.empty_clusters.is_empty(), "{p:?}");
        for t in 0..4 {
            let c = p.assignment[3 * t];
            assert!(p.assignment[3 * t..3 * t + 3].iter().all(|&x| x == c), "{:?}", p.assignment);
        }
        let labels: Vec<usize> = (0..12).map(|i| i / 3).collect();
        assert_eq!(partition_accuracy(&p, &labels).unwrap().overall, 1.0);
    }

    #[test]
    fn too_many_levels_for_graph() {
        let k4 = Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let err = sign_pattern_partition(&laplacian(&k4).unwrap(), 2).unwrap_err();
        assert!(matches!(err, Error::Param(_)));
        assert!(matches!(sign_pattern_partition(&p3(), 0), Err(Error::Param(_))));
    }

    fn partition_of(assignment: Vec<usize>, n_clusters: usize) -> Partition {
        Partition {
            assignment,
            n_clusters,
            fiedler_vector: Vec::new(),
            eigenvalues: Vec::new(),
            empty_clusters: Vec::new(),
        }
    }

    #[test]
    fn accuracy_examples() {
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let exact = partition_accuracy(&partition_of(labels.clone(), 2), &labels).unwrap();
        assert_eq!((exact.overall, exact.per_class.clone()), (1.0, vec![1.0, 1.0]));
        assert_eq!(exact.mapping, vec![0, 1]);

        let swapped: Vec<usize> = labels.iter().map(|&y| 1 - y).collect();
        let acc = partition_accuracy(&partition_of(swapped, 2), &labels).unwrap();
        assert_eq!(acc.overall, 1.0);
        assert_eq!(acc.mapping, vec![1, 0]);

        let one_off = vec![1, 0, 0, 0, 1, 1, 1, 1];
        let acc = partition_accuracy(&partition_of(one_off, 2), &labels).unwrap();
        assert_eq!(acc.overall, 7.0 / 8.0);
        assert_eq!(acc.per_class, vec![0.75, 1.0]);
    }

    #[test]
    fn accuracy_uses_label_values_not_positions() {
        let labels = vec![7, 7, 3, 3];
        let acc = partition_accuracy(&partition_of(vec![0, 0, 1, 1], 2), &labels).unwrap();
        assert_eq!(acc.classes, vec![3, 7]);
        assert_eq!(acc.mapping, vec![7, 3]);
        assert_eq!(acc.overall, 1.0);
    }

    #[test]
    fn accuracy_errors() {
        let p = partition_of(vec![0, 1, 1], 2);
        assert!(matches!(partition_accuracy(&p, &[0, 1]), Err(Error::Evaluation(_))));
        assert!(matches!(partition_accuracy(&p, &[0, 1, 2]), Err(Error::Evaluation(_))));
    }

    #[test]
    fn permutations_are_lexicographic() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }
}
