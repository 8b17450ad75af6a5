//! Labelled datasets: CSV ingestion, seeded Gaussian blobs and splits.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::formats::{format_g17, read_file, write_file};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Distinct labels, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// One sample per line: comma-separated features, then an integer label.
    /// Blank lines are skipped.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let (label, feats) = fields.split_last().unwrap();
            let label = label.parse::<usize>().map_err(|_| {
                Error::Data(format!("line {}: label {label:?} is not a class index", n + 1))
            })?;
            let feats = feats
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Data(format!("line {}: bad feature {f:?}", n + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != feats.len() {
                    return Err(Error::Data(format!(
                        "line {}: {} features, expected {}",
                        n + 1,
                        feats.len(),
                        first.len()
                    )));
                }
            }
            rows.push(feats);
            labels.push(label);
        }
        if rows.is_empty() {
            return Err(Error::Data("dataset has no samples".into()));
        }
        Dataset::new(Matrix::from_rows(&rows)?, labels)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for (row, label) in self.features.row_iter().zip(&self.labels) {
            for v in row {
                write!(w, "{},", format_g17(*v))?;
            }
            writeln!(w, "{label}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_file(path, Dataset::read_csv)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, |w| self.write_csv(w))
    }
}

/// Isotropic Gaussian classes; see [`blob_means`] for where the means sit.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub n_samples: usize,
    /// Distance between any two class means, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n_classes: 2,
            dim: 16,
            n_samples: 500,
            separation: 4.0,
            sigma: 1.0,
            seed: 7,
        }
    }
}

/// Class means on scaled coordinate axes: `mean_k = (separation·σ/√2)·e_k`,
/// so every pair of means is `separation·σ` apart.
pub fn blob_means(spec: &BlobSpec) -> Result<Matrix> {
    if !(2..=8).contains(&spec.n_classes) {
        return Err(Error::Param(format!(
            "blobs support 2 to 8 classes, got {}",
            spec.n_classes
        )));
    }
    if spec.dim < spec.n_classes {
        return Err(Error::Param(format!(
            "{} classes need at least {} dimensions, got {}",
            spec.n_classes, spec.n_classes, spec.dim
        )));
    }
    if !(spec.sigma > 0.0 && spec.sigma.is_finite() && spec.separation >= 0.0) {
        return Err(Error::Param("sigma must be positive and separation non-negative".into()));
    }
    let offset = spec.separation * spec.sigma / std::f64::consts::SQRT_2;
    Ok(Matrix::from_fn(spec.n_classes, spec.dim, |k, j| {
        if j == k {
            offset
        } else {
            0.0
        }
    }))
}

/// Balanced seeded blobs; rows come out shuffled.
pub fn make_blobs(spec: &BlobSpec) -> Result<Dataset> {
    let means = blob_means(spec)?;
    if spec.n_samples < spec.n_classes {
        return Err(Error::Param(format!(
            "{} samples cannot cover {} classes",
            spec.n_samples, spec.n_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.n_classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Matrix::zeros(spec.n_samples, spec.dim);
    for (i, &y) in labels.iter().enumerate() {
        for (v, &m) in features.row_mut(i).iter_mut().zip(means.row(y)) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = m + spec.sigma * z;
        }
    }
    Dataset::new(features, labels)
}

/// Seeded shuffle split; both index lists come back ascending.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Param(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Param(format!(
            "{n} samples leave an empty split at fraction {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            Matrix::from_rows(&[[0.1, -2.5], [1e-7, 3.0]]).unwrap(),
            vec![1, 0],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "0.10000000000000001,-2.5,1\n9.9999999999999995e-08,3,0\n"
        );
        assert_eq!(Dataset::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn csv_errors() {
        assert!(Dataset::read_csv(&b""[..]).is_err());
        assert!(Dataset::read_csv(&b"1,2,x\n"[..]).is_err());
        assert!(Dataset::read_csv(&b"1,2,-1\n"[..]).is_err());
        assert!(Dataset::read_csv(&b"1,2,0\n1,0\n"[..]).is_err());
        assert!(Dataset::read_csv(&b"nan,0\n"[..]).is_err());
    }

    #[test]
    fn blobs_are_balanced_and_seeded() {
        let spec = BlobSpec::default();
        let a = make_blobs(&spec).unwrap();
        assert_eq!(a, make_blobs(&spec).unwrap());
        assert_eq!(a.len(), 500);
        assert_eq!(a.labels.iter().filter(|&&y| y == 1).count(), 250);
        let means = blob_means(&spec).unwrap();
        let d: f64 = means
            .row(0)
            .iter()
            .zip(means.row(1))
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((d - 4.0).abs() < 1e-12);
        assert!(make_blobs(&BlobSpec { n_classes: 9, dim: 16, ..spec }).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let (tr, te) = split_indices(10, 0.8, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let mut all = [tr.clone(), te].concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.8, 3).unwrap().0, tr);
        assert!(split_indices(10, 1.0, 3).is_err());
        assert!(split_indices(1, 0.5, 3).is_err());
    }
}
