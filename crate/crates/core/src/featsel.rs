//! Chi-square ranking of binary features against class labels.

use crate::bitvec::BitMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScores {
    pub scores: Vec<f64>,
    /// Top-k feature indices, score descending, index ascending on ties.
    pub selected: Vec<usize>,
}

/// Chi-square statistic of every bit column.
///
/// For feature `f` the observed count of class `c` is the number of class-`c`
/// rows with the bit set; the expected count spreads the feature's total
/// count over classes in proportion to class size. Columns that are never
/// set score 0.
pub fn chi2_scores(bits: &BitMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    let n = bits.n_rows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Label(format!(
            "chi-square scoring needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let k = classes.len();
    let n_bits = bits.n_bits();
    // observed[c * n_bits + f]
    let mut observed = vec![0usize; k * n_bits];
    let mut class_sizes = vec![0usize; k];
    for (i, y) in labels.iter().enumerate() {
        let c = classes.binary_search(y).unwrap();
        class_sizes[c] += 1;
        let counts = &mut observed[c * n_bits..(c + 1) * n_bits];
        for (w, &word) in bits.row_words(i).iter().enumerate() {
            let mut word = word;
            while word != 0 {
                let b = word.trailing_zeros() as usize;
                counts[w * 64 + b] += 1;
                word &= word - 1;
            }
        }
    }
    let scores = (0..n_bits)
        .map(|f| {
            let total: usize = (0..k).map(|c| observed[c * n_bits + f]).sum();
            if total == 0 {
                return 0.0;
            }
            (0..k)
                .map(|c| {
                    let expected = total as f64 * class_sizes[c] as f64 / n as f64;
                    let diff = observed[c * n_bits + f] as f64 - expected;
                    diff * diff / expected
                })
                .sum()
        })
        .collect();
    Ok(scores)
}

/// Indices of the `k` largest scores (ties broken by ascending index).
pub fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Param(format!(
            "k must be in 1..={}, got {k}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

pub fn select_k_best(bits: &BitMatrix, labels: &[usize], k: usize) -> Result<FeatureScores> {
    if k == 0 || k > bits.n_bits() {
        return Err(Error::Param(format!(
            "k must be in 1..={}, got {k}",
            bits.n_bits()
        )));
    }
    let scores = chi2_scores(bits, labels)?;
    let selected = top_k(&scores, k)?;
    Ok(FeatureScores { scores, selected })
}
