use nalgebra::{DMatrix, SymmetricEigen};

use crate::event::Day;

use super::BuildError;

/// Principal-component projection of `embeddings` (rows are documents) to
/// `reduced_dim` columns, followed by one column `lambda · day`.
///
/// Components are ordered by decreasing variance and each is sign-fixed so
/// its largest-magnitude loading is positive, which makes the output a pure
/// function of the input.
pub fn time_aware_features(
    embeddings: &[Vec<f64>],
    times: &[Day],
    lambda: f64,
    reduced_dim: usize,
) -> Result<Vec<Vec<f64>>, BuildError> {
    if embeddings.len() != times.len() {
        return Err(BuildError::Invalid(format!(
            "{} embeddings for {} timestamps",
            embeddings.len(),
            times.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(BuildError::Invalid("lambda must be non-negative".into()));
    }
    let n = embeddings.len();
    let d = embeddings.first().map_or(0, Vec::len);
    if embeddings.iter().any(|row| row.len() != d) {
        return Err(BuildError::Invalid("embedding rows differ in length".into()));
    }
    if reduced_dim > d {
        return Err(BuildError::DimensionTooLarge { requested: reduced_dim, available: d });
    }
    let reduced = principal_components(embeddings, n, d, reduced_dim);
    Ok(reduced
        .into_iter()
        .zip(times)
        .map(|(mut row, &t)| {
            row.push(lambda * t as f64);
            row
        })
        .collect())
}

fn principal_components(rows: &[Vec<f64>], n: usize, d: usize, k: usize) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    if k == 0 {
        return vec![Vec::new(); n];
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(d, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            basis[(r, c)] = sign * v[r];
        }
    }
    let projected = centered * basis;
    (0..n).map(|i| projected.row(i).iter().copied().collect()).collect()
}
