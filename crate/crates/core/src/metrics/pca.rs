//! PCA projection via power iteration with deflation.

use crate::numerics::all_finite;
use crate::{Error, Result};

/// Mean-centered projection onto the top principal directions.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// One coordinate row per input sample.
    pub coords: Vec<Vec<f64>>,
    pub dims: usize,
    /// True when the data rank was below `dims`; the remaining
    /// coordinates are zero.
    pub rank_deficient: bool,
    pub eigenvalues: Vec<f64>,
}

/// Project `embeddings` onto the top `dims` principal directions, in
/// descending eigenvalue order. Sign convention: the first non-zero
/// loading of each direction is positive.
pub fn pca_project(embeddings: &[Vec<f64>], dims: usize) -> Result<PcaProjection> {
    if dims == 0 {
        return Err(Error::InvalidArgument("pca_project: dims must be positive".into()));
    }
    if embeddings.len() < dims {
        return Err(Error::InvalidArgument(format!(
            "pca_project: {} samples for {} dimensions",
            embeddings.len(),
            dims
        )));
    }
    let d = embeddings[0].len();
    for e in embeddings {
        if e.len() != d {
            return Err(Error::Shape("pca_project: ragged embeddings".into()));
        }
        if !all_finite(e) {
            return Err(Error::NonFinite("pca_project input".into()));
        }
    }
    let n = embeddings.len();

    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, x) in mean.iter_mut().zip(e.iter()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.iter().zip(mean.iter()).map(|(x, m)| x - m).collect())
        .collect();

    // Covariance (divisor n - 1; the projection does not depend on it).
    let scale = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = vec![0.0; d * d];
    for row in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= scale;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let eig_floor = 1e-12 * trace.max(1.0);

    let mut directions = Vec::with_capacity(dims);
    let mut eigenvalues = Vec::with_capacity(dims);
    let mut rank_deficient = false;
    for _ in 0..dims {
        let (lambda, mut v) = power_iteration(&cov, d);
        if lambda <= eig_floor {
            rank_deficient = true;
            directions.push(vec![0.0; d]);
            eigenvalues.push(0.0);
            continue;
        }
        // First non-zero loading positive.
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        directions.push(v);
        eigenvalues.push(lambda);
    }

    let coords = centered
        .iter()
        .map(|row| {
            directions
                .iter()
                .map(|dir| row.iter().zip(dir.iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection { coords, dims, rank_deficient, eigenvalues })
}

fn power_iteration(cov: &[f64], d: usize) -> (f64, Vec<f64>) {
    // Deterministic non-degenerate start.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 / (i + 1) as f64).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let mut w = vec![0.0; d];
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += cov[i * d + j] * v[j];
            }
            w[i] = s;
        }
        let new_lambda: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let wnorm = normalize(&mut w);
        if wnorm == 0.0 {
            return (0.0, v);
        }
        let diff: f64 = v
            .iter()
            .zip(w.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        // Sign flips oscillate for negative eigenvalues; compare against
        // the flipped vector too.
        let diff_neg: f64 = v
            .iter()
            .zip(w.iter())
            .map(|(a, b)| (a + b) * (a + b))
            .sum::<f64>()
            .sqrt();
        v = w;
        lambda = new_lambda;
        if diff.min(diff_neg) < 1e-13 {
            break;
        }
    }
    (lambda.abs(), v)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_have_zero_second_coordinate() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 1.5, i as f64 * -3.0]).collect();
        let proj = pca_project(&pts, 2).unwrap();
        assert!(proj.rank_deficient);
        for row in &proj.coords {
            assert!(row[1].abs() < 1e-9, "{row:?}");
        }
    }

    #[test]
    fn projection_is_isometric_on_planar_data() {
        // Points exactly in a 2D subspace of R^4: pairwise distances are
        // preserved by the projection.
        let basis = ([0.5, 0.5, 0.5, 0.5], [0.5, -0.5, 0.5, -0.5]);
        let coeffs = [(0.0, 0.0), (1.0, 0.0), (0.0, 2.0), (3.0, 1.0), (-1.0, 1.5)];
        let pts: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|(a, b)| (0..4).map(|i| a * basis.0[i] + b * basis.1[i]).collect())
            .collect();
        let proj = pca_project(&pts, 2).unwrap();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let orig: f64 = (0..4)
                    .map(|c| (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]))
                    .sum::<f64>()
                    .sqrt();
                let projd: f64 = (0..2)
                    .map(|c| {
                        (proj.coords[i][c] - proj.coords[j][c])
                            * (proj.coords[i][c] - proj.coords[j][c])
                    })
                    .sum::<f64>()
                    .sqrt();
                assert!((orig - projd).abs() < 1e-9, "pair ({i},{j}): {orig} vs {projd}");
            }
        }
    }

    #[test]
    fn fixed_four_point_set_matches_reference_eigendecomposition() {
        // Mean zero; covariance diag(2/3, 8/3), so PC1 = +y, PC2 = +x with
        // the positive-first-loading convention.
        let pts = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 2.0],
            vec![0.0, -2.0],
        ];
        let proj = pca_project(&pts, 2).unwrap();
        let expected = [[0.0, 1.0], [0.0, -1.0], [2.0, 0.0], [-2.0, 0.0]];
        for (row, exp) in proj.coords.iter().zip(expected.iter()) {
            assert!((row[0] - exp[0]).abs() < 1e-9, "{row:?} vs {exp:?}");
            assert!((row[1] - exp[1]).abs() < 1e-9);
        }
        assert!((proj.eigenvalues[0] - 8.0 / 3.0).abs() < 1e-9);
        assert!((proj.eigenvalues[1] - 2.0 / 3.0).abs() < 1e-9);
        assert!(!proj.rank_deficient);
    }

    #[test]
    fn coordinates_have_zero_mean() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let proj = pca_project(&pts, 2).unwrap();
        for c in 0..2 {
            let mean: f64 =
                proj.coords.iter().map(|r| r[c]).sum::<f64>() / proj.coords.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_too_few_samples_and_ragged_input() {
        assert!(pca_project(&[vec![1.0, 2.0]], 2).is_err());
        assert!(pca_project(&[vec![1.0], vec![1.0, 2.0]], 1).is_err());
    }
}
