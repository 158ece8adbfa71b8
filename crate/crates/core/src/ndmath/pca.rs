//! Principal component analysis on the sample covariance.

use super::matrix::{dot, Matrix};
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `k × dim`, one unit-norm component per row.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the rows of the second matrix.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    ensure_len("symmetric eigen (square)", n, a.cols())?;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);

    let scale: f64 = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m.get(p, q) * m.get(p, q))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(r, k, v.get(k, i));
        }
    }
    Ok((values, vectors))
}

/// Sample covariance with divisor `n − 1`.
pub fn covariance(data: &Matrix) -> (Vec<f64>, Matrix) {
    let mean = data.column_means();
    let d = data.cols();
    let mut cov = Matrix::zeros(d, d);
    for row in data.iter_rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                let v = cov.get(i, j) + di * (row[j] - mean[j]);
                cov.set(i, j, v);
            }
        }
    }
    let denom = (data.rows() as f64 - 1.0).max(1.0);
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    (mean, cov)
}

/// Top-`k` principal components. Each component is sign-normalized so that
/// its largest-magnitude entry is positive.
pub fn pca_fit(data: &Matrix, k: usize) -> Result<PcaBasis> {
    if data.rows() < 2 {
        return Err(Error::Degenerate(format!(
            "PCA needs at least 2 observations, got {}",
            data.rows()
        )));
    }
    if k == 0 || k > data.cols() {
        return Err(Error::InvalidConfig(format!(
            "PCA rank must be in 1..={}, got {k}",
            data.cols()
        )));
    }
    let (mean, cov) = covariance(data);
    let total: f64 = (0..cov.rows()).map(|i| cov.get(i, i)).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("PCA input has zero variance".into()));
    }
    let (values, vectors) = symmetric_eigen(&cov)?;
    let d = data.cols();
    let mut components = Matrix::zeros(k, d);
    for r in 0..k {
        let row = vectors.row(r);
        let pivot = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > row[best].abs() { i } else { best });
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..d {
            components.set(r, c, sign * row[c]);
        }
    }
    Ok(PcaBasis {
        mean,
        components,
        explained_variance: values[..k].iter().map(|v| v.max(0.0)).collect(),
    })
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.components.rows()
    }

    /// Component scores of `x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("pca input", self.dim(), x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.iter_rows().map(|c| dot(c, &centered)).collect())
    }

    /// `mean + Σ_k ⟨x − mean, c_k⟩ c_k`
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scores = self.project(x)?;
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter_rows().zip(scores) {
            super::matrix::axpy(s, c, &mut out);
        }
        Ok(out)
    }
}

pub fn pca_reconstruct(basis: &PcaBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.reconstruct(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::rng::Rng;

    #[test]
    fn diagonal_matrix_eigen() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert_eq!(vecs.row(0)[1].abs(), 1.0);
    }

    #[test]
    fn line_cloud_gives_diagonal_direction() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, i as f64]).collect();
        let basis = pca_fit(&Matrix::from_rows(&rows).unwrap(), 1).unwrap();
        let c = basis.components.row(0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - h).abs() < 1e-12 && (c[1] - h).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn exact_subspace_reconstructs() {
        let mut rng = Rng::new(4);
        let dirs = [rng.normal_vec(6), rng.normal_vec(6)];
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, b) = (rng.normal(), rng.normal());
                (0..6).map(|i| 1.0 + a * dirs[0][i] + b * dirs[1][i]).collect()
            })
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let basis = pca_fit(&data, 2).unwrap();
        for r in &rows {
            let rec = basis.reconstruct(r).unwrap();
            for (a, b) in rec.iter().zip(r) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        // mean and mean + first component reproduce exactly
        assert_eq!(basis.reconstruct(&basis.mean).unwrap().len(), 6);
        let m = basis.reconstruct(&basis.mean).unwrap();
        for (a, b) in m.iter().zip(&basis.mean) {
            assert!((a - b).abs() < 1e-12);
        }
        let x: Vec<f64> = basis
            .mean
            .iter()
            .zip(basis.components.row(0))
            .map(|(m, c)| m + c)
            .collect();
        for (a, b) in basis.reconstruct(&x).unwrap().iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn errors() {
        let data = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(pca_fit(&data, 1), Err(Error::Degenerate(_))));
        let data = Matrix::from_rows(&[[1.0, 2.0], [3.0, 5.0]]).unwrap();
        assert!(matches!(pca_fit(&data, 3), Err(Error::InvalidConfig(_))));
        let one = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(pca_fit(&one, 1).is_err());
        let basis = pca_fit(&data, 1).unwrap();
        assert!(basis.reconstruct(&[1.0]).is_err());
    }
}
