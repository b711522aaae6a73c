use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Projective map of the plane, scaled so the bottom-right entry is 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    fn from_matrix(h: &Matrix3<f64>) -> Result<Self> {
        let s = h[(2, 2)];
        if s.abs() < 1e-12 {
            return Err(Error::Degenerate("homography maps the origin to infinity".into()));
        }
        let h = h / s;
        if h.determinant().abs() <= 1e-9 {
            return Err(Error::Degenerate("homography is singular".into()));
        }
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = h[(r, c)];
            }
        }
        Ok(Self { m })
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.matrix() * Vector3::new(p[0], p[1], 1.0);
        [v[0] / v[2], v[1] / v[2]]
    }
}

/// Similarity that moves the centroid to the origin with mean distance sqrt(2).
fn normalizer(points: &[[f64; 2]]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean = points
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean < 1e-12 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = t * Vector3::new(p[0], p[1], 1.0);
    [v[0] / v[2], v[1] / v[2]]
}

/// Normalized direct linear transform; returns the homography and its reprojection RMS.
pub fn homography_dlt(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Result<(Homography, f64)> {
    if src.len() != dst.len() {
        return Err(Error::Dimension {
            context: "homography correspondences",
            left: vec![src.len()],
            right: vec![dst.len()],
        });
    }
    if src.len() < 4 {
        return Err(Error::Degenerate(format!(
            "{} correspondences, need at least 4",
            src.len()
        )));
    }
    let ts = normalizer(src)?;
    let td = normalizer(dst)?;
    // at least 9 rows so the full right singular basis is available
    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&p, &q)) in src.iter().zip(dst).enumerate() {
        let [x, y] = transform(&ts, p);
        let [u, v] = transform(&td, q);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    // a unique solution needs rank 8
    if sv[7] <= 1e-10 * sv[0] {
        return Err(Error::Degenerate(format!(
            "correspondence system is rank deficient (singular values {sv:?})"
        )));
    }
    let null = v_t.row(order[8]);
    let hn = Matrix3::from_fn(|r, c| null[3 * r + c]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("destination normalizer".into()))?;
    let h = Homography::from_matrix(&(td_inv * hn * ts))?;
    let sq: f64 = src
        .iter()
        .zip(dst)
        .map(|(&p, &q)| {
            let r = h.apply(p);
            (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2)
        })
        .sum();
    Ok((h, (sq / src.len() as f64).sqrt()))
}
