//! 2×2 real matrices and their eigenvalues.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Row-major 2×2 real matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.0.iter().flatten().zip(other.0.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.0[0][0] * v[0] + self.0[0][1] * v[1], self.0[1][0] * v[0] + self.0[1][1] * v[1]]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let [[a, b], [c, e]] = self.0;
        Some(Mat2::new(e / d, -b / d, -c / d, a / d))
    }

    /// Solve `self · x = rhs`.
    pub fn solve(&self, rhs: [f64; 2]) -> Option<[f64; 2]> {
        self.inverse().map(|inv| inv.apply(rhs))
    }

    /// Eigenvalues ordered by decreasing modulus (real part breaks ties).
    ///
    /// The discriminant is formed as `((a-d)/2)^2 + bc`, which avoids the
    /// cancellation of `tr^2/4 - det` when both eigenvalues sit close to
    /// the same value (e.g. multipliers `1 - 1e-11`).
    pub fn eigenvalues(&self) -> (Complex64, Complex64) {
        let [[a, b], [c, d]] = self.0;
        let half_tr = 0.5 * (a + d);
        let half_diff = 0.5 * (a - d);
        let disc = half_diff * half_diff + b * c;
        let (l1, l2) = if disc >= 0.0 {
            let r = disc.sqrt();
            (Complex64::new(half_tr + r, 0.0), Complex64::new(half_tr - r, 0.0))
        } else {
            let r = (-disc).sqrt();
            (Complex64::new(half_tr, r), Complex64::new(half_tr, -r))
        };
        if l2.norm() > l1.norm() {
            (l2, l1)
        } else {
            (l1, l2)
        }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = self.0;
        let b = rhs.0;
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self.0;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += rhs.0[i][j];
            }
        }
        Mat2(out)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut out = self.0;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell -= rhs.0[i][j];
            }
        }
        Mat2(out)
    }
}

/// Ordinary least-squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of `log(ys)` against `log(xs)`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let lx: Vec<f64> = xs.iter().map(|x| x.abs().ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    if lx.iter().chain(&ly).any(|v| !v.is_finite()) {
        return None;
    }
    linear_fit(&lx, &ly).map(|(s, _)| s)
}

/// Least-squares polynomial fit of the given degree; coefficients in
/// increasing powers. Solved through the normal equations with partial
/// pivoting, which is adequate for the degrees (≤ 4) used here.
#[allow(clippy::needless_range_loop)]
pub fn poly_fit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Vec<f64>> {
    let m = degree + 1;
    if xs.len() < m {
        return None;
    }
    let mut ata = vec![vec![0.0; m + 1]; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut powers = vec![1.0; m];
        for k in 1..m {
            powers[k] = powers[k - 1] * x;
        }
        for i in 0..m {
            for j in 0..m {
                ata[i][j] += powers[i] * powers[j];
            }
            ata[i][m] += powers[i] * y;
        }
    }
    for col in 0..m {
        let pivot = (col..m).max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))?;
        if ata[pivot][col].abs() < 1e-300 {
            return None;
        }
        ata.swap(col, pivot);
        for row in 0..m {
            if row != col {
                let factor = ata[row][col] / ata[col][col];
                for k in col..=m {
                    ata[row][k] -= factor * ata[col][k];
                }
            }
        }
    }
    Some((0..m).map(|i| ata[i][m] / ata[i][i]).collect())
}

pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_eigenvalues_on_unit_circle() {
        let (l1, l2) = Mat2::rotation(0.3).eigenvalues();
        assert!((l1.norm() - 1.0).abs() < 1e-15);
        assert!((l1.arg().abs() - 0.3).abs() < 1e-15);
        assert!((l1 - l2.conj()).norm() < 1e-15);
    }

    #[test]
    fn near_identity_real_pair_is_resolved() {
        let m = Mat2::new(1.0 - 2.4e-11, 0.0, 3e-12, 1.0 - 7.2e-11);
        let (l1, l2) = m.eigenvalues();
        assert!((l1.re - (1.0 - 2.4e-11)).abs() < 1e-15);
        assert!((l2.re - (1.0 - 7.2e-11)).abs() < 1e-15);
        assert_eq!(l1.im, 0.0);
    }

    #[test]
    fn poly_fit_recovers_quadratic() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x - 3.0 * x * x).collect();
        let c = poly_fit(&xs, &ys, 2).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!((c[1] - 2.0).abs() < 1e-12);
        assert!((c[2] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_log_slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
    }
}
