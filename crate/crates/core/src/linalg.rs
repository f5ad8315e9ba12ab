//! Small fixed-size linear algebra shared by the element routines.

use nalgebra::{SMatrix, SVector};

pub type Vector<const D: usize> = SVector<f64, D>;
pub type Matrix<const D: usize> = SMatrix<f64, D, D>;

/// Determinant of a 2x2 or 3x3 matrix.
pub fn det<const D: usize>(m: &Matrix<D>) -> f64 {
    match D {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => unreachable!("only dimensions 1 to 3 are supported"),
    }
}

/// Cofactor matrix, `cof F = det F * F^{-T}` for invertible `F`, defined for
/// every `F` through the adjugate.
pub fn cofactor<const D: usize>(m: &Matrix<D>) -> Matrix<D> {
    let mut c = Matrix::<D>::zeros();
    match D {
        1 => c[(0, 0)] = 1.0,
        2 => {
            c[(0, 0)] = m[(1, 1)];
            c[(0, 1)] = -m[(1, 0)];
            c[(1, 0)] = -m[(0, 1)];
            c[(1, 1)] = m[(0, 0)];
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                    let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                    c[(i, j)] = m[(i1, j1)] * m[(i2, j2)] - m[(i1, j2)] * m[(i2, j1)];
                }
            }
        }
        _ => unreachable!("only dimensions 1 to 3 are supported"),
    }
    c
}

pub fn inverse<const D: usize>(m: &Matrix<D>) -> Option<Matrix<D>> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some(cofactor(m).transpose() / d)
}

/// Determinant of a square matrix of size at most 4 stored row-major in
/// `a[..n][..n]`, by Gaussian elimination with partial pivoting.
pub fn det_small(mut a: [[f64; 4]; 4], n: usize) -> f64 {
    let mut d = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            d = -d;
        }
        d *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let pivot = a[col];
            for (x, p) in a[r][col..n].iter_mut().zip(&pivot[col..n]) {
                *x -= f * p;
            }
        }
    }
    d
}

/// Unit vector along the vertical (last) axis.
pub fn vertical<const D: usize>() -> Vector<D> {
    let mut e = Vector::<D>::zeros();
    e[D - 1] = 1.0;
    e
}

/// Area-weighted normal of a (D-1)-simplex given by its `D` vertices: the
/// normal has length equal to the facet measure and follows the orientation
/// convention `n = (b - a)^perp` in 2D and `(b - a) x (c - a) / 2` in 3D.
pub fn facet_area_normal<const D: usize>(pts: &[Vector<D>]) -> Vector<D> {
    let mut n = Vector::<D>::zeros();
    match D {
        2 => {
            let t = pts[1] - pts[0];
            n[0] = t[1];
            n[1] = -t[0];
        }
        3 => {
            let u = pts[1] - pts[0];
            let v = pts[2] - pts[0];
            n[0] = 0.5 * (u[1] * v[2] - u[2] * v[1]);
            n[1] = 0.5 * (u[2] * v[0] - u[0] * v[2]);
            n[2] = 0.5 * (u[0] * v[1] - u[1] * v[0]);
        }
        _ => unreachable!("facets exist for dimensions 2 and 3"),
    }
    n
}

/// Signed measure of a simplex from its `D + 1` vertices.
pub fn simplex_volume<const D: usize>(pts: &[Vector<D>]) -> f64 {
    let mut m = Matrix::<D>::zeros();
    for k in 0..D {
        m.set_column(k, &(pts[k + 1] - pts[0]));
    }
    det(&m) / factorial(D)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Compensated (Neumaier) summation; energies are sums of many terms of
/// mixed sign whose differences drive the line search.
#[derive(Debug, Default, Clone, Copy)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cofactor_matches_det_inverse_transpose() {
        let m = Matrix::<3>::new(2.0, 0.3, -0.1, 0.2, 1.5, 0.4, -0.3, 0.1, 0.9);
        let c = cofactor(&m);
        let expected = inverse(&m).unwrap().transpose() * det(&m);
        assert!((c - expected).norm() < 1e-13);
        let m2 = Matrix::<2>::new(1.2, 0.5, -0.4, 0.7);
        let c2 = cofactor(&m2);
        assert!((c2 - inverse(&m2).unwrap().transpose() * det(&m2)).norm() < 1e-14);
    }

    #[test]
    fn small_determinant_agrees() {
        let a = [
            [1.0, 2.0, 0.0, 1.0],
            [0.5, -1.0, 3.0, 0.0],
            [2.0, 0.0, 1.0, 1.0],
            [0.0, 1.0, 1.0, 2.0],
        ];
        let m = nalgebra::Matrix4::from_fn(|i, j| a[i][j]);
        assert!((det_small(a, 4) - m.determinant()).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let acc: Accumulator = [1e16, 1.0, -1e16, 1.0].into_iter().collect();
        assert_eq!(acc.value(), 2.0);
    }
}
