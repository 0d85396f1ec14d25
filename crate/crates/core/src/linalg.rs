//! Small fixed-size vector and symmetric-matrix routines.
//!
//! Everything here works on `[T; 3]`-sized values so that the NDT and plane
//! fitting code stays generic over the scalar type without pulling in a
//! general linear-algebra crate.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zeros() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a zero or non-finite vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Outer product `self * selfᵀ`.
    #[inline]
    pub fn outer(self) -> Mat3<T> {
        let a = self.to_array();
        let mut m = [[T::zero(); 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r] * a[c];
            }
        }
        m
    }

    pub fn cast<U: Scalar>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.as_f64()),
            U::lit(self.y.as_f64()),
            U::lit(self.z.as_f64()),
        )
    }

    /// Angle to `other` in radians, in `[0, π]`.
    pub fn angle_to(self, other: Self) -> T {
        let c = self.dot(other) / (self.norm() * other.norm());
        c.max(-T::one()).min(T::one()).acos()
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Scalar> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3×3 matrix.
pub type Mat3<T> = [[T; 3]; 3];

pub fn mat3_zeros<T: Scalar>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

pub fn mat3_identity<T: Scalar>() -> Mat3<T> {
    let mut m = mat3_zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn mat3_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = mat3_zeros();
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn mat3_transpose<T: Scalar>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = *a;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            out[c][r] = *v;
        }
    }
    out
}

pub fn mat3_vec<T: Scalar>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    let a = v.to_array();
    let row = |r: usize| m[r][0] * a[0] + m[r][1] * a[1] + m[r][2] * a[2];
    Vec3::new(row(0), row(1), row(2))
}

/// Eigen-decomposition of a symmetric 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen3<T> {
    /// Eigenvalues, sorted descending.
    pub values: [T; 3],
    /// Unit eigenvectors, `vectors[i]` belongs to `values[i]`.
    pub vectors: [Vec3<T>; 3],
}

/// Cyclic Jacobi eigen-solver for symmetric 3×3 matrices.
///
/// Only the upper triangle of `m` is read.
pub fn sym_eigen3<T: Scalar>(m: &Mat3<T>) -> SymEigen3<T> {
    let mut a = *m;
    a[1][0] = a[0][1];
    a[2][0] = a[0][2];
    a[2][1] = a[1][2];
    let mut v = mat3_identity::<T>();
    let scale: T = a.iter().flatten().map(|x| *x * *x).sum();
    let tol = T::epsilon() * T::epsilon() * scale;

    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off <= tol || off == T::zero() {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == T::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (apq + apq);
            let t = theta.signum() / (theta.abs() + theta.hypot(T::one()));
            let c = T::one() / t.hypot(T::one());
            let s = t * c;

            let mut rot = mat3_identity::<T>();
            rot[p][p] = c;
            rot[q][q] = c;
            rot[p][q] = s;
            rot[q][p] = -s;
            a = mat3_mul(&mat3_transpose(&rot), &mat3_mul(&a, &rot));
            a[p][q] = T::zero();
            a[q][p] = T::zero();
            v = mat3_mul(&v, &rot);
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        a[j][j]
            .partial_cmp(&a[i][i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let column = |i: usize| Vec3::new(v[0][i], v[1][i], v[2][i]);
    SymEigen3 {
        values: order.map(|i| a[i][i]),
        vectors: order.map(|i| {
            let col = column(i);
            col.normalized().unwrap_or(col)
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(e: &SymEigen3<f64>) -> Mat3<f64> {
        let mut m = mat3_zeros::<f64>();
        for i in 0..3 {
            let o = e.vectors[i].outer();
            for r in 0..3 {
                for c in 0..3 {
                    m[r][c] += e.values[i] * o[r][c];
                }
            }
        }
        m
    }

    #[test]
    fn diagonal_matrix_sorted() {
        let m: Mat3<f64> = [[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let e = sym_eigen3(&m);
        assert_eq!(e.values, [3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0].y.abs(), 1.0);
        assert_eq!(e.vectors[2].x.abs(), 1.0);
    }

    #[test]
    fn matches_nalgebra_on_random_spd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let g: [[f64; 3]; 3] =
                std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            let m = mat3_mul(&g, &mat3_transpose(&g));
            let ours = sym_eigen3(&m);
            let na = nalgebra::Matrix3::from_fn(|r, c| m[r][c]).symmetric_eigen();
            let mut theirs: Vec<f64> = na.eigenvalues.iter().copied().collect();
            theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for i in 0..3 {
                assert!(
                    (ours.values[i] - theirs[i]).abs() < 1e-12,
                    "{ours:?} vs {theirs:?}"
                );
            }
            let back = reconstruct(&ours);
            for r in 0..3 {
                for c in 0..3 {
                    assert!((back[r][c] - m[r][c]).abs() < 1e-12);
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    let d = ours.vectors[i].dot(ours.vectors[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn f32_decomposition_reconstructs() {
        let m: Mat3<f32> = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]];
        let e = sym_eigen3(&m);
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
        let trace: f32 = e.values.iter().sum();
        assert!((trace - 8.0).abs() < 1e-5);
    }
}
