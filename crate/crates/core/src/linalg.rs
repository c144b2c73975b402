//! Small dense linear algebra: row-major matrices, cyclic Jacobi for real
//! symmetric matrices and partially pivoted elimination for the tiny complex
//! systems behind the fitted quadrature rules.

use std::ops::{Index, IndexMut};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::real::{Cplx, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

impl<E: Copy + Zero> Mat<E> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![E::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<E>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[E] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[E] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map<F: Copy + Zero>(&self, f: impl Fn(E) -> F) -> Mat<F> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

impl<E: Copy + Zero + One> Mat<E> {
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { E::one() } else { E::zero() })
    }
}

impl<E> Index<(usize, usize)> for Mat<E> {
    type Output = E;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &E {
        &self.data[i * self.cols + j]
    }
}

impl<E> IndexMut<(usize, usize)> for Mat<E> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut E {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mat<T> {
    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|x| *x * *x).sum::<T>().sqrt()
    }

    /// `self + alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Mat<T>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * *b;
        }
    }

    /// Real matrix times complex vector.
    pub fn apply_complex(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (a, x) in row.iter().zip(v) {
                    acc += *x * *a;
                }
                acc
            })
            .collect()
    }

    /// Transpose of `self` applied to a complex vector.
    pub fn apply_transpose_complex(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![Cplx::new(T::zero(), T::zero()); self.cols];
        for (i, x) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += *x * *a;
            }
        }
        out
    }

    /// Largest |a_ij − a_ji|.
    pub fn asymmetry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }
}

/// Eigen-decomposition `A = V·diag(values)·Vᵀ` of a real symmetric matrix,
/// eigenvalues ascending, eigenvectors in the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Mat<T>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 60;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass falls below
/// `1e-14·‖A‖_F` (or a small multiple of machine epsilon for low precision).
pub fn jacobi_eigen<T: Real>(a: &Mat<T>) -> Result<SymEigen<T>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Numerical(format!("Jacobi needs a square matrix, got {}x{}", n, a.cols())));
    }
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite entry in symmetric eigenproblem".into()));
    }
    let mut m = a.clone();
    let mut v = Mat::<T>::identity(n);
    let scale = a.frobenius();
    let tol = T::tol(1e-14) * scale;
    let off = |m: &Mat<T>| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps (n = {n})")));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors, sweeps })
}

/// Solves a small dense complex system by Gaussian elimination with partial
/// pivoting. Also returns a 1-norm condition number estimate from the explicit inverse.
pub fn solve_complex<T: Real>(a: &Mat<Cplx<T>>, b: &[Cplx<T>]) -> Option<(Vec<Cplx<T>>, T)> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    assert_eq!(n, b.len());
    // augmented with identity for the inverse
    let w = 2 * n + 1;
    let mut m = Mat::<Cplx<T>>::zeros(n, w);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[(i, j)];
        }
        m[(i, n + i)] = Cplx::new(T::one(), T::zero());
        m[(i, 2 * n)] = b[i];
    }
    for col in 0..n {
        let (piv, pmag) =
            (col..n).map(|r| (r, m[(r, col)].norm())).fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmag > T::zero()) || !pmag.is_finite() {
            return None;
        }
        if piv != col {
            for j in 0..w {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
        }
        let inv = Cplx::new(T::one(), T::zero()) / m[(col, col)];
        for j in col..w {
            m[(col, j)] *= inv;
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)];
                if f.norm() == T::zero() {
                    continue;
                }
                for j in col..w {
                    let sub = f * m[(col, j)];
                    m[(r, j)] -= sub;
                }
            }
        }
    }
    let x: Vec<_> = (0..n).map(|i| m[(i, 2 * n)]).collect();
    let norm1 = |get: &dyn Fn(usize, usize) -> Cplx<T>| -> T {
        (0..n).map(|j| (0..n).map(|i| get(i, j).norm()).sum::<T>()).fold(T::zero(), T::max)
    };
    let cond = norm1(&|i, j| a[(i, j)]) * norm1(&|i, j| m[(i, n + j)]);
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    Some((x, cond))
}

/// Solves a small real system (used for the polynomial limit rules).
pub fn solve_real<T: Real>(a: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let ac = a.map(|x| Cplx::new(x, T::zero()));
    let bc: Vec<_> = b.iter().map(|&x| Cplx::new(x, T::zero())).collect();
    solve_complex(&ac, &bc).map(|(x, _)| x.into_iter().map(|c| c.re).collect())
}

pub fn norm2_complex<T: Real>(v: &[Cplx<T>]) -> T {
    v.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
}
