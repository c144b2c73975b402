//! The constant-reference propagation kernels ξ(Z), η₀(Z) and η₁(Z).
//!
//! For `Z = 2μ(V̄ − E)h²` the solution of `y'' = (Z/h²) y` over a step of
//! width `h` is carried by `ξ(Z) = cosh(√Z)` and `η₀(Z) = sinh(√Z)/√Z`
//! (trigonometric forms for `Z < 0`). `η₁(Z) = (ξ(Z) − η₀(Z))/Z`.

use crate::error::{Error, Result};
use crate::real::{Cplx, Real};

/// Below this magnitude ξ and η₀ switch to their four-term Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-3;

/// Below this magnitude η₁ is summed as a power series; the closed form
/// `(ξ − η₀)/Z` loses about `log10(1/|Z|)` digits to cancellation.
pub const ETA1_SERIES_THRESHOLD: f64 = 1.0;

fn check<T: Real>(z: T) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite CP argument Z = {z}")))
    }
}

/// `ξ(Z)`: `cosh(√Z)` for `Z ≥ 0`, `cos(√−Z)` for `Z < 0`.
pub fn xi<T: Real>(z: T) -> Result<T> {
    check(z)?;
    Ok(xi_raw(z))
}

/// `η_s(Z)` for `s ∈ {0, 1}`.
pub fn eta<T: Real>(z: T, s: usize) -> Result<T> {
    check(z)?;
    match s {
        0 => Ok(eta0_raw(z)),
        1 => Ok(eta1_raw(z)),
        _ => Err(Error::Domain(format!("η_{s} is not provided (only s = 0, 1)"))),
    }
}

#[inline]
pub(crate) fn xi_raw<T: Real>(z: T) -> T {
    if z.abs() < T::lit(SERIES_THRESHOLD) {
        T::one() + z * (T::lit(0.5) + z * (T::lit(1.0 / 24.0) + z * T::lit(1.0 / 720.0)))
    } else if z > T::zero() {
        z.sqrt().cosh()
    } else {
        (-z).sqrt().cos()
    }
}

/// `(ξ(Z), η₀(Z))` sharing one square root and one exponential or sine/cosine pair.
#[inline]
pub(crate) fn xi_eta0<T: Real>(z: T) -> (T, T) {
    if z.abs() < T::lit(SERIES_THRESHOLD) {
        (xi_raw(z), eta0_raw(z))
    } else if z > T::zero() {
        let s = z.sqrt();
        let em = s.exp_m1();
        let e = em + T::one();
        let half = T::lit(0.5);
        ((e + e.recip()) * half, (em + em / e) * half / s)
    } else {
        let s = (-z).sqrt();
        let (sn, cs) = s.sin_cos();
        (cs, sn / s)
    }
}

#[inline]
pub(crate) fn eta0_raw<T: Real>(z: T) -> T {
    if z.abs() < T::lit(SERIES_THRESHOLD) {
        T::one() + z * (T::lit(1.0 / 6.0) + z * (T::lit(1.0 / 120.0) + z * T::lit(1.0 / 5040.0)))
    } else if z > T::zero() {
        let s = z.sqrt();
        s.sinh() / s
    } else {
        let s = (-z).sqrt();
        s.sin() / s
    }
}

#[inline]
pub(crate) fn eta1_raw<T: Real>(z: T) -> T {
    if z.abs() < T::lit(ETA1_SERIES_THRESHOLD) {
        eta1_series(z)
    } else {
        (xi_raw(z) - eta0_raw(z)) / z
    }
}

// η₁(Z) = Σ_k Z^k (2k+2)/(2k+3)!
fn eta1_series<T: Real>(z: T) -> T {
    let mut sum = T::zero();
    let mut pow = T::one();
    let mut fact = T::lit(6.0); // (2k+3)! at k = 0
    for k in 0..20usize {
        let term = pow * T::from_usize_lossy(2 * k + 2) / fact;
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() * T::lit(0.25) {
            break;
        }
        pow *= z;
        fact *= T::from_usize_lossy((2 * k + 4) * (2 * k + 5));
    }
    sum
}

/// Complex `ξ(Z) = cosh(√Z)`; the branch of the root is irrelevant.
pub fn xi_complex<T: Real>(z: Cplx<T>) -> Cplx<T> {
    if z.norm() < T::lit(SERIES_THRESHOLD) {
        let c = |x: f64| Cplx::new(T::lit(x), T::zero());
        c(1.0) + z * (c(0.5) + z * (c(1.0 / 24.0) + z * c(1.0 / 720.0)))
    } else {
        z.sqrt().cosh()
    }
}

/// Complex `η₀(Z) = sinh(√Z)/√Z`.
pub fn eta0_complex<T: Real>(z: Cplx<T>) -> Cplx<T> {
    if z.norm() < T::lit(SERIES_THRESHOLD) {
        let c = |x: f64| Cplx::new(T::lit(x), T::zero());
        c(1.0) + z * (c(1.0 / 6.0) + z * (c(1.0 / 120.0) + z * c(1.0 / 5040.0)))
    } else {
        let s = z.sqrt();
        s.sinh() / s
    }
}

/// Complex `η₁(Z) = (ξ(Z) − η₀(Z))/Z`.
pub fn eta1_complex<T: Real>(z: Cplx<T>) -> Cplx<T> {
    if z.norm() < T::lit(ETA1_SERIES_THRESHOLD) {
        let mut sum = Cplx::new(T::zero(), T::zero());
        let mut pow = Cplx::new(T::one(), T::zero());
        let mut fact = T::lit(6.0);
        for k in 0..20usize {
            let term = pow * (T::from_usize_lossy(2 * k + 2) / fact);
            sum += term;
            if term.norm() <= T::epsilon() * sum.norm() * T::lit(0.25) {
                break;
            }
            pow *= z;
            fact *= T::from_usize_lossy((2 * k + 4) * (2 * k + 5));
        }
        sum
    } else {
        (xi_complex(z) - eta0_complex(z)) / z
    }
}
