//! Composite 4-point Lobatto rules on the spatial mesh: classical,
//! derivative-augmented, and exponentially fitted (EF).
//!
//! On a step `[X−h, X+h]` the EF rule reads
//! `∫ I ≈ h Σ a⁽⁰⁾ₙ I(X+xₙh) + h² Σ a⁽¹⁾ₙ I'(X+xₙh)` and is exact for
//! `exp(±μ₁x), exp(±μ₂x), x·exp(±μ₁x), x·exp(±μ₂x)`.
//!
//! By symmetry of the nodes the value weights are even and the derivative
//! weights odd; the odd exactness conditions then hold identically and only
//! a 4×4 system for the even functions `cosh(z s)` and `s·sinh(z s)/z`
//! (`z = μh`) remains. Both functions are entire in `Z = z²`, the second
//! being `2·∂/∂Z` of the first, so the conditions are the Hermite data
//! `F(Z₁), F'(Z₁), F(Z₂), F'(Z₂)` of one vector-valued function. For
//! moderate `|Z|` the rows are taken as the divided differences
//! `F[Z₁], F[Z₁,Z₁], F[Z₁,Z₁,Z₂], F[Z₁,Z₁,Z₂,Z₂]` summed from the Taylor
//! series, which stays well conditioned when frequencies vanish or
//! coincide and tends to the degree-7 derivative-augmented Lobatto rule.
//! Large `|Z|` uses the Hermite data directly.

use crate::error::{Error, Result};
use crate::linalg::{solve_complex, Mat};
use crate::mesh::{lobatto_abscissae, lobatto_inner, SpatialMesh};
use crate::real::{cplx, Cplx, Real};
use crate::specfun::{eta0_complex, eta1_complex, xi_complex};

/// Classical weights on `[−1, 1]` for nodes `{−1, −1/√5, 1/√5, 1}`.
pub fn classical_lobatto_weights<T: Real>() -> [T; 4] {
    let a = T::lit(1.0 / 6.0);
    let b = T::lit(5.0 / 6.0);
    [a, b, b, a]
}

/// Degree-7 derivative-augmented Lobatto rule on `[−1, 1]`: value weights and derivative weights.
pub fn hermite_lobatto_weights<T: Real>() -> ([T; 4], [T; 4]) {
    let e = T::lit(2.0 / 7.0);
    let i = T::lit(5.0 / 7.0);
    let de = T::lit(1.0 / 42.0);
    let di = T::lit(5.0).sqrt() / T::lit(42.0);
    ([e, i, i, e], [de, di, -di, -de])
}

/// Above this `max |Z|` the Taylor summation of the divided differences is replaced by the direct system.
const TAYLOR_LIMIT: f64 = 50.0;
/// Frequencies with `max |z| <` this are reported as (near-)polynomial.
pub const DEGENERATE_Z: f64 = 0.5;
/// Condition-number guard for the direct system.
pub const MAX_CONDITION: f64 = 1e10;
/// Tolerated imaginary residue of the weights, relative to their magnitude.
pub const MAX_IMAG_RESIDUE: f64 = 1e-9;

/// A 4-point EF rule tuned to a frequency pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfRule<T> {
    /// Half-width of the interval.
    pub h: T,
    /// Scaled squared frequencies `z₁² = (μ₁h)²`, `z₂² = (μ₂h)²`.
    pub z1_sq: Cplx<T>,
    pub z2_sq: Cplx<T>,
    /// Value weights `a⁽⁰⁾`.
    pub value_weights: [T; 4],
    /// Derivative weights `a⁽¹⁾` (all zero for the derivative-free variant).
    pub derivative_weights: [T; 4],
    pub with_derivatives: bool,
    /// Set when both frequencies are below [`DEGENERATE_Z`] or the rule fell back to
    /// the polynomial limit because the fitted system was ill-conditioned.
    pub degenerate: bool,
    /// Largest imaginary part discarded from the weights, relative to the weight magnitude.
    pub imag_residue: T,
}

impl<T: Real> EfRule<T> {
    /// Rule for the squared frequencies `μ₁², μ₂²` on an interval of half-width `h`.
    pub fn new(mu1_sq: Cplx<T>, mu2_sq: Cplx<T>, h: T, with_derivatives: bool) -> Result<Self> {
        let hh = h * h;
        Self::scaled(mu1_sq * hh, mu2_sq * hh, h, with_derivatives)
    }

    /// Rule for the product of two functions with local `Q̄ − λ` values `a` and `b`:
    /// `μ₁ = √a + √b`, `μ₂ = √a − √b`.
    pub fn for_pair(a: T, b: T, h: T, with_derivatives: bool) -> Result<Self> {
        let ra = csqrt(a);
        let rb = csqrt(b);
        let m1 = ra + rb;
        let m2 = ra - rb;
        Self::new(m1 * m1, m2 * m2, h, with_derivatives)
    }

    /// Rule from already scaled `z² = (μh)²`.
    pub fn scaled(z1_sq: Cplx<T>, z2_sq: Cplx<T>, h: T, with_derivatives: bool) -> Result<Self> {
        if !(h > T::zero()) {
            return Err(Error::Config(format!("EF rule needs a positive half-width, got {h}")));
        }
        let finite = |c: Cplx<T>| c.re.is_finite() && c.im.is_finite();
        if !finite(z1_sq) || !finite(z2_sq) {
            return Err(Error::Domain("non-finite EF frequency".into()));
        }
        let zmax = z1_sq.norm().max(z2_sq.norm());
        let polynomial_regime = zmax < T::lit(DEGENERATE_Z * DEGENERATE_Z);
        let solved = if zmax <= T::lit(TAYLOR_LIMIT) {
            taylor_system(z1_sq, z2_sq, with_derivatives)
        } else {
            direct_system(z1_sq, z2_sq, with_derivatives)
        };
        let (weights, degenerate) = match solved {
            Some((w, cond)) if cond <= T::lit(MAX_CONDITION) => (w, polynomial_regime),
            Some(_) | None if zmax > T::lit(TAYLOR_LIMIT) => (limit_weights(with_derivatives), true),
            _ => {
                return Err(Error::Quadrature {
                    z1: format!("{z1_sq}"),
                    z2: format!("{z2_sq}"),
                    reason: "singular exactness system".into(),
                })
            }
        };
        let scale = weights.iter().fold(T::zero(), |m, w| m.max(w.norm())).max(T::one());
        let imag = weights.iter().fold(T::zero(), |m, w| m.max(w.im.abs())) / scale;
        if imag > T::tol(MAX_IMAG_RESIDUE) {
            return Err(Error::Quadrature {
                z1: format!("{z1_sq}"),
                z2: format!("{z2_sq}"),
                reason: format!("weights not real (relative imaginary residue {imag})"),
            });
        }
        // Unknowns are the even value weights (end, inner) and odd derivative weights (end, inner).
        let (e, i) = (weights[0].re, weights[1].re);
        let value_weights = [e, i, i, e];
        let derivative_weights = if with_derivatives {
            let (de, di) = (weights[2].re, weights[3].re);
            [-de, -di, di, de]
        } else {
            [T::zero(); 4]
        };
        Ok(Self { h, z1_sq, z2_sq, value_weights, derivative_weights, with_derivatives, degenerate, imag_residue: imag })
    }

    /// Applies the rule to samples of `I` and `I'` at the four nodes.
    #[inline]
    pub fn apply(&self, values: &[T; 4], derivs: &[T; 4]) -> T {
        let mut v = T::zero();
        let mut d = T::zero();
        for j in 0..4 {
            v += self.value_weights[j] * values[j];
            d += self.derivative_weights[j] * derivs[j];
        }
        self.h * v + self.h * self.h * d
    }
}

fn csqrt<T: Real>(a: T) -> Cplx<T> {
    if a >= T::zero() {
        cplx(a.sqrt(), T::zero())
    } else {
        cplx(T::zero(), (-a).sqrt())
    }
}

fn limit_weights<T: Real>(with_derivatives: bool) -> Vec<Cplx<T>> {
    let c = |x: T| cplx(x, T::zero());
    if with_derivatives {
        let (v, d) = hermite_lobatto_weights::<T>();
        // stored as (end, inner, d_end at s = +1, d_inner at s = +r)
        vec![c(v[0]), c(v[1]), c(d[3]), c(d[2])]
    } else {
        let v = classical_lobatto_weights::<T>();
        vec![c(v[0]), c(v[1])]
    }
}

/// Row data of the even test function `cosh(√Z s)`: values at `s = 1, r`,
/// derivatives at `s = 1, r`, and the half-interval integral `∫₀¹`.
/// Each weight unknown multiplies one of the first four entries.
fn hermite_data<T: Real>(z: Cplx<T>) -> ([Cplx<T>; 5], [Cplx<T>; 5]) {
    let r = lobatto_inner::<T>();
    let rr = r * r;
    let zr = z * rr;
    // φ = cosh(√Z s): φ(s) = ξ(Z s²), φ'(s) = Z s η₀(Z s²), ∫₀¹ φ = η₀(Z)
    let phi = [xi_complex(z), xi_complex(zr), z * eta0_complex(z), z * eta0_complex(zr) * r, eta0_complex(z)];
    // χ = s sinh(√Z s)/√Z: χ(s) = s² η₀(Z s²), χ'(s) = s(η₀ + ξ)(Z s²), ∫₀¹ χ = η₁(Z)
    let chi =
        [eta0_complex(z), eta0_complex(zr) * rr, eta0_complex(z) + xi_complex(z), (eta0_complex(zr) + xi_complex(zr)) * r, eta1_complex(z)];
    (phi, chi)
}

fn direct_system<T: Real>(z1: Cplx<T>, z2: Cplx<T>, with_derivatives: bool) -> Option<(Vec<Cplx<T>>, T)> {
    let (p1, c1) = hermite_data(z1);
    let (p2, c2) = hermite_data(z2);
    if with_derivatives {
        let rows = [p1, c1, p2, c2];
        let a = Mat::from_fn(4, 4, |i, j| rows[i][j]);
        let b: Vec<_> = rows.iter().map(|r| r[4]).collect();
        solve_complex(&a, &b)
    } else {
        let rows = [p1, p2];
        let a = Mat::from_fn(2, 2, |i, j| rows[i][j]);
        let b = vec![rows[0][4], rows[1][4]];
        solve_complex(&a, &b)
    }
}

/// Divided-difference rows from the Taylor series `cosh(√Z s) = Σ Zᵏ s²ᵏ/(2k)!`.
fn taylor_system<T: Real>(z1: Cplx<T>, z2: Cplx<T>, with_derivatives: bool) -> Option<(Vec<Cplx<T>>, T)> {
    let r = lobatto_inner::<T>();
    let zero = cplx(T::zero(), T::zero());
    let nrows = if with_derivatives { 4 } else { 2 };
    let mut rows = vec![[zero; 5]; nrows];
    // divided differences of Z^k over the node sets
    //   with derivatives: (Z1), (Z1,Z1), (Z1,Z1,Z2), (Z1,Z1,Z2,Z2)
    //   value-only:       (Z1), (Z1,Z2)
    // complete homogeneous polynomials h_m are built by the recurrences
    //   h_m(S ∪ {w}) = h_m(S) + w h_{m-1}(S ∪ {w})
    let mut h1 = Vec::<Cplx<T>>::new(); // h_m(Z1)
    let mut h11 = Vec::<Cplx<T>>::new(); // h_m(Z1,Z1)
    let mut h112 = Vec::<Cplx<T>>::new(); // h_m(Z1,Z1,Z2)
    let mut h1122 = Vec::<Cplx<T>>::new(); // h_m(Z1,Z1,Z2,Z2)
    let mut h12 = Vec::<Cplx<T>>::new(); // h_m(Z1,Z2)
    let mut r_pow = T::one(); // r^(2k)
    let mut fact = T::one(); // (2k)!
    let mut converged = 0;
    for k in 0..120usize {
        let m = k; // new order index
        let z1m = if m == 0 { cplx(T::one(), T::zero()) } else { h1[m - 1] * z1 };
        h1.push(z1m);
        let v11 = z1m + if m == 0 { zero } else { z1 * h11[m - 1] };
        h11.push(v11);
        let v112 = v11 + if m == 0 { zero } else { z2 * h112[m - 1] };
        h112.push(v112);
        let v1122 = v112 + if m == 0 { zero } else { z2 * h1122[m - 1] };
        h1122.push(v1122);
        let v12 = z1m + if m == 0 { zero } else { z2 * h12[m - 1] };
        h12.push(v12);

        // data of s^(2k)/(2k)!
        let kk = T::from_usize_lossy(2 * k);
        let d = [
            T::one() / fact,
            r_pow / fact,
            if k == 0 { T::zero() } else { kk / fact },
            if k == 0 { T::zero() } else { kk * r_pow / r / fact },
            T::one() / (fact * (kk + T::one())),
        ];
        let coeffs: Vec<Cplx<T>> = if with_derivatives {
            vec![
                h1[k],
                if k >= 1 { h11[k - 1] } else { zero },
                if k >= 2 { h112[k - 2] } else { zero },
                if k >= 3 { h1122[k - 3] } else { zero },
            ]
        } else {
            vec![h1[k], if k >= 1 { h12[k - 1] } else { zero }]
        };
        let mut biggest = T::zero();
        for (row, c) in rows.iter_mut().zip(&coeffs) {
            for j in 0..5 {
                let add = *c * d[j];
                biggest = biggest.max(add.norm());
                row[j] += add;
            }
        }
        if k > 8 && biggest < T::epsilon() * T::lit(1e-3) {
            converged += 1;
            if converged > 2 {
                break;
            }
        }
        r_pow = r_pow * r * r;
        fact *= T::from_usize_lossy((2 * k + 1) * (2 * k + 2));
    }
    let a = Mat::from_fn(nrows, nrows, |i, j| rows[i][j]);
    let b: Vec<_> = rows.iter().map(|row| row[4]).collect();
    solve_complex(&a, &b)
}
/// Applies `rule` on `[−1, 1]` scaled by its half-width to complex samples of `f` and `f'`.
pub fn apply_complex<T: Real>(rule: &EfRule<T>, f: impl Fn(Cplx<T>) -> Cplx<T>, df: impl Fn(Cplx<T>) -> Cplx<T>) -> Cplx<T> {
    let mut acc = Cplx::new(T::zero(), T::zero());
    for (j, s) in lobatto_abscissae::<T>().iter().enumerate() {
        let s = Cplx::new(*s, T::zero());
        acc += f(s) * rule.value_weights[j] + df(s) * rule.derivative_weights[j];
    }
    acc * rule.h
}

/// Relative exactness residuals of a unit-half-width rule on `e^{±zs}` and `s·e^{±zs}`
/// over `[−1, 1]`, scaled by `max(|exact|, sup|f|)`.
pub fn exactness_residuals<T: Real>(rule: &EfRule<T>, z_sq: Cplx<T>) -> Vec<T> {
    let z = z_sq.sqrt();
    let two = T::lit(2.0);
    let mut out = Vec::new();
    for sign in [T::one(), -T::one()] {
        let zz = z * sign;
        let e = |s: Cplx<T>| (zz * s).exp();
        let (i0, i1) = if zz.norm() < T::lit(1e-6) {
            (Cplx::new(two, T::zero()), zz * T::lit(2.0 / 3.0))
        } else {
            (zz.sinh() * two / zz, (zz * zz.cosh() - zz.sinh()) * two / (zz * zz))
        };
        let sup = zz.re.abs().exp();
        let q0 = apply_complex(rule, e, |s| zz * e(s));
        out.push((q0 - i0).norm() / i0.norm().max(sup));
        if rule.with_derivatives {
            let q1 = apply_complex(rule, |s| s * e(s), |s| e(s) + s * zz * e(s));
            out.push((q1 - i1).norm() / i1.norm().max(sup));
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut x = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined in f64 then converted
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = T::lit(-z);
        x[n - 1 - i] = T::lit(z);
        w[i] = T::lit(wi);
        w[n - 1 - i] = T::lit(wi);
    }
    (x, w)
}

/// Samples of one factor of a product integrand, together with its local
/// `Q̄ − λ = 2μ(V̄_step − E)` per mesh step.
#[derive(Debug, Clone, Copy)]
pub struct ProductFactor<'a, T> {
    pub values: &'a [T],
    pub derivs: &'a [T],
    pub step_q: &'a [T],
}

/// Per-step EF rules of one pair of factors, reusable across weight functions.
#[derive(Debug, Clone)]
pub struct PairRules<T> {
    pub rules: Vec<EfRule<T>>,
}

impl<T: Real> PairRules<T> {
    pub fn build(u: &ProductFactor<'_, T>, z: &ProductFactor<'_, T>, mesh: &SpatialMesh<T>, with_derivatives: bool) -> Result<Self> {
        let h = mesh.step_width() * T::lit(0.5);
        let rules = (0..mesh.n_steps())
            .map(|s| EfRule::for_pair(u.step_q[s], z.step_q[s], h, with_derivatives).map_err(|e| e.at_step(s)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rules })
    }
}

/// `∫ u z dx` over the mesh with derivative-augmented EF rules.
pub fn integrate_product<T: Real>(u: &ProductFactor<'_, T>, z: &ProductFactor<'_, T>, mesh: &SpatialMesh<T>) -> Result<T> {
    let h = mesh.step_width() * T::lit(0.5);
    let mut total = T::zero();
    for s in 0..mesh.n_steps() {
        let rule = EfRule::for_pair(u.step_q[s], z.step_q[s], h, true).map_err(|e| e.at_step(s))?;
        total += apply_product(&rule, s, u, z, None);
    }
    Ok(total)
}

/// Samples of a weight function `f` at the mesh nodes, with optional derivative.
#[derive(Debug, Clone, Copy)]
pub struct WeightSamples<'a, T> {
    pub values: &'a [T],
    pub derivs: Option<&'a [T]>,
}

/// `∫ f u z dx`; the derivative-augmented EF rule is used when `f'` is known,
/// the derivative-free EF variant otherwise.
pub fn integrate_weighted_product<T: Real>(
    f: &WeightSamples<'_, T>,
    u: &ProductFactor<'_, T>,
    z: &ProductFactor<'_, T>,
    mesh: &SpatialMesh<T>,
) -> Result<T> {
    let h = mesh.step_width() * T::lit(0.5);
    let with_d = f.derivs.is_some();
    let mut total = T::zero();
    for s in 0..mesh.n_steps() {
        let rule = EfRule::for_pair(u.step_q[s], z.step_q[s], h, with_d).map_err(|e| e.at_step(s))?;
        total += apply_product(&rule, s, u, z, Some(f));
    }
    Ok(total)
}

/// Same as [`integrate_weighted_product`] with prebuilt rules.
pub fn integrate_with_rules<T: Real>(
    rules: &PairRules<T>,
    f: Option<&WeightSamples<'_, T>>,
    u: &ProductFactor<'_, T>,
    z: &ProductFactor<'_, T>,
) -> T {
    let mut total = T::zero();
    for (s, rule) in rules.rules.iter().enumerate() {
        total += apply_product(rule, s, u, z, f);
    }
    total
}

#[inline]
fn apply_product<T: Real>(
    rule: &EfRule<T>,
    step: usize,
    u: &ProductFactor<'_, T>,
    z: &ProductFactor<'_, T>,
    f: Option<&WeightSamples<'_, T>>,
) -> T {
    let base = 3 * step;
    let mut vals = [T::zero(); 4];
    let mut ders = [T::zero(); 4];
    for j in 0..4 {
        let i = base + j;
        let p = u.values[i] * z.values[i];
        let dp = u.derivs[i] * z.values[i] + u.values[i] * z.derivs[i];
        match f {
            None => {
                vals[j] = p;
                ders[j] = dp;
            }
            Some(w) => {
                vals[j] = w.values[i] * p;
                ders[j] = match w.derivs {
                    Some(fd) => fd[i] * p + w.values[i] * dp,
                    None => T::zero(),
                };
            }
        }
    }
    if !rule.with_derivatives {
        ders = [T::zero(); 4];
    }
    rule.apply(&vals, &ders)
}

/// Composite classical Lobatto integral of node samples.
pub fn integrate_lobatto<T: Real>(mesh: &SpatialMesh<T>, values: &[T]) -> T {
    mesh.integrate_nodes(values)
}

/// Composite degree-7 derivative-augmented Lobatto integral of node samples.
pub fn integrate_lobatto_hermite<T: Real>(mesh: &SpatialMesh<T>, values: &[T], derivs: &[T]) -> T {
    assert_eq!(values.len(), mesh.n_nodes());
    assert_eq!(derivs.len(), mesh.n_nodes());
    let (wv, wd) = hermite_lobatto_weights::<T>();
    let h = mesh.step_width() * T::lit(0.5);
    let mut total = T::zero();
    for s in 0..mesh.n_steps() {
        let base = 3 * s;
        let mut v = T::zero();
        let mut d = T::zero();
        for j in 0..4 {
            v += wv[j] * values[base + j];
            d += wd[j] * derivs[base + j];
        }
        total += h * v + h * h * d;
    }
    total
}
