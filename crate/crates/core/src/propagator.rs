//! Time stepping of the coefficient system `i dC/dt = (diag(E) + ΔV(t)) C`
//! inside one sector.
//!
//! Over a substep `[t_a, t_a + h]` the matrix is fitted by
//! `H(t_a + δ) ≈ H₀ + H₁·h·P₁*(δ/h)`, `P₁*(s) = 2s − 1`. With `H₀ = DΛDᵀ` the
//! order-2 step is `D e^{−iΛh} Dᵀ` (midpoint `H`), and the order-4 step adds the
//! first modified-Neumann term: `D e^{−iΛh}(I + N¹(h)) Dᵀ`.

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, Mat};
use crate::real::{Cplx, Real};
use crate::sector::{CoefficientState, TimeSector};

/// Time-stepping order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TimeOrder {
    Two,
    #[default]
    Four,
}

impl TimeOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            2 => Ok(TimeOrder::Two),
            4 => Ok(TimeOrder::Four),
            _ => Err(Error::Config(format!("time order must be 2 or 4, got {order}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            TimeOrder::Two => 2,
            TimeOrder::Four => 4,
        }
    }
}

/// Substep settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig<T> {
    pub order: TimeOrder,
    pub dt: T,
}

/// Relative tolerance on `width / dt` being an integer.
const SUBSTEP_TOLERANCE: f64 = 1e-9;

/// `H(t) = diag(Eₙ) + ΔV(t)`.
pub fn hamiltonian<T: Real>(sector: &TimeSector<T>, t: T) -> Result<Mat<T>> {
    let mut h = sector.delta_v(t)?;
    for (i, e) in sector.energies().into_iter().enumerate() {
        h[(i, i)] += e;
    }
    Ok(h)
}

/// Two-point Gauss fit `(H₀, H₁)` of `H` over `[t_a, t_b]`.
pub fn legendre_fit<T: Real>(sector: &TimeSector<T>, t_a: T, t_b: T) -> Result<(Mat<T>, Mat<T>)> {
    let h = t_b - t_a;
    let half = h * T::lit(0.5);
    let off = h / (T::lit(2.0) * T::lit(3.0).sqrt());
    let h_1 = hamiltonian(sector, t_a + half - off)?;
    let h_2 = hamiltonian(sector, t_a + half + off)?;
    let n = h_1.rows();
    let slope = T::lit(3.0).sqrt() / (T::lit(2.0) * h);
    let h0 = Mat::from_fn(n, n, |i, j| (h_1[(i, j)] + h_2[(i, j)]) * T::lit(0.5));
    let h1 = Mat::from_fn(n, n, |i, j| (h_2[(i, j)] - h_1[(i, j)]) * slope);
    Ok((h0, h1))
}

/// Diagonalized substep data.
#[derive(Debug, Clone)]
pub struct SubstepOperators<T> {
    pub h: T,
    pub h0: Mat<T>,
    pub h1: Mat<T>,
    /// Orthogonal `D` with `H₀ = D·diag(Λ)·Dᵀ`.
    pub d: Mat<T>,
    pub lambda: Vec<T>,
    /// `DᵀH₁D`.
    pub h1_diag: Mat<T>,
}

impl<T: Real> SubstepOperators<T> {
    pub fn new(h: T, h0: Mat<T>, h1: Mat<T>) -> Result<Self> {
        let eig = jacobi_eigen(&h0)?;
        let d = eig.vectors;
        let h1_diag = d.transpose().matmul(&h1).matmul(&d);
        Ok(Self { h, h0, h1, d, lambda: eig.values, h1_diag })
    }

    /// `max |DDᵀ − I|`.
    pub fn orthogonality_defect(&self) -> T {
        let p = self.d.matmul(&self.d.transpose());
        let n = p.rows();
        Mat::from_fn(n, n, |i, j| p[(i, j)] - if i == j { T::one() } else { T::zero() }).max_abs()
    }

    /// `max |DΛDᵀ − H₀|`.
    pub fn reconstruction_defect(&self) -> T {
        let n = self.lambda.len();
        let dl = Mat::from_fn(n, n, |i, j| self.d[(i, j)] * self.lambda[j]);
        let r = dl.matmul(&self.d.transpose());
        Mat::from_fn(n, n, |i, j| r[(i, j)] - self.h0[(i, j)]).max_abs()
    }
}

/// `(x+2) + (x−2)eˣ` divided by `x²`, i.e. `Σ_{k≥1} k/(k+2)!·xᵏ`, accurate for all complex `x`.
fn n1_kernel<T: Real>(x: Cplx<T>) -> Cplx<T> {
    let two = Cplx::new(T::lit(2.0), T::zero());
    if x.norm() >= T::one() {
        ((x + two) + (x - two) * x.exp()) / (x * x)
    } else {
        // the closed form cancels catastrophically for small |x|
        let mut term = Cplx::new(T::one(), T::zero());
        let mut sum = Cplx::new(T::zero(), T::zero());
        for k in 1..40usize {
            // term = x^k / (k+2)!
            term = term * x / T::from_usize_lossy(if k == 1 { 6 } else { k + 2 });
            let add = term * T::from_usize_lossy(k);
            sum += add;
            if add.norm() <= T::epsilon() * sum.norm() {
                break;
            }
        }
        sum
    }
}

/// First modified-Neumann term `N¹ᵢⱼ = [(hΔ+2) + (hΔ−2)e^{hΔ}]/Δ² · (A₁ᴰ)ᵢⱼ`,
/// `Δ = −i(Λⱼ − Λᵢ)`, `A₁ᴰ = −i·H₁ᴰ`.
pub fn neumann_n1<T: Real>(lambda: &[T], h1_diag: &Mat<T>, h: T) -> Mat<Cplx<T>> {
    let n = lambda.len();
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            return Cplx::new(T::zero(), T::zero());
        }
        let x = Cplx::new(T::zero(), -(lambda[j] - lambda[i]) * h);
        let a1 = Cplx::new(T::zero(), -h1_diag[(i, j)]);
        n1_kernel(x) * a1 * (h * h)
    })
}

fn rotate_phases<T: Real>(y: &mut [Cplx<T>], lambda: &[T], h: T) {
    for (v, l) in y.iter_mut().zip(lambda) {
        *v *= Cplx::from_polar(T::one(), -*l * h);
    }
}

/// Order-2 step over `[t_a, t_b]` with the midpoint Hamiltonian.
pub fn step_order2<T: Real>(state: &CoefficientState<T>, sector: &TimeSector<T>, t_a: T, t_b: T) -> Result<CoefficientState<T>> {
    let h = t_b - t_a;
    let hm = hamiltonian(sector, (t_a + t_b) * T::lit(0.5))?;
    let eig = jacobi_eigen(&hm)?;
    let mut y = eig.vectors.apply_transpose_complex(&state.c);
    rotate_phases(&mut y, &eig.values, h);
    Ok(CoefficientState { c: eig.vectors.apply_complex(&y), t: t_b })
}

/// Order-4 step over `[t_a, t_b]`.
pub fn step_order4<T: Real>(state: &CoefficientState<T>, sector: &TimeSector<T>, t_a: T, t_b: T) -> Result<CoefficientState<T>> {
    let h = t_b - t_a;
    let (h0, h1) = legendre_fit(sector, t_a, t_b)?;
    let ops = SubstepOperators::new(h, h0, h1)?;
    Ok(CoefficientState { c: apply_order4(&ops, &state.c), t: t_b })
}

/// `D e^{−iΛh}(I + N¹) Dᵀ c`.
pub fn apply_order4<T: Real>(ops: &SubstepOperators<T>, c: &[Cplx<T>]) -> Vec<Cplx<T>> {
    let y = ops.d.apply_transpose_complex(c);
    let n1 = neumann_n1(&ops.lambda, &ops.h1_diag, ops.h);
    let mut z = y.clone();
    for (i, zi) in z.iter_mut().enumerate() {
        for (j, yj) in y.iter().enumerate() {
            *zi += n1[(i, j)] * *yj;
        }
    }
    rotate_phases(&mut z, &ops.lambda, ops.h);
    ops.d.apply_complex(&z)
}

/// Number of substeps of width `dt` in `width`; errors unless `dt` divides `width`.
pub fn substep_count<T: Real>(width: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if width == T::zero() {
        return Ok(0);
    }
    let ratio = width / dt;
    let n = ratio.round();
    if n < T::one() || (ratio - n).abs() > T::lit(SUBSTEP_TOLERANCE) * ratio {
        return Err(Error::Config(format!("time step {dt} does not divide the sector width {width}")));
    }
    n.to_usize().ok_or_else(|| Error::Config(format!("substep count {n} out of range")))
}

/// Result of propagating across a sector.
#[derive(Debug, Clone)]
pub struct SectorPropagation<T> {
    pub state: CoefficientState<T>,
    /// `‖C‖₂` after every substep.
    pub norms: Vec<T>,
}

/// Propagates from `sector.t_left` to `sector.t_right`.
pub fn propagate_sector<T: Real>(
    state: &CoefficientState<T>,
    sector: &TimeSector<T>,
    config: &PropagatorConfig<T>,
) -> Result<SectorPropagation<T>> {
    propagate_sector_observed(state, sector, config, |_| {})
}

/// [`propagate_sector`] calling `observe` with the state after every substep.
pub fn propagate_sector_observed<T: Real>(
    state: &CoefficientState<T>,
    sector: &TimeSector<T>,
    config: &PropagatorConfig<T>,
    mut observe: impl FnMut(&CoefficientState<T>),
) -> Result<SectorPropagation<T>> {
    let scale = T::one().max(sector.t_left.abs());
    if (state.t - sector.t_left).abs() > T::lit(1e-9) * scale {
        return Err(Error::Config(format!("state at t = {} does not start sector {} at {}", state.t, sector.index, sector.t_left)));
    }
    if state.c.len() != sector.size() {
        return Err(Error::Config(format!("state has {} coefficients, sector basis has {}", state.c.len(), sector.size())));
    }
    let steps = substep_count(sector.width(), config.dt)?;
    let mut current = state.clone();
    let mut norms = Vec::with_capacity(steps);
    let h = sector.width() / T::from_usize_lossy(steps.max(1));
    for s in 0..steps {
        let t_a = sector.t_left + h * T::from_usize_lossy(s);
        let t_b = if s + 1 == steps { sector.t_right } else { t_a + h };
        current = match config.order {
            TimeOrder::Two => step_order2(&current, sector, t_a, t_b),
            TimeOrder::Four => step_order4(&current, sector, t_a, t_b),
        }
        .map_err(|e| e.in_sector(sector.index))?;
        let norm = current.norm();
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("coefficients became non-finite at t = {t_b}")).in_sector(sector.index));
        }
        norms.push(norm);
        observe(&current);
    }
    current.t = sector.t_right;
    Ok(SectorPropagation { state: current, norms })
}
