//! Analytic solutions, the Crank-Nicolson comparator and the error metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::potential::{hermite_function, ProblemSpec};
use crate::real::{Cplx, Real};

/// `ψ₀(x)·exp(−i(n+½)t + i t²)` with `ψ₀` the `n`-th oscillator eigenfunction.
pub fn analytic_problem1<T: Real>(x: T, t: T, n: usize) -> Cplx<T> {
    let energy = T::from_usize_lossy(n) + T::lit(0.5);
    Cplx::from_polar(T::one(), -energy * t + t * t) * hermite_function(n, x).0
}

/// Finite-difference wavefunction on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridSolution<T> {
    /// Grid points including both Dirichlet ends.
    pub x: Vec<T>,
    pub values: Vec<Cplx<T>>,
    pub dx: T,
    pub dt: T,
    pub t: T,
    /// Discrete `‖Z‖₂` after every step, starting with the initial vector.
    pub norms: Vec<T>,
}

/// Solves `a_i z_{i-1} + b_i z_i + c_i z_{i+1} = d_i`; `a[0]` and `c[n-1]` are ignored.
pub fn thomas_solve<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>], c: &[Cplx<T>], d: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
    let n = b.len();
    if a.len() != n || c.len() != n || d.len() != n {
        return Err(Error::Config("tridiagonal bands have mismatched lengths".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![Cplx::new(T::zero(), T::zero()); n];
    let mut dp = vec![Cplx::new(T::zero(), T::zero()); n];
    let tiny = T::min_positive_value();
    let mut denom = b[0];
    if denom.norm() <= tiny {
        return Err(Error::Numerical("singular tridiagonal system at row 0".into()));
    }
    cp[0] = c[0] / denom;
    dp[0] = d[0] / denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        if denom.norm() <= tiny {
            return Err(Error::Numerical(format!("singular tridiagonal system at row {i}")));
        }
        cp[i] = c[i] / denom;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = dp[i + 1];
        dp[i] -= cp[i] * next;
    }
    Ok(dp)
}

fn whole_count<T: Real>(span: T, step: T, what: &str) -> Result<usize> {
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::Config(format!("{what} must be positive, got {step}")));
    }
    let ratio = span / step;
    let n = ratio.round();
    if n < T::one() || (ratio - n).abs() > T::lit(1e-9) * ratio {
        return Err(Error::Config(format!("{what} {step} does not divide {span}")));
    }
    n.to_usize().ok_or_else(|| Error::Config(format!("{what} count out of range")))
}

fn discrete_norm<T: Real>(z: &[Cplx<T>]) -> T {
    z.iter().map(|v| v.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt()
}

/// Crank-Nicolson with the step-midpoint Hamiltonian and Dirichlet ends, from
/// `t = 0` to `t_final`.
pub fn crank_nicolson_solve<T: Real>(problem: &ProblemSpec<T>, dx: T, dt: T, t_final: T) -> Result<GridSolution<T>> {
    let cells = whole_count(problem.x_max - problem.x_min, dx, "grid spacing")?;
    let steps = if t_final == T::zero() { 0 } else { whole_count(t_final, dt, "time step")? };
    if cells < 2 {
        return Err(Error::Config("grid needs at least one interior point".into()));
    }
    let h = (problem.x_max - problem.x_min) / T::from_usize_lossy(cells);
    let x: Vec<T> = (0..=cells).map(|i| problem.x_min + h * T::from_usize_lossy(i)).collect();
    let interior = &x[1..cells];
    let m = interior.len();
    let mu = problem.potential.reduced_mass();
    let kin = T::one() / (T::lit(2.0) * mu * h * h);
    let tau = if steps == 0 { dt } else { t_final / T::from_usize_lossy(steps) };
    let half = Cplx::new(T::zero(), tau * T::lit(0.5));

    let mut z: Vec<Cplx<T>> = interior.iter().map(|&xi| (problem.initial.psi0)(xi)).collect();
    let mut norms = Vec::with_capacity(steps + 1);
    norms.push(discrete_norm(&z));
    let off = half * (-kin);
    let lower = vec![off; m];
    let upper = vec![off; m];
    for s in 0..steps {
        let t_mid = tau * (T::from_usize_lossy(s) + T::lit(0.5));
        let diag: Vec<Cplx<T>> = interior.iter().map(|&xi| half * (T::lit(2.0) * kin + problem.potential.value(xi, t_mid))).collect();
        let rhs: Vec<Cplx<T>> = (0..m)
            .map(|i| {
                let mut r = z[i] - diag[i] * z[i];
                if i > 0 {
                    r -= off * z[i - 1];
                }
                if i + 1 < m {
                    r -= off * z[i + 1];
                }
                r
            })
            .collect();
        let main: Vec<Cplx<T>> = diag.iter().map(|d| *d + T::one()).collect();
        z = thomas_solve(&lower, &main, &upper, &rhs).map_err(|e| e.at_step(s + 1))?;
        norms.push(discrete_norm(&z));
    }
    let zero = Cplx::new(T::zero(), T::zero());
    let mut values = Vec::with_capacity(cells + 1);
    values.push(zero);
    values.extend(z);
    values.push(zero);
    Ok(GridSolution { x, values, dx: h, dt: tau, t: t_final, norms })
}

/// Composite classical Lobatto `∫|ψ_approx|² − ∫|ψ_exact|²` on the mesh nodes.
pub fn err_norm<T: Real>(approx: &[Cplx<T>], exact: &[Cplx<T>], mesh: &SpatialMesh<T>) -> T {
    let a: Vec<T> = approx.iter().map(|z| z.norm_sqr()).collect();
    let e: Vec<T> = exact.iter().map(|z| z.norm_sqr()).collect();
    mesh.integrate_nodes(&a) - mesh.integrate_nodes(&e)
}

/// `max |ψ_approx − ψ_exact|` over the common node set.
pub fn err_abs<T: Real>(approx: &[Cplx<T>], exact: &[Cplx<T>]) -> T {
    approx.iter().zip(exact).map(|(a, b)| (*a - *b).norm()).fold(T::zero(), |m, v| m.max(v))
}

/// Final-time error metrics with a parameter echo.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub err_n: f64,
    pub err_a: f64,
    pub wall_time_s: f64,
    pub parameters: Vec<(String, String)>,
}

impl ErrorReport {
    pub fn new(err_n: f64, err_a: f64, wall_time_s: f64) -> Self {
        Self { err_n, err_a: err_a.abs(), wall_time_s, parameters: Vec::new() }
    }

    pub fn with_parameter(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.push((key.to_string(), value.to_string()));
        self
    }

    /// `key=value` lines; floats use 17 significant digits.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "{k}={v}");
        }
        let _ = writeln!(out, "err_N={:.16e}", self.err_n);
        let _ = writeln!(out, "err_A={:.16e}", self.err_a);
        let _ = writeln!(out, "wall_time_s={:.6}", self.wall_time_s);
        out
    }
}
