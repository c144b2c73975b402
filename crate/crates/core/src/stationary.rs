//! CP shooting eigensolver for `−(1/2μ) y'' + V̄(x) y = E y` with Dirichlet
//! ends, returning eigenvalues and eigenfunction values and derivatives on the
//! mesh nodes.
//!
//! The potential is replaced piecewise by a constant reference, whose exact
//! transfer matrix is built from ξ and η₀. Higher orders add modified-Neumann
//! corrections for the Legendre-polynomial residual, evaluated by Gauss
//! quadrature:
//!
//! * [`CpOrder::Two`]: constant reference per mesh step, no correction;
//! * [`CpOrder::Four`]: constant + linear reference per step, first correction;
//! * [`CpOrder::Eight`]: every node-to-node segment gets its own constant,
//!   linear and quadratic reference and first and second corrections.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{lobatto_abscissae, SpatialMesh};
use crate::quadrature::{classical_lobatto_weights, gauss_legendre, integrate_product, ProductFactor};
use crate::real::Real;
use crate::roots::brent;
use crate::specfun::xi_eta0;

/// 2×2 real matrix, row-major.
pub type Mat2<T> = [[T; 2]; 2];

/// Accuracy level of the transfer matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CpOrder {
    Two,
    Four,
    #[default]
    Eight,
}

impl CpOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            2 => Ok(CpOrder::Two),
            4 => Ok(CpOrder::Four),
            8 => Ok(CpOrder::Eight),
            _ => Err(Error::Config(format!("stationary order must be 2, 4 or 8, got {order}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            CpOrder::Two => 2,
            CpOrder::Four => 4,
            CpOrder::Eight => 8,
        }
    }

    fn corrections(self) -> usize {
        match self {
            CpOrder::Two => 0,
            CpOrder::Four => 1,
            CpOrder::Eight => 2,
        }
    }
}

/// Constant reference of one mesh step plus its linear Legendre coefficient:
/// `V̄(x) ≈ v_bar + v1·P₁*((x − x_left)/h)`, `P₁*(s) = 2s − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReference<T> {
    pub v_bar: T,
    pub v1: T,
    pub width: T,
}

/// Per-step references from the potential at the four Lobatto nodes.
pub fn build_references<T: Real>(v: &dyn Fn(T) -> T, mesh: &SpatialMesh<T>) -> Result<Vec<StepReference<T>>> {
    let values = sample(v, mesh.nodes())?;
    Ok((0..mesh.n_steps()).map(|s| step_reference(&values[3 * s..3 * s + 4], mesh.step_width())).collect())
}

fn sample<T: Real>(v: &dyn Fn(T) -> T, xs: &[T]) -> Result<Vec<T>> {
    xs.iter()
        .map(|&x| {
            let y = v(x);
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::Model(format!("potential is not finite at x = {x}")))
            }
        })
        .collect()
}

/// Legendre coefficients `(c₀, c₁, c₂)` of four Lobatto samples on `[−1, 1]`.
fn legendre3<T: Real>(vals: &[T]) -> (T, T, T) {
    let w = classical_lobatto_weights::<T>();
    let u = lobatto_abscissae::<T>();
    let (mut m0, mut m1, mut m2) = (T::zero(), T::zero(), T::zero());
    for j in 0..4 {
        let p2 = T::lit(1.5) * u[j] * u[j] - T::lit(0.5);
        m0 += w[j] * vals[j];
        m1 += w[j] * vals[j] * u[j];
        m2 += w[j] * vals[j] * p2;
    }
    (m0 * T::lit(0.5), m1 * T::lit(1.5), m2 * T::lit(2.5))
}

fn step_reference<T: Real>(vals: &[T], width: T) -> StepReference<T> {
    let (c0, c1, _) = legendre3(vals);
    StepReference { v_bar: c0, v1: c1, width }
}

/// Transfer matrix of the constant reference: `Z = q d²`, mapping `(y, y')` across `d`.
#[inline]
fn t0<T: Real>(q: T, d: T) -> Mat2<T> {
    let (x, e) = xi_eta0(q * d * d);
    [[x, d * e], [q * d * e, x]]
}

/// 5-point Gauss-Legendre nodes mapped to `[0, 1]`, with weights summing to 1.
#[derive(Debug, Clone, Copy)]
struct UnitGauss<T> {
    x: [T; 5],
    w: [T; 5],
}

impl<T: Real> UnitGauss<T> {
    fn new() -> Self {
        let (gx, gw) = gauss_legendre::<T>(5);
        let half = T::lit(0.5);
        let mut x = [T::zero(); 5];
        let mut w = [T::zero(); 5];
        for i in 0..5 {
            x[i] = (gx[i] + T::one()) * half;
            w[i] = gw[i] * half;
        }
        Self { x, w }
    }
}

/// The potential model of one node-to-node piece: a segment `[origin, origin + width]`
/// with Legendre reference `c₀ + c₁P₁(u) + c₂P₂(u)`, `u ∈ [−1, 1]`, of which the piece
/// covers offsets `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece<T> {
    pub origin: T,
    pub width: T,
    pub a: T,
    pub b: T,
    pub c0: T,
    pub c1: T,
    pub c2: T,
}

fn build_pieces<T: Real>(v: &dyn Fn(T) -> T, mesh: &SpatialMesh<T>, order: CpOrder) -> Result<Vec<Piece<T>>> {
    let nodes = mesh.nodes();
    let node_values = sample(v, nodes)?;
    let mut pieces = Vec::with_capacity(nodes.len() - 1);
    match order {
        CpOrder::Two | CpOrder::Four => {
            for s in 0..mesh.n_steps() {
                let r = step_reference(&node_values[3 * s..3 * s + 4], mesh.step_width());
                let origin = mesh.step_left(s);
                let c1 = if order == CpOrder::Four { r.v1 } else { T::zero() };
                for j in 0..3 {
                    let a = nodes[3 * s + j] - origin;
                    let b = nodes[3 * s + j + 1] - origin;
                    pieces.push(Piece { origin, width: r.width, a, b, c0: r.v_bar, c1, c2: T::zero() });
                }
            }
        }
        CpOrder::Eight => {
            let u = lobatto_abscissae::<T>();
            let half = T::lit(0.5);
            for i in 0..nodes.len() - 1 {
                let (xa, xb) = (nodes[i], nodes[i + 1]);
                let w = xb - xa;
                let inner = sample(v, &[xa + (u[1] + T::one()) * half * w, xa + (u[2] + T::one()) * half * w])?;
                let (c0, c1, c2) = legendre3(&[node_values[i], inner[0], inner[1], node_values[i + 1]]);
                pieces.push(Piece { origin: xa, width: w, a: T::zero(), b: w, c0, c1, c2 });
            }
        }
    }
    Ok(pieces)
}

/// Transfer across offsets `[a, b]` of a piece's segment at energy `e`, with
/// `corrections ∈ {0, 1, 2}` Neumann terms.
fn piece_transfer<T: Real>(p: &Piece<T>, a: T, b: T, e: T, two_mu: T, corrections: usize, g: &UnitGauss<T>) -> Mat2<T> {
    let q0 = two_mu * (p.c0 - e);
    let q1 = two_mu * p.c1;
    let q2 = two_mu * p.c2;
    let d = b - a;
    let mut t = t0(q0, d);
    if corrections == 0 || (q1 == T::zero() && q2 == T::zero()) || d == T::zero() {
        return t;
    }
    let two = T::lit(2.0);
    let beta = |delta: T| {
        let u = two * delta / p.width - T::one();
        q1 * u + q2 * (T::lit(1.5) * u * u - T::lit(0.5))
    };
    for i in 0..5 {
        let delta = a + g.x[i] * d;
        let left = t0(q0, b - delta);
        let right = t0(q0, delta - a);
        let c = g.w[i] * d * beta(delta);
        // T₀(b−δ)·ΔB(δ)·X only involves column 1 of T₀(b−δ) and row 0 of X
        let mut row = right[0];
        if corrections >= 2 {
            let dd = delta - a;
            for j in 0..5 {
                let eps = a + g.x[j] * dd;
                let inner_left = t0(q0, delta - eps);
                let inner_right = t0(q0, eps - a);
                let ci = g.w[j] * dd * beta(eps) * inner_left[0][1];
                row[0] += ci * inner_right[0][0];
                row[1] += ci * inner_right[0][1];
            }
        }
        for r in 0..2 {
            for s in 0..2 {
                t[r][s] += c * left[r][1] * row[s];
            }
        }
    }
    t
}

/// Transfer matrix across one full mesh step described by a [`StepReference`],
/// for the single-reference orders 2 and 4.
pub fn transfer_step<T: Real>(e: T, reference: &StepReference<T>, reduced_mass: T, order: CpOrder) -> Result<Mat2<T>> {
    if !e.is_finite() {
        return Err(Error::Domain(format!("non-finite energy {e}")));
    }
    let c1 = match order {
        CpOrder::Two => T::zero(),
        CpOrder::Four => reference.v1,
        CpOrder::Eight => return Err(Error::Config("order 8 needs the potential inside the step; use Shooter::step_transfer".into())),
    };
    let p = Piece { origin: T::zero(), width: reference.width, a: T::zero(), b: reference.width, c0: reference.v_bar, c1, c2: T::zero() };
    Ok(piece_transfer(&p, p.a, p.b, e, T::lit(2.0) * reduced_mass, order.corrections(), &UnitGauss::new()))
}

#[inline]
fn apply<T: Real>(m: &Mat2<T>, v: [T; 2]) -> [T; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

#[inline]
fn apply_inverse<T: Real>(m: &Mat2<T>, v: [T; 2]) -> [T; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [(m[1][1] * v[0] - m[0][1] * v[1]) / det, (m[0][0] * v[1] - m[1][0] * v[0]) / det]
}

/// Divides by the largest magnitude; returns the factor.
#[inline]
fn rescale<T: Real>(v: &mut [T; 2]) -> Result<T> {
    let s = v[0].abs().max(v[1].abs());
    if !(s.is_finite() && s > T::zero()) {
        return Err(Error::Numerical(format!("shooting solution degenerated to {:?}", v)));
    }
    v[0] /= s;
    v[1] /= s;
    Ok(s)
}

/// Zeros of `y` crossed when moving across a piece of length `d` with reference
/// `q₀ = 2μ(c₀ − E)`; `y'` is oriented along the direction of travel.
fn zeros_crossed<T: Real>(q0: T, d: T, before: [T; 2], after: [T; 2]) -> usize {
    if q0 < T::zero() {
        // Prüfer angle in k-scaled variables rotates by k·d over the reference
        let k = (-q0).sqrt();
        let pi = T::PI();
        let ta = (k * before[0]).atan2(before[1]);
        let expected = ta + k * d;
        let measured = (k * after[0]).atan2(after[1]);
        let mut diff = (measured - expected) % (T::lit(2.0) * pi);
        if diff > pi {
            diff -= T::lit(2.0) * pi;
        } else if diff <= -pi {
            diff += T::lit(2.0) * pi;
        }
        let tb = expected + diff;
        let n = (tb / pi).floor() - (ta / pi).floor();
        n.max(T::zero()).to_usize().unwrap_or(0)
    } else {
        let (ya, yb) = (before[0], after[0]);
        usize::from((ya > T::zero() && yb <= T::zero()) || (ya < T::zero() && yb >= T::zero()))
    }
}

/// Outcome of one shot at a trial energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootResult<T> {
    /// `y_L·y'_R − y_R·y'_L` of the rescaled partial solutions at the matching node.
    pub mismatch: T,
    /// Number of eigenvalues below the trial energy.
    pub node_count: usize,
}

/// Shooting machinery for one frozen potential on one mesh.
#[derive(Debug, Clone)]
pub struct Shooter<T> {
    mesh: SpatialMesh<T>,
    reduced_mass: T,
    order: CpOrder,
    pieces: Vec<Piece<T>>,
    references: Vec<StepReference<T>>,
    matching_node: usize,
    v_min: T,
    gauss: UnitGauss<T>,
}

impl<T: Real> Shooter<T> {
    pub fn new(v: &dyn Fn(T) -> T, mesh: &SpatialMesh<T>, reduced_mass: T, order: CpOrder) -> Result<Self> {
        if !(reduced_mass > T::zero()) {
            return Err(Error::Config(format!("reduced mass must be positive, got {reduced_mass}")));
        }
        if mesh.n_nodes() < 3 {
            return Err(Error::Config("mesh has no interior node for matching".into()));
        }
        let references = build_references(v, mesh)?;
        let pieces = build_pieces(v, mesh, order)?;
        let node_values = sample(v, mesh.nodes())?;
        let (argmin, _) = node_values.iter().enumerate().fold((0, T::infinity()), |acc, (i, &y)| if y < acc.1 { (i, y) } else { acc });
        let matching_node = argmin.clamp(1, mesh.n_nodes() - 2);
        let v_min = node_values.iter().copied().chain(pieces.iter().map(|p| p.c0 - p.c1.abs() - p.c2.abs())).fold(T::infinity(), T::min);
        Ok(Self { mesh: mesh.clone(), reduced_mass, order, pieces, references, matching_node, v_min, gauss: UnitGauss::new() })
    }

    pub fn mesh(&self) -> &SpatialMesh<T> {
        &self.mesh
    }

    pub fn order(&self) -> CpOrder {
        self.order
    }

    pub fn reduced_mass(&self) -> T {
        self.reduced_mass
    }

    pub fn references(&self) -> &[StepReference<T>] {
        &self.references
    }

    pub fn matching_node(&self) -> usize {
        self.matching_node
    }

    /// Lower bound of the potential used to start the eigenvalue search.
    pub fn potential_floor(&self) -> T {
        self.v_min
    }

    fn two_mu(&self) -> T {
        T::lit(2.0) * self.reduced_mass
    }

    /// Transfer from node `i` to node `i + 1`.
    #[inline]
    pub fn piece_matrix(&self, i: usize, e: T) -> Mat2<T> {
        let p = &self.pieces[i];
        piece_transfer(p, p.a, p.b, e, self.two_mu(), self.order.corrections(), &self.gauss)
    }

    /// Transfer across a whole mesh step (product of its three pieces).
    pub fn step_transfer(&self, step: usize, e: T) -> Mat2<T> {
        let mut m = [[T::one(), T::zero()], [T::zero(), T::one()]];
        for j in 0..3 {
            let p = self.piece_matrix(3 * step + j, e);
            let mut r = [[T::zero(); 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    r[a][b] = p[a][0] * m[0][b] + p[a][1] * m[1][b];
                }
            }
            m = r;
        }
        m
    }

    /// `2μ(V̄_step − E)` for every mesh step.
    pub fn step_q(&self, e: T) -> Vec<T> {
        let two_mu = self.two_mu();
        self.references.iter().map(|r| two_mu * (r.v_bar - e)).collect()
    }

    /// Propagates both partial solutions to `matching_node`; returns mismatch and eigenvalue count.
    pub fn shoot_at(&self, e: T, matching_node: usize) -> Result<ShootResult<T>> {
        if matching_node == 0 || matching_node >= self.mesh.n_nodes() - 1 {
            return Err(Error::Config(format!("matching node {matching_node} is not interior")));
        }
        let two_mu = self.two_mu();
        let mut zeros = 0usize;
        let mut left = [T::zero(), T::one()];
        for i in 0..matching_node {
            let m = self.piece_matrix(i, e);
            let mut next = apply(&m, left);
            rescale(&mut next)?;
            let p = &self.pieces[i];
            zeros += zeros_crossed(two_mu * (p.c0 - e), p.b - p.a, left, next);
            left = next;
        }
        let mut right = [T::zero(), -T::one()];
        for i in (matching_node..self.pieces.len()).rev() {
            let m = self.piece_matrix(i, e);
            let mut next = apply_inverse(&m, right);
            rescale(&mut next)?;
            let p = &self.pieces[i];
            zeros += zeros_crossed(two_mu * (p.c0 - e), p.b - p.a, [right[0], -right[1]], [next[0], -next[1]]);
            right = next;
        }
        let pi = T::PI();
        let wrap = |a: T| {
            if a < T::zero() {
                a + pi
            } else if a >= pi {
                a - pi
            } else {
                a
            }
        };
        let phase_l = wrap(left[0].atan2(left[1]));
        let phase_r = wrap(right[0].atan2(right[1]));
        let mismatch = left[0] * right[1] - right[0] * left[1];
        Ok(ShootResult { mismatch, node_count: zeros + usize::from(phase_l > phase_r) })
    }

    /// [`Shooter::shoot_at`] at the default matching node.
    pub fn shoot(&self, e: T) -> Result<ShootResult<T>> {
        self.shoot_at(e, self.matching_node)
    }

    /// Dirichlet solution at energy `e`, continuous at the matching node and
    /// with unit slope scale at `x_min`, as node values and derivatives (unnormalized).
    fn assemble(&self, e: T) -> Result<(Vec<T>, Vec<T>)> {
        let n_nodes = self.mesh.n_nodes();
        let m = self.matching_node;
        let mut vals = vec![[T::zero(); 2]; n_nodes];
        let mut logs = vec![T::zero(); n_nodes];
        let mut v = [T::zero(), T::one()];
        vals[0] = v;
        let mut acc = T::zero();
        for i in 0..m {
            v = apply(&self.piece_matrix(i, e), v);
            acc += rescale(&mut v)?.ln();
            vals[i + 1] = v;
            logs[i + 1] = acc;
        }
        let left_m = v;
        let left_log = acc;
        let mut v = [T::zero(), -T::one()];
        let mut right_vals = vec![[T::zero(); 2]; n_nodes];
        let mut right_logs = vec![T::zero(); n_nodes];
        right_vals[n_nodes - 1] = v;
        let mut acc = T::zero();
        for i in (m..self.pieces.len()).rev() {
            v = apply_inverse(&self.piece_matrix(i, e), v);
            acc += rescale(&mut v)?.ln();
            right_vals[i] = v;
            right_logs[i] = acc;
        }
        let right_m = v;
        let right_log = acc;
        let c = (left_m[0] * right_m[0] + left_m[1] * right_m[1]) / (right_m[0] * right_m[0] + right_m[1] * right_m[1]);
        let mut y = Vec::with_capacity(n_nodes);
        let mut dy = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let (w, f) =
                if i <= m { (vals[i], (logs[i] - left_log).exp()) } else { (right_vals[i], c * (right_logs[i] - right_log).exp()) };
            y.push(w[0] * f);
            dy.push(w[1] * f);
        }
        y[0] = T::zero();
        y[n_nodes - 1] = T::zero();
        Ok((y, dy))
    }
}

/// One eigenvalue with its eigenfunction on the mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair<T> {
    /// 1-based index.
    pub index: usize,
    pub energy: T,
    pub values: Vec<T>,
    pub derivs: Vec<T>,
    /// `2μ(V̄_step − E)` per mesh step, the local frequency data for EF quadrature.
    pub step_q: Vec<T>,
}

impl<T: Real> Eigenpair<T> {
    pub fn factor(&self) -> ProductFactor<'_, T> {
        ProductFactor { values: &self.values, derivs: &self.derivs, step_q: &self.step_q }
    }

    /// Sign changes of `y` over interior nodes.
    pub fn sign_changes(&self) -> usize {
        let inner = &self.values[1..self.values.len() - 1];
        let mut count = 0;
        let mut last = T::zero();
        for &y in inner {
            if y != T::zero() {
                if last != T::zero() && (y > T::zero()) != (last > T::zero()) {
                    count += 1;
                }
                last = y;
            }
        }
        count
    }
}

/// Settings for [`compute_basis`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisConfig<T> {
    /// Number of eigenpairs.
    pub size: usize,
    pub order: CpOrder,
    /// Absolute eigenvalue tolerance; `None` means `10⁻¹²·max(1, |E|)`.
    pub tol_e: Option<T>,
}

impl<T: Real> BasisConfig<T> {
    pub fn new(size: usize) -> Self {
        Self { size, order: CpOrder::default(), tol_e: None }
    }

    pub fn with_order(mut self, order: CpOrder) -> Self {
        self.order = order;
        self
    }
}

/// The `N` lowest eigenpairs of one frozen potential.
#[derive(Debug, Clone)]
pub struct Basis<T> {
    shooter: Shooter<T>,
    pairs: Vec<Eigenpair<T>>,
}

const MAX_BRACKET_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 200;
const MAX_BRENT_ITERATIONS: usize = 200;

/// Solves for the `config.size` lowest Dirichlet eigenpairs of `v` on `mesh`.
pub fn compute_basis<T: Real>(v: &dyn Fn(T) -> T, mesh: &SpatialMesh<T>, reduced_mass: T, config: &BasisConfig<T>) -> Result<Basis<T>> {
    if config.size == 0 {
        return Err(Error::Config("basis size must be at least 1".into()));
    }
    if let Some(tol) = config.tol_e {
        if !(tol > T::zero()) {
            return Err(Error::Config(format!("eigenvalue tolerance must be positive, got {tol}")));
        }
    }
    let shooter = Shooter::new(v, mesh, reduced_mass, config.order)?;
    Basis::solve(shooter, config)
}

impl<T: Real> Basis<T> {
    fn solve(shooter: Shooter<T>, config: &BasisConfig<T>) -> Result<Self> {
        let n = config.size;
        let count = |e: T| shooter.shoot(e).map(|r| r.node_count);
        let lo0 = shooter.potential_floor() - T::one();
        if count(lo0)? != 0 {
            return Err(Error::EigenSearch {
                index: 1,
                reason: "eigenvalue count is nonzero below the potential minimum".into(),
                lo: lo0.as_f64(),
                hi: lo0.as_f64(),
            });
        }
        // sorted (energy, count) samples shared by all indices
        let mut samples: Vec<(T, usize)> = vec![(lo0, 0)];
        let mut hi = lo0 + T::one();
        let mut doublings = 0;
        loop {
            let c = count(hi)?;
            samples.push((hi, c));
            if c >= n {
                break;
            }
            doublings += 1;
            if doublings > MAX_BRACKET_DOUBLINGS {
                return Err(Error::EigenSearch { index: n, reason: "upper bracket not found".into(), lo: lo0.as_f64(), hi: hi.as_f64() });
            }
            hi = lo0 + (hi - lo0) * T::lit(2.0);
        }
        let mut brackets = Vec::with_capacity(n);
        for index in 1..=n {
            let mut bisections = 0;
            loop {
                let (lo, clo) = samples.iter().filter(|s| s.1 < index).fold((lo0, 0), |a, s| if s.0 > a.0 { *s } else { a });
                let (hi, chi) = samples.iter().filter(|s| s.1 >= index).fold((T::infinity(), 0), |a, s| if s.0 < a.0 { *s } else { a });
                if clo == index - 1 && chi == index {
                    brackets.push((lo, hi));
                    break;
                }
                bisections += 1;
                let mid = (lo + hi) * T::lit(0.5);
                if bisections > MAX_BISECTIONS || mid <= lo || mid >= hi {
                    return Err(Error::EigenSearch {
                        index,
                        reason: "could not isolate a single eigenvalue by bisection".into(),
                        lo: lo.as_f64(),
                        hi: hi.as_f64(),
                    });
                }
                samples.push((mid, count(mid)?));
            }
        }
        let pairs = brackets
            .par_iter()
            .enumerate()
            .map(|(k, &(lo, hi))| Self::refine(&shooter, k + 1, lo, hi, config.tol_e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { shooter, pairs })
    }

    fn refine(shooter: &Shooter<T>, index: usize, lo: T, hi: T, tol: Option<T>) -> Result<Eigenpair<T>> {
        let scale = T::one().max(lo.abs()).max(hi.abs());
        let tol = tol.unwrap_or(T::lit(1e-12) * scale).max(T::epsilon() * T::lit(16.0) * scale);
        let mut failure = None;
        let root = brent(
            |e| match shooter.shoot(e) {
                Ok(r) => r.mismatch,
                Err(err) => {
                    failure.get_or_insert(err);
                    T::nan()
                }
            },
            lo,
            hi,
            tol,
            MAX_BRENT_ITERATIONS,
        );
        if let Some(err) = failure {
            return Err(err);
        }
        let energy = root
            .ok_or_else(|| Error::EigenSearch {
                index,
                reason: "mismatch does not change sign over the isolating bracket".into(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            })?
            .x;
        let (mut values, mut derivs) = shooter.assemble(energy)?;
        let step_q = shooter.step_q(energy);
        let norm2 = integrate_product(
            &ProductFactor { values: &values, derivs: &derivs, step_q: &step_q },
            &ProductFactor { values: &values, derivs: &derivs, step_q: &step_q },
            shooter.mesh(),
        )?;
        if !(norm2 > T::zero() && norm2.is_finite()) {
            return Err(Error::Numerical(format!("eigenfunction {index} has norm² {norm2}")));
        }
        let mut f = norm2.sqrt().recip();
        if derivs[0] < T::zero() {
            f = -f;
        }
        values.iter_mut().for_each(|y| *y *= f);
        derivs.iter_mut().for_each(|y| *y *= f);
        Ok(Eigenpair { index, energy, values, derivs, step_q })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Eigenpair<T>] {
        &self.pairs
    }

    /// Eigenpair by 0-based position.
    pub fn pair(&self, k: usize) -> &Eigenpair<T> {
        &self.pairs[k]
    }

    pub fn energies(&self) -> Vec<T> {
        self.pairs.iter().map(|p| p.energy).collect()
    }

    pub fn mesh(&self) -> &SpatialMesh<T> {
        self.shooter.mesh()
    }

    pub fn shooter(&self) -> &Shooter<T> {
        &self.shooter
    }

    pub fn references(&self) -> &[StepReference<T>] {
        self.shooter.references()
    }

    pub fn reduced_mass(&self) -> T {
        self.shooter.reduced_mass()
    }

    /// Keeps only the first `n` eigenpairs.
    pub fn truncated(&self, n: usize) -> Self {
        Self { shooter: self.shooter.clone(), pairs: self.pairs[..n.min(self.pairs.len())].to_vec() }
    }

    /// `(y, y')` of eigenfunction `k` (0-based) at an arbitrary `x` in the domain,
    /// by CP propagation from the nearest node to the left.
    pub fn evaluate(&self, k: usize, x: T) -> (T, T) {
        let mesh = self.mesh();
        let pair = &self.pairs[k];
        let step = mesh.locate(x);
        let nodes = mesh.nodes();
        let mut i = 3 * step;
        while i < 3 * step + 2 && x > nodes[i + 1] {
            i += 1;
        }
        let p = &self.shooter.pieces[i];
        let offset = (x - nodes[i]).max(T::zero());
        let m =
            piece_transfer(p, p.a, p.a + offset, pair.energy, self.shooter.two_mu(), self.shooter.order.corrections(), &self.shooter.gauss);
        let v = apply(&m, [pair.values[i], pair.derivs[i]]);
        (v[0], v[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_lobatto_hermite;
    use crate::specfun::{eta0_raw, xi_raw};

    fn ho(x: f64) -> f64 {
        0.5 * x * x
    }

    fn ho_basis(n: usize, steps: usize, order: CpOrder) -> Basis<f64> {
        let mesh = SpatialMesh::new(-10.0, 10.0, steps).unwrap();
        compute_basis(&ho, &mesh, 1.0, &BasisConfig::new(n).with_order(order)).unwrap()
    }

    fn close(a: Mat2<f64>, b: Mat2<f64>, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (a[i][j] - b[i][j]).abs() <= tol))
    }

    #[test]
    fn references_of_simple_potentials() {
        let mesh = SpatialMesh::new(-1.0, 1.0, 1).unwrap();
        let r = build_references(&|_: f64| 3.0, &mesh).unwrap();
        assert_eq!(r[0].v_bar, 3.0);
        assert!(r[0].v1.abs() < 1e-15);
        let r = build_references(&|x: f64| x * x, &mesh).unwrap();
        assert!((r[0].v_bar - 1.0 / 3.0).abs() < 1e-15);
        let mesh = SpatialMesh::new(0.0, 1.0, 1).unwrap();
        let r = build_references(&|x: f64| x, &mesh).unwrap();
        assert!((r[0].v_bar - 0.5).abs() < 1e-15);
        assert!((r[0].v1 - 0.5).abs() < 1e-15);
        assert!(build_references(&|_| f64::NAN, &mesh).is_err());
    }

    #[test]
    fn transfer_step_examples() {
        let r = StepReference { v_bar: 2.0, v1: 0.0, width: 0.3 };
        let t = transfer_step(2.0, &r, 1.0, CpOrder::Two).unwrap();
        assert!(close(t, [[1.0, 0.3], [0.0, 1.0]], 1e-15));
        let t4 = transfer_step(2.0, &r, 1.0, CpOrder::Four).unwrap();
        assert_eq!(t, t4);
        // half-wave rotation: 2μ(V̄ − E)h² = −π²
        let h = 0.5;
        let e = 2.0 + std::f64::consts::PI.powi(2) / (2.0 * h * h);
        let r = StepReference { v_bar: 2.0, v1: 0.0, width: h };
        let t = transfer_step(e, &r, 1.0, CpOrder::Two).unwrap();
        assert!(close(t, [[-1.0, 0.0], [0.0, -1.0]], 1e-12));
        assert!(transfer_step(f64::NAN, &r, 1.0, CpOrder::Two).is_err());
    }

    #[test]
    fn order_two_transfer_is_unimodular() {
        for &(q, d) in &[(-400.0f64, 0.2f64), (-3.0, 0.1), (0.0, 1.0), (2.5, 0.4), (90.0, 0.3)] {
            let r = StepReference { v_bar: q / 2.0, v1: 0.7, width: d };
            let t = transfer_step(0.0, &r, 1.0, CpOrder::Two).unwrap();
            let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
            assert!((det - 1.0).abs() < 1e-12 * t[0][0].abs().max(1.0).powi(2), "{q} {d}: {det}");
            let z: f64 = q * d * d;
            assert!((t[0][0] - xi_raw(z)).abs() < 1e-14 * t[0][0].abs().max(1.0));
            assert!((t[0][1] - d * eta0_raw(z)).abs() < 1e-14);
        }
    }

    /// Oracle: RK4 on `y'' = 2μ(V − E)y` with a fine uniform grid.
    fn rk4_solution(v: &dyn Fn(f64) -> f64, mu: f64, e: f64, a: f64, b: f64, n: usize) -> Vec<(f64, f64, f64)> {
        let h = (b - a) / n as f64;
        let f = |x: f64, y: [f64; 2]| [y[1], 2.0 * mu * (v(x) - e) * y[0]];
        let mut y = [0.0, 1.0];
        let mut out = vec![(a, y[0], y[1])];
        for i in 0..n {
            let x = a + i as f64 * h;
            let k1 = f(x, y);
            let k2 = f(x + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = f(x + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = f(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for j in 0..2 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            let s = y[0].abs().max(y[1].abs());
            y = [y[0] / s, y[1] / s];
            out.push((x + h, y[0], y[1]));
        }
        out
    }

    #[test]
    fn node_count_matches_dense_sturm_count() {
        // The number of eigenvalues below E equals the number of interior zeros
        // of the solution started at x_min (Sturm oscillation theorem).
        let mesh = SpatialMesh::new(-10.0, 10.0, 80).unwrap();
        for order in [CpOrder::Two, CpOrder::Four, CpOrder::Eight] {
            let shooter = Shooter::new(&ho, &mesh, 1.0, order).unwrap();
            for &e in &[0.2, 1.0, 2.77, 7.9, 15.3] {
                let dense = rk4_solution(&ho, 1.0, e, -10.0, 10.0, 200_000);
                let zeros = dense.windows(2).filter(|w| (w[0].1 > 0.0) != (w[1].1 > 0.0) && w[0].1 != 0.0).count();
                assert_eq!(shooter.shoot(e).unwrap().node_count, zeros, "{order:?} E={e}");
            }
        }
    }

    #[test]
    fn count_below_potential_is_zero() {
        let mesh = SpatialMesh::new(-10.0, 10.0, 40).unwrap();
        let shooter = Shooter::new(&ho, &mesh, 1.0, CpOrder::Eight).unwrap();
        let r = shooter.shoot(-0.5).unwrap();
        assert_eq!(r.node_count, 0);
        assert!(r.mismatch.abs() > 1e-3);
        assert_eq!(shooter.shoot(0.5 - 1e-6).unwrap().node_count, 0);
        assert!(shooter.shoot(0.5).unwrap().mismatch.abs() < 1e-8);
        assert_eq!(shooter.shoot(1.0).unwrap().node_count, 1);
    }

    #[test]
    fn harmonic_spectrum_order_eight() {
        let b = ho_basis(20, 100, CpOrder::Eight);
        for (k, p) in b.pairs().iter().enumerate() {
            assert_eq!(p.index, k + 1);
            assert!((p.energy - (k as f64 + 0.5)).abs() < 1e-9, "n={} E={}", k + 1, p.energy);
            assert_eq!(p.sign_changes(), k);
            assert!(p.derivs[0] > 0.0);
            assert_eq!(p.values[0], 0.0);
            assert_eq!(*p.values.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = ho_basis(12, 80, CpOrder::Eight);
        let mesh = b.mesh();
        for i in 0..b.len() {
            for j in 0..=i {
                let s = integrate_product(&b.pair(i).factor(), &b.pair(j).factor(), mesh).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-9, "({i},{j}) {s}");
                // the polynomial rule agrees to its own accuracy
                let vals: Vec<f64> = b.pair(i).values.iter().zip(&b.pair(j).values).map(|(a, c)| a * c).collect();
                let ders: Vec<f64> = (0..vals.len())
                    .map(|k| b.pair(i).derivs[k] * b.pair(j).values[k] + b.pair(i).values[k] * b.pair(j).derivs[k])
                    .collect();
                assert!((integrate_lobatto_hermite(mesh, &vals, &ders) - expect).abs() < 1e-8);
            }
        }
    }

    /// Hermite function with the sign convention `y'(x_min) > 0`.
    fn hermite_signed(n: usize, x: f64) -> (f64, f64) {
        let (h, dh) = crate::potential::hermite_function(n, x);
        let s = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        (s * h, s * dh)
    }

    #[test]
    fn eigenfunctions_match_hermite_functions() {
        let b = ho_basis(6, 80, CpOrder::Eight);
        for (k, p) in b.pairs().iter().enumerate() {
            for (i, &x) in b.mesh().nodes().iter().enumerate() {
                let (h, dh) = hermite_signed(k, x);
                assert!((p.values[i] - h).abs() < 1e-8, "n={k} x={x}");
                assert!((p.derivs[i] - dh).abs() < 1e-7, "n={k} x={x}");
            }
        }
    }

    #[test]
    fn evaluate_between_nodes() {
        let b = ho_basis(4, 60, CpOrder::Eight);
        for k in 0..4 {
            for &x in &[-3.21, -0.05, 0.0, 1.333, 2.9, 9.99] {
                let (y, dy) = b.evaluate(k, x);
                let (h, dh) = hermite_signed(k, x);
                assert!((y - h).abs() < 1e-8 && (dy - dh).abs() < 1e-7, "k={k} x={x}: {y} vs {h}");
            }
            // at a node it reproduces the stored data
            let i = 40;
            let (y, _) = b.evaluate(k, b.mesh().nodes()[i]);
            assert!((y - b.pair(k).values[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn morse_levels() {
        let p = crate::potential::MorseParameters::HF;
        let v = move |x: f64| p.depth * (1.0 - (-p.alpha * x).exp()).powi(2);
        let mesh = SpatialMesh::new(p.x_min, p.x_max, 64).unwrap();
        let b = compute_basis(&v, &mesh, p.reduced_mass, &BasisConfig::new(5)).unwrap();
        for (k, e) in b.energies().iter().enumerate() {
            assert!((e - p.level(k + 1)).abs() < 1e-8 * p.depth, "n={} {e} vs {}", k + 1, p.level(k + 1));
        }
    }

    fn observed_order(order: CpOrder, index: usize) -> f64 {
        let errs: Vec<f64> = [50usize, 100, 200, 400]
            .iter()
            .map(|&steps| (ho_basis(index + 1, steps, order).pair(index).energy - (index as f64 + 0.5)).abs())
            .collect();
        // least-squares slope of log error versus log dx
        let xs: Vec<f64> = [0.4f64, 0.2, 0.1, 0.05].iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = xs.iter().sum::<f64>() / 4.0;
        let my = ys.iter().sum::<f64>() / 4.0;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn convergence_order_two() {
        let p = observed_order(CpOrder::Two, 3);
        assert!((p - 2.0).abs() <= 0.5, "observed order {p}");
    }

    #[test]
    fn convergence_order_four() {
        let p = observed_order(CpOrder::Four, 3);
        assert!((p - 4.0).abs() <= 0.5, "observed order {p}");
    }

    #[test]
    fn single_precision_smoke() {
        let mesh = SpatialMesh::<f32>::new(-8.0, 8.0, 40).unwrap();
        let b = compute_basis(&|x: f32| 0.5 * x * x, &mesh, 1.0, &BasisConfig::new(3)).unwrap();
        for (k, e) in b.energies().iter().enumerate() {
            assert!((e - (k as f32 + 0.5)).abs() < 1e-4, "{e}");
        }
    }

    #[test]
    fn bad_configurations() {
        let mesh = SpatialMesh::new(-1.0, 1.0, 4).unwrap();
        assert!(compute_basis(&ho, &mesh, 1.0, &BasisConfig::new(0)).unwrap_err().is_config());
        assert!(compute_basis(&ho, &mesh, -1.0, &BasisConfig::new(1)).unwrap_err().is_config());
        let shooter = Shooter::new(&ho, &mesh, 1.0, CpOrder::Two).unwrap();
        assert!(shooter.shoot_at(0.0, 0).is_err());
        assert!(CpOrder::from_int(3).is_err());
    }
}
