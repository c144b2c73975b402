//! Time-dependent potentials `V(x,t)`, their sector averages, initial states
//! and the built-in benchmark problems.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::quadrature::integrate_lobatto_hermite;
use crate::real::{Cplx, Real};

pub type Fn1<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
pub type Fn2<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
pub type ComplexFn1<T> = Arc<dyn Fn(T) -> Cplx<T> + Send + Sync>;
pub type ComplexFn2<T> = Arc<dyn Fn(T, T) -> Cplx<T> + Send + Sync>;

/// One term `g(t)·w(x)` of a separable potential.
#[derive(Clone)]
pub struct SeparableTerm<T> {
    pub time_factor: Fn1<T>,
    pub shape: Fn1<T>,
    pub shape_derivative: Fn1<T>,
}

/// `V(x,t) = V_s(x) + Σ_j g_j(t) w_j(x)`.
#[derive(Clone)]
pub struct SeparableForm<T> {
    pub static_part: Fn1<T>,
    pub static_derivative: Fn1<T>,
    pub terms: Vec<SeparableTerm<T>>,
}

impl<T: Real> SeparableForm<T> {
    pub fn value(&self, x: T, t: T) -> T {
        let mut v = (self.static_part)(x);
        for term in &self.terms {
            v += (term.time_factor)(t) * (term.shape)(x);
        }
        v
    }

    pub fn x_derivative(&self, x: T, t: T) -> T {
        let mut v = (self.static_derivative)(x);
        for term in &self.terms {
            v += (term.time_factor)(t) * (term.shape_derivative)(x);
        }
        v
    }
}

/// A potential `V(x,t)` with reduced mass, in units where ħ = 1.
#[derive(Clone)]
pub struct PotentialModel<T> {
    reduced_mass: T,
    value: Fn2<T>,
    x_derivative: Option<Fn2<T>>,
    separable: Option<SeparableForm<T>>,
}

impl<T: fmt::Debug> fmt::Debug for PotentialModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialModel")
            .field("reduced_mass", &self.reduced_mass)
            .field("has_derivative", &self.x_derivative.is_some())
            .field("separable_terms", &self.separable.as_ref().map(|s| s.terms.len()))
            .finish()
    }
}

impl<T: Real> PotentialModel<T> {
    /// Generic model from a value function and optional x-derivative.
    pub fn new(reduced_mass: T, value: Fn2<T>, x_derivative: Option<Fn2<T>>) -> Result<Self> {
        if !(reduced_mass > T::zero()) || !reduced_mass.is_finite() {
            return Err(Error::Config(format!("reduced mass must be positive, got {reduced_mass}")));
        }
        Ok(Self { reduced_mass, value, x_derivative, separable: None })
    }

    /// Model whose value and derivative are those of a separable form.
    pub fn separable(reduced_mass: T, form: SeparableForm<T>) -> Result<Self> {
        let vf = form.clone();
        let df = form.clone();
        let mut m = Self::new(reduced_mass, Arc::new(move |x, t| vf.value(x, t)), Some(Arc::new(move |x, t| df.x_derivative(x, t))))?;
        m.separable = Some(form);
        Ok(m)
    }

    /// Time-independent model.
    pub fn stationary(reduced_mass: T, v: Fn1<T>, dv: Fn1<T>) -> Result<Self> {
        Self::separable(reduced_mass, SeparableForm { static_part: v, static_derivative: dv, terms: Vec::new() })
    }

    pub fn reduced_mass(&self) -> T {
        self.reduced_mass
    }

    #[inline]
    pub fn value(&self, x: T, t: T) -> T {
        (self.value)(x, t)
    }

    #[inline]
    pub fn x_derivative(&self, x: T, t: T) -> Option<T> {
        self.x_derivative.as_ref().map(|d| d(x, t))
    }

    pub fn has_derivative(&self) -> bool {
        self.x_derivative.is_some()
    }

    pub fn separable_form(&self) -> Option<&SeparableForm<T>> {
        self.separable.as_ref()
    }

    /// Drops the separable fast path, leaving only value and derivative.
    pub fn without_separable_form(&self) -> Self {
        Self { separable: None, ..self.clone() }
    }

    /// Drops the x-derivative (and with it the separable form).
    pub fn without_derivative(&self) -> Self {
        Self { separable: None, x_derivative: None, ..self.clone() }
    }
}

/// The potential frozen at one instant, `x ↦ V(x, t_frozen)`.
#[derive(Clone)]
pub struct FrozenPotential<T> {
    model: Arc<PotentialModel<T>>,
    time: T,
}

impl<T: fmt::Debug> fmt::Debug for FrozenPotential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrozenPotential").field("model", &self.model).field("time", &self.time).finish()
    }
}

impl<T: Real> FrozenPotential<T> {
    pub fn new(model: Arc<PotentialModel<T>>, time: T) -> Self {
        Self { model, time }
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn model(&self) -> &Arc<PotentialModel<T>> {
        &self.model
    }

    pub fn reduced_mass(&self) -> T {
        self.model.reduced_mass()
    }

    #[inline]
    pub fn value(&self, x: T) -> T {
        self.model.value(x, self.time)
    }

    #[inline]
    pub fn derivative(&self, x: T) -> Option<T> {
        self.model.x_derivative(x, self.time)
    }
}

/// Staircase approximation of a sector: `V̄(x) = V(x, (t_left + t_right)/2)`.
pub fn sector_average<T: Real>(model: &Arc<PotentialModel<T>>, t_left: T, t_right: T) -> Result<FrozenPotential<T>> {
    if !(t_left < t_right) {
        return Err(Error::Config(format!("empty sector [{t_left}, {t_right}]")));
    }
    Ok(FrozenPotential::new(Arc::clone(model), (t_left + t_right) * T::lit(0.5)))
}

/// `ψ(x, 0)` with optional derivative.
#[derive(Clone)]
pub struct InitialState<T> {
    pub psi0: ComplexFn1<T>,
    pub derivative: Option<ComplexFn1<T>>,
    pub normalized: bool,
}

impl<T: Real> InitialState<T> {
    /// `∫|ψ₀|²` by composite derivative-augmented Lobatto quadrature on `mesh`
    /// (classical Lobatto without a derivative).
    pub fn norm_squared(&self, mesh: &SpatialMesh<T>) -> T {
        let vals: Vec<T> = mesh.nodes().iter().map(|&x| (self.psi0)(x).norm_sqr()).collect();
        match &self.derivative {
            Some(d) => {
                let ders: Vec<T> = mesh
                    .nodes()
                    .iter()
                    .map(|&x| {
                        let p = (self.psi0)(x);
                        let dp = d(x);
                        T::lit(2.0) * (p.re * dp.re + p.im * dp.im)
                    })
                    .collect();
                integrate_lobatto_hermite(mesh, &vals, &ders)
            }
            None => mesh.integrate_nodes(&vals),
        }
    }
}

/// Everything needed to pose one benchmark run.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub label: String,
    pub potential: Arc<PotentialModel<T>>,
    pub initial: InitialState<T>,
    pub x_min: T,
    pub x_max: T,
    pub exact: Option<ComplexFn2<T>>,
    /// Natural time unit, when the problem has one.
    pub time_unit: Option<T>,
    /// Named physical parameters, echoed into run metadata.
    pub parameters: Vec<(String, f64)>,
}

impl<T: fmt::Debug> fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("label", &self.label)
            .field("domain", &[&self.x_min, &self.x_max])
            .field("potential", &self.potential)
            .field("has_exact", &self.exact.is_some())
            .field("parameters", &self.parameters)
            .finish()
    }
}

/// Physicists' Hermite polynomial `H_n(x)` (`H₀ = 1`, `H₁ = 2x`).
pub fn hermite_polynomial<T: Real>(n: usize, x: T) -> T {
    let two = T::lit(2.0);
    let (mut h0, mut h1) = (T::one(), two * x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = two * x * h1 - two * T::from_usize_lossy(k) * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Normalized Hermite function `(2ⁿ n! √π)^{-1/2} e^{−x²/2} H_n(x)` and its
/// derivative, by the stable normalized recurrence.
pub fn hermite_function<T: Real>(n: usize, x: T) -> (T, T) {
    let pi_q = T::PI().powf(T::lit(-0.25));
    let mut prev = T::zero();
    let mut cur = pi_q * (-x * x * T::lit(0.5)).exp();
    for k in 0..n {
        let kf = T::from_usize_lossy(k);
        let next = (T::lit(2.0) / (kf + T::one())).sqrt() * x * cur - (kf / (kf + T::one())).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    // φ_n' = sqrt(2n) φ_{n-1} − x φ_n
    let deriv = (T::lit(2.0) * T::from_usize_lossy(n)).sqrt() * prev - x * cur;
    (cur, deriv)
}

/// `V(x,t) = x²/2 − 2t`, `μ = 1`, on `[−10, 10]`, starting from the `n`-th
/// harmonic-oscillator eigenfunction; the exact solution is
/// `ψ₀(x)·exp(−i(n+½)t + i t²)`.
pub fn problem1<T: Real>(n: usize) -> ProblemSpec<T> {
    let form = SeparableForm {
        static_part: Arc::new(|x: T| x * x * T::lit(0.5)),
        static_derivative: Arc::new(|x: T| x),
        terms: vec![SeparableTerm {
            time_factor: Arc::new(|t: T| T::lit(-2.0) * t),
            shape: Arc::new(|_| T::one()),
            shape_derivative: Arc::new(|_| T::zero()),
        }],
    };
    let potential = Arc::new(PotentialModel::separable(T::one(), form).expect("valid mass"));
    let psi0: ComplexFn1<T> = Arc::new(move |x| Cplx::new(hermite_function(n, x).0, T::zero()));
    let dpsi0: ComplexFn1<T> = Arc::new(move |x| Cplx::new(hermite_function(n, x).1, T::zero()));
    let energy = T::from_usize_lossy(n) + T::lit(0.5);
    let exact: ComplexFn2<T> = Arc::new(move |x, t| {
        let phase = -energy * t + t * t;
        Cplx::from_polar(T::one(), phase) * hermite_function(n, x).0
    });
    ProblemSpec {
        label: format!("problem1:{n}"),
        potential,
        initial: InitialState { psi0, derivative: Some(dpsi0), normalized: true },
        x_min: T::lit(-10.0),
        x_max: T::lit(10.0),
        exact: Some(exact),
        time_unit: None,
        parameters: vec![("mu".into(), 1.0), ("n".into(), n as f64)],
    }
}

/// `ω²(t) = 4 − 3e^{−t}` of the driven oscillator.
pub fn problem2_omega_sq<T: Real>(t: T) -> T {
    T::lit(4.0) - T::lit(3.0) * (-t).exp()
}

/// `H = −½∂²ₓ + ω²(t)x²/2`, `ω²(t) = 4 − 3e^{−t}`, on `[−10, 10]`, from the
/// coherent state `π^{−1/4} e^{−x²/2}`.
pub fn problem2<T: Real>() -> ProblemSpec<T> {
    let form = SeparableForm {
        static_part: Arc::new(|_| T::zero()),
        static_derivative: Arc::new(|_| T::zero()),
        terms: vec![SeparableTerm {
            time_factor: Arc::new(|t: T| problem2_omega_sq(t) * T::lit(0.5)),
            shape: Arc::new(|x: T| x * x),
            shape_derivative: Arc::new(|x: T| T::lit(2.0) * x),
        }],
    };
    let potential = Arc::new(PotentialModel::separable(T::one(), form).expect("valid mass"));
    let c = T::PI().powf(T::lit(-0.25));
    let psi0: ComplexFn1<T> = Arc::new(move |x: T| Cplx::new(c * (-x * x * T::lit(0.5)).exp(), T::zero()));
    let dpsi0: ComplexFn1<T> = Arc::new(move |x: T| Cplx::new(-x * c * (-x * x * T::lit(0.5)).exp(), T::zero()));
    ProblemSpec {
        label: "problem2".into(),
        potential,
        initial: InitialState { psi0, derivative: Some(dpsi0), normalized: true },
        x_min: T::lit(-10.0),
        x_max: T::lit(10.0),
        exact: None,
        time_unit: None,
        parameters: vec![("mu".into(), 1.0)],
    }
}

/// Morse oscillator driven by a monochromatic field, HF parameters (atomic units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorseParameters {
    pub reduced_mass: f64,
    pub depth: f64,
    pub alpha: f64,
    pub field_amplitude: f64,
    pub field_frequency: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl MorseParameters {
    pub const HF: MorseParameters = MorseParameters {
        reduced_mass: 1745.0,
        depth: 0.2251,
        alpha: 1.1741,
        field_amplitude: 0.011025,
        field_frequency: 0.01787,
        x_min: -1.0,
        x_max: 4.32,
    };

    /// Harmonic frequency `ω₀ = α√(2D/μ)`.
    pub fn omega0(&self) -> f64 {
        self.alpha * (2.0 * self.depth / self.reduced_mass).sqrt()
    }

    /// `ρ = 2D/ω₀`.
    pub fn rho(&self) -> f64 {
        2.0 * self.depth / self.omega0()
    }

    /// Bound-state energy `ω₀(n−½) − ω₀²(n−½)²/(4D)` for 1-based `n`.
    pub fn level(&self, n: usize) -> f64 {
        let w0 = self.omega0();
        let v = n as f64 - 0.5;
        w0 * v - w0 * w0 * v * v / (4.0 * self.depth)
    }

    /// Field period `τ = 2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.field_frequency
    }
}

/// Number of mesh steps used to recompute the problem-3 normalization.
const MORSE_NORMALIZATION_STEPS: usize = 4000;

/// Driven Morse oscillator: Morse potential plus `A cos(ωt)·x`, starting in the
/// Morse ground state, normalized by quadrature.
pub fn problem3<T: Real>() -> ProblemSpec<T> {
    problem3_with(MorseParameters::HF)
}

pub fn problem3_with<T: Real>(p: MorseParameters) -> ProblemSpec<T> {
    let d = T::lit(p.depth);
    let a = T::lit(p.alpha);
    let amp = T::lit(p.field_amplitude);
    let w = T::lit(p.field_frequency);
    let form = SeparableForm {
        static_part: Arc::new(move |x: T| {
            let e = T::one() - (-a * x).exp();
            d * e * e
        }),
        static_derivative: Arc::new(move |x: T| {
            let ex = (-a * x).exp();
            T::lit(2.0) * d * a * (T::one() - ex) * ex
        }),
        terms: vec![SeparableTerm {
            time_factor: Arc::new(move |t: T| amp * (w * t).cos()),
            shape: Arc::new(|x: T| x),
            shape_derivative: Arc::new(|_| T::one()),
        }],
    };
    let potential = Arc::new(PotentialModel::separable(T::lit(p.reduced_mass), form).expect("valid mass"));
    let rho = T::lit(p.rho());
    // unnormalized ground state, evaluated in log form to avoid overflow of exp(ρ)
    let shape = move |x: T| -> (T, T) {
        let ex = (-a * x).exp();
        let log = -(rho - T::lit(0.5)) * a * x - rho * ex;
        let val = log.exp();
        let dlog = -(rho - T::lit(0.5)) * a + rho * a * ex;
        (val, val * dlog)
    };
    let mesh = SpatialMesh::new(T::lit(p.x_min), T::lit(p.x_max), MORSE_NORMALIZATION_STEPS).expect("valid domain");
    let vals: Vec<T> = mesh.nodes().iter().map(|&x| shape(x).0.powi(2)).collect();
    let ders: Vec<T> = mesh
        .nodes()
        .iter()
        .map(|&x| {
            let (v, dv) = shape(x);
            T::lit(2.0) * v * dv
        })
        .collect();
    let sigma = T::one() / integrate_lobatto_hermite(&mesh, &vals, &ders).sqrt();
    let psi0: ComplexFn1<T> = Arc::new(move |x| Cplx::new(sigma * shape(x).0, T::zero()));
    let dpsi0: ComplexFn1<T> = Arc::new(move |x| Cplx::new(sigma * shape(x).1, T::zero()));
    ProblemSpec {
        label: "problem3".into(),
        potential,
        initial: InitialState { psi0, derivative: Some(dpsi0), normalized: true },
        x_min: T::lit(p.x_min),
        x_max: T::lit(p.x_max),
        exact: None,
        time_unit: Some(T::lit(p.period())),
        parameters: vec![
            ("mu".into(), p.reduced_mass),
            ("D".into(), p.depth),
            ("alpha".into(), p.alpha),
            ("A".into(), p.field_amplitude),
            ("omega".into(), p.field_frequency),
            ("omega0".into(), p.omega0()),
            ("rho".into(), p.rho()),
            ("sigma".into(), sigma.as_f64()),
            ("tau".into(), p.period()),
        ],
    }
}

/// Resolves a problem name: `problem1:n`, `problem2`, `problem3`.
pub fn problem_by_name<T: Real>(name: &str) -> Result<ProblemSpec<T>> {
    let name = name.trim();
    if let Some(rest) = name.strip_prefix("problem1") {
        let n = match rest.strip_prefix(':') {
            Some(n) => n.parse::<usize>().map_err(|_| Error::Config(format!("bad problem1 index in '{name}'")))?,
            None if rest.is_empty() => 0,
            None => return Err(Error::Config(format!("unknown problem '{name}'"))),
        };
        return Ok(problem1(n));
    }
    match name {
        "problem2" => Ok(problem2()),
        "problem3" => Ok(problem3()),
        _ => Err(Error::Config(format!("unknown problem '{name}' (expected problem1:n, problem2, problem3)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn problem1_values() {
        let p = problem1::<f64>(0);
        let pi_q = std::f64::consts::PI.powf(-0.25);
        assert!(((p.initial.psi0)(0.0).re - pi_q).abs() < 1e-15);
        assert_eq!(p.potential.value(2.0, 3.0), -4.0);
        let avg = sector_average(&p.potential, 0.0, 1.0).unwrap();
        for x in [-3.0, 0.0, 1.5] {
            assert!((avg.value(x) - (x * x / 2.0 - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn problem1_exact_phase() {
        let p = problem1::<f64>(2);
        let exact = p.exact.as_ref().unwrap();
        for &(x, t) in &[(0.3, 0.7), (-1.2, 4.0), (2.0, 12.5)] {
            let ratio = exact(x, t) / (p.initial.psi0)(x);
            let expect = Cplx::from_polar(1.0, -2.5 * t + t * t);
            assert!((ratio - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn problem1_difference_from_average_is_uniform() {
        let p = problem1::<f64>(1);
        let avg = sector_average(&p.potential, 2.0, 3.0).unwrap();
        for &t in &[2.0, 2.3, 3.0] {
            for &x in &[-7.0, 0.1, 4.4] {
                let d = p.potential.value(x, t) - avg.value(x);
                assert!((d + 2.0 * (t - 2.5)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn problem2_values() {
        assert_eq!(problem2_omega_sq(0.0f64), 1.0);
        assert!((problem2_omega_sq(40.0f64) - 4.0).abs() < 1e-12);
        let p = problem2::<f64>();
        let avg = sector_average(&p.potential, 0.0, 0.6).unwrap();
        let x = 1.7;
        let expect = (4.0 - 3.0 * (-0.3f64).exp()) * x * x / 2.0;
        assert!((avg.value(x) - expect).abs() < 1e-14);
        assert!(((p.initial.psi0)(0.0).re - std::f64::consts::PI.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn time_independent_average_is_the_potential() {
        let m = Arc::new(PotentialModel::stationary(1.0, Arc::new(|x: f64| x.powi(4)), Arc::new(|x: f64| 4.0 * x.powi(3))).unwrap());
        let avg = sector_average(&m, 5.0, 9.0).unwrap();
        assert_eq!(avg.value(1.3), 1.3f64.powi(4));
        assert!(sector_average(&m, 1.0, 1.0).is_err());
    }

    #[test]
    fn problem3_parameters_and_limits() {
        let p = problem3::<f64>();
        let get = |k: &str| p.parameters.iter().find(|(n, _)| n == k).unwrap().1;
        assert_eq!(get("mu"), 1745.0);
        assert_eq!(get("D"), 0.2251);
        assert_eq!(get("alpha"), 1.1741);
        assert_eq!(get("A"), 0.011025);
        assert_eq!(get("omega"), 0.01787);
        assert_eq!((p.x_min, p.x_max), (-1.0, 4.32));
        let form = p.potential.separable_form().unwrap();
        assert_eq!((form.static_part)(0.0), 0.0);
        assert!(((form.static_part)(60.0) - 0.2251).abs() < 1e-14);
        // the quoted normalization constant is the reciprocal of σ
        let sigma = get("sigma");
        let quoted = 0.2411580885e-10;
        assert!(((1.0 / sigma) - quoted).abs() < 1e-8 * quoted, "1/σ = {}", 1.0 / sigma);
        assert!((p.time_unit.unwrap() - 2.0 * std::f64::consts::PI / 0.01787).abs() < 1e-12);
    }

    #[test]
    fn separable_forms_match_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [problem1::<f64>(3), problem2(), problem3()] {
            let form = p.potential.separable_form().unwrap().clone();
            let generic = p.potential.without_separable_form();
            for _ in 0..100 {
                let x = rng.gen_range(p.x_min..p.x_max);
                let t = rng.gen_range(0.0..50.0);
                let v = generic.value(x, t);
                assert!((form.value(x, t) - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn builtin_initial_states_are_normalized() {
        for p in [problem1::<f64>(0), problem1(2), problem1(6), problem2(), problem3()] {
            let mesh = SpatialMesh::new(p.x_min, p.x_max, 400).unwrap();
            let n = p.initial.norm_squared(&mesh);
            assert!((n - 1.0).abs() < 1e-8, "{}: {n}", p.label);
        }
    }

    #[test]
    fn hermite_function_matches_polynomial_definition() {
        let mut fact = 1.0;
        for n in 0..12usize {
            if n > 0 {
                fact *= n as f64;
            }
            let norm = (2f64.powi(n as i32) * fact * std::f64::consts::PI.sqrt()).sqrt().recip();
            for &x in &[-2.5f64, -0.3, 0.0, 1.1, 3.7] {
                let expect = norm * (-x * x / 2.0).exp() * hermite_polynomial(n, x);
                let (v, d) = hermite_function(n, x);
                assert!((v - expect).abs() < 1e-13, "n={n} x={x}");
                // finite-difference derivative
                let h = 1e-5;
                let fd = (hermite_function(n, x + h).0 - hermite_function(n, x - h).0) / (2.0 * h);
                assert!((d - fd).abs() < 1e-8, "n={n} x={x}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn names_resolve() {
        assert_eq!(problem_by_name::<f64>("problem1:4").unwrap().label, "problem1:4");
        assert_eq!(problem_by_name::<f64>("problem3").unwrap().label, "problem3");
        assert!(problem_by_name::<f64>("problem7").is_err());
        assert!(problem_by_name::<f64>("problem1:x").is_err());
    }
}
