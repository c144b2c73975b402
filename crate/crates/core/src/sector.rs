//! Time sectors: the frozen-potential basis of one slab `[t_left, t_right]`,
//! the overlap with the previous sector, the coupling matrix `ΔV(t)`, and the
//! maps between wavefunctions and expansion coefficients.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mesh::SpatialMesh;
use crate::potential::{sector_average, InitialState, PotentialModel};
use crate::quadrature::{integrate_lobatto, integrate_lobatto_hermite, integrate_product, integrate_with_rules, PairRules, WeightSamples};
use crate::real::{Cplx, Real};
use crate::stationary::{compute_basis, Basis, BasisConfig};

/// Expansion coefficients `c_n(t)` in a sector basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientState<T> {
    pub c: Vec<Cplx<T>>,
    pub t: T,
}

impl<T: Real> CoefficientState<T> {
    pub fn norm(&self) -> T {
        crate::linalg::norm2_complex(&self.c)
    }
}

/// How `ΔV(t)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingPath {
    /// Precomputed `W_j` blocks of a separable potential when available, quadrature otherwise.
    #[default]
    Auto,
    /// Quadrature of `V(x,t) − V̄(x)` at every requested `t`.
    Generic,
}

/// One rectangle `[x_min, x_max] × [t_left, t_right]`.
#[derive(Debug)]
pub struct TimeSector<T> {
    pub index: usize,
    pub t_left: T,
    pub t_right: T,
    pub t_mid: T,
    basis: Basis<T>,
    overlap: Option<Mat<T>>,
    couplings: Vec<Mat<T>>,
    potential: Arc<PotentialModel<T>>,
    path: CouplingPath,
    rule_cache: OnceLock<Vec<PairRules<T>>>,
}

impl<T: Real> Clone for TimeSector<T> {
    fn clone(&self) -> Self {
        Self {
            index: self.index,
            t_left: self.t_left,
            t_right: self.t_right,
            t_mid: self.t_mid,
            basis: self.basis.clone(),
            overlap: self.overlap.clone(),
            couplings: self.couplings.clone(),
            potential: Arc::clone(&self.potential),
            path: self.path,
            rule_cache: self.rule_cache.clone(),
        }
    }
}

/// Index pairs `(n, m)` with `m ≤ n`, row by row.
fn lower_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
}

fn symmetric_from_lower<T: Real>(n: usize, entries: &[T]) -> Mat<T> {
    let mut m = Mat::zeros(n, n);
    for (&(i, j), &v) in lower_pairs(n).iter().zip(entries) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

fn leading_block<T: Real>(m: &Mat<T>, n: usize) -> Mat<T> {
    Mat::from_fn(n, n, |i, j| m[(i, j)])
}

/// Builds sector `index` (1-based) over `[t_left, t_right]`.
pub fn build_sector<T: Real>(
    index: usize,
    t_left: T,
    t_right: T,
    potential: &Arc<PotentialModel<T>>,
    mesh: &SpatialMesh<T>,
    config: &BasisConfig<T>,
    previous: Option<&TimeSector<T>>,
) -> Result<TimeSector<T>> {
    build_sector_with(index, t_left, t_right, potential, mesh, config, previous, CouplingPath::Auto)
}

#[allow(clippy::too_many_arguments)]
pub fn build_sector_with<T: Real>(
    index: usize,
    t_left: T,
    t_right: T,
    potential: &Arc<PotentialModel<T>>,
    mesh: &SpatialMesh<T>,
    config: &BasisConfig<T>,
    previous: Option<&TimeSector<T>>,
    path: CouplingPath,
) -> Result<TimeSector<T>> {
    let inner = || -> Result<TimeSector<T>> {
        if let Some(prev) = previous {
            let scale = T::one().max(t_left.abs());
            if (prev.t_right - t_left).abs() > T::lit(1e-12) * scale {
                return Err(Error::Config(format!("sector starts at {t_left} but the previous one ends at {}", prev.t_right)));
            }
            if prev.basis.mesh() != mesh {
                return Err(Error::Config("consecutive sectors must share the spatial mesh".into()));
            }
        }
        let frozen = sector_average(potential, t_left, t_right)?;
        let v = |x: T| frozen.value(x);
        let basis = compute_basis(&v, mesh, potential.reduced_mass(), config)?;
        let n = basis.len();
        let overlap = match previous {
            None => None,
            Some(prev) => {
                let m = prev.basis.len();
                let entries = (0..n * m)
                    .into_par_iter()
                    .map(|k| integrate_product(&basis.pair(k / m).factor(), &prev.basis.pair(k % m).factor(), mesh))
                    .collect::<Result<Vec<T>>>()?;
                Some(Mat::from_rows(n, m, entries))
            }
        };
        let couplings = match (path, potential.separable_form()) {
            (CouplingPath::Auto, Some(form)) => form
                .terms
                .iter()
                .map(|term| {
                    let w: Vec<T> = mesh.nodes().iter().map(|&x| (term.shape)(x)).collect();
                    let dw: Vec<T> = mesh.nodes().iter().map(|&x| (term.shape_derivative)(x)).collect();
                    let samples = WeightSamples { values: &w, derivs: Some(&dw) };
                    let entries = lower_pairs(n)
                        .into_par_iter()
                        .map(|(i, j)| {
                            let rules = PairRules::build(&basis.pair(i).factor(), &basis.pair(j).factor(), mesh, true)?;
                            Ok(integrate_with_rules(&rules, Some(&samples), &basis.pair(i).factor(), &basis.pair(j).factor()))
                        })
                        .collect::<Result<Vec<T>>>()?;
                    Ok(symmetric_from_lower(n, &entries))
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let path = if potential.separable_form().is_some() { path } else { CouplingPath::Generic };
        Ok(TimeSector {
            index,
            t_left,
            t_right,
            t_mid: (t_left + t_right) * T::lit(0.5),
            basis,
            overlap,
            couplings,
            potential: Arc::clone(potential),
            path,
            rule_cache: OnceLock::new(),
        })
    };
    inner().map_err(|e| e.in_sector(index))
}

impl<T: Real> TimeSector<T> {
    pub fn basis(&self) -> &Basis<T> {
        &self.basis
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn mesh(&self) -> &SpatialMesh<T> {
        self.basis.mesh()
    }

    pub fn energies(&self) -> Vec<T> {
        self.basis.energies()
    }

    pub fn width(&self) -> T {
        self.t_right - self.t_left
    }

    /// `S_nm = ∫ yₙᵏ y_mᵏ⁻¹ dx`; absent for the first sector.
    pub fn overlap(&self) -> Option<&Mat<T>> {
        self.overlap.as_ref()
    }

    /// `W_j = ∫ yₙ w_j y_m dx` for every separable term (empty on the generic path).
    pub fn couplings(&self) -> &[Mat<T>] {
        &self.couplings
    }

    pub fn coupling_path(&self) -> CouplingPath {
        self.path
    }

    pub fn potential(&self) -> &Arc<PotentialModel<T>> {
        &self.potential
    }

    /// The same sector restricted to its first `n` basis functions.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.size());
        let overlap = self.overlap.as_ref().map(|s| Mat::from_fn(n, n.min(s.cols()), |i, j| s[(i, j)]));
        Self {
            index: self.index,
            t_left: self.t_left,
            t_right: self.t_right,
            t_mid: self.t_mid,
            basis: self.basis.truncated(n),
            overlap,
            couplings: self.couplings.iter().map(|w| leading_block(w, n)).collect(),
            potential: Arc::clone(&self.potential),
            path: self.path,
            rule_cache: OnceLock::new(),
        }
    }

    /// `ΔV_nm(t) = ∫ yₙ (V(x,t) − V̄(x)) y_m dx`.
    pub fn delta_v(&self, t: T) -> Result<Mat<T>> {
        let n = self.size();
        match (self.path, self.potential.separable_form()) {
            (CouplingPath::Auto, Some(form)) => {
                let mut m = Mat::zeros(n, n);
                for (term, w) in form.terms.iter().zip(&self.couplings) {
                    let g = (term.time_factor)(t) - (term.time_factor)(self.t_mid);
                    if g != T::zero() {
                        m.axpy(g, w);
                    }
                }
                Ok(m)
            }
            _ => self.delta_v_generic(t),
        }
    }

    fn pair_rules(&self, with_derivatives: bool) -> Result<&Vec<PairRules<T>>> {
        if let Some(r) = self.rule_cache.get() {
            return Ok(r);
        }
        let b = &self.basis;
        let rules = lower_pairs(b.len())
            .into_par_iter()
            .map(|(i, j)| PairRules::build(&b.pair(i).factor(), &b.pair(j).factor(), b.mesh(), with_derivatives))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.rule_cache.get_or_init(|| rules))
    }

    /// Quadrature path of [`TimeSector::delta_v`], usable for any potential.
    pub fn delta_v_generic(&self, t: T) -> Result<Mat<T>> {
        let model = &self.potential;
        let nodes = self.mesh().nodes();
        let f: Vec<T> = nodes.iter().map(|&x| model.value(x, t) - model.value(x, self.t_mid)).collect();
        let df: Option<Vec<T>> = if model.has_derivative() {
            Some(
                nodes
                    .iter()
                    .map(|&x| model.x_derivative(x, t).unwrap_or(T::zero()) - model.x_derivative(x, self.t_mid).unwrap_or(T::zero()))
                    .collect(),
            )
        } else {
            None
        };
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("potential is not finite at t = {t}")));
        }
        let rules = self.pair_rules(df.is_some())?;
        let samples = WeightSamples { values: &f, derivs: df.as_deref() };
        let b = &self.basis;
        let entries: Vec<T> = lower_pairs(b.len())
            .iter()
            .zip(rules)
            .map(|(&(i, j), r)| integrate_with_rules(r, Some(&samples), &b.pair(i).factor(), &b.pair(j).factor()))
            .collect();
        Ok(symmetric_from_lower(b.len(), &entries))
    }

    /// `cₙ = ∫ yₙ ψ₀ dx` on the first sector.
    pub fn project_initial(&self, psi0: &InitialState<T>) -> CoefficientState<T> {
        let mesh = self.mesh();
        let nodes = mesh.nodes();
        let psi: Vec<Cplx<T>> = nodes.iter().map(|&x| (psi0.psi0)(x)).collect();
        let dpsi: Option<Vec<Cplx<T>>> = psi0.derivative.as_ref().map(|d| nodes.iter().map(|&x| d(x)).collect());
        let c = self
            .basis
            .pairs()
            .iter()
            .map(|p| {
                let re: Vec<T> = p.values.iter().zip(&psi).map(|(y, s)| *y * s.re).collect();
                let im: Vec<T> = p.values.iter().zip(&psi).map(|(y, s)| *y * s.im).collect();
                match &dpsi {
                    Some(d) => {
                        let dre: Vec<T> = (0..nodes.len()).map(|i| p.derivs[i] * psi[i].re + p.values[i] * d[i].re).collect();
                        let dim: Vec<T> = (0..nodes.len()).map(|i| p.derivs[i] * psi[i].im + p.values[i] * d[i].im).collect();
                        Cplx::new(integrate_lobatto_hermite(mesh, &re, &dre), integrate_lobatto_hermite(mesh, &im, &dim))
                    }
                    None => Cplx::new(integrate_lobatto(mesh, &re), integrate_lobatto(mesh, &im)),
                }
            })
            .collect();
        CoefficientState { c, t: self.t_left }
    }

    /// `C ← S·C_prev` at the sector's left edge.
    pub fn carry_coefficients(&self, previous: &CoefficientState<T>) -> Result<CoefficientState<T>> {
        let s = self.overlap.as_ref().ok_or_else(|| Error::Config(format!("sector {} has no predecessor to carry from", self.index)))?;
        if s.cols() != previous.c.len() {
            return Err(Error::Config(format!(
                "coefficient length {} does not match the previous basis size {}",
                previous.c.len(),
                s.cols()
            )));
        }
        let scale = T::one().max(self.t_left.abs());
        if (previous.t - self.t_left).abs() > T::lit(1e-9) * scale {
            return Err(Error::Config(format!("coefficients at t = {} carried into a sector starting at {}", previous.t, self.t_left)));
        }
        Ok(CoefficientState { c: s.apply_complex(&previous.c), t: self.t_left })
    }

    /// `ψ(xᵢ) = Σ cₙ yₙ(xᵢ)` and `ψ'(xᵢ)` at the mesh nodes.
    pub fn synthesize(&self, state: &CoefficientState<T>) -> (Vec<Cplx<T>>, Vec<Cplx<T>>) {
        let n_nodes = self.mesh().n_nodes();
        let mut psi = vec![Cplx::new(T::zero(), T::zero()); n_nodes];
        let mut dpsi = psi.clone();
        for (c, p) in state.c.iter().zip(self.basis.pairs()) {
            for i in 0..n_nodes {
                psi[i] += *c * p.values[i];
                dpsi[i] += *c * p.derivs[i];
            }
        }
        (psi, dpsi)
    }

    /// `ψ` at arbitrary points inside the domain.
    pub fn synthesize_at(&self, state: &CoefficientState<T>, xs: &[T]) -> Vec<Cplx<T>> {
        xs.iter()
            .map(|&x| {
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (k, c) in state.c.iter().enumerate() {
                    acc += *c * self.basis.evaluate(k, x).0;
                }
                acc
            })
            .collect()
    }

    /// `max |S − I|` over the leading square block, `None` for the first sector.
    pub fn overlap_defect(&self) -> Option<T> {
        self.overlap.as_ref().map(|s| {
            let mut m = T::zero();
            for i in 0..s.rows() {
                for j in 0..s.cols() {
                    let e = if i == j { T::one() } else { T::zero() };
                    m = m.max((s[(i, j)] - e).abs());
                }
            }
            m
        })
    }
}

/// `|ψ|²` integrated with the classical composite Lobatto rule.
pub fn norm_squared<T: Real>(mesh: &SpatialMesh<T>, psi: &[Cplx<T>]) -> T {
    let v: Vec<T> = psi.iter().map(|z| z.norm_sqr()).collect();
    integrate_lobatto(mesh, &v)
}
