//! Batch driver: run configuration, the sector pipeline, self-references,
//! sweeps and output files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::potential::{problem_by_name, ProblemSpec};
use crate::propagator::{propagate_sector_observed, substep_count, PropagatorConfig, TimeOrder};
use crate::quadrature::{exactness_residuals, EfRule};
use crate::real::Cplx;
use crate::reference::{crank_nicolson_solve, err_abs, err_norm, ErrorReport};
use crate::sector::{build_sector, norm_squared, CoefficientState, TimeSector};
use crate::stationary::{BasisConfig, CpOrder};

/// What a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Eigen,
    Sectors,
    Quadcheck,
    Converge,
    CompareCn,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "solve" => Mode::Solve,
            "eigen" => Mode::Eigen,
            "sectors" => Mode::Sectors,
            "quadcheck" => Mode::Quadcheck,
            "converge" => Mode::Converge,
            "compare-cn" => Mode::CompareCn,
            _ => return Err(Error::Config(format!("unknown mode '{s}'"))),
        })
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Eigen => "eigen",
            Mode::Sectors => "sectors",
            Mode::Quadcheck => "quadcheck",
            Mode::Converge => "converge",
            Mode::CompareCn => "compare-cn",
        }
    }
}

/// Parameter varied by a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Dt,
    N,
    Dx,
    K,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dt" => SweepAxis::Dt,
            "N" | "n" => SweepAxis::N,
            "dx" => SweepAxis::Dx,
            "K" | "k" => SweepAxis::K,
            _ => return Err(Error::Config(format!("unknown sweep axis '{s}'"))),
        })
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Dt => "dt",
            SweepAxis::N => "N",
            SweepAxis::Dx => "dx",
            SweepAxis::K => "K",
        }
    }
}

/// Refinement of the self-reference run relative to the run it checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSettings {
    pub dt_div: usize,
    pub extra_n: usize,
    pub dx_div: usize,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self { dt_div: 8, extra_n: 10, dx_div: 2 }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    /// Domain override; the problem's own domain when `None`.
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    /// Spatial steps.
    pub nx: usize,
    pub t_final: f64,
    /// Sector count.
    pub k: usize,
    /// Basis size.
    pub n: usize,
    pub dt: f64,
    pub order: TimeOrder,
    pub cp_order: CpOrder,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub snap: Vec<f64>,
    /// `T`, `dt` and snapshot times are multiples of the problem's natural time unit.
    pub natural_units: bool,
    /// Compare against a refined self-reference when the problem has no exact solution.
    pub reference: bool,
    pub reference_settings: ReferenceSettings,
    pub sweep: Option<SweepAxis>,
    pub values: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "problem1:2".into(),
            x_min: None,
            x_max: None,
            nx: 80,
            t_final: 1.0,
            k: 1,
            n: 10,
            dt: 0.1,
            order: TimeOrder::Four,
            cp_order: CpOrder::default(),
            mode: Mode::Solve,
            out: None,
            snap: Vec::new(),
            natural_units: false,
            reference: true,
            reference_settings: ReferenceSettings::default(),
            sweep: None,
            values: Vec::new(),
        }
    }
}

fn parse_num<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for {key}"))),
    }
}

impl RunConfig {
    /// Sets one `key=value` entry; keys match the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "problem" => self.problem = value.to_string(),
            "xmin" => self.x_min = Some(parse_num(key, value)?),
            "xmax" => self.x_max = Some(parse_num(key, value)?),
            "nx" => self.nx = parse_num(key, value)?,
            "dx" => {
                let dx: f64 = parse_num(key, value)?;
                let problem = problem_by_name::<f64>(&self.problem)?;
                let span = self.x_max.unwrap_or(problem.x_max) - self.x_min.unwrap_or(problem.x_min);
                self.nx = SpatialMesh::with_step(0.0, span, dx)?.n_steps();
            }
            "T" | "t" => self.t_final = parse_num(key, value)?,
            "K" | "k" => self.k = parse_num(key, value)?,
            "N" | "n" => self.n = parse_num(key, value)?,
            "dt" => self.dt = parse_num(key, value)?,
            "order" => self.order = TimeOrder::from_int(parse_num(key, value)?)?,
            "cp-order" | "cp_order" => self.cp_order = CpOrder::from_int(parse_num(key, value)?)?,
            "mode" => self.mode = value.parse()?,
            "out" => self.out = Some(PathBuf::from(value)),
            "snap" => self.snap = parse_list(key, value)?,
            "tau" | "natural-units" => self.natural_units = parse_bool(key, value)?,
            "reference" => self.reference = parse_bool(key, value)?,
            "ref-dt-div" => self.reference_settings.dt_div = parse_num(key, value)?,
            "ref-extra-n" => self.reference_settings.extra_n = parse_num(key, value)?,
            "ref-dx-div" => self.reference_settings.dx_div = parse_num(key, value)?,
            "sweep" => self.sweep = Some(value.parse()?),
            "values" => self.values = parse_list(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut c = Self::default();
        c.apply_file_text(&text)?;
        Ok(c)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec<f64>> {
        let mut p = problem_by_name::<f64>(&self.problem)?;
        if let Some(a) = self.x_min {
            p.x_min = a;
        }
        if let Some(b) = self.x_max {
            p.x_max = b;
        }
        Ok(p)
    }

    fn time_scale(&self, problem: &ProblemSpec<f64>) -> Result<f64> {
        if !self.natural_units {
            return Ok(1.0);
        }
        problem.time_unit.ok_or_else(|| Error::Config(format!("problem '{}' has no natural time unit", self.problem)))
    }

    /// Physical `(T, Δt, snapshot times)`.
    pub fn physical_times(&self, problem: &ProblemSpec<f64>) -> Result<(f64, f64, Vec<f64>)> {
        let s = self.time_scale(problem)?;
        Ok((self.t_final * s, self.dt * s, self.snap.iter().map(|t| t * s).collect()))
    }

    pub fn mesh(&self, problem: &ProblemSpec<f64>) -> Result<SpatialMesh<f64>> {
        SpatialMesh::new(problem.x_min, problem.x_max, self.nx)
    }

    pub fn basis_config(&self) -> BasisConfig<f64> {
        BasisConfig::new(self.n).with_order(self.cp_order)
    }

    /// Checks every invariant of the configuration.
    pub fn validate(&self) -> Result<()> {
        let problem = self.problem_spec()?;
        if !(problem.x_min < problem.x_max) {
            return Err(Error::Config(format!("empty domain [{}, {}]", problem.x_min, problem.x_max)));
        }
        if self.nx == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::Config("nx, K and N must be positive".into()));
        }
        let (t, dt, snaps) = self.physical_times(&problem)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config(format!("final time must be positive, got {t}")));
        }
        substep_count(t / self.k as f64, dt)?;
        for &ts in &snaps {
            if !(0.0..=t * (1.0 + 1e-12)).contains(&ts) {
                return Err(Error::Config(format!("snapshot time {ts} outside [0, {t}]")));
            }
            let r = ts / dt;
            if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
                return Err(Error::Config(format!("snapshot time {ts} is not on the time-step grid")));
            }
        }
        let rs = self.reference_settings;
        if rs.dt_div == 0 || rs.dx_div == 0 {
            return Err(Error::Config("reference refinement factors must be positive".into()));
        }
        if self.mode == Mode::Converge && (self.sweep.is_none() || self.values.is_empty()) {
            return Err(Error::Config("converge mode needs 'sweep' and 'values'".into()));
        }
        Ok(())
    }

    /// `key=value` echo of every parameter.
    pub fn echo(&self) -> Vec<(String, String)> {
        let rs = self.reference_settings;
        let mut v = vec![
            ("problem".to_string(), self.problem.clone()),
            ("mode".into(), self.mode.name().into()),
            ("nx".into(), self.nx.to_string()),
            ("T".into(), format!("{}", self.t_final)),
            ("K".into(), self.k.to_string()),
            ("N".into(), self.n.to_string()),
            ("dt".into(), format!("{}", self.dt)),
            ("order".into(), self.order.as_int().to_string()),
            ("cp_order".into(), self.cp_order.as_int().to_string()),
            ("natural_units".into(), self.natural_units.to_string()),
            ("reference".into(), self.reference.to_string()),
            ("ref_dt_div".into(), rs.dt_div.to_string()),
            ("ref_extra_n".into(), rs.extra_n.to_string()),
            ("ref_dx_div".into(), rs.dx_div.to_string()),
        ];
        if let Ok(p) = self.problem_spec() {
            v.push(("xmin".into(), format!("{}", p.x_min)));
            v.push(("xmax".into(), format!("{}", p.x_max)));
            v.push(("dx".into(), format!("{}", (p.x_max - p.x_min) / self.nx as f64)));
            for (k, val) in &p.parameters {
                v.push((format!("param_{k}"), format!("{val}")));
            }
        }
        v
    }

    /// The refined configuration used as "exact" for problems without a closed form.
    pub fn reference_config(&self) -> Self {
        let rs = self.reference_settings;
        let mut r = self.clone();
        r.dt = self.dt / rs.dt_div as f64;
        r.n = self.n + rs.extra_n;
        r.nx = self.nx * rs.dx_div;
        r.snap.clear();
        r
    }
}

/// Builds sectors `1..=K` of equal width over `[0, T]`, each from the previous one.
pub fn build_sectors(
    problem: &ProblemSpec<f64>,
    mesh: &SpatialMesh<f64>,
    k: usize,
    t_final: f64,
    basis: &BasisConfig<f64>,
) -> Result<Vec<TimeSector<f64>>> {
    if k == 0 {
        return Err(Error::Config("at least one sector is required".into()));
    }
    let width = t_final / k as f64;
    let mut out: Vec<TimeSector<f64>> = Vec::with_capacity(k);
    for s in 0..k {
        let tl = if s == 0 { 0.0 } else { out[s - 1].t_right };
        let tr = if s + 1 == k { t_final } else { width * (s + 1) as f64 };
        let sector = build_sector(s + 1, tl, tr, &problem.potential, mesh, basis, out.last())?;
        out.push(sector);
    }
    Ok(out)
}

/// Wavefunction samples at one time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub psi: Vec<Cplx<f64>>,
}

impl Snapshot {
    /// CSV with header `x,re,im`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,re,im\n");
        for (x, z) in self.x.iter().zip(&self.psi) {
            let _ = writeln!(s, "{x:.16e},{:.16e},{:.16e}", z.re, z.im);
        }
        s
    }
}

/// Result of propagating through all sectors.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Coefficients at `T` in the last sector's basis.
    pub final_state: CoefficientState<f64>,
    /// `‖C‖₂` at the start and after every substep.
    pub norms: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    /// `max |‖C(t)‖ − ‖C(0)‖|`.
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.norms[0];
        self.norms.iter().fold(0.0f64, |m, n| m.max((n - n0).abs()))
    }
}

/// Projects `ψ₀` on sector 1, propagates, and carries coefficients across every boundary.
pub fn evolve(
    problem: &ProblemSpec<f64>,
    sectors: &[TimeSector<f64>],
    propagator: &PropagatorConfig<f64>,
    snap_times: &[f64],
) -> Result<Trajectory> {
    let first = sectors.first().ok_or_else(|| Error::Config("no sectors".into()))?;
    let mut state = first.project_initial(&problem.initial);
    let mut norms = vec![state.norm()];
    let mut snapshots = Vec::new();
    let matches = |t: f64, ts: f64| (t - ts).abs() <= 1e-9 * ts.abs().max(1.0);
    let take = |sector: &TimeSector<f64>, st: &CoefficientState<f64>, out: &mut Vec<Snapshot>| {
        for &ts in snap_times {
            if matches(st.t, ts) && !out.iter().any(|s: &Snapshot| matches(s.t, ts)) {
                out.push(Snapshot { t: ts, x: sector.mesh().nodes().to_vec(), psi: sector.synthesize(st).0 });
            }
        }
    };
    take(first, &state, &mut snapshots);
    for (i, sector) in sectors.iter().enumerate() {
        if i > 0 {
            state = sector.carry_coefficients(&state).map_err(|e| e.in_sector(sector.index))?;
        }
        let prop = propagate_sector_observed(&state, sector, propagator, |st| take(sector, st, &mut snapshots))?;
        norms.extend(prop.norms);
        state = prop.state;
    }
    snapshots.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(Trajectory { final_state: state, norms, snapshots })
}

/// Full solution of one configuration at the final time.
#[derive(Debug, Clone)]
pub struct Solution {
    pub config: RunConfig,
    pub problem: ProblemSpec<f64>,
    pub mesh: SpatialMesh<f64>,
    pub sectors: Vec<TimeSector<f64>>,
    pub trajectory: Trajectory,
    pub t_final: f64,
    pub wall_time_s: f64,
}

impl Solution {
    /// `ψ(x, T)` at the given points.
    pub fn psi_at(&self, xs: &[f64]) -> Vec<Cplx<f64>> {
        let last = self.sectors.last().expect("at least one sector");
        if xs == self.mesh.nodes() {
            return last.synthesize(&self.trajectory.final_state).0;
        }
        last.synthesize_at(&self.trajectory.final_state, xs)
    }

    /// `ψ(x, T)` at the mesh nodes.
    pub fn psi_nodes(&self) -> Vec<Cplx<f64>> {
        self.sectors.last().expect("at least one sector").synthesize(&self.trajectory.final_state).0
    }
}

/// Runs the pipeline with sectors supplied by the caller (shared across sweeps).
pub fn solve_with_sectors(config: &RunConfig, problem: &ProblemSpec<f64>, sectors: Vec<TimeSector<f64>>) -> Result<Solution> {
    let start = Instant::now();
    let (t_final, dt, snaps) = config.physical_times(problem)?;
    let mesh = sectors.first().ok_or_else(|| Error::Config("no sectors".into()))?.mesh().clone();
    let trajectory = evolve(problem, &sectors, &PropagatorConfig { order: config.order, dt }, &snaps)?;
    Ok(Solution {
        config: config.clone(),
        problem: problem.clone(),
        mesh,
        sectors,
        trajectory,
        t_final,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Builds everything and runs one configuration.
pub fn solve(config: &RunConfig) -> Result<Solution> {
    config.validate()?;
    let start = Instant::now();
    let problem = config.problem_spec()?;
    let mesh = config.mesh(&problem)?;
    let (t_final, _, _) = config.physical_times(&problem)?;
    let sectors = build_sectors(&problem, &mesh, config.k, t_final, &config.basis_config())?;
    let mut sol = solve_with_sectors(config, &problem, sectors)?;
    sol.wall_time_s = start.elapsed().as_secs_f64();
    Ok(sol)
}

/// `(err_N, err_A)` of `sol` at the mesh nodes against `exact`.
pub fn compare(sol: &Solution, exact: &[Cplx<f64>]) -> (f64, f64) {
    let approx = sol.psi_nodes();
    (err_norm(&approx, exact, &sol.mesh), err_abs(&approx, exact))
}

/// Exact final-time values at the mesh nodes, when the problem has a closed form.
pub fn exact_nodes(sol: &Solution) -> Option<Vec<Cplx<f64>>> {
    sol.problem.exact.as_ref().map(|f| sol.mesh.nodes().iter().map(|&x| f(x, sol.t_final)).collect())
}

/// Summary of a single run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ErrorReport,
    pub solution: Solution,
    pub reference_kind: &'static str,
}

/// Solves, compares with the exact solution or a self-reference, and builds the report.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let sol = solve(config)?;
    let (exact, kind) = match exact_nodes(&sol) {
        Some(e) => (Some(e), "exact"),
        None if config.reference => {
            let reference = solve(&config.reference_config())?;
            (Some(reference.psi_at(sol.mesh.nodes())), "self")
        }
        None => (None, "none"),
    };
    let (err_n, err_a) = match &exact {
        Some(e) => compare(&sol, e),
        None => (f64::NAN, f64::NAN),
    };
    let psi = sol.psi_nodes();
    let mut report = ErrorReport::new(err_n, err_a, start.elapsed().as_secs_f64());
    for (k, v) in config.echo() {
        report = report.with_parameter(&k, v);
    }
    report = report
        .with_parameter("reference_kind", kind)
        .with_parameter("substeps", sol.trajectory.norms.len() - 1)
        .with_parameter("norm_drift", format!("{:.16e}", sol.trajectory.norm_drift()))
        .with_parameter("final_norm", format!("{:.16e}", norm_squared(&sol.mesh, &psi)));
    Ok(RunOutcome { report, solution: sol, reference_kind: kind })
}

/// One row of a convergence table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub result: std::result::Result<ErrorReport, String>,
    /// Observed order against the previous successful row (`dt` sweeps only).
    pub observed_order: Option<f64>,
}

fn with_axis(config: &RunConfig, axis: SweepAxis, value: f64) -> Result<RunConfig> {
    let mut c = config.clone();
    let as_count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("sweep value {v} must be a positive integer")))
        }
    };
    match axis {
        SweepAxis::Dt => c.dt = value,
        SweepAxis::N => c.n = as_count(value)?,
        SweepAxis::K => c.k = as_count(value)?,
        SweepAxis::Dx => c.set("dx", &format!("{value}"))?,
    }
    c.mode = Mode::Solve;
    c.snap.clear();
    Ok(c)
}

/// Runs one configuration per sweep value against a common reference.
///
/// The reference refines the finest swept setting; for `N` sweeps the sectors are
/// built once at the largest `N` and truncated per run.
pub fn converge(config: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    let problem = config.problem_spec()?;
    let runs: Vec<std::result::Result<RunConfig, String>> =
        values.iter().map(|&v| with_axis(config, axis, v).map_err(|e| e.to_string())).collect();
    let ok: Vec<&RunConfig> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        return Err(Error::Config("no valid sweep value".into()));
    }
    let finest = {
        let mut f = ok[0].clone();
        for c in &ok {
            f.dt = f.dt.min(c.dt);
            f.n = f.n.max(c.n);
            f.nx = f.nx.max(c.nx);
            f.k = f.k.max(c.k);
        }
        f
    };
    let has_exact = problem.exact.is_some();
    let mut cache: HashMap<(usize, usize), Vec<TimeSector<f64>>> = HashMap::new();
    let mut sectors_for = |c: &RunConfig| -> Result<Vec<TimeSector<f64>>> {
        let key = (c.nx, c.k);
        let n_build = if axis == SweepAxis::N { finest.n.max(c.n) } else { c.n };
        if !cache.contains_key(&key) || cache[&key][0].size() < c.n {
            let mesh = c.mesh(&problem)?;
            let (t, _, _) = c.physical_times(&problem)?;
            let s = build_sectors(&problem, &mesh, c.k, t, &BasisConfig::new(n_build).with_order(c.cp_order))?;
            cache.insert(key, s);
        }
        Ok(cache[&key].iter().map(|s| s.truncated(c.n)).collect())
    };
    let reference = if has_exact || !config.reference {
        None
    } else {
        let rc = finest.reference_config();
        rc.validate()?;
        let s = sectors_for(&rc)?;
        Some(solve_with_sectors(&rc, &problem, s)?)
    };
    let mut rows = Vec::with_capacity(values.len());
    let mut previous: Option<(f64, f64)> = None;
    for (value, rc) in values.iter().zip(runs) {
        let result = rc.and_then(|c| {
            let mut go = || -> Result<ErrorReport> {
                c.validate()?;
                let start = Instant::now();
                let s = sectors_for(&c)?;
                let sol = solve_with_sectors(&c, &problem, s)?;
                let exact = match &reference {
                    Some(r) => r.psi_at(sol.mesh.nodes()),
                    None => exact_nodes(&sol).unwrap_or_default(),
                };
                let (en, ea) = if exact.is_empty() { (f64::NAN, f64::NAN) } else { compare(&sol, &exact) };
                Ok(ErrorReport::new(en, ea, start.elapsed().as_secs_f64()).with_parameter(axis.name(), value))
            };
            go().map_err(|e| e.to_string())
        });
        let observed_order = match (&result, axis, previous) {
            (Ok(r), SweepAxis::Dt, Some((pv, pe))) if r.err_a > 0.0 && pe > 0.0 => Some((pe / r.err_a).ln() / (pv / value).ln()),
            _ => None,
        };
        if let Ok(r) = &result {
            previous = Some((*value, r.err_a));
        }
        rows.push(SweepRow { value: *value, result, observed_order });
    }
    Ok(rows)
}

/// CSV of sweep rows: `value,err_N,err_A,wall_time_s,order,error`.
pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = format!("{},err_N,err_A,wall_time_s,order,error\n", axis.name());
    for r in rows {
        let order = r.observed_order.map(|o| format!("{o:.6}")).unwrap_or_default();
        match &r.result {
            Ok(rep) => {
                let _ = writeln!(s, "{},{:.16e},{:.16e},{:.6},{order},", r.value, rep.err_n, rep.err_a, rep.wall_time_s);
            }
            Err(e) => {
                let _ = writeln!(s, "{},,,,,\"{}\"", r.value, e.replace('"', "'"));
            }
        }
    }
    s
}

/// Least-squares slope of `log err` against `log value`.
pub fn fitted_order(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, e)| *e > 0.0).map(|(v, e)| (v.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `n,energy` of sector 1's basis.
pub fn eigen_csv(sector: &TimeSector<f64>) -> String {
    let mut s = String::from("n,energy\n");
    for (i, e) in sector.energies().iter().enumerate() {
        let _ = writeln!(s, "{},{e:.16e}", i + 1);
    }
    s
}

/// Node-wise eigenfunction table `x,y1,...,yN`.
pub fn eigenfunctions_csv(sector: &TimeSector<f64>) -> String {
    let b = sector.basis();
    let mut s = String::from("x");
    for k in 1..=b.len() {
        let _ = write!(s, ",y{k}");
    }
    s.push('\n');
    for (i, x) in sector.mesh().nodes().iter().enumerate() {
        let _ = write!(s, "{x:.16e}");
        for p in b.pairs() {
            let _ = write!(s, ",{:.16e}", p.values[i]);
        }
        s.push('\n');
    }
    s
}

/// `sector,t_left,t_right,n,energy,overlap_defect` rows.
pub fn sectors_csv(sectors: &[TimeSector<f64>]) -> String {
    let mut s = String::from("sector,t_left,t_right,n,energy,overlap_defect\n");
    for sec in sectors {
        let d = sec.overlap_defect().map(|d| format!("{d:.6e}")).unwrap_or_default();
        for (i, e) in sec.energies().iter().enumerate() {
            let _ = writeln!(s, "{},{:.16e},{:.16e},{},{e:.16e},{d}", sec.index, sec.t_left, sec.t_right, i + 1);
        }
    }
    s
}

/// EF exactness residuals over a deterministic grid of squared frequencies in `[−30, 30]²`.
pub fn quadcheck_csv() -> (String, f64) {
    let mut s = String::from("z1_sq,z2_sq,with_derivatives,max_residual\n");
    let mut worst = 0.0f64;
    let grid: Vec<f64> = (0..=12).map(|i| -30.0 + 5.0 * i as f64 + 0.37).collect();
    for &a in &grid {
        for &b in &grid {
            for with_d in [true, false] {
                let za = Cplx::new(a, 0.0);
                let zb = Cplx::new(b, 0.0);
                let r = match EfRule::new(za, zb, 1.0, with_d) {
                    Ok(rule) => exactness_residuals(&rule, za).into_iter().chain(exactness_residuals(&rule, zb)).fold(0.0, f64::max),
                    Err(_) => f64::INFINITY,
                };
                worst = worst.max(r);
                let _ = writeln!(s, "{a},{b},{with_d},{r:.3e}");
            }
        }
    }
    (s, worst)
}

/// Crank-Nicolson comparison on the uniform grid with spacing `Δx` of the CP mesh.
#[derive(Debug, Clone)]
pub struct CnComparison {
    pub report: ErrorReport,
    pub norm_drift: f64,
    pub snapshot: Snapshot,
}

/// Runs CN and compares with the exact solution, or with the CP solution when there is none.
pub fn compare_cn(config: &RunConfig) -> Result<CnComparison> {
    config.validate()?;
    let start = Instant::now();
    let problem = config.problem_spec()?;
    let (t, dt, _) = config.physical_times(&problem)?;
    let dx = (problem.x_max - problem.x_min) / config.nx as f64;
    let cn = crank_nicolson_solve(&problem, dx, dt, t)?;
    let cn_time = start.elapsed().as_secs_f64();
    let (exact, kind): (Vec<Cplx<f64>>, &str) = match &problem.exact {
        Some(f) => (cn.x.iter().map(|&x| f(x, t)).collect(), "exact"),
        None => (solve(config)?.psi_at(&cn.x), "cp"),
    };
    let err_a = err_abs(&cn.values, &exact);
    let norm = |v: &[Cplx<f64>]| v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
    let err_n = norm(&cn.values) - norm(&exact);
    let n0 = cn.norms[0];
    let norm_drift = cn.norms.iter().fold(0.0f64, |m, n| m.max((n - n0).abs()));
    let mut report = ErrorReport::new(err_n, err_a, cn_time);
    for (k, v) in config.echo() {
        report = report.with_parameter(&k, v);
    }
    report = report.with_parameter("reference_kind", kind).with_parameter("cn_norm_drift", format!("{norm_drift:.16e}"));
    Ok(CnComparison { report, norm_drift, snapshot: Snapshot { t, x: cn.x, psi: cn.values } })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

/// Executes the configured mode, writes its files and returns the text for stdout.
pub fn execute(config: &RunConfig) -> Result<String> {
    config.validate()?;
    let out = config.out.as_deref();
    let emit = |name: &str, text: &str| -> Result<()> {
        match out {
            Some(dir) => write_file(dir, name, text),
            None => Ok(()),
        }
    };
    match config.mode {
        Mode::Solve => {
            let outcome = run(config)?;
            let metrics = outcome.report.to_key_value();
            emit("metrics.txt", &metrics)?;
            for s in &outcome.solution.trajectory.snapshots {
                emit(&format!("snapshot_t{}.csv", s.t), &s.to_csv())?;
            }
            let sol = &outcome.solution;
            let fin = Snapshot { t: sol.t_final, x: sol.mesh.nodes().to_vec(), psi: sol.psi_nodes() };
            emit("final.csv", &fin.to_csv())?;
            Ok(metrics)
        }
        Mode::Eigen | Mode::Sectors => {
            let problem = config.problem_spec()?;
            let mesh = config.mesh(&problem)?;
            let (t, _, _) = config.physical_times(&problem)?;
            if config.mode == Mode::Eigen {
                let sectors = build_sectors(&problem, &mesh, 1, t / config.k as f64, &config.basis_config())?;
                let csv = eigen_csv(&sectors[0]);
                emit("eigen.csv", &csv)?;
                emit("eigenfunctions.csv", &eigenfunctions_csv(&sectors[0]))?;
                Ok(csv)
            } else {
                let sectors = build_sectors(&problem, &mesh, config.k, t, &config.basis_config())?;
                let csv = sectors_csv(&sectors);
                emit("sectors.csv", &csv)?;
                Ok(csv)
            }
        }
        Mode::Quadcheck => {
            let (csv, worst) = quadcheck_csv();
            emit("quadcheck.csv", &csv)?;
            Ok(format!("max_residual={worst:.3e}\n"))
        }
        Mode::Converge => {
            let axis = config.sweep.ok_or_else(|| Error::Config("converge mode needs 'sweep'".into()))?;
            let rows = converge(config, axis, &config.values)?;
            let csv = sweep_csv(axis, &rows);
            emit("converge.csv", &csv)?;
            Ok(csv)
        }
        Mode::CompareCn => {
            let c = compare_cn(config)?;
            let metrics = c.report.to_key_value();
            emit("metrics.txt", &metrics)?;
            emit("cn_final.csv", &c.snapshot.to_csv())?;
            Ok(metrics)
        }
    }
}

/// Process exit status for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        2
    } else {
        3
    }
}
