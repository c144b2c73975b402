//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so every line is printed; exits non-zero when any
//! criterion fails.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdse_cp::cli::{build_sectors, compare, compare_cn, fitted_order, run, solve_with_sectors, RunConfig};
use tdse_cp::linalg::{norm2_complex, Mat};
use tdse_cp::mesh::SpatialMesh;
use tdse_cp::potential::{problem1, problem2, MorseParameters, PotentialModel, ProblemSpec};
use tdse_cp::propagator::{neumann_n1, propagate_sector, PropagatorConfig, TimeOrder};
use tdse_cp::quadrature::{apply_complex, exactness_residuals, gauss_legendre, EfRule, DEGENERATE_Z};
use tdse_cp::sector::{build_sector, CoefficientState, TimeSector};
use tdse_cp::stationary::{compute_basis, BasisConfig};
use tdse_cp::Cplx;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Problem-2 sectors at the table settings (K=20, Δx=0.2, T=12), built once with
/// the largest basis any criterion needs and truncated per use.
struct Problem2 {
    problem: ProblemSpec<f64>,
    sectors: Vec<TimeSector<f64>>,
}

const P2_NX: usize = 100;
const P2_K: usize = 20;
const P2_T: f64 = 12.0;
const P2_NMAX: usize = 35;

impl Problem2 {
    fn build() -> Self {
        let problem = problem2::<f64>();
        let mesh = SpatialMesh::new(problem.x_min, problem.x_max, P2_NX).unwrap();
        let sectors = build_sectors(&problem, &mesh, P2_K, P2_T, &BasisConfig::new(P2_NMAX)).unwrap();
        Self { problem, sectors }
    }

    fn truncated(&self, n: usize) -> Vec<TimeSector<f64>> {
        self.sectors.iter().map(|s| s.truncated(n)).collect()
    }

    fn config(&self, n: usize, dt: f64, order: TimeOrder) -> RunConfig {
        RunConfig { problem: "problem2".into(), nx: P2_NX, t_final: P2_T, k: P2_K, n, dt, order, ..RunConfig::default() }
    }

    fn solve(&self, n: usize, dt: f64, order: TimeOrder) -> tdse_cp::cli::Solution {
        solve_with_sectors(&self.config(n, dt, order), &self.problem, self.truncated(n)).unwrap()
    }
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let mesh = SpatialMesh::new(-10.0, 10.0, 200).unwrap();
    let v = |x: f64| 0.5 * x * x;
    let basis = compute_basis(&v, &mesh, 1.0, &BasisConfig::new(20)).unwrap();
    let err = basis.energies().iter().enumerate().map(|(k, e)| (e - (k as f64 + 0.5)).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(err <= 1e-8 && secs <= 10.0, format!("HO N=20 dx=0.1: max |E_n - (n-1/2)| = {err:.2e} (<= 1e-8), {secs:.2} s (<= 10 s)"))
}

fn criterion2() -> Outcome {
    let p = MorseParameters::HF;
    let v = move |x: f64| p.depth * (1.0 - (-p.alpha * x).exp()).powi(2);
    let mesh = SpatialMesh::new(p.x_min, p.x_max, 64).unwrap();
    let basis = compute_basis(&v, &mesh, p.reduced_mass, &BasisConfig::new(5)).unwrap();
    let err = basis.energies().iter().enumerate().map(|(k, e)| (e - p.level(k + 1)).abs()).fold(0.0, f64::max);
    outcome(err <= 1e-8 * p.depth, format!("Morse n=1..5, 64 steps: max |E_n - E_n^exact| / D = {:.2e} (<= 1e-8)", err / p.depth))
}

fn criterion3() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [2usize, 4, 6] {
        let base = RunConfig { problem: format!("problem1:{n}"), nx: 80, t_final: 20.0, k: 5, n: 12, dt: 1.0, ..RunConfig::default() };
        let start = Instant::now();
        let coarse = run(&base).unwrap().report;
        let secs = start.elapsed().as_secs_f64();
        let fine = run(&RunConfig { nx: 160, ..base }).unwrap().report;
        let ok = coarse.err_n.abs() <= 1e-8
            && coarse.err_a <= 1e-8
            && secs <= 60.0
            && fine.err_n.abs() < coarse.err_n.abs()
            && fine.err_a < coarse.err_a;
        pass &= ok;
        parts.push(format!(
            "n={n}: |err_N|={:.1e} err_A={:.1e} ({secs:.1} s); dx/2: {:.1e}/{:.1e}",
            coarse.err_n.abs(),
            coarse.err_a,
            fine.err_n.abs(),
            fine.err_a
        ));
    }
    outcome(pass, format!("problem 1, N=12 K=5 dx=0.25 dt=1 T=20 (<= 1e-8, both decrease with dx/2): {}", parts.join("; ")))
}

fn criterion4() -> Outcome {
    let problem = problem1::<f64>(2);
    let mesh = SpatialMesh::new(problem.x_min, problem.x_max, 80).unwrap();
    let sectors = build_sectors(&problem, &mesh, 5, 20.0, &BasisConfig::new(12)).unwrap();
    let mut worst_phase = 0.0f64;
    let mut worst_leak = 0.0f64;
    for order in [TimeOrder::Two, TimeOrder::Four] {
        for sector in &sectors {
            let e = sector.energies();
            let w = sector.width();
            // i c' = (E_k − 2(t − t_mid)) c integrates to a pure phase: the linear term cancels
            let (tl, tr, tm) = (sector.t_left, sector.t_right, sector.t_mid);
            let linear = (tr - tm).powi(2) - (tl - tm).powi(2);
            for k in 0..sector.size() {
                let mut c = vec![Cplx::new(0.0, 0.0); sector.size()];
                c[k] = Cplx::new(1.0, 0.0);
                let out = propagate_sector(&CoefficientState { c, t: tl }, sector, &PropagatorConfig { order, dt: 1.0 }).unwrap();
                let exact = Cplx::from_polar(1.0, -e[k] * w + linear);
                worst_phase = worst_phase.max((out.state.c[k] - exact).norm());
                for (j, cj) in out.state.c.iter().enumerate() {
                    if j != k {
                        worst_leak = worst_leak.max(cj.norm());
                    }
                }
            }
        }
    }
    outcome(
        worst_phase <= 1e-12,
        format!(
            "problem 1 sectors, orders 2 and 4: max phase error {worst_phase:.1e} (<= 1e-12); largest off-diagonal leak {worst_leak:.1e}"
        ),
    )
}

fn criterion5(p2: &Problem2) -> Outcome {
    // order 2 on the first sector with 120 substeps, then the whole desk run at both orders
    let sector = &p2.truncated(20)[0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c: Vec<Cplx<f64>> = (0..20).map(|_| Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let n0 = norm2_complex(&c);
    let c: Vec<Cplx<f64>> = c.iter().map(|z| z / n0).collect();
    let out = propagate_sector(&CoefficientState { c, t: 0.0 }, sector, &PropagatorConfig { order: TimeOrder::Two, dt: 0.005 }).unwrap();
    let sector_drift = out.norms.iter().fold(0.0f64, |m, n| m.max((n - 1.0).abs()));
    let two = p2.solve(20, 0.02, TimeOrder::Two).trajectory.norm_drift();
    let four = p2.solve(20, 0.02, TimeOrder::Four).trajectory.norm_drift();
    outcome(
        sector_drift <= 1e-12 && two <= 1e-12 && four <= 1e-9,
        format!(
            "order 2: drift {sector_drift:.1e} over {} substeps, {two:.1e} over 600 substeps of problem 2 (<= 1e-12); order 4 on problem 2: {four:.1e} (<= 1e-9)",
            out.norms.len()
        ),
    )
}

fn criterion6(p2: &Problem2) -> Outcome {
    let dts = [0.2, 0.1, 0.05, 0.025];
    let reference = p2.solve(20, dts[3] / 8.0, TimeOrder::Four);
    let exact = reference.psi_nodes();
    let mut points = Vec::new();
    for &dt in &dts {
        let sol = p2.solve(20, dt, TimeOrder::Four);
        points.push((dt, compare(&sol, &exact).1));
    }
    let order = fitted_order(&points);
    let errs: Vec<String> = points.iter().map(|(dt, e)| format!("{dt}:{e:.1e}")).collect();
    outcome(
        (3.5..=4.5).contains(&order),
        format!("problem 2 N=20 K=20 dx=0.2, err_A by dt [{}] vs dt/8 reference: fitted order {order:.2} (in [3.5, 4.5])", errs.join(", ")),
    )
}

/// `∫₀ʰ e^{−δA₀ᴰ} A₁ᴰ h P₁*(δ/h) e^{δA₀ᴰ} dδ` by 64-point Gauss.
fn n1_brute_force(lambda: &[f64], h1: &Mat<f64>, h: f64) -> Mat<Cplx<f64>> {
    let (x, w) = gauss_legendre::<f64>(64);
    let n = lambda.len();
    Mat::from_fn(n, n, |i, j| {
        let mut acc = Cplx::new(0.0, 0.0);
        for (xk, wk) in x.iter().zip(&w) {
            let d = (xk + 1.0) * h / 2.0;
            let phase = Cplx::from_polar(1.0, -(lambda[j] - lambda[i]) * d);
            acc += phase * (2.0 * d - h) * wk * h / 2.0;
        }
        acc * Cplx::new(0.0, -h1[(i, j)])
    })
}

fn criterion7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(3..=8);
        let lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h1 = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let h = rng.gen_range(0.001..0.5);
        let fast = neumann_n1(&lambda, &h1, h);
        let slow = n1_brute_force(&lambda, &h1, h);
        for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
            worst = worst.max((x - y).norm());
        }
    }
    outcome(worst <= 1e-10, format!("100 random (Lambda, H1, h), N=3..8: max entry difference vs 64-point Gauss {worst:.1e} (<= 1e-10)"))
}

/// Composite Simpson over `[x_min, x_max]` with `intervals` (even) subintervals.
fn dense_simpson(x_min: f64, x_max: f64, intervals: usize, mut f: impl FnMut(f64, &mut [f64]), out: &mut [f64]) {
    let h = (x_max - x_min) / intervals as f64;
    let mut buf = vec![0.0; out.len()];
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..=intervals {
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        f(x_min + h * i as f64, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += w * b;
        }
    }
    out.iter_mut().for_each(|o| *o *= h / 3.0);
}

fn criterion8(p2: &Problem2) -> Outcome {
    // exactness on random frequency pairs
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_exact = 0.0f64;
    for _ in 0..100 {
        let z1 = Cplx::new(rng.gen_range(-30.0..30.0), 0.0);
        let z2 = Cplx::new(rng.gen_range(-30.0..30.0), 0.0);
        for with_d in [true, false] {
            let rule = EfRule::new(z1, z2, 1.0, with_d).unwrap();
            for r in exactness_residuals(&rule, z1).into_iter().chain(exactness_residuals(&rule, z2)) {
                worst_exact = worst_exact.max(r);
            }
        }
    }
    // continuity across the switch to the polynomial limit
    let mut worst_switch = 0.0f64;
    for _ in 0..20 {
        let a: f64 = rng.gen_range(-2.0..2.0);
        let other = Cplx::new(rng.gen_range(-0.2..0.2), 0.0);
        let below = EfRule::new(Cplx::new((DEGENERATE_Z * (1.0 - 1e-9)).powi(2), 0.0), other, 1.0, true).unwrap();
        let above = EfRule::new(Cplx::new((DEGENERATE_Z * (1.0 + 1e-9)).powi(2), 0.0), other, 1.0, true).unwrap();
        let f = |s: Cplx<f64>| (s * a).exp() * (s * 0.3).cos();
        let df = |s: Cplx<f64>| (s * a).exp() * ((s * 0.3).cos() * a - (s * 0.3).sin() * 0.3);
        let (qb, qa) = (apply_complex(&below, f, df), apply_complex(&above, f, df));
        worst_switch = worst_switch.max((qb - qa).norm() / qa.norm());
    }
    // composite rule vs a dense oracle on every coupling integral of the first sector
    let sector = &p2.truncated(20)[0];
    let basis = sector.basis();
    let n = basis.len();
    let form = p2.problem.potential.separable_form().expect("problem 2 is separable");
    let mut worst_dense = 0.0f64;
    for (term, w) in form.terms.iter().zip(sector.couplings()) {
        let mut dense = vec![0.0; n * (n + 1) / 2];
        let mut ys = vec![0.0; n];
        dense_simpson(
            p2.problem.x_min,
            p2.problem.x_max,
            1_000_000,
            |x, out| {
                let g = (term.shape)(x);
                for (k, y) in ys.iter_mut().enumerate() {
                    *y = basis.evaluate(k, x).0;
                }
                let mut idx = 0;
                for i in 0..n {
                    for j in 0..=i {
                        out[idx] = ys[i] * ys[j] * g;
                        idx += 1;
                    }
                }
            },
            &mut dense,
        );
        let mut idx = 0;
        for i in 0..n {
            for j in 0..=i {
                worst_dense = worst_dense.max((w[(i, j)] - dense[idx]).abs());
                idx += 1;
            }
        }
    }
    outcome(
        worst_exact <= 1e-11 && worst_switch <= 1e-10 && worst_dense <= 1e-8,
        format!(
            "EF exactness {worst_exact:.1e} (<= 1e-11), switch continuity {worst_switch:.1e} (<= 1e-10), problem-2 sector-1 couplings vs 10^6-point oracle {worst_dense:.1e} (<= 1e-8)"
        ),
    )
}

fn criterion9(p2: &Problem2) -> Outcome {
    let model = Arc::new(
        PotentialModel::stationary(1.0, Arc::new(|x: f64| 0.5 * x * x + 0.1 * x.powi(4)), Arc::new(|x: f64| x + 0.4 * x.powi(3))).unwrap(),
    );
    let mesh = SpatialMesh::new(-8.0, 8.0, 100).unwrap();
    let cfg = BasisConfig::new(15);
    let first = build_sector(1, 0.0, 1.0, &model, &mesh, &cfg, None).unwrap();
    let second = build_sector(2, 1.0, 2.0, &model, &mesh, &cfg, Some(&first)).unwrap();
    let defect = second.overlap_defect().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let sectors = p2.truncated(20);
    for _ in 0..100 {
        let k = rng.gen_range(1..sectors.len());
        let c: Vec<Cplx<f64>> = (0..20).map(|_| Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let s = sectors[k].overlap().unwrap();
        let ratio = norm2_complex(&s.apply_complex(&c)) / norm2_complex(&c);
        worst = worst.max(ratio);
    }
    outcome(
        defect <= 1e-9 && worst <= 1.0 + 1e-6,
        format!("time-independent sectors ||S - I||_max = {defect:.1e} (<= 1e-9); problem 2, 100 random C: max ||SC||/||C|| = {worst:.12} (<= 1 + 1e-6)"),
    )
}

fn criterion10(p2: &Problem2) -> Outcome {
    let reference = p2.solve(P2_NMAX, 0.02, TimeOrder::Four);
    let exact = reference.psi_nodes();
    let ns = [5usize, 10, 15, 20];
    let errs: Vec<f64> = ns.iter().map(|&n| compare(&p2.solve(n, 0.02, TimeOrder::Four), &exact).1).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let decades = (errs[0] / errs[3]).log10();
    let shown: Vec<String> = ns.iter().zip(&errs).map(|(n, e)| format!("N={n}:{e:.1e}")).collect();
    outcome(
        decreasing && decades >= 4.0,
        format!(
            "problem 2 K=20 dx=0.2 dt=0.02 vs N={P2_NMAX} reference: {}; strictly decreasing, {decades:.1} decades (>= 4)",
            shown.join(", ")
        ),
    )
}

fn criterion11() -> Outcome {
    let c = RunConfig { problem: "problem1:2".into(), nx: 1000, t_final: 2.0, k: 1, dt: 0.02, ..RunConfig::default() };
    let r = compare_cn(&c).unwrap();
    let ratio = r.report.err_a / 3e-4;
    outcome(
        (0.2..=5.0).contains(&ratio) && r.norm_drift <= 1e-12,
        format!(
            "CN problem 1 n=2 dx=dt=0.02 T=2: err_A = {:.2e} (within x5 of 3e-4), norm drift {:.1e} (<= 1e-12)",
            r.report.err_a, r.norm_drift
        ),
    )
}

fn criterion12() -> Outcome {
    let start = Instant::now();
    let mut c = RunConfig {
        problem: "problem3".into(),
        nx: 64,
        t_final: 10.0,
        k: 20,
        n: 15,
        dt: 0.01,
        natural_units: true,
        ..RunConfig::default()
    };
    c.reference_settings.dt_div = 4;
    c.reference_settings.extra_n = 10;
    c.reference_settings.dx_div = 1;
    let r = run(&c).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (en, ea) = (r.report.err_n, r.report.err_a);
    outcome(
        en.abs() <= 1e-6 && ea <= 1e-5 && secs <= 120.0,
        format!("problem 3, T=10 tau, 64 steps, N=15 K=20 dt=tau/100 vs dt/4, N=25 reference: |err_N| = {:.1e} (<= 1e-6), err_A = {ea:.1e} (<= 1e-5), {secs:.1} s (<= 120 s)", en.abs()),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; listing must not run anything
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |k: usize, o: Outcome| {
        println!("criterion {k:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, o));
    };
    report(1, criterion1());
    report(2, criterion2());
    report(3, criterion3());
    report(4, criterion4());
    report(7, criterion7());
    report(11, criterion11());
    report(12, criterion12());
    let p2 = Problem2::build();
    report(5, criterion5(&p2));
    report(6, criterion6(&p2));
    report(8, criterion8(&p2));
    report(9, criterion9(&p2));
    report(10, criterion10(&p2));
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    println!("acceptance: {} of {} criteria passed in {:.1} s", results.len() - failed.len(), results.len(), start.elapsed().as_secs_f64());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
