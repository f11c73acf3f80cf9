use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twophase::bent_solver::{self, build_map, transformed_jumps, BendProfile, BendSpec, BentOptions};
use twophase::compact_interface::{
    distance_modulo_gauge, global_reference, random_annulus_field, CompactConfig, CompactSolver, Inversion,
};
use twophase::dump::{self, Report};
use twophase::fd_oracle::{CircleOracle, FlatOracle, OracleData, OuterCondition, PolarData, PolarField, PolarGrid};
use twophase::fields::{
    random_band_limited, Differentiator, Side, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField,
};
use twophase::halfspace_solver::{jump_residuals, HalfspaceSolver};
use twophase::helmholtz::{decompose, WeakPairing};
use twophase::spectral_core::{
    default_residue_sample, residue_check, verify_symbol_bounds, DensityPair, ResolventParameter, SymbolKind,
};

use crate::config::Settings;

/// Exit status with a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub err: anyhow::Error,
}

pub type Outcome = std::result::Result<Report, Failure>;

pub trait Classify<V> {
    fn config(self) -> std::result::Result<V, Failure>;
}

impl<V, E: Into<anyhow::Error>> Classify<V> for std::result::Result<V, E> {
    fn config(self) -> std::result::Result<V, Failure> {
        self.map_err(|e| Failure { code: 1, err: e.into() })
    }
}

/// Library errors split into bad input (1), broken invariants (2) and solver trouble (3).
pub fn lib_code(e: &twophase::Error) -> i32 {
    use twophase::Error::*;
    match e {
        MeanZeroViolated { .. } | SupportViolated(_) => 2,
        SolverFailed(_)
        | SingularSystem
        | InversionStagnated(_)
        | NotContracting(_)
        | IterationLimit(_)
        | QuadratureNotConverged { .. }
        | InverseNotConverged(_) => 3,
        _ => 1,
    }
}

pub trait Lib<V> {
    fn lib(self) -> std::result::Result<V, Failure>;
}

impl<V> Lib<V> for twophase::Result<V> {
    fn lib(self) -> std::result::Result<V, Failure> {
        self.map_err(|e| Failure { code: lib_code(&e), err: e.into() })
    }
}

/// Collects invariant outcomes; any failure turns the run into exit 2.
struct Checks {
    failed: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self { failed: Vec::new() }
    }

    fn below(&mut self, report: &mut Report, name: &str, value: f64, tol: f64) {
        let ok = value.is_finite() && value <= tol;
        report.float(name, value).flag(&format!("{name}_pass"), ok);
        if !ok {
            self.failed.push(format!("{name}={value:e} exceeds {tol:e}"));
        }
    }

    fn above(&mut self, report: &mut Report, name: &str, value: f64, tol: f64) {
        let ok = value.is_finite() && value > tol;
        report.float(name, value).flag(&format!("{name}_pass"), ok);
        if !ok {
            self.failed.push(format!("{name}={value:e} not above {tol:e}"));
        }
    }

    fn finish(self, report: Report, out: &Path) -> Outcome {
        write_report(&report, out)?;
        if self.failed.is_empty() {
            Ok(report)
        } else {
            Err(Failure { code: 2, err: anyhow!("invariant failed: {}", self.failed.join("; ")) })
        }
    }
}

fn write_report(report: &Report, out: &Path) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).config()?;
    std::fs::write(out.join("report.txt"), report.render()).context("writing report").config()
}

fn create(out: &Path, name: &str) -> std::result::Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).config()?;
    let p = out.join(name);
    File::create(&p).map(BufWriter::new).with_context(|| format!("creating {}", p.display())).config()
}

fn write_csv(out: &Path, name: &str, header: &str, rows: &[Vec<f64>]) -> std::result::Result<(), Failure> {
    let mut w = create(out, name)?;
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(&r.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    w.write_all(text.as_bytes()).context("writing csv").config()
}

fn c(x: f64) -> Complex<f64> {
    Complex::new(x, 0.0)
}

fn density(rho: &DensityPair<f64>, s: Side) -> f64 {
    if s == Side::Plus {
        rho.plus
    } else {
        rho.minus
    }
}

fn opposite(rho: &DensityPair<f64>, s: Side) -> f64 {
    if s == Side::Plus {
        rho.minus
    } else {
        rho.plus
    }
}

/// `v± = ρ∓ cos x₁ e^{∓x₂}` with `f = ∇v`.
fn flat_pair(rho: &DensityPair<f64>, g: TwoPhaseGrid<f64>) -> (TwoPhaseScalarField<f64>, TwoPhaseVectorField<f64>) {
    let v = TwoPhaseScalarField::from_fn(g, |s, x| c(opposite(rho, s) * x[0].cos() * (-s.sign::<f64>() * x[1]).exp()));
    let f = TwoPhaseVectorField::from_fn(g, |s, x| {
        let a = opposite(rho, s);
        let e = (-s.sign::<f64>() * x[1]).exp();
        let mut comps = vec![c(-a * x[0].sin() * e)];
        comps.resize(g.dim - 1, c(0.0));
        comps.push(c(-s.sign::<f64>() * a * x[0].cos() * e));
        comps
    });
    (v, f)
}

fn planar_grid(s: &Settings, default: (usize, usize), half: f64) -> std::result::Result<TwoPhaseGrid<f64>, Failure> {
    let (n, m) = s.grid(default).config()?;
    let dim = s.int("dim", 2).config()?;
    let l = s.float("half_extent", half).config()?;
    TwoPhaseGrid::new(dim, n, std::f64::consts::TAU, l, m).lib()
}

fn read_input(s: &Settings) -> std::result::Result<Option<TwoPhaseVectorField<f64>>, Failure> {
    match s.raw("input") {
        None => Ok(None),
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening input dump {p}")).config()?;
            let (f, _) = dump::read_vector::<_, f64>(&mut BufReader::new(file)).lib()?;
            Ok(Some(f))
        }
    }
}

fn slice_rows(v: &TwoPhaseScalarField<f64>) -> Vec<Vec<f64>> {
    let g = v.grid;
    let mut rows = Vec::new();
    for j in (1..g.normal_points).rev() {
        let x = g.point(Side::Minus, 0, j);
        let z = v.side(Side::Minus)[g.index(0, j)];
        rows.push(vec![x[g.dim - 1], z.re, z.im]);
    }
    for j in 0..g.normal_points {
        let x = g.point(Side::Plus, 0, j);
        let z = v.side(Side::Plus)[g.index(0, j)];
        rows.push(vec![x[g.dim - 1], z.re, z.im]);
    }
    rows
}

fn data_field(
    s: &Settings,
    g: TwoPhaseGrid<f64>,
    rho: &DensityPair<f64>,
) -> std::result::Result<(TwoPhaseVectorField<f64>, Option<TwoPhaseScalarField<f64>>), Failure> {
    if let Some(f) = read_input(s)? {
        f.grid.check_same(&g).lib()?;
        return Ok((f, None));
    }
    match s.text("data", "manufactured").as_str() {
        "zero" => Ok((TwoPhaseVectorField::zeros(g), None)),
        "manufactured" => {
            let (v, f) = flat_pair(rho, g);
            Ok((f, Some(v)))
        }
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed().config()?);
            Ok((random_band_limited(g, 3, 1.5, &mut rng), None))
        }
        other => Err(Failure { code: 1, err: anyhow!("unknown data kind {other:?}") }),
    }
}

/// Flat Laplace (`lam = None`) or resolvent transmission solve.
fn flat_like(s: &Settings, resolvent: bool) -> Outcome {
    let rho = s.rho().config()?;
    let g = planar_grid(s, (64, 257), 20.0)?;
    let lam = match (resolvent, s.lambda().config()?) {
        (false, None) => None,
        (false, Some(l)) if l.norm() == 0.0 => None,
        (false, Some(_)) => {
            return Err(Failure { code: 1, err: anyhow!("solve-flat is the Laplace case; use solve-resolvent") })
        }
        (true, l) => Some(ResolventParameter::with_default_sector(l.unwrap_or(c(1.0)))),
    };
    let (f, exact) = data_field(s, g, &rho)?;
    let source = match (&lam, &exact) {
        (Some(l), Some(v)) => Some(v.map(|side, x| x * density(&rho, side) * l.lambda)),
        _ => None,
    };
    let solver = HalfspaceSolver::new(g);
    let sol = solver.solve_flat(&f, source.as_ref(), None, lam.as_ref(), &rho).lib()?;
    let mut w = create(&s.out, "v.dump")?;
    dump::write_scalar(&mut w, &sol.v).lib()?;
    write_csv(&s.out, "slice.csv", "x_normal,re,im", &slice_rows(&sol.v))?;

    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", if resolvent { "solve-resolvent" } else { "solve-flat" });
    report.int("tangential", g.tangential_size).int("normal", g.normal_points);
    if let Some(l) = &lam {
        report.float("lambda_re", l.lambda.re).float("lambda_im", l.lambda.im);
    }
    report.float("v_l2", sol.v.l2()).float("v_max_abs", sol.v.max_abs());
    let (rj, fj) = jump_residuals(&sol, &rho);
    // the flux jump of f is the expected normal-derivative jump
    let fn_jump = twophase::fields::jump(f.normal());
    let rmax = rj.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let fmax = fj.iter().zip(&fn_jump).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
    let scale = sol.v.max_abs().max(1.0);
    let jump_tol = s.float("jump_tol", 1e-9).config()?;
    checks.below(&mut report, "rho_jump_max", rmax / scale, jump_tol);
    checks.below(&mut report, "flux_jump_max", fmax / scale, jump_tol);
    if let Some(v) = &exact {
        let err = sol.v.sub(v).l2() / v.l2();
        checks.below(&mut report, "recovery_rel_err", err, s.float("recovery_tol", 1e-6).config()?);
    }
    if let Some(l) = &lam {
        let d = Differentiator::new(g);
        let n = d.norms(&sol.v, Some(l.lambda));
        let data = d.divergence(&f).l2()
            + l.lambda.norm().sqrt() * f.normal().l2()
            + d.gradient(f.normal()).l2()
            + source.as_ref().map_or(0.0, |x| x.l2());
        report.float("estimate_ratio", if data > 0.0 { n.resolvent_triplet.unwrap() / data } else { 0.0 });
    }
    checks.finish(report, &s.out)
}

pub fn solve_flat(s: &Settings) -> Outcome {
    flat_like(s, false)
}

pub fn solve_resolvent(s: &Settings) -> Outcome {
    flat_like(s, true)
}

pub fn solve_bent(s: &Settings) -> Outcome {
    let rho = s.rho().config()?;
    let g = planar_grid(s, (64, 257), 10.0)?;
    let name = s.text("profile", "shear");
    let profile = BendProfile::parse(&name).ok_or_else(|| anyhow!("unknown bend profile {name:?}")).config()?;
    let amplitude = s.float("amplitude", 0.1).config()?;
    let phi = build_map(g, BendSpec { profile, amplitude, rotation: None }).lib()?;
    let lam = s.lambda().config()?.filter(|l| l.norm() > 0.0).map(ResolventParameter::with_default_sector);
    let l = lam.as_ref().map_or(c(0.0), |l| l.lambda);
    let shape = |y: &[f64]| y[0].cos() * (-y[1] * y[1] / 2.0).exp();
    let f = |side: Side, y: &[f64]| {
        let e = (-y[1] * y[1] / 2.0).exp();
        let a = opposite(&rho, side);
        vec![c(-a * y[0].sin() * e), c(-a * y[1] * y[0].cos() * e)]
    };
    let src = |side: Side, y: &[f64]| l * density(&rho, side) * opposite(&rho, side) * shape(y);
    let zero = |_: Side, _: &[f64]| c(0.0);
    let options = BentOptions {
        tol: s.float("tol", 1e-10).config()?,
        max_iter: s.int("max_iter", 100).config()?,
        ..BentOptions::default()
    };
    let solver = HalfspaceSolver::new(g);
    let sol = bent_solver::solve_bent(&solver, f, src, zero, lam.as_ref(), &rho, &phi, &options).lib()?;
    let exact = TwoPhaseScalarField::from_fn(g, |side, x| c(opposite(&rho, side) * shape(&phi.forward(x))));

    let mut w = create(&s.out, "v.dump")?;
    dump::write_scalar(&mut w, &sol.flat.v).lib()?;
    let ratios = sol.ratios();
    let rows: Vec<Vec<f64>> = sol
        .increments
        .iter()
        .enumerate()
        .map(|(i, inc)| vec![(i + 1) as f64, *inc, if i == 0 { f64::NAN } else { ratios[i - 1] }])
        .collect();
    write_csv(&s.out, "convergence.csv", "iteration,increment,ratio", &rows)?;

    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", "solve-bent").text("profile", &name).float("amplitude", amplitude);
    report.float("m1", phi.m1).float("m2", phi.m2).int("iterations", sol.iterations);
    for (i, inc) in sol.increments.iter().enumerate() {
        report.float(&format!("increment_{}", i + 1), *inc);
    }
    let worst = ratios.iter().fold(0.0f64, |m, r| m.max(*r));
    checks.below(&mut report, "max_ratio", worst, s.float("ratio_tol", 0.5).config()?);
    let (rj, fj) = transformed_jumps(&sol, &phi, &rho);
    let jt = s.float("jump_tol", 1e-8).config()?;
    checks.below(&mut report, "rho_jump_max", rj, jt);
    checks.below(&mut report, "flux_jump_max", fj, jt);
    let err = sol.flat.v.sub(&exact).l2() / exact.l2();
    checks.below(&mut report, "recovery_rel_err", err, s.float("recovery_tol", 1e-6).config()?);
    checks.finish(report, &s.out)
}

fn compact_target(
    rho: DensityPair<f64>,
) -> (impl Fn(Side, f64, f64) -> f64, impl Fn(Side, f64, f64) -> [f64; 2] + Sync) {
    let cut = |r: f64| {
        let t = (r - 2.0).clamp(0.0, 1.0);
        (1.0 - twophase::compact_interface::smoothstep(t, 2), -30.0 * t * t * (1.0 - t) * (1.0 - t))
    };
    let value = move |s: Side, r: f64, th: f64| {
        let (x, y) = (r * th.cos(), r * th.sin());
        opposite(&rho, s) * (1.0 + x + 0.5 * x * y) * (-(r * r) / 2.0).exp() * cut(r).0
    };
    let flux = move |s: Side, r: f64, th: f64| {
        let (ct, st) = (th.cos(), th.sin());
        let (x, y) = (r * ct, r * st);
        let e = (-(r * r) / 2.0).exp();
        let p = 1.0 + x + 0.5 * x * y;
        let gx = (1.0 + 0.5 * y - x * p) * e;
        let gy = (0.5 * x - y * p) * e;
        let (chi, dchi) = cut(r);
        let a = opposite(&rho, s);
        [a * ((gx * ct + gy * st) * chi + p * e * dchi), a * (-gx * st + gy * ct) * chi]
    };
    (value, flux)
}

fn random_polar_flux(seed: u64) -> impl Fn(Side, f64, f64) -> [f64; 2] + Sync {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    move |s: Side, r: f64, th: f64| {
        let (ct, st) = (th.cos(), th.sin());
        let (x, y) = (r * ct, r * st);
        let o = if s == Side::Plus { 0 } else { 6 };
        let e = (-(r * r) / 1.5).exp();
        let vx = (k[o] + k[o + 1] * x + k[o + 2] * y) * e;
        let vy = (k[o + 3] + k[o + 4] * x + k[o + 5] * y) * e;
        [vx * ct + vy * st, -vx * st + vy * ct]
    }
}

fn compact_config(s: &Settings) -> std::result::Result<CompactConfig<f64>, Failure> {
    let d = CompactConfig::<f64>::default();
    let (angles, whole_outer) = s.grid((d.angles, d.whole_outer)).config()?;
    let base_radius = s.float("radius", d.base_radius).config()?;
    let cells = s.int("cells", d.cells_per_radius).config()?;
    let h = base_radius / cells as f64;
    let sigma = s.float("interface_radius", 0.5 * base_radius).config()?;
    let interface = (sigma / h).round();
    if !(interface >= 1.0) || ((interface * h) - sigma).abs() > 1e-9 * base_radius {
        return Err(Failure { code: 1, err: anyhow!("interface radius {sigma} is not on a grid ring (spacing {h})") });
    }
    Ok(CompactConfig {
        base_radius,
        interface: interface as usize,
        cells_per_radius: cells,
        angles,
        whole_outer,
        smoothness: s.int("smoothness", d.smoothness).config()?,
        inversion: Inversion::parse(&s.text("inversion", "dense")).lib()?,
        krylov_tol: s.float("krylov_tol", d.krylov_tol).config()?,
        mean_tol: s.float("mean_tol", d.mean_tol).config()?,
    })
}

fn polar_slice(v: &PolarField<f64>) -> Vec<Vec<f64>> {
    let g = v.grid;
    let mut rows = Vec::new();
    for side in Side::BOTH {
        for i in g.rings(side) {
            rows.push(vec![g.radius(i), v.get(side, i, 0)]);
        }
    }
    rows
}

pub fn solve_compact(s: &Settings) -> Outcome {
    let rho = s.rho().config()?;
    let cfg = compact_config(s)?;
    let solver = CompactSolver::new(cfg, rho).lib()?;
    let data = s.text("data", "manufactured");
    let (value, target) = compact_target(rho);
    let random = random_polar_flux(s.seed().config()?);
    let f: &(dyn Fn(Side, f64, f64) -> [f64; 2] + Sync) = match data.as_str() {
        "manufactured" => &target,
        "random" => &random,
        other => return Err(Failure { code: 1, err: anyhow!("unknown data kind {other:?}") }),
    };
    let sol = solver.solve(f).lib()?;
    let mut w = create(&s.out, "v.dump")?;
    dump::write_polar(&mut w, &sol.v).lib()?;
    write_csv(&s.out, "slice.csv", "radius,value", &polar_slice(&sol.v))?;

    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", "solve-compact").text("data", &data);
    report.int("angles", cfg.angles).int("rings", cfg.whole_outer).int("cells_per_radius", cfg.cells_per_radius);
    report.text("inversion", &s.text("inversion", "dense")).int("krylov_iterations", sol.iterations);
    let fnorm = solver.flux_norm(f);
    let gnorm = sol.density.l2();
    let g_of = solver.operator_g(&sol.density).lib()?;
    let (a, b) = solver.annulus_rings();
    report.int("annulus_inner_ring", a).int("annulus_outer_ring", b);
    let mt = s.float("mean_tol", 1e-8).config()?;
    checks.below(&mut report, "remainder_mean", sol.remainder.raw_mean.abs() / fnorm.max(f64::MIN_POSITIVE), mt);
    checks.below(&mut report, "g_mean", g_of.raw_mean.abs() / gnorm.max(f64::MIN_POSITIVE), mt);
    report.int("support_violations", 0);
    let res = solver.residuals(f, &sol).lib()?;
    let rt = s.float("residual_tol", 1e-3).config()?;
    checks.below(&mut report, "pde_residual", res.pde, rt);
    checks.below(&mut report, "rho_jump_residual", res.rho_jump, rt);
    checks.below(&mut report, "flux_jump_residual", res.flux_jump, rt);
    report.float("inversion_residual", sol.inversion_residual);
    if cfg.inversion == Inversion::Dense {
        checks.above(
            &mut report,
            "sigma_min",
            solver.inversion_sigma_min().lib()?,
            s.float("sigma_tol", 1e-3).config()?,
        );
    }
    if s.flag("check_oracle", true).config()? {
        let global = global_reference(&cfg, rho, s.int("oracle_radius_factor", 6).config()?, f).lib()?;
        let mut restricted = PolarField::zeros(*solver.grid());
        restricted.plus.copy_from_slice(&global.plus);
        let n = restricted.minus.len();
        restricted.minus.copy_from_slice(&global.minus[..n]);
        let d = distance_modulo_gauge(&sol.v, &restricted, &rho, 2 * cfg.cells_per_radius);
        checks.below(&mut report, "oracle_rel_err", d, s.float("oracle_tol", 5e-3).config()?);
    }
    if data == "manufactured" {
        let exact = PolarField::from_fn(*solver.grid(), value);
        let d = distance_modulo_gauge(&sol.v, &exact, &rho, solver.grid().outer);
        checks.below(&mut report, "recovery_rel_err", d, s.float("recovery_tol", 1e-3).config()?);
    }
    checks.finish(report, &s.out)
}

pub fn helmholtz(s: &Settings) -> Outcome {
    let rho = s.rho().config()?;
    let f = match read_input(s)? {
        Some(f) => f,
        None => {
            let g = planar_grid(s, (32, 513), 24.0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed().config()?);
            random_band_limited(g, 4, 2.0, &mut rng)
        }
    };
    let g = f.grid;
    let solver = HalfspaceSolver::new(g);
    let d = decompose(&solver, &f, &rho).lib()?;
    let again = decompose(&solver, &d.solenoidal, &rho).lib()?;
    let pairing = WeakPairing::new(g);
    let orth = pairing.pair(&d.solenoidal).lib()?.max_normalized();
    let mut w = create(&s.out, "p.dump")?;
    dump::write_vector(&mut w, &d.solenoidal).lib()?;
    let mut w = create(&s.out, "q.dump")?;
    dump::write_vector(&mut w, &d.gradient).lib()?;

    let fnorm = f.l2();
    let rel = |x: f64| if fnorm > 0.0 { x / fnorm } else { x };
    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", "helmholtz");
    report.float("f_norm", fnorm).float("p_norm", d.solenoidal.l2()).float("q_norm", d.gradient.l2());
    let recon = d.solenoidal.add(&d.gradient).sub(&f).max_abs();
    checks.below(&mut report, "reconstruction_err", rel(recon), s.float("reconstruction_tol", 1e-12).config()?);
    let tol = s.float("projection_tol", 1e-8).config()?;
    checks.below(&mut report, "idempotence_err", rel(again.solenoidal.sub(&d.solenoidal).l2()), tol);
    checks.below(&mut report, "orthogonality_err", rel(orth), tol);
    if s.flag("expect_gradient", false).config()? {
        checks.below(&mut report, "p_rel", rel(d.solenoidal.l2()), s.float("gradient_tol", 1e-10).config()?);
    }
    checks.finish(report, &s.out)
}

fn flat_oracle_error(rho: DensityPair<f64>, n: usize, m: usize) -> twophase::Result<f64> {
    let g = TwoPhaseGrid::<f64>::planar(n, 4.0, m)?;
    let (v, f) = flat_pair(&rho, g);
    let o = FlatOracle::new(g, rho, None)?;
    let u = o.solve(&OracleData { flux: Some(&f), outer: Some(&v), ..Default::default() })?;
    Ok(u.sub(&v).l2() / v.l2())
}

fn circle_oracle_error(rho: DensityPair<f64>, level: usize) -> twophase::Result<f64> {
    let g = PolarGrid::new(1.0 / (16 << level) as f64, 8 << level, 16 << level, 32 << level)?;
    let shape = |x: f64, y: f64| (1.0 + x + 0.5 * x * y) * (-(x * x + y * y) / 2.0).exp();
    let exact = PolarField::from_fn(g, |s, r, th| opposite(&rho, s) * shape(r * th.cos(), r * th.sin()));
    let flux = move |s: Side, r: f64, th: f64| {
        let (ct, st) = (th.cos(), th.sin());
        let (x, y) = (r * ct, r * st);
        let e = (-(x * x + y * y) / 2.0).exp();
        let p = 1.0 + x + 0.5 * x * y;
        let d = [(1.0 + 0.5 * y - x * p) * e, (0.5 * x - y * p) * e];
        let a = opposite(&rho, s);
        [a * (d[0] * ct + d[1] * st), a * (-d[0] * st + d[1] * ct)]
    };
    let outer = exact.ring(Side::Minus, g.outer).to_vec();
    let o = CircleOracle::new(g, rho, 0.0, OuterCondition::Dirichlet)?;
    let u = o.solve(&PolarData { flux: Some(&flux), outer: Some(&outer), ..Default::default() })?;
    Ok(u.sub(&exact).l2() / exact.l2())
}

pub fn oracle(s: &Settings) -> Outcome {
    let rho = s.rho().config()?;
    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", "oracle");
    if let Some(f) = read_input(s)? {
        let o = FlatOracle::new(f.grid, rho, s.lambda().config()?).lib()?;
        let v = o.solve(&OracleData { flux: Some(&f), ..Default::default() }).lib()?;
        let mut w = create(&s.out, "v.dump")?;
        dump::write_scalar(&mut w, &v).lib()?;
        report.float("v_l2", v.l2());
    }
    let (lo, hi) = (s.float("order_min", 3.2).config()?, s.float("order_max", 4.8).config()?);
    let flat: Vec<f64> = [(16, 33), (32, 65), (64, 129)]
        .iter()
        .map(|&(n, m)| flat_oracle_error(rho, n, m))
        .collect::<twophase::Result<_>>()
        .lib()?;
    let circle: Vec<f64> = (0..3).map(|l| circle_oracle_error(rho, l)).collect::<twophase::Result<_>>().lib()?;
    let mut rows = Vec::new();
    for (name, errs) in [("flat", &flat), ("circle", &circle)] {
        for (i, e) in errs.iter().enumerate() {
            report.float(&format!("{name}_error_{i}"), *e);
            rows.push(vec![if name == "flat" { 0.0 } else { 1.0 }, i as f64, *e]);
        }
        for (i, w) in errs.windows(2).enumerate() {
            let ratio = w[0] / w[1];
            let ok = (lo..=hi).contains(&ratio);
            report.float(&format!("{name}_ratio_{i}"), ratio).flag(&format!("{name}_ratio_{i}_pass"), ok);
            if !ok {
                checks.failed.push(format!("{name} ratio {ratio} outside [{lo}, {hi}]"));
            }
        }
    }
    write_csv(&s.out, "convergence.csv", "geometry,level,rel_error", &rows)?;
    checks.finish(report, &s.out)
}

pub fn verify_symbols(s: &Settings) -> Outcome {
    let rho = s.rho().config()?;
    let lam = s.lambda().config()?.unwrap_or(c(1.0));
    let count = s.int("probes", 41).config()?;
    let probes: Vec<Vec<f64>> =
        (0..count).map(|i| vec![10f64.powf(-2.0 + 4.0 * i as f64 / (count.max(2) - 1) as f64)]).collect();
    let order = s.int("max_order", 2).config()?;
    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", "verify-symbols").int("probes", count);
    let gap_tol = s.float("richardson_tol", 1e-4).config()?;
    let mut rows = Vec::new();
    for (tag, power) in [("s_plus1", 1.0), ("s_minus1", -1.0)] {
        let r = verify_symbol_bounds(&probes, lam, rho, power, order).lib()?;
        for e in &r.entries {
            let kind = match e.kind {
                SymbolKind::APlus => "a_plus",
                SymbolKind::AMinus => "a_minus",
                SymbolKind::Denominator => "denominator",
                SymbolKind::XiNorm => "xi_norm",
            };
            let key = format!("{tag}_{kind}_order{}", e.order);
            report.float(&format!("{key}_max_ratio"), e.max_ratio);
            // |ξ'|^s is a reference row: singular for s < 0 and affine in one tangential variable
            if e.order > 0 && e.kind != SymbolKind::XiNorm {
                checks.below(&mut report, &format!("{key}_richardson_gap"), e.richardson_gap, gap_tol);
            }
            rows.push(vec![power, e.order as f64, e.max_ratio, e.richardson_gap]);
        }
        let a0 = r.get(SymbolKind::APlus, 0).map_or(f64::NAN, |e| e.max_ratio);
        if power > 0.0 {
            let a1 = r.get(SymbolKind::APlus, 1).map_or(f64::NAN, |e| e.max_ratio);
            checks.below(&mut report, "s_plus1_a_plus_order1_bound", a1, s.float("order1_bound", 2.0).config()?);
            if rho.plus == 1.0 && rho.minus == 1.0 && lam == c(1.0) {
                checks.below(&mut report, "s_plus1_a_plus_order0_bound", a0, 1.0);
            }
        } else {
            checks.below(&mut report, "s_minus1_a_plus_order0_bound", a0, f64::MAX);
        }
    }
    write_csv(&s.out, "bounds.csv", "s,order,max_ratio,richardson_gap", &rows)?;
    checks.finish(report, &s.out)
}

pub fn verify_residues(s: &Settings) -> Outcome {
    let (offsets, eps, lams) = default_residue_sample();
    let xi = s.float("xi_norm", 0.5).config()?;
    let rho = s.float("residue_rho", 1.0).config()?;
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    let mut rows = Vec::new();
    for a in &offsets {
        for e in &eps {
            for l in &lams {
                let r = residue_check(xi, *a, *e, *l, rho).lib()?;
                first = first.max(r.first.abs_error);
                let sec = r.second.map_or(0.0, |v| v.abs_error);
                second = second.max(sec);
                rows.push(vec![*a, *e, l.re, l.im, r.first.abs_error, sec]);
            }
        }
    }
    write_csv(&s.out, "residues.csv", "a,eps,lambda_re,lambda_im,residue1_abs_err,residue2_abs_err", &rows)?;
    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", "verify-residues").int("samples", rows.len());
    let tol = s.float("residue_tol", 1e-8).config()?;
    checks.below(&mut report, "residue1_max_abs_err", first, tol);
    checks.below(&mut report, "residue2_max_abs_err", second, tol);
    checks.finish(report, &s.out)
}

/// Mean and support invariants of the two cutoff remainders over a random suite.
pub fn invariants(s: &Settings) -> Outcome {
    let rho = s.rho().config()?;
    let cfg = compact_config(s)?;
    let solver = CompactSolver::new(cfg, rho).lib()?;
    let samples = s.int("samples", 20).config()?;
    let seed = s.seed().config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut r_worst, mut g_worst) = (0.0f64, 0.0f64);
    let mut rows = Vec::new();
    for k in 0..samples {
        let f = random_polar_flux(seed.wrapping_mul(1000).wrapping_add(k as u64));
        let parts = solver.apply_s(&f).lib()?;
        let r = solver.remainder(&f, &parts).lib()?;
        let rm = r.raw_mean.abs() / solver.flux_norm(&f);
        let g = random_annulus_field(&solver, 4, &mut rng);
        let out = solver.operator_g(&g).lib()?;
        let gm = out.raw_mean.abs() / g.l2();
        r_worst = r_worst.max(rm);
        g_worst = g_worst.max(gm);
        rows.push(vec![k as f64, rm, gm]);
    }
    write_csv(&s.out, "invariants.csv", "sample,remainder_mean,g_mean", &rows)?;
    let mut report = Report::new();
    let mut checks = Checks::new();
    report.text("command", "invariants").int("samples", samples);
    let tol = s.float("mean_tol", 1e-8).config()?;
    checks.below(&mut report, "remainder_mean_max", r_worst, tol);
    checks.below(&mut report, "g_mean_max", g_worst, tol);
    // support is checked exactly inside the library; reaching here means no violation
    report.int("support_violations", 0);
    checks.finish(report, &s.out)
}
