use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twophase::compact_interface::{
    build_cutoff_ladder, distance_modulo_gauge, global_reference, random_annulus_field, smoothstep,
    AnnulusMeanZeroField, CompactConfig, CompactSolver, Cutoff, Inversion,
};
use twophase::fd_oracle::PolarField;
use twophase::fields::Side;
use twophase::spectral_core::DensityPair;

fn rho() -> DensityPair<f64> {
    DensityPair::new(1.0, 3.0).unwrap()
}

static SOLVER: LazyLock<CompactSolver<f64>> =
    LazyLock::new(|| CompactSolver::new(CompactConfig::default(), rho()).unwrap());

fn amp(s: Side) -> f64 {
    let r = rho();
    if s == Side::Plus {
        r.minus
    } else {
        r.plus
    }
}

fn to_polar(v: [f64; 2], th: f64) -> [f64; 2] {
    let (c, s) = (th.cos(), th.sin());
    [v[0] * c + v[1] * s, -v[0] * s + v[1] * c]
}

// v*± = ρ∓ s χ, s = (1 + x + xy/2) e^{−r²/2}, χ = 1 on B₂, 0 off B₃
fn cutoff(r: f64) -> (f64, f64) {
    let t = (r - 2.0).clamp(0.0, 1.0);
    (1.0 - smoothstep(t, 2), -30.0 * t * t * (1.0 - t) * (1.0 - t))
}

fn target(s: Side, r: f64, th: f64) -> f64 {
    let (x, y) = (r * th.cos(), r * th.sin());
    amp(s) * (1.0 + x + 0.5 * x * y) * (-(r * r) / 2.0).exp() * cutoff(r).0
}

fn target_flux(s: Side, r: f64, th: f64) -> [f64; 2] {
    let (x, y) = (r * th.cos(), r * th.sin());
    let e = (-(r * r) / 2.0).exp();
    let p = 1.0 + x + 0.5 * x * y;
    let grad = [(1.0 + 0.5 * y - x * p) * e, (0.5 * x - y * p) * e];
    let (chi, dchi) = cutoff(r);
    let pol = to_polar(grad, th);
    [amp(s) * (pol[0] * chi + p * e * dchi), amp(s) * pol[1] * chi]
}

fn random_flux(rng: &mut ChaCha8Rng) -> impl Fn(Side, f64, f64) -> [f64; 2] + Sync {
    let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    move |s: Side, r: f64, th: f64| {
        let (x, y) = (r * th.cos(), r * th.sin());
        let o = if s == Side::Plus { 0 } else { 6 };
        let e = (-(r * r) / 1.5).exp();
        let v = [(c[o] + c[o + 1] * x + c[o + 2] * y) * e, (c[o + 3] + c[o + 4] * x + c[o + 5] * y) * e];
        to_polar(v, th)
    }
}

#[test]
fn cutoffs_are_exact_at_the_ladder_radii() {
    let l = build_cutoff_ladder(1.0, 2).unwrap();
    assert_eq!(l.eval_point(Cutoff::Inner, [2.0, 0.0]), 1.0);
    assert_eq!(l.eval_point(Cutoff::Inner, [0.0, 3.0]), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        assert_eq!(l.eval_point(Cutoff::Inner, x) + l.eval_point(Cutoff::Outer, x), 1.0);
    }
    let s = &*SOLVER;
    assert_eq!(s.annulus_rings(), (40, 110));
    assert_eq!(s.node_cutoff(Cutoff::WholeWindow, 40), 0.0);
    assert_eq!(s.node_cutoff(Cutoff::WholeWindow, 50), 1.0);
    assert_eq!(s.node_cutoff(Cutoff::BoundedWindow, 100), 1.0);
    assert_eq!(s.node_cutoff(Cutoff::BoundedWindow, 110), 0.0);
}

#[test]
fn remainders_have_zero_mean_and_annulus_support() {
    let s = &*SOLVER;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (a, b) = s.annulus_rings();
    for _ in 0..20 {
        let f = random_flux(&mut rng);
        let parts = s.apply_s(&f).unwrap();
        let r = s.remainder(&f, &parts).unwrap();
        assert!(r.raw_mean.abs() < 1e-8 * s.flux_norm(&f), "R mean {}", r.raw_mean);
        assert!(r.field.l2() > 0.0);
        check_support(&r.field, a, b);

        let g = random_annulus_field(s, 4, &mut rng);
        let out = s.operator_g(&g).unwrap();
        assert!(out.raw_mean.abs() < 1e-8 * g.l2(), "G mean {}", out.raw_mean);
        check_support(&out.field, a, b);
    }
}

fn check_support(f: &PolarField<f64>, a: usize, b: usize) {
    for side in Side::BOTH {
        for i in f.grid.rings(side) {
            if i < a || i > b {
                assert!(f.ring(side, i).iter().all(|v| *v == 0.0), "ring {i}");
            }
        }
    }
}

#[test]
fn t_operator_is_gauged_on_the_outer_annulus() {
    let s = &*SOLVER;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_annulus_field(s, 3, &mut rng);
    let t = s.apply_t(&g).unwrap();
    let (a, b) = s.gauge_rings();
    let grid = s.grid();
    let (mut m, mut scale) = (0.0, 0.0);
    for i in a..=b {
        let mu = grid.measure(Side::Minus, i);
        m += mu * t.value.ring(Side::Minus, i).iter().sum::<f64>();
        scale += mu * t.value.ring(Side::Minus, i).iter().map(|v| v.abs()).sum::<f64>();
    }
    assert!(m.abs() < 1e-8 * scale.max(1e-300), "{m}");
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

#[test]
fn ring_source_matches_radial_potential() {
    let s = &*SOLVER;
    let grid = *s.grid();
    let (r1, r2) = (4.0 / 3.0, 11.0 / 3.0);
    let shape = |r: f64| bump((r - r1) / (r2 - r1));
    // center c with ∫ β(r)(r − c) r dr = 0, by fine trapezoid
    let n = 200_000;
    let dr = (r2 - r1) / n as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..=n {
        let r = r1 + k as f64 * dr;
        m1 += shape(r) * r;
        m2 += shape(r) * r * r;
    }
    let c = m2 / m1;
    let src = |r: f64| shape(r) * (r - c);
    // u(r) = −∫_r^{r2} (1/t) ∫_0^t g(s) s ds dt
    let fine = 400_000;
    let big = 4.5;
    let step = big / fine as f64;
    let mut mass = vec![0.0; fine + 1];
    for k in 1..=fine {
        let (ra, rb) = ((k - 1) as f64 * step, k as f64 * step);
        mass[k] = mass[k - 1] + 0.5 * step * (src(ra) * ra + src(rb) * rb);
    }
    let mut pot = vec![0.0; fine + 1];
    for k in (0..fine).rev() {
        let (ra, rb) = (k as f64 * step, (k + 1) as f64 * step);
        let fa = if k == 0 { 0.0 } else { mass[k] / ra };
        pot[k] = pot[k + 1] - 0.5 * step * (fa + mass[k + 1] / rb);
    }
    let exact = |r: f64| {
        let x = r / step;
        let k = (x.floor() as usize).min(fine - 1);
        let w = x - k as f64;
        pot[k] * (1.0 - w) + pot[k + 1] * w
    };
    let (a, b) = s.annulus_rings();
    let mut field = PolarField::from_fn(grid, |_, r, _| src(r));
    field = field.map(|_, i, v| if i < a || i > b { 0.0 } else { v });
    let g = AnnulusMeanZeroField::new(field, a, b, 1e-8).unwrap();
    let t = s.apply_t(&g).unwrap();
    let tilde = t.whole.map(|_, _, v| v - t.gauge);
    let (mut num, mut den) = (0.0, 0.0);
    for side in Side::BOTH {
        for i in grid.rings(side) {
            if i > 4 * s.config.cells_per_radius {
                continue;
            }
            let mu = grid.measure(side, i);
            let e = exact(grid.radius(i));
            for v in tilde.ring(side, i) {
                num += mu * (v - e) * (v - e);
                den += mu * e * e;
            }
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel < 1e-3, "{rel}");
}

#[test]
fn zero_data_gives_zero_and_solution_is_linear() {
    let s = &*SOLVER;
    let zero = |_: Side, _: f64, _: f64| [0.0, 0.0];
    let sol = s.solve(&zero).unwrap();
    assert_eq!(sol.v.max_abs(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_flux(&mut rng);
    let g = random_flux(&mut rng);
    let (a, b) = (1.7, -0.4);
    let h = |s: Side, r: f64, th: f64| {
        let (x, y) = (f(s, r, th), g(s, r, th));
        [a * x[0] + b * y[0], a * x[1] + b * y[1]]
    };
    let vf = s.solve(&f).unwrap().v;
    let vg = s.solve(&g).unwrap().v;
    let vh = s.solve(&h).unwrap().v;
    let comb = vf.scale(a).add(&vg.scale(b));
    let rel = vh.sub(&comb).l2() / vh.l2();
    assert!(rel < 1e-10, "{rel}");
}

#[test]
fn manufactured_field_is_recovered_modulo_gauge() {
    let s = &*SOLVER;
    let sol = s.solve(&target_flux).unwrap();
    let exact = PolarField::from_fn(*s.grid(), target);
    let rel = distance_modulo_gauge(&sol.v, &exact, &rho(), s.grid().outer);
    assert!(rel < 1e-3, "{rel}");
    let res = s.residuals(&target_flux, &sol).unwrap();
    assert!(res.pde < 1e-3 && res.rho_jump < 1e-3 && res.flux_jump < 1e-3, "{res:?}");
    assert!(sol.inversion_residual < 1e-8, "{}", sol.inversion_residual);
}

#[test]
fn agrees_with_global_oracle_on_inner_disk() {
    let s = &*SOLVER;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let f = random_flux(&mut rng);
    let sol = s.solve(&f).unwrap();
    let global = global_reference(&s.config, rho(), 6, &f).unwrap();
    let mut restricted = PolarField::zeros(*s.grid());
    restricted.plus.copy_from_slice(&global.plus);
    let n = restricted.minus.len();
    restricted.minus.copy_from_slice(&global.minus[..n]);
    let rel = distance_modulo_gauge(&sol.v, &restricted, &rho(), 2 * s.config.cells_per_radius);
    assert!(rel < 5e-3, "{rel}");
}

#[test]
fn annulus_operator_is_well_conditioned() {
    let sigma = SOLVER.inversion_sigma_min().unwrap();
    assert!(sigma > 1e-3, "{sigma}");
}

#[test]
fn krylov_path_matches_dense_path() {
    let cfg = CompactConfig { inversion: Inversion::Krylov, ..CompactConfig::default() };
    let k = CompactSolver::new(cfg, rho()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let f = random_flux(&mut rng);
    let a = SOLVER.solve(&f).unwrap();
    let b = k.solve(&f).unwrap();
    assert!(b.iterations > 0);
    let rel = a.v.sub(&b.v).l2() / a.v.l2();
    assert!(rel < 1e-8, "{rel}");
}

#[test]
fn repeated_remainder_stays_bounded() {
    let s = &*SOLVER;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = random_annulus_field(s, 3, &mut rng);
    let n0 = g.l2();
    for n in 1..=8 {
        g = s.operator_g(&g).unwrap();
        let proxy = (g.l2() / n0).powf(1.0 / n as f64);
        assert!(proxy.is_finite() && proxy < 10.0, "{n}: {proxy}");
    }
}

#[test]
fn data_outside_the_middle_ball_only_sees_the_whole_plane_solve() {
    let s = &*SOLVER;
    let f = |_: Side, r: f64, th: f64| {
        let w = bump((r - 3.1) / 0.9);
        [w * th.cos(), w * th.sin()]
    };
    let parts = s.apply_s(&f).unwrap();
    assert_eq!(parts.bounded.max_abs(), 0.0);
    let expect = parts.whole.map(|_, i, v| s.node_cutoff(Cutoff::WholeWindow, i) * v);
    assert_eq!(parts.value.sub(&expect).max_abs(), 0.0);
}
