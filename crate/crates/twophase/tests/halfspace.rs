use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twophase::fields::{
    random_band_limited, Differentiator, Side, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField,
};
use twophase::halfspace_solver::{jump_residuals, HalfspaceSolver};
use twophase::spectral_core::{DensityPair, ResolventParameter};

type C = Complex<f64>;

fn c(x: f64) -> C {
    Complex::new(x, 0.0)
}

fn pair(rho: &DensityPair<f64>, grid: TwoPhaseGrid<f64>) -> (TwoPhaseScalarField<f64>, TwoPhaseVectorField<f64>) {
    let (rp, rm) = (rho.plus, rho.minus);
    let v = TwoPhaseScalarField::from_fn(grid, |s, x| match s {
        Side::Plus => c(rm * x[0].cos() * (-x[1]).exp()),
        Side::Minus => c(rp * x[0].cos() * x[1].exp()),
    });
    let f = TwoPhaseVectorField::from_fn(grid, |s, x| match s {
        Side::Plus => vec![c(-rm * x[0].sin() * (-x[1]).exp()), c(-rm * x[0].cos() * (-x[1]).exp())],
        Side::Minus => vec![c(-rp * x[0].sin() * x[1].exp()), c(rp * x[0].cos() * x[1].exp())],
    });
    (v, f)
}

fn rel(a: &TwoPhaseScalarField<f64>, b: &TwoPhaseScalarField<f64>) -> f64 {
    a.sub(b).l2() / b.l2()
}

#[test]
fn manufactured_pair_laplace() {
    let grid = TwoPhaseGrid::<f64>::planar(64, 20.0, 257).unwrap();
    let rho = DensityPair::new(1.0, 3.0).unwrap();
    let (v, f) = pair(&rho, grid);
    let sol = HalfspaceSolver::new(grid).solve_flat(&f, None, None, None, &rho).unwrap();
    let err = rel(&sol.v, &v);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn manufactured_pair_resolvent() {
    let grid = TwoPhaseGrid::<f64>::planar(64, 20.0, 257).unwrap();
    let rho = DensityPair::new(1.0, 3.0).unwrap();
    let lam = ResolventParameter::with_default_sector(c(1.0));
    let (v, f) = pair(&rho, grid);
    let g = v.map(|s, val| val * if s == Side::Plus { rho.plus } else { rho.minus });
    let sol = HalfspaceSolver::new(grid).solve_flat(&f, Some(&g), None, Some(&lam), &rho).unwrap();
    let err = rel(&sol.v, &v);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn zero_data_gives_zero() {
    let grid = TwoPhaseGrid::<f64>::planar(16, 10.0, 65).unwrap();
    let rho = DensityPair::new(2.0, 0.5).unwrap();
    let f = TwoPhaseVectorField::zeros(grid);
    let solver = HalfspaceSolver::new(grid);
    let lam = ResolventParameter::with_default_sector(Complex::new(0.0, 2.0));
    assert_eq!(solver.solve_flat(&f, None, None, Some(&lam), &rho).unwrap().v.max_abs(), 0.0);
    assert_eq!(solver.solve_flat(&f, None, None, None, &rho).unwrap().v.max_abs(), 0.0);
    assert_eq!(solver.solve_whole_laplace(&f, Side::Plus).unwrap().values.iter().map(|v| v.norm()).sum::<f64>(), 0.0);
}

fn laplacian_with_normal(d: &Differentiator<f64>, grid: &TwoPhaseGrid<f64>, u: &[C], dn: &[C], side: Side) -> Vec<C> {
    let mut f = TwoPhaseScalarField::zeros(*grid);
    *f.side_mut(side) = u.to_vec();
    let mut g = TwoPhaseScalarField::zeros(*grid);
    *g.side_mut(side) = dn.to_vec();
    let t2 = d.differentiate(&d.differentiate(&f, 0), 0);
    let n2 = d.differentiate(&g, 1);
    t2.add(&n2).side(side).to_vec()
}

#[test]
fn whole_resolvent_residual() {
    let grid = TwoPhaseGrid::<f64>::planar(64, 8.0, 257).unwrap();
    let rho = DensityPair::new(1.5, 1.0).unwrap();
    let lam = ResolventParameter::with_default_sector(c(1.0));
    let f = TwoPhaseVectorField::from_fn(grid, |_, x| {
        let e = (-x[1] * x[1]).exp();
        vec![c(x[0].cos() * e), c(-2.0 * x[1] * x[0].sin() * e)]
    });
    let div = TwoPhaseScalarField::from_fn(grid, |_, x| {
        let e = (-x[1] * x[1]).exp();
        c(x[0].sin() * e * (-1.0 - 2.0 + 4.0 * x[1] * x[1]))
    });
    let solver = HalfspaceSolver::new(grid);
    let d = Differentiator::new(grid);
    for side in Side::BOTH {
        let u = solver.solve_whole_resolvent(&f, None, &lam, side, &rho).unwrap();
        let r = if side == Side::Plus { rho.plus } else { rho.minus };
        let lap = laplacian_with_normal(&d, &grid, &u.values, &u.normal_derivative, side);
        let dv = div.side(side);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..grid.len() {
            num += (u.values[i] * r - lap[i] + dv[i]).norm_sqr();
            den += dv[i].norm_sqr();
        }
        let res = (num / den).sqrt();
        assert!(res < 1e-6, "{side:?} {res}");
    }
}

#[test]
fn whole_laplace_residual() {
    let grid = TwoPhaseGrid::<f64>::planar(64, 20.0, 257).unwrap();
    let f = TwoPhaseVectorField::from_fn(grid, |_, x| {
        let e = (-x[1].abs()).exp();
        vec![c(x[0].cos() * e), c(-x[1].signum() * x[0].sin() * e)]
    });
    let solver = HalfspaceSolver::new(grid);
    let d = Differentiator::new(grid);
    let u = solver.solve_whole_laplace(&f, Side::Plus).unwrap();
    let lap = laplacian_with_normal(&d, &grid, &u.values, &u.normal_derivative, Side::Plus);
    let div = d.divergence(&f);
    let dv = div.side(Side::Plus);
    let mut num = 0.0;
    let mut den = 0.0;
    // div f vanishes off the interface, so the residual is measured against |f|
    for i in 0..grid.len() {
        num += (lap[i] - dv[i]).norm_sqr();
        den += f.comps.iter().map(|c| c.side(Side::Plus)[i].norm_sqr()).sum::<f64>();
    }
    let res = (num / den).sqrt();
    assert!(res < 1e-6, "{res}");
}

#[test]
fn whole_laplace_ignores_constant_shift() {
    let grid = TwoPhaseGrid::<f64>::planar(32, 20.0, 129).unwrap();
    let f = TwoPhaseVectorField::from_fn(grid, |_, x| {
        let e = (-x[1].abs()).exp();
        vec![c(x[0].cos() * e), c(-x[0].sin() * e)]
    });
    let shifted = f.map_comps(|comp| comp.map(|_, v| v + c(0.7)));
    let solver = HalfspaceSolver::new(grid);
    let d = Differentiator::new(grid);
    let a = solver.solve_whole_laplace(&f, Side::Plus).unwrap();
    let b = solver.solve_whole_laplace(&shifted, Side::Plus).unwrap();
    let mut fa = TwoPhaseScalarField::zeros(grid);
    *fa.side_mut(Side::Plus) = a.values.clone();
    let mut fb = TwoPhaseScalarField::zeros(grid);
    *fb.side_mut(Side::Plus) = b.values.clone();
    let tang = d.differentiate(&fa, 0).sub(&d.differentiate(&fb, 0)).max_abs();
    assert!(tang < 1e-10, "{tang}");
    // the tangential constant has no divergence; the normal one only moves the gauged mode
    let n0 = grid.normal_points;
    for j in 0..n0 {
        let diff = a.normal_derivative[grid.index(0, j)] - b.normal_derivative[grid.index(0, j)];
        assert!((diff.norm() - 0.7).abs() < 1e-12 || j == 0 && diff.norm() < 1.0);
    }
}

#[test]
fn trace_formula_matches_solution_slope() {
    let grid = TwoPhaseGrid::<f64>::planar(64, 10.0, 513).unwrap();
    let rho = DensityPair::new(1.0, 2.0).unwrap();
    let lam = ResolventParameter::with_default_sector(Complex::new(2.0, 1.0));
    let f = TwoPhaseVectorField::from_fn(grid, |_, x| {
        let e = (-x[1] * x[1]).exp();
        vec![c(x[0].sin() * e), c((2.0 * x[0]).cos() * e * (1.0 + x[1]))]
    });
    let solver = HalfspaceSolver::new(grid);
    for side in Side::BOTH {
        let u = solver.solve_whole_resolvent(&f, None, &lam, side, &rho).unwrap();
        let tr = solver.interface_normal_trace(&f, Some(lam.lambda), side, &rho).unwrap();
        // cross-check against a one-sided difference of the computed solution
        let d = Differentiator::new(grid);
        let mut fu = TwoPhaseScalarField::zeros(grid);
        *fu.side_mut(side) = u.values.clone();
        let du = d.differentiate(&fu, 1);
        for t in 0..grid.tangential_count() {
            let i = grid.index(t, 0);
            assert!((tr[t] - u.normal_derivative[i]).norm() < 1e-10);
            assert!((tr[t] - du.side(side)[i]).norm() < 1e-4, "{side:?} {t}");
        }
    }
}

#[test]
fn jump_residuals_small_for_band_limited_data() {
    let grid = TwoPhaseGrid::<f64>::planar(32, 12.0, 129).unwrap();
    let rho = DensityPair::new(1.0, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f = random_band_limited(grid, 4, 2.0, &mut rng);
    let h = f.normal().scale(c(0.3));
    let lam = ResolventParameter::with_default_sector(Complex::new(-1.0, 5.0));
    let solver = HalfspaceSolver::new(grid);
    let sol = solver.solve_flat(&f, None, Some(&h), Some(&lam), &rho).unwrap();
    let (a, b) = jump_residuals(&sol, &rho);
    let data = f.max_abs();
    let fj = twophase::fields::jump(f.normal());
    let hj = twophase::fields::jump(&h);
    for i in 0..a.len() {
        assert!(a[i].norm() < 1e-9 * data);
        assert!((b[i] - fj[i] - hj[i]).norm() < 1e-9 * data);
    }
}

#[test]
fn resolvent_ratio_is_bounded() {
    let grid = TwoPhaseGrid::<f64>::planar(32, 12.0, 257).unwrap();
    let rho = DensityPair::new(1.0, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = random_band_limited(grid, 3, 1.5, &mut rng);
    let d = Differentiator::new(grid);
    let solver = HalfspaceSolver::new(grid);
    let sigma = ResolventParameter::with_default_sector(c(1.0)).sigma;
    let theta_max = std::f64::consts::PI - sigma - 0.1;
    let mut ratios = Vec::new();
    for mag in [1.0, 10.0, 100.0] {
        for theta in [0.0, theta_max, -theta_max] {
            let lam = ResolventParameter::with_default_sector(Complex::from_polar(mag, theta));
            let sol = solver.solve_flat(&f, None, None, Some(&lam), &rho).unwrap();
            let n = d.norms(&sol.v, Some(lam.lambda));
            let fnorm = f.normal();
            let data = d.divergence(&f).l2() + mag.sqrt() * fnorm.l2() + d.gradient(fnorm).l2();
            ratios.push(n.resolvent_triplet.unwrap() / data);
        }
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(max.is_finite() && max < 50.0, "{ratios:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn flat_solve_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let grid = TwoPhaseGrid::<f64>::planar(16, 10.0, 65).unwrap();
        let rho = DensityPair::new(1.0, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1 = random_band_limited(grid, 3, 2.0, &mut rng);
        let f2 = random_band_limited(grid, 3, 2.0, &mut rng);
        let lam = ResolventParameter::with_default_sector(Complex::new(1.0, 1.0));
        let s = HalfspaceSolver::new(grid);
        let mix = f1.scale(c(a)).add(&f2.scale(c(b)));
        let u = s.solve_flat(&mix, None, None, Some(&lam), &rho).unwrap().v;
        let u1 = s.solve_flat(&f1, None, None, Some(&lam), &rho).unwrap().v;
        let u2 = s.solve_flat(&f2, None, None, Some(&lam), &rho).unwrap().v;
        let comb = u1.scale(c(a)).add(&u2.scale(c(b)));
        prop_assert!(u.sub(&comb).max_abs() <= 1e-11 * (1.0 + comb.max_abs()));
    }
}

#[test]
fn single_precision_flat_solve() {
    let grid = TwoPhaseGrid::<f32>::planar(32, 12.0, 129).unwrap();
    let rho = DensityPair::new(1.0f32, 3.0).unwrap();
    let cf = |x: f32| Complex::new(x, 0.0);
    let v = TwoPhaseScalarField::from_fn(grid, |s, x| {
        cf(if s == Side::Plus { 3.0 } else { 1.0 } * x[0].cos() * (-s.sign::<f32>() * x[1]).exp())
    });
    let f = TwoPhaseVectorField::from_fn(grid, |s, x| {
        let a = if s == Side::Plus { 3.0 } else { 1.0 };
        let e = (-s.sign::<f32>() * x[1]).exp();
        vec![cf(-a * x[0].sin() * e), cf(-s.sign::<f32>() * a * x[0].cos() * e)]
    });
    let sol = HalfspaceSolver::new(grid).solve_flat(&f, None, None, None, &rho).unwrap();
    let err = sol.v.sub(&v).l2() / v.l2();
    assert!(err < 1e-4, "{err}");
}
