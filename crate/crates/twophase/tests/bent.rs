use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twophase::bent_solver::{
    build_map, perturbation_terms, solve_bent, transform_data, transformed_jumps, BendProfile, BendSpec, BentOptions,
    Diffeomorphism,
};
use twophase::fd_oracle::{BentCoefficients, BentOracle, OracleData};
use twophase::fields::{random_band_limited, Differentiator, Side, TwoPhaseGrid, TwoPhaseScalarField};
use twophase::halfspace_solver::HalfspaceSolver;
use twophase::spectral_core::{DensityPair, ResolventParameter};

fn c(x: f64) -> Complex<f64> {
    Complex::new(x, 0.0)
}

fn rho() -> DensityPair<f64> {
    DensityPair::new(1.0, 3.0).unwrap()
}

fn amp(s: Side) -> f64 {
    let r = rho();
    if s == Side::Plus {
        r.minus
    } else {
        r.plus
    }
}

// ṽ± = ρ∓ cos y₁ e^{−y₂²/2}
fn shape(y: &[f64]) -> f64 {
    y[0].cos() * (-y[1] * y[1] / 2.0).exp()
}

fn shape_grad(y: &[f64]) -> [f64; 2] {
    let e = (-y[1] * y[1] / 2.0).exp();
    [-y[0].sin() * e, -y[1] * y[0].cos() * e]
}

fn map(profile: BendProfile, delta: f64, g: TwoPhaseGrid<f64>) -> Diffeomorphism<f64> {
    build_map(g, BendSpec { profile, amplitude: delta, rotation: None }).unwrap()
}

fn manufactured(
    phi: &Diffeomorphism<f64>,
    lam: Option<&ResolventParameter<f64>>,
) -> (twophase::bent_solver::BentSolution<f64>, TwoPhaseScalarField<f64>) {
    let g = phi.grid;
    let l = lam.map_or(c(0.0), |l| l.lambda);
    let r = rho();
    let f = |s: Side, y: &[f64]| shape_grad(y).iter().map(|v| c(amp(s) * v)).collect::<Vec<_>>();
    let src = move |s: Side, y: &[f64]| l * (if s == Side::Plus { r.plus } else { r.minus }) * amp(s) * shape(y);
    let zero = |_: Side, _: &[f64]| c(0.0);
    let solver = HalfspaceSolver::new(g);
    let sol = solve_bent(&solver, f, src, zero, lam, &r, phi, &BentOptions::default()).unwrap();
    let exact = TwoPhaseScalarField::from_fn(g, |s, x| c(amp(s) * shape(&phi.forward(x))));
    (sol, exact)
}

#[test]
fn identity_map_reduces_to_flat_solver() {
    let g = TwoPhaseGrid::<f64>::planar(32, 10.0, 129).unwrap();
    let phi = map(BendProfile::Shear, 0.0, g);
    let lam = ResolventParameter::with_default_sector(c(2.0));
    let (sol, _) = manufactured(&phi, Some(&lam));
    let r = rho();
    let data = transform_data(
        |s, y| shape_grad(y).iter().map(|v| c(amp(s) * v)).collect(),
        |s, y| c(2.0 * if s == Side::Plus { r.plus } else { r.minus } * amp(s) * shape(y)),
        |_, _| c(0.0),
        &phi,
    );
    let flat =
        HalfspaceSolver::new(g).solve_flat(&data.flux, Some(&data.source), Some(&data.jump), Some(&lam), &r).unwrap();
    let d = sol.flat.v.sub(&flat.v).max_abs();
    assert!(d <= 1e-13 * flat.v.max_abs(), "{d}");
    assert!(sol.iterations <= 2);
}

#[test]
fn shear_recovers_manufactured_field_with_geometric_decay() {
    let g = TwoPhaseGrid::<f64>::planar(64, 10.0, 257).unwrap();
    let phi = map(BendProfile::Shear, 0.1, g);
    for lam in [None, Some(ResolventParameter::with_default_sector(c(1.0)))] {
        let (sol, exact) = manufactured(&phi, lam.as_ref());
        let rel = sol.flat.v.sub(&exact).l2() / exact.l2();
        assert!(rel < 1e-6, "recovery {rel}");
        for (i, q) in sol.ratios().iter().enumerate() {
            assert!(*q <= 0.5, "ratio {q} at iteration {}", i + 2);
        }
        let (rj, fj) = transformed_jumps(&sol, &phi, &rho());
        assert!(rj < 1e-8 && fj < 1e-8, "jumps {rj} {fj}");
    }
}

#[test]
fn bump_resolvent_case_recovers_manufactured_field() {
    let g = TwoPhaseGrid::<f64>::planar(64, 10.0, 257).unwrap();
    let phi = map(BendProfile::Bump, 0.1, g);
    let lam = ResolventParameter::with_default_sector(Complex::from_polar(2.0, 1.0));
    let (sol, exact) = manufactured(&phi, Some(&lam));
    let rel = sol.flat.v.sub(&exact).l2() / exact.l2();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn transformed_constant_field_is_the_inverse_gradient() {
    let g = TwoPhaseGrid::<f64>::planar(32, 4.0, 65).unwrap();
    let phi = map(BendProfile::Shear, 0.1, g);
    let data = transform_data(|_, _| vec![c(1.0), c(-2.0)], |_, _| c(0.0), |_, _| c(0.0), &phi);
    for side in Side::BOTH {
        for t in 0..g.tangential_count() {
            let x = g.point(side, t, 3);
            // shear inverse gradient: [[1, 0], [−δ cos x₁, 1]]
            let m = [1.0, 0.0, -0.1 * x[0].cos(), 1.0];
            let i = g.index(t, 3);
            assert!((data.flux.comps[0].side(side)[i].re - (m[0] - 2.0 * m[1])).abs() < 1e-9);
            assert!((data.flux.comps[1].side(side)[i].re - (m[2] - 2.0 * m[3])).abs() < 1e-9);
        }
    }
}

#[test]
fn divergence_identity_under_pullback() {
    let g = TwoPhaseGrid::<f64>::planar(64, 10.0, 257).unwrap();
    let phi = map(BendProfile::Bump, 0.15, g);
    let data = transform_data(|_, y| shape_grad(y).iter().map(|v| c(*v)).collect(), |_, _| c(0.0), |_, _| c(0.0), &phi);
    let div = Differentiator::new(g).divergence(&data.flux);
    // Δψ = cos y₁ e^{−y₂²/2} (y₂² − 2)
    let expected = TwoPhaseScalarField::from_fn(g, |s, x| {
        let y = phi.forward(x);
        let node_jac = {
            let t = (0..g.tangential_count()).find(|&t| (g.tangential_point(t)[0] - x[0]).abs() < 1e-12).unwrap();
            let j = ((x[1].abs() / g.normal_spacing()).round()) as usize;
            phi.jacobian.side(s)[g.index(t, j)].re
        };
        c(node_jac * shape(&y) * (y[1] * y[1] - 2.0))
    });
    let rel = div.sub(&expected).l2() / expected.l2();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn perturbation_terms_are_small_in_m1() {
    let g = TwoPhaseGrid::<f64>::planar(32, 6.0, 129).unwrap();
    let d = Differentiator::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (profile, delta) in [(BendProfile::Shear, 0.1), (BendProfile::Bump, 0.1), (BendProfile::Shear, 0.05)] {
        let phi = map(profile, delta, g);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let v = random_band_limited(g, 3, 1.5, &mut rng).comps[0].clone();
            let grad = d.gradient(&v);
            let (cal_f, cal_g) = perturbation_terms(&v, &grad, &phi, None);
            assert_eq!(cal_g.max_abs(), 0.0);
            worst = worst.max(cal_f.l2() / (phi.m1 * grad.l2()));
        }
        // recorded constant across the suite
        assert!(worst < 3.0, "{profile:?} {delta}: {worst}");
    }
}

#[test]
fn identity_and_shear_perturbation_structure() {
    let g = TwoPhaseGrid::<f64>::planar(16, 4.0, 33).unwrap();
    let d = Differentiator::new(g);
    let v = TwoPhaseScalarField::from_fn(g, |_, x| c(x[0].sin() * (-x[1] * x[1]).exp()));
    let grad = d.gradient(&v);
    let lam = Some(c(3.0));
    let (f0, g0) = perturbation_terms(&v, &grad, &map(BendProfile::Shear, 0.0, g), lam);
    assert_eq!(f0.max_abs(), 0.0);
    assert_eq!(g0.max_abs(), 0.0);
    let phi = map(BendProfile::Shear, 0.1, g);
    let (f1, g1) = perturbation_terms(&v, &grad, &phi, lam);
    assert!(g1.max_abs() < 1e-14);
    assert!(f1.max_abs() > 1e-3);
}

#[test]
fn shear_solution_matches_bent_oracle() {
    let g = TwoPhaseGrid::<f64>::planar(128, 8.0, 257).unwrap();
    let phi = map(BendProfile::Shear, 0.1, g);
    let (sol, _) = manufactured(&phi, None);
    let mut coef = BentCoefficients::identity(g);
    for side in Side::BOTH {
        for node in 0..g.len() {
            let cm = phi.metric_defect(side, node);
            let j = phi.jacobian.side(side)[node].re;
            coef.k11.side_mut(side)[node] = c(j * (1.0 + cm[0]));
            coef.k12.side_mut(side)[node] = c(j * cm[1]);
            coef.k22.side_mut(side)[node] = c(j * (1.0 + cm[3]));
            coef.jacobian.side_mut(side)[node] = c(j);
        }
    }
    let oracle = BentOracle::new(g, rho(), None, coef).unwrap();
    let (v, _) = oracle.solve(&OracleData { flux: Some(&sol.data.flux), ..Default::default() }).unwrap();
    let rel = v.sub(&sol.flat.v).l2() / sol.flat.v.l2();
    assert!(rel < 1e-3, "{rel}");
}

#[test]
fn contraction_threshold_and_lambda_floor() {
    let g = TwoPhaseGrid::<f64>::planar(16, 4.0, 33).unwrap();
    let phi = map(BendProfile::Shear, 0.3, g);
    let solver = HalfspaceSolver::new(g);
    let zero_v = |_: Side, _: &[f64]| vec![c(0.0), c(0.0)];
    let zero = |_: Side, _: &[f64]| c(0.0);
    let e = solve_bent(&solver, zero_v, zero, zero, None, &rho(), &phi, &BentOptions::default()).unwrap_err();
    assert!(matches!(e, twophase::Error::M1TooLarge { .. }));
    let phi = map(BendProfile::Shear, 0.1, g);
    let small = ResolventParameter::with_default_sector(c(0.5));
    let e = solve_bent(&solver, zero_v, zero, zero, Some(&small), &rho(), &phi, &BentOptions::default()).unwrap_err();
    assert!(matches!(e, twophase::Error::InvalidParameter(_)));
}
