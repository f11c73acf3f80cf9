use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twophase::fields::{random_band_limited, Side, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField};
use twophase::halfspace_solver::HalfspaceSolver;
use twophase::helmholtz::{decompose, solve_weak, WeakPairing};
use twophase::spectral_core::DensityPair;

fn c(x: f64) -> Complex<f64> {
    Complex::new(x, 0.0)
}

// the gradient part decays like e^{−|x_N|} for the lowest mode, so the box must hold that tail
fn grid() -> TwoPhaseGrid<f64> {
    TwoPhaseGrid::<f64>::planar(32, 24.0, 513).unwrap()
}

fn rho() -> DensityPair<f64> {
    DensityPair::new(1.0, 3.0).unwrap()
}

#[test]
fn gradient_data_is_reproduced() {
    let g = grid();
    let r = rho();
    let psi = TwoPhaseScalarField::from_fn(g, |_, x| c(x[0].cos() * (-x[1] * x[1]).exp()));
    let f = TwoPhaseVectorField::from_fn(g, |s, x| {
        let inv = 1.0 / if s == Side::Plus { r.plus } else { r.minus };
        let e = (-x[1] * x[1]).exp();
        vec![c(-inv * x[0].sin() * e), c(-inv * 2.0 * x[1] * x[0].cos() * e)]
    });
    let s = HalfspaceSolver::new(g);
    let w = solve_weak(&s, &f, &r).unwrap();
    assert!(w.u.sub(&psi).l2() < 1e-8 * psi.l2());
    let d = decompose(&s, &f, &r).unwrap();
    assert!(d.solenoidal.l2() < 1e-8 * f.l2(), "{}", d.solenoidal.l2());
    assert!(d.gradient.sub(&f).l2() < 1e-8 * f.l2());
}

#[test]
fn solenoidal_data_is_kept() {
    let g = grid();
    let r = rho();
    // rotated gradient of a stream function: divergence-free with continuous normal trace
    let f = TwoPhaseVectorField::from_fn(g, |_, x| {
        let e = (-x[1] * x[1]).exp();
        vec![c(-2.0 * x[1] * x[0].sin() * e), c(-x[0].cos() * e)]
    });
    let s = HalfspaceSolver::new(g);
    let d = decompose(&s, &f, &r).unwrap();
    assert!(d.gradient.l2() < 1e-8 * f.l2(), "{}", d.gradient.l2());
    assert!(d.solenoidal.sub(&f).l2() < 1e-8 * f.l2());
}

#[test]
fn zero_data() {
    let g = grid();
    let s = HalfspaceSolver::new(g);
    let d = decompose(&s, &TwoPhaseVectorField::zeros(g), &rho()).unwrap();
    assert_eq!(d.gradient.max_abs(), 0.0);
    assert_eq!(d.solenoidal.max_abs(), 0.0);
}

#[test]
fn weak_identity_orthogonality_and_idempotence() {
    let g = grid();
    let r = rho();
    let s = HalfspaceSolver::new(g);
    let pairing = WeakPairing::new(g);
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let f = random_band_limited(g, 4, 2.0, &mut rng);
        let fnorm = f.l2();
        let w = solve_weak(&s, &f, &r).unwrap();
        // (ρ⁻¹∇u − f, ∇φ) = 0 for every basis test gradient
        let lhs = pairing.pair(&w.flux).unwrap();
        let rhs = pairing.pair(&f).unwrap();
        let mut worst: f64 = 0.0;
        for t in 0..lhs.values.len() {
            for m in 0..lhs.values[t].len() {
                let d = (lhs.values[t][m] - rhs.values[t][m]).norm() / lhs.test_norms[t][m];
                worst = worst.max(d / fnorm);
            }
        }
        assert!(worst < 1e-8, "weak identity {seed}: {worst}");

        let d = decompose(&s, &f, &r).unwrap();
        let sum = d.solenoidal.add(&d.gradient);
        assert!(sum.sub(&f).max_abs() <= 4.0 * f64::EPSILON * f.max_abs());
        let orth = pairing.pair(&d.solenoidal).unwrap().max_normalized() / fnorm;
        assert!(orth < 1e-8, "orthogonality {seed}: {orth}");
        let again = decompose(&s, &d.solenoidal, &r).unwrap();
        let idem = again.solenoidal.sub(&d.solenoidal).l2() / fnorm;
        assert!(idem < 1e-8, "idempotence {seed}: {idem}");
    }
}

#[test]
fn gradient_norm_bounded_over_random_suite() {
    let g = TwoPhaseGrid::<f64>::planar(16, 10.0, 129).unwrap();
    let r = rho();
    let s = HalfspaceSolver::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let f = random_band_limited(g, 3, 1.5, &mut rng);
        let w = solve_weak(&s, &f, &r).unwrap();
        let grad_u = w.flux.map_comps(|comp| comp.map(|side, v| v * if side == Side::Plus { r.plus } else { r.minus }));
        worst = worst.max(grad_u.l2() / f.l2());
    }
    // recorded constant for this density pair
    assert!(worst.is_finite() && worst < 2.0 * (r.plus + r.minus), "{worst}");
}
