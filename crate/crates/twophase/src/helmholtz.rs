//! Weak flat-interface problem and the two-phase gradient/solenoidal splitting.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::Result;
use crate::fields::{Side, TangentialFft, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField};
use crate::halfspace_solver::{HalfspaceSolver, INTERPOLATION_WIDTH};
use crate::quadrature::gauss_unit;
use crate::scalar::{cz, Real};
use crate::spectral_core::DensityPair;
use crate::stencil::{lagrange_basis, window_start};

/// Single-valued potential `u = ρ±v±` and the flux `ρ⁻¹∇u`.
#[derive(Debug, Clone)]
pub struct WeakSolution<T> {
    pub u: TwoPhaseScalarField<T>,
    pub flux: TwoPhaseVectorField<T>,
}

#[derive(Debug, Clone)]
pub struct Decomposition<T> {
    pub solenoidal: TwoPhaseVectorField<T>,
    pub gradient: TwoPhaseVectorField<T>,
}

/// Solves `(ρ⁻¹∇u, ∇φ) = (f, ∇φ)`; the potential has zero mean on the interface plane.
pub fn solve_weak<T: Real>(
    solver: &HalfspaceSolver<T>,
    f: &TwoPhaseVectorField<T>,
    rho: &DensityPair<T>,
) -> Result<WeakSolution<T>> {
    let sol = solver.solve_flat(f, None, None, None, rho)?;
    let flux = solver.gradient(&sol);
    let u = sol.v.map(|s, v| v * if s == Side::Plus { rho.plus } else { rho.minus });
    Ok(WeakSolution { u, flux })
}

pub fn decompose<T: Real>(
    solver: &HalfspaceSolver<T>,
    f: &TwoPhaseVectorField<T>,
    rho: &DensityPair<T>,
) -> Result<Decomposition<T>> {
    let w = solve_weak(solver, f, rho)?;
    Ok(Decomposition { solenoidal: f.sub(&w.flux), gradient: w.flux })
}

/// Pairs vector fields against test gradients `∇(e^{ik·x'} ψ_m(x_N))`, where `ψ_m` are
/// hat functions on the combined normal line vanishing at `±L`.
#[derive(Clone)]
pub struct WeakPairing<T> {
    grid: TwoPhaseGrid<T>,
    fft: TangentialFft<T>,
    width: usize,
    /// `∫_cell ℓ_k` and `∫_cell t·ℓ_k` per interval offset
    m0: Vec<Vec<T>>,
    m1: Vec<Vec<T>>,
}

/// Pairings per tangential mode, nodes ordered from `x_N = −L+h` to `L−h`.
#[derive(Debug, Clone)]
pub struct Pairings<T> {
    pub values: Vec<Vec<Complex<T>>>,
    pub test_norms: Vec<Vec<T>>,
}

impl<T: Real> Pairings<T> {
    /// `max |(g, ∇φ)| / ‖∇φ‖` over all test functions.
    pub fn max_normalized(&self) -> T {
        let mut m = T::zero();
        for (row, norms) in self.values.iter().zip(&self.test_norms) {
            for (v, n) in row.iter().zip(norms) {
                m = m.max(v.norm() / *n);
            }
        }
        m
    }
}

impl<T: Real> WeakPairing<T> {
    pub fn new(grid: TwoPhaseGrid<T>) -> Self {
        let p = INTERPOLATION_WIDTH.min(grid.normal_points);
        let h = grid.normal_spacing();
        let (gx, gw) = gauss_unit::<f64>(16);
        let mut m0 = vec![vec![T::zero(); p]; p - 1];
        let mut m1 = vec![vec![T::zero(); p]; p - 1];
        for o in 0..p - 1 {
            for (t, w) in gx.iter().zip(&gw) {
                let b = lagrange_basis(o as f64 + t, p);
                for k in 0..p {
                    m0[o][k] += h * T::lit(w * b[k]);
                    m1[o][k] += h * T::lit(w * t * b[k]);
                }
            }
        }
        Self { grid, fft: TangentialFft::new(&grid), width: p, m0, m1 }
    }

    fn cells(&self, col: &[Complex<T>]) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        let n = self.grid.normal_points;
        let mut c0 = vec![cz(); n - 1];
        let mut c1 = vec![cz(); n - 1];
        for j in 0..n - 1 {
            let s = window_start(j, self.width, n);
            let o = j - s;
            for k in 0..self.width {
                c0[j] += col[s + k] * self.m0[o][k];
                c1[j] += col[s + k] * self.m1[o][k];
            }
        }
        (c0, c1)
    }

    /// `(∫ ψ_m g, ∫ ψ_m' g)` on one side for nodes `1..n−1` (index 0 is the interface half-tent).
    fn hat_moments(&self, col: &[Complex<T>]) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        let n = self.grid.normal_points;
        let h = self.grid.normal_spacing();
        let (c0, c1) = self.cells(col);
        let mut val = vec![cz(); n - 1];
        let mut der = vec![cz(); n - 1];
        val[0] = c0[0] - c1[0];
        der[0] = -c0[0] / h;
        for m in 1..n - 1 {
            val[m] = c1[m - 1] + c0[m] - c1[m];
            der[m] = (c0[m - 1] - c0[m]) / h;
        }
        (val, der)
    }

    pub fn pair(&self, g: &TwoPhaseVectorField<T>) -> Result<Pairings<T>> {
        let grid = self.grid;
        grid.check_same(&g.grid)?;
        let n = grid.normal_points;
        let dim = grid.dim;
        let cell = grid.tangential_cell();
        let mut spectra: Vec<[Vec<Complex<T>>; 2]> = Vec::with_capacity(dim);
        for comp in &g.comps {
            let mut a = comp.plus.clone();
            let mut b = comp.minus.clone();
            self.fft.forward(&mut a);
            self.fft.forward(&mut b);
            spectra.push([a, b]);
        }
        let h = grid.normal_spacing();
        let hat_sq = h * T::lit(2.0 / 3.0);
        let slope_sq = T::lit(2.0) / h;
        let area = grid.tangential_period.powi(dim as i32 - 1);
        let rows: Vec<(Vec<Complex<T>>, Vec<T>)> = (0..grid.tangential_count())
            .into_par_iter()
            .map(|t| {
                let k = grid.wavenumber(t);
                let k2 = k.iter().fold(T::zero(), |s, v| s + *v * *v);
                let i0 = grid.index(t, 0);
                let mut per_side = Vec::with_capacity(2);
                for (si, side) in Side::BOTH.iter().enumerate() {
                    let mut tang = vec![cz::<T>(); n - 1];
                    for (a, ka) in k.iter().enumerate() {
                        let (val, _) = self.hat_moments(&spectra[a][si][i0..i0 + n]);
                        // conj(i k_a) = −i k_a
                        let m = Complex::new(T::zero(), -*ka);
                        for (o, v) in tang.iter_mut().zip(val) {
                            *o += v * m;
                        }
                    }
                    let (_, der) = self.hat_moments(&spectra[dim - 1][si][i0..i0 + n]);
                    let s = side.sign::<T>();
                    let total: Vec<Complex<T>> = tang.iter().zip(der).map(|(a, b)| (*a + b * s) * cell).collect();
                    per_side.push(total);
                }
                // combined line: minus nodes far to near, the interface, then plus nodes
                let mut row = Vec::with_capacity(2 * n - 3);
                for m in (1..n - 1).rev() {
                    row.push(per_side[1][m]);
                }
                row.push(per_side[0][0] + per_side[1][0]);
                row.extend_from_slice(&per_side[0][1..]);
                let norm = (area * (k2 * hat_sq + slope_sq)).sqrt();
                let norms = vec![norm; row.len()];
                (row, norms)
            })
            .collect();
        let (values, test_norms) = rows.into_iter().unzip();
        Ok(Pairings { values, test_norms })
    }
}
