//! Bent-interface problems reduced to the flat solver through a graph diffeomorphism.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Side, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField};
use crate::halfspace_solver::{FlatSolution, HalfspaceSolver};
use crate::scalar::{re, Real};
use crate::spectral_core::{DensityPair, ResolventParameter};

/// Normal displacement `η` of the map `Φ(x) = 𝒜(x + δ η(x) e_N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BendProfile {
    /// `η = sin x₁`, a unimodular shear
    Shear,
    /// `η = sin x₁ · e^{−x_N²}`, with a varying Jacobian
    Bump,
}

impl BendProfile {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "shear" => Some(Self::Shear),
            "bump" => Some(Self::Bump),
            _ => None,
        }
    }

    /// Value, gradient and Hessian (row-major) at `x`.
    fn eval<T: Real>(self, x: &[T]) -> (T, Vec<T>, Vec<T>) {
        let n = x.len();
        let (s, c) = x[0].sin_cos();
        let mut grad = vec![T::zero(); n];
        let mut hess = vec![T::zero(); n * n];
        match self {
            Self::Shear => {
                grad[0] = c;
                hess[0] = -s;
                (s, grad, hess)
            }
            Self::Bump => {
                let y = x[n - 1];
                let e = (-y * y).exp();
                let two = T::lit(2.0);
                grad[0] = c * e;
                grad[n - 1] = -two * y * s * e;
                hess[0] = -s * e;
                let mixed = -two * y * c * e;
                hess[n - 1] = mixed;
                hess[(n - 1) * n] = mixed;
                hess[n * n - 1] = (two * two * y * y - two) * s * e;
                (s * e, grad, hess)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BendSpec<T> {
    pub profile: BendProfile,
    pub amplitude: T,
    /// orthonormal rotation `𝒜`, row-major; `None` is the identity
    pub rotation: Option<Vec<T>>,
}

fn matmul<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn transpose<T: Real>(a: &[T], n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

fn det<T: Real>(a: &[T], n: usize) -> T {
    match n {
        2 => a[0] * a[3] - a[1] * a[2],
        _ => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
    }
}

fn frobenius<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt()
}

fn identity<T: Real>(n: usize) -> Vec<T> {
    let mut a = vec![T::zero(); n * n];
    for i in 0..n {
        a[i * n + i] = T::one();
    }
    a
}

/// Map data sampled on the nodes of a flat grid. Matrices are row-major per node.
#[derive(Debug, Clone)]
pub struct Diffeomorphism<T> {
    pub grid: TwoPhaseGrid<T>,
    pub spec: BendSpec<T>,
    pub rotation: Vec<T>,
    pub inverse_rotation: Vec<T>,
    /// `B(x)` per side
    pub bend: [Vec<T>; 2],
    /// `B₋₁(x)` per side, from the numerical gradient of the inverse map at `Φ(x)`
    pub inverse_bend: [Vec<T>; 2],
    pub jacobian: TwoPhaseScalarField<T>,
    /// `|(𝒜₋₁ + B₋₁)ᵀ e_N|`
    pub normal_factor: TwoPhaseScalarField<T>,
    pub m1: T,
    /// discrete `L₂` norm of `∇B`, recorded only
    pub m2: T,
    pub jacobian_bounds: (T, T),
    pub normal_factor_bounds: (T, T),
    /// `max |(𝒜 + B)(𝒜₋₁ + B₋₁) − I|`
    pub composition_error: T,
}

fn side_slot(side: Side) -> usize {
    match side {
        Side::Plus => 0,
        Side::Minus => 1,
    }
}

impl<T: Real> Diffeomorphism<T> {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// `Φ(x)`.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        let (eta, _, _) = self.spec.profile.eval(x);
        let mut z = x.to_vec();
        z[n - 1] += self.spec.amplitude * eta;
        (0..n).map(|i| (0..n).fold(T::zero(), |s, k| s + self.rotation[i * n + k] * z[k])).collect()
    }

    /// `Φ⁻¹(y)` by Newton iteration.
    pub fn inverse(&self, y: &[T]) -> Result<Vec<T>> {
        let n = y.len();
        let z: Vec<T> =
            (0..n).map(|i| (0..n).fold(T::zero(), |s, k| s + self.inverse_rotation[i * n + k] * y[k])).collect();
        let delta = self.spec.amplitude;
        let mut x = z.clone();
        x[n - 1] = x[n - 1] - delta * self.spec.profile.eval(&z).0;
        // only the normal coordinate moves: x' = z', x_N + δη(z', x_N) = z_N
        for _ in 0..60 {
            let (eta, grad, _) = self.spec.profile.eval(&x);
            let r = x[n - 1] + delta * eta - z[n - 1];
            let step = r / (T::one() + delta * grad[n - 1]);
            x[n - 1] -= step;
            if step.abs() <= T::epsilon() * T::lit(4.0) * (T::one() + x[n - 1].abs()) {
                let (eta, _, _) = self.spec.profile.eval(&x);
                let r = (x[n - 1] + delta * eta - z[n - 1]).abs();
                if r <= T::lit(1e-12) * (T::one() + z[n - 1].abs()) {
                    return Ok(x);
                }
            }
        }
        let (eta, _, _) = self.spec.profile.eval(&x);
        if (x[n - 1] + delta * eta - z[n - 1]).abs() <= T::lit(1e-12) * (T::one() + z[n - 1].abs()) {
            return Ok(x);
        }
        Err(Error::InverseNotConverged(y.iter().map(|v| v.as_f64()).collect()))
    }

    pub fn bend_at(&self, side: Side, node: usize) -> &[T] {
        let n = self.dim();
        &self.bend[side_slot(side)][node * n * n..(node + 1) * n * n]
    }

    pub fn inverse_bend_at(&self, side: Side, node: usize) -> &[T] {
        let n = self.dim();
        &self.inverse_bend[side_slot(side)][node * n * n..(node + 1) * n * n]
    }

    /// `𝒜₋₁ + B₋₁` at a node.
    pub fn inverse_gradient(&self, side: Side, node: usize) -> Vec<T> {
        self.inverse_rotation.iter().zip(self.inverse_bend_at(side, node)).map(|(a, b)| *a + *b).collect()
    }

    /// `C₋₁ = (𝒜₋₁ + B₋₁)(𝒜₋₁ + B₋₁)ᵀ − I` at a node.
    pub fn metric_defect(&self, side: Side, node: usize) -> Vec<T> {
        let n = self.dim();
        let m = self.inverse_gradient(side, node);
        let mut c = matmul(&m, &transpose(&m, n), n);
        for i in 0..n {
            c[i * n + i] -= T::one();
        }
        c
    }

    /// Images `Φ(x)` of the grid nodes of one side.
    pub fn mapped_points(&self, side: Side) -> Vec<Vec<T>> {
        let g = self.grid;
        let mut out = Vec::with_capacity(g.len());
        for t in 0..g.tangential_count() {
            for j in 0..g.normal_points {
                out.push(self.forward(&g.point(side, t, j)));
            }
        }
        out
    }
}

/// Builds `Φ`, its numerical inverse gradient and the derived scalar fields.
pub fn build_map<T: Real>(grid: TwoPhaseGrid<T>, spec: BendSpec<T>) -> Result<Diffeomorphism<T>> {
    let n = grid.dim;
    let rotation = match &spec.rotation {
        Some(r) => {
            if r.len() != n * n {
                return Err(Error::InvalidParameter(format!("rotation needs {} entries", n * n)));
            }
            let rrt = matmul(r, &transpose(r, n), n);
            let off = rrt.iter().zip(identity::<T>(n)).fold(T::zero(), |m, (a, b)| m.max((*a - b).abs()));
            if off > T::lit(1e-10) || det(r, n) <= T::zero() {
                return Err(Error::InvalidParameter("rotation is not orthonormal with det 1".into()));
            }
            r.clone()
        }
        None => identity(n),
    };
    let inverse_rotation = transpose(&rotation, n);
    let delta = spec.amplitude;
    let mut map = Diffeomorphism {
        grid,
        spec,
        rotation,
        inverse_rotation,
        bend: [Vec::new(), Vec::new()],
        inverse_bend: [Vec::new(), Vec::new()],
        jacobian: TwoPhaseScalarField::zeros(grid),
        normal_factor: TwoPhaseScalarField::zeros(grid),
        m1: T::zero(),
        m2: T::zero(),
        jacobian_bounds: (T::infinity(), T::zero()),
        normal_factor_bounds: (T::infinity(), T::zero()),
        composition_error: T::zero(),
    };
    let mut sup_b = T::zero();
    let mut sup_binv = T::zero();
    let mut m2 = T::zero();
    let cell = grid.tangential_cell() * grid.normal_spacing();
    let eps = T::lit(2e-3);
    for side in Side::BOTH {
        let nodes: Vec<(usize, usize)> =
            (0..grid.tangential_count()).flat_map(|t| (0..grid.normal_points).map(move |j| (t, j))).collect();
        let per_node: Vec<Result<(Vec<T>, Vec<T>, T, T, T, T)>> = nodes
            .par_iter()
            .map(|&(t, j)| {
                let x = grid.point(side, t, j);
                let (_, grad, hess) = map.spec.profile.eval(&x);
                // B = δ 𝒜 e_N ⊗ ∇η
                let mut b = vec![T::zero(); n * n];
                for i in 0..n {
                    for k in 0..n {
                        b[i * n + k] = delta * map.rotation[i * n + n - 1] * grad[k];
                    }
                }
                let y = map.forward(&x);
                let mut m = map.inverse_rotation.clone();
                for col in (0..n).filter(|_| delta != T::zero()) {
                    let shifted = |s: T| {
                        let mut yy = y.clone();
                        yy[col] += s;
                        map.inverse(&yy)
                    };
                    let (p2, p1, m1, m2) = (shifted(eps + eps)?, shifted(eps)?, shifted(-eps)?, shifted(-eps - eps)?);
                    for row in 0..n {
                        m[row * n + col] =
                            (-p2[row] + T::lit(8.0) * p1[row] - T::lit(8.0) * m1[row] + m2[row]) / (T::lit(12.0) * eps);
                    }
                }
                let grad_phi: Vec<T> = map.rotation.iter().zip(&b).map(|(a, bb)| *a + *bb).collect();
                let prod = matmul(&grad_phi, &m, n);
                let comp = prod.iter().zip(identity::<T>(n)).fold(T::zero(), |mx, (a, e)| mx.max((*a - e).abs()));
                let jac = det(&grad_phi, n);
                // (Mᵀ e_N)_i = M_{N,i}
                let dn = (0..n).fold(T::zero(), |s, i| s + m[(n - 1) * n + i] * m[(n - 1) * n + i]).sqrt();
                let binv: Vec<T> = m.iter().zip(&map.inverse_rotation).map(|(a, r)| *a - *r).collect();
                let hess_norm = delta * frobenius(&hess);
                Ok((b, binv, jac, dn, comp, hess_norm))
            })
            .collect();
        let mut bs = Vec::with_capacity(grid.len() * n * n);
        let mut binvs = Vec::with_capacity(grid.len() * n * n);
        for (node, r) in per_node.into_iter().enumerate() {
            let (b, binv, jac, dn, comp, hn) = r?;
            sup_b = sup_b.max(frobenius(&b));
            sup_binv = sup_binv.max(frobenius(&binv));
            let w = if node % grid.normal_points == 0 || node % grid.normal_points == grid.normal_points - 1 {
                T::lit(0.5)
            } else {
                T::one()
            };
            m2 += w * cell * hn * hn;
            map.composition_error = map.composition_error.max(comp);
            map.jacobian.side_mut(side)[node] = re(jac);
            map.normal_factor.side_mut(side)[node] = re(dn);
            map.jacobian_bounds = (map.jacobian_bounds.0.min(jac), map.jacobian_bounds.1.max(jac));
            map.normal_factor_bounds = (map.normal_factor_bounds.0.min(dn), map.normal_factor_bounds.1.max(dn));
            bs.extend(b);
            binvs.extend(binv);
        }
        map.bend[side_slot(side)] = bs;
        map.inverse_bend[side_slot(side)] = binvs;
    }
    if sup_b > T::lit(0.5) {
        return Err(Error::M1Exceeded(sup_b.as_f64()));
    }
    map.m1 = sup_b.max(sup_binv);
    map.m2 = m2.sqrt();
    if map.m1 > T::lit(0.5) {
        return Err(Error::M1Exceeded(map.m1.as_f64()));
    }
    if !(map.jacobian_bounds.0 > T::zero() && map.normal_factor_bounds.0 > T::zero()) {
        return Err(Error::InvalidParameter("Jacobian or normal factor not positive".into()));
    }
    if map.composition_error > T::lit(1e-8) {
        return Err(Error::InvalidParameter(format!("composition check failed: {:e}", map.composition_error.as_f64())));
    }
    Ok(map)
}

/// Data of the flat-frame system `ρλJv − div(K∇v − F) = g`, `⟦(K∇v − F)·e_N⟧ = ⟦h⟧`.
#[derive(Debug, Clone)]
pub struct FlatData<T> {
    pub flux: TwoPhaseVectorField<T>,
    pub source: TwoPhaseScalarField<T>,
    pub jump: TwoPhaseScalarField<T>,
}

/// Pulls bent-frame data back to the flat grid: `F = J(𝒜₋₁ + B₋₁) f̃∘Φ`, `g = J g̃∘Φ`, `h = J d h̃∘Φ`.
pub fn transform_data<T, F, G, H>(f: F, g: G, h: H, phi: &Diffeomorphism<T>) -> FlatData<T>
where
    T: Real,
    F: Fn(Side, &[T]) -> Vec<Complex<T>> + Sync,
    G: Fn(Side, &[T]) -> Complex<T> + Sync,
    H: Fn(Side, &[T]) -> Complex<T> + Sync,
{
    let grid = phi.grid;
    let n = grid.dim;
    let mut flux = TwoPhaseVectorField::zeros(grid);
    let mut source = TwoPhaseScalarField::zeros(grid);
    let mut jump = TwoPhaseScalarField::zeros(grid);
    for side in Side::BOTH {
        let vals: Vec<(Vec<Complex<T>>, Complex<T>, Complex<T>)> = (0..grid.len())
            .into_par_iter()
            .map(|node| {
                let (t, j) = (node / grid.normal_points, node % grid.normal_points);
                let y = phi.forward(&grid.point(side, t, j));
                let jac = phi.jacobian.side(side)[node].re;
                let m = phi.inverse_gradient(side, node);
                let fy = f(side, &y);
                let fx: Vec<Complex<T>> = (0..n)
                    .map(|i| (0..n).fold(Complex::new(T::zero(), T::zero()), |s, k| s + fy[k] * m[i * n + k]) * jac)
                    .collect();
                let d = phi.normal_factor.side(side)[node].re;
                (fx, g(side, &y) * jac, h(side, &y) * (jac * d))
            })
            .collect();
        for (node, (fx, gv, hv)) in vals.into_iter().enumerate() {
            for (a, v) in fx.into_iter().enumerate() {
                flux.comps[a].side_mut(side)[node] = v;
            }
            source.side_mut(side)[node] = gv;
            jump.side_mut(side)[node] = hv;
        }
    }
    FlatData { flux, source, jump }
}

/// `𝓕(v) = (1 − J)∇v − J C₋₁ ∇v` and `𝓖_λ(v) = λ(1 − J)v`.
pub fn perturbation_terms<T: Real>(
    v: &TwoPhaseScalarField<T>,
    grad: &TwoPhaseVectorField<T>,
    phi: &Diffeomorphism<T>,
    lam: Option<Complex<T>>,
) -> (TwoPhaseVectorField<T>, TwoPhaseScalarField<T>) {
    let grid = phi.grid;
    let n = grid.dim;
    let mut cal_f = TwoPhaseVectorField::zeros(grid);
    let mut cal_g = TwoPhaseScalarField::zeros(grid);
    let lam = lam.unwrap_or(Complex::new(T::zero(), T::zero()));
    for side in Side::BOTH {
        for node in 0..grid.len() {
            let jac = phi.jacobian.side(side)[node].re;
            let c = phi.metric_defect(side, node);
            for i in 0..n {
                let mut cg = Complex::new(T::zero(), T::zero());
                for k in 0..n {
                    cg += grad.comps[k].side(side)[node] * c[i * n + k];
                }
                let gi = grad.comps[i].side(side)[node];
                cal_f.comps[i].side_mut(side)[node] = gi * (T::one() - jac) - cg * jac;
            }
            cal_g.side_mut(side)[node] = lam * v.side(side)[node] * (T::one() - jac);
        }
    }
    (cal_f, cal_g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BentOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// hard bound on `m1` for the iteration
    pub contraction_threshold: T,
    /// sector floor `λ₁` of the resolvent case
    pub lambda_floor: T,
}

impl<T: Real> Default for BentOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_iter: 100, contraction_threshold: T::lit(0.25), lambda_floor: T::one() }
    }
}

/// Converged flat-frame solution; the bent field is `ṽ(Φ(x)) = v(x)` at [`Diffeomorphism::mapped_points`].
#[derive(Debug, Clone)]
pub struct BentSolution<T> {
    pub flat: FlatSolution<T>,
    pub gradient: TwoPhaseVectorField<T>,
    pub data: FlatData<T>,
    /// relative increments `‖v⁽ʲ⁾ − v⁽ʲ⁻¹⁾‖ / ‖v⁽ʲ⁾‖`, one per iteration
    pub increments: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> BentSolution<T> {
    /// Successive increment ratios, starting at iteration 2.
    pub fn ratios(&self) -> Vec<T> {
        self.increments.windows(2).map(|w| if w[0] > T::zero() { w[1] / w[0] } else { T::zero() }).collect()
    }
}

/// Fixed-point iteration on the flat solver with the perturbation terms of the bent system.
pub fn solve_bent<T, F, G, H>(
    solver: &HalfspaceSolver<T>,
    f: F,
    g: G,
    h: H,
    lam: Option<&ResolventParameter<T>>,
    rho: &DensityPair<T>,
    phi: &Diffeomorphism<T>,
    options: &BentOptions<T>,
) -> Result<BentSolution<T>>
where
    T: Real,
    F: Fn(Side, &[T]) -> Vec<Complex<T>> + Sync,
    G: Fn(Side, &[T]) -> Complex<T> + Sync,
    H: Fn(Side, &[T]) -> Complex<T> + Sync,
{
    solver.grid().check_same(&phi.grid)?;
    if phi.m1 > options.contraction_threshold {
        return Err(Error::M1TooLarge { m1: phi.m1.as_f64(), threshold: options.contraction_threshold.as_f64() });
    }
    if let Some(l) = lam {
        l.require_sector()?;
        if l.lambda.norm() < options.lambda_floor {
            return Err(Error::InvalidParameter(format!(
                "|lambda| = {} below the floor {}",
                l.lambda.norm(),
                options.lambda_floor
            )));
        }
    }
    let data = transform_data(f, g, h, phi);
    let lam_value = lam.map(|l| l.lambda);
    let grid = phi.grid;
    let mut prev = TwoPhaseScalarField::zeros(grid);
    let mut cal_f = TwoPhaseVectorField::zeros(grid);
    let mut cal_g = TwoPhaseScalarField::zeros(grid);
    let mut increments = Vec::new();
    let mut climbing = 0;
    for it in 1..=options.max_iter {
        let flux = data.flux.add(&cal_f);
        let source = data.source.add(&cal_g.map(|s, v| v * if s == Side::Plus { rho.plus } else { rho.minus }));
        let src = lam.map(|_| &source);
        let sol = solver.solve_flat(&flux, src, Some(&data.jump), lam, rho)?;
        let grad = solver.gradient(&sol);
        let norm = sol.v.l2();
        let inc = if norm > T::zero() { sol.v.sub(&prev).l2() / norm } else { T::zero() };
        if let Some(last) = increments.last().copied() {
            if last > T::zero() && inc / last >= T::one() {
                climbing += 1;
                if climbing >= 3 {
                    return Err(Error::NotContracting((inc / last).as_f64()));
                }
            } else {
                climbing = 0;
            }
        }
        increments.push(inc);
        if inc < options.tol {
            return Ok(BentSolution { flat: sol, gradient: grad, data, increments, iterations: it });
        }
        let terms = perturbation_terms(&sol.v, &grad, phi, lam_value);
        cal_f = terms.0;
        cal_g = terms.1;
        prev = sol.v;
    }
    Err(Error::IterationLimit(increments.last().copied().unwrap_or(T::zero()).as_f64()))
}

/// Interface residuals of the flat-frame system: `max |ρ₊v₊ − ρ₋v₋|` and
/// `max |⟦(K∇v − F)·e_N⟧ − ⟦h⟧|` with `K = J(I + C₋₁)`.
pub fn transformed_jumps<T: Real>(sol: &BentSolution<T>, phi: &Diffeomorphism<T>, rho: &DensityPair<T>) -> (T, T) {
    let grid = phi.grid;
    let n = grid.dim;
    let mut rj = T::zero();
    let mut fj = T::zero();
    for t in 0..grid.tangential_count() {
        let node = grid.index(t, 0);
        let a = sol.flat.v.plus[node] * rho.plus - sol.flat.v.minus[node] * rho.minus;
        rj = rj.max(a.norm());
        let mut conormal = [Complex::new(T::zero(), T::zero()); 2];
        for (si, side) in Side::BOTH.iter().enumerate() {
            let jac = phi.jacobian.side(*side)[node].re;
            let c = phi.metric_defect(*side, node);
            let mut q = sol.gradient.comps[n - 1].side(*side)[node] - sol.data.flux.comps[n - 1].side(*side)[node];
            for k in 0..n {
                let ck = c[(n - 1) * n + k];
                q += sol.gradient.comps[k].side(*side)[node] * (ck * jac);
            }
            let gn = sol.gradient.comps[n - 1].side(*side)[node];
            conormal[si] = q + gn * (jac - T::one()) - sol.data.jump.side(*side)[node];
        }
        fj = fj.max((conormal[0] - conormal[1]).norm());
    }
    (rj, fj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TwoPhaseGrid<f64> {
        TwoPhaseGrid::planar(16, 4.0, 33).unwrap()
    }

    #[test]
    fn identity_map() {
        let m = build_map(grid(), BendSpec { profile: BendProfile::Shear, amplitude: 0.0, rotation: None }).unwrap();
        assert_eq!(m.m1, 0.0);
        assert!(m.jacobian.plus.iter().all(|v| (v.re - 1.0).abs() < 1e-15));
        assert!(m.normal_factor.minus.iter().all(|v| (v.re - 1.0).abs() < 1e-12));
        assert!(m.composition_error < 1e-10);
    }

    #[test]
    fn shear_bounds() {
        let m = build_map(grid(), BendSpec { profile: BendProfile::Shear, amplitude: 0.1, rotation: None }).unwrap();
        assert!((m.m1 - 0.1).abs() < 1e-9, "{}", m.m1);
        assert!((m.jacobian_bounds.0 - 1.0).abs() < 1e-14 && (m.jacobian_bounds.1 - 1.0).abs() < 1e-14);
        assert!(m.composition_error < 1e-8);
    }

    #[test]
    fn large_shear_is_rejected() {
        let e =
            build_map(grid(), BendSpec { profile: BendProfile::Shear, amplitude: 0.6, rotation: None }).unwrap_err();
        assert!(matches!(e, Error::M1Exceeded(_)));
    }

    #[test]
    fn bump_has_varying_jacobian() {
        let m = build_map(grid(), BendSpec { profile: BendProfile::Bump, amplitude: 0.1, rotation: None }).unwrap();
        assert!(m.jacobian_bounds.0 < 0.95 && m.jacobian_bounds.1 > 1.05);
        assert!(m.composition_error < 1e-8);
    }

    #[test]
    fn newton_inverse_roundtrip() {
        let m = build_map(grid(), BendSpec { profile: BendProfile::Bump, amplitude: 0.2, rotation: None }).unwrap();
        let x = [0.7, -0.4];
        let back = m.inverse(&m.forward(&x)).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-14 && (back[1] - x[1]).abs() < 1e-13);
    }

    #[test]
    fn rotation_must_be_orthonormal() {
        let spec = BendSpec { profile: BendProfile::Shear, amplitude: 0.1, rotation: Some(vec![1.0, 0.1, 0.0, 1.0]) };
        assert!(build_map(grid(), spec).is_err());
    }
}
