//! Second-order finite-volume oracles for bounded transmission problems: a flat interface
//! on the truncated slab, a bent one through variable coefficients, and a circle on a polar grid.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Side, TangentialFft, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField};
use crate::linalg::{gmres, BandLu, BandMatrix, DenseMatrix, GmresOutcome};
use crate::scalar::{cz, re, FftPlan, Real};
use crate::spectral_core::DensityPair;

pub(crate) fn density<T: Real>(rho: &DensityPair<T>, side: Side) -> T {
    match side {
        Side::Plus => rho.plus,
        Side::Minus => rho.minus,
    }
}

fn residual_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(1e4))
}

/// Data of a flat or bent system; missing entries are zero.
#[derive(Clone, Copy, Default)]
pub struct OracleData<'a, T> {
    pub flux: Option<&'a TwoPhaseVectorField<T>>,
    pub source: Option<&'a TwoPhaseScalarField<T>>,
    /// `ρ₊v₊ − ρ₋v₋` on the interface plane
    pub rho_jump: Option<&'a [Complex<T>]>,
    /// `⟦n·(∇v − f)⟧` on the interface plane
    pub flux_jump: Option<&'a [Complex<T>]>,
    /// Dirichlet values, only the outermost normal samples are read
    pub outer: Option<&'a TwoPhaseScalarField<T>>,
}

/// Position of a normal node in the per-mode ordering (minus far to near, then plus).
fn slab_position(side: Side, j: usize, n: usize) -> usize {
    match side {
        Side::Minus => n - 1 - j,
        Side::Plus => n + j,
    }
}

/// Per-mode matrix of the flat slab: interior rows, the half-cell balance at `(plus, 0)`,
/// the density row at `(minus, 0)` and Dirichlet rows at both ends.
pub fn flat_mode_matrix<T: Real>(kappa2: T, n: usize, h: T, rho: &DensityPair<T>, lam: Complex<T>) -> BandMatrix<T> {
    let mut a = BandMatrix::zeros(2 * n, 2, 2);
    let inv_h2 = T::one() / (h * h);
    let half = h * T::lit(0.5);
    for side in Side::BOTH {
        let r = density(rho, side);
        let p = |j| slab_position(side, j, n);
        for j in 1..n - 1 {
            a.add_to(p(j), p(j), lam * r + kappa2 + inv_h2 * T::lit(2.0));
            a.add_to(p(j), p(j - 1), re(-inv_h2));
            a.add_to(p(j), p(j + 1), re(-inv_h2));
        }
        a.add_to(p(n - 1), p(n - 1), re(T::one()));
        let b = slab_position(Side::Plus, 0, n);
        a.add_to(b, p(0), (lam * r + kappa2) * half + T::one() / h);
        a.add_to(b, p(1), re(-T::one() / h));
    }
    let d = slab_position(Side::Minus, 0, n);
    a.add_to(d, slab_position(Side::Plus, 0, n), re(rho.plus));
    a.add_to(d, d, re(-rho.minus));
    a
}

fn tangential_kappa2<T: Real>(grid: &TwoPhaseGrid<T>, t: usize) -> T {
    let d = grid.tangential_spacing();
    let two = T::lit(2.0);
    grid.wavenumber(t).iter().fold(T::zero(), |s, k| s + (two - two * (*k * d).cos()) / (d * d))
}

/// Neighbour table `[axis] -> [backward, forward]` for every tangential index.
fn neighbour_table<T: Real>(grid: &TwoPhaseGrid<T>) -> Vec<Vec<[usize; 2]>> {
    let s = grid.tangential_size;
    (0..grid.tangential_count())
        .map(|t| {
            let m = grid.tangential_multi(t);
            (0..m.len())
                .map(|axis| {
                    let flat = |v: usize| {
                        let mut mm = m.clone();
                        mm[axis] = v;
                        mm.iter().fold(0, |acc, x| acc * s + x)
                    };
                    [flat((m[axis] + s - 1) % s), flat((m[axis] + 1) % s)]
                })
                .collect()
        })
        .collect()
}

pub fn flatten<T: Real>(f: &TwoPhaseScalarField<T>) -> Vec<Complex<T>> {
    let mut out = f.plus.clone();
    out.extend_from_slice(&f.minus);
    out
}

pub fn unflatten<T: Real>(grid: TwoPhaseGrid<T>, x: &[Complex<T>]) -> TwoPhaseScalarField<T> {
    let n = grid.len();
    TwoPhaseScalarField { grid, plus: x[..n].to_vec(), minus: x[n..2 * n].to_vec() }
}

/// Flat interface on the slab `|x_N| ≤ L` with Dirichlet rows at `x_N = ±L`.
pub struct FlatOracle<T> {
    grid: TwoPhaseGrid<T>,
    rho: DensityPair<T>,
    lam: Complex<T>,
    fft: TangentialFft<T>,
    neighbours: Vec<Vec<[usize; 2]>>,
    factors: Vec<BandLu<T>>,
}

impl<T: Real> FlatOracle<T> {
    pub fn new(grid: TwoPhaseGrid<T>, rho: DensityPair<T>, lam: Option<Complex<T>>) -> Result<Self> {
        let lam = lam.unwrap_or(cz());
        let n = grid.normal_points;
        let h = grid.normal_spacing();
        let factors = (0..grid.tangential_count())
            .into_par_iter()
            .map(|t| flat_mode_matrix(tangential_kappa2(&grid, t), n, h, &rho, lam).lu())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, rho, lam, fft: TangentialFft::new(&grid), neighbours: neighbour_table(&grid), factors })
    }

    pub fn grid(&self) -> &TwoPhaseGrid<T> {
        &self.grid
    }

    pub fn lambda(&self) -> Complex<T> {
        self.lam
    }

    pub fn densities(&self) -> &DensityPair<T> {
        &self.rho
    }

    /// `Σ_a (2v − v(+e_a) − v(−e_a)) / Δ²` at `(t, j)`.
    fn tangential_second(&self, v: &[Complex<T>], t: usize, j: usize) -> Complex<T> {
        let g = &self.grid;
        let d = g.tangential_spacing();
        let c = v[g.index(t, j)] * T::lit(2.0);
        self.neighbours[t].iter().fold(cz(), |s, [b, f]| s + (c - v[g.index(*b, j)] - v[g.index(*f, j)]) / (d * d))
    }

    /// Central tangential divergence of the first `dim − 1` components at `(t, j)`.
    fn tangential_divergence(&self, f: &TwoPhaseVectorField<T>, side: Side, t: usize, j: usize) -> Complex<T> {
        let g = &self.grid;
        let d = g.tangential_spacing();
        let mut s = cz();
        for (axis, [b, fw]) in self.neighbours[t].iter().enumerate() {
            let c = f.comps[axis].side(side);
            s += (c[g.index(*fw, j)] - c[g.index(*b, j)]) / (d * T::lit(2.0));
        }
        s
    }

    /// The discrete operator in row form.
    pub fn apply(&self, v: &TwoPhaseScalarField<T>) -> TwoPhaseScalarField<T> {
        let g = self.grid;
        let n = g.normal_points;
        let h = g.normal_spacing();
        let inv_h2 = T::one() / (h * h);
        let half = h * T::lit(0.5);
        let mut out = TwoPhaseScalarField::zeros(g);
        let mut balance = vec![cz::<T>(); g.tangential_count()];
        for side in Side::BOTH {
            let r = density(&self.rho, side);
            let vs = v.side(side);
            let mut rows = vec![cz::<T>(); g.len()];
            for t in 0..g.tangential_count() {
                for j in 1..n - 1 {
                    let i = g.index(t, j);
                    rows[i] = vs[i] * (self.lam * r + inv_h2 * T::lit(2.0)) - (vs[i - 1] + vs[i + 1]) * inv_h2
                        + self.tangential_second(vs, t, j);
                }
                rows[g.index(t, n - 1)] = vs[g.index(t, n - 1)];
                let i0 = g.index(t, 0);
                balance[t] +=
                    (vs[i0] * self.lam * r + self.tangential_second(vs, t, 0)) * half + (vs[i0] - vs[i0 + 1]) / h;
            }
            *out.side_mut(side) = rows;
        }
        for (t, b) in balance.into_iter().enumerate() {
            let i0 = g.index(t, 0);
            out.plus[i0] = b;
            out.minus[i0] = v.plus[i0] * self.rho.plus - v.minus[i0] * self.rho.minus;
        }
        out
    }

    /// Right-hand side in row form.
    pub fn rhs(&self, data: &OracleData<'_, T>) -> Result<TwoPhaseScalarField<T>> {
        let g = self.grid;
        for f in [data.source, data.outer].into_iter().flatten() {
            g.check_same(&f.grid)?;
        }
        if let Some(f) = data.flux {
            g.check_same(&f.grid)?;
        }
        let tc = g.tangential_count();
        for tr in [data.rho_jump, data.flux_jump].into_iter().flatten() {
            if tr.len() != tc {
                return Err(Error::GridMismatch("interface data does not match the tangential grid".into()));
            }
        }
        let n = g.normal_points;
        let h = g.normal_spacing();
        let half = h * T::lit(0.5);
        let dim = g.dim;
        let mut out = TwoPhaseScalarField::zeros(g);
        let mut balance = vec![cz::<T>(); tc];
        for side in Side::BOTH {
            let sg = side.sign::<T>();
            let mut rows = vec![cz::<T>(); g.len()];
            let local = |t: usize, j: usize| {
                let mut s = data.source.map_or(cz(), |src| src.side(side)[g.index(t, j)]);
                if let Some(f) = data.flux {
                    s -= self.tangential_divergence(f, side, t, j);
                }
                s
            };
            let normal =
                |t: usize, j: usize| data.flux.map_or(cz(), |f| f.comps[dim - 1].side(side)[g.index(t, j)] * sg);
            for t in 0..tc {
                for j in 1..n - 1 {
                    rows[g.index(t, j)] = local(t, j) - (normal(t, j + 1) - normal(t, j - 1)) / (h * T::lit(2.0));
                }
                rows[g.index(t, n - 1)] = data.outer.map_or(cz(), |b| b.side(side)[g.index(t, n - 1)]);
                balance[t] += local(t, 0) * half - (normal(t, 0) + normal(t, 1)) * T::lit(0.5);
            }
            *out.side_mut(side) = rows;
        }
        for t in 0..tc {
            let i0 = g.index(t, 0);
            out.plus[i0] = balance[t] - data.flux_jump.map_or(cz(), |hj| hj[t]);
            out.minus[i0] = data.rho_jump.map_or(cz(), |g1| g1[t]);
        }
        Ok(out)
    }

    /// Inverts the operator on a row-form right-hand side.
    pub fn solve_rows(&self, rows: &TwoPhaseScalarField<T>) -> TwoPhaseScalarField<T> {
        let g = self.grid;
        let n = g.normal_points;
        let mut plus = rows.plus.clone();
        let mut minus = rows.minus.clone();
        self.fft.forward(&mut plus);
        self.fft.forward(&mut minus);
        let sols: Vec<Vec<Complex<T>>> = (0..g.tangential_count())
            .into_par_iter()
            .map(|t| {
                let mut x = vec![cz(); 2 * n];
                for j in 0..n {
                    x[slab_position(Side::Plus, j, n)] = plus[g.index(t, j)];
                    x[slab_position(Side::Minus, j, n)] = minus[g.index(t, j)];
                }
                self.factors[t].solve(&x)
            })
            .collect();
        for (t, x) in sols.iter().enumerate() {
            for j in 0..n {
                plus[g.index(t, j)] = x[slab_position(Side::Plus, j, n)];
                minus[g.index(t, j)] = x[slab_position(Side::Minus, j, n)];
            }
        }
        self.fft.inverse(&mut plus);
        self.fft.inverse(&mut minus);
        TwoPhaseScalarField { grid: g, plus, minus }
    }

    pub fn solve(&self, data: &OracleData<'_, T>) -> Result<TwoPhaseScalarField<T>> {
        let rows = self.rhs(data)?;
        let v = self.solve_rows(&rows);
        let res = self.apply(&v).sub(&rows).l2();
        let scale = rows.l2();
        if !(res <= residual_tolerance::<T>() * scale) {
            return Err(Error::SolverFailed(format!("flat oracle residual {:e}", (res / scale).as_f64())));
        }
        Ok(v)
    }

    /// Dense real-space matrix of [`apply`](Self::apply), for small grids only.
    pub fn dense(&self) -> DenseMatrix<T> {
        let size = 2 * self.grid.len();
        let mut a = DenseMatrix::zeros(size, size);
        let mut e = vec![cz::<T>(); size];
        for c in 0..size {
            e[c] = re(T::one());
            let col = flatten(&self.apply(&unflatten(self.grid, &e)));
            for (r, v) in col.into_iter().enumerate() {
                a.set(r, c, v);
            }
            e[c] = cz();
        }
        a
    }
}

/// Coefficients of `ρλJv − div(K∇v − F) = g` in the flat frame, `K` symmetric 2×2.
#[derive(Debug, Clone)]
pub struct BentCoefficients<T> {
    pub k11: TwoPhaseScalarField<T>,
    pub k12: TwoPhaseScalarField<T>,
    pub k22: TwoPhaseScalarField<T>,
    pub jacobian: TwoPhaseScalarField<T>,
}

impl<T: Real> BentCoefficients<T> {
    pub fn identity(grid: TwoPhaseGrid<T>) -> Self {
        let one = TwoPhaseScalarField::from_fn(grid, |_, _| re(T::one()));
        Self { k11: one.clone(), k12: TwoPhaseScalarField::zeros(grid), k22: one.clone(), jacobian: one }
    }
}

/// Variable-coefficient slab in 2D, solved by GMRES right-preconditioned with the flat oracle.
pub struct BentOracle<T> {
    flat: FlatOracle<T>,
    coef: BentCoefficients<T>,
    pub tol: T,
    pub restart: usize,
    pub max_iter: usize,
}

impl<T: Real> BentOracle<T> {
    pub fn new(
        grid: TwoPhaseGrid<T>,
        rho: DensityPair<T>,
        lam: Option<Complex<T>>,
        coef: BentCoefficients<T>,
    ) -> Result<Self> {
        if grid.dim != 2 {
            return Err(Error::InvalidParameter("the bent oracle is two-dimensional".into()));
        }
        for f in [&coef.k11, &coef.k12, &coef.k22, &coef.jacobian] {
            grid.check_same(&f.grid)?;
        }
        Ok(Self { flat: FlatOracle::new(grid, rho, lam)?, coef, tol: T::lit(1e-11), restart: 80, max_iter: 4000 })
    }

    pub fn flat(&self) -> &FlatOracle<T> {
        &self.flat
    }

    pub fn apply(&self, v: &TwoPhaseScalarField<T>) -> TwoPhaseScalarField<T> {
        let g = self.flat.grid;
        let n = g.normal_points;
        let s = g.tangential_size;
        let h = g.normal_spacing();
        let d = g.tangential_spacing();
        let half = T::lit(0.5);
        let lam = self.flat.lam;
        let c = &self.coef;
        let mut out = TwoPhaseScalarField::zeros(g);
        let mut balance = vec![cz::<T>(); s];
        for side in Side::BOTH {
            let sg = side.sign::<T>();
            let r = density(&self.flat.rho, side);
            let v = v.side(side);
            let (k11, k12, k22, jac) = (c.k11.side(side), c.k12.side(side), c.k22.side(side), c.jacobian.side(side));
            let at = |i: usize, j: usize| g.index(i, j);
            let cross = |i: usize, j: usize| k12[at(i, j)] * sg;
            let mut rows = vec![cz::<T>(); g.len()];
            for i in 0..s {
                let ip = (i + 1) % s;
                let im = (i + s - 1) % s;
                let tang = |j: usize| {
                    let kp = (k11[at(i, j)] + k11[at(ip, j)]) * half;
                    let km = (k11[at(i, j)] + k11[at(im, j)]) * half;
                    (kp * (v[at(ip, j)] - v[at(i, j)]) - km * (v[at(i, j)] - v[at(im, j)])) / (d * d)
                };
                for j in 1..n - 1 {
                    let kp = (k22[at(i, j)] + k22[at(i, j + 1)]) * half;
                    let km = (k22[at(i, j)] + k22[at(i, j - 1)]) * half;
                    let normal =
                        (kp * (v[at(i, j + 1)] - v[at(i, j)]) - km * (v[at(i, j)] - v[at(i, j - 1)])) / (h * h);
                    let w = T::one() / (d * h * T::lit(4.0));
                    let c1 = (cross(ip, j) * (v[at(ip, j + 1)] - v[at(ip, j - 1)])
                        - cross(im, j) * (v[at(im, j + 1)] - v[at(im, j - 1)]))
                        * w;
                    let c2 = (cross(i, j + 1) * (v[at(ip, j + 1)] - v[at(im, j + 1)])
                        - cross(i, j - 1) * (v[at(ip, j - 1)] - v[at(im, j - 1)]))
                        * w;
                    rows[at(i, j)] = lam * r * jac[at(i, j)] * v[at(i, j)] - tang(j) - normal - c1 - c2;
                }
                rows[at(i, n - 1)] = v[at(i, n - 1)];
                let one_sided = |ii: usize| {
                    (v[at(ii, 1)] * T::lit(4.0) - v[at(ii, 0)] * T::lit(3.0) - v[at(ii, 2)]) / (h * T::lit(2.0))
                };
                let cross_t = (cross(ip, 0) * one_sided(ip) - cross(im, 0) * one_sided(im)) / (d * T::lit(2.0));
                let kn = (k22[at(i, 0)] + k22[at(i, 1)]) * half;
                let kc = (cross(i, 0) + cross(i, 1)) * half;
                let dt = ((v[at(ip, 0)] - v[at(im, 0)]) + (v[at(ip, 1)] - v[at(im, 1)])) / (d * T::lit(4.0));
                let flux = kn * (v[at(i, 1)] - v[at(i, 0)]) / h + kc * dt;
                balance[i] += (lam * r * jac[at(i, 0)] * v[at(i, 0)] - tang(0) - cross_t) * (h * half) - flux;
            }
            *out.side_mut(side) = rows;
        }
        for (i, b) in balance.into_iter().enumerate() {
            let i0 = g.index(i, 0);
            out.plus[i0] = b;
            out.minus[i0] = v.plus[i0] * self.flat.rho.plus - v.minus[i0] * self.flat.rho.minus;
        }
        out
    }

    pub fn solve(&self, data: &OracleData<'_, T>) -> Result<(TwoPhaseScalarField<T>, GmresOutcome<T>)> {
        let g = self.flat.grid;
        let rows = self.flat.rhs(data)?;
        let b = flatten(&rows);
        let op = |y: &[Complex<T>]| flatten(&self.apply(&self.flat.solve_rows(&unflatten(g, y))));
        let out = gmres(op, &b, self.restart, self.tol, self.max_iter)?;
        let v = self.flat.solve_rows(&unflatten(g, &out.x));
        Ok((v, out))
    }
}

/// Polar grid `r_i = i·h` with a circular interface at node `interface` (doubled) and the
/// outer circle at node `outer`. The plus phase is the inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGrid<T> {
    pub spacing: T,
    pub interface: usize,
    pub outer: usize,
    pub angles: usize,
}

impl<T: Real> PolarGrid<T> {
    pub fn new(spacing: T, interface: usize, outer: usize, angles: usize) -> Result<Self> {
        if interface < 2 || outer < interface + 2 {
            return Err(Error::InterfaceUnresolved(format!(
                "interface node {interface} and outer node {outer} leave no interior cells"
            )));
        }
        if angles < 4 || !(spacing > T::zero()) {
            return Err(Error::InvalidGrid(format!("{angles} angles, spacing {spacing}")));
        }
        Ok(Self { spacing, interface, outer, angles })
    }

    pub fn radius(&self, i: usize) -> T {
        self.spacing * T::from_usize_lossy(i)
    }

    pub fn interface_radius(&self) -> T {
        self.radius(self.interface)
    }

    pub fn outer_radius(&self) -> T {
        self.radius(self.outer)
    }

    pub fn angle_step(&self) -> T {
        T::TAU() / T::from_usize_lossy(self.angles)
    }

    pub fn angle(&self, m: usize) -> T {
        self.angle_step() * T::from_usize_lossy(m)
    }

    pub fn rings(&self, side: Side) -> std::ops::RangeInclusive<usize> {
        match side {
            Side::Plus => 0..=self.interface,
            Side::Minus => self.interface..=self.outer,
        }
    }

    pub fn side_len(&self, side: Side) -> usize {
        let r = self.rings(side);
        (r.end() - r.start() + 1) * self.angles
    }

    pub fn index(&self, side: Side, i: usize, m: usize) -> usize {
        (i - self.rings(side).start()) * self.angles + m
    }

    /// Control volume per unit angle and radial width of ring `i`.
    pub fn cell(&self, side: Side, i: usize) -> (T, T) {
        let h = self.spacing;
        let half = h * T::lit(0.5);
        let quarter = h * T::lit(0.25);
        let r = self.radius(i);
        if i == 0 {
            (h * h / T::lit(8.0), half)
        } else if i == self.interface {
            match side {
                Side::Plus => (half * (r - quarter), half),
                Side::Minus => (half * (r + quarter), half),
            }
        } else if i == self.outer {
            (half * (r - quarter), half)
        } else {
            (r * h, h)
        }
    }

    /// Area weight of one node.
    pub fn measure(&self, side: Side, i: usize) -> T {
        self.cell(side, i).0 * self.angle_step()
    }

    pub fn point(&self, i: usize, m: usize) -> [T; 2] {
        let (r, th) = (self.radius(i), self.angle(m));
        [r * th.cos(), r * th.sin()]
    }
}

/// Real field on a [`PolarGrid`]; the origin ring holds equal copies.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField<T> {
    pub grid: PolarGrid<T>,
    pub plus: Vec<T>,
    pub minus: Vec<T>,
}

impl<T: Real> PolarField<T> {
    pub fn zeros(grid: PolarGrid<T>) -> Self {
        Self {
            grid,
            plus: vec![T::zero(); grid.side_len(Side::Plus)],
            minus: vec![T::zero(); grid.side_len(Side::Minus)],
        }
    }

    /// Samples `f(side, r, θ)`.
    pub fn from_fn<F: Fn(Side, T, T) -> T>(grid: PolarGrid<T>, f: F) -> Self {
        let mut out = Self::zeros(grid);
        for side in Side::BOTH {
            for i in grid.rings(side) {
                for m in 0..grid.angles {
                    let v = if i == 0 { f(side, T::zero(), T::zero()) } else { f(side, grid.radius(i), grid.angle(m)) };
                    out.side_mut(side)[grid.index(side, i, m)] = v;
                }
            }
        }
        out
    }

    pub fn side(&self, side: Side) -> &[T] {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut Vec<T> {
        match side {
            Side::Plus => &mut self.plus,
            Side::Minus => &mut self.minus,
        }
    }

    pub fn get(&self, side: Side, i: usize, m: usize) -> T {
        self.side(side)[self.grid.index(side, i, m)]
    }

    pub fn ring(&self, side: Side, i: usize) -> &[T] {
        let s = self.grid.index(side, i, 0);
        &self.side(side)[s..s + self.grid.angles]
    }

    pub fn zip_with<F: Fn(T, T) -> T>(&self, other: &Self, f: F) -> Self {
        let z = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
        Self { grid: self.grid, plus: z(&self.plus, &other.plus), minus: z(&self.minus, &other.minus) }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|_, _, v| v * a)
    }

    /// Applies `f(side, i, value)` node by node.
    pub fn map<F: Fn(Side, usize, T) -> T>(&self, f: F) -> Self {
        let mut out = self.clone();
        for side in Side::BOTH {
            for i in self.grid.rings(side) {
                for m in 0..self.grid.angles {
                    let k = self.grid.index(side, i, m);
                    out.side_mut(side)[k] = f(side, i, self.side(side)[k]);
                }
            }
        }
        out
    }

    /// `Σ μ a b` over both phases.
    pub fn inner(&self, other: &Self) -> T {
        let mut s = T::zero();
        for side in Side::BOTH {
            for i in self.grid.rings(side) {
                let w = self.grid.measure(side, i);
                let a = self.ring(side, i);
                let b = other.ring(side, i);
                s += w * a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y);
            }
        }
        s
    }

    pub fn integral(&self) -> T {
        let mut s = T::zero();
        for side in Side::BOTH {
            for i in self.grid.rings(side) {
                s += self.grid.measure(side, i) * self.ring(side, i).iter().copied().sum::<T>();
            }
        }
        s
    }

    pub fn l2(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.plus.iter().chain(&self.minus).fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterCondition {
    Dirichlet,
    /// Exact exterior Laplace map per angular mode; the mean mode is pinned to zero when λ = 0.
    Absorbing,
}

/// Radial and angular flux components `(F_r, F_θ)` at `(side, r, θ)`.
pub type PolarFlux<'a, T> = &'a (dyn Fn(Side, T, T) -> [T; 2] + Sync);

/// Data of a circle system; missing entries are zero.
#[derive(Clone, Copy, Default)]
pub struct PolarData<'a, T> {
    pub source: Option<&'a PolarField<T>>,
    pub flux: Option<PolarFlux<'a, T>>,
    /// `ρ₊v₊ − ρ₋v₋` per angle
    pub rho_jump: Option<&'a [T]>,
    /// `⟦e_r·(∇v − F)⟧` per angle
    pub flux_jump: Option<&'a [T]>,
    /// Dirichlet values per angle
    pub outer: Option<&'a [T]>,
}

/// Circular interface on a polar grid, solved per angular mode.
pub struct CircleOracle<T> {
    grid: PolarGrid<T>,
    rho: DensityPair<T>,
    lam: T,
    outer: OuterCondition,
    fwd: FftPlan<T>,
    inv: FftPlan<T>,
    modes: Vec<(BandMatrix<T>, BandLu<T>)>,
}

impl<T: Real> CircleOracle<T> {
    pub fn new(grid: PolarGrid<T>, rho: DensityPair<T>, lam: T, outer: OuterCondition) -> Result<Self> {
        if lam < T::zero() {
            return Err(Error::InvalidParameter(format!("circle oracle needs lambda >= 0, got {lam}")));
        }
        let mut me = Self {
            grid,
            rho,
            lam,
            outer,
            fwd: T::fft_plan(grid.angles, false),
            inv: T::fft_plan(grid.angles, true),
            modes: Vec::new(),
        };
        me.modes = (0..grid.angles)
            .into_par_iter()
            .map(|k| {
                let a = me.mode_matrix(k);
                let lu = a.clone().lu()?;
                Ok((a, lu))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(me)
    }

    pub fn grid(&self) -> &PolarGrid<T> {
        &self.grid
    }

    pub fn densities(&self) -> &DensityPair<T> {
        &self.rho
    }

    /// Number of unknowns per angular mode.
    pub fn mode_size(&self) -> usize {
        self.grid.outer + 2
    }

    /// Solves one angular mode given its right-hand side in node-position order.
    pub fn solve_mode(&self, k: usize, rhs: &[Complex<T>]) -> Vec<Complex<T>> {
        self.modes[k].1.solve(rhs)
    }

    /// Position of ring `i` of `side` in a mode vector.
    pub fn node_position(&self, side: Side, i: usize) -> usize {
        match side {
            Side::Plus => i,
            Side::Minus => i + 1,
        }
    }

    fn kappa2(&self, k: usize) -> T {
        let d = self.grid.angle_step();
        let two = T::lit(2.0);
        (two - two * (T::from_usize_lossy(k) * d).cos()) / (d * d)
    }

    fn pinned(&self, k: usize) -> bool {
        self.outer == OuterCondition::Absorbing && self.lam == T::zero() && k == 0
    }

    /// Band matrix of angular mode `k`.
    pub fn mode_matrix(&self, k: usize) -> BandMatrix<T> {
        let g = &self.grid;
        let h = g.spacing;
        let (sig, out) = (g.interface, g.outer);
        let k2 = self.kappa2(k);
        let lam = self.lam;
        let mut a = BandMatrix::zeros(out + 2, 2, 2);
        let mut add = |r: usize, c: usize, v: T| a.add_to(r, c, re(v));
        let half = T::lit(0.5);
        if k == 0 {
            let (v0, _) = g.cell(Side::Plus, 0);
            add(0, 0, v0 * self.rho.plus * lam + half);
            add(0, 1, -half);
        } else {
            add(0, 0, T::one());
        }
        for side in Side::BOTH {
            let rho = density(&self.rho, side);
            for i in g.rings(side) {
                if i == 0 || i == sig || i == out {
                    continue;
                }
                let p = self.node_position(side, i);
                let (vol, w) = g.cell(side, i);
                let r = g.radius(i);
                let (rp, rm) = (r + h * half, r - h * half);
                add(p, p, vol * rho * lam + w / r * k2 + (rp + rm) / h);
                add(p, p - 1, -rm / h);
                add(p, p + 1, -rp / h);
            }
        }
        let rs = g.interface_radius();
        let b = self.node_position(Side::Plus, sig);
        for side in Side::BOTH {
            let rho = density(&self.rho, side);
            let (vol, w) = g.cell(side, sig);
            let p = self.node_position(side, sig);
            let (face, nb) = match side {
                Side::Plus => (rs - h * half, p - 1),
                Side::Minus => (rs + h * half, p + 1),
            };
            add(b, p, vol * rho * lam + w / rs * k2 + face / h);
            add(b, nb, -face / h);
        }
        let d = self.node_position(Side::Minus, sig);
        add(d, b, self.rho.plus);
        add(d, d, -self.rho.minus);
        let p = self.node_position(Side::Minus, out);
        match self.outer {
            OuterCondition::Dirichlet => add(p, p, T::one()),
            OuterCondition::Absorbing if self.pinned(k) => add(p, p, T::one()),
            OuterCondition::Absorbing => {
                let (vol, w) = g.cell(Side::Minus, out);
                let big = g.outer_radius();
                let face = big - h * half;
                let dtn = (k2 + self.rho.minus * lam * big * big).sqrt();
                add(p, p, vol * self.rho.minus * lam + w / big * k2 + face / h + dtn);
                add(p, p - 1, -face / h);
            }
        }
        a
    }

    fn to_modes(&self, f: &PolarField<T>) -> Vec<Vec<Complex<T>>> {
        let g = &self.grid;
        let mut rings = Vec::with_capacity(g.outer + 2);
        for side in Side::BOTH {
            for i in g.rings(side) {
                let mut buf: Vec<Complex<T>> = f.ring(side, i).iter().map(|v| re(*v)).collect();
                self.fwd.process(&mut buf);
                rings.push(buf);
            }
        }
        rings
    }

    fn from_modes(&self, rings: Vec<Vec<Complex<T>>>) -> PolarField<T> {
        let g = self.grid;
        let scale = T::one() / T::from_usize_lossy(g.angles);
        let mut out = PolarField::zeros(g);
        let mut it = rings.into_iter();
        for side in Side::BOTH {
            for i in g.rings(side) {
                let mut buf = it.next().unwrap();
                self.inv.process(&mut buf);
                let s = g.index(side, i, 0);
                for (m, v) in buf.into_iter().enumerate() {
                    out.side_mut(side)[s + m] = v.re * scale;
                }
            }
        }
        out
    }

    /// Applies the per-mode matrices; `mode_op(k, x)` maps mode vectors.
    fn per_mode<F: Fn(usize, &[Complex<T>]) -> Vec<Complex<T>> + Sync>(
        &self,
        f: &PolarField<T>,
        mode_op: F,
    ) -> PolarField<T> {
        let rings = self.to_modes(f);
        let size = self.grid.outer + 2;
        let cols: Vec<Vec<Complex<T>>> = (0..self.grid.angles)
            .into_par_iter()
            .map(|k| {
                let x: Vec<Complex<T>> = (0..size).map(|p| rings[p][k]).collect();
                mode_op(k, &x)
            })
            .collect();
        let mut out = rings;
        for (k, col) in cols.into_iter().enumerate() {
            for (p, v) in col.into_iter().enumerate() {
                out[p][k] = v;
            }
        }
        self.from_modes(out)
    }

    /// The discrete operator in row form (rows integrated per unit angle).
    pub fn apply(&self, v: &PolarField<T>) -> PolarField<T> {
        self.per_mode(v, |k, x| self.modes[k].0.mul_vec(x))
    }

    pub fn solve_rows(&self, rows: &PolarField<T>) -> PolarField<T> {
        self.per_mode(rows, |k, x| self.modes[k].1.solve(x))
    }

    pub fn rhs(&self, data: &PolarData<'_, T>) -> Result<PolarField<T>> {
        let g = self.grid;
        if let Some(s) = data.source {
            if s.grid != g {
                return Err(Error::GridMismatch("source is on a different polar grid".into()));
            }
        }
        for tr in [data.rho_jump, data.flux_jump, data.outer].into_iter().flatten() {
            if tr.len() != g.angles {
                return Err(Error::GridMismatch("interface data does not match the angular grid".into()));
            }
        }
        let h = g.spacing;
        let half = T::lit(0.5);
        let dth = g.angle_step();
        let nth = g.angles;
        let (sig, out) = (g.interface, g.outer);
        let flux = |side: Side, r: T, th: T| data.flux.map_or([T::zero(); 2], |f| f(side, r, th));
        let src = |side: Side, i: usize, m: usize| data.source.map_or(T::zero(), |s| s.get(side, i, m));
        // net angular outflow of F_θ through the two angular faces, per unit angle
        let angular = |side: Side, i: usize, m: usize| {
            let (_, w) = g.cell(side, i);
            let r = g.radius(i);
            let th = g.angle(m);
            w * (flux(side, r, th + dth * half)[1] - flux(side, r, th - dth * half)[1]) / dth
        };
        let radial = |side: Side, r: T, m: usize| r * flux(side, r, g.angle(m))[0];
        let mut rows = PolarField::zeros(g);
        let (v0, _) = g.cell(Side::Plus, 0);
        let src0 = (0..nth).fold(T::zero(), |s, m| s + src(Side::Plus, 0, m)) / T::from_usize_lossy(nth);
        let out0 = (0..nth).fold(T::zero(), |s, m| s + radial(Side::Plus, h * half, m)) / T::from_usize_lossy(nth);
        let r0 = v0 * src0 - out0;
        for m in 0..nth {
            rows.plus[g.index(Side::Plus, 0, m)] = r0;
        }
        for side in Side::BOTH {
            for i in g.rings(side) {
                if i == 0 || i == sig || i == out {
                    continue;
                }
                let (vol, _) = g.cell(side, i);
                let r = g.radius(i);
                for m in 0..nth {
                    let net = radial(side, r + h * half, m) - radial(side, r - h * half, m);
                    rows.side_mut(side)[g.index(side, i, m)] = vol * src(side, i, m) - net - angular(side, i, m);
                }
            }
        }
        let rs = g.interface_radius();
        for m in 0..nth {
            let mut b = T::zero();
            for side in Side::BOTH {
                let (vol, _) = g.cell(side, sig);
                b += vol * src(side, sig, m) - angular(side, sig, m);
            }
            b += radial(Side::Plus, rs - h * half, m) - radial(Side::Minus, rs + h * half, m);
            b += rs * data.flux_jump.map_or(T::zero(), |hj| hj[m]);
            rows.plus[g.index(Side::Plus, sig, m)] = b;
            rows.minus[g.index(Side::Minus, sig, m)] = data.rho_jump.map_or(T::zero(), |g1| g1[m]);
        }
        let big = g.outer_radius();
        let mut ring: Vec<T> = (0..nth)
            .map(|m| match self.outer {
                OuterCondition::Dirichlet => data.outer.map_or(T::zero(), |b| b[m]),
                OuterCondition::Absorbing => {
                    let (vol, _) = g.cell(Side::Minus, out);
                    vol * src(Side::Minus, out, m) - angular(Side::Minus, out, m)
                        + radial(Side::Minus, big - h * half, m)
                        - radial(Side::Minus, big, m)
                }
            })
            .collect();
        if self.pinned(0) {
            let mean = ring.iter().copied().sum::<T>() / T::from_usize_lossy(nth);
            ring.iter_mut().for_each(|v| *v -= mean);
        }
        for (m, v) in ring.into_iter().enumerate() {
            rows.minus[g.index(Side::Minus, out, m)] = v;
        }
        Ok(rows)
    }

    pub fn solve(&self, data: &PolarData<'_, T>) -> Result<PolarField<T>> {
        let rows = self.rhs(data)?;
        let v = self.solve_rows(&rows);
        let res = self.apply(&v).sub(&rows);
        let num = res.plus.iter().chain(&res.minus).fold(T::zero(), |s, x| s + *x * *x).sqrt();
        let den = rows.plus.iter().chain(&rows.minus).fold(T::zero(), |s, x| s + *x * *x).sqrt();
        if !(num <= residual_tolerance::<T>() * den.max(T::min_positive_value())) && den > T::zero() {
            return Err(Error::SolverFailed(format!("circle oracle residual {:e}", (num / den).as_f64())));
        }
        Ok(v)
    }

    /// Smallest singular value over all mode blocks.
    pub fn smallest_singular_value(&self) -> Result<T> {
        let mut m = T::infinity();
        for (a, _) in &self.modes {
            m = m.min(crate::linalg::smallest_singular_value(&a.to_dense())?);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_system_matches_hand_assembly() {
        // one interior unknown per side between the interface and the Dirichlet ends
        let h = 0.5;
        let rho = DensityPair::new(2.0, 3.0).unwrap();
        let lam = Complex::new(1.0, 0.0);
        let k2 = 0.25;
        let a = flat_mode_matrix(k2, 3, h, &rho, lam).to_dense();
        // positions: minus 2, minus 1, minus 0, plus 0, plus 1, plus 2
        let c = |x: f64| Complex::new(x, 0.0);
        let hand = [
            // minus 1
            [-4.0, 3.0 + 0.25 + 8.0, -4.0, 0.0, 0.0, 0.0],
            // minus 0: density row
            [0.0, 0.0, -3.0, 2.0, 0.0, 0.0],
            // plus 0: balance
            [0.0, -2.0, 0.25 * (3.0 + 0.25) + 2.0, 0.25 * (2.0 + 0.25) + 2.0, -2.0, 0.0],
            // plus 1
            [0.0, 0.0, 0.0, -4.0, 2.0 + 0.25 + 8.0, -4.0],
        ];
        for (r, row) in hand.iter().enumerate() {
            for (col, v) in row.iter().enumerate() {
                assert!((a.get(r + 1, col) - c(*v)).norm() < 1e-14, "({}, {col})", r + 1);
            }
        }
        assert_eq!(a.get(0, 0), c(1.0));
        assert_eq!(a.get(5, 5), c(1.0));
    }

    #[test]
    fn interior_rows_sum_to_zero_at_zero_lambda() {
        let grid = TwoPhaseGrid::<f64>::planar(4, 2.0, 12).unwrap();
        let o = FlatOracle::new(grid, DensityPair::new(1.0, 2.0).unwrap(), None).unwrap();
        let a = o.dense();
        for side in Side::BOTH {
            let off = if side == Side::Plus { 0 } else { grid.len() };
            for t in 0..4 {
                for j in 1..11 {
                    let r = off + grid.index(t, j);
                    assert!(a.row_sum(r).norm() < 1e-10, "{side:?} {t} {j}");
                }
            }
        }
    }

    #[test]
    fn symmetrised_positive_lambda_system_is_positive_definite() {
        let n = 8;
        let h = 0.25;
        let rho = DensityPair::new(1.5, 4.0).unwrap();
        let k2 = 2.0;
        let a = flat_mode_matrix(k2, n, h, &rho, Complex::new(0.7, 0.0)).to_dense();
        // unknowns u: minus n−2..1, shared trace, plus 1..n−2; v = u/ρ
        let m = 2 * (n - 2) + 1;
        let col_of = |side: Side, j: usize| match side {
            Side::Minus if j > 0 => Some(n - 2 - j),
            Side::Plus if j > 0 => Some(n - 1 + j - 1),
            _ => Some(n - 2),
        };
        let mut s = vec![vec![0.0; m]; m];
        let rows: Vec<(usize, f64)> = (1..n - 1)
            .rev()
            .map(|j| (slab_position(Side::Minus, j, n), h))
            .chain(std::iter::once((slab_position(Side::Plus, 0, n), 1.0)))
            .chain((1..n - 1).map(|j| (slab_position(Side::Plus, j, n), h)))
            .collect();
        for (ri, (row, scale)) in rows.iter().enumerate() {
            for side in Side::BOTH {
                let r = if side == Side::Plus { rho.plus } else { rho.minus };
                for j in 0..n - 1 {
                    let c = col_of(side, j).unwrap();
                    s[ri][c] += scale * a.get(*row, slab_position(side, j, n)).re / r;
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                assert!((s[i][j] - s[j][i]).abs() < 1e-12, "asymmetry at ({i}, {j})");
            }
        }
        // unpivoted elimination keeps positive pivots iff the matrix is positive definite
        let mut w = s.clone();
        let mut min_pivot = f64::INFINITY;
        for k in 0..m {
            min_pivot = min_pivot.min(w[k][k]);
            assert!(w[k][k] > 0.0);
            for i in k + 1..m {
                let l = w[i][k] / w[k][k];
                for j in k..m {
                    w[i][j] -= l * w[k][j];
                }
            }
        }
        assert!(min_pivot > 0.1, "{min_pivot}");
    }

    #[test]
    fn zero_data_gives_zero_fields() {
        let grid = TwoPhaseGrid::<f64>::planar(8, 2.0, 17).unwrap();
        let o = FlatOracle::new(grid, DensityPair::new(1.0, 2.0).unwrap(), None).unwrap();
        let v = o.solve(&OracleData::default()).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        let pg = PolarGrid::new(0.1, 4, 10, 8).unwrap();
        let c = CircleOracle::new(pg, DensityPair::new(1.0, 2.0).unwrap(), 0.0, OuterCondition::Absorbing).unwrap();
        assert_eq!(c.solve(&PolarData::default()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bent_oracle_with_unit_coefficients_is_the_flat_operator() {
        let grid = TwoPhaseGrid::<f64>::planar(8, 2.0, 13).unwrap();
        let rho = DensityPair::new(1.0, 2.0).unwrap();
        let lam = Some(Complex::new(0.5, 0.2));
        let b = BentOracle::new(grid, rho, lam, BentCoefficients::identity(grid)).unwrap();
        let v = TwoPhaseScalarField::from_fn(grid, |s, x| {
            Complex::new(x[0].sin() + x[1] * if s == Side::Plus { 1.0 } else { 2.0 }, x[1])
        });
        let d = b.apply(&v).sub(&b.flat().apply(&v)).max_abs();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn polar_measure_sums_to_disk_area() {
        let g = PolarGrid::new(0.05, 6, 20, 16).unwrap();
        let one = PolarField::from_fn(g, |_, _, _| 1.0f64);
        let area = std::f64::consts::PI * g.outer_radius().powi(2);
        assert!((one.integral() - area).abs() < 1e-12);
    }
}
