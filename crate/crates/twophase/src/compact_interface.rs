//! Compact circular interface in the plane: cutoff ladder, the composite operators
//! built from a whole-plane solve and a bounded transmission solve, and the annulus
//! inversion that removes the cutoff remainder.

use std::sync::OnceLock;

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fd_oracle::{density, CircleOracle, OuterCondition, PolarData, PolarField, PolarFlux, PolarGrid};
use crate::fields::Side;
use crate::linalg::{gmres, smallest_singular_value, DenseLu, DenseMatrix};
use crate::scalar::{cz, re, FftPlan, Real};
use crate::spectral_core::DensityPair;

/// Polynomial smoothstep clamped to `[0, 1]`, `C^order` at both ends.
pub fn smoothstep<T: Real>(t: T, order: usize) -> T {
    let t = t.max(T::zero()).min(T::one());
    let l = T::lit;
    match order {
        1 => t * t * (l(3.0) - l(2.0) * t),
        2 => t * t * t * (l(10.0) + t * (l(-15.0) + l(6.0) * t)),
        _ => t * t * t * t * (l(35.0) + t * (l(-84.0) + t * (l(70.0) - l(20.0) * t))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    /// 1 on `B_{2R}`, 0 off `B_{3R}`
    Inner,
    /// `1 − Inner`
    Outer,
    /// 1 on `B_{10R/3}`, 0 off `B_{11R/3}`
    BoundedWindow,
    /// 0 on `B_{4R/3}`, 1 off `B_{5R/3}`
    WholeWindow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffLadder<T> {
    pub base_radius: T,
    pub smoothness: usize,
}

pub fn build_cutoff_ladder<T: Real>(base_radius: T, smoothness: usize) -> Result<CutoffLadder<T>> {
    if !(base_radius > T::zero()) || !base_radius.is_finite() {
        return Err(Error::InvalidParameter(format!("cutoff radius must be positive, got {base_radius}")));
    }
    if !(1..=3).contains(&smoothness) {
        return Err(Error::InvalidParameter(format!("smoothness must be 1, 2 or 3, got {smoothness}")));
    }
    Ok(CutoffLadder { base_radius, smoothness })
}

impl<T: Real> CutoffLadder<T> {
    /// Value at a radius measured in units of `R/3`.
    pub fn at_units(&self, which: Cutoff, s: T) -> T {
        let o = self.smoothness;
        let one = T::one();
        match which {
            Cutoff::Inner => one - smoothstep((s - T::lit(6.0)) / T::lit(3.0), o),
            Cutoff::Outer => one - self.at_units(Cutoff::Inner, s),
            Cutoff::BoundedWindow => one - smoothstep(s - T::lit(10.0), o),
            Cutoff::WholeWindow => smoothstep(s - T::lit(4.0), o),
        }
    }

    pub fn eval(&self, which: Cutoff, r: T) -> T {
        self.at_units(which, r * T::lit(3.0) / self.base_radius)
    }

    pub fn eval_point(&self, which: Cutoff, x: [T; 2]) -> T {
        self.eval(which, x[0].hypot(x[1]))
    }

    /// Annulus carrying the remainder and the density.
    pub fn annulus(&self) -> (T, T) {
        (self.base_radius * T::lit(4.0) / T::lit(3.0), self.base_radius * T::lit(11.0) / T::lit(3.0))
    }

    /// Annulus on which the whole-plane potential is gauged to mean zero.
    pub fn gauge_annulus(&self) -> (T, T) {
        (self.base_radius * T::lit(10.0) / T::lit(3.0), self.base_radius * T::lit(11.0) / T::lit(3.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Inversion {
    #[default]
    Dense,
    Krylov,
}

impl Inversion {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "krylov" => Ok(Self::Krylov),
            _ => Err(Error::InvalidParameter(format!("unknown inversion mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactConfig<T> {
    pub base_radius: T,
    /// ring index of the interface circle
    pub interface: usize,
    /// radial cells per `R`; a multiple of 3
    pub cells_per_radius: usize,
    pub angles: usize,
    /// outer ring of the whole-plane grid
    pub whole_outer: usize,
    pub smoothness: usize,
    pub inversion: Inversion,
    pub krylov_tol: T,
    pub mean_tol: T,
}

impl<T: Real> Default for CompactConfig<T> {
    fn default() -> Self {
        Self {
            base_radius: T::one(),
            interface: 15,
            cells_per_radius: 30,
            angles: 128,
            whole_outer: 128,
            smoothness: 2,
            inversion: Inversion::Dense,
            krylov_tol: T::lit(1e-10),
            mean_tol: T::lit(1e-8),
        }
    }
}

/// Field supported in the closed annulus `[inner, outer]` (ring indices) with zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusMeanZeroField<T> {
    pub field: PolarField<T>,
    pub inner: usize,
    pub outer: usize,
    /// integral before the mean was removed
    pub raw_mean: T,
}

fn l1<T: Real>(f: &PolarField<T>) -> T {
    let a = f.map(|_, _, v| v.abs());
    a.integral()
}

fn support_leak<T: Real>(f: &PolarField<T>, inner: usize, outer: usize) -> T {
    let mut leak = T::zero();
    for side in Side::BOTH {
        for i in f.grid.rings(side) {
            if i < inner || i > outer {
                leak = f.ring(side, i).iter().fold(leak, |m, v| m.max(v.abs()));
            }
        }
    }
    leak
}

impl<T: Real> AnnulusMeanZeroField<T> {
    /// Checks the support exactly and the mean against `tol` times the L¹ norm.
    pub fn new(field: PolarField<T>, inner: usize, outer: usize, tol: T) -> Result<Self> {
        let leak = support_leak(&field, inner, outer);
        if leak > T::zero() {
            return Err(Error::SupportViolated(leak.as_f64()));
        }
        let mean = field.integral();
        let bound = tol * l1(&field);
        if mean.abs() > bound {
            return Err(Error::MeanZeroViolated { mean: mean.as_f64(), bound: bound.as_f64() });
        }
        Ok(Self { field, inner, outer, raw_mean: mean })
    }

    fn renormalized(field: PolarField<T>, inner: usize, outer: usize, bound: T) -> Result<Self> {
        let leak = support_leak(&field, inner, outer);
        if leak > T::zero() {
            return Err(Error::SupportViolated(leak.as_f64()));
        }
        let mean = field.integral();
        if !(mean.abs() <= bound) {
            return Err(Error::MeanZeroViolated { mean: mean.as_f64(), bound: bound.as_f64() });
        }
        let g = field.grid;
        let area =
            (inner..=outer).fold(T::zero(), |s, i| s + g.measure(Side::Minus, i)) * T::from_usize_lossy(g.angles);
        let shift = mean / area;
        let field = field.map(|_, i, v| if i >= inner && i <= outer { v - shift } else { v });
        Ok(Self { field, inner, outer, raw_mean: mean })
    }

    pub fn l2(&self) -> T {
        self.field.l2()
    }
}

/// Whole-plane and bounded parts of `𝒮f`.
#[derive(Debug, Clone)]
pub struct SParts<T> {
    pub whole: PolarField<T>,
    pub bounded: PolarField<T>,
    pub value: PolarField<T>,
}

/// Parts of `𝒯g`; `whole` already includes the gauge constant.
#[derive(Debug, Clone)]
pub struct TParts<T> {
    pub whole: PolarField<T>,
    pub bounded: PolarField<T>,
    pub gauge: T,
    pub value: PolarField<T>,
}

#[derive(Debug, Clone)]
pub struct CompactSolution<T> {
    pub v: PolarField<T>,
    pub s: SParts<T>,
    pub remainder: AnnulusMeanZeroField<T>,
    pub density: AnnulusMeanZeroField<T>,
    pub t: TParts<T>,
    /// Krylov iterations, zero for the dense path
    pub iterations: usize,
    /// relative residual of the annulus equation
    pub inversion_residual: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactResiduals<T> {
    /// relative L² residual of the discrete equation away from the interface and outer ring
    pub pde: T,
    /// `max|ρ₊v₊ − ρ₋v₋| / max|ρv|`
    pub rho_jump: T,
    /// balance-row residual over `r_Σ max|f|`
    pub flux_jump: T,
}

struct Blocks<T> {
    lus: Vec<DenseLu<T>>,
    /// orthonormal basis of the mean-zero subspace in scaled coordinates, `n × (n−1)`
    basis: Vec<Vec<T>>,
    sigma_min: T,
}

pub struct CompactSolver<T> {
    pub config: CompactConfig<T>,
    pub ladder: CutoffLadder<T>,
    pub rho: DensityPair<T>,
    whole_grid: PolarGrid<T>,
    bounded_grid: PolarGrid<T>,
    whole: CircleOracle<T>,
    bounded: CircleOracle<T>,
    transmission: CircleOracle<T>,
    /// node cutoffs per ring of the whole grid: inner, outer, bounded window, whole window
    nodes: [Vec<T>; 4],
    fwd: FftPlan<T>,
    inv: FftPlan<T>,
    blocks: OnceLock<std::result::Result<Blocks<T>, Error>>,
}

fn slot(c: Cutoff) -> usize {
    match c {
        Cutoff::Inner => 0,
        Cutoff::Outer => 1,
        Cutoff::BoundedWindow => 2,
        Cutoff::WholeWindow => 3,
    }
}

impl<T: Real> CompactSolver<T> {
    pub fn new(config: CompactConfig<T>, rho: DensityPair<T>) -> Result<Self> {
        let cells = config.cells_per_radius;
        if cells == 0 || cells % 3 != 0 {
            return Err(Error::InvalidGrid(format!("cells per radius must be a positive multiple of 3, got {cells}")));
        }
        if config.interface >= cells {
            return Err(Error::InterfaceUnresolved(format!(
                "interface ring {} is not inside the base radius ({cells} cells)",
                config.interface
            )));
        }
        let ladder = build_cutoff_ladder(config.base_radius, config.smoothness)?;
        let h = config.base_radius / T::from_usize_lossy(cells);
        let bounded_outer = 4 * cells;
        if config.whole_outer < bounded_outer {
            return Err(Error::BoxTooSmall {
                radius: (h * T::from_usize_lossy(config.whole_outer)).as_f64(),
                required: (config.base_radius * T::lit(4.0)).as_f64(),
            });
        }
        let whole_grid = PolarGrid::new(h, config.interface, config.whole_outer, config.angles)?;
        let bounded_grid = PolarGrid::new(h, config.interface, bounded_outer, config.angles)?;
        let unit = DensityPair::uniform(T::one());
        let whole = CircleOracle::new(whole_grid, unit, T::zero(), OuterCondition::Absorbing)?;
        let bounded = CircleOracle::new(bounded_grid, rho, T::zero(), OuterCondition::Dirichlet)?;
        let transmission = CircleOracle::new(whole_grid, rho, T::zero(), OuterCondition::Absorbing)?;
        let units = |i: usize| T::from_usize_lossy(3 * i) / T::from_usize_lossy(cells);
        let table = |c: Cutoff| (0..=config.whole_outer).map(|i| ladder.at_units(c, units(i))).collect::<Vec<T>>();
        let nodes =
            [table(Cutoff::Inner), table(Cutoff::Outer), table(Cutoff::BoundedWindow), table(Cutoff::WholeWindow)];
        Ok(Self {
            config,
            ladder,
            rho,
            whole_grid,
            bounded_grid,
            whole,
            bounded,
            transmission,
            nodes,
            fwd: T::fft_plan(config.angles, false),
            inv: T::fft_plan(config.angles, true),
            blocks: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &PolarGrid<T> {
        &self.whole_grid
    }

    pub fn bounded_grid(&self) -> &PolarGrid<T> {
        &self.bounded_grid
    }

    /// Ring range of the annulus `D_{R₁,R₂}`.
    pub fn annulus_rings(&self) -> (usize, usize) {
        let q = self.config.cells_per_radius / 3;
        (4 * q, 11 * q)
    }

    /// Ring range of the gauge annulus `D_{R₃,R₄}`.
    pub fn gauge_rings(&self) -> (usize, usize) {
        let q = self.config.cells_per_radius / 3;
        (10 * q, 11 * q)
    }

    pub fn node_cutoff(&self, c: Cutoff, i: usize) -> T {
        self.nodes[slot(c)][i]
    }

    /// Zero extension of a bounded-grid field to the whole grid.
    pub fn embed(&self, f: &PolarField<T>) -> PolarField<T> {
        let mut out = PolarField::zeros(self.whole_grid);
        out.plus.copy_from_slice(&f.plus);
        out.minus[..f.minus.len()].copy_from_slice(&f.minus);
        out
    }

    pub fn restrict(&self, f: &PolarField<T>) -> PolarField<T> {
        let mut out = PolarField::zeros(self.bounded_grid);
        out.plus.copy_from_slice(&f.plus);
        let n = out.minus.len();
        out.minus.copy_from_slice(&f.minus[..n]);
        out
    }

    fn cut(&self, c: Cutoff, f: &PolarField<T>) -> PolarField<T> {
        let tab = &self.nodes[slot(c)];
        f.map(|_, i, v| tab[i] * v)
    }

    fn neighbours(&self, side: Side, i: usize) -> [Option<(usize, T)>; 2] {
        let g = &self.whole_grid;
        let h = g.spacing;
        let half = h * T::lit(0.5);
        let r = g.radius(i);
        let inner = (i > 0 && !(side == Side::Minus && i == g.interface)).then(|| (i - 1, (r - half) / h));
        let outer = (i < g.outer && !(side == Side::Plus && i == g.interface)).then(|| (i + 1, (r + half) / h));
        [inner, outer]
    }

    /// `Σ_j w_ij (a_j − a_i) b_j / V_i` with the radial cutoff `a`.
    fn product(&self, c: Cutoff, b: &PolarField<T>) -> PolarField<T> {
        let g = self.whole_grid;
        let a = &self.nodes[slot(c)];
        let mut out = PolarField::zeros(g);
        let nth = g.angles;
        {
            let (v0, _) = g.cell(Side::Plus, 0);
            let d = a[1] - a[0];
            if d != T::zero() {
                let mean = b.ring(Side::Plus, 1).iter().copied().sum::<T>() / T::from_usize_lossy(nth);
                let val = T::lit(0.5) * d * mean / v0;
                for m in 0..nth {
                    out.plus[m] = val;
                }
            }
        }
        for side in Side::BOTH {
            for i in g.rings(side) {
                if i == 0 {
                    continue;
                }
                let (vol, _) = g.cell(side, i);
                for (j, w) in self.neighbours(side, i).into_iter().flatten() {
                    let d = a[j] - a[i];
                    if d == T::zero() {
                        continue;
                    }
                    let coef = w * d / vol;
                    let nb_side = if j == g.interface {
                        side
                    } else if j < g.interface {
                        Side::Plus
                    } else {
                        Side::Minus
                    };
                    let s = g.index(side, i, 0);
                    let ring: Vec<T> = if j == 0 { vec![b.plus[0]; nth] } else { b.ring(nb_side, j).to_vec() };
                    for m in 0..nth {
                        let o = &mut out.side_mut(side)[s + m];
                        *o += coef * ring[m];
                    }
                }
            }
        }
        out
    }

    /// Discrete L² norm of a flux over the whole grid.
    pub fn flux_norm(&self, f: PolarFlux<'_, T>) -> T {
        let g = self.whole_grid;
        let sq = PolarField::from_fn(g, |s, r, th| {
            let v = f(s, r, th);
            v[0] * v[0] + v[1] * v[1]
        });
        sq.integral().sqrt()
    }

    pub fn apply_s(&self, f: PolarFlux<'_, T>) -> Result<SParts<T>> {
        let ladder = self.ladder;
        let far = move |s: Side, r: T, th: T| {
            let c = ladder.eval(Cutoff::Outer, r);
            let v = f(s, r, th);
            [c * v[0], c * v[1]]
        };
        let near = move |s: Side, r: T, th: T| {
            let c = ladder.eval(Cutoff::Inner, r);
            let v = f(s, r, th);
            [c * v[0], c * v[1]]
        };
        let whole = self.whole.solve(&PolarData { flux: Some(&far), ..Default::default() })?;
        let bounded = self.bounded.solve(&PolarData { flux: Some(&near), ..Default::default() })?;
        let value = self.cut(Cutoff::WholeWindow, &whole).add(&self.cut(Cutoff::BoundedWindow, &self.embed(&bounded)));
        Ok(SParts { whole, bounded, value })
    }

    /// Cutoff remainder of `𝒮f`, with the discrete mean removed.
    pub fn remainder(&self, f: PolarFlux<'_, T>, parts: &SParts<T>) -> Result<AnnulusMeanZeroField<T>> {
        let r = self
            .product(Cutoff::WholeWindow, &parts.whole)
            .add(&self.product(Cutoff::BoundedWindow, &self.embed(&parts.bounded)));
        let (a, b) = self.annulus_rings();
        AnnulusMeanZeroField::renormalized(r, a, b, self.config.mean_tol * self.flux_norm(f))
    }

    fn gauge_mean(&self, f: &PolarField<T>) -> T {
        let g = &self.whole_grid;
        let (a, b) = self.gauge_rings();
        let (mut s, mut w) = (T::zero(), T::zero());
        for i in a..=b {
            let mu = g.measure(Side::Minus, i);
            s += mu * f.ring(Side::Minus, i).iter().copied().sum::<T>();
            w += mu * T::from_usize_lossy(g.angles);
        }
        s / w
    }

    fn apply_t_field(&self, g: &PolarField<T>) -> Result<TParts<T>> {
        let src = g.scale(-T::one());
        let tilde = self.whole.solve(&PolarData { source: Some(&src), ..Default::default() })?;
        let gauge = -self.gauge_mean(&tilde);
        let whole = tilde.map(|_, _, v| v + gauge);
        let bsrc = self.restrict(&src);
        let bounded = self.bounded.solve(&PolarData { source: Some(&bsrc), ..Default::default() })?;
        let value = self.cut(Cutoff::Outer, &whole).add(&self.cut(Cutoff::Inner, &self.embed(&bounded)));
        Ok(TParts { whole, bounded, gauge, value })
    }

    pub fn apply_t(&self, g: &AnnulusMeanZeroField<T>) -> Result<TParts<T>> {
        self.apply_t_field(&g.field)
    }

    fn g_field(&self, g: &PolarField<T>) -> Result<PolarField<T>> {
        let t = self.apply_t_field(g)?;
        Ok(self.product(Cutoff::Outer, &t.whole).add(&self.product(Cutoff::Inner, &self.embed(&t.bounded))))
    }

    /// Cutoff remainder of `𝒯g`.
    pub fn operator_g(&self, g: &AnnulusMeanZeroField<T>) -> Result<AnnulusMeanZeroField<T>> {
        let out = self.g_field(&g.field)?;
        let (a, b) = self.annulus_rings();
        AnnulusMeanZeroField::renormalized(out, a, b, self.config.mean_tol * g.field.l2())
    }

    fn annulus_len(&self) -> usize {
        let (a, b) = self.annulus_rings();
        b - a + 1
    }

    /// Remainder operator on angular mode `k`, acting on ring values over the annulus.
    fn mode_block(&self, k: usize) -> DenseMatrix<T> {
        let (a, b) = self.annulus_rings();
        let (ga, gb) = self.gauge_rings();
        let n = self.annulus_len();
        let g = &self.whole_grid;
        let pos = |i: usize| i + 1;
        let mut m = DenseMatrix::zeros(n, n);
        for c in 0..n {
            let i = a + c;
            let (vol, _) = g.cell(Side::Minus, i);
            let mut rw = vec![cz::<T>(); self.whole.mode_size()];
            rw[pos(i)] = re(-vol);
            let mut tw = self.whole.solve_mode(k, &rw);
            if k == 0 {
                let (mut s, mut w) = (T::zero(), T::zero());
                for j in ga..=gb {
                    let mu = g.measure(Side::Minus, j);
                    s += mu * tw[pos(j)].re;
                    w += mu;
                }
                let shift = re(-s / w);
                tw.iter_mut().for_each(|v| *v += shift);
            }
            let mut rb = vec![cz::<T>(); self.bounded.mode_size()];
            rb[pos(i)] = re(-vol);
            let tb = self.bounded.solve_mode(k, &rb);
            let at = |t: &[Complex<T>], j: usize| if pos(j) < t.len() { t[pos(j)] } else { cz() };
            for (row, ring) in (a..=b).enumerate() {
                let (vr, _) = g.cell(Side::Minus, ring);
                let mut acc = cz::<T>();
                for (j, w) in self.neighbours(Side::Minus, ring).into_iter().flatten() {
                    for (cut, t) in [(Cutoff::Outer, &tw[..]), (Cutoff::Inner, &tb[..])] {
                        let tab = &self.nodes[slot(cut)];
                        let d = tab[j] - tab[ring];
                        if d != T::zero() {
                            acc += at(t, j) * (w * d / vr);
                        }
                    }
                }
                m.set(row, c, acc);
            }
        }
        for i in 0..n {
            m.add_to(i, i, re(T::one()));
        }
        m
    }

    fn scales(&self) -> Vec<T> {
        let (a, b) = self.annulus_rings();
        (a..=b).map(|i| self.whole_grid.cell(Side::Minus, i).0.sqrt()).collect()
    }

    fn mean_free_basis(&self) -> Vec<Vec<T>> {
        // Householder reflector mapping the scaled constant onto e₀; its other columns span the complement
        let d = self.scales();
        let n = d.len();
        let nrm = d.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
        let mut v: Vec<T> = d.iter().map(|x| *x / nrm).collect();
        v[0] += T::one();
        let vv = v.iter().fold(T::zero(), |s, x| s + *x * *x);
        (1..n)
            .map(|c| {
                (0..n).map(|r| (if r == c { T::one() } else { T::zero() }) - T::lit(2.0) * v[r] * v[c] / vv).collect()
            })
            .collect()
    }

    fn scaled_block(&self, k: usize, basis: &[Vec<T>]) -> DenseMatrix<T> {
        let m = self.mode_block(k);
        let d = self.scales();
        let n = d.len();
        let mut s = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, m.get(i, j) * (d[i] / d[j]));
            }
        }
        if k != 0 {
            return s;
        }
        let p = basis.len();
        let mut out = DenseMatrix::zeros(p, p);
        for (a, qa) in basis.iter().enumerate() {
            for (b, qb) in basis.iter().enumerate() {
                let mut acc = cz::<T>();
                for i in 0..n {
                    if qa[i] == T::zero() {
                        continue;
                    }
                    let mut row = cz::<T>();
                    for j in 0..n {
                        row += s.get(i, j) * qb[j];
                    }
                    acc += row * qa[i];
                }
                out.set(a, b, acc);
            }
        }
        out
    }

    fn blocks(&self) -> Result<&Blocks<T>> {
        self.blocks
            .get_or_init(|| {
                let basis = self.mean_free_basis();
                let parts = (0..self.config.angles)
                    .into_par_iter()
                    .map(|k| {
                        let s = self.scaled_block(k, &basis);
                        let sigma = smallest_singular_value(&s)?;
                        Ok((s.lu()?, sigma))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let sigma_min = parts.iter().fold(T::infinity(), |m, p| m.min(p.1));
                Ok(Blocks { lus: parts.into_iter().map(|p| p.0).collect(), basis, sigma_min })
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Smallest singular value of `I + 𝒢` on mean-zero annulus fields, in the L² scaling.
    pub fn inversion_sigma_min(&self) -> Result<T> {
        Ok(self.blocks()?.sigma_min)
    }

    fn annulus_modes(&self, f: &PolarField<T>) -> Vec<Vec<Complex<T>>> {
        let (a, b) = self.annulus_rings();
        (a..=b)
            .map(|i| {
                let mut buf: Vec<Complex<T>> = f.ring(Side::Minus, i).iter().map(|v| re(*v)).collect();
                self.fwd.process(&mut buf);
                buf
            })
            .collect()
    }

    fn dense_solve(&self, rhs: &PolarField<T>) -> Result<PolarField<T>> {
        let blocks = self.blocks()?;
        let (a, _) = self.annulus_rings();
        let d = self.scales();
        let n = d.len();
        let mut rings = self.annulus_modes(rhs);
        let nth = self.config.angles;
        let cols: Vec<Vec<Complex<T>>> = (0..nth)
            .into_par_iter()
            .map(|k| {
                let x: Vec<Complex<T>> = (0..n).map(|r| rings[r][k] * d[r]).collect();
                let y = if k == 0 {
                    let q = &blocks.basis;
                    let z: Vec<Complex<T>> =
                        q.iter().map(|col| col.iter().zip(&x).fold(cz::<T>(), |s, (c, v)| s + *v * *c)).collect();
                    let w = blocks.lus[0].solve(&z);
                    (0..n).map(|r| q.iter().zip(&w).fold(cz::<T>(), |s, (col, c)| s + *c * col[r])).collect()
                } else {
                    blocks.lus[k].solve(&x)
                };
                y.into_iter().zip(&d).map(|(v, s)| v / *s).collect()
            })
            .collect();
        for (k, col) in cols.into_iter().enumerate() {
            for (r, v) in col.into_iter().enumerate() {
                rings[r][k] = v;
            }
        }
        let mut out = PolarField::zeros(self.whole_grid);
        let scale = T::one() / T::from_usize_lossy(nth);
        for (r, mut buf) in rings.into_iter().enumerate() {
            self.inv.process(&mut buf);
            let s = self.whole_grid.index(Side::Minus, a + r, 0);
            for (m, v) in buf.into_iter().enumerate() {
                out.minus[s + m] = v.re * scale;
            }
        }
        Ok(out)
    }

    fn pack(&self, f: &PolarField<T>) -> Vec<Complex<T>> {
        let (a, b) = self.annulus_rings();
        (a..=b).flat_map(|i| f.ring(Side::Minus, i).iter().map(|v| re(*v)).collect::<Vec<_>>()).collect()
    }

    fn unpack(&self, x: &[Complex<T>]) -> PolarField<T> {
        let (a, _) = self.annulus_rings();
        let mut out = PolarField::zeros(self.whole_grid);
        let s = self.whole_grid.index(Side::Minus, a, 0);
        for (k, v) in x.iter().enumerate() {
            out.minus[s + k] = v.re;
        }
        out
    }

    fn krylov_solve(&self, rhs: &PolarField<T>) -> Result<(PolarField<T>, usize)> {
        let b = self.pack(rhs);
        let op = |x: &[Complex<T>]| {
            let f = self.unpack(x);
            let gx = self.g_field(&f).expect("annulus solves are well posed");
            let gp = self.pack(&gx);
            x.iter().zip(gp).map(|(a, c)| *a + c).collect()
        };
        let out = gmres(op, &b, 60, self.config.krylov_tol, 600)?;
        Ok((self.unpack(&out.x), out.iterations))
    }

    /// `v = 𝒮f + 𝒯(I + 𝒢)⁻¹(−𝓡f)`.
    pub fn solve(&self, f: PolarFlux<'_, T>) -> Result<CompactSolution<T>> {
        let s = self.apply_s(f)?;
        let remainder = self.remainder(f, &s)?;
        let rhs = remainder.field.scale(-T::one());
        let (sol, iterations) = match self.config.inversion {
            Inversion::Dense => (self.dense_solve(&rhs)?, 0),
            Inversion::Krylov => self.krylov_solve(&rhs)?,
        };
        let (a, b) = self.annulus_rings();
        let density = AnnulusMeanZeroField::renormalized(
            sol,
            a,
            b,
            self.config.mean_tol * rhs.l2().max(T::min_positive_value()),
        )?;
        let check = density.field.add(&self.g_field(&density.field)?).sub(&rhs);
        let base = rhs.l2();
        let inversion_residual = if base > T::zero() { check.l2() / base } else { check.l2() };
        let t = self.apply_t(&density)?;
        let v = s.value.add(&t.value);
        Ok(CompactSolution { v, s, remainder, density, t, iterations, inversion_residual })
    }

    /// Residuals of the full discrete transmission system at the compact solution.
    pub fn residuals(&self, f: PolarFlux<'_, T>, sol: &CompactSolution<T>) -> Result<CompactResiduals<T>> {
        let g = self.whole_grid;
        let rows = self.transmission.rhs(&PolarData { flux: Some(f), ..Default::default() })?;
        let res = self.transmission.apply(&sol.v).sub(&rows);
        let (mut num, mut den) = (T::zero(), T::zero());
        for side in Side::BOTH {
            for i in g.rings(side) {
                if i == g.interface || i == g.outer {
                    continue;
                }
                let (vol, _) = g.cell(side, i);
                let mu = g.measure(side, i);
                for m in 0..g.angles {
                    let k = g.index(side, i, m);
                    let a = res.side(side)[k] / vol;
                    let b = rows.side(side)[k] / vol;
                    num += mu * a * a;
                    den += mu * b * b;
                }
            }
        }
        let pde = if den > T::zero() { (num / den).sqrt() } else { num.sqrt() };
        let sig = g.interface;
        let (mut jump, mut scale, mut balance) = (T::zero(), T::zero(), T::zero());
        for m in 0..g.angles {
            let p = density(&self.rho, Side::Plus) * sol.v.get(Side::Plus, sig, m);
            let q = density(&self.rho, Side::Minus) * sol.v.get(Side::Minus, sig, m);
            jump = jump.max((p - q).abs());
            scale = scale.max(p.abs()).max(q.abs());
            balance = balance.max(res.get(Side::Plus, sig, m).abs());
        }
        let fmax = PolarField::from_fn(g, |s, r, th| {
            let v = f(s, r, th);
            v[0].hypot(v[1])
        })
        .max_abs();
        let rho_jump = if scale > T::zero() { jump / scale } else { jump };
        let fs = g.interface_radius() * fmax;
        let flux_jump = if fs > T::zero() { balance / fs } else { balance };
        Ok(CompactResiduals { pde, rho_jump, flux_jump })
    }
}

/// Direct solve of the same discrete system on a larger disk with the exact exterior map.
pub fn global_reference<T: Real>(
    config: &CompactConfig<T>,
    rho: DensityPair<T>,
    radius_factor: usize,
    f: PolarFlux<'_, T>,
) -> Result<PolarField<T>> {
    let h = config.base_radius / T::from_usize_lossy(config.cells_per_radius);
    let grid = PolarGrid::new(h, config.interface, radius_factor * config.cells_per_radius, config.angles)?;
    let o = CircleOracle::new(grid, rho, T::zero(), OuterCondition::Absorbing)?;
    o.solve(&PolarData { flux: Some(f), ..Default::default() })
}

/// Relative μ-weighted L² distance over rings `0..=max_ring` after removing the best gauge
/// shift `c/ρ`. The fields may live on grids with different outer rings.
pub fn distance_modulo_gauge<T: Real>(
    a: &PolarField<T>,
    b: &PolarField<T>,
    rho: &DensityPair<T>,
    max_ring: usize,
) -> T {
    let g = a.grid;
    let (mut de, mut ee, mut dd, mut bb) = (T::zero(), T::zero(), T::zero(), T::zero());
    let mut terms = Vec::new();
    for side in Side::BOTH {
        let e = T::one() / density(rho, side);
        for i in g.rings(side) {
            if i > max_ring {
                continue;
            }
            let mu = g.measure(side, i);
            for m in 0..g.angles {
                let d = a.get(side, i, m) - b.get(side, i, m);
                let bv = b.get(side, i, m);
                de += mu * d * e;
                ee += mu * e * e;
                bb += mu * bv * bv;
                terms.push((mu, d, e));
            }
        }
    }
    let c = de / ee;
    for (mu, d, e) in terms {
        let r = d - c * e;
        dd += mu * r * r;
    }
    (dd / bb).sqrt()
}

/// Smooth radial bump supported in the closed ring range `[a, b]`.
fn ring_bump<T: Real>(grid: &PolarGrid<T>, a: usize, b: usize, r: T) -> T {
    let (ra, rb) = (grid.radius(a), grid.radius(b));
    if r <= ra || r >= rb {
        return T::zero();
    }
    let t = (r - ra) / (rb - ra);
    let s = (T::PI() * t).sin();
    s * s
}

/// Random smooth mean-zero field on the annulus of `solver`.
pub fn random_annulus_field<T: Real, R: Rng>(
    solver: &CompactSolver<T>,
    modes: usize,
    rng: &mut R,
) -> AnnulusMeanZeroField<T> {
    let g = *solver.grid();
    let (a, b) = solver.annulus_rings();
    let coef: Vec<(T, T)> =
        (0..=modes).map(|_| (T::lit(rng.gen_range(-1.0..1.0)), T::lit(rng.gen_range(-1.0..1.0)))).collect();
    let width: Vec<T> = (0..=modes).map(|_| T::lit(rng.gen_range(1.0..4.0))).collect();
    let raw = PolarField::from_fn(g, |_, r, th| {
        let mut v = T::zero();
        for (k, ((p, q), w)) in coef.iter().zip(&width).enumerate() {
            let kk = T::from_usize_lossy(k);
            let radial = (*w * r).sin();
            v += (*p * (kk * th).cos() + *q * (kk * th).sin()) * radial;
        }
        v * ring_bump(&g, a, b, r)
    });
    let raw = raw.map(|_, i, v| if i < a || i > b { T::zero() } else { v });
    let bump = PolarField::from_fn(g, |_, r, _| ring_bump(&g, a, b, r))
        .map(|_, i, v| if i < a || i > b { T::zero() } else { v });
    let c = raw.integral() / bump.integral();
    let field = raw.sub(&bump.scale(c));
    let mean = field.integral();
    AnnulusMeanZeroField { field, inner: a, outer: b, raw_mean: mean }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_values_at_the_radii() {
        let l = build_cutoff_ladder(1.0, 2).unwrap();
        assert_eq!(l.eval(Cutoff::Inner, 2.0), 1.0);
        assert_eq!(l.eval(Cutoff::Inner, 3.0), 0.0);
        assert_eq!(l.eval(Cutoff::WholeWindow, 4.0 / 3.0 - 1e-12), 0.0);
        assert_eq!(l.eval(Cutoff::WholeWindow, 2.0), 1.0);
        assert_eq!(l.eval(Cutoff::BoundedWindow, 3.2), 1.0);
        assert_eq!(l.eval(Cutoff::BoundedWindow, 3.7), 0.0);
        assert!(build_cutoff_ladder(0.0, 2).is_err());
        assert!(build_cutoff_ladder(1.0, 4).is_err());
    }

    #[test]
    fn smoothstep_orders_are_monotone_and_symmetric() {
        for o in 1..=3 {
            let mut prev = 0.0;
            for k in 0..=100 {
                let t = k as f64 / 100.0;
                let s = smoothstep(t, o);
                assert!(s >= prev);
                assert!((s + smoothstep(1.0 - t, o) - 1.0).abs() < 1e-14);
                prev = s;
            }
        }
    }

    #[test]
    fn box_and_grid_checks() {
        let rho = DensityPair::new(1.0, 2.0).unwrap();
        let mut c = CompactConfig::<f64> {
            cells_per_radius: 6,
            interface: 3,
            angles: 8,
            whole_outer: 20,
            ..Default::default()
        };
        assert!(matches!(CompactSolver::new(c, rho), Err(Error::BoxTooSmall { .. })));
        c.whole_outer = 24;
        assert!(CompactSolver::new(c, rho).is_ok());
        c.cells_per_radius = 7;
        assert!(matches!(CompactSolver::new(c, rho), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn annulus_field_checks_support_and_mean() {
        let g = PolarGrid::new(0.1, 3, 12, 8).unwrap();
        let f = PolarField::from_fn(g, |_, r, _| if (0.55..0.85).contains(&r) { 1.0 } else { 0.0 });
        assert!(matches!(AnnulusMeanZeroField::new(f.clone(), 6, 8, 1e-10), Err(Error::MeanZeroViolated { .. })));
        assert!(matches!(AnnulusMeanZeroField::new(f, 7, 8, 1e-10), Err(Error::SupportViolated(_))));
    }
}
