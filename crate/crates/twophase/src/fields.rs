//! Two-phase fields on a tangentially periodic grid with a doubled interface trace.

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{cz, FftPlan, Real};
use crate::stencil::LineStencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plus, Side::Minus];

    pub fn sign<T: Real>(self) -> T {
        match self {
            Side::Plus => T::one(),
            Side::Minus => -T::one(),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

/// Tangential torus of period `tangential_period` times the normal segment [-L, L].
/// `normal_points` counts the samples per side including the trace plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhaseGrid<T> {
    pub dim: usize,
    pub tangential_size: usize,
    pub tangential_period: T,
    pub normal_half_extent: T,
    pub normal_points: usize,
}

impl<T: Real> TwoPhaseGrid<T> {
    pub fn new(
        dim: usize,
        tangential_size: usize,
        tangential_period: T,
        normal_half_extent: T,
        normal_points: usize,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{2, 3}}")));
        }
        if tangential_size < 2 || !tangential_size.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("tangential size {tangential_size} is not a power of two")));
        }
        if normal_points < 12 {
            return Err(Error::InvalidGrid(format!("{normal_points} normal points, need at least 12")));
        }
        if !(tangential_period > T::zero() && normal_half_extent > T::zero()) {
            return Err(Error::InvalidGrid("period and half extent must be positive".into()));
        }
        Ok(Self { dim, tangential_size, tangential_period, normal_half_extent, normal_points })
    }

    /// 2D grid with period 2π.
    pub fn planar(tangential_size: usize, normal_half_extent: T, normal_points: usize) -> Result<Self> {
        Self::new(2, tangential_size, T::TAU(), normal_half_extent, normal_points)
    }

    pub fn tangential_count(&self) -> usize {
        self.tangential_size.pow(self.dim as u32 - 1)
    }

    pub fn len(&self) -> usize {
        self.tangential_count() * self.normal_points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, t: usize, j: usize) -> usize {
        t * self.normal_points + j
    }

    pub fn tangential_spacing(&self) -> T {
        self.tangential_period / T::from_usize_lossy(self.tangential_size)
    }

    pub fn normal_spacing(&self) -> T {
        self.normal_half_extent / T::from_usize_lossy(self.normal_points - 1)
    }

    pub fn normal_coord(&self, j: usize) -> T {
        self.normal_spacing() * T::from_usize_lossy(j)
    }

    /// Multi-index of a flattened tangential index, first axis slowest.
    pub fn tangential_multi(&self, t: usize) -> Vec<usize> {
        let s = self.tangential_size;
        match self.dim {
            2 => vec![t],
            _ => vec![t / s, t % s],
        }
    }

    pub fn tangential_point(&self, t: usize) -> Vec<T> {
        let h = self.tangential_spacing();
        self.tangential_multi(t).into_iter().map(|i| h * T::from_usize_lossy(i)).collect()
    }

    /// Full coordinate with the signed normal component last.
    pub fn point(&self, side: Side, t: usize, j: usize) -> Vec<T> {
        let mut p = self.tangential_point(t);
        p.push(side.sign::<T>() * self.normal_coord(j));
        p
    }

    pub fn signed_mode(&self, i: usize) -> i64 {
        let s = self.tangential_size as i64;
        let i = i as i64;
        if i < s / 2 {
            i
        } else {
            i - s
        }
    }

    pub fn wavenumber(&self, t: usize) -> Vec<T> {
        let base = T::TAU() / self.tangential_period;
        self.tangential_multi(t).into_iter().map(|i| base * T::from_i64(self.signed_mode(i)).unwrap()).collect()
    }

    pub fn wavenumbers(&self) -> Vec<Vec<T>> {
        (0..self.tangential_count()).map(|t| self.wavenumber(t)).collect()
    }

    /// Trapezoid weights on the normal nodes of one side.
    pub fn normal_weights(&self) -> Vec<T> {
        let h = self.normal_spacing();
        let n = self.normal_points;
        (0..n).map(|j| if j == 0 || j == n - 1 { h * T::lit(0.5) } else { h }).collect()
    }

    pub fn tangential_cell(&self) -> T {
        self.tangential_spacing().powi(self.dim as i32 - 1)
    }

    pub fn check_same(&self, other: &Self) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Transforms along the tangential axes of data stored as `[tangential][normal]`.
#[derive(Clone)]
pub struct TangentialFft<T> {
    dim: usize,
    size: usize,
    normal: usize,
    fwd: FftPlan<T>,
    inv: FftPlan<T>,
}

impl<T: Real> TangentialFft<T> {
    pub fn new(grid: &TwoPhaseGrid<T>) -> Self {
        Self {
            dim: grid.dim,
            size: grid.tangential_size,
            normal: grid.normal_points,
            fwd: T::fft_plan(grid.tangential_size, false),
            inv: T::fft_plan(grid.tangential_size, true),
        }
    }

    fn run(&self, data: &mut [Complex<T>], inverse: bool) {
        let n = self.normal;
        let tc = self.size.pow(self.dim as u32 - 1);
        assert_eq!(data.len(), tc * n);
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut buf = vec![cz::<T>(); tc * n];
        for t in 0..tc {
            for j in 0..n {
                buf[j * tc + t] = data[t * n + j];
            }
        }
        if self.dim == 2 {
            plan.process(&mut buf);
        } else {
            let s = self.size;
            plan.process(&mut buf);
            let mut tmp = vec![cz::<T>(); s * s];
            for block in buf.chunks_mut(s * s) {
                for a in 0..s {
                    for b in 0..s {
                        tmp[b * s + a] = block[a * s + b];
                    }
                }
                plan.process(&mut tmp);
                for a in 0..s {
                    for b in 0..s {
                        block[a * s + b] = tmp[b * s + a];
                    }
                }
            }
        }
        let scale = if inverse { T::one() / T::from_usize_lossy(tc) } else { T::one() };
        for t in 0..tc {
            for j in 0..n {
                data[t * n + j] = buf[j * tc + t] * scale;
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.run(data, false)
    }

    /// Normalized inverse.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.run(data, true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseScalarField<T> {
    pub grid: TwoPhaseGrid<T>,
    pub plus: Vec<Complex<T>>,
    pub minus: Vec<Complex<T>>,
}

impl<T: Real> TwoPhaseScalarField<T> {
    pub fn zeros(grid: TwoPhaseGrid<T>) -> Self {
        Self { grid, plus: vec![cz(); grid.len()], minus: vec![cz(); grid.len()] }
    }

    pub fn from_fn<F: Fn(Side, &[T]) -> Complex<T>>(grid: TwoPhaseGrid<T>, f: F) -> Self {
        let mut out = Self::zeros(grid);
        for side in Side::BOTH {
            let vals = out.side_mut(side);
            for t in 0..grid.tangential_count() {
                for j in 0..grid.normal_points {
                    vals[grid.index(t, j)] = f(side, &grid.point(side, t, j));
                }
            }
        }
        out
    }

    pub fn side(&self, side: Side) -> &[Complex<T>] {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut Vec<Complex<T>> {
        match side {
            Side::Plus => &mut self.plus,
            Side::Minus => &mut self.minus,
        }
    }

    pub fn trace(&self, side: Side) -> Vec<Complex<T>> {
        let g = &self.grid;
        (0..g.tangential_count()).map(|t| self.side(side)[g.index(t, 0)]).collect()
    }

    pub fn scale(&self, a: Complex<T>) -> Self {
        self.map(|_, v| v * a)
    }

    pub fn map<F: Fn(Side, Complex<T>) -> Complex<T>>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            plus: self.plus.iter().map(|&v| f(Side::Plus, v)).collect(),
            minus: self.minus.iter().map(|&v| f(Side::Minus, v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(Complex<T>, Complex<T>) -> Complex<T>>(&self, other: &Self, f: F) -> Self {
        Self {
            grid: self.grid,
            plus: self.plus.iter().zip(&other.plus).map(|(&a, &b)| f(a, b)).collect(),
            minus: self.minus.iter().zip(&other.minus).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + a * other`
    pub fn axpy(&self, a: Complex<T>, other: &Self) -> Self {
        self.zip_with(other, |x, y| x + y * a)
    }

    pub fn max_abs(&self) -> T {
        self.plus.iter().chain(&self.minus).fold(T::zero(), |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.plus.iter().chain(&self.minus).all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Trapezoid-in-normal inner product `Σ a·conj(b)`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        let g = &self.grid;
        let w = g.normal_weights();
        let mut s = cz::<T>();
        for side in Side::BOTH {
            let (a, b) = (self.side(side), other.side(side));
            for t in 0..g.tangential_count() {
                for j in 0..g.normal_points {
                    let k = g.index(t, j);
                    s += a[k] * b[k].conj() * w[j];
                }
            }
        }
        s * g.tangential_cell()
    }

    pub fn l2(&self) -> T {
        self.inner(self).re.max(T::zero()).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseVectorField<T> {
    pub grid: TwoPhaseGrid<T>,
    pub comps: Vec<TwoPhaseScalarField<T>>,
}

impl<T: Real> TwoPhaseVectorField<T> {
    pub fn zeros(grid: TwoPhaseGrid<T>) -> Self {
        Self { grid, comps: (0..grid.dim).map(|_| TwoPhaseScalarField::zeros(grid)).collect() }
    }

    pub fn from_fn<F: Fn(Side, &[T]) -> Vec<Complex<T>>>(grid: TwoPhaseGrid<T>, f: F) -> Self {
        let mut out = Self::zeros(grid);
        for side in Side::BOTH {
            for t in 0..grid.tangential_count() {
                for j in 0..grid.normal_points {
                    let v = f(side, &grid.point(side, t, j));
                    for (c, val) in v.into_iter().enumerate().take(grid.dim) {
                        out.comps[c].side_mut(side)[grid.index(t, j)] = val;
                    }
                }
            }
        }
        out
    }

    pub fn normal(&self) -> &TwoPhaseScalarField<T> {
        &self.comps[self.grid.dim - 1]
    }

    pub fn map_comps<F: Fn(&TwoPhaseScalarField<T>) -> TwoPhaseScalarField<T>>(&self, f: F) -> Self {
        Self { grid: self.grid, comps: self.comps.iter().map(f).collect() }
    }

    pub fn zip_comps<F: Fn(&TwoPhaseScalarField<T>, &TwoPhaseScalarField<T>) -> TwoPhaseScalarField<T>>(
        &self,
        other: &Self,
        f: F,
    ) -> Self {
        Self { grid: self.grid, comps: self.comps.iter().zip(&other.comps).map(|(a, b)| f(a, b)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_comps(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_comps(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, a: Complex<T>) -> Self {
        self.map_comps(|c| c.scale(a))
    }

    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.comps.iter().zip(&other.comps).fold(cz(), |s, (a, b)| s + a.inner(b))
    }

    pub fn l2(&self) -> T {
        self.inner(self).re.max(T::zero()).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.comps.iter().fold(T::zero(), |m, c| m.max(c.max_abs()))
    }
}

/// Reflects one-sided samples (index = distance from the interface) to the whole line,
/// returned in ascending coordinate order on [-L, L].
pub fn extend<T: Real>(values: &[Complex<T>], parity: Parity, side: Side) -> Vec<Complex<T>> {
    let n = values.len();
    let sgn = match parity {
        Parity::Even => T::one(),
        Parity::Odd => -T::one(),
    };
    let own = |j: usize| values[j];
    let mirrored = |j: usize| if j == 0 && parity == Parity::Odd { cz() } else { values[j] * sgn };
    let mut out = Vec::with_capacity(2 * n - 1);
    match side {
        Side::Plus => {
            for j in (1..n).rev() {
                out.push(mirrored(j));
            }
            out.push(mirrored(0));
            for j in 1..n {
                out.push(own(j));
            }
        }
        Side::Minus => {
            for j in (1..n).rev() {
                out.push(own(j));
            }
            out.push(mirrored(0));
            for j in 1..n {
                out.push(mirrored(j));
            }
        }
    }
    out
}

/// Whole-line columns of the extended field at tangential index `t`:
/// odd reflections of the tangential components, even reflection of the normal one.
pub fn extend_vector<T: Real>(f: &TwoPhaseVectorField<T>, side: Side, t: usize) -> Vec<Vec<Complex<T>>> {
    let g = &f.grid;
    let n = g.normal_points;
    f.comps
        .iter()
        .enumerate()
        .map(|(c, comp)| {
            let col = &comp.side(side)[g.index(t, 0)..g.index(t, 0) + n];
            let parity = if c + 1 == g.dim { Parity::Even } else { Parity::Odd };
            extend(col, parity, side)
        })
        .collect()
}

/// Plus trace minus minus trace.
pub fn jump<T: Real>(field: &TwoPhaseScalarField<T>) -> Vec<Complex<T>> {
    field.trace(Side::Plus).iter().zip(field.trace(Side::Minus)).map(|(a, b)| a - b).collect()
}

/// Spectral tangential and sixth-order normal derivatives, never across the interface.
#[derive(Clone)]
pub struct Differentiator<T> {
    grid: TwoPhaseGrid<T>,
    fft: TangentialFft<T>,
    d1: Vec<(usize, Vec<T>)>,
}

impl<T: Real> Differentiator<T> {
    pub fn new(grid: TwoPhaseGrid<T>) -> Self {
        let st = LineStencil::derivative(grid.normal_points, grid.normal_spacing().as_f64(), 1, 7);
        let d1 = st.starts.iter().zip(&st.weights).map(|(&s, w)| (s, w.iter().map(|&v| T::lit(v)).collect())).collect();
        Self { grid, fft: TangentialFft::new(&grid), d1 }
    }

    pub fn grid(&self) -> &TwoPhaseGrid<T> {
        &self.grid
    }

    pub fn tangential_fft(&self) -> &TangentialFft<T> {
        &self.fft
    }

    fn tangential(&self, values: &[Complex<T>], axis: usize) -> Vec<Complex<T>> {
        let g = &self.grid;
        let mut buf = values.to_vec();
        self.fft.forward(&mut buf);
        for t in 0..g.tangential_count() {
            let k = g.wavenumber(t)[axis];
            let m = Complex::new(T::zero(), k);
            for j in 0..g.normal_points {
                buf[g.index(t, j)] *= m;
            }
        }
        self.fft.inverse(&mut buf);
        buf
    }

    /// d/dy along the distance-from-interface coordinate.
    pub fn normal_line(&self, values: &[Complex<T>]) -> Vec<Complex<T>> {
        let g = &self.grid;
        let n = g.normal_points;
        let mut out = vec![cz(); values.len()];
        for t in 0..g.tangential_count() {
            let col = &values[g.index(t, 0)..g.index(t, 0) + n];
            for j in 0..n {
                let (s, w) = &self.d1[j];
                let mut acc = cz();
                for (k, wk) in w.iter().enumerate() {
                    acc += col[s + k] * *wk;
                }
                out[g.index(t, j)] = acc;
            }
        }
        out
    }

    pub fn differentiate(&self, f: &TwoPhaseScalarField<T>, axis: usize) -> TwoPhaseScalarField<T> {
        let g = &self.grid;
        let mut out = TwoPhaseScalarField::zeros(*g);
        for side in Side::BOTH {
            let vals = f.side(side);
            *out.side_mut(side) = if axis + 1 == g.dim {
                let d = self.normal_line(vals);
                let s = side.sign::<T>();
                d.into_iter().map(|v| v * s).collect()
            } else {
                self.tangential(vals, axis)
            };
        }
        out
    }

    pub fn gradient(&self, f: &TwoPhaseScalarField<T>) -> TwoPhaseVectorField<T> {
        TwoPhaseVectorField { grid: self.grid, comps: (0..self.grid.dim).map(|a| self.differentiate(f, a)).collect() }
    }

    pub fn divergence(&self, v: &TwoPhaseVectorField<T>) -> TwoPhaseScalarField<T> {
        let mut out = TwoPhaseScalarField::zeros(self.grid);
        for (a, c) in v.comps.iter().enumerate() {
            out = out.add(&self.differentiate(c, a));
        }
        out
    }

    pub fn laplacian(&self, f: &TwoPhaseScalarField<T>) -> TwoPhaseScalarField<T> {
        self.divergence(&self.gradient(f))
    }

    /// All second derivatives, row-major over axis pairs.
    pub fn hessian(&self, f: &TwoPhaseScalarField<T>) -> Vec<TwoPhaseScalarField<T>> {
        let grad = self.gradient(f);
        let mut out = Vec::new();
        for gi in &grad.comps {
            for b in 0..self.grid.dim {
                out.push(self.differentiate(gi, b));
            }
        }
        out
    }

    pub fn norms(&self, f: &TwoPhaseScalarField<T>, lam: Option<Complex<T>>) -> Norms<T> {
        let l2 = f.l2();
        let grad = self.gradient(f).l2();
        let hess = self
            .hessian(f)
            .iter()
            .fold(T::zero(), |s, h| {
                let n = h.l2();
                s + n * n
            })
            .sqrt();
        let resolvent_triplet = lam.map(|l| l.norm() * l2 + l.norm().sqrt() * grad + hess);
        Norms { l2, grad_l2: grad, hess_l2: hess, resolvent_triplet }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    pub l2: T,
    pub grad_l2: T,
    pub hess_l2: T,
    pub resolvent_triplet: Option<T>,
}

/// Random smooth two-phase vector field: tangential modes up to `max_mode` in each axis,
/// normal profiles `p(y)·exp(−y²/width²)` with random cubic `p`.
pub fn random_band_limited<T: Real, R: Rng>(
    grid: TwoPhaseGrid<T>,
    max_mode: usize,
    width: f64,
    rng: &mut R,
) -> TwoPhaseVectorField<T> {
    let base = 2.0 * std::f64::consts::PI / grid.tangential_period.as_f64();
    let m = max_mode as i64;
    let modes: Vec<Vec<i64>> = if grid.dim == 2 {
        (-m..=m).map(|a| vec![a]).collect()
    } else {
        (-m..=m).flat_map(|a| (-m..=m).map(move |b| vec![a, b])).collect()
    };
    let mut out = TwoPhaseVectorField::zeros(grid);
    for side in Side::BOTH {
        for c in 0..grid.dim {
            let terms: Vec<(Vec<i64>, Complex<f64>, [f64; 4])> = modes
                .iter()
                .map(|k| {
                    let amp = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    let poly = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.2..0.2),
                    ];
                    (k.clone(), amp, poly)
                })
                .collect();
            let vals = out.comps[c].side_mut(side);
            for t in 0..grid.tangential_count() {
                let xp: Vec<f64> = grid.tangential_point(t).iter().map(|v| v.as_f64()).collect();
                for j in 0..grid.normal_points {
                    let y = grid.normal_coord(j).as_f64();
                    let envelope = (-(y * y) / (width * width)).exp();
                    let mut acc = Complex::new(0.0, 0.0);
                    for (k, amp, p) in &terms {
                        let phase: f64 = k.iter().zip(&xp).map(|(&ki, &xi)| ki as f64 * base * xi).sum();
                        let prof = p[0] + y * (p[1] + y * (p[2] + y * p[3]));
                        acc += amp * Complex::from_polar(1.0, phase) * prof;
                    }
                    acc *= envelope;
                    vals[grid.index(t, j)] = Complex::new(T::lit(acc.re), T::lit(acc.im));
                }
            }
        }
    }
    out
}
