//! Whole-space multiplier solves, interface traces and the flat-interface strong solver.
//!
//! Every tangential mode reduces to `(A² − ∂²) U = rhs` on the line. The reflected data
//! make the line solution an explicit integral against `e^{−A|x−y|}` and `e^{−A(x+y)}`,
//! evaluated by recursive sweeps with product integration of a local Lagrange interpolant.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Side, TangentialFft, TwoPhaseGrid, TwoPhaseScalarField, TwoPhaseVectorField};
use crate::quadrature::gauss_unit;
use crate::scalar::{cz, principal_sqrt, re, Real};
use crate::spectral_core::{norm_of, DensityPair, ResolventParameter};
use crate::stencil::{lagrange_basis, window_start};

const GAUSS_POINTS: usize = 16;

/// Product-integration weights of the exponential kernels on a uniform half-line grid.
#[derive(Debug, Clone)]
pub struct VolterraSweep<T> {
    n: usize,
    h: T,
    width: usize,
}

/// Kernel weights for one value of `A`.
#[derive(Debug, Clone)]
pub struct SweepWeights<T> {
    step: Complex<T>,
    /// `∫ e^{−A(x_{j+1}−y)} ℓ_k(y) dy` per interval offset
    left: Vec<Vec<Complex<T>>>,
    /// `∫ e^{−A(y−x_j)} ℓ_k(y) dy` per interval offset
    right: Vec<Vec<Complex<T>>>,
}

/// `I⁻(x_j) = ∫₀^{x_j} e^{−A(x_j−y)} r dy` and `I⁺(x_j) = ∫_{x_j}^L e^{−A(y−x_j)} r dy`.
#[derive(Debug, Clone)]
pub struct Sweeps<T> {
    pub lower: Vec<Complex<T>>,
    pub upper: Vec<Complex<T>>,
}

impl<T: Real> VolterraSweep<T> {
    pub fn new(n: usize, h: T, width: usize) -> Self {
        assert!(n >= width && width >= 2);
        Self { n, h, width }
    }

    fn start(&self, j: usize) -> usize {
        // interval [x_j, x_{j+1}] sits in the middle of the window
        window_start(j, self.width, self.n).min(j)
    }

    pub fn weights(&self, a: Complex<T>) -> SweepWeights<T> {
        let p = self.width;
        let ah = a * self.h;
        let panels = ((ah.norm().as_f64() / 2.0).ceil() as usize).max(1);
        let (gx, gw) = gauss_unit::<f64>(GAUSS_POINTS);
        let mut nodes = Vec::with_capacity(panels * GAUSS_POINTS);
        for m in 0..panels {
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(((m as f64 + x) / panels as f64, w / panels as f64));
            }
        }
        let decay: Vec<(Complex<T>, Complex<T>)> = nodes
            .iter()
            .map(|&(t, _)| {
                let t = T::lit(t);
                ((-ah * (T::one() - t)).exp(), (-ah * t).exp())
            })
            .collect();
        let mut left = vec![vec![cz(); p]; p - 1];
        let mut right = vec![vec![cz(); p]; p - 1];
        for o in 0..p - 1 {
            for (q, &(t, w)) in nodes.iter().enumerate() {
                let basis = lagrange_basis(o as f64 + t, p);
                let w = self.h * T::lit(w);
                for k in 0..p {
                    let b = w * T::lit(basis[k]);
                    left[o][k] += decay[q].0 * b;
                    right[o][k] += decay[q].1 * b;
                }
            }
        }
        SweepWeights { step: (-ah).exp(), left, right }
    }

    pub fn sweep(&self, w: &SweepWeights<T>, r: &[Complex<T>]) -> Sweeps<T> {
        let n = self.n;
        let mut lower = vec![cz(); n];
        let mut upper = vec![cz(); n];
        for j in 0..n - 1 {
            let s = self.start(j);
            let o = j - s;
            let mut acc = cz();
            for k in 0..self.width {
                acc += w.left[o][k] * r[s + k];
            }
            lower[j + 1] = lower[j] * w.step + acc;
        }
        for j in (0..n - 1).rev() {
            let s = self.start(j);
            let o = j - s;
            let mut acc = cz();
            for k in 0..self.width {
                acc += w.right[o][k] * r[s + k];
            }
            upper[j] = upper[j + 1] * w.step + acc;
        }
        Sweeps { lower, upper }
    }
}

/// Line solution and its derivative along the distance coordinate `y`.
#[derive(Debug, Clone)]
pub struct Profile<T> {
    pub value: Vec<Complex<T>>,
    pub slope: Vec<Complex<T>>,
}

/// Reflected line data of one tangential mode: `tdiv = −iξ'·f̂'`, `source = ĝ`,
/// `normal = ±f̂_N` (minus side flips the sign under reflection).
pub struct LineData<'a, T> {
    pub tdiv: Option<&'a [Complex<T>]>,
    pub source: Option<&'a [Complex<T>]>,
    pub normal: Option<&'a [Complex<T>]>,
}

fn combine<T: Real>(
    a: Option<&[Complex<T>]>,
    b: Option<&[Complex<T>]>,
    sign_a: T,
    n: usize,
) -> Option<Vec<Complex<T>>> {
    match (a, b) {
        (None, None) => None,
        _ => {
            let mut out = vec![cz(); n];
            if let Some(a) = a {
                for (o, v) in out.iter_mut().zip(a) {
                    *o += *v * sign_a;
                }
            }
            if let Some(b) = b {
                for (o, v) in out.iter_mut().zip(b) {
                    *o += *v;
                }
            }
            Some(out)
        }
    }
}

impl<T: Real> VolterraSweep<T> {
    /// Solves `(A² − ∂²)U = rhs` for the reflected whole-line data and returns `U`, `U'` on `[0, L]`.
    pub fn solve_line(&self, a: Complex<T>, data: &LineData<'_, T>) -> Result<Profile<T>> {
        let n = self.n;
        let w = self.weights(a);
        let half = T::lit(0.5);
        let mut value = vec![cz(); n];
        let mut slope = vec![cz(); n];
        let exps: Vec<Complex<T>> = (0..n).map(|j| (-a * self.h * T::from_usize_lossy(j)).exp()).collect();
        // s = tdiv + source, d = source − tdiv
        let s = combine(data.tdiv, data.source, T::one(), n);
        let d = combine(data.tdiv, data.source, -T::one(), n);
        if let (Some(s), Some(d)) = (s, d) {
            if a.norm() == T::zero() {
                return Err(Error::DegenerateMode);
            }
            let inv2a = (a * T::lit(2.0)).inv();
            let sw_s = self.sweep(&w, &s);
            let sw_d = self.sweep(&w, &d);
            let jd = sw_d.upper[0];
            for j in 0..n {
                let sum = sw_s.lower[j] + sw_s.upper[j];
                let diff = sw_s.lower[j] - sw_s.upper[j];
                value[j] += (sum + exps[j] * jd) * inv2a;
                slope[j] -= (diff + exps[j] * jd) * half;
            }
        }
        if let Some(c) = data.normal {
            let sw = self.sweep(&w, c);
            let jc = sw.upper[0];
            for j in 0..n {
                let sum = sw.lower[j] + sw.upper[j];
                let diff = sw.lower[j] - sw.upper[j];
                value[j] += (diff + exps[j] * jc) * half;
                slope[j] += c[j] - (sum + exps[j] * jc) * a * half;
            }
        }
        Ok(Profile { value, slope })
    }

    /// `r(0) + ∫ e^{−Ay} tdiv dy − A ∫ e^{−Ay} r dy`, the closed trace of `U'` at `y = 0`.
    pub fn trace_slope(&self, a: Complex<T>, tdiv: Option<&[Complex<T>]>, normal: Option<&[Complex<T>]>) -> Complex<T> {
        let w = self.weights(a);
        let mut out = cz();
        if let Some(t) = tdiv {
            out += self.sweep(&w, t).upper[0];
        }
        if let Some(c) = normal {
            out += c[0];
            if a.norm() > T::zero() {
                out -= a * self.sweep(&w, c).upper[0];
            }
        }
        out
    }
}

/// One-sided field with its normal derivative.
#[derive(Debug, Clone)]
pub struct OneSided<T> {
    pub grid: TwoPhaseGrid<T>,
    pub side: Side,
    pub values: Vec<Complex<T>>,
    pub normal_derivative: Vec<Complex<T>>,
}

/// Flat-interface solution with the analytic normal derivative.
#[derive(Debug, Clone)]
pub struct FlatSolution<T> {
    pub v: TwoPhaseScalarField<T>,
    pub dn: TwoPhaseScalarField<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct JumpTrace<T> {
    pub g1: Complex<T>,
    pub g2: Complex<T>,
}

/// Reusable solver state for one grid.
#[derive(Clone)]
pub struct HalfspaceSolver<T> {
    grid: TwoPhaseGrid<T>,
    fft: TangentialFft<T>,
    sweep: VolterraSweep<T>,
    /// relative tolerance of the zero-mode compatibility check
    pub zero_mode_tol: T,
}

/// Spectral data of one side: components then optional source.
struct SideSpectra<T> {
    comps: Vec<Vec<Complex<T>>>,
    source: Option<Vec<Complex<T>>>,
    jump: Option<Vec<Complex<T>>>,
}

/// Local interpolation width of the product integration.
pub const INTERPOLATION_WIDTH: usize = 10;

impl<T: Real> HalfspaceSolver<T> {
    pub fn new(grid: TwoPhaseGrid<T>) -> Self {
        Self {
            grid,
            fft: TangentialFft::new(&grid),
            sweep: VolterraSweep::new(grid.normal_points, grid.normal_spacing(), INTERPOLATION_WIDTH),
            zero_mode_tol: T::lit(1e-9),
        }
    }

    pub fn grid(&self) -> &TwoPhaseGrid<T> {
        &self.grid
    }

    pub fn tangential_fft(&self) -> &TangentialFft<T> {
        &self.fft
    }

    fn forward(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut b = v.to_vec();
        self.fft.forward(&mut b);
        b
    }

    fn spectra(
        &self,
        f: Option<&TwoPhaseVectorField<T>>,
        g: Option<&TwoPhaseScalarField<T>>,
        h: Option<&TwoPhaseScalarField<T>>,
        side: Side,
    ) -> Result<SideSpectra<T>> {
        if let Some(f) = f {
            self.grid.check_same(&f.grid)?;
        }
        if let Some(g) = g {
            self.grid.check_same(&g.grid)?;
        }
        if let Some(h) = h {
            self.grid.check_same(&h.grid)?;
        }
        Ok(SideSpectra {
            comps: f.map(|f| f.comps.iter().map(|c| self.forward(c.side(side))).collect()).unwrap_or_default(),
            source: g.map(|g| self.forward(g.side(side))),
            jump: h.map(|h| self.forward(h.side(side))),
        })
    }

    fn amplitude(&self, lam: Complex<T>, rho: T, k: T) -> Complex<T> {
        if lam.norm() == T::zero() {
            re(k)
        } else {
            principal_sqrt(lam * rho + k * k)
        }
    }

    /// Line data of mode `t` on one side.
    fn mode_line(
        &self,
        sp: &SideSpectra<T>,
        t: usize,
        side: Side,
    ) -> (Option<Vec<Complex<T>>>, Option<Vec<Complex<T>>>, Option<Vec<Complex<T>>>) {
        let g = &self.grid;
        let n = g.normal_points;
        let range = g.index(t, 0)..g.index(t, 0) + n;
        let k = g.wavenumber(t);
        let mut tdiv = None;
        let mut normal = None;
        if !sp.comps.is_empty() {
            let mut td = vec![cz::<T>(); n];
            let mut any = false;
            for (a, ka) in k.iter().enumerate() {
                if *ka == T::zero() {
                    continue;
                }
                any = true;
                let m = Complex::new(T::zero(), -*ka);
                for (o, v) in td.iter_mut().zip(&sp.comps[a][range.clone()]) {
                    *o += *v * m;
                }
            }
            if any {
                tdiv = Some(td);
            }
            let s = side.sign::<T>();
            normal = Some(sp.comps[g.dim - 1][range.clone()].iter().map(|v| *v * s).collect());
        }
        let source = sp.source.as_ref().map(|src| src[range].to_vec());
        (tdiv, source, normal)
    }

    fn whole_side(
        &self,
        f: Option<&TwoPhaseVectorField<T>>,
        g: Option<&TwoPhaseScalarField<T>>,
        lam: Complex<T>,
        side: Side,
        rho: T,
    ) -> Result<OneSided<T>> {
        let grid = self.grid;
        let sp = self.spectra(f, g, None, side)?;
        let n = grid.normal_points;
        let cols: Vec<Result<Profile<T>>> = (0..grid.tangential_count())
            .into_par_iter()
            .map(|t| {
                let (tdiv, source, normal) = self.mode_line(&sp, t, side);
                let a = self.amplitude(lam, rho, norm_of(&grid.wavenumber(t)));
                self.sweep.solve_line(
                    a,
                    &LineData { tdiv: tdiv.as_deref(), source: source.as_deref(), normal: normal.as_deref() },
                )
            })
            .collect();
        let mut values = vec![cz(); grid.len()];
        let mut dn = vec![cz(); grid.len()];
        let s = side.sign::<T>();
        for (t, c) in cols.into_iter().enumerate() {
            let p = c?;
            for j in 0..n {
                values[grid.index(t, j)] = p.value[j];
                dn[grid.index(t, j)] = p.slope[j] * s;
            }
        }
        self.fft.inverse(&mut values);
        self.fft.inverse(&mut dn);
        Ok(OneSided { grid, side, values, normal_derivative: dn })
    }

    /// `ρλU − ΔU = −div f + g` on the whole space from reflected one-sided data.
    pub fn solve_whole_resolvent(
        &self,
        f: &TwoPhaseVectorField<T>,
        g: Option<&TwoPhaseScalarField<T>>,
        lam: &ResolventParameter<T>,
        side: Side,
        rho: &DensityPair<T>,
    ) -> Result<OneSided<T>> {
        lam.require_sector()?;
        let r = if side == Side::Plus { rho.plus } else { rho.minus };
        self.whole_side(Some(f), g, lam.lambda, side, r)
    }

    /// `ΔU = div f` on the whole space from reflected one-sided data.
    pub fn solve_whole_laplace(&self, f: &TwoPhaseVectorField<T>, side: Side) -> Result<OneSided<T>> {
        self.whole_side(Some(f), None, cz(), side, T::one())
    }

    /// Closed trace formula for `∂_N U` at the interface; `lam = None` is the Laplace case.
    pub fn interface_normal_trace(
        &self,
        f: &TwoPhaseVectorField<T>,
        lam: Option<Complex<T>>,
        side: Side,
        rho: &DensityPair<T>,
    ) -> Result<Vec<Complex<T>>> {
        let grid = self.grid;
        let sp = self.spectra(Some(f), None, None, side)?;
        let lam = lam.unwrap_or(cz());
        let r = if side == Side::Plus { rho.plus } else { rho.minus };
        let s = side.sign::<T>();
        let mut out: Vec<Complex<T>> = (0..grid.tangential_count())
            .into_par_iter()
            .map(|t| {
                let (tdiv, _, normal) = self.mode_line(&sp, t, side);
                let a = self.amplitude(lam, r, norm_of(&grid.wavenumber(t)));
                self.sweep.trace_slope(a, tdiv.as_deref(), normal.as_deref()) * s
            })
            .collect();
        let inv = T::one() / T::from_usize_lossy(grid.tangential_count());
        let plan = T::fft_plan(grid.tangential_size, true);
        inverse_tangential(&grid, &plan, &mut out);
        for v in out.iter_mut() {
            *v *= inv;
        }
        Ok(out)
    }

    /// Exponential corrector profiles restoring the jumps `(g1, g2)` mode by mode.
    /// `jumps` are tangential samples; returns `(w, ∂_N w)`.
    pub fn flat_corrector(
        &self,
        g1: &[Complex<T>],
        g2: &[Complex<T>],
        lam: Option<Complex<T>>,
        rho: &DensityPair<T>,
    ) -> Result<FlatSolution<T>> {
        let grid = self.grid;
        let tc = grid.tangential_count();
        if g1.len() != tc || g2.len() != tc {
            return Err(Error::GridMismatch("jump traces do not match the tangential grid".into()));
        }
        let plan = T::fft_plan(grid.tangential_size, false);
        let mut h1 = g1.to_vec();
        let mut h2 = g2.to_vec();
        forward_tangential(&grid, &plan, &mut h1);
        forward_tangential(&grid, &plan, &mut h2);
        let lam = lam.unwrap_or(cz());
        let scale = h1.iter().chain(&h2).fold(T::zero(), |m, v| m.max(v.norm())).max(T::one());
        let mut w = TwoPhaseScalarField::zeros(grid);
        let mut dn = TwoPhaseScalarField::zeros(grid);
        for t in 0..tc {
            let jt = JumpTrace { g1: h1[t], g2: h2[t] };
            self.corrector_mode(t, jt, lam, rho, scale, &mut w, &mut dn)?;
        }
        for f in [&mut w, &mut dn] {
            for side in Side::BOTH {
                self.fft.inverse(f.side_mut(side));
            }
        }
        Ok(FlatSolution { v: w, dn })
    }

    #[allow(clippy::too_many_arguments)]
    fn corrector_mode(
        &self,
        t: usize,
        jt: JumpTrace<T>,
        lam: Complex<T>,
        rho: &DensityPair<T>,
        scale: T,
        w: &mut TwoPhaseScalarField<T>,
        dn: &mut TwoPhaseScalarField<T>,
    ) -> Result<()> {
        let grid = self.grid;
        let n = grid.normal_points;
        let k = norm_of(&grid.wavenumber(t));
        let (rp, rm) = (rho.plus, rho.minus);
        if lam.norm() == T::zero() && k == T::zero() {
            if jt.g2.norm() > self.zero_mode_tol * scale * T::from_usize_lossy(grid.tangential_count()) {
                return Err(Error::IncompatibleZeroMode(jt.g2.norm().as_f64()));
            }
            let c = jt.g1 / (rp + rm);
            for j in 0..n {
                w.plus[grid.index(t, j)] = c;
                w.minus[grid.index(t, j)] = -c;
            }
            return Ok(());
        }
        let ap = self.amplitude(lam, rp, k);
        let am = self.amplitude(lam, rm, k);
        let den = ap * rm + am * rp;
        let alpha = (am * jt.g1 - jt.g2 * rm) / den;
        let beta = (-ap * jt.g1 - jt.g2 * rp) / den;
        for j in 0..n {
            let y = grid.normal_coord(j);
            let ep = (-ap * y).exp();
            let em = (-am * y).exp();
            let i = grid.index(t, j);
            w.plus[i] = alpha * ep;
            dn.plus[i] = -ap * alpha * ep;
            w.minus[i] = beta * em;
            dn.minus[i] = am * beta * em;
        }
        Ok(())
    }

    /// Strong flat-interface problem. `lam = None` is the Laplace case, which needs `g = 0`.
    pub fn solve_flat(
        &self,
        f: &TwoPhaseVectorField<T>,
        g: Option<&TwoPhaseScalarField<T>>,
        h: Option<&TwoPhaseScalarField<T>>,
        lam: Option<&ResolventParameter<T>>,
        rho: &DensityPair<T>,
    ) -> Result<FlatSolution<T>> {
        let grid = self.grid;
        let lam_value = match lam {
            Some(l) => {
                l.require_sector()?;
                l.lambda
            }
            None => {
                if let Some(g) = g {
                    if g.max_abs() > T::zero() {
                        return Err(Error::InvalidParameter("source g must vanish when lambda = 0".into()));
                    }
                }
                cz()
            }
        };
        let spp = self.spectra(Some(f), g, h, Side::Plus)?;
        let spm = self.spectra(Some(f), g, h, Side::Minus)?;
        let n = grid.normal_points;
        let tc = grid.tangential_count();
        let data_scale = f.max_abs().max(T::one());
        type ModeOut<T> = (Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>);
        let modes: Vec<Result<ModeOut<T>>> = (0..tc)
            .into_par_iter()
            .map(|t| {
                let k = norm_of(&grid.wavenumber(t));
                let mut prof = Vec::with_capacity(2);
                for (side, sp, r) in [(Side::Plus, &spp, rho.plus), (Side::Minus, &spm, rho.minus)] {
                    let (tdiv, source, normal) = self.mode_line(sp, t, side);
                    let a = self.amplitude(lam_value, r, k);
                    let p = self.sweep.solve_line(
                        a,
                        &LineData { tdiv: tdiv.as_deref(), source: source.as_deref(), normal: normal.as_deref() },
                    )?;
                    prof.push(p);
                }
                let (pp, pm) = (&prof[0], &prof[1]);
                let i0 = grid.index(t, 0);
                let fnp = spp.comps[grid.dim - 1][i0];
                let fnm = spm.comps[grid.dim - 1][i0];
                let hj = match (&spp.jump, &spm.jump) {
                    (Some(a), Some(b)) => a[i0] - b[i0],
                    _ => cz(),
                };
                // ∂_N U₊ = U₊', ∂_N U₋ = −U₋' in reflected coordinates
                let g1 = -(pp.value[0] * rho.plus - pm.value[0] * rho.minus);
                let g2 = -(pp.slope[0] + pm.slope[0]) + (fnp - fnm) + hj;
                let mut vp = pp.value.clone();
                let mut vm = pm.value.clone();
                let mut dp = pp.slope.clone();
                let mut dm: Vec<Complex<T>> = pm.slope.iter().map(|v| -*v).collect();
                if lam_value.norm() == T::zero() && k == T::zero() {
                    let tol = self.zero_mode_tol * data_scale * T::from_usize_lossy(tc);
                    if g2.norm() > tol {
                        return Err(Error::IncompatibleZeroMode(g2.norm().as_f64()));
                    }
                    let c = g1 / (rho.plus + rho.minus);
                    for j in 0..n {
                        vp[j] += c;
                        vm[j] -= c;
                    }
                } else {
                    let ap = self.amplitude(lam_value, rho.plus, k);
                    let am = self.amplitude(lam_value, rho.minus, k);
                    let den = ap * rho.minus + am * rho.plus;
                    let alpha = (am * g1 - g2 * rho.minus) / den;
                    let beta = (-ap * g1 - g2 * rho.plus) / den;
                    for j in 0..n {
                        let y = grid.normal_coord(j);
                        let ep = (-ap * y).exp();
                        let em = (-am * y).exp();
                        vp[j] += alpha * ep;
                        dp[j] -= ap * alpha * ep;
                        vm[j] += beta * em;
                        dm[j] += am * beta * em;
                    }
                }
                Ok((vp, vm, dp, dm))
            })
            .collect();
        let mut v = TwoPhaseScalarField::zeros(grid);
        let mut dn = TwoPhaseScalarField::zeros(grid);
        for (t, m) in modes.into_iter().enumerate() {
            let (vp, vm, dp, dm) = m?;
            let i0 = grid.index(t, 0);
            v.plus[i0..i0 + n].copy_from_slice(&vp);
            v.minus[i0..i0 + n].copy_from_slice(&vm);
            dn.plus[i0..i0 + n].copy_from_slice(&dp);
            dn.minus[i0..i0 + n].copy_from_slice(&dm);
        }
        if lam.is_none() {
            // zero trace-plane mean of ρ₊v₊
            let c = v.plus[0] * rho.plus;
            for j in 0..n {
                v.plus[j] -= c / rho.plus;
                v.minus[j] -= c / rho.minus;
            }
        }
        for fld in [&mut v, &mut dn] {
            for side in Side::BOTH {
                self.fft.inverse(fld.side_mut(side));
            }
        }
        Ok(FlatSolution { v, dn })
    }

    /// Spectral tangential gradient with the stored normal derivative.
    pub fn gradient(&self, sol: &FlatSolution<T>) -> TwoPhaseVectorField<T> {
        let grid = self.grid;
        let mut comps = Vec::with_capacity(grid.dim);
        for axis in 0..grid.dim - 1 {
            let mut out = TwoPhaseScalarField::zeros(grid);
            for side in Side::BOTH {
                let mut b = sol.v.side(side).to_vec();
                self.fft.forward(&mut b);
                for t in 0..grid.tangential_count() {
                    let m = Complex::new(T::zero(), grid.wavenumber(t)[axis]);
                    for j in 0..grid.normal_points {
                        b[grid.index(t, j)] *= m;
                    }
                }
                self.fft.inverse(&mut b);
                *out.side_mut(side) = b;
            }
            comps.push(out);
        }
        comps.push(sol.dn.clone());
        TwoPhaseVectorField { grid, comps }
    }
}

fn forward_tangential<T: Real>(grid: &TwoPhaseGrid<T>, plan: &crate::scalar::FftPlan<T>, data: &mut [Complex<T>]) {
    trace_transform(grid, plan, data)
}

fn inverse_tangential<T: Real>(grid: &TwoPhaseGrid<T>, plan: &crate::scalar::FftPlan<T>, data: &mut [Complex<T>]) {
    trace_transform(grid, plan, data)
}

/// Transform of trace-plane samples (one value per tangential point).
fn trace_transform<T: Real>(grid: &TwoPhaseGrid<T>, plan: &crate::scalar::FftPlan<T>, data: &mut [Complex<T>]) {
    let s = grid.tangential_size;
    if grid.dim == 2 {
        plan.process(data);
    } else {
        plan.process(data);
        let mut tmp = vec![cz::<T>(); s * s];
        for a in 0..s {
            for b in 0..s {
                tmp[b * s + a] = data[a * s + b];
            }
        }
        plan.process(&mut tmp);
        for a in 0..s {
            for b in 0..s {
                data[a * s + b] = tmp[b * s + a];
            }
        }
    }
}

/// `ρ₊v₊ − ρ₋v₋` and `∂_N v₊ − ∂_N v₋` on the trace plane.
pub fn jump_residuals<T: Real>(sol: &FlatSolution<T>, rho: &DensityPair<T>) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
    let a: Vec<Complex<T>> = sol
        .v
        .trace(Side::Plus)
        .iter()
        .zip(sol.v.trace(Side::Minus))
        .map(|(p, m)| *p * rho.plus - m * rho.minus)
        .collect();
    let b = crate::fields::jump(&sol.dn);
    (a, b)
}
