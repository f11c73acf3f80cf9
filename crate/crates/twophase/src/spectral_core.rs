//! Fourier symbols of the flat transmission problem and the residue identities behind them.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_gk;
use crate::scalar::{principal_sqrt, re, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPair<T> {
    pub plus: T,
    pub minus: T,
}

impl<T: Real> DensityPair<T> {
    pub fn new(plus: T, minus: T) -> Result<Self> {
        if !(plus > T::zero() && minus > T::zero()) || !plus.is_finite() || !minus.is_finite() {
            return Err(Error::InvalidParameter(format!("densities must be positive, got ({plus}, {minus})")));
        }
        Ok(Self { plus, minus })
    }

    pub fn uniform(rho: T) -> Self {
        Self { plus: rho, minus: rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventParameter<T> {
    pub lambda: Complex<T>,
    pub sigma: T,
    pub lambda0: T,
}

impl<T: Real> ResolventParameter<T> {
    pub fn new(lambda: Complex<T>, sigma: T, lambda0: T) -> Self {
        Self { lambda, sigma, lambda0 }
    }

    /// Sector with σ = π/4 and no floor.
    pub fn with_default_sector(lambda: Complex<T>) -> Self {
        Self::new(lambda, T::FRAC_PI_4(), T::zero())
    }

    pub fn in_sector(&self) -> bool {
        sector_check(self.lambda, self.sigma, self.lambda0)
    }

    pub fn require_sector(&self) -> Result<()> {
        if self.in_sector() {
            Ok(())
        } else {
            Err(Error::OutsideSector { re: self.lambda.re.as_f64(), im: self.lambda.im.as_f64() })
        }
    }
}

/// `|arg lam| < π − sigma` and `|lam| > lambda0`.
pub fn sector_check<T: Real>(lam: Complex<T>, sigma: T, lambda0: T) -> bool {
    if lam.norm() <= lambda0 || lam.norm() == T::zero() {
        return false;
    }
    lam.arg().abs() < T::PI() - sigma
}

#[derive(Debug, Clone)]
pub struct SymbolTable<T> {
    pub freqs: Vec<Vec<T>>,
    pub a_plus: Vec<Complex<T>>,
    pub a_minus: Vec<Complex<T>>,
    pub xi_norm: Vec<T>,
    pub denom: Vec<Complex<T>>,
    /// Index of the gauged `(λ, ξ') = (0, 0)` entry, if any.
    pub degenerate: Option<usize>,
}

pub fn norm_of<T: Real>(xi: &[T]) -> T {
    xi.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

/// Symbols `A± = √(ρ±λ + |ξ'|²)` and `ρ₊A₋ + ρ₋A₊` at each frequency.
/// With `gauge` the degenerate entry is kept and set to zero instead of rejected.
pub fn eval_symbols<T: Real>(
    freqs: &[Vec<T>],
    lam: Complex<T>,
    rho: DensityPair<T>,
    gauge: bool,
) -> Result<SymbolTable<T>> {
    let mut table = SymbolTable {
        freqs: freqs.to_vec(),
        a_plus: Vec::with_capacity(freqs.len()),
        a_minus: Vec::with_capacity(freqs.len()),
        xi_norm: Vec::with_capacity(freqs.len()),
        denom: Vec::with_capacity(freqs.len()),
        degenerate: None,
    };
    let lam_zero = lam.norm() == T::zero();
    for (i, xi) in freqs.iter().enumerate() {
        let k = norm_of(xi);
        if lam_zero && k == T::zero() {
            if !gauge {
                return Err(Error::DegenerateMode);
            }
            table.degenerate = Some(i);
        }
        let (ap, am) = if lam_zero {
            (re(k), re(k))
        } else {
            (principal_sqrt(lam * rho.plus + k * k), principal_sqrt(lam * rho.minus + k * k))
        };
        table.a_plus.push(ap);
        table.a_minus.push(am);
        table.xi_norm.push(k);
        table.denom.push(ap * rho.minus + am * rho.plus);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    APlus,
    AMinus,
    Denominator,
    XiNorm,
}

#[derive(Debug, Clone)]
pub struct BoundEntry {
    pub kind: SymbolKind,
    pub order: usize,
    /// max over probes of |∂^α symbol^s| / (|λ|^{1/2} + |ξ'|)^{s−|α|}
    pub max_ratio: f64,
    /// largest relative disagreement between the two step sizes
    pub richardson_gap: f64,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn get(&self, kind: SymbolKind, order: usize) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.order == order)
    }
}

fn symbol_power<T: Real>(kind: SymbolKind, xi: &[f64], lam: Complex<f64>, rho: DensityPair<T>, s: f64) -> Complex<f64> {
    let k2: f64 = xi.iter().map(|x| x * x).sum();
    let (rp, rm) = (rho.plus.as_f64(), rho.minus.as_f64());
    let ap = principal_sqrt(lam * rp + k2);
    let am = principal_sqrt(lam * rm + k2);
    let base = match kind {
        SymbolKind::APlus => ap,
        SymbolKind::AMinus => am,
        SymbolKind::Denominator => ap * rm + am * rp,
        SymbolKind::XiNorm => Complex::new(k2.sqrt(), 0.0),
    };
    base.powf(s)
}

fn multi_indices(dims: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; dims];
    fn rec(d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if d + 1 == cur.len() {
            cur[d] = left;
            out.push(cur.clone());
            return;
        }
        for a in 0..=left {
            cur[d] = a;
            rec(d + 1, left - a, cur, out);
        }
    }
    if dims == 0 {
        return out;
    }
    rec(0, order, &mut cur, &mut out);
    out
}

const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

fn fd_derivative<F: Fn(&[f64]) -> Complex<f64>>(f: &F, xi: &[f64], alpha: &[usize], h: f64) -> Complex<f64> {
    // tensor product of fourth-order central stencils
    let active: Vec<usize> = (0..xi.len()).filter(|&d| alpha[d] > 0).collect();
    let mut total = Complex::new(0.0, 0.0);
    let n = active.len();
    let count = 5usize.pow(n as u32);
    for code in 0..count {
        let mut c = code;
        let mut w = 1.0;
        let mut p = xi.to_vec();
        for &d in &active {
            let o = c % 5;
            c /= 5;
            let st = if alpha[d] == 1 { &D1 } else { &D2 };
            w *= st[o] / h.powi(alpha[d] as i32);
            p[d] += (o as f64 - 2.0) * h;
        }
        if w != 0.0 {
            total += f(&p) * w;
        }
    }
    total
}

/// Observed symbol-bound constants over `probes` (tangential frequencies, none at ξ' = 0).
pub fn verify_symbol_bounds<T: Real>(
    probes: &[Vec<T>],
    lam: Complex<T>,
    rho: DensityPair<T>,
    s: f64,
    max_order: usize,
) -> Result<BoundReport> {
    if max_order > 2 {
        return Err(Error::InvalidParameter("max_order above 2 is not supported".into()));
    }
    let laml = Complex::new(lam.re.as_f64(), lam.im.as_f64());
    let mut entries = Vec::new();
    for kind in [SymbolKind::APlus, SymbolKind::AMinus, SymbolKind::Denominator, SymbolKind::XiNorm] {
        for order in 0..=max_order {
            let mut max_ratio = 0.0f64;
            let mut gap = 0.0f64;
            for probe in probes {
                let xi: Vec<f64> = probe.iter().map(|v| v.as_f64()).collect();
                let k = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                let scale = laml.norm().sqrt() + k;
                if order > 0 {
                    let h = (0.02 * scale).min(k / 8.0);
                    if !(h > 1e-6 * scale.max(1e-300)) {
                        return Err(Error::StencilUnderflow(format!(
                            "probe |xi'| = {k:e} too close to the origin for the stencil"
                        )));
                    }
                    for alpha in multi_indices(xi.len(), order) {
                        let f = |p: &[f64]| symbol_power(kind, p, laml, rho, s);
                        let d_h = fd_derivative(&f, &xi, &alpha, h);
                        let d_h2 = fd_derivative(&f, &xi, &alpha, 0.5 * h);
                        let floor = 1e-8 * scale.powf(s - order as f64);
                        let rel = (d_h - d_h2).norm() / d_h2.norm().max(floor).max(1e-300);
                        // fourth order: the half step is 16x closer
                        gap = gap.max(rel);
                        let ratio = d_h2.norm() / scale.powf(s - order as f64);
                        max_ratio = max_ratio.max(ratio);
                    }
                } else {
                    let v = symbol_power(kind, &xi, laml, rho, s);
                    max_ratio = max_ratio.max(v.norm() / scale.powf(s));
                }
            }
            entries.push(BoundEntry { kind, order, max_ratio, richardson_gap: gap });
        }
    }
    Ok(BoundReport { entries })
}

#[derive(Debug, Clone, Copy)]
pub struct ResidueValue {
    pub numeric: Complex<f64>,
    pub closed: Complex<f64>,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ResidueCheck {
    pub first: ResidueValue,
    /// Absent at ξ' = 0, where the second kernel is not integrable.
    pub second: Option<ResidueValue>,
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn integrate_line<F: Fn(f64) -> Complex<f64>>(f: &F, a: f64, eps: f64) -> Result<Complex<f64>> {
    let m = (46.0 / eps).sqrt();
    let periods = (a.abs() * m / std::f64::consts::PI).ceil() as usize;
    let panels = (2 * periods).max(32);
    let tol = 1e-13;
    let (v, e) = adaptive_gk(f, -m, m, panels, tol, 50);
    if e > 1e-10 {
        return Err(Error::QuadratureNotConverged { estimate: e, tol: 1e-10 });
    }
    Ok(v / (2.0 * std::f64::consts::PI))
}

/// Numerical check of the two residue identities in the normal frequency variable.
pub fn residue_check<T: Real>(xi_norm: T, a: T, eps: T, lam: Complex<T>, rho: T) -> Result<ResidueCheck> {
    let (k, a, eps, rho) = (xi_norm.as_f64(), a.as_f64(), eps.as_f64(), rho.as_f64());
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let lam = Complex::new(lam.re.as_f64(), lam.im.as_f64());
    if lam.im == 0.0 && lam.re <= 0.0 {
        return Err(Error::OutsideSector { re: lam.re, im: lam.im });
    }
    let i = Complex::new(0.0, 1.0);
    let k2 = k * k;
    let shift = lam * rho + k2;
    let first_integrand = |x: f64| (-eps * (k2 + x * x)).exp() * i * x * (i * a * x).exp() / (shift + x * x);
    let numeric = integrate_line(&first_integrand, a, eps)?;
    let amp = principal_sqrt(shift);
    let closed = -(sign(a) / 2.0) * (lam * eps * rho).exp() * (-amp * a.abs()).exp();
    let first = ResidueValue { numeric, closed, abs_error: (numeric - closed).norm() };

    let second = if k > 0.0 {
        let f2 = |x: f64| (-eps * (k2 + x * x)).exp() * i * x * (i * a * x).exp() / (k2 + x * x);
        let numeric = integrate_line(&f2, a, eps)?;
        let closed = Complex::new(-(sign(a) / 2.0) * (-k * a.abs()).exp(), 0.0);
        Some(ResidueValue { numeric, closed, abs_error: (numeric - closed).norm() })
    } else {
        None
    };
    Ok(ResidueCheck { first, second })
}

/// Default 3×3×3 sample of `(a, ε, λ)`: the Gaussian factor breaks the contour
/// argument by `O(exp(−a²/4ε))`, so the sample keeps `a²/4ε ≥ 25`.
pub fn default_residue_sample() -> (Vec<f64>, Vec<f64>, Vec<Complex<f64>>) {
    (
        vec![-1.0, 1.0, 1.5],
        vec![0.002, 0.005, 0.01],
        vec![Complex::new(1.0, 0.0), Complex::new(0.0, 2.0), Complex::from_polar(10.0, 2.2)],
    )
}
