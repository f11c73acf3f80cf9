//! Dense and banded complex LU, restarted GMRES, smallest singular value.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cz, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![cz(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * self.cols + j] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * self.cols + j] += v;
    }

    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).fold(cz(), |s, (a, b)| s + *a * *b)
            })
            .collect()
    }

    pub fn row_sum(&self, i: usize) -> Complex<T> {
        self.data[i * self.cols..(i + 1) * self.cols].iter().fold(cz(), |s, v| s + *v)
    }

    pub fn lu(&self) -> Result<DenseLu<T>> {
        DenseLu::factor(self.clone())
    }
}

/// `PA = LU` with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<Complex<T>>,
    perm: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor(a: DenseMatrix<T>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::InvalidParameter("LU needs a square matrix".into()));
        }
        let n = a.rows;
        let mut lu = a.data;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(T::zero(), |m, v| m.max(v.norm()));
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].norm();
            for i in k + 1..n {
                let v = lu[i * n + k].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * T::epsilon() * T::lit(1e-3) || best == T::zero() {
                return Err(Error::SingularSystem);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv = lu[k * n + k].inv();
            for i in k + 1..n {
                let l = lu[i * n + k] * inv;
                lu[i * n + k] = l;
                if l.norm() == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= l * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n;
        let mut x: Vec<Complex<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves `Aᴴ x = b`.
    pub fn solve_adjoint(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = s / self.lu[i * n + i].conj();
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![cz(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Band matrix with `kl` sub- and `ku` super-diagonals, with room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![cz(); n * width] }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        if j + self.kl < i || j > i + self.ku {
            return cz();
        }
        self.data[self.slot(i, j)]
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: Complex<T>) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).fold(cz(), |s, j| s + self.get(i, j) * x[j])
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1) {
                d.set(i, j, self.get(i, j));
            }
        }
        d
    }

    pub fn lu(mut self) -> Result<BandLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0; n];
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.norm()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].norm();
            for i in k + 1..=last {
                let v = self.data[self.slot(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || best <= scale * T::epsilon() * T::lit(1e-3) {
                return Err(Error::SingularSystem);
            }
            piv[k] = p;
            let right = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let inv = self.data[self.slot(k, k)].inv();
            for i in k + 1..=last {
                let si = self.slot(i, k);
                let l = self.data[si] * inv;
                self.data[si] = l;
                if l.norm() == T::zero() {
                    continue;
                }
                for j in k + 1..=right {
                    let u = self.data[self.slot(k, j)];
                    let s = self.slot(i, j);
                    self.data[s] -= l * u;
                }
            }
        }
        Ok(BandLu { band: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu<T> {
    band: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Real> BandLu<T> {
    pub fn solve(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let a = &self.band;
        let n = a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            for i in k + 1..=(k + a.kl).min(n - 1) {
                x[i] -= a.data[a.slot(i, k)] * xk;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + a.kl + a.ku).min(n - 1) {
                s -= a.data[a.slot(i, j)] * x[j];
            }
            x[i] = s / a.data[a.slot(i, i)];
        }
        x
    }
}

fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(cz(), |s, (x, y)| s + x.conj() * *y)
}

fn norm<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |s, v| s + v.norm_sqr()).sqrt()
}

#[derive(Debug, Clone)]
pub struct GmresOutcome<T> {
    pub x: Vec<Complex<T>>,
    pub iterations: usize,
    pub residuals: Vec<T>,
}

/// Restarted GMRES for `A x = b` with relative tolerance `tol`.
pub fn gmres<T: Real, F: Fn(&[Complex<T>]) -> Vec<Complex<T>>>(
    apply: F,
    b: &[Complex<T>],
    restart: usize,
    tol: T,
    max_iter: usize,
) -> Result<GmresOutcome<T>> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![cz(); n];
    let mut residuals = vec![T::one()];
    if bnorm == T::zero() {
        return Ok(GmresOutcome { x, iterations: 0, residuals });
    }
    let mut total = 0;
    let mut stagnant = 0;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<Complex<T>> = b.iter().zip(&ax).map(|(a, c)| *a - *c).collect();
        let beta = norm(&r);
        if beta <= tol * bnorm {
            return Ok(GmresOutcome { x, iterations: total, residuals });
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<Complex<T>>> = vec![r.iter().map(|c| *c / beta).collect()];
        let mut hmat = vec![vec![cz::<T>(); m]; m + 1];
        let mut cs = vec![cz::<T>(); m];
        let mut sn = vec![cz::<T>(); m];
        let mut g = vec![cz::<T>(); m + 1];
        g[0] = Complex::new(beta, T::zero());
        let mut k_used = 0;
        let before = *residuals.last().unwrap();
        for k in 0..m {
            let mut w = apply(&v[k]);
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = dot(vi, &w);
                    hmat[i][k] += hij;
                    for (wj, vj) in w.iter_mut().zip(vi) {
                        *wj -= hij * *vj;
                    }
                }
            }
            let hn = norm(&w);
            hmat[k + 1][k] = Complex::new(hn, T::zero());
            for i in 0..k {
                let t = cs[i].conj() * hmat[i][k] + sn[i].conj() * hmat[i + 1][k];
                hmat[i + 1][k] = -sn[i] * hmat[i][k] + cs[i] * hmat[i + 1][k];
                hmat[i][k] = t;
            }
            let (a, bb) = (hmat[k][k], hmat[k + 1][k]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == T::zero() {
                cs[k] = Complex::new(T::one(), T::zero());
                sn[k] = cz();
            } else {
                cs[k] = a / den;
                sn[k] = bb / den;
            }
            hmat[k][k] = cs[k].conj() * a + sn[k].conj() * bb;
            hmat[k + 1][k] = cz();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            total += 1;
            k_used = k + 1;
            let rel = g[k + 1].norm() / bnorm;
            residuals.push(rel);
            if rel <= tol || hn <= T::epsilon() * bnorm {
                break;
            }
            v.push(w.iter().map(|c| *c / hn).collect());
        }
        let mut y = vec![cz::<T>(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hmat[i][j] * y[j];
            }
            y[i] = s / hmat[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += *yj * *vi;
            }
        }
        let after = *residuals.last().unwrap();
        if after > before * T::lit(0.999) {
            stagnant += 1;
            if stagnant >= 3 {
                return Err(Error::InversionStagnated(after.as_f64()));
            }
        } else {
            stagnant = 0;
        }
    }
    let ax = apply(&x);
    let r: Vec<Complex<T>> = b.iter().zip(&ax).map(|(a, c)| *a - *c).collect();
    if norm(&r) <= tol * bnorm {
        Ok(GmresOutcome { x, iterations: total, residuals })
    } else {
        Err(Error::SolverFailed(format!("GMRES stopped at relative residual {:e}", (norm(&r) / bnorm).as_f64())))
    }
}

/// Smallest singular value by inverse iteration on `AᴴA`.
pub fn smallest_singular_value<T: Real>(a: &DenseMatrix<T>) -> Result<T> {
    let lu = match a.lu() {
        Ok(lu) => lu,
        Err(Error::SingularSystem) => return Ok(T::zero()),
        Err(e) => return Err(e),
    };
    let n = a.rows;
    let mut x: Vec<Complex<T>> = (0..n)
        .map(|i| Complex::new(T::one() + T::lit(0.37 * ((i * 7919) % 101) as f64 / 101.0), T::lit(0.1)))
        .collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v = *v / nx);
    let mut mu_prev = T::zero();
    for _ in 0..1000 {
        let z = lu.solve_adjoint(&x);
        let w = lu.solve(&z);
        let mu = norm(&w);
        if !mu.is_finite() || mu == T::zero() {
            return Ok(T::zero());
        }
        x = w.iter().map(|v| *v / mu).collect();
        if (mu - mu_prev).abs() <= T::lit(1e-12) * mu {
            return Ok(T::one() / mu.sqrt());
        }
        mu_prev = mu;
    }
    Ok(T::one() / mu_prev.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn sample(n: usize) -> DenseMatrix<f64> {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
                m.set(i, j, c(v, 0.3 * v * (i as f64 - j as f64)));
            }
            m.add_to(i, i, c(0.1, 0.0));
        }
        m
    }

    #[test]
    fn dense_solve_and_adjoint() {
        let a = sample(9);
        let lu = a.lu().unwrap();
        let b: Vec<_> = (0..9).map(|i| c(i as f64, 1.0)).collect();
        let x = lu.solve(&b);
        let r = a.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-10));
        let y = lu.solve_adjoint(&b);
        for i in 0..9 {
            let s: Complex<f64> = (0..9).map(|k| a.get(k, i).conj() * y[k]).sum();
            assert!((s - b[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn band_matches_dense() {
        let n = 30;
        let mut band = BandMatrix::<f64>::zeros(n, 2, 3);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 3).min(n - 1) {
                let v = ((i * 5 + j * 3) % 7) as f64 - 3.0;
                band.add_to(i, j, c(v, 0.1 * j as f64));
            }
        }
        let dense = band.to_dense();
        let b: Vec<_> = (0..n).map(|i| c(1.0, i as f64)).collect();
        let xb = band.clone().lu().unwrap().solve(&b);
        let xd = dense.lu().unwrap().solve(&b);
        assert!(xb.iter().zip(&xd).all(|(p, q)| (p - q).norm() < 1e-9));
    }

    #[test]
    fn gmres_converges() {
        let a = sample(20);
        let mut shifted = a.clone();
        for i in 0..20 {
            shifted.add_to(i, i, c(5.0, 0.0));
        }
        let b: Vec<_> = (0..20).map(|i| c((i as f64).sin(), 0.0)).collect();
        let out = gmres(|x| shifted.mul_vec(x), &b, 10, 1e-12, 200).unwrap();
        let r = shifted.mul_vec(&out.x);
        assert!(r.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-10));
    }

    #[test]
    fn singular_value_of_diagonal() {
        let mut d = DenseMatrix::<f64>::zeros(4, 4);
        for (i, v) in [3.0, 0.5, 2.0, 7.0].iter().enumerate() {
            d.set(i, i, c(*v, 0.0));
        }
        let s = smallest_singular_value(&d).unwrap();
        assert!((s - 0.5).abs() < 1e-10);
    }
}
