//! Gauss rules and adaptive integration.

use num_complex::Complex;

use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [0, 1].
pub fn gauss_unit<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre(n);
    (x.iter().map(|&v| T::lit(0.5 * (v + 1.0))).collect(), w.iter().map(|&v| T::lit(0.5 * v)).collect())
}

const KRONROD_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const KRONROD_W: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GAUSS7_W: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> Complex<f64>>(f: &F, a: f64, b: f64) -> (Complex<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * KRONROD_W[7];
    let mut g = fc * GAUSS7_W[3];
    for j in 0..7 {
        let dx = h * KRONROD_X[j];
        let s = f(c - dx) + f(c + dx);
        k += s * KRONROD_W[j];
        if j % 2 == 1 {
            g += s * GAUSS7_W[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss–Kronrod (7/15) integration of a complex integrand.
/// Returns the value and the summed error estimate.
pub fn adaptive_gk<F: Fn(f64) -> Complex<f64>>(
    f: &F,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    max_depth: usize,
) -> (Complex<f64>, f64) {
    let mut total = Complex::new(0.0, 0.0);
    let mut err = 0.0;
    let mut stack: Vec<(f64, f64, usize, f64)> = Vec::new();
    let width = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        stack.push((lo, lo + width, 0, tol / panels as f64));
    }
    while let Some((lo, hi, depth, local_tol)) = stack.pop() {
        let (v, e) = gk15(f, lo, hi);
        if e <= local_tol || depth >= max_depth {
            total += v;
            err += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1, 0.5 * local_tol));
            stack.push((mid, hi, depth + 1, 0.5 * local_tol));
        }
    }
    (total, err)
}
