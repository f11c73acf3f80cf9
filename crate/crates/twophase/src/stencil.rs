//! Finite-difference and interpolation weights on uniform lines.

/// Fornberg weights: `w[m][k]` approximates the m-th derivative at `z`
/// from samples at `x[k]`, for m = 0..=order.
pub fn fornberg(z: f64, x: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Start of a `width`-point window around `j` on `0..n`, shifted inward near the ends.
pub fn window_start(j: usize, width: usize, n: usize) -> usize {
    let half = (width - 1) / 2;
    j.saturating_sub(half).min(n - width)
}

/// Per-node derivative weights on `n` uniform nodes with spacing `h`.
#[derive(Debug, Clone)]
pub struct LineStencil {
    pub width: usize,
    pub starts: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

impl LineStencil {
    pub fn derivative(n: usize, h: f64, order: usize, width: usize) -> Self {
        assert!(n >= width, "line too short for the stencil");
        let mut starts = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            let s = window_start(j, width, n);
            let x: Vec<f64> = (0..width).map(|k| (s + k) as f64).collect();
            let w = fornberg(j as f64, &x, order);
            starts.push(s);
            weights.push(w[order].iter().map(|v| v / h.powi(order as i32)).collect());
        }
        Self { width, starts, weights }
    }
}

/// Lagrange basis of the nodes `0..width` evaluated at `t` (in node units).
pub fn lagrange_basis(t: f64, width: usize) -> Vec<f64> {
    (0..width)
        .map(|k| {
            let mut v = 1.0;
            for m in 0..width {
                if m != k {
                    v *= (t - m as f64) / (k as f64 - m as f64);
                }
            }
            v
        })
        .collect()
}
