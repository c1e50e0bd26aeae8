//! Monotone piecewise cubic Hermite interpolation (Fritsch–Carlson slopes,
//! weighted harmonic mean in the interior, shape-preserving three-point
//! endpoint formula).

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidArgument("pchip needs matching x and y of length >= 2".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pchip data must be finite".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&hi| hi <= 0.0) {
            return Err(Error::InvalidArgument("pchip abscissae must be strictly increasing".into()));
        }
        let delta: Vec<f64> = y.windows(2).zip(&h).map(|(w, hi)| (w[1] - w[0]) / hi).collect();

        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Ok(Self { x, y, d });
        }
        for k in 1..n - 1 {
            let (s1, s2) = (delta[k - 1], delta[k]);
            if s1 * s2 > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / s1 + w2 / s2);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Ok(Self { x, y, d })
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Evaluates the interpolant; `None` outside `[x_min, x_max]`.
    pub fn eval(&self, t: f64) -> Option<f64> {
        if !(t >= self.x_min() && t <= self.x_max()) {
            return None;
        }
        let n = self.x.len();
        // last k with x[k] <= t, clamped to a valid interval
        let k = match self.x.partition_point(|&xk| xk <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1])
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 < 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
