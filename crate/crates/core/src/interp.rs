//! One-dimensional interpolation helpers.

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len(), "pchip needs ≥2 matching samples");
        debug_assert!(x.windows(2).all(|w| w[1] > w[0]), "pchip abscissae not increasing");
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    d[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { x, y, d }
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    fn interval(&self, t: f64) -> usize {
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= self.x.len() => self.x.len() - 2,
            p => p - 1,
        }
    }

    /// Value at `t`; clamps outside the sample range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    /// Exact integral of the interpolant over `[a, b]` (clamped to the sample range).
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integrate(b, a);
        }
        let lo = a.max(self.x[0]);
        let hi = b.min(*self.x.last().unwrap());
        if hi <= lo {
            return 0.0;
        }
        let mut total = 0.0;
        let mut i = self.interval(lo);
        let mut left = lo;
        while left < hi && i < self.x.len() - 1 {
            let right = hi.min(self.x[i + 1]);
            total += self.segment_integral(i, left, right);
            left = right;
            i += 1;
        }
        total
    }

    fn segment_integral(&self, i: usize, a: f64, b: f64) -> f64 {
        // Three-point Gauss–Legendre is exact for the cubic on one segment.
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let g = (0.6f64).sqrt();
        let f = |t: f64| {
            let h = self.x[i + 1] - self.x[i];
            let s = (t - self.x[i]) / h;
            let (h00, h10, h01, h11) = hermite_basis(s);
            h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
        };
        r * (5.0 * f(c - g * r) + 8.0 * f(c) + 5.0 * f(c + g * r)) / 9.0
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

/// Linear interpolation on sorted abscissae, clamped at the ends.
pub fn linear(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    if t <= x[0] {
        return y[0];
    }
    if t >= x[n - 1] {
        return y[n - 1];
    }
    let p = x.partition_point(|&v| v <= t).clamp(1, n - 1);
    let s = (t - x[p - 1]) / (x[p] - x[p - 1]);
    y[p - 1] + s * (y[p] - y[p - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_samples_and_is_monotone() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
        let p = Pchip::new(x.clone(), y.clone());
        for (a, b) in x.iter().zip(&y) {
            assert!((p.eval(*a) - b).abs() < 1e-14);
        }
        let mut prev = p.eval(0.0);
        for i in 1..2000 {
            let v = p.eval(i as f64 * x[11] / 2000.0);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn integral_of_linear_data_is_exact() {
        let x: Vec<f64> = vec![0.0, 0.5, 1.5, 2.0, 3.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let p = Pchip::new(x, y);
        // ∫_{0.2}^{3.0} (2t+1) dt
        let exact = (3.0f64 * 3.0 + 3.0) - (0.04 + 0.2);
        assert!((p.integrate(0.2, 3.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn linear_clamps() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 3.0, 2.0];
        assert_eq!(linear(&x, &y, -1.0), 1.0);
        assert_eq!(linear(&x, &y, 5.0), 2.0);
        assert!((linear(&x, &y, 1.5) - 2.5).abs() < 1e-15);
    }
}
