//! Composite Gauss–Legendre quadrature used by the slow oracles.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite rule on [a, b] with panels of width at most `panel`.
pub struct Composite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panel: f64,
}

impl Composite {
    pub fn new(order: usize, panel: f64) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights, panel }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> Complex64) -> Complex64 {
        if b <= a {
            return Complex64::new(0.0, 0.0);
        }
        let panels = ((b - a) / self.panel).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let mut sum = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                sum += f(mid + 0.5 * h * x) * (0.5 * h * w);
            }
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_oscillatory() {
        let q = Composite::new(16, 1.0);
        let v = q.integrate(0.0, 10.0, |t| Complex64::new(0.0, 3.0 * t).exp());
        let exact = (Complex64::new(0.0, 30.0).exp() - 1.0) / Complex64::new(0.0, 3.0);
        assert!((v - exact).norm() < 1e-13);
    }
}
