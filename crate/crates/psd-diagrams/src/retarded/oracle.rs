//! Slow independent checks of the frequency-space rules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{RetardedValue, SignedOrdering};
use crate::error::{PsdError, PsdResult};
use crate::quad::Composite;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `∫_{upper > t_1 > t_2 > …} Π e^{r_k t_k} dt` by nested quadrature,
/// truncated at `upper − span`.
pub fn chain_quadrature(rates: &[Complex64], upper: f64, span: f64) -> Complex64 {
    let q = Composite::new(16, 0.5);
    fn rec(q: &Composite, rates: &[Complex64], upper: f64, floor: f64) -> Complex64 {
        match rates.split_first() {
            None => c(1.0, 0.0),
            Some((r, rest)) => q.integrate(floor, upper, |t| (r * t).exp() * rec(q, rest, t, floor)),
        }
    }
    rec(&q, rates, upper, upper - span)
}

/// `Λ` of one ordering by direct time integration with damping `e^{η t_j}`
/// on every internal time and `t_e = 0`.
pub fn lambda_quadrature(o: &SignedOrdering, sigmas: &[f64], eta: f64) -> Complex64 {
    let span = 40.0 / eta;
    let rate = |s: usize| c(eta, sigmas[s]);
    let minus: Vec<Complex64> = o.minus.iter().map(|&s| rate(s)).collect();
    let back: Vec<Complex64> = o.plus.iter().rev().map(|&s| rate(s)).collect();
    o.sign as f64 * chain_quadrature(&minus, 0.0, span) * chain_quadrature(&back, 0.0, span)
}

/// Grid parameters for [`fourier_inversion_oracle`].
#[derive(Clone, Copy, Debug)]
pub struct InversionGrid {
    pub points: usize,
    pub half_width: f64,
}

impl Default for InversionGrid {
    fn default() -> Self {
        Self { points: 1 << 16, half_width: 500.0 }
    }
}

struct Piece {
    /// Phase `e^{i x s}` with `s ∈ {0, t_b}` encoded as the flag.
    shifted: bool,
    scale: Complex64,
    /// Factors `1/(α x + β)`.
    factors: Vec<(f64, Complex64)>,
}

impl Piece {
    fn eval(&self, x: f64) -> Complex64 {
        let mut v = self.scale;
        for &(a, b) in &self.factors {
            v /= b + a * x;
        }
        v
    }
}

/// Inverse Fourier transform of a three-slot [`RetardedValue`] at internal
/// times `(t_a, t_b)` with `t_e = 0`.
///
/// The `ω_b` integral is done by residues. The `ω_a` integral runs on a
/// uniform grid after subtracting a three-term model of the large-`ω`
/// tail whose transform is known in closed form.
pub fn fourier_inversion_oracle(value: &RetardedValue, times: &[f64], grid: InversionGrid) -> PsdResult<Complex64> {
    if value.n_slots != 3 || times.len() != 3 {
        return Err(PsdError::Unsupported("inversion oracle handles three slots only".into()));
    }
    let e = value.external_slot;
    let others: Vec<usize> = (0..3).filter(|&j| j != e).collect();
    let (a, b) = (others[0], others[1]);
    let (ta, tb) = (times[a] - times[e], times[b] - times[e]);
    if tb >= 0.0 {
        return Ok(c(0.0, 0.0));
    }
    let eta = value.eta;
    let mut pieces = Vec::new();
    for term in &value.terms {
        let lin: Vec<(f64, f64, Complex64)> = term
            .denominators
            .iter()
            .map(|d| {
                ((d.slots >> a & 1) as f64, (d.slots >> b & 1) as f64, c(d.offset, -(d.eta_multiple as f64) * eta))
            })
            .collect();
        // Poles in ω_b: y = −α x − β₀ for every factor containing b.
        let poles: Vec<usize> = (0..lin.len()).filter(|&k| lin[k].1 == 1.0).collect();
        if poles.is_empty() {
            continue;
        }
        for &k in &poles {
            let (ak, _, bk) = lin[k];
            let mut factors = Vec::new();
            for &l in &poles {
                if l != k {
                    let (al, _, bl) = lin[l];
                    // p_k − p_l = −(α_k − α_l) x − β_k + β_l
                    factors.push((al - ak, bl - bk));
                }
            }
            for (l, &(al, bf, bl)) in lin.iter().enumerate() {
                if bf == 0.0 && l != k {
                    factors.push((al, bl));
                }
            }
            // i e^{−i p_k t_b} = i e^{i α_k x t_b} e^{i β_k t_b}
            let scale = term.weight * c(0.0, 1.0) * (c(0.0, 1.0) * bk * tb).exp();
            pieces.push(Piece { shifted: ak == 1.0, scale, factors });
        }
    }
    let mut total = c(0.0, 0.0);
    for shifted in [false, true] {
        let group: Vec<&Piece> = pieces.iter().filter(|p| p.shifted == shifted).collect();
        if group.is_empty() {
            continue;
        }
        let r = |x: f64| group.iter().map(|p| p.eval(x)).sum::<Complex64>();
        let tau = if shifted { ta - tb } else { ta };
        total += invert_decaying(&r, tau, grid)?;
    }
    Ok(total)
}

/// `∫ dx/2π e^{−i x τ} R(x)` for `R = O(1/x)` analytic in the lower half plane.
fn invert_decaying(r: &dyn Fn(f64) -> Complex64, tau: f64, grid: InversionGrid) -> PsdResult<Complex64> {
    let lam = 1e4;
    let xs: [f64; 3] = [lam, -lam, 2.0 * lam];
    let m = DMatrix::from_fn(3, 3, |i, k| c(xs[i].powi(-(k as i32 + 1)), 0.0));
    let rhs = DVector::from_iterator(3, xs.iter().map(|&x| r(x)));
    let coef = m.lu().solve(&rhs).ok_or_else(|| PsdError::Structure("asymptotic fit failed".into()))?;
    let (a1, a2, a3) = (coef[0], coef[1], coef[2]);
    let p = c(0.0, 1.0);
    let b1 = a1;
    let b2 = a2 - p * b1;
    let b3 = a3 - p * p * b1 - 2.0 * p * b2;
    let model = |x: f64| {
        let d = c(x, 0.0) - p;
        b1 / d + b2 / (d * d) + b3 / (d * d * d)
    };
    let h = 2.0 * grid.half_width / grid.points as f64;
    let mut sum = c(0.0, 0.0);
    for k in 0..grid.points {
        let x = -grid.half_width + (k as f64 + 0.5) * h;
        sum += (c(0.0, -x * tau)).exp() * (r(x) - model(x));
    }
    sum *= h / (2.0 * std::f64::consts::PI);
    if tau < 0.0 {
        let s = c(0.0, -tau);
        let ph = (-p * c(0.0, 1.0) * tau).exp();
        sum += c(0.0, 1.0) * ph * (b1 + b2 * s + b3 * s * s / 2.0);
    }
    Ok(sum)
}
