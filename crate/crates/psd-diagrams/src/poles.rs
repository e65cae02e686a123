//! Exact pole-sum representation of spectral objects.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Pole energies closer than this are merged.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Pole {
    pub energy: f64,
    pub weight: DMatrix<Complex64>,
}

/// `X(ω) = Σ_k W_k · 2πδ(ω − E_k)` with matrix weights over level indices.
#[derive(Clone, Debug)]
pub struct PoleSum {
    pub dim: usize,
    pub poles: Vec<Pole>,
}

impl PoleSum {
    pub fn new(dim: usize) -> Self {
        Self { dim, poles: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    /// Appends a pole without merging; call [`PoleSum::merged`] afterwards.
    pub fn push(&mut self, energy: f64, weight: DMatrix<Complex64>) {
        debug_assert_eq!(weight.nrows(), self.dim);
        self.poles.push(Pole { energy, weight });
    }

    /// Sorts by energy and sums weights of poles within [`MERGE_TOL`].
    ///
    /// Clusters are formed greedily from the lowest energy; the merged pole
    /// sits at the first member's energy.
    pub fn merged(mut self) -> Self {
        self.poles
            .sort_by(|a, b| a.energy.total_cmp(&b.energy));
        let mut out: Vec<Pole> = Vec::with_capacity(self.poles.len());
        for p in self.poles {
            match out.last_mut() {
                Some(last) if (p.energy - last.energy).abs() <= MERGE_TOL => {
                    last.weight += p.weight;
                }
                _ => out.push(p),
            }
        }
        Self { dim: self.dim, poles: out }
    }

    /// Union of two pole lists followed by merging.
    pub fn combine(&self, other: &PoleSum) -> PoleSum {
        let mut all = self.clone();
        all.poles.extend(other.poles.iter().cloned());
        all.merged()
    }

    pub fn scaled(&self, s: f64) -> PoleSum {
        PoleSum {
            dim: self.dim,
            poles: self
                .poles
                .iter()
                .map(|p| Pole { energy: p.energy, weight: p.weight.scale(s) })
                .collect(),
        }
    }

    /// Weight at the pole within [`MERGE_TOL`] of `energy`, if any.
    pub fn weight_at(&self, energy: f64) -> Option<&DMatrix<Complex64>> {
        self.poles
            .iter()
            .find(|p| (p.energy - energy).abs() <= MERGE_TOL)
            .map(|p| &p.weight)
    }

    /// Lorentzian-broadened value `Σ_k W_k · 2η/((ω−E_k)² + η²)`.
    pub fn broadened(&self, omega: f64, eta: f64) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for p in &self.poles {
            let x = omega - p.energy;
            let l = 2.0 * eta / (x * x + eta * eta);
            m += p.weight.scale(l);
        }
        m
    }

    /// Largest Frobenius deviation from Hermiticity over all poles.
    pub fn max_antihermitian(&self) -> f64 {
        self.poles
            .iter()
            .map(|p| (&p.weight - p.weight.adjoint()).norm())
            .fold(0.0, f64::max)
    }
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(x: f64) -> DMatrix<Complex64> {
        DMatrix::from_element(1, 1, Complex64::new(x, 0.0))
    }

    #[test]
    fn merge_combines_close_poles() {
        let mut p = PoleSum::new(1);
        p.push(1.0, w(1.0));
        p.push(0.0, w(2.0));
        p.push(1.0 + 1e-12, w(3.0));
        let m = p.merged();
        assert_eq!(m.len(), 2);
        assert_eq!(m.poles[1].weight[(0, 0)].re, 4.0);
        assert_eq!(m.poles[0].energy, 0.0);
    }

    #[test]
    fn min_eig_of_indefinite() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        );
        assert!((min_eigenvalue(&m) + 1.0).abs() < 1e-14);
    }
}
