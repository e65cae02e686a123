//! Model system and the non-interacting Green's function at finite temperature.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PsdError, PsdResult};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Two-body matrix elements `⟨ij|v|kl⟩` stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct VMat {
    n: usize,
    data: Vec<Complex64>,
}

impl VMat {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex64::new(0.0, 0.0); n * n * n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        self.data[self.idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, x: Complex64) {
        let p = self.idx(i, j, k, l);
        self.data[p] = x;
    }

    /// Sets an element together with its images under conjugation and pair exchange.
    pub fn set_symmetric(&mut self, i: usize, j: usize, k: usize, l: usize, x: Complex64) {
        self.set(i, j, k, l, x);
        self.set(j, i, l, k, x);
        self.set(k, l, i, j, x.conj());
        self.set(l, k, j, i, x.conj());
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// Largest violation of `⟨ij|v|kl⟩ = conj⟨kl|v|ij⟩` and `⟨ij|v|kl⟩ = ⟨ji|v|lk⟩`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let x = self.get(i, j, k, l);
                        worst = worst
                            .max((x - self.get(k, l, i, j).conj()).norm())
                            .max((x - self.get(j, i, l, k)).norm());
                    }
                }
            }
        }
        worst
    }

    /// Random interaction with the required symmetries and Frobenius norm `norm`.
    pub fn random(n: usize, norm: f64, rng: &mut impl Rng) -> Self {
        let mut raw = Self::zeros(n);
        for z in raw.data.iter_mut() {
            *z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let mut v = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let s = raw.get(i, j, k, l)
                            + raw.get(j, i, l, k)
                            + raw.get(k, l, i, j).conj()
                            + raw.get(l, k, j, i).conj();
                        v.set(i, j, k, l, s * 0.25);
                    }
                }
            }
        }
        let s = v.norm();
        if s > 0.0 {
            v.scaled(norm / s)
        } else {
            v
        }
    }
}

/// Discrete-level fermion system in grand-canonical equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub levels: Vec<f64>,
    pub vmat: VMat,
    pub beta: f64,
    pub mu: f64,
    pub eta: f64,
}

impl SystemSpec {
    pub fn new(levels: Vec<f64>, vmat: VMat, beta: f64, mu: f64, eta: f64) -> PsdResult<Self> {
        let s = Self { levels, vmat, beta, mu, eta };
        s.validate()?;
        Ok(s)
    }

    pub fn basis_size(&self) -> usize {
        self.levels.len()
    }

    pub fn validate(&self) -> PsdResult<()> {
        if self.levels.is_empty() {
            return Err(PsdError::InvalidSpec("basis_size must be at least 1".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(PsdError::InvalidSpec(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(PsdError::InvalidSpec(format!("eta must be positive, got {}", self.eta)));
        }
        if self.vmat.size() != self.levels.len() {
            return Err(PsdError::InvalidSpec(format!(
                "vmat size {} does not match {} levels",
                self.vmat.size(),
                self.levels.len()
            )));
        }
        let defect = self.vmat.symmetry_defect();
        if defect > 1e-10 {
            return Err(PsdError::InvalidSpec(format!(
                "vmat violates hermiticity or pair exchange symmetry (defect {defect:.3e})"
            )));
        }
        Ok(())
    }

    /// Reproducible random system: levels in [-1.5, 1.5], μ near zero.
    pub fn random(seed: u64, n_levels: usize, beta: f64, v_norm: f64, eta: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut levels: Vec<f64> = (0..n_levels).map(|_| rng.gen_range(-1.5..1.5)).collect();
        levels.sort_by(f64::total_cmp);
        let mu = rng.gen_range(-0.3..0.3);
        let vmat = VMat::random(n_levels, v_norm, &mut rng);
        Self { levels, vmat, beta, mu, eta }
    }

    pub fn with_vmat(&self, vmat: VMat) -> Self {
        Self { vmat, ..self.clone() }
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }
}

/// `1/(e^{βx}+1)`, saturating to exactly 0 or 1 outside floating range.
pub fn fermi(x: f64, beta: f64) -> f64 {
    let y = beta * x;
    if y > 700.0 {
        0.0
    } else if y < -700.0 {
        1.0
    } else if y >= 0.0 {
        let e = (-y).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + y.exp())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GKind {
    Lesser,
    Greater,
    Retarded,
    Advanced,
    Matsubara,
}

/// Frequency-space component: real-axis delta functions stay exact poles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FreqComponent {
    /// `±2πi · weight · δ(ω − energy)` (sign `+` for lesser, `−` for greater).
    Pole { energy: f64, weight: f64 },
    Value(Complex64),
}

/// Non-interacting propagator with cached occupations.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub spec: SystemSpec,
    pub occupations: Vec<f64>,
}

impl Propagator {
    pub fn new(spec: SystemSpec) -> Self {
        let occupations = spec.levels.iter().map(|e| fermi(e - spec.mu, spec.beta)).collect();
        Self { spec, occupations }
    }

    pub fn basis_size(&self) -> usize {
        self.spec.levels.len()
    }

    #[inline]
    pub fn f(&self, level: usize) -> f64 {
        self.occupations[level]
    }

    #[inline]
    pub fn fbar(&self, level: usize) -> f64 {
        fermi(self.spec.mu - self.spec.levels[level], self.spec.beta)
    }

    #[inline]
    pub fn energy(&self, level: usize) -> f64 {
        self.spec.levels[level]
    }

    fn check_level(&self, level: usize) -> PsdResult<()> {
        if level >= self.basis_size() {
            return Err(PsdError::InvalidSpec(format!(
                "level {level} out of range for basis of size {}",
                self.basis_size()
            )));
        }
        Ok(())
    }

    /// Real-time component `g^kind(t, t′)`.
    pub fn g_component_time(&self, level: usize, kind: GKind, t: f64, tp: f64) -> PsdResult<Complex64> {
        self.check_level(level)?;
        let phase = (-I * self.energy(level) * (t - tp)).exp();
        let greater = -I * self.fbar(level) * phase;
        let lesser = I * self.f(level) * phase;
        Ok(match kind {
            GKind::Greater => greater,
            GKind::Lesser => lesser,
            GKind::Retarded => {
                if t > tp {
                    greater - lesser
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            GKind::Advanced => {
                if tp > t {
                    -(greater - lesser)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            GKind::Matsubara => {
                return Err(PsdError::Unsupported("Matsubara component has no real-time form".into()))
            }
        })
    }

    /// Frequency component at complex `z`; lesser/greater come back as exact poles.
    pub fn g_component_freq(&self, level: usize, kind: GKind, z: Complex64) -> PsdResult<FreqComponent> {
        self.check_level(level)?;
        let e = self.energy(level);
        Ok(match kind {
            GKind::Lesser => FreqComponent::Pole { energy: e, weight: self.f(level) },
            GKind::Greater => FreqComponent::Pole { energy: e, weight: self.fbar(level) },
            GKind::Retarded => FreqComponent::Value(1.0 / (z - e + I * self.spec.eta)),
            GKind::Advanced => FreqComponent::Value(1.0 / (z - e - I * self.spec.eta)),
            GKind::Matsubara => FreqComponent::Value(1.0 / (z - e + self.spec.mu)),
        })
    }

    /// Pole entry of `g^<` or `g^>`; rejects resolvent kinds.
    pub fn g_pole(&self, level: usize, kind: GKind) -> PsdResult<(f64, f64)> {
        match self.g_component_freq(level, kind, Complex64::new(0.0, 0.0))? {
            FreqComponent::Pole { energy, weight } => Ok((energy, weight)),
            FreqComponent::Value(_) => Err(PsdError::Unsupported(format!(
                "{kind:?} component is a resolvent, not a pole-weight pair"
            ))),
        }
    }

    /// Square-root leg factor of a cut line, with `t₀ = 0`.
    pub fn factorize_cut_line(&self, level: usize, kind: GKind) -> PsdResult<CutLeg> {
        self.check_level(level)?;
        let amplitude = match kind {
            GKind::Lesser => self.f(level).sqrt(),
            GKind::Greater => self.fbar(level).sqrt(),
            _ => return Err(PsdError::Unsupported("only lesser/greater lines are cut".into())),
        };
        Ok(CutLeg { energy: self.energy(level), amplitude })
    }

    /// Zero-temperature reference split; fails when the level sits exactly at μ.
    pub fn split_zero_temperature(&self, level: usize) -> PsdResult<ZeroTemperatureSplit> {
        self.check_level(level)?;
        let e = self.energy(level);
        if e == self.spec.mu {
            return Err(PsdError::InvalidSpec(format!(
                "level {level} sits at the chemical potential; zero-temperature occupation is ambiguous"
            )));
        }
        Ok(ZeroTemperatureSplit {
            energy: e,
            n: if e < self.spec.mu { 1.0 } else { 0.0 },
            f: self.f(level),
        })
    }
}

/// `g̃(t, 0) = g^R(t, 0)·√occupation` for an undamped line.
#[derive(Clone, Copy, Debug)]
pub struct CutLeg {
    pub energy: f64,
    pub amplitude: f64,
}

impl CutLeg {
    pub fn eval(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        -I * (-I * self.energy * t).exp() * self.amplitude
    }
}

/// Decomposition `g = g₀ + δg` around the zero-temperature occupation `n`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroTemperatureSplit {
    pub energy: f64,
    pub n: f64,
    pub f: f64,
}

impl ZeroTemperatureSplit {
    fn phase(&self, t: f64, tp: f64) -> Complex64 {
        (-I * self.energy * (t - tp)).exp()
    }

    pub fn g0_greater(&self, t: f64, tp: f64) -> Complex64 {
        -I * (1.0 - self.n) * self.phase(t, tp)
    }

    pub fn g0_lesser(&self, t: f64, tp: f64) -> Complex64 {
        I * self.n * self.phase(t, tp)
    }

    /// Time-ordered zero-temperature propagator.
    pub fn g0(&self, t: f64, tp: f64) -> Complex64 {
        if t > tp {
            self.g0_greater(t, tp)
        } else {
            self.g0_lesser(t, tp)
        }
    }

    /// `δg = −f g₀^> − f̄ g₀^<`, independent of time ordering.
    pub fn delta(&self, t: f64, tp: f64) -> Complex64 {
        -self.f * self.g0_greater(t, tp) - (1.0 - self.f) * self.g0_lesser(t, tp)
    }

    /// Time-ordered finite-temperature propagator.
    pub fn g(&self, t: f64, tp: f64) -> Complex64 {
        let ph = self.phase(t, tp);
        if t > tp {
            -I * (1.0 - self.f) * ph
        } else {
            I * self.f * ph
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn spec3() -> SystemSpec {
        SystemSpec::random(7, 3, 2.0, 0.5, 0.05)
    }

    #[test]
    fn fermi_values() {
        assert_eq!(fermi(0.0, 1.0), 0.5);
        assert!((fermi(3f64.ln(), 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(fermi(-50.0, 10.0), 1.0);
        assert_eq!(fermi(1e6, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn fermi_reflection(x in -40.0f64..40.0, beta in 0.01f64..20.0) {
            prop_assert!((fermi(x, beta) + fermi(-x, beta) - 1.0).abs() < 1e-14);
        }

        #[test]
        fn fermi_monotone(x in -10.0f64..10.0, dx in 0.001f64..1.0) {
            prop_assert!(fermi(x + dx, 1.3) <= fermi(x, 1.3));
        }

        #[test]
        fn conjugation_swaps_times(t in -5.0f64..5.0, tp in -5.0f64..5.0, level in 0usize..3) {
            let p = Propagator::new(spec3());
            for kind in [GKind::Lesser, GKind::Greater] {
                let a = p.g_component_time(level, kind, t, tp).unwrap().conj();
                let b = -p.g_component_time(level, kind, tp, t).unwrap();
                prop_assert!(close(a, b, 1e-14));
            }
        }
    }

    #[test]
    fn equal_time_values() {
        let p = Propagator::new(spec3());
        for l in 0..3 {
            let lt = p.g_component_time(l, GKind::Lesser, 0.3, 0.3).unwrap();
            let gt = p.g_component_time(l, GKind::Greater, 0.3, 0.3).unwrap();
            assert!(close(lt, I * p.f(l), 1e-15));
            assert!(close(gt, -I * p.fbar(l), 1e-15));
            assert!(close(gt - lt, -I, 1e-15));
        }
    }

    #[test]
    fn retarded_advanced_support() {
        let p = Propagator::new(spec3());
        assert_eq!(p.g_component_time(0, GKind::Retarded, 0.0, 1.0).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(p.g_component_time(0, GKind::Advanced, 1.0, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        assert!(p.g_component_time(0, GKind::Matsubara, 1.0, 0.0).is_err());
    }

    #[test]
    fn free_level_retarded() {
        let v = VMat::zeros(1);
        let p = Propagator::new(SystemSpec::new(vec![0.0], v, 1.0, 0.0, 0.1).unwrap());
        let z = Complex64::new(0.7, 0.0);
        match p.g_component_freq(0, GKind::Retarded, z).unwrap() {
            FreqComponent::Value(x) => assert!(close(x, 1.0 / (z + I * 0.1), 1e-15)),
            _ => panic!(),
        }
    }

    #[test]
    fn retarded_is_shifted_matsubara() {
        let p = Propagator::new(spec3());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let z = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0));
            let l = rng.gen_range(0..3);
            let r = match p.g_component_freq(l, GKind::Retarded, z).unwrap() {
                FreqComponent::Value(x) => x,
                _ => unreachable!(),
            };
            let zm = z - p.spec.mu + I * p.spec.eta;
            let m = match p.g_component_freq(l, GKind::Matsubara, zm).unwrap() {
                FreqComponent::Value(x) => x,
                _ => unreachable!(),
            };
            assert!(close(r, m, 1e-12));
        }
    }

    #[test]
    fn pole_weights() {
        let p = Propagator::new(spec3());
        for l in 0..3 {
            let (e1, wl) = p.g_pole(l, GKind::Lesser).unwrap();
            let (e2, wg) = p.g_pole(l, GKind::Greater).unwrap();
            assert_eq!(e1, e2);
            assert!((wl + wg - 1.0).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&wl));
            let ratio = wg / wl;
            let fdt = (p.spec.beta * (p.energy(l) - p.spec.mu)).exp();
            assert!((ratio / fdt - 1.0).abs() < 1e-12);
        }
        assert!(p.g_pole(0, GKind::Matsubara).is_err());
        assert!(p.g_pole(0, GKind::Retarded).is_err());
    }

    #[test]
    fn cut_leg_reconstruction() {
        let spec = SystemSpec::random(11, 10, 1.5, 0.3, 0.05);
        let p = Propagator::new(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for l in 0..10 {
            let t = rng.gen_range(0.0..6.0);
            let tp = rng.gen_range(0.0..6.0);
            let lt = p.factorize_cut_line(l, GKind::Lesser).unwrap();
            let gt = p.factorize_cut_line(l, GKind::Greater).unwrap();
            let lhs = -I * p.g_component_time(l, GKind::Lesser, t, tp).unwrap();
            assert!(close(lhs, lt.eval(t) * lt.eval(tp).conj(), 1e-12));
            let rhs = I * p.g_component_time(l, GKind::Greater, t, tp).unwrap();
            assert!(close(rhs, gt.eval(t) * gt.eval(tp).conj(), 1e-12));
        }
        let leg = p.factorize_cut_line(0, GKind::Lesser).unwrap();
        assert!((leg.eval(0.0) * leg.eval(0.0).conj() - p.f(0)).norm() < 1e-15);
    }

    #[test]
    fn empty_level_has_no_hole_leg() {
        let spec = SystemSpec::new(vec![1.0], VMat::zeros(1), 1e4, 0.0, 0.1).unwrap();
        let p = Propagator::new(spec);
        let leg = p.factorize_cut_line(0, GKind::Lesser).unwrap();
        assert_eq!(leg.eval(2.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_temperature_split() {
        let spec = SystemSpec::new(vec![1.0, -0.5], VMat::zeros(2), 1.0, 0.0, 0.1).unwrap();
        let p = Propagator::new(spec);
        let s = p.split_zero_temperature(0).unwrap();
        assert!(close(s.delta(0.4, 0.4), I * fermi(1.0, 1.0), 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (t, tp) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            for l in 0..2 {
                let s = p.split_zero_temperature(l).unwrap();
                assert!(close(s.g(t, tp), s.g0(t, tp) + s.delta(t, tp), 1e-14));
            }
        }
        let cold = Propagator::new(p.spec.clone().with_eta(0.1));
        let cold = Propagator::new(SystemSpec { beta: 1e4, ..cold.spec });
        let s = cold.split_zero_temperature(1).unwrap();
        assert!(s.delta(0.2, -0.1).norm() < 1e-300);
        let at_mu = SystemSpec::new(vec![0.0], VMat::zeros(1), 1.0, 0.0, 0.1).unwrap();
        assert!(Propagator::new(at_mu).split_zero_temperature(0).is_err());
    }

    #[test]
    fn random_vmat_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = VMat::random(4, 0.8, &mut rng);
        assert!(v.symmetry_defect() < 1e-15);
        assert!((v.norm() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let mut v = VMat::zeros(2);
        v.set(0, 1, 0, 1, Complex64::new(0.0, 1.0));
        assert!(SystemSpec::new(vec![0.0, 1.0], v, 1.0, 0.0, 0.1).is_err());
        assert!(SystemSpec::new(vec![0.0], VMat::zeros(1), -1.0, 0.0, 0.1).is_err());
        assert!(SystemSpec::new(vec![0.0], VMat::zeros(1), 1.0, 0.0, 0.0).is_err());
    }
}
