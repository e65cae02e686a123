//! Matsubara N-point values of half-diagram integrands and their analytic
//! continuation to the multi-retarded form.

use num_complex::Complex64;

use crate::diagram::i_pow;
use crate::error::{PsdError, PsdResult};
use crate::propagator::Propagator;
use crate::quad::Composite;
use crate::retarded::{
    for_each_assignment, signed_orderings, Denominator, HalfIntegrand, RationalTerm, RetardedEvaluator,
};

/// `Σ w · Π 1/(Σ_{j∈slots} ζ_j + offset)` with offsets measured from `μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatsubaraValue {
    pub n_slots: usize,
    pub external_slot: usize,
    pub terms: Vec<RationalTerm>,
}

impl MatsubaraValue {
    pub fn eval(&self, zetas: &[Complex64]) -> PsdResult<Complex64> {
        let mut sum = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut den = Complex64::new(1.0, 0.0);
            for d in &t.denominators {
                den *= circle_sum(d.slots, d.offset, zetas)?;
            }
            sum += t.weight / den;
        }
        Ok(sum)
    }
}

fn circle_sum(mask: u64, offset: f64, zetas: &[Complex64]) -> PsdResult<Complex64> {
    let mut w = Complex64::new(offset, 0.0);
    for (j, z) in zetas.iter().enumerate() {
        if mask >> j & 1 == 1 {
            w += z;
        }
    }
    if w == Complex64::new(0.0, 0.0) {
        return Err(PsdError::OnPole(zetas.iter().enumerate().filter(|(j, _)| mask >> j & 1 == 1).map(|(_, z)| z).sum()));
    }
    Ok(w)
}

struct Ordering {
    factor: Complex64,
    ascending: Vec<bool>,
    circles: Vec<u64>,
}

fn compile(integrand: &HalfIntegrand) -> Vec<Ordering> {
    let n = integrand.n_slots;
    signed_orderings(n, integrand.external_slot)
        .into_iter()
        .map(|o| {
            let rank = o.rank();
            Ordering {
                factor: i_pow(-(n as i64 - 1)) * o.sign as f64,
                ascending: integrand.lines.iter().map(|&(a, b)| rank[b] > rank[a]).collect(),
                circles: o.circles(),
            }
        })
        .collect()
}

fn line_weight(prop: &Propagator, level: usize, ascending: bool) -> Complex64 {
    if ascending {
        Complex64::new(0.0, -prop.fbar(level))
    } else {
        Complex64::new(0.0, prop.f(level))
    }
}

fn check(integrand: &HalfIntegrand, legs: &[usize], n: usize) -> PsdResult<()> {
    if legs.len() != integrand.n_legs() {
        return Err(PsdError::LegMismatch { expected: integrand.n_legs(), got: legs.len() });
    }
    if n != integrand.n_slots {
        return Err(PsdError::LegMismatch { expected: integrand.n_slots, got: n });
    }
    Ok(())
}

/// Sum over contour orderings with Matsubara circle factors.
pub fn evaluate_matsubara(
    integrand: &HalfIntegrand,
    prop: &Propagator,
    ext: usize,
    legs: &[usize],
    zetas: &[Complex64],
) -> PsdResult<Complex64> {
    check(integrand, legs, zetas.len())?;
    let orderings = compile(integrand);
    let mu = prop.spec.mu;
    let mut sigma = vec![Complex64::new(0.0, 0.0); integrand.n_slots];
    let mut sum = Complex64::new(0.0, 0.0);
    let mut failure = None;
    for_each_assignment(integrand.lines.len(), prop.basis_size(), |internal| {
        if failure.is_some() {
            return;
        }
        let v = integrand.vertex_product(&prop.spec.vmat, ext, legs, internal);
        if v == Complex64::new(0.0, 0.0) {
            return;
        }
        sigma.copy_from_slice(zetas);
        for (&(a, b), &l) in integrand.lines.iter().zip(internal) {
            let e = prop.energy(l) - mu;
            sigma[a] += e;
            sigma[b] -= e;
        }
        for o in &orderings {
            let mut w = o.factor * v;
            for (&l, &up) in internal.iter().zip(&o.ascending) {
                w *= line_weight(prop, l, up);
            }
            let mut den = Complex64::new(1.0, 0.0);
            for &m in &o.circles {
                match circle_sum(m, 0.0, &sigma) {
                    Ok(x) => den *= x,
                    Err(e) => {
                        failure = Some(e);
                        return;
                    }
                }
            }
            sum += w / den;
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(sum),
    }
}

/// Rational-function form of [`evaluate_matsubara`].
pub fn matsubara_value(integrand: &HalfIntegrand, prop: &Propagator, ext: usize, legs: &[usize]) -> PsdResult<MatsubaraValue> {
    check(integrand, legs, integrand.n_slots)?;
    let orderings = compile(integrand);
    let mu = prop.spec.mu;
    let mut terms = Vec::new();
    for_each_assignment(integrand.lines.len(), prop.basis_size(), |internal| {
        let v = integrand.vertex_product(&prop.spec.vmat, ext, legs, internal);
        if v == Complex64::new(0.0, 0.0) {
            return;
        }
        for o in &orderings {
            let mut w = o.factor * v;
            for (&l, &up) in internal.iter().zip(&o.ascending) {
                w *= line_weight(prop, l, up);
            }
            let denominators = o
                .circles
                .iter()
                .map(|&m| {
                    let offset = integrand
                        .lines
                        .iter()
                        .zip(internal)
                        .map(|(&(a, b), &l)| (prop.energy(l) - mu) * ((m >> a & 1) as f64 - (m >> b & 1) as f64))
                        .sum();
                    Denominator { slots: m, offset, eta_multiple: 0 }
                })
                .collect();
            terms.push(RationalTerm { weight: w, denominators });
        }
    });
    Ok(MatsubaraValue { n_slots: integrand.n_slots, external_slot: integrand.external_slot, terms })
}

/// `ζ_j = ω_j + μ q_j − iη`, with `q_j` the net internal line outflow at slot `j`.
pub fn continuation_arguments(integrand: &HalfIntegrand, omegas: &[f64], mu: f64, eta: f64) -> Vec<Complex64> {
    integrand
        .net_line_outflow()
        .iter()
        .zip(omegas)
        .map(|(&q, &w)| Complex64::new(w + mu * q as f64, -eta))
        .collect()
}

/// Largest relative deviation between the retarded value and the continued
/// Matsubara value over the given frequency tuples.
pub fn check_continuation(
    integrand: &HalfIntegrand,
    prop: &Propagator,
    ext: usize,
    legs: &[usize],
    omegas: &[Vec<f64>],
) -> PsdResult<f64> {
    let ev = RetardedEvaluator::new(integrand, prop);
    let mut worst: f64 = 0.0;
    for w in omegas {
        let r = ev.evaluate(ext, legs, w)?;
        let z = continuation_arguments(integrand, w, prop.spec.mu, prop.spec.eta);
        let m = evaluate_matsubara(integrand, prop, ext, legs, &z)?;
        worst = worst.max((r - m).norm() / r.norm().max(1e-300));
    }
    Ok(worst)
}

/// `iπm/β`; fermionic for odd `m`, bosonic for even.
pub fn matsubara_frequency(m: i64, beta: f64) -> Complex64 {
    Complex64::new(0.0, std::f64::consts::PI * m as f64 / beta)
}

/// Parity of the internal line ends at each slot, which fixes whether its
/// Matsubara frequency is fermionic (odd) or bosonic (even).
pub fn slot_statistics(integrand: &HalfIntegrand) -> Vec<usize> {
    let mut ends = vec![0usize; integrand.n_slots];
    for &(a, b) in &integrand.lines {
        ends[a] += 1;
        ends[b] += 1;
    }
    ends.iter().map(|e| e % 2).collect()
}

/// Direct imaginary-time integral for a two-slot integrand with `τ_e = 0`.
pub fn tau_quadrature_oracle(
    integrand: &HalfIntegrand,
    prop: &Propagator,
    ext: usize,
    legs: &[usize],
    zetas: &[Complex64],
) -> PsdResult<Complex64> {
    check(integrand, legs, zetas.len())?;
    if integrand.n_slots != 2 {
        return Err(PsdError::Unsupported("imaginary-time oracle handles two slots only".into()));
    }
    let e = integrand.external_slot;
    let a = 1 - e;
    let beta = prop.spec.beta;
    let mu = prop.spec.mu;
    let q = Composite::new(20, beta / 64.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for_each_assignment(integrand.lines.len(), prop.basis_size(), |internal| {
        let v = integrand.vertex_product(&prop.spec.vmat, ext, legs, internal);
        if v == Complex64::new(0.0, 0.0) {
            return;
        }
        let integral = q.integrate(0.0, beta, |tau| {
            let mut times = [0.0; 2];
            times[a] = tau;
            let mut p = (zetas[a] * tau).exp();
            for (&(x, y), &l) in integrand.lines.iter().zip(internal) {
                let dt = times[y] - times[x];
                let decay = (-(prop.energy(l) - mu) * dt).exp();
                p *= line_weight(prop, l, dt > 0.0) * decay;
            }
            p
        });
        sum += v * integral;
    });
    Ok(Complex64::new(0.0, -1.0) * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutting::{enumerate_retarded_cuts, HalfDiagram};
    use crate::diagram::ladder;
    use crate::propagator::{FreqComponent, GKind, SystemSpec};
    use crate::retarded::{evaluate_retarded_frequency, SignedOrdering};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prop(levels: usize, seed: u64) -> Propagator {
        Propagator::new(SystemSpec::random(seed, levels, 2.0, 0.7, 0.05))
    }

    fn half(n: usize) -> HalfDiagram {
        let d = ladder(n + 1, false).unwrap();
        enumerate_retarded_cuts(&d).unwrap().terms.into_iter().map(|t| t.left).find(|h| h.n_slots() == n).unwrap()
    }

    fn rand_z(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn single_level_resolvent() {
        let p = prop(3, 1);
        let g = HalfIntegrand::single_line();
        for z in [Complex64::new(0.3, 0.2), matsubara_frequency(1, p.spec.beta), Complex64::new(-1.0, -0.4)] {
            let got = evaluate_matsubara(&g, &p, 0, &[], &[z, -z]).unwrap();
            let mut want = Complex64::new(0.0, 0.0);
            for l in 0..3 {
                if let FreqComponent::Value(v) = p.g_component_freq(l, GKind::Matsubara, z).unwrap() {
                    want += v;
                }
            }
            assert!(got.is_finite());
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn continuation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = prop(3, 2);
        for n in [1, 2, 3] {
            let g = HalfIntegrand::from_half(&half(n));
            let legs: Vec<usize> = (0..g.n_legs()).map(|_| rng.gen_range(0..3)).collect();
            let ws: Vec<Vec<f64>> = (0..10).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            assert!(check_continuation(&g, &p, 0, &legs, &ws).unwrap() < 1e-10);
        }
        let g = HalfIntegrand::single_line();
        let ws: Vec<Vec<f64>> = vec![vec![0.4, -0.4], vec![-1.1, 1.1]];
        assert!(check_continuation(&g, &p, 0, &[], &ws).unwrap() < 1e-12);
    }

    #[test]
    fn rational_form_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = prop(2, 4);
        let g = HalfIntegrand::from_half(&half(3));
        let legs = vec![1; g.n_legs()];
        let val = matsubara_value(&g, &p, 0, &legs).unwrap();
        for _ in 0..5 {
            let z = rand_z(&mut rng, 3);
            let a = val.eval(&z).unwrap();
            let b = evaluate_matsubara(&g, &p, 0, &legs, &z).unwrap();
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));
        }
    }

    fn reverse_sum(g: &HalfIntegrand, p: &Propagator, ext: usize, legs: &[usize], z: &[Complex64]) -> Complex64 {
        let n = g.n_slots;
        let mut orders: Vec<SignedOrdering> = crate::retarded::signed_orderings(n, g.external_slot);
        orders.reverse();
        let mut total = Complex64::new(0.0, 0.0);
        for o in &orders {
            let rank = o.rank();
            for_each_assignment(g.lines.len(), p.basis_size(), |internal| {
                let mut w = g.vertex_product(&p.spec.vmat, ext, legs, internal) * o.sign as f64;
                w *= Complex64::new(0.0, -1.0).powi(n as i32 - 1);
                let mut sigma: Vec<Complex64> = z.to_vec();
                for (&(a, b), &l) in g.lines.iter().zip(internal) {
                    let occ = if rank[b] > rank[a] { Complex64::new(0.0, -p.fbar(l)) } else { Complex64::new(0.0, p.f(l)) };
                    w *= occ;
                    sigma[a] += p.energy(l) - p.spec.mu;
                    sigma[b] -= p.energy(l) - p.spec.mu;
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for &s in o.minus.iter().rev() {
                    acc += sigma[s];
                    w /= acc;
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for &s in &o.plus {
                    acc += sigma[s];
                    w /= acc;
                }
                total += w;
            });
        }
        total
    }

    #[test]
    fn independent_reverse_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = prop(3, 6);
        let g = HalfIntegrand::from_half(&half(1));
        for _ in 0..10 {
            let legs: Vec<usize> = (0..g.n_legs()).map(|_| rng.gen_range(0..3)).collect();
            let z = rand_z(&mut rng, 1);
            let a = evaluate_matsubara(&g, &p, 1, &legs, &z).unwrap();
            let b = reverse_sum(&g, &p, 1, &legs, &z);
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
        let g = HalfIntegrand::from_half(&half(3));
        let legs = vec![2; g.n_legs()];
        let z = rand_z(&mut rng, 3);
        let a = evaluate_matsubara(&g, &p, 2, &legs, &z).unwrap();
        assert!((a - reverse_sum(&g, &p, 2, &legs, &z)).norm() < 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn imaginary_time_integral() {
        let p = prop(2, 9);
        let beta = p.spec.beta;
        let cases = [(HalfIntegrand::single_line(), vec![]), {
            let g = HalfIntegrand::from_half(&half(2));
            let l = vec![0, 1, 1];
            (g, l)
        }];
        for (g, legs) in cases {
            let stat = slot_statistics(&g);
            let a = 1 - g.external_slot;
            for m in [-3i64, -1, 1, 5] {
                let m = 2 * m + stat[a] as i64;
                let mut z = vec![Complex64::new(0.0, 0.0); 2];
                z[a] = matsubara_frequency(m, beta);
                let direct = evaluate_matsubara(&g, &p, 0, &legs, &z).unwrap();
                let oracle = tau_quadrature_oracle(&g, &p, 0, &legs, &z).unwrap();
                assert!((direct - oracle).norm() < 1e-10 * (1.0 + direct.norm()), "m={m}: {direct} {oracle}");
            }
        }
    }

    #[test]
    fn boltzmann_shift_per_ordering() {
        let p = prop(3, 10);
        let g = HalfIntegrand::from_half(&half(2));
        let e = g.external_slot;
        let a = 1 - e;
        let os = crate::retarded::signed_orderings(2, e);
        let later_a = os.iter().find(|o| o.plus == vec![a]).unwrap().rank();
        let later_e = os.iter().find(|o| o.minus == vec![a]).unwrap().rank();
        for_each_assignment(g.lines.len(), 3, |internal| {
            let mut flow = 0.0;
            let (mut wa, mut we) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
            for (&(x, y), &l) in g.lines.iter().zip(internal) {
                let eb = p.energy(l) - p.spec.mu;
                flow += if x == a { eb } else { -eb };
                wa *= line_weight(&p, l, later_a[y] > later_a[x]);
                we *= line_weight(&p, l, later_e[y] > later_e[x]);
            }
            let sign = if g.lines.len() % 2 == 0 { 1.0 } else { -1.0 };
            let shifted = wa * (p.spec.beta * flow).exp() * sign;
            assert!((shifted - we).norm() < 1e-12 * (1.0 + we.norm()));
        });
    }

    #[test]
    fn analytic_off_axis() {
        let p = prop(2, 14);
        let g = HalfIntegrand::from_half(&half(2));
        let legs = vec![0, 1, 0];
        let h = 1e-5;
        for z0 in [Complex64::new(0.3, 0.7), Complex64::new(-1.2, -0.5)] {
            let f = |z: Complex64| {
                let mut zs = vec![Complex64::new(0.0, 0.0); 2];
                zs[1 - g.external_slot] = z;
                evaluate_matsubara(&g, &p, 0, &legs, &zs).unwrap()
            };
            let dx = (f(z0 + h) - f(z0 - h)) / (2.0 * h);
            let dy = (f(z0 + Complex64::new(0.0, h)) - f(z0 - Complex64::new(0.0, h))) / Complex64::new(0.0, 2.0 * h);
            assert!((dx - dy).norm() < 1e-6 * (1.0 + dx.norm()));
        }
    }

    #[test]
    fn pole_is_reported() {
        let p = prop(2, 15);
        let g = HalfIntegrand::single_line();
        let z = Complex64::new(-(p.energy(0) - p.spec.mu), 0.0);
        match evaluate_matsubara(&g, &p, 0, &[], &[-z, z]) {
            Err(PsdError::OnPole(_)) => {}
            other => panic!("expected pole error, got {other:?}"),
        }
    }

    #[test]
    fn retarded_matches_shifted_resolvent() {
        let p = prop(3, 16);
        let g = HalfIntegrand::single_line();
        for w in [-0.5, 0.2, 1.4] {
            let r = evaluate_retarded_frequency(&g, &p, 0, &[], &[w, -w]).unwrap();
            let z = Complex64::new(w - p.spec.mu, p.spec.eta);
            let m = evaluate_matsubara(&g, &p, 0, &[], &[z, -z]).unwrap();
            assert!((r - m).norm() < 1e-12);
        }
    }
}
