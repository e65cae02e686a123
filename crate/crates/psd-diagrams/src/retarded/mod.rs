//! Multi-retarded functions of half-diagram integrands.
//!
//! Orderings are written latest first. A half-diagram with `n` interaction
//! slots has `n!` contour orderings; each splits into the slots after the
//! external one (`plus`) and those before it (`minus`).

pub mod oracle;

use num_complex::Complex64;

use crate::cutting::HalfDiagram;
use crate::diagram::i_pow;
use crate::error::{PsdError, PsdResult};
use crate::perm::permutations;
use crate::propagator::{Propagator, VMat};

/// Where a vertex's level index comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelSource {
    Line(usize),
    Leg(usize),
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlotFactor {
    Unit,
    /// `<out0 out1|v|in0 in1>`
    Interaction { out: [LevelSource; 2], inc: [LevelSource; 2] },
}

/// Time-slot skeleton of a half-diagram: internal g-lines between slots,
/// the interaction factor at each slot and the slot of every cut leg.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfIntegrand {
    pub n_slots: usize,
    pub external_slot: usize,
    /// `(from slot, to slot)` per internal line.
    pub lines: Vec<(usize, usize)>,
    pub factors: Vec<SlotFactor>,
    /// `(slot, +1 for an outgoing leg / −1 for an incoming one)` per leg label.
    pub legs: Vec<(usize, f64)>,
}

impl HalfIntegrand {
    pub fn from_half(h: &HalfDiagram) -> Self {
        let nv = h.body.n_vertices();
        let mut out_src = vec![None; nv];
        let mut in_src = vec![None; nv];
        let mut lines = Vec::new();
        for (k, e) in h.body.g_edges.iter().enumerate() {
            out_src[e.from] = Some(LevelSource::Line(k));
            in_src[e.to] = Some(LevelSource::Line(k));
            lines.push((e.from / 2, e.to / 2));
        }
        let mut legs = Vec::new();
        for (p, &v) in h.cut_exits.iter().enumerate() {
            out_src[v] = Some(LevelSource::Leg(p));
            legs.push((v / 2, 1.0));
        }
        let ne = h.cut_exits.len();
        for (p, &v) in h.cut_entries.iter().enumerate() {
            in_src[v] = Some(LevelSource::Leg(ne + p));
            legs.push((v / 2, -1.0));
        }
        if h.external_out {
            out_src[h.external] = Some(LevelSource::External);
        } else {
            in_src[h.external] = Some(LevelSource::External);
        }
        let factors = (0..h.n_slots())
            .map(|s| SlotFactor::Interaction {
                out: [out_src[2 * s].unwrap(), out_src[2 * s + 1].unwrap()],
                inc: [in_src[2 * s].unwrap(), in_src[2 * s + 1].unwrap()],
            })
            .collect();
        Self { n_slots: h.n_slots(), external_slot: h.external / 2, lines, factors, legs }
    }

    /// A bare propagator line from slot 1 to the external slot 0.
    pub fn single_line() -> Self {
        Self {
            n_slots: 2,
            external_slot: 0,
            lines: vec![(1, 0)],
            factors: vec![SlotFactor::Unit, SlotFactor::Unit],
            legs: Vec::new(),
        }
    }

    pub fn n_legs(&self) -> usize {
        self.legs.len()
    }

    /// Energy leaving each slot through the cut legs.
    pub fn leg_frequencies(&self, prop: &Propagator, legs: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_slots];
        for (&(slot, dir), &level) in self.legs.iter().zip(legs) {
            w[slot] += dir * prop.energy(level);
        }
        w
    }

    /// Internal line ends leaving minus entering each slot.
    pub fn net_line_outflow(&self) -> Vec<i64> {
        let mut q = vec![0i64; self.n_slots];
        for &(a, b) in &self.lines {
            q[a] += 1;
            q[b] -= 1;
        }
        q
    }

    fn level(src: LevelSource, ext: usize, legs: &[usize], internal: &[usize]) -> usize {
        match src {
            LevelSource::Line(k) => internal[k],
            LevelSource::Leg(k) => legs[k],
            LevelSource::External => ext,
        }
    }

    pub fn vertex_product(&self, vmat: &VMat, ext: usize, legs: &[usize], internal: &[usize]) -> Complex64 {
        let mut p = Complex64::new(1.0, 0.0);
        for f in &self.factors {
            if let SlotFactor::Interaction { out, inc } = f {
                let l = |s| Self::level(s, ext, legs, internal);
                p *= vmat.get(l(out[0]), l(out[1]), l(inc[0]), l(inc[1]));
                if p == Complex64::new(0.0, 0.0) {
                    break;
                }
            }
        }
        p
    }

    fn check_args(&self, prop: &Propagator, legs: &[usize], n_freq: usize) -> PsdResult<()> {
        if legs.len() != self.legs.len() {
            return Err(PsdError::LegMismatch { expected: self.legs.len(), got: legs.len() });
        }
        if n_freq != self.n_slots {
            return Err(PsdError::LegMismatch { expected: self.n_slots, got: n_freq });
        }
        if legs.iter().any(|&l| l >= prop.basis_size()) {
            return Err(PsdError::InvalidSpec("leg level out of range".into()));
        }
        Ok(())
    }
}

/// Calls `f` for every assignment of levels to `n` lines, in odometer order.
pub(crate) fn for_each_assignment(n: usize, levels: usize, mut f: impl FnMut(&[usize])) {
    let mut a = vec![0usize; n];
    loop {
        f(&a);
        let mut k = 0;
        loop {
            if k == n {
                return;
            }
            a[k] += 1;
            if a[k] < levels {
                break;
            }
            a[k] = 0;
            k += 1;
        }
    }
}

/// One contour ordering with its backward-branch sign `(−1)^{|plus|}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedOrdering {
    /// Slots from latest to earliest contour time.
    pub order: Vec<usize>,
    pub sign: i8,
    pub plus: Vec<usize>,
    pub external: usize,
    pub minus: Vec<usize>,
}

impl SignedOrdering {
    fn new(order: Vec<usize>, external: usize) -> Self {
        let at = order.iter().position(|&s| s == external).expect("external slot present");
        let plus = order[..at].to_vec();
        let minus = order[at + 1..].to_vec();
        let sign = if plus.len() % 2 == 0 { 1 } else { -1 };
        Self { order, sign, plus, external, minus }
    }

    /// Contour rank of each slot; larger is later.
    pub fn rank(&self) -> Vec<usize> {
        let n = self.order.len();
        let mut r = vec![0; n];
        for (k, &s) in self.order.iter().enumerate() {
            r[s] = n - 1 - k;
        }
        r
    }

    /// Slot masks of the circles: the earliest `k` slots for `k ≤ |minus|`,
    /// then the latest `l` slots for `l ≤ |plus|`.
    pub fn circles(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.order.len().saturating_sub(1));
        let mut m = 0u64;
        for &s in self.minus.iter().rev() {
            m |= 1 << s;
            out.push(m);
        }
        let mut m = 0u64;
        for &s in &self.plus {
            m |= 1 << s;
            out.push(m);
        }
        out
    }
}

/// All `n!` orderings of the slots, lexicographic in the latest-first list.
pub fn signed_orderings(n_slots: usize, external: usize) -> Vec<SignedOrdering> {
    let slots: Vec<usize> = (0..n_slots).collect();
    permutations(&slots).into_iter().map(|o| SignedOrdering::new(o, external)).collect()
}

/// Orderings with no slot on the backward branch.
pub fn time_ordered_orderings(n_slots: usize, external: usize) -> Vec<SignedOrdering> {
    signed_orderings(n_slots, external).into_iter().filter(|o| o.plus.is_empty()).collect()
}

/// `(−1)^{N₊}(−i)^{N−1} / Π_circles (Ω − i·|circle|·η)`.
pub fn lambda_factor(o: &SignedOrdering, sigmas: &[f64], eta: f64) -> Complex64 {
    let n = o.order.len();
    let mut den = Complex64::new(1.0, 0.0);
    for m in o.circles() {
        den *= circle_denominator(m, sigmas, eta);
    }
    i_pow(-(n as i64 - 1)) * o.sign as f64 / den
}

fn circle_denominator(mask: u64, sigmas: &[f64], eta: f64) -> Complex64 {
    let mut omega = 0.0;
    for (j, s) in sigmas.iter().enumerate() {
        if mask >> j & 1 == 1 {
            omega += s;
        }
    }
    Complex64::new(omega, -(mask.count_ones() as f64) * eta)
}

/// Closed form of `∫ θ(t, t_k, …, t_1) Π e^{(iσ_j + η) t_j} dt`, with `σ_1`
/// the earliest time.
pub fn step_integral_oracle(sigmas: &[f64], t: f64, eta: f64) -> Complex64 {
    let k = sigmas.len();
    let mut den = Complex64::new(1.0, 0.0);
    let mut partial = 0.0;
    for (m, s) in sigmas.iter().enumerate() {
        partial += s;
        den *= Complex64::new(partial, -((m + 1) as f64) * eta);
    }
    let phase = Complex64::new(k as f64 * eta * t, partial * t).exp();
    i_pow(-(k as i64)) * phase / den
}

/// Signed strings of a nested commutator, each written latest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommutatorExpansion {
    pub strings: Vec<(i8, Vec<usize>)>,
}

/// `[l_1, …, l_N] = [[[l_1, l_2], l_3], …, l_N]`.
pub fn nested_commutator(labels: &[usize]) -> PsdResult<CommutatorExpansion> {
    if labels.len() < 2 {
        return Err(PsdError::InvalidSpec("nested commutator needs at least two labels".into()));
    }
    let mut strings = vec![(1i8, vec![labels[0]])];
    for &x in &labels[1..] {
        let mut next = Vec::with_capacity(2 * strings.len());
        for (s, w) in &strings {
            let mut a = w.clone();
            a.push(x);
            next.push((*s, a));
        }
        for (s, w) in &strings {
            let mut b = vec![x];
            b.extend(w);
            next.push((-*s, b));
        }
        strings = next;
    }
    Ok(CommutatorExpansion { strings })
}

/// One circle factor of a rational term.
#[derive(Clone, Debug, PartialEq)]
pub struct Denominator {
    pub slots: u64,
    pub offset: f64,
    pub eta_multiple: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RationalTerm {
    pub weight: Complex64,
    pub denominators: Vec<Denominator>,
}

/// Frequency representation with the overall `2πδ(Σω)` factored out:
/// `Σ w · Π 1/(Σ_{j∈slots} ω_j + offset − i·m·η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RetardedValue {
    pub n_slots: usize,
    pub external_slot: usize,
    pub eta: f64,
    pub terms: Vec<RationalTerm>,
}

impl RetardedValue {
    pub fn eval(&self, omegas: &[f64]) -> Complex64 {
        let z: Vec<Complex64> = omegas.iter().map(|&w| Complex64::new(w, 0.0)).collect();
        self.eval_complex(&z, self.eta)
    }

    /// Evaluation at complex slot frequencies with regulator `eta`.
    pub fn eval_complex(&self, omegas: &[Complex64], eta: f64) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut den = Complex64::new(1.0, 0.0);
            for d in &t.denominators {
                let mut w = Complex64::new(d.offset, -(d.eta_multiple as f64) * eta);
                for (j, o) in omegas.iter().enumerate() {
                    if d.slots >> j & 1 == 1 {
                        w += o;
                    }
                }
                den *= w;
            }
            sum += t.weight / den;
        }
        sum
    }
}

struct CompiledOrdering {
    factor: Complex64,
    ascending: Vec<bool>,
    circles: Vec<u64>,
}

/// Half-diagram integrand prepared for repeated frequency evaluation.
pub struct RetardedEvaluator<'a> {
    integrand: &'a HalfIntegrand,
    prop: &'a Propagator,
    orderings: Vec<CompiledOrdering>,
}

impl<'a> RetardedEvaluator<'a> {
    pub fn new(integrand: &'a HalfIntegrand, prop: &'a Propagator) -> Self {
        let n = integrand.n_slots;
        let orderings = signed_orderings(n, integrand.external_slot)
            .into_iter()
            .map(|o| {
                let rank = o.rank();
                CompiledOrdering {
                    factor: i_pow(-(n as i64 - 1)) * o.sign as f64,
                    ascending: integrand.lines.iter().map(|&(a, b)| rank[b] > rank[a]).collect(),
                    circles: o.circles(),
                }
            })
            .collect();
        Self { integrand, prop, orderings }
    }

    fn line_weight(&self, level: usize, ascending: bool) -> Complex64 {
        if ascending {
            Complex64::new(0.0, -self.prop.fbar(level))
        } else {
            Complex64::new(0.0, self.prop.f(level))
        }
    }

    /// Value at explicit slot frequencies.
    pub fn evaluate(&self, ext: usize, legs: &[usize], omegas: &[f64]) -> PsdResult<Complex64> {
        self.integrand.check_args(self.prop, legs, omegas.len())?;
        let eta = self.prop.spec.eta;
        let nl = self.integrand.lines.len();
        let mut sigma = vec![0.0; self.integrand.n_slots];
        let mut sum = Complex64::new(0.0, 0.0);
        for_each_assignment(nl, self.prop.basis_size(), |internal| {
            let v = self.integrand.vertex_product(&self.prop.spec.vmat, ext, legs, internal);
            if v == Complex64::new(0.0, 0.0) {
                return;
            }
            sigma.copy_from_slice(omegas);
            for (&(a, b), &l) in self.integrand.lines.iter().zip(internal) {
                let e = self.prop.energy(l);
                sigma[a] += e;
                sigma[b] -= e;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for o in &self.orderings {
                let mut w = o.factor;
                for (&l, &up) in internal.iter().zip(&o.ascending) {
                    w *= self.line_weight(l, up);
                }
                if w == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut den = Complex64::new(1.0, 0.0);
                for &m in &o.circles {
                    den *= circle_denominator(m, &sigma, eta);
                }
                acc += w / den;
            }
            sum += v * acc;
        });
        Ok(sum)
    }

    /// Value with every slot frequency fixed by the leg energies.
    pub fn amplitude(&self, ext: usize, legs: &[usize]) -> PsdResult<Complex64> {
        let w = self.integrand.leg_frequencies(self.prop, legs);
        self.evaluate(ext, legs, &w)
    }

    /// Rational-function form in the slot frequencies.
    pub fn value(&self, ext: usize, legs: &[usize]) -> PsdResult<RetardedValue> {
        self.integrand.check_args(self.prop, legs, self.integrand.n_slots)?;
        let nl = self.integrand.lines.len();
        let mut terms = Vec::new();
        for_each_assignment(nl, self.prop.basis_size(), |internal| {
            let v = self.integrand.vertex_product(&self.prop.spec.vmat, ext, legs, internal);
            if v == Complex64::new(0.0, 0.0) {
                return;
            }
            for o in &self.orderings {
                let mut w = v * o.factor;
                for (&l, &up) in internal.iter().zip(&o.ascending) {
                    w *= self.line_weight(l, up);
                }
                if w == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let denominators = o
                    .circles
                    .iter()
                    .map(|&m| {
                        let mut offset = 0.0;
                        for (&(a, b), &l) in self.integrand.lines.iter().zip(internal) {
                            let e = self.prop.energy(l);
                            offset += e * ((m >> a & 1) as f64 - (m >> b & 1) as f64);
                        }
                        Denominator { slots: m, offset, eta_multiple: m.count_ones() as usize }
                    })
                    .collect();
                terms.push(RationalTerm { weight: w, denominators });
            }
        });
        Ok(RetardedValue {
            n_slots: self.integrand.n_slots,
            external_slot: self.integrand.external_slot,
            eta: self.prop.spec.eta,
            terms,
        })
    }
}

/// Frequency-space value of a half-diagram integrand at the given slot frequencies.
pub fn evaluate_retarded_frequency(
    integrand: &HalfIntegrand,
    prop: &Propagator,
    ext: usize,
    legs: &[usize],
    omegas: &[f64],
) -> PsdResult<Complex64> {
    RetardedEvaluator::new(integrand, prop).evaluate(ext, legs, omegas)
}

/// Deviation from `i^n 𝒟_rev(−ω; entries, exits) = (−1)^N conj(i^n 𝒟(ω; exits, entries))`,
/// relative to `max(1, |i^n 𝒟|)`.
pub fn adjoint_deviation(h: &HalfDiagram, prop: &Propagator, ext: usize, legs: &[usize], omegas: &[f64]) -> PsdResult<f64> {
    let g = HalfIntegrand::from_half(h);
    let r = h.reversed();
    let gr = HalfIntegrand::from_half(&r);
    let ne = h.cut_exits.len();
    if legs.len() != h.n_legs() {
        return Err(PsdError::LegMismatch { expected: h.n_legs(), got: legs.len() });
    }
    let rlegs: Vec<usize> = legs[ne..].iter().chain(&legs[..ne]).copied().collect();
    let neg: Vec<f64> = omegas.iter().map(|w| -w).collect();
    let s = i_pow(h.n_slots() as i64);
    let a = s * evaluate_retarded_frequency(&g, prop, ext, legs, omegas)?;
    let b = s * evaluate_retarded_frequency(&gr, prop, ext, &rlegs, &neg)?;
    let sign = if h.n_pairs() % 2 == 0 { 1.0 } else { -1.0 };
    Ok((b - a.conj() * sign).norm() / a.norm().max(1.0))
}

fn ordered_product(
    integrand: &HalfIntegrand,
    prop: &Propagator,
    internal: &[usize],
    rank: &[usize],
    times: &[f64],
) -> Complex64 {
    let mut p = Complex64::new(1.0, 0.0);
    for (&(a, b), &l) in integrand.lines.iter().zip(internal) {
        let phase = Complex64::new(0.0, -prop.energy(l) * (times[b] - times[a])).exp();
        let w = if rank[b] > rank[a] {
            Complex64::new(0.0, -prop.fbar(l))
        } else {
            Complex64::new(0.0, prop.f(l))
        };
        p *= w * phase;
    }
    p
}

fn damping(integrand: &HalfIntegrand, times: &[f64], eta: f64) -> f64 {
    let te = times[integrand.external_slot];
    let s: f64 = times.iter().map(|t| te - t).sum();
    (-eta * s).exp()
}

fn string_rank(string: &[usize]) -> Vec<usize> {
    let n = string.len();
    let mut r = vec![0; n];
    for (k, &s) in string.iter().enumerate() {
        r[s] = n - 1 - k;
    }
    r
}

/// Multi-retarded function from the nested commutator of the real-time order.
///
/// Internal times carry the damping `e^{−η(t_e − t_j)}`; ties count as
/// outside the support.
pub fn retarded_time_domain(
    integrand: &HalfIntegrand,
    prop: &Propagator,
    ext: usize,
    legs: &[usize],
    times: &[f64],
) -> PsdResult<Complex64> {
    integrand.check_args(prop, legs, times.len())?;
    let e = integrand.external_slot;
    if (0..times.len()).any(|j| j != e && times[j] >= times[e]) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut internal_slots: Vec<usize> = (0..times.len()).filter(|&j| j != e).collect();
    internal_slots.sort_by(|a, b| times[*b].total_cmp(&times[*a]));
    let labels: Vec<usize> = std::iter::once(e).chain(internal_slots).collect();
    let expansion = nested_commutator(&labels)?;
    let ranks: Vec<(f64, Vec<usize>)> = expansion.strings.iter().map(|(s, w)| (*s as f64, string_rank(w))).collect();
    let mut sum = Complex64::new(0.0, 0.0);
    for_each_assignment(integrand.lines.len(), prop.basis_size(), |internal| {
        let v = integrand.vertex_product(&prop.spec.vmat, ext, legs, internal);
        if v == Complex64::new(0.0, 0.0) {
            return;
        }
        for (s, rank) in &ranks {
            sum += v * *s * ordered_product(integrand, prop, internal, rank, times);
        }
    });
    Ok(sum * damping(integrand, times, prop.spec.eta))
}

/// The same function as a signed sum over contour orderings with
/// backward-branch times running in reverse.
pub fn multi_retarded_time_domain(
    integrand: &HalfIntegrand,
    prop: &Propagator,
    ext: usize,
    legs: &[usize],
    times: &[f64],
) -> PsdResult<Complex64> {
    integrand.check_args(prop, legs, times.len())?;
    let e = integrand.external_slot;
    let chain_ok = |chain: &[usize]| {
        let mut prev = times[e];
        chain.iter().all(|&s| {
            let ok = times[s] < prev;
            prev = times[s];
            ok
        })
    };
    let live: Vec<(f64, Vec<usize>)> = signed_orderings(integrand.n_slots, e)
        .into_iter()
        .filter(|o| {
            let back: Vec<usize> = o.plus.iter().rev().copied().collect();
            chain_ok(&back) && chain_ok(&o.minus)
        })
        .map(|o| (o.sign as f64, o.rank()))
        .collect();
    let mut sum = Complex64::new(0.0, 0.0);
    for_each_assignment(integrand.lines.len(), prop.basis_size(), |internal| {
        let v = integrand.vertex_product(&prop.spec.vmat, ext, legs, internal);
        if v == Complex64::new(0.0, 0.0) {
            return;
        }
        for (s, rank) in &live {
            sum += v * *s * ordered_product(integrand, prop, internal, rank, times);
        }
    });
    Ok(sum * damping(integrand, times, prop.spec.eta))
}
