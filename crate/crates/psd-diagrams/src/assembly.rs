//! Rate functions from cut expansions, retarded self-energy, Dyson equation
//! and positivity/FDT verification.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cutting::{enumerate_retarded_cuts, half_prefactor, minimal_psd_extension, CutExpansion, HalfDiagram};
use crate::diagram::{generate_series, ApproximationSeries, Family};
use crate::error::{PsdError, PsdResult};
use crate::poles::{min_eigenvalue, PoleSum};
use crate::propagator::{fermi, Propagator, SystemSpec};
use crate::retarded::{HalfIntegrand, RetardedEvaluator};

/// Environment variable capping worker threads; `0` or unset means automatic.
pub const THREADS_ENV: &str = "PSD_DIAGRAMS_THREADS";

/// Runs `f` on a pool sized by [`THREADS_ENV`].
pub fn with_threads<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let n = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok()).unwrap_or(0);
    if n == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Lesser,
    Greater,
}

/// Occupation factor of a cut and its energy `𝓔 = Σ_holes ε − Σ_particles ε`.
///
/// The lesser factor is `Π f̄(particles) Π f(holes)`; the greater one swaps `f` and `f̄`.
pub fn occupation_weight(prop: &Propagator, particles: &[usize], holes: &[usize], c: Component) -> (f64, f64) {
    type Occ = fn(&Propagator, usize) -> f64;
    let (pf, hf): (Occ, Occ) = match c {
        Component::Lesser => (Propagator::fbar, Propagator::f),
        Component::Greater => (Propagator::f, Propagator::fbar),
    };
    let w = particles.iter().map(|&p| pf(prop, p)).product::<f64>() * holes.iter().map(|&q| hf(prop, q)).product::<f64>();
    let e = holes.iter().map(|&q| prop.energy(q)).sum::<f64>() - particles.iter().map(|&p| prop.energy(p)).sum::<f64>();
    (w, e)
}

/// `prefactor · 𝒟^R` of a half at its leg frequencies, for every external
/// level and leg assignment. Index `ext · L^{legs} + Σ_k I_k L^k`.
struct AmplitudeTable {
    half: HalfDiagram,
    values: Vec<Complex64>,
}

fn amplitude_table(h: &HalfDiagram, prop: &Propagator) -> PsdResult<AmplitudeTable> {
    let l = prop.basis_size();
    let nl = h.n_legs();
    let stride = l.pow(nl as u32);
    let integrand = HalfIntegrand::from_half(h);
    let ev = RetardedEvaluator::new(&integrand, prop);
    let pref = half_prefactor(h);
    let values = (0..l * stride)
        .into_par_iter()
        .map(|idx| {
            let legs = digits(idx % stride, l, nl);
            ev.amplitude(idx / stride, &legs).map(|a| pref * a)
        })
        .collect::<PsdResult<Vec<_>>>()?;
    Ok(AmplitudeTable { half: h.clone(), values })
}

fn digits(mut idx: usize, base: usize, n: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for x in d.iter_mut() {
        *x = idx % base;
        idx /= base;
    }
    d
}

fn index_of(d: &[usize], base: usize) -> usize {
    d.iter().rev().fold(0, |acc, &x| acc * base + x)
}

/// `−iΣ^<` and `iΣ^>` as pole sums over external levels (α row, β column).
#[derive(Clone, Debug)]
pub struct RatePair {
    pub lesser: PoleSum,
    pub greater: PoleSum,
}

/// Sums `(−1)^{|P|} B_a(I) F(I) conj(B_b(I∘P⁻¹))` over all cut-level assignments.
pub fn sigma_pair(series: &CutExpansion, prop: &Propagator) -> PsdResult<RatePair> {
    let l = prop.basis_size();
    let mut lesser = PoleSum::new(l);
    let mut greater = PoleSum::new(l);
    let mut tables: Vec<AmplitudeTable> = Vec::new();
    for t in &series.terms {
        for h in [&t.left, &t.right] {
            if !tables.iter().any(|x| x.half == *h) {
                tables.push(amplitude_table(h, prop)?);
            }
        }
    }
    let table = |h: &HalfDiagram| &tables.iter().find(|x| x.half == *h).expect("tabulated").values;
    for n in series.sectors() {
        let terms: Vec<_> = series
            .terms
            .iter()
            .filter(|t| t.n_pairs() == n)
            .map(|t| (t.sign, table(&t.left), table(&t.right), t.perm.inverse()))
            .collect();
        let nl = 2 * n + 1;
        let stride = l.pow(nl as u32);
        let poles: Vec<_> = (0..stride)
            .into_par_iter()
            .filter_map(|idx| {
                let legs = digits(idx, l, nl);
                let (fl, e) = occupation_weight(prop, &legs[..n], &legs[n..], Component::Lesser);
                let (fg, _) = occupation_weight(prop, &legs[..n], &legs[n..], Component::Greater);
                let mut w = DMatrix::<Complex64>::zeros(l, l);
                let mut permuted = vec![0usize; nl];
                for (sign, bl, br, pinv) in &terms {
                    for (m, x) in permuted.iter_mut().enumerate() {
                        *x = legs[pinv.0[m]];
                    }
                    let jdx = index_of(&permuted, l);
                    for i in 0..l {
                        let a = bl[i * stride + idx];
                        if a == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        for j in 0..l {
                            w[(i, j)] += a * br[j * stride + jdx].conj() * *sign;
                        }
                    }
                }
                if w.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                    return None;
                }
                Some((e, w.scale(fl), w.scale(fg)))
            })
            .collect();
        for (e, wl, wg) in poles {
            lesser.push(e, wl);
            greater.push(e, wg);
        }
    }
    Ok(RatePair { lesser: lesser.merged(), greater: greater.merged() })
}

/// Weights of `−iΣ^<`.
pub fn sigma_lesser(series: &CutExpansion, prop: &Propagator) -> PsdResult<PoleSum> {
    Ok(sigma_pair(series, prop)?.lesser)
}

/// Weights of `iΣ^>`.
pub fn sigma_greater(series: &CutExpansion, prop: &Propagator) -> PsdResult<PoleSum> {
    Ok(sigma_pair(series, prop)?.greater)
}

/// `Γ = i(Σ^> − Σ^<)`: the two weight lists added pole by pole.
pub fn gamma(lesser: &PoleSum, greater: &PoleSum) -> PoleSum {
    lesser.combine(greater)
}

/// Largest `‖W_< − f(E−μ) W_Γ‖` and `‖W_> − f̄(E−μ) W_Γ‖` over the poles of `Γ`.
pub fn fdt_residual(rates: &RatePair, gamma: &PoleSum, prop: &Propagator) -> f64 {
    let zero = DMatrix::<Complex64>::zeros(gamma.dim, gamma.dim);
    let mut worst: f64 = 0.0;
    for p in &gamma.poles {
        let f = fermi(p.energy - prop.spec.mu, prop.spec.beta);
        let wl = rates.lesser.weight_at(p.energy).unwrap_or(&zero);
        let wg = rates.greater.weight_at(p.energy).unwrap_or(&zero);
        worst = worst.max((wl - p.weight.scale(f)).norm()).max((wg - p.weight.scale(1.0 - f)).norm());
    }
    worst
}

/// `Σ^R(ω) = Σ_k W_k/(ω − E_k + iη)` rebuilt from the rate function.
#[derive(Clone, Debug)]
pub struct RetardedSelfEnergy {
    pub gamma: PoleSum,
    pub eta: f64,
}

impl RetardedSelfEnergy {
    pub fn eval(&self, omega: f64) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.gamma.dim, self.gamma.dim);
        for p in &self.gamma.poles {
            m += p.weight.map(|w| w / Complex64::new(omega - p.energy, self.eta));
        }
        m
    }

    pub fn advanced(&self, omega: f64) -> DMatrix<Complex64> {
        self.eval(omega).adjoint()
    }
}

pub fn sigma_retarded_from_gamma(g: &PoleSum, eta: f64) -> RetardedSelfEnergy {
    RetardedSelfEnergy { gamma: g.clone(), eta }
}

/// Uniform frequency grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn validate(&self) -> PsdResult<()> {
        if self.points < 2 || !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(PsdError::InvalidSpec(format!(
                "grid needs min < max and at least two points, got [{}, {}] x {}",
                self.min, self.max, self.points
            )));
        }
        Ok(())
    }

    pub fn omegas(&self) -> Vec<f64> {
        let h = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.min + h * k as f64).collect()
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }
}

/// Matrix samples on a frequency grid.
#[derive(Clone, Debug)]
pub struct SpectralGrid {
    pub omegas: Vec<f64>,
    pub values: Vec<DMatrix<Complex64>>,
}

impl SpectralGrid {
    /// Lorentzian-broadened samples of a pole sum.
    pub fn broadened(poles: &PoleSum, grid: &GridSpec, eta: f64) -> Self {
        let omegas = grid.omegas();
        let values = omegas.par_iter().map(|&w| poles.broadened(w, eta)).collect();
        Self { omegas, values }
    }

    /// Trapezoid `∫ X(ω) dω/2π`.
    pub fn integral(&self) -> DMatrix<Complex64> {
        let n = self.values[0].nrows();
        let mut acc = DMatrix::zeros(n, n);
        for k in 1..self.omegas.len() {
            let h = self.omegas[k] - self.omegas[k - 1];
            acc += (&self.values[k] + &self.values[k - 1]).scale(0.5 * h);
        }
        acc.scale(1.0 / (2.0 * std::f64::consts::PI))
    }
}

/// `−iG^<`, `iG^>` and `A = i(G^> − G^<)` on a grid.
#[derive(Clone, Debug)]
pub struct DysonSpectra {
    pub lesser: SpectralGrid,
    pub greater: SpectralGrid,
    pub spectral: SpectralGrid,
}

/// Solves `G^R = [ω − ε − Σ^R + iη]^{-1}` and `∓iG^≷ = G^R(∓iΣ^≷ + 2η f^≷)G^A`
/// pointwise; the `2η` term is the bare-level broadening.
pub fn dyson_spectral(
    prop: &Propagator,
    sigma_r: &RetardedSelfEnergy,
    rates: &RatePair,
    grid: &GridSpec,
) -> PsdResult<DysonSpectra> {
    grid.validate()?;
    let l = prop.basis_size();
    let eta = prop.spec.eta;
    let omegas = grid.omegas();
    let rows = omegas
        .par_iter()
        .map(|&w| {
            let mut inv = -sigma_r.eval(w);
            for i in 0..l {
                inv[(i, i)] += Complex64::new(w - prop.energy(i), eta);
            }
            let gr = inv.try_inverse().ok_or(PsdError::Singular { omega: w })?;
            if gr.iter().any(|z| !z.is_finite()) {
                return Err(PsdError::Singular { omega: w });
            }
            let ga = gr.adjoint();
            let f = fermi(w - prop.spec.mu, prop.spec.beta);
            let mut sl = rates.lesser.broadened(w, eta);
            let mut sg = rates.greater.broadened(w, eta);
            for i in 0..l {
                sl[(i, i)] += 2.0 * eta * f;
                sg[(i, i)] += 2.0 * eta * (1.0 - f);
            }
            let gl = &gr * sl * &ga;
            let gg = &gr * sg * &ga;
            let a = &gl + &gg;
            Ok((gl, gg, a))
        })
        .collect::<PsdResult<Vec<_>>>()?;
    let mut lesser = Vec::with_capacity(rows.len());
    let mut greater = Vec::with_capacity(rows.len());
    let mut spectral = Vec::with_capacity(rows.len());
    for (gl, gg, a) in rows {
        lesser.push(gl);
        greater.push(gg);
        spectral.push(a);
    }
    Ok(DysonSpectra {
        lesser: SpectralGrid { omegas: omegas.clone(), values: lesser },
        greater: SpectralGrid { omegas: omegas.clone(), values: greater },
        spectral: SpectralGrid { omegas, values: spectral },
    })
}

/// Minimum eigenvalue per pole or grid point and the global verdict.
#[derive(Clone, Debug)]
pub struct PsdReport {
    /// `(energy or ω, min eigenvalue, Frobenius norm)`
    pub entries: Vec<(f64, f64, f64)>,
    pub tolerance: f64,
    pub pass: bool,
}

impl PsdReport {
    fn build(entries: Vec<(f64, f64, f64)>, tolerance: f64) -> Self {
        let pass = entries.iter().all(|&(_, m, n)| m >= -tolerance * n.max(1.0));
        Self { entries, tolerance, pass }
    }

    pub fn from_poles(p: &PoleSum, tolerance: f64) -> Self {
        Self::build(p.poles.iter().map(|x| (x.energy, min_eigenvalue(&x.weight), x.weight.norm())).collect(), tolerance)
    }

    pub fn from_grid(g: &SpectralGrid, tolerance: f64) -> Self {
        let entries = g.omegas.par_iter().zip(&g.values).map(|(&w, m)| (w, min_eigenvalue(m), m.norm())).collect();
        Self::build(entries, tolerance)
    }

    /// Smallest eigenvalue relative to `max(1, ‖W‖)`.
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|&(_, m, n)| m / n.max(1.0)).fold(f64::INFINITY, f64::min)
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Cut expansion of a whole series, optionally completed to a Hermitian square.
pub fn expand_series(series: ApproximationSeries, psd_extend: bool) -> PsdResult<CutExpansion> {
    let mut out = CutExpansion::default();
    for d in generate_series(series)? {
        out.extend(enumerate_retarded_cuts(&d)?);
    }
    if psd_extend {
        out = minimal_psd_extension(&out)?;
    }
    Ok(out)
}

/// The exchange cut of second Born on its own: a Hermitian but indefinite form.
pub fn non_psd_fixture() -> PsdResult<CutExpansion> {
    let full = expand_series(ApproximationSeries { family: Family::SecondBorn, max_order: 2 }, false)?;
    let terms = full.terms.into_iter().filter(|t| t.sign < 0.0).collect();
    Ok(CutExpansion { terms })
}

/// Closed-form second-Born `−iΣ^<`:
/// `Σ f̄_p f_a f_b v_{ipab}(v_{jpab} − v_{jpba})*` at `ε_a + ε_b − ε_p`.
pub fn second_born_lesser(prop: &Propagator) -> PoleSum {
    let l = prop.basis_size();
    let v = &prop.spec.vmat;
    let mut out = PoleSum::new(l);
    for p in 0..l {
        for a in 0..l {
            for b in 0..l {
                let occ = prop.fbar(p) * prop.f(a) * prop.f(b);
                let mut w = DMatrix::zeros(l, l);
                for i in 0..l {
                    for j in 0..l {
                        w[(i, j)] = v.get(i, p, a, b) * (v.get(j, p, a, b) - v.get(j, p, b, a)).conj() * occ;
                    }
                }
                out.push(prop.energy(a) + prop.energy(b) - prop.energy(p), w);
            }
        }
    }
    out.merged()
}

/// Largest residue difference between two pole sums, matching poles within the merge tolerance.
pub fn pole_sum_distance(a: &PoleSum, b: &PoleSum) -> f64 {
    let zero = DMatrix::<Complex64>::zeros(a.dim, a.dim);
    let mut worst: f64 = 0.0;
    for p in &a.poles {
        worst = worst.max((&p.weight - b.weight_at(p.energy).unwrap_or(&zero)).norm());
    }
    for p in &b.poles {
        worst = worst.max((&p.weight - a.weight_at(p.energy).unwrap_or(&zero)).norm());
    }
    worst
}

/// Everything the spectral pipeline produces for one system.
#[derive(Clone, Debug)]
pub struct SpectralRun {
    pub rates: RatePair,
    pub gamma: PoleSum,
    pub sigma_r: RetardedSelfEnergy,
    pub spectra: DysonSpectra,
    pub levels: Vec<f64>,
    pub iterations: usize,
}

impl SpectralRun {
    pub fn gamma_grid(&self, grid: &GridSpec) -> SpectralGrid {
        SpectralGrid::broadened(&self.gamma, grid, self.sigma_r.eta)
    }
}

/// Quasiparticle self-consistency: level energies are moved to
/// `ε₀ + Re Σ^R_ii(ε)` with linear mixing and the rates recomputed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfConsistency {
    pub max_iterations: usize,
    pub damping: f64,
    pub tolerance: f64,
}

impl Default for SelfConsistency {
    fn default() -> Self {
        Self { max_iterations: 20, damping: 0.5, tolerance: 1e-6 }
    }
}

fn single_pass(series: &CutExpansion, spec: &SystemSpec, grid: &GridSpec) -> PsdResult<SpectralRun> {
    let prop = Propagator::new(spec.clone());
    let rates = sigma_pair(series, &prop)?;
    let g = gamma(&rates.lesser, &rates.greater);
    let sigma_r = sigma_retarded_from_gamma(&g, spec.eta);
    let spectra = dyson_spectral(&prop, &sigma_r, &rates, grid)?;
    Ok(SpectralRun { rates, gamma: g, sigma_r, spectra, levels: spec.levels.clone(), iterations: 0 })
}

/// Full pipeline; with `sc` set the damped level iteration runs until
/// `‖ΔA‖∞` drops below its tolerance or the iteration cap is hit.
pub fn run_spectral(
    series: &CutExpansion,
    spec: &SystemSpec,
    grid: &GridSpec,
    sc: Option<SelfConsistency>,
) -> PsdResult<SpectralRun> {
    spec.validate()?;
    grid.validate()?;
    let mut run = single_pass(series, spec, grid)?;
    let Some(sc) = sc else {
        return Ok(run);
    };
    let mut levels = spec.levels.clone();
    for it in 1..=sc.max_iterations {
        let target: Vec<f64> = spec
            .levels
            .iter()
            .enumerate()
            .map(|(i, &e0)| e0 + run.sigma_r.eval(levels[i])[(i, i)].re)
            .collect();
        for (x, t) in levels.iter_mut().zip(&target) {
            *x = (1.0 - sc.damping) * *x + sc.damping * t;
        }
        let mut next_spec = spec.clone();
        next_spec.levels = levels.clone();
        let mut next = single_pass(series, &next_spec, grid)?;
        next.iterations = it;
        let delta = run
            .spectra
            .spectral
            .values
            .iter()
            .zip(&next.spectra.spectral.values)
            .map(|(a, b)| (a - b).camax())
            .fold(0.0, f64::max);
        run = next;
        if delta < sc.tolerance {
            break;
        }
    }
    Ok(run)
}
