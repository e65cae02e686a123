//! Exact diagonalization in Fock space: Lehmann Green's functions and
//! self-energies of small systems.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::assembly::{expand_series, gamma, sigma_pair};
use crate::diagram::{ApproximationSeries, Family};
use crate::error::{PsdError, PsdResult};
use crate::poles::PoleSum;
use crate::propagator::{fermi, Propagator, SystemSpec, VMat};

pub const MAX_ORBITALS: usize = 10;

/// Occupation-number basis and `H = Σ ε n + ½ Σ ⟨ij|v|kl⟩ c†_i c†_j c_l c_k`,
/// stored as one block per particle number.
#[derive(Clone, Debug)]
pub struct FockSpace {
    pub n_orbitals: usize,
    /// Basis states of each particle-number block.
    pub blocks: Vec<Vec<u32>>,
    pub hamiltonian: Vec<DMatrix<Complex64>>,
}

/// `c_i |s⟩` as `(sign, state)`.
fn annihilate(i: usize, s: u32) -> Option<(f64, u32)> {
    if s >> i & 1 == 0 {
        return None;
    }
    let sign = if (s & ((1u32 << i) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, s & !(1u32 << i)))
}

fn create(i: usize, s: u32) -> Option<(f64, u32)> {
    if s >> i & 1 == 1 {
        return None;
    }
    let sign = if (s & ((1u32 << i) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, s | 1u32 << i))
}

impl FockSpace {
    pub fn build(spec: &SystemSpec) -> PsdResult<Self> {
        spec.validate()?;
        let l = spec.levels.len();
        if l > MAX_ORBITALS {
            return Err(PsdError::InvalidSpec(format!("exact diagonalization supports at most {MAX_ORBITALS} levels, got {l}")));
        }
        let mut blocks = vec![Vec::new(); l + 1];
        for s in 0..(1u32 << l) {
            blocks[s.count_ones() as usize].push(s);
        }
        let v = &spec.vmat;
        let hamiltonian = blocks
            .iter()
            .map(|states| {
                let pos = |s: u32| states.binary_search(&s).expect("number conserved");
                let mut h = DMatrix::zeros(states.len(), states.len());
                for (col, &s) in states.iter().enumerate() {
                    let e: f64 = (0..l).filter(|&i| s >> i & 1 == 1).map(|i| spec.levels[i]).sum();
                    h[(col, col)] += e;
                    for k in 0..l {
                        let Some((s1, a)) = annihilate(k, s) else { continue };
                        for m in 0..l {
                            let Some((s2, b)) = annihilate(m, a) else { continue };
                            for j in 0..l {
                                let Some((s3, c)) = create(j, b) else { continue };
                                for i in 0..l {
                                    let Some((s4, d)) = create(i, c) else { continue };
                                    let x = v.get(i, j, k, m);
                                    if x != Complex64::new(0.0, 0.0) {
                                        h[(pos(d), col)] += x * (0.5 * s1 * s2 * s3 * s4);
                                    }
                                }
                            }
                        }
                    }
                }
                h
            })
            .collect();
        Ok(Self { n_orbitals: l, blocks, hamiltonian })
    }

    /// Eigenvalues of the `n`-particle block, ascending.
    pub fn block_spectrum(&self, n: usize) -> Vec<f64> {
        let mut e: Vec<f64> = self.hamiltonian[n].clone().symmetric_eigenvalues().iter().cloned().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Largest `‖H − H†‖` over blocks.
    pub fn hermiticity_defect(&self) -> f64 {
        self.hamiltonian.iter().map(|h| (h - h.adjoint()).norm()).fold(0.0, f64::max)
    }
}

/// Eigenstates of each block with grand-canonical weights `e^{−β(E−μN)}/Z`.
#[derive(Clone, Debug)]
pub struct GrandCanonicalState {
    pub beta: f64,
    pub mu: f64,
    pub energies: Vec<Vec<f64>>,
    pub vectors: Vec<DMatrix<Complex64>>,
    pub weights: Vec<Vec<f64>>,
}

impl GrandCanonicalState {
    pub fn prepare(fs: &FockSpace, beta: f64, mu: f64) -> Self {
        let mut energies = Vec::new();
        let mut vectors = Vec::new();
        for h in &fs.hamiltonian {
            let eig = h.clone().symmetric_eigen();
            energies.push(eig.eigenvalues.iter().cloned().collect::<Vec<f64>>());
            vectors.push(eig.eigenvectors);
        }
        let grand = |n: usize, e: f64| e - mu * n as f64;
        let floor = energies
            .iter()
            .enumerate()
            .flat_map(|(n, es)| es.iter().map(move |&e| grand(n, e)))
            .fold(f64::INFINITY, f64::min);
        let mut weights: Vec<Vec<f64>> = energies
            .iter()
            .enumerate()
            .map(|(n, es)| es.iter().map(|&e| (-beta * (grand(n, e) - floor)).exp()).collect())
            .collect();
        let z: f64 = weights.iter().flatten().sum();
        for w in weights.iter_mut().flatten() {
            *w /= z;
        }
        Self { beta, mu, energies, vectors, weights }
    }

    /// `⟨c†_j c_i⟩` as a matrix indexed `(i, j)`.
    pub fn density_matrix(&self, fs: &FockSpace) -> DMatrix<Complex64> {
        let l = fs.n_orbitals;
        let mut rho = DMatrix::zeros(l, l);
        for n in 1..=l {
            let ops = annihilators(fs, self, n);
            for (a, w) in self.weights[n].iter().enumerate() {
                for i in 0..l {
                    for j in 0..l {
                        let mut s = Complex64::new(0.0, 0.0);
                        for b in 0..ops[i].nrows() {
                            s += ops[j][(b, a)].conj() * ops[i][(b, a)];
                        }
                        rho[(i, j)] += s * *w;
                    }
                }
            }
        }
        rho
    }
}

/// `⟨b, N−1| c_i |a, N⟩` in the eigenbases, one matrix per orbital.
fn annihilators(fs: &FockSpace, st: &GrandCanonicalState, n: usize) -> Vec<DMatrix<Complex64>> {
    let from = &fs.blocks[n];
    let to = &fs.blocks[n - 1];
    (0..fs.n_orbitals)
        .map(|i| {
            let mut c = DMatrix::<Complex64>::zeros(to.len(), from.len());
            for (col, &s) in from.iter().enumerate() {
                if let Some((sign, t)) = annihilate(i, s) {
                    let row = to.binary_search(&t).expect("one particle fewer");
                    c[(row, col)] = Complex64::new(sign, 0.0);
                }
            }
            st.vectors[n - 1].adjoint() * c * &st.vectors[n]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactKind {
    /// `−iG^<`
    Lesser,
    /// `iG^>`
    Greater,
}

/// Lehmann pole sum of `−iG^<` or `iG^>` at true frequencies `E_{N} − E_{N−1}`.
pub fn exact_green(fs: &FockSpace, st: &GrandCanonicalState, kind: ExactKind) -> PoleSum {
    let l = fs.n_orbitals;
    let mut out = PoleSum::new(l);
    for n in 1..=l {
        let ops = annihilators(fs, st, n);
        for a in 0..fs.blocks[n].len() {
            for b in 0..fs.blocks[n - 1].len() {
                let w = match kind {
                    ExactKind::Lesser => st.weights[n][a],
                    ExactKind::Greater => st.weights[n - 1][b],
                };
                if w == 0.0 {
                    continue;
                }
                let amp: Vec<Complex64> = (0..l).map(|i| ops[i][(b, a)]).collect();
                if amp.iter().all(|z| z.norm() < 1e-15) {
                    continue;
                }
                let m = DMatrix::from_fn(l, l, |i, j| amp[i] * amp[j].conj() * w);
                out.push(st.energies[n][a] - st.energies[n - 1][b], m);
            }
        }
    }
    out.merged()
}

/// `A = i(G^> − G^<)` from its two parts.
pub fn exact_spectral(fs: &FockSpace, st: &GrandCanonicalState) -> PoleSum {
    exact_green(fs, st, ExactKind::Lesser).combine(&exact_green(fs, st, ExactKind::Greater))
}

/// `G(z) = Σ_k W_k/(z − E_k)`.
pub fn resolvent(a: &PoleSum, z: Complex64) -> DMatrix<Complex64> {
    let mut g = DMatrix::zeros(a.dim, a.dim);
    for p in &a.poles {
        g += p.weight.map(|w| w / (z - p.energy));
    }
    g
}

/// `Σ(z) = g(z)^{-1} − G(z)^{-1}` with `g` the bare resolvent; one entry per frequency.
pub fn exact_sigma(spec: &SystemSpec, a: &PoleSum, zs: &[Complex64]) -> Vec<PsdResult<DMatrix<Complex64>>> {
    zs.iter()
        .map(|&z| {
            let g = resolvent(a, z);
            let inv = g.try_inverse().ok_or(PsdError::Singular { omega: z.re })?;
            if inv.iter().any(|x| !x.is_finite()) || inv.norm() > 1e12 {
                return Err(PsdError::Singular { omega: z.re });
            }
            let mut s = -inv;
            for (i, e) in spec.levels.iter().enumerate() {
                s[(i, i)] += z - e;
            }
            Ok(s)
        })
        .collect()
}

/// `Σ_ik = Σ_jl (⟨ij|v|kl⟩ − ⟨ij|v|lk⟩) ρ_lj` with `ρ_lj = ⟨c†_j c_l⟩`.
pub fn hartree_fock(v: &VMat, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let l = v.size();
    DMatrix::from_fn(l, l, |i, k| {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..l {
            for m in 0..l {
                s += (v.get(i, j, k, m) - v.get(i, j, m, k)) * rho[(m, j)];
            }
        }
        s
    })
}

/// Static self-energy through second order: Hartree–Fock on the bare density
/// plus Hartree–Fock on its first-order response.
pub fn static_self_energy(spec: &SystemSpec) -> DMatrix<Complex64> {
    let l = spec.levels.len();
    let beta = spec.beta;
    let f: Vec<f64> = spec.levels.iter().map(|e| fermi(e - spec.mu, beta)).collect();
    let rho0 = DMatrix::from_fn(l, l, |i, j| if i == j { Complex64::new(f[i], 0.0) } else { Complex64::new(0.0, 0.0) });
    let first = hartree_fock(&spec.vmat, &rho0);
    let drho = DMatrix::from_fn(l, l, |a, b| {
        let de = spec.levels[a] - spec.levels[b];
        let slope = if de.abs() < 1e-12 { -beta * f[a] * (1.0 - f[a]) } else { (f[a] - f[b]) / de };
        first[(a, b)] * slope
    });
    first + hartree_fock(&spec.vmat, &drho)
}

/// `‖Σ_exact(z) − Σ_static − Σ_2B(z)‖`, the part of the exact self-energy
/// beyond second order.
pub fn second_born_remainder(spec: &SystemSpec, z: Complex64) -> PsdResult<f64> {
    let fs = FockSpace::build(spec)?;
    let st = GrandCanonicalState::prepare(&fs, spec.beta, spec.mu);
    let exact = exact_sigma(spec, &exact_spectral(&fs, &st), &[z]).remove(0)?;
    let series = expand_series(ApproximationSeries { family: Family::SecondBorn, max_order: 2 }, false)?;
    let r = sigma_pair(&series, &Propagator::new(spec.clone()))?;
    let sb = resolvent(&gamma(&r.lesser, &r.greater), z);
    Ok((exact - sb - static_self_energy(spec)).norm())
}

/// Hubbard dimer in the bonding/antibonding basis. Orbitals are
/// `(bonding ↑, bonding ↓, antibonding ↑, antibonding ↓)` with levels `∓t`.
pub fn hubbard_dimer(t: f64, u: f64, beta: f64, mu: f64, eta: f64) -> PsdResult<SystemSpec> {
    let mut site = VMat::zeros(4);
    // site orbitals (s, σ) -> 2s + σ
    for s in 0..2 {
        let (up, dn) = (2 * s, 2 * s + 1);
        site.set(up, dn, up, dn, Complex64::new(u, 0.0));
        site.set(dn, up, dn, up, Complex64::new(u, 0.0));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    // columns: new orbital, rows: site orbital
    let mut c = [[0.0; 4]; 4];
    for sigma in 0..2 {
        c[sigma][sigma] = r;
        c[2 + sigma][sigma] = r;
        c[sigma][2 + sigma] = r;
        c[2 + sigma][2 + sigma] = -r;
    }
    let mut v = VMat::zeros(4);
    for a in 0..4 {
        for b in 0..4 {
            for cc in 0..4 {
                for d in 0..4 {
                    let mut x = Complex64::new(0.0, 0.0);
                    for i in 0..4 {
                        for j in 0..4 {
                            for k in 0..4 {
                                for m in 0..4 {
                                    let w = c[i][a] * c[j][b] * c[k][cc] * c[m][d];
                                    if w != 0.0 {
                                        x += site.get(i, j, k, m) * w;
                                    }
                                }
                            }
                        }
                    }
                    v.set(a, b, cc, d, x);
                }
            }
        }
    }
    SystemSpec::new(vec![-t, -t, t, t], v, beta, mu, eta)
}

/// Two-particle spectrum of the dimer: triplet at 0, singlets at `U` and `U/2 ± √(U²/4 + 4t²)`.
pub fn hubbard_dimer_two_particle(t: f64, u: f64) -> Vec<f64> {
    let r = (u * u / 4.0 + 4.0 * t * t).sqrt();
    let mut e = vec![0.0, 0.0, 0.0, u, u / 2.0 - r, u / 2.0 + r];
    e.sort_by(f64::total_cmp);
    e
}
