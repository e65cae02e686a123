//! Command implementations behind the `psd-diagrams` binary.
//!
//! Each command writes its report to `out` and files under the configured
//! output directory. Errors map to exit codes through [`exit_code`].

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    expand_series, fdt_residual, gamma, non_psd_fixture, pole_sum_distance, run_spectral, second_born_lesser,
    sigma_lesser, sigma_pair, with_threads, PsdReport, SelfConsistency, SpectralGrid,
};
use crate::config::RunConfig;
use crate::cutting::{enumerate_retarded_cuts, minimal_psd_extension, CutExpansion, CutTerm, HalfDiagram};
use crate::diagram::{bubble_chain, ladder, ApproximationSeries, Diagram, Family};
use crate::ed::{exact_sigma, exact_spectral, second_born_remainder, FockSpace, GrandCanonicalState};
use crate::error::{PsdError, PsdResult};
use crate::matsubara::check_continuation;
use crate::poles::min_eigenvalue;
use crate::propagator::Propagator;
use crate::retarded::adjoint_deviation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(e: &PsdError) -> i32 {
    match e {
        PsdError::Config { .. } | PsdError::InvalidSpec(_) | PsdError::Unsupported(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fixture {
    NonPsd,
}

impl std::str::FromStr for Fixture {
    type Err = PsdError;

    fn from_str(s: &str) -> PsdResult<Self> {
        match s {
            "non-psd" => Ok(Fixture::NonPsd),
            other => Err(PsdError::Unsupported(format!("unknown fixture `{other}`"))),
        }
    }
}

fn diagrams_at_order(family: Family, order: usize) -> PsdResult<Vec<(&'static str, Diagram)>> {
    Ok(match family {
        Family::SecondBorn => vec![("direct", ladder(2, false)?), ("exchange", ladder(2, true)?)],
        Family::TmatrixPp => vec![("direct", ladder(order, false)?), ("exchange", ladder(order, true)?)],
        Family::Gw => vec![("chain", bubble_chain(order)?)],
    })
}

fn term_line(k: usize, t: &CutTerm) -> String {
    format!(
        "term {k} N={} left={:016x} right={:016x} perm={} sign={:+}",
        t.n_pairs(),
        t.left.topology_id,
        t.right.topology_id,
        t.perm,
        t.sign as i32
    )
}

fn write_dot(dir: &Path, h: &HalfDiagram, written: &mut Vec<u64>) -> PsdResult<()> {
    if written.contains(&h.topology_id) {
        return Ok(());
    }
    written.push(h.topology_id);
    let name = format!("half_{:016x}", h.topology_id);
    std::fs::write(dir.join(format!("{name}.dot")), h.to_dot(&name))?;
    Ok(())
}

/// Lists the retarded cuts of every diagram at the configured order and
/// writes one DOT file per half-diagram topology.
pub fn cmd_expand(cfg: &RunConfig, out: &mut dyn Write) -> PsdResult<CutExpansion> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut all = CutExpansion::default();
    let mut written = Vec::new();
    for (kind, d) in diagrams_at_order(cfg.family, cfg.order)? {
        let cuts = enumerate_retarded_cuts(&d)?;
        writeln!(out, "diagram {} {kind} order {} terms {}", cfg.family.name(), d.order(), cuts.len())?;
        for (k, t) in cuts.terms.iter().enumerate() {
            writeln!(out, "{}", term_line(k, t))?;
            write_dot(&cfg.output_dir, &t.left, &mut written)?;
            write_dot(&cfg.output_dir, &t.right, &mut written)?;
        }
        std::fs::write(cfg.output_dir.join(format!("diagram_{}_{kind}_{}.dot", cfg.family.name(), d.order())), d.to_dot("sigma"))?;
        all.extend(cuts);
    }
    if cfg.psd_extend {
        let ext = minimal_psd_extension(&all)?;
        writeln!(out, "extension terms {}", ext.len() - all.len())?;
        for (k, t) in ext.terms[all.len()..].iter().enumerate() {
            writeln!(out, "{}", term_line(k, t))?;
            write_dot(&cfg.output_dir, &t.left, &mut written)?;
            write_dot(&cfg.output_dir, &t.right, &mut written)?;
        }
        all = ext;
    }
    Ok(all)
}

fn header(dim: usize, last: &str) -> String {
    let sep = if dim > 10 { "_" } else { "" };
    let mut h = String::from("omega");
    for i in 0..dim {
        for j in 0..dim {
            let _ = write!(h, ",re_{i}{sep}{j},im_{i}{sep}{j}");
        }
    }
    let _ = write!(h, ",{last}");
    h
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn matrix_row(omega: f64, m: &DMatrix<Complex64>, last: &str) -> String {
    let mut s = num(omega);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let _ = write!(s, ",{},{}", num(m[(i, j)].re), num(m[(i, j)].im));
        }
    }
    let _ = write!(s, ",{last}");
    s
}

/// CSV of a grid with the minimum eigenvalue per row.
pub fn grid_csv(g: &SpectralGrid, verdict: Option<bool>) -> String {
    let dim = g.values.first().map(|m| m.nrows()).unwrap_or(0);
    let mut s = header(dim, "min_eig");
    s.push('\n');
    for (w, m) in g.omegas.iter().zip(&g.values) {
        s.push_str(&matrix_row(*w, m, &num(min_eigenvalue(m))));
        s.push('\n');
    }
    if let Some(pass) = verdict {
        let _ = writeln!(s, "# PSD: {}", if pass { "PASS" } else { "FAIL" });
    }
    s
}

/// Outcome of [`cmd_spectra`].
#[derive(Clone, Debug)]
pub struct SpectraSummary {
    pub pass: bool,
    pub gamma_poles: usize,
    pub worst_gamma: f64,
    pub worst_spectral: f64,
    pub iterations: usize,
}

/// Runs the pipeline and writes `sigma_gamma.csv` and `spectral.csv`.
pub fn cmd_spectra(cfg: &RunConfig, fixture: Option<Fixture>, out: &mut dyn Write) -> PsdResult<SpectraSummary> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let series = match fixture {
        Some(Fixture::NonPsd) => non_psd_fixture()?,
        None => expand_series(cfg.series(), cfg.psd_extend)?,
    };
    let sc = cfg.self_consistent.then(SelfConsistency::default);
    let run = with_threads(|| run_spectral(&series, &cfg.spec, &cfg.grid, sc))?;
    let gamma_grid = run.gamma_grid(&cfg.grid);
    let poles = PsdReport::from_poles(&run.gamma, 1e-10);
    let gamma_rep = PsdReport::from_grid(&gamma_grid, 1e-10);
    let spectral_rep = PsdReport::from_grid(&run.spectra.spectral, 1e-10);
    let pass = poles.pass && gamma_rep.pass && spectral_rep.pass;
    std::fs::write(cfg.output_dir.join("sigma_gamma.csv"), grid_csv(&gamma_grid, Some(pass)))?;
    std::fs::write(cfg.output_dir.join("spectral.csv"), grid_csv(&run.spectra.spectral, Some(pass)))?;
    writeln!(out, "terms {}", series.len())?;
    writeln!(out, "gamma poles {} min_eig {:.3e}", run.gamma.len(), poles.worst())?;
    writeln!(out, "spectral min_eig {:.3e}", spectral_rep.worst())?;
    if cfg.self_consistent {
        writeln!(out, "self-consistent iterations {}", run.iterations)?;
    }
    writeln!(out, "PSD: {}", if pass { "PASS" } else { "FAIL" })?;
    Ok(SpectraSummary {
        pass,
        gamma_poles: run.gamma.len(),
        worst_gamma: poles.worst(),
        worst_spectral: spectral_rep.worst(),
        iterations: run.iterations,
    })
}

pub const CHECK_NAMES: &[&str] = &["continuation", "gluing", "fdt", "adjoint"];

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub eta: f64,
    pub max_dev: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.max_dev <= self.tol
    }

    pub fn line(&self) -> String {
        format!("CHECK {} {:.3e} {:.0e} {}", self.name, self.max_dev, self.tol, if self.pass() { "PASS" } else { "FAIL" })
    }
}

fn distinct_halves(series: &CutExpansion) -> Vec<HalfDiagram> {
    let mut hs: Vec<HalfDiagram> = Vec::new();
    for t in &series.terms {
        for h in [&t.left, &t.right] {
            if !hs.contains(h) {
                hs.push(h.clone());
            }
        }
    }
    hs
}

fn run_check(name: &str, cfg: &RunConfig, prop: &Propagator, rng: &mut ChaCha8Rng) -> PsdResult<CheckResult> {
    let l = prop.basis_size();
    let halves = || -> PsdResult<Vec<HalfDiagram>> { Ok(distinct_halves(&expand_series(cfg.series(), false)?)) };
    let (max_dev, tol) = match name {
        "continuation" => {
            let mut worst: f64 = 0.0;
            for h in halves()? {
                let g = crate::retarded::HalfIntegrand::from_half(&h);
                let legs: Vec<usize> = (0..g.n_legs()).map(|_| rng.gen_range(0..l)).collect();
                let ws: Vec<Vec<f64>> = (0..10).map(|_| (0..g.n_slots).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
                worst = worst.max(check_continuation(&g, prop, rng.gen_range(0..l), &legs, &ws)?);
            }
            (worst, 1e-10)
        }
        "gluing" => {
            let series = expand_series(ApproximationSeries { family: Family::SecondBorn, max_order: 2 }, false)?;
            (pole_sum_distance(&sigma_lesser(&series, prop)?, &second_born_lesser(prop)), 1e-10)
        }
        "fdt" => {
            let series = expand_series(cfg.series(), cfg.psd_extend)?;
            let rates = sigma_pair(&series, prop)?;
            (fdt_residual(&rates, &gamma(&rates.lesser, &rates.greater), prop), 1e-10)
        }
        "adjoint" => {
            let mut worst: f64 = 0.0;
            for h in halves()? {
                for _ in 0..5 {
                    let legs: Vec<usize> = (0..h.n_legs()).map(|_| rng.gen_range(0..l)).collect();
                    let ws: Vec<f64> = (0..h.n_slots()).map(|_| rng.gen_range(-3.0..3.0)).collect();
                    worst = worst.max(adjoint_deviation(&h, prop, rng.gen_range(0..l), &legs, &ws)?);
                }
            }
            (worst, 1e-12)
        }
        other => return Err(PsdError::Unsupported(format!("unknown check `{other}`; expected one of {CHECK_NAMES:?}"))),
    };
    Ok(CheckResult { name: name.to_string(), eta: prop.spec.eta, max_dev, tol })
}

/// Runs the selected checks (all when `only` is `None`); with `eta_sweep`
/// each check repeats at `η`, `η/2` and `η/4`.
pub fn cmd_check(cfg: &RunConfig, only: Option<&str>, eta_sweep: bool, out: &mut dyn Write) -> PsdResult<Vec<CheckResult>> {
    let names: Vec<&str> = match only {
        Some(n) if CHECK_NAMES.contains(&n) => vec![n],
        Some(n) => return Err(PsdError::Unsupported(format!("unknown check `{n}`; expected one of {CHECK_NAMES:?}"))),
        None => CHECK_NAMES.to_vec(),
    };
    let etas: Vec<f64> = if eta_sweep {
        [1.0, 0.5, 0.25].iter().map(|s| cfg.spec.eta * s).collect()
    } else {
        vec![cfg.spec.eta]
    };
    let mut results = Vec::new();
    for eta in etas {
        if eta_sweep {
            writeln!(out, "# eta = {eta:.6e}")?;
        }
        let prop = Propagator::new(cfg.spec.with_eta(eta));
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for name in &names {
            let r = with_threads(|| run_check(name, cfg, &prop, &mut rng))?;
            writeln!(out, "{}", r.line())?;
            results.push(r);
        }
    }
    Ok(results)
}

/// Summary of [`cmd_oracle`].
#[derive(Clone, Debug)]
pub struct OracleSummary {
    pub exact_psd: bool,
    pub worst_cauchy_schwarz: f64,
    pub scaling: Vec<(f64, f64)>,
}

/// Exact spectral function and self-energy on the grid, Cauchy–Schwarz
/// table and the weak-coupling remainder table.
pub fn cmd_oracle(cfg: &RunConfig, out: &mut dyn Write) -> PsdResult<OracleSummary> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let spec = &cfg.spec;
    let fs = FockSpace::build(spec)?;
    let st = GrandCanonicalState::prepare(&fs, spec.beta, spec.mu);
    let a = exact_spectral(&fs, &st);
    let l = fs.n_orbitals;
    let exact_psd = PsdReport::from_poles(&a, 1e-12);
    let grid = SpectralGrid::broadened(&a, &cfg.grid, spec.eta);
    std::fs::write(cfg.output_dir.join("oracle_spectral.csv"), grid_csv(&grid, Some(exact_psd.pass)))?;

    let zs: Vec<Complex64> = grid.omegas.iter().map(|&w| Complex64::new(w, spec.eta)).collect();
    let mut csv = header(l, "singular");
    csv.push('\n');
    for (z, s) in zs.iter().zip(exact_sigma(spec, &a, &zs)) {
        match s {
            Ok(m) => csv.push_str(&matrix_row(z.re, &m, "0")),
            Err(_) => csv.push_str(&matrix_row(z.re, &DMatrix::from_element(l, l, Complex64::new(f64::NAN, f64::NAN)), "1")),
        }
        csv.push('\n');
    }
    std::fs::write(cfg.output_dir.join("oracle_sigma.csv"), csv)?;

    writeln!(out, "EXACT_PSD {:.3e} {}", exact_psd.worst(), exact_psd.verdict())?;
    let rho = st.density_matrix(&fs);
    let mut worst_cs: f64 = 0.0;
    for i in 0..l {
        for j in 0..l {
            let bound = rho[(i, i)].re * rho[(j, j)].re;
            let ratio = if bound > 0.0 { rho[(i, j)].norm_sqr() / bound } else { 0.0 };
            worst_cs = worst_cs.max(ratio);
            writeln!(out, "CS {i} {j} {ratio:.6e}")?;
        }
    }
    let z = Complex64::new(spec.mu, 0.5);
    let mut scaling: Vec<(f64, f64)> = Vec::new();
    for s in [0.1, 0.05, 0.025] {
        let d = second_born_remainder(&spec.with_vmat(spec.vmat.scaled(s)), z)?;
        match scaling.last() {
            Some(&(_, prev)) => writeln!(out, "SCALING {s:.4} {d:.6e} {:.4}", prev / d)?,
            None => writeln!(out, "SCALING {s:.4} {d:.6e} -")?,
        }
        scaling.push((s, d));
    }
    Ok(OracleSummary { exact_psd: exact_psd.pass, worst_cauchy_schwarz: worst_cs, scaling })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> (RunConfig, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let mut c: RunConfig = text.parse().unwrap();
        c.output_dir = dir.path().to_path_buf();
        (c, dir)
    }

    #[test]
    fn expand_counts() {
        let (c, _d) = cfg("random_levels = 3\nfamily = tmatrix_pp\norder = 4\npsd_extend = false\n");
        let mut out = Vec::new();
        cmd_expand(&c, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("diagram tmatrix_pp direct order 4 terms 3"), "{text}");
        let (c, d) = cfg("random_levels = 3\nfamily = second_born\npsd_extend = false\n");
        let mut out = Vec::new();
        let e = cmd_expand(&c, &mut out).unwrap();
        assert_eq!(e.len(), 2);
        assert!(std::fs::read_dir(d.path()).unwrap().count() >= 3);
    }

    #[test]
    fn check_default_passes_and_filters() {
        let (c, _d) = cfg("random_levels = 3\nseed = 2\nfamily = tmatrix_pp\norder = 3\n");
        let mut out = Vec::new();
        let r = cmd_check(&c, None, false, &mut out).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|x| x.pass()), "{}", String::from_utf8_lossy(&out));
        let mut out = Vec::new();
        let r = cmd_check(&c, Some("continuation"), true, &mut out).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(String::from_utf8(out).unwrap().lines().filter(|l| l.starts_with("CHECK continuation")).count(), 3);
        assert!(cmd_check(&c, Some("nope"), false, &mut Vec::new()).is_err());
    }

    #[test]
    fn spectra_verdicts() {
        let (c, d) = cfg("random_levels = 3\nseed = 4\nfamily = tmatrix_pp\norder = 3\ngrid_points = 201\n");
        let s = cmd_spectra(&c, None, &mut Vec::new()).unwrap();
        assert!(s.pass);
        let text = std::fs::read_to_string(d.path().join("spectral.csv")).unwrap();
        assert!(text.starts_with("omega,re_00,im_00,re_01"));
        assert!(text.ends_with("# PSD: PASS\n"));
        let s = cmd_spectra(&c, Some(Fixture::NonPsd), &mut Vec::new()).unwrap();
        assert!(!s.pass);
        let text = std::fs::read_to_string(d.path().join("sigma_gamma.csv")).unwrap();
        assert!(text.ends_with("# PSD: FAIL\n"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&PsdError::Config { line: 1, msg: String::new() }), EXIT_CONFIG);
        assert_eq!(exit_code(&PsdError::Singular { omega: 0.0 }), EXIT_NUMERIC);
        let (c, _d) = cfg("random_levels = 11\nv_norm = 0\n");
        let e = cmd_oracle(&c, &mut Vec::new()).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
    }

    #[test]
    fn oracle_on_dimer() {
        let (c, d) = cfg("preset = hubbard_dimer\nt = 1\nu = 1\nbeta = 2\nmu = 0.5\ngrid_points = 101\n");
        let s = cmd_oracle(&c, &mut Vec::new()).unwrap();
        assert!(s.exact_psd);
        assert!(s.worst_cauchy_schwarz <= 1.0 + 1e-12);
        let r = s.scaling[0].1 / s.scaling[1].1;
        assert!((6.0..=10.0).contains(&r), "{r}");
        assert!(d.path().join("oracle_sigma.csv").exists());
    }
}
