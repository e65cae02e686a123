//! Run configuration: flat `key = value` text with repeated `vmat` lines.
//!
//! ```text
//! levels = -1.0, 0.2, 0.9
//! beta = 2.0
//! mu = 0.0
//! eta = 0.05
//! vmat 0 1 0 1 0.3 0.0
//! family = tmatrix_pp
//! order = 3
//! ```
//!
//! `vmat i j k l re im` sets one element; with `vmat_symmetrize = true` its
//! conjugate and pair-exchange images are filled in too. `random_levels = n`
//! replaces `levels` and `vmat` by a seeded random system (`seed`, `v_norm`).
//! `preset = hubbard_dimer` builds the dimer from `t` and `u`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;

use crate::assembly::GridSpec;
use crate::diagram::{ApproximationSeries, Family};
use crate::ed::hubbard_dimer;
use crate::error::{PsdError, PsdResult};
use crate::propagator::{SystemSpec, VMat};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spec: SystemSpec,
    pub family: Family,
    pub order: usize,
    pub psd_extend: bool,
    pub self_consistent: bool,
    pub grid: GridSpec,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn series(&self) -> ApproximationSeries {
        ApproximationSeries { family: self.family, max_order: self.order }
    }

    pub fn load(path: &std::path::Path) -> PsdResult<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }
}

const KEYS: &[&str] = &[
    "levels",
    "beta",
    "mu",
    "eta",
    "vmat_symmetrize",
    "random_levels",
    "seed",
    "v_norm",
    "preset",
    "t",
    "u",
    "family",
    "order",
    "psd_extend",
    "self_consistent",
    "grid_min",
    "grid_max",
    "grid_points",
    "output_dir",
];

fn err(line: usize, msg: impl Into<String>) -> PsdError {
    PsdError::Config { line, msg: msg.into() }
}

struct Entries {
    values: BTreeMap<String, (usize, String)>,
    vmat: Vec<(usize, [usize; 4], Complex64)>,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &str, default: T) -> PsdResult<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some((line, raw)) => raw.parse().map_err(|_| err(*line, format!("field `{key}`: cannot parse `{raw}`"))),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.values.get(key).map(|v| v.0).unwrap_or(0)
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }
}

fn tokenize(text: &str) -> PsdResult<Entries> {
    let mut values = BTreeMap::new();
    let mut vmat = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix("vmat ") {
            let f: Vec<&str> = rest.split_whitespace().collect();
            if f.len() != 6 {
                return Err(err(line, format!("`vmat` expects `i j k l re im`, got {} fields", f.len())));
            }
            let mut idx = [0usize; 4];
            for (slot, t) in idx.iter_mut().zip(&f[..4]) {
                *slot = t.parse().map_err(|_| err(line, format!("vmat index `{t}` is not a non-negative integer")))?;
            }
            let num = |t: &str| t.parse::<f64>().map_err(|_| err(line, format!("vmat value `{t}` is not a number")));
            vmat.push((line, idx, Complex64::new(num(f[4])?, num(f[5])?)));
            continue;
        }
        let Some((key, value)) = s.split_once('=') else {
            return Err(err(line, format!("expected `key = value`, got `{s}`")));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(err(line, format!("unknown field `{key}`")));
        }
        if values.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(err(line, format!("field `{key}` given twice")));
        }
    }
    Ok(Entries { values, vmat })
}

fn system(e: &Entries) -> PsdResult<SystemSpec> {
    let beta: f64 = e.get("beta", 1.0)?;
    let mu: f64 = e.get("mu", 0.0)?;
    let eta: f64 = e.get("eta", 0.05)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(err(e.line("beta"), format!("field `beta` must be positive, got {beta}")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(err(e.line("eta"), format!("field `eta` must be positive, got {eta}")));
    }
    match e.get("preset", String::new())?.as_str() {
        "" => {}
        "hubbard_dimer" => {
            let t: f64 = e.get("t", 1.0)?;
            let u: f64 = e.get("u", 2.0)?;
            return hubbard_dimer(t, u, beta, mu, eta).map_err(|x| err(e.line("preset"), x.to_string()));
        }
        other => return Err(err(e.line("preset"), format!("unknown preset `{other}`"))),
    }
    if e.has("random_levels") {
        let n: usize = e.get("random_levels", 0)?;
        if n == 0 {
            return Err(err(e.line("random_levels"), "field `random_levels` must be at least 1"));
        }
        let seed: u64 = e.get("seed", 0)?;
        let norm: f64 = e.get("v_norm", 1.0)?;
        let mut spec = SystemSpec::random(seed, n, beta, norm, eta);
        if e.has("mu") {
            spec.mu = mu;
        }
        return Ok(spec);
    }
    let Some((line, raw)) = e.values.get("levels") else {
        return Err(err(0, "missing field `levels`"));
    };
    let levels = raw
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| err(*line, format!("field `levels`: `{}` is not a number", t.trim()))))
        .collect::<PsdResult<Vec<f64>>>()?;
    if levels.is_empty() || levels.iter().any(|x| !x.is_finite()) {
        return Err(err(*line, "field `levels` needs finite values"));
    }
    let n = levels.len();
    let symmetrize: bool = e.get("vmat_symmetrize", false)?;
    let mut v = VMat::zeros(n);
    for &(line, [i, j, k, l], x) in &e.vmat {
        if [i, j, k, l].iter().any(|&q| q >= n) {
            return Err(err(line, format!("vmat index out of range for {n} levels")));
        }
        if symmetrize {
            v.set_symmetric(i, j, k, l, x);
        } else {
            v.set(i, j, k, l, x);
        }
    }
    let vline = e.vmat.first().map(|x| x.0).unwrap_or(0);
    let defect = v.symmetry_defect();
    if defect > 1e-10 {
        return Err(err(vline, format!("field `vmat` is not Hermitian/pair-symmetric (defect {defect:.3e})")));
    }
    SystemSpec::new(levels, v, beta, mu, eta).map_err(|x| err(0, x.to_string()))
}

impl FromStr for RunConfig {
    type Err = PsdError;

    fn from_str(text: &str) -> PsdResult<Self> {
        let e = tokenize(text)?;
        let spec = system(&e)?;
        let family: Family = match e.values.get("family") {
            None => Family::SecondBorn,
            Some((line, raw)) => raw.parse().map_err(|x: PsdError| err(*line, x.to_string()))?,
        };
        let order: usize = e.get("order", 2)?;
        if order < 2 {
            return Err(err(e.line("order"), format!("field `order` must be at least 2, got {order}")));
        }
        let grid = GridSpec { min: e.get("grid_min", -4.0)?, max: e.get("grid_max", 4.0)?, points: e.get("grid_points", 2001)? };
        grid.validate().map_err(|x| err(e.line("grid_points").max(e.line("grid_min")), x.to_string()))?;
        Ok(Self {
            spec,
            family,
            order,
            psd_extend: e.get("psd_extend", true)?,
            self_consistent: e.get("self_consistent", false)?,
            grid,
            output_dir: PathBuf::from(e.get("output_dir", ".".to_string())?),
        })
    }
}
