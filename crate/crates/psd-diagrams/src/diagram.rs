//! Self-energy diagrams as directed multigraphs.
//!
//! Vertices come in pairs joined by an interaction line: vertex `2s` and
//! `2s + 1` share the time slot `s`. A g-edge carries its own summed level
//! index; the edge index doubles as its level slot. At an interaction line
//! between vertices `x` and `y` the matrix element is `⟨i_x i_y|v|k_x k_y⟩`
//! with `i` the level leaving a vertex and `k` the level entering it.

use num_complex::Complex64;
use std::collections::VecDeque;
use std::fmt::Write;
use std::str::FromStr;

use crate::error::{PsdError, PsdResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub slot: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GEdge {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VEdge {
    pub a: usize,
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagram {
    pub vertices: Vec<Vertex>,
    pub g_edges: Vec<GEdge>,
    pub v_edges: Vec<VEdge>,
    /// `(α, β)`: α has no outgoing g-edge, β no incoming one. `None` for closed diagrams.
    pub external: Option<(usize, usize)>,
}

impl Diagram {
    /// Builds a diagram on `n_slots` interaction lines from `(from, to)` pairs.
    pub fn from_edges(n_slots: usize, edges: &[(usize, usize)], external: Option<(usize, usize)>) -> PsdResult<Self> {
        let d = Self::raw(n_slots, edges, external);
        d.validate()?;
        Ok(d)
    }

    pub(crate) fn raw(n_slots: usize, edges: &[(usize, usize)], external: Option<(usize, usize)>) -> Self {
        Self {
            vertices: (0..2 * n_slots).map(|v| Vertex { slot: v / 2 }).collect(),
            g_edges: edges.iter().map(|&(from, to)| GEdge { from, to }).collect(),
            v_edges: (0..n_slots).map(|s| VEdge { a: 2 * s, b: 2 * s + 1 }).collect(),
            external,
        }
    }

    pub fn order(&self) -> usize {
        self.v_edges.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn successor(&self) -> Vec<Option<usize>> {
        let mut s = vec![None; self.n_vertices()];
        for e in &self.g_edges {
            s[e.from] = Some(e.to);
        }
        s
    }

    pub fn validate(&self) -> PsdResult<()> {
        let n = self.n_vertices();
        let mut din = vec![0usize; n];
        let mut dout = vec![0usize; n];
        for e in &self.g_edges {
            if e.from >= n || e.to >= n {
                return Err(PsdError::Structure(format!("g-edge {}->{} out of range", e.from, e.to)));
            }
            dout[e.from] += 1;
            din[e.to] += 1;
        }
        for (s, ve) in self.v_edges.iter().enumerate() {
            if ve.a != 2 * s || ve.b != 2 * s + 1 {
                return Err(PsdError::Structure(format!("v-edge {s} breaks the slot-pair numbering")));
            }
        }
        for v in 0..n {
            let (want_in, want_out) = match self.external {
                Some((a, _)) if a == v => (1, 0),
                Some((_, b)) if b == v => (0, 1),
                _ => (1, 1),
            };
            if din[v] != want_in || dout[v] != want_out {
                return Err(PsdError::Structure(format!(
                    "vertex {v} has in/out degree {}/{}, expected {want_in}/{want_out}",
                    din[v], dout[v]
                )));
            }
        }
        if let Some((a, b)) = self.external {
            if a == b {
                return Err(PsdError::Structure("external vertices coincide".into()));
            }
        }
        if !self.is_connected() {
            return Err(PsdError::Structure("diagram is disconnected".into()));
        }
        Ok(())
    }

    fn adjacency(&self, skip_edge: Option<usize>) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for (k, e) in self.g_edges.iter().enumerate() {
            if Some(k) == skip_edge {
                continue;
            }
            adj[e.from].push(e.to);
            adj[e.to].push(e.from);
        }
        for ve in &self.v_edges {
            adj[ve.a].push(ve.b);
            adj[ve.b].push(ve.a);
        }
        adj
    }

    fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
        let mut seen = vec![false; adj.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        if self.n_vertices() == 0 {
            return true;
        }
        Self::reachable(&self.adjacency(None), 0).into_iter().all(|x| x)
    }

    /// Number of fermion loops.
    ///
    /// With external vertices the backbone is closed by `α → β` and is not
    /// itself counted; a closed diagram counts every cycle.
    pub fn count_loops(&self) -> PsdResult<usize> {
        self.validate()?;
        let mut succ = self.successor();
        match self.external {
            Some((a, b)) => {
                succ[a] = Some(b);
                Ok(count_cycles(&succ) - 1)
            }
            None => Ok(count_cycles(&succ)),
        }
    }

    /// Feynman prefactor `i^{n_v} (−1)^l`.
    pub fn prefactor(&self) -> PsdResult<Complex64> {
        let l = self.count_loops()?;
        Ok(i_pow(self.order() as i64) * if l % 2 == 0 { 1.0 } else { -1.0 })
    }

    pub fn is_one_particle_irreducible(&self) -> bool {
        let Some((a, b)) = self.external else {
            return true;
        };
        (0..self.g_edges.len()).all(|k| Self::reachable(&self.adjacency(Some(k)), a)[b])
    }

    /// Isomorphism-invariant code with α pinned (and β marked).
    pub fn canonical_code(&self) -> Vec<usize> {
        let mut marks = vec![0u8; self.n_vertices()];
        let pin = self.external.map(|(a, b)| {
            marks[a] = 1;
            marks[b] = 2;
            a
        });
        let edges: Vec<(usize, usize)> = self.g_edges.iter().map(|e| (e.from, e.to)).collect();
        canonical_form(self.order(), &edges, &marks, pin).code
    }

    pub fn is_isomorphic(&self, other: &Diagram) -> bool {
        self.order() == other.order() && self.canonical_code() == other.canonical_code()
    }

    /// Graphviz text: solid arrows for g-lines, dashed for v-lines, doubled external vertices.
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph {name} {{");
        let _ = writeln!(s, "  node [shape=circle];");
        for (v, vx) in self.vertices.iter().enumerate() {
            let ext = matches!(self.external, Some((a, b)) if a == v || b == v);
            let tag = match self.external {
                Some((a, _)) if a == v => "α",
                Some((_, b)) if b == v => "β",
                _ => "",
            };
            if ext {
                let _ = writeln!(s, "  v{v} [label=\"{v}{tag} t{}\", peripheries=2];", vx.slot);
            } else {
                let _ = writeln!(s, "  v{v} [label=\"{v} t{}\"];", vx.slot);
            }
        }
        for (k, e) in self.g_edges.iter().enumerate() {
            let _ = writeln!(s, "  v{} -> v{} [label=\"g{k}\"];", e.from, e.to);
        }
        for ve in &self.v_edges {
            let _ = writeln!(s, "  v{} -> v{} [dir=none, style=dashed];", ve.a, ve.b);
        }
        s.push_str("}\n");
        s
    }
}

/// `i^n` exactly.
pub fn i_pow(n: i64) -> Complex64 {
    match n.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Cycles of a partial successor map; open paths are ignored.
pub fn count_cycles(succ: &[Option<usize>]) -> usize {
    let n = succ.len();
    let mut state = vec![0u8; n];
    let mut cycles = 0;
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        loop {
            if state[v] == 1 {
                cycles += 1;
                break;
            }
            if state[v] == 2 {
                break;
            }
            state[v] = 1;
            path.push(v);
            match succ[v] {
                Some(w) => v = w,
                None => break,
            }
        }
        for p in path {
            state[p] = 2;
        }
    }
    cycles
}

/// Result of canonical relabeling: the minimal code and `old vertex → new vertex`.
#[derive(Clone, Debug)]
pub(crate) struct Canonical {
    pub code: Vec<usize>,
    pub map: Vec<usize>,
}

/// Lexicographically minimal relabeling over slot permutations and in-slot swaps.
///
/// A pinned vertex is sent to id 0. `marks` are per-vertex colours that must
/// be preserved.
pub(crate) fn canonical_form(n_slots: usize, edges: &[(usize, usize)], marks: &[u8], pin: Option<usize>) -> Canonical {
    let mut best: Option<Canonical> = None;
    let free: Vec<usize> = (0..n_slots).filter(|&s| Some(s) != pin.map(|p| p / 2)).collect();
    let mut perm = free.clone();
    let mut visit = |order: &[usize]| {
        let slots: Vec<usize> = pin.map(|p| p / 2).into_iter().chain(order.iter().copied()).collect();
        let pinned_flip = pin.map(|p| p % 2 == 1);
        let flips_free = 1usize << free.len();
        for mask in 0..flips_free {
            let mut map = vec![0usize; 2 * n_slots];
            for (new_slot, &old_slot) in slots.iter().enumerate() {
                let flip = if pin.is_some() && new_slot == 0 {
                    pinned_flip.unwrap()
                } else {
                    let bit = if pin.is_some() { new_slot - 1 } else { new_slot };
                    (mask >> bit) & 1 == 1
                };
                let (x, y) = if flip { (2 * old_slot + 1, 2 * old_slot) } else { (2 * old_slot, 2 * old_slot + 1) };
                map[x] = 2 * new_slot;
                map[y] = 2 * new_slot + 1;
            }
            let mut code: Vec<usize> = vec![0; 2 * n_slots];
            for v in 0..2 * n_slots {
                code[map[v]] = marks[v] as usize;
            }
            let mut es: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (map[a], map[b])).collect();
            es.sort_unstable();
            for (a, b) in es {
                code.push(a);
                code.push(b);
            }
            if best.as_ref().is_none_or(|b| code < b.code) {
                best = Some(Canonical { code, map });
            }
        }
    };
    permute_all(&mut perm, 0, &mut visit);
    best.expect("at least one relabeling")
}

fn permute_all(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute_all(v, k + 1, f);
        v.swap(k, i);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    SecondBorn,
    Gw,
    TmatrixPp,
}

impl FromStr for Family {
    type Err = PsdError;

    fn from_str(s: &str) -> PsdResult<Self> {
        match s {
            "second_born" => Ok(Family::SecondBorn),
            "gw" => Ok(Family::Gw),
            "tmatrix_pp" => Ok(Family::TmatrixPp),
            other => Err(PsdError::Unsupported(format!("unknown approximation family `{other}`"))),
        }
    }
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::SecondBorn => "second_born",
            Family::Gw => "gw",
            Family::TmatrixPp => "tmatrix_pp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ApproximationSeries {
    pub family: Family,
    pub max_order: usize,
}

/// Particle-particle ladder with `n` rungs; slot `s` holds `x_s = 2s`, `y_s = 2s+1`.
///
/// `exchange` crosses the first rung.
pub fn ladder(n: usize, exchange: bool) -> PsdResult<Diagram> {
    if n < 2 {
        return Err(PsdError::Unsupported("ladders start at two rungs".into()));
    }
    let x = |s: usize| 2 * s;
    let y = |s: usize| 2 * s + 1;
    let mut edges = Vec::new();
    for s in 0..n - 1 {
        if exchange && s == 0 {
            edges.push((x(1), y(0)));
            edges.push((y(1), x(0)));
        } else {
            edges.push((x(s + 1), x(s)));
            edges.push((y(s + 1), y(s)));
        }
    }
    edges.push((y(0), y(n - 1)));
    Diagram::from_edges(n, &edges, Some((x(0), x(n - 1))))
}

/// Bubble chain with `n` interaction lines and `n − 1` polarization bubbles.
pub fn bubble_chain(n: usize) -> PsdResult<Diagram> {
    if n < 2 {
        return Err(PsdError::Unsupported("bubble chains start at order two".into()));
    }
    let alpha = 0;
    let beta = 2 * (n - 1) + 1;
    let mut edges = vec![(beta, alpha)];
    for k in 0..n - 1 {
        let b = 2 * k + 1;
        let a = 2 * (k + 1);
        edges.push((b, a));
        edges.push((a, b));
    }
    Diagram::from_edges(n, &edges, Some((alpha, beta)))
}

pub fn generate_series(s: ApproximationSeries) -> PsdResult<Vec<Diagram>> {
    if s.max_order < 2 {
        return Err(PsdError::Unsupported(format!("max_order {} below 2", s.max_order)));
    }
    match s.family {
        Family::SecondBorn => Ok(vec![ladder(2, false)?, ladder(2, true)?]),
        Family::TmatrixPp => {
            let mut out = Vec::new();
            for n in 2..=s.max_order {
                out.push(ladder(n, false)?);
                out.push(ladder(n, true)?);
            }
            Ok(out)
        }
        Family::Gw => (2..=s.max_order).map(bubble_chain).collect(),
    }
}
