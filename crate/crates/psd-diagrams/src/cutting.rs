//! Half-diagrams, retarded cut expansions, gluing and PSD extension.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt::Write;

use crate::diagram::{canonical_form, count_cycles, i_pow, Diagram};
use crate::error::{PsdError, PsdResult};
use crate::perm::{cut_label_types, subgroup_closure, Perm, PermGroup};

/// Connected diagram fragment with one external vertex and cut legs.
///
/// A left half (`external_out`) has `N` exit legs (particle lines leaving
/// the fragment) and `N + 1` entry legs. Its reversal swaps the roles. Leg
/// labels run over the exits first, then the entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalfDiagram {
    pub body: Diagram,
    pub external: usize,
    pub external_out: bool,
    pub cut_exits: Vec<usize>,
    pub cut_entries: Vec<usize>,
    pub topology_id: u64,
}

impl HalfDiagram {
    pub fn new(
        n_slots: usize,
        edges: &[(usize, usize)],
        external: usize,
        external_out: bool,
        cut_exits: Vec<usize>,
        cut_entries: Vec<usize>,
    ) -> PsdResult<Self> {
        let body = Diagram::raw(n_slots, edges, None);
        let n = body.n_vertices();
        let mut din = vec![0usize; n];
        let mut dout = vec![0usize; n];
        for e in &body.g_edges {
            if e.from >= n || e.to >= n {
                return Err(PsdError::Structure(format!("g-edge {}->{} out of range", e.from, e.to)));
            }
            dout[e.from] += 1;
            din[e.to] += 1;
        }
        for &v in &cut_exits {
            dout[v] += 1;
        }
        for &v in &cut_entries {
            din[v] += 1;
        }
        if external_out {
            dout[external] += 1;
        } else {
            din[external] += 1;
        }
        if let Some(v) = (0..n).find(|&v| din[v] != 1 || dout[v] != 1) {
            return Err(PsdError::Structure(format!("half-diagram vertex {v} has in/out degree {}/{}", din[v], dout[v])));
        }
        let (short, long) = if external_out { (&cut_exits, &cut_entries) } else { (&cut_entries, &cut_exits) };
        if long.len() != short.len() + 1 {
            return Err(PsdError::LegMismatch { expected: short.len() + 1, got: long.len() });
        }
        if !body.is_connected() {
            return Err(PsdError::Structure("half-diagram is disconnected".into()));
        }
        let mut h = Self { body, external, external_out, cut_exits, cut_entries, topology_id: 0 };
        h.topology_id = fnv1a(&h.canonical_code());
        Ok(h)
    }

    pub fn n_slots(&self) -> usize {
        self.body.order()
    }

    /// Number of particle-hole pairs `N`.
    pub fn n_pairs(&self) -> usize {
        self.cut_exits.len().min(self.cut_entries.len())
    }

    pub fn n_legs(&self) -> usize {
        self.cut_exits.len() + self.cut_entries.len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.body.g_edges.iter().map(|e| (e.from, e.to)).collect()
    }

    /// Vertex carrying leg `label`.
    pub fn leg_vertex(&self, label: usize) -> usize {
        if label < self.cut_exits.len() {
            self.cut_exits[label]
        } else {
            self.cut_entries[label - self.cut_exits.len()]
        }
    }

    fn marks(&self) -> Vec<u8> {
        let mut m = vec![0u8; self.body.n_vertices()];
        m[self.external] |= if self.external_out { 1 } else { 2 };
        for &v in &self.cut_exits {
            m[v] |= 4;
        }
        for &v in &self.cut_entries {
            m[v] |= 8;
        }
        m
    }

    fn canonical_code(&self) -> Vec<usize> {
        canonical_form(self.n_slots(), &self.edges(), &self.marks(), Some(self.external)).code
    }

    /// Canonical representative and, for each old leg label, its new label.
    pub fn canonical(&self) -> (HalfDiagram, Vec<usize>) {
        let c = canonical_form(self.n_slots(), &self.edges(), &self.marks(), Some(self.external));
        let map = &c.map;
        let mut edges: Vec<(usize, usize)> = self.edges().iter().map(|&(a, b)| (map[a], map[b])).collect();
        edges.sort_unstable();
        let mut exits: Vec<usize> = self.cut_exits.iter().map(|&v| map[v]).collect();
        let mut entries: Vec<usize> = self.cut_entries.iter().map(|&v| map[v]).collect();
        exits.sort_unstable();
        entries.sort_unstable();
        let h = HalfDiagram::new(self.n_slots(), &edges, map[self.external], self.external_out, exits, entries)
            .expect("relabeling preserves validity");
        let ne = self.cut_exits.len();
        let labels = (0..self.n_legs())
            .map(|k| {
                let v = map[self.leg_vertex(k)];
                if k < ne {
                    h.cut_exits.iter().position(|&w| w == v).unwrap()
                } else {
                    ne + h.cut_entries.iter().position(|&w| w == v).unwrap()
                }
            })
            .collect();
        (h, labels)
    }

    /// Same half with legs reordered: new label `k` is old label `order[k]`.
    pub fn with_leg_order(&self, order: &Perm) -> HalfDiagram {
        let ne = self.cut_exits.len();
        let mut h = self.clone();
        h.cut_exits = (0..ne).map(|k| self.leg_vertex(order.0[k])).collect();
        h.cut_entries = (ne..self.n_legs()).map(|k| self.leg_vertex(order.0[k])).collect();
        h
    }

    /// Reverses every g-line: exits become entries and vice versa.
    pub fn reversed(&self) -> HalfDiagram {
        let edges: Vec<(usize, usize)> = self.edges().iter().map(|&(a, b)| (b, a)).collect();
        HalfDiagram::new(
            self.n_slots(),
            &edges,
            self.external,
            !self.external_out,
            self.cut_entries.clone(),
            self.cut_exits.clone(),
        )
        .expect("reversal preserves validity")
    }

    /// Closed fermion loops inside the fragment.
    pub fn internal_loops(&self) -> usize {
        count_cycles(&self.body.successor())
    }

    /// Extra loops created by joining equal-position legs.
    ///
    /// The external leg is prepended to the shorter leg list, then the
    /// `k`-th outgoing end is joined to the `k`-th incoming end.
    pub fn merged_loops(&self) -> usize {
        let mut succ = self.body.successor();
        let mut outs = self.cut_exits.clone();
        let mut ins = self.cut_entries.clone();
        if self.external_out {
            outs.insert(0, self.external);
        } else {
            ins.insert(0, self.external);
        }
        for (o, i) in outs.iter().zip(&ins) {
            succ[*o] = Some(*i);
        }
        count_cycles(&succ) - self.internal_loops()
    }

    /// Reorders legs so each join closes a loop through the fragment.
    pub fn path_labeling(&self) -> HalfDiagram {
        let succ = self.body.successor();
        let path_end = |mut v: usize| {
            while let Some(w) = succ[v] {
                v = w;
            }
            v
        };
        let mut h = self.clone();
        if self.external_out {
            let mut pairs: Vec<(usize, usize)> = self.cut_entries.iter().map(|&y| (path_end(y), y)).collect();
            let lead = pairs.iter().position(|p| p.0 == self.external).expect("external ends a path");
            let first = pairs.remove(lead);
            h.cut_entries = std::iter::once(first.1).chain(pairs.iter().map(|p| p.1)).collect();
            h.cut_exits = pairs.iter().map(|p| p.0).collect();
        } else {
            let pairs: Vec<(usize, usize)> = self
                .cut_exits
                .iter()
                .map(|&x| {
                    let mut v = x;
                    let pred = |w: usize| self.body.g_edges.iter().find(|e| e.to == w).map(|e| e.from);
                    while let Some(p) = pred(v) {
                        v = p;
                    }
                    (x, v)
                })
                .collect();
            let lead = pairs.iter().position(|p| p.1 == self.external).expect("external starts a path");
            let mut rest = pairs.clone();
            let first = rest.remove(lead);
            h.cut_exits = std::iter::once(first.0).chain(rest.iter().map(|p| p.0)).collect();
            h.cut_entries = rest.iter().map(|p| p.1).collect();
        }
        h
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph {name} {{");
        let _ = writeln!(s, "  node [shape=circle];");
        for v in 0..self.body.n_vertices() {
            if v == self.external {
                let _ = writeln!(s, "  v{v} [label=\"{v} t{}\", peripheries=2];", v / 2);
            } else {
                let _ = writeln!(s, "  v{v} [label=\"{v} t{}\"];", v / 2);
            }
        }
        for e in &self.body.g_edges {
            let _ = writeln!(s, "  v{} -> v{};", e.from, e.to);
        }
        for ve in &self.body.v_edges {
            let _ = writeln!(s, "  v{} -> v{} [dir=none, style=dashed];", ve.a, ve.b);
        }
        for (k, &v) in self.cut_exits.iter().enumerate() {
            let _ = writeln!(s, "  x{k} [shape=point];\n  v{v} -> x{k} [style=bold, label=\"{}\"];", k + 1);
        }
        let ne = self.cut_exits.len();
        for (k, &v) in self.cut_entries.iter().enumerate() {
            let _ = writeln!(s, "  y{k} [shape=point];\n  y{k} -> v{v} [style=bold, label=\"{}\"];", ne + k + 1);
        }
        s.push_str("}\n");
        s
    }
}

fn fnv1a(code: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &x in code {
        for b in (x as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// `i^{n_v} (−1)^{N+1+l+l̃}` for a left half; a reversed half carries
/// `(−1)^{N+n_v}` times the conjugate of its reversal's factor.
pub fn half_prefactor(h: &HalfDiagram) -> Complex64 {
    let mut exp = 1 + h.internal_loops() + h.merged_loops();
    if h.external_out {
        exp += h.n_pairs();
    }
    i_pow(h.n_slots() as i64) * if exp % 2 == 0 { 1.0 } else { -1.0 }
}

/// Reversed half together with the scalar `(−1)^N`.
pub fn half_adjoint(h: &HalfDiagram) -> (HalfDiagram, f64) {
    let s = if h.n_pairs() % 2 == 0 { 1.0 } else { -1.0 };
    (h.reversed(), s)
}

/// One term `(left, right, P, (−1)^{|P|})`; both halves are left halves,
/// the right one being the reversal of the β side.
#[derive(Clone, Debug, PartialEq)]
pub struct CutTerm {
    pub left: HalfDiagram,
    pub right: HalfDiagram,
    /// Left leg `k` is joined to right leg `perm[k]`.
    pub perm: Perm,
    pub sign: f64,
}

impl CutTerm {
    pub fn n_pairs(&self) -> usize {
        self.left.n_pairs()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CutExpansion {
    pub terms: Vec<CutTerm>,
}

impl CutExpansion {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn extend(&mut self, other: CutExpansion) {
        self.terms.extend(other.terms);
    }

    /// Distinct values of `N` among the terms, ascending.
    pub fn sectors(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.terms.iter().map(|t| t.n_pairs()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

struct Fragment {
    half: HalfDiagram,
    local: Vec<Option<usize>>,
}

/// Sub-diagram on the slots with `side[s]`; reversed for the β side.
fn fragment(d: &Diagram, side: &[bool], external: usize, reverse: bool) -> Option<Fragment> {
    let n = d.n_vertices();
    let mut local = vec![None; n];
    let mut next = 0;
    for s in 0..d.order() {
        if side[s] {
            local[2 * s] = Some(next);
            local[2 * s + 1] = Some(next + 1);
            next += 2;
        }
    }
    let inside = |v: usize| side[v / 2];
    let mut edges = Vec::new();
    let mut outs = Vec::new();
    let mut ins = Vec::new();
    for e in &d.g_edges {
        match (inside(e.from), inside(e.to)) {
            (true, true) => edges.push((local[e.from].unwrap(), local[e.to].unwrap())),
            (true, false) => outs.push(local[e.from].unwrap()),
            (false, true) => ins.push(local[e.to].unwrap()),
            (false, false) => {}
        }
    }
    outs.sort_unstable();
    ins.sort_unstable();
    let (exits, entries) = if reverse {
        edges.iter_mut().for_each(|e| *e = (e.1, e.0));
        (ins, outs)
    } else {
        (outs, ins)
    };
    let half = HalfDiagram::new(next / 2, &edges, local[external].unwrap(), true, exits, entries).ok()?;
    Some(Fragment { half, local })
}

/// Every assignment of internal slots to the α and β loops whose halves are
/// both connected to their external vertex.
pub fn enumerate_retarded_cuts(d: &Diagram) -> PsdResult<CutExpansion> {
    d.validate()?;
    let (alpha, beta) = d.external.ok_or_else(|| PsdError::Structure("closed diagram has no cut".into()))?;
    let (sa, sb) = (alpha / 2, beta / 2);
    if sa == sb {
        return Err(PsdError::Structure("external vertices share an interaction line".into()));
    }
    let free: Vec<usize> = (0..d.order()).filter(|&s| s != sa && s != sb).collect();
    let succ = d.successor();
    let mut pred = vec![None; d.n_vertices()];
    for e in &d.g_edges {
        pred[e.to] = Some(e.from);
    }
    let mut out = CutExpansion::default();
    for mask in 0..(1usize << free.len()) {
        let mut left = vec![false; d.order()];
        left[sa] = true;
        for (b, &s) in free.iter().enumerate() {
            left[s] = (mask >> b) & 1 == 1;
        }
        let right: Vec<bool> = left.iter().map(|x| !x).collect();
        let (Some(l), Some(r)) = (fragment(d, &left, alpha, false), fragment(d, &right, beta, true)) else {
            continue;
        };
        let n = l.half.n_pairs();
        let mut perm = vec![0usize; 2 * n + 1];
        let lpos = |v: usize, list: &[usize]| list.iter().position(|&w| Some(w) == l.local[v]).unwrap();
        let rpos = |v: usize, list: &[usize]| list.iter().position(|&w| Some(w) == r.local[v]).unwrap();
        for v in 0..d.n_vertices() {
            if !left[v / 2] {
                continue;
            }
            if let Some(w) = succ[v].filter(|&w| !left[w / 2]) {
                perm[lpos(v, &l.half.cut_exits)] = rpos(w, &r.half.cut_exits);
            }
            if let Some(w) = pred[v].filter(|&w| !left[w / 2]) {
                perm[n + lpos(v, &l.half.cut_entries)] = n + rpos(w, &r.half.cut_entries);
            }
        }
        let (lc, lmap) = l.half.canonical();
        let (rc, rmap) = r.half.canonical();
        let mut p = vec![0usize; 2 * n + 1];
        for k in 0..2 * n + 1 {
            p[lmap[k]] = rmap[perm[k]];
        }
        let perm = Perm(p);
        let sign = perm.sign();
        out.terms.push(CutTerm { left: lc, right: rc, perm, sign });
    }
    Ok(out)
}

/// Joins the legs of `left` to those of the reversal of `right` under `perm`.
pub fn glue(left: &HalfDiagram, right: &HalfDiagram, perm: &Perm) -> PsdResult<Diagram> {
    if !left.external_out || !right.external_out {
        return Err(PsdError::Structure("gluing expects two left halves".into()));
    }
    let n = left.n_pairs();
    if right.n_pairs() != n || perm.len() != 2 * n + 1 {
        return Err(PsdError::LegMismatch { expected: 2 * n + 1, got: perm.len().min(right.n_legs()) });
    }
    let types = cut_label_types(n);
    if perm.0.iter().enumerate().any(|(k, &v)| v >= types.len() || types[k] != types[v]) {
        return Err(PsdError::Structure(format!("permutation {perm} mixes particle and hole legs")));
    }
    let off = left.body.n_vertices();
    let mut edges = left.edges();
    edges.extend(right.edges().iter().map(|&(a, b)| (b + off, a + off)));
    for k in 0..n {
        edges.push((left.cut_exits[k], right.cut_exits[perm.0[k]] + off));
    }
    for k in 0..=n {
        edges.push((right.cut_entries[perm.0[n + k] - n] + off, left.cut_entries[k]));
    }
    Diagram::from_edges(left.n_slots() + right.n_slots(), &edges, Some((left.external, right.external + off)))
}

/// Coefficient matrix of a sector over (half topology, group element) pairs.
struct Gram {
    halves: Vec<HalfDiagram>,
    group: PermGroup,
    matrix: DMatrix<f64>,
}

fn sector_gram(terms: &[&CutTerm], n: usize) -> PsdResult<Gram> {
    let mut halves: Vec<HalfDiagram> = Vec::new();
    let index = |h: &HalfDiagram, halves: &mut Vec<HalfDiagram>| match halves.iter().position(|x| x == h) {
        Some(k) => k,
        None => {
            halves.push(h.clone());
            halves.len() - 1
        }
    };
    let pairs: Vec<(usize, usize)> = terms.iter().map(|t| (index(&t.left, &mut halves), index(&t.right, &mut halves))).collect();
    let gens: Vec<Perm> = terms.iter().map(|t| t.perm.clone()).collect();
    let group = subgroup_closure(&gens, &cut_label_types(n))?;
    let g = group.order();
    let dim = halves.len() * g;
    let mut matrix = DMatrix::<f64>::zeros(dim, dim);
    for (t, &(a, b)) in terms.iter().zip(&pairs) {
        let pinv = t.perm.inverse();
        for (qi, q) in group.elements.iter().enumerate() {
            let col = group.index_of(&q.compose(&pinv)).expect("closed group");
            matrix[(a * g + qi, b * g + col)] += t.sign / g as f64;
        }
    }
    Ok(Gram { halves, group, matrix })
}

fn by_sector(terms: &CutExpansion) -> BTreeMap<usize, Vec<&CutTerm>> {
    let mut m: BTreeMap<usize, Vec<&CutTerm>> = BTreeMap::new();
    for t in &terms.terms {
        m.entry(t.n_pairs()).or_default().push(t);
    }
    m
}

/// Smallest eigenvalue over all sector coefficient matrices; `None` if one is not symmetric.
pub fn psd_form_margin(terms: &CutExpansion) -> PsdResult<Option<f64>> {
    let mut worst = f64::INFINITY;
    for (n, ts) in by_sector(terms) {
        let gram = sector_gram(&ts, n)?;
        if (&gram.matrix - gram.matrix.transpose()).amax() > 1e-12 {
            return Ok(None);
        }
        let min = gram.matrix.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.min(min);
    }
    Ok(Some(worst))
}

/// True iff every sector's coefficient matrix is symmetric with eigenvalues ≥ −1e−12.
pub fn is_psd_form(terms: &CutExpansion) -> bool {
    matches!(psd_form_margin(terms), Ok(Some(m)) if m >= -1e-12)
}

/// Completes each connected block of half topologies to a full Hermitian
/// square over the permutation group generated by the sector's labels.
///
/// Existing terms keep their order; missing ones are appended.
pub fn minimal_psd_extension(terms: &CutExpansion) -> PsdResult<CutExpansion> {
    let mut out = terms.clone();
    for (n, ts) in by_sector(terms) {
        let gram = sector_gram(&ts, n)?;
        let k = gram.halves.len();
        let mut root: Vec<usize> = (0..k).collect();
        fn find(root: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while root[x] != x {
                root[x] = root[root[x]];
                x = root[x];
            }
            x
        }
        for t in &ts {
            let a = gram.halves.iter().position(|h| *h == t.left).unwrap();
            let b = gram.halves.iter().position(|h| *h == t.right).unwrap();
            let (ra, rb) = (find(&mut root, a), find(&mut root, b));
            root[ra.max(rb)] = ra.min(rb);
        }
        for a in 0..k {
            for b in 0..k {
                if find(&mut root, a) != find(&mut root, b) {
                    continue;
                }
                for p in &gram.group.elements {
                    let present = ts.iter().any(|t| t.left == gram.halves[a] && t.right == gram.halves[b] && t.perm == *p);
                    if !present {
                        out.terms.push(CutTerm {
                            left: gram.halves[a].clone(),
                            right: gram.halves[b].clone(),
                            perm: p.clone(),
                            sign: p.sign(),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Branch assignment of a time-ordered cut; α sits on the forward branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeOrderedTerm {
    pub forward: Vec<usize>,
    pub backward: Vec<usize>,
    /// Some piece on one branch is not connected to that branch's external vertex.
    pub island: bool,
}

fn side_connected(d: &Diagram, side: &[bool], root: usize) -> bool {
    let n = d.n_vertices();
    let mut adj = vec![Vec::new(); n];
    for e in &d.g_edges {
        if side[e.from / 2] && side[e.to / 2] {
            adj[e.from].push(e.to);
            adj[e.to].push(e.from);
        }
    }
    for ve in &d.v_edges {
        adj[ve.a].push(ve.b);
        adj[ve.b].push(ve.a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    (0..n).all(|v| !side[v / 2] || seen[v])
}

/// All `2^{n−2}` cross-branch assignments of a time-ordered expansion.
///
/// Demonstration fixture only: terms flagged with islands are exactly those
/// the retarded expansion never produces.
pub fn time_ordered_cuts(d: &Diagram) -> PsdResult<Vec<TimeOrderedTerm>> {
    d.validate()?;
    let (alpha, beta) = d.external.ok_or_else(|| PsdError::Structure("closed diagram has no cut".into()))?;
    let (sa, sb) = (alpha / 2, beta / 2);
    let free: Vec<usize> = (0..d.order()).filter(|&s| s != sa && s != sb).collect();
    let mut out = Vec::new();
    for mask in 0..(1usize << free.len()) {
        let mut fwd = vec![false; d.order()];
        fwd[sa] = true;
        for (b, &s) in free.iter().enumerate() {
            fwd[s] = (mask >> b) & 1 == 1;
        }
        let bwd: Vec<bool> = fwd.iter().map(|x| !x).collect();
        let island = !side_connected(d, &fwd, alpha) || !side_connected(d, &bwd, beta);
        out.push(TimeOrderedTerm {
            forward: (0..d.order()).filter(|&s| fwd[s]).collect(),
            backward: (0..d.order()).filter(|&s| bwd[s]).collect(),
            island,
        });
    }
    Ok(out)
}

/// Whether the Hermitian square of a time-ordered term's forward half
/// contains a closed piece detached from the external line.
pub fn square_has_vacuum_piece(d: &Diagram, term: &TimeOrderedTerm) -> bool {
    let alpha = d.external.expect("self-energy diagram").0;
    let side: Vec<bool> = (0..d.order()).map(|s| term.forward.contains(&s)).collect();
    let n = d.n_vertices();
    // Vertices 0..n are the forward half, n..2n its mirror image.
    let mut adj = vec![Vec::new(); 2 * n];
    let mut link = |a: usize, b: usize| {
        adj[a].push(b);
        adj[b].push(a);
    };
    for ve in &d.v_edges {
        if side[ve.a / 2] {
            link(ve.a, ve.b);
            link(ve.a + n, ve.b + n);
        }
    }
    for e in &d.g_edges {
        match (side[e.from / 2], side[e.to / 2]) {
            (true, true) => {
                link(e.from, e.to);
                link(e.from + n, e.to + n);
            }
            (true, false) => link(e.from, e.from + n),
            (false, true) => link(e.to, e.to + n),
            _ => {}
        }
    }
    let mut seen = vec![false; 2 * n];
    let mut stack = vec![alpha];
    seen[alpha] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    (0..n).any(|v| side[v / 2] && !seen[v])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{bubble_chain, generate_series, ladder, ApproximationSeries, Family};
    use crate::perm::cut_label_permutations;

    fn family_terms(family: Family, order: usize) -> CutExpansion {
        let mut e = CutExpansion::default();
        for d in generate_series(ApproximationSeries { family, max_order: order }).unwrap() {
            e.extend(enumerate_retarded_cuts(&d).unwrap());
        }
        e
    }

    #[test]
    fn ladder_cut_counts() {
        for n in 2..=5 {
            let d = ladder(n, false).unwrap();
            assert_eq!(enumerate_retarded_cuts(&d).unwrap().len(), n - 1);
            let to = time_ordered_cuts(&d).unwrap();
            assert_eq!(to.len(), 1 << (n - 2));
            assert_eq!(to.iter().filter(|t| !t.island).count(), n - 1);
        }
    }

    #[test]
    fn second_born_single_term() {
        let e = enumerate_retarded_cuts(&ladder(2, false).unwrap()).unwrap();
        assert_eq!(e.len(), 1);
        let t = &e.terms[0];
        assert_eq!(t.n_pairs(), 1);
        assert_eq!(t.left.cut_exits.len(), 1);
        assert_eq!(t.left.cut_entries.len(), 2);
        assert!(t.perm.is_identity());
        let x = enumerate_retarded_cuts(&ladder(2, true).unwrap()).unwrap();
        assert_eq!(x.terms[0].left, t.left);
        assert_eq!(x.terms[0].perm.parity(), 1);
    }

    #[test]
    fn islands_are_dropped() {
        // A bubble chain cut that strands the middle interaction on the wrong side.
        let d = bubble_chain(4).unwrap();
        let to = time_ordered_cuts(&d).unwrap();
        assert!(to.iter().any(|t| t.island));
        assert_eq!(enumerate_retarded_cuts(&d).unwrap().len(), 3);
        let fwd_island = |t: &TimeOrderedTerm| {
            let side: Vec<bool> = (0..d.order()).map(|s| t.forward.contains(&s)).collect();
            !side_connected(&d, &side, d.external.unwrap().0)
        };
        assert!(to.iter().any(fwd_island));
        for t in &to {
            assert_eq!(square_has_vacuum_piece(&d, t), fwd_island(t));
        }
    }

    #[test]
    fn halves_are_connected_and_canonical() {
        for t in family_terms(Family::TmatrixPp, 4).terms {
            assert!(t.left.body.is_connected());
            assert!(t.right.body.is_connected());
            assert_eq!(t.left.canonical().0, t.left);
            assert_eq!(t.sign, t.perm.sign());
        }
    }

    #[test]
    fn path_labeling_closes_every_loop() {
        for t in family_terms(Family::TmatrixPp, 4).terms.iter().chain(family_terms(Family::Gw, 4).terms.iter()) {
            let h = t.left.path_labeling();
            assert_eq!(h.merged_loops(), h.n_pairs() + 1);
            let r = h.reversed().path_labeling();
            assert_eq!(r.merged_loops(), r.n_pairs() + 1);
        }
    }

    #[test]
    fn transposition_flips_half_prefactor() {
        for t in family_terms(Family::TmatrixPp, 4).terms {
            let h = t.left.path_labeling();
            let n = h.n_pairs();
            let swap = Perm::from_cycles(2 * n + 1, &[&[n + 1, n + 2]]);
            let s = h.with_leg_order(&swap);
            assert_eq!(s.merged_loops() + 1, h.merged_loops());
            assert_eq!(half_prefactor(&s), -half_prefactor(&h));
        }
    }

    #[test]
    fn second_born_half_prefactor_by_explicit_merge() {
        let t = &enumerate_retarded_cuts(&ladder(2, false).unwrap()).unwrap().terms[0];
        let h = &t.left;
        // One slot: α = 0 with partner 1; α receives the backbone, 1 sends and receives.
        let mut succ = vec![None; 2];
        let outs: Vec<usize> = std::iter::once(h.external).chain(h.cut_exits.iter().copied()).collect();
        for (o, i) in outs.iter().zip(&h.cut_entries) {
            succ[*o] = Some(*i);
        }
        let lt = count_cycles(&succ);
        assert_eq!(h.merged_loops(), lt);
        let expect = i_pow(1) * if (1 + 1 + lt) % 2 == 0 { 1.0 } else { -1.0 };
        assert_eq!(half_prefactor(h), expect);
    }

    #[test]
    fn adjoint_is_an_involution() {
        for t in family_terms(Family::Gw, 4).terms {
            let (r, s) = half_adjoint(&t.left);
            assert_eq!(s, -1.0);
            assert_eq!(r.cut_exits, t.left.cut_entries);
            let (back, s2) = half_adjoint(&r);
            assert_eq!(back, t.left);
            assert_eq!(s * s2, 1.0);
        }
    }

    #[test]
    fn glue_reproduces_diagrams_and_prefactors() {
        for family in [Family::SecondBorn, Family::Gw, Family::TmatrixPp] {
            for d in generate_series(ApproximationSeries { family, max_order: 5 }).unwrap() {
                for t in enumerate_retarded_cuts(&d).unwrap().terms {
                    let g = glue(&t.left, &t.right, &t.perm).unwrap();
                    assert!(g.is_isomorphic(&d));
                    // The right half as it sits in the diagram is the reversal, with legs in glue order.
                    let right_in_place = t.right.with_leg_order(&t.perm.inverse()).reversed();
                    let lhs = half_prefactor(&t.left) * half_prefactor(&right_in_place);
                    assert_eq!(lhs, d.prefactor().unwrap(), "{family:?} order {}", d.order());
                    let back = enumerate_retarded_cuts(&g).unwrap();
                    assert!(back.terms.iter().any(|u| u.left == t.left && u.right == t.right && u.perm == t.perm)
                        || back.terms.iter().any(|u| glue(&u.left, &u.right, &u.perm).unwrap().is_isomorphic(&d)));
                }
            }
        }
    }

    #[test]
    fn loop_parity_theorem() {
        for family in [Family::Gw, Family::TmatrixPp] {
            for d in generate_series(ApproximationSeries { family, max_order: 5 }).unwrap() {
                let l = d.count_loops().unwrap();
                for t in enumerate_retarded_cuts(&d).unwrap().terms {
                    let right = t.right.with_leg_order(&t.perm.inverse());
                    let cut_loops = l - t.left.internal_loops() - right.internal_loops();
                    let lhs = t.left.merged_loops() + right.merged_loops();
                    assert_eq!(lhs % 2, (t.n_pairs() + cut_loops) % 2);
                }
            }
        }
    }

    #[test]
    fn gluing_is_incompatible_across_sectors() {
        let e = family_terms(Family::SecondBorn, 2);
        let bad = Perm::identity(5);
        assert!(glue(&e.terms[0].left, &e.terms[0].right, &bad).is_err());
        let mixing = Perm::from_cycles(3, &[&[1, 2]]);
        assert!(glue(&e.terms[0].left, &e.terms[0].right, &mixing).is_err());
    }

    #[test]
    fn psd_form_examples() {
        let sb = family_terms(Family::SecondBorn, 2);
        assert!(is_psd_form(&sb));
        assert_eq!(minimal_psd_extension(&sb).unwrap().len(), sb.len());

        let exchange_only = CutExpansion { terms: vec![sb.terms[1].clone()] };
        assert!(!is_psd_form(&exchange_only));

        let gw = family_terms(Family::Gw, 3);
        let cross: Vec<CutTerm> = gw.terms.iter().filter(|t| t.left != t.right).take(1).cloned().collect();
        let single = CutExpansion { terms: cross };
        assert!(!is_psd_form(&single));
        let ext = minimal_psd_extension(&single).unwrap();
        assert_eq!(ext.len(), 4);
        assert!(is_psd_form(&ext));
    }

    #[test]
    fn extension_is_idempotent_and_psd() {
        for family in [Family::SecondBorn, Family::Gw, Family::TmatrixPp] {
            for order in 2..=4 {
                let e = minimal_psd_extension(&family_terms(family, order)).unwrap();
                assert!(is_psd_form(&e), "{family:?} {order}");
                assert_eq!(minimal_psd_extension(&e).unwrap(), e);
            }
        }
    }

    #[test]
    fn tmatrix_perms_generate_the_hole_swap() {
        let e = family_terms(Family::TmatrixPp, 3);
        let gens: Vec<Perm> = e.terms.iter().map(|t| t.perm.clone()).collect();
        let g = subgroup_closure(&gens, &cut_label_types(1)).unwrap();
        assert_eq!(g.order(), 2);
        assert_eq!(cut_label_permutations(1), g.elements);
    }
}
