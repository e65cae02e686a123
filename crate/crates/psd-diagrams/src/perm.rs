//! Permutations of cut labels and the groups they generate.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{PsdError, PsdResult};

/// Permutation of `0..n` stored as images: `k ↦ self.0[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(pub Vec<usize>);

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm((0..n).collect())
    }

    /// Permutation from 1-based disjoint cycles, e.g. `&[&[4, 5]]` for `(4 5)`.
    pub fn from_cycles(n: usize, cycles: &[&[usize]]) -> Self {
        let mut p: Vec<usize> = (0..n).collect();
        for c in cycles {
            for w in 0..c.len() {
                p[c[w] - 1] = c[(w + 1) % c.len()] - 1;
            }
        }
        Perm(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(k, &v)| k == v)
    }

    /// `(self ∘ other)(k) = self(other(k))`.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(other.0.iter().map(|&k| self.0[k]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.len()];
        for (k, &v) in self.0.iter().enumerate() {
            inv[v] = k;
        }
        Perm(inv)
    }

    /// Number of transpositions modulo two.
    pub fn parity(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut swaps = 0;
        for s in 0..self.len() {
            let mut k = s;
            let mut len = 0;
            while !seen[k] {
                seen[k] = true;
                k = self.0[k];
                len += 1;
            }
            if len > 0 {
                swaps += len - 1;
            }
        }
        swaps % 2
    }

    pub fn sign(&self) -> f64 {
        if self.parity() == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn preserves(&self, types: &[u8]) -> bool {
        self.0.iter().enumerate().all(|(k, &v)| types[k] == types[v])
    }
}

impl fmt::Display for Perm {
    /// 1-based cycle notation; the identity prints as `ι`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut seen = vec![false; self.len()];
        let mut any = false;
        for s in 0..self.len() {
            if seen[s] || self.0[s] == s {
                continue;
            }
            any = true;
            write!(f, "(")?;
            let mut k = s;
            let mut first = true;
            while !seen[k] {
                seen[k] = true;
                if !first {
                    write!(f, " ")?;
                }
                write!(f, "{}", k + 1)?;
                first = false;
                k = self.0[k];
            }
            write!(f, ")")?;
        }
        if !any {
            write!(f, "ι")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermGroup {
    /// Sorted lexicographically by image vector.
    pub elements: Vec<Perm>,
    pub generators: Vec<Perm>,
}

impl PermGroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn index_of(&self, p: &Perm) -> Option<usize> {
        self.elements.binary_search(p).ok()
    }

    pub fn contains(&self, p: &Perm) -> bool {
        self.index_of(p).is_some()
    }
}

/// Label types for a cut with `n` pairs: `n` particle labels then `n + 1` hole labels.
pub fn cut_label_types(n: usize) -> Vec<u8> {
    (0..2 * n + 1).map(|k| if k < n { 0 } else { 1 }).collect()
}

/// Smallest group containing `gens`; every generator must preserve `types`.
pub fn subgroup_closure(gens: &[Perm], types: &[u8]) -> PsdResult<PermGroup> {
    let n = types.len();
    for g in gens {
        if g.len() != n {
            return Err(PsdError::LegMismatch { expected: n, got: g.len() });
        }
        if !g.preserves(types) {
            return Err(PsdError::Structure(format!("permutation {g} mixes particle and hole labels")));
        }
    }
    let mut set: BTreeSet<Perm> = BTreeSet::from([Perm::identity(n)]);
    let mut frontier: Vec<Perm> = vec![Perm::identity(n)];
    while let Some(p) = frontier.pop() {
        for g in gens {
            let q = g.compose(&p);
            if set.insert(q.clone()) {
                frontier.push(q);
            }
        }
    }
    Ok(PermGroup { elements: set.into_iter().collect(), generators: gens.to_vec() })
}

/// All type-preserving relabelings of an `n`-pair cut, `n!(n+1)!` of them.
pub fn cut_label_permutations(n: usize) -> Vec<Perm> {
    let particles: Vec<usize> = (0..n).collect();
    let holes: Vec<usize> = (n..2 * n + 1).collect();
    let mut out = Vec::new();
    for pp in permutations(&particles) {
        for hp in permutations(&holes) {
            out.push(Perm(pp.iter().chain(hp.iter()).copied().collect()));
        }
    }
    out.sort();
    out
}

/// Every ordering of `items`, lexicographic in positions.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}
