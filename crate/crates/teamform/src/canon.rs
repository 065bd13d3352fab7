//! Symmetry-reduced schemes.
//!
//! Agents inside a cluster are exchangeable, so a scheme can be described by
//! weights on *patterns*: a cluster label and a type for every slot. Within a
//! class of profiles sharing per-cluster counts, the weights form a
//! distribution; expanding a pattern spreads its weight uniformly over every
//! ordering that realizes it.

use std::collections::BTreeMap;

use num::{One, Zero};

use crate::beliefs::{Baseline, Scheme, Verdict};
use crate::error::{Error, Result};
use crate::model::{
    class_prob, count_vectors, counts, profile_count, Awareness, Instance, MatchCounts, Ordering, TypeProfile,
};
use crate::numeric::{fmt_q, q_from_usize, Q};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern {
    labels: Vec<u8>,
    types: Vec<u8>,
}

impl Pattern {
    pub fn new(labels: Vec<u8>, types: Vec<u8>) -> Result<Self> {
        if labels.len() != types.len() {
            return Err(Error::InvalidScheme("pattern labels and types differ in length".into()));
        }
        if types.iter().any(|&t| t > 1) {
            return Err(Error::InvalidScheme("pattern types must be 0 or 1".into()));
        }
        Ok(Self { labels, types })
    }
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
    pub fn types(&self) -> &[u8] {
        &self.types
    }
    pub fn len(&self) -> usize {
        self.types.len()
    }
    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
    /// Per-cluster number of type-1 slots.
    pub fn class(&self, k: usize) -> Vec<usize> {
        let mut hk = vec![0; k];
        for (&c, &t) in self.labels.iter().zip(&self.types) {
            hk[c as usize] += t as usize;
        }
        hk
    }
    fn label_counts(&self, k: usize) -> Vec<usize> {
        let mut nk = vec![0; k];
        for &c in &self.labels {
            nk[c as usize] += 1;
        }
        nk
    }
    pub fn match_counts(&self, a: usize) -> MatchCounts {
        MatchCounts::of_sequence(&self.types, a)
    }
}

/// Every arrangement of `sizes[k]` copies of label `k`, in lexicographic order.
pub fn label_sequences(sizes: &[usize]) -> Vec<Vec<u8>> {
    fn rec(rem: &mut [usize], prefix: &mut Vec<u8>, n: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for k in 0..rem.len() {
            if rem[k] > 0 {
                rem[k] -= 1;
                prefix.push(k as u8);
                rec(rem, prefix, n, out);
                prefix.pop();
                rem[k] += 1;
            }
        }
    }
    let n = sizes.iter().sum();
    let mut out = Vec::new();
    rec(&mut sizes.to_vec(), &mut Vec::with_capacity(n), n, &mut out);
    out
}

/// Weights on patterns, one distribution per class of count vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalScheme {
    sizes: Vec<usize>,
    entries: BTreeMap<Vec<usize>, Vec<(Pattern, Q)>>,
}

impl CanonicalScheme {
    pub fn new(inst: &Instance, entries: BTreeMap<Vec<usize>, Vec<(Pattern, Q)>>) -> Result<Self> {
        let sizes = inst.sizes();
        let k = inst.k();
        let mut clean = BTreeMap::new();
        for hk in count_vectors(&sizes) {
            let Some(list) = entries.get(&hk) else {
                return Err(Error::InvalidScheme(format!("class {hk:?} has no patterns")));
            };
            let mut merged: BTreeMap<Pattern, Q> = BTreeMap::new();
            for (w, y) in list {
                if w.len() != inst.n() || w.labels.iter().any(|&c| c as usize >= k) || w.label_counts(k) != sizes {
                    return Err(Error::InvalidScheme(format!("pattern does not fit the cluster sizes {sizes:?}")));
                }
                if w.class(k) != hk {
                    return Err(Error::InvalidScheme(format!("pattern listed under class {hk:?} belongs elsewhere")));
                }
                if *y < Q::zero() {
                    return Err(Error::InvalidScheme("negative pattern weight".into()));
                }
                *merged.entry(w.clone()).or_insert_with(Q::zero) += y;
            }
            let total: Q = merged.values().sum();
            if total != Q::one() {
                return Err(Error::InvalidScheme(format!("weights of class {hk:?} sum to {}", fmt_q(&total))));
            }
            clean.insert(hk, merged.into_iter().filter(|(_, y)| !y.is_zero()).collect());
        }
        if entries.len() != clean.len() {
            return Err(Error::InvalidScheme("unknown class listed".into()));
        }
        Ok(Self { sizes, entries: clean })
    }

    pub fn entries(&self) -> &BTreeMap<Vec<usize>, Vec<(Pattern, Q)>> {
        &self.entries
    }

    /// Number of patterns with positive weight.
    pub fn support_size(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// `(pattern, class probability × weight)` for every supported pattern.
    fn weighted<'a>(&'a self, inst: &'a Instance) -> impl Iterator<Item = (&'a Pattern, Q)> + 'a {
        self.entries.iter().flat_map(move |(hk, list)| {
            let p = class_prob(inst, hk);
            list.iter().map(move |(w, y)| (w, &p * y))
        })
    }

    /// `E[m_j]` for every team composition `j`.
    pub fn expected_counts(&self, inst: &Instance) -> Vec<Q> {
        let a = inst.team_size();
        let mut m = vec![Q::zero(); a + 1];
        for (w, pw) in self.weighted(inst) {
            for (j, &c) in w.match_counts(a).counts().iter().enumerate() {
                if c > 0 {
                    m[j] += &pw * q_from_usize(c);
                }
            }
        }
        m
    }

    pub fn welfare(&self, inst: &Instance) -> Q {
        let u = inst.utility().values();
        let m = self.expected_counts(inst);
        m.iter().zip(u).map(|(mj, uj)| mj * uj).sum::<Q>() * q_from_usize(inst.team_size())
    }

    /// Ex-ante expected utility of an agent of each cluster.
    pub fn cluster_utilities(&self, inst: &Instance) -> Vec<Q> {
        let (a, k) = (inst.team_size(), inst.k());
        let u = inst.utility().values();
        let mut acc = vec![Q::zero(); k];
        for (w, pw) in self.weighted(inst) {
            for (s, &c) in w.labels.iter().enumerate() {
                acc[c as usize] += &pw * &u[team_ones(&w.types, s, a)];
            }
        }
        acc.into_iter().zip(&self.sizes).map(|(v, &nk)| v / q_from_usize(nk)).collect()
    }

    /// Expected utility of an agent of each cluster given its own type.
    pub fn cluster_type_utilities(&self, inst: &Instance) -> Vec<[Option<Q>; 2]> {
        let (a, k) = (inst.team_size(), inst.k());
        let u = inst.utility().values();
        let mut acc = vec![[Q::zero(), Q::zero()]; k];
        for (w, pw) in self.weighted(inst) {
            for (s, (&c, &t)) in w.labels.iter().zip(&w.types).enumerate() {
                acc[c as usize][t as usize] += &pw * &u[team_ones(&w.types, s, a)];
            }
        }
        acc.into_iter()
            .enumerate()
            .map(|(c, [v0, v1])| {
                let nk = q_from_usize(self.sizes[c]);
                let p = inst.prior(c);
                let d1 = &nk * p;
                let d0 = &nk * (Q::one() - p);
                [(!d0.is_zero()).then(|| v0 / d0), (!d1.is_zero()).then(|| v1 / d1)]
            })
            .collect()
    }

    /// Patterns grouped by label sequence with their posterior weights.
    fn by_labels<'a>(&'a self, inst: &'a Instance) -> BTreeMap<&'a [u8], Vec<(&'a [u8], Q)>> {
        let mut out: BTreeMap<&[u8], Vec<(&[u8], Q)>> = BTreeMap::new();
        for (w, pw) in self.weighted(inst) {
            if !pw.is_zero() {
                out.entry(w.labels.as_slice()).or_default().push((w.types.as_slice(), pw));
            }
        }
        out
    }

    /// Persuasiveness checked directly on the reduced form. Returns the label
    /// sequence and slot of the first violated constraint.
    pub fn persuasion(&self, inst: &Instance) -> Result<Verdict<(Vec<u8>, usize)>> {
        let n = inst.n();
        let a = inst.team_size();
        for (labels, pats) in self.by_labels(inst) {
            match inst.awareness() {
                Awareness::SelfAgnostic => {
                    for i in 0..n - 1 {
                        let gap: Q = pats
                            .iter()
                            .map(|(t, pw)| pw * Q::from_integer((t[i] as i64 - t[i + 1] as i64).into()))
                            .sum();
                        if gap < Q::zero() {
                            return Ok(Verdict::Fail((labels.to_vec(), i)));
                        }
                    }
                }
                Awareness::SelfAware => {
                    if a != 2 {
                        return Err(Error::Unsupported("self-aware persuasion is implemented for pairs".into()));
                    }
                    for s in 0..n {
                        for v in [0u8, 1] {
                            for j in (s / 2 + 1) * 2..n {
                                let gap: Q = pats
                                    .iter()
                                    .filter(|(t, _)| t[s] == v)
                                    .map(|(t, pw)| pw * Q::from_integer((t[s ^ 1] as i64 - t[j] as i64).into()))
                                    .sum();
                                if gap < Q::zero() {
                                    return Ok(Verdict::Fail((labels.to_vec(), s)));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Verdict::Pass)
    }

    /// Ex-ante Pareto comparison against the no-information baseline.
    /// The witness is `(cluster, own type)`.
    pub fn pareto(&self, inst: &Instance, base: &Baseline) -> Verdict<(usize, Option<u8>)> {
        match inst.awareness() {
            Awareness::SelfAgnostic => {
                let u = self.cluster_utilities(inst);
                match u.iter().zip(&base.agnostic).position(|(x, b)| x < b) {
                    Some(k) => Verdict::Fail((k, None)),
                    None => Verdict::Pass,
                }
            }
            Awareness::SelfAware => {
                let u = self.cluster_type_utilities(inst);
                for (k, ut) in u.iter().enumerate() {
                    for t in [1usize, 0] {
                        if let Some(x) = &ut[t] {
                            if x < &base.aware[k][t] {
                                return Verdict::Fail((k, Some(t as u8)));
                            }
                        }
                    }
                }
                Verdict::Pass
            }
        }
    }

    /// Expands to an explicit scheme over all `2^n` profiles. `cap` bounds the
    /// number of profiles.
    pub fn expand(&self, inst: &Instance, cap: u128) -> Result<Scheme> {
        let total = profile_count(inst, cap)?;
        let n = inst.n();
        let k = inst.k();
        let mut support = BTreeMap::new();
        for bits in 0..total {
            let theta = TypeProfile::from_bits(bits, n);
            let hk = counts(inst, &theta)?.hk;
            let list = &self.entries[&hk];
            // Agents of each (cluster, type) group.
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 2 * k];
            for i in 0..n {
                groups[2 * inst.cluster_of(i) + theta.get(i) as usize].push(i);
            }
            let mult: usize = groups.iter().map(|g| (1..=g.len()).product::<usize>()).product();
            let share = q_from_usize(mult);
            let mut orderings = Vec::new();
            for (w, y) in list {
                let mut slots: Vec<Vec<usize>> = vec![Vec::new(); 2 * k];
                for (s, (&c, &t)) in w.labels.iter().zip(&w.types).enumerate() {
                    slots[2 * c as usize + t as usize].push(s);
                }
                let x = y / &share;
                let mut sigma = vec![0usize; n];
                assign(&groups, &slots, 0, &mut sigma, &mut |s| {
                    orderings.push((Ordering::new(s.to_vec()).expect("assignment is a permutation"), x.clone()));
                });
            }
            support.insert(theta, orderings);
        }
        Scheme::new(n, support)
    }
}

fn team_ones(types: &[u8], slot: usize, a: usize) -> usize {
    let start = slot / a * a;
    types[start..start + a].iter().map(|&t| t as usize).sum()
}

/// Calls `emit` for every way to place each group's agents in its slots.
fn assign(groups: &[Vec<usize>], slots: &[Vec<usize>], g: usize, sigma: &mut [usize], emit: &mut dyn FnMut(&[usize])) {
    if g == groups.len() {
        emit(sigma);
        return;
    }
    let mut agents = groups[g].clone();
    permute(&mut agents, 0, &mut |perm| {
        for (&s, &a) in slots[g].iter().zip(perm) {
            sigma[s] = a;
        }
        assign(groups, slots, g + 1, sigma, emit);
    });
}

fn permute(items: &mut [usize], start: usize, f: &mut dyn FnMut(&[usize])) {
    if start + 1 >= items.len() {
        f(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, f);
        items.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beliefs::{expected_outcome, is_persuasive};
    use crate::numeric::{frac, q};

    #[test]
    fn label_sequence_counts() {
        assert_eq!(label_sequences(&[2, 1]), vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        assert_eq!(label_sequences(&[4, 4]).len(), 70);
        assert_eq!(label_sequences(&[3]).len(), 1);
    }

    fn sorted(inst: &Instance) -> CanonicalScheme {
        // Types in decreasing order, one cluster.
        let n = inst.n();
        let entries = count_vectors(&inst.sizes())
            .into_iter()
            .map(|hk| {
                let types: Vec<u8> = (0..n).map(|s| u8::from(s < hk[0])).collect();
                (hk, vec![(Pattern::new(vec![0; n], types).unwrap(), q(1))])
            })
            .collect();
        CanonicalScheme::new(inst, entries).unwrap()
    }

    #[test]
    fn expansion_matches_reduced_form() {
        let inst = Instance::pairs(&[4], &["0.3"], ["0", "1", "3"], Awareness::SelfAgnostic).unwrap();
        let c = sorted(&inst);
        let s = c.expand(&inst, 1 << 20).unwrap();
        let (m, w) = expected_outcome(&inst, &s).unwrap();
        assert_eq!(m, c.expected_counts(&inst));
        assert_eq!(w, c.welfare(&inst));
        assert!(c.persuasion(&inst).unwrap().is_pass());
        assert!(is_persuasive(&inst, &s).unwrap().is_pass());
        // θ = 1100 has 2!·2! realizing orderings.
        assert_eq!(s.orderings_for(&"1100".parse().unwrap()).unwrap().len(), 4);
        assert_eq!(s.orderings_for(&"1100".parse().unwrap()).unwrap()[0].1, frac(1, 4));
    }

    #[test]
    fn rejects_misfiled_pattern() {
        let inst = Instance::pairs(&[2], &["0.5"], ["0", "1", "3"], Awareness::SelfAgnostic).unwrap();
        let mut e = sorted(&inst).entries().clone();
        let bad = Pattern::new(vec![0, 0], vec![1, 1]).unwrap();
        e.insert(vec![1], vec![(bad, q(1))]);
        assert!(CanonicalScheme::new(&inst, e).is_err());
    }
}
