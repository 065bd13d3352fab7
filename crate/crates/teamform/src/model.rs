//! Domain types: instances, type profiles, orderings, team counts and the
//! closed-form first-best quantities.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use num::{BigUint, One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial, fmt_q, parse_rational, pow, q, q_from_usize, Q};

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub size: usize,
    pub p: Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Awareness {
    SelfAgnostic,
    SelfAware,
}

/// Pair payoffs `u(0,0) < u(1,0) < u(1,1)`; symmetry is built in.
#[derive(Debug, Clone, PartialEq)]
pub struct PairUtility {
    values: [Q; 3],
}

impl PairUtility {
    pub fn new(u00: Q, u10: Q, u11: Q) -> Result<Self> {
        if !(u00 < u10 && u10 <= u11) {
            return Err(Error::InvalidUtility(format!(
                "pair utility must satisfy u00 < u10 <= u11, got ({}, {}, {})",
                fmt_q(&u00),
                fmt_q(&u10),
                fmt_q(&u11)
            )));
        }
        Ok(Self { values: [u00, u10, u11] })
    }
    pub fn u00(&self) -> &Q {
        &self.values[0]
    }
    pub fn u10(&self) -> &Q {
        &self.values[1]
    }
    pub fn u11(&self) -> &Q {
        &self.values[2]
    }
}

/// Team payoff `u(j)` for a team holding `j` type-1 members.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamUtility {
    values: Vec<Q>,
}

impl TeamUtility {
    pub fn new(values: Vec<Q>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidUtility("team utility needs at least 3 values".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidUtility("team utility must be strictly increasing".into()));
        }
        Ok(Self { values })
    }
    pub fn values(&self) -> &[Q] {
        &self.values
    }
    pub fn team_size(&self) -> usize {
        self.values.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Utility {
    Pair(PairUtility),
    Team(TeamUtility),
}

impl Utility {
    pub fn pair(u00: Q, u10: Q, u11: Q) -> Result<Self> {
        PairUtility::new(u00, u10, u11).map(Utility::Pair)
    }
    pub fn team(values: Vec<Q>) -> Result<Self> {
        TeamUtility::new(values).map(Utility::Team)
    }
    /// `u(0), …, u(a)` indexed by the number of type-1 members.
    pub fn values(&self) -> &[Q] {
        match self {
            Utility::Pair(p) => &p.values,
            Utility::Team(t) => &t.values,
        }
    }
    pub fn team_size(&self) -> usize {
        self.values().len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convexity {
    Convex,
    StrictlyConcave,
}

/// A validated population: clusters, team size, utility and awareness mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    clusters: Vec<Cluster>,
    team_size: usize,
    utility: Utility,
    awareness: Awareness,
    offsets: Vec<usize>,
}

impl Instance {
    pub fn new(clusters: Vec<Cluster>, team_size: usize, utility: Utility, awareness: Awareness) -> Result<Self> {
        if team_size < 2 {
            return Err(Error::Config(format!("team size must be at least 2, got {team_size}")));
        }
        if clusters.is_empty() {
            return Err(Error::InvalidInstance("at least one cluster is required".into()));
        }
        if utility.team_size() != team_size {
            return Err(Error::InvalidUtility(format!(
                "utility describes teams of {} but team size is {team_size}",
                utility.team_size()
            )));
        }
        for (k, c) in clusters.iter().enumerate() {
            if c.size == 0 {
                return Err(Error::InvalidInstance(format!("cluster {k} is empty")));
            }
            if c.size % team_size != 0 {
                return Err(Error::InvalidInstance(format!(
                    "cluster {k} has size {} which is not divisible by the team size {team_size}",
                    c.size
                )));
            }
            if c.p.is_negative() || c.p > Q::one() {
                return Err(Error::InvalidInstance(format!("prior of cluster {k} is outside [0,1]")));
            }
        }
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if clusters[i].p == clusters[j].p {
                    return Err(Error::InvalidInstance(format!("clusters {i} and {j} share the same prior")));
                }
            }
        }
        let mut offsets = Vec::with_capacity(clusters.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for c in &clusters {
            acc += c.size;
            offsets.push(acc);
        }
        Ok(Self { clusters, team_size, utility, awareness, offsets })
    }

    /// Convenience constructor for pair instances from decimal strings.
    pub fn pairs(sizes: &[usize], priors: &[&str], u: [&str; 3], awareness: Awareness) -> Result<Self> {
        let utility = Utility::pair(parse_rational(u[0])?, parse_rational(u[1])?, parse_rational(u[2])?)?;
        Self::from_parts(sizes, priors, 2, utility, awareness)
    }

    /// Convenience constructor for team instances from decimal strings.
    pub fn teams(sizes: &[usize], priors: &[&str], u: &[&str], awareness: Awareness) -> Result<Self> {
        let values = u.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        let utility = Utility::team(values)?;
        let a = utility.team_size();
        Self::from_parts(sizes, priors, a, utility, awareness)
    }

    fn from_parts(sizes: &[usize], priors: &[&str], a: usize, utility: Utility, awareness: Awareness) -> Result<Self> {
        if sizes.len() != priors.len() {
            return Err(Error::InvalidInstance("sizes and priors differ in length".into()));
        }
        let clusters = sizes
            .iter()
            .zip(priors)
            .map(|(&size, p)| Ok(Cluster { size, p: parse_rational(p)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(clusters, a, utility, awareness)
    }

    pub fn n(&self) -> usize {
        *self.offsets.last().expect("offsets are non-empty")
    }
    pub fn k(&self) -> usize {
        self.clusters.len()
    }
    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }
    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.size).collect()
    }
    pub fn prior(&self, k: usize) -> &Q {
        &self.clusters[k].p
    }
    pub fn team_size(&self) -> usize {
        self.team_size
    }
    pub fn utility(&self) -> &Utility {
        &self.utility
    }
    pub fn awareness(&self) -> Awareness {
        self.awareness
    }
    pub fn with_awareness(&self, awareness: Awareness) -> Self {
        Self { awareness, ..self.clone() }
    }
    pub fn with_utility(&self, utility: Utility) -> Result<Self> {
        Self::new(self.clusters.clone(), self.team_size, utility, self.awareness)
    }
    pub fn cluster_range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }
    pub fn cluster_of(&self, agent: usize) -> usize {
        self.offsets[1..].iter().position(|&end| agent < end).expect("agent index within n")
    }
    /// Cluster indices sorted by decreasing prior.
    pub fn clusters_by_prior(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&a, &b| self.clusters[b].p.cmp(&self.clusters[a].p));
        idx
    }

    fn require_pairs(&self) -> Result<()> {
        if self.team_size != 2 {
            return Err(Error::Config(format!("operation needs pairs, team size is {}", self.team_size)));
        }
        Ok(())
    }
}

/// A realized binary type vector, agents indexed cluster-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeProfile(Vec<u8>);

impl TypeProfile {
    pub fn new(types: Vec<u8>) -> Result<Self> {
        if types.iter().any(|&t| t > 1) {
            return Err(Error::InvalidProfile("types must be 0 or 1".into()));
        }
        Ok(Self(types))
    }
    /// Profile whose bit `i` of `bits` is the type of agent `i`.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        Self((0..n).map(|i| ((bits >> i) & 1) as u8).collect())
    }
    pub fn types(&self) -> &[u8] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }
    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&t| t == 1).count()
    }
    /// The profile with every type flipped.
    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|&t| 1 - t).collect())
    }
    fn check(&self, inst: &Instance) -> Result<()> {
        if self.len() != inst.n() {
            return Err(Error::InvalidProfile(format!("profile has {} agents, instance has {}", self.len(), inst.n())));
        }
        Ok(())
    }
}

impl fmt::Display for TypeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for TypeProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let types = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidProfile(format!("unexpected character {c:?} in {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self(types))
    }
}

/// A public signal: `slots[s]` is the agent announced at rank `s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ordering(Vec<usize>);

impl Ordering {
    pub fn new(slots: Vec<usize>) -> Result<Self> {
        let n = slots.len();
        let mut seen = vec![false; n];
        for &a in &slots {
            if a >= n || std::mem::replace(&mut seen[a], true) {
                return Err(Error::InvalidOrdering(format!("{slots:?} is not a permutation of 0..{n}")));
            }
        }
        Ok(Self(slots))
    }
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }
    pub fn slots(&self) -> &[usize] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn agent_at(&self, slot: usize) -> usize {
        self.0[slot]
    }
    /// Inverse permutation: the slot of every agent.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (s, &a) in self.0.iter().enumerate() {
            pos[a] = s;
        }
        pos
    }
    /// Types read in announced order, σ(θ).
    pub fn apply(&self, theta: &TypeProfile) -> Vec<u8> {
        self.0.iter().map(|&a| theta.get(a)).collect()
    }
    /// Teams as consecutive blocks of `a` agents.
    pub fn teams(&self, a: usize) -> Vec<Vec<usize>> {
        self.0.chunks(a).map(|c| c.to_vec()).collect()
    }
}

/// `counts[j]` is the number of teams with exactly `j` type-1 members.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MatchCounts(Vec<usize>);

impl MatchCounts {
    pub fn from_vec(counts: Vec<usize>) -> Self {
        Self(counts)
    }
    pub fn pair(m11: usize, m10: usize, m00: usize) -> Self {
        Self(vec![m00, m10, m11])
    }
    /// Tallies consecutive blocks of `a` entries of a type sequence.
    pub fn of_sequence(seq: &[u8], a: usize) -> Self {
        let mut m = vec![0; a + 1];
        for team in seq.chunks(a) {
            m[team.iter().map(|&t| t as usize).sum::<usize>()] += 1;
        }
        Self(m)
    }
    pub fn counts(&self) -> &[usize] {
        &self.0
    }
    pub fn team_size(&self) -> usize {
        self.0.len() - 1
    }
    pub fn m(&self, j: usize) -> usize {
        self.0[j]
    }
    pub fn m11(&self) -> usize {
        self.0[self.team_size()]
    }
    pub fn m10(&self) -> usize {
        self.0[1]
    }
    pub fn m00(&self) -> usize {
        self.0[0]
    }
    pub fn agents(&self) -> usize {
        self.0.iter().sum::<usize>() * self.team_size()
    }
    pub fn ones(&self) -> usize {
        self.0.iter().enumerate().map(|(j, m)| j * m).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub h: usize,
    pub l: usize,
    pub hk: Vec<usize>,
    pub lk: Vec<usize>,
}

pub fn prior_prob(inst: &Instance, theta: &TypeProfile) -> Result<Q> {
    theta.check(inst)?;
    let c = counts(inst, theta)?;
    Ok(profile_prob(inst, &c.hk))
}

/// Probability of one specific profile with per-cluster type-1 counts `hk`.
pub fn profile_prob(inst: &Instance, hk: &[usize]) -> Q {
    inst.clusters.iter().zip(hk).map(|(c, &h)| pow(&c.p, h) * pow(&(Q::one() - &c.p), c.size - h)).product()
}

/// Probability of the whole class of profiles with per-cluster counts `hk`.
pub fn class_prob(inst: &Instance, hk: &[usize]) -> Q {
    profile_prob(inst, hk) * crate::numeric::q_from_biguint(&class_size(inst, hk))
}

pub fn class_size(inst: &Instance, hk: &[usize]) -> BigUint {
    inst.clusters.iter().zip(hk).map(|(c, &h)| binomial(c.size, h)).product()
}

pub fn counts(inst: &Instance, theta: &TypeProfile) -> Result<Counts> {
    theta.check(inst)?;
    let hk: Vec<usize> = (0..inst.k()).map(|k| inst.cluster_range(k).filter(|&i| theta.get(i) == 1).count()).collect();
    let lk: Vec<usize> = hk.iter().zip(&inst.clusters).map(|(h, c)| c.size - h).collect();
    let h = hk.iter().sum();
    Ok(Counts { h, l: inst.n() - h, hk, lk })
}

pub fn match_counts(sigma: &Ordering, theta: &TypeProfile, a: usize) -> Result<MatchCounts> {
    if sigma.len() != theta.len() {
        return Err(Error::InvalidOrdering("ordering and profile lengths differ".into()));
    }
    if a < 2 || !theta.len().is_multiple_of(a) {
        return Err(Error::Config(format!("team size {a} does not divide n = {}", theta.len())));
    }
    Ok(MatchCounts::of_sequence(&sigma.apply(theta), a))
}

/// Total welfare `a · Σ_j m_j · u(j)`.
pub fn welfare(counts: &MatchCounts, u: &Utility) -> Result<Q> {
    let vals = u.values();
    if vals.len() != counts.0.len() {
        return Err(Error::Config("match counts and utility disagree on the team size".into()));
    }
    let a = q_from_usize(counts.team_size());
    Ok(counts.0.iter().zip(vals).map(|(&m, v)| q_from_usize(m) * v).sum::<Q>() * a)
}

pub fn classify_convexity(u: &Utility) -> Result<Convexity> {
    let v = u.values();
    if v[0] >= v[1] || v.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidUtility("utility must be increasing".into()));
    }
    let second: Vec<Q> = v.windows(3).map(|w| &w[2] - &w[1] * q(2) + &w[0]).collect();
    if second.iter().all(|d| !d.is_negative()) {
        Ok(Convexity::Convex)
    } else if second.iter().all(|d| d.is_negative()) {
        Ok(Convexity::StrictlyConcave)
    } else {
        Err(Error::InvalidUtility("team utility is neither convex nor strictly concave".into()))
    }
}

/// Curvature restriction used by the team impossibility result.
///
/// Concave case: `g(k) = k·u(k) − (k−1)·u(k−1)` must satisfy
/// `g(k1) > g(k2+1)` for `k2 ≥ 1` and `k1 ≥ k2 + 2`. The pair `k1 = k2 + 1`
/// compares a quantity with itself and describes a swap that leaves the team
/// composition unchanged, so it is skipped. Convex case:
/// `f(k) = (a−k)·u(k) − (a−k+1)·u(k−1)` must satisfy `f(k1+1) < f(k2)` for
/// `1 ≤ k2 ≤ k1 ≤ a−1`.
pub fn is_discrete_regular(u: &TeamUtility, a: usize) -> Result<bool> {
    if a < 2 {
        return Err(Error::Config("team size must be at least 2".into()));
    }
    if u.team_size() != a {
        return Err(Error::Config(format!("utility has {} entries, expected {}", u.values.len(), a + 1)));
    }
    let v = &u.values;
    let kq = |k: usize| q_from_usize(k);
    Ok(match classify_convexity(&Utility::Team(u.clone()))? {
        Convexity::StrictlyConcave => {
            let g = |k: usize| kq(k) * &v[k] - kq(k - 1) * &v[k - 1];
            (1..a).all(|k2| (k2 + 2..=a).all(|k1| g(k1) > g(k2 + 1)))
        }
        Convexity::Convex => {
            let f = |k: usize| kq(a - k) * &v[k] - kq(a - k + 1) * &v[k - 1];
            (1..a).all(|k2| (k2..a).all(|k1| f(k1 + 1) < f(k2)))
        }
    })
}

/// `((ℓ − h)/2)^+`, the fewest 0-0 pairs any ordering can produce.
pub fn fb_from_counts(h: usize, l: usize) -> Result<usize> {
    if !(h + l).is_multiple_of(2) {
        return Err(Error::Config("first-best counts need an even number of agents".into()));
    }
    Ok(l.saturating_sub(h) / 2)
}

pub fn fb(theta: &TypeProfile) -> Result<usize> {
    let h = theta.ones();
    fb_from_counts(h, theta.len() - h)
}

/// `Σ_k ((ℓ_k − h_k)/2)^+`, first best restricted to within-cluster pairs.
pub fn fb_c(inst: &Instance, theta: &TypeProfile) -> Result<usize> {
    inst.require_pairs()?;
    let c = counts(inst, theta)?;
    Ok(fb_c_from_counts(&inst.sizes(), &c.hk))
}

pub fn fb_c_from_counts(sizes: &[usize], hk: &[usize]) -> usize {
    sizes.iter().zip(hk).map(|(&n, &h)| (n - h).saturating_sub(h) / 2).sum()
}

/// Weighted team count with one weight per distance from `a/2`: the first
/// weight multiplies the most balanced teams and the last one `m_0 + m_a`.
pub fn team_objective(counts: &MatchCounts, weights: &[Q]) -> Result<Q> {
    let a = counts.team_size();
    let groups = a / 2 + 1;
    if weights.len() != groups {
        return Err(Error::InvalidWeights(format!(
            "expected {groups} weights for team size {a}, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| w.is_negative()) || weights.iter().sum::<Q>() != Q::one() {
        return Err(Error::InvalidWeights("weights must be non-negative and sum to 1".into()));
    }
    Ok((0..=a)
        .map(|j| {
            let dist = (2 * j).abs_diff(a) / 2;
            &weights[dist] * q_from_usize(counts.m(j))
        })
        .sum())
}

/// Number of raw profiles for an instance, guarded by `cap`.
pub fn profile_count(inst: &Instance, cap: u128) -> Result<u64> {
    let n = inst.n();
    let size: u128 = if n >= 127 { u128::MAX } else { 1u128 << n };
    if size > cap || n > 63 {
        return Err(Error::TooLarge { size, cap });
    }
    Ok(size as u64)
}

/// Every profile with its prior probability.
pub fn enumerate_profiles(inst: &Instance, cap: u128) -> Result<impl Iterator<Item = (TypeProfile, Q)> + '_> {
    let total = profile_count(inst, cap)?;
    let n = inst.n();
    Ok((0..total).map(move |bits| {
        let theta = TypeProfile::from_bits(bits, n);
        let p = prior_prob(inst, &theta).expect("profile length matches");
        (theta, p)
    }))
}

/// A class of profiles sharing per-cluster type-1 counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileClass {
    pub hk: Vec<usize>,
    pub multiplicity: BigUint,
    pub profile_prob: Q,
    pub class_prob: Q,
}

/// All count vectors `(h_1..h_K)` in mixed-radix order.
pub fn count_vectors(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=n).map(move |h| {
                    let mut v = prefix.clone();
                    v.push(h);
                    v
                })
            })
            .collect();
    }
    out
}

pub fn enumerate_canonical(inst: &Instance, cap: u128) -> Result<Vec<ProfileClass>> {
    let size = inst.clusters.iter().map(|c| c.size as u128 + 1).product::<u128>();
    if size > cap {
        return Err(Error::TooLarge { size, cap });
    }
    Ok(count_vectors(&inst.sizes())
        .into_iter()
        .map(|hk| {
            let multiplicity = class_size(inst, &hk);
            let profile_prob = profile_prob(inst, &hk);
            let class_prob = &profile_prob * crate::numeric::q_from_biguint(&multiplicity);
            ProfileClass { hk, multiplicity, profile_prob, class_prob }
        })
        .collect())
}

/// Index of a count vector in the mixed-radix order of [`count_vectors`].
pub fn class_index(sizes: &[usize], hk: &[usize]) -> usize {
    sizes.iter().zip(hk).fold(0, |acc, (&n, &h)| acc * (n + 1) + h)
}

pub fn expected<F: Fn(&ProfileClass) -> Q>(classes: &[ProfileClass], f: F) -> Q {
    classes.iter().map(|c| &c.class_prob * f(c)).sum()
}

/// Exact `E[fb]` for a pair instance.
pub fn expected_fb(inst: &Instance, cap: u128) -> Result<Q> {
    inst.require_pairs()?;
    let classes = enumerate_canonical(inst, cap)?;
    let n = inst.n();
    Ok(expected(&classes, |c| {
        let h: usize = c.hk.iter().sum();
        q_from_usize(fb_from_counts(h, n - h).unwrap_or(0))
    }))
}

/// Exact `E[fb_c]` for a pair instance.
pub fn expected_fb_c(inst: &Instance, cap: u128) -> Result<Q> {
    inst.require_pairs()?;
    let classes = enumerate_canonical(inst, cap)?;
    let sizes = inst.sizes();
    Ok(expected(&classes, |c| q_from_usize(fb_c_from_counts(&sizes, &c.hk))))
}

// ---------------------------------------------------------------------------
// JSON interface

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrStr {
    Num(serde_json::Number),
    Str(String),
}

impl NumOrStr {
    pub fn to_q(&self) -> Result<Q> {
        match self {
            NumOrStr::Num(n) => parse_rational(&n.to_string()),
            NumOrStr::Str(s) => parse_rational(s),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCluster {
    size: usize,
    p: NumOrStr,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawUtility {
    Pair(Vec<NumOrStr>),
    Team(Vec<NumOrStr>),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawInstance {
    clusters: Vec<RawCluster>,
    team_size: usize,
    utility: RawUtility,
    #[serde(default = "default_awareness")]
    awareness: String,
}

fn default_awareness() -> String {
    "agnostic".into()
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawInstance = serde_json::from_str(text)?;
        let clusters =
            raw.clusters.iter().map(|c| Ok(Cluster { size: c.size, p: c.p.to_q()? })).collect::<Result<Vec<_>>>()?;
        let utility = match &raw.utility {
            RawUtility::Pair(v) => {
                if v.len() != 3 {
                    return Err(Error::InvalidUtility("pair utility needs [u00, u10, u11]".into()));
                }
                Utility::pair(v[0].to_q()?, v[1].to_q()?, v[2].to_q()?)?
            }
            RawUtility::Team(v) => Utility::team(v.iter().map(NumOrStr::to_q).collect::<Result<_>>()?)?,
        };
        let awareness = match raw.awareness.as_str() {
            "agnostic" => Awareness::SelfAgnostic,
            "aware" => Awareness::SelfAware,
            other => return Err(Error::InvalidInstance(format!("unknown awareness {other:?}"))),
        };
        Self::new(clusters, raw.team_size, utility, awareness)
    }

    pub fn to_json(&self) -> Result<String> {
        let s = |x: &Q| NumOrStr::Str(fmt_q(x));
        let raw = RawInstance {
            clusters: self.clusters.iter().map(|c| RawCluster { size: c.size, p: s(&c.p) }).collect(),
            team_size: self.team_size,
            utility: match &self.utility {
                Utility::Pair(p) => RawUtility::Pair(p.values.iter().map(s).collect()),
                Utility::Team(t) => RawUtility::Team(t.values.iter().map(s).collect()),
            },
            awareness: match self.awareness {
                Awareness::SelfAgnostic => "agnostic".into(),
                Awareness::SelfAware => "aware".into(),
            },
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }
}
