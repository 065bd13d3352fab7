//! Posterior beliefs induced by a public signaling scheme and the solution
//! concepts evaluated on them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{prior_prob, Awareness, Instance, MatchCounts, Ordering, PairUtility, TypeProfile};
use crate::numeric::{binomial, fmt_q, parse_rational, pow, q_from_biguint, q_from_usize, Q};

/// Randomized map from type profiles to distributions over orderings.
///
/// A scheme may list only some profiles; checks that need the full prior
/// (ex-ante utilities) reject incomplete schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    n: usize,
    support: BTreeMap<TypeProfile, Vec<(Ordering, Q)>>,
}

impl Scheme {
    pub fn new(n: usize, support: BTreeMap<TypeProfile, Vec<(Ordering, Q)>>) -> Result<Self> {
        let mut clean = BTreeMap::new();
        for (theta, entries) in support {
            if theta.len() != n {
                return Err(Error::InvalidScheme(format!("profile {theta} does not have {n} agents")));
            }
            let mut merged: BTreeMap<Ordering, Q> = BTreeMap::new();
            for (sigma, x) in entries {
                if sigma.len() != n {
                    return Err(Error::InvalidScheme(format!("ordering for {theta} does not have {n} slots")));
                }
                if x < Q::zero() {
                    return Err(Error::InvalidScheme(format!("negative probability for {theta}")));
                }
                *merged.entry(sigma).or_insert_with(Q::zero) += x;
            }
            let total: Q = merged.values().sum();
            if total != Q::one() {
                return Err(Error::InvalidScheme(format!(
                    "probabilities for {theta} sum to {} instead of 1",
                    fmt_q(&total)
                )));
            }
            let entries: Vec<(Ordering, Q)> = merged.into_iter().filter(|(_, x)| !x.is_zero()).collect();
            clean.insert(theta, entries);
        }
        Ok(Self { n, support: clean })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn support(&self) -> &BTreeMap<TypeProfile, Vec<(Ordering, Q)>> {
        &self.support
    }
    pub fn orderings_for(&self, theta: &TypeProfile) -> Option<&[(Ordering, Q)]> {
        self.support.get(theta).map(Vec::as_slice)
    }
    /// Total number of (profile, ordering) entries.
    pub fn len(&self) -> usize {
        self.support.values().map(Vec::len).sum()
    }
    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Every profile of positive prior probability is listed.
    pub fn covers_prior(&self, inst: &Instance) -> Result<bool> {
        let listed: Q = self.support.keys().map(|t| prior_prob(inst, t)).collect::<Result<Vec<_>>>()?.into_iter().sum();
        Ok(listed == Q::one())
    }

    pub fn to_json(&self) -> Result<String> {
        let raw: Vec<RawEntry> = self
            .support
            .iter()
            .map(|(theta, entries)| RawEntry {
                profile: theta.to_string(),
                orderings: entries
                    .iter()
                    .map(|(s, x)| RawOrdering { perm: s.slots().to_vec(), prob: fmt_q(x) })
                    .collect(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<RawEntry> = serde_json::from_str(text)?;
        let n = raw.first().map(|e| e.profile.len()).unwrap_or(0);
        let mut support = BTreeMap::new();
        for e in raw {
            let theta: TypeProfile = e.profile.parse()?;
            let entries = e
                .orderings
                .into_iter()
                .map(|o| Ok((Ordering::new(o.perm)?, parse_rational(&o.prob)?)))
                .collect::<Result<Vec<_>>>()?;
            if support.insert(theta.clone(), entries).is_some() {
                return Err(Error::InvalidScheme(format!("profile {theta} listed twice")));
            }
        }
        Self::new(n, support)
    }
}

#[derive(Serialize, Deserialize)]
struct RawOrdering {
    perm: Vec<usize>,
    prob: String,
}

#[derive(Serialize, Deserialize)]
struct RawEntry {
    profile: String,
    orderings: Vec<RawOrdering>,
}

/// Per-agent expected types, indexed by agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior(Vec<Q>);

impl Posterior {
    pub fn new(values: Vec<Q>) -> Self {
        Self(values)
    }
    pub fn values(&self) -> &[Q] {
        &self.0
    }
    pub fn of(&self, agent: usize) -> &Q {
        &self.0[agent]
    }
    /// Expected types read along the announced order.
    pub fn in_order(&self, sigma: &Ordering) -> Vec<Q> {
        sigma.slots().iter().map(|&a| self.0[a].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// The public signal only.
    Public,
    /// The signal plus agent `agent`'s own type.
    OwnType { agent: usize, t: u8 },
}

/// Outcome of a check: either it passes or it carries a witness.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<W> {
    Pass,
    Fail(W),
}

impl<W> Verdict<W> {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
    pub fn witness(&self) -> Option<&W> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(w) => Some(w),
        }
    }
}

/// One supported signal with its preimage weighted by `λ(θ)·x_{θ,σ}`.
#[derive(Debug, Clone)]
pub struct Signal {
    pub ordering: Ordering,
    pub preimage: Vec<(TypeProfile, Q)>,
    pub mass: Q,
}

impl Signal {
    /// Expected types under the given conditioning, `None` on a null event.
    pub fn posterior(&self, cond: Conditioning) -> Option<Posterior> {
        let n = self.ordering.len();
        let mut num = vec![Q::zero(); n];
        let mut den = Q::zero();
        for (theta, w) in &self.preimage {
            if let Conditioning::OwnType { agent, t } = cond {
                if theta.get(agent) != t {
                    continue;
                }
            }
            den += w;
            for (i, v) in num.iter_mut().enumerate() {
                if theta.get(i) == 1 {
                    *v += w;
                }
            }
        }
        if den.is_zero() {
            return None;
        }
        Some(Posterior(num.into_iter().map(|v| v / &den).collect()))
    }

    /// Expected team utility of `agent` given the conditioning.
    fn expected_utility(&self, inst: &Instance, agent: usize, cond: Conditioning) -> Option<Q> {
        let a = inst.team_size();
        let u = inst.utility().values();
        let slot = self.ordering.positions()[agent];
        let team = &self.ordering.slots()[slot / a * a..slot / a * a + a];
        let mut num = Q::zero();
        let mut den = Q::zero();
        for (theta, w) in &self.preimage {
            if let Conditioning::OwnType { agent: who, t } = cond {
                if theta.get(who) != t {
                    continue;
                }
            }
            let j: usize = team.iter().map(|&m| theta.get(m) as usize).sum();
            num += w * &u[j];
            den += w;
        }
        (!den.is_zero()).then(|| num / den)
    }
}

/// Supported signals of a scheme, in a deterministic order.
#[derive(Debug, Clone)]
pub struct SignalTable {
    signals: Vec<Signal>,
    index: HashMap<Ordering, usize>,
}

impl SignalTable {
    pub fn build(inst: &Instance, scheme: &Scheme) -> Result<Self> {
        if scheme.n() != inst.n() {
            return Err(Error::InvalidScheme("scheme and instance disagree on n".into()));
        }
        let mut grouped: BTreeMap<Ordering, Vec<(TypeProfile, Q)>> = BTreeMap::new();
        for (theta, entries) in scheme.support() {
            let lambda = prior_prob(inst, theta)?;
            if lambda.is_zero() {
                continue;
            }
            for (sigma, x) in entries {
                grouped.entry(sigma.clone()).or_default().push((theta.clone(), &lambda * x));
            }
        }
        let signals: Vec<Signal> = grouped
            .into_iter()
            .map(|(ordering, preimage)| {
                let mass = preimage.iter().map(|(_, w)| w).sum();
                Signal { ordering, preimage, mass }
            })
            .collect();
        let index = signals.iter().enumerate().map(|(i, s)| (s.ordering.clone(), i)).collect();
        Ok(Self { signals, index })
    }
    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }
    pub fn get(&self, sigma: &Ordering) -> Option<&Signal> {
        self.index.get(sigma).map(|&i| &self.signals[i])
    }
}

pub fn posterior_expected_types(
    inst: &Instance,
    scheme: &Scheme,
    sigma: &Ordering,
    cond: Conditioning,
) -> Result<Posterior> {
    let table = SignalTable::build(inst, scheme)?;
    table
        .get(sigma)
        .and_then(|s| s.posterior(cond))
        .ok_or_else(|| Error::UndefinedPosterior(format!("signal {:?} has zero probability", sigma.slots())))
}

/// A violated persuasion constraint: at `ordering`, the agent in
/// `other_slot` looks strictly better than the agent the announcement ranks
/// at `slot`; `own_type` is the conditioning of the self-aware agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PersuasionWitness {
    pub ordering: Ordering,
    pub slot: usize,
    pub other_slot: usize,
    pub own_type: Option<u8>,
}

impl fmt::Display for PersuasionWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "signal {:?}: slot {} ranks below slot {}", self.ordering.slots(), self.slot, self.other_slot)?;
        match self.own_type {
            Some(t) => write!(f, " for an agent of own type {t}"),
            None => Ok(()),
        }
    }
}

/// Persuasiveness of a single signal in the instance's awareness mode.
pub fn signal_persuasion(inst: &Instance, signal: &Signal) -> Result<Verdict<PersuasionWitness>> {
    match inst.awareness() {
        Awareness::SelfAgnostic => {
            let post = signal.posterior(Conditioning::Public).expect("supported signal has mass");
            let e = post.in_order(&signal.ordering);
            Ok(match (0..e.len() - 1).find(|&s| e[s] < e[s + 1]) {
                Some(s) => Verdict::Fail(PersuasionWitness {
                    ordering: signal.ordering.clone(),
                    slot: s,
                    other_slot: s + 1,
                    own_type: None,
                }),
                None => Verdict::Pass,
            })
        }
        Awareness::SelfAware => {
            if inst.team_size() != 2 {
                return Err(Error::Unsupported("self-aware persuasion is implemented for pairs".into()));
            }
            let sigma = &signal.ordering;
            let n = sigma.len();
            for s in 0..n {
                for t in [0u8, 1] {
                    let Some(post) = signal.posterior(Conditioning::OwnType { agent: sigma.agent_at(s), t }) else {
                        continue;
                    };
                    let e = post.in_order(sigma);
                    let partner = s ^ 1;
                    if let Some(j) = ((s / 2 + 1) * 2..n).find(|&j| e[partner] < e[j]) {
                        return Ok(Verdict::Fail(PersuasionWitness {
                            ordering: sigma.clone(),
                            slot: partner,
                            other_slot: j,
                            own_type: Some(t),
                        }));
                    }
                }
            }
            Ok(Verdict::Pass)
        }
    }
}

pub fn is_persuasive(inst: &Instance, scheme: &Scheme) -> Result<Verdict<PersuasionWitness>> {
    let table = SignalTable::build(inst, scheme)?;
    for signal in table.signals() {
        if let Verdict::Fail(w) = signal_persuasion(inst, signal)? {
            return Ok(Verdict::Fail(w));
        }
    }
    Ok(Verdict::Pass)
}

/// Pair matching along the announced order is stable for common
/// expected-type preferences; returns a blocking pair of agents otherwise.
pub fn is_stable(inst: &Instance, sigma: &Ordering, posterior: &Posterior) -> Result<Verdict<(usize, usize)>> {
    if inst.team_size() != 2 {
        return Err(Error::Config("pair stability needs team size 2; use group stability".into()));
    }
    Ok(blocking_pair(sigma, |i, j, _| posterior.of(j) > posterior.of(i), |_| true))
}

/// Scans pairs in slot order; `prefers(i, j, m)` says agent `i` strictly
/// prefers `j` to its partner `m`.
fn blocking_pair<P, G>(sigma: &Ordering, prefers: P, guard: G) -> Verdict<(usize, usize)>
where
    P: Fn(usize, usize, usize) -> bool,
    G: Fn(usize) -> bool,
{
    let slots = sigma.slots();
    let n = slots.len();
    for s1 in 0..n {
        for s2 in s1 + 1..n {
            if s1 / 2 == s2 / 2 {
                continue;
            }
            let (i, j) = (slots[s1], slots[s2]);
            let (mi, mj) = (slots[s1 ^ 1], slots[s2 ^ 1]);
            if guard(i) && guard(j) && prefers(mi, j, i) && prefers(mj, i, j) {
                return Verdict::Fail((i, j));
            }
        }
    }
    Verdict::Pass
}

/// Brute-force blocking-pair search on one signal.
///
/// Self-agnostic agents rank partners by the public expected type. Self-aware
/// agents rank by expected type given their realized own type, so every
/// profile in the preimage is inspected; the witness then names the profile.
pub fn blocking_pair_search(inst: &Instance, signal: &Signal) -> Result<Verdict<(Option<TypeProfile>, usize, usize)>> {
    if inst.team_size() != 2 {
        return Err(Error::Config("pair stability needs team size 2".into()));
    }
    let sigma = &signal.ordering;
    match inst.awareness() {
        Awareness::SelfAgnostic => {
            let post = signal.posterior(Conditioning::Public).expect("supported signal has mass");
            Ok(match is_stable(inst, sigma, &post)? {
                Verdict::Pass => Verdict::Pass,
                Verdict::Fail((i, j)) => Verdict::Fail((None, i, j)),
            })
        }
        Awareness::SelfAware => {
            let n = sigma.len();
            let mut cond: HashMap<(usize, u8), Posterior> = HashMap::new();
            for i in 0..n {
                for t in [0u8, 1] {
                    if let Some(p) = signal.posterior(Conditioning::OwnType { agent: i, t }) {
                        cond.insert((i, t), p);
                    }
                }
            }
            let slots = sigma.slots();
            for (theta, w) in &signal.preimage {
                if w.is_zero() {
                    continue;
                }
                // `a` prefers `j` over `partner` given its own realized type.
                let prefers = |a: usize, j: usize, partner: usize| {
                    let p = &cond[&(a, theta.get(a))];
                    p.of(j) > p.of(partner)
                };
                for s1 in 0..n {
                    for s2 in s1 + 1..n {
                        if s1 / 2 == s2 / 2 {
                            continue;
                        }
                        let (i, j) = (slots[s1], slots[s2]);
                        let (mi, mj) = (slots[s1 ^ 1], slots[s2 ^ 1]);
                        if prefers(i, j, mi) && prefers(j, i, mj) {
                            return Ok(Verdict::Fail((Some(theta.clone()), i, j)));
                        }
                    }
                }
            }
            Ok(Verdict::Pass)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupWitness {
    pub team: usize,
    pub other_team: usize,
    pub leaving: usize,
    pub joining: usize,
}

impl fmt::Display for GroupWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "agent {} leaves team {} for team {}, replacing agent {}",
            self.joining, self.other_team, self.team, self.leaving
        )
    }
}

/// Group stability of a team partition.
///
/// An agent values a team by the summed expected types of its other members,
/// which reduces exactly to expected-type preferences over partners when
/// `a = 2`.
pub fn is_group_stable(inst: &Instance, teams: &[Vec<usize>], posterior: &Posterior) -> Result<Verdict<GroupWitness>> {
    let n = inst.n();
    let a = inst.team_size();
    let mut seen = vec![false; n];
    for team in teams {
        if team.len() != a {
            return Err(Error::InvalidScheme(format!("team {team:?} does not have {a} members")));
        }
        for &m in team {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidScheme(format!("agent {m} is missing or repeated in the partition")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidScheme("partition does not cover every agent".into()));
    }
    let e = posterior.values();
    let others =
        |team: &[usize], skip: usize| -> Q { team.iter().filter(|&&m| m != skip).map(|&m| e[m].clone()).sum() };
    for (ti, t) in teams.iter().enumerate() {
        for &i in t {
            let rest = others(t, i);
            for (tj, t2) in teams.iter().enumerate() {
                if ti == tj {
                    continue;
                }
                for &j in t2 {
                    if e[j] > e[i] && rest > others(t2, j) {
                        return Ok(Verdict::Fail(GroupWitness { team: ti, other_team: tj, leaving: i, joining: j }));
                    }
                }
            }
        }
    }
    Ok(Verdict::Pass)
}

/// The no-information outcome: rank-order by prior, teams within clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub ordering: Ordering,
    pub teams: Vec<Vec<usize>>,
    /// Expected utility of an agent of each cluster.
    pub agnostic: Vec<Q>,
    /// `[U(0), U(1)]` for an agent of each cluster who knows its type.
    pub aware: Vec<[Q; 2]>,
}

pub fn baseline_matching(inst: &Instance) -> Baseline {
    let slots: Vec<usize> = inst.clusters_by_prior().into_iter().flat_map(|k| inst.cluster_range(k)).collect();
    let ordering = Ordering::new(slots).expect("cluster ranges partition the agents");
    let a = inst.team_size();
    let u = inst.utility().values();
    let bin = |m: usize, j: usize, p: &Q| q_from_biguint(&binomial(m, j)) * pow(p, j) * pow(&(Q::one() - p), m - j);
    let agnostic = inst.clusters().iter().map(|c| (0..=a).map(|j| bin(a, j, &c.p) * &u[j]).sum()).collect();
    let aware = inst
        .clusters()
        .iter()
        .map(|c| {
            let at = |t: usize| (0..a).map(|j| bin(a - 1, j, &c.p) * &u[j + t]).sum::<Q>();
            [at(0), at(1)]
        })
        .collect();
    Baseline { teams: ordering.teams(a), ordering, agnostic, aware }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParetoNotion {
    /// Each agent's expected utility before the signal is realized, given its
    /// own type when self-aware.
    ExAnte,
    /// The same comparison after conditioning on every supported signal.
    PerSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoWitness {
    pub agent: usize,
    pub own_type: Option<u8>,
    pub ordering: Option<Ordering>,
    pub utility: Q,
    pub baseline: Q,
}

impl fmt::Display for ParetoWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent {}", self.agent)?;
        if let Some(t) = self.own_type {
            write!(f, " of type {t}")?;
        }
        if let Some(o) = &self.ordering {
            write!(f, " under signal {:?}", o.slots())?;
        }
        write!(f, " expects {} below its baseline {}", fmt_q(&self.utility), fmt_q(&self.baseline))
    }
}

pub fn is_pareto_improving(inst: &Instance, scheme: &Scheme) -> Result<Verdict<ParetoWitness>> {
    is_pareto_improving_with(inst, scheme, ParetoNotion::ExAnte)
}

pub fn is_pareto_improving_with(
    inst: &Instance,
    scheme: &Scheme,
    notion: ParetoNotion,
) -> Result<Verdict<ParetoWitness>> {
    if let Verdict::Fail(w) = is_persuasive(inst, scheme)? {
        return Err(Error::Precondition(format!(
            "scheme is not persuasive (signal {:?}, slot {}); the induced matching is undefined",
            w.ordering.slots(),
            w.slot
        )));
    }
    let base = baseline_matching(inst);
    let n = inst.n();
    match notion {
        ParetoNotion::ExAnte => {
            if !scheme.covers_prior(inst)? {
                return Err(Error::InvalidScheme(
                    "ex-ante utilities need every profile of positive probability".into(),
                ));
            }
            match inst.awareness() {
                Awareness::SelfAgnostic => {
                    let utils = agent_utilities(inst, scheme)?;
                    for (i, ui) in utils.into_iter().enumerate() {
                        let b = &base.agnostic[inst.cluster_of(i)];
                        if &ui < b {
                            return Ok(Verdict::Fail(ParetoWitness {
                                agent: i,
                                own_type: None,
                                ordering: None,
                                utility: ui,
                                baseline: b.clone(),
                            }));
                        }
                    }
                }
                Awareness::SelfAware => {
                    let utils = agent_type_utilities(inst, scheme)?;
                    for t in [1u8, 0] {
                        for (i, ut) in utils.iter().enumerate() {
                            let Some(ui) = &ut[t as usize] else { continue };
                            let b = &base.aware[inst.cluster_of(i)][t as usize];
                            if ui < b {
                                return Ok(Verdict::Fail(ParetoWitness {
                                    agent: i,
                                    own_type: Some(t),
                                    ordering: None,
                                    utility: ui.clone(),
                                    baseline: b.clone(),
                                }));
                            }
                        }
                    }
                }
            }
        }
        ParetoNotion::PerSignal => {
            let table = SignalTable::build(inst, scheme)?;
            for signal in table.signals() {
                for i in 0..n {
                    let k = inst.cluster_of(i);
                    let conds: Vec<(Conditioning, Option<u8>, &Q)> = match inst.awareness() {
                        Awareness::SelfAgnostic => vec![(Conditioning::Public, None, &base.agnostic[k])],
                        Awareness::SelfAware => [1u8, 0]
                            .into_iter()
                            .map(|t| (Conditioning::OwnType { agent: i, t }, Some(t), &base.aware[k][t as usize]))
                            .collect(),
                    };
                    for (cond, own_type, b) in conds {
                        if let Some(ui) = signal.expected_utility(inst, i, cond) {
                            if &ui < b {
                                return Ok(Verdict::Fail(ParetoWitness {
                                    agent: i,
                                    own_type,
                                    ordering: Some(signal.ordering.clone()),
                                    utility: ui,
                                    baseline: b.clone(),
                                }));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Verdict::Pass)
}

fn team_ones(sigma: &Ordering, pos: &[usize], theta: &TypeProfile, agent: usize, a: usize) -> usize {
    let start = pos[agent] / a * a;
    sigma.slots()[start..start + a].iter().map(|&m| theta.get(m) as usize).sum()
}

/// Expected pair utility when one side is type 1 with probability `q` and the
/// other side is type 1 with probability `p1` given that, `p0` otherwise.
///
/// Nondecreasing in `q` whenever `u00 ≤ u10 ≤ u11`, since the slope is
/// `p1(u11 − u10) + (1 − p0)(u10 − u00)`.
pub fn match_value(u: &PairUtility, q: &Q, p0: &Q, p1: &Q) -> Q {
    let one = Q::one();
    u.u11() * p1 * q + u.u10() * ((&one - p1) * q + p0 * (&one - q)) + u.u00() * (&one - p0) * (&one - q)
}

/// Ex-ante expected utility of every agent.
pub fn agent_utilities(inst: &Instance, scheme: &Scheme) -> Result<Vec<Q>> {
    let n = inst.n();
    let a = inst.team_size();
    let u = inst.utility().values();
    let mut out = vec![Q::zero(); n];
    for (theta, entries) in scheme.support() {
        let lambda = prior_prob(inst, theta)?;
        if lambda.is_zero() {
            continue;
        }
        for (sigma, x) in entries {
            let w = &lambda * x;
            let pos = sigma.positions();
            for (i, acc) in out.iter_mut().enumerate() {
                *acc += &w * &u[team_ones(sigma, &pos, theta, i, a)];
            }
        }
    }
    Ok(out)
}

/// Expected utility of every agent given its own type (`None` on null events).
pub fn agent_type_utilities(inst: &Instance, scheme: &Scheme) -> Result<Vec<[Option<Q>; 2]>> {
    let n = inst.n();
    let a = inst.team_size();
    let u = inst.utility().values();
    let mut num = vec![[Q::zero(), Q::zero()]; n];
    let mut den = vec![[Q::zero(), Q::zero()]; n];
    for (theta, entries) in scheme.support() {
        let lambda = prior_prob(inst, theta)?;
        if lambda.is_zero() {
            continue;
        }
        for (sigma, x) in entries {
            let w = &lambda * x;
            let pos = sigma.positions();
            for i in 0..n {
                let t = theta.get(i) as usize;
                num[i][t] += &w * &u[team_ones(sigma, &pos, theta, i, a)];
                den[i][t] += &w;
            }
        }
    }
    Ok(num
        .into_iter()
        .zip(den)
        .map(|(nu, de)| {
            let f = |t: usize| (!de[t].is_zero()).then(|| &nu[t] / &de[t]);
            [f(0), f(1)]
        })
        .collect())
}

/// Expected team counts `E[m_j]` and total welfare.
pub fn expected_outcome(inst: &Instance, scheme: &Scheme) -> Result<(Vec<Q>, Q)> {
    let a = inst.team_size();
    let mut m = vec![Q::zero(); a + 1];
    for (theta, entries) in scheme.support() {
        let lambda = prior_prob(inst, theta)?;
        for (sigma, x) in entries {
            let c = MatchCounts::of_sequence(&sigma.apply(theta), a);
            for (j, &cj) in c.counts().iter().enumerate() {
                m[j] += &lambda * x * q_from_usize(cj);
            }
        }
    }
    let u = inst.utility().values();
    let w = m.iter().zip(u).map(|(mj, uj)| mj * uj).sum::<Q>() * q_from_usize(a);
    Ok((m, w))
}

/// Law of total expectation check helper: `Σ_σ P(σ)·E[θ_i | σ]` per agent.
pub fn averaged_posteriors(inst: &Instance, scheme: &Scheme) -> Result<Vec<Q>> {
    let table = SignalTable::build(inst, scheme)?;
    let mut acc = vec![Q::zero(); inst.n()];
    for s in table.signals() {
        let p = s.posterior(Conditioning::Public).expect("supported");
        for (i, v) in acc.iter_mut().enumerate() {
            *v += &s.mass * p.of(i);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{frac, q};

    fn k1(n: usize, p: &str, u: [&str; 3]) -> Instance {
        Instance::pairs(&[n], &[p], u, Awareness::SelfAgnostic).unwrap()
    }

    fn two_profile_scheme() -> (Instance, Scheme, Ordering) {
        let inst = k1(6, "0.5", ["0", "1", "1.5"]);
        // A..F are agents 0..5; σ* = (A, B, C, E, D, F).
        let sigma = Ordering::new(vec![0, 1, 2, 4, 3, 5]).unwrap();
        let mut support = BTreeMap::new();
        support.insert("111100".parse().unwrap(), vec![(sigma.clone(), q(1))]);
        support.insert("110011".parse().unwrap(), vec![(sigma.clone(), q(1))]);
        (inst, Scheme::new(6, support).unwrap(), sigma)
    }

    fn no_info(inst: &Instance) -> Scheme {
        let sigma = baseline_matching(inst).ordering;
        let support =
            (0..1u64 << inst.n()).map(|b| (TypeProfile::from_bits(b, inst.n()), vec![(sigma.clone(), q(1))])).collect();
        Scheme::new(inst.n(), support).unwrap()
    }

    #[test]
    fn two_profile_scheme_posteriors() {
        let (inst, scheme, sigma) = two_profile_scheme();
        let post = posterior_expected_types(&inst, &scheme, &sigma, Conditioning::Public).unwrap();
        let half = frac(1, 2);
        assert_eq!(post.in_order(&sigma), vec![q(1), q(1), half.clone(), half.clone(), half.clone(), half]);
        assert!(is_persuasive(&inst, &scheme).unwrap().is_pass());
        assert!(is_stable(&inst, &sigma, &post).unwrap().is_pass());
        let other = Ordering::identity(6);
        assert!(matches!(
            posterior_expected_types(&inst, &scheme, &other, Conditioning::Public),
            Err(Error::UndefinedPosterior(_))
        ));
    }

    #[test]
    fn no_information_posteriors_equal_prior() {
        let inst = k1(4, "0.3", ["0", "1", "2"]);
        let s = no_info(&inst);
        let post = posterior_expected_types(&inst, &s, &Ordering::identity(4), Conditioning::Public).unwrap();
        assert!(post.values().iter().all(|v| v == &frac(3, 10)));
        let inst2 = Instance::pairs(&[2, 2], &["0.1", "0.9"], ["0", "1", "2"], Awareness::SelfAgnostic).unwrap();
        assert!(is_persuasive(&inst2, &no_info(&inst2)).unwrap().is_pass());
    }

    #[test]
    fn inverted_signal_is_not_persuasive() {
        let inst = k1(2, "0.5", ["0", "1", "2"]);
        let sigma = Ordering::identity(2);
        let mut support = BTreeMap::new();
        support.insert("01".parse().unwrap(), vec![(sigma, q(1))]);
        let v = is_persuasive(&inst, &Scheme::new(2, support).unwrap()).unwrap();
        assert_eq!(v.witness().unwrap().slot, 0);
    }

    #[test]
    fn stability_examples() {
        let inst = k1(4, "0.5", ["0", "1", "2"]);
        let post = Posterior::new(vec![frac(3, 10), frac(9, 10), frac(9, 10), frac(3, 10)]);
        let v = is_stable(&inst, &Ordering::identity(4), &post).unwrap();
        assert_eq!(v, Verdict::Fail((1, 2)));
        let flat = Posterior::new(vec![frac(1, 2); 4]);
        assert!(is_stable(&inst, &Ordering::identity(4), &flat).unwrap().is_pass());
    }

    #[test]
    fn group_stability_witness() {
        let inst = Instance::teams(&[6], &["0.5"], &["0", "1", "3", "6"], Awareness::SelfAgnostic).unwrap();
        let post = Posterior::new(vec![q(1), q(1), q(1), q(0), q(0), q(0)]);
        let teams = vec![vec![0, 1, 3], vec![2, 4, 5]];
        let v = is_group_stable(&inst, &teams, &post).unwrap();
        assert_eq!(v, Verdict::Fail(GroupWitness { team: 0, other_team: 1, leaving: 3, joining: 2 }));
        let flat = Posterior::new(vec![frac(1, 2); 6]);
        assert!(is_group_stable(&inst, &teams, &flat).unwrap().is_pass());
        assert!(is_group_stable(&inst, &[vec![0, 1, 2], vec![2, 3, 4]], &flat).is_err());
    }

    #[test]
    fn baseline_examples() {
        let inst = k1(4, "0.5", ["0", "1", "1"]);
        assert_eq!(baseline_matching(&inst).agnostic[0], frac(3, 4));
        assert_eq!(baseline_matching(&inst).aware[0][1], q(1));
        let u = Instance::pairs(&[4], &["0.5"], ["0", "1", "1.0000001"], Awareness::SelfAgnostic).unwrap();
        let b = baseline_matching(&u);
        // p u11 + (1−p) u00 + p(1−p)(2u10 − u11 − u00)
        let p = frac(1, 2);
        let (u00, u10, u11) = (q(0), q(1), parse_rational("1.0000001").unwrap());
        let expect = &p * &u11 + (q(1) - &p) * &u00 + &p * (q(1) - &p) * (q(2) * &u10 - &u11 - &u00);
        assert_eq!(b.agnostic[0], expect);
        assert_eq!(b.aware[0][1], &u10 + &p * (&u11 - &u10));
        assert_eq!(b.aware[0][0], &u00 + &p * (&u10 - &u00));
        let inst2 = Instance::pairs(&[2, 2], &["0.9", "0.1"], ["0", "1", "2"], Awareness::SelfAgnostic).unwrap();
        assert_eq!(baseline_matching(&inst2).teams, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn scheme_json_round_trip() {
        let (_, scheme, _) = two_profile_scheme();
        let back = Scheme::from_json(&scheme.to_json().unwrap()).unwrap();
        assert_eq!(back, scheme);
    }

    #[test]
    fn total_expectation_holds_for_no_info() {
        let inst = Instance::pairs(&[2, 2], &["0.8", "0.3"], ["0", "1", "3"], Awareness::SelfAgnostic).unwrap();
        let avg = averaged_posteriors(&inst, &no_info(&inst)).unwrap();
        assert_eq!(avg, vec![frac(4, 5), frac(4, 5), frac(3, 10), frac(3, 10)]);
    }

    #[test]
    fn no_info_is_weakly_pareto() {
        let inst = k1(4, "0.4", ["0", "1", "1.5"]);
        assert!(is_pareto_improving(&inst, &no_info(&inst)).unwrap().is_pass());
        let aware = inst.with_awareness(Awareness::SelfAware);
        assert!(is_pareto_improving(&aware, &no_info(&aware)).unwrap().is_pass());
    }
}
