//! Constructive signaling schemes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num::{One, Zero};

use crate::beliefs::{baseline_matching, Scheme};
use crate::canon::{CanonicalScheme, Pattern};
use crate::error::{Error, Result};
use crate::model::{count_vectors, enumerate_canonical, enumerate_profiles, expected, Instance, Ordering, TypeProfile};
use crate::numeric::{binomial, q_from_biguint, q_from_usize, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    NoInfo,
    FullInfoTruthfulFair,
    FirstBest,
    ClusterFirstBest,
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noinfo" => Ok(Self::NoInfo),
            "fullinfo" => Ok(Self::FullInfoTruthfulFair),
            "fb" => Ok(Self::FirstBest),
            "fbc" => Ok(Self::ClusterFirstBest),
            other => {
                Err(Error::Config(format!("unknown scheme kind `{other}` (expected noinfo, fullinfo, fb or fbc)")))
            }
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoInfo => "noinfo",
            Self::FullInfoTruthfulFair => "fullinfo",
            Self::FirstBest => "fb",
            Self::ClusterFirstBest => "fbc",
        })
    }
}

impl SchemeKind {
    /// Builds the explicit scheme, choosing the team-size variant when `a > 2`.
    pub fn build(self, inst: &Instance, cap: u128) -> Result<Scheme> {
        match self {
            Self::NoInfo => build_no_info(inst, cap),
            Self::FullInfoTruthfulFair if inst.team_size() == 2 => build_full_info(inst, cap),
            Self::FullInfoTruthfulFair => build_full_info_teams(inst)?.expand(inst, cap),
            Self::FirstBest if inst.team_size() == 2 => build_first_best(inst)?.expand(inst, cap),
            Self::ClusterFirstBest if inst.team_size() == 2 => build_cluster_first_best(inst)?.expand(inst, cap),
            Self::FirstBest => {
                require_single_cluster(inst)?;
                build_cluster_first_best_teams(inst)?.expand(inst, cap)
            }
            Self::ClusterFirstBest => build_cluster_first_best_teams(inst)?.expand(inst, cap),
        }
    }

    /// The symmetry-reduced form, when the construction has one.
    pub fn build_canonical(self, inst: &Instance) -> Result<Option<CanonicalScheme>> {
        Ok(match self {
            Self::NoInfo => None,
            Self::FullInfoTruthfulFair if inst.team_size() == 2 => None,
            Self::FullInfoTruthfulFair => Some(build_full_info_teams(inst)?),
            Self::FirstBest if inst.team_size() == 2 => Some(build_first_best(inst)?),
            Self::ClusterFirstBest if inst.team_size() == 2 => Some(build_cluster_first_best(inst)?),
            Self::FirstBest => {
                require_single_cluster(inst)?;
                Some(build_cluster_first_best_teams(inst)?)
            }
            Self::ClusterFirstBest => Some(build_cluster_first_best_teams(inst)?),
        })
    }
}

fn require_single_cluster(inst: &Instance) -> Result<()> {
    if inst.k() != 1 {
        return Err(Error::Unsupported(format!("First Best needs a single cluster, got {}", inst.k())));
    }
    Ok(())
}

fn require_pairs(inst: &Instance) -> Result<()> {
    if inst.team_size() != 2 {
        return Err(Error::Config(format!("this construction needs pairs, got team size {}", inst.team_size())));
    }
    Ok(())
}

/// One fixed ordering, clusters by decreasing prior, announced for every profile.
pub fn build_no_info(inst: &Instance, cap: u128) -> Result<Scheme> {
    let sigma = baseline_matching(inst).ordering;
    let support = enumerate_profiles(inst, cap)?.map(|(theta, _)| (theta, vec![(sigma.clone(), Q::one())])).collect();
    Scheme::new(inst.n(), support)
}

/// The truthful-fair full-information scheme for pairs.
///
/// Starting from the baseline pairs, every 1-1 and 0-0 pair is kept, one
/// mixed pair is drawn uniformly to stay together, and the remaining mixed
/// pairs are split into 1-1 and 0-0 pairs. The announcement lists kept 1-1
/// pairs, regrouped ones, the kept mixed pair (its 1 first), regrouped zeros
/// and kept 0-0 pairs.
pub fn build_full_info(inst: &Instance, cap: u128) -> Result<Scheme> {
    require_pairs(inst)?;
    let base = baseline_matching(inst);
    let support = enumerate_profiles(inst, cap)?
        .map(|(theta, _)| {
            let orderings = full_info_orderings(&base.teams, &theta);
            (theta, orderings)
        })
        .collect();
    Scheme::new(inst.n(), support)
}

fn full_info_orderings(pairs: &[Vec<usize>], theta: &TypeProfile) -> Vec<(Ordering, Q)> {
    let mut ones_pairs = Vec::new();
    let mut zero_pairs = Vec::new();
    let mut mixed = Vec::new();
    for p in pairs {
        match (theta.get(p[0]), theta.get(p[1])) {
            (1, 1) => ones_pairs.extend_from_slice(p),
            (0, 0) => zero_pairs.extend_from_slice(p),
            (1, 0) => mixed.push((p[0], p[1])),
            _ => mixed.push((p[1], p[0])),
        }
    }
    if mixed.is_empty() {
        let slots = ones_pairs.into_iter().chain(zero_pairs).collect();
        return vec![(Ordering::new(slots).expect("pairs partition the agents"), Q::one())];
    }
    let share = Q::one() / q_from_usize(mixed.len());
    (0..mixed.len())
        .map(|kept| {
            let (one, zero) = mixed[kept];
            let others = mixed.iter().enumerate().filter(|&(i, _)| i != kept);
            let mut slots = ones_pairs.clone();
            slots.extend(others.clone().map(|(_, m)| m.0));
            slots.extend([one, zero]);
            slots.extend(others.map(|(_, m)| m.1));
            slots.extend_from_slice(&zero_pairs);
            (Ordering::new(slots).expect("pairs partition the agents"), share.clone())
        })
        .collect()
}

/// Type sequences of the single-cluster First Best construction, each with
/// its weight.
fn first_best_patterns(n: usize, h: usize) -> Vec<(Vec<u8>, Q)> {
    let l = n - h;
    let alternate = |lead: u8, pairs: usize| -> Vec<u8> { (0..pairs).flat_map(|_| [lead, 1 - lead]).collect() };
    if h == 0 || h == n || h == 1 || h + 1 == n {
        let seq = (0..n).map(|s| u8::from(s < h)).collect();
        return vec![(seq, Q::one())];
    }
    let half = Q::new(1.into(), 2.into());
    [1u8, 0]
        .into_iter()
        .map(|lead| {
            let seq: Vec<u8> = if h >= l {
                std::iter::repeat_n(1, h - l).chain(alternate(lead, l)).collect()
            } else {
                alternate(lead, h).into_iter().chain(std::iter::repeat_n(0, l - h)).collect()
            };
            (seq, half.clone())
        })
        .collect()
}

/// Combines per-cluster weighted blocks, clusters by decreasing prior.
fn concatenate_clusters(
    inst: &Instance,
    per_cluster: impl Fn(usize, usize) -> Vec<(Vec<u8>, Q)>,
) -> Result<CanonicalScheme> {
    let order = inst.clusters_by_prior();
    let sizes = inst.sizes();
    let mut entries = BTreeMap::new();
    for hk in count_vectors(&sizes) {
        let mut combos: Vec<(Vec<u8>, Vec<u8>, Q)> = vec![(Vec::new(), Vec::new(), Q::one())];
        for &k in &order {
            let blocks = per_cluster(sizes[k], hk[k]);
            combos = combos
                .into_iter()
                .flat_map(|(labels, types, w)| {
                    blocks.iter().map(move |(b, bw)| {
                        let mut l = labels.clone();
                        l.extend(std::iter::repeat_n(k as u8, b.len()));
                        let mut t = types.clone();
                        t.extend_from_slice(b);
                        (l, t, &w * bw)
                    })
                })
                .collect();
        }
        let list = combos.into_iter().map(|(l, t, w)| Ok((Pattern::new(l, t)?, w))).collect::<Result<Vec<_>>>()?;
        entries.insert(hk, list);
    }
    CanonicalScheme::new(inst, entries)
}

/// First Best for a single cluster: the excess type front-loaded (ones) or
/// back-loaded (zeros), the rest alternating, mixed evenly with the mirror
/// alternation so every class is paired with its complement.
pub fn build_first_best(inst: &Instance) -> Result<CanonicalScheme> {
    require_single_cluster(inst)?;
    build_cluster_first_best(inst)
}

/// First Best applied inside each cluster, clusters by decreasing prior.
pub fn build_cluster_first_best(inst: &Instance) -> Result<CanonicalScheme> {
    require_pairs(inst)?;
    concatenate_clusters(inst, first_best_patterns)
}

/// Truthful ordering for teams: ones before zeros, clusters by decreasing
/// prior inside each group, ties broken uniformly within clusters.
pub fn build_full_info_teams(inst: &Instance) -> Result<CanonicalScheme> {
    let order = inst.clusters_by_prior();
    let sizes = inst.sizes();
    let entries = count_vectors(&sizes)
        .into_iter()
        .map(|hk| {
            let mut labels = Vec::with_capacity(inst.n());
            let mut types = Vec::with_capacity(inst.n());
            for (t, count) in [(1u8, &hk), (0u8, &sizes.iter().zip(&hk).map(|(n, h)| n - h).collect::<Vec<_>>())] {
                for &k in &order {
                    labels.extend(std::iter::repeat_n(k as u8, count[k]));
                    types.extend(std::iter::repeat_n(t, count[k]));
                }
            }
            Ok((hk, vec![(Pattern::new(labels, types)?, Q::one())]))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    CanonicalScheme::new(inst, entries)
}

/// Team compositions `h_t` as equal as possible, largest first.
pub fn balanced_apportionment(h: usize, teams: usize) -> Vec<usize> {
    let (q, r) = (h / teams, h % teams);
    (0..teams).map(|t| q + usize::from(t < r)).collect()
}

/// Type-1 members packed into as few teams as possible, largest first.
pub fn concentrated_apportionment(h: usize, teams: usize, a: usize) -> Vec<usize> {
    (0..teams).map(|t| h.saturating_sub(t * a).min(a)).collect()
}

/// Team compositions maximizing `Σ_t u(h_t)`: concentrated when `u` has
/// nondecreasing increments with at least one strict increase, balanced
/// otherwise.
pub fn team_compositions(u: &[Q], h: usize, teams: usize) -> Vec<usize> {
    let steps: Vec<Q> = u.windows(2).map(|w| &w[1] - &w[0]).collect();
    let convex = steps.windows(2).all(|d| d[0] <= d[1]) && steps.windows(2).any(|d| d[0] < d[1]);
    if convex {
        concentrated_apportionment(h, teams, u.len() - 1)
    } else {
        balanced_apportionment(h, teams)
    }
}

/// Cluster First Best for teams: welfare-maximizing compositions inside each
/// cluster, teams listed with decreasing type-1 count. Within-team placements of a
/// given composition are uniform and shared by all teams of that composition.
pub fn build_cluster_first_best_teams(inst: &Instance) -> Result<CanonicalScheme> {
    let a = inst.team_size();
    let u = inst.utility().values();
    concatenate_clusters(inst, |nk, h| {
        let comps = team_compositions(u, h, nk / a);
        let mut distinct: Vec<usize> = comps.clone();
        distinct.dedup();
        // Every combination of one placement per distinct composition.
        let mut choices: Vec<(BTreeMap<usize, Vec<u8>>, Q)> = vec![(BTreeMap::new(), Q::one())];
        for &j in &distinct {
            let placements = placements(a, j);
            let w = Q::one() / q_from_biguint(&binomial(a, j));
            choices = choices
                .into_iter()
                .flat_map(|(map, cw)| {
                    let w = &w;
                    placements.iter().map(move |pl| {
                        let mut m = map.clone();
                        m.insert(j, pl.clone());
                        (m, &cw * w)
                    })
                })
                .collect();
        }
        choices.into_iter().map(|(map, w)| (comps.iter().flat_map(|j| map[j].clone()).collect(), w)).collect()
    })
}

/// All 0/1 vectors of length `a` with `j` ones, in decreasing lexicographic order.
fn placements(a: usize, j: usize) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = (0..1u32 << a)
        .filter(|b| b.count_ones() as usize == j)
        .map(|b| (0..a).map(|i| ((b >> (a - 1 - i)) & 1) as u8).collect())
        .collect();
    out.sort_unstable_by(|x, y| y.cmp(x));
    out
}

/// Per-agent expected utility under First Best in a single cluster:
/// `p·u11 + (1−p)·u00 + (2u10 − u11 − u00)·E[min(ℓ, h)]/n`.
pub fn first_best_agent_utility(inst: &Instance, cap: u128) -> Result<Q> {
    require_single_cluster(inst)?;
    require_pairs(inst)?;
    let n = inst.n();
    let u = inst.utility().values();
    let p = inst.prior(0);
    let classes = enumerate_canonical(inst, cap)?;
    let e_min = expected(&classes, |c| q_from_usize(c.hk[0].min(n - c.hk[0])));
    Ok(p * &u[2] + (Q::one() - p) * &u[0] + (q_from_usize(2) * &u[1] - &u[2] - &u[0]) * e_min / q_from_usize(n))
}

/// `E[min(ℓ, h)] / n` for a single cluster of size `n` and prior `p`.
pub fn mean_min_share(n: usize, p: &Q) -> Q {
    let total: Q = (0..=n)
        .map(|h| {
            q_from_biguint(&binomial(n, h))
                * crate::numeric::pow(p, h)
                * crate::numeric::pow(&(Q::one() - p), n - h)
                * q_from_usize(h.min(n - h))
        })
        .sum();
    if n == 0 {
        Q::zero()
    } else {
        total / q_from_usize(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beliefs::{expected_outcome, is_pareto_improving, is_persuasive};
    use crate::model::{fb, fb_c, match_counts, Awareness};
    use crate::numeric::{frac, parse_rational, q};

    fn pair(sizes: &[usize], p: &[&str], u: [&str; 3]) -> Instance {
        Instance::pairs(sizes, p, u, Awareness::SelfAgnostic).unwrap()
    }

    #[test]
    fn first_best_attains_fb_on_every_profile() {
        let inst = pair(&[6], &["0.4"], ["0", "1", "1.5"]);
        let s = SchemeKind::FirstBest.build(&inst, 1 << 20).unwrap();
        for (theta, entries) in s.support() {
            for (sigma, _) in entries {
                assert_eq!(match_counts(sigma, theta, 2).unwrap().m00(), fb(theta).unwrap());
            }
        }
        assert!(is_persuasive(&inst, &s).unwrap().is_pass());
        assert!(is_pareto_improving(&inst, &s).unwrap().is_pass());
    }

    #[test]
    fn cluster_first_best_attains_fb_c() {
        let inst = pair(&[4, 2], &["0.7", "0.2"], ["0", "1", "1.5"]);
        let s = SchemeKind::ClusterFirstBest.build(&inst, 1 << 20).unwrap();
        for (theta, entries) in s.support() {
            for (sigma, _) in entries {
                assert_eq!(match_counts(sigma, theta, 2).unwrap().m00(), fb_c(&inst, theta).unwrap());
            }
        }
        assert!(is_persuasive(&inst, &s).unwrap().is_pass());
    }

    #[test]
    fn full_info_recipe_examples() {
        let inst = pair(&[4], &["0.5"], ["0", "1", "3"]);
        let s = build_full_info(&inst, 1 << 10).unwrap();
        let theta: TypeProfile = "1110".parse().unwrap();
        for (sigma, _) in s.orderings_for(&theta).unwrap() {
            let c = match_counts(sigma, &theta, 2).unwrap();
            assert_eq!((c.m11(), c.m10()), (1, 1));
        }
        let mixed: TypeProfile = "1010".parse().unwrap();
        let o = s.orderings_for(&mixed).unwrap();
        assert_eq!(o.len(), 2);
        assert!(o.iter().all(|(sigma, x)| *x == frac(1, 2) && match_counts(sigma, &mixed, 2).unwrap().m11() == 1));
        assert!(is_persuasive(&inst, &s).unwrap().is_pass());
    }

    #[test]
    fn first_best_utility_formula_matches_enumeration() {
        let inst = pair(&[4], &["0.5"], ["0", "1", "1"]);
        let s = SchemeKind::FirstBest.build(&inst, 1 << 10).unwrap();
        let utils = crate::beliefs::agent_utilities(&inst, &s).unwrap();
        let f = first_best_agent_utility(&inst, 1 << 10).unwrap();
        assert!(utils.iter().all(|x| *x == f));
        assert_eq!(mean_min_share(2, &frac(1, 3)), frac(2, 9));
    }

    #[test]
    fn team_constructions() {
        assert_eq!(balanced_apportionment(4, 2), vec![2, 2]);
        assert_eq!(balanced_apportionment(5, 3), vec![2, 2, 1]);
        assert_eq!(concentrated_apportionment(5, 3, 3), vec![3, 2, 0]);
        assert_eq!(placements(3, 1), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let inst = Instance::teams(&[6], &["0.5"], &["0", "1", "3", "6"], Awareness::SelfAgnostic).unwrap();
        let s = build_full_info_teams(&inst).unwrap().expand(&inst, 1 << 10).unwrap();
        let theta: TypeProfile = "111000".parse().unwrap();
        for (sigma, _) in s.orderings_for(&theta).unwrap() {
            let c = match_counts(sigma, &theta, 3).unwrap();
            assert_eq!((c.m(3), c.m(0)), (1, 1));
        }
        let (_, w) = expected_outcome(&inst, &s).unwrap();
        assert!(w > q(0));
    }

    /// Every multiset of compositions with `h` ones over `teams` teams of size `a`.
    fn all_compositions(h: usize, teams: usize, a: usize, max: usize) -> Vec<Vec<usize>> {
        if teams == 0 {
            return if h == 0 { vec![vec![]] } else { vec![] };
        }
        (0..=max.min(h).min(a))
            .rev()
            .flat_map(|j| {
                all_compositions(h - j, teams - 1, a, j).into_iter().map(move |mut rest| {
                    rest.insert(0, j);
                    rest
                })
            })
            .collect()
    }

    #[test]
    fn team_compositions_maximize_welfare() {
        let shapes: [&[&str]; 4] =
            [&["0", "2", "3", "3.5"], &["0", "1", "3", "6"], &["0", "1", "2", "3"], &["1", "2", "4", "5", "9"]];
        for u in shapes {
            let u: Vec<Q> = u.iter().map(|s| parse_rational(s).unwrap()).collect();
            let a = u.len() - 1;
            for teams in 1..=4 {
                for h in 0..=teams * a {
                    let total = |c: &[usize]| c.iter().map(|&j| u[j].clone()).sum::<Q>();
                    let best = all_compositions(h, teams, a, a).iter().map(|c| total(c)).max().unwrap();
                    let chosen = team_compositions(&u, h, teams);
                    assert_eq!(chosen.iter().sum::<usize>(), h);
                    let convex_or_concave = u.windows(3).all(|w| &w[2] - &w[1] >= &w[1] - &w[0])
                        || u.windows(3).all(|w| &w[2] - &w[1] <= &w[1] - &w[0]);
                    if convex_or_concave {
                        assert_eq!(total(&chosen), best, "{u:?} h={h} teams={teams}");
                    }
                }
            }
        }
    }
}
