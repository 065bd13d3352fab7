//! Property tests for the model, belief, scheme, program and experiment
//! invariants.

use std::collections::BTreeMap;

use num::{One, Zero};
use proptest::prelude::*;

use teamform::beliefs::{
    agent_utilities, averaged_posteriors, baseline_matching, is_pareto_improving, is_persuasive, match_value,
    posterior_expected_types, Conditioning, Scheme, SignalTable,
};
use teamform::exec::Exec;
use teamform::experiments::{monte_carlo, regret_experiment, EpsChoice, RegretOptions, TypicalSet};
use teamform::lp::{build_dual_lp, build_relaxed_lp, dual_feasible, dual_objective, solve_program, SolveOptions};
use teamform::model::{
    classify_convexity, counts, enumerate_profiles, fb, fb_c, match_counts, welfare, Awareness, Convexity, Instance,
    Ordering, PairUtility, TypeProfile, Utility,
};
use teamform::numeric::{fmt_q, q_from_usize, Q};
use teamform::schemes::{build_first_best, build_full_info, first_best_agent_utility, SchemeKind};

fn rat(n: i64, d: i64) -> Q {
    Q::new(n.into(), d.into())
}

fn prior_label(p: i64) -> String {
    format!("{}", p as f64 / 10.0)
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

fn sigma_theta(max_half: usize) -> impl Strategy<Value = (Vec<usize>, u64)> {
    (1..=max_half).prop_flat_map(|h| {
        let n = 2 * h;
        (permutation(n), 0..1u64 << n)
    })
}

fn pair_utility() -> impl Strategy<Value = [Q; 3]> {
    (1i64..6, 0i64..8, 1i64..4).prop_map(|(u10, gap, den)| [Q::zero(), rat(u10, 1), rat(u10 * den + gap, den)])
}

fn instance(sizes: &[usize], priors: &[i64], u: [&str; 3], aw: Awareness) -> Instance {
    let labels: Vec<String> = priors.iter().map(|&p| prior_label(p)).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    Instance::pairs(sizes, &refs, u, aw).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, n - 1);
            out.push(v);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn count_identities((perm, bits) in sigma_theta(4)) {
        let n = perm.len();
        let sigma = Ordering::new(perm).unwrap();
        let theta = TypeProfile::from_bits(bits, n);
        let m = match_counts(&sigma, &theta, 2).unwrap();
        let h = theta.ones() as i64;
        let l = n as i64 - h;
        prop_assert_eq!(m.m10() as i64, h - 2 * m.m11() as i64);
        prop_assert_eq!(2 * m.m00() as i64, l - h + 2 * m.m11() as i64);
    }

    #[test]
    fn welfare_matches_pairwise_sum((perm, bits) in sigma_theta(4), u in pair_utility()) {
        let n = perm.len();
        let sigma = Ordering::new(perm).unwrap();
        let theta = TypeProfile::from_bits(bits, n);
        let utility = Utility::pair(u[0].clone(), u[1].clone(), u[2].clone()).unwrap();
        let w = welfare(&match_counts(&sigma, &theta, 2).unwrap(), &utility).unwrap();
        // Each agent collects u(θ_i, θ_partner).
        let pos = sigma.positions();
        let direct: Q = (0..n)
            .map(|i| {
                let partner = sigma.agent_at(pos[i] ^ 1);
                u[(theta.get(i) + theta.get(partner)) as usize].clone()
            })
            .sum();
        prop_assert_eq!(w, direct);
    }

    #[test]
    fn convexity_matches_welfare_slope(u in pair_utility(), h in 0usize..6, extra in 0usize..3) {
        let l = h + 2 * extra;
        let utility = Utility::pair(u[0].clone(), u[1].clone(), u[2].clone()).unwrap();
        let class = classify_convexity(&utility).unwrap();
        // Welfare of the count vector with `m11` 1-1 pairs, h and ℓ fixed.
        let w = |m11: usize| {
            let m10 = h - 2 * m11;
            let m00 = (l - h) / 2 + m11;
            q_from_usize(2) * (q_from_usize(m11) * &u[2] + q_from_usize(m10) * &u[1] + q_from_usize(m00) * &u[0])
        };
        let steps: Vec<Q> = (0..h / 2).map(|m| w(m + 1) - w(m)).collect();
        match class {
            Convexity::Convex => prop_assert!(steps.iter().all(|d| *d >= Q::zero())),
            Convexity::StrictlyConcave => prop_assert!(steps.iter().all(|d| *d < Q::zero())),
        }
    }

    #[test]
    fn match_value_is_monotone(u in pair_utility(), p0 in 0i64..=10, p1 in 0i64..=10, q in 0i64..10) {
        let pu = PairUtility::new(u[0].clone(), u[1].clone(), u[2].clone()).unwrap();
        let (p0, p1) = (rat(p0, 10), rat(p1, 10));
        let lo = match_value(&pu, &rat(q, 10), &p0, &p1);
        let hi = match_value(&pu, &rat(q + 1, 10), &p0, &p1);
        prop_assert!(hi >= lo);
        let slope = &p1 * (&u[2] - &u[1]) + (Q::one() - &p0) * (&u[1] - &u[0]);
        prop_assert_eq!((hi - lo) * rat(10, 1), slope);
    }
}

#[test]
fn first_best_is_brute_force_minimum() {
    for n in [2usize, 4, 6] {
        let perms = permutations(n);
        for bits in 0..1u64 << n {
            let theta = TypeProfile::from_bits(bits, n);
            let best = perms
                .iter()
                .map(|p| match_counts(&Ordering::new(p.clone()).unwrap(), &theta, 2).unwrap().m00())
                .min()
                .unwrap();
            assert_eq!(fb(&theta).unwrap(), best, "θ = {theta:?}");
        }
    }
}

#[test]
fn cluster_first_best_is_first_best_on_same_side_priors() {
    // Both priors on the same side of 1/2, typical counts on that side too.
    for priors in [[9, 7], [3, 1]] {
        let inst = instance(&[6, 6], &priors, ["0", "1", "3/2"], Awareness::SelfAgnostic);
        let set = TypicalSet::uniform(&inst, rat(1, 5)).unwrap();
        let mut typical = 0;
        for h1 in 0..=6usize {
            for h2 in 0..=6usize {
                if !set.contains_counts(&inst, &[h1, h2]) {
                    continue;
                }
                typical += 1;
                let bits: u64 = (0..h1).map(|i| 1u64 << i).sum::<u64>() | (0..h2).map(|i| 1u64 << (6 + i)).sum::<u64>();
                let theta = TypeProfile::from_bits(bits, 12);
                assert_eq!(fb_c(&inst, &theta).unwrap(), fb(&theta).unwrap(), "counts ({h1}, {h2})");
            }
        }
        assert!(typical > 0);
    }
}

#[test]
fn profile_probabilities_sum_to_one() {
    for (sizes, priors) in [(vec![6], vec![3]), (vec![2, 4], vec![8, 1]), (vec![2, 2, 4], vec![9, 5, 2])] {
        let inst = instance(&sizes, &priors, ["0", "1", "2"], Awareness::SelfAgnostic);
        let total: Q = enumerate_profiles(&inst, 1 << 20).unwrap().map(|(_, p)| p).sum();
        assert_eq!(total, Q::one());
    }
}

fn random_scheme(seed: u64, n: usize) -> Scheme {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<Ordering> = (0..3)
        .map(|_| {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(&mut rng);
            Ordering::new(v).unwrap()
        })
        .collect();
    let support: BTreeMap<TypeProfile, Vec<(Ordering, Q)>> = (0..1u64 << n)
        .map(|b| {
            let w: Vec<i64> = (0..pool.len()).map(|_| rng.gen_range(0..3)).collect();
            let total: i64 = w.iter().sum::<i64>().max(1);
            let mut list: Vec<(Ordering, Q)> =
                pool.iter().zip(&w).filter(|(_, &w)| w > 0).map(|(o, &w)| (o.clone(), rat(w, total))).collect();
            if list.is_empty() {
                list.push((pool[0].clone(), Q::one()));
            }
            (TypeProfile::from_bits(b, n), list)
        })
        .collect();
    Scheme::new(n, support).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn posteriors_average_to_priors(seed in any::<u64>(), two in any::<bool>(), p in 1i64..=4, aware in any::<bool>()) {
        let (sizes, priors) = if two { (vec![2, 2], vec![10 - p, p]) } else { (vec![4], vec![p * 2]) };
        let aw = if aware { Awareness::SelfAware } else { Awareness::SelfAgnostic };
        let inst = instance(&sizes, &priors, ["0", "1", "3/2"], aw);
        let scheme = random_scheme(seed, inst.n());
        let avg = averaged_posteriors(&inst, &scheme).unwrap();
        // Independent recomputation from the signal table.
        let table = SignalTable::build(&inst, &scheme).unwrap();
        for (i, avg_i) in avg.iter().enumerate() {
            let by_table: Q = table
                .signals()
                .iter()
                .map(|s| {
                    let post = posterior_expected_types(&inst, &scheme, &s.ordering, Conditioning::Public).unwrap();
                    &s.mass * post.of(i)
                })
                .sum();
            prop_assert_eq!(&by_table, inst.prior(inst.cluster_of(i)));
            prop_assert_eq!(avg_i, inst.prior(inst.cluster_of(i)));
        }
    }
}

#[test]
fn first_best_utility_formula_and_counts() {
    for n in [2usize, 4, 6, 8] {
        for p in [2i64, 5, 7] {
            let inst = instance(&[n], &[p], ["0", "1", "3/2"], Awareness::SelfAgnostic);
            let canon = build_first_best(&inst).unwrap();
            for (hk, list) in canon.entries() {
                let h = hk[0];
                for (pattern, _) in list {
                    assert_eq!(pattern.match_counts(2).m00(), (n - h).saturating_sub(h) / 2);
                }
            }
            let formula = first_best_agent_utility(&inst, 1 << 20).unwrap();
            assert_eq!(canon.cluster_utilities(&inst)[0], formula);
            if n <= 6 {
                let explicit = canon.expand(&inst, 1 << 20).unwrap();
                assert!(agent_utilities(&inst, &explicit).unwrap().iter().all(|u| *u == formula));
            }
        }
    }
}

#[test]
fn full_information_mixed_pair_is_symmetric() {
    for (sizes, priors) in [(vec![4], vec![5]), (vec![6], vec![3]), (vec![2, 4], vec![8, 3])] {
        let inst = instance(&sizes, &priors, ["0", "1", "3"], Awareness::SelfAgnostic);
        let scheme = build_full_info(&inst, 1 << 20).unwrap();
        let base = baseline_matching(&inst);
        for team in &base.teams {
            let (i, j) = (team[0], team[1]);
            // P[i, j announced together and of mixed type | θ_i = a, θ_j = b].
            let cond = |a: u8, b: u8| -> Q {
                let mut num = Q::zero();
                let mut den = Q::zero();
                for (theta, orderings) in scheme.support() {
                    if theta.get(i) != a || theta.get(j) != b {
                        continue;
                    }
                    let p = teamform::model::prior_prob(&inst, theta).unwrap();
                    den += &p;
                    for (sigma, x) in orderings {
                        let pos = sigma.positions();
                        if pos[i] ^ 1 == pos[j] {
                            num += &p * x;
                        }
                    }
                }
                num / den
            };
            assert_eq!(cond(1, 0), cond(0, 1), "pair ({i}, {j}) in {sizes:?}");
        }
    }
}

#[test]
fn built_schemes_pass_in_their_regimes() {
    let concave = ["0", "1", "3/2"];
    let convex = ["0", "1", "3"];
    type Case = (Vec<usize>, Vec<i64>, [&'static str; 3], SchemeKind);
    let cases: Vec<Case> = vec![
        (vec![4], vec![5], concave, SchemeKind::FirstBest),
        (vec![6], vec![3], concave, SchemeKind::FirstBest),
        (vec![2, 4], vec![8, 3], concave, SchemeKind::ClusterFirstBest),
        (vec![4], vec![5], convex, SchemeKind::FullInfoTruthfulFair),
        (vec![2, 4], vec![7, 2], convex, SchemeKind::FullInfoTruthfulFair),
        (vec![2, 4], vec![7, 2], concave, SchemeKind::NoInfo),
    ];
    for (sizes, priors, u, kind) in cases {
        let inst = instance(&sizes, &priors, u, Awareness::SelfAgnostic);
        let scheme = kind.build(&inst, 1 << 20).unwrap();
        assert!(is_persuasive(&inst, &scheme).unwrap().is_pass(), "{kind} {sizes:?}");
        assert!(is_pareto_improving(&inst, &scheme).unwrap().is_pass(), "{kind} {sizes:?}");
    }
}

#[test]
fn strong_duality_on_small_instances() {
    for (sizes, priors) in [(vec![4], vec![5]), (vec![6], vec![3]), (vec![2, 2], vec![8, 3]), (vec![2, 4], vec![7, 2])]
    {
        let inst = instance(&sizes, &priors, ["0", "1", "3/2"], Awareness::SelfAgnostic);
        let primal = solve_program(&inst, &build_relaxed_lp(&inst, 1 << 20).unwrap(), SolveOptions::default()).unwrap();
        let dual =
            solve_program(&inst, &build_dual_lp(&inst, 1 << 20, None).unwrap(), SolveOptions::default()).unwrap();
        assert_eq!(primal.value, dual.value, "{sizes:?}: {} vs {}", fmt_q(&primal.value), fmt_q(&dual.value));
    }
    // At n = 8 the dual program is too tall for a dense basis; the primal's
    // multipliers serve as the dual point instead.
    let inst = instance(&[4, 4], &[8, 2], ["0", "1", "3/2"], Awareness::SelfAgnostic);
    let prog = build_relaxed_lp(&inst, 1 << 20).unwrap();
    let primal = solve_program(&inst, &prog, SolveOptions::default()).unwrap();
    assert!(dual_feasible(&prog.model, &primal.lp.duals));
    assert_eq!(dual_objective(&prog.model, &primal.lp.duals), primal.value);
    assert!(matches!(
        solve_program(&inst, &build_dual_lp(&inst, 1 << 20, None).unwrap(), SolveOptions::default()),
        Err(teamform::Error::TooLarge { .. })
    ));
}

#[test]
fn certificate_inequality_on_typical_profiles() {
    // m00(σ(θ)) − Σ_{i∈I_σ}(σ_i(θ) − σ_{i+1}(θ)) ≥ (ℓ₂ − h₂)/2 for every
    // typical θ and every ordering.
    for m in [2usize, 4] {
        let inst = instance(&[m, m], &[8, 2], ["0", "1", "3/2"], Awareness::SelfAgnostic);
        let set = TypicalSet::uniform(&inst, rat(3, 10)).unwrap();
        let n = 2 * m;
        for perm in permutations(n) {
            let sigma = Ordering::new(perm).unwrap();
            let y = teamform::lp::construct_index_set(&inst, &sigma).unwrap();
            for bits in 0..1u64 << n {
                let theta = TypeProfile::from_bits(bits, n);
                let c = counts(&inst, &theta).unwrap();
                if !set.contains_counts(&inst, &c.hk) {
                    continue;
                }
                let seq = sigma.apply(&theta);
                let shift: i64 = (0..n - 1).map(|i| y[i] as i64 * (seq[i] as i64 - seq[i + 1] as i64)).sum();
                let m00 = match_counts(&sigma, &theta, 2).unwrap().m00() as i64;
                assert!(2 * (m00 - shift) >= c.lk[1] as i64 - c.hk[1] as i64);
            }
        }
    }
}

#[test]
fn regret_report_is_deterministic_and_sandwiched() {
    let inst = instance(&[4, 4], &[8, 2], ["0", "1", "3/2"], Awareness::SelfAgnostic);
    let opts = RegretOptions { eps: EpsChoice::Uniform(rat(3, 10)), mc_samples: 5000, ..Default::default() };
    let a = regret_experiment(&inst, &opts).unwrap();
    let b = regret_experiment(&inst, &RegretOptions { exec: Exec::Sequential, ..opts.clone() }).unwrap();
    assert_eq!(a, b);
    let lb = a.get("dual_lb").unwrap().value;
    let opt = a.get("lp_opt").unwrap().value;
    let ub = a.get("fbc").unwrap().value;
    assert!(lb <= opt && opt <= ub);
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("n1,n2,p1,p2,utility,awareness,scheme,value,stderr,seed"));

    let big = instance(&[200, 200], &[9, 1], ["0", "1", "3/2"], Awareness::SelfAgnostic);
    let opts = RegretOptions { mc_samples: 20_000, ..Default::default() };
    assert_eq!(regret_experiment(&big, &opts).unwrap(), regret_experiment(&big, &opts).unwrap());
}

#[test]
fn off_typical_mass_respects_tail_bound() {
    let inst = instance(&[100, 100], &[8, 2], ["0", "1", "3/2"], Awareness::SelfAgnostic);
    let set = TypicalSet::log_schedule(&inst).unwrap();
    let bound = set.tail_bound(&inst);
    assert_eq!(bound.exact, Some(rat(2, 10_000)));
    let est = monte_carlo(&inst, 100_000, 5, Exec::default(), |h| f64::from(u8::from(!set.contains_counts(&inst, h))))
        .unwrap();
    assert!(est.mean <= bound.approx + 3.0 * est.stderr);
}
