//! Typical sets, concentration bounds, Monte Carlo estimation and the regret
//! and impossibility experiments.

use num::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::beliefs::expected_outcome;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lp::{
    build_relaxed_lp, build_self_aware_lp, solve_program, verify_dual_certificate, ParetoOptions, SolveOptions,
};
use crate::model::{
    classify_convexity, count_vectors, enumerate_canonical, fb_c_from_counts, fb_from_counts, Awareness, Convexity,
    Instance, TeamUtility,
};
use crate::numeric::{fmt_q, pow, q, q_from_usize, to_f64, Q};
use crate::schemes::build_no_info;

/// Per-cluster tolerance of the typical set.
#[derive(Debug, Clone, PartialEq)]
pub enum Tolerance {
    /// Explicit rational `ε_k` per cluster.
    Rational(Vec<Q>),
    /// `ε_k = √(ln n_k / n_k)`.
    LogSchedule,
}

/// Profiles whose per-cluster type-1 counts lie within `ε_k·n_k` of `n_k·p_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypicalSet {
    tolerance: Tolerance,
}

/// `Σ_k exp(−2 ε_k² n_k)`, exact when the schedule makes it rational.
#[derive(Debug, Clone, PartialEq)]
pub struct TailBound {
    pub exact: Option<Q>,
    pub approx: f64,
}

fn distance_to_half(p: &Q) -> Q {
    (p - Q::new(1.into(), 2.into())).abs()
}

impl TypicalSet {
    pub fn rational(inst: &Instance, eps: Vec<Q>) -> Result<Self> {
        if eps.len() != inst.k() {
            return Err(Error::InvalidEpsilon(format!("expected {} tolerances, got {}", inst.k(), eps.len())));
        }
        for (k, e) in eps.iter().enumerate() {
            let room = distance_to_half(inst.prior(k));
            if e.is_negative() || *e > room {
                return Err(Error::InvalidEpsilon(format!(
                    "ε_{k} = {} must lie in [0, |p_{k} − 1/2|] = [0, {}]",
                    fmt_q(e),
                    fmt_q(&room)
                )));
            }
        }
        Ok(Self { tolerance: Tolerance::Rational(eps) })
    }

    /// The same rational tolerance for every cluster.
    pub fn uniform(inst: &Instance, eps: Q) -> Result<Self> {
        Self::rational(inst, vec![eps; inst.k()])
    }

    pub fn log_schedule(inst: &Instance) -> Result<Self> {
        for (k, c) in inst.clusters().iter().enumerate() {
            let e = Self::log_eps(c.size);
            if e > to_f64(&distance_to_half(&c.p)) {
                return Err(Error::InvalidEpsilon(format!(
                    "ε_{k} = √(ln n_k / n_k) = {e:.4} exceeds |p_{k} − 1/2| = {}",
                    fmt_q(&distance_to_half(&c.p))
                )));
            }
        }
        Ok(Self { tolerance: Tolerance::LogSchedule })
    }

    /// Log schedule without the orthant check, for bound arithmetic only.
    pub fn log_schedule_unchecked() -> Self {
        Self { tolerance: Tolerance::LogSchedule }
    }

    fn log_eps(n: usize) -> f64 {
        ((n as f64).ln() / n as f64).sqrt()
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tolerance
    }

    pub fn epsilons(&self, inst: &Instance) -> Vec<f64> {
        match &self.tolerance {
            Tolerance::Rational(e) => e.iter().map(to_f64).collect(),
            Tolerance::LogSchedule => inst.sizes().into_iter().map(Self::log_eps).collect(),
        }
    }

    /// Membership of the class with per-cluster counts `hk`.
    pub fn contains_counts(&self, inst: &Instance, hk: &[usize]) -> bool {
        inst.clusters().iter().zip(hk).enumerate().all(|(k, (c, &h))| {
            let nk = q_from_usize(c.size);
            let dev = (q_from_usize(h) - &nk * &c.p).abs();
            match &self.tolerance {
                Tolerance::Rational(e) => dev <= &e[k] * nk,
                // (h − n p)² ≤ ε² n² = n ln n
                Tolerance::LogSchedule => to_f64(&(&dev * &dev)) <= (c.size as f64) * (c.size as f64).ln(),
            }
        })
    }

    pub fn contains(&self, inst: &Instance, theta: &crate::model::TypeProfile) -> Result<bool> {
        let c = crate::model::counts(inst, theta)?;
        Ok(self.contains_counts(inst, &c.hk))
    }

    pub fn tail_bound(&self, inst: &Instance) -> TailBound {
        match &self.tolerance {
            Tolerance::LogSchedule => {
                let exact: Q = inst.sizes().iter().map(|&n| Q::new(1.into(), (n * n).into())).sum();
                TailBound { approx: to_f64(&exact), exact: Some(exact) }
            }
            Tolerance::Rational(e) => {
                let approx = e.iter().zip(inst.sizes()).map(|(e, n)| (-2.0 * to_f64(e).powi(2) * n as f64).exp()).sum();
                TailBound { exact: None, approx }
            }
        }
    }
}

/// Exact `E[f · 1{pred}]` over count classes.
pub fn expected_value_over_set<F, P>(inst: &Instance, cap: u128, f: F, pred: P) -> Result<Q>
where
    F: Fn(&[usize]) -> Q,
    P: Fn(&[usize]) -> bool,
{
    Ok(enumerate_canonical(inst, cap)?.iter().filter(|c| pred(&c.hk)).map(|c| &c.class_prob * f(&c.hk)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Samples drawn per independently seeded stream.
const CHUNK: u64 = 4096;

/// Monte Carlo estimate of `E[f(h_1..h_K)]`.
///
/// Samples are split into fixed-size chunks; chunk `i` draws from a ChaCha8
/// stream `i` under the root seed and partial sums merge in chunk order, so
/// the result is bit-identical across execution modes.
pub fn monte_carlo<F>(inst: &Instance, samples: u64, seed: u64, exec: Exec, f: F) -> Result<Estimate>
where
    F: Fn(&[usize]) -> f64 + Sync + Send,
{
    if samples < 2 {
        return Err(Error::Config("Monte Carlo needs at least two samples".into()));
    }
    let dists = inst
        .clusters()
        .iter()
        .map(|c| Binomial::new(c.size as u64, to_f64(&c.p)).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let chunks = samples.div_ceil(CHUNK);
    let partial = exec.map_range(chunks as usize, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let len = CHUNK.min(samples - i as u64 * CHUNK);
        let mut hk = vec![0usize; dists.len()];
        let (mut s, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..len {
            for (h, d) in hk.iter_mut().zip(&dists) {
                *h = d.sample(&mut rng) as usize;
            }
            let v = f(&hk);
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = partial.into_iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(Estimate { mean, stderr: (var / n).sqrt(), samples, seed })
}

/// How the experiment's typical set is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsChoice {
    Log,
    Uniform(Q),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretOptions {
    pub eps: EpsChoice,
    /// Cap on reduced LP columns; above it the LP and certificate are skipped.
    pub lp_cap: u128,
    /// Cap on count classes for exact expectations; above it Monte Carlo is used.
    pub exact_cap: u128,
    pub mc_samples: u64,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for RegretOptions {
    fn default() -> Self {
        Self {
            eps: EpsChoice::Log,
            lp_cap: 20_000,
            exact_cap: 5_000,
            mc_samples: 100_000,
            seed: 7,
            exec: Exec::default(),
        }
    }
}

/// One value in a regret report, measured in expected 0-0 matches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub scheme: String,
    pub value: f64,
    pub exact: Option<String>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub sizes: Vec<usize>,
    pub priors: Vec<String>,
    pub utility: Vec<String>,
    pub awareness: String,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub tail_bound: f64,
    pub entries: Vec<ReportEntry>,
}

impl RegretReport {
    pub fn get(&self, scheme: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.scheme == scheme)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with columns `n1..nK, p1..pK, utility, awareness, scheme, value, stderr, seed`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.sizes.len();
        let mut header: Vec<String> = (1..=k).map(|i| format!("n{i}")).collect();
        header.extend((1..=k).map(|i| format!("p{i}")));
        header.extend(["utility", "awareness", "scheme", "value", "stderr", "seed"].map(String::from));
        w.write_record(&header)?;
        for e in &self.entries {
            let mut rec: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
            rec.extend(self.priors.iter().cloned());
            rec.push(self.utility.join(" "));
            rec.push(self.awareness.clone());
            rec.push(e.scheme.clone());
            rec.push(e.exact.clone().unwrap_or_else(|| e.value.to_string()));
            rec.push(e.stderr.map(|s| s.to_string()).unwrap_or_default());
            rec.push(self.seed.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn exact_entry(scheme: &str, v: Q) -> ReportEntry {
    ReportEntry { scheme: scheme.into(), value: to_f64(&v), exact: Some(fmt_q(&v)), stderr: None }
}

fn mc_entry(scheme: &str, e: Estimate) -> ReportEntry {
    ReportEntry { scheme: scheme.into(), value: e.mean, exact: None, stderr: Some(e.stderr) }
}

/// Compares the constructive schemes, the optimal program, and the
/// concentration sandwich on one pair instance.
///
/// Entries, all in expected 0-0 matches: `noinfo`, `fullinfo`, `fb` (the
/// unconstrained per-profile minimum), `fbc`, `hoeffding_ub`, `hoeffding_lb`,
/// and when within caps `lp_opt` and `dual_lb`.
pub fn regret_experiment(inst: &Instance, opts: &RegretOptions) -> Result<RegretReport> {
    if inst.team_size() != 2 {
        return Err(Error::Unsupported("regret experiment is formulated for pairs".into()));
    }
    let sizes = inst.sizes();
    let n = inst.n();
    let set = match &opts.eps {
        EpsChoice::Log => TypicalSet::log_schedule(inst)?,
        EpsChoice::Uniform(e) => TypicalSet::uniform(inst, e.clone())?,
    };
    let tail = set.tail_bound(inst);
    let mut entries = Vec::new();

    let no_info: Q =
        inst.clusters().iter().map(|c| q_from_usize(c.size) / q(2) * pow(&(Q::from_integer(1.into()) - &c.p), 2)).sum();
    entries.push(exact_entry("noinfo", no_info));

    let fb_total = |hk: &[usize]| fb_from_counts(hk.iter().sum(), n - hk.iter().sum::<usize>()).unwrap_or(0);
    let full_info = |hk: &[usize]| (n - hk.iter().sum::<usize>()) / 2;
    let fbc = |hk: &[usize]| fb_c_from_counts(&sizes, hk);
    let classes: u128 = sizes.iter().map(|&s| s as u128 + 1).product();
    let exact = classes <= opts.exact_cap;

    if exact {
        let ev = |f: &dyn Fn(&[usize]) -> usize| {
            expected_value_over_set(inst, opts.exact_cap, |h| q_from_usize(f(h)), |_| true)
        };
        entries.push(exact_entry("fullinfo", ev(&full_info)?));
        entries.push(exact_entry("fb", ev(&fb_total)?));
        entries.push(exact_entry("fbc", ev(&fbc)?));
        let core =
            expected_value_over_set(inst, opts.exact_cap, |h| q_from_usize(fbc(h)), |h| set.contains_counts(inst, h))?;
        let slack = tail.exact.clone().map(|t| t * q_from_usize(n));
        match slack {
            Some(s) => {
                entries.push(exact_entry("hoeffding_ub", &core + &s));
                entries.push(exact_entry("hoeffding_lb", &core - &s));
            }
            None => {
                let c = to_f64(&core);
                let s = n as f64 * tail.approx;
                entries.push(ReportEntry { scheme: "hoeffding_ub".into(), value: c + s, exact: None, stderr: None });
                entries.push(ReportEntry { scheme: "hoeffding_lb".into(), value: c - s, exact: None, stderr: None });
            }
        }
    } else {
        let mc = |f: &(dyn Fn(&[usize]) -> f64 + Sync)| monte_carlo(inst, opts.mc_samples, opts.seed, opts.exec, f);
        entries.push(mc_entry("fullinfo", mc(&|h| full_info(h) as f64)?));
        entries.push(mc_entry("fb", mc(&|h| fb_total(h) as f64)?));
        entries.push(mc_entry("fbc", mc(&|h| fbc(h) as f64)?));
        let core = mc(&|h| if set.contains_counts(inst, h) { fbc(h) as f64 } else { 0.0 })?;
        let s = n as f64 * tail.approx;
        entries.push(ReportEntry {
            scheme: "hoeffding_ub".into(),
            value: core.mean + s,
            exact: None,
            stderr: Some(core.stderr),
        });
        entries.push(ReportEntry {
            scheme: "hoeffding_lb".into(),
            value: core.mean - s,
            exact: None,
            stderr: Some(core.stderr),
        });
    }

    let within_cap = n < 64 && {
        let labels = sizes.iter().try_fold((0usize, 1u128), |(placed, acc), &s| {
            let c = crate::numeric::binomial(placed + s, s);
            u128::try_from(c).ok().and_then(|c| acc.checked_mul(c)).map(|acc| (placed + s, acc))
        });
        labels.and_then(|(_, l)| l.checked_mul(1u128 << n)).is_some_and(|cols| cols <= opts.lp_cap)
    };
    if within_cap && inst.awareness() == Awareness::SelfAgnostic {
        let prog = build_relaxed_lp(inst, opts.lp_cap)?;
        let sol = solve_program(inst, &prog, SolveOptions { exec: opts.exec, warm_start: true })?;
        entries.push(exact_entry("lp_opt", sol.value));
        let report = verify_dual_certificate(inst, &set, opts.lp_cap, opts.exec)?;
        if report.is_feasible() {
            entries.push(exact_entry("dual_lb", report.lower_bound));
        }
    }

    Ok(RegretReport {
        sizes,
        priors: inst.clusters().iter().map(|c| fmt_q(&c.p)).collect(),
        utility: inst.utility().values().iter().map(fmt_q).collect(),
        awareness: match inst.awareness() {
            Awareness::SelfAgnostic => "agnostic".into(),
            Awareness::SelfAware => "aware".into(),
        },
        seed: opts.seed,
        epsilons: set.epsilons(inst),
        tail_bound: tail.approx,
        entries,
    })
}

/// Sandwich width `2n·Σ_k exp(−2ε_k²n_k)` under the log schedule, computed
/// from the exponential form.
pub fn hoeffding_width(sizes: &[usize]) -> f64 {
    let n: usize = sizes.iter().sum();
    2.0 * n as f64
        * sizes
            .iter()
            .map(|&nk| {
                let e2 = (nk as f64).ln() / nk as f64;
                (-2.0 * e2 * nk as f64).exp()
            })
            .sum::<f64>()
}

/// Result of the self-aware impossibility audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpossibilityReport {
    /// `min E[m11]` for strictly concave utility, `max E[m00]` for convex.
    pub objective: String,
    pub lp_value: String,
    pub no_info_value: String,
    pub closed_form: String,
    pub equal: bool,
    /// Program value after removing the Pareto rows of type-0 and of type-1 agents.
    pub without_type0_rows: String,
    pub without_type1_rows: String,
    /// The own type whose Pareto rows alone prevent any improvement.
    pub blocker: Option<u8>,
    /// Pareto rows with nonzero dual at the solver's optimum, as `(cluster, type)`.
    pub binding_rows: Vec<(usize, u8)>,
}

pub fn impossibility_audit(inst: &Instance, cap: u128, exec: Exec) -> Result<ImpossibilityReport> {
    if inst.awareness() != Awareness::SelfAware {
        return Err(Error::Precondition("impossibility audit needs a self-aware instance".into()));
    }
    let convexity = classify_convexity(inst.utility())?;
    let j = if convexity == Convexity::StrictlyConcave { 2 } else { 0 };
    let opts = SolveOptions { exec, warm_start: true };
    let solve_with = |drop_type| -> Result<(Q, Vec<(usize, u8)>)> {
        let prog = build_self_aware_lp(inst, cap, ParetoOptions { drop_type, ..Default::default() })?;
        let sol = solve_program(inst, &prog, opts)?;
        let binding = prog
            .pareto_rows
            .iter()
            .filter(|(_, _, r)| !sol.lp.duals[*r].is_zero())
            .map(|(k, v, _)| (*k, v.unwrap_or(0)))
            .collect();
        Ok((sol.value, binding))
    };
    let (value, binding_rows) = solve_with(None)?;
    let (drop0, _) = solve_with(Some(0))?;
    let (drop1, _) = solve_with(Some(1))?;
    let no_info = {
        let scheme = build_no_info(inst, cap)?;
        expected_outcome(inst, &scheme)?.0[j].clone()
    };
    let closed: Q = inst
        .clusters()
        .iter()
        .map(|c| {
            let p = if j == 2 { c.p.clone() } else { Q::from_integer(1.into()) - &c.p };
            q_from_usize(c.size) * pow(&p, 2) / q(2)
        })
        .sum();
    let improves = |v: &Q| if j == 2 { *v < value } else { *v > value };
    let blocker = match (improves(&drop0), improves(&drop1)) {
        (false, true) => Some(1),
        (true, false) => Some(0),
        _ => None,
    };
    Ok(ImpossibilityReport {
        objective: if j == 2 { "min E[m11]".into() } else { "max E[m00]".into() },
        equal: value == no_info && value == closed,
        lp_value: fmt_q(&value),
        no_info_value: fmt_q(&no_info),
        closed_form: fmt_q(&closed),
        without_type0_rows: fmt_q(&drop0),
        without_type1_rows: fmt_q(&drop1),
        blocker,
        binding_rows,
    })
}

/// Result of the local-swap audit for teams.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapAudit {
    pub configurations: usize,
    pub improving_swaps: usize,
    /// Improving swaps whose losing team still keeps a type-1 member.
    pub interior_swaps: usize,
    pub violations: Vec<(Vec<usize>, usize, usize)>,
}

/// Enumerates every team configuration of `n` agents in teams of `a` and every
/// exchange of a type-1 member of team `t` with a type-0 member of team `t'`.
/// For welfare-improving exchanges the aggregate utility of type-1 agents,
/// `Σ_t h_t·u(h_t)`, must strictly fall.
pub fn local_swap_audit(u: &TeamUtility, n: usize) -> Result<SwapAudit> {
    let a = u.team_size();
    if !n.is_multiple_of(a) {
        return Err(Error::Config(format!("team size {a} does not divide {n}")));
    }
    let v = u.values();
    let teams = n / a;
    let mut audit = SwapAudit { configurations: 0, improving_swaps: 0, interior_swaps: 0, violations: Vec::new() };
    for config in count_vectors(&vec![a; teams]) {
        audit.configurations += 1;
        for t in 0..teams {
            for t2 in 0..teams {
                let (h, h2) = (config[t], config[t2]);
                if t == t2 || h == 0 || h2 == a {
                    continue;
                }
                let dw = &v[h - 1] + &v[h2 + 1] - &v[h] - &v[h2];
                if !dw.is_positive() {
                    continue;
                }
                audit.improving_swaps += 1;
                if h2 >= 1 {
                    audit.interior_swaps += 1;
                }
                let g = |k: usize| {
                    q_from_usize(k) * &v[k] - if k == 0 { Q::zero() } else { q_from_usize(k - 1) * &v[k - 1] }
                };
                let du = g(h2 + 1) - g(h);
                if !du.is_negative() {
                    audit.violations.push((config.clone(), t, t2));
                }
            }
        }
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expected_fb;
    use crate::numeric::frac;

    fn pairs(sizes: &[usize], p: &[&str]) -> Instance {
        Instance::pairs(sizes, p, ["0", "1", "1.5"], Awareness::SelfAgnostic).unwrap()
    }

    #[test]
    fn typical_membership_examples() {
        let inst = pairs(&[100, 100], &["0.9", "0.1"]);
        let set = TypicalSet::log_schedule(&inst).unwrap();
        assert!(set.contains_counts(&inst, &[85, 12]));
        assert!(!set.contains_counts(&inst, &[60, 12]));
        assert_eq!(set.tail_bound(&inst).exact, Some(frac(2, 10_000)));
        let zero = TypicalSet::uniform(&inst, Q::zero()).unwrap();
        assert!(zero.contains_counts(&inst, &[90, 10]));
        assert!(!zero.contains_counts(&inst, &[89, 10]));
        assert!(TypicalSet::uniform(&inst, frac(1, 2)).is_err());
    }

    #[test]
    fn exact_expectations() {
        let inst = pairs(&[2], &["0.5"]);
        let v =
            expected_value_over_set(&inst, 100, |h| q_from_usize(fb_from_counts(h[0], 2 - h[0]).unwrap()), |_| true)
                .unwrap();
        assert_eq!(v, frac(1, 4));
        assert_eq!(v, expected_fb(&inst, 100).unwrap());
    }

    #[test]
    fn monte_carlo_is_deterministic_across_modes() {
        let inst = pairs(&[50, 50], &["0.8", "0.2"]);
        let f = |h: &[usize]| fb_c_from_counts(&[50, 50], h) as f64;
        let a = monte_carlo(&inst, 10_000, 3, Exec::Sequential, f).unwrap();
        let b = monte_carlo(&inst, 10_000, 3, Exec::Parallel, f).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(&inst, 10_000, 4, Exec::Sequential, f).unwrap();
        assert!((a.mean - c.mean).abs() < 3.0 * (a.stderr.powi(2) + c.stderr.powi(2)).sqrt() + 1e-12);
    }

    #[test]
    fn swap_audit_for_regular_concave_utility() {
        let u = TeamUtility::new(vec![q(0), q(1), frac(3, 2), frac(7, 4)]).unwrap();
        let audit = local_swap_audit(&u, 9).unwrap();
        assert!(audit.improving_swaps > 0);
        assert!(audit.violations.is_empty());
    }
}
