//! Optimal-signaling programs over the symmetry quotient.
//!
//! Columns are `(label sequence, type sequence)` patterns. Coefficients carry
//! the probability of the whole count class, which rescales every row of a
//! signal by the same positive constant and leaves the feasible set intact.

use std::collections::BTreeMap;

use num::{One, Zero};

use super::model::{LpModel, Relation, Sense, VarBound};
use super::simplex::{solve, LpSolution, SolveOptions};
use crate::beliefs::{baseline_matching, ParetoNotion};
use crate::canon::{label_sequences, CanonicalScheme, Pattern};
use crate::error::{Error, Result};
use crate::model::{
    class_index, class_prob, classify_convexity, count_vectors, fb_c_from_counts, Awareness, Convexity, Instance,
};
use crate::numeric::{q, q_from_usize, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramKind {
    Relaxed,
    Full,
    SelfAware,
    Dual,
}

impl std::str::FromStr for ProgramKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relaxed" => Ok(Self::Relaxed),
            "full" => Ok(Self::Full),
            "aware" => Ok(Self::SelfAware),
            "dual" => Ok(Self::Dual),
            other => Err(Error::Config(format!("unknown program `{other}` (expected relaxed, full, aware or dual)"))),
        }
    }
}

/// Index arithmetic for pattern columns.
#[derive(Debug, Clone)]
pub struct Layout {
    pub n: usize,
    pub labels: Vec<Vec<u8>>,
    pub classes: Vec<Vec<usize>>,
    pub class_probs: Vec<Q>,
    sizes: Vec<usize>,
}

impl Layout {
    pub fn new(inst: &Instance, cap: u128) -> Result<Self> {
        let n = inst.n();
        let sizes = inst.sizes();
        let labels = label_sequences(&sizes);
        let size = (labels.len() as u128).saturating_mul(1u128.checked_shl(n as u32).unwrap_or(u128::MAX));
        if n >= 64 || size > cap {
            return Err(Error::TooLarge { size, cap });
        }
        let classes = count_vectors(&sizes);
        let class_probs = classes.iter().map(|hk| class_prob(inst, hk)).collect();
        Ok(Self { n, labels, classes, class_probs, sizes })
    }

    pub fn num_columns(&self) -> usize {
        self.labels.len() << self.n
    }

    pub fn column(&self, c: usize, bits: u64) -> usize {
        (c << self.n) | bits as usize
    }

    pub fn types(&self, bits: u64) -> Vec<u8> {
        (0..self.n).map(|s| ((bits >> s) & 1) as u8).collect()
    }

    /// Index of the count class of pattern `(c, t)`.
    pub fn class_of(&self, c: usize, t: &[u8]) -> usize {
        let mut hk = vec![0; self.sizes.len()];
        for (&l, &v) in self.labels[c].iter().zip(t) {
            hk[l as usize] += v as usize;
        }
        class_index(&self.sizes, &hk)
    }

    /// Every column as `(column, label index, types, class index)`.
    pub fn columns(&self) -> impl Iterator<Item = (usize, usize, Vec<u8>, usize)> + '_ {
        (0..self.labels.len()).flat_map(move |c| {
            (0..1u64 << self.n).map(move |bits| {
                let t = self.types(bits);
                let h = self.class_of(c, &t);
                (self.column(c, bits), c, t, h)
            })
        })
    }
}

/// A program together with the layout needed to read its solution.
#[derive(Debug, Clone)]
pub struct CanonicalProgram {
    pub kind: ProgramKind,
    pub model: LpModel,
    pub layout: Layout,
    /// Indices of the Pareto rows by `(cluster, own type)`.
    pub pareto_rows: Vec<(usize, Option<u8>, usize)>,
}

/// Options for the Pareto-constrained programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParetoOptions {
    pub notion: ParetoNotion,
    /// Omit the Pareto rows of agents of this own type (self-aware program only).
    pub drop_type: Option<u8>,
}

impl Default for ParetoOptions {
    fn default() -> Self {
        Self { notion: ParetoNotion::ExAnte, drop_type: None }
    }
}

fn team_j(t: &[u8], s: usize, a: usize) -> usize {
    let start = s / a * a;
    t[start..start + a].iter().map(|&v| v as usize).sum()
}

fn m_counts(t: &[u8], a: usize) -> Vec<usize> {
    let mut m = vec![0; a + 1];
    for team in t.chunks(a) {
        m[team.iter().map(|&v| v as usize).sum::<usize>()] += 1;
    }
    m
}

fn pattern_vars(model: &mut LpModel, layout: &Layout, cost: impl Fn(&[u8], &Q) -> Q) {
    for (_, c, t, h) in layout.columns() {
        let bits: String = t.iter().map(|v| char::from(b'0' + v)).collect();
        model.add_var(format!("y_c{c}_t{bits}"), VarBound::NonNegative, cost(&t, &layout.class_probs[h]));
    }
}

fn simplex_rows(model: &mut LpModel, layout: &Layout) {
    let mut rows: Vec<Vec<(usize, Q)>> = vec![Vec::new(); layout.classes.len()];
    for (col, _, _, h) in layout.columns() {
        rows[h].push((col, Q::one()));
    }
    for (h, coeffs) in rows.into_iter().enumerate() {
        let name = format!("simplex_{}", layout.classes[h].iter().map(usize::to_string).collect::<Vec<_>>().join("_"));
        model.add_row(name, coeffs, Relation::Eq, Q::one());
    }
}

/// Consecutive persuasion rows: expected type at slot `i` at least that at `i+1`.
fn agnostic_persuasion_rows(model: &mut LpModel, layout: &Layout) {
    let n = layout.n;
    for c in 0..layout.labels.len() {
        for i in 0..n - 1 {
            let coeffs: Vec<(usize, Q)> = (0..1u64 << n)
                .filter_map(|bits| {
                    let t = layout.types(bits);
                    let diff = t[i] as i64 - t[i + 1] as i64;
                    (diff != 0).then(|| (layout.column(c, bits), &layout.class_probs[layout.class_of(c, &t)] * q(diff)))
                })
                .collect();
            if !coeffs.is_empty() {
                model.add_row(format!("persuade_c{c}_s{i}"), coeffs, Relation::Ge, Q::zero());
            }
        }
    }
}

/// Persuasion rows for agents who know their own type: conditional on the
/// type at slot `s`, its partner looks at least as good as any agent ranked
/// in a later pair.
fn aware_persuasion_rows(model: &mut LpModel, layout: &Layout) {
    let n = layout.n;
    for c in 0..layout.labels.len() {
        for s in 0..n {
            for v in [0u8, 1] {
                for j in (s / 2 + 1) * 2..n {
                    let coeffs: Vec<(usize, Q)> = (0..1u64 << n)
                        .filter_map(|bits| {
                            let t = layout.types(bits);
                            let diff = t[s ^ 1] as i64 - t[j] as i64;
                            (t[s] == v && diff != 0).then(|| {
                                (layout.column(c, bits), &layout.class_probs[layout.class_of(c, &t)] * q(diff))
                            })
                        })
                        .collect();
                    if !coeffs.is_empty() {
                        model.add_row(format!("persuade_c{c}_s{s}_v{v}_j{j}"), coeffs, Relation::Ge, Q::zero());
                    }
                }
            }
        }
    }
}

/// Pareto row key: cluster, own type, and the (label sequence, slot) of a
/// per-signal row.
type ParetoKey = (usize, Option<u8>, Option<(usize, usize)>);

/// Pareto rows. Ex-ante rows aggregate every slot of a cluster (and own
/// type); per-signal rows keep one row per label sequence and slot.
fn pareto_rows(
    model: &mut LpModel,
    layout: &Layout,
    inst: &Instance,
    aware: bool,
    opts: ParetoOptions,
) -> Vec<(usize, Option<u8>, usize)> {
    let a = inst.team_size();
    let u = inst.utility().values();
    let base = baseline_matching(inst);
    let baseline = |k: usize, v: u8| if aware { base.aware[k][v as usize].clone() } else { base.agnostic[k].clone() };
    let keep = |v: u8| !(aware && opts.drop_type == Some(v));
    let mut grouped: BTreeMap<ParetoKey, Vec<(usize, Q)>> = BTreeMap::new();
    for (col, c, t, h) in layout.columns() {
        let p = &layout.class_probs[h];
        for (s, &k) in layout.labels[c].iter().enumerate() {
            let v = t[s];
            if !keep(v) {
                continue;
            }
            let k = k as usize;
            let gain = &u[team_j(&t, s, a)] - baseline(k, v);
            if gain.is_zero() {
                continue;
            }
            let own = aware.then_some(v);
            let signal = (opts.notion == ParetoNotion::PerSignal).then_some((c, s));
            grouped.entry((k, own, signal)).or_default().push((col, p * gain));
        }
    }
    grouped
        .into_iter()
        .map(|((k, own, signal), coeffs)| {
            let mut name = format!("pareto_k{k}");
            if let Some(v) = own {
                name.push_str(&format!("_v{v}"));
            }
            if let Some((c, s)) = signal {
                name.push_str(&format!("_c{c}_s{s}"));
            }
            let row = model.add_row(name, coeffs, Relation::Ge, Q::zero());
            (k, own, row)
        })
        .collect()
}

fn require_awareness(inst: &Instance, want: Awareness) -> Result<()> {
    if inst.awareness() != want {
        return Err(Error::Precondition(format!("program needs a {want:?} instance")));
    }
    Ok(())
}

fn require_pairs(inst: &Instance) -> Result<()> {
    if inst.team_size() != 2 {
        return Err(Error::Unsupported("program is formulated for pairs".into()));
    }
    Ok(())
}

/// Minimize expected 0-0 matches subject to persuasiveness only.
pub fn build_relaxed_lp(inst: &Instance, cap: u128) -> Result<CanonicalProgram> {
    require_pairs(inst)?;
    require_awareness(inst, Awareness::SelfAgnostic)?;
    let layout = Layout::new(inst, cap)?;
    let mut model = LpModel::new("relaxed", Sense::Minimize);
    pattern_vars(&mut model, &layout, |t, p| p * q_from_usize(m_counts(t, 2)[0]));
    simplex_rows(&mut model, &layout);
    agnostic_persuasion_rows(&mut model, &layout);
    Ok(CanonicalProgram { kind: ProgramKind::Relaxed, model, layout, pareto_rows: Vec::new() })
}

/// Maximize welfare subject to persuasiveness and Pareto improvement.
pub fn build_full_lp(inst: &Instance, cap: u128, opts: ParetoOptions) -> Result<CanonicalProgram> {
    require_awareness(inst, Awareness::SelfAgnostic)?;
    let a = inst.team_size();
    let layout = Layout::new(inst, cap)?;
    let u = inst.utility().values().to_vec();
    let mut model = LpModel::new("full", Sense::Maximize);
    pattern_vars(&mut model, &layout, |t, p| {
        let w: Q = m_counts(t, a).iter().zip(&u).map(|(&m, uj)| q_from_usize(m) * uj).sum();
        p * w * q_from_usize(a)
    });
    simplex_rows(&mut model, &layout);
    agnostic_persuasion_rows(&mut model, &layout);
    let pareto = pareto_rows(&mut model, &layout, inst, false, opts);
    Ok(CanonicalProgram { kind: ProgramKind::Full, model, layout, pareto_rows: pareto })
}

/// The self-aware program: minimize `E[m11]` for strictly concave utility,
/// maximize `E[m00]` for convex utility.
pub fn build_self_aware_lp(inst: &Instance, cap: u128, opts: ParetoOptions) -> Result<CanonicalProgram> {
    require_pairs(inst)?;
    require_awareness(inst, Awareness::SelfAware)?;
    let layout = Layout::new(inst, cap)?;
    let (sense, j) = match classify_convexity(inst.utility())? {
        Convexity::StrictlyConcave => (Sense::Minimize, 2),
        Convexity::Convex => (Sense::Maximize, 0),
    };
    let mut model = LpModel::new("self_aware", sense);
    pattern_vars(&mut model, &layout, |t, p| p * q_from_usize(m_counts(t, 2)[j]));
    simplex_rows(&mut model, &layout);
    aware_persuasion_rows(&mut model, &layout);
    let pareto = pareto_rows(&mut model, &layout, inst, true, opts);
    Ok(CanonicalProgram { kind: ProgramKind::SelfAware, model, layout, pareto_rows: pareto })
}

/// Dual of the relaxed program, optionally restricted to a set of count
/// classes. Variables: one free `z` per kept class, then `y_{c,i} ≥ 0` for
/// every label sequence and adjacent slot pair.
pub fn build_dual_lp(inst: &Instance, cap: u128, restriction: Option<&[Vec<usize>]>) -> Result<CanonicalProgram> {
    require_pairs(inst)?;
    require_awareness(inst, Awareness::SelfAgnostic)?;
    let layout = Layout::new(inst, cap)?;
    let n = layout.n;
    let keep: Vec<bool> = match restriction {
        None => vec![true; layout.classes.len()],
        Some(set) => {
            if set.is_empty() {
                return Err(Error::InvalidRestriction("restriction set is empty".into()));
            }
            let mut keep = vec![false; layout.classes.len()];
            for hk in set {
                let idx = layout.classes.iter().position(|c| c == hk).ok_or_else(|| {
                    Error::InvalidRestriction(format!("count vector {hk:?} is not a class of this instance"))
                })?;
                keep[idx] = true;
            }
            keep
        }
    };
    let mut model = LpModel::new("dual", Sense::Maximize);
    let mut z = vec![usize::MAX; layout.classes.len()];
    for (h, hk) in layout.classes.iter().enumerate() {
        if keep[h] {
            let name = format!("z_{}", hk.iter().map(usize::to_string).collect::<Vec<_>>().join("_"));
            z[h] = model.add_var(name, VarBound::Free, Q::one());
        }
    }
    let y0 = model.num_vars();
    for c in 0..layout.labels.len() {
        for i in 0..n - 1 {
            model.add_var(format!("y_c{c}_s{i}"), VarBound::NonNegative, Q::zero());
        }
    }
    for (_, c, t, h) in layout.columns() {
        if !keep[h] {
            continue;
        }
        let p = &layout.class_probs[h];
        let mut coeffs = vec![(z[h], Q::one())];
        for i in 0..n - 1 {
            let diff = t[i] as i64 - t[i + 1] as i64;
            if diff != 0 {
                coeffs.push((y0 + c * (n - 1) + i, p * q(diff)));
            }
        }
        let rhs = p * q_from_usize(m_counts(&t, 2)[0]);
        let bits: String = t.iter().map(|v| char::from(b'0' + v)).collect();
        model.add_row(format!("row_c{c}_t{bits}"), coeffs, Relation::Le, rhs);
    }
    Ok(CanonicalProgram { kind: ProgramKind::Dual, model, layout, pareto_rows: Vec::new() })
}

/// An exact optimum of a canonical program.
#[derive(Debug, Clone)]
pub struct ProgramSolution {
    pub value: Q,
    pub lp: LpSolution,
    /// The optimal scheme in reduced form (primal programs only).
    pub scheme: Option<CanonicalScheme>,
}

pub fn solve_program(inst: &Instance, program: &CanonicalProgram, opts: SolveOptions) -> Result<ProgramSolution> {
    let lp = solve(&program.model, opts)?;
    let scheme = match program.kind {
        ProgramKind::Dual => None,
        _ => {
            let layout = &program.layout;
            let mut entries: BTreeMap<Vec<usize>, Vec<(Pattern, Q)>> =
                layout.classes.iter().map(|hk| (hk.clone(), Vec::new())).collect();
            for (col, c, t, h) in layout.columns() {
                let y = &lp.x[col];
                if !y.is_zero() {
                    let pattern = Pattern::new(layout.labels[c].clone(), t)?;
                    entries.get_mut(&layout.classes[h]).expect("class listed").push((pattern, y.clone()));
                }
            }
            Some(CanonicalScheme::new(inst, entries)?)
        }
    };
    Ok(ProgramSolution { value: lp.value.clone(), lp, scheme })
}

/// `Σ_h P(h)·fb_c(h)` over all classes.
pub fn expected_fb_c_classes(inst: &Instance) -> Q {
    let sizes = inst.sizes();
    count_vectors(&sizes).iter().map(|hk| class_prob(inst, hk) * q_from_usize(fb_c_from_counts(&sizes, hk))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::simplex::{dual_feasible, dual_objective};
    use crate::model::expected_fb;
    use crate::numeric::frac;

    fn inst(sizes: &[usize], p: &[&str], u: [&str; 3], aw: Awareness) -> Instance {
        Instance::pairs(sizes, p, u, aw).unwrap()
    }

    #[test]
    fn relaxed_matches_expected_first_best() {
        let i = inst(&[4], &["0.5"], ["0", "1", "1.5"], Awareness::SelfAgnostic);
        let prog = build_relaxed_lp(&i, 1 << 20).unwrap();
        let sol = solve_program(&i, &prog, SolveOptions::default()).unwrap();
        assert_eq!(sol.value, frac(3, 8));
        assert_eq!(sol.value, expected_fb(&i, 1 << 20).unwrap());
        assert!(dual_feasible(&prog.model, &sol.lp.duals));
        assert_eq!(dual_objective(&prog.model, &sol.lp.duals), sol.value);
        let scheme = sol.scheme.unwrap();
        assert!(scheme.persuasion(&i).unwrap().is_pass());
    }

    #[test]
    fn dual_program_matches_primal() {
        let i = inst(&[4], &["0.3"], ["0", "1", "1.5"], Awareness::SelfAgnostic);
        let primal = solve_program(&i, &build_relaxed_lp(&i, 1 << 20).unwrap(), SolveOptions::default()).unwrap();
        let dual = solve_program(&i, &build_dual_lp(&i, 1 << 20, None).unwrap(), SolveOptions::default()).unwrap();
        assert_eq!(primal.value, dual.value);
        assert!(build_dual_lp(&i, 1 << 20, Some(&[])).is_err());
    }

    #[test]
    fn self_aware_value_n4() {
        let i = inst(&[4], &["0.5"], ["0", "1", "1.5"], Awareness::SelfAware);
        let sol = solve_program(
            &i,
            &build_self_aware_lp(&i, 1 << 20, ParetoOptions::default()).unwrap(),
            SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.value, frac(1, 2));
    }

    #[test]
    fn layout_is_consistent() {
        let i = inst(&[2, 2], &["0.8", "0.2"], ["0", "1", "3"], Awareness::SelfAgnostic);
        let l = Layout::new(&i, 1 << 20).unwrap();
        assert_eq!(l.num_columns(), 6 * 16);
        assert_eq!(l.columns().count(), l.num_columns());
        assert!(Layout::new(&i, 10).is_err());
        assert_eq!(expected_fb_c_classes(&i), crate::model::expected_fb_c(&i, 1 << 20).unwrap());
    }
}
