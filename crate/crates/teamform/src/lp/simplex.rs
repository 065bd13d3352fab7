//! Revised simplex with an explicit basis inverse.
//!
//! The engine is generic over its number type. A floating-point pass finds a
//! candidate optimal basis quickly; that basis is then inverted in exact
//! rational arithmetic and simplex continues exactly until optimality is
//! certified. Nothing is reported from the floating-point pass itself.

use std::fmt::Debug;

use num::{Signed, Zero};

use super::model::{LpModel, Relation, Sense, VarBound};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numeric::{to_f64, Q};

/// Arithmetic needed by the simplex engine.
pub trait Scalar: Clone + Send + Sync + Debug {
    const EXACT: bool;
    fn zero() -> Self;
    fn one() -> Self;
    fn from_q(q: &Q) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn is_zero_tol(&self) -> bool;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn less(&self, o: &Self) -> bool;
    fn magnitude(&self) -> f64;
    /// Inverse of a square matrix given by sparse columns, `None` if singular.
    fn invert(cols: &[Vec<(usize, Self)>], m: usize) -> Option<Vec<Vec<Self>>>;
}

const TOL: f64 = 1e-9;

impl Scalar for f64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_q(q: &Q) -> Self {
        to_f64(q)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_zero_tol(&self) -> bool {
        self.abs() <= TOL
    }
    fn is_pos(&self) -> bool {
        *self > TOL
    }
    fn is_neg(&self) -> bool {
        *self < -TOL
    }
    fn less(&self, o: &Self) -> bool {
        *self < *o - TOL
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn invert(cols: &[Vec<(usize, Self)>], m: usize) -> Option<Vec<Vec<Self>>> {
        // Dense Gauss-Jordan with partial pivoting on [B | I], row-major.
        let mut a = vec![vec![0.0; 2 * m]; m];
        for (j, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                a[r][j] = v;
            }
        }
        for (r, row) in a.iter_mut().enumerate() {
            row[m + r] = 1.0;
        }
        for c in 0..m {
            let p = (c..m).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
            if a[p][c].abs() < 1e-12 {
                return None;
            }
            a.swap(c, p);
            let inv = 1.0 / a[c][c];
            a[c].iter_mut().for_each(|v| *v *= inv);
            let pivot_row = a[c].clone();
            for (r, row) in a.iter_mut().enumerate() {
                let f = row[c];
                if r != c && f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        Some(a.into_iter().map(|row| row[m..].to_vec()).collect())
    }
}

impl Scalar for Q {
    const EXACT: bool = true;
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn from_q(q: &Q) -> Self {
        q.clone()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_zero_tol(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn less(&self, o: &Self) -> bool {
        self < o
    }
    fn magnitude(&self) -> f64 {
        to_f64(self).abs()
    }
    fn invert(cols: &[Vec<(usize, Self)>], m: usize) -> Option<Vec<Vec<Self>>> {
        sparse_inverse(cols, m)
    }
}

/// Sparse Gauss-Jordan over the rationals.
///
/// Rows hold `[B | I]` as sorted sparse vectors. Columns are eliminated from
/// the sparsest first and each pivot row is the sparsest candidate, which
/// keeps slack-heavy bases almost free to invert.
fn sparse_inverse(cols: &[Vec<(usize, Q)>], m: usize) -> Option<Vec<Vec<Q>>> {
    let mut rows: Vec<Vec<(usize, Q)>> = (0..m).map(|r| vec![(m + r, Q::one())]).collect();
    for (j, col) in cols.iter().enumerate() {
        for (r, v) in col {
            rows[*r].push((j, v.clone()));
        }
    }
    rows.iter_mut().for_each(|r| r.sort_by_key(|(c, _)| *c));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&j| cols[j].len());
    let mut assigned = vec![false; m];
    let mut row_of = vec![usize::MAX; m];
    let entry = |row: &[(usize, Q)], c: usize| row.binary_search_by_key(&c, |(k, _)| *k).ok().map(|i| row[i].1.clone());
    for &c in &order {
        let p = (0..m).filter(|&r| !assigned[r] && entry(&rows[r], c).is_some()).min_by_key(|&r| rows[r].len())?;
        assigned[p] = true;
        row_of[c] = p;
        let piv = entry(&rows[p], c).expect("pivot entry present");
        let prow: Vec<(usize, Q)> = rows[p].iter().map(|(k, v)| (*k, v / &piv)).collect();
        for (r, row) in rows.iter_mut().enumerate() {
            if r == p {
                continue;
            }
            if let Some(f) = entry(row, c) {
                *row = axpy(row, &f, &prow);
            }
        }
        rows[p] = prow;
    }
    Some(
        (0..m)
            .map(|j| {
                let mut dense = vec![<Q as Zero>::zero(); m];
                for (k, v) in &rows[row_of[j]] {
                    if *k >= m {
                        dense[k - m] = v.clone();
                    }
                }
                dense
            })
            .collect(),
    )
}

/// `row − f·other` for sorted sparse rows.
fn axpy(row: &[(usize, Q)], f: &Q, other: &[(usize, Q)]) -> Vec<(usize, Q)> {
    let mut out = Vec::with_capacity(row.len() + other.len());
    let (mut i, mut j) = (0, 0);
    while i < row.len() || j < other.len() {
        let take_row = j >= other.len() || (i < row.len() && row[i].0 < other[j].0);
        let take_other = i >= row.len() || (j < other.len() && other[j].0 < row[i].0);
        if take_row {
            out.push(row[i].clone());
            i += 1;
        } else if take_other {
            out.push((other[j].0, -(f * &other[j].1)));
            j += 1;
        } else {
            let v = &row[i].1 - f * &other[j].1;
            if !v.is_zero() {
                out.push((row[i].0, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    /// Structural column for original variable `var`, negated for the
    /// negative half of a free variable.
    Structural {
        var: usize,
        negated: bool,
    },
    Slack,
    Artificial,
}

/// `min c·x, A x = b, x ≥ 0, b ≥ 0`, derived from an [`LpModel`].
#[derive(Debug, Clone)]
struct StandardForm {
    m: usize,
    cols: Vec<Vec<(usize, Q)>>,
    kinds: Vec<ColKind>,
    cost: Vec<Q>,
    b: Vec<Q>,
    row_sign: Vec<bool>,
    initial_basis: Vec<usize>,
}

impl StandardForm {
    fn from_model(model: &LpModel) -> Self {
        let m = model.num_rows();
        let flip: Vec<bool> = model.rows.iter().map(|r| r.rhs.is_negative()).collect();
        let sgn = |r: usize, v: &Q| if flip[r] { -v.clone() } else { v.clone() };
        let mut by_var: Vec<Vec<(usize, Q)>> = vec![Vec::new(); model.num_vars()];
        for (r, row) in model.rows.iter().enumerate() {
            for (j, a) in &row.coeffs {
                by_var[*j].push((r, sgn(r, a)));
            }
        }
        let obj_sign = |c: &Q| if model.sense == Sense::Maximize { -c.clone() } else { c.clone() };
        let mut cols = Vec::new();
        let mut kinds = Vec::new();
        let mut cost = Vec::new();
        for (j, col) in by_var.into_iter().enumerate() {
            let c = obj_sign(&model.objective[j]);
            if model.vars[j].bound == VarBound::Free {
                cols.push(col.iter().map(|(r, v)| (*r, -v.clone())).collect());
                kinds.push(ColKind::Structural { var: j, negated: true });
                cost.push(-c.clone());
            }
            cols.push(col);
            kinds.push(ColKind::Structural { var: j, negated: false });
            cost.push(c);
        }
        let mut initial_basis = vec![usize::MAX; m];
        for (r, row) in model.rows.iter().enumerate() {
            let slack = match row.relation {
                Relation::Le => Some(Q::from_integer(1.into())),
                Relation::Ge => Some(Q::from_integer((-1).into())),
                Relation::Eq => None,
            };
            if let Some(s) = slack {
                let s = sgn(r, &s);
                let unit = s.is_positive();
                cols.push(vec![(r, s)]);
                kinds.push(ColKind::Slack);
                cost.push(<Q as Zero>::zero());
                if unit {
                    initial_basis[r] = cols.len() - 1;
                }
            }
        }
        for (r, slot) in initial_basis.iter_mut().enumerate() {
            if *slot == usize::MAX {
                cols.push(vec![(r, Q::from_integer(1.into()))]);
                kinds.push(ColKind::Artificial);
                cost.push(<Q as Zero>::zero());
                *slot = cols.len() - 1;
            }
        }
        let b = model.rows.iter().enumerate().map(|(r, row)| sgn(r, &row.rhs)).collect();
        Self { m, cols, kinds, cost, b, row_sign: flip, initial_basis }
    }

    fn phase_one_cost(&self) -> Vec<Q> {
        self.kinds
            .iter()
            .map(|k| if *k == ColKind::Artificial { Q::from_integer(1.into()) } else { <Q as Zero>::zero() })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
}

struct Engine<T: Scalar> {
    m: usize,
    cols: Vec<Vec<(usize, T)>>,
    b: Vec<T>,
    basis: Vec<usize>,
    pos: Vec<Option<usize>>,
    binv: Vec<Vec<T>>,
    xb: Vec<T>,
    allowed: Vec<bool>,
    exec: Exec,
    pivots: usize,
}

const BLAND_AFTER: usize = 50;
const REFRESH_EVERY: usize = 100;
const MAX_PIVOTS: usize = 1_000_000;

impl<T: Scalar> Engine<T> {
    fn new(cols: Vec<Vec<(usize, T)>>, b: Vec<T>, m: usize, basis: Vec<usize>, exec: Exec) -> Option<Self> {
        let ncols = cols.len();
        let mut e = Self {
            m,
            cols,
            b,
            basis: Vec::new(),
            pos: vec![None; ncols],
            binv: Vec::new(),
            xb: Vec::new(),
            allowed: vec![true; ncols],
            exec,
            pivots: 0,
        };
        e.set_basis(basis)?;
        Some(e)
    }

    fn set_basis(&mut self, basis: Vec<usize>) -> Option<()> {
        let bcols: Vec<Vec<(usize, T)>> = basis.iter().map(|&j| self.cols[j].clone()).collect();
        self.binv = T::invert(&bcols, self.m)?;
        self.pos = vec![None; self.cols.len()];
        for (i, &j) in basis.iter().enumerate() {
            self.pos[j] = Some(i);
        }
        self.basis = basis;
        self.recompute_xb();
        Some(())
    }

    fn recompute_xb(&mut self) {
        let b = &self.b;
        self.xb = self.exec.map_slice(&self.binv, |row| {
            row.iter().zip(b).fold(T::zero(), |acc, (r, bi)| if r.is_zero_tol() { acc } else { acc.add(&r.mul(bi)) })
        });
    }

    fn duals(&self, cost: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = &cost[j];
            if c.is_zero_tol() {
                continue;
            }
            for (yk, bk) in y.iter_mut().zip(&self.binv[i]) {
                if !bk.is_zero_tol() {
                    *yk = yk.add(&c.mul(bk));
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[T], y: &[T], j: usize) -> T {
        self.cols[j].iter().fold(cost[j].clone(), |acc, (r, a)| acc.sub(&y[*r].mul(a)))
    }

    fn direction(&self, q: usize) -> Vec<T> {
        let col = &self.cols[q];
        self.exec.map_slice(&self.binv, |row| {
            col.iter().fold(T::zero(), |acc, (r, a)| {
                let v = &row[*r];
                if v.is_zero_tol() {
                    acc
                } else {
                    acc.add(&v.mul(a))
                }
            })
        })
    }

    fn pivot(&mut self, p: usize, q: usize, d: &[T]) {
        let dp = d[p].clone();
        let theta = self.xb[p].div(&dp);
        for (i, x) in self.xb.iter_mut().enumerate() {
            if i != p && !d[i].is_zero_tol() {
                *x = x.sub(&theta.mul(&d[i]));
                if !T::EXACT && x.is_zero_tol() {
                    *x = T::zero();
                }
            }
        }
        self.xb[p] = theta;
        let prow: Vec<T> = self.binv[p].iter().map(|v| v.div(&dp)).collect();
        let nz: Vec<usize> = (0..self.m).filter(|&k| !prow[k].is_zero_tol()).collect();
        self.exec.for_each_mut(&mut self.binv, |i, row| {
            if i == p || d[i].is_zero_tol() {
                return;
            }
            for &k in &nz {
                row[k] = row[k].sub(&d[i].mul(&prow[k]));
            }
        });
        self.binv[p] = prow;
        self.pos[self.basis[p]] = None;
        self.basis[p] = q;
        self.pos[q] = Some(p);
        self.pivots += 1;
        if !T::EXACT && self.pivots.is_multiple_of(REFRESH_EVERY) {
            let basis = self.basis.clone();
            if self.set_basis(basis).is_none() {
                self.recompute_xb();
            }
        }
    }

    /// Primal simplex on `cost` from the current feasible basis. Dantzig
    /// pricing switches to Bland's rule after a run of degenerate pivots and
    /// back after the next nondegenerate one.
    fn optimize(&mut self, cost: &[T]) -> Result<Outcome> {
        let mut degenerate_run = 0usize;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Unsupported("simplex pivot limit reached".into()));
            }
            let bland = T::EXACT && degenerate_run > BLAND_AFTER || degenerate_run > 4 * BLAND_AFTER;
            let y = self.duals(cost);
            let reduced: Vec<Option<T>> = self.exec.map_range(self.cols.len(), |j| {
                if self.pos[j].is_some() || !self.allowed[j] {
                    return None;
                }
                let d = self.reduced_cost(cost, &y, j);
                d.is_neg().then_some(d)
            });
            let entering = if bland {
                reduced.iter().position(Option::is_some)
            } else {
                let mut best: Option<(usize, &T)> = None;
                for (j, d) in reduced.iter().enumerate() {
                    if let Some(d) = d {
                        if best.is_none_or(|(_, b)| d.less(b)) {
                            best = Some((j, d));
                        }
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(q) = entering else {
                return Ok(Outcome::Optimal);
            };
            let d = self.direction(q);
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                if !d[i].is_pos() {
                    continue;
                }
                let ratio = self.xb[i].div(&d[i]);
                let better = match &leave {
                    None => true,
                    Some((l, r)) => {
                        if ratio.less(r) {
                            true
                        } else if r.less(&ratio) {
                            false
                        } else if bland || T::EXACT {
                            self.basis[i] < self.basis[*l]
                        } else {
                            d[i].magnitude() > d[*l].magnitude()
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((p, ratio)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if ratio.is_zero_tol() {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(p, q, &d);
        }
    }

    /// Pivots basic artificial columns out wherever a replacement exists.
    fn drive_out(&mut self, artificial: &[bool]) {
        for i in 0..self.m {
            if !artificial[self.basis[i]] {
                continue;
            }
            let row = &self.binv[i];
            let candidate = (0..self.cols.len())
                .filter(|&j| self.pos[j].is_none() && !artificial[j])
                .map(|j| {
                    let v = self.cols[j].iter().fold(T::zero(), |acc, (r, a)| acc.add(&row[*r].mul(a)));
                    (j, v)
                })
                .filter(|(_, v)| !v.is_zero_tol())
                .max_by(|a, b| a.1.magnitude().total_cmp(&b.1.magnitude()));
            if let Some((q, _)) = candidate {
                let d = self.direction(q);
                self.pivot(i, q, &d);
            }
        }
    }
}

/// An exact optimal solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: Q,
    /// Values of the model's variables.
    pub x: Vec<Q>,
    /// Row duals of the model as stated, so that `value = Σ dual·rhs`.
    pub duals: Vec<Q>,
    pub pivots: usize,
    pub warm_started: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub exec: Exec,
    /// Use a floating-point pass to find the starting basis for the exact phase.
    pub warm_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { exec: Exec::default(), warm_start: true }
    }
}

fn convert<T: Scalar>(sf: &StandardForm, scale: &[Q]) -> (Vec<Vec<(usize, T)>>, Vec<T>) {
    let cols = sf.cols.iter().map(|c| c.iter().map(|(r, v)| (*r, T::from_q(&(v * &scale[*r])))).collect()).collect();
    let b = sf.b.iter().zip(scale).map(|(v, s)| T::from_q(&(v * s))).collect();
    (cols, b)
}

fn two_phase<T: Scalar>(engine: &mut Engine<T>, sf: &StandardForm, cost2: &[T]) -> Result<Outcome> {
    let artificial: Vec<bool> = sf.kinds.iter().map(|k| *k == ColKind::Artificial).collect();
    if artificial.iter().any(|&a| a) {
        let cost1: Vec<T> = sf.phase_one_cost().iter().map(T::from_q).collect();
        engine.optimize(&cost1)?;
        let infeasible = engine.basis.iter().zip(&engine.xb).any(|(&j, x)| artificial[j] && x.is_pos());
        if infeasible {
            return Err(Error::Infeasible);
        }
        engine.drive_out(&artificial);
    }
    for (j, a) in artificial.iter().enumerate() {
        if *a {
            engine.allowed[j] = false;
        }
    }
    engine.optimize(cost2)
}

/// Solves the model exactly.
/// Largest row count accepted; the basis inverse is stored densely.
pub const MAX_ROWS: usize = 6000;

pub fn solve(model: &LpModel, opts: SolveOptions) -> Result<LpSolution> {
    if model.num_rows() > MAX_ROWS {
        return Err(Error::TooLarge { size: model.num_rows() as u128, cap: MAX_ROWS as u128 });
    }
    let sf = StandardForm::from_model(model);
    let m = sf.m;
    let exact_cost: Vec<Q> = sf.cost.clone();
    let unit: Vec<Q> = vec![Q::from_integer(1.into()); m];
    let mut warm_started = false;
    let mut exact: Option<Engine<Q>> = None;

    if opts.warm_start && m > 0 {
        // Row scaling only affects the floating-point pass.
        let scale: Vec<Q> = (0..m)
            .map(|r| {
                let mx = sf.cols.iter().flat_map(|c| c.iter().filter(|(rr, _)| *rr == r)).map(|(_, v)| v.abs()).max();
                match mx {
                    Some(v) if !v.is_zero() => Q::from_integer(1.into()) / v,
                    _ => Q::from_integer(1.into()),
                }
            })
            .collect();
        let (cols, b) = convert::<f64>(&sf, &scale);
        let cost: Vec<f64> = exact_cost.iter().map(to_f64).collect();
        if let Some(mut fe) = Engine::new(cols, b, m, sf.initial_basis.clone(), opts.exec) {
            if matches!(two_phase(&mut fe, &sf, &cost), Ok(Outcome::Optimal)) {
                let (qcols, qb) = convert::<Q>(&sf, &unit);
                if let Some(mut e) = Engine::new(qcols, qb, m, fe.basis.clone(), opts.exec) {
                    let artificial_positive =
                        e.basis.iter().zip(&e.xb).any(|(&j, x)| sf.kinds[j] == ColKind::Artificial && !x.is_zero());
                    if e.xb.iter().all(|x| !x.is_negative()) && !artificial_positive {
                        for (j, k) in sf.kinds.iter().enumerate() {
                            e.allowed[j] = *k != ColKind::Artificial;
                        }
                        e.pivots = fe.pivots;
                        warm_started = true;
                        exact = Some(e);
                    }
                }
            }
        }
    }

    let mut engine = match exact {
        Some(mut e) => {
            if e.optimize(&exact_cost)? == Outcome::Unbounded {
                return Err(Error::Unbounded);
            }
            e
        }
        None => {
            let (qcols, qb) = convert::<Q>(&sf, &unit);
            let mut e =
                Engine::new(qcols, qb, m, sf.initial_basis.clone(), opts.exec).expect("initial basis is an identity");
            if two_phase(&mut e, &sf, &exact_cost)? == Outcome::Unbounded {
                return Err(Error::Unbounded);
            }
            e
        }
    };
    engine.recompute_xb();

    let mut x = vec![<Q as Zero>::zero(); model.num_vars()];
    for (i, &j) in engine.basis.iter().enumerate() {
        if let ColKind::Structural { var, negated } = sf.kinds[j] {
            if negated {
                x[var] -= &engine.xb[i];
            } else {
                x[var] += &engine.xb[i];
            }
        }
    }
    let y = engine.duals(&exact_cost);
    let duals: Vec<Q> = y
        .into_iter()
        .zip(&sf.row_sign)
        .map(|(v, &flipped)| {
            let v = if flipped { -v } else { v };
            if model.sense == Sense::Maximize {
                -v
            } else {
                v
            }
        })
        .collect();
    let value = model.objective_value(&x);
    Ok(LpSolution { value, x, duals, pivots: engine.pivots, warm_started })
}

/// Exact dual feasibility of `duals` for `model`, which together with
/// `Σ dual·rhs = value` certifies optimality.
pub fn dual_feasible(model: &LpModel, duals: &[Q]) -> bool {
    let min = model.sense == Sense::Minimize;
    let row_ok = model.rows.iter().zip(duals).all(|(r, d)| match (r.relation, min) {
        (Relation::Eq, _) => true,
        (Relation::Ge, true) | (Relation::Le, false) => !d.is_negative(),
        (Relation::Le, true) | (Relation::Ge, false) => !d.is_positive(),
    });
    let mut reduced = model.objective.clone();
    for (r, d) in model.rows.iter().zip(duals) {
        for (j, a) in &r.coeffs {
            reduced[*j] -= a * d;
        }
    }
    row_ok
        && model.vars.iter().zip(&reduced).all(|(v, rc)| match v.bound {
            VarBound::Free => rc.is_zero(),
            VarBound::NonNegative if min => !rc.is_negative(),
            VarBound::NonNegative => !rc.is_positive(),
        })
}

pub fn dual_objective(model: &LpModel, duals: &[Q]) -> Q {
    model.rows.iter().zip(duals).map(|(r, d)| &r.rhs * d).sum()
}
