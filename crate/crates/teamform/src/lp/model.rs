use std::fmt::Write as _;

use num::{Signed, Zero};

use crate::numeric::{fmt_q, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub bound: VarBound,
}

/// A sparse constraint row `Σ coeff·x  (rel)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, Q)>,
    pub relation: Relation,
    pub rhs: Q,
}

/// An exact linear program.
#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    pub name: String,
    pub sense: Sense,
    pub vars: Vec<Variable>,
    pub objective: Vec<Q>,
    pub rows: Vec<Row>,
}

impl LpModel {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Self { name: name.into(), sense, vars: Vec::new(), objective: Vec::new(), rows: Vec::new() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, bound: VarBound, cost: Q) -> usize {
        self.vars.push(Variable { name: name.into(), bound });
        self.objective.push(cost);
        self.vars.len() - 1
    }

    /// Adds a row, dropping zero coefficients and merging repeated indices.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        mut coeffs: Vec<(usize, Q)>,
        relation: Relation,
        rhs: Q,
    ) -> usize {
        coeffs.sort_by_key(|(j, _)| *j);
        let mut merged: Vec<(usize, Q)> = Vec::with_capacity(coeffs.len());
        for (j, v) in coeffs {
            match merged.last_mut() {
                Some((last, acc)) if *last == j => *acc += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|(_, v)| !v.is_zero());
        self.rows.push(Row { name: name.into(), coeffs: merged, relation, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[Q]) -> Q {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks every row and bound exactly; returns the first violated row.
    pub fn first_violation(&self, x: &[Q]) -> Option<usize> {
        if self.vars.iter().zip(x).any(|(v, xi)| v.bound == VarBound::NonNegative && xi.is_negative()) {
            return Some(usize::MAX);
        }
        self.rows.iter().position(|r| {
            let lhs: Q = r.coeffs.iter().map(|(j, a)| a * &x[*j]).sum();
            match r.relation {
                Relation::Le => lhs > r.rhs,
                Relation::Ge => lhs < r.rhs,
                Relation::Eq => lhs != r.rhs,
            }
        })
    }

    /// Renders the program in LP text format with fractional coefficients.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ {}", self.name);
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n",
            Sense::Maximize => "Maximize\n",
        });
        let terms: Vec<(usize, Q)> =
            self.objective.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(|(j, c)| (j, c.clone())).collect();
        let _ = writeln!(out, " obj: {}", self.linear(&terms));
        out.push_str("Subject To\n");
        for r in &self.rows {
            let rel = match r.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, " {}: {} {} {}", r.name, self.linear(&r.coeffs), rel, fmt_q(&r.rhs));
        }
        out.push_str("Bounds\n");
        for v in self.vars.iter().filter(|v| v.bound == VarBound::Free) {
            let _ = writeln!(out, " {} free", v.name);
        }
        out.push_str("End\n");
        out
    }

    fn linear(&self, terms: &[(usize, Q)]) -> String {
        if terms.is_empty() {
            return "0".into();
        }
        let mut s = String::new();
        for (i, (j, c)) in terms.iter().enumerate() {
            let sign = if c.is_negative() {
                "- "
            } else if i > 0 {
                "+ "
            } else {
                ""
            };
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{sign}{} {}", fmt_q(&c.abs()), self.vars[*j].name);
        }
        s
    }
}
