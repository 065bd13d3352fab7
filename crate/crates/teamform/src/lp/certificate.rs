//! Explicit feasible points of the dual program.
//!
//! On typical profiles the dual variable of a class is set to its
//! cluster-first-best value; elsewhere to `−n` times its probability. The
//! persuasion multipliers come from an index set built by undoing the
//! cross-cluster swaps of each ordering in nested order.

use num::{One, Zero};
use serde::Serialize;

use super::programs::Layout;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::experiments::TypicalSet;
use crate::model::{fb_c_from_counts, Instance, Ordering};
use crate::numeric::{fmt_q, q_from_usize, to_f64, Q};

/// Which clusters sit above one half.
fn high_clusters(inst: &Instance) -> Result<Vec<bool>> {
    let half = Q::new(1.into(), 2.into());
    (0..inst.k())
        .map(|k| {
            let p = inst.prior(k);
            if *p == half {
                Err(Error::Precondition(format!("cluster {k} has prior exactly 1/2")))
            } else {
                Ok(*p > half)
            }
        })
        .collect()
}

/// Binary multipliers `y_i`, `i ∈ [n−1]`, for one arrangement of cluster
/// labels given slot by slot as "high" (`true`) or "low".
///
/// The first `n_high` slots form the high region. Low agents intruding there
/// are taken left to right, high agents in the low region right to left, and
/// the k-th pair of them defines one swap. Even swaps add the slot interval
/// between the two agents; odd swaps remove the interval between their
/// partners.
pub fn index_set_for_labels(high: &[bool]) -> Result<Vec<u8>> {
    let n = high.len();
    let n_high = high.iter().filter(|&&h| h).count();
    let intruders: Vec<usize> = (0..n_high).filter(|&i| !high[i]).collect();
    let strays: Vec<usize> = (n_high..n).rev().filter(|&i| high[i]).collect();
    let mut coef = vec![0i64; n.saturating_sub(1)];
    for (k, (&lo0, &hi0)) in intruders.iter().zip(&strays).enumerate() {
        let (lo, hi, sign) = if k % 2 == 0 { (lo0, hi0, 1) } else { (lo0 ^ 1, hi0 ^ 1, -1) };
        let (from, to, s) = if lo < hi { (lo, hi, sign) } else { (hi, lo, -sign) };
        coef[from..to].iter_mut().for_each(|c| *c += s);
    }
    coef.into_iter()
        .map(|c| u8::try_from(c).ok().filter(|&v| v <= 1))
        .collect::<Option<Vec<u8>>>()
        .ok_or_else(|| Error::Certificate(format!("index set for {high:?} is not binary")))
}

/// Index set of an explicit ordering.
///
/// Clusters above one half are merged into one high group and the rest into
/// a low group. When every prior is on the same side the empty set is used.
pub fn construct_index_set(inst: &Instance, sigma: &Ordering) -> Result<Vec<u8>> {
    if sigma.len() != inst.n() {
        return Err(Error::InvalidOrdering("ordering length differs from n".into()));
    }
    let high = high_clusters(inst)?;
    let labels: Vec<bool> = sigma.slots().iter().map(|&a| high[inst.cluster_of(a)]).collect();
    labels_index_set(&high, &labels)
}

fn labels_index_set(high_clusters: &[bool], slot_high: &[bool]) -> Result<Vec<u8>> {
    if high_clusters.iter().all(|&h| h) || high_clusters.iter().all(|&h| !h) {
        return Ok(vec![0; slot_high.len().saturating_sub(1)]);
    }
    index_set_for_labels(slot_high)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub labels: Vec<u8>,
    pub types: String,
    pub slack: String,
}

/// Outcome of checking a certificate against every dual row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    #[serde(serialize_with = "ser_q")]
    pub lower_bound: Q,
    pub lower_bound_approx: f64,
    /// Rows of the unreduced dual, one per (profile, ordering).
    pub rows_checked: u128,
    /// Rows of the reduced dual actually evaluated.
    pub canonical_rows_checked: usize,
    #[serde(serialize_with = "ser_q")]
    pub typical_mass: Q,
    pub violations: Vec<Violation>,
}

fn ser_q<S: serde::Serializer>(q: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_q(q))
}

impl CertificateReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The certificate as explicit dual values: `z` per class and `y` per
/// (label sequence, slot), laid out like the dual program's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub z: Vec<Q>,
    pub y: Vec<Vec<u8>>,
}

pub fn build_certificate(inst: &Instance, layout: &Layout, set: &TypicalSet) -> Result<Certificate> {
    if inst.team_size() != 2 {
        return Err(Error::Unsupported("certificates are built for pairs".into()));
    }
    let high = high_clusters(inst)?;
    let sizes = inst.sizes();
    let n = q_from_usize(inst.n());
    let z = layout
        .classes
        .iter()
        .zip(&layout.class_probs)
        .map(
            |(hk, p)| {
                if set.contains_counts(inst, hk) {
                    p * q_from_usize(fb_c_from_counts(&sizes, hk))
                } else {
                    -(p * &n)
                }
            },
        )
        .collect();
    let y = layout
        .labels
        .iter()
        .map(|c| {
            let slot_high: Vec<bool> = c.iter().map(|&k| high[k as usize]).collect();
            labels_index_set(&high, &slot_high)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Certificate { z, y })
}

/// Builds the certificate and checks every reduced dual row exactly.
pub fn verify_dual_certificate(inst: &Instance, set: &TypicalSet, cap: u128, exec: Exec) -> Result<CertificateReport> {
    let layout = Layout::new(inst, cap)?;
    let cert = build_certificate(inst, &layout, set)?;
    let n = layout.n;
    let per_label: Vec<Vec<Violation>> = exec.map_range(layout.labels.len(), |c| {
        let y = &cert.y[c];
        let mut bad = Vec::new();
        for bits in 0..1u64 << n {
            let t = layout.types(bits);
            let h = layout.class_of(c, &t);
            let p = &layout.class_probs[h];
            if p.is_zero() {
                continue;
            }
            let shift: i64 = (0..n - 1).map(|i| y[i] as i64 * (t[i] as i64 - t[i + 1] as i64)).sum();
            let m00 = t.chunks(2).filter(|pair| pair[0] == 0 && pair[1] == 0).count();
            // Row divided by the positive class probability.
            let lhs = &cert.z[h] / p + Q::from_integer(shift.into());
            let slack = q_from_usize(m00) - lhs;
            if slack < Q::zero() {
                bad.push(Violation {
                    labels: layout.labels[c].clone(),
                    types: t.iter().map(|v| char::from(b'0' + v)).collect(),
                    slack: fmt_q(&slack),
                });
            }
        }
        bad
    });
    let violations: Vec<Violation> = per_label.into_iter().flatten().collect();
    let lower_bound: Q = cert.z.iter().sum();
    let typical_mass = layout
        .classes
        .iter()
        .zip(&layout.class_probs)
        .filter(|(hk, _)| set.contains_counts(inst, hk))
        .map(|(_, p)| p.clone())
        .sum();
    let relabelings: u128 = inst.sizes().iter().map(|&s| (1..=s as u128).product::<u128>()).product();
    Ok(CertificateReport {
        lower_bound_approx: to_f64(&lower_bound),
        lower_bound,
        rows_checked: (layout.num_columns() as u128) * relabelings,
        canonical_rows_checked: layout.num_columns(),
        typical_mass,
        violations,
    })
}

/// Sums the certificate's objective, `Σ_h z_h`.
pub fn certificate_value(cert: &Certificate) -> Q {
    cert.z.iter().fold(Q::zero(), |acc, z| acc + z)
}

/// Places the certificate into the dual program's variable vector.
pub fn certificate_point(cert: &Certificate) -> Vec<Q> {
    cert.z
        .iter()
        .cloned()
        .chain(cert.y.iter().flat_map(|y| y.iter().map(|&v| if v == 1 { Q::one() } else { Q::zero() })))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::programs::build_dual_lp;
    use crate::model::Awareness;
    use crate::numeric::frac;

    #[test]
    fn identity_ordering_has_empty_index_set() {
        let inst = Instance::pairs(&[2, 2], &["0.9", "0.1"], ["0", "1", "1.5"], Awareness::SelfAgnostic).unwrap();
        assert_eq!(construct_index_set(&inst, &Ordering::identity(4)).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn one_swap_covers_the_swapped_slots() {
        // A ≽ C ≽ B ≽ D with A, B high and C, D low: C intrudes at slot 1, B
        // strays to slot 2.
        let inst = Instance::pairs(&[2, 2], &["0.9", "0.1"], ["0", "1", "1.5"], Awareness::SelfAgnostic).unwrap();
        let sigma = Ordering::new(vec![0, 2, 1, 3]).unwrap();
        let y = construct_index_set(&inst, &sigma).unwrap();
        assert_eq!(y, vec![0, 1, 0]);
        // Σ_{i∈I} (t_i − t_{i+1}) telescopes to t_1 − t_2 for every profile.
        for bits in 0..16u32 {
            let t: Vec<i64> = (0..4).map(|s| ((bits >> s) & 1) as i64).collect();
            let sum: i64 = (0..3).map(|i| y[i] as i64 * (t[i] - t[i + 1])).sum();
            assert_eq!(sum, t[1] - t[2]);
        }
    }

    #[test]
    fn certificate_is_feasible_for_small_instance() {
        let inst = Instance::pairs(&[2, 2], &["0.9", "0.1"], ["0", "1", "1.5"], Awareness::SelfAgnostic).unwrap();
        let set = TypicalSet::rational(&inst, vec![frac(1, 4), frac(1, 4)]).unwrap();
        let report = verify_dual_certificate(&inst, &set, 1 << 20, Exec::Sequential).unwrap();
        assert!(report.is_feasible(), "{:?}", report.violations);
        assert_eq!(report.rows_checked, 24 * 16);
        let layout = Layout::new(&inst, 1 << 20).unwrap();
        let cert = build_certificate(&inst, &layout, &set).unwrap();
        let dual = build_dual_lp(&inst, 1 << 20, None).unwrap();
        assert_eq!(dual.model.first_violation(&certificate_point(&cert)), None);
        assert_eq!(certificate_value(&cert), report.lower_bound);
    }
}
