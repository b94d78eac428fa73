//! Exact finite probability: rational-valued distributions, conditioning,
//! products, statistical distance, and reusable checkers for the probability
//! lemmas used by the frontier and attack analyses.
//!
//! Outcome keys are opaque ordered byte strings; every map is a `BTreeMap` so
//! iteration order (and hence every downstream tie-break) is deterministic.
//! All arithmetic is exact; no floating point appears on any probability path.

use crate::ratio::{ratio_str, serde_ratio};
use crate::Rational;
use num::{One, Signed, Zero};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Opaque ordered outcome key.
pub type Outcome = Vec<u8>;

/// Convenience constructor for string-labelled outcomes in tests and reports.
pub fn key(s: &str) -> Outcome {
    s.as_bytes().to_vec()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProbError {
    #[error("masses must be non-negative and sum to exactly 1 ({0})")]
    InvalidDistribution(String),
    #[error("conditioning on a zero-probability event")]
    ZeroConditioning,
    #[error("event has zero probability")]
    ZeroEvent,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// A finite distribution over opaque outcome keys. Zero-mass outcomes are not
/// stored; the support is the ordered key set of the mass map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteDistribution {
    mass: BTreeMap<Outcome, Rational>,
}

impl FiniteDistribution {
    /// Build from (outcome, mass) pairs; masses for repeated outcomes add up.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (Outcome, Rational)>,
    ) -> Result<Self, ProbError> {
        let mut mass: BTreeMap<Outcome, Rational> = BTreeMap::new();
        for (k, m) in pairs {
            if m.is_negative() {
                return Err(ProbError::InvalidDistribution(format!(
                    "negative mass {}",
                    ratio_str(&m)
                )));
            }
            if !m.is_zero() {
                *mass.entry(k).or_insert_with(Rational::zero) += m;
            }
        }
        let total: Rational = mass.values().cloned().sum();
        if !total.is_one() {
            return Err(ProbError::InvalidDistribution(format!(
                "total mass {}",
                ratio_str(&total)
            )));
        }
        Ok(FiniteDistribution { mass })
    }

    pub fn point(outcome: Outcome) -> Self {
        FiniteDistribution {
            mass: BTreeMap::from([(outcome, Rational::one())]),
        }
    }

    pub fn uniform(outcomes: impl IntoIterator<Item = Outcome>) -> Self {
        let set: BTreeSet<Outcome> = outcomes.into_iter().collect();
        assert!(!set.is_empty(), "uniform distribution needs a non-empty support");
        let n = set.len() as i64;
        let p = Rational::new(1.into(), n.into());
        FiniteDistribution {
            mass: set.into_iter().map(|k| (k, p.clone())).collect(),
        }
    }

    pub fn mass(&self, outcome: &Outcome) -> Rational {
        self.mass.get(outcome).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = &Outcome> {
        self.mass.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Outcome, &Rational)> {
        self.mass.iter()
    }

    /// Total mass of an event given by a predicate.
    pub fn event_mass(&self, pred: impl Fn(&Outcome) -> bool) -> Rational {
        self.mass
            .iter()
            .filter(|(k, _)| pred(k))
            .map(|(_, m)| m.clone())
            .sum()
    }
}

/// A finite joint distribution over ordered pairs of outcome keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDistribution {
    mass: BTreeMap<(Outcome, Outcome), Rational>,
}

impl JointDistribution {
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = ((Outcome, Outcome), Rational)>,
    ) -> Result<Self, ProbError> {
        let mut mass: BTreeMap<(Outcome, Outcome), Rational> = BTreeMap::new();
        for (k, m) in pairs {
            if m.is_negative() {
                return Err(ProbError::InvalidDistribution(format!(
                    "negative mass {}",
                    ratio_str(&m)
                )));
            }
            if !m.is_zero() {
                *mass.entry(k).or_insert_with(Rational::zero) += m;
            }
        }
        let total: Rational = mass.values().cloned().sum();
        if !total.is_one() {
            return Err(ProbError::InvalidDistribution(format!(
                "total mass {}",
                ratio_str(&total)
            )));
        }
        Ok(JointDistribution { mass })
    }

    pub fn mass(&self, k: &(Outcome, Outcome)) -> Rational {
        self.mass.get(k).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Outcome, Outcome), &Rational)> {
        self.mass.iter()
    }

    pub fn marginal_left(&self) -> FiniteDistribution {
        let mut mass: BTreeMap<Outcome, Rational> = BTreeMap::new();
        for ((l, _), m) in &self.mass {
            *mass.entry(l.clone()).or_insert_with(Rational::zero) += m.clone();
        }
        FiniteDistribution { mass }
    }

    pub fn marginal_right(&self) -> FiniteDistribution {
        let mut mass: BTreeMap<Outcome, Rational> = BTreeMap::new();
        for ((_, r), m) in &self.mass {
            *mass.entry(r.clone()).or_insert_with(Rational::zero) += m.clone();
        }
        FiniteDistribution { mass }
    }

    /// Swap left and right components.
    pub fn swapped(&self) -> JointDistribution {
        JointDistribution {
            mass: self
                .mass
                .iter()
                .map(|((l, r), m)| ((r.clone(), l.clone()), m.clone()))
                .collect(),
        }
    }
}

/// Outcome of a lemma check: both sides of the inequality plus the verdict.
/// A `holds == false` on valid inputs signals an implementation bug, not a
/// property of the inputs — the lemmas are theorems.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    #[serde(with = "serde_ratio")]
    pub lhs: Rational,
    #[serde(with = "serde_ratio")]
    pub rhs: Rational,
    pub holds: bool,
    pub note: Option<String>,
}

/// SD(p, q) = 1/2 * sum over the union support of |p(s) - q(s)|.
pub fn statistical_distance(p: &FiniteDistribution, q: &FiniteDistribution) -> Rational {
    let keys: BTreeSet<&Outcome> = p.support().chain(q.support()).collect();
    let sum: Rational = keys
        .into_iter()
        .map(|k| (p.mass(k) - q.mass(k)).abs())
        .sum();
    sum / Rational::from_integer(2.into())
}

/// SD between two joint distributions (over the union of pair supports).
pub fn statistical_distance_joint(p: &JointDistribution, q: &JointDistribution) -> Rational {
    let keys: BTreeSet<&(Outcome, Outcome)> =
        p.mass.keys().chain(q.mass.keys()).collect();
    let sum: Rational = keys
        .into_iter()
        .map(|k| (p.mass(k) - q.mass(k)).abs())
        .sum();
    sum / Rational::from_integer(2.into())
}

/// Renormalized restriction of `d` to the outcomes satisfying `pred`.
/// Zero-probability events are a hard error by default; see
/// [`condition_zero_ok`] for the opt-in zero convention.
pub fn condition(
    d: &FiniteDistribution,
    pred: impl Fn(&Outcome) -> bool,
) -> Result<FiniteDistribution, ProbError> {
    condition_zero_ok(d, pred).ok_or(ProbError::ZeroConditioning)
}

/// Conditioning under the zero convention: a zero-probability event yields
/// `None` (the "null distribution" marker; any probability taken against it
/// is 0 by convention).
pub fn condition_zero_ok(
    d: &FiniteDistribution,
    pred: impl Fn(&Outcome) -> bool,
) -> Option<FiniteDistribution> {
    let total = d.event_mass(&pred);
    if total.is_zero() {
        return None;
    }
    let mass = d
        .mass
        .iter()
        .filter(|(k, _)| pred(k))
        .map(|(k, m)| (k.clone(), m.clone() / total.clone()))
        .collect();
    Some(FiniteDistribution { mass })
}

/// Independent product of two distributions.
pub fn product(p: &FiniteDistribution, q: &FiniteDistribution) -> JointDistribution {
    let mut mass = BTreeMap::new();
    for (l, pm) in p.iter() {
        for (r, qm) in q.iter() {
            mass.insert((l.clone(), r.clone()), pm.clone() * qm.clone());
        }
    }
    JointDistribution { mass }
}

/// One realization of a finite sequence of correlated random variables:
/// the full message path, whether the side event X holds, and the probability
/// of this joint realization. A set of these with total mass 1 describes the
/// whole sequence model for [`check_inverse_lemma`].
#[derive(Debug, Clone)]
pub struct SequencePath {
    pub msgs: Vec<Outcome>,
    pub event_x: bool,
    pub prob: Rational,
}

/// First-crossing lemma: with S = "some non-empty prefix of the sequence has
/// P[X | prefix] < theta", it holds that P[S | X] < theta / P[X].
///
/// At theta = 0 the crossing condition `P[X|prefix] < 0` is unsatisfiable, so
/// S is empty and the check degenerates to lhs = 0 (reported as holding).
pub fn check_inverse_lemma(
    paths: &[SequencePath],
    theta: &Rational,
) -> Result<CheckResult, ProbError> {
    let total: Rational = paths.iter().map(|p| p.prob.clone()).sum();
    if !total.is_one() {
        return Err(ProbError::InvalidDistribution(format!(
            "path masses sum to {}",
            ratio_str(&total)
        )));
    }
    if paths.iter().any(|p| p.prob.is_negative()) {
        return Err(ProbError::InvalidDistribution("negative path mass".into()));
    }
    let p_x: Rational = paths
        .iter()
        .filter(|p| p.event_x)
        .map(|p| p.prob.clone())
        .sum();
    if p_x.is_zero() {
        return Err(ProbError::ZeroEvent);
    }

    // Conditional P[X | prefix] for every realized non-empty prefix.
    let mut prefix_total: BTreeMap<Vec<Outcome>, Rational> = BTreeMap::new();
    let mut prefix_x: BTreeMap<Vec<Outcome>, Rational> = BTreeMap::new();
    for p in paths {
        for t in 1..=p.msgs.len() {
            let pref = p.msgs[..t].to_vec();
            *prefix_total.entry(pref.clone()).or_insert_with(Rational::zero) += p.prob.clone();
            if p.event_x {
                *prefix_x.entry(pref).or_insert_with(Rational::zero) += p.prob.clone();
            }
        }
    }
    let crosses = |pref: &[Outcome]| -> bool {
        let tot = &prefix_total[pref];
        if tot.is_zero() {
            return false;
        }
        let px = prefix_x
            .get(pref)
            .cloned()
            .unwrap_or_else(Rational::zero);
        px / tot.clone() < *theta
    };

    // P[S and X]: a path is in S iff any of its non-empty prefixes crosses.
    let mut p_s_and_x = Rational::zero();
    for p in paths {
        if !p.event_x || p.prob.is_zero() {
            continue;
        }
        if (1..=p.msgs.len()).any(|t| crosses(&p.msgs[..t])) {
            p_s_and_x += p.prob.clone();
        }
    }

    let lhs = p_s_and_x / p_x.clone();
    let rhs = theta.clone() / p_x;
    let holds = if theta.is_zero() { lhs.is_zero() } else { lhs < rhs };
    Ok(CheckResult {
        lhs,
        rhs,
        holds,
        note: None,
    })
}

/// Conditioning blow-up lemma: if P[a in E] >= delta > 0 then
/// SD(a|E, b|E) <= SD(a,b) / delta.
pub fn check_blow_lemma(
    a: &FiniteDistribution,
    b: &FiniteDistribution,
    event: &BTreeSet<Outcome>,
    delta: &Rational,
) -> Result<CheckResult, ProbError> {
    if !delta.is_positive() {
        return Err(ProbError::PreconditionViolated("delta must be > 0".into()));
    }
    let pa = a.event_mass(|k| event.contains(k));
    let pb = b.event_mass(|k| event.contains(k));
    if pa < *delta {
        return Err(ProbError::PreconditionViolated(format!(
            "P[a in E] = {} < delta = {}",
            ratio_str(&pa),
            ratio_str(delta)
        )));
    }
    if !pb.is_positive() {
        return Err(ProbError::PreconditionViolated("P[b in E] = 0".into()));
    }
    let a_e = condition(a, |k| event.contains(k)).expect("positive mass checked");
    let b_e = condition(b, |k| event.contains(k)).expect("positive mass checked");
    let lhs = statistical_distance(&a_e, &b_e);
    let rhs = statistical_distance(a, b) / delta.clone();
    let holds = lhs <= rhs;
    Ok(CheckResult {
        lhs,
        rhs,
        holds,
        note: None,
    })
}

/// Near-product lemma: if SD(joint, u x v) = eps for *some* product u x v,
/// then SD(joint, marginal-left x marginal-right) <= 3 eps.
pub fn check_close_to_margin(
    joint: &JointDistribution,
    u: &FiniteDistribution,
    v: &FiniteDistribution,
) -> CheckResult {
    let eps = statistical_distance_joint(joint, &product(u, v));
    let marg = product(&joint.marginal_left(), &joint.marginal_right());
    let lhs = statistical_distance_joint(joint, &marg);
    let rhs = Rational::from_integer(3.into()) * eps.clone();
    CheckResult {
        holds: lhs <= rhs,
        lhs,
        rhs,
        note: Some(format!("eps = {}", ratio_str(&eps))),
    }
}

/// Resampling lemma: let (a,b) be a joint, c a (possibly randomized) leak of b,
/// and a' ~ (a | c). Then SD((b,a'), b x a) <= SD((a,b), a x b).
///
/// `leak` maps each right outcome to a distribution over leak values and must
/// be defined on the full right support.
pub fn check_still_prod(
    joint: &JointDistribution,
    leak: &dyn Fn(&Outcome) -> FiniteDistribution,
) -> CheckResult {
    let a = joint.marginal_left();
    let b = joint.marginal_right();

    // P[c] and P[a = s | c] by total expansion over b.
    let mut p_c: BTreeMap<Outcome, Rational> = BTreeMap::new();
    let mut p_ac: BTreeMap<(Outcome, Outcome), Rational> = BTreeMap::new(); // (a, c) joint
    for ((av, bv), m) in joint.iter() {
        for (cv, cm) in leak(bv).iter() {
            let w = m.clone() * cm.clone();
            *p_c.entry(cv.clone()).or_insert_with(Rational::zero) += w.clone();
            *p_ac
                .entry((av.clone(), cv.clone()))
                .or_insert_with(Rational::zero) += w;
        }
    }

    // (b, a') mass: sum over c of P[b, c] * P[a' = a | c].
    let mut ba: BTreeMap<(Outcome, Outcome), Rational> = BTreeMap::new();
    for (bv, bm) in b.iter() {
        for (cv, cm) in leak(bv).iter() {
            let pc = &p_c[cv];
            if pc.is_zero() {
                continue;
            }
            for (av, _) in a.iter() {
                let pac = p_ac
                    .get(&(av.clone(), cv.clone()))
                    .cloned()
                    .unwrap_or_else(Rational::zero);
                if pac.is_zero() {
                    continue;
                }
                let w = bm.clone() * cm.clone() * pac / pc.clone();
                *ba.entry((bv.clone(), av.clone()))
                    .or_insert_with(Rational::zero) += w;
            }
        }
    }
    let ba = JointDistribution { mass: ba };

    let lhs = statistical_distance_joint(&ba, &product(&b, &a));
    let rhs = statistical_distance_joint(joint, &product(&a, &b));
    CheckResult {
        holds: lhs <= rhs,
        lhs,
        rhs,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat;

    fn d(pairs: &[(&str, (i64, i64))]) -> FiniteDistribution {
        FiniteDistribution::from_pairs(pairs.iter().map(|(k, (n, m))| (key(k), rat(*n, *m))))
            .unwrap()
    }

    #[test]
    fn sd_trivial_cases() {
        let u = FiniteDistribution::uniform([key("a"), key("b")]);
        let p = FiniteDistribution::point(key("a"));
        assert_eq!(statistical_distance(&u, &u), rat(0, 1));
        assert_eq!(statistical_distance(&p, &u), rat(1, 2));
    }

    #[test]
    fn sd_against_brute_force_reference() {
        // Frozen 4-outcome instance: direct half-sum of absolute differences.
        let p = d(&[("a", (1, 8)), ("b", (3, 8)), ("c", (1, 4)), ("d", (1, 4))]);
        let q = d(&[("a", (1, 2)), ("b", (1, 8)), ("c", (1, 8)), ("e", (1, 4))]);
        // |1/8-1/2| + |3/8-1/8| + |1/4-1/8| + |1/4-0| + |0-1/4| = 3/8+1/4+1/8+1/4+1/4 = 5/4.
        assert_eq!(statistical_distance(&p, &q), rat(5, 8));
    }

    #[test]
    fn conditioning() {
        let u = FiniteDistribution::uniform([key("1"), key("2"), key("3"), key("4")]);
        let even = condition(&u, |k| k == &key("2") || k == &key("4")).unwrap();
        assert_eq!(even, FiniteDistribution::uniform([key("2"), key("4")]));
        let all = condition(&u, |_| true).unwrap();
        assert_eq!(all, u);
        assert_eq!(condition(&u, |_| false), Err(ProbError::ZeroConditioning));
        assert!(condition_zero_ok(&u, |_| false).is_none());
    }

    #[test]
    fn product_properties() {
        let p = FiniteDistribution::point(key("a"));
        let q = FiniteDistribution::point(key("b"));
        let j = product(&p, &q);
        assert_eq!(j.mass(&(key("a"), key("b"))), rat(1, 1));

        let u2 = FiniteDistribution::uniform([key("a"), key("b")]);
        let u3 = FiniteDistribution::uniform([key("x"), key("y"), key("z")]);
        let j = product(&u2, &u3);
        assert_eq!(j.marginal_left(), u2);
        assert_eq!(j.marginal_right(), u3);
        for (_, m) in j.iter() {
            assert_eq!(*m, rat(1, 6));
        }
    }

    #[test]
    fn inverse_lemma_independent_event() {
        // X independent of the sequence: P[X|prefix] = P[X] everywhere, so with
        // theta < P[X] no prefix crosses and S is empty.
        let paths = vec![
            SequencePath { msgs: vec![key("0")], event_x: true, prob: rat(1, 4) },
            SequencePath { msgs: vec![key("0")], event_x: false, prob: rat(1, 4) },
            SequencePath { msgs: vec![key("1")], event_x: true, prob: rat(1, 4) },
            SequencePath { msgs: vec![key("1")], event_x: false, prob: rat(1, 4) },
        ];
        let r = check_inverse_lemma(&paths, &rat(1, 4)).unwrap();
        assert_eq!(r.lhs, rat(0, 1));
        assert!(r.holds);
    }

    #[test]
    fn inverse_lemma_theta_zero() {
        let paths = vec![
            SequencePath { msgs: vec![key("0")], event_x: true, prob: rat(1, 2) },
            SequencePath { msgs: vec![key("1")], event_x: false, prob: rat(1, 2) },
        ];
        let r = check_inverse_lemma(&paths, &rat(0, 1)).unwrap();
        assert_eq!(r.lhs, rat(0, 1));
        assert!(r.holds);
    }

    #[test]
    fn inverse_lemma_correlated_depth_two() {
        // Hand-built depth-2 binary sequence with X correlated to the path.
        // Exhaustive enumeration (the oracle) freezes lhs and rhs below.
        //   path 00: P 1/4, X with prob 1  -> contributes (1/4, X)
        //   path 01: P 1/4, X never
        //   path 10: P 1/4, X with prob 1/2 (split into two path records)
        //   path 11: P 1/4, X never
        let paths = vec![
            SequencePath { msgs: vec![key("0"), key("0")], event_x: true, prob: rat(1, 4) },
            SequencePath { msgs: vec![key("0"), key("1")], event_x: false, prob: rat(1, 4) },
            SequencePath { msgs: vec![key("1"), key("0")], event_x: true, prob: rat(1, 8) },
            SequencePath { msgs: vec![key("1"), key("0")], event_x: false, prob: rat(1, 8) },
            SequencePath { msgs: vec![key("1"), key("1")], event_x: false, prob: rat(1, 4) },
        ];
        // P[X] = 3/8. theta = 2/5:
        //   prefix "0": P[X|.] = 1/2 (no cross); "00": 1 (no); "01": 0 (cross)
        //   prefix "1": P[X|.] = 1/4 (cross) -> every X-path through "1" is in S.
        // P[S and X] = 1/8 (path 10 with X), lhs = (1/8)/(3/8) = 1/3, rhs = (2/5)/(3/8) = 16/15.
        let r = check_inverse_lemma(&paths, &rat(2, 5)).unwrap();
        assert_eq!(r.lhs, rat(1, 3));
        assert_eq!(r.rhs, rat(16, 15));
        assert!(r.holds);
    }

    #[test]
    fn blow_lemma_identity_and_equality_configuration() {
        let a = d(&[("a", (1, 2)), ("b", (1, 4)), ("c", (1, 4))]);
        let e: BTreeSet<Outcome> = [key("a"), key("b")].into();
        let r = check_blow_lemma(&a, &a, &e, &rat(1, 2)).unwrap();
        assert_eq!(r.lhs, rat(0, 1));
        assert!(r.holds);

        // Equality configuration: the disagreement set {s : a(s) != b(s)} lies
        // inside E and P[a in E] = delta exactly. Then lhs = rhs.
        let a = d(&[("a", (1, 4)), ("b", (1, 4)), ("c", (1, 2))]);
        let b = d(&[("a", (3, 8)), ("b", (1, 8)), ("c", (1, 2))]);
        let e: BTreeSet<Outcome> = [key("a"), key("b")].into();
        let delta = rat(1, 2); // = P[a in E]
        let r = check_blow_lemma(&a, &b, &e, &delta).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert!(r.holds);
    }

    #[test]
    fn blow_lemma_precondition() {
        let a = d(&[("a", (1, 4)), ("b", (3, 4))]);
        let e: BTreeSet<Outcome> = [key("a")].into();
        assert!(matches!(
            check_blow_lemma(&a, &a, &e, &rat(1, 2)),
            Err(ProbError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn close_to_margin_trivial() {
        let u = FiniteDistribution::uniform([key("a"), key("b")]);
        let v = FiniteDistribution::uniform([key("x"), key("y")]);
        let j = product(&u, &v);
        let r = check_close_to_margin(&j, &u, &v);
        assert_eq!(r.lhs, rat(0, 1));
        assert!(r.holds);
    }

    #[test]
    fn still_prod_trivial_cases() {
        // Independent joint, leak = identity: lhs must be 0.
        let u = FiniteDistribution::uniform([key("a"), key("b")]);
        let v = FiniteDistribution::uniform([key("x"), key("y")]);
        let j = product(&u, &v);
        let r = check_still_prod(&j, &|b| FiniteDistribution::point(b.clone()));
        assert_eq!(r.lhs, rat(0, 1));
        assert_eq!(r.rhs, rat(0, 1));
        assert!(r.holds);

        // Constant leak on a correlated joint: a' is a fresh copy of a, so
        // (b, a') is exactly the product and lhs = 0 while rhs > 0.
        let j = JointDistribution::from_pairs([
            ((key("a"), key("x")), rat(1, 2)),
            ((key("b"), key("y")), rat(1, 2)),
        ])
        .unwrap();
        let r = check_still_prod(&j, &|_| FiniteDistribution::point(key("c")));
        assert_eq!(r.lhs, rat(0, 1));
        assert_eq!(r.rhs, rat(1, 2));
        assert!(r.holds);
    }

    #[test]
    fn still_prod_correlated_with_full_leak() {
        // Full leak of b from a perfectly correlated joint: a' ~ (a | b), so
        // (b, a') equals the original joint (up to swap) and lhs = rhs.
        let j = JointDistribution::from_pairs([
            ((key("a"), key("x")), rat(1, 2)),
            ((key("b"), key("y")), rat(1, 2)),
        ])
        .unwrap();
        let r = check_still_prod(&j, &|b| FiniteDistribution::point(b.clone()));
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.rhs, rat(1, 2));
        assert!(r.holds);
    }
}
