//! Frontier analysis over exact transcript trees.
//!
//! A frontier is an antichain of tree nodes defined by a "first time on the
//! path" condition. The X-frontier collects the first nodes where some Alice
//! input pair is distinguished by a factor above `1 + delta`, witnessed by a
//! Bob input that is still at least `theta`-likely; the Y-frontier is the
//! mirror image. The zero-threshold variants drop the likelihood restriction.
//!
//! On top of the frontiers this module evaluates, in exact rationals, the
//! three numeric claims the wider analysis rests on: the frontiers are nearly
//! full (missing them costs only a small multiple of the protocol's error),
//! the zero-threshold frontier rarely appears strictly above both threshold
//! frontiers, and the mass of threshold-frontier nodes whose predecessor
//! precedes the opposite frontier is covered by three simpler events.
//!
//! All conditionals follow the convention that probabilities conditioned on a
//! zero-probability event are zero, and the two root dummies are never
//! frontier members.

use crate::exec::{apred, bpred, measure_semihonest_error, node_id_str, NodeId, TranscriptTree, TreeMsg};
use crate::func::FunctionTable;
use crate::ratio::{pow, rat, ratio_str, to_f64};
use crate::{Rational, Side};
use num::{One, Zero};
use std::collections::BTreeMap;

/// Which frontier to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Flavor {
    /// X-frontier with the theta likelihood restriction.
    FxTheta,
    /// Y-frontier with the theta likelihood restriction.
    FyTheta,
    /// X-frontier with theta treated as zero.
    FxZero,
    /// Y-frontier with theta treated as zero.
    FyZero,
}

impl Flavor {
    pub fn side(self) -> Side {
        match self {
            Flavor::FxTheta | Flavor::FxZero => Side::Alice,
            Flavor::FyTheta | Flavor::FyZero => Side::Bob,
        }
    }

    fn thresholded(self) -> bool {
        matches!(self, Flavor::FxTheta | Flavor::FyTheta)
    }
}

/// Analysis parameters. `mu = (1+delta)^N` is kept exactly; the fractional
/// roots `delta' = (1+delta)^(1/(|X|-1)) - 1` and the analogous `delta''`
/// are irrational in general, so they are carried as the exact base together
/// with the root order, and all comparisons against them are done on integer
/// powers. The f64 fields are display annotations only.
#[derive(Debug, Clone)]
pub struct FrontierParams {
    pub theta: Rational,
    pub delta: Rational,
    /// Tree depth N used for the derived constants.
    pub n: usize,
    /// (1+delta)^N, exact.
    pub mu: Rational,
    /// Root order of delta': |X| - 1 (at least 1).
    pub x_root: usize,
    /// Root order of delta'': |Y| - 1 (at least 1).
    pub y_root: usize,
    pub delta_prime_f64: f64,
    pub delta_double_prime_f64: f64,
}

impl FrontierParams {
    pub fn new(tree: &TranscriptTree, theta: Rational, delta: Rational) -> Self {
        assert!(theta >= Rational::zero(), "theta must be nonnegative");
        assert!(delta > Rational::zero(), "delta must be positive");
        let n = tree.claim_n();
        let base = Rational::one() + delta.clone();
        let mu = pow(&base, n as u32);
        let x_root = (tree.nx.max(2)) - 1;
        let y_root = (tree.ny.max(2)) - 1;
        let delta_prime_f64 = to_f64(&base).powf(1.0 / x_root as f64) - 1.0;
        let delta_double_prime_f64 = to_f64(&base).powf(1.0 / y_root as f64) - 1.0;
        FrontierParams {
            theta,
            delta,
            n,
            mu,
            x_root,
            y_root,
            delta_prime_f64,
            delta_double_prime_f64,
        }
    }

    /// Defaults: delta = 1/N and theta = 1/(32 |X| |Y|).
    pub fn defaults(tree: &TranscriptTree) -> Self {
        let n = tree.claim_n() as i64;
        let theta = rat(1, 32 * (tree.nx as i64) * (tree.ny as i64));
        FrontierParams::new(tree, theta, rat(1, n))
    }
}

/// The witness that put a node on a frontier: for X flavors, the likely Bob
/// input and the distinguished Alice pair (hi over lo); for Y flavors the
/// roles of the sides swap.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Witness {
    pub likely: usize,
    pub hi: usize,
    pub lo: usize,
}

/// A computed frontier: an antichain of nodes with their witnesses.
#[derive(Debug, Clone)]
pub struct FrontierSet {
    pub flavor: Flavor,
    pub threshold: Rational,
    pub members: BTreeMap<NodeId, Witness>,
}

impl FrontierSet {
    /// True if some member lies at or above `id` (i.e. is a prefix of it).
    pub fn hits_at_or_above(&self, id: &[TreeMsg]) -> bool {
        self.hit_len(id).is_some()
    }

    /// Length of the member prefix on the path to `id`, if any.
    pub fn hit_len(&self, id: &[TreeMsg]) -> Option<usize> {
        (0..=id.len()).find(|&k| self.members.contains_key(&id[..k].to_vec()))
    }

    /// Probability of passing through the frontier, uniform inputs.
    pub fn mass_uniform(&self, tree: &TranscriptTree) -> Rational {
        self.members.keys().map(|id| tree.mass_uniform(id)).sum()
    }

    /// Probability of passing through the frontier given the input pair.
    pub fn mass_given(&self, tree: &TranscriptTree, x: usize, y: usize) -> Rational {
        self.members.keys().map(|id| tree.reach(id, x, y)).sum()
    }

    fn assert_antichain(&self) {
        for a in self.members.keys() {
            for b in self.members.keys() {
                assert!(
                    a == b || !b.starts_with(a),
                    "frontier is not an antichain: {} above {}",
                    node_id_str(a),
                    node_id_str(b)
                );
            }
        }
    }

    /// Dump: node ids, witnesses, and per-input-pair masses.
    pub fn to_json(&self, tree: &TranscriptTree) -> String {
        let members: Vec<serde_json::Value> = self
            .members
            .iter()
            .map(|(id, w)| {
                let mut mass = BTreeMap::new();
                for x in 0..tree.nx {
                    for y in 0..tree.ny {
                        mass.insert(format!("{x},{y}"), ratio_str(&tree.reach(id, x, y)));
                    }
                }
                serde_json::json!({
                    "node": node_id_str(id),
                    "witness": w,
                    "mass": mass,
                })
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "flavor": self.flavor,
            "threshold": ratio_str(&self.threshold),
            "members": members,
        }))
        .expect("frontier json")
    }
}

/// P[v | w; x, y]: probability of reaching `v` from its ancestor `w` under
/// fixed inputs; zero when `w` itself is unreachable under them.
fn cond_reach(tree: &TranscriptTree, v: &[TreeMsg], w: &[TreeMsg], x: usize, y: usize) -> Rational {
    let den = tree.reach(w, x, y);
    if den.is_zero() {
        return Rational::zero();
    }
    tree.reach(v, x, y) / den
}

/// P[own input = idx | v] under uniform inputs (zero on zero-mass nodes).
pub(crate) fn input_posterior(tree: &TranscriptTree, id: &[TreeMsg], side: Side, idx: usize) -> Rational {
    let info = match tree.nodes.get(id) {
        Some(i) => i,
        None => return Rational::zero(),
    };
    let total: Rational = info.reach.values().cloned().sum();
    if total.is_zero() {
        return Rational::zero();
    }
    let hit: Rational = info
        .reach
        .iter()
        .filter(|((x, y), _)| match side {
            Side::Alice => *x == idx,
            Side::Bob => *y == idx,
        })
        .map(|(_, p)| p.clone())
        .sum();
    hit / total
}

/// First-hit scan for one frontier flavor. For each node, in ancestors-first
/// order, the node joins the frontier if no ancestor already has and some
/// witness satisfies the likelihood and distinguishing-ratio conditions.
/// Witnesses are recorded in lexicographic (likely, hi, lo) order.
pub fn compute_frontier(tree: &TranscriptTree, params: &FrontierParams, flavor: Flavor) -> FrontierSet {
    let theta = if flavor.thresholded() { params.theta.clone() } else { Rational::zero() };
    let ratio = Rational::one() + params.delta.clone();
    let side = flavor.side();
    let (own_n, opp_n) = match side {
        Side::Alice => (tree.nx, tree.ny),
        Side::Bob => (tree.ny, tree.nx),
    };
    let mut members: BTreeMap<NodeId, Witness> = BTreeMap::new();
    'node: for id in tree.nodes.keys() {
        if id.len() < 2 {
            continue; // root dummies carry no information
        }
        for k in 2..id.len() {
            if members.contains_key(&id[..k].to_vec()) {
                continue 'node;
            }
        }
        let pred = match side {
            Side::Alice => apred(id),
            Side::Bob => bpred(id),
        };
        for likely in 0..opp_n {
            if input_posterior(tree, id, side.other(), likely) < theta {
                continue;
            }
            let p = |own: usize| match side {
                Side::Alice => cond_reach(tree, id, &pred, own, likely),
                Side::Bob => cond_reach(tree, id, &pred, likely, own),
            };
            for hi in 0..own_n {
                let ph = p(hi);
                for lo in 0..own_n {
                    if hi == lo {
                        continue;
                    }
                    if ph > ratio.clone() * p(lo) {
                        members.insert(id.clone(), Witness { likely, hi, lo });
                        continue 'node;
                    }
                }
            }
        }
    }
    let set = FrontierSet { flavor, threshold: theta, members };
    set.assert_antichain();
    set
}

/// One evaluated claim: the measured left side, the bound it is checked
/// against (with the bound's formula recorded symbolically), and auxiliary
/// measured quantities.
#[derive(Debug, Clone)]
pub struct ClaimCheckReport {
    pub claim: String,
    pub lhs: Rational,
    pub rhs: Rational,
    pub rhs_formula: String,
    pub holds: bool,
    /// Set when a hypothesis of the claim fails; the numbers are still valid
    /// measurements but the bound is not promised to hold.
    pub advisory: Option<String>,
    pub extras: BTreeMap<String, Rational>,
}

impl ClaimCheckReport {
    pub fn to_json(&self) -> String {
        let extras: BTreeMap<&str, String> =
            self.extras.iter().map(|(k, v)| (k.as_str(), ratio_str(v))).collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "claim": self.claim,
            "lhs": ratio_str(&self.lhs),
            "lhs_f64": to_f64(&self.lhs),
            "rhs": ratio_str(&self.rhs),
            "rhs_f64": to_f64(&self.rhs),
            "rhs_formula": self.rhs_formula,
            "holds": self.holds,
            "advisory": self.advisory,
            "extras": extras,
        }))
        .expect("claim json")
    }
}

/// Probability of a full path avoiding the frontier, uniform and worst pair.
fn miss_masses(tree: &TranscriptTree, set: &FrontierSet) -> (Rational, Rational) {
    let uniform = Rational::one() - set.mass_uniform(tree);
    let mut worst = Rational::zero();
    for x in 0..tree.nx {
        for y in 0..tree.ny {
            worst = worst.max(Rational::one() - set.mass_given(tree, x, y));
        }
    }
    (uniform, worst)
}

/// Fullness check: missing either threshold frontier costs at most
/// p* = (5 + (1+delta)^N) nu0 + |X||Y| theta, uniformly and per input pair.
/// The bound assumes the function is undecomposable at the top level; when it
/// is not, the report is still computed and flagged advisory.
pub fn check_frontier_fullness(
    tree: &TranscriptTree,
    f: &FunctionTable,
    params: &FrontierParams,
) -> Result<ClaimCheckReport, crate::exec::ExecError> {
    let nu0 = measure_semihonest_error(tree, f)?.nu0();
    let domain = rat((tree.nx * tree.ny) as i64, 1);
    let rhs = (rat(5, 1) + params.mu.clone()) * nu0.clone() + domain * params.theta.clone();

    let fx = compute_frontier(tree, params, Flavor::FxTheta);
    let fy = compute_frontier(tree, params, Flavor::FyTheta);
    let (miss_x, worst_x) = miss_masses(tree, &fx);
    let (miss_y, worst_y) = miss_masses(tree, &fy);

    let holds = miss_x <= rhs && miss_y <= rhs && worst_x <= rhs && worst_y <= rhs;
    let advisory = if crate::func::is_undecomposable_top_level(f).unwrap_or(false) {
        None
    } else {
        Some("function is decomposable at the top level; the bound is advisory only".to_string())
    };
    let mut extras = BTreeMap::new();
    extras.insert("nu0".to_string(), nu0);
    extras.insert("miss_fy_uniform".to_string(), miss_y);
    extras.insert("miss_fx_worst_pair".to_string(), worst_x);
    extras.insert("miss_fy_worst_pair".to_string(), worst_y);
    Ok(ClaimCheckReport {
        claim: "frontier-fullness".to_string(),
        lhs: miss_x,
        rhs,
        rhs_formula: "(5 + (1+delta)^N) * nu0 + |X||Y| * theta".to_string(),
        holds,
        advisory,
        extras,
    })
}

/// Nodes of `first` reached with no member of `others` at or above them:
/// the strict-precedence event, as an antichain subset of `first`.
fn precedence_nodes<'a>(first: &'a FrontierSet, others: &[&FrontierSet]) -> Vec<&'a NodeId> {
    first
        .members
        .keys()
        .filter(|id| others.iter().all(|o| !o.hits_at_or_above(id)))
        .collect()
}

/// Precedence check: the zero-threshold Y-frontier appears strictly above
/// both threshold frontiers with probability at most
/// (1 + (1+delta)^N) |X||Y| theta. The symmetric X-side event is reported as
/// an extra.
pub fn check_minvsnomin(tree: &TranscriptTree, params: &FrontierParams) -> ClaimCheckReport {
    let fx = compute_frontier(tree, params, Flavor::FxTheta);
    let fy = compute_frontier(tree, params, Flavor::FyTheta);
    let fy0 = compute_frontier(tree, params, Flavor::FyZero);
    let fx0 = compute_frontier(tree, params, Flavor::FxZero);

    let lhs: Rational = precedence_nodes(&fy0, &[&fx, &fy])
        .into_iter()
        .map(|id| tree.mass_uniform(id))
        .sum();
    let lhs_x: Rational = precedence_nodes(&fx0, &[&fx, &fy])
        .into_iter()
        .map(|id| tree.mass_uniform(id))
        .sum();
    let domain = rat((tree.nx * tree.ny) as i64, 1);
    let rhs = (Rational::one() + params.mu.clone()) * domain * params.theta.clone();
    let holds = lhs <= rhs && lhs_x <= rhs;
    let mut extras = BTreeMap::new();
    extras.insert("precedence_fx0".to_string(), lhs_x);
    ClaimCheckReport {
        claim: "min-vs-nomin-precedence".to_string(),
        lhs,
        rhs,
        rhs_formula: "(1 + (1+delta)^N) * |X||Y| * theta".to_string(),
        holds,
        advisory: None,
        extras,
    }
}

/// The segment of the theta X-frontier whose Alice-predecessor occurs
/// strictly above `barrier` (the Y-frontier at threshold theta or zero).
fn x_segment_above<'a>(fx: &'a FrontierSet, barrier: &FrontierSet) -> Vec<&'a NodeId> {
    fx.members
        .keys()
        .filter(|id| !barrier.hits_at_or_above(&apred(id)))
        .collect()
}

fn y_segment_above<'a>(fy: &'a FrontierSet, barrier: &FrontierSet) -> Vec<&'a NodeId> {
    fy.members
        .keys()
        .filter(|id| !barrier.hits_at_or_above(&bpred(id)))
        .collect()
}

/// The segment used by the attack analysis: theta X-frontier nodes whose
/// Alice-predecessor occurs strictly above the zero-threshold Y-frontier.
pub fn tilde_x_segment(tree: &TranscriptTree, params: &FrontierParams) -> FrontierSet {
    let fx = compute_frontier(tree, params, Flavor::FxTheta);
    let fy0 = compute_frontier(tree, params, Flavor::FyZero);
    let keep: Vec<NodeId> = x_segment_above(&fx, &fy0).into_iter().cloned().collect();
    let members = fx
        .members
        .iter()
        .filter(|(id, _)| keep.contains(id))
        .map(|(id, w)| (id.clone(), w.clone()))
        .collect();
    FrontierSet { flavor: Flavor::FxTheta, threshold: fx.threshold.clone(), members }
}

/// Ordering check: the mass of theta X-frontier nodes whose predecessor
/// precedes the theta Y-frontier is covered by three events — missing the
/// zero Y-frontier, the zero Y-frontier preceding both theta frontiers, and
/// the tilde segment (predecessor above the zero Y-frontier). The symmetric
/// Y-side quantities ride along as extras.
pub fn check_frontier_ordering(tree: &TranscriptTree, params: &FrontierParams) -> ClaimCheckReport {
    let fx = compute_frontier(tree, params, Flavor::FxTheta);
    let fy = compute_frontier(tree, params, Flavor::FyTheta);
    let fx0 = compute_frontier(tree, params, Flavor::FxZero);
    let fy0 = compute_frontier(tree, params, Flavor::FyZero);

    let mass = |ids: Vec<&NodeId>| -> Rational { ids.into_iter().map(|id| tree.mass_uniform(id)).sum() };

    let breve_x = mass(x_segment_above(&fx, &fy));
    let breve_y = mass(y_segment_above(&fy, &fx));
    let tilde_x = mass(x_segment_above(&fx, &fy0));
    let tilde_y = mass(y_segment_above(&fy, &fx0));

    let miss_fy0 = Rational::one() - fy0.mass_uniform(tree);
    let miss_fx0 = Rational::one() - fx0.mass_uniform(tree);
    let prec_y = mass(precedence_nodes(&fy0, &[&fx, &fy]));
    let prec_x = mass(precedence_nodes(&fx0, &[&fx, &fy]));

    let rhs = miss_fy0.clone() + prec_y.clone() + tilde_x.clone();
    let rhs_y = miss_fx0.clone() + prec_x.clone() + tilde_y.clone();
    let holds = breve_x <= rhs && breve_y <= rhs_y;

    let mut extras = BTreeMap::new();
    extras.insert("breve_y".to_string(), breve_y);
    extras.insert("tilde_x".to_string(), tilde_x);
    extras.insert("tilde_y".to_string(), tilde_y);
    extras.insert("miss_fy0".to_string(), miss_fy0);
    extras.insert("miss_fx0".to_string(), miss_fx0);
    extras.insert("precedence_fy0".to_string(), prec_y);
    extras.insert("precedence_fx0".to_string(), prec_x);
    extras.insert("cover_y_side".to_string(), rhs_y);
    ClaimCheckReport {
        claim: "frontier-ordering-cover".to_string(),
        lhs: breve_x,
        rhs,
        rhs_formula: "P[miss F0_Y] + P[F0_Y precedes both] + P[tilde segment]".to_string(),
        holds,
        advisory: None,
        extras,
    }
}
