//! The curious-receiver attack suite.
//!
//! Given an exact transcript tree, this module picks a 2x2 minor of the
//! function (two sender inputs that agree on one receiver input but are
//! distinguished by the transcript under another), and measures the
//! distinguishing advantage of two passive strategies built on it:
//!
//! * the *message distinguisher*, which just watches the probability of
//!   Alice-children frontier nodes under the agreeing receiver input, and
//! * the *curious explorer*, which at every Alice-child node above the zero
//!   Y-frontier resamples its own view under the distinguishing input and
//!   re-runs the eavesdropper's and its own next step against an edited
//!   oracle, outputting 0 iff any exploration hits the target segment.
//!
//! The oracle editing answers a query from the resampled view or the
//! eavesdropper's view if they hold it, freshly if only the actual view held
//! it, and from the real oracle otherwise. When the safety event holds (the
//! sender's queries meet the receiver's actual or resampled queries only
//! inside the eavesdropper's set), the edited exploration is distributed
//! exactly like a faithful execution with the switched input; the switch
//! identity check verifies that equality in exact rationals.

use crate::bits::Bits;
use crate::dsl::{next_message, DslError, OracleAccess, PartyView};
use crate::exec::{
    apred, node_id_str, node_kind, sample_weighted, ExecError, NodeId, NodeKind, TranscriptTree,
    TreeMsg, World,
};
use crate::frontier::{self, compute_frontier, Flavor, FrontierParams, FrontierSet};
use crate::func::FunctionTable;
use crate::prob::CheckResult;
use crate::ratio::{cmp_vs_root, rat, ratio_str, to_f64};
use crate::{Rational, Side};
use num::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("the frontier segment driving the attack is empty")]
    EmptySegment,
    #[error("conditioning event has probability zero")]
    ZeroConditioning,
    #[error("could not link the distinguished inputs through equal-output steps")]
    HypothesisViolated(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

/// The selected 2x2 minor: f(x0, y0) = f(x1, y0), and the transcript
/// distinguishes x0 from x1 under y1 on the selected segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct MinorSelection {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

/// The minor together with its frontier segment, split by the kind of the
/// Alice-predecessor: `s_hat` under Alice nodes, `r_hat` under Alice children.
#[derive(Debug, Clone)]
pub struct Segment {
    pub minor: MinorSelection,
    pub f_hat: Vec<NodeId>,
    pub s_hat: Vec<NodeId>,
    pub r_hat: Vec<NodeId>,
    /// Mass of the segment under uniform inputs.
    pub mass: Rational,
}

/// Lexicographically least equal-output witness for each sender-input pair.
fn confusable_edge(f: &FunctionTable, a: usize, b: usize) -> Option<usize> {
    (0..f.y_labels.len()).find(|&y| f.sym(a, y) == f.sym(b, y))
}

/// Shortest chain from `from` to `to` through equal-output steps (BFS with
/// lexicographic tie-breaking on the predecessor).
fn shortest_chain(f: &FunctionTable, from: usize, to: usize) -> Option<Vec<usize>> {
    let n = f.x_labels.len();
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(a) = queue.pop_front() {
        if a == to {
            let mut chain = vec![to];
            let mut cur = to;
            while let Some(p) = prev[cur] {
                chain.push(p);
                cur = p;
            }
            chain.reverse();
            return Some(chain);
        }
        for b in 0..n {
            if !seen[b] && b != a && confusable_edge(f, a, b).is_some() {
                seen[b] = true;
                prev[b] = Some(a);
                queue.push_back(b);
            }
        }
    }
    None
}

fn cond_reach(tree: &TranscriptTree, v: &[TreeMsg], w: &[TreeMsg], x: usize, y: usize) -> Rational {
    let den = tree.reach(w, x, y);
    if den.is_zero() {
        return Rational::zero();
    }
    tree.reach(v, x, y) / den
}

/// Pick the minor and segment from the tilde X-segment: per node, walk a
/// shortest equal-output chain from the maximizing sender input to a
/// distinguished one, find the chain step that still carries a fractional
/// ratio gap, and keep the maximum-mass witness tuple (ties broken
/// lexicographically).
pub fn select_minor(
    tree: &TranscriptTree,
    f: &FunctionTable,
    params: &FrontierParams,
) -> Result<Segment, AttackError> {
    let tilde = frontier::tilde_x_segment(tree, params);
    if tilde.members.is_empty() {
        return Err(AttackError::EmptySegment);
    }
    let ratio = Rational::one() + params.delta.clone();
    let mut groups: BTreeMap<(usize, usize, usize, usize), Vec<NodeId>> = BTreeMap::new();
    for (u, witness) in &tilde.members {
        let w = apred(u);
        let y_star = witness.likely;
        let p = |x: usize| cond_reach(tree, u, &w, x, y_star);
        // The maximizing sender input, then the least distinguished one.
        let x_max = (0..tree.nx)
            .max_by(|a, b| p(*a).cmp(&p(*b)))
            .expect("nonempty domain");
        let x_max = (0..tree.nx).find(|&x| p(x) == p(x_max)).unwrap();
        let x_far = (0..tree.nx)
            .find(|&x| x != x_max && p(x_max) > ratio.clone() * p(x))
            .ok_or_else(|| {
                AttackError::HypothesisViolated(format!(
                    "no distinguished input at {}",
                    node_id_str(u)
                ))
            })?;
        let chain = shortest_chain(f, x_max, x_far).ok_or_else(|| {
            AttackError::HypothesisViolated(format!(
                "inputs {x_max} and {x_far} are not linked by equal-output steps"
            ))
        })?;
        let t = chain.len() - 1;
        let alpha = p(x_max);
        let mut picked = None;
        for i in 0..t {
            let a = p(chain[i]);
            let b = p(chain[i + 1]);
            // a > (1+delta)^(1/t) * b, compared via t-th powers, and the
            // step still carries at least a (1+delta) fraction of the max.
            let gap = cmp_vs_root(&a, &b, &ratio, t as u32) == std::cmp::Ordering::Greater;
            if gap && a.clone() * ratio.clone() > alpha {
                picked = Some(i);
                break;
            }
        }
        let i = picked.ok_or_else(|| {
            AttackError::HypothesisViolated(format!("no chain step found at {}", node_id_str(u)))
        })?;
        let (xu, xu2) = (chain[i], chain[i + 1]);
        let yu = confusable_edge(f, xu, xu2).expect("chain edges have witnesses");
        groups.entry((xu, xu2, yu, y_star)).or_default().push(u.clone());
    }
    let (tuple, nodes) = groups
        .iter()
        .max_by(|(ka, va), (kb, vb)| {
            let ma: Rational = va.iter().map(|u| tree.mass_uniform(u)).sum();
            let mb: Rational = vb.iter().map(|u| tree.mass_uniform(u)).sum();
            ma.cmp(&mb).then(kb.cmp(ka)) // larger mass, then lex-least tuple
        })
        .expect("nonempty groups");
    let minor = MinorSelection { x0: tuple.0, x1: tuple.1, y0: tuple.2, y1: tuple.3 };
    debug_assert_eq!(f.sym(minor.x0, minor.y0), f.sym(minor.x1, minor.y0));
    let mass = nodes.iter().map(|u| tree.mass_uniform(u)).sum();
    let mut s_hat = Vec::new();
    let mut r_hat = Vec::new();
    for u in nodes {
        let w = apred(u);
        match node_kind(w.len(), tree.rounds) {
            NodeKind::Anode => s_hat.push(u.clone()),
            _ => r_hat.push(u.clone()),
        }
    }
    Ok(Segment { minor, f_hat: nodes.clone(), s_hat, r_hat, mass })
}

// ---------------------------------------------------------------------------
// Oracle editing

/// Where an edited-oracle answer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum AnswerSource {
    SampledView,
    EveView,
    Fresh,
    Real,
}

/// The three-way routing of the curious exploration's oracle: resampled and
/// eavesdropper views first, then fresh answers for points only the actual
/// view held, then the real oracle.
pub fn edited_oracle_answer(
    q: &Bits,
    sampled_view: &[(Bits, Bits)],
    eve_view: &[(Bits, Bits)],
    actual_queries: &BTreeSet<Bits>,
    real_oracle: &mut dyn FnMut(&Bits) -> Bits,
    fresh_oracle: &mut dyn FnMut(&Bits) -> Bits,
) -> (Bits, AnswerSource) {
    if let Some((_, a)) = sampled_view.iter().find(|(sq, _)| sq == q) {
        return (a.clone(), AnswerSource::SampledView);
    }
    if let Some((_, a)) = eve_view.iter().find(|(eq, _)| eq == q) {
        return (a.clone(), AnswerSource::EveView);
    }
    if actual_queries.contains(q) {
        return (fresh_oracle(q), AnswerSource::Fresh);
    }
    (real_oracle(q), AnswerSource::Real)
}

/// Eavesdropper pairs announced in a transcript prefix.
fn eve_pairs_at(id: &[TreeMsg]) -> Vec<(Bits, Bits)> {
    id.iter()
        .flat_map(|m| match m {
            TreeMsg::Eve(pairs) => pairs.clone(),
            _ => Vec::new(),
        })
        .collect()
}

/// Queries a world's party made up to a round.
fn queries_upto(pairs: &[(usize, Bits, Bits)], upto: usize) -> BTreeSet<Bits> {
    pairs
        .iter()
        .filter(|(r, _, _)| *r <= upto)
        .map(|(_, q, _)| q.clone())
        .collect()
}

/// The safety event at `w`: the sender's queries meet the receiver's actual
/// or resampled queries only inside the eavesdropper's set.
pub fn safe_event(
    alice_queries: &BTreeSet<Bits>,
    actual_bob_queries: &BTreeSet<Bits>,
    sampled_bob_queries: &BTreeSet<Bits>,
    eve_queries: &BTreeSet<Bits>,
) -> bool {
    alice_queries
        .iter()
        .filter(|q| actual_bob_queries.contains(*q) || sampled_bob_queries.contains(*q))
        .all(|q| eve_queries.contains(q))
}

/// Exact posterior over the receiver's views at `w` for a fixed input,
/// marginalized over the sender's input; normalized.
fn bob_view_dist(
    tree: &TranscriptTree,
    w: &[TreeMsg],
    y: usize,
) -> Result<Vec<(PartyView, Rational)>, AttackError> {
    let upto = w.iter().filter(|m| matches!(m, TreeMsg::Party(_))).count();
    let mut views: BTreeMap<PartyView, Rational> = BTreeMap::new();
    let mut total = Rational::zero();
    for l in tree.leaves_through(w) {
        if l.yi != y {
            continue;
        }
        let v = l.party_view(&tree.spec, Side::Bob, upto);
        *views.entry(v).or_insert_with(Rational::zero) += l.weight.clone();
        total += l.weight.clone();
    }
    if total.is_zero() {
        return Err(AttackError::ZeroConditioning);
    }
    Ok(views.into_iter().map(|(v, m)| (v, m / total.clone())).collect())
}

// ---------------------------------------------------------------------------
// Exact exploration

/// One branch of the exploration: its probability, the transcript extension
/// below `w` so far, the receiver's evolving view, and the exploration-local
/// oracle assignments (for answer consistency within one exploration).
#[derive(Clone)]
struct Branch {
    prob: Rational,
    id: NodeId,
    view: PartyView,
    assigned: BTreeMap<Bits, Bits>,
}

/// Static routing context for one exploration.
struct EditCtx<'a> {
    sampled: Vec<(Bits, Bits)>,
    eve: Vec<(Bits, Bits)>,
    actual: BTreeSet<Bits>,
    real: &'a BTreeMap<Bits, Bits>,
}

impl EditCtx<'_> {
    /// `Some` when the edited oracle's answer is determined; `None` when it
    /// is a fresh uniform point the exact engine must branch on.
    fn fixed(&self, branch: &Branch, q: &Bits) -> Option<Bits> {
        if let Some(a) = branch.assigned.get(q) {
            return Some(a.clone());
        }
        if let Some((_, a)) = self.sampled.iter().find(|(sq, _)| sq == q) {
            return Some(a.clone());
        }
        if let Some((_, a)) = self.eve.iter().find(|(eq, _)| eq == q) {
            return Some(a.clone());
        }
        if self.actual.contains(q) {
            return None; // freshly resampled point
        }
        self.real.get(q).cloned() // real oracle, branching when unfixed
    }
}

struct BranchOracle<'a, 'b> {
    ctx: &'a EditCtx<'a>,
    branch: &'a Branch,
    /// New answers fixed during this evaluation attempt.
    staged: &'b mut BTreeMap<Bits, Bits>,
}

impl OracleAccess for BranchOracle<'_, '_> {
    fn query(&mut self, q: &Bits) -> Result<Bits, DslError> {
        if let Some(a) = self.staged.get(q) {
            return Ok(a.clone());
        }
        match self.ctx.fixed(self.branch, q) {
            Some(a) => Ok(a),
            None => Err(DslError::OracleUnavailable { query: q.clone() }),
        }
    }
}

fn fork_on(branches: Vec<Branch>, answer_bits: usize, run: &mut dyn FnMut(&Branch) -> Result<Result<Branch, Bits>, AttackError>) -> Result<Vec<Branch>, AttackError> {
    let scale = rat(1, 1i64 << answer_bits);
    let mut done = Vec::new();
    let mut stack = branches;
    while let Some(b) = stack.pop() {
        match run(&b)? {
            Ok(next) => done.push(next),
            Err(q) => {
                for a in Bits::enumerate(answer_bits) {
                    let mut b2 = b.clone();
                    b2.assigned.insert(q.clone(), a);
                    b2.prob *= scale.clone();
                    stack.push(b2);
                }
            }
        }
    }
    Ok(done)
}

/// Run one eavesdropper turn on every branch, replaying her recorded
/// decisions against the edited oracle. A decision key absent from the tree
/// means her view has no consistent real execution, where the heavy-query
/// rule has no candidates: she stops.
fn explore_eve_turn(
    tree: &TranscriptTree,
    ctx: &EditCtx<'_>,
    branches: Vec<Branch>,
) -> Result<Vec<Branch>, AttackError> {
    let ab = tree.spec.answer_bits;
    let mut done = Vec::new();
    let mut stack: Vec<(Branch, Vec<(Bits, Bits)>)> =
        branches.into_iter().map(|b| (b, Vec::new())).collect();
    while let Some((b, pairs)) = stack.pop() {
        let key = (b.id.clone(), pairs.clone());
        match tree.eve_decisions.get(&key) {
            None | Some(None) => {
                let mut b2 = b;
                b2.id.push(TreeMsg::Eve(pairs));
                done.push(b2);
            }
            Some(Some(q)) => match ctx.fixed(&b, q) {
                Some(a) => {
                    let mut pairs2 = pairs;
                    pairs2.push((q.clone(), a));
                    stack.push((b, pairs2));
                }
                None => {
                    let scale = rat(1, 1i64 << ab);
                    for a in Bits::enumerate(ab) {
                        let mut b2 = b.clone();
                        b2.assigned.insert(q.clone(), a.clone());
                        b2.prob *= scale.clone();
                        let mut pairs2 = pairs.clone();
                        pairs2.push((q.clone(), a));
                        stack.push((b2, pairs2));
                    }
                }
            },
        }
    }
    Ok(done)
}

/// The exact exploration from `w` for one real world `r` and one resampled
/// receiver view `h`: eavesdropper turn, receiver message, eavesdropper turn,
/// stopping before the next sender round (or at the leaf level). Returns the
/// distribution over reached full node ids.
fn explore_exact(
    tree: &TranscriptTree,
    w: &[TreeMsg],
    r: &World,
    h: &PartyView,
) -> Result<Vec<(Rational, NodeId)>, AttackError> {
    let spec = &tree.spec;
    let rounds_done = (w.len() - 1) / 2;
    let ctx = EditCtx {
        sampled: h.pairs.iter().map(|(_, q, a)| (q.clone(), a.clone())).collect(),
        eve: eve_pairs_at(w),
        actual: queries_upto(&r.pb, rounds_done),
        real: &r.oracle,
    };
    let start = Branch {
        prob: Rational::one(),
        id: w.to_vec(),
        view: h.clone(),
        assigned: BTreeMap::new(),
    };
    // Eavesdropper turn after the sender's message.
    let mut branches = explore_eve_turn(tree, &ctx, vec![start])?;
    if branches.iter().all(|b| b.id.len() >= tree.claim_n()) {
        return Ok(branches.into_iter().map(|b| (b.prob, b.id)).collect());
    }
    // Receiver's message with the edited oracle.
    let round = (branches[0].id.len() + 1) / 2;
    branches = fork_on(branches, spec.answer_bits, &mut |b| {
        let mut staged = BTreeMap::new();
        let res = {
            let mut oracle = BranchOracle { ctx: &ctx, branch: b, staged: &mut staged };
            next_message(spec, Side::Bob, round, &b.view, &mut oracle)
        };
        match res {
            Ok((msg, new_pairs)) => {
                let mut b2 = b.clone();
                for (q, a) in new_pairs {
                    b2.view.pairs.push((round, q, a));
                }
                b2.view.msgs.push(msg.clone());
                b2.id.push(TreeMsg::Party(msg));
                Ok(Ok(b2))
            }
            Err(DslError::OracleUnavailable { query }) => Ok(Err(query)),
            Err(e) => Err(e.into()),
        }
    })?;
    // Eavesdropper turn after the receiver's message.
    branches = explore_eve_turn(tree, &ctx, branches)?;
    Ok(branches.into_iter().map(|b| (b.prob, b.id)).collect())
}

// ---------------------------------------------------------------------------
// Reports

/// Per-node comparison of the exploration's and the faithful switched
/// execution's conditional hit probabilities.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NodeStat {
    pub w: String,
    pub u: String,
    /// Conditional exploration hit probability for x0, x1.
    pub p_curious: [String; 2],
    /// Faithful switched-execution conditional for x0, x1.
    pub p_compare: [String; 2],
}

#[derive(Debug, Clone)]
pub struct AdvantageReport {
    pub strategy: String,
    pub minor: MinorSelection,
    /// |P[output 0 | x0] - P[output 0 | x1]| (or the part-2 statistic).
    pub advantage: Rational,
    pub p_hit_x0: Rational,
    pub p_hit_x1: Rational,
    /// Mass of the safety event failing, summed over explored nodes (x0).
    pub safe_violation: Rational,
    /// Measured part-2 lower-bound check, when applicable.
    pub bound_holds: Option<bool>,
    pub tables: Vec<NodeStat>,
}

impl AdvantageReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "strategy": self.strategy,
            "minor": self.minor,
            "advantage": ratio_str(&self.advantage),
            "advantage_f64": to_f64(&self.advantage),
            "p_hit_x0": ratio_str(&self.p_hit_x0),
            "p_hit_x1": ratio_str(&self.p_hit_x1),
            "safe_violation": ratio_str(&self.safe_violation),
            "bound_holds": self.bound_holds,
            "tables": self.tables,
        }))
        .expect("advantage json")
    }
}

/// The part-2 statistic: probability of the `s_hat` segment under the
/// agreeing receiver input, for each distinguished sender input. The measured
/// lower bound (independence slack measured exactly from the tree) is checked
/// via t-th powers of rationals.
pub fn run_alice_message_distinguisher(
    tree: &TranscriptTree,
    f: &FunctionTable,
    segment: &Segment,
    params: &FrontierParams,
) -> Result<AdvantageReport, AttackError> {
    if segment.s_hat.is_empty() {
        return Err(AttackError::EmptySegment);
    }
    let m = segment.minor;
    let p = |x: usize| -> Rational { segment.s_hat.iter().map(|u| tree.reach(u, x, m.y0)).sum() };
    let p0 = p(m.x0);
    let p1 = p(m.x1);
    let advantage = (p0.clone() - p1.clone()).abs();

    // Measured independence slack: sum over the distinct predecessors of the
    // statistical distance between the sender's next message under y0 and y1.
    let preds: BTreeSet<NodeId> = segment.s_hat.iter().map(|u| apred(u)).collect();
    let mut slack = Rational::zero();
    for x in [m.x0, m.x1] {
        for w in &preds {
            let pw = tree.reach(w, x, m.y0);
            if pw.is_zero() {
                continue;
            }
            let mut sd = Rational::zero();
            for child in tree.nodes.keys().filter(|c| c.len() == w.len() + 1 && c.starts_with(w)) {
                let a = cond_reach(tree, child, w, x, m.y0);
                let b = cond_reach(tree, child, w, x, m.y1);
                sd += (a - b).abs();
            }
            slack += pw * sd / rat(2, 1);
        }
    }
    let nu0 = crate::exec::measure_semihonest_error(tree, f)?.nu0();
    let n = rat(params.n as i64, 1);
    // Check: (p0 - p1) + slack + 2 N nu0 >= (delta'/(1+delta')) * P[s_hat|x0,y1]/mu,
    // i.e. R * (1+delta)^(-1/(|X|-1)) >= R - A with R the scaled segment mass.
    let seg_y1: Rational = segment.s_hat.iter().map(|u| tree.reach(u, m.x0, m.y1)).sum();
    let a = p0.clone() - p1.clone() + slack + rat(2, 1) * n * nu0;
    let r = seg_y1 / params.mu.clone();
    let ratio = Rational::one() + params.delta.clone();
    let bound_holds = if r <= a {
        true
    } else {
        // R/(1+delta)^(1/t) >= R - A, compared via t-th powers.
        cmp_vs_root(&r, &(r.clone() - a.clone()), &ratio, params.x_root as u32)
            != std::cmp::Ordering::Less
    };
    Ok(AdvantageReport {
        strategy: "alice-message-distinguisher".into(),
        minor: m,
        advantage,
        p_hit_x0: p0,
        p_hit_x1: p1,
        safe_violation: Rational::zero(),
        bound_holds: Some(bound_holds),
        tables: Vec::new(),
    })
}

/// Alice-child nodes strictly above the zero Y-frontier: the exploration
/// anchors of the curious strategy.
fn exploration_anchors(tree: &TranscriptTree, fy0: &FrontierSet) -> BTreeSet<NodeId> {
    tree.nodes
        .keys()
        .filter(|id| {
            node_kind(id.len(), tree.rounds) == NodeKind::AchildEnode
                && !fy0.hits_at_or_above(id)
        })
        .cloned()
        .collect()
}

fn hits_segment(ext: &[TreeMsg], w_len: usize, targets: &[NodeId]) -> bool {
    targets
        .iter()
        .any(|u| u.len() > w_len && u.len() <= ext.len() && ext.starts_with(u))
}

/// The exact curious-explorer attack: for the sender input drawn from
/// {x0, x1} and the receiver holding y0, run every exploration and output 0
/// iff some exploration hits `r_hat`. Exploration outcomes along one path
/// compose as conditionally independent given the real world.
pub fn run_curious_bob(
    tree: &TranscriptTree,
    segment: &Segment,
    params: &FrontierParams,
) -> Result<AdvantageReport, AttackError> {
    if segment.s_hat.is_empty() && segment.r_hat.is_empty() {
        return Err(AttackError::EmptySegment);
    }
    let m = segment.minor;
    let fy0 = compute_frontier(tree, params, Flavor::FyZero);
    let anchors = exploration_anchors(tree, &fy0);
    // Resampled-view distributions per anchor (shared across worlds).
    let mut hdists: BTreeMap<&NodeId, Vec<(PartyView, Rational)>> = BTreeMap::new();
    for w in &anchors {
        hdists.insert(w, bob_view_dist(tree, w, m.y1)?);
    }

    let mut p_out0 = [Rational::zero(), Rational::zero()];
    let mut safe_violation = Rational::zero();
    // Conditional hit mass accumulators for the tables: (w, u) -> [x0, x1].
    let mut curious_hits: BTreeMap<(NodeId, NodeId), [Rational; 2]> = BTreeMap::new();

    for (xi_idx, x) in [m.x0, m.x1].into_iter().enumerate() {
        for r in &tree.leaves {
            if r.xi != x || r.yi != m.y0 {
                continue;
            }
            let mut p_all_miss = Rational::one();
            for k in 0..=r.msgs.len() {
                let w = &r.msgs[..k];
                if !anchors.contains(w) {
                    continue;
                }
                let rounds_done = (k - 1) / 2;
                let qa = queries_upto(&r.pa, rounds_done + 1);
                let qb = queries_upto(&r.pb, rounds_done);
                let qe: BTreeSet<Bits> = eve_pairs_at(w).into_iter().map(|(q, _)| q).collect();
                let mut p_miss = Rational::zero();
                for (h, wh) in &hdists[&w.to_vec()] {
                    let qh: BTreeSet<Bits> = h.queries().cloned().collect();
                    if xi_idx == 0 && !safe_event(&qa, &qb, &qh, &qe) {
                        safe_violation += r.weight.clone() * wh.clone();
                    }
                    let outcomes = explore_exact(tree, w, r, h)?;
                    let mut hit = Rational::zero();
                    for (p, ext) in &outcomes {
                        if hits_segment(ext, k, &segment.r_hat) {
                            hit += p.clone();
                            for u in &segment.r_hat {
                                if u.len() > k && u.len() <= ext.len() && ext.starts_with(u) {
                                    let cell = curious_hits
                                        .entry((w.to_vec(), u.clone()))
                                        .or_insert_with(|| {
                                            [Rational::zero(), Rational::zero()]
                                        });
                                    cell[xi_idx] += r.weight.clone() * wh.clone() * p.clone();
                                }
                            }
                        }
                    }
                    p_miss += wh.clone() * (Rational::one() - hit);
                }
                p_all_miss *= p_miss;
            }
            p_out0[xi_idx] += r.weight.clone() * (Rational::one() - p_all_miss);
        }
    }

    let mut tables = Vec::new();
    for ((w, u), hits) in &curious_hits {
        let mut row = NodeStat {
            w: node_id_str(w),
            u: node_id_str(u),
            p_curious: [String::new(), String::new()],
            p_compare: [String::new(), String::new()],
        };
        for (i, x) in [m.x0, m.x1].into_iter().enumerate() {
            let pw = tree.reach(w, x, m.y0);
            let pc = if pw.is_zero() { Rational::zero() } else { hits[i].clone() / pw };
            row.p_curious[i] = ratio_str(&pc);
            row.p_compare[i] = ratio_str(&cond_reach(tree, u, w, x, m.y1));
        }
        tables.push(row);
    }

    let advantage = (p_out0[0].clone() - p_out0[1].clone()).abs();
    Ok(AdvantageReport {
        strategy: "curious-explorer".into(),
        minor: m,
        advantage,
        p_hit_x0: p_out0[0].clone(),
        p_hit_x1: p_out0[1].clone(),
        safe_violation,
        bound_holds: None,
        tables,
    })
}

/// Sampled curious-explorer attack: `n` seeded runs per sender input.
pub fn run_curious_bob_sampled(
    tree: &TranscriptTree,
    segment: &Segment,
    params: &FrontierParams,
    seed: u64,
    n: usize,
) -> Result<AdvantageReport, AttackError> {
    if segment.s_hat.is_empty() && segment.r_hat.is_empty() {
        return Err(AttackError::EmptySegment);
    }
    let m = segment.minor;
    let fy0 = compute_frontier(tree, params, Flavor::FyZero);
    let anchors = exploration_anchors(tree, &fy0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out0 = [0usize, 0usize];
    for (xi_idx, x) in [m.x0, m.x1].into_iter().enumerate() {
        for i in 0..n {
            let trace = crate::exec::run_once(
                &tree.spec,
                x,
                m.y0,
                tree.eve.as_ref().map(|_| tree),
                seed ^ (i as u64) << 2 | xi_idx as u64,
            )?;
            let mut hit_any = false;
            for k in 0..=trace.msgs.len() {
                let w = &trace.msgs[..k];
                if !anchors.contains(w) {
                    continue;
                }
                let h = crate::exec::sample_conditioned_view(tree, w, Side::Bob, m.y1, &mut rng)?;
                let world = trace_world(&trace, x, m.y0);
                let outcomes = explore_exact(tree, w, &world, &h)?;
                let weights: Vec<Rational> = outcomes.iter().map(|(p, _)| p.clone()).collect();
                let pick = sample_weighted(&weights, &mut rng);
                if hits_segment(&outcomes[pick].1, k, &segment.r_hat) {
                    hit_any = true;
                }
            }
            if hit_any {
                out0[xi_idx] += 1;
            }
        }
    }
    let p0 = rat(out0[0] as i64, n as i64);
    let p1 = rat(out0[1] as i64, n as i64);
    Ok(AdvantageReport {
        strategy: format!("curious-explorer-sampled(seed={seed},n={n})"),
        minor: m,
        advantage: (p0.clone() - p1.clone()).abs(),
        p_hit_x0: p0,
        p_hit_x1: p1,
        safe_violation: Rational::zero(),
        bound_holds: None,
        tables: Vec::new(),
    })
}

fn trace_world(trace: &crate::exec::ExecTrace, xi: usize, yi: usize) -> World {
    World {
        xi,
        yi,
        ra: trace.alice.tape.clone(),
        rb: trace.bob.tape.clone(),
        oracle: trace.oracle.clone(),
        weight: Rational::one(),
        msgs: trace.msgs.clone(),
        pa: trace.alice.pairs.clone(),
        pb: trace.bob.pairs.clone(),
    }
}

/// The switch identity: conditioned on the safety event at `w`, the
/// exploration's conditional probability of reaching `u` equals the faithful
/// switched execution's. Checked exactly for both distinguished sender
/// inputs.
pub fn verify_switch_identity(
    tree: &TranscriptTree,
    minor: &MinorSelection,
    w: &[TreeMsg],
    u: &[TreeMsg],
) -> Result<CheckResult, AttackError> {
    let rounds_done = (w.len() - 1) / 2;
    let mut values = Vec::new(); // (p_curious, p_compare) per x
    for x in [minor.x0, minor.x1] {
        // Curious side: real worlds under (x, y0), resampled views under y1.
        let hdist = bob_view_dist(tree, w, minor.y1)?;
        let mut num = Rational::zero();
        let mut den = Rational::zero();
        for r in tree.leaves_through(w) {
            if r.xi != x || r.yi != minor.y0 {
                continue;
            }
            let qa = queries_upto(&r.pa, rounds_done + 1);
            let qb = queries_upto(&r.pb, rounds_done);
            let qe: BTreeSet<Bits> = eve_pairs_at(w).into_iter().map(|(q, _)| q).collect();
            for (h, wh) in &hdist {
                let qh: BTreeSet<Bits> = h.queries().cloned().collect();
                if !safe_event(&qa, &qb, &qh, &qe) {
                    continue;
                }
                let pair_w = r.weight.clone() * wh.clone();
                den += pair_w.clone();
                for (p, ext) in explore_exact(tree, w, r, h)? {
                    if u.len() > w.len() && u.len() <= ext.len() && ext.starts_with(u) {
                        num += pair_w.clone() * p;
                    }
                }
            }
        }
        if den.is_zero() {
            return Err(AttackError::ZeroConditioning);
        }
        let p_curious = num / den;

        // Compare side: real worlds under (x, y1), resampled views under y0.
        let hdist = bob_view_dist(tree, w, minor.y0)?;
        let mut num = Rational::zero();
        let mut den = Rational::zero();
        for r in tree.leaves_through(w) {
            if r.xi != x || r.yi != minor.y1 {
                continue;
            }
            let qa = queries_upto(&r.pa, rounds_done + 1);
            let qb = queries_upto(&r.pb, rounds_done);
            let qe: BTreeSet<Bits> = eve_pairs_at(w).into_iter().map(|(q, _)| q).collect();
            for (h, wh) in &hdist {
                let qh: BTreeSet<Bits> = h.queries().cloned().collect();
                if !safe_event(&qa, &qb, &qh, &qe) {
                    continue;
                }
                let pair_w = r.weight.clone() * wh.clone();
                den += pair_w.clone();
                if u.len() > w.len() && r.msgs.starts_with(u) {
                    num += pair_w;
                }
            }
        }
        if den.is_zero() {
            return Err(AttackError::ZeroConditioning);
        }
        let p_compare = num / den;
        values.push((p_curious, p_compare));
    }
    let holds = values.iter().all(|(a, b)| a == b);
    Ok(CheckResult {
        lhs: values[0].0.clone(),
        rhs: values[0].1.clone(),
        holds,
        note: Some(format!(
            "x1 side: exploration {} vs faithful {}",
            ratio_str(&values[1].0),
            ratio_str(&values[1].1)
        )),
    })
}

/// All (w, u) pairs eligible for the switch identity on a tree: exploration
/// anchors with their strict descendants up to the next sender level.
pub fn switch_identity_pairs(
    tree: &TranscriptTree,
    params: &FrontierParams,
) -> Vec<(NodeId, NodeId)> {
    let fy0 = compute_frontier(tree, params, Flavor::FyZero);
    let anchors = exploration_anchors(tree, &fy0);
    let mut pairs = Vec::new();
    for w in &anchors {
        for u in tree.nodes.keys() {
            if u.len() > w.len() && u.starts_with(w) && apred(u) == *w {
                pairs.push((w.clone(), u.clone()));
            }
        }
    }
    pairs
}
