//! Exact protocol execution in the random-oracle model.
//!
//! The engine enumerates every world — input pair, both randomness tapes, and
//! the lazily-branched oracle answers — and folds the deterministic
//! eavesdropper's turns in, producing the augmented transcript tree with an
//! exact rational reach probability per node and input pair. A seeded
//! Monte-Carlo path (`run_once`) re-executes the same protocol independently
//! for cross-checking the exact numbers.
//!
//! Tree layout (node id = the message sequence): positions 0 and 1 are the
//! two dummy messages, position 2+2k is the round-(k+1) party message, and
//! position 3+2k is the eavesdropper's announcement after that message (an
//! ordered query-answer list folded into one tree level). A node's kind is
//! the role that acts *next* at it, so the root is the dummy Alice node and
//! the nodes right after an Alice message are her children ("Achildren"),
//! where the eavesdropper moves.

use crate::bits::Bits;
use crate::dsl::{next_message, DslError, OracleAccess, PartyView, ProtocolSpec};
use crate::func::FunctionTable;
use crate::ratio::rat;
use crate::{Rational, Side};
use num::{BigInt, BigUint, Integer, One, Signed, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Exact-mode ceiling: total tape bits plus answer bits times the distinct
/// oracle points fixed on any single path.
pub const EXACT_BUDGET_BITS: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("exact-mode budget exceeded: {dimension}")]
    BudgetExceeded { dimension: String },
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error("conditioning on a zero-probability event")]
    ZeroConditioning,
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("eavesdropper view absent from the exact tree (cache miss)")]
    UnknownEveView,
}

/// One message slot in a transcript: the two fixed dummies, a party message,
/// or the eavesdropper's announced query-answer list for one of her turns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TreeMsg {
    Dummy,
    Party(Bits),
    Eve(Vec<(Bits, Bits)>),
}

/// A node of the transcript tree is identified by its message sequence.
pub type NodeId = Vec<TreeMsg>;

/// Who acts next at a node (leaves: nobody).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum NodeKind {
    Anode,
    Bnode,
    AchildEnode,
    BchildEnode,
    Leaf,
}

/// Node kind from the transcript length (see the module doc for the layout).
pub fn node_kind(len: usize, rounds: usize) -> NodeKind {
    if len == 2 + 2 * rounds {
        NodeKind::Leaf
    } else if len == 0 {
        NodeKind::Anode
    } else if len == 1 {
        NodeKind::Bnode
    } else if len % 2 == 0 {
        // Party about to speak round len/2 (rounds are 1-based; round len/2
        // follows the len/2 - 1 completed rounds).
        if (len / 2) % 2 == 1 {
            NodeKind::Anode
        } else {
            NodeKind::Bnode
        }
    } else {
        // Eavesdropper acts; the preceding message was round (len-1)/2's.
        if ((len - 1) / 2) % 2 == 1 {
            NodeKind::AchildEnode
        } else {
            NodeKind::BchildEnode
        }
    }
}

/// Alice-predecessor: the parent for Alice-children (the node where Alice just
/// spoke), otherwise the deepest Alice-child ancestor, falling back to the
/// dummy Alice root.
pub fn apred(id: &[TreeMsg]) -> NodeId {
    let len = id.len();
    if len >= 3 && len % 4 == 3 {
        return id[..len - 1].to_vec();
    }
    let mut l = len;
    while l > 0 {
        l -= 1;
        if l >= 3 && l % 4 == 3 {
            return id[..l].to_vec();
        }
    }
    Vec::new()
}

/// Bob-predecessor, mirror of [`apred`]; falls back to the dummy Bob node.
pub fn bpred(id: &[TreeMsg]) -> NodeId {
    let len = id.len();
    if len >= 5 && len % 4 == 1 {
        return id[..len - 1].to_vec();
    }
    let mut l = len;
    while l > 0 {
        l -= 1;
        if l >= 5 && l % 4 == 1 {
            return id[..l].to_vec();
        }
    }
    id[..len.min(1)].to_vec()
}

/// A fully-resolved execution world: inputs, tapes, the oracle points fixed on
/// this path, both parties' query-answer histories, and the transcript.
/// `weight` is the exact probability of this world conditioned on the inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub xi: usize,
    pub yi: usize,
    pub ra: Bits,
    pub rb: Bits,
    pub oracle: BTreeMap<Bits, Bits>,
    pub weight: Rational,
    pub msgs: NodeId,
    /// Alice's (round, query, answer) history; one entry per distinct query.
    pub pa: Vec<(usize, Bits, Bits)>,
    pub pb: Vec<(usize, Bits, Bits)>,
}

impl World {
    /// The party's local view after `upto_round` completed rounds.
    pub fn party_view(&self, spec: &ProtocolSpec, side: Side, upto_round: usize) -> PartyView {
        let prog = spec.program(side);
        let (input_idx, tape, pairs) = match side {
            Side::Alice => (self.xi, &self.ra, &self.pa),
            Side::Bob => (self.yi, &self.rb, &self.pb),
        };
        PartyView {
            side,
            input: Bits::from_u64(input_idx as u64, prog.input_bits),
            tape: tape.clone(),
            msgs: self.party_msgs().into_iter().take(upto_round).collect(),
            pairs: pairs.iter().filter(|(r, _, _)| *r <= upto_round).cloned().collect(),
        }
    }

    /// Party messages (rounds 1..) extracted from the transcript.
    pub fn party_msgs(&self) -> Vec<Bits> {
        self.msgs
            .iter()
            .filter_map(|m| match m {
                TreeMsg::Party(b) => Some(b.clone()),
                _ => None,
            })
            .collect()
    }

    /// Q_A ∪ Q_B restricted to rounds <= `upto_round`.
    pub fn party_queries(&self, upto_round: usize) -> BTreeSet<&Bits> {
        self.pa
            .iter()
            .chain(self.pb.iter())
            .filter(|(r, _, _)| *r <= upto_round)
            .map(|(_, q, _)| q)
            .collect()
    }
}

/// Eavesdropper configuration: the heaviness threshold and an optional
/// override of the per-execution query cap (default ceil(64·m/ε) for the
/// protocol's static query count m).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvePolicy {
    pub epsilon: Rational,
    pub budget: Option<usize>,
}

impl EvePolicy {
    pub fn new(epsilon: Rational) -> Self {
        assert!(epsilon.is_positive(), "threshold must be positive");
        EvePolicy { epsilon, budget: None }
    }

    /// Per-execution query cap.
    pub fn cap(&self, query_count: usize) -> usize {
        if let Some(b) = self.budget {
            return b;
        }
        let r = rat(64 * query_count as i64, 1) / self.epsilon.clone();
        r.ceil().to_integer().to_usize().unwrap_or(usize::MAX)
    }
}

/// What the eavesdropper did at one of her turns (keyed in the tree by the
/// node whose last message is her announcement).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EveRecord {
    pub pairs: Vec<(Bits, Bits)>,
    /// Conditional hit-probability of each queried point at selection time.
    pub triggers: Vec<Rational>,
    /// Max hit-probability among unqueried points when she stopped
    /// (the lightness certificate: < ε whenever she stopped voluntarily).
    pub residual_max: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub kind: NodeKind,
    /// Reach probability P[v | x,y] per input pair, absent entries are 0.
    pub reach: BTreeMap<(usize, usize), Rational>,
}

/// The exact augmented transcript tree.
#[derive(Debug, Clone)]
pub struct TranscriptTree {
    pub spec: ProtocolSpec,
    pub nx: usize,
    pub ny: usize,
    pub rounds: usize,
    pub eve: Option<EvePolicy>,
    /// All fully-resolved execution worlds (the leaves' posterior support).
    pub leaves: Vec<World>,
    pub nodes: BTreeMap<NodeId, NodeInfo>,
    pub eve_records: BTreeMap<NodeId, EveRecord>,
    /// Memoized deterministic decisions: (turn node, pairs so far) -> next
    /// query or stop. Lets sampled runs replay the exact-tree eavesdropper.
    pub eve_decisions: BTreeMap<(NodeId, Vec<(Bits, Bits)>), Option<Bits>>,
    /// Largest per-execution eavesdropper query total observed (cap audit).
    pub max_eve_queries: usize,
}

impl TranscriptTree {
    /// N of the claim constants: two dummy rounds plus a party turn and an
    /// eavesdropper turn per protocol round.
    pub fn claim_n(&self) -> usize {
        2 + 2 * self.rounds
    }

    pub fn reach(&self, id: &[TreeMsg], xi: usize, yi: usize) -> Rational {
        self.nodes
            .get(id)
            .and_then(|n| n.reach.get(&(xi, yi)))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// Node mass under uniform inputs.
    pub fn mass_uniform(&self, id: &[TreeMsg]) -> Rational {
        let info = match self.nodes.get(id) {
            Some(i) => i,
            None => return Rational::zero(),
        };
        let total: Rational = info.reach.values().cloned().sum();
        total / rat((self.nx * self.ny) as i64, 1)
    }

    /// P[y = yi | v] under uniform inputs; `None` when the node has mass 0.
    pub fn input_y_posterior(&self, id: &[TreeMsg], yi: usize) -> Option<Rational> {
        let info = self.nodes.get(id)?;
        let total: Rational = info.reach.values().cloned().sum();
        if total.is_zero() {
            return None;
        }
        let hit: Rational = info
            .reach
            .iter()
            .filter(|((_, y), _)| *y == yi)
            .map(|(_, p)| p.clone())
            .sum();
        Some(hit / total)
    }

    pub fn leaves_through<'a>(&'a self, id: &'a [TreeMsg]) -> impl Iterator<Item = &'a World> {
        self.leaves.iter().filter(move |w| w.msgs.starts_with(id))
    }

    /// Canonical JSON dump: nodes sorted by message sequence, rationals as
    /// "num/den".
    pub fn to_json(&self) -> String {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|(id, info)| {
                let reach: BTreeMap<String, String> = info
                    .reach
                    .iter()
                    .map(|((x, y), p)| (format!("{x},{y}"), crate::ratio::ratio_str(p)))
                    .collect();
                serde_json::json!({
                    "id": node_id_str(id),
                    "kind": info.kind,
                    "reach": reach,
                })
            })
            .collect();
        let v = serde_json::json!({
            "rounds": self.rounds,
            "nx": self.nx,
            "ny": self.ny,
            "nodes": nodes,
        });
        serde_json::to_string_pretty(&v).expect("tree json")
    }
}

/// Human-readable node id (also the canonical JSON id).
pub fn node_id_str(id: &[TreeMsg]) -> String {
    let parts: Vec<String> = id
        .iter()
        .map(|m| match m {
            TreeMsg::Dummy => "-".to_string(),
            TreeMsg::Party(b) => b.to_string(),
            TreeMsg::Eve(pairs) => {
                let inner: Vec<String> =
                    pairs.iter().map(|(q, a)| format!("{q}={a}")).collect();
                format!("E[{}]", inner.join(","))
            }
        })
        .collect();
    parts.join("/")
}

struct ReplayOracle<'a>(&'a BTreeMap<Bits, Bits>);
impl OracleAccess for ReplayOracle<'_> {
    fn query(&mut self, q: &Bits) -> Result<Bits, DslError> {
        self.0
            .get(q)
            .cloned()
            .ok_or_else(|| DslError::OracleUnavailable { query: q.clone() })
    }
}

fn check_oracle_budget(tape_bits: usize, answer_bits: usize, points: usize) -> Result<(), ExecError> {
    if tape_bits + answer_bits * points > EXACT_BUDGET_BITS {
        return Err(ExecError::BudgetExceeded {
            dimension: format!(
                "{tape_bits} tape bits + {answer_bits} answer bits x {points} oracle points > {EXACT_BUDGET_BITS}"
            ),
        });
    }
    Ok(())
}

/// Evaluate one party round on one world, forking on unfixed oracle points.
fn party_step(
    spec: &ProtocolSpec,
    side: Side,
    round: usize,
    world: World,
    tape_bits: usize,
    out: &mut Vec<World>,
) -> Result<(), ExecError> {
    let scale = rat(1, 1i64 << spec.answer_bits);
    let mut stack = vec![world];
    while let Some(mut w) = stack.pop() {
        let view = w.party_view(spec, side, round - 1);
        let mut oracle = ReplayOracle(&w.oracle);
        match next_message(spec, side, round, &view, &mut oracle) {
            Ok((msg, new_pairs)) => {
                let hist = match side {
                    Side::Alice => &mut w.pa,
                    Side::Bob => &mut w.pb,
                };
                for (q, a) in new_pairs {
                    if !hist.iter().any(|(_, hq, _)| *hq == q) {
                        hist.push((round, q, a));
                    }
                }
                w.msgs.push(TreeMsg::Party(msg));
                out.push(w);
            }
            Err(DslError::OracleUnavailable { query }) => {
                check_oracle_budget(tape_bits, spec.answer_bits, w.oracle.len() + 1)?;
                for a in Bits::enumerate(spec.answer_bits) {
                    let mut w2 = w.clone();
                    w2.oracle.insert(query.clone(), a);
                    w2.weight *= scale.clone();
                    stack.push(w2);
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Count the eavesdropper queries already announced in a transcript.
fn eve_query_count(id: &[TreeMsg]) -> usize {
    id.iter()
        .map(|m| match m {
            TreeMsg::Eve(pairs) => pairs.len(),
            _ => 0,
        })
        .sum()
}

struct EveOutcome {
    record: EveRecord,
    worlds: Vec<World>,
}

/// Run the eavesdropper's deterministic heavy-query turn over one node's
/// posterior world set, splitting the set by observed oracle answers.
#[allow(clippy::too_many_arguments)]
fn eve_turn(
    node: &[TreeMsg],
    worlds: Vec<World>,
    policy: &EvePolicy,
    round: usize,
    cap: usize,
    tape_bits: usize,
    answer_bits: usize,
    decisions: &mut BTreeMap<(NodeId, Vec<(Bits, Bits)>), Option<Bits>>,
) -> Result<Vec<EveOutcome>, ExecError> {
    // Points the eavesdropper already holds from earlier turns.
    let prior_pairs: BTreeSet<Bits> = node
        .iter()
        .flat_map(|m| match m {
            TreeMsg::Eve(pairs) => pairs.clone(),
            _ => Vec::new(),
        })
        .map(|(q, _)| q)
        .collect();
    let prior = eve_query_count(node);
    let scale = rat(1, 1i64 << answer_bits);

    let mut done = Vec::new();
    let mut stack: Vec<(Vec<(Bits, Bits)>, Vec<Rational>, Vec<World>)> =
        vec![(Vec::new(), Vec::new(), worlds)];
    while let Some((pairs, triggers, ws)) = stack.pop() {
        let total: Rational = ws.iter().map(|w| w.weight.clone()).sum();
        // Posterior hit mass per candidate point not yet held.
        let mut hits: BTreeMap<&Bits, Rational> = BTreeMap::new();
        for w in &ws {
            for q in w.party_queries(round) {
                if prior_pairs.contains(q) || pairs.iter().any(|(pq, _)| pq == q) {
                    continue;
                }
                *hits.entry(q).or_insert_with(Rational::zero) += w.weight.clone();
            }
        }
        let threshold = policy.epsilon.clone() * total.clone();
        // Lexicographically least maximizer (BTreeMap iterates ascending, so
        // a strictly-greater test keeps the first of equals).
        let mut best: Option<(&Bits, Rational)> = None;
        for (q, mass) in &hits {
            if best.as_ref().map_or(true, |(_, m)| mass > m) {
                best = Some((q, mass.clone()));
            }
        }
        let choice = match &best {
            Some((q, mass)) if *mass >= threshold => Some((*q).clone()),
            _ => None,
        };
        let key = (node.to_vec(), pairs.clone());
        if let Some(prev) = decisions.get(&key) {
            debug_assert_eq!(prev, &choice, "eavesdropper determinism violated");
        }
        decisions.insert(key, choice.clone());

        let q = match choice {
            None => {
                let residual_max = best
                    .map(|(_, mass)| if total.is_zero() { Rational::zero() } else { mass / total })
                    .unwrap_or_else(Rational::zero);
                done.push(EveOutcome {
                    record: EveRecord { pairs, triggers, residual_max },
                    worlds: ws,
                });
                continue;
            }
            Some(q) => q,
        };
        if prior + pairs.len() + 1 > cap {
            return Err(ExecError::BudgetExceeded {
                dimension: format!("eavesdropper cap of {cap} queries per execution"),
            });
        }
        let trigger = hits[&q].clone() / total;

        // She queries the real oracle: split the worlds by the answer,
        // forking any world where the point is still free.
        let mut by_answer: BTreeMap<Bits, Vec<World>> = BTreeMap::new();
        for w in ws {
            match w.oracle.get(&q) {
                Some(a) => by_answer.entry(a.clone()).or_default().push(w),
                None => {
                    check_oracle_budget(tape_bits, answer_bits, w.oracle.len() + 1)?;
                    for a in Bits::enumerate(answer_bits) {
                        let mut w2 = w.clone();
                        w2.oracle.insert(q.clone(), a.clone());
                        w2.weight *= scale.clone();
                        by_answer.entry(a).or_default().push(w2);
                    }
                }
            }
        }
        for (a, group) in by_answer {
            let mut pairs2 = pairs.clone();
            pairs2.push((q.clone(), a));
            let mut triggers2 = triggers.clone();
            triggers2.push(trigger.clone());
            stack.push((pairs2, triggers2, group));
        }
    }
    Ok(done)
}

/// Build the exact augmented transcript tree for input domains of the given
/// sizes (inputs are encoded as indices in the programs' declared widths).
pub fn build_tree(
    spec: &ProtocolSpec,
    nx: usize,
    ny: usize,
    eve: Option<EvePolicy>,
) -> Result<TranscriptTree, ExecError> {
    spec.check()?;
    if nx == 0 || ny == 0 {
        return Err(ExecError::DomainMismatch("empty input domain".into()));
    }
    // A party that never reads its input may run over any domain size;
    // otherwise the declared width must be able to address every index.
    fn reads_input(e: &crate::dsl::Expr) -> bool {
        use crate::dsl::Expr;
        match e {
            Expr::Input => true,
            Expr::Query(a) => reads_input(a),
            Expr::Concat(parts) => parts.iter().any(reads_input),
            Expr::Eq(a, b) => reads_input(a) || reads_input(b),
            Expr::If(c, t, f) => reads_input(c) || reads_input(t) || reads_input(f),
            _ => false,
        }
    }
    for (n, side) in [(nx, Side::Alice), (ny, Side::Bob)] {
        let prog = spec.program(side);
        if n > 1usize << prog.input_bits && prog.rounds.values().any(reads_input) {
            return Err(ExecError::DomainMismatch(format!(
                "{n} {side} inputs exceed the declared {}-bit input width",
                prog.input_bits
            )));
        }
    }
    let tape_bits = spec.alice.rand_bits + spec.bob.rand_bits;
    check_oracle_budget(tape_bits, 0, 0)?;
    let cap = eve.as_ref().map(|p| p.cap(spec.query_count()));

    let tape_weight = rat(1, 1i64 << tape_bits);
    let mut worlds = Vec::new();
    for xi in 0..nx {
        for yi in 0..ny {
            for ra in Bits::enumerate(spec.alice.rand_bits) {
                for rb in Bits::enumerate(spec.bob.rand_bits) {
                    worlds.push(World {
                        xi,
                        yi,
                        ra: ra.clone(),
                        rb,
                        oracle: BTreeMap::new(),
                        weight: tape_weight.clone(),
                        msgs: vec![TreeMsg::Dummy, TreeMsg::Dummy],
                        pa: Vec::new(),
                        pb: Vec::new(),
                    });
                }
            }
        }
    }

    let mut eve_records = BTreeMap::new();
    let mut eve_decisions = BTreeMap::new();
    let mut max_eve_queries = 0usize;

    for round in 1..=spec.rounds {
        let side = Side::speaker(round);
        let mut advanced = Vec::new();
        for w in worlds {
            party_step(spec, side, round, w, tape_bits, &mut advanced)?;
        }
        // The eavesdropper's turn runs per node over its whole posterior.
        let mut groups: BTreeMap<NodeId, Vec<World>> = BTreeMap::new();
        for w in advanced {
            groups.entry(w.msgs.clone()).or_default().push(w);
        }
        let mut next = Vec::new();
        for (node, ws) in groups {
            match &eve {
                None => {
                    for mut w in ws {
                        w.msgs.push(TreeMsg::Eve(Vec::new()));
                        next.push(w);
                    }
                }
                Some(policy) => {
                    let outcomes = eve_turn(
                        &node,
                        ws,
                        policy,
                        round,
                        cap.expect("cap set when eavesdropping"),
                        tape_bits,
                        spec.answer_bits,
                        &mut eve_decisions,
                    )?;
                    for outcome in outcomes {
                        let mut child = node.clone();
                        child.push(TreeMsg::Eve(outcome.record.pairs.clone()));
                        max_eve_queries = max_eve_queries.max(eve_query_count(&child));
                        eve_records.insert(child.clone(), outcome.record);
                        for mut w in outcome.worlds {
                            w.msgs = child.clone();
                            next.push(w);
                        }
                    }
                }
            }
        }
        worlds = next;
    }

    // Aggregate per-node reach probabilities from the leaves.
    let mut nodes: BTreeMap<NodeId, NodeInfo> = BTreeMap::new();
    for w in &worlds {
        for len in 0..=w.msgs.len() {
            let id = w.msgs[..len].to_vec();
            let info = nodes.entry(id).or_insert_with(|| NodeInfo {
                kind: node_kind(len, spec.rounds),
                reach: BTreeMap::new(),
            });
            *info.reach.entry((w.xi, w.yi)).or_insert_with(Rational::zero) +=
                w.weight.clone();
        }
    }

    Ok(TranscriptTree {
        spec: spec.clone(),
        nx,
        ny,
        rounds: spec.rounds,
        eve,
        leaves: worlds,
        nodes,
        eve_records,
        eve_decisions,
        max_eve_queries,
    })
}

// ---------------------------------------------------------------------------
// Security measurement

/// The three exact error figures of a protocol for a function table.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SecuritySummary {
    #[serde(with = "crate::ratio::serde_ratio")]
    pub alice_error: Rational,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub bob_error: Rational,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub correctness_error: Rational,
}

impl SecuritySummary {
    /// The single security figure ν₀ = max of the three errors.
    pub fn nu0(&self) -> Rational {
        self.alice_error
            .clone()
            .max(self.bob_error.clone())
            .max(self.correctness_error.clone())
    }
}

fn sd_maps<K: Ord>(a: &BTreeMap<K, Rational>, b: &BTreeMap<K, Rational>) -> Rational {
    let mut sum = Rational::zero();
    for (k, p) in a {
        let q = b.get(k).cloned().unwrap_or_else(Rational::zero);
        if *p > q {
            sum += p.clone() - q;
        }
    }
    for (k, q) in b {
        let p = a.get(k).cloned().unwrap_or_else(Rational::zero);
        if *q > p {
            sum += q.clone() - p;
        }
    }
    sum / rat(2, 1)
}

type ViewKey = (Bits, NodeId, Vec<(usize, Bits, Bits)>);

fn final_view_dist(tree: &TranscriptTree, side: Side, xi: usize, yi: usize) -> BTreeMap<ViewKey, Rational> {
    let mut dist: BTreeMap<ViewKey, Rational> = BTreeMap::new();
    for w in &tree.leaves {
        if w.xi != xi || w.yi != yi {
            continue;
        }
        let key = match side {
            Side::Alice => (w.ra.clone(), w.msgs.clone(), w.pa.clone()),
            Side::Bob => (w.rb.clone(), w.msgs.clone(), w.pb.clone()),
        };
        *dist.entry(key).or_insert_with(Rational::zero) += w.weight.clone();
    }
    dist
}

/// The output a leaf announces: the final party message decoded as an index
/// into the sorted output alphabet (`None` when out of range).
pub fn announced_output<'a>(world: &World, outputs: &'a [String]) -> Option<&'a str> {
    let last = world.party_msgs().into_iter().last()?;
    outputs.get(last.to_u64() as usize).map(String::as_str)
}

/// Exact game-based semi-honest error of the protocol behind `tree` for a
/// symmetric function table: the worst view statistical distance across
/// equal-output input pairs on each side, plus the worst-case probability of
/// announcing a wrong output.
pub fn measure_semihonest_error(
    tree: &TranscriptTree,
    f: &FunctionTable,
) -> Result<SecuritySummary, ExecError> {
    if f.x_labels.len() != tree.nx || f.y_labels.len() != tree.ny {
        return Err(ExecError::DomainMismatch(
            "function table dimensions differ from the tree's".into(),
        ));
    }
    if !f.is_symmetric() {
        return Err(ExecError::DomainMismatch("asymmetric function table".into()));
    }
    let outputs = f.outputs_sorted();

    let mut alice_error = Rational::zero();
    for xi in 0..tree.nx {
        for y0 in 0..tree.ny {
            for y1 in (y0 + 1)..tree.ny {
                if f.sym(xi, y0) != f.sym(xi, y1) {
                    continue;
                }
                let a = final_view_dist(tree, Side::Alice, xi, y0);
                let b = final_view_dist(tree, Side::Alice, xi, y1);
                alice_error = alice_error.max(sd_maps(&a, &b));
            }
        }
    }
    let mut bob_error = Rational::zero();
    for yi in 0..tree.ny {
        for x0 in 0..tree.nx {
            for x1 in (x0 + 1)..tree.nx {
                if f.sym(x0, yi) != f.sym(x1, yi) {
                    continue;
                }
                let a = final_view_dist(tree, Side::Bob, x0, yi);
                let b = final_view_dist(tree, Side::Bob, x1, yi);
                bob_error = bob_error.max(sd_maps(&a, &b));
            }
        }
    }
    let mut correctness_error = Rational::zero();
    for xi in 0..tree.nx {
        for yi in 0..tree.ny {
            let mut wrong = Rational::zero();
            for w in &tree.leaves {
                if w.xi != xi || w.yi != yi {
                    continue;
                }
                if announced_output(w, &outputs) != Some(f.sym(xi, yi)) {
                    wrong += w.weight.clone();
                }
            }
            correctness_error = correctness_error.max(wrong);
        }
    }
    Ok(SecuritySummary { alice_error, bob_error, correctness_error })
}

// ---------------------------------------------------------------------------
// Sampled execution

/// One sampled augmented execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecTrace {
    pub msgs: NodeId,
    pub alice: PartyView,
    pub bob: PartyView,
    pub oracle: BTreeMap<Bits, Bits>,
}

struct SamplingOracle<'a> {
    map: &'a mut BTreeMap<Bits, Bits>,
    rng: &'a mut ChaCha8Rng,
    answer_bits: usize,
}

impl OracleAccess for SamplingOracle<'_> {
    fn query(&mut self, q: &Bits) -> Result<Bits, DslError> {
        if let Some(a) = self.map.get(q) {
            return Ok(a.clone());
        }
        let a = sample_bits(self.rng, self.answer_bits);
        self.map.insert(q.clone(), a.clone());
        Ok(a)
    }
}

fn sample_bits(rng: &mut ChaCha8Rng, width: usize) -> Bits {
    let v: Vec<bool> = (0..width).map(|_| rng.next_u32() & 1 == 1).collect();
    Bits::from_bools(v)
}

/// One forward-simulated execution with freshly sampled tapes and oracle.
/// When `eve` is given, the eavesdropper replays the exact tree's memoized
/// deterministic decisions (her strategy is a function of her view; the tree
/// is only a cache of that function); otherwise her turns are empty.
pub fn run_once(
    spec: &ProtocolSpec,
    xi: usize,
    yi: usize,
    eve: Option<&TranscriptTree>,
    seed: u64,
) -> Result<ExecTrace, ExecError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = World {
        xi,
        yi,
        ra: sample_bits(&mut rng, spec.alice.rand_bits),
        rb: sample_bits(&mut rng, spec.bob.rand_bits),
        oracle: BTreeMap::new(),
        weight: Rational::one(),
        msgs: vec![TreeMsg::Dummy, TreeMsg::Dummy],
        pa: Vec::new(),
        pb: Vec::new(),
    };
    for round in 1..=spec.rounds {
        let side = Side::speaker(round);
        let view = world.party_view(spec, side, round - 1);
        let (msg, new_pairs) = {
            let mut oracle = SamplingOracle {
                map: &mut world.oracle,
                rng: &mut rng,
                answer_bits: spec.answer_bits,
            };
            next_message(spec, side, round, &view, &mut oracle)?
        };
        let hist = match side {
            Side::Alice => &mut world.pa,
            Side::Bob => &mut world.pb,
        };
        for (q, a) in new_pairs {
            if !hist.iter().any(|(_, hq, _)| *hq == q) {
                hist.push((round, q, a));
            }
        }
        world.msgs.push(TreeMsg::Party(msg));

        let mut pairs: Vec<(Bits, Bits)> = Vec::new();
        if let Some(tree) = eve {
            loop {
                let key = (world.msgs.clone(), pairs.clone());
                match tree.eve_decisions.get(&key) {
                    None => return Err(ExecError::UnknownEveView),
                    Some(None) => break,
                    Some(Some(q)) => {
                        let a = match world.oracle.get(q) {
                            Some(a) => a.clone(),
                            None => {
                                let a = sample_bits(&mut rng, spec.answer_bits);
                                world.oracle.insert(q.clone(), a.clone());
                                a
                            }
                        };
                        pairs.push((q.clone(), a));
                    }
                }
            }
        }
        world.msgs.push(TreeMsg::Eve(pairs));
    }
    let alice = world.party_view(spec, Side::Alice, spec.rounds);
    let bob = world.party_view(spec, Side::Bob, spec.rounds);
    Ok(ExecTrace { msgs: world.msgs, alice, bob, oracle: world.oracle })
}

// ---------------------------------------------------------------------------
// Conditioned sampling

/// Uniform `BigUint` below `n` (rejection sampling).
fn uniform_below(n: &BigUint, rng: &mut ChaCha8Rng) -> BigUint {
    assert!(!n.is_zero());
    let bits = n.bits();
    let nbytes = ((bits + 7) / 8) as usize;
    let top_mask = if bits % 8 == 0 { 0xffu8 } else { (1u8 << (bits % 8)) - 1 };
    loop {
        let mut bytes = vec![0u8; nbytes];
        rng.fill_bytes(&mut bytes);
        if let Some(first) = bytes.first_mut() {
            *first &= top_mask;
        }
        let v = BigUint::from_bytes_be(&bytes);
        if &v < n {
            return v;
        }
    }
}

/// Exact sampling of an index proportional to positive rational weights.
pub fn sample_weighted(weights: &[Rational], rng: &mut ChaCha8Rng) -> usize {
    assert!(!weights.is_empty());
    let mut denom = BigInt::one();
    for w in weights {
        denom = denom.lcm(w.denom());
    }
    let scaled: Vec<BigUint> = weights
        .iter()
        .map(|w| {
            (w.numer() * (&denom / w.denom()))
                .to_biguint()
                .expect("weights must be non-negative")
        })
        .collect();
    let total: BigUint = scaled.iter().sum();
    let mut r = uniform_below(&total, rng);
    for (i, s) in scaled.iter().enumerate() {
        if &r < s {
            return i;
        }
        r -= s;
    }
    unreachable!("weights sum exceeded")
}

/// Sample a party view at node `w` from the exact posterior conditioned on the
/// transcript `w` (the eavesdropper's view) and the party holding `input_idx`.
pub fn sample_conditioned_view(
    tree: &TranscriptTree,
    w: &[TreeMsg],
    owner: Side,
    input_idx: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PartyView, ExecError> {
    let upto_round = w.iter().filter(|m| matches!(m, TreeMsg::Party(_))).count();
    let candidates: Vec<&World> = tree
        .leaves_through(w)
        .filter(|l| match owner {
            Side::Alice => l.xi == input_idx,
            Side::Bob => l.yi == input_idx,
        })
        .collect();
    if candidates.is_empty() {
        return Err(ExecError::ZeroConditioning);
    }
    // Distinct views at w with their posterior masses (leaves refine the
    // node's worlds, so summing leaf weights per projected view is exact).
    let mut views: BTreeMap<PartyView, Rational> = BTreeMap::new();
    for l in &candidates {
        let v = l.party_view(&tree.spec, owner, upto_round);
        *views.entry(v).or_insert_with(Rational::zero) += l.weight.clone();
    }
    let (keys, weights): (Vec<&PartyView>, Vec<Rational>) =
        views.iter().map(|(k, v)| (k, v.clone())).unzip();
    let idx = sample_weighted(&weights, rng);
    Ok(keys[idx].clone())
}
