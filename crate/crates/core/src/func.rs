//! Finite two-party function tables and their combinatorics: cuts,
//! decomposition trees, perfectly-secure protocol synthesis, the
//! common-information function, redundant-input removal, undecomposable-minor
//! search, and the three-way model classification.

use crate::bits::Bits;
use crate::dsl::{Expr, PartyProgram, ProtocolSpec};
use crate::Side;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FuncError {
    #[error("operation requires a symmetric function table")]
    AsymmetricInput,
    #[error("invalid function table: {0}")]
    Invalid(String),
    #[error("function file parse error: {0}")]
    Parse(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}

/// A finite deterministic two-party function f: X x Y -> Z_A x Z_B with
/// labelled inputs. `out[xi][yi] = (a, b)` are Alice's and Bob's outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionTable {
    pub x_labels: Vec<String>,
    pub y_labels: Vec<String>,
    out: Vec<Vec<(String, String)>>,
}

impl FunctionTable {
    pub fn new(
        x_labels: Vec<String>,
        y_labels: Vec<String>,
        out: Vec<Vec<(String, String)>>,
    ) -> Result<Self, FuncError> {
        if x_labels.is_empty() || y_labels.is_empty() {
            return Err(FuncError::Invalid("empty input domain".into()));
        }
        for labels in [&x_labels, &y_labels] {
            let set: BTreeSet<&String> = labels.iter().collect();
            if set.len() != labels.len() {
                return Err(FuncError::Invalid("duplicate input label".into()));
            }
        }
        if out.len() != x_labels.len() || out.iter().any(|row| row.len() != y_labels.len()) {
            return Err(FuncError::Invalid("output matrix dimensions mismatch".into()));
        }
        Ok(FunctionTable { x_labels, y_labels, out })
    }

    /// Construct a symmetric table from single output values.
    pub fn symmetric(
        x_labels: Vec<String>,
        y_labels: Vec<String>,
        values: Vec<Vec<String>>,
    ) -> Result<Self, FuncError> {
        let out = values
            .into_iter()
            .map(|row| row.into_iter().map(|v| (v.clone(), v)).collect())
            .collect();
        FunctionTable::new(x_labels, y_labels, out)
    }

    pub fn pair(&self, xi: usize, yi: usize) -> &(String, String) {
        &self.out[xi][yi]
    }

    /// The common (symmetric) output at a cell; valid only for symmetric tables.
    pub fn sym(&self, xi: usize, yi: usize) -> &str {
        &self.out[xi][yi].0
    }

    pub fn is_symmetric(&self) -> bool {
        self.out.iter().all(|row| row.iter().all(|(a, b)| a == b))
    }

    fn require_symmetric(&self) -> Result<(), FuncError> {
        if self.is_symmetric() {
            Ok(())
        } else {
            Err(FuncError::AsymmetricInput)
        }
    }

    /// Sorted distinct symmetric output values.
    pub fn outputs_sorted(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .out
            .iter()
            .flat_map(|row| row.iter().map(|(a, _)| a.clone()))
            .collect();
        set.into_iter().collect()
    }

    /// Restriction to index subsets (preserving order).
    pub fn restrict(&self, xs: &[usize], ys: &[usize]) -> FunctionTable {
        FunctionTable {
            x_labels: xs.iter().map(|&i| self.x_labels[i].clone()).collect(),
            y_labels: ys.iter().map(|&j| self.y_labels[j].clone()).collect(),
            out: xs
                .iter()
                .map(|&i| ys.iter().map(|&j| self.out[i][j].clone()).collect())
                .collect(),
        }
    }

    /// Parse the `.fn` JSON format:
    /// `{"x": [labels], "y": [labels], "out": [["a|b" or "v", ...], ...]}`,
    /// row-major over x; a single token means a symmetric output.
    pub fn from_json(text: &str) -> Result<Self, FuncError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| FuncError::Parse(e.to_string()))?;
        let labels = |k: &str| -> Result<Vec<String>, FuncError> {
            v.get(k)
                .and_then(|a| a.as_array())
                .ok_or_else(|| FuncError::Parse(format!("missing array field \"{k}\"")))?
                .iter()
                .map(|s| {
                    s.as_str()
                        .map(str::to_owned)
                        .ok_or_else(|| FuncError::Parse(format!("non-string label in \"{k}\"")))
                })
                .collect()
        };
        let x_labels = labels("x")?;
        let y_labels = labels("y")?;
        let rows = v
            .get("out")
            .and_then(|a| a.as_array())
            .ok_or_else(|| FuncError::Parse("missing array field \"out\"".into()))?;
        let mut out = Vec::new();
        for row in rows {
            let cells = row
                .as_array()
                .ok_or_else(|| FuncError::Parse("\"out\" rows must be arrays".into()))?;
            let mut r = Vec::new();
            for c in cells {
                let s = c
                    .as_str()
                    .ok_or_else(|| FuncError::Parse("outputs must be strings".into()))?;
                let (a, b) = match s.split_once('|') {
                    Some((a, b)) => (a.to_owned(), b.to_owned()),
                    None => (s.to_owned(), s.to_owned()),
                };
                r.push((a, b));
            }
            out.push(r);
        }
        FunctionTable::new(x_labels, y_labels, out)
    }

    pub fn to_json(&self) -> String {
        let cell = |(a, b): &(String, String)| {
            if a == b {
                a.clone()
            } else {
                format!("{a}|{b}")
            }
        };
        let v = serde_json::json!({
            "x": self.x_labels,
            "y": self.y_labels,
            "out": self.out.iter().map(|row| row.iter().map(cell).collect::<Vec<_>>()).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&v).expect("json serialization cannot fail")
    }
}

// ---------------------------------------------------------------------------
// Cuts and decomposition

/// A cut: the connected-component partition of one side's inputs under the
/// confusability relation. Inputs in different blocks give different outputs
/// against every opposing input, so announcing the block leaks nothing beyond
/// what the output already determines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cut {
    pub side: Side,
    /// Partition into >= 2 blocks, each a list of labels in table order;
    /// blocks ordered by their smallest member index.
    pub blocks: Vec<Vec<String>>,
}

/// Connected components of the confusability graph on the given side of the
/// (restricted) table: u ~ u' iff some opposing input yields equal outputs.
/// Returned as index lists (into the restriction), ordered by first member.
fn confusability_components(f: &FunctionTable, side: Side) -> Vec<Vec<usize>> {
    let n = match side {
        Side::Alice => f.x_labels.len(),
        Side::Bob => f.y_labels.len(),
    };
    let m = match side {
        Side::Alice => f.y_labels.len(),
        Side::Bob => f.x_labels.len(),
    };
    let confusable = |i: usize, j: usize| -> bool {
        (0..m).any(|k| match side {
            Side::Alice => f.sym(i, k) == f.sym(j, k),
            Side::Bob => f.sym(k, i) == f.sym(k, j),
        })
    };
    // Union-find over side indices.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if confusable(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    let mut list: Vec<Vec<usize>> = comps.into_values().collect();
    list.sort_by_key(|c| c[0]);
    list
}

/// Find a cut on the given side, if one exists (>= 2 confusability components).
pub fn find_cut(f: &FunctionTable, side: Side) -> Result<Option<Cut>, FuncError> {
    f.require_symmetric()?;
    let comps = confusability_components(f, side);
    if comps.len() < 2 {
        return Ok(None);
    }
    let labels = match side {
        Side::Alice => &f.x_labels,
        Side::Bob => &f.y_labels,
    };
    Ok(Some(Cut {
        side,
        blocks: comps
            .into_iter()
            .map(|c| c.into_iter().map(|i| labels[i].clone()).collect())
            .collect(),
    }))
}

/// A node of a decomposition tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DecompNode {
    Leaf { output: String },
    Internal { side: Side, blocks: Vec<Vec<String>>, children: Vec<DecompNode> },
}

/// A full decomposition of a symmetric table, with enough context to
/// synthesize a protocol from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecompositionTree {
    pub x_labels: Vec<String>,
    pub y_labels: Vec<String>,
    /// Sorted distinct outputs (the output alphabet used for announcement).
    pub outputs: Vec<String>,
    pub root: DecompNode,
}

impl DecompositionTree {
    pub fn depth(&self) -> usize {
        fn d(n: &DecompNode) -> usize {
            match n {
                DecompNode::Leaf { .. } => 0,
                DecompNode::Internal { children, .. } => {
                    1 + children.iter().map(d).max().unwrap_or(0)
                }
            }
        }
        d(&self.root)
    }
}

/// Result of [`decompose`]: either a full tree or the sub-rectangle at which
/// the recursion got stuck (non-constant, no cut on either side).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Decomposition {
    Tree(DecompositionTree),
    Undecomposable { x_subset: Vec<String>, y_subset: Vec<String> },
}

/// Recursive decomposition: constant => leaf; else try an Alice cut, then a
/// Bob cut, and recurse into each block's restriction.
pub fn decompose(f: &FunctionTable) -> Result<Decomposition, FuncError> {
    f.require_symmetric()?;
    let xs: Vec<usize> = (0..f.x_labels.len()).collect();
    let ys: Vec<usize> = (0..f.y_labels.len()).collect();
    match decompose_rect(f, &xs, &ys) {
        Ok(root) => Ok(Decomposition::Tree(DecompositionTree {
            x_labels: f.x_labels.clone(),
            y_labels: f.y_labels.clone(),
            outputs: f.outputs_sorted(),
            root,
        })),
        Err((bx, by)) => Ok(Decomposition::Undecomposable {
            x_subset: bx.into_iter().map(|i| f.x_labels[i].clone()).collect(),
            y_subset: by.into_iter().map(|j| f.y_labels[j].clone()).collect(),
        }),
    }
}

fn decompose_rect(
    f: &FunctionTable,
    xs: &[usize],
    ys: &[usize],
) -> Result<DecompNode, (Vec<usize>, Vec<usize>)> {
    let first = f.sym(xs[0], ys[0]);
    if xs
        .iter()
        .all(|&i| ys.iter().all(|&j| f.sym(i, j) == first))
    {
        return Ok(DecompNode::Leaf { output: first.to_owned() });
    }
    let sub = f.restrict(xs, ys);
    for side in [Side::Alice, Side::Bob] {
        let comps = confusability_components(&sub, side);
        if comps.len() < 2 {
            continue;
        }
        let mut blocks = Vec::new();
        let mut children = Vec::new();
        for comp in &comps {
            // Map restriction-local indices back into the original table.
            let (bxs, bys): (Vec<usize>, Vec<usize>) = match side {
                Side::Alice => (comp.iter().map(|&i| xs[i]).collect(), ys.to_vec()),
                Side::Bob => (xs.to_vec(), comp.iter().map(|&j| ys[j]).collect()),
            };
            let labels = match side {
                Side::Alice => &sub.x_labels,
                Side::Bob => &sub.y_labels,
            };
            blocks.push(comp.iter().map(|&i| labels[i].clone()).collect());
            children.push(decompose_rect(f, &bxs, &bys)?);
        }
        return Ok(DecompNode::Internal { side, blocks, children });
    }
    Err((xs.to_vec(), ys.to_vec()))
}

/// True iff f is non-constant and has no cut on either side.
pub fn is_undecomposable_top_level(f: &FunctionTable) -> Result<bool, FuncError> {
    f.require_symmetric()?;
    let first = f.sym(0, 0);
    let constant = (0..f.x_labels.len())
        .all(|i| (0..f.y_labels.len()).all(|j| f.sym(i, j) == first));
    if constant {
        return Ok(false);
    }
    Ok(find_cut(f, Side::Alice)?.is_none() && find_cut(f, Side::Bob)?.is_none())
}

/// Exhaustive smallest-area-first, then lexicographic, search for a
/// sub-rectangle that is undecomposable at top level. `None` iff f is
/// decomposable. Sub-rectangles with a single row or column never qualify.
pub fn find_undecomposable_minor(
    f: &FunctionTable,
) -> Result<Option<(Vec<String>, Vec<String>)>, FuncError> {
    f.require_symmetric()?;
    let nx = f.x_labels.len();
    let ny = f.y_labels.len();
    let mut shapes: Vec<(usize, usize)> = (2..=nx)
        .flat_map(|a| (2..=ny).map(move |b| (a, b)))
        .collect();
    shapes.sort_by_key(|&(a, b)| (a * b, a, b));
    for (a, b) in shapes {
        for xs in subsets_of_size(nx, a) {
            for ys in subsets_of_size(ny, b) {
                let sub = f.restrict(&xs, &ys);
                if is_undecomposable_top_level(&sub)? {
                    return Ok(Some((sub.x_labels, sub.y_labels)));
                }
            }
        }
    }
    Ok(None)
}

/// All k-subsets of 0..n in lexicographic order.
fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Common information and redundancy

/// The common-information function f': build the bipartite graph on nodes
/// (x, a) and (y, b) with an edge iff f(x,y) = (a, b); f'(x, y) is the
/// connected component containing that cell's edge. Output labels are
/// canonical component ids ("c0", "c1", ... assigned in the order of the
/// components' sorted member lists).
pub fn common_information(f: &FunctionTable) -> FunctionTable {
    #[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
    enum Node {
        X(usize, String),
        Y(usize, String),
    }
    let mut ids: BTreeMap<Node, usize> = BTreeMap::new();
    let mut id_of = |n: Node, parent: &mut Vec<usize>| -> usize {
        let next = ids.len();
        *ids.entry(n).or_insert_with(|| {
            parent.push(next);
            next
        })
    };
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    let nx = f.x_labels.len();
    let ny = f.y_labels.len();
    let mut cell_nodes = vec![vec![0usize; ny]; nx];
    for i in 0..nx {
        for j in 0..ny {
            let (a, b) = f.pair(i, j);
            let u = id_of(Node::X(i, a.clone()), &mut parent);
            let v = id_of(Node::Y(j, b.clone()), &mut parent);
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[rv] = ru;
            }
            cell_nodes[i][j] = u;
        }
    }
    // Canonical component labels: sort components by their sorted member lists.
    let mut members: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (node, &id) in &ids {
        let r = find(&mut parent, id);
        let desc = match node {
            Node::X(i, a) => format!("x:{}:{}", f.x_labels[*i], a),
            Node::Y(j, b) => format!("y:{}:{}", f.y_labels[*j], b),
        };
        members.entry(r).or_default().push(desc);
    }
    let mut keyed: Vec<(Vec<String>, usize)> = members
        .into_iter()
        .map(|(root, mut m)| {
            m.sort();
            (m, root)
        })
        .collect();
    keyed.sort();
    let label_of: BTreeMap<usize, String> = keyed
        .iter()
        .enumerate()
        .map(|(k, (_, root))| (*root, format!("c{k}")))
        .collect();

    let values: Vec<Vec<String>> = (0..nx)
        .map(|i| {
            (0..ny)
                .map(|j| label_of[&find(&mut parent, cell_nodes[i][j])].clone())
                .collect()
        })
        .collect();
    FunctionTable::symmetric(f.x_labels.clone(), f.y_labels.clone(), values)
        .expect("dimensions preserved")
}

/// One redundant-input removal step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Removal {
    pub side: Side,
    pub removed: String,
    pub dominator: String,
}

/// x' dominates x on the Alice side iff substituting x' for x is unnoticeable
/// to Bob (identical b column behavior) while Alice can still compute her own
/// output from (x, a(x', y)) — i.e. a(x, .) factors through a(x', .).
fn dominates(f: &FunctionTable, side: Side, xp: usize, x: usize) -> bool {
    let m = match side {
        Side::Alice => f.y_labels.len(),
        Side::Bob => f.x_labels.len(),
    };
    let own = |i: usize, k: usize| match side {
        Side::Alice => &f.pair(i, k).0,
        Side::Bob => &f.pair(k, i).1,
    };
    let other = |i: usize, k: usize| match side {
        Side::Alice => &f.pair(i, k).1,
        Side::Bob => &f.pair(k, i).0,
    };
    // Unnoticeable to the opposing party.
    if (0..m).any(|k| other(x, k) != other(xp, k)) {
        return false;
    }
    // Own output recoverable: equal a(x',.) values force equal a(x,.) values.
    for k in 0..m {
        for l in (k + 1)..m {
            if own(xp, k) == own(xp, l) && own(x, k) != own(x, l) {
                return false;
            }
        }
    }
    true
}

/// Repeatedly remove dominated inputs (Alice side first, lexicographic order
/// by label) until none remains. Within a mutual-domination (duplicate)
/// class the lexicographically first label is kept.
pub fn remove_redundant_inputs(f: &FunctionTable) -> (FunctionTable, Vec<Removal>) {
    let mut cur = f.clone();
    let mut trace = Vec::new();
    'outer: loop {
        for side in [Side::Alice, Side::Bob] {
            let labels = match side {
                Side::Alice => cur.x_labels.clone(),
                Side::Bob => cur.y_labels.clone(),
            };
            if labels.len() < 2 {
                continue;
            }
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.sort_by(|&i, &j| labels[i].cmp(&labels[j]));
            for &x in &order {
                // x is removable if some x' dominates it and either x' is
                // lexicographically smaller or the domination is one-sided.
                let dominator = order.iter().copied().find(|&xp| {
                    xp != x
                        && dominates(&cur, side, xp, x)
                        && (labels[xp] < labels[x] || !dominates(&cur, side, x, xp))
                });
                if let Some(xp) = dominator {
                    trace.push(Removal {
                        side,
                        removed: labels[x].clone(),
                        dominator: labels[xp].clone(),
                    });
                    let keep: Vec<usize> =
                        (0..labels.len()).filter(|&i| i != x).collect();
                    cur = match side {
                        Side::Alice => {
                            let ys: Vec<usize> = (0..cur.y_labels.len()).collect();
                            cur.restrict(&keep, &ys)
                        }
                        Side::Bob => {
                            let xs: Vec<usize> = (0..cur.x_labels.len()).collect();
                            cur.restrict(&xs, &keep)
                        }
                    };
                    continue 'outer;
                }
            }
        }
        break;
    }
    (cur, trace)
}

// ---------------------------------------------------------------------------
// Classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// f' decomposable and f ~ f' (isomorphism proxy): perfectly secure
    /// plain-model protocol exists.
    PerfectPlainModel,
    /// After removing redundant inputs the same test passes: realizable with
    /// ideal commitment, but not known to be plain-model realizable.
    ComHybridOnly,
    NeitherKnownModel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Evidence {
    Tree(DecompositionTree),
    Minor { x_subset: Vec<String>, y_subset: Vec<String> },
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// The common-information function the verdict was decided on (of f for
    /// PerfectPlainModel, of the reduced table otherwise).
    pub f_prime: FunctionTable,
    pub evidence: Evidence,
    pub redundancy_trace: Vec<Removal>,
    /// Whether the isomorphism proxy f ~ f' held at the deciding stage.
    pub isomorphism_proxy: bool,
}

impl Serialize for FunctionTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: serde_json::Value = serde_json::from_str(&self.to_json())
            .expect("to_json emits valid json");
        v.serialize(s)
    }
}

/// The isomorphism proxy: a(x,y) must be a function of (x, f'(x,y)) and
/// b(x,y) a function of (y, f'(x,y)).
pub fn isomorphism_proxy(f: &FunctionTable, fp: &FunctionTable) -> bool {
    let nx = f.x_labels.len();
    let ny = f.y_labels.len();
    for i in 0..nx {
        for j in 0..ny {
            for l in (j + 1)..ny {
                if fp.sym(i, j) == fp.sym(i, l) && f.pair(i, j).0 != f.pair(i, l).0 {
                    return false;
                }
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            for k in (i + 1)..nx {
                if fp.sym(i, j) == fp.sym(k, j) && f.pair(i, j).1 != f.pair(k, j).1 {
                    return false;
                }
            }
        }
    }
    true
}

/// Classify f into the three realizability classes.
pub fn classify(f: &FunctionTable) -> Classification {
    let stage = |g: &FunctionTable| -> (FunctionTable, bool, Decomposition) {
        let fp = common_information(g);
        let proxy = isomorphism_proxy(g, &fp);
        let d = decompose(&fp).expect("f' is symmetric by construction");
        (fp, proxy, d)
    };

    let (fp, proxy, d) = stage(f);
    if proxy {
        if let Decomposition::Tree(tree) = d {
            return Classification {
                verdict: Verdict::PerfectPlainModel,
                f_prime: fp,
                evidence: Evidence::Tree(tree),
                redundancy_trace: Vec::new(),
                isomorphism_proxy: true,
            };
        }
    }

    let (reduced, trace) = remove_redundant_inputs(f);
    let (fp2, proxy2, d2) = stage(&reduced);
    let evidence = match &d2 {
        Decomposition::Tree(tree) => Evidence::Tree(tree.clone()),
        Decomposition::Undecomposable { .. } => {
            match find_undecomposable_minor(&fp2).expect("f' symmetric") {
                Some((xs, ys)) => Evidence::Minor { x_subset: xs, y_subset: ys },
                None => unreachable!("undecomposable table must contain a minor witness"),
            }
        }
    };
    let verdict = if proxy2 && matches!(d2, Decomposition::Tree(_)) {
        Verdict::ComHybridOnly
    } else {
        Verdict::NeitherKnownModel
    };
    Classification {
        verdict,
        f_prime: fp2,
        evidence,
        redundancy_trace: trace,
        isomorphism_proxy: proxy2,
    }
}

// ---------------------------------------------------------------------------
// Protocol synthesis

use crate::bits::index_width as bits_for;

/// Walk state while simulating the synthesized protocol on the tree.
fn walk<'a>(root: &'a DecompNode, msgs: &[Bits]) -> &'a DecompNode {
    let mut pos = root;
    for (idx, m) in msgs.iter().enumerate() {
        let round = idx + 1;
        if let DecompNode::Internal { side, children, .. } = pos {
            if *side == Side::speaker(round) {
                pos = &children[m.to_u64() as usize];
            }
        }
    }
    pos
}

/// Synthesize the plain-model protocol that walks the decomposition tree:
/// at each internal node the owning side announces the index of the block
/// containing its input (a fixed-width dummy message is sent when it is the
/// other side's node), and a final round announces the output as an index
/// into the tree's sorted output alphabet.
pub fn synthesize_protocol(tree: &DecompositionTree) -> ProtocolSpec {
    let block_bits = {
        fn max_branch(n: &DecompNode) -> usize {
            match n {
                DecompNode::Leaf { .. } => 0,
                DecompNode::Internal { children, .. } => children
                    .len()
                    .max(children.iter().map(max_branch).max().unwrap_or(0)),
            }
        }
        bits_for(max_branch(&tree.root)).max(1)
    };
    let out_bits = bits_for(tree.outputs.len());
    let x_bits = bits_for(tree.x_labels.len());
    let y_bits = bits_for(tree.y_labels.len());

    // Simulate every input pair to find when each path reaches its leaf, and
    // collect the reachable transcript prefixes per round.
    let own_block = |node: &DecompNode, label: &str| -> usize {
        match node {
            DecompNode::Internal { blocks, .. } => blocks
                .iter()
                .position(|b| b.iter().any(|l| l == label))
                .expect("blocks partition the rectangle"),
            DecompNode::Leaf { .. } => unreachable!(),
        }
    };
    let mut completion = 1usize; // first round at which every path sits on a leaf
    let mut runs: Vec<(usize, usize, Vec<Bits>)> = Vec::new();
    for (xi, xl) in tree.x_labels.iter().enumerate() {
        for (yi, yl) in tree.y_labels.iter().enumerate() {
            let mut msgs: Vec<Bits> = Vec::new();
            loop {
                let round = msgs.len() + 1;
                let pos = walk(&tree.root, &msgs);
                match pos {
                    DecompNode::Leaf { .. } => {
                        completion = completion.max(round);
                        break;
                    }
                    DecompNode::Internal { side, .. } => {
                        let m = if *side == Side::speaker(round) {
                            let label = if *side == Side::Alice { xl } else { yl };
                            Bits::from_u64(own_block(pos, label) as u64, block_bits)
                        } else {
                            Bits::from_u64(0, block_bits)
                        };
                        msgs.push(m);
                    }
                }
            }
            runs.push((xi, yi, msgs));
        }
    }
    let rounds = completion; // rounds 1..completion-1 walk the tree; round `completion` announces

    // Inputs that reach their leaf early still send dummy messages until the
    // common output round, so pad every run to the full walking length.
    for (_, _, msgs) in &mut runs {
        while msgs.len() < rounds - 1 {
            msgs.push(Bits::from_u64(0, block_bits));
        }
    }

    // Reachable prefixes per round, with the per-prefix message rule.
    let lit0 = Expr::Lit(Bits::from_u64(0, block_bits));
    let mut alice_rounds: BTreeMap<usize, Expr> = BTreeMap::new();
    let mut bob_rounds: BTreeMap<usize, Expr> = BTreeMap::new();
    for round in 1..=rounds {
        let speaker = Side::speaker(round);
        // Distinct reachable prefixes of length round-1, in deterministic order.
        let mut prefixes: Vec<Vec<Bits>> = Vec::new();
        for (_, _, msgs) in &runs {
            let pref: Vec<Bits> = msgs.iter().take(round - 1).cloned().collect();
            if pref.len() == round - 1 && !prefixes.contains(&pref) {
                prefixes.push(pref);
            }
        }
        prefixes.sort();

        let expr_for_prefix = |pref: &[Bits]| -> Expr {
            let pos = walk(&tree.root, pref);
            if round == rounds {
                // Output round: the leaf (hence the output) is determined by
                // the prefix for every input consistent with it.
                let output = match walk_to_leaf_output(&tree.root, pref, &runs, round) {
                    Some(o) => o,
                    None => match pos {
                        DecompNode::Leaf { output } => output.clone(),
                        DecompNode::Internal { .. } => {
                            unreachable!("all paths reach a leaf by the output round")
                        }
                    },
                };
                let idx = tree
                    .outputs
                    .iter()
                    .position(|o| *o == output)
                    .expect("leaf output in alphabet");
                return Expr::Lit(Bits::from_u64(idx as u64, out_bits));
            }
            match pos {
                DecompNode::Internal { side, blocks, .. } if *side == speaker => {
                    // Dispatch on own input: nested if-chain over the labels
                    // appearing in this rectangle, last one as fallback.
                    let in_bits = if speaker == Side::Alice { x_bits } else { y_bits };
                    let all_labels =
                        if speaker == Side::Alice { &tree.x_labels } else { &tree.y_labels };
                    let mut cases: Vec<(usize, usize)> = Vec::new(); // (input index, block)
                    for (bi, block) in blocks.iter().enumerate() {
                        for l in block {
                            let idx = all_labels.iter().position(|a| a == l).unwrap();
                            cases.push((idx, bi));
                        }
                    }
                    cases.sort();
                    let mut expr =
                        Expr::Lit(Bits::from_u64(cases.last().unwrap().1 as u64, block_bits));
                    for &(idx, bi) in cases.iter().rev().skip(1) {
                        expr = Expr::If(
                            Box::new(Expr::Eq(
                                Box::new(Expr::Input),
                                Box::new(Expr::Lit(Bits::from_u64(idx as u64, in_bits))),
                            )),
                            Box::new(Expr::Lit(Bits::from_u64(bi as u64, block_bits))),
                            Box::new(expr),
                        );
                    }
                    expr
                }
                _ => lit0.clone(),
            }
        };

        // Dispatch on the transcript prefix (vacuous at round 1).
        let mut expr = expr_for_prefix(prefixes.last().expect("some prefix is reachable"));
        if round > 1 {
            for pref in prefixes.iter().rev().skip(1) {
                let concat =
                    Expr::Concat((1..round).map(|j| Expr::Msg { round: j, range: None }).collect());
                expr = Expr::If(
                    Box::new(Expr::Eq(
                        Box::new(concat),
                        Box::new(Expr::Lit(Bits::concat(pref))),
                    )),
                    Box::new(expr_for_prefix(pref)),
                    Box::new(expr),
                );
            }
        }
        match speaker {
            Side::Alice => alice_rounds.insert(round, expr),
            Side::Bob => bob_rounds.insert(round, expr),
        };
    }

    ProtocolSpec {
        kappa: 1,
        answer_bits: 1,
        rounds,
        alice: PartyProgram { rand_bits: 0, input_bits: x_bits, rounds: alice_rounds },
        bob: PartyProgram { rand_bits: 0, input_bits: y_bits, rounds: bob_rounds },
    }
}

/// For the output round: find the leaf output reached by any run whose
/// messages extend `pref` (all such runs share the same leaf by construction
/// of the walk).
fn walk_to_leaf_output(
    root: &DecompNode,
    pref: &[Bits],
    runs: &[(usize, usize, Vec<Bits>)],
    _round: usize,
) -> Option<String> {
    for (_, _, msgs) in runs {
        if msgs.len() >= pref.len() && msgs[..pref.len()] == *pref {
            if let DecompNode::Leaf { output } = walk(root, msgs) {
                return Some(output.clone());
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
