//! The `.sfe` protocol language: a minimal s-expression DSL for two-party
//! random-oracle protocols, so test protocols are data rather than code.
//!
//! Canonical grammar (comments run from `;` to end of line):
//!
//! ```text
//! (protocol :kappa K :answer-bits A :rounds N
//!   (alice :rand R :input-bits B
//!     (round 1 EXPR) ...)
//!   (bob :rand R :input-bits B
//!     (round 2 EXPR) ...))
//!
//! EXPR := (input) | (rand i) | (rand lo..hi)
//!       | (msg j) | (msg j lo..hi)
//!       | (query EXPR) | (concat EXPR...) | (eq EXPR EXPR)
//!       | (if EXPR EXPR EXPR) | #b0101
//! ```
//!
//! Messages and oracle queries/answers are fixed-width bit strings; every
//! expression has a statically known width, which keeps the transcript tree
//! finitely enumerable. There are no loops, so the per-party oracle-query
//! budget is a static count of `query` forms.

use crate::bits::Bits;
use crate::Side;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("arity/shape error: {0}")]
    Arity(String),
    #[error("width mismatch: {0}")]
    WidthMismatch(String),
    #[error("round {round} references message of round {referenced} which is not yet sent")]
    ForwardReference { round: usize, referenced: usize },
    #[error("oracle answer unavailable for query {query} (replay mode)")]
    OracleUnavailable { query: Bits },
}

/// Next-message expressions. `Rand` and `Msg` carry inclusive bit ranges
/// (a single index parses to a one-bit range).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Input,
    Rand { lo: usize, hi: usize },
    Msg { round: usize, range: Option<(usize, usize)> },
    Query(Box<Expr>),
    Concat(Vec<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Lit(Bits),
}

/// One party's next-message programs plus its declared budgets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyProgram {
    pub rand_bits: usize,
    pub input_bits: usize,
    /// Round number -> next-message expression (only this party's rounds).
    pub rounds: BTreeMap<usize, Expr>,
}

/// A complete protocol: oracle parameters, round count, both programs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub kappa: usize,
    pub answer_bits: usize,
    pub rounds: usize,
    pub alice: PartyProgram,
    pub bob: PartyProgram,
}

impl ProtocolSpec {
    pub fn program(&self, side: Side) -> &PartyProgram {
        match side {
            Side::Alice => &self.alice,
            Side::Bob => &self.bob,
        }
    }

    /// Static per-protocol oracle-query budget `m`: the number of `query`
    /// forms across both programs (at least 1, so downstream caps are sane).
    pub fn query_count(&self) -> usize {
        fn count(e: &Expr) -> usize {
            match e {
                Expr::Query(a) => 1 + count(a),
                Expr::Concat(parts) => parts.iter().map(count).sum(),
                Expr::Eq(a, b) => count(a) + count(b),
                Expr::If(c, t, f) => count(c) + count(t) + count(f),
                _ => 0,
            }
        }
        let total: usize = self
            .alice
            .rounds
            .values()
            .chain(self.bob.rounds.values())
            .map(count)
            .sum();
        total.max(1)
    }

    /// Statically computed message width per round (index 0 = round 1).
    pub fn message_widths(&self) -> Result<Vec<usize>, DslError> {
        self.check()?;
        let mut widths = Vec::with_capacity(self.rounds);
        for r in 1..=self.rounds {
            let side = Side::speaker(r);
            let e = &self.program(side).rounds[&r];
            let w = expr_width(e, self, side, r, &widths)?;
            widths.push(w);
        }
        Ok(widths)
    }

    /// Validate all structural invariants (round coverage, widths, references).
    pub fn check(&self) -> Result<(), DslError> {
        if self.rounds == 0 {
            return Err(DslError::Arity("a protocol needs at least one round".into()));
        }
        let mut widths: Vec<usize> = Vec::new();
        for r in 1..=self.rounds {
            let side = Side::speaker(r);
            let prog = self.program(side);
            let e = prog.rounds.get(&r).ok_or_else(|| {
                DslError::Arity(format!("missing (round {r}) in the {side} program"))
            })?;
            let w = expr_width(e, self, side, r, &widths)?;
            widths.push(w);
        }
        for (side, prog) in [(Side::Alice, &self.alice), (Side::Bob, &self.bob)] {
            for &r in prog.rounds.keys() {
                if r == 0 || r > self.rounds {
                    return Err(DslError::Arity(format!(
                        "{side} program declares round {r}, outside 1..={}",
                        self.rounds
                    )));
                }
                if Side::speaker(r) != side {
                    return Err(DslError::Arity(format!(
                        "round {r} belongs to {}, not {side}",
                        Side::speaker(r)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Static width of an expression in the context of `side` speaking at `round`,
/// given the widths of all earlier rounds.
fn expr_width(
    e: &Expr,
    spec: &ProtocolSpec,
    side: Side,
    round: usize,
    earlier: &[usize],
) -> Result<usize, DslError> {
    let prog = spec.program(side);
    match e {
        Expr::Input => Ok(prog.input_bits),
        Expr::Rand { lo, hi } => {
            if lo > hi || *hi >= prog.rand_bits {
                return Err(DslError::Arity(format!(
                    "(rand {lo}..{hi}) outside the {side} tape of {} bits",
                    prog.rand_bits
                )));
            }
            Ok(hi - lo + 1)
        }
        Expr::Msg { round: j, range } => {
            if *j == 0 || *j >= round {
                return Err(DslError::ForwardReference { round, referenced: *j });
            }
            let w = earlier[*j - 1];
            match range {
                None => Ok(w),
                Some((lo, hi)) => {
                    if lo > hi || *hi >= w {
                        return Err(DslError::Arity(format!(
                            "(msg {j} {lo}..{hi}) outside the {w}-bit round-{j} message"
                        )));
                    }
                    Ok(hi - lo + 1)
                }
            }
        }
        Expr::Query(arg) => {
            let w = expr_width(arg, spec, side, round, earlier)?;
            if w != spec.kappa {
                return Err(DslError::WidthMismatch(format!(
                    "query argument is {w} bits, kappa is {}",
                    spec.kappa
                )));
            }
            Ok(spec.answer_bits)
        }
        Expr::Concat(parts) => {
            let mut total = 0;
            for p in parts {
                total += expr_width(p, spec, side, round, earlier)?;
            }
            Ok(total)
        }
        Expr::Eq(a, b) => {
            let wa = expr_width(a, spec, side, round, earlier)?;
            let wb = expr_width(b, spec, side, round, earlier)?;
            if wa != wb {
                return Err(DslError::WidthMismatch(format!(
                    "eq of {wa}-bit and {wb}-bit values"
                )));
            }
            Ok(1)
        }
        Expr::If(c, t, f) => {
            let wc = expr_width(c, spec, side, round, earlier)?;
            if wc != 1 {
                return Err(DslError::WidthMismatch(format!(
                    "if condition is {wc} bits, expected 1"
                )));
            }
            let wt = expr_width(t, spec, side, round, earlier)?;
            let wf = expr_width(f, spec, side, round, earlier)?;
            if wt != wf {
                return Err(DslError::WidthMismatch(format!(
                    "if branches have widths {wt} and {wf}"
                )));
            }
            Ok(wt)
        }
        Expr::Lit(b) => Ok(b.width()),
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// A party's local state while producing a message: its input encoding, tape,
/// the party transcript so far, and all query-answer pairs it has generated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PartyView {
    pub side: Side,
    pub input: Bits,
    pub tape: Bits,
    /// Party messages of rounds 1..=r-1 (Eve's announcements are not protocol
    /// inputs; honest parties ignore them).
    pub msgs: Vec<Bits>,
    /// (round, query, answer) in generation order; one entry per distinct query.
    pub pairs: Vec<(usize, Bits, Bits)>,
}

impl PartyView {
    pub fn lookup(&self, q: &Bits) -> Option<&Bits> {
        self.pairs.iter().find(|(_, pq, _)| pq == q).map(|(_, _, a)| a)
    }

    /// The query set Q(V) of this view.
    pub fn queries(&self) -> impl Iterator<Item = &Bits> {
        self.pairs.iter().map(|(_, q, _)| q)
    }
}

/// Oracle access during evaluation. Replay oracles answer only already-fixed
/// points and signal `OracleUnavailable` otherwise, letting the exact engine
/// branch and re-run; sampling oracles fill fresh points from a seeded RNG.
pub trait OracleAccess {
    fn query(&mut self, q: &Bits) -> Result<Bits, DslError>;
}

/// Evaluate the round program. Returns the message and the *new* query-answer
/// pairs this evaluation generated (pairs already in the view are not
/// repeated; a query asked twice yields one entry). Deterministic given the
/// view and the oracle's answers.
pub fn next_message(
    spec: &ProtocolSpec,
    side: Side,
    round: usize,
    view: &PartyView,
    oracle: &mut dyn OracleAccess,
) -> Result<(Bits, Vec<(Bits, Bits)>), DslError> {
    debug_assert_eq!(Side::speaker(round), side, "round parity must match side");
    let expr = self_round_expr(spec, side, round)?;
    let mut new_pairs: Vec<(Bits, Bits)> = Vec::new();
    let msg = eval(expr, spec, view, oracle, &mut new_pairs)?;
    Ok((msg, new_pairs))
}

fn self_round_expr<'a>(
    spec: &'a ProtocolSpec,
    side: Side,
    round: usize,
) -> Result<&'a Expr, DslError> {
    spec.program(side)
        .rounds
        .get(&round)
        .ok_or_else(|| DslError::Arity(format!("no (round {round}) in the {side} program")))
}

fn eval(
    e: &Expr,
    spec: &ProtocolSpec,
    view: &PartyView,
    oracle: &mut dyn OracleAccess,
    new_pairs: &mut Vec<(Bits, Bits)>,
) -> Result<Bits, DslError> {
    match e {
        Expr::Input => Ok(view.input.clone()),
        Expr::Rand { lo, hi } => Ok(view.tape.slice(*lo, *hi)),
        Expr::Msg { round, range } => {
            let m = &view.msgs[*round - 1];
            Ok(match range {
                None => m.clone(),
                Some((lo, hi)) => m.slice(*lo, *hi),
            })
        }
        Expr::Query(arg) => {
            let q = eval(arg, spec, view, oracle, new_pairs)?;
            if let Some(a) = view.lookup(&q) {
                return Ok(a.clone());
            }
            if let Some((_, a)) = new_pairs.iter().find(|(pq, _)| pq == &q) {
                return Ok(a.clone());
            }
            let a = oracle.query(&q)?;
            new_pairs.push((q, a.clone()));
            Ok(a)
        }
        Expr::Concat(parts) => {
            let mut out = Vec::new();
            for p in parts {
                out.push(eval(p, spec, view, oracle, new_pairs)?);
            }
            Ok(Bits::concat(&out))
        }
        Expr::Eq(a, b) => {
            let va = eval(a, spec, view, oracle, new_pairs)?;
            let vb = eval(b, spec, view, oracle, new_pairs)?;
            Ok(Bits::from_u64((va == vb) as u64, 1))
        }
        Expr::If(c, t, f) => {
            let vc = eval(c, spec, view, oracle, new_pairs)?;
            if vc.bit(0) {
                eval(t, spec, view, oracle, new_pairs)
            } else {
                eval(f, spec, view, oracle, new_pairs)
            }
        }
        Expr::Lit(b) => Ok(b.clone()),
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone)]
enum SExp {
    Atom { text: String, line: usize, col: usize },
    List { items: Vec<SExp>, line: usize, col: usize },
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> DslError {
    DslError::Syntax { line, col, msg: msg.into() }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

#[derive(Debug)]
enum Token {
    LParen(usize, usize),
    RParen(usize, usize),
    Atom(String, usize, usize),
}

impl<'a> Lexer<'a> {
    fn new(s: &'a str) -> Self {
        Lexer { chars: s.chars().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokens(mut self) -> Vec<Token> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else if c == '(' {
                out.push(Token::LParen(self.line, self.col));
                self.bump();
            } else if c == ')' {
                out.push(Token::RParen(self.line, self.col));
                self.bump();
            } else {
                let (line, col) = (self.line, self.col);
                let mut text = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    text.push(c);
                    self.bump();
                }
                out.push(Token::Atom(text, line, col));
            }
        }
        out
    }
}

fn parse_sexp(tokens: &[Token], i: &mut usize) -> Result<SExp, DslError> {
    match tokens.get(*i) {
        None => Err(syntax(0, 0, "unexpected end of input")),
        Some(Token::Atom(text, line, col)) => {
            *i += 1;
            Ok(SExp::Atom { text: text.clone(), line: *line, col: *col })
        }
        Some(Token::RParen(line, col)) => Err(syntax(*line, *col, "unexpected ')'")),
        Some(Token::LParen(line, col)) => {
            let (line, col) = (*line, *col);
            *i += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(*i) {
                    None => return Err(syntax(line, col, "unclosed '('")),
                    Some(Token::RParen(..)) => {
                        *i += 1;
                        return Ok(SExp::List { items, line, col });
                    }
                    _ => items.push(parse_sexp(tokens, i)?),
                }
            }
        }
    }
}

/// Parse a `.sfe` protocol file. On success the returned spec satisfies all
/// structural invariants (verified by [`ProtocolSpec::check`]).
pub fn parse(text: &str) -> Result<ProtocolSpec, DslError> {
    let tokens = Lexer::new(text).tokens();
    let mut i = 0;
    let top = parse_sexp(&tokens, &mut i)?;
    if let Some(t) = tokens.get(i) {
        let (line, col) = match t {
            Token::LParen(l, c) | Token::RParen(l, c) => (*l, *c),
            Token::Atom(_, l, c) => (*l, *c),
        };
        return Err(syntax(line, col, "trailing input after the protocol form"));
    }
    let spec = compile_protocol(&top)?;
    spec.check()?;
    Ok(spec)
}

fn head<'a>(items: &'a [SExp], pos: (usize, usize)) -> Result<(&'a str, &'a [SExp]), DslError> {
    match items.first() {
        Some(SExp::Atom { text, .. }) => Ok((text.as_str(), &items[1..])),
        _ => Err(syntax(pos.0, pos.1, "expected a form starting with an identifier")),
    }
}

fn atom_usize(e: &SExp, what: &str) -> Result<usize, DslError> {
    match e {
        SExp::Atom { text, line, col } => text
            .parse()
            .map_err(|_| syntax(*line, *col, format!("expected {what}, got '{text}'"))),
        SExp::List { line, col, .. } => {
            Err(syntax(*line, *col, format!("expected {what}, got a list")))
        }
    }
}

/// Parse either `i` or `lo..hi` into an inclusive range.
fn atom_range(e: &SExp, what: &str) -> Result<(usize, usize), DslError> {
    match e {
        SExp::Atom { text, line, col } => {
            let bad = || syntax(*line, *col, format!("expected {what}, got '{text}'"));
            if let Some((lo, hi)) = text.split_once("..") {
                let lo: usize = lo.parse().map_err(|_| bad())?;
                let hi: usize = hi.parse().map_err(|_| bad())?;
                Ok((lo, hi))
            } else {
                let i: usize = text.parse().map_err(|_| bad())?;
                Ok((i, i))
            }
        }
        SExp::List { line, col, .. } => {
            Err(syntax(*line, *col, format!("expected {what}, got a list")))
        }
    }
}

/// Split a form body into leading `:key value` pairs and trailing sub-forms.
fn keyword_args<'a>(
    items: &'a [SExp],
) -> Result<(BTreeMap<&'a str, &'a SExp>, &'a [SExp]), DslError> {
    let mut kw = BTreeMap::new();
    let mut i = 0;
    while i < items.len() {
        match &items[i] {
            SExp::Atom { text, line, col } if text.starts_with(':') => {
                let val = items.get(i + 1).ok_or_else(|| {
                    syntax(*line, *col, format!("keyword {text} is missing a value"))
                })?;
                if kw.insert(text.as_str(), val).is_some() {
                    return Err(syntax(*line, *col, format!("duplicate keyword {text}")));
                }
                i += 2;
            }
            _ => break,
        }
    }
    Ok((kw, &items[i..]))
}

fn compile_protocol(top: &SExp) -> Result<ProtocolSpec, DslError> {
    let (items, pos) = match top {
        SExp::List { items, line, col } => (items.as_slice(), (*line, *col)),
        SExp::Atom { line, col, .. } => {
            return Err(syntax(*line, *col, "expected (protocol ...)"))
        }
    };
    let (name, body) = head(items, pos)?;
    if name != "protocol" {
        return Err(syntax(pos.0, pos.1, format!("expected (protocol ...), got ({name} ...)")));
    }
    let (kw, rest) = keyword_args(body)?;
    let get = |k: &str| -> Result<usize, DslError> {
        let v = kw
            .get(k)
            .ok_or_else(|| DslError::Arity(format!("protocol is missing {k}")))?;
        atom_usize(v, &format!("an integer for {k}"))
    };
    let kappa = get(":kappa")?;
    let answer_bits = get(":answer-bits")?;
    let rounds = get(":rounds")?;
    for k in kw.keys() {
        if !matches!(*k, ":kappa" | ":answer-bits" | ":rounds") {
            return Err(DslError::Arity(format!("unknown protocol keyword {k}")));
        }
    }

    let mut alice = None;
    let mut bob = None;
    for form in rest {
        let (items, pos) = match form {
            SExp::List { items, line, col } => (items.as_slice(), (*line, *col)),
            SExp::Atom { line, col, .. } => {
                return Err(syntax(*line, *col, "expected (alice ...) or (bob ...)"))
            }
        };
        let (name, body) = head(items, pos)?;
        let slot = match name {
            "alice" => &mut alice,
            "bob" => &mut bob,
            other => {
                return Err(syntax(pos.0, pos.1, format!("unexpected ({other} ...) form")))
            }
        };
        if slot.is_some() {
            return Err(syntax(pos.0, pos.1, format!("duplicate ({name} ...) form")));
        }
        *slot = Some(compile_party(body)?);
    }
    Ok(ProtocolSpec {
        kappa,
        answer_bits,
        rounds,
        alice: alice.ok_or_else(|| DslError::Arity("missing (alice ...) form".into()))?,
        bob: bob.ok_or_else(|| DslError::Arity("missing (bob ...) form".into()))?,
    })
}

fn compile_party(body: &[SExp]) -> Result<PartyProgram, DslError> {
    let (kw, rest) = keyword_args(body)?;
    let mut rand_bits = 0;
    let mut input_bits = 0;
    for (k, v) in &kw {
        match *k {
            ":rand" => rand_bits = atom_usize(v, "an integer for :rand")?,
            ":input-bits" => input_bits = atom_usize(v, "an integer for :input-bits")?,
            other => return Err(DslError::Arity(format!("unknown party keyword {other}"))),
        }
    }
    let mut rounds = BTreeMap::new();
    for form in rest {
        let (items, pos) = match form {
            SExp::List { items, line, col } => (items.as_slice(), (*line, *col)),
            SExp::Atom { line, col, .. } => {
                return Err(syntax(*line, *col, "expected a (round i EXPR) form"))
            }
        };
        let (name, body) = head(items, pos)?;
        if name != "round" || body.len() != 2 {
            return Err(syntax(pos.0, pos.1, "expected (round i EXPR)"));
        }
        let r = atom_usize(&body[0], "a round number")?;
        let e = compile_expr(&body[1])?;
        if rounds.insert(r, e).is_some() {
            return Err(syntax(pos.0, pos.1, format!("duplicate round {r}")));
        }
    }
    Ok(PartyProgram { rand_bits, input_bits, rounds })
}

fn compile_expr(e: &SExp) -> Result<Expr, DslError> {
    match e {
        SExp::Atom { text, line, col } => Bits::parse_literal(text)
            .map(Expr::Lit)
            .ok_or_else(|| syntax(*line, *col, format!("expected a #b... literal, got '{text}'"))),
        SExp::List { items, line, col } => {
            let (name, body) = head(items, (*line, *col))?;
            let arity = |n: usize| -> Result<(), DslError> {
                if body.len() != n {
                    Err(DslError::Arity(format!(
                        "({name} ...) takes {n} argument(s), got {}",
                        body.len()
                    )))
                } else {
                    Ok(())
                }
            };
            match name {
                "input" => {
                    arity(0)?;
                    Ok(Expr::Input)
                }
                "rand" => {
                    arity(1)?;
                    let (lo, hi) = atom_range(&body[0], "a tape index or lo..hi range")?;
                    Ok(Expr::Rand { lo, hi })
                }
                "msg" => {
                    if body.is_empty() || body.len() > 2 {
                        return Err(DslError::Arity("(msg j) or (msg j lo..hi)".into()));
                    }
                    let round = atom_usize(&body[0], "a round number")?;
                    let range = if body.len() == 2 {
                        Some(atom_range(&body[1], "a bit index or lo..hi range")?)
                    } else {
                        None
                    };
                    Ok(Expr::Msg { round, range })
                }
                "query" => {
                    arity(1)?;
                    Ok(Expr::Query(Box::new(compile_expr(&body[0])?)))
                }
                "concat" => {
                    let mut parts = Vec::new();
                    for b in body {
                        parts.push(compile_expr(b)?);
                    }
                    Ok(Expr::Concat(parts))
                }
                "eq" => {
                    arity(2)?;
                    Ok(Expr::Eq(
                        Box::new(compile_expr(&body[0])?),
                        Box::new(compile_expr(&body[1])?),
                    ))
                }
                "if" => {
                    arity(3)?;
                    Ok(Expr::If(
                        Box::new(compile_expr(&body[0])?),
                        Box::new(compile_expr(&body[1])?),
                        Box::new(compile_expr(&body[2])?),
                    ))
                }
                // Transparent wrapper accepted on input for readability.
                "send" => {
                    arity(1)?;
                    compile_expr(&body[0])
                }
                other => Err(syntax(*line, *col, format!("unknown expression ({other} ...)"))),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

fn print_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Input => out.push_str("(input)"),
        Expr::Rand { lo, hi } => {
            if lo == hi {
                let _ = write!(out, "(rand {lo})");
            } else {
                let _ = write!(out, "(rand {lo}..{hi})");
            }
        }
        Expr::Msg { round, range } => match range {
            None => {
                let _ = write!(out, "(msg {round})");
            }
            Some((lo, hi)) => {
                if lo == hi {
                    let _ = write!(out, "(msg {round} {lo})");
                } else {
                    let _ = write!(out, "(msg {round} {lo}..{hi})");
                }
            }
        },
        Expr::Query(a) => {
            out.push_str("(query ");
            print_expr(a, out);
            out.push(')');
        }
        Expr::Concat(parts) => {
            out.push_str("(concat");
            for p in parts {
                out.push(' ');
                print_expr(p, out);
            }
            out.push(')');
        }
        Expr::Eq(a, b) => {
            out.push_str("(eq ");
            print_expr(a, out);
            out.push(' ');
            print_expr(b, out);
            out.push(')');
        }
        Expr::If(c, t, f) => {
            out.push_str("(if ");
            print_expr(c, out);
            out.push(' ');
            print_expr(t, out);
            out.push(' ');
            print_expr(f, out);
            out.push(')');
        }
        Expr::Lit(b) => {
            let _ = write!(out, "{b}");
        }
    }
}

/// Pretty-print a protocol in the canonical grammar; `parse(print(s)) == s`.
pub fn print(spec: &ProtocolSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "(protocol :kappa {} :answer-bits {} :rounds {}",
        spec.kappa, spec.answer_bits, spec.rounds
    );
    for (name, prog) in [("alice", &spec.alice), ("bob", &spec.bob)] {
        let _ = write!(out, "  ({name} :rand {} :input-bits {}", prog.rand_bits, prog.input_bits);
        for (r, e) in &prog.rounds {
            let mut body = String::new();
            print_expr(e, &mut body);
            let _ = write!(out, "\n    (round {r} {body})");
        }
        out.push(')');
        if name == "alice" {
            out.push('\n');
        }
    }
    out.push_str(")\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHARED_NONCE: &str = "\
; toy protocol: Alice broadcasts a nonce q; both parties privately query O(q)
(protocol :kappa 2 :answer-bits 1 :rounds 3
  (alice :rand 2
    (round 1 (concat (rand 0..1) (eq (query (rand 0..1)) (query (rand 0..1)))))
    (round 3 (eq (query (rand 0..1)) (query (rand 0..1)))))
  (bob
    (round 2 (eq (query (msg 1 0..1)) (query (msg 1 0..1))))))
";

    struct TableOracle(BTreeMap<Bits, Bits>);
    impl OracleAccess for TableOracle {
        fn query(&mut self, q: &Bits) -> Result<Bits, DslError> {
            self.0
                .get(q)
                .cloned()
                .ok_or_else(|| DslError::OracleUnavailable { query: q.clone() })
        }
    }

    #[test]
    fn parse_shared_nonce() {
        let spec = parse(SHARED_NONCE).unwrap();
        assert_eq!(spec.kappa, 2);
        assert_eq!(spec.answer_bits, 1);
        assert_eq!(spec.rounds, 3);
        assert_eq!(spec.alice.rand_bits, 2);
        assert_eq!(spec.query_count(), 6);
        assert_eq!(spec.message_widths().unwrap(), vec![3, 1, 1]);
    }

    #[test]
    fn round_trip_identity() {
        let spec = parse(SHARED_NONCE).unwrap();
        let printed = print(&spec);
        let reparsed = parse(&printed).unwrap();
        assert_eq!(spec, reparsed);
    }

    #[test]
    fn syntax_error_position() {
        let err = parse("(protocol :kappa 2 :answer-bits 1 :rounds 1\n  (alice").unwrap_err();
        match err {
            DslError::Syntax { line, col, .. } => {
                assert_eq!((line, col), (2, 3));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn forward_reference_rejected() {
        let err = parse(
            "(protocol :kappa 1 :answer-bits 1 :rounds 1\n  (alice (round 1 (msg 1)))\n  (bob))",
        )
        .unwrap_err();
        assert_eq!(err, DslError::ForwardReference { round: 1, referenced: 1 });
    }

    #[test]
    fn width_mismatch_rejected() {
        let err = parse(
            "(protocol :kappa 2 :answer-bits 1 :rounds 1\n  (alice :rand 1 (round 1 (query (rand 0))))\n  (bob))",
        )
        .unwrap_err();
        assert!(matches!(err, DslError::WidthMismatch(_)));
    }

    #[test]
    fn evaluate_with_explicit_oracle_table() {
        // Hand-run: tape q = 10, oracle O(10) = 1, O(others) = 0.
        let spec = parse(SHARED_NONCE).unwrap();
        let mut oracle = TableOracle(
            Bits::enumerate(2)
                .into_iter()
                .map(|q| {
                    let a = Bits::from_u64((q == Bits::from_u64(2, 2)) as u64, 1);
                    (q, a)
                })
                .collect(),
        );
        let view = PartyView {
            side: Side::Alice,
            input: Bits::empty(),
            tape: Bits::from_u64(2, 2),
            msgs: vec![],
            pairs: vec![],
        };
        let (msg, new_pairs) = next_message(&spec, Side::Alice, 1, &view, &mut oracle).unwrap();
        // Message = q || (O(q) == O(q)) = 10 || 1.
        assert_eq!(msg, Bits::from_u64(0b101, 3));
        // The duplicate query collapses to a single recorded pair.
        assert_eq!(new_pairs, vec![(Bits::from_u64(2, 2), Bits::from_u64(1, 1))]);

        // Bob's round: sees Alice's message, queries the nonce.
        let view = PartyView {
            side: Side::Bob,
            input: Bits::empty(),
            tape: Bits::empty(),
            msgs: vec![msg],
            pairs: vec![],
        };
        let (msg2, new_pairs) = next_message(&spec, Side::Bob, 2, &view, &mut oracle).unwrap();
        assert_eq!(msg2, Bits::from_u64(1, 1));
        assert_eq!(new_pairs.len(), 1);
    }

    #[test]
    fn replay_oracle_signals_missing_points() {
        let spec = parse(SHARED_NONCE).unwrap();
        let mut oracle = TableOracle(BTreeMap::new());
        let view = PartyView {
            side: Side::Alice,
            input: Bits::empty(),
            tape: Bits::from_u64(3, 2),
            msgs: vec![],
            pairs: vec![],
        };
        let err = next_message(&spec, Side::Alice, 1, &view, &mut oracle).unwrap_err();
        assert_eq!(err, DslError::OracleUnavailable { query: Bits::from_u64(3, 2) });
    }
}
