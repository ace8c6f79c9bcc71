//! Propositional clause text, PROLEG style.
//!
//! Export maps each rule onto clauses:
//!
//! ```text
//! p :- c1, c2.            % ALL rule
//! p.                      % ALL rule without conditions
//! p :- c1.                % ANY rule: one clause per condition
//! p :- c2.
//! exception(p, e).        % one line per exception
//! ```
//!
//! An ANY rule without conditions can never hold and exports nothing at all.
//! Import folds the clauses back into rules. Atoms with arguments are
//! rejected: only arity-0 propositions are supported.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::loader::{has_errors, validate, Diagnostic};
use crate::reasoner::{evaluate, Strategy};
use crate::rule_model::{FactBase, ModelError, Operator, PropositionId, Rule, RuleBase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: `{atom}` has arguments; only propositional atoms are supported")]
    NonPropositional { line: usize, atom: String },
    #[error("`{0}` mixes clause shapes that no single ALL or ANY rule produces")]
    UnsupportedShape(PropositionId),
    #[error("exception declared for `{0}`, which has no clause")]
    OrphanException(PropositionId),
    #[error("invalid rule: {0}")]
    Invalid(#[from] ModelError),
    #[error("imported rule base rejected: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Rejected(Vec<Diagnostic>),
    #[error("{count} leaf propositions exceed the enumeration limit of {max}")]
    TooManyLeaves { count: usize, max: usize },
}

impl BridgeError {
    pub fn code(&self) -> &'static str {
        match self {
            BridgeError::Syntax { .. } => "SyntaxError",
            BridgeError::NonPropositional { .. } => "NonPropositional",
            BridgeError::UnsupportedShape(_) => "UnsupportedShape",
            BridgeError::OrphanException(_) => "OrphanException",
            BridgeError::Invalid(err) => err.code(),
            BridgeError::Rejected(_) => "Rejected",
            BridgeError::TooManyLeaves { .. } => "TooManyLeaves",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub head: PropositionId,
    pub body: Vec<PropositionId>,
}

/// Parsed clause text: ordinary clauses plus `exception/2` declarations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClauseDoc {
    pub clauses: Vec<Clause>,
    pub exception_decls: Vec<(PropositionId, PropositionId)>,
}

impl ClauseDoc {
    pub fn from_rule_base(rb: &RuleBase) -> Self {
        let mut doc = ClauseDoc::default();
        for rule in rb.rules() {
            match rule.op() {
                Operator::All => doc.clauses.push(Clause {
                    head: rule.head().clone(),
                    body: rule.conditions().to_vec(),
                }),
                Operator::Any if rule.conditions().is_empty() => continue,
                Operator::Any => doc.clauses.extend(rule.conditions().iter().map(|c| Clause {
                    head: rule.head().clone(),
                    body: vec![c.clone()],
                })),
            }
            for e in rule.exceptions() {
                doc.exception_decls.push((rule.head().clone(), e.clone()));
            }
        }
        doc
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut decls = self.exception_decls.iter().peekable();
        // keep each head's exception lines right after its clauses
        let mut clauses = self.clauses.iter().peekable();
        while let Some(clause) = clauses.next() {
            if clause.body.is_empty() {
                let _ = writeln!(out, "{}.", clause.head);
            } else {
                let body: Vec<&str> = clause.body.iter().map(PropositionId::as_str).collect();
                let _ = writeln!(out, "{} :- {}.", clause.head, body.join(", "));
            }
            if clauses.peek().is_none_or(|next| next.head != clause.head) {
                while let Some((_, e)) = decls.next_if(|(h, _)| *h == clause.head) {
                    let _ = writeln!(out, "exception({}, {}).", clause.head, e);
                }
            }
        }
        for (h, e) in decls {
            let _ = writeln!(out, "exception({h}, {e}).");
        }
        out
    }

    /// Folds clauses into rules: single-atom clauses sharing a head become one
    /// ANY rule; a lone clause with any other body length becomes an ALL rule.
    pub fn into_rules(self) -> Result<Vec<Rule>, BridgeError> {
        let mut order: Vec<PropositionId> = Vec::new();
        let mut grouped: BTreeMap<PropositionId, Vec<Vec<PropositionId>>> = BTreeMap::new();
        for clause in self.clauses {
            if !grouped.contains_key(&clause.head) {
                order.push(clause.head.clone());
            }
            grouped.entry(clause.head).or_default().push(clause.body);
        }

        let mut exceptions: BTreeMap<PropositionId, Vec<PropositionId>> = BTreeMap::new();
        for (head, e) in self.exception_decls {
            if !grouped.contains_key(&head) {
                return Err(BridgeError::OrphanException(head));
            }
            exceptions.entry(head).or_default().push(e);
        }

        let mut rules = Vec::with_capacity(order.len());
        for head in order {
            let mut bodies = grouped.remove(&head).unwrap_or_default();
            let (op, conditions) = if bodies.len() == 1 && bodies[0].len() != 1 {
                (Operator::All, bodies.pop().unwrap_or_default())
            } else if bodies.iter().all(|b| b.len() == 1) {
                (Operator::Any, bodies.into_iter().flatten().collect())
            } else {
                return Err(BridgeError::UnsupportedShape(head));
            };
            let excs = exceptions.remove(&head).unwrap_or_default();
            rules.push(Rule::new(head, op, conditions, excs)?);
        }
        Ok(rules)
    }
}

pub fn export_proleg(rb: &RuleBase) -> Vec<u8> {
    ClauseDoc::from_rule_base(rb).render().into_bytes()
}

pub fn import_proleg(content: &[u8]) -> Result<(RuleBase, Vec<Diagnostic>), BridgeError> {
    let text = std::str::from_utf8(content).map_err(|e| BridgeError::Syntax {
        line: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let rules = parse_clauses(text)?.into_rules()?;
    let (rb, diagnostics) = validate(rules, None);
    match rb {
        Some(rb) if !has_errors(&diagnostics) => Ok((rb, diagnostics)),
        _ => Err(BridgeError::Rejected(diagnostics)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Atom(String),
    Var(String),
    Open,
    Close,
    Comma,
    Neck,
    Period,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, BridgeError> {
    let mut tokens = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let code = line.split('%').next().unwrap_or("");
        let mut chars = code.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            let token = match c {
                c if c.is_whitespace() => continue,
                '(' => Token::Open,
                ')' => Token::Close,
                ',' => Token::Comma,
                '.' => Token::Period,
                ':' if chars.next_if(|(_, c)| *c == '-').is_some() => Token::Neck,
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut end = start + c.len_utf8();
                    while let Some((i, c)) = chars.next_if(|(_, c)| c.is_ascii_alphanumeric() || *c == '_') {
                        end = i + c.len_utf8();
                    }
                    let word = code[start..end].to_string();
                    if c.is_ascii_lowercase() {
                        Token::Atom(word)
                    } else {
                        Token::Var(word)
                    }
                }
                other => {
                    return Err(BridgeError::Syntax {
                        line: line_no,
                        message: format!("unexpected character {other:?}"),
                    })
                }
            };
            tokens.push((token, line_no));
        }
    }
    Ok(tokens)
}

#[derive(Debug)]
struct Term {
    name: String,
    args: Vec<Term>,
    is_var: bool,
    line: usize,
}

impl Term {
    fn render(&self) -> String {
        if self.args.is_empty() {
            self.name.clone()
        } else {
            let args: Vec<String> = self.args.iter().map(Term::render).collect();
            format!("{}({})", self.name, args.join(", "))
        }
    }

    fn proposition(&self) -> Result<PropositionId, BridgeError> {
        if self.is_var || !self.args.is_empty() {
            return Err(BridgeError::NonPropositional {
                line: self.line,
                atom: self.render(),
            });
        }
        PropositionId::new(self.name.as_str()).map_err(|e| BridgeError::Syntax {
            line: self.line,
            message: e.to_string(),
        })
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|(_, l)| *l)
            .unwrap_or(0)
    }

    fn error(&self, message: impl Into<String>) -> BridgeError {
        BridgeError::Syntax {
            line: self.line(),
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), BridgeError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn term(&mut self) -> Result<Term, BridgeError> {
        let line = self.line();
        let (name, is_var) = match self.peek().cloned() {
            Some(Token::Atom(a)) => (a, false),
            Some(Token::Var(v)) => (v, true),
            _ => return Err(self.error("expected an atom")),
        };
        self.pos += 1;
        let mut args = Vec::new();
        if !is_var && self.peek() == Some(&Token::Open) {
            self.pos += 1;
            loop {
                args.push(self.term()?);
                match self.peek() {
                    Some(Token::Comma) => self.pos += 1,
                    Some(Token::Close) => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
        }
        Ok(Term {
            name,
            args,
            is_var,
            line,
        })
    }
}

/// Parses clause text into a [`ClauseDoc`]. `%` starts a comment.
pub fn parse_clauses(text: &str) -> Result<ClauseDoc, BridgeError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let mut doc = ClauseDoc::default();
    while parser.peek().is_some() {
        let head = parser.term()?;
        let mut body = Vec::new();
        if parser.peek() == Some(&Token::Neck) {
            parser.pos += 1;
            loop {
                body.push(parser.term()?);
                if parser.peek() == Some(&Token::Comma) {
                    parser.pos += 1;
                } else {
                    break;
                }
            }
        }
        parser.expect(Token::Period, "`.` at end of clause")?;

        if head.name == "exception" && !head.is_var && head.args.len() == 2 && body.is_empty() {
            let target = head.args[0].proposition()?;
            let exception = head.args[1].proposition()?;
            doc.exception_decls.push((target, exception));
            continue;
        }
        let head = head.proposition()?;
        let body = body.iter().map(Term::proposition).collect::<Result<Vec<_>, _>>()?;
        doc.clauses.push(Clause { head, body });
    }
    Ok(doc)
}

fn leaf_union(rb1: &RuleBase, rb2: &RuleBase) -> Vec<PropositionId> {
    let union: BTreeSet<PropositionId> = rb1.leaves().into_iter().chain(rb2.leaves()).collect();
    union.into_iter().collect()
}

fn agree(rb1: &RuleBase, rb2: &RuleBase, facts: &FactBase, goal: &PropositionId) -> bool {
    let holds = |rb: &RuleBase| {
        evaluate(rb, facts, goal, Strategy::ExceptionFirst)
            .expect("acyclic rule bases never trip the cycle guard")
            .holds
    };
    holds(rb1) == holds(rb2)
}

/// A fact set (drawn from the union of both bases' leaves) on which the two
/// bases disagree about `goal`, found by exhaustive enumeration.
pub fn counterexample(
    rb1: &RuleBase,
    rb2: &RuleBase,
    goal: &PropositionId,
    max_leaves: usize,
) -> Result<Option<FactBase>, BridgeError> {
    let leaves = leaf_union(rb1, rb2);
    if leaves.len() > max_leaves || leaves.len() >= u64::BITS as usize {
        return Err(BridgeError::TooManyLeaves {
            count: leaves.len(),
            max: max_leaves,
        });
    }
    for mask in 0u64..(1u64 << leaves.len()) {
        let facts: FactBase = leaves
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, id)| id.clone())
            .collect();
        if !agree(rb1, rb2, &facts, goal) {
            return Ok(Some(facts));
        }
    }
    Ok(None)
}

pub const DEFAULT_MAX_LEAVES: usize = 15;

/// True iff the bases agree on `goal` for every subset of their leaves.
pub fn semantic_equivalence(
    rb1: &RuleBase,
    rb2: &RuleBase,
    goal: &PropositionId,
    max_leaves: usize,
) -> Result<bool, BridgeError> {
    Ok(counterexample(rb1, rb2, goal, max_leaves)?.is_none())
}

/// Like [`semantic_equivalence`] but over `samples` random leaf subsets, for
/// bases too large to enumerate.
pub fn sampled_equivalence(rb1: &RuleBase, rb2: &RuleBase, goal: &PropositionId, samples: usize, seed: u64) -> bool {
    let leaves = leaf_union(rb1, rb2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).all(|_| {
        let facts: FactBase = leaves.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
        agree(rb1, rb2, &facts, goal)
    })
}
