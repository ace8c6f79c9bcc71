//! Goal-driven evaluation of a proposition against a rule base and a fact base.
//!
//! For a proposition `q`:
//!
//! 1. if `q` is a fact it holds (`ESTABLISHED_FACT`), even when `q` also has a rule;
//! 2. else if `q` has a rule it is `DEFEATED` when any exception holds, otherwise
//!    `PROVED` or `FAILED` by the rule's operator over its conditions
//!    (`ALL` over nothing is satisfied, `ANY` over nothing is not);
//! 3. else `NO_DERIVATION`: it does not hold.
//!
//! The [`Strategy`] only decides the order in which the exception and condition
//! branches of a rule are explored. It changes the proof tree and the cost
//! counters, never whether the goal holds.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rule_model::{render_path, CaseQuery, FactBase, Operator, PropositionId, Rule, RuleBase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown strategy {0:?} (expected EXCEPTION_FIRST, CONDITIONS_FIRST or RACING)")]
    UnknownStrategy(String),
    #[error("cycle guard tripped: {}", render_path(.0))]
    GuardTripped(Vec<PropositionId>),
}

/// Order in which a rule's exception and condition branches are explored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Exceptions first; stop as soon as one holds.
    #[default]
    ExceptionFirst,
    /// Conditions first; exceptions only once the conditions are satisfied.
    ConditionsFirst,
    /// Both branches at once on separate workers; first decisive answer wins.
    Racing,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::ExceptionFirst, Strategy::ConditionsFirst, Strategy::Racing];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ExceptionFirst => "EXCEPTION_FIRST",
            Strategy::ConditionsFirst => "CONDITIONS_FIRST",
            Strategy::Racing => "RACING",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = EvalError;

    /// Accepts `EXCEPTION_FIRST`, `exception-first`, `exception_first` and so on.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "EXCEPTION_FIRST" => Ok(Strategy::ExceptionFirst),
            "CONDITIONS_FIRST" => Ok(Strategy::ConditionsFirst),
            "RACING" => Ok(Strategy::Racing),
            _ => Err(EvalError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeStatus {
    EstablishedFact,
    Proved,
    Failed,
    Defeated,
    NoDerivation,
    CycleGuard,
}

impl NodeStatus {
    pub fn holds(self) -> bool {
        matches!(self, NodeStatus::EstablishedFact | NodeStatus::Proved)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeStatus::EstablishedFact => "ESTABLISHED_FACT",
            NodeStatus::Proved => "PROVED",
            NodeStatus::Failed => "FAILED",
            NodeStatus::Defeated => "DEFEATED",
            NodeStatus::NoDerivation => "NO_DERIVATION",
            NodeStatus::CycleGuard => "CYCLE_GUARD",
        }
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a node's status was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Via {
    Fact,
    Rule(Operator),
    None,
}

impl Via {
    pub fn as_str(self) -> &'static str {
        match self {
            Via::Fact => "FACT",
            Via::Rule(Operator::All) => "RULE_ALL",
            Via::Rule(Operator::Any) => "RULE_ANY",
            Via::None => "NONE",
        }
    }
}

impl fmt::Display for Via {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Via {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Via {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        match s.as_str() {
            "FACT" => Ok(Via::Fact),
            "RULE_ALL" => Ok(Via::Rule(Operator::All)),
            "RULE_ANY" => Ok(Via::Rule(Operator::Any)),
            "NONE" => Ok(Via::None),
            other => Err(serde::de::Error::unknown_variant(
                other,
                &["FACT", "RULE_ALL", "RULE_ANY", "NONE"],
            )),
        }
    }
}

/// Which branch of a rule was explored first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderNote {
    ExceptionsFirst,
    ConditionsFirst,
    Raced,
    /// Not a rule expansion.
    None,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One evaluated proposition in a proof tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofNode {
    pub proposition: PropositionId,
    pub status: NodeStatus,
    pub via: Via,
    pub order_note: OrderNote,
    #[serde(rename = "conditions")]
    pub condition_children: Vec<Arc<ProofNode>>,
    #[serde(rename = "exceptions")]
    pub exception_children: Vec<Arc<ProofNode>>,
    /// Result reused from an earlier evaluation in the same query.
    #[serde(default, skip_serializing_if = "is_false")]
    pub cached: bool,
}

impl ProofNode {
    fn leaf(proposition: PropositionId, status: NodeStatus, via: Via) -> Self {
        Self {
            proposition,
            status,
            via,
            order_note: OrderNote::None,
            condition_children: Vec::new(),
            exception_children: Vec::new(),
            cached: false,
        }
    }

    pub fn holds(&self) -> bool {
        self.status.holds()
    }

    /// Number of nodes in the tree, counting shared subtrees once per occurrence.
    pub fn size(&self) -> usize {
        1 + self
            .condition_children
            .iter()
            .chain(&self.exception_children)
            .map(|c| c.size())
            .sum::<usize>()
    }
}

/// Cost counters for one evaluation. Cache hits count zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalStats {
    pub propositions_evaluated: u64,
    pub rule_expansions: u64,
    pub fact_lookups: u64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub goal: PropositionId,
    pub holds: bool,
    pub root: ProofNode,
    pub stats: EvalStats,
}

impl Verdict {
    pub fn status(&self) -> NodeStatus {
        self.root.status
    }
}

pub fn holds(v: &Verdict) -> bool {
    v.holds
}

/// What to do when the runtime cycle guard fires.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GuardPolicy {
    /// Fail the evaluation with [`EvalError::GuardTripped`].
    #[default]
    Error,
    /// Record a `CYCLE_GUARD` node and carry on.
    Mark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub strategy: Strategy,
    /// Upper bound on threads working on one query, the caller included.
    pub max_workers: usize,
    pub guard: GuardPolicy,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::default(),
            max_workers: 2,
            guard: GuardPolicy::default(),
        }
    }
}

impl EvalOptions {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }
}

pub fn evaluate(
    rb: &RuleBase,
    facts: &FactBase,
    goal: &PropositionId,
    strategy: Strategy,
) -> Result<Verdict, EvalError> {
    evaluate_with(rb, facts, goal, &EvalOptions::with_strategy(strategy))
}

pub fn evaluate_query(rb: &RuleBase, query: &CaseQuery) -> Result<Verdict, EvalError> {
    evaluate(rb, &query.facts, &query.goal, query.strategy)
}

pub fn evaluate_with(
    rb: &RuleBase,
    facts: &FactBase,
    goal: &PropositionId,
    options: &EvalOptions,
) -> Result<Verdict, EvalError> {
    let engine = Engine {
        rb,
        facts,
        strategy: options.strategy,
        memo: Mutex::new(HashMap::new()),
        propositions: AtomicU64::new(0),
        expansions: AtomicU64::new(0),
        lookups: AtomicU64::new(0),
        helpers: AtomicUsize::new(options.max_workers.saturating_sub(1)),
        tripped: Mutex::new(None),
    };
    let root = engine
        .eval(goal, &mut Vec::new(), &Cancel::default())
        .expect("the root evaluation is never cancelled");
    if options.guard == GuardPolicy::Error {
        if let Some(path) = engine.tripped.into_inner().unwrap_or_else(|e| e.into_inner()) {
            return Err(EvalError::GuardTripped(path));
        }
    }
    let root = Arc::unwrap_or_clone(root.node);
    Ok(Verdict {
        goal: goal.clone(),
        holds: root.holds(),
        stats: EvalStats {
            propositions_evaluated: engine.propositions.load(Ordering::Relaxed),
            rule_expansions: engine.expansions.load(Ordering::Relaxed),
            fact_lookups: engine.lookups.load(Ordering::Relaxed),
            strategy: options.strategy,
        },
        root,
    })
}

/// Cancellation flags of this branch and all enclosing raced branches.
#[derive(Clone, Default)]
struct Cancel(Vec<Arc<AtomicBool>>);

impl Cancel {
    fn is_set(&self) -> bool {
        self.0.iter().any(|f| f.load(Ordering::Acquire))
    }

    fn child(&self, flag: &Arc<AtomicBool>) -> Self {
        let mut flags = self.0.clone();
        flags.push(Arc::clone(flag));
        Cancel(flags)
    }
}

struct Evaluated {
    node: Arc<ProofNode>,
    /// Some descendant hit the cycle guard; not safe to memoize.
    tainted: bool,
}

/// Result of walking one condition or exception list.
struct Branch {
    children: Vec<Arc<ProofNode>>,
    /// `None` when cancelled part-way.
    outcome: Option<bool>,
    tainted: bool,
}

struct Engine<'a> {
    rb: &'a RuleBase,
    facts: &'a FactBase,
    strategy: Strategy,
    memo: Mutex<HashMap<PropositionId, Arc<ProofNode>>>,
    propositions: AtomicU64,
    expansions: AtomicU64,
    lookups: AtomicU64,
    helpers: AtomicUsize,
    tripped: Mutex<Option<Vec<PropositionId>>>,
}

impl Engine<'_> {
    fn eval(&self, q: &PropositionId, path: &mut Vec<PropositionId>, cancel: &Cancel) -> Option<Evaluated> {
        if cancel.is_set() {
            return None;
        }
        if let Some(start) = path.iter().position(|p| p == q) {
            let mut cycle = path[start..].to_vec();
            cycle.push(q.clone());
            self.tripped
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .get_or_insert(cycle);
            return Some(Evaluated {
                node: Arc::new(ProofNode::leaf(q.clone(), NodeStatus::CycleGuard, Via::None)),
                tainted: true,
            });
        }
        if let Some(hit) = self.memo.lock().unwrap_or_else(|e| e.into_inner()).get(q) {
            let mut node = ProofNode::clone(hit);
            node.cached = true;
            return Some(Evaluated {
                node: Arc::new(node),
                tainted: false,
            });
        }

        self.propositions.fetch_add(1, Ordering::Relaxed);
        self.lookups.fetch_add(1, Ordering::Relaxed);
        let evaluated = if self.facts.contains(q) {
            Evaluated {
                node: Arc::new(ProofNode::leaf(q.clone(), NodeStatus::EstablishedFact, Via::Fact)),
                tainted: false,
            }
        } else if let Some(rule) = self.rb.get(q) {
            self.expansions.fetch_add(1, Ordering::Relaxed);
            path.push(q.clone());
            let result = self.expand(rule, path, cancel);
            path.pop();
            result?
        } else {
            Evaluated {
                node: Arc::new(ProofNode::leaf(q.clone(), NodeStatus::NoDerivation, Via::None)),
                tainted: false,
            }
        };

        if !evaluated.tainted {
            self.memo
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .insert(q.clone(), Arc::clone(&evaluated.node));
        }
        Some(evaluated)
    }

    fn expand(&self, rule: &Rule, path: &mut Vec<PropositionId>, cancel: &Cancel) -> Option<Evaluated> {
        match self.strategy {
            Strategy::ExceptionFirst => self.expand_exceptions_first(rule, path, cancel),
            Strategy::ConditionsFirst => self.expand_conditions_first(rule, path, cancel),
            Strategy::Racing => {
                if rule.conditions().is_empty() || rule.exceptions().is_empty() || !self.acquire_helper() {
                    return self.expand_exceptions_first(rule, path, cancel);
                }
                let result = self.expand_raced(rule, path, cancel);
                self.helpers.fetch_add(1, Ordering::AcqRel);
                result
            }
        }
    }

    fn acquire_helper(&self) -> bool {
        self.helpers
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| n.checked_sub(1))
            .is_ok()
    }

    fn expand_exceptions_first(
        &self,
        rule: &Rule,
        path: &mut Vec<PropositionId>,
        cancel: &Cancel,
    ) -> Option<Evaluated> {
        let exceptions = self.exceptions(rule.exceptions(), path, cancel);
        let defeated = exceptions.outcome?;
        let conditions = if defeated {
            Branch {
                children: Vec::new(),
                outcome: Some(false),
                tainted: false,
            }
        } else {
            self.conditions(rule.op(), rule.conditions(), path, cancel)
        };
        let satisfied = conditions.outcome?;
        Some(assemble(
            rule,
            OrderNote::ExceptionsFirst,
            conditions,
            exceptions,
            satisfied,
            defeated,
        ))
    }

    fn expand_conditions_first(
        &self,
        rule: &Rule,
        path: &mut Vec<PropositionId>,
        cancel: &Cancel,
    ) -> Option<Evaluated> {
        let conditions = self.conditions(rule.op(), rule.conditions(), path, cancel);
        let satisfied = conditions.outcome?;
        let exceptions = if satisfied {
            self.exceptions(rule.exceptions(), path, cancel)
        } else {
            Branch {
                children: Vec::new(),
                outcome: Some(false),
                tainted: false,
            }
        };
        let defeated = exceptions.outcome?;
        Some(assemble(
            rule,
            OrderNote::ConditionsFirst,
            conditions,
            exceptions,
            satisfied,
            defeated,
        ))
    }

    /// Exceptions on a helper thread, conditions on this one. A holding
    /// exception cancels the condition branch; a failed condition branch
    /// cancels the exception branch. PROVED needs both branches complete.
    fn expand_raced(&self, rule: &Rule, path: &mut Vec<PropositionId>, cancel: &Cancel) -> Option<Evaluated> {
        let stop_exceptions = Arc::new(AtomicBool::new(false));
        let stop_conditions = Arc::new(AtomicBool::new(false));
        let exception_cancel = cancel.child(&stop_exceptions);
        let condition_cancel = cancel.child(&stop_conditions);

        let mut helper_path = path.clone();
        let (conditions, exceptions) = std::thread::scope(|scope| {
            let helper = scope.spawn(|| {
                let branch = self.exceptions(rule.exceptions(), &mut helper_path, &exception_cancel);
                if branch.outcome == Some(true) {
                    stop_conditions.store(true, Ordering::Release);
                }
                branch
            });
            let conditions = self.conditions(rule.op(), rule.conditions(), path, &condition_cancel);
            if conditions.outcome == Some(false) {
                stop_exceptions.store(true, Ordering::Release);
            }
            let exceptions = match helper.join() {
                Ok(branch) => branch,
                Err(panic) => std::panic::resume_unwind(panic),
            };
            (conditions, exceptions)
        });

        let (satisfied, defeated) = match (conditions.outcome, exceptions.outcome) {
            (Some(false), _) => (false, false),
            (_, Some(true)) => (conditions.outcome.unwrap_or(false), true),
            (Some(true), Some(false)) => (true, false),
            // cancelled from above
            _ => return None,
        };
        Some(assemble(
            rule,
            OrderNote::Raced,
            conditions,
            exceptions,
            satisfied,
            defeated,
        ))
    }

    /// Walks exceptions in order, stopping at the first that holds.
    fn exceptions(&self, list: &[PropositionId], path: &mut Vec<PropositionId>, cancel: &Cancel) -> Branch {
        let mut branch = Branch {
            children: Vec::with_capacity(list.len()),
            outcome: Some(false),
            tainted: false,
        };
        for e in list {
            let Some(child) = self.eval(e, path, cancel) else {
                branch.outcome = None;
                return branch;
            };
            let holds = child.node.holds();
            branch.tainted |= child.tainted;
            branch.children.push(child.node);
            if holds {
                branch.outcome = Some(true);
                break;
            }
        }
        branch
    }

    /// Walks conditions in order under `op`, stopping once the outcome is decided.
    fn conditions(
        &self,
        op: Operator,
        list: &[PropositionId],
        path: &mut Vec<PropositionId>,
        cancel: &Cancel,
    ) -> Branch {
        let decisive = match op {
            Operator::All => false,
            Operator::Any => true,
        };
        let mut branch = Branch {
            children: Vec::with_capacity(list.len()),
            outcome: Some(!decisive),
            tainted: false,
        };
        for c in list {
            let Some(child) = self.eval(c, path, cancel) else {
                branch.outcome = None;
                return branch;
            };
            let holds = child.node.holds();
            branch.tainted |= child.tainted;
            branch.children.push(child.node);
            if holds == decisive {
                branch.outcome = Some(decisive);
                break;
            }
        }
        branch
    }
}

fn assemble(
    rule: &Rule,
    order: OrderNote,
    conditions: Branch,
    exceptions: Branch,
    satisfied: bool,
    defeated: bool,
) -> Evaluated {
    let status = if defeated {
        NodeStatus::Defeated
    } else if satisfied {
        NodeStatus::Proved
    } else {
        NodeStatus::Failed
    };
    Evaluated {
        tainted: conditions.tainted || exceptions.tainted,
        node: Arc::new(ProofNode {
            proposition: rule.head().clone(),
            status,
            via: Via::Rule(rule.op()),
            order_note: order,
            condition_children: conditions.children,
            exception_children: exceptions.children,
            cached: false,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExplainFormat {
    /// Indented tree, one node per line.
    #[default]
    Text,
    /// The proof tree as a single-line JSON document.
    Structured,
}

/// Renders a verdict's proof tree.
///
/// Text lines look like `proposition [STATUS] (VIA)`; exception children are
/// prefixed with `unless`, rule nodes carry their branch order and reused
/// nodes are marked `cached` without repeating their subtree.
pub fn explain(v: &Verdict, format: ExplainFormat) -> Vec<u8> {
    match format {
        ExplainFormat::Structured => serde_json::to_vec(&v.root).expect("proof trees always serialize"),
        ExplainFormat::Text => {
            let mut out = String::new();
            render_text(&v.root, 0, "", &mut out);
            out.into_bytes()
        }
    }
}

fn render_text(node: &ProofNode, depth: usize, prefix: &str, out: &mut String) {
    let _ = write!(
        out,
        "{:indent$}{prefix}{} [{}] ({})",
        "",
        node.proposition,
        node.status,
        node.via,
        indent = depth * 2
    );
    match node.order_note {
        OrderNote::ExceptionsFirst => out.push_str(" exceptions-first"),
        OrderNote::ConditionsFirst => out.push_str(" conditions-first"),
        OrderNote::Raced => out.push_str(" raced"),
        OrderNote::None => {}
    }
    if node.cached {
        out.push_str(" cached\n");
        return;
    }
    out.push('\n');
    let conditions = node.condition_children.iter().map(|c| (c, ""));
    let exceptions = node.exception_children.iter().map(|c| (c, "unless "));
    let children: Vec<_> = if node.order_note == OrderNote::ExceptionsFirst {
        exceptions.chain(conditions).collect()
    } else {
        conditions.chain(exceptions).collect()
    };
    for (child, prefix) in children {
        render_text(child, depth + 1, prefix, out);
    }
}
