//! Core data types: proposition identifiers, rules, rule bases and fact bases.
//!
//! Everything here is immutable once constructed and can be shared freely
//! between concurrent evaluations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reasoner::Strategy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("bad identifier {0:?}: expected a lowercase letter followed by [a-z0-9_]")]
    BadIdentifier(String),
    #[error("rule `{head}`: `{entry}` is listed more than once in its {list}")]
    DuplicateEntry {
        head: PropositionId,
        entry: PropositionId,
        list: &'static str,
    },
    #[error("rule `{0}` refers to itself")]
    SelfReference(PropositionId),
    #[error("more than one rule for `{0}`")]
    DuplicateHead(PropositionId),
    #[error("cyclic dependency: {}", render_path(.0))]
    CyclicDependency(Vec<PropositionId>),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::BadIdentifier(_) => "BadIdentifier",
            ModelError::DuplicateEntry { .. } => "DuplicateEntry",
            ModelError::SelfReference(_) => "SelfReference",
            ModelError::DuplicateHead(_) => "DuplicateHead",
            ModelError::CyclicDependency(_) => "CyclicDependency",
        }
    }
}

pub(crate) fn render_path(path: &[PropositionId]) -> String {
    path.iter().map(PropositionId::as_str).collect::<Vec<_>>().join(" -> ")
}

/// Identifier of an atomic proposition, e.g. `consent_withdrawn`.
///
/// Always matches `^[a-z][a-z0-9_]*$`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PropositionId(String);

impl PropositionId {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        if Self::is_valid(&value) {
            Ok(Self(value))
        } else {
            Err(ModelError::BadIdentifier(value))
        }
    }

    pub fn is_valid(value: &str) -> bool {
        let mut chars = value.chars();
        matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
            && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PropositionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PropositionId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for PropositionId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<PropositionId> for String {
    fn from(id: PropositionId) -> Self {
        id.0
    }
}

impl AsRef<str> for PropositionId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// How a rule combines its conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    /// Every condition must hold.
    #[serde(rename = "ALL")]
    All,
    /// At least one condition must hold.
    #[serde(rename = "ANY")]
    Any,
}

impl Operator {
    pub fn as_str(self) -> &'static str {
        match self {
            Operator::All => "ALL",
            Operator::Any => "ANY",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operator {
    type Err = String;

    /// Case-sensitive: only `ALL` and `ANY` are accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ALL" => Ok(Operator::All),
            "ANY" => Ok(Operator::Any),
            other => Err(format!("unknown operator {other:?} (expected \"ALL\" or \"ANY\")")),
        }
    }
}

/// A defeasible rule: `p` holds when `op` over `conditions` holds, unless
/// one of `exceptions` holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Rule {
    #[serde(rename = "p")]
    head: PropositionId,
    op: Operator,
    conditions: Vec<PropositionId>,
    exceptions: Vec<PropositionId>,
}

impl Rule {
    pub fn new(
        head: PropositionId,
        op: Operator,
        conditions: Vec<PropositionId>,
        exceptions: Vec<PropositionId>,
    ) -> Result<Self, ModelError> {
        for (list, items) in [("conditions", &conditions), ("exceptions", &exceptions)] {
            let mut seen = BTreeSet::new();
            for item in items {
                if *item == head {
                    return Err(ModelError::SelfReference(head));
                }
                if !seen.insert(item) {
                    return Err(ModelError::DuplicateEntry {
                        head: head.clone(),
                        entry: item.clone(),
                        list,
                    });
                }
            }
        }
        Ok(Self {
            head,
            op,
            conditions,
            exceptions,
        })
    }

    /// Convenience constructor from string slices, mostly for tests and fixtures.
    pub fn parse(head: &str, op: Operator, conditions: &[&str], exceptions: &[&str]) -> Result<Self, ModelError> {
        let ids = |items: &[&str]| {
            items
                .iter()
                .map(|s| PropositionId::new(*s))
                .collect::<Result<Vec<_>, _>>()
        };
        Self::new(PropositionId::new(head)?, op, ids(conditions)?, ids(exceptions)?)
    }

    pub fn head(&self) -> &PropositionId {
        &self.head
    }

    pub fn op(&self) -> Operator {
        self.op
    }

    pub fn conditions(&self) -> &[PropositionId] {
        &self.conditions
    }

    pub fn exceptions(&self) -> &[PropositionId] {
        &self.exceptions
    }

    /// Every proposition this rule refers to, conditions first, without repeats.
    pub fn references(&self) -> Vec<PropositionId> {
        let mut out: Vec<PropositionId> = Vec::with_capacity(self.conditions.len() + self.exceptions.len());
        for id in self.conditions.iter().chain(&self.exceptions) {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
        out
    }
}

/// A validated, acyclic collection of rules indexed by head.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleBase {
    rules: BTreeMap<PropositionId, Rule>,
    graph: BTreeMap<PropositionId, Vec<PropositionId>>,
}

impl RuleBase {
    pub fn from_rules(rules: Vec<Rule>) -> Result<Self, ModelError> {
        let rb = Self::new_unchecked(rules)?;
        if let Some(cycle) = find_cycles(&rb.graph).into_iter().next() {
            return Err(ModelError::CyclicDependency(cycle));
        }
        Ok(rb)
    }

    /// Builds the index without the acyclicity check.
    ///
    /// Only exists so the reasoner's runtime cycle guard can be exercised;
    /// everything else should go through [`RuleBase::from_rules`].
    #[doc(hidden)]
    pub fn new_unchecked(rules: Vec<Rule>) -> Result<Self, ModelError> {
        let mut index = BTreeMap::new();
        let mut graph = BTreeMap::new();
        for rule in rules {
            if index.contains_key(rule.head()) {
                return Err(ModelError::DuplicateHead(rule.head.clone()));
            }
            graph.insert(rule.head.clone(), rule.references());
            index.insert(rule.head.clone(), rule);
        }
        Ok(Self { rules: index, graph })
    }

    pub fn get(&self, head: &PropositionId) -> Option<&Rule> {
        self.rules.get(head)
    }

    pub fn contains_head(&self, id: &PropositionId) -> bool {
        self.rules.contains_key(id)
    }

    /// Rules in head order.
    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    pub fn heads(&self) -> impl Iterator<Item = &PropositionId> {
        self.rules.keys()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Outgoing dependency edges of `head` (conditions then exceptions).
    pub fn dependencies(&self, head: &PropositionId) -> &[PropositionId] {
        self.graph.get(head).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Propositions referenced by some rule that have no rule of their own.
    pub fn leaves(&self) -> BTreeSet<PropositionId> {
        self.graph
            .values()
            .flatten()
            .filter(|id| !self.rules.contains_key(*id))
            .cloned()
            .collect()
    }

    /// Length in edges of the longest dependency path starting at `id`.
    pub fn depth_of(&self, id: &PropositionId) -> usize {
        let mut memo = BTreeMap::new();
        self.depth_memo(id, &mut memo)
    }

    /// Longest dependency path in the whole base; 0 for an empty base.
    pub fn depth(&self) -> usize {
        let mut memo = BTreeMap::new();
        self.rules
            .keys()
            .map(|h| self.depth_memo(h, &mut memo))
            .max()
            .unwrap_or(0)
    }

    fn depth_memo(&self, id: &PropositionId, memo: &mut BTreeMap<PropositionId, usize>) -> usize {
        if let Some(&d) = memo.get(id) {
            return d;
        }
        let d = self
            .dependencies(id)
            .iter()
            .map(|dep| 1 + self.depth_memo(dep, memo))
            .max()
            .unwrap_or(0);
        memo.insert(id.clone(), d);
        d
    }

    pub fn into_rules(self) -> Vec<Rule> {
        self.rules.into_values().collect()
    }
}

/// Set of propositions asserted true for one case.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactBase {
    facts: BTreeSet<PropositionId>,
}

impl FactBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &PropositionId) -> bool {
        self.facts.contains(id)
    }

    /// Returns false if the fact was already present.
    pub fn insert(&mut self, id: PropositionId) -> bool {
        self.facts.insert(id)
    }

    pub fn remove(&mut self, id: &PropositionId) -> bool {
        self.facts.remove(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PropositionId> {
        self.facts.iter()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn parse<'a>(items: impl IntoIterator<Item = &'a str>) -> Result<Self, ModelError> {
        items.into_iter().map(PropositionId::new).collect()
    }
}

impl FromIterator<PropositionId> for FactBase {
    fn from_iter<T: IntoIterator<Item = PropositionId>>(iter: T) -> Self {
        Self {
            facts: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a FactBase {
    type Item = &'a PropositionId;
    type IntoIter = std::collections::btree_set::Iter<'a, PropositionId>;

    fn into_iter(self) -> Self::IntoIter {
        self.facts.iter()
    }
}

/// One question asked of a rule base: does `goal` hold given `facts`?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseQuery {
    pub goal: PropositionId,
    pub facts: FactBase,
    pub strategy: Strategy,
}

/// Finds cycles in a dependency graph by iterative DFS from each node in
/// key order. One path per back edge, each starting and ending at the same
/// node, rotated so the smallest node comes first.
pub(crate) fn find_cycles(graph: &BTreeMap<PropositionId, Vec<PropositionId>>) -> Vec<Vec<PropositionId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        InProgress,
        Done,
    }

    let mut marks: BTreeMap<&PropositionId, Mark> = BTreeMap::new();
    let mut found: Vec<Vec<PropositionId>> = Vec::new();
    let empty = Vec::new();

    for root in graph.keys() {
        if marks.contains_key(root) {
            continue;
        }
        // (node, index of the next child to visit)
        let mut stack: Vec<(&PropositionId, usize)> = vec![(root, 0)];
        marks.insert(root, Mark::InProgress);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let children = graph.get(node).unwrap_or(&empty);
            if *next < children.len() {
                let child = &children[*next];
                *next += 1;
                match marks.get(child) {
                    None => {
                        marks.insert(child, Mark::InProgress);
                        stack.push((child, 0));
                    }
                    Some(Mark::InProgress) => {
                        let start = stack
                            .iter()
                            .position(|(n, _)| *n == child)
                            .expect("in-progress node is on the stack");
                        let mut cycle: Vec<PropositionId> = stack[start..].iter().map(|(n, _)| (*n).clone()).collect();
                        let min = cycle
                            .iter()
                            .enumerate()
                            .min_by(|a, b| a.1.cmp(b.1))
                            .map(|(i, _)| i)
                            .unwrap_or(0);
                        cycle.rotate_left(min);
                        cycle.push(cycle[0].clone());
                        if !found.contains(&cycle) {
                            found.push(cycle);
                        }
                    }
                    Some(Mark::Done) => {}
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    found
}
