//! Test-only reference implementations, independent of the reasoner.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use defeasible_core::reasoner::{NodeStatus, ProofNode};
use defeasible_core::{FactBase, Operator, PropositionId, RuleBase};

/// Recomputes whether `q` holds by plain recursive substitution: every
/// exception and every condition is evaluated, nothing is cached and nothing
/// short-circuits.
pub fn oracle_holds(rb: &RuleBase, facts: &FactBase, q: &PropositionId) -> bool {
    if facts.contains(q) {
        return true;
    }
    let Some(rule) = rb.get(q) else {
        return false;
    };
    let exceptions: Vec<bool> = rule.exceptions().iter().map(|e| oracle_holds(rb, facts, e)).collect();
    let conditions: Vec<bool> = rule.conditions().iter().map(|c| oracle_holds(rb, facts, c)).collect();
    let defeated = exceptions.iter().fold(false, |acc, &b| acc | b);
    let satisfied = match rule.op() {
        Operator::All => conditions.iter().fold(true, |acc, &b| acc & b),
        Operator::Any => conditions.iter().fold(false, |acc, &b| acc | b),
    };
    satisfied && !defeated
}

/// Truth value of every rule head, computed bottom-up in repeated passes
/// with no short-circuiting. Heads asserted as facts are true.
pub fn oracle_all_heads(rb: &RuleBase, facts: &FactBase) -> BTreeMap<PropositionId, bool> {
    let mut value: BTreeMap<PropositionId, bool> = BTreeMap::new();
    while value.len() < rb.len() {
        let before = value.len();
        for rule in rb.rules() {
            if value.contains_key(rule.head()) {
                continue;
            }
            let known = |p: &PropositionId| -> Option<bool> {
                if facts.contains(p) {
                    Some(true)
                } else if rb.contains_head(p) {
                    value.get(p).copied()
                } else {
                    Some(false)
                }
            };
            let exceptions: Option<Vec<bool>> = rule.exceptions().iter().map(known).collect();
            let conditions: Option<Vec<bool>> = rule.conditions().iter().map(known).collect();
            let (Some(exceptions), Some(conditions)) = (exceptions, conditions) else {
                continue;
            };
            let defeated = exceptions.contains(&true);
            let satisfied = match rule.op() {
                Operator::All => !conditions.contains(&false),
                Operator::Any => conditions.contains(&true),
            };
            let holds = facts.contains(rule.head()) || (satisfied && !defeated);
            value.insert(rule.head().clone(), holds);
        }
        assert!(value.len() > before, "rule base is cyclic");
    }
    value
}

/// All subsets of `items`, in bitmask order.
pub fn subsets(items: &[PropositionId]) -> Vec<FactBase> {
    assert!(items.len() < 24, "enumeration too large");
    (0u32..(1 << items.len()))
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, id)| id.clone())
                .collect()
        })
        .collect()
}

/// Structural checks every proof tree must pass. With `sequential`, also
/// checks the short-circuit discipline of the non-racing strategies.
pub fn check_tree(rb: &RuleBase, facts: &FactBase, node: &ProofNode, sequential: bool) -> Result<(), String> {
    let here = &node.proposition;
    if node.status != NodeStatus::CycleGuard && node.holds() != oracle_holds(rb, facts, here) {
        return Err(format!("{here}: status {} disagrees with the oracle", node.status));
    }
    match rb.get(here) {
        Some(rule) if !facts.contains(here) => {
            let conds: BTreeSet<_> = rule.conditions().iter().collect();
            let excs: BTreeSet<_> = rule.exceptions().iter().collect();
            if !node.condition_children.iter().all(|c| conds.contains(&c.proposition)) {
                return Err(format!("{here}: condition child outside the rule's conditions"));
            }
            if !node.exception_children.iter().all(|c| excs.contains(&c.proposition)) {
                return Err(format!("{here}: exception child outside the rule's exceptions"));
            }
            match node.status {
                NodeStatus::Defeated if !node.exception_children.iter().any(|c| c.holds()) => {
                    return Err(format!("{here}: DEFEATED without a holding exception"));
                }
                NodeStatus::Proved => {
                    let held: BTreeSet<_> = node
                        .condition_children
                        .iter()
                        .filter(|c| c.holds())
                        .map(|c| &c.proposition)
                        .collect();
                    let ok = match rule.op() {
                        Operator::All => held == conds,
                        Operator::Any => !held.is_empty(),
                    };
                    if !ok {
                        return Err(format!("{here}: PROVED without the required condition children"));
                    }
                }
                _ => {}
            }
            if sequential {
                let seen: Vec<_> = node.condition_children.iter().map(|c| &c.proposition).collect();
                if seen.as_slice() != &rule.conditions().iter().collect::<Vec<_>>()[..seen.len()] {
                    return Err(format!("{here}: conditions not a declaration-order prefix"));
                }
                let decisive = rule.op() == Operator::Any;
                if let Some(pos) = node.condition_children.iter().position(|c| c.holds() == decisive) {
                    if pos + 1 != node.condition_children.len() {
                        return Err(format!("{here}: conditions evaluated after the outcome was decided"));
                    }
                }
                let seen: Vec<_> = node.exception_children.iter().map(|c| &c.proposition).collect();
                if seen.as_slice() != &rule.exceptions().iter().collect::<Vec<_>>()[..seen.len()] {
                    return Err(format!("{here}: exceptions not a declaration-order prefix"));
                }
                if let Some(pos) = node.exception_children.iter().position(|c| c.holds()) {
                    if pos + 1 != node.exception_children.len() {
                        return Err(format!("{here}: exceptions evaluated after one held"));
                    }
                }
            }
        }
        _ => {
            if !node.condition_children.is_empty() || !node.exception_children.is_empty() {
                return Err(format!("{here}: non-rule node has children"));
            }
        }
    }
    for child in node.condition_children.iter().chain(&node.exception_children) {
        check_tree(rb, facts, child, sequential)?;
    }
    Ok(())
}
