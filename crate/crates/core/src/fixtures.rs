//! Bundled rule bases and cases. The JSON files live in `crates/core/fixtures/`.

use crate::loader::{parse_fact_file, parse_rule_file};
use crate::rule_model::{FactBase, PropositionId, Rule, RuleBase};

/// Voidable contract: a minor or incapable party, unless the contract was
/// for necessities.
pub const CONTRACT_RULES: &str = include_str!("../fixtures/contract.rules.json");
/// Right to erasure: five alternative grounds, four exceptions.
pub const GDPR_RULES: &str = include_str!("../fixtures/gdpr.rules.json");
/// Fact names from the original illustration. They do not match the erasure
/// rule's condition names, so evaluating the rule against them derives nothing.
pub const GDPR_ILLUSTRATIVE_FACTS: &str = include_str!("../fixtures/gdpr_illustrative.facts.json");
pub const CYCLIC_RULES: &str = include_str!("../fixtures/cyclic.rules.json");
/// Goal with one exception that is a plain fact and a 20-rule condition chain.
pub const CHEAP_EXCEPTION_RULES: &str = include_str!("../fixtures/cheap_exception.rules.json");
pub const CHEAP_EXCEPTION_FACTS: &str = include_str!("../fixtures/cheap_exception.facts.json");
/// Alternating ALL/ANY binary tree of depth 5 with no exceptions anywhere.
pub const NO_EXCEPTIONS_DEEP_RULES: &str = include_str!("../fixtures/no_exceptions_deep.rules.json");
pub const NO_EXCEPTIONS_DEEP_FACTS: &str = include_str!("../fixtures/no_exceptions_deep.facts.json");
/// Clause-text export of the contract rule base.
pub const CONTRACT_PROLEG: &str = include_str!("../fixtures/contract.proleg");

fn rules(text: &str) -> Vec<Rule> {
    parse_rule_file(text.as_bytes()).expect("bundled rule file parses")
}

fn base(text: &str) -> RuleBase {
    RuleBase::from_rules(rules(text)).expect("bundled rule base is valid")
}

fn facts(text: &str) -> FactBase {
    parse_fact_file(text.as_bytes()).expect("bundled fact file parses").0
}

fn goal(name: &str) -> PropositionId {
    PropositionId::new(name).expect("bundled goal is a valid identifier")
}

pub fn contract_rules() -> Vec<Rule> {
    rules(CONTRACT_RULES)
}

pub fn contract() -> RuleBase {
    base(CONTRACT_RULES)
}

pub fn contract_goal() -> PropositionId {
    goal("contract_voidable")
}

pub fn gdpr() -> RuleBase {
    base(GDPR_RULES)
}

pub fn gdpr_goal() -> PropositionId {
    goal("art17_erasure_applicable")
}

pub fn gdpr_illustrative_facts() -> FactBase {
    facts(GDPR_ILLUSTRATIVE_FACTS)
}

/// A designed case: rule base, facts and goal.
#[derive(Debug, Clone)]
pub struct Case {
    pub rules: RuleBase,
    pub facts: FactBase,
    pub goal: PropositionId,
}

pub fn cheap_exception() -> Case {
    Case {
        rules: base(CHEAP_EXCEPTION_RULES),
        facts: facts(CHEAP_EXCEPTION_FACTS),
        goal: goal("claim"),
    }
}

pub fn no_exceptions_deep() -> Case {
    Case {
        rules: base(NO_EXCEPTIONS_DEEP_RULES),
        facts: facts(NO_EXCEPTIONS_DEEP_FACTS),
        goal: goal("node_0_0"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn designed_fixture_shapes() {
        let cheap = cheap_exception();
        assert_eq!(cheap.rules.len(), 21);
        let claim = cheap.rules.get(&cheap.goal).unwrap();
        assert_eq!(claim.exceptions().len(), 1);
        assert!(cheap.facts.contains(&claim.exceptions()[0]));
        assert_eq!(cheap.rules.depth_of(&cheap.goal), 21);

        let deep = no_exceptions_deep();
        assert!(deep.rules.rules().all(|r| r.exceptions().is_empty()));
        assert_eq!(deep.rules.depth(), 5);
    }
}
