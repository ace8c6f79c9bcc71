//! Rule and fact files, static validation and diagnostics.
//!
//! A rule file is a JSON array of objects with exactly the keys `p`, `op`,
//! `conditions` and `exceptions`. A fact file is a JSON array of strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rule_model::{find_cycles, render_path, FactBase, ModelError, Operator, PropositionId, Rule, RuleBase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("bad identifier {0:?}")]
    BadIdentifier(String),
    #[error("invalid rule: {0}")]
    InvalidRule(ModelError),
}

impl LoadError {
    /// Short machine name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            LoadError::Syntax(_) => "SyntaxError",
            LoadError::Schema(_) => "SchemaError",
            LoadError::BadIdentifier(_) => "BadIdentifier",
            LoadError::InvalidRule(err) => err.code(),
        }
    }
}

impl From<ModelError> for LoadError {
    fn from(err: ModelError) -> Self {
        match err {
            ModelError::BadIdentifier(s) => LoadError::BadIdentifier(s),
            other => LoadError::InvalidRule(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
            Severity::Info => "INFO",
        })
    }
}

/// What a diagnostic is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Subject {
    Proposition(PropositionId),
    Cycle(Vec<PropositionId>),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Proposition(p) => write!(f, "{p}"),
            Subject::Cycle(path) => f.write_str(&render_path(path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub subject: Subject,
}

impl Diagnostic {
    fn new(severity: Severity, code: &str, subject: Subject, message: String) -> Self {
        Self {
            severity,
            code: code.to_string(),
            message,
            subject,
        }
    }
}

/// `SEVERITY CODE subject: message`
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}: {}", self.severity, self.code, self.subject, self.message)
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    p: String,
    op: String,
    conditions: Vec<String>,
    exceptions: Vec<String>,
}

fn parse_json(content: &[u8]) -> Result<serde_json::Value, LoadError> {
    let text = std::str::from_utf8(content).map_err(|e| LoadError::Syntax(format!("invalid UTF-8: {e}")))?;
    serde_json::from_str(text).map_err(|e| LoadError::Syntax(e.to_string()))
}

fn ids(items: Vec<String>) -> Result<Vec<PropositionId>, LoadError> {
    items
        .into_iter()
        .map(|s| PropositionId::new(s).map_err(LoadError::from))
        .collect()
}

pub fn parse_rule_file(content: &[u8]) -> Result<Vec<Rule>, LoadError> {
    let value = parse_json(content)?;
    let raw: Vec<RawRule> = serde_json::from_value(value).map_err(|e| LoadError::Schema(e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let op: Operator = r.op.parse().map_err(|e| LoadError::Schema(format!("rule {i}: {e}")))?;
            let head = PropositionId::new(r.p)?;
            Ok(Rule::new(head, op, ids(r.conditions)?, ids(r.exceptions)?)?)
        })
        .collect()
}

/// Parses a fact file. Repeated entries collapse into one fact and each
/// repeat yields a `DuplicateFact` warning.
pub fn parse_fact_file(content: &[u8]) -> Result<(FactBase, Vec<Diagnostic>), LoadError> {
    let value = parse_json(content)?;
    let raw: Vec<String> = serde_json::from_value(value).map_err(|e| LoadError::Schema(e.to_string()))?;
    let mut facts = FactBase::new();
    let mut diagnostics = Vec::new();
    for id in ids(raw)? {
        if !facts.insert(id.clone()) {
            diagnostics.push(Diagnostic::new(
                Severity::Warning,
                "DuplicateFact",
                Subject::Proposition(id),
                "fact listed more than once".to_string(),
            ));
        }
    }
    Ok((facts, diagnostics))
}

fn reference_graph(rules: &[Rule]) -> BTreeMap<PropositionId, Vec<PropositionId>> {
    let mut graph: BTreeMap<PropositionId, Vec<PropositionId>> = BTreeMap::new();
    for rule in rules {
        let edges = graph.entry(rule.head().clone()).or_default();
        for dep in rule.references() {
            if !edges.contains(&dep) {
                edges.push(dep);
            }
        }
    }
    graph
}

/// All dependency cycles among `rules`, each path closed (first == last).
/// Empty iff the reference graph is acyclic.
pub fn detect_cycles(rules: &[Rule]) -> Vec<Vec<PropositionId>> {
    find_cycles(&reference_graph(rules))
}

/// Checks a candidate rule list and, when there are no ERROR diagnostics,
/// builds the rule base. Diagnostics come back sorted by severity, then subject.
pub fn validate(rules: Vec<Rule>, facts: Option<&FactBase>) -> (Option<RuleBase>, Vec<Diagnostic>) {
    let mut diagnostics = Vec::new();

    let mut seen = BTreeSet::new();
    for rule in &rules {
        if !seen.insert(rule.head()) {
            diagnostics.push(Diagnostic::new(
                Severity::Error,
                "DuplicateHead",
                Subject::Proposition(rule.head().clone()),
                "more than one rule derives this proposition; use ANY to combine alternatives".to_string(),
            ));
        }
    }
    diagnostics.dedup();

    for cycle in detect_cycles(&rules) {
        diagnostics.push(Diagnostic::new(
            Severity::Error,
            "CyclicDependency",
            Subject::Cycle(cycle),
            "rules depend on each other in a cycle".to_string(),
        ));
    }

    let heads: BTreeSet<&PropositionId> = rules.iter().map(Rule::head).collect();
    if let Some(facts) = facts {
        for head in &heads {
            if facts.contains(head) {
                diagnostics.push(Diagnostic::new(
                    Severity::Warning,
                    "FactShadowsRule",
                    Subject::Proposition((*head).clone()),
                    "asserted as a fact, so its rule and exceptions are never consulted".to_string(),
                ));
            }
        }
    }

    let referenced: BTreeSet<&PropositionId> = rules
        .iter()
        .flat_map(|r| r.conditions().iter().chain(r.exceptions()))
        .collect();
    for id in referenced {
        if heads.contains(id) || facts.is_some_and(|f| f.contains(id)) {
            continue;
        }
        diagnostics.push(Diagnostic::new(
            Severity::Info,
            "DanglingReference",
            Subject::Proposition(id.clone()),
            "no rule derives this proposition; it holds only if supplied as a fact".to_string(),
        ));
    }

    diagnostics.sort_by(|a, b| (a.severity, &a.subject, &a.code).cmp(&(b.severity, &b.subject, &b.code)));

    if has_errors(&diagnostics) {
        return (None, diagnostics);
    }
    let rb = RuleBase::from_rules(rules).expect("no duplicate heads or cycles after validation");
    (Some(rb), diagnostics)
}

/// Serializes a rule base as a rule file: rules in head order, lists in
/// their original order.
pub fn serialize_rule_base(rb: &RuleBase) -> Vec<u8> {
    let rules: Vec<&Rule> = rb.rules().collect();
    if rules.is_empty() {
        return b"[]".to_vec();
    }
    serde_json::to_vec_pretty(&rules).expect("rules always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn id(s: &str) -> PropositionId {
        PropositionId::new(s).unwrap()
    }

    fn cyclic() -> Vec<Rule> {
        vec![
            Rule::parse("a", Operator::All, &["b"], &[]).unwrap(),
            Rule::parse("b", Operator::Any, &["a"], &[]).unwrap(),
        ]
    }

    #[test]
    fn parse_gdpr_listing() {
        let rules = parse_rule_file(fixtures::GDPR_RULES.as_bytes()).unwrap();
        assert_eq!(rules.len(), 1);
        let rule = &rules[0];
        assert_eq!(rule.head().as_str(), "art17_erasure_applicable");
        assert_eq!(rule.op(), Operator::Any);
        assert_eq!(rule.conditions().len(), 5);
        assert_eq!(rule.exceptions().len(), 4);
    }

    #[test]
    fn parse_empty_rule_file() {
        assert_eq!(parse_rule_file(b"[]").unwrap(), vec![]);
        assert_eq!(parse_rule_file(b"  [ ]\n").unwrap(), vec![]);
    }

    #[test]
    fn lowercase_op_is_schema_error() {
        let text = br#"[{"p": "x", "op": "all", "conditions": [], "exceptions": []}]"#;
        assert!(matches!(parse_rule_file(text), Err(LoadError::Schema(_))));
    }

    #[test]
    fn schema_errors() {
        let cases: [&[u8]; 6] = [
            br#"[{"p": "x", "op": "ALL", "conditions": []}]"#,
            br#"[{"p": "x", "op": "ALL", "conditions": [], "exceptions": [], "extra": 1}]"#,
            br#"[{"p": "x", "op": "ALL", "conditions": "a", "exceptions": []}]"#,
            br#"[{"p": 3, "op": "ALL", "conditions": [], "exceptions": []}]"#,
            br#"{"p": "x", "op": "ALL", "conditions": [], "exceptions": []}"#,
            br#"[{"p": "x", "op": "XOR", "conditions": [], "exceptions": []}]"#,
        ];
        for case in cases {
            assert!(
                matches!(parse_rule_file(case), Err(LoadError::Schema(_))),
                "{}",
                String::from_utf8_lossy(case)
            );
        }
    }

    #[test]
    fn syntax_errors() {
        for case in [&b"["[..], b"[{]", b"", b"\xff\xfe"] {
            assert!(matches!(parse_rule_file(case), Err(LoadError::Syntax(_))));
        }
    }

    #[test]
    fn bad_identifiers() {
        let text = br#"[{"p": "Contract", "op": "ALL", "conditions": [], "exceptions": []}]"#;
        assert_eq!(parse_rule_file(text), Err(LoadError::BadIdentifier("Contract".into())));
        let text = br#"[{"p": "x", "op": "ALL", "conditions": ["bad-id"], "exceptions": []}]"#;
        assert_eq!(parse_rule_file(text), Err(LoadError::BadIdentifier("bad-id".into())));
    }

    #[test]
    fn rule_invariants_surface_from_parser() {
        let text = br#"[{"p": "x", "op": "ALL", "conditions": ["x"], "exceptions": []}]"#;
        assert_eq!(
            parse_rule_file(text),
            Err(LoadError::InvalidRule(ModelError::SelfReference(id("x"))))
        );
    }

    #[test]
    fn parse_illustrative_fact_listing() {
        let (facts, diags) = parse_fact_file(fixtures::GDPR_ILLUSTRATIVE_FACTS.as_bytes()).unwrap();
        assert_eq!(facts.len(), 5);
        assert!(facts.contains(&id("objection_to_direct_marketing")));
        assert!(diags.is_empty());
    }

    #[test]
    fn fact_file_edge_cases() {
        let (facts, diags) = parse_fact_file(b"[]").unwrap();
        assert!(facts.is_empty() && diags.is_empty());

        let (facts, diags) = parse_fact_file(br#"["a","a"]"#).unwrap();
        assert_eq!(facts, FactBase::parse(["a"]).unwrap());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert_eq!(diags[0].code, "DuplicateFact");

        assert!(matches!(parse_fact_file(br#"["a", 1]"#), Err(LoadError::Schema(_))));
        assert!(matches!(parse_fact_file(br#"["a""#), Err(LoadError::Syntax(_))));
        assert!(matches!(parse_fact_file(br#"["A"]"#), Err(LoadError::BadIdentifier(_))));
    }

    #[test]
    fn validate_contract_with_minor() {
        let facts = FactBase::parse(["minor"]).unwrap();
        let (rb, diags) = validate(fixtures::contract_rules(), Some(&facts));
        assert!(rb.is_some());
        assert!(diags.iter().all(|d| d.severity == Severity::Info), "{diags:?}");
        let dangling: Vec<_> = diags.iter().map(|d| d.subject.to_string()).collect();
        assert_eq!(dangling, ["for_necessities", "incapable"]);
    }

    #[test]
    fn validate_cyclic() {
        let (rb, diags) = validate(cyclic(), None);
        assert!(rb.is_none());
        assert_eq!(diags[0].severity, Severity::Error);
        assert_eq!(diags[0].code, "CyclicDependency");
        assert_eq!(
            diags[0].to_string(),
            "ERROR CyclicDependency a -> b -> a: rules depend on each other in a cycle"
        );
    }

    #[test]
    fn validate_fact_shadows_rule() {
        let facts = FactBase::parse(["contract_voidable"]).unwrap();
        let (rb, diags) = validate(fixtures::contract_rules(), Some(&facts));
        assert!(rb.is_some());
        let warnings: Vec<_> = diags.iter().filter(|d| d.severity == Severity::Warning).collect();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].code, "FactShadowsRule");
        assert_eq!(warnings[0].subject, Subject::Proposition(id("contract_voidable")));
        // warnings sort ahead of info
        assert_eq!(diags[0].code, "FactShadowsRule");
    }

    #[test]
    fn validate_duplicate_head() {
        let rules = vec![
            Rule::parse("a", Operator::All, &["b"], &[]).unwrap(),
            Rule::parse("a", Operator::Any, &["c"], &[]).unwrap(),
        ];
        let (rb, diags) = validate(rules, None);
        assert!(rb.is_none());
        assert_eq!(diags.iter().filter(|d| d.code == "DuplicateHead").count(), 1);
    }

    #[test]
    fn detect_cycles_examples() {
        assert_eq!(detect_cycles(&cyclic()), vec![vec![id("a"), id("b"), id("a")]]);
        assert!(detect_cycles(&fixtures::contract_rules()).is_empty());
        let chain = vec![
            Rule::parse("a", Operator::All, &["b"], &[]).unwrap(),
            Rule::parse("b", Operator::All, &["c"], &[]).unwrap(),
        ];
        assert!(detect_cycles(&chain).is_empty());
    }

    #[test]
    fn detect_cycles_through_exceptions() {
        let rules = vec![
            Rule::parse("a", Operator::All, &["b"], &[]).unwrap(),
            Rule::parse("b", Operator::All, &[], &["c"]).unwrap(),
            Rule::parse("c", Operator::All, &["a"], &[]).unwrap(),
        ];
        assert_eq!(detect_cycles(&rules), vec![vec![id("a"), id("b"), id("c"), id("a")]]);
    }

    #[test]
    fn serialize_examples() {
        assert_eq!(serialize_rule_base(&RuleBase::default()), b"[]");
        for rb in [fixtures::contract(), fixtures::gdpr()] {
            let text = serialize_rule_base(&rb);
            let back = RuleBase::from_rules(parse_rule_file(&text).unwrap()).unwrap();
            assert_eq!(back, rb);
        }
    }

    #[test]
    fn diagnostic_rendering() {
        let d = Diagnostic::new(
            Severity::Info,
            "DanglingReference",
            Subject::Proposition(id("minor")),
            "msg".into(),
        );
        assert_eq!(d.to_string(), "INFO DanglingReference minor: msg");
    }
}
