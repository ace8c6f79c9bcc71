//! Defeasible rule bases: propositional rules with an ALL/ANY operator,
//! a condition list and an exception list, evaluated goal-first against a
//! case-specific fact base.
//!
//! The crate is split along the pipeline:
//!
//! - [`rule_model`]: identifiers, rules, rule bases and fact bases.
//! - [`loader`]: JSON rule/fact files, validation diagnostics, cycle detection.
//! - [`reasoner`]: backward chaining under a pluggable evaluation strategy,
//!   producing a verdict with a proof tree.
//! - [`strategy_lab`]: random rule-base generation, differential runs across
//!   strategies, cost reports.
//! - [`proleg_bridge`]: propositional clause text import/export.
//! - [`fixtures`]: the bundled example rule bases.

pub mod fixtures;
pub mod loader;
pub mod proleg_bridge;
pub mod reasoner;
pub mod rule_model;
pub mod strategy_lab;

pub use loader::{Diagnostic, Severity};
pub use reasoner::{evaluate, explain, EvalStats, ExplainFormat, NodeStatus, ProofNode, Strategy, Verdict};
pub use rule_model::{FactBase, Operator, PropositionId, Rule, RuleBase};
