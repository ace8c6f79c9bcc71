//! Random rule bases, differential runs across strategies and cost reports.
//!
//! Generated rule bases are layered DAGs: leaves sit on level 0 and a rule on
//! level `k` only references propositions on levels below `k`, so every
//! generated base is acyclic by construction.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::reasoner::{evaluate, EvalStats, NodeStatus, Strategy};
use crate::rule_model::{FactBase, Operator, PropositionId, Rule, RuleBase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabError {
    #[error("degenerate parameters: {0}")]
    DegenerateParams(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("at least one trial is required")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenParams {
    pub n_rules: usize,
    pub max_conditions: usize,
    pub max_exceptions: usize,
    /// Number of rule levels above the leaves.
    pub max_depth: usize,
    /// Size of the leaf pool rules draw from.
    pub n_leaves: usize,
    pub p_any: f64,
    pub p_fact: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_rules: 20,
            max_conditions: 4,
            max_exceptions: 2,
            max_depth: 6,
            n_leaves: 12,
            p_any: 0.5,
            p_fact: 0.5,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), LabError> {
        for (name, p) in [("p_any", self.p_any), ("p_fact", self.p_fact)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(LabError::InvalidParams(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.n_rules > 0 && self.max_depth == 0 {
            return Err(LabError::DegenerateParams("rules need max_depth >= 1".into()));
        }
        Ok(())
    }
}

fn name(prefix: char, i: usize) -> PropositionId {
    PropositionId::new(format!("{prefix}{i}")).expect("generated names are valid identifiers")
}

pub fn generate_rulebase(params: &GenParams) -> Result<RuleBase, LabError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let levels = params.max_depth.min(params.n_rules);
    // every level gets at least one rule so the requested depth is reachable
    let mut rule_levels: Vec<usize> = (1..=levels).collect();
    while rule_levels.len() < params.n_rules {
        rule_levels.push(rng.random_range(1..=levels));
    }
    rule_levels.sort_unstable();

    let leaves: Vec<PropositionId> = (0..params.n_leaves).map(|i| name('f', i)).collect();
    let mut by_level: Vec<Vec<PropositionId>> = vec![leaves];
    let mut rules = Vec::with_capacity(params.n_rules);

    for (i, &level) in rule_levels.iter().enumerate() {
        while by_level.len() <= level {
            by_level.push(Vec::new());
        }
        let pool: Vec<&PropositionId> = by_level[..level].iter().flatten().collect();
        let head = name('r', i);

        let n_conditions = rng.random_range(0..=params.max_conditions).min(pool.len());
        let n_exceptions = rng.random_range(0..=params.max_exceptions).min(pool.len());
        let mut conditions: Vec<PropositionId> = sample(&mut rng, pool.len(), n_conditions)
            .into_iter()
            .map(|j| pool[j].clone())
            .collect();
        let exceptions: Vec<PropositionId> = sample(&mut rng, pool.len(), n_exceptions)
            .into_iter()
            .map(|j| pool[j].clone())
            .collect();

        // tie the rule to the level right below it so depth actually builds up
        let below = &by_level[level - 1];
        if level > 1 && !conditions.is_empty() && !below.is_empty() && !conditions.iter().any(|c| below.contains(c)) {
            let pick = below[rng.random_range(0..below.len())].clone();
            conditions[0] = pick;
        }

        let op = if rng.random_bool(params.p_any) {
            Operator::Any
        } else {
            Operator::All
        };
        let rule = Rule::new(head.clone(), op, conditions, exceptions).expect("generated rules are well formed");
        rules.push(rule);
        by_level[level].push(head);
    }

    Ok(RuleBase::from_rules(rules).expect("layered generation is acyclic"))
}

/// The deepest rule head, smallest identifier among ties.
pub fn top_goal(rb: &RuleBase) -> Result<PropositionId, LabError> {
    rb.heads()
        .map(|h| (rb.depth_of(h), h))
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)))
        .map(|(_, h)| h.clone())
        .ok_or_else(|| LabError::DegenerateParams("no rules to pick a goal from".into()))
}

/// Each leaf independently with probability `p_fact`. Rule heads are never
/// sampled.
pub fn sample_facts(rb: &RuleBase, p_fact: f64, seed: u64) -> FactBase {
    let p = if p_fact.is_nan() { 0.0 } else { p_fact.clamp(0.0, 1.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rb.leaves().into_iter().filter(|_| rng.random_bool(p)).collect()
}

#[derive(Debug, Clone)]
pub struct GeneratedCase {
    pub rules: RuleBase,
    pub facts: FactBase,
    pub goal: PropositionId,
}

const FACT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn generate_case(params: &GenParams) -> Result<GeneratedCase, LabError> {
    let rules = generate_rulebase(params)?;
    let goal = top_goal(&rules)?;
    let facts = sample_facts(&rules, params.p_fact, params.seed ^ FACT_STREAM);
    Ok(GeneratedCase { rules, facts, goal })
}

/// splitmix64 over (base seed, trial index).
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    let mut z = base.wrapping_add(trial.wrapping_add(1).wrapping_mul(FACT_STREAM));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub holds: bool,
    pub status: NodeStatus,
    pub stats: EvalStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiffOutcome {
    /// One run per strategy, in [`Strategy::ALL`] order.
    pub runs: Vec<StrategyRun>,
}

impl DiffOutcome {
    pub fn mismatch(&self) -> bool {
        self.runs.windows(2).any(|w| w[0].holds != w[1].holds)
    }

    pub fn run(&self, strategy: Strategy) -> &StrategyRun {
        self.runs
            .iter()
            .find(|r| r.strategy == strategy)
            .expect("every strategy is run")
    }
}

pub fn differential_run(rb: &RuleBase, facts: &FactBase, goal: &PropositionId) -> DiffOutcome {
    let runs = Strategy::ALL
        .iter()
        .map(|&strategy| {
            let v = evaluate(rb, facts, goal, strategy).expect("acyclic rule bases never trip the cycle guard");
            StrategyRun {
                strategy,
                holds: v.holds,
                status: v.status(),
                stats: v.stats,
            }
        })
        .collect();
    DiffOutcome { runs }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub goal: PropositionId,
    pub outcome: DiffOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub seed: u64,
    pub goal: PropositionId,
    pub holds: Vec<(Strategy, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSummary {
    pub strategy: Strategy,
    pub mean_propositions_evaluated: f64,
    pub min_propositions_evaluated: u64,
    pub max_propositions_evaluated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub trials: usize,
    pub rows: Vec<TrialRow>,
    pub mismatches: Vec<Mismatch>,
    pub stats_by_strategy: Vec<CostSummary>,
}

/// Runs `trials` generated cases through [`differential_run`]. Trial `i`
/// uses `trial_seed(params.seed, i)`; trials run in parallel but the report
/// is in trial order.
pub fn bench(params: &GenParams, trials: usize) -> Result<DiffReport, LabError> {
    if trials == 0 {
        return Err(LabError::NoTrials);
    }
    params.validate()?;
    let rows = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(params.seed, trial as u64);
            let case = generate_case(&GenParams { seed, ..*params })?;
            Ok(TrialRow {
                trial,
                seed,
                outcome: differential_run(&case.rules, &case.facts, &case.goal),
                goal: case.goal,
            })
        })
        .collect::<Result<Vec<_>, LabError>>()?;

    let mismatches = rows
        .iter()
        .filter(|r| r.outcome.mismatch())
        .map(|r| Mismatch {
            seed: r.seed,
            goal: r.goal.clone(),
            holds: r.outcome.runs.iter().map(|run| (run.strategy, run.holds)).collect(),
        })
        .collect();

    let mut costs: BTreeMap<Strategy, Vec<u64>> = BTreeMap::new();
    for row in &rows {
        for run in &row.outcome.runs {
            costs
                .entry(run.strategy)
                .or_default()
                .push(run.stats.propositions_evaluated);
        }
    }
    let stats_by_strategy = Strategy::ALL
        .iter()
        .map(|s| {
            let values = &costs[s];
            CostSummary {
                strategy: *s,
                mean_propositions_evaluated: values.iter().sum::<u64>() as f64 / values.len() as f64,
                min_propositions_evaluated: values.iter().copied().min().unwrap_or(0),
                max_propositions_evaluated: values.iter().copied().max().unwrap_or(0),
            }
        })
        .collect();

    Ok(DiffReport {
        trials,
        rows,
        mismatches,
        stats_by_strategy,
    })
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    /// Header then one row per trial: trial, seed, goal, holds, then
    /// propositions_evaluated / rule_expansions / fact_lookups per strategy.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["trial".to_string(), "seed".into(), "goal".into(), "holds".into()];
        for s in Strategy::ALL {
            let prefix = s.as_str().to_ascii_lowercase();
            for column in ["propositions_evaluated", "rule_expansions", "fact_lookups"] {
                header.push(format!("{prefix}_{column}"));
            }
        }
        writer.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![
                row.trial.to_string(),
                row.seed.to_string(),
                row.goal.to_string(),
                row.outcome.run(Strategy::ExceptionFirst).holds.to_string(),
            ];
            for s in Strategy::ALL {
                let stats = row.outcome.run(s).stats;
                record.push(stats.propositions_evaluated.to_string());
                record.push(stats.rule_expansions.to_string());
                record.push(stats.fact_lookups.to_string());
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::loader::{detect_cycles, has_errors, validate};

    #[test]
    fn generation_is_deterministic() {
        let params = GenParams {
            seed: 1,
            ..GenParams::default()
        };
        assert_eq!(generate_rulebase(&params).unwrap(), generate_rulebase(&params).unwrap());
    }

    #[test]
    fn generated_bases_are_acyclic_and_valid() {
        for seed in 0..200 {
            let rb = generate_rulebase(&GenParams {
                seed,
                ..GenParams::default()
            })
            .unwrap();
            let rules: Vec<Rule> = rb.rules().cloned().collect();
            assert!(detect_cycles(&rules).is_empty());
            let (checked, diags) = validate(rules, None);
            assert!(checked.is_some() && !has_errors(&diags));
        }
    }

    #[test]
    fn size_and_depth_bounds() {
        let params = GenParams {
            n_rules: 30,
            max_depth: 6,
            seed: 7,
            ..GenParams::default()
        };
        let rb = generate_rulebase(&params).unwrap();
        assert!(rb.len() <= 30);
        assert!(rb.depth() <= 6, "depth {}", rb.depth());
        assert!(rb.depth() >= 2);
    }

    #[test]
    fn degenerate_params() {
        let empty = generate_rulebase(&GenParams {
            n_rules: 0,
            ..GenParams::default()
        })
        .unwrap();
        assert!(empty.is_empty());
        assert!(matches!(top_goal(&empty), Err(LabError::DegenerateParams(_))));
        assert!(matches!(
            generate_case(&GenParams {
                n_rules: 0,
                ..GenParams::default()
            }),
            Err(LabError::DegenerateParams(_))
        ));
        assert!(matches!(
            generate_rulebase(&GenParams {
                max_depth: 0,
                ..GenParams::default()
            }),
            Err(LabError::DegenerateParams(_))
        ));
        assert!(matches!(
            generate_rulebase(&GenParams {
                p_any: 1.5,
                ..GenParams::default()
            }),
            Err(LabError::InvalidParams(_))
        ));
    }

    #[test]
    fn goal_is_a_deepest_head() {
        let rb = generate_rulebase(&GenParams::default()).unwrap();
        let goal = top_goal(&rb).unwrap();
        assert_eq!(rb.depth_of(&goal), rb.depth());
    }

    #[test]
    fn sample_facts_extremes_and_determinism() {
        let rb = fixtures::contract();
        assert!(sample_facts(&rb, 0.0, 3).is_empty());
        assert_eq!(sample_facts(&rb, 1.0, 3), rb.leaves().into_iter().collect());
        assert_eq!(sample_facts(&rb, 0.5, 42), sample_facts(&rb, 0.5, 42));
        let generated = generate_rulebase(&GenParams::default()).unwrap();
        let facts = sample_facts(&generated, 0.7, 9);
        assert!(facts.iter().all(|f| !generated.contains_head(f)));
    }

    #[test]
    fn differential_contract_defeated() {
        let out = differential_run(
            &fixtures::contract(),
            &FactBase::parse(["minor", "for_necessities"]).unwrap(),
            &fixtures::contract_goal(),
        );
        assert!(!out.mismatch());
        assert!(out.runs.iter().all(|r| !r.holds && r.status == NodeStatus::Defeated));
    }

    #[test]
    fn cheap_exception_costs() {
        let case = fixtures::cheap_exception();
        let out = differential_run(&case.rules, &case.facts, &case.goal);
        let ef = out.run(Strategy::ExceptionFirst).stats;
        let cf = out.run(Strategy::ConditionsFirst).stats;
        // goal + waiver
        assert_eq!(ef.propositions_evaluated, 2);
        // goal + 20 chain rules + base_fact + waiver
        assert_eq!(cf.propositions_evaluated, 23);
        assert!(!out.mismatch());
    }

    #[test]
    fn no_exceptions_costs_equal() {
        let case = fixtures::no_exceptions_deep();
        let out = differential_run(&case.rules, &case.facts, &case.goal);
        assert_eq!(
            out.run(Strategy::ExceptionFirst).stats.propositions_evaluated,
            out.run(Strategy::ConditionsFirst).stats.propositions_evaluated
        );
    }

    #[test]
    fn bench_rejects_zero_trials() {
        assert_eq!(bench(&GenParams::default(), 0), Err(LabError::NoTrials));
    }

    #[test]
    fn bench_csv_shape_and_determinism() {
        let params = GenParams {
            seed: 11,
            ..GenParams::default()
        };
        let a = bench(&params, 25).unwrap();
        let b = bench(&params, 25).unwrap();
        assert!(a.passed());
        let sequential: Vec<_> = a
            .rows
            .iter()
            .map(|r| {
                (
                    r.seed,
                    r.outcome.run(Strategy::ExceptionFirst).stats,
                    r.outcome.run(Strategy::ConditionsFirst).stats,
                )
            })
            .collect();
        let again: Vec<_> = b
            .rows
            .iter()
            .map(|r| {
                (
                    r.seed,
                    r.outcome.run(Strategy::ExceptionFirst).stats,
                    r.outcome.run(Strategy::ConditionsFirst).stats,
                )
            })
            .collect();
        assert_eq!(sequential, again);

        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 26);
        assert_eq!(lines[0].split(',').count(), 13);
        assert!(lines[0].starts_with("trial,seed,goal,holds,exception_first_propositions_evaluated"));
    }
}
