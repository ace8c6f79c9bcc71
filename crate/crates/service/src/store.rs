use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::{Arc, RwLock};

use defeasible_core::loader::{has_errors, parse_rule_file, validate};
use defeasible_core::RuleBase;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleBaseHandle {
    pub id: String,
    pub name: String,
    pub head_count: usize,
}

#[derive(Debug, Clone)]
pub struct StoredRuleBase {
    pub handle: RuleBaseHandle,
    pub rules: Arc<RuleBase>,
}

#[derive(Default)]
struct Inner {
    next_id: u64,
    entries: BTreeMap<String, StoredRuleBase>,
}

/// In-memory rule-base store. Reads are shared, inserts and deletes exclusive.
#[derive(Default)]
pub struct RuleBaseStore {
    inner: RwLock<Inner>,
}

impl RuleBaseStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, name: Option<String>, rules: RuleBase) -> RuleBaseHandle {
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        inner.next_id += 1;
        let id = format!("rb{:06x}", inner.next_id);
        let handle = RuleBaseHandle {
            name: name.unwrap_or_else(|| id.clone()),
            head_count: rules.len(),
            id: id.clone(),
        };
        inner.entries.insert(
            id,
            StoredRuleBase {
                handle: handle.clone(),
                rules: Arc::new(rules),
            },
        );
        handle
    }

    pub fn get(&self, id: &str) -> Option<StoredRuleBase> {
        self.inner
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .entries
            .get(id)
            .cloned()
    }

    pub fn remove(&self, id: &str) -> bool {
        self.inner
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .entries
            .remove(id)
            .is_some()
    }

    pub fn list(&self) -> Vec<RuleBaseHandle> {
        self.inner
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .entries
            .values()
            .map(|e| e.handle.clone())
            .collect()
    }

    /// Loads every `*.json` file in `dir` that is a valid rule file, in file
    /// name order. `*.facts.json` files and anything that fails to load are skipped.
    pub fn preload_dir(&self, dir: &Path) -> io::Result<Vec<RuleBaseHandle>> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                name.ends_with(".json") && !name.ends_with(".facts.json")
            })
            .collect();
        paths.sort();

        let mut loaded = Vec::new();
        for path in paths {
            let content = std::fs::read(&path)?;
            let rules = match parse_rule_file(&content) {
                Ok(rules) => rules,
                Err(err) => {
                    tracing::debug!(path = %path.display(), %err, "skipping non-rule file");
                    continue;
                }
            };
            let (rb, diagnostics) = validate(rules, None);
            let Some(rb) = rb.filter(|_| !has_errors(&diagnostics)) else {
                tracing::warn!(path = %path.display(), "skipping invalid rule base");
                continue;
            };
            let stem = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let name = stem.trim_end_matches(".json").trim_end_matches(".rules").to_string();
            loaded.push(self.insert(Some(name), rb));
        }
        Ok(loaded)
    }
}
