//! Deterministic solver that reasons over BPE tokens instead of units.
//!
//! Units are grouped by the token holding their first character. A group with
//! several units is a merged token: with probability `p_merged_miscount` the
//! solver undercounts it (counting) or treats it as an opaque block (sorting,
//! reversing). A single-unit token slips with probability `p_atomic_slip`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, SimErrorModel};
use crate::tokenizer::alignment_report;
use crate::{Instance, MergeTable, PromptBundle, PromptVariant, Result, TaskKind, TokenizationView};

/// Merges trained on the instance renderings when no merges file is given.
pub const DEFAULT_SIM_MERGES: usize = 256;

#[derive(Debug)]
pub struct SimulatedBackend {
    label: String,
    model: String,
    table: MergeTable,
    errors: SimErrorModel,
    seed: u64,
    instances: HashMap<String, Instance>,
}

impl SimulatedBackend {
    pub fn new(
        label: impl Into<String>,
        table: MergeTable,
        errors: SimErrorModel,
        seed: u64,
        instances: impl IntoIterator<Item = Instance>,
    ) -> Result<Self> {
        errors.validate()?;
        let digest = Sha256::digest(crate::tokenizer::write_merges(&table).as_bytes());
        let model = format!(
            "sim-bpe/pm={}/ps={}/steps={}/seed={seed}/merges={}",
            errors.p_merged_miscount,
            errors.p_atomic_slip,
            errors.max_steps,
            hex::encode(&digest[..6])
        );
        Ok(Self {
            label: label.into(),
            model,
            table,
            errors,
            seed,
            instances: instances.into_iter().map(|i| (i.id.clone(), i)).collect(),
        })
    }

    pub fn table(&self) -> &MergeTable {
        &self.table
    }
}

impl Backend for SimulatedBackend {
    fn label(&self) -> &str {
        &self.label
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn temperature(&self) -> f64 {
        0.0
    }

    fn synthetic(&self) -> bool {
        true
    }

    fn complete(&self, bundle: &PromptBundle) -> std::result::Result<String, BackendError> {
        let instance = self.instances.get(&bundle.instance_id).ok_or_else(|| {
            BackendError::fatal(format!("simulated backend has no instance {}", bundle.instance_id))
        })?;
        let view = self.table.encode(&instance.rendered);
        simulate_response(bundle, instance, &view, &self.errors, self.seed)
            .map_err(|e| BackendError::fatal(e.to_string()))
    }
}

/// Unit indices grouped by the token that holds each unit's first character.
fn unit_groups(instance: &Instance, view: &TokenizationView) -> Result<Vec<Vec<usize>>> {
    let report = alignment_report(view, &instance.units)?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); view.len()];
    let mut tok = 0;
    for (u, &(start, _)) in report.unit_spans.iter().enumerate() {
        while tok + 1 < view.boundaries.len() && view.boundaries[tok].1 <= start {
            tok += 1;
        }
        groups[tok].push(u);
    }
    groups.retain(|g| !g.is_empty());
    Ok(groups)
}

fn rng_for(seed: u64, prompt: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes))
}

/// Produces the raw answer text the simulated solver would return.
pub fn simulate_response(
    bundle: &PromptBundle,
    instance: &Instance,
    view: &TokenizationView,
    errors: &SimErrorModel,
    seed: u64,
) -> Result<String> {
    let mut rng = rng_for(seed, &bundle.text);
    let mut groups = unit_groups(instance, view)?;
    groups.truncate(errors.max_steps);
    let units = &instance.units;
    let token_text = |g: &[usize]| -> String { g.iter().map(|&u| units[u].as_str()).collect() };

    let mut out = String::new();
    match &instance.task {
        TaskKind::Counting { target } => {
            let mut running: u64 = 0;
            for g in &groups {
                let hits = g.iter().filter(|&&u| &units[u] == target).count() as u64;
                let mut add = hits;
                if hits > 0 {
                    if g.len() > 1 {
                        if rng.random_bool(errors.p_merged_miscount) {
                            add = rng.random_range(0..hits);
                        }
                    } else if rng.random_bool(errors.p_atomic_slip) {
                        add = if rng.random_bool(2.0 / 3.0) { 0 } else { 2 };
                    }
                }
                running += add;
                if bundle.variant != PromptVariant::Base {
                    let _ = writeln!(out, "\"{}\" -> {running}", token_text(g));
                }
            }
            let _ = write!(out, "Result: {running}");
        }
        TaskKind::Sorting | TaskKind::Reversing => {
            let mut items: Vec<String> = Vec::new();
            for g in &groups {
                if g.len() > 1 && rng.random_bool(errors.p_merged_miscount) {
                    items.push(token_text(g));
                    continue;
                }
                for &u in g {
                    if !rng.random_bool(errors.p_atomic_slip) {
                        items.push(units[u].clone());
                    }
                }
            }
            if matches!(instance.task, TaskKind::Sorting) {
                items.sort();
            } else {
                items.reverse();
            }
            if bundle.variant != PromptVariant::Base {
                for item in &items {
                    let _ = writeln!(out, "\"{item}\"");
                }
            }
            let _ = write!(out, "{{'Result': '{}'}}", items.concat());
        }
    }
    Ok(out)
}
