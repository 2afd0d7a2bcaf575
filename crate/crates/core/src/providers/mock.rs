//! Evidence-gated stand-in for the code model.
//!
//! Each oracle task is recognised by the text the prompt ends with. The mock
//! answers with the ground truth only if the prompt carries one of the task's
//! evidence strings (the needed API signature, or a snippet that can be
//! reused); otherwise it answers with the configured wrong completion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::prefix_within_budget;
use crate::error::{Error, Result};

use super::CompletionModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockTask {
    pub task_id: String,
    /// The prompt ends with this text when it is about this task.
    pub anchor: String,
    pub ground_truth: String,
    /// Returned when no evidence is present; may span several lines.
    pub distractor: String,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockOracle {
    pub tasks: Vec<MockTask>,
}

impl MockOracle {
    pub fn load(path: &Path) -> Result<MockOracle> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Task whose anchor the prompt ends with; the longest anchor wins.
    pub fn find(&self, prompt: &str) -> Option<&MockTask> {
        self.tasks
            .iter()
            .filter(|t| !t.anchor.is_empty() && prompt.ends_with(&t.anchor))
            .max_by(|a, b| {
                a.anchor
                    .len()
                    .cmp(&b.anchor.len())
                    .then_with(|| b.task_id.cmp(&a.task_id))
            })
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockLlm {
    oracle: MockOracle,
}

impl MockLlm {
    pub fn new(oracle: MockOracle) -> MockLlm {
        MockLlm { oracle }
    }

    pub fn oracle(&self) -> &MockOracle {
        &self.oracle
    }
}

impl CompletionModel for MockLlm {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, prompt: &str, max_new_tokens: usize) -> Result<String> {
        let Some(task) = self.oracle.find(prompt) else {
            return Ok(String::new());
        };
        let grounded = task
            .evidence
            .iter()
            .any(|e| !e.is_empty() && prompt.contains(e));
        let answer = if grounded {
            &task.ground_truth
        } else {
            &task.distractor
        };
        Ok(prefix_within_budget(answer, max_new_tokens).to_string())
    }
}
