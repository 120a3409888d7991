use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mlp, PolicyNet, ValueNet, N_ACTIONS, POLICY_HIDDEN, VALUE_HIDDEN};
use crate::env::StateMode;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "forage-checkpoint/1";

/// Policy (and optionally value) parameters with the settings needed to
/// reuse them: state mode, originating seed and training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub mode: StateMode,
    pub seed: u64,
    pub step: u64,
    pub policy: Mlp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Mlp>,
}

impl Checkpoint {
    pub fn new(mode: StateMode, seed: u64, step: u64, policy: &PolicyNet, value: Option<&ValueNet>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            mode,
            seed,
            step,
            policy: policy.net.clone(),
            value: value.map(|v| v.net.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!("unknown checkpoint format {:?}", self.format)));
        }
        let d = self.mode.input_dim();
        check_shape(&self.policy, d, POLICY_HIDDEN, N_ACTIONS, "policy")?;
        if let Some(v) = &self.value {
            check_shape(v, d, VALUE_HIDDEN, 1, "value")?;
        }
        Ok(())
    }

    pub fn policy(&self) -> PolicyNet {
        PolicyNet {
            net: self.policy.clone(),
        }
    }

    pub fn value(&self) -> Option<ValueNet> {
        self.value.clone().map(|net| ValueNet { net })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_shape(net: &Mlp, input: usize, hidden: usize, output: usize, what: &str) -> Result<()> {
    if (net.input_dim, net.hidden_dim, net.output_dim) != (input, hidden, output) {
        return Err(Error::Validation(format!(
            "{what} shape {}x{}x{} does not match {input}x{hidden}x{output}",
            net.input_dim, net.hidden_dim, net.output_dim
        )));
    }
    if net.params.len() != Mlp::param_count(input, hidden, output) {
        return Err(Error::Validation(format!("{what} has {} parameters", net.params.len())));
    }
    if !net.is_finite() {
        return Err(Error::Validation(format!("{what} has non-finite parameters")));
    }
    Ok(())
}
