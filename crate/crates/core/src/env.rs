//! The environment contract shared by all domain families.

use serde::{Deserialize, Serialize};

/// Handle for an option's controller. Initiation set, policy and termination
/// live inside the domain implementation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionDescriptor {
    pub option_id: String,
    pub name: String,
}

/// Result of attempting one option execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecOutcome {
    /// True when the option ran to termination; false when the attempt
    /// violated the initiation set, in which case the state is unchanged.
    pub success: bool,
    /// SMDP steps taken (1 for failed attempts).
    pub duration: u32,
    /// Recorded but unused by the learners.
    pub reward: f64,
}

impl ExecOutcome {
    pub fn failure() -> Self {
        ExecOutcome {
            success: false,
            duration: 1,
            reward: 0.0,
        }
    }
}

/// A continuous simulated task. One instance is single-threaded; independent
/// instances may run concurrently.
pub trait Environment {
    /// Domain family identifier ("corridor", "rodblock", "treasure").
    fn family(&self) -> &str;

    /// Identifier of this task within the family.
    fn task_id(&self) -> &str;

    fn options(&self) -> &[OptionDescriptor];

    /// Options whose initiation condition holds in the current state. All
    /// shipped domains let every option be attempted anywhere (the attempt
    /// itself fails where the option does not apply), so this returns the
    /// full option set; `collect` handles the general contract.
    fn executable_options(&self) -> Vec<String> {
        self.options().iter().map(|o| o.option_id.clone()).collect()
    }

    /// Problem-space state vector.
    fn state(&self) -> Vec<f64>;

    /// Place the environment at a given problem-space state. The state must be
    /// a valid configuration for the task.
    fn set_state(&mut self, state: &[f64]);

    /// Egocentric observation of the current state. Draws sensor noise from
    /// the environment's RNG stream.
    fn observe(&mut self) -> Vec<f64>;

    /// Observation dimension, constant across all tasks of one family.
    fn obs_dim(&self) -> usize;

    /// Per-dimension sensor noise scale of the egocentric observation.
    fn obs_noise(&self) -> Vec<f64>;

    /// Attempt an option. On failure the problem-space state is unchanged.
    fn execute(&mut self, option_id: &str) -> ExecOutcome;

    /// Reset to the task's start distribution.
    fn reset(&mut self);
}
