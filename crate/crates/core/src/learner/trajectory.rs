//! Episodic roll-out record shared by the learners and the query mechanism.

use ndarray::Array1;

use crate::env::EnvState;

#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub state: Array1<f64>,
    pub action: Array1<f64>,
    pub reward: f64,
}

/// One episode: the per-step (state, action, reward) triples plus how it
/// ended. `final_pair` records the next (state, action) when the episode was
/// cut off without terminating, so the TD residual of the last step can still
/// bootstrap.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub terminated: bool,
    pub final_pair: Option<(Array1<f64>, Array1<f64>)>,
    pub initial_state: EnvState,
    pub env_steps: usize,
    pub success: bool,
}
