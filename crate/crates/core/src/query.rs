//! Roll-out uncertainty, shifting histories, and the adaptive query threshold.
//!
//! After each episodic roll-out the training loop computes the mean absolute
//! one-step TD residual along the episode ([`rollout_uncertainty`]) and feeds
//! it to [`QueryState::observe_rollout`]. Once the history holds `N_h + 1`
//! entries, the threshold is the `idx_thres`-th largest (0-based) of the
//! previous `N_h` uncertainties; a new roll-out strictly above it triggers a
//! demonstration query (budget permitting) for the initial state of the most
//! uncertain recent roll-out.

use ndarray::Array1;

use crate::env::EnvState;
use crate::learner::trajectory::Trajectory;
use crate::nn::Mlp;
use crate::{Error, Result};

/// Mutable bookkeeping for the active-query mechanism.
#[derive(Debug, Clone)]
pub struct QueryState {
    /// Shifting history of (initial state, uncertainty) pairs; the pairing is
    /// kept joint so the argmax-by-uncertainty returns its state atomically.
    history: Vec<(EnvState, f64)>,
    pub history_len: usize,
    pub ratio_threshold: f64,
    pub threshold_index: usize,
    pub demo_count: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryDecision {
    NoQuery,
    Query {
        initial_state: EnvState,
        uncertainty: f64,
        threshold: f64,
    },
}

impl QueryState {
    pub fn new(history_len: usize, ratio_threshold: f64, budget: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio_threshold) || ratio_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "ratio_threshold must be in (0,1), got {ratio_threshold}"
            )));
        }
        if budget == 0 || history_len == 0 {
            return Err(Error::Config("budget and history length must be positive".into()));
        }
        Ok(QueryState {
            history: Vec::new(),
            history_len,
            ratio_threshold,
            threshold_index: (history_len as f64 * ratio_threshold) as usize,
            demo_count: 0,
            budget,
        })
    }

    pub fn history(&self) -> &[(EnvState, f64)] {
        &self.history
    }

    /// The threshold currently implied by the stored history (the previous
    /// `N_h` entries), if the history is full.
    fn threshold(&self) -> Option<f64> {
        if self.history.len() < self.history_len + 1 {
            return None;
        }
        let mut us: Vec<f64> = self.history[..self.history_len]
            .iter()
            .map(|(_, u)| *u)
            .collect();
        us.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Some(us[self.threshold_index])
    }

    /// The threshold that will be applied to the next observed roll-out, or
    /// `None` during warm-up. Identical to the value used inside
    /// [`observe_rollout`] because the newest entry never participates in the
    /// threshold.
    pub fn pending_threshold(&self) -> Option<f64> {
        if self.history.len() < self.history_len {
            return None;
        }
        let mut us: Vec<f64> = self.history[..self.history_len]
            .iter()
            .map(|(_, u)| *u)
            .collect();
        us.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Some(us[self.threshold_index])
    }

    /// Record one finished roll-out and decide whether to query.
    ///
    /// On a `Query` decision the demo count is incremented; the caller only
    /// has to retrieve and ingest the demonstration.
    pub fn observe_rollout(
        &mut self,
        initial_state: EnvState,
        uncertainty: f64,
    ) -> Result<QueryDecision> {
        if !uncertainty.is_finite() {
            return Err(Error::Training(format!(
                "non-finite roll-out uncertainty {uncertainty}"
            )));
        }
        self.history.push((initial_state, uncertainty));
        let mut decision = QueryDecision::NoQuery;
        if self.history.len() >= self.history_len + 1 {
            let u_thres = self.threshold().expect("full history");
            if uncertainty > u_thres && self.demo_count < self.budget {
                let (state, u_max) = tie_break_argmax(&self.history);
                self.demo_count += 1;
                decision = QueryDecision::Query {
                    initial_state: state.clone(),
                    uncertainty: u_max,
                    threshold: u_thres,
                };
            }
            self.history.remove(0);
        }
        Ok(decision)
    }
}

/// Most-uncertain entry of the history; ties break toward the most recent.
pub fn tie_break_argmax(history: &[(EnvState, f64)]) -> (&EnvState, f64) {
    assert!(!history.is_empty(), "empty history");
    let mut best = 0;
    for i in 1..history.len() {
        if history[i].1 >= history[best].1 {
            best = i;
        }
    }
    (&history[best].0, history[best].1)
}

/// Mean absolute one-step TD residual of an episodic roll-out (evaluated with
/// the given critic on the trajectory's own recorded actions).
///
/// For the final step the bootstrap term is zero when the episode terminated;
/// otherwise the recorded final (state, action) pair is used. `discount`
/// optionally multiplies the bootstrap term; `None` reproduces the undiscounted
/// residual.
pub fn rollout_uncertainty(
    critic: &Mlp,
    trajectory: &Trajectory,
    discount: Option<f64>,
) -> Result<f64> {
    if trajectory.steps.is_empty() {
        return Err(Error::Training("empty trajectory".into()));
    }
    let gamma = discount.unwrap_or(1.0);
    let q = |s: &Array1<f64>, a: &Array1<f64>| -> Result<f64> {
        let mut input = Vec::with_capacity(s.len() + a.len());
        input.extend(s.iter());
        input.extend(a.iter());
        let out = critic.forward(Array1::from_vec(input).view())?;
        Ok(out[0])
    };
    let n = trajectory.steps.len();
    let mut total = 0.0;
    for t in 0..n {
        let st = &trajectory.steps[t];
        let q_t = q(&st.state, &st.action)?;
        let q_next = if t + 1 < n {
            let nx = &trajectory.steps[t + 1];
            q(&nx.state, &nx.action)?
        } else if trajectory.terminated {
            0.0
        } else {
            let (fs, fa) = trajectory
                .final_pair
                .as_ref()
                .ok_or_else(|| Error::Training("truncated trajectory missing final pair".into()))?;
            q(fs, fa)?
        };
        total += (st.reward + gamma * q_next - q_t).abs();
    }
    Ok(total / n as f64)
}
