//! Transition storage and the balanced demo/rollout sampling rule.

use std::collections::VecDeque;

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceTag {
    Rollout,
    Demo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub source_tag: SourceTag,
}

/// Bounded FIFO buffer; eviction is strictly oldest-first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            entries: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.obs_dim || t.next_state.len() != self.obs_dim {
            return Err(Error::DimMismatch {
                expected: self.obs_dim,
                got: t.state.len().max(t.next_state.len()),
                context: "transition observation",
            });
        }
        if t.action.len() != self.act_dim {
            return Err(Error::DimMismatch {
                expected: self.act_dim,
                got: t.action.len(),
                context: "transition action",
            });
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
        Ok(())
    }
}

/// Batch composition: `floor(B/2)` uniform draws (with replacement) from the
/// demo buffer and the rest from the rollout buffer; all from the rollout
/// buffer while the demo buffer is still empty. The assembled batch is
/// shuffled.
pub fn sample_balanced<'a, R: Rng + ?Sized>(
    demo: &'a ReplayBuffer,
    rollout: &'a ReplayBuffer,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    if rollout.is_empty() {
        return Err(Error::Sampling("rollout buffer is empty".into()));
    }
    let n_demo = if demo.is_empty() { 0 } else { batch_size / 2 };
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..n_demo {
        batch.push(demo.get(rng.gen_range(0..demo.len())));
    }
    for _ in 0..batch_size - n_demo {
        batch.push(rollout.get(rng.gen_range(0..rollout.len())));
    }
    // Fisher-Yates shuffle
    for i in (1..batch.len()).rev() {
        let j = rng.gen_range(0..=i);
        batch.swap(i, j);
    }
    Ok(batch)
}
