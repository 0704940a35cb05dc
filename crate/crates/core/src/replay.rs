//! Fixed-capacity FIFO experience replay with uniform sampling.

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, Observation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: Action,
    pub r: f64,
    pub s_next: Observation,
    pub done: bool,
}

/// Nothing stored yet; the caller should skip the training step.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("replay buffer holds {size} transitions, {required} required")]
pub struct NotReady {
    pub size: usize,
    pub required: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 100_000;

    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be at least 1");
        Self { capacity, storage: Vec::with_capacity(capacity.min(1 << 16)), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// `batch_size` indices drawn uniformly with replacement. Any nonempty
    /// buffer can serve any batch size.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, NotReady> {
        if self.storage.is_empty() {
            return Err(NotReady { size: 0, required: 1 });
        }
        Ok((0..batch_size).map(|_| rng.gen_range(0..self.storage.len())).collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>, NotReady> {
        Ok(self.sample_indices(batch_size, rng)?.into_iter().map(|i| &self.storage[i]).collect())
    }

    /// Raw slot access; slot order is storage order, not insertion order.
    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.storage.get(slot)
    }
}
