//! Fixed-capacity FIFO experience replay with seeded uniform sampling.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_CAPACITY: usize = 50_000;
pub const DEFAULT_BATCH: usize = 128;

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest record when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform sample of `batch` records: without replacement when the
    /// buffer holds at least `batch`, with replacement otherwise.
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<&T> {
        let n = self.items.len();
        if n == 0 || batch == 0 {
            return Vec::new();
        }
        if n >= batch {
            rand::seq::index::sample(rng, n, batch)
                .into_iter()
                .map(|i| &self.items[i])
                .collect()
        } else {
            (0..batch)
                .map(|_| &self.items[rng.random_range(0..n)])
                .collect()
        }
    }
}
