//! Uniform random exploration over the currently available actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentAction, AgentError, Algorithm, EnvShape, Experience};
use crate::env::{Action, Observation};

/// Uniform over available slots × string pool × mode bit.
pub fn random_action(obs: &Observation, pool_size: usize, rng: &mut ChaCha8Rng) -> Action {
    let slots: Vec<usize> = obs.available_slots().collect();
    let slot = slots[rng.random_range(0..slots.len())];
    Action {
        slot,
        string: rng.random_range(0..pool_size.max(1)),
        mode: rng.random_range(0..2u8),
    }
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    pool_size: usize,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(shape: EnvShape, seed: u64) -> Self {
        RandomAgent {
            pool_size: shape.pool_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Random
    }

    fn act(&mut self, obs: &Observation, _explore: bool) -> AgentAction {
        AgentAction::Discrete(random_action(obs, self.pool_size, &mut self.rng))
    }

    fn learn(&mut self, _exp: &Experience<'_>) -> Result<(), AgentError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(mask: &[u8]) -> Observation {
        Observation {
            activity: vec![1],
            widgets: mask.to_vec(),
        }
    }

    #[test]
    fn single_slot_single_string() {
        // every widget slot masked: only system slots remain
        let o = obs(&[1, 0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let a = random_action(&o, 1, &mut rng);
            assert!(o.slot_available(a.slot));
            assert_eq!(a.string, 0);
            assert!(a.mode <= 1);
        }
    }

    #[test]
    fn slots_uniform_chi_square() {
        // 2 widget slots + 2 system slots available = 4 cells
        let o = obs(&[1, 0, 1, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = std::collections::BTreeMap::new();
        let n = 10_000;
        for _ in 0..n {
            *counts
                .entry(random_action(&o, 5, &mut rng).slot)
                .or_insert(0usize) += 1;
        }
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![0, 2, 4, 5]);
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square critical value, 3 degrees of freedom, alpha 0.01
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }
}
