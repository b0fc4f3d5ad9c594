//! Inverted dropout with a per-evaluation RNG.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// Evaluation mode leaves every value untouched. Training mode zeroes each
/// entry with probability `p` and scales survivors by `1 / (1 - p)`; there
/// is no renormalization afterwards.
#[derive(Debug, Clone)]
pub struct Dropout {
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn eval() -> Self {
        Self { rng: None }
    }

    pub fn train(seed: u64) -> Self {
        Self {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn is_train(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply<S: Real>(&mut self, xs: &mut [S], p: f64) {
        let Some(rng) = self.rng.as_mut() else {
            return;
        };
        if p <= 0.0 {
            return;
        }
        let keep = S::from_f64(1.0 / (1.0 - p));
        for x in xs {
            *x = if rng.random::<f64>() < p { S::zero() } else { *x * keep };
        }
    }
}
