//! Synthetic link-stream generation for tests and benchmarks: heterogeneous
//! (power-law) node activity with heavy pair repetition, stationary over
//! time.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::history::TimestampedLink;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub len: usize,
    pub n_nodes: usize,
    /// power-law exponent of node activity weights
    pub alpha: f64,
    /// probability of re-emitting a recently seen pair
    pub repeat_prob: f64,
    /// size of the recent-pair pool
    pub pool: usize,
    /// mean number of links per timestamp tick
    pub links_per_tick: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            len: 50_000,
            n_nodes: 800,
            alpha: 1.2,
            repeat_prob: 0.7,
            pool: 3_000,
            links_per_tick: 4.0,
        }
    }
}

pub fn generate_stream(config: &SynthConfig, seed: u64) -> Vec<TimestampedLink> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // cumulative node weights w_i = 1/(i+1)^alpha
    let mut cum = Vec::with_capacity(config.n_nodes);
    let mut acc = 0.0;
    for i in 0..config.n_nodes {
        acc += 1.0 / ((i + 1) as f64).powf(config.alpha);
        cum.push(acc);
    }
    let total = acc;
    let draw_node = move |rng: &mut ChaCha8Rng| {
        let x = rng.gen_range(0.0..total);
        cum.partition_point(|&c| c < x).min(config.n_nodes - 1)
    };

    let mut pool: Vec<(usize, usize)> = Vec::with_capacity(config.pool);
    let mut t = 0u64;
    let mut out = Vec::with_capacity(config.len);
    let advance_prob = 1.0 / config.links_per_tick;
    for _ in 0..config.len {
        if rng.gen_bool(advance_prob) {
            t += 1;
        }
        let pair = if !pool.is_empty() && rng.gen_bool(config.repeat_prob) {
            pool[rng.gen_range(0..pool.len())]
        } else {
            loop {
                let a = draw_node(&mut rng);
                let b = draw_node(&mut rng);
                if a != b {
                    break (a, b);
                }
            }
        };
        if pool.len() < config.pool {
            pool.push(pair);
        } else {
            let slot = rng.gen_range(0..pool.len());
            pool[slot] = pair;
        }
        out.push(TimestampedLink::new(t as f64, format!("n{}", pair.0), format!("n{}", pair.1)));
    }
    out
}
