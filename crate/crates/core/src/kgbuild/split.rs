use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{KgError, KnowledgeGraph, Triple};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSet {
    /// All facts of the three splits.
    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Seeded shuffle, contiguous cut, then a repair pass that swaps valid/test
/// facts mentioning an entity unseen in train with train facts whose removal
/// orphans nobody.
pub fn split_triples(kg: &KnowledgeGraph, ratios: [f64; 3], seed: u64) -> Result<SplitSet, KgError> {
    if ratios.iter().any(|&r| !(r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(KgError::Split(format!("ratios {ratios:?} must be positive and sum to 1")));
    }
    let n = kg.triple_count();
    if n < 5 {
        return Err(KgError::Split(format!("{n} triples cannot fill three splits")));
    }
    let mut shuffled = kg.triples().to_vec();
    shuffled.shuffle(&mut stream_rng(seed, &[0x5B11]));

    let mut n_train = ((n as f64) * ratios[0]).round().max(1.0) as usize;
    let mut n_valid = ((n as f64) * ratios[1]).round().max(1.0) as usize;
    while n_train + n_valid >= n {
        if n_train >= n_valid {
            n_train -= 1;
        } else {
            n_valid -= 1;
        }
    }

    let mut train: Vec<Triple> = shuffled[..n_train].to_vec();
    let mut held: Vec<Triple> = shuffled[n_train..].to_vec();
    repair(&mut train, &mut held, kg.entity_count());
    let test = held.split_off(n_valid);
    Ok(SplitSet {
        train,
        valid: held,
        test,
        ratios,
        seed,
    })
}

fn repair(train: &mut [Triple], held: &mut [Triple], entity_count: usize) {
    let mut count = vec![0usize; entity_count];
    for t in train.iter() {
        count[t.head] += 1;
        count[t.tail] += 1;
    }
    for slot in held.iter_mut() {
        let t = *slot;
        if count[t.head] > 0 && count[t.tail] > 0 {
            continue;
        }
        let removable = |s: &Triple| {
            [s.head, s.tail]
                .iter()
                .all(|&x| x == t.head || x == t.tail || count[x] >= 2)
        };
        if let Some(pos) = train.iter().position(removable) {
            let s = train[pos];
            count[s.head] -= 1;
            count[s.tail] -= 1;
            count[t.head] += 1;
            count[t.tail] += 1;
            train[pos] = t;
            *slot = s;
        }
    }
}
