use rand::Rng;

use super::{FilterSet, KgeError};
use crate::kgbuild::Triple;

const RETRIES: usize = 32;

fn replace(triple: Triple, tail_slot: bool, entity: usize) -> Triple {
    if tail_slot {
        Triple::new(triple.head, triple.relation, entity)
    } else {
        Triple::new(entity, triple.relation, triple.tail)
    }
}

/// Uniform draw from `0..n` skipping the (at most two) ids in `excluded`.
fn draw_excluding<R: Rng + ?Sized>(rng: &mut R, n: usize, excluded: [usize; 2]) -> Option<usize> {
    let mut ex = excluded.to_vec();
    ex.sort_unstable();
    ex.dedup();
    if n <= ex.len() {
        return None;
    }
    let mut x = rng.random_range(0..n - ex.len());
    for e in ex {
        if x >= e {
            x += 1;
        }
    }
    Some(x)
}

/// Replace the head or the tail (fair coin) with a uniformly drawn other
/// entity. Self-loops are never produced. With `known`, corruptions that are
/// themselves known facts are rejected: a bounded number of redraws, then an
/// exhaustive scan of the chosen slot, then of the other slot.
pub fn corrupt_triple<R: Rng + ?Sized>(
    triple: Triple,
    entity_count: usize,
    rng: &mut R,
    known: Option<&FilterSet>,
) -> Result<Triple, KgeError> {
    let tail_first = rng.random_bool(0.5);
    let excluded = [triple.head, triple.tail];
    let exhausted = || KgeError::Exhausted {
        head: triple.head,
        relation: triple.relation,
        tail: triple.tail,
    };
    let Some(known) = known else {
        let e = draw_excluding(rng, entity_count, excluded).ok_or_else(exhausted)?;
        return Ok(replace(triple, tail_first, e));
    };
    for _ in 0..RETRIES {
        let Some(e) = draw_excluding(rng, entity_count, excluded) else {
            break;
        };
        let candidate = replace(triple, tail_first, e);
        if !known.contains(&candidate) {
            return Ok(candidate);
        }
    }
    for tail_slot in [tail_first, !tail_first] {
        let valid: Vec<Triple> = (0..entity_count)
            .filter(|e| !excluded.contains(e))
            .map(|e| replace(triple, tail_slot, e))
            .filter(|c| !known.contains(c))
            .collect();
        if !valid.is_empty() {
            return Ok(valid[rng.random_range(0..valid.len())]);
        }
    }
    Err(exhausted())
}
