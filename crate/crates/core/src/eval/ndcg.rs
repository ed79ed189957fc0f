use std::collections::HashMap;

use crate::data::{ObjectRef, Rating};
use crate::error::{Error, Result};

/// Top-`k` retrieval for one query next to the best possible ordering, with
/// the query's rating of every listed object.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: ObjectRef,
    pub retrieved: Vec<ObjectRef>,
    pub ideal: Vec<ObjectRef>,
    pub gains: HashMap<ObjectRef, Rating>,
}

impl RankedList {
    /// Builds the ideal list from all rated candidates: descending rating,
    /// ties kept in candidate order.
    pub fn new(
        query: ObjectRef,
        retrieved: Vec<ObjectRef>,
        candidates: &[(ObjectRef, Rating)],
    ) -> Result<Self> {
        let k = retrieved.len();
        if k > candidates.len() {
            return Err(Error::invalid("more retrieved objects than rated candidates"));
        }
        let ideal = ideal_order(candidates.iter().map(|c| c.1))
            .into_iter()
            .take(k)
            .map(|i| candidates[i].0.clone())
            .collect();
        let gains = candidates.iter().cloned().collect();
        Ok(RankedList { query, retrieved, ideal, gains })
    }

    fn gain_seq(&self, ids: &[ObjectRef]) -> Result<Vec<Rating>> {
        ids.iter()
            .map(|id| {
                self.gains.get(id).copied().ok_or_else(|| {
                    Error::invalid(format!("no rating from {} to {id}", self.query))
                })
            })
            .collect()
    }
}

/// Positions of `ratings` sorted by descending rating (stable).
pub fn ideal_order(ratings: impl IntoIterator<Item = Rating>) -> Vec<usize> {
    let ratings: Vec<Rating> = ratings.into_iter().collect();
    let mut idx: Vec<usize> = (0..ratings.len()).collect();
    idx.sort_by(|a, b| ratings[*b].cmp(&ratings[*a]));
    idx
}

/// `Σ_{p=1}^{k} (2^σ_p − 1) / log₂(1 + p)`.
pub fn dcg(gains: &[Rating]) -> f64 {
    gains
        .iter()
        .enumerate()
        .map(|(p, g)| g.gain() / ((p + 2) as f64).log2())
        .sum()
}

/// DCG of the retrieved gains over DCG of the ideal gains, both cut at `k`.
pub fn ndcg_from_gains(retrieved: &[Rating], ideal: &[Rating], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("NDCG cutoff must be positive"));
    }
    if retrieved.len() < k || ideal.len() < k {
        return Err(Error::invalid(format!(
            "NDCG@{k} needs {k} retrieved and ideal gains, got {} and {}",
            retrieved.len(),
            ideal.len()
        )));
    }
    let (retrieved, ideal) = (&retrieved[..k], &ideal[..k]);
    if ideal.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("ideal gains are not in descending order"));
    }
    if retrieved == ideal {
        return Ok(1.0);
    }
    let best = dcg(ideal);
    if !(best > 0.0) {
        return Err(Error::invalid("ideal DCG is zero"));
    }
    Ok(dcg(retrieved) / best)
}

pub fn ndcg_at_k(list: &RankedList, k: usize) -> Result<f64> {
    ndcg_from_gains(&list.gain_seq(&list.retrieved)?, &list.gain_seq(&list.ideal)?, k)
}
