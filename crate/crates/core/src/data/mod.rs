//! Dataset containers for rated object pairs and class-labelled objects.
//!
//! Objects live in one table; labels and ratings refer to objects by their
//! position in that table. Class indices are 0-based in memory and 1-based in
//! files.

mod io;
mod preprocess;

use std::collections::HashMap;
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FeatureVec;

pub use io::{load_dataset, save_dataset, FEATURES_FILE, LABELS_FILE, RATINGS_FILE};
pub use preprocess::{
    filter_correlated, normalize, pearson, preprocess_dataset, DroppedFeature, PreprocessReport,
    Standardizer,
};

/// Opaque, nonempty object identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObjectRef(String);

impl ObjectRef {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("object id must be nonempty"));
        }
        Ok(ObjectRef(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for ObjectRef {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for ObjectRef {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        ObjectRef::new(s)
    }
}

impl From<ObjectRef> for String {
    fn from(o: ObjectRef) -> String {
        o.0
    }
}

/// Three-level similarity judgement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Rating {
    Dissimilar = 1,
    Neutral = 2,
    Similar = 3,
}

impl Rating {
    pub fn value(self) -> u8 {
        self as u8
    }

    /// NDCG gain `2^σ − 1`.
    pub fn gain(self) -> f64 {
        ((1u32 << self.value()) - 1) as f64
    }
}

impl TryFrom<u8> for Rating {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Rating::Dissimilar),
            2 => Ok(Rating::Neutral),
            3 => Ok(Rating::Similar),
            _ => Err(Error::invalid(format!("rating must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<Rating> for u8 {
    fn from(r: Rating) -> u8 {
        r.value()
    }
}

/// `(o, c)`: object `object` carries class `class` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledExample {
    pub object: usize,
    pub class: usize,
}

/// `(o, o', σ)` for the directed pair `a → b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingExample {
    pub a: usize,
    pub b: usize,
    pub rating: Rating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<ObjectRef>,
    features: Vec<FeatureVec>,
    index: HashMap<ObjectRef, usize>,
    labels: Vec<LabeledExample>,
    ratings: Vec<RatingExample>,
    k: usize,
    m: usize,
}

impl Dataset {
    /// Validates cross references and dimensions. `m` is the class count; labels
    /// must lie in `0..m`.
    pub fn new(
        objects: Vec<(ObjectRef, FeatureVec)>,
        labels: Vec<LabeledExample>,
        ratings: Vec<RatingExample>,
        m: usize,
    ) -> Result<Self> {
        let k = objects.first().map_or(0, |(_, x)| x.len());
        let mut ids = Vec::with_capacity(objects.len());
        let mut features = Vec::with_capacity(objects.len());
        let mut index = HashMap::with_capacity(objects.len());
        for (i, (id, x)) in objects.into_iter().enumerate() {
            if x.len() != k {
                return Err(Error::invalid(format!(
                    "object {id} has {} features, expected {k}",
                    x.len()
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate object id {id}")));
            }
            ids.push(id);
            features.push(x);
        }
        let n = ids.len();
        let mut labelled = vec![false; n];
        for l in &labels {
            if l.object >= n {
                return Err(Error::invalid(format!("label refers to object #{}", l.object)));
            }
            if l.class >= m {
                return Err(Error::invalid(format!(
                    "class {} of object {} outside 1..={m}",
                    l.class + 1,
                    ids[l.object]
                )));
            }
            if std::mem::replace(&mut labelled[l.object], true) {
                return Err(Error::invalid(format!("object {} labelled twice", ids[l.object])));
            }
        }
        for r in &ratings {
            if r.a >= n || r.b >= n {
                return Err(Error::invalid("rating refers to an unknown object"));
            }
            if r.a == r.b {
                return Err(Error::invalid(format!("object {} rated against itself", ids[r.a])));
            }
        }
        Ok(Dataset { ids, features, index, labels, ratings, k, m })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.m
    }

    pub fn ids(&self) -> &[ObjectRef] {
        &self.ids
    }

    pub fn features(&self) -> &[FeatureVec] {
        &self.features
    }

    pub fn labels(&self) -> &[LabeledExample] {
        &self.labels
    }

    pub fn ratings(&self) -> &[RatingExample] {
        &self.ratings
    }

    pub fn lookup(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Per-object class, `None` for unlabelled objects.
    pub fn class_of(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.len()];
        for l in &self.labels {
            out[l.object] = Some(l.class);
        }
        out
    }

    /// Dense `n × n` directed rating table; `None` where no rating exists.
    pub fn rating_matrix(&self) -> Vec<Vec<Option<Rating>>> {
        rating_matrix(self.len(), &self.ratings)
    }

    /// Same objects, labels and ratings with replaced feature vectors.
    pub fn with_features(&self, features: Vec<FeatureVec>) -> Result<Self> {
        if features.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: features.len() });
        }
        let objects = self.ids.iter().cloned().zip(features).collect();
        Dataset::new(objects, self.labels.clone(), self.ratings.clone(), self.m)
    }
}

pub(crate) fn rating_matrix(n: usize, ratings: &[RatingExample]) -> Vec<Vec<Option<Rating>>> {
    let mut table = vec![vec![None; n]; n];
    for r in ratings {
        table[r.a][r.b] = Some(r.rating);
    }
    table
}

/// Uniform sample without replacement of `round(fraction · |S|)` ratings,
/// returned in their original order.
pub fn split_ratings(
    ratings: &[RatingExample],
    fraction: f64,
    seed: u64,
) -> Result<Vec<RatingExample>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let count = (fraction * ratings.len() as f64).round() as usize;
    if count == 0 {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {} ratings selects nothing",
            ratings.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, ratings.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| ratings[i]).collect())
}
