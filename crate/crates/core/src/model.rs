//! Fitted models of every algorithm behind one type, their JSON document, and
//! nearest-neighbour retrieval.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledExample, ObjectRef, RatingExample};
use crate::error::{check_dim, Error, Result};
use crate::learners::{
    fit_hybrid, fit_ordinal, fit_xing, select_lambda, HybridModel, KdeClassifier, LearnerConfig,
    NcaModel, OrdinalModel, XingModel,
};
use crate::metric::{
    rank_neighbors, weighted_sq_dist, FeatureVec, MetricWeights, MissingFeatureMatrix, Neighbor,
    SoftLabel,
};
use crate::solver::SolverSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Ordinal regression on ratings.
    Or,
    /// Convex program on similar/dissimilar ratings.
    Co,
    /// L1-regularized NCA on class labels.
    Nca,
    /// Ratings plus (soft) class labels.
    Hyb,
    /// Unfitted baseline with `r_k ~ U(0, 1)`.
    Random,
}

impl Algorithm {
    pub const FITTED: [Algorithm; 4] = [Algorithm::Or, Algorithm::Co, Algorithm::Nca, Algorithm::Hyb];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Or => "or",
            Algorithm::Co => "co",
            Algorithm::Nca => "nca",
            Algorithm::Hyb => "hyb",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "or" => Ok(Algorithm::Or),
            "co" => Ok(Algorithm::Co),
            "nca" => Ok(Algorithm::Nca),
            "hyb" => Ok(Algorithm::Hyb),
            "random" => Ok(Algorithm::Random),
            other => Err(Error::invalid(format!(
                "unknown algorithm {other:?} (expected or, co, nca, hyb or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Ordinal(OrdinalModel),
    Xing(XingModel),
    Nca(NcaModel),
    Hybrid(HybridModel),
    Random(MetricWeights),
}

/// A retrieval query: its features and, if known, its class.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub x: &'a [f64],
    pub class: Option<usize>,
}

impl FittedModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            FittedModel::Ordinal(_) => Algorithm::Or,
            FittedModel::Xing(_) => Algorithm::Co,
            FittedModel::Nca(_) => Algorithm::Nca,
            FittedModel::Hybrid(_) => Algorithm::Hyb,
            FittedModel::Random(_) => Algorithm::Random,
        }
    }

    pub fn weights(&self) -> &MetricWeights {
        match self {
            FittedModel::Ordinal(m) => &m.r,
            FittedModel::Xing(m) => &m.r,
            FittedModel::Nca(m) => &m.r,
            FittedModel::Hybrid(m) => &m.r,
            FittedModel::Random(r) => r,
        }
    }

    pub fn solver(&self) -> Option<&SolverSummary> {
        match self {
            FittedModel::Ordinal(m) => Some(&m.solver),
            FittedModel::Xing(m) => Some(&m.solver),
            FittedModel::Nca(m) => Some(&m.solver),
            FittedModel::Hybrid(m) => Some(&m.solver),
            FittedModel::Random(_) => None,
        }
    }

    /// The `k` database objects closest to `query`, nearest first, with
    /// `Neighbor::index` pointing into `features`.
    ///
    /// `classes[i]` is the known class of object `i`; the hybrid metric gives
    /// known classes one-hot labels and the rest classifier posteriors.
    pub fn rank(
        &self,
        features: &[FeatureVec],
        classes: &[Option<usize>],
        query: Query<'_>,
        database: &[usize],
        k: usize,
    ) -> Result<Vec<Neighbor>> {
        check_dim(features.len(), classes.len())?;
        if database.iter().any(|&i| i >= features.len()) {
            return Err(Error::invalid("database index out of range"));
        }
        let mut hits = match self {
            FittedModel::Hybrid(h) => {
                let uq = h.soft_label(query.x, query.class)?;
                let db: Vec<(usize, SoftLabel)> = database
                    .iter()
                    .map(|&i| Ok((i, h.soft_label(&features[i], classes[i])?)))
                    .collect::<Result<_>>()?;
                let dists: Vec<f64> = db
                    .iter()
                    .map(|(i, u)| h.sq_dist(query.x, &features[*i], &uq, u))
                    .collect::<Result<_>>()?;
                rank_neighbors(&dists, k, |d| *d)?
            }
            _ => {
                let r = self.weights();
                let dists: Vec<f64> = database
                    .iter()
                    .map(|&i| weighted_sq_dist(r, query.x, &features[i]))
                    .collect::<Result<_>>()?;
                rank_neighbors(&dists, k, |d| *d)?
            }
        };
        for h in &mut hits {
            h.index = database[h.index];
        }
        Ok(hits)
    }
}

/// Fits one algorithm on ratings `ratings` and labelled examples `labels`.
///
/// `rng` drives λ selection (NCA, hybrid classifier) and the random baseline.
pub fn fit_model<R: Rng + ?Sized>(
    algorithm: Algorithm,
    features: &[FeatureVec],
    ratings: &[RatingExample],
    labels: &[LabeledExample],
    m: usize,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<FittedModel> {
    cfg.solver.validate()?;
    let k = features.first().map_or(0, |x| x.len());
    Ok(match algorithm {
        Algorithm::Or => FittedModel::Ordinal(fit_ordinal(features, ratings, &cfg.solver)?),
        Algorithm::Co => FittedModel::Xing(fit_xing(features, ratings, &cfg.solver)?),
        Algorithm::Nca => {
            FittedModel::Nca(select_lambda::<NcaModel, R>(features, labels, m, cfg, rng)?.model)
        }
        Algorithm::Hyb => {
            FittedModel::Hybrid(fit_hybrid(features, ratings, labels, m, cfg, rng)?)
        }
        Algorithm::Random => FittedModel::Random(random_weights(k, rng)),
    })
}

pub fn random_weights<R: Rng + ?Sized>(k: usize, rng: &mut R) -> MetricWeights {
    let u = Uniform::new(0.0, 1.0).expect("valid range");
    MetricWeights::new((0..k).map(|_| u.sample(rng)).collect()).expect("draws are nonnegative")
}

/// A training point of the hybrid model's classifier. Classes are 1-based as
/// in the label files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierPoint {
    pub id: ObjectRef,
    pub x: FeatureVec,
    pub class: usize,
}

/// On-disk form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub algorithm: Algorithm,
    pub num_features: usize,
    pub num_classes: usize,
    pub r: MetricWeights,
    pub q: Option<MissingFeatureMatrix>,
    pub theta: Option<[f64; 2]>,
    /// Kernel weights of the hybrid model's classifier.
    pub w: Option<MetricWeights>,
    /// Selected L1 weight (NCA) or the classifier's L1 weight (hybrid).
    pub lambda: Option<f64>,
    pub priors: Option<Vec<f64>>,
    pub classifier_train: Option<Vec<ClassifierPoint>>,
    pub solver: Option<SolverSummary>,
    pub classifier_solver: Option<SolverSummary>,
    pub seed: u64,
    pub config: LearnerConfig,
}

impl ModelDocument {
    /// `ids` names the objects that `features` indexes; only the hybrid
    /// classifier's training set needs them.
    pub fn new(
        model: &FittedModel,
        ids: &[ObjectRef],
        num_classes: usize,
        seed: u64,
        config: &LearnerConfig,
    ) -> Result<Self> {
        let mut doc = ModelDocument {
            algorithm: model.algorithm(),
            num_features: model.weights().len(),
            num_classes,
            r: model.weights().clone(),
            q: None,
            theta: None,
            w: None,
            lambda: None,
            priors: None,
            classifier_train: None,
            solver: model.solver().cloned(),
            classifier_solver: None,
            seed,
            config: config.clone(),
        };
        match model {
            FittedModel::Ordinal(m) => doc.theta = Some([m.theta1, m.theta2]),
            FittedModel::Nca(m) => doc.lambda = Some(m.lambda_used),
            FittedModel::Hybrid(h) => {
                let clf = &h.classifier;
                doc.q = Some(h.q.clone());
                doc.w = Some(clf.w.clone());
                doc.lambda = Some(clf.lambda_used);
                doc.priors = Some(clf.priors.clone());
                doc.classifier_solver = clf.solver.clone();
                doc.classifier_train = Some(classifier_points(clf, ids)?);
            }
            FittedModel::Xing(_) | FittedModel::Random(_) => {}
        }
        Ok(doc)
    }

    pub fn into_model(self) -> Result<FittedModel> {
        let missing = |what: &str| Error::invalid(format!("{} model document lacks {what}", self.algorithm));
        check_dim(self.num_features, self.r.len())?;
        let solver = || self.solver.clone().ok_or_else(|| missing("a solver summary"));
        Ok(match self.algorithm {
            Algorithm::Or => {
                let [theta1, theta2] = self.theta.ok_or_else(|| missing("theta"))?;
                if !(theta1 <= theta2) {
                    return Err(Error::invalid("model document has theta1 > theta2"));
                }
                FittedModel::Ordinal(OrdinalModel { r: self.r.clone(), theta1, theta2, solver: solver()? })
            }
            Algorithm::Co => FittedModel::Xing(XingModel { r: self.r.clone(), solver: solver()? }),
            Algorithm::Nca => FittedModel::Nca(NcaModel {
                r: self.r.clone(),
                lambda_used: self.lambda.ok_or_else(|| missing("lambda"))?,
                solver: solver()?,
            }),
            Algorithm::Random => FittedModel::Random(self.r.clone()),
            Algorithm::Hyb => {
                let q = self.q.clone().ok_or_else(|| missing("Q"))?;
                check_dim(self.num_classes, q.dim())?;
                let w = self.w.clone().ok_or_else(|| missing("w"))?;
                let train = self.classifier_train.clone().ok_or_else(|| missing("classifier_train"))?;
                let lambda = self.lambda.ok_or_else(|| missing("lambda"))?;
                let mut classifier = if self.num_classes == 1 && train.is_empty() {
                    KdeClassifier::single_class(self.num_features)
                } else {
                    let classes = train
                        .iter()
                        .map(|p| {
                            p.class
                                .checked_sub(1)
                                .ok_or_else(|| Error::invalid("classifier classes are 1-based"))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let xs = train.into_iter().map(|p| p.x).collect();
                    KdeClassifier::new(w, xs, classes, self.num_classes, lambda)?
                };
                if let Some(p) = &self.priors {
                    if p.len() != classifier.priors.len()
                        || p.iter().zip(&classifier.priors).any(|(a, b)| (a - b).abs() > 1e-12)
                    {
                        return Err(Error::invalid(
                            "stored priors disagree with the classifier training set",
                        ));
                    }
                }
                classifier.solver = self.classifier_solver.clone();
                FittedModel::Hybrid(HybridModel { r: self.r.clone(), q, classifier, solver: solver()? })
            }
        })
    }
}

fn classifier_points(clf: &KdeClassifier, ids: &[ObjectRef]) -> Result<Vec<ClassifierPoint>> {
    if clf.train_x.is_empty() {
        return Ok(Vec::new());
    }
    // the classifier stores features only; recover ids by matching in order
    check_dim(clf.train_x.len(), ids.len())?;
    Ok(ids
        .iter()
        .zip(&clf.train_x)
        .zip(&clf.train_class)
        .map(|((id, x), c)| ClassifierPoint { id: id.clone(), x: x.clone(), class: c + 1 })
        .collect())
}

/// Ids of the labelled objects in label order, matching a classifier fitted
/// on `labels`.
pub fn label_ids(ids: &[ObjectRef], labels: &[LabeledExample]) -> Vec<ObjectRef> {
    labels.iter().map(|l| ids[l.object].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVec {
        FeatureVec::new(v.to_vec()).unwrap()
    }

    #[test]
    fn algorithm_tags_round_trip() {
        for a in [Algorithm::Or, Algorithm::Co, Algorithm::Nca, Algorithm::Hyb, Algorithm::Random] {
            assert_eq!(a.tag().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("svm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn weighted_rank_maps_back_to_object_indices() {
        let f: Vec<FeatureVec> = [0.0, 5.0, 1.0, 3.0].iter().map(|v| fv(&[*v])).collect();
        let model = FittedModel::Random(MetricWeights::ones(1));
        let hits = model
            .rank(&f, &[None; 4], Query { x: &[0.0], class: None }, &[1, 2, 3], 2)
            .unwrap();
        assert_eq!(hits.iter().map(|h| h.index).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(hits[0].distance, 1.0);
    }

    #[test]
    fn hybrid_document_round_trip() {
        let f: Vec<FeatureVec> = (0..8).map(|i| fv(&[i as f64, (i % 3) as f64])).collect();
        let ids: Vec<ObjectRef> = (0..8).map(|i| ObjectRef::new(format!("o{i}")).unwrap()).collect();
        let labels: Vec<LabeledExample> =
            (0..6).map(|i| LabeledExample { object: i, class: i % 2 }).collect();
        let mut ratings = Vec::new();
        for a in 0..8 {
            for b in 0..8 {
                if a != b {
                    let v = if (a % 2) == (b % 2) { 3 } else { 1 };
                    ratings.push(RatingExample { a, b, rating: Rating::try_from(v).unwrap() });
                }
            }
        }
        let clf = KdeClassifier::new(
            MetricWeights::ones(2),
            labels.iter().map(|l| f[l.object].clone()).collect(),
            labels.iter().map(|l| l.class).collect(),
            2,
            2.0,
        )
        .unwrap();
        let h = crate::learners::fit_hybrid_with_classifier(
            &f,
            &ratings,
            &labels,
            clf,
            &Default::default(),
            false,
        )
        .unwrap();
        let model = FittedModel::Hybrid(h);
        let doc =
            ModelDocument::new(&model, &label_ids(&ids, &labels), 2, 5, &LearnerConfig::default())
                .unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        let back: ModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.into_model().unwrap(), model);
    }

    #[test]
    fn document_floats_round_trip_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let model = FittedModel::Random(random_weights(20, &mut rng));
            let doc = ModelDocument::new(&model, &[], 1, 0, &LearnerConfig::default()).unwrap();
            let back: ModelDocument = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
            assert_eq!(back.into_model().unwrap(), model);
        }
    }

    #[test]
    fn unknown_document_fields_rejected() {
        let doc = ModelDocument::new(
            &FittedModel::Random(MetricWeights::ones(2)),
            &[],
            2,
            0,
            &LearnerConfig::default(),
        )
        .unwrap();
        let mut v = serde_json::to_value(&doc).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelDocument>(v).is_err());
    }

    #[test]
    fn random_baseline_is_seeded() {
        let f = vec![fv(&[0.0, 1.0]), fv(&[1.0, 0.0])];
        let fit = |seed| {
            fit_model(Algorithm::Random, &f, &[], &[], 1, &LearnerConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
        };
        assert_eq!(fit(3), fit(3));
        assert_ne!(fit(3), fit(4));
    }
}
