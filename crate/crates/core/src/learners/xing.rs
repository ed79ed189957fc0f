use serde::{Deserialize, Serialize};

use super::barrier::BarrierProgram;
use super::sq_diff;
use crate::data::{Rating, RatingExample};
use crate::error::{Error, Result};
use crate::metric::{FeatureVec, MetricWeights};
use crate::solver::{SolverConfig, SolverSummary};

/// Weights from the similar/dissimilar convex program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XingModel {
    pub r: MetricWeights,
    pub solver: SolverSummary,
}

/// `min Σ_{σ=3} d_r² s.t. Σ_{σ=1} d_r ≥ 1, r ≥ 0`, starting from `r = 1`.
///
/// Neutral ratings are ignored. The returned weights make the dissimilarity
/// constraint tight.
pub fn fit_xing(
    features: &[FeatureVec],
    ratings: &[RatingExample],
    cfg: &SolverConfig,
) -> Result<XingModel> {
    let k = features.first().map_or(0, |x| x.len());
    let (similar, dissimilar) = pair_rows(features, ratings)?;
    let program = BarrierProgram::new(k, similar, dissimilar)?;
    let sol = program.solve(&vec![1.0; k], cfg)?;
    Ok(XingModel { r: MetricWeights::new(sol.params)?, solver: sol.solver })
}

/// Squared feature differences of the similar and dissimilar pairs.
pub(crate) fn pair_rows(
    features: &[FeatureVec],
    ratings: &[RatingExample],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut similar = Vec::new();
    let mut dissimilar = Vec::new();
    for r in ratings {
        let (Some(x), Some(y)) = (features.get(r.a), features.get(r.b)) else {
            return Err(Error::invalid("rating refers to an unknown object"));
        };
        match r.rating {
            Rating::Similar => similar.push(sq_diff(x, y)),
            Rating::Dissimilar => dissimilar.push(sq_diff(x, y)),
            Rating::Neutral => {}
        }
    }
    Ok((similar, dissimilar))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(scale: f64) -> (Vec<FeatureVec>, Vec<RatingExample>) {
        let xs = [0.0, scale, 0.0, 2.0 * scale];
        let features = xs.iter().map(|v| FeatureVec::new(vec![*v]).unwrap()).collect();
        let ratings = vec![
            RatingExample { a: 0, b: 1, rating: Rating::Similar },
            RatingExample { a: 2, b: 3, rating: Rating::Dissimilar },
        ];
        (features, ratings)
    }

    /// 1-D grid search of `min r s.t. 2·scale·√r ≥ 1`.
    fn grid_oracle(scale: f64) -> f64 {
        (1..=200_000)
            .map(|i| i as f64 * 1e-5)
            .find(|r| 2.0 * scale * r.sqrt() >= 1.0)
            .unwrap()
    }

    #[test]
    fn two_pair_instance_matches_kkt_and_grid() {
        let (f, s) = fixture(1.0);
        let m = fit_xing(&f, &s, &SolverConfig::default()).unwrap();
        assert!((m.r[0] - 0.25).abs() < 1e-6);
        assert!((grid_oracle(1.0) - 0.25).abs() < 1e-4);
    }

    #[test]
    fn doubled_differences_quarter_the_weight() {
        let (f, s) = fixture(2.0);
        let m = fit_xing(&f, &s, &SolverConfig::default()).unwrap();
        assert!((m.r[0] - 1.0 / 16.0).abs() < 1e-6);
        assert!((grid_oracle(2.0) - 1.0 / 16.0).abs() < 1e-4);
    }

    #[test]
    fn no_dissimilar_pairs_rejected() {
        let (f, mut s) = fixture(1.0);
        s.pop();
        let err = fit_xing(&f, &s, &SolverConfig::default()).unwrap_err();
        assert!(err.to_string().contains("degenerate rating set"), "{err}");
    }

    #[test]
    fn identical_dissimilar_features_rejected() {
        let features: Vec<FeatureVec> =
            [0.0, 1.0, 5.0, 5.0].iter().map(|v| FeatureVec::new(vec![*v]).unwrap()).collect();
        let ratings = vec![
            RatingExample { a: 0, b: 1, rating: Rating::Similar },
            RatingExample { a: 2, b: 3, rating: Rating::Dissimilar },
        ];
        assert!(matches!(
            fit_xing(&features, &ratings, &SolverConfig::default()),
            Err(Error::DegenerateRatings(_))
        ));
    }
}
