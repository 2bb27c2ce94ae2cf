//! Gradient-boosted regression trees with squared-error and logistic
//! objectives.

mod baseline;
mod tree;

pub use baseline::{encode_features, train_supervised_baseline, BaselineSplit, EncodedFeatures};
pub use tree::{best_split, SplitCandidate, TreeNode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use tree::{grow, Presorted};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
    /// Seeds the randomized steps around a fit (fold shuffling, split
    /// draws). Tree growth itself is deterministic.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            n_trees: 200,
            max_depth: 3,
            shrinkage: 0.1,
            min_samples_leaf: 5,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument(
                "n_trees, max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidArgument("shrinkage must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SquaredError,
    /// Binary targets in {0, 1}; scores live in logit space.
    Logistic,
}

/// Residual target for the next tree: `y - F` or `y - sigmoid(F)`.
pub fn negative_gradient<T: Scalar>(objective: Objective, target: T, score: T) -> T {
    match objective {
        Objective::SquaredError => target - score,
        Objective::Logistic => target - sigmoid(score),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoostedModel<T: Scalar> {
    pub objective: Objective,
    pub base_prediction: T,
    pub shrinkage: T,
    pub n_features: usize,
    pub trees: Vec<TreeNode<T>>,
}

impl<T: Scalar> BoostedModel<T> {
    /// Boosted score before the output link: `base + shrinkage * tree`
    /// accumulated tree by tree.
    pub fn raw_score(&self, row: &[T]) -> T {
        self.trees
            .iter()
            .fold(self.base_prediction, |f, t| f + self.shrinkage * t.predict_row(row))
    }

    fn check_width(&self, row: &[T]) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(())
    }

    pub fn predict_row(&self, row: &[T]) -> Result<T> {
        self.check_width(row)?;
        let f = self.raw_score(row);
        Ok(match self.objective {
            Objective::SquaredError => f,
            Objective::Logistic => sigmoid(f),
        })
    }

    pub fn predict(&self, features: &[Vec<T>]) -> Result<Vec<T>> {
        features.iter().map(|r| self.predict_row(r)).collect()
    }

    /// The model made of the first `k` trees.
    pub fn truncated(&self, k: usize) -> Self {
        BoostedModel {
            trees: self.trees[..k.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if model.trees.iter().filter_map(TreeNode::max_feature).any(|f| f >= model.n_features) {
            return Err(Error::Parse("tree references a feature out of range".into()));
        }
        Ok(model)
    }
}

/// State handed to a [`fit_traced`] observer before each tree is grown.
pub struct BoostRound<'a, T> {
    pub round: usize,
    /// Raw boosted scores of the training rows before this round.
    pub scores: &'a [T],
    /// Targets the round's tree is fitted to.
    pub residuals: &'a [T],
}

pub fn fit<T: Scalar>(
    features: &[Vec<T>],
    targets: &[T],
    hp: &Hyperparams,
    objective: Objective,
) -> Result<BoostedModel<T>> {
    fit_traced(features, targets, hp, objective, |_| {})
}

fn check_inputs<T: Scalar>(features: &[Vec<T>], targets: &[T], hp: &Hyperparams, objective: Objective) -> Result<usize> {
    hp.validate()?;
    if features.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: targets.len(),
        });
    }
    let needed = 2 * hp.min_samples_leaf;
    if features.len() < needed {
        return Err(Error::TooFewRows {
            needed,
            got: features.len(),
        });
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("at least one feature is required".into()));
    }
    for row in features {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| v.is_infinite()) {
            return Err(Error::NonFiniteValue);
        }
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteValue);
    }
    if objective == Objective::Logistic {
        if targets.iter().any(|&t| t != T::zero() && t != T::one()) {
            return Err(Error::InvalidArgument("logistic targets must be 0 or 1".into()));
        }
        let positives = targets.iter().filter(|&&t| t == T::one()).count();
        if positives == 0 || positives == targets.len() {
            return Err(Error::SingleClass);
        }
    }
    Ok(d)
}

fn base_prediction<T: Scalar>(targets: &[T], objective: Objective) -> T {
    let n = T::from_count(targets.len());
    let total: T = targets.iter().copied().sum();
    match objective {
        Objective::SquaredError if targets.iter().all(|&t| t == targets[0]) => targets[0],
        Objective::SquaredError => total / n,
        Objective::Logistic => {
            let p = total / n;
            (p / (T::one() - p)).ln()
        }
    }
}

/// [`fit`] with a per-round observer, used to audit the gradients the trees
/// are fitted to.
pub fn fit_traced<T: Scalar, F: FnMut(&BoostRound<'_, T>)>(
    features: &[Vec<T>],
    targets: &[T],
    hp: &Hyperparams,
    objective: Objective,
    mut observe: F,
) -> Result<BoostedModel<T>> {
    let d = check_inputs(features, targets, hp, objective)?;
    let data = Presorted::new(features, d);
    let base = base_prediction(targets, objective);
    let shrinkage = T::lit(hp.shrinkage);
    let mut scores = vec![base; targets.len()];
    let mut residuals = vec![T::zero(); targets.len()];
    let mut trees = Vec::with_capacity(hp.n_trees);
    for round in 0..hp.n_trees {
        for ((r, &y), &f) in residuals.iter_mut().zip(targets).zip(&scores) {
            *r = negative_gradient(objective, y, f);
        }
        observe(&BoostRound {
            round,
            scores: &scores,
            residuals: &residuals,
        });
        let tree = grow(
            &data,
            &residuals,
            &mut vec![true; targets.len()],
            hp.max_depth,
            hp.min_samples_leaf,
        );
        for (f, row) in scores.iter_mut().zip(data.rows) {
            *f = *f + shrinkage * tree.predict_row(row);
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        objective,
        base_prediction: base,
        shrinkage,
        n_features: d,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mse(model: &BoostedModel<f64>, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let p = model.predict(x).unwrap();
        p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn constant_target_is_reproduced_exactly() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y = vec![0.7; 20];
        let m = fit(&x, &y, &Hyperparams::default(), Objective::SquaredError).unwrap();
        assert!(m.predict(&x).unwrap().iter().all(|&p| p == 0.7));
        assert!(m.trees.iter().all(|t| t.depth() == 0));
    }

    #[test]
    fn grid_regression_converges() {
        let x: Vec<Vec<f64>> = (0..256).map(|i| vec![i as f64 / 255.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let m = fit(&x, &y, &Hyperparams::default(), Objective::SquaredError).unwrap();
        assert!(mse(&m, &x, &y) < 1e-3);
    }

    #[test]
    fn separable_classes_fit_perfectly() {
        let x: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![(i % 10) as f64, (i / 10) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] + r[1] > 9.0 { 1.0 } else { 0.0 }).collect();
        let m = fit(&x, &y, &Hyperparams::default(), Objective::Logistic).unwrap();
        let p = m.predict(&x).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let acc = p.iter().zip(&y).filter(|(p, y)| (**p >= 0.5) == (**y == 1.0)).count();
        assert_eq!(acc, 100);
    }

    #[test]
    fn empty_model_predicts_base() {
        let m = BoostedModel::<f64> {
            objective: Objective::SquaredError,
            base_prediction: 0.3,
            shrinkage: 0.1,
            n_features: 2,
            trees: vec![],
        };
        assert_eq!(m.predict_row(&[1.0, 2.0]).unwrap(), 0.3);
        assert!(matches!(m.predict_row(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn errors() {
        let x = vec![vec![0.0]; 10];
        let y = vec![1.0; 10];
        assert!(matches!(
            fit(&x, &y, &Hyperparams::default(), Objective::Logistic),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            fit(&x[..9], &y[..9], &Hyperparams::default(), Objective::SquaredError),
            Err(Error::TooFewRows { .. })
        ));
        let bad = Hyperparams {
            shrinkage: 1.5,
            ..Default::default()
        };
        assert!(fit(&x, &y, &bad, Objective::SquaredError).is_err());
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0).collect();
        let hp = Hyperparams {
            n_trees: 20,
            ..Default::default()
        };
        let m = fit(&x, &y, &hp, Objective::SquaredError).unwrap();
        let back = BoostedModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());
        let mf: BoostedModel<f32> = fit(
            &x.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect::<Vec<_>>(),
            &y.iter().map(|&v| v as f32).collect::<Vec<_>>(),
            &hp,
            Objective::SquaredError,
        )
        .unwrap();
        assert_eq!(mf.trees.len(), 20);
    }

    fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (10usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), n),
                prop::collection::vec(-2.0f64..2.0, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn squared_loss_never_increases((x, y) in dataset(), shrink in 0.05f64..=1.0) {
            let hp = Hyperparams { n_trees: 15, min_samples_leaf: 2, shrinkage: shrink, ..Default::default() };
            let m = fit(&x, &y, &hp, Objective::SquaredError).unwrap();
            let mut prev = f64::INFINITY;
            for k in 0..=m.trees.len() {
                let loss = mse(&m.truncated(k), &x, &y);
                prop_assert!(loss <= prev + 1e-12);
                prev = loss;
            }
        }

        #[test]
        fn fitting_is_deterministic((x, y) in dataset()) {
            let hp = Hyperparams { n_trees: 10, min_samples_leaf: 2, ..Default::default() };
            let a = fit(&x, &y, &hp, Objective::SquaredError).unwrap().to_json().unwrap();
            let b = fit(&x, &y, &hp, Objective::SquaredError).unwrap().to_json().unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn logistic_residuals_are_label_minus_probability((x, y) in dataset()) {
            let labels: Vec<f64> = y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
            prop_assume!(labels.iter().any(|&l| l == 1.0) && labels.iter().any(|&l| l == 0.0));
            let hp = Hyperparams { n_trees: 8, min_samples_leaf: 2, shrinkage: 0.5, ..Default::default() };
            let mut rounds = Vec::new();
            let m = fit_traced(&x, &labels, &hp, Objective::Logistic, |r| {
                rounds.push((r.round, r.residuals.to_vec()));
            }).unwrap();
            for (k, residuals) in rounds {
                let partial = m.truncated(k);
                for ((row, &l), &r) in x.iter().zip(&labels).zip(&residuals) {
                    let expected = l - 1.0 / (1.0 + (-partial.raw_score(row)).exp());
                    prop_assert!((r - expected).abs() < 1e-12);
                }
            }
        }
    }
}
