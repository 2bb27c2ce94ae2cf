//! Depth-limited regression trees grown by exact greedy variance reduction.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A regression tree. Rows go left when the feature is missing (NaN) or
/// `value <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "")]
pub enum TreeNode<T: Scalar> {
    Leaf {
        value: T,
    },
    Split {
        feature: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
}

impl<T: Scalar> TreeNode<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let x = row[*feature];
                    node = if x.is_nan() || x <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => Some(
                [Some(*feature), left.max_feature(), right.max_feature()]
                    .into_iter()
                    .flatten()
                    .max()
                    .unwrap_or(*feature),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate<T> {
    pub feature: usize,
    pub threshold: T,
    /// Parent SSE minus the summed SSE of the two children.
    pub gain: T,
}

/// Column-major training matrix with one presorted row order per feature
/// (missing values first, then ascending).
pub(crate) struct Presorted<'a, T> {
    pub columns: Vec<Vec<T>>,
    pub order: Vec<Vec<usize>>,
    pub rows: &'a [Vec<T>],
}

impl<'a, T: Scalar> Presorted<'a, T> {
    pub fn new(rows: &'a [Vec<T>], d: usize) -> Self {
        let columns: Vec<Vec<T>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..col.len()).collect();
                idx.sort_by(|&a, &b| match (col[a].is_nan(), col[b].is_nan()) {
                    (true, true) => Ordering::Equal,
                    (true, false) => Ordering::Less,
                    (false, true) => Ordering::Greater,
                    (false, false) => col[a].partial_cmp(&col[b]).unwrap_or(Ordering::Equal),
                });
                idx
            })
            .collect();
        Presorted { columns, order, rows }
    }
}

fn split_threshold<T: Scalar>(lo: T, hi: T) -> T {
    let mid = (lo + hi) / T::lit(2.0);
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Best split of the rows flagged in `in_node`. Ties keep the earliest
/// (feature, threshold) pair.
pub(crate) fn best_split_in<T: Scalar>(
    data: &Presorted<'_, T>,
    residuals: &[T],
    in_node: &[bool],
    min_leaf: usize,
) -> Option<SplitCandidate<T>> {
    let mut n = 0usize;
    let mut total = T::zero();
    let mut total_sq = T::zero();
    for (i, &inside) in in_node.iter().enumerate() {
        if inside {
            n += 1;
            total = total + residuals[i];
            total_sq = total_sq + residuals[i] * residuals[i];
        }
    }
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let parent = total * total / T::from_count(n);
    let tolerance = T::epsilon() * T::lit(64.0) * total_sq;
    let mut best: Option<SplitCandidate<T>> = None;
    for (feature, order) in data.order.iter().enumerate() {
        let col = &data.columns[feature];
        let mut n_left = 0usize;
        let mut s_left = T::zero();
        let members = order.iter().copied().filter(|&i| in_node[i]);
        let mut prev: Option<usize> = None;
        for i in members {
            if let Some(p) = prev {
                let (a, b) = (col[p], col[i]);
                if !a.is_nan() && a < b && n_left >= min_leaf && n - n_left >= min_leaf {
                    let s_right = total - s_left;
                    let gain = s_left * s_left / T::from_count(n_left)
                        + s_right * s_right / T::from_count(n - n_left)
                        - parent;
                    if gain > tolerance && best.is_none_or(|b| gain > b.gain) {
                        best = Some(SplitCandidate {
                            feature,
                            threshold: split_threshold(a, b),
                            gain,
                        });
                    }
                }
            }
            n_left += 1;
            s_left = s_left + residuals[i];
            prev = Some(i);
        }
    }
    best
}

pub(crate) fn grow<T: Scalar>(
    data: &Presorted<'_, T>,
    residuals: &[T],
    in_node: &mut Vec<bool>,
    depth_left: usize,
    min_leaf: usize,
) -> TreeNode<T> {
    let split = if depth_left == 0 {
        None
    } else {
        best_split_in(data, residuals, in_node, min_leaf)
    };
    let Some(split) = split else {
        let (sum, count) = in_node
            .iter()
            .zip(residuals)
            .filter(|(&inside, _)| inside)
            .fold((T::zero(), 0usize), |(s, c), (_, &r)| (s + r, c + 1));
        let value = if count == 0 { T::zero() } else { sum / T::from_count(count) };
        return TreeNode::Leaf { value };
    };
    let col = &data.columns[split.feature];
    let goes_left = |i: usize| col[i].is_nan() || col[i] <= split.threshold;
    let mut right_mask: Vec<bool> = in_node.iter().enumerate().map(|(i, &m)| m && !goes_left(i)).collect();
    let mut left_mask: Vec<bool> = in_node.iter().enumerate().map(|(i, &m)| m && goes_left(i)).collect();
    let left = grow(data, residuals, &mut left_mask, depth_left - 1, min_leaf);
    let right = grow(data, residuals, &mut right_mask, depth_left - 1, min_leaf);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Best single split of `targets` over row-major `features`, as used when
/// growing each boosting tree.
pub fn best_split<T: Scalar>(features: &[Vec<T>], targets: &[T], min_samples_leaf: usize) -> Option<SplitCandidate<T>> {
    let d = features.first().map_or(0, Vec::len);
    let data = Presorted::new(features, d);
    best_split_in(&data, targets, &vec![true; targets.len()], min_samples_leaf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sse(v: &[f64]) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum()
    }

    /// Tries every observed value as a `<=` threshold on every feature.
    fn exhaustive(features: &[Vec<f64>], y: &[f64], min_leaf: usize) -> f64 {
        let parent = sse(y);
        let mut best = 0.0f64;
        for j in 0..features[0].len() {
            for t in features.iter().map(|r| r[j]) {
                let (l, r): (Vec<_>, Vec<_>) = features.iter().zip(y).partition(|(row, _)| row[j] <= t);
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let l: Vec<f64> = l.into_iter().map(|(_, &v)| v).collect();
                let r: Vec<f64> = r.into_iter().map(|(_, &v)| v).collect();
                best = best.max(parent - sse(&l) - sse(&r));
            }
        }
        best
    }

    #[test]
    fn single_feature_step() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 4 { 1.0 } else { 3.0 }).collect();
        let s = best_split(&x, &y, 1).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 3.5);
        assert!((s.gain - sse(&y)).abs() < 1e-12);
    }

    #[test]
    fn missing_values_route_left() {
        let x = vec![vec![f64::NAN], vec![f64::NAN], vec![1.0], vec![2.0]];
        let y = vec![0.0, 0.0, 0.0, 5.0];
        let s = best_split(&x, &y, 1).unwrap();
        assert_eq!(s.threshold, 1.5);
        let tree = TreeNode::Split {
            feature: 0,
            threshold: s.threshold,
            left: Box::new(TreeNode::Leaf { value: -1.0 }),
            right: Box::new(TreeNode::Leaf { value: 1.0 }),
        };
        assert_eq!(tree.predict_row(&[f64::NAN]), -1.0);
        assert_eq!(tree.predict_row(&[1.5]), -1.0);
        assert_eq!(tree.predict_row(&[1.6]), 1.0);
    }

    #[test]
    fn constant_feature_never_splits() {
        let x = vec![vec![1.0]; 8];
        let y: Vec<f64> = (0..8).map(f64::from).collect();
        assert!(best_split(&x, &y, 1).is_none());
    }

    proptest! {
        #[test]
        fn greedy_matches_exhaustive(
            rows in prop::collection::vec(prop::collection::vec(0u8..12, 3), 2..64),
            y in prop::collection::vec(-5.0f64..5.0, 64),
            min_leaf in 1usize..6,
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
            let y = &y[..x.len()];
            let oracle = exhaustive(&x, y, min_leaf);
            match best_split(&x, y, min_leaf) {
                Some(s) => {
                    prop_assert!((s.gain - oracle).abs() < 1e-9);
                    let (l, r): (Vec<_>, Vec<_>) = x.iter().zip(y).partition(|(row, _)| row[s.feature] <= s.threshold);
                    let l: Vec<f64> = l.into_iter().map(|(_, &v)| v).collect();
                    let r: Vec<f64> = r.into_iter().map(|(_, &v)| v).collect();
                    prop_assert!((sse(y) - sse(&l) - sse(&r) - s.gain).abs() < 1e-9);
                }
                None => prop_assert!(oracle < 1e-9),
            }
        }
    }
}
