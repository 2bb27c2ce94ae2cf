//! Deterministic offline stand-in for a language model.
//!
//! The mock reads prompts the same way a model would: it recovers the
//! `Name: Value` block from the rendered text and scores it with a planted
//! logistic model, so every prompt-rendering path is exercised end to end.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Completion, CompletionRequest, TokenLogprob};
use crate::dataset::SyntheticSpec;
use crate::error::{Error, Result};
use crate::prompt::parse_serialized_row;
use crate::scalar::{sigmoid, softplus};

const RISK_ROW_START: &str = "\n\nInformation: ";
const RISK_ROW_END: &str = "\n\nQuestion: ";
const VERBALIZED_ROW_END: &str = " Provide your best guess and the probability";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceStyle {
    /// One decimal place, like a model that reports coarse probabilities.
    #[default]
    Rounded,
    Exact,
}

/// Fixed replies to task-level self-assessment prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockElicitation {
    pub direct_auc: String,
    pub integer_score: String,
    pub decimal_score: String,
}

impl Default for MockElicitation {
    fn default() -> Self {
        MockElicitation {
            direct_auc: "0.75".into(),
            integer_score: "4".into(),
            decimal_score: "0.7".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    /// Logistic weight per feature name; unlisted features are ignored.
    pub weights: BTreeMap<String, f64>,
    /// Per-feature centering value; features without an entry use `default_center`.
    #[serde(default)]
    pub centers: BTreeMap<String, f64>,
    #[serde(default = "half")]
    pub default_center: f64,
    pub logit_scale: f64,
    /// Additive shift applied in logit space.
    #[serde(default)]
    pub calibration_shift: f64,
    #[serde(default)]
    pub confidence_style: ConfidenceStyle,
    /// Distinguishes otherwise identical mocks in the model identifier, and
    /// therefore in the response cache.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub elicitation: MockElicitation,
}

fn half() -> f64 {
    0.5
}

impl MockProfile {
    /// A mock that knows the generating model of a synthetic dataset.
    pub fn from_synthetic(spec: &SyntheticSpec, calibration_shift: f64) -> Self {
        MockProfile {
            weights: spec
                .weights
                .iter()
                .enumerate()
                .map(|(j, &w)| (SyntheticSpec::feature_name(j), w))
                .collect(),
            centers: BTreeMap::new(),
            default_center: spec.feature_mean(),
            logit_scale: spec.logit_scale,
            calibration_shift,
            confidence_style: ConfidenceStyle::Rounded,
            seed: spec.seed,
            elicitation: MockElicitation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.logit_scale >= 0.0 && self.logit_scale.is_finite()) {
            return Err(Error::InvalidArgument("mock logit_scale must be >= 0".into()));
        }
        Ok(())
    }

    /// `mock-` plus a digest of the profile, so cached responses from
    /// different profiles never collide.
    pub fn model_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("profile serializes");
        format!("mock-{}", &hex::encode(Sha256::digest(bytes))[..16])
    }

    /// Logit for parsed `(name, rendered value)` pairs.
    pub fn logit(&self, features: &[(String, String)]) -> f64 {
        let centered: f64 = features
            .iter()
            .filter_map(|(name, value)| {
                let w = self.weights.get(name)?;
                let x: f64 = value.trim().parse().ok()?;
                let c = self.centers.get(name).copied().unwrap_or(self.default_center);
                Some(w * (x - c))
            })
            .sum();
        self.logit_scale * centered + self.calibration_shift
    }

    pub fn probability(&self, features: &[(String, String)]) -> f64 {
        sigmoid(self.logit(features))
    }
}

enum PromptKind<'a> {
    Risk(&'a str),
    Verbalized(&'a str),
    DirectAuc,
    IntegerScore,
    DecimalScore,
}

fn classify(user: &str) -> Option<PromptKind<'_>> {
    if let Some(end) = user.rfind(RISK_ROW_END) {
        if let Some(start) = user[..end].rfind(RISK_ROW_START) {
            return Some(PromptKind::Risk(&user[start + RISK_ROW_START.len()..end]));
        }
    }
    if let Some(end) = user.find(VERBALIZED_ROW_END) {
        return Some(PromptKind::Verbalized(&user[..end]));
    }
    if user.contains("1 (no confidence)") {
        Some(PromptKind::IntegerScore)
    } else if user.contains("0.0 (no confidence)") {
        Some(PromptKind::DecimalScore)
    } else if user.contains("AUC") {
        Some(PromptKind::DirectAuc)
    } else {
        None
    }
}

pub fn mock_complete(request: &CompletionRequest, profile: &MockProfile) -> Result<Completion> {
    profile.validate()?;
    let kind = classify(&request.messages.user).ok_or_else(|| {
        let head: String = request.messages.user.chars().take(60).collect();
        Error::UnparseablePrompt(head)
    })?;
    match kind {
        PromptKind::Risk(block) => {
            let z = profile.logit(&parse_serialized_row(block));
            let text = if z >= 0.0 { "A" } else { "B" };
            Completion::new(
                text.into(),
                vec![
                    TokenLogprob {
                        token: "A".into(),
                        logprob: -softplus(-z),
                    },
                    TokenLogprob {
                        token: "B".into(),
                        logprob: -softplus(z),
                    },
                ],
            )
        }
        PromptKind::Verbalized(block) => {
            let p = profile.probability(&parse_serialized_row(block));
            let guess = if p >= 0.5 { "A" } else { "B" };
            let conf = p.max(1.0 - p);
            let conf = match profile.confidence_style {
                ConfidenceStyle::Rounded => format!("{conf:.1}"),
                ConfidenceStyle::Exact => format!("{conf}"),
            };
            Completion::new(format!("Guess: {guess}\nProbability: {conf}"), Vec::new())
        }
        PromptKind::DirectAuc => Completion::new(profile.elicitation.direct_auc.clone(), Vec::new()),
        PromptKind::IntegerScore => {
            Completion::new(profile.elicitation.integer_score.clone(), Vec::new())
        }
        PromptKind::DecimalScore => {
            Completion::new(profile.elicitation.decimal_score.clone(), Vec::new())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptMessages;

    fn profile(scale: f64, shift: f64) -> MockProfile {
        MockProfile {
            weights: BTreeMap::from([("x1".to_string(), 1.0), ("x2".to_string(), -1.0)]),
            centers: BTreeMap::new(),
            default_center: 0.5,
            logit_scale: scale,
            calibration_shift: shift,
            confidence_style: ConfidenceStyle::Rounded,
            seed: 0,
            elicitation: MockElicitation::default(),
        }
    }

    fn risk(row: &str) -> CompletionRequest {
        CompletionRequest {
            model: "mock".into(),
            messages: PromptMessages {
                system: "Please respond with a single letter.".into(),
                user: format!("Some data.\n\nInformation: {row}\n\nQuestion: Positive?\nA. Yes\nB. No"),
            },
            temperature: 0.0,
            max_tokens: 8,
            top_logprobs: Some(20),
        }
    }

    fn lp(c: &Completion, tok: &str) -> f64 {
        c.first_token_logprobs.iter().find(|t| t.token == tok).unwrap().logprob
    }

    #[test]
    fn symmetric_case() {
        let c = mock_complete(&risk("x1: 0.9\nx2: 0.1"), &profile(0.0, 0.0)).unwrap();
        assert!((lp(&c, "A") - 0.5f64.ln()).abs() < 1e-15);
        assert!((lp(&c, "B") + 0.6931).abs() < 1e-4);
        assert_eq!(c.text, "A");
    }

    #[test]
    fn shift_only() {
        let c = mock_complete(&risk("x1: 0.3"), &profile(0.0, 1.0)).unwrap();
        assert!((lp(&c, "A").exp() - 0.7310585786300049).abs() < 1e-15);
    }

    #[test]
    fn large_scale_saturates() {
        let c = mock_complete(&risk("x1: 0.9\nx2: 0.5"), &profile(500.0, 0.0)).unwrap();
        assert_eq!(c.text, "A");
        assert!(lp(&c, "A") > -1e-12);
        assert!(lp(&c, "B").is_finite());
    }

    #[test]
    fn whitespace_outside_feature_block_is_ignored() {
        let p = profile(2.0, 0.3);
        let a = mock_complete(&risk("x1: 0.7\nx2: 0.2"), &p).unwrap();
        let mut r = risk("x1: 0.7\nx2: 0.2");
        r.messages.user = format!("  Other   text \n\n\n\nInformation: x1: 0.7\nx2: 0.2\n\nQuestion:  Q\nA. Y\nB. N ");
        let b = mock_complete(&r, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verbalized_and_elicitation() {
        let p = profile(0.0, 1.0);
        let mut r = risk("");
        r.messages.user = "x1: 0.4 Provide your best guess and the probability that it is correct".into();
        let c = mock_complete(&r, &p).unwrap();
        assert_eq!(c.text, "Guess: A\nProbability: 0.7");
        r.messages.user = "rate between 1 (no confidence) and 5".into();
        assert_eq!(mock_complete(&r, &p).unwrap().text, "4");
        r.messages.user = "nothing recognisable".into();
        assert!(matches!(mock_complete(&r, &p), Err(Error::UnparseablePrompt(_))));
    }

    #[test]
    fn model_id_depends_on_profile() {
        assert_eq!(profile(1.0, 0.0).model_id(), profile(1.0, 0.0).model_id());
        assert_ne!(profile(1.0, 0.0).model_id(), profile(1.0, 0.5).model_id());
    }
}
