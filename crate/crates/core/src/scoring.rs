//! Turning completions into per-row risk scores and confidences, and
//! scoring whole tasks through the gateway.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetProfile;
use crate::error::{Error, Result};
use crate::gateway::{
    Completion, CompletionRequest, Gateway, DEFAULT_TOP_LOGPROBS, ELICITATION_MAX_TOKENS,
    RISK_MAX_TOKENS, VERBALIZED_MAX_TOKENS,
};
use crate::prompt::{ElicitationMode, PromptMessages, PromptTemplates};
use crate::tasks::{LabeledTask, TaskSpec};

/// Gap below the lowest listed logprob assigned to an absent option token.
pub const MISSING_OPTION_PENALTY: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    pub row_index: usize,
    /// Probability of the positive class.
    pub risk_score: f64,
    /// Stated probability that the model's own guess is correct.
    pub verbalized_confidence: Option<f64>,
    /// `risk_score >= 0.5`.
    pub predicted_label: bool,
    pub true_label: Option<bool>,
    /// Cache entry of the risk completion.
    pub cache_key: String,
}

impl RowPrediction {
    pub fn new(row_index: usize, risk_score: f64, true_label: Option<bool>) -> Self {
        RowPrediction {
            row_index,
            risk_score,
            verbalized_confidence: None,
            predicted_label: risk_score >= 0.5,
            true_label,
            cache_key: String::new(),
        }
    }

    /// Maximum class probability.
    pub fn mcp(&self) -> f64 {
        self.risk_score.max(1.0 - self.risk_score)
    }

    pub fn is_correct(&self) -> Option<bool> {
        self.true_label.map(|t| t == self.predicted_label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElicitedScores {
    pub direct_auc: Option<f64>,
    /// Raw 1..=5 rating.
    pub integer_score: Option<u8>,
    pub decimal_score: Option<f64>,
}

impl ElicitedScores {
    /// Integer rating mapped onto [0, 1] as `(v - 1) / 4`.
    pub fn integer_normalized(&self) -> Option<f64> {
        self.integer_score.map(|v| f64::from(v - 1) / 4.0)
    }
}

/// A row or task left out of the metrics, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub task_id: String,
    pub row_index: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResponses {
    pub spec: TaskSpec,
    pub predictions: Vec<RowPrediction>,
    pub elicited: Option<ElicitedScores>,
    pub exclusions: Vec<Exclusion>,
}

impl TaskResponses {
    pub fn risk_scores(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.risk_score).collect()
    }

    /// Labels of all predictions, if every prediction carries one.
    pub fn true_labels(&self) -> Option<Vec<bool>> {
        self.predictions.iter().map(|p| p.true_label).collect()
    }
}

fn matches_option(token: &str, option: &str) -> bool {
    let t = token.trim();
    t == option || t.strip_suffix('.') == Some(option)
}

/// Two-way softmax over the option tokens' first-token logprobs.
pub fn extract_risk_score(completion: &Completion, positive_token: &str, negative_token: &str) -> Result<f64> {
    let lookup = |option: &str| {
        completion
            .first_token_logprobs
            .iter()
            .filter(|t| matches_option(&t.token, option))
            .map(|t| t.logprob)
            .reduce(f64::max)
    };
    let floor = || {
        completion
            .first_token_logprobs
            .iter()
            .map(|t| t.logprob)
            .reduce(f64::min)
            .map(|m| m - MISSING_OPTION_PENALTY)
    };
    let (pos, neg) = match (lookup(positive_token), lookup(negative_token)) {
        (None, None) => return Err(Error::BothOptionsMissing),
        (Some(p), None) => (p, floor().unwrap_or(p - MISSING_OPTION_PENALTY)),
        (None, Some(n)) => (floor().unwrap_or(n - MISSING_OPTION_PENALTY), n),
        (Some(p), Some(n)) => (p, n),
    };
    if !(pos.is_finite() || neg.is_finite()) {
        return Err(Error::MalformedResponse("option logprobs are not finite".into()));
    }
    let m = pos.max(neg);
    let a = (pos - m).exp();
    let b = (neg - m).exp();
    Ok(a / (a + b))
}

/// Value of the last `Probability: <decimal>` line, which must lie in [0, 1].
pub fn parse_verbalized_confidence(text: &str) -> Result<f64> {
    let value = text
        .lines()
        .rev()
        .find_map(|line| {
            let line = line.trim();
            let (head, rest) = line.split_at_checked("probability:".len())?;
            if !head.eq_ignore_ascii_case("probability:") {
                return None;
            }
            let (num, _) = leading_number(rest.trim_start())?;
            Some(num)
        })
        .ok_or_else(|| Error::ParseFailure(format!("no probability in {text:?}")))?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange(value))
    }
}

/// Decimal at the very start of `s`; returns it and whether it had a
/// fractional part.
fn leading_number(s: &str) -> Option<(f64, bool)> {
    let bytes = s.as_bytes();
    let mut end = 0;
    if matches!(bytes.first(), Some(b'-') | Some(b'+')) {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    let mut fractional = false;
    if end < bytes.len() && bytes[end] == b'.' {
        let mut j = end + 1;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > end + 1 {
            fractional = true;
            end = j;
        }
    }
    if end == digits_start {
        return None;
    }
    s[..end].parse().ok().map(|v| (v, fractional))
}

fn first_number(text: &str) -> Option<(f64, bool)> {
    text.char_indices().find_map(|(i, c)| {
        let starts = c.is_ascii_digit()
            || ((c == '-' || c == '.') && text[i + 1..].starts_with(|d: char| d.is_ascii_digit()));
        if !starts {
            return None;
        }
        if c == '.' {
            return leading_number(&format!("0{}", &text[i..]));
        }
        leading_number(&text[i..])
    })
}

/// A parsed task-level self-assessment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElicitedScore {
    /// On [0, 1]; integer ratings are mapped by `(v - 1) / 4`.
    pub normalized: f64,
    pub raw: f64,
}

pub fn parse_elicited_score(text: &str, mode: ElicitationMode) -> Result<ElicitedScore> {
    let (raw, fractional) =
        first_number(text).ok_or_else(|| Error::ParseFailure(format!("no number in {text:?}")))?;
    match mode {
        ElicitationMode::IntegerScore => {
            if fractional && raw.fract() != 0.0 {
                return Err(Error::ParseFailure(format!("{raw} is not an integer rating")));
            }
            if !(1.0..=5.0).contains(&raw) {
                return Err(Error::OutOfRange(raw));
            }
            Ok(ElicitedScore {
                normalized: (raw - 1.0) / 4.0,
                raw,
            })
        }
        ElicitationMode::DirectAuc | ElicitationMode::DecimalScore => {
            if !(0.0..=1.0).contains(&raw) {
                return Err(Error::OutOfRange(raw));
            }
            Ok(ElicitedScore { normalized: raw, raw })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub collect_verbalized: bool,
    pub collect_elicited: bool,
    pub temperature: f64,
    pub top_logprobs: u32,
    pub positive_token: String,
    pub negative_token: String,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            collect_verbalized: true,
            collect_elicited: true,
            temperature: 0.0,
            top_logprobs: DEFAULT_TOP_LOGPROBS,
            positive_token: "A".into(),
            negative_token: "B".into(),
        }
    }
}

impl ScoringOptions {
    fn request(&self, model: &str, messages: PromptMessages, max_tokens: u32, logprobs: bool) -> CompletionRequest {
        CompletionRequest {
            model: model.to_string(),
            messages,
            temperature: self.temperature,
            max_tokens,
            top_logprobs: logprobs.then_some(self.top_logprobs),
        }
    }
}

enum RowOutcome {
    Scored(RowPrediction),
    Excluded(Exclusion),
}

/// Scores every row of a task (risk prompt, plus verbalized prompt when
/// enabled) and, when enabled, asks the three task-level questions.
///
/// Rows run concurrently up to the gateway's in-flight limit and are
/// reassembled in row order. Rows whose risk score cannot be extracted are
/// excluded; verbalized parse failures only leave the confidence unset.
pub fn score_task(
    task: &LabeledTask,
    dataset: &DatasetProfile,
    gateway: &Gateway,
    templates: &PromptTemplates,
    options: &ScoringOptions,
) -> Result<TaskResponses> {
    if task.is_empty() {
        return Err(Error::EmptyInput);
    }
    let model = gateway.model();
    let spec = &task.spec;

    let score_row = |pos: usize| -> Result<RowOutcome> {
        let row_index = task.rows[pos];
        let row = dataset.table.row(row_index);
        let messages = templates.render_risk(spec, row)?;
        let (completion, key) =
            gateway.complete_keyed(&options.request(&model, messages, RISK_MAX_TOKENS, true))?;
        let risk = match extract_risk_score(&completion, &options.positive_token, &options.negative_token) {
            Ok(r) => r,
            Err(e @ (Error::BothOptionsMissing | Error::MalformedResponse(_))) => {
                return Ok(RowOutcome::Excluded(Exclusion {
                    task_id: spec.task_id.clone(),
                    row_index: Some(row_index),
                    reason: e.to_string(),
                }))
            }
            Err(e) => return Err(e),
        };
        let mut prediction = RowPrediction::new(row_index, risk, task.label(pos));
        prediction.cache_key = key;
        if options.collect_verbalized {
            let messages = templates.render_verbalized(spec, row)?;
            let completion =
                gateway.complete(&options.request(&model, messages, VERBALIZED_MAX_TOKENS, false))?;
            prediction.verbalized_confidence = match parse_verbalized_confidence(&completion.text) {
                Ok(c) => Some(c),
                Err(e) => {
                    warn!("{} row {row_index}: verbalized confidence unusable: {e}", spec.task_id);
                    None
                }
            };
        }
        Ok(RowOutcome::Scored(prediction))
    };

    let n = task.len();
    let workers = gateway.max_in_flight().min(n).max(1);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let mut outcomes: Vec<(usize, Result<RowOutcome>)> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    while !abort.load(Ordering::Relaxed) {
                        let pos = next.fetch_add(1, Ordering::Relaxed);
                        if pos >= n {
                            break;
                        }
                        let outcome = score_row(pos);
                        if outcome.is_err() {
                            abort.store(true, Ordering::Relaxed);
                        }
                        local.push((pos, outcome));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("scoring worker panicked"))
            .collect()
    });
    outcomes.sort_by_key(|(pos, _)| *pos);

    let mut predictions = Vec::with_capacity(n);
    let mut exclusions = Vec::new();
    for (_, outcome) in outcomes {
        match outcome? {
            RowOutcome::Scored(p) => predictions.push(p),
            RowOutcome::Excluded(x) => exclusions.push(x),
        }
    }
    if predictions.is_empty() {
        return Err(Error::TaskEmpty(spec.task_id.clone()));
    }

    let elicited = if options.collect_elicited {
        let mut scores = ElicitedScores::default();
        for mode in ElicitationMode::ALL {
            let messages = templates.render_elicitation(spec, mode)?;
            let completion =
                gateway.complete(&options.request(&model, messages, ELICITATION_MAX_TOKENS, false))?;
            match parse_elicited_score(&completion.text, mode) {
                Ok(s) => match mode {
                    ElicitationMode::DirectAuc => scores.direct_auc = Some(s.normalized),
                    ElicitationMode::IntegerScore => scores.integer_score = Some(s.raw as u8),
                    ElicitationMode::DecimalScore => scores.decimal_score = Some(s.normalized),
                },
                Err(e) => warn!("{}: {mode:?} self-assessment unusable: {e}", spec.task_id),
            }
        }
        Some(scores)
    } else {
        None
    };

    Ok(TaskResponses {
        spec: spec.clone(),
        predictions,
        elicited,
        exclusions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::TokenLogprob;

    fn completion(pairs: &[(&str, f64)]) -> Completion {
        Completion::new(
            "A".into(),
            pairs
                .iter()
                .map(|(t, lp)| TokenLogprob {
                    token: t.to_string(),
                    logprob: *lp,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_term_softmax() {
        // exp(-0.1) / (exp(-0.1) + exp(-2.3)) = 1 / (1 + exp(-2.2))
        let expected = 1.0 / (1.0 + (-2.2f64).exp());
        let r = extract_risk_score(&completion(&[("A", -0.1), ("B", -2.3)]), "A", "B").unwrap();
        assert!((r - expected).abs() < 1e-15);
        assert!((r - 0.9002).abs() < 5e-5);
        let r = extract_risk_score(&completion(&[("A", -0.7), ("B", -0.7)]), "A", "B").unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn option_token_variants() {
        let r = extract_risk_score(&completion(&[(" A", -0.1), ("B.", -2.3)]), "A", "B").unwrap();
        assert!(r > 0.9);
        let r = extract_risk_score(&completion(&[("a", -0.1), ("B", -2.3)]), "A", "B").unwrap();
        assert!(r < 0.5, "matching is case-sensitive, so A is floored");
    }

    #[test]
    fn missing_option_is_floored() {
        let c = completion(&[("A", -0.05), ("The", -3.0)]);
        let r = extract_risk_score(&c, "A", "B").unwrap();
        let expected = 1.0 / (1.0 + (-13.0f64 + 0.05).exp());
        assert!((r - expected).abs() < 1e-15);
        assert!(matches!(
            extract_risk_score(&completion(&[("C", -0.1), ("D", -1.0)]), "A", "B"),
            Err(Error::BothOptionsMissing)
        ));
    }

    #[test]
    fn verbalized_parsing() {
        assert_eq!(parse_verbalized_confidence("Guess: A\nProbability: 0.8").unwrap(), 0.8);
        assert!(matches!(parse_verbalized_confidence("Probability: 1.3"), Err(Error::OutOfRange(_))));
        assert!(matches!(
            parse_verbalized_confidence("I think the answer is A."),
            Err(Error::ParseFailure(_))
        ));
        assert_eq!(
            parse_verbalized_confidence("Probability: 0.2\nProbability: 0.9 (final)").unwrap(),
            0.9
        );
    }

    #[test]
    fn elicited_parsing() {
        let s = parse_elicited_score("4", ElicitationMode::IntegerScore).unwrap();
        assert_eq!((s.raw, s.normalized), (4.0, 0.75));
        let s = parse_elicited_score("0.82", ElicitationMode::DirectAuc).unwrap();
        assert_eq!(s.normalized, 0.82);
        assert!(matches!(
            parse_elicited_score("6", ElicitationMode::IntegerScore),
            Err(Error::OutOfRange(_))
        ));
        assert!(parse_elicited_score("3.5", ElicitationMode::IntegerScore).is_err());
        assert_eq!(
            parse_elicited_score("My answer: .7", ElicitationMode::DecimalScore).unwrap().raw,
            0.7
        );
        assert!(matches!(
            parse_elicited_score("none", ElicitationMode::DecimalScore),
            Err(Error::ParseFailure(_))
        ));
    }

    #[test]
    fn prediction_tie_maps_to_positive() {
        let p = RowPrediction::new(0, 0.5, Some(false));
        assert!(p.predicted_label);
        assert_eq!(p.is_correct(), Some(false));
        assert_eq!(p.mcp(), 0.5);
    }
}
