use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::EvaluationSample;
use crate::pipeline::{Action, TriageOutcome};
use crate::text::{key_error_token, normalize};

/// Whether a generated summary would be accepted in place of the labeled
/// one: the label's key error token must appear in it, compared after
/// normalization. Labels without such a token need a normalized exact match.
pub fn summary_matches_label(generated: &str, label: &str) -> bool {
    let generated = normalize(generated);
    match key_error_token(label) {
        Some(token) => generated.contains(&normalize(token)),
        None => generated == normalize(label),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub label_is_bug: bool,
    pub predicted_is_bug: Option<bool>,
    pub ticket_posted: bool,
    pub ticket_clean: bool,
    pub chosen_index: Option<usize>,
    pub root_correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when there are no labeled bugs.
    pub recall: Option<f64>,
    /// `None` when no tickets were posted.
    pub precision: Option<f64>,
    pub bugs_total: usize,
    pub bugs_identified: usize,
    pub tickets_posted: usize,
    pub tickets_clean: usize,
    pub root_accuracy: Option<f64>,
    pub root_scored: usize,
    pub root_correct: usize,
    pub per_sample: Vec<SampleScore>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn by_id(outcomes: &[TriageOutcome]) -> BTreeMap<&str, &TriageOutcome> {
    outcomes
        .iter()
        .map(|o| (o.failure_id.as_str(), o))
        .collect()
}

fn score_samples(outcomes: &[TriageOutcome], samples: &[EvaluationSample]) -> Vec<SampleScore> {
    let index = by_id(outcomes);
    let mut ordered: Vec<&EvaluationSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let mut ticketed_groups = BTreeSet::new();
    let mut scores: Vec<SampleScore> = ordered
        .iter()
        .map(|sample| {
            let outcome = index.get(sample.sample_id.as_str()).copied();
            let predicted_is_bug = outcome.and_then(|o| o.is_bug());
            let ticket_posted =
                outcome.is_some_and(|o| matches!(o.action, Action::TicketFiled { .. }));
            let ticket_clean = ticket_posted && {
                let summary_ok = outcome
                    .and_then(|o| o.summary.as_ref())
                    .is_some_and(|s| summary_matches_label(&s.summary, &sample.summ));
                // a second ticket for the same defect is a missed duplicate
                let first_of_group = match &sample.duplicate_group {
                    Some(g) => ticketed_groups.insert(g.clone()),
                    None => true,
                };
                sample.is_bug && summary_ok && first_of_group
            };
            if ticket_posted {
                if let Some(g) = &sample.duplicate_group {
                    ticketed_groups.insert(g.clone());
                }
            }
            let chosen_index = outcome
                .and_then(|o| o.root_cause.as_ref())
                .map(|r| r.chosen_index);
            let root_correct = match outcome {
                Some(o) if o.digest_size > 0 && !sample.root_err_idx.is_empty() => {
                    Some(chosen_index.is_some_and(|i| sample.root_err_idx.contains(&i)))
                }
                _ => None,
            };
            SampleScore {
                sample_id: sample.sample_id.clone(),
                label_is_bug: sample.is_bug,
                predicted_is_bug,
                ticket_posted,
                ticket_clean,
                chosen_index,
                root_correct,
            }
        })
        .collect();
    scores.shrink_to_fit();
    scores
}

pub fn evaluate(outcomes: &[TriageOutcome], samples: &[EvaluationSample]) -> MetricsReport {
    let per_sample = score_samples(outcomes, samples);
    let bugs_total = per_sample.iter().filter(|s| s.label_is_bug).count();
    let bugs_identified = per_sample
        .iter()
        .filter(|s| s.label_is_bug && s.predicted_is_bug == Some(true))
        .count();
    let tickets_posted = per_sample.iter().filter(|s| s.ticket_posted).count();
    let tickets_clean = per_sample.iter().filter(|s| s.ticket_clean).count();
    let root_scored = per_sample
        .iter()
        .filter(|s| s.root_correct.is_some())
        .count();
    let root_correct = per_sample
        .iter()
        .filter(|s| s.root_correct == Some(true))
        .count();
    MetricsReport {
        recall: ratio(bugs_identified, bugs_total),
        precision: ratio(tickets_clean, tickets_posted),
        bugs_total,
        bugs_identified,
        tickets_posted,
        tickets_clean,
        root_accuracy: ratio(root_correct, root_scored),
        root_scored,
        root_correct,
        per_sample,
    }
}

/// Bugs identified over all labeled bugs.
pub fn compute_recall(outcomes: &[TriageOutcome], samples: &[EvaluationSample]) -> Option<f64> {
    evaluate(outcomes, samples).recall
}

/// Clean tickets over posted tickets.
pub fn compute_precision(outcomes: &[TriageOutcome], samples: &[EvaluationSample]) -> Option<f64> {
    evaluate(outcomes, samples).precision
}

/// Share of analyzed samples whose chosen root index is in the label list.
pub fn score_root_accuracy(
    outcomes: &[TriageOutcome],
    samples: &[EvaluationSample],
) -> Option<f64> {
    evaluate(outcomes, samples).root_accuracy
}
