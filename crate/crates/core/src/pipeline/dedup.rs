use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{BugSummary, DuplicateCluster};
use crate::action::{OpenReport, TicketRef};
use crate::backend::{ChatBackend, ModelProfile};
use crate::template::PromptTemplate;
use crate::text::normalize;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupOutcome {
    /// Ordered by representative failure id.
    pub clusters: Vec<DuplicateCluster>,
    pub warnings: Vec<String>,
    pub model_calls: usize,
}

/// The last standalone `yes`/`no` word, case-insensitive.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    text.split(|c: char| !c.is_alphanumeric())
        .rev()
        .find_map(|w| {
            if w.eq_ignore_ascii_case("yes") {
                Some(true)
            } else if w.eq_ignore_ascii_case("no") {
                Some(false)
            } else {
                None
            }
        })
}

fn exact_key(summary: &str, description: &str) -> String {
    format!("{}\n{}", normalize(summary), normalize(description))
}

struct Comparer<'a, B: ?Sized> {
    backend: &'a B,
    profile: &'a ModelProfile,
    template: &'a PromptTemplate,
    calls: usize,
    warnings: Vec<String>,
}

impl<B: ChatBackend + ?Sized> Comparer<'_, B> {
    // Any failure to get a clear YES counts as NO.
    fn same(&mut self, existing: (&str, &str), new: &BugSummary, label: &str) -> bool {
        let messages = match self.template.render(&[
            ("summary_a", existing.0),
            ("description_a", existing.1),
            ("summary_b", &new.summary),
            ("description_b", &new.description),
        ]) {
            Ok(m) => m,
            Err(e) => {
                self.warnings.push(format!("duplicate check {label}: {e}"));
                return false;
            }
        };
        self.calls += 1;
        match self.backend.complete(&messages, self.profile) {
            Ok(c) => match parse_yes_no(&c.text) {
                Some(answer) => answer,
                None => {
                    self.warnings.push(format!(
                        "duplicate check {label}: no YES/NO in answer, treated as NO"
                    ));
                    false
                }
            },
            Err(e) => {
                self.warnings.push(format!(
                    "duplicate check {label} failed, treated as NO: {e}"
                ));
                false
            }
        }
    }
}

struct Building<'a> {
    representative: &'a BugSummary,
    members: Vec<String>,
    matched_existing: Option<TicketRef>,
}

/// Groups the bug summaries of one request into duplicate clusters.
///
/// Identical summaries (after normalization) merge without model calls.
/// Every other group is compared, in ascending failure-id order, against
/// each existing cluster representative and then each open report; the
/// first YES wins.
pub fn detect_duplicates<B: ChatBackend + ?Sized>(
    summaries: &[BugSummary],
    open_reports: &[OpenReport],
    backend: &B,
    profile: &ModelProfile,
    template: &PromptTemplate,
) -> DedupOutcome {
    let mut sorted: Vec<&BugSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| a.failure_id.cmp(&b.failure_id));

    let mut groups: Vec<Vec<&BugSummary>> = Vec::new();
    let mut by_key: BTreeMap<String, usize> = BTreeMap::new();
    for s in sorted {
        let key = exact_key(&s.summary, &s.description);
        match by_key.get(&key) {
            Some(&g) => groups[g].push(s),
            None => {
                by_key.insert(key, groups.len());
                groups.push(alloc::vec![s]);
            }
        }
    }

    let open: Vec<&OpenReport> = open_reports.iter().filter(|r| r.is_open()).collect();
    let open_keys: Vec<String> = open
        .iter()
        .map(|r| exact_key(&r.summary, &r.description))
        .collect();

    let mut cmp = Comparer {
        backend,
        profile,
        template,
        calls: 0,
        warnings: Vec::new(),
    };
    let mut clusters: Vec<Building> = Vec::new();

    for group in groups {
        let head = group[0];
        let ids = group.iter().map(|s| s.failure_id.clone());

        let joined = clusters.iter().position(|c| {
            let rep = c.representative;
            let label = format!("{} vs {}", head.failure_id, rep.failure_id);
            cmp.same((&rep.summary, &rep.description), head, &label)
        });
        if let Some(i) = joined {
            clusters[i].members.extend(ids);
            continue;
        }

        let head_key = exact_key(&head.summary, &head.description);
        let matched = open.iter().zip(&open_keys).find_map(|(report, key)| {
            let label = format!("{} vs {}", head.failure_id, report.ticket.tracker_key);
            let same =
                *key == head_key || cmp.same((&report.summary, &report.description), head, &label);
            same.then(|| report.ticket.clone())
        });
        clusters.push(Building {
            representative: head,
            members: ids.collect(),
            matched_existing: matched,
        });
    }

    let clusters = clusters
        .into_iter()
        .map(|mut c| {
            c.members.sort();
            DuplicateCluster {
                representative: c.representative.failure_id.clone(),
                members: c.members,
                matched_existing: c.matched_existing,
            }
        })
        .collect();
    DedupOutcome {
        clusters,
        warnings: cmp.warnings,
        model_calls: cmp.calls,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ReportStatus;
    use crate::backend::{BackendError, ChatMessage, CompletionResult, Profiles, Submodule};
    use crate::mock::{MockBackend, MockReply, MockRule};
    use crate::prompts;
    use alloc::vec;

    fn run(mock: &MockBackend, s: &[BugSummary], open: &[OpenReport]) -> DedupOutcome {
        let p = Profiles::defaults("mock://");
        detect_duplicates(
            s,
            open,
            mock,
            &p.duplicate_detection,
            &prompts::duplicate_template(),
        )
    }

    fn ticket(key: &str) -> TicketRef {
        TicketRef {
            tracker_key: key.into(),
            url: format!("https://tracker.example/browse/{key}"),
            created_at: "2026-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("YES"), Some(true));
        assert_eq!(parse_yes_no("They differ. NO."), Some(false));
        assert_eq!(parse_yes_no("no... actually yes"), Some(true));
        assert_eq!(parse_yes_no("nope, yesterday"), None);
    }

    #[test]
    fn identical_summaries_merge_without_calls() {
        let a = BugSummary::new("a", "TypeError in Add", "TypeError: x");
        let b = BugSummary::new("b", "typeerror  in add", "TypeError:  x");
        let out = run(&MockBackend::default(), &[b, a], &[]);
        assert_eq!(out.model_calls, 0);
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].representative, "a");
        assert_eq!(out.clusters[0].members, ["a", "b"]);
    }

    #[test]
    fn model_yes_merges() {
        let mock = MockBackend::new(vec![MockRule::new(
            Submodule::DuplicateDetection,
            "TypeError",
            MockReply::Duplicate,
        )]);
        let out = run(
            &mock,
            &[
                BugSummary::new("B", "TypeError in Mul", "TypeError: mul"),
                BugSummary::new("A", "TypeError in Add", "TypeError: add"),
            ],
            &[],
        );
        assert_eq!(out.model_calls, 1);
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].representative, "A");
        assert_eq!(out.clusters[0].members, ["A", "B"]);
    }

    #[test]
    fn open_report_match() {
        let mock = MockBackend::new(vec![MockRule::new(
            Submodule::DuplicateDetection,
            "KeyError",
            MockReply::Duplicate,
        )]);
        let open = vec![
            OpenReport {
                ticket: ticket("OLD-1"),
                summary: "KeyError in config".into(),
                description: "KeyError: 'device'".into(),
                status: ReportStatus::Resolved,
            },
            OpenReport {
                ticket: ticket("OLD-2"),
                summary: "KeyError in config".into(),
                description: "KeyError: 'device'".into(),
                status: ReportStatus::Open,
            },
        ];
        let out = run(
            &mock,
            &[BugSummary::new(
                "n",
                "KeyError on lookup",
                "KeyError: 'device' missing",
            )],
            &open,
        );
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(
            out.clusters[0]
                .matched_existing
                .as_ref()
                .unwrap()
                .tracker_key,
            "OLD-2"
        );
        assert_eq!(out.model_calls, 1);
    }

    struct Failing;

    impl ChatBackend for Failing {
        fn complete(
            &self,
            _m: &[ChatMessage],
            _p: &ModelProfile,
        ) -> Result<CompletionResult, BackendError> {
            Err(BackendError::Status {
                status: 500,
                body: "boom".into(),
            })
        }
    }

    #[test]
    fn backend_failure_is_no_with_warning() {
        let p = Profiles::defaults("mock://");
        let out = detect_duplicates(
            &[
                BugSummary::new("a", "x one", "d1"),
                BugSummary::new("b", "x two", "d2"),
            ],
            &[],
            &Failing,
            &p.duplicate_detection,
            &prompts::duplicate_template(),
        );
        assert_eq!(out.clusters.len(), 2);
        assert_eq!(out.warnings.len(), 1);
    }
}
