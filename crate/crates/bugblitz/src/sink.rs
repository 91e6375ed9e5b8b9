use bugblitz_core::action::NotificationDraft;
use bugblitz_core::{
    ActionError, ActionSink, BugSummary, DeliveryStatus, OpenReport, TicketFiling,
};

use crate::mail::Mailer;
use crate::store::RegistryStore;
use crate::tracker::TrackerClient;

/// Files tickets through the tracker, records them in the registry and
/// mails notifications. Holds the registry exclusively for its lifetime,
/// which serializes dedup and filing across concurrent requests.
pub struct LiveSink<'a> {
    pub store: &'a mut RegistryStore,
    pub tracker: Option<&'a TrackerClient>,
    pub mailer: Option<&'a Mailer>,
}

impl ActionSink for LiveSink<'_> {
    fn open_reports(&self) -> Vec<OpenReport> {
        self.store.open_reports()
    }

    fn file_ticket(&mut self, summary: &BugSummary) -> Result<TicketFiling, ActionError> {
        let tracker = self.tracker.ok_or(ActionError::NotConfigured)?;
        let ticket = tracker.create_issue(summary)?;
        let registry_warning = self
            .store
            .record_opened(OpenReport::open(ticket.clone(), summary))
            .err()
            .map(|e| {
                format!(
                    "ticket {} was created but the registry could not record it: {e}",
                    ticket.tracker_key
                )
            });
        Ok(TicketFiling {
            ticket,
            registry_warning,
        })
    }

    fn notify(&mut self, draft: &NotificationDraft) -> DeliveryStatus {
        match self.mailer {
            Some(m) => m.send(&draft.addressed_to(m.recipients().to_vec())),
            None => DeliveryStatus::Skipped {
                reason: "mail is not configured".into(),
            },
        }
    }
}
