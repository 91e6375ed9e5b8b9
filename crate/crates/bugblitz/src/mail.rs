//! Email notifications over SMTP.

use std::time::Duration;

use bugblitz_core::{DeliveryStatus, Notification};
use lettre::message::{header::ContentType, Mailbox};
use lettre::transport::smtp::client::{Tls, TlsParameters};
use lettre::{Message, SmtpTransport, Transport};

use crate::config::MailConfig;

pub struct Mailer {
    config: MailConfig,
}

impl Mailer {
    pub fn new(config: MailConfig) -> Self {
        Self { config }
    }

    pub fn recipients(&self) -> &[String] {
        &self.config.recipients
    }

    fn transport(&self) -> Result<SmtpTransport, String> {
        let mut builder = SmtpTransport::builder_dangerous(&self.config.relay_host)
            .port(self.config.relay_port)
            .timeout(Some(Duration::from_millis(self.config.timeout_ms)));
        if self.config.starttls {
            let tls =
                TlsParameters::new(self.config.relay_host.clone()).map_err(|e| e.to_string())?;
            builder = builder.tls(Tls::Required(tls));
        }
        Ok(builder.build())
    }

    fn message(&self, n: &Notification) -> Result<Message, String> {
        let from: Mailbox = self.config.from.parse().map_err(|e| format!("from: {e}"))?;
        let mut builder = Message::builder()
            .from(from)
            .subject(n.subject.clone())
            .header(ContentType::TEXT_PLAIN);
        for r in &n.recipients {
            let to: Mailbox = r.parse().map_err(|e| format!("{r}: {e}"))?;
            builder = builder.to(to);
        }
        builder.body(n.body.clone()).map_err(|e| e.to_string())
    }

    /// Validates then sends, retrying relay failures. Never panics and
    /// never returns an error: the outcome is the delivery status.
    pub fn send(&self, n: &Notification) -> DeliveryStatus {
        if let Err(e) = n.validate() {
            return DeliveryStatus::Failed {
                attempts: 0,
                reason: e.to_string(),
            };
        }
        let (transport, message) = match self.transport().and_then(|t| Ok((t, self.message(n)?))) {
            Ok(pair) => pair,
            Err(reason) => {
                return DeliveryStatus::Failed {
                    attempts: 0,
                    reason,
                }
            }
        };
        let attempts = self.config.retries + 1;
        let mut reason = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                let factor = 1u64 << (attempt - 2).min(16);
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms * factor));
            }
            match transport.send(&message) {
                Ok(_) => return DeliveryStatus::Delivered { attempts: attempt },
                Err(e) => reason = e.to_string(),
            }
        }
        DeliveryStatus::Failed { attempts, reason }
    }
}
