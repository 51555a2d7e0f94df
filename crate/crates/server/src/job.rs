//! Background fitting jobs.

use boom_core::report::FitReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobKind {
    Fit,
    Simulate,
}

/// Ordered so that a job only ever moves to a greater status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub session_id: String,
    /// Index of the log entry the job appended.
    pub iteration: usize,
    pub report: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub session_id: String,
    pub status: JobStatus,
    /// Completed sampler iterations over the requested total.
    pub progress: f64,
    pub result: Option<JobResult>,
    pub error: Option<String>,
}

impl Job {
    pub fn queued(id: String, kind: JobKind, session_id: String) -> Self {
        Self {
            id,
            kind,
            session_id,
            status: JobStatus::Queued,
            progress: 0.0,
            result: None,
            error: None,
        }
    }

    /// Moves to `status` if that is a forward transition.
    pub fn advance(&mut self, status: JobStatus) -> bool {
        if status > self.status && !self.status.is_finished() {
            self.status = status;
            true
        } else {
            false
        }
    }

    pub fn set_progress(&mut self, fraction: f64) {
        self.progress = self.progress.max(fraction.clamp(0.0, 1.0));
    }

    pub fn finish(&mut self, result: Result<JobResult, String>) {
        match result {
            Ok(r) => {
                self.advance(JobStatus::Done);
                self.progress = 1.0;
                self.result = Some(r);
            }
            Err(e) => {
                self.advance(JobStatus::Failed);
                self.error = Some(e);
            }
        }
    }
}
