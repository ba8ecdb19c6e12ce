use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Semaphore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Analyze,
    Render,
    Suggest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub kind: JobKind,
    pub project_id: String,
    pub state: JobState,
    /// Completed fraction; never decreases.
    pub progress: f64,
    pub error: Option<String>,
    pub result: Option<Value>,
}

pub type Progress = Arc<dyn Fn(f64) + Send + Sync>;

/// Background jobs run on a bounded pool of blocking workers.
pub struct JobRegistry {
    jobs: RwLock<HashMap<String, JobStatus>>,
    permits: Arc<Semaphore>,
    next: AtomicU64,
}

impl JobRegistry {
    pub const DEFAULT_WORKERS: usize = 2;

    pub fn new(workers: usize) -> Self {
        Self {
            jobs: RwLock::new(HashMap::new()),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            next: AtomicU64::new(1),
        }
    }

    pub fn get(&self, id: &str) -> Option<JobStatus> {
        self.jobs.read().expect("jobs lock").get(id).cloned()
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobStatus)) {
        if let Some(j) = self.jobs.write().expect("jobs lock").get_mut(id) {
            f(j);
        }
    }

    fn set_progress(&self, id: &str, p: f64) {
        self.update(id, |j| {
            if j.state == JobState::Running && p > j.progress {
                j.progress = p.min(1.0);
            }
        });
    }

    /// Queues `work`; it runs once a worker is free. Must be called from
    /// within a tokio runtime.
    pub fn submit<F>(self: &Arc<Self>, kind: JobKind, project_id: &str, work: F) -> JobStatus
    where
        F: FnOnce(Progress) -> Result<Value, String> + Send + 'static,
    {
        let id = format!("j{}", self.next.fetch_add(1, Ordering::SeqCst));
        let status = JobStatus {
            id: id.clone(),
            kind,
            project_id: project_id.to_owned(),
            state: JobState::Queued,
            progress: 0.0,
            error: None,
            result: None,
        };
        self.jobs.write().expect("jobs lock").insert(id.clone(), status.clone());
        let reg = Arc::clone(self);
        tokio::spawn(async move {
            let _permit = reg.permits.clone().acquire_owned().await.expect("semaphore is never closed");
            reg.update(&id, |j| j.state = JobState::Running);
            let progress: Progress = {
                let reg = Arc::clone(&reg);
                let id = id.clone();
                Arc::new(move |p| reg.set_progress(&id, p))
            };
            let outcome = tokio::task::spawn_blocking(move || work(progress)).await;
            reg.update(&id, |j| match outcome {
                Ok(Ok(v)) => {
                    j.state = JobState::Done;
                    j.progress = 1.0;
                    j.result = Some(v);
                }
                Ok(Err(e)) => {
                    j.state = JobState::Failed;
                    j.error = Some(e);
                }
                Err(e) => {
                    j.state = JobState::Failed;
                    j.error = Some(format!("job panicked: {e}"));
                }
            });
        });
        status
    }
}
