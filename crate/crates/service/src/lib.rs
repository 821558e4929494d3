//! Annotation service: hands out threads to workers, validates their
//! labels and appends them to a durable JSON-lines log.

pub mod http;
pub mod service;
pub mod store;

pub use http::{router, serve, ApiError, SubmitBody};
pub use service::{
    AnnotationService, Clock, ManualClock, NextTask, Progress, ServiceConfig, SubmitAck, SubmitError, SystemClock,
    TaskAssignment,
};
pub use store::{AnnotationStore, StoreError, StoredRecord};

/// Directory holding the placeholder page shipped with the crate.
pub fn bundled_static_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("static")
}
