//! Trial runner, batch statistics and the hit-time distribution test.

mod batch;
mod ks;
mod trajectory;
mod trial;

pub use batch::{
    run_batch, run_batch_with, split_seed, BatchSummary, Histogram, TrialDigest, HISTOGRAM_BINS,
};
pub use ks::{ks_test, truncated_exponential_cdf, KsError};
pub use trajectory::{Event, EventKind, Payload, SnapshotEntry, Trajectory};
pub use trial::{run_trial, run_trial_with, Forcing, Trial, TrialError, TrialOptions};
