//! Verifying many resources against one rule.

use crate::exec::{self, Execution};
use crate::trust::{verify_resource_with, TrustRule, VerificationVerdict};

/// Verdicts in input order. Each file is verified sequentially on whichever
/// worker picks it up; the parallelism is across files.
pub fn verify_batch<B>(rule: &TrustRule, files: &[B], exec: Execution) -> Vec<VerificationVerdict>
where
    B: AsRef<[u8]> + Sync,
{
    exec::map(exec, files, |file| {
        verify_resource_with(rule, file.as_ref(), Execution::Sequential)
    })
}

/// Counts how many files pass.
pub fn count_passing<B>(rule: &TrustRule, files: &[B], exec: Execution) -> usize
where
    B: AsRef<[u8]> + Sync,
{
    verify_batch(rule, files, exec).iter().filter(|v| v.is_pass()).count()
}
