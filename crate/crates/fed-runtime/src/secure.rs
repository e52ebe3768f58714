//! Secure weighted summation by pairwise additive masking.
//!
//! Each learner fixed-point encodes its contribution-weighted parameter
//! vector modulo 2^64 and adds, per peer, a PRG stream derived from a shared
//! pair seed: positive for higher-indexed peers, negative for lower-indexed
//! ones. Summing all masked vectors cancels every mask exactly, so the
//! controller recovers the weighted sum without observing any individual
//! vector. The driver is the trusted entity that generates the pair seeds.
//!
//! No dropout handling: a missing submission aborts the session.

use std::collections::BTreeMap;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::seed::derive_seed;

/// Fixed-point scale 2^24: ten silos with contribution weights up to 2^14
/// keep encoded magnitudes far below the 2^63 overflow guard.
pub const FIXED_POINT_SCALE: f64 = (1u64 << 24) as f64;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SecureError {
    #[error("secure summation needs at least two participants, got {0}")]
    TooFewParticipants(usize),
    #[error("unknown participant '{0}'")]
    UnknownParticipant(String),
    #[error("vector length {found} does not match session length {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("participant '{0}' did not submit; session aborted")]
    MissingSubmission(String),
    #[error("encoded magnitude {0} risks overflow for {1} participants")]
    OverflowRisk(f64, usize),
}

/// One masking session over a fixed participant set and vector length.
#[derive(Debug, Clone)]
pub struct SecureSumSession {
    participants: Vec<String>,
    vector_len: usize,
    driver_seed: u64,
}

impl SecureSumSession {
    /// `driver_seed` is the trusted driver's session seed from which every
    /// pairwise mask seed is derived.
    pub fn new(
        participants: &[String],
        driver_seed: u64,
        vector_len: usize,
    ) -> Result<Self, SecureError> {
        if participants.len() < 2 {
            return Err(SecureError::TooFewParticipants(participants.len()));
        }
        Ok(SecureSumSession {
            participants: participants.to_vec(),
            vector_len,
            driver_seed,
        })
    }

    fn index_of(&self, learner: &str) -> Result<usize, SecureError> {
        self.participants
            .iter()
            .position(|p| p == learner)
            .ok_or_else(|| SecureError::UnknownParticipant(learner.to_string()))
    }

    fn pair_rng(&self, low: usize, high: usize) -> ChaCha8Rng {
        let seed = derive_seed(
            self.driver_seed,
            "pair-mask",
            ((low as u64) << 32) | high as u64,
        );
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Learner side: fixed-point encode `weighted` (already scaled by the
    /// learner's contribution), then apply the pairwise masks.
    pub fn mask(&self, learner: &str, weighted: &[f64]) -> Result<Vec<u64>, SecureError> {
        if weighted.len() != self.vector_len {
            return Err(SecureError::LengthMismatch {
                expected: self.vector_len,
                found: weighted.len(),
            });
        }
        let me = self.index_of(learner)?;
        let n = self.participants.len();

        let mut out = Vec::with_capacity(self.vector_len);
        for &v in weighted {
            let encoded = (v * FIXED_POINT_SCALE).round();
            if encoded.abs() * n as f64 >= (1u64 << 63) as f64 {
                return Err(SecureError::OverflowRisk(encoded.abs(), n));
            }
            out.push((encoded as i64) as u64);
        }

        for other in 0..n {
            if other == me {
                continue;
            }
            let (low, high) = (me.min(other), me.max(other));
            let mut rng = self.pair_rng(low, high);
            // the lower-indexed peer adds the stream, the higher one subtracts
            let sign_add = me == low;
            for slot in out.iter_mut() {
                let mask = rng.next_u64();
                *slot = if sign_add {
                    slot.wrapping_add(mask)
                } else {
                    slot.wrapping_sub(mask)
                };
            }
        }
        Ok(out)
    }

    /// Controller side: sum all masked vectors (masks cancel exactly) and
    /// decode the fixed-point weighted sum. The caller divides by the total
    /// contribution.
    pub fn combine(
        &self,
        submissions: &BTreeMap<String, Vec<u64>>,
    ) -> Result<Vec<f64>, SecureError> {
        for participant in &self.participants {
            match submissions.get(participant) {
                None => return Err(SecureError::MissingSubmission(participant.clone())),
                Some(v) if v.len() != self.vector_len => {
                    return Err(SecureError::LengthMismatch {
                        expected: self.vector_len,
                        found: v.len(),
                    })
                }
                Some(_) => {}
            }
        }
        let mut sum = vec![0u64; self.vector_len];
        for participant in &self.participants {
            for (acc, v) in sum.iter_mut().zip(&submissions[participant]) {
                *acc = acc.wrapping_add(*v);
            }
        }
        Ok(sum
            .into_iter()
            .map(|u| (u as i64) as f64 / FIXED_POINT_SCALE)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("learner-{i}")).collect()
    }

    #[test]
    fn two_learner_weighted_sum_decodes() {
        let session = SecureSumSession::new(&ids(2), 7, 1).unwrap();
        let mut submissions = BTreeMap::new();
        submissions.insert(
            "learner-0".to_string(),
            session.mask("learner-0", &[1.0]).unwrap(),
        );
        submissions.insert(
            "learner-1".to_string(),
            session.mask("learner-1", &[2.0]).unwrap(),
        );
        let sum = session.combine(&submissions).unwrap();
        // p = (1, 1): weighted average is sum / 2
        assert!((sum[0] / 2.0 - 1.5).abs() <= 2.0 / FIXED_POINT_SCALE);
    }

    #[test]
    fn single_submission_is_masked_noise() {
        let session = SecureSumSession::new(&ids(2), 7, 4).unwrap();
        let masked = session.mask("learner-0", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        for (i, slot) in masked.iter().enumerate() {
            let decoded = (*slot as i64) as f64 / FIXED_POINT_SCALE;
            let original = (i + 1) as f64;
            assert!(
                (decoded - original).abs() > 1.0,
                "slot {i} leaked: {decoded} vs {original}"
            );
        }
    }

    #[test]
    fn missing_submission_aborts() {
        let session = SecureSumSession::new(&ids(3), 7, 1).unwrap();
        let mut submissions = BTreeMap::new();
        submissions.insert(
            "learner-0".to_string(),
            session.mask("learner-0", &[1.0]).unwrap(),
        );
        submissions.insert(
            "learner-1".to_string(),
            session.mask("learner-1", &[1.0]).unwrap(),
        );
        assert_eq!(
            session.combine(&submissions).unwrap_err(),
            SecureError::MissingSubmission("learner-2".into())
        );
    }

    #[test]
    fn masked_sum_matches_plaintext_on_random_vectors() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.gen_range(2..=10);
            let len = rng.gen_range(1..=64);
            let session = SecureSumSession::new(&ids(n), rng.gen(), len).unwrap();
            let vectors: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..len).map(|_| rng.gen_range(-100.0..100.0)).collect())
                .collect();
            let mut submissions = BTreeMap::new();
            for (i, v) in vectors.iter().enumerate() {
                submissions.insert(
                    format!("learner-{i}"),
                    session.mask(&format!("learner-{i}"), v).unwrap(),
                );
            }
            let combined = session.combine(&submissions).unwrap();
            for j in 0..len {
                let plain: f64 = vectors.iter().map(|v| v[j]).sum();
                assert!(
                    (combined[j] - plain).abs() <= n as f64 / FIXED_POINT_SCALE,
                    "slot {j}: {} vs {plain}",
                    combined[j]
                );
            }
        }
    }

    #[test]
    fn overflow_guard_trips() {
        let session = SecureSumSession::new(&ids(2), 7, 1).unwrap();
        let huge = (1u64 << 40) as f64; // 2^40 * 2^24 = 2^64 encoded
        assert!(matches!(
            session.mask("learner-0", &[huge]).unwrap_err(),
            SecureError::OverflowRisk(..)
        ));
    }

    #[test]
    fn sessions_need_two_participants() {
        assert_eq!(
            SecureSumSession::new(&ids(1), 7, 1).unwrap_err(),
            SecureError::TooFewParticipants(1)
        );
    }
}
