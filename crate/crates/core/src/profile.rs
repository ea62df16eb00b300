//! Jump-count partitions.
//!
//! Under the step initial condition the configuration at any time is fully
//! described by the jump counts `λ_1 ≥ λ_2 ≥ …` of the particles, numbered
//! from the right. Particle `r` sits at `λ_r - (r - 1)`; particles that have
//! never jumped fill the reservoir to the left and are not stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weakly decreasing, strictly positive jump counts of particles `1..=m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct JumpProfile {
    parts: Vec<u64>,
    total: u64,
}

impl JumpProfile {
    /// The step initial condition: nobody has jumped.
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a profile from jump counts, dropping trailing zeros.
    pub fn from_parts(mut parts: Vec<u64>) -> Result<Self> {
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if let Some(w) = parts.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::InvalidProfile(format!(
                "jump counts must be weakly decreasing, but λ_{} = {} < λ_{} = {}",
                w + 1,
                parts[w],
                w + 2,
                parts[w + 1]
            )));
        }
        if parts.contains(&0) {
            return Err(Error::InvalidProfile(
                "zero jump count followed by a positive one".into(),
            ));
        }
        let total = parts.iter().sum();
        Ok(Self { parts, total })
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    /// Number of particles that have jumped at least once.
    pub fn moved(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Total number of jumps, `|λ|`.
    pub fn total_jumps(&self) -> u64 {
        self.total
    }

    /// `λ_r`, or zero for a particle that has not moved.
    pub fn jump_count(&self, r: usize) -> Result<u64> {
        if r == 0 {
            return Err(Error::ParticleIndex(r));
        }
        Ok(self.part(r))
    }

    #[inline]
    pub(crate) fn part(&self, r: usize) -> u64 {
        self.parts.get(r - 1).copied().unwrap_or(0)
    }

    /// Site occupied by particle `r` (1-based).
    #[inline]
    pub fn position(&self, r: usize) -> i64 {
        self.part(r) as i64 - (r as i64 - 1)
    }

    /// Position of the rightmost particle.
    pub fn rightmost(&self) -> i64 {
        self.position(1)
    }

    /// Position of particle `m + 1`, the leftmost particle that may be active.
    pub fn leftmost_movable(&self) -> i64 {
        -(self.moved() as i64)
    }

    /// Particle `r` can jump iff the site to its right is empty.
    #[inline]
    pub fn is_active(&self, r: usize) -> bool {
        match r {
            0 => false,
            1 => true,
            _ => self.part(r) < self.part(r - 1),
        }
    }

    /// All active particles in increasing index order.
    pub fn active_indices(&self) -> Vec<usize> {
        (1..=self.moved() + 1)
            .filter(|&r| self.is_active(r))
            .collect()
    }

    pub fn active_count(&self) -> usize {
        1 + (2..=self.moved() + 1)
            .filter(|&r| self.is_active(r))
            .count()
    }

    /// Moves particle `r` one site to the right.
    pub fn jump(&mut self, r: usize) -> Result<()> {
        if r == 0 {
            return Err(Error::ParticleIndex(r));
        }
        if !self.is_active(r) {
            return Err(Error::Blocked(r));
        }
        self.jump_unchecked(r);
        Ok(())
    }

    #[inline]
    pub(crate) fn jump_unchecked(&mut self, r: usize) {
        debug_assert!(self.is_active(r));
        if r == self.parts.len() + 1 {
            self.parts.push(1);
        } else {
            self.parts[r - 1] += 1;
        }
        self.total += 1;
    }

    /// Checks the stored-representation invariants.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::from_parts(self.parts.clone())?;
        if rebuilt.parts.len() != self.parts.len() || rebuilt.total != self.total {
            return Err(Error::InvalidProfile(format!(
                "cached total {} disagrees with Σλ = {}",
                self.total, rebuilt.total
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<u64>> for JumpProfile {
    type Error = Error;

    fn try_from(parts: Vec<u64>) -> Result<Self> {
        Self::from_parts(parts)
    }
}

impl From<JumpProfile> for Vec<u64> {
    fn from(p: JumpProfile) -> Self {
        p.parts
    }
}
