//! Exact continuous-time dynamics.
//!
//! [`SimState`] runs the competing-clocks construction directly on the set of
//! active particles: the next jump happens after an `Exp(a)` wait, `a` being
//! the number of active particles, and the jumping particle is uniform among
//! them. [`ClockReference`] keeps one exponential clock per particle in a
//! priority queue and exists to cross-check the fast path on small systems.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::JumpProfile;
use crate::rng::RngStreamSpec;

const ABSENT: u32 = u32::MAX;

/// Active particle indices with O(1) insert, remove and uniform sampling.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    items: Vec<usize>,
    // slot[r] is the position of particle r in `items`, or ABSENT.
    slot: Vec<u32>,
}

impl ActiveSet {
    pub fn from_profile(profile: &JumpProfile) -> Self {
        let mut set = Self::default();
        for r in profile.active_indices() {
            set.insert(r);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, r: usize) -> bool {
        self.slot.get(r).is_some_and(|&s| s != ABSENT)
    }

    pub fn insert(&mut self, r: usize) {
        if r >= self.slot.len() {
            self.slot.resize(r + 1 + self.slot.len() / 2, ABSENT);
        }
        if self.slot[r] == ABSENT {
            self.slot[r] = self.items.len() as u32;
            self.items.push(r);
        }
    }

    pub fn remove(&mut self, r: usize) {
        if !self.contains(r) {
            return;
        }
        let s = self.slot[r] as usize;
        let last = self.items.pop().expect("nonempty");
        if last != r {
            self.items[s] = last;
            self.slot[last] = s as u32;
        }
        self.slot[r] = ABSENT;
    }

    /// Member indices in ascending order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.items.clone();
        v.sort_unstable();
        v
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.items[rng.random_range(0..self.items.len())]
    }
}

/// One recorded jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub particle: usize,
}

/// A single TASEP trajectory started from the step initial condition.
#[derive(Debug, Clone)]
pub struct SimState {
    profile: JumpProfile,
    active: ActiveSet,
    time: f64,
    activity_integral: f64,
    rng: ChaCha8Rng,
    jump_log: Option<Vec<JumpEvent>>,
}

impl SimState {
    /// Fresh step initial condition at time zero.
    pub fn new_step_ic(stream: RngStreamSpec) -> Self {
        let profile = JumpProfile::new();
        Self {
            active: ActiveSet::from_profile(&profile),
            profile,
            time: 0.0,
            activity_integral: 0.0,
            rng: stream.build(),
            jump_log: None,
        }
    }

    /// Starts at time zero from an arbitrary profile.
    pub fn from_profile(profile: JumpProfile, stream: RngStreamSpec) -> Result<Self> {
        profile.validate()?;
        Ok(Self {
            active: ActiveSet::from_profile(&profile),
            profile,
            time: 0.0,
            activity_integral: 0.0,
            rng: stream.build(),
            jump_log: None,
        })
    }

    /// Same as [`SimState::new_step_ic`] with jump logging switched on.
    pub fn with_jump_log(stream: RngStreamSpec) -> Self {
        let mut s = Self::new_step_ic(stream);
        s.jump_log = Some(Vec::new());
        s
    }

    pub fn profile(&self) -> &JumpProfile {
        &self.profile
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn total_jumps(&self) -> u64 {
        self.profile.total_jumps()
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn active_set(&self) -> &ActiveSet {
        &self.active
    }

    /// `∫_0^t a_s ds` along this trajectory.
    pub fn activity_integral(&self) -> f64 {
        self.activity_integral
    }

    pub fn jump_count(&self, r: usize) -> Result<u64> {
        self.profile.jump_count(r)
    }

    pub fn jump_log(&self) -> Option<&[JumpEvent]> {
        self.jump_log.as_deref()
    }

    /// Performs one jump and returns the waiting time that preceded it.
    pub fn gillespie_step(&mut self) -> f64 {
        let a = self.active.len();
        let wait = self.rng.sample::<f64, _>(Exp1) / a as f64;
        self.time += wait;
        self.activity_integral += a as f64 * wait;
        let r = self.active.sample(&mut self.rng);
        self.apply_jump(r);
        wait
    }

    /// Runs the dynamics until `t_target`.
    ///
    /// The waiting time that would overshoot is dropped and the clock is set to
    /// `t_target`; memorylessness makes this exact.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        self.advance_to_with(t_target, |_| Ok(()))
    }

    /// Like [`SimState::advance_to`], calling `visit` after every jump.
    pub fn advance_to_with<F>(&mut self, t_target: f64, mut visit: F) -> Result<()>
    where
        F: FnMut(&SimState) -> Result<()>,
    {
        if !t_target.is_finite() {
            return Err(Error::InvalidTime(t_target));
        }
        if t_target < self.time {
            return Err(Error::TimeReversal {
                target: t_target,
                current: self.time,
            });
        }
        loop {
            let a = self.active.len();
            let wait = self.rng.sample::<f64, _>(Exp1) / a as f64;
            if self.time + wait > t_target {
                self.activity_integral += a as f64 * (t_target - self.time);
                self.time = t_target;
                return Ok(());
            }
            self.time += wait;
            self.activity_integral += a as f64 * wait;
            let r = self.active.sample(&mut self.rng);
            self.apply_jump(r);
            visit(self)?;
        }
    }

    #[inline]
    fn apply_jump(&mut self, r: usize) {
        self.profile.jump_unchecked(r);
        // Only r and r + 1 can change status.
        if r > 1 && self.profile.part(r) == self.profile.part(r - 1) {
            self.active.remove(r);
        }
        self.active.insert(r + 1);
        if let Some(log) = self.jump_log.as_mut() {
            log.push(JumpEvent {
                time: self.time,
                particle: r,
            });
        }
    }
}

/// Writes a jump log as `time,particle_index` CSV rows.
pub fn write_jump_log<W: Write>(mut out: W, events: &[JumpEvent]) -> std::io::Result<()> {
    writeln!(out, "time,particle_index")?;
    for e in events {
        writeln!(out, "{},{}", e.time, e.particle)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ring {
    time: f64,
    particle: usize,
}

impl Eq for Ring {}

impl Ord for Ring {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.particle.cmp(&other.particle))
    }
}

impl PartialOrd for Ring {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-particle exponential clocks over a finite block of particles.
///
/// Blocked particles' rings are discarded and their clocks restarted, exactly
/// as in the model description. Only for small-scale equivalence testing:
/// particles beyond `capacity` have no clock, so [`ClockReference::advance_to`]
/// fails once particle `capacity` would need to move.
#[derive(Debug, Clone)]
pub struct ClockReference {
    profile: JumpProfile,
    time: f64,
    capacity: usize,
    queue: BinaryHeap<Reverse<Ring>>,
    rng: ChaCha8Rng,
}

impl ClockReference {
    pub fn new(stream: RngStreamSpec, capacity: usize) -> Self {
        let mut rng = stream.build();
        let queue = (1..=capacity)
            .map(|particle| {
                Reverse(Ring {
                    time: rng.sample::<f64, _>(Exp1),
                    particle,
                })
            })
            .collect();
        Self {
            profile: JumpProfile::new(),
            time: 0.0,
            capacity,
            queue,
            rng,
        }
    }

    pub fn profile(&self) -> &JumpProfile {
        &self.profile
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        if t_target < self.time || !t_target.is_finite() {
            return Err(Error::TimeReversal {
                target: t_target,
                current: self.time,
            });
        }
        while let Some(&Reverse(next)) = self.queue.peek() {
            if next.time > t_target {
                break;
            }
            self.queue.pop();
            self.time = next.time;
            if self.profile.is_active(next.particle) {
                if next.particle == self.capacity {
                    return Err(invalid_capacity(self.capacity));
                }
                self.profile.jump_unchecked(next.particle);
            }
            self.queue.push(Reverse(Ring {
                time: next.time + self.rng.sample::<f64, _>(Exp1),
                particle: next.particle,
            }));
        }
        self.time = t_target;
        Ok(())
    }
}

fn invalid_capacity(capacity: usize) -> Error {
    crate::error::invalid(
        "capacity",
        format!("particle {capacity} reached the end of the clock block"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(seed: u64) -> SimState {
        SimState::new_step_ic(RngStreamSpec::new(seed, 0))
    }

    #[test]
    fn initial_state() {
        let s = state(1);
        assert_eq!(s.time(), 0.0);
        assert_eq!(s.total_jumps(), 0);
        assert_eq!(s.active_count(), 1);
        assert!(s.profile().is_empty());
    }

    #[test]
    fn first_step_moves_particle_one() {
        let mut s = state(2);
        let w = s.gillespie_step();
        assert!(w > 0.0);
        assert_eq!(s.profile().parts(), &[1]);
        assert_eq!(s.time(), w);
    }

    #[test]
    fn advance_to_zero_is_noop() {
        let mut s = state(3);
        s.advance_to(0.0).unwrap();
        assert_eq!(s.total_jumps(), 0);
        assert_eq!(s.time(), 0.0);
    }

    #[test]
    fn advance_rejects_past_target() {
        let mut s = state(4);
        s.advance_to(2.0).unwrap();
        assert!(matches!(s.advance_to(1.0), Err(Error::TimeReversal { .. })));
        assert!(s.advance_to(f64::NAN).is_err());
    }

    #[test]
    fn active_set_matches_rescan_each_step() {
        let mut s = state(5);
        for _ in 0..2_000 {
            s.gillespie_step();
            assert_eq!(s.active_set().sorted(), s.profile().active_indices());
            assert!(s.active_count() as u64 <= s.total_jumps() + 1);
        }
        s.profile().validate().unwrap();
    }

    #[test]
    fn jump_log_tracks_every_jump() {
        let mut s = SimState::with_jump_log(RngStreamSpec::new(6, 0));
        s.advance_to(5.0).unwrap();
        let log = s.jump_log().unwrap();
        assert_eq!(log.len() as u64, s.total_jumps());
        assert!(log.windows(2).all(|w| w[0].time <= w[1].time));
        let mut buf = Vec::new();
        write_jump_log(&mut buf, log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), log.len() + 1);
        let first: f64 = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(first, log[0].time);
    }

    #[test]
    fn activity_integral_bounded_by_time_span() {
        let mut s = state(7);
        s.advance_to(3.0).unwrap();
        assert!(s.activity_integral() >= 3.0);
    }

    #[test]
    fn active_set_swap_remove() {
        let mut set = ActiveSet::default();
        for r in [1, 3, 4, 9] {
            set.insert(r);
        }
        set.insert(3);
        assert_eq!(set.len(), 4);
        set.remove(1);
        set.remove(1);
        assert_eq!(set.sorted(), vec![3, 4, 9]);
        assert!(!set.contains(100));
    }

    #[test]
    fn clock_reference_keeps_partition() {
        let mut c = ClockReference::new(RngStreamSpec::new(8, 0), 64);
        c.advance_to(4.0).unwrap();
        c.profile().validate().unwrap();
        assert_eq!(c.time(), 4.0);
    }
}
