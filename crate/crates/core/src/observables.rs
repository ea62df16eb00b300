//! Observables of a jump profile.
//!
//! `X(k)` is the occupation of site `k`, `S(k)` the number of particles
//! strictly right of `k` and `S'(k)` the number of holes strictly left of `k`.
//! Everything here is a pure function of a [`JumpProfile`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::profile::JumpProfile;

/// Inclusive range of sites `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn covers(&self, other: &Window) -> bool {
        self.lo <= other.lo && self.hi >= other.hi
    }

    pub fn union(&self, other: &Window) -> Window {
        Window::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// `[-m - 1, x_1 + 1]`: outside it the configuration is the step profile.
pub fn disturbed_window(p: &JumpProfile) -> Window {
    Window::new(p.leftmost_movable() - 1, p.rightmost() + 1)
}

/// `[⌊-t⌋ - B, ⌈t⌉ + B]` with `B = max(10, ⌈4√t⌉)`, widened to the disturbed
/// region if a particle got further.
pub fn standard_window(p: &JumpProfile, t: f64) -> Window {
    let slack = 10i64.max((4.0 * t.max(0.0).sqrt()).ceil() as i64);
    let w = Window::new((-t).floor() as i64 - slack, t.ceil() as i64 + slack);
    w.union(&disturbed_window(p))
}

/// Number of moved particles (`r ≤ m`) whose position exceeds `k`.
fn moved_right_of(p: &JumpProfile, k: i64) -> usize {
    // x_r = λ_r - (r - 1) is strictly decreasing in r.
    let parts = p.parts();
    let (mut lo, mut hi) = (0usize, parts.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if parts[mid] as i64 - mid as i64 > k {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `X(k)`: 1 iff some particle sits at `k`.
pub fn occupation(p: &JumpProfile, k: i64) -> u8 {
    let m = p.moved() as i64;
    if k <= -m {
        // particle 1 - k has not moved and sits at k
        return 1;
    }
    let i = moved_right_of(p, k);
    match p.parts().get(i) {
        Some(&part) if part as i64 - i as i64 == k => 1,
        _ => 0,
    }
}

/// `S(k)`: particles strictly right of `k`.
pub fn particle_count_right(p: &JumpProfile, k: i64) -> u64 {
    let m = p.moved() as i64;
    moved_right_of(p, k) as u64 + (-k - m).max(0) as u64
}

/// `S'(k)`: holes strictly left of `k`, counted site by site.
pub fn hole_count_left(p: &JumpProfile, k: i64) -> u64 {
    // Sites ≤ -m are all occupied; sites > x_1 are all empty.
    let first = 1 - p.moved() as i64;
    let last_scanned = (k - 1).min(p.rightmost());
    let mut holes = 0u64;
    let mut j = first;
    while j <= last_scanned {
        holes += 1 - occupation(p, j) as u64;
        j += 1;
    }
    if k - 1 > p.rightmost() {
        holes += (k - 1 - p.rightmost()) as u64;
    }
    holes
}

/// `S(k)` at time zero.
pub fn step_particle_count_right(k: i64) -> u64 {
    (-k).max(0) as u64
}

/// `Σ_k (S(k,t) - S(k,0))`, the area between the current and initial profiles.
pub fn total_jumps_via_area(p: &JumpProfile) -> u64 {
    let w = disturbed_window(p);
    let area: i64 = w
        .sites()
        .map(|k| particle_count_right(p, k) as i64 - step_particle_count_right(k) as i64)
        .sum();
    debug_assert!(area >= 0);
    area as u64
}

/// `Σ_k X(k)(1 - X(k+1))` over `window`.
pub fn active_count_via_pairs(p: &JumpProfile, window: Window) -> Result<u64> {
    let need = disturbed_window(p);
    if !window.covers(&need) {
        return Err(Error::WindowTooSmall {
            lo: window.lo,
            hi: window.hi,
            need_lo: need.lo,
            need_hi: need.hi,
        });
    }
    let occ = OccupationWindow::new(p, Window::new(window.lo, window.hi + 1));
    Ok(window
        .sites()
        .map(|k| (occ.get(k) * (1 - occ.get(k + 1))) as u64)
        .sum())
}

/// Occupation numbers materialised over a window.
#[derive(Debug, Clone)]
pub struct OccupationWindow {
    window: Window,
    bits: Vec<u8>,
}

impl OccupationWindow {
    pub fn new(p: &JumpProfile, window: Window) -> Self {
        let len = (window.hi - window.lo + 1).max(0) as usize;
        let mut bits = vec![0u8; len];
        let reservoir_edge = -(p.moved() as i64);
        for k in window.lo..=window.hi.min(reservoir_edge) {
            bits[(k - window.lo) as usize] = 1;
        }
        for r in 1..=p.moved() {
            let x = p.position(r);
            if x >= window.lo && x <= window.hi {
                bits[(x - window.lo) as usize] = 1;
            }
        }
        Self { window, bits }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// `X(k)`; falls back to the profile-free step values outside the window
    /// only when they are implied (`k` left of it is packed, right of it empty).
    #[inline]
    pub fn get(&self, k: i64) -> u8 {
        if k < self.window.lo {
            1
        } else if k > self.window.hi {
            0
        } else {
            self.bits[(k - self.window.lo) as usize]
        }
    }
}

/// Left-closed bins `[lo + j·width, lo + (j+1)·width)` in the scaled
/// coordinate `u = k / t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub lo: f64,
    pub width: f64,
    pub count: usize,
}

impl BinGrid {
    pub fn new(lo: f64, width: f64, count: usize) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(invalid(
                "bin_width",
                format!("must be positive, got {width}"),
            ));
        }
        if !lo.is_finite() {
            return Err(invalid("bin_lo", "must be finite"));
        }
        Ok(Self { lo, width, count })
    }

    /// Bins of width `w` starting at `-1 - w` and reaching at least `1 + w`.
    pub fn covering(w: f64) -> Result<Self> {
        let lo = -1.0 - w;
        let count = ((2.0 + 2.0 * w) / w - 1e-9).ceil().max(1.0) as usize;
        Self::new(lo, w, count)
    }

    /// Bins of width `w` centred on `first, first + w, …, last`.
    pub fn centered(first: f64, last: f64, w: f64) -> Result<Self> {
        if last < first {
            return Err(invalid("bin_centers", "last center before first"));
        }
        let count = ((last - first) / w).round() as usize + 1;
        Self::new(first - w / 2.0, w, count)
    }

    pub fn edges(&self, j: usize) -> (f64, f64) {
        let a = self.lo + j as f64 * self.width;
        (a, a + self.width)
    }

    pub fn center(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.width
    }

    /// Integer sites `k` with `u_lo·t ≤ k < u_hi·t`.
    pub fn sites(&self, j: usize, t: f64) -> Window {
        let (a, b) = self.edges(j);
        Window::new(snap(a * t).ceil() as i64, snap(b * t).ceil() as i64 - 1)
    }

    /// Sites touched by any bin, with one extra site on the right.
    fn span(&self, t: f64) -> Window {
        let first = self.sites(0, t);
        let last = self.sites(self.count.saturating_sub(1), t);
        Window::new(first.lo, last.hi + 1)
    }
}

// Absorbs rounding in u·t so that bin edges landing on integers stay there.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// One histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub u_lo: f64,
    pub u_hi: f64,
    pub center: f64,
    pub sites: u64,
    pub value: f64,
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    Ok(())
}

/// Bin value `(1/(t·w)) Σ_{u t ≤ k < (u+w) t} X(k)`.
pub fn density_histogram(p: &JumpProfile, t: f64, grid: &BinGrid) -> Result<Vec<HistBin>> {
    check_time(t)?;
    let occ = OccupationWindow::new(p, grid.span(t));
    Ok((0..grid.count)
        .map(|j| {
            let (u_lo, u_hi) = grid.edges(j);
            let sites = grid.sites(j, t);
            let count: u64 = sites.sites().map(|k| occ.get(k) as u64).sum();
            HistBin {
                u_lo,
                u_hi,
                center: grid.center(j),
                sites: (sites.hi - sites.lo + 1).max(0) as u64,
                value: count as f64 / (t * grid.width),
            }
        })
        .collect())
}

/// Bin value: mean of `X(k)·X(k+1)` over the sites of the bin (0 for a bin
/// containing no site).
pub fn pair_correlation_histogram(p: &JumpProfile, t: f64, grid: &BinGrid) -> Result<Vec<HistBin>> {
    check_time(t)?;
    let occ = OccupationWindow::new(p, grid.span(t));
    Ok((0..grid.count)
        .map(|j| {
            let (u_lo, u_hi) = grid.edges(j);
            let sites = grid.sites(j, t);
            let n = (sites.hi - sites.lo + 1).max(0) as u64;
            let count: u64 = sites
                .sites()
                .map(|k| (occ.get(k) * occ.get(k + 1)) as u64)
                .sum();
            HistBin {
                u_lo,
                u_hi,
                center: grid.center(j),
                sites: n,
                value: if n == 0 { 0.0 } else { count as f64 / n as f64 },
            }
        })
        .collect())
}

/// Mathematical floor of `u·t`, as used for `S(⌊ut⌋, t)`.
pub fn scaled_site(u: f64, t: f64) -> i64 {
    snap(u * t).floor() as i64
}

/// Everything observed at one instant over a window of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotObservables {
    pub t: f64,
    pub total_jumps: u64,
    pub active: u64,
    pub window: Window,
    /// `S(k)` for `k` in the window, in order.
    pub particles_right: Vec<u64>,
    /// `X(k)`.
    pub occupation: Vec<u8>,
    /// `X(k)·X(k+1)`.
    pub pairs: Vec<u8>,
}

impl SnapshotObservables {
    pub fn capture(p: &JumpProfile, t: f64, window: Window) -> Self {
        let occ = OccupationWindow::new(p, Window::new(window.lo, window.hi + 1));
        Self {
            t,
            total_jumps: p.total_jumps(),
            active: p.active_count() as u64,
            window,
            particles_right: window.sites().map(|k| particle_count_right(p, k)).collect(),
            occupation: window.sites().map(|k| occ.get(k)).collect(),
            pairs: window
                .sites()
                .map(|k| occ.get(k) * occ.get(k + 1))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serialises")
    }

    /// CSV rows `t,name,k_or_u,value`.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "t,name,k_or_u,value")?;
        }
        writeln!(out, "{},P,,{}", self.t, self.total_jumps)?;
        writeln!(out, "{},a,,{}", self.t, self.active)?;
        for (i, k) in self.window.sites().enumerate() {
            writeln!(out, "{},S,{},{}", self.t, k, self.particles_right[i])?;
        }
        for (i, k) in self.window.sites().enumerate() {
            writeln!(out, "{},X,{},{}", self.t, k, self.occupation[i])?;
        }
        for (i, k) in self.window.sites().enumerate() {
            writeln!(out, "{},XX,{},{}", self.t, k, self.pairs[i])?;
        }
        Ok(())
    }
}

/// Checks the exact configuration identities on one state:
/// the area sum equals the jump counter, `S'(k) = k - 1 + S(k - 1)` on the
/// window, the pair sum equals the active count, the partition is valid and
/// `a ≤ P + 1`. Returns a description of the first violation.
pub fn check_exact_identities(p: &JumpProfile, window: Window) -> std::result::Result<(), String> {
    p.validate().map_err(|e| e.to_string())?;
    let jumps = p.total_jumps();
    let area = total_jumps_via_area(p);
    if area != jumps {
        return Err(format!("area sum {area} != jump counter {jumps}"));
    }
    let window = window.union(&disturbed_window(p));
    for k in window.sites() {
        let holes = hole_count_left(p, k) as i64;
        let rhs = k - 1 + particle_count_right(p, k - 1) as i64;
        if holes != rhs {
            return Err(format!("S'({k}) = {holes} but k - 1 + S(k - 1) = {rhs}"));
        }
    }
    let active = p.active_count() as u64;
    let pairs = active_count_via_pairs(p, window).map_err(|e| e.to_string())?;
    if pairs != active {
        return Err(format!("pair sum {pairs} != active count {active}"));
    }
    if active > jumps + 1 {
        return Err(format!(
            "active count {active} exceeds P + 1 = {}",
            jumps + 1
        ));
    }
    Ok(())
}
