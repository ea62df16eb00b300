//! Closed-form limit profiles and constants.

use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Limit of `E P_t / t²`.
pub const TOTAL_JUMPS_LIMIT: f64 = 1.0 / 6.0;

/// Limit of `E a_t / t`.
pub const ACTIVE_LIMIT: f64 = 1.0 / 3.0;

/// Limit of `S(⌊ut⌋, t) / t`.
pub fn h(u: f64) -> f64 {
    if u < -1.0 {
        -u
    } else if u <= 1.0 {
        0.25 * (1.0 - u) * (1.0 - u)
    } else {
        0.0
    }
}

/// Limiting particle density at speed `w`.
pub fn f(w: f64) -> f64 {
    if w < -1.0 {
        1.0
    } else if w <= 1.0 {
        0.5 * (1.0 - w)
    } else {
        0.0
    }
}

/// Limit of `E X(⌊ut⌋) X(⌊ut⌋ + 1)`.
pub fn f_sq(u: f64) -> f64 {
    let v = f(u);
    v * v
}

/// `∫_{-∞}^{w} (f(s) - 1{s < 0}) ds`, an antiderivative of `f`.
fn f_antiderivative(w: f64) -> f64 {
    if w < -1.0 {
        w
    } else if w <= 1.0 {
        0.5 * w - 0.25 * w * w - 0.25
    } else {
        0.0
    }
}

/// An antiderivative of `f²`.
fn f_sq_antiderivative(w: f64) -> f64 {
    if w < -1.0 {
        w
    } else if w <= 1.0 {
        -1.0 / 3.0 - (1.0 - w).powi(3) / 12.0
    } else {
        -1.0 / 3.0
    }
}

/// Mean of `f` over `[a, b]`.
pub fn f_bin_average(a: f64, b: f64) -> f64 {
    (f_antiderivative(b) - f_antiderivative(a)) / (b - a)
}

/// Mean of `f²` over `[a, b]`.
pub fn f_sq_bin_average(a: f64, b: f64) -> f64 {
    (f_sq_antiderivative(b) - f_sq_antiderivative(a)) / (b - a)
}

/// `t^{k+1} / k!`, evaluated in log space.
pub fn lemma1_bound(k: i64, t: f64) -> Result<f64> {
    if k < 0 {
        return Err(invalid("k", format!("must be nonnegative, got {k}")));
    }
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    let k = k as f64;
    Ok(((k + 1.0) * t.ln() - ln_gamma(k + 1.0)).exp())
}

// Antiderivatives of the middle pieces on [-1, 1].
fn h_mid_antiderivative(u: f64) -> f64 {
    -(1.0 - u).powi(3) / 12.0
}

fn f_mid_antiderivative(u: f64) -> f64 {
    0.5 * u - 0.25 * u * u
}

fn f_sq_mid_antiderivative(u: f64) -> f64 {
    -(1.0 - u).powi(3) / 12.0
}

/// One closed-form identity and how far off it evaluates.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub computed: f64,
    pub expected: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(name: &'static str, computed: f64, expected: f64) -> Self {
        Self {
            name,
            computed,
            expected,
            pass: (computed - expected).abs() <= 1e-12,
        }
    }
}

/// Integral identities linking `h`, `f` and the two limit constants.
pub fn h_consistency() -> Vec<IdentityCheck> {
    let int_h_01 = h_mid_antiderivative(1.0) - h_mid_antiderivative(0.0);
    // h vanishes on (1, ∞)
    let int_h_tail = 0.0;
    let int_f = f_mid_antiderivative(1.0) - f_mid_antiderivative(-1.0);
    let int_f_sq = f_sq_mid_antiderivative(1.0) - f_sq_mid_antiderivative(-1.0);
    vec![
        IdentityCheck::new("int_0^1 h", int_h_01, 1.0 / 12.0),
        IdentityCheck::new("int_1^inf h", int_h_tail, 0.0),
        IdentityCheck::new(
            "2 int_0^inf h",
            2.0 * (int_h_01 + int_h_tail),
            TOTAL_JUMPS_LIMIT,
        ),
        IdentityCheck::new("int_-1^1 f", int_f, 1.0),
        IdentityCheck::new("int_-1^1 (f - f^2)", int_f - int_f_sq, ACTIVE_LIMIT),
    ]
}
