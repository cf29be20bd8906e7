//! Closed-form and asymptotic laws of interval-pair extraction.
//!
//! `x = T/τ` throughout: clock period over the mean of the exponential
//! interval distribution. Offsets and skews are given in units of τ.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Asymptotic serial autocorrelation of continuous-clock bits, 0.8·x²,
/// quoted for the fast-clock regime x ≤ 0.2.
pub fn a_asymptotic(x: f64) -> f64 {
    0.8 * x * x
}

/// Three-term expansion of the restartable bit efficiency,
/// 1/2 − x/4 + x²/8.
pub fn eta_asymptotic(x: f64) -> f64 {
    0.5 - x / 4.0 + x * x / 8.0
}

/// Leading-order up/down skew bias, (1/2)·x·(Δt/τ).
pub fn bias_model(x: f64, dt_over_tau: f64) -> f64 {
    0.5 * x * dt_over_tau
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub x: f64,
    /// e^(−x): probability that a restarted interval survives one period.
    pub q: f64,
    pub p_tie: f64,
    pub p_bit: f64,
    /// Bits per event.
    pub eta_exact: f64,
    pub eta_expansion: f64,
}

fn check_x(x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x = T/tau must be > 0, got {x}")));
    }
    Ok(())
}

/// Exact restartable-clock statistics for exponential intervals.
///
/// With q = e^(−x) the count of a restarted interval is geometric,
/// P(n = k) = q^k (1 − q), so P(n1 = n2) = (1 − q)/(1 + q) and a pair yields
/// a bit with probability 2q/(1 + q). Each bit consumes two events, giving
/// η = q/(1 + q) = 1/(1 + e^x).
pub fn oracle_restartable(x: f64) -> Result<OracleResult> {
    check_x(x)?;
    let q = (-x).exp();
    // tanh(x/2) = (1 − q)/(1 + q), stable for small x.
    let p_tie = (x / 2.0).tanh();
    Ok(OracleResult {
        x,
        q,
        p_tie,
        p_bit: 1.0 - p_tie,
        eta_exact: 1.0 / (1.0 + x.exp()),
        eta_expansion: eta_asymptotic(x),
    })
}

/// Outcome probabilities of one restartable pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLaw {
    /// P(n1 > n2): a `1`.
    pub p_gt: f64,
    /// P(n1 < n2): a `0`.
    pub p_lt: f64,
    pub p_tie: f64,
}

impl PairLaw {
    pub fn p_bit(&self) -> f64 {
        self.p_gt + self.p_lt
    }

    pub fn eta(&self) -> f64 {
        self.p_bit() / 2.0
    }

    /// P(1 | bit) − 1/2.
    pub fn bias(&self) -> f64 {
        (self.p_gt - self.p_lt) / (2.0 * self.p_bit())
    }
}

/// Counts of intervals `offset + E`, E ~ Exp(τ), measured with a restarted
/// clock: n = m + J with m = ⌊o⌋, s = o − m (o in units of T) and
/// P(J = 0) = 1 − q^(1−s), P(J = j) = q^(j−s)(1 − q) for j ≥ 1.
#[derive(Debug, Clone, Copy)]
struct OffsetCount {
    m: i64,
    s: f64,
    ln_q: f64,
}

impl OffsetCount {
    fn new(offset_periods: f64, x: f64) -> Self {
        let m = offset_periods.floor();
        OffsetCount {
            m: m as i64,
            s: offset_periods - m,
            ln_q: -x,
        }
    }

    /// P(J >= j)
    fn survival(&self, j: i64) -> f64 {
        if j <= 0 {
            1.0
        } else {
            ((j as f64 - self.s) * self.ln_q).exp()
        }
    }

    fn pmf(&self, j: i64) -> f64 {
        if j < 0 {
            0.0
        } else if j == 0 {
            -((1.0 - self.s) * self.ln_q).exp_m1()
        } else {
            ((j as f64 - self.s) * self.ln_q).exp() * -self.ln_q.exp_m1()
        }
    }
}

/// Pair outcome law for the restartable clock when the first interval is
/// `offset1 + E1` and the second `offset2 + E2` (offsets in units of τ,
/// E ~ Exp(τ)). A dead time `d` is `offset1 = offset2 = d/τ`; an up-window
/// skew `Δt` adds `Δt/τ` to `offset1`.
pub fn restartable_pair_law(x: f64, offset1: f64, offset2: f64) -> Result<PairLaw> {
    check_x(x)?;
    if !(offset1 >= 0.0 && offset2 >= 0.0) {
        return Err(Error::Domain(format!(
            "offsets must be >= 0, got {offset1} and {offset2}"
        )));
    }
    let a = OffsetCount::new(offset1 / x, x);
    let b = OffsetCount::new(offset2 / x, x);
    // Terms decay like q^j; stop once below 1e-20 relative.
    let j_max = (46.0 / x).ceil() as i64 + 2;
    let (mut gt, mut lt, mut tie) = (0.0, 0.0, 0.0);
    for j in 0..=j_max {
        let p = a.pmf(j);
        if p == 0.0 {
            continue;
        }
        let k = a.m + j; // n1
        let jb = k - b.m; // n2 = k  <=>  J2 = jb
        gt += p * (1.0 - b.survival(jb));
        lt += p * b.survival(jb + 1);
        tie += p * b.pmf(jb);
    }
    Ok(PairLaw {
        p_gt: gt,
        p_lt: lt,
        p_tie: tie,
    })
}

/// Exact restartable statistics behind a non-paralyzable dead time of
/// `d_over_tau` (intervals d + Exp(τ)).
pub fn oracle_restartable_dead_time(x: f64, d_over_tau: f64) -> Result<OracleResult> {
    let law = restartable_pair_law(x, d_over_tau, d_over_tau)?;
    Ok(OracleResult {
        x,
        q: (-x).exp(),
        p_tie: law.p_tie,
        p_bit: law.p_bit(),
        eta_exact: law.eta(),
        eta_expansion: eta_asymptotic(x),
    })
}

/// Exact bias of restartable extraction when the up window is longer by
/// `dt_over_tau`, with an optional dead time.
pub fn skew_bias_exact(x: f64, dt_over_tau: f64, d_over_tau: f64) -> Result<f64> {
    Ok(restartable_pair_law(x, d_over_tau + dt_over_tau, d_over_tau)?.bias())
}

/// Skew (units of τ) at which [`skew_bias_exact`] equals `target`.
pub fn skew_for_bias(x: f64, target: f64, d_over_tau: f64) -> Result<f64> {
    if !(target > 0.0 && target < 0.5) {
        return Err(Error::Domain(format!("target bias must be in (0, 0.5), got {target}")));
    }
    let f = |dt: f64| skew_bias_exact(x, dt, d_over_tau).map(|b| b - target);
    let (mut lo, mut hi) = (0.0, 1e-6);
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Domain(format!("bias {target} unreachable at x = {x}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptotic_values() {
        assert_eq!(a_asymptotic(0.0), 0.0);
        assert!((a_asymptotic(1.0 / 90.0) - 9.8765e-5).abs() < 1e-8);
        assert!((a_asymptotic(0.2) - 0.032).abs() < 1e-15);
        assert_eq!(eta_asymptotic(0.0), 0.5);
        assert!((eta_asymptotic(2.0 / 48.0) - 0.48980).abs() < 5e-6);
        assert!((eta_asymptotic(0.5) - 0.40625).abs() < 1e-15);
        assert_eq!(bias_model(0.3, 0.0), 0.0);
        assert!((bias_model(0.1, 0.02) - 1e-3).abs() < 1e-15);
        // Halving τ at fixed T and Δt doubles both ratios.
        assert!((bias_model(0.2, 0.04) / bias_model(0.1, 0.02) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_prototype_point() {
        let o = oracle_restartable(1.0 / 24.0).unwrap();
        assert!((o.eta_exact - 0.4895848).abs() < 1e-7);
        assert!((o.eta_exact - 0.489583).abs() < 5e-6);
        assert!((o.p_tie + o.p_bit - 1.0).abs() < 1e-15);
        assert!((o.eta_exact - o.eta_expansion).abs() > 2.0e-4);
        assert!((o.eta_exact - o.eta_expansion).abs() < 2.4e-4);
        for eta in [o.eta_exact, o.eta_expansion] {
            assert!((eta - 0.487).abs() <= 0.02);
        }
    }

    #[test]
    fn oracle_limits_and_domain() {
        assert!((oracle_restartable(1e-9).unwrap().eta_exact - 0.5).abs() < 1e-9);
        assert!(oracle_restartable(0.0).is_err());
        assert!(oracle_restartable(-1.0).is_err());
        let o = oracle_restartable(3.0).unwrap();
        assert!(o.eta_exact > 0.0 && o.eta_exact <= 0.5);
    }

    #[test]
    fn pair_law_reduces_to_oracle_without_offsets() {
        for x in [0.01, 0.05, 1.0 / 24.0, 0.2, 0.5, 1.0, 5.0] {
            let law = restartable_pair_law(x, 0.0, 0.0).unwrap();
            let o = oracle_restartable(x).unwrap();
            assert!((law.p_tie - o.p_tie).abs() < 1e-12, "x={x}");
            assert!((law.p_gt - law.p_lt).abs() < 1e-12);
            assert!((law.p_gt + law.p_lt + law.p_tie - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dead_time_shifts_efficiency_but_not_symmetry() {
        // d = 25 ns, T = 1/48 µs, τ = 500 ns: d/T = 1.2.
        let x = 1.0 / 24.0;
        let law = restartable_pair_law(x, 0.05, 0.05).unwrap();
        assert!((law.p_gt - law.p_lt).abs() < 1e-12);
        // Hand evaluation: s = 0.2, p0 = 1 − q^0.8, tie = p0² + q^1.6 (1−q)/(1+q).
        let q: f64 = (-x).exp();
        let p0 = 1.0 - q.powf(0.8);
        let tie = p0 * p0 + q.powf(1.6) * (1.0 - q) / (1.0 + q);
        assert!((law.p_tie - tie).abs() < 1e-12);
        assert!((law.eta() - 0.4897192).abs() < 1e-6);
    }

    #[test]
    fn skew_bias_closed_form() {
        // δ = Δt/T < 1: A = e^{Δt/τ}, b = (A−1)(1+q) / (2(1+q+A(1−q))).
        let (x, dt) = (0.1f64, 0.02f64);
        let a = dt.exp();
        let q = (-x).exp();
        let expected = (a - 1.0) * (1.0 + q) / (2.0 * (1.0 + q + a * (1.0 - q)));
        assert!((skew_bias_exact(x, dt, 0.0).unwrap() - expected).abs() < 1e-12);
        let dt = skew_for_bias(x, 1e-3, 0.0).unwrap();
        assert!((skew_bias_exact(x, dt, 0.0).unwrap() - 1e-3).abs() < 1e-12);
    }
}
