//! Closed-form misclassification, deviation and rate bounds, and the
//! Hurwitz zeta sums behind them.

use crate::attack::{cumulative_floor, cumulative_min_probability, min_conditional_probability, AttackPolicy};
use crate::detect::ThresholdSchedule;
use crate::error::{Error, Result};

pub const ZETA_TOL: f64 = 1e-10;

/// `B_2, B_4, ..., B_24`
const BERNOULLI_EVEN: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

/// A value known to lie in `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracketed {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Bracketed {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn check_zeta_args(c: f64, t: f64) -> Result<()> {
    if !(c > 1.0) {
        return Err(Error::Divergence(c));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Hurwitz zeta offset must be positive, got {t}")));
    }
    Ok(())
}

/// `Σ_{k ≥ 0} (k + t)^{-c}` to the default tolerance.
pub fn hurwitz_zeta(c: f64, t: f64) -> Result<f64> {
    Ok(hurwitz_zeta_bracketed(c, t, ZETA_TOL)?.value)
}

/// Hurwitz zeta with a guaranteed enclosure.
///
/// A direct partial sum up to `N = K + t` is followed by the Euler-Maclaurin
/// expansion of the tail. The summand is completely monotone in `k`, so the
/// remainder after any number of correction terms is bounded by the first
/// omitted one. `K` grows until that term drops below `tol / 2`. The
/// half-width adds a floating-point rounding allowance to the truncation
/// error; it stays below `tol` unless the value is so large (small `t`,
/// large `c`) that `tol` is finer than the spacing of doubles near it.
pub fn hurwitz_zeta_bracketed(c: f64, t: f64, tol: f64) -> Result<Bracketed> {
    check_zeta_args(c, t)?;
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let mut k_terms = (16.0 - t).max(0.0).ceil() as u64;
    loop {
        if let Some(b) = euler_maclaurin(c, t, k_terms, tol) {
            return Ok(b);
        }
        k_terms = 2 * k_terms + 16;
    }
}

fn euler_maclaurin(c: f64, t: f64, k_terms: u64, tol: f64) -> Option<Bracketed> {
    let n = k_terms as f64 + t;
    // Smallest terms first.
    let mut head = 0.0;
    for k in (0..k_terms).rev() {
        head += (k as f64 + t).powf(-c);
    }
    let mut tail = n.powf(1.0 - c) / (c - 1.0) + 0.5 * n.powf(-c);

    // j-th correction: B_2j / (2j)! * c (c+1) ... (c+2j-2) * n^{-c-2j+1}
    let mut rising = c;
    let mut fact = 2.0;
    let mut power = n.powf(-c - 1.0);
    let mut err = f64::INFINITY;
    for (j, &b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b / fact * rising * power;
        if term.abs() <= 0.5 * tol {
            err = term.abs();
            break;
        }
        tail += term;
        let jj = (j + 1) as f64;
        rising *= (c + 2.0 * jj - 1.0) * (c + 2.0 * jj);
        fact *= (2.0 * jj + 1.0) * (2.0 * jj + 2.0);
        power /= n * n;
    }
    if !err.is_finite() {
        return None;
    }
    let value = head + tail;
    let rounding = 4.0 * f64::EPSILON * value.abs() * (1.0 + (k_terms as f64).sqrt());
    let half = err + rounding;
    Some(Bracketed {
        value,
        lo: value - half,
        hi: value + half,
    })
}

/// Integral-test enclosure after `k_terms` direct terms:
/// `[(K + t)^{1-c}, (K + t - 1)^{1-c}] / (c - 1)` added to the partial sum.
pub fn zeta_integral_bracket(c: f64, t: f64, k_terms: u64) -> Result<Bracketed> {
    check_zeta_args(c, t)?;
    if k_terms == 0 || (k_terms as f64 + t - 1.0) <= 0.0 {
        return Err(Error::Domain("integral bracket needs K + t > 1".into()));
    }
    let mut head = 0.0;
    for k in (0..k_terms).rev() {
        head += (k as f64 + t).powf(-c);
    }
    let n = k_terms as f64 + t;
    let lo = head + n.powf(1.0 - c) / (c - 1.0);
    let hi = head + (n - 1.0).powf(1.0 - c) / (c - 1.0);
    Ok(Bracketed {
        value: 0.5 * (lo + hi),
        lo,
        hi,
    })
}

/// A bound as computed, plus whether it carries no information (it is at
/// least 1, or its precondition failed).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub raw: f64,
    pub vacuous: bool,
}

impl Bound {
    pub fn new(raw: f64) -> Self {
        Self {
            raw,
            vacuous: raw >= 1.0,
        }
    }

    fn precondition_failed() -> Self {
        Self {
            raw: 1.0,
            vacuous: true,
        }
    }

    /// The probability bound clipped to 1.
    pub fn reported(&self) -> f64 {
        self.raw.min(1.0)
    }
}

/// `exp(-r^2 / (2(t + 1)))`, bounding how far one neighbor's aggregate
/// trust can exceed a legitimate neighbor's by `r`.
pub fn pairwise_tail_bound(r: f64, t: u64) -> Bound {
    if r <= 0.0 {
        return Bound::precondition_failed();
    }
    Bound::new((-r * r / (2.0 * (t + 1) as f64)).exp())
}

/// `exp(-(gap * cum_p + r)^2 / (2(t + 1)))` for a malicious neighbor whose
/// cumulative attack floor is `cum_p`.
pub fn malicious_tail_bound(r: f64, gap: f64, cum_p: f64, t: u64) -> Bound {
    let s = gap * cum_p + r;
    if s <= 0.0 {
        return Bound::precondition_failed();
    }
    Bound::new((-s * s / (2.0 * (t + 1) as f64)).exp())
}

/// `deg * exp(-xi^2 / (2(t + 1)))`, bounding the chance that a legitimate
/// neighbor is left out.
pub fn legit_misclass_bound(degree: usize, xi: f64, t: u64) -> Bound {
    Bound::new(degree as f64 * (-xi * xi / (2.0 * (t + 1) as f64)).exp())
}

/// `exp(-(gap * cum_p - xi)^2 / (2(t + 1)))`, bounding the chance that a
/// malicious neighbor is let in.
pub fn malicious_misclass_bound(gap: f64, cum_p: f64, xi: f64, t: u64) -> Bound {
    let s = gap * cum_p - xi;
    if s <= 0.0 {
        return Bound::precondition_failed();
    }
    Bound::new((-s * s / (2.0 * (t + 1) as f64)).exp())
}

/// `exp(-q^2 / 2)`, uniform in `t`.
pub fn concentration_tail_bound(q: f64) -> Bound {
    if q <= 0.0 {
        return Bound::precondition_failed();
    }
    Bound::new((-q * q / 2.0).exp())
}

/// Model constants shared by the bound formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub n_legit: usize,
    pub n_malicious: usize,
    pub gap: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eta: f64,
    pub kappa: f64,
    pub delta: f64,
    pub t0: u64,
}

impl BoundInputs {
    pub fn n_total(&self) -> usize {
        self.n_legit + self.n_malicious
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.gap > 0.0) {
            return fail(format!("trust gap must be positive, got {}", self.gap));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return fail(format!("eps1 and eps2 must be positive, got {} and {}", self.eps1, self.eps2));
        }
        if !(self.eta > 0.0 && self.kappa > 0.0) {
            return fail(format!("eta and kappa must be positive, got {} and {}", self.eta, self.kappa));
        }
        if self.n_legit == 0 {
            return fail("at least one legitimate agent is required".into());
        }
        Ok(())
    }

    /// `|L|^2 |N| ζ(1+eps1, s) + |L| |M| ζ(1+eps2, s)`
    fn misclassification_sum(&self, offset: f64) -> Result<f64> {
        let l = self.n_legit as f64;
        let legit = l * l * self.n_total() as f64 * hurwitz_zeta(1.0 + self.eps1, offset)?;
        let mal = if self.n_malicious == 0 {
            0.0
        } else {
            l * self.n_malicious as f64 * hurwitz_zeta(1.0 + self.eps2, offset)?
        };
        Ok(legit + mal)
    }
}

/// Bound on `P(T_f > t - 1)`.
pub fn tf_tail_bound(inputs: &BoundInputs, t: u64) -> Result<Bound> {
    if t < 1 {
        return Err(Error::Domain("the T_f tail bound needs t >= 1".into()));
    }
    Ok(Bound::new(inputs.misclassification_sum(t as f64)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GFunctions {
    pub legit: f64,
    pub malicious: f64,
}

/// Zeta sums at offset `t0 - 1` driving the deviation and rate bounds.
pub fn g_functions(inputs: &BoundInputs) -> Result<GFunctions> {
    if inputs.t0 < 2 {
        return Err(Error::Domain(format!("g functions need t0 >= 2, got {}", inputs.t0)));
    }
    let offset = (inputs.t0 - 1) as f64;
    let malicious = if inputs.n_malicious == 0 {
        0.0
    } else {
        inputs.n_legit as f64 * inputs.n_malicious as f64 * hurwitz_zeta(1.0 + inputs.eps2, offset)?
    };
    Ok(GFunctions {
        legit: inputs.misclassification_sum(offset)?,
        malicious,
    })
}

/// `2 (2 eta / delta * g_L + eta / (kappa delta) * g_M)`
pub fn deviation_bound(inputs: &BoundInputs, g: &GFunctions) -> Result<f64> {
    if !(inputs.delta > 0.0 && inputs.delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {}", inputs.delta)));
    }
    let (eta, d) = (inputs.eta, inputs.delta);
    Ok(2.0 * (2.0 * eta / d * g.legit + eta / (inputs.kappa * d) * g.malicious))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBound {
    /// `min_τ 2 eta (τ - t0 + 2) rho2^(t - τ)`
    pub value: f64,
    /// Minimizing `τ`, the latest one among ties.
    pub tau: u64,
    /// Probability with which the bound holds, possibly negative.
    pub probability_floor: f64,
}

/// Geometric rate bound at time `t`, minimized over the switch time `τ`.
pub fn rate_bound(inputs: &BoundInputs, t: u64, rho2: f64) -> Result<RateBound> {
    let (value, tau) = rate_term(inputs.eta, inputs.t0, t, rho2)?;
    let g = g_functions(inputs)?;
    Ok(RateBound {
        value,
        tau,
        probability_floor: 1.0 - g.legit,
    })
}

/// `2 eta (τ - t0 + 2) rho2^(t - τ)` minimized over `τ ∈ [t0 - 1, t]`.
pub fn rate_term(eta: f64, t0: u64, t: u64, rho2: f64) -> Result<(f64, u64)> {
    if !(0.0..1.0).contains(&rho2) {
        return Err(Error::Domain(format!("rho2 must lie in [0, 1), got {rho2}")));
    }
    if t0 < 1 || t + 1 < t0 {
        return Err(Error::Domain(format!("rate bound needs t >= t0 - 1, got t={t}, t0={t0}")));
    }
    let mut best = (f64::INFINITY, t);
    for tau in (t0 - 1)..=t {
        let v = rate_at(eta, t0, t, tau, rho2);
        if v <= best.0 {
            best = (v, tau);
        }
    }
    Ok(best)
}

/// `2 eta (τ - t0 + 2) rho2^(t - τ)` at a fixed `τ`.
pub fn rate_at(eta: f64, t0: u64, t: u64, tau: u64, rho2: f64) -> f64 {
    let steps = (tau + 2 - t0) as f64;
    2.0 * eta * steps * rho2.powi((t - tau) as i32)
}

/// Rate term plus `2 eta` times the chance of leaving the nominal dynamics.
pub fn expected_rate_bound(inputs: &BoundInputs, t: u64, rho2: f64) -> Result<f64> {
    let r = rate_bound(inputs, t, rho2)?;
    Ok(r.value + 2.0 * inputs.eta * (1.0 - r.probability_floor))
}

/// `sqrt(Σ nu_i z_i^2)`
pub fn nu_norm(z: &[f64], nu: &[f64]) -> Result<f64> {
    if z.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: nu.len(),
            got: z.len(),
        });
    }
    Ok(z.iter().zip(nu).map(|(a, w)| w * a * a).sum::<f64>().sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Signed slack; negative when the condition fails.
    pub margin: f64,
    /// Earliest time from which the condition holds through the horizon.
    pub from_t: Option<u64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const EPS_CONSTRAINT: &str = "eps_constraint";
pub const THRESHOLD_FLOOR: &str = "threshold_floor";
pub const ATTACK_FLOOR: &str = "attack_floor";
pub const ATTACK_RATE_FLOOR: &str = "attack_rate_floor";

/// `eps2` at which `sqrt(1 + eps2) = 2 sqrt(1 + eps1) / gap`.
pub fn required_eps2(eps1: f64, gap: f64) -> f64 {
    let r = 2.0 * (1.0 + eps1).sqrt() / gap;
    r * r - 1.0
}

/// Checks the sufficient conditions on the threshold and attack floors.
///
/// * `eps_constraint`: `sqrt(1 + eps2) >= 2 sqrt(1 + eps1) / gap`.
/// * `threshold_floor`: `xi_t >= sqrt((1 + eps)(t + 1) ln(t + 1))` from some
///   `t'` through `horizon`.
/// * `attack_floor`: `gap * Σ_{k<=t} p(k) >= xi_t + sqrt((1 + eps)(t + 1) ln(t + 1))`
///   from some `t'` through `horizon`, with `p` the policy's smallest
///   conditional attack probability.
/// * `attack_rate_floor`: `Σ_{k<=t} p(k) >= sqrt((1 + eps2)(t + 1) ln(t + 1))`
///   for every `t` up to `horizon`.
pub fn validate_assumptions(
    inputs: &BoundInputs,
    schedule: &ThresholdSchedule,
    policy: &AttackPolicy,
    horizon: u64,
    eps: f64,
) -> AssumptionReport {
    let mut checks = Vec::new();

    let lhs = (1.0 + inputs.eps2).sqrt();
    let rhs = 2.0 * (1.0 + inputs.eps1).sqrt() / inputs.gap;
    checks.push(AssumptionCheck {
        name: EPS_CONSTRAINT,
        passed: lhs >= rhs,
        margin: lhs - rhs,
        from_t: None,
        detail: format!(
            "sqrt(1+eps2)={lhs:.6} vs 2*sqrt(1+eps1)/gap={rhs:.6}; eps2 must be at least {:.6}",
            required_eps2(inputs.eps1, inputs.gap)
        ),
    });

    let floor = |t: u64| cumulative_floor(eps, t);
    let mut thr_from = None;
    let mut thr_margin = f64::INFINITY;
    let mut atk_from = None;
    let mut atk_margin = f64::INFINITY;
    let mut rate_ok = true;
    let mut rate_margin = f64::INFINITY;
    let mut cum_p = 0.0;
    for t in 0..=horizon {
        cum_p += min_conditional_probability(policy, t);
        let xi = schedule.threshold(t);
        let m_thr = xi - floor(t);
        let m_atk = inputs.gap * cum_p - xi - floor(t);
        // Relative slack absorbs rounding where both sides vanish at t = 0.
        let tiny = 1e-12 * (1.0 + xi);
        if m_thr >= -tiny {
            thr_from.get_or_insert(t);
        } else {
            thr_from = None;
        }
        if m_atk >= -tiny {
            atk_from.get_or_insert(t);
        } else {
            atk_from = None;
        }
        thr_margin = if thr_from.is_some() { thr_margin.min(m_thr) } else { f64::INFINITY };
        atk_margin = if atk_from.is_some() { atk_margin.min(m_atk) } else { f64::INFINITY };
        let m_rate = cum_p - cumulative_floor(inputs.eps2, t);
        rate_margin = rate_margin.min(m_rate);
        if m_rate < -1e-12 * (1.0 + cum_p) {
            rate_ok = false;
        }
    }
    let at_horizon = |v: f64| if v.is_finite() { v } else { f64::NEG_INFINITY };
    let final_xi = schedule.threshold(horizon);
    let final_cum = cumulative_min_probability(policy, horizon);

    checks.push(AssumptionCheck {
        name: THRESHOLD_FLOOR,
        passed: thr_from.is_some(),
        margin: match thr_from {
            Some(_) => thr_margin,
            None => at_horizon(final_xi - floor(horizon)).min(0.0),
        },
        from_t: thr_from,
        detail: format!("eps={eps}, horizon={horizon}, xi_T={final_xi:.6}, floor_T={:.6}", floor(horizon)),
    });
    checks.push(AssumptionCheck {
        name: ATTACK_FLOOR,
        passed: atk_from.is_some(),
        margin: match atk_from {
            Some(_) => atk_margin,
            None => (inputs.gap * final_cum - final_xi - floor(horizon)).min(0.0),
        },
        from_t: atk_from,
        detail: format!(
            "eps={eps}, horizon={horizon}, gap*cum_p_T={:.6}, xi_T+floor_T={:.6}",
            inputs.gap * final_cum,
            final_xi + floor(horizon)
        ),
    });
    checks.push(AssumptionCheck {
        name: ATTACK_RATE_FLOOR,
        passed: rate_ok,
        margin: rate_margin,
        from_t: if rate_ok { Some(0) } else { None },
        detail: format!("policy={}, eps2={}, horizon={horizon}", policy.name(), inputs.eps2),
    });
    AssumptionReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn benchmark_inputs() -> BoundInputs {
        BoundInputs {
            n_legit: 20,
            n_malicious: 30,
            gap: 0.4,
            eps1: 0.005,
            eps2: 5.0,
            eta: 4.0,
            kappa: 10.0,
            delta: 0.1,
            t0: 25,
        }
    }

    #[test]
    fn basel_and_shift() {
        let z = hurwitz_zeta_bracketed(2.0, 1.0, 1e-10).unwrap();
        assert!((z.value - PI * PI / 6.0).abs() < 1e-10);
        assert!(z.contains(PI * PI / 6.0));
        assert!((hurwitz_zeta(2.0, 2.0).unwrap() - (PI * PI / 6.0 - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn zeta_errors() {
        assert!(matches!(hurwitz_zeta(1.0, 1.0), Err(Error::Divergence(_))));
        assert!(matches!(hurwitz_zeta(0.5, 1.0), Err(Error::Divergence(_))));
        assert!(matches!(hurwitz_zeta(2.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zeta_against_integral_bracket() {
        // Large direct sums with the integral enclosure, an independent
        // method, must overlap the Euler-Maclaurin value.
        for &(c, t) in &[(2.0, 1.0), (1.5, 0.3), (3.0, 7.0), (6.0, 24.0), (1.2, 2.0)] {
            let z = hurwitz_zeta(c, t).unwrap();
            let ib = zeta_integral_bracket(c, t, 2_000_000).unwrap();
            assert!(ib.lo - 1e-10 <= z && z <= ib.hi + 1e-10, "c={c} t={t}: {z} not in {ib:?}");
        }
    }

    #[test]
    fn zeta_small_offset() {
        // ζ(2, 1/2) = 3 ζ(2) = π²/2
        assert!((hurwitz_zeta(2.0, 0.5).unwrap() - PI * PI / 2.0).abs() < 1e-10);
        // ζ(3, 1) = Apéry's constant
        assert!((hurwitz_zeta(3.0, 1.0).unwrap() - 1.202_056_903_159_594_3).abs() < 1e-10);
    }

    #[test]
    fn zeta_huge_value_terminates() {
        // Near 1.3e6, where 1e-10 is finer than the double spacing.
        let (c, t) = (7.2021066130326021, 0.14223860887422202);
        let b = hurwitz_zeta_bracketed(c, t, ZETA_TOL).unwrap();
        let head = t.powf(-c);
        assert!(b.value > head && b.half_width() <= 1e-12 * b.value);
        let ib = zeta_integral_bracket(c, t, 10_000).unwrap();
        assert!(b.lo <= ib.hi && ib.lo <= b.hi, "{b:?} vs {ib:?}");
    }

    #[test]
    fn tail_substitutions() {
        let t = 9;
        let r = (2.0 * (t + 1) as f64).sqrt();
        assert!((pairwise_tail_bound(r, t).raw - (-1f64).exp()).abs() < 1e-15);
        assert!(pairwise_tail_bound(1e-12, t).raw >= 1.0 - 1e-15);
        assert!(pairwise_tail_bound(0.0, t).vacuous);

        let (gap, cum) = (0.4, 37.0);
        let r = -gap * cum + r;
        assert!((malicious_tail_bound(r, gap, cum, t).raw - (-1f64).exp()).abs() < 1e-14);
        let b = malicious_tail_bound(-1.0, gap, 0.0, t);
        assert!(b.vacuous && b.raw == 1.0);
    }

    #[test]
    fn misclassification_substitutions() {
        let t = 49;
        let b = legit_misclass_bound(5, 0.0, t);
        assert_eq!(b.raw, 5.0);
        assert!(b.vacuous && b.reported() == 1.0);
        let xi = (2.0 * 50.0 * 5f64.ln()).sqrt();
        assert!((legit_misclass_bound(5, xi, t).raw - 1.0).abs() < 1e-12);

        let xi = 3.0;
        let cum = (xi + (2.0f64 * 50.0).sqrt()) / 0.4;
        assert!((malicious_misclass_bound(0.4, cum, xi, t).raw - (-1f64).exp()).abs() < 1e-14);

        // Persistent attacker against a linear threshold at half the gap.
        let gap = 0.4;
        for t in [1u64, 10, 100] {
            let n = (t + 1) as f64;
            let b = malicious_misclass_bound(gap, n, gap / 2.0 * n, t);
            assert!((b.raw - (-gap * gap * n / 8.0).exp()).abs() < 1e-14);
        }
        assert!(malicious_misclass_bound(0.4, 1.0, 5.0, 3).vacuous);
    }

    #[test]
    fn concentration_bound() {
        assert!((concentration_tail_bound(2.0).raw - (-2f64).exp()).abs() < 1e-15);
        assert!((concentration_tail_bound(2.0).raw - 0.1353).abs() < 1e-4);
        assert!(concentration_tail_bound(1e-9).raw > 1.0 - 1e-15);
    }

    #[test]
    fn tf_tail_small_case() {
        let inputs = BoundInputs {
            n_legit: 2,
            n_malicious: 1,
            eps1: 1.0,
            eps2: 1.0,
            ..benchmark_inputs()
        };
        let b = tf_tail_bound(&inputs, 2).unwrap();
        assert!((b.raw - 14.0 * (PI * PI / 6.0 - 1.0)).abs() < 1e-9);
        assert!(tf_tail_bound(&inputs, 0).is_err());
    }

    #[test]
    fn g_and_deviation() {
        let inputs = BoundInputs { n_malicious: 0, ..benchmark_inputs() };
        assert_eq!(g_functions(&inputs).unwrap().malicious, 0.0);
        let g = GFunctions { legit: 0.5, malicious: 0.2 };
        assert!((deviation_bound(&benchmark_inputs(), &g).unwrap() - 81.6).abs() < 1e-12);
        let zero = GFunctions { legit: 0.0, malicious: 0.0 };
        assert_eq!(deviation_bound(&benchmark_inputs(), &zero).unwrap(), 0.0);
        let bad = BoundInputs { delta: 1.0, ..benchmark_inputs() };
        assert!(deviation_bound(&bad, &g).is_err());
        assert!(g_functions(&BoundInputs { t0: 1, ..benchmark_inputs() }).is_err());
    }

    #[test]
    fn benchmark_g_values_compose_zeta() {
        let p = benchmark_inputs();
        let g = g_functions(&p).unwrap();
        let z1 = hurwitz_zeta(1.005, 24.0).unwrap();
        let z2 = hurwitz_zeta(6.0, 24.0).unwrap();
        assert!((g.legit - (400.0 * 50.0 * z1 + 600.0 * z2)).abs() < 1e-6);
        assert!((g.malicious - 600.0 * z2).abs() < 1e-12);
    }

    #[test]
    fn rate_degenerate_cases() {
        let p = benchmark_inputs();
        let r = rate_bound(&p, 24, 0.5).unwrap();
        assert_eq!(r.tau, 24);
        assert_eq!(r.value, 8.0);
        // ρ2 = 0: every τ < t gives 0.
        let (v, tau) = rate_term(4.0, 25, 60, 0.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(tau < 60);
        assert!(rate_term(4.0, 25, 10, 0.5).is_err());
        assert!(rate_term(4.0, 25, 30, 1.0).is_err());
        let e = expected_rate_bound(&p, 100, 0.8).unwrap();
        let g = g_functions(&p).unwrap();
        assert!((e - (rate_bound(&p, 100, 0.8).unwrap().value + 8.0 * g.legit)).abs() < 1e-9 * e);
    }

    #[test]
    fn nu_norms() {
        assert_eq!(nu_norm(&[0.0, 0.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((nu_norm(&[1.0; 4], &[0.25; 4]).unwrap() - 1.0).abs() < 1e-15);
        let (z, nu) = ([0.3, -1.2, 2.0], [0.2, 0.5, 0.3]);
        let direct = (0.2f64 * 0.09 + 0.5 * 1.44 + 0.3 * 4.0).sqrt();
        assert!((nu_norm(&z, &nu).unwrap() - direct).abs() < 1e-15);
        assert!(nu_norm(&[1.0], &nu).is_err());
    }

    #[test]
    fn epsilon_constraint() {
        let sched = ThresholdSchedule::SqrtLog { eps1: 0.005 };
        let policy = AttackPolicy::Persistent;
        let rep = validate_assumptions(&benchmark_inputs(), &sched, &policy, 200, 0.005);
        let c = rep.get(EPS_CONSTRAINT).unwrap();
        assert!(!c.passed);
        assert!((6f64.sqrt() - 2.0 * 1.005f64.sqrt() / 0.4 - c.margin).abs() < 1e-12);
        assert!((required_eps2(0.005, 0.4) - 24.125).abs() < 1e-12);

        let ok = BoundInputs { eps2: 25.0, ..benchmark_inputs() };
        assert!(validate_assumptions(&ok, &sched, &policy, 200, 0.005).get(EPS_CONSTRAINT).unwrap().passed);
    }

    #[test]
    fn persistent_attack_floor_from_some_time() {
        let sched = ThresholdSchedule::SqrtLog { eps1: 0.005 };
        let rep = validate_assumptions(&benchmark_inputs(), &sched, &AttackPolicy::Persistent, 10_000, 0.005);
        let c = rep.get(ATTACK_FLOOR).unwrap();
        assert!(c.passed);
        let from = c.from_t.unwrap();
        assert!(from > 0);
        // Independent sweep: fails just before t', holds from t' on.
        let lhs = |t: u64| 0.4 * (t + 1) as f64;
        let rhs = |t: u64| 2.0 * (1.005 * (t + 1) as f64 * ((t + 1) as f64).ln()).sqrt();
        assert!(lhs(from - 1) < rhs(from - 1));
        assert!((from..=10_000).all(|t| lhs(t) >= rhs(t)));
        assert!(rep.get(THRESHOLD_FLOOR).unwrap().passed);
        assert_eq!(rep.get(THRESHOLD_FLOOR).unwrap().from_t, Some(0));
    }

    #[test]
    fn low_threshold_fails_floor() {
        let sched = ThresholdSchedule::PowerLaw { scale: 0.1, gamma: 0.6 };
        let rep = validate_assumptions(&benchmark_inputs(), &sched, &AttackPolicy::Persistent, 1000, 0.005);
        let c = rep.get(THRESHOLD_FLOOR).unwrap();
        assert!(!c.passed && c.margin < 0.0);
    }

    proptest! {
        #[test]
        fn zeta_shift_identity(c in 1.01..8.0f64, t in 0.05..60.0f64) {
            let a = hurwitz_zeta(c, t).unwrap();
            let b = hurwitz_zeta(c, t + 1.0).unwrap();
            prop_assert!((a - t.powf(-c) - b).abs() <= 2.0 * ZETA_TOL + 1e-14 * a);
        }

        #[test]
        fn pairwise_decreasing_in_r(a in 0.01..50.0f64, b in 0.01..50.0f64, t in 0u64..500) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(pairwise_tail_bound(hi, t).raw <= pairwise_tail_bound(lo, t).raw);
        }

        #[test]
        fn malicious_misclass_decreasing_in_cum(a in 0.0..300.0f64, b in 0.0..300.0f64, t in 0u64..300) {
            let xi = ThresholdSchedule::SqrtLog { eps1: 0.005 }.threshold(t);
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(malicious_misclass_bound(0.4, hi, xi, t).raw <= malicious_misclass_bound(0.4, lo, xi, t).raw);
        }

        #[test]
        fn tf_tail_nonincreasing(t in 1u64..400) {
            let p = benchmark_inputs();
            prop_assert!(tf_tail_bound(&p, t + 1).unwrap().raw <= tf_tail_bound(&p, t).unwrap().raw);
        }

        #[test]
        fn deviation_monotone(t0 in 2u64..60, d1 in 0.01..0.99f64, d2 in 0.01..0.99f64) {
            let p = BoundInputs { t0, ..benchmark_inputs() };
            let q = BoundInputs { t0: t0 + 1, ..benchmark_inputs() };
            let dp = deviation_bound(&p, &g_functions(&p).unwrap()).unwrap();
            let dq = deviation_bound(&q, &g_functions(&q).unwrap()).unwrap();
            prop_assert!(dq <= dp);
            let (lo, hi) = (d1.min(d2), d1.max(d2));
            let g = g_functions(&p).unwrap();
            let a = deviation_bound(&BoundInputs { delta: lo, ..p }, &g).unwrap();
            let b = deviation_bound(&BoundInputs { delta: hi, ..p }, &g).unwrap();
            prop_assert!(b <= a);
        }

        #[test]
        fn rate_nonincreasing_in_t_at_fixed_tau(rho in 0.0..0.999f64, tau in 24u64..200, dt in 0u64..100) {
            prop_assert!(rate_at(4.0, 25, tau + dt + 1, tau, rho) <= rate_at(4.0, 25, tau + dt, tau, rho));
        }
    }
}
