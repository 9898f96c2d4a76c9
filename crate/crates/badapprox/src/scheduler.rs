//! Block schedules (N_k): powers of two chosen greedily so that each block
//! [Q^k, Q^{k+1}] carries F_ψ mass between β and β + M_ψ·α·log 2.
//!
//! Products N^k overflow almost immediately, so the schedule stores the
//! exponents ℓ_k = log2 N_k and the running sums log2 N^k as integers.

use std::f64::consts::LN_2;

use crate::core_theory::{ApproxFunction, PsiFamily};
use crate::error::{invalid, Error, Result};
use crate::tolerances::SCHEDULE_SLACK;

/// Largest block exponent the greedy search will try.
pub const MAX_BLOCK_EXPONENT: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    psi: ApproxFunction,
    beta: f64,
    alpha: f64,
    /// ℓ_k with N_{k+1} = 2^{ℓ_k}, for k = 0..len.
    exponents: Vec<u64>,
    /// log2 N^k for k = 0..=len.
    cumulative: Vec<u64>,
}

impl Schedule {
    pub fn psi(&self) -> &ApproxFunction {
        &self.psi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// log2 N_{k+1}, the exponent of block k.
    pub fn exponent(&self, k: usize) -> u64 {
        self.exponents[k]
    }

    pub fn exponents(&self) -> &[u64] {
        &self.exponents
    }

    /// N_{k+1} if it fits in a u64.
    pub fn block(&self, k: usize) -> Option<u64> {
        let e = *self.exponents.get(k)?;
        (e < 64).then(|| 1u64 << e)
    }

    /// log2 N^k, for k = 0..=len.
    pub fn log2_nprod(&self, k: usize) -> u64 {
        self.cumulative[k]
    }

    /// N^k if it fits in a u128.
    pub fn nprod(&self, k: usize) -> Option<u128> {
        let e = *self.cumulative.get(k)?;
        (e < 128).then(|| 1u128 << e)
    }

    /// ln Q^k = α · log2 N^k · ln 2.
    pub fn ln_q(&self, k: usize) -> f64 {
        self.alpha * LN_2 * self.cumulative[k] as f64
    }

    /// Q^k as a float (may be infinite).
    pub fn q(&self, k: usize) -> f64 {
        self.ln_q(k).exp()
    }

    /// F_ψ(Q^k, Q^{k+1}).
    pub fn block_mass(&self, k: usize) -> f64 {
        block_mass(&self.psi, self.alpha, self.cumulative[k], self.exponents[k])
    }

    /// Upper end β + M_ψ α log 2 of the admissible band.
    pub fn upper_bound(&self) -> f64 {
        self.beta + self.psi.m_psi() * self.alpha * LN_2
    }

    /// Whether every block mass sits inside [β, β + M_ψ α log 2].
    pub fn check_bounds(&self) -> bool {
        let hi = self.upper_bound();
        (0..self.len()).all(|k| {
            let f = self.block_mass(k);
            f >= self.beta * (1.0 - SCHEDULE_SLACK) && f <= hi * (1.0 + SCHEDULE_SLACK)
        })
    }
}

fn block_mass(psi: &ApproxFunction, alpha: f64, start: u64, ell: u64) -> f64 {
    let a = alpha * LN_2 * start as f64;
    let w = alpha * LN_2 * ell as f64;
    psi.f_span(a, w)
}

fn validate(psi: &ApproxFunction, beta: f64, alpha: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return invalid(format!("beta must be positive, got {beta}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0,1), got {alpha}"));
    }
    if !psi.phi_monotone() {
        return invalid("phi must be nonincreasing");
    }
    Ok(())
}

/// Smallest ℓ ≥ 1 with F_ψ(Q, 2^{αℓ} Q) ≥ β, starting from log2 N^k = `start`.
fn greedy_exponent(psi: &ApproxFunction, beta: f64, alpha: f64, start: u64) -> Result<u64> {
    let enough = |ell: u64| block_mass(psi, alpha, start, ell) >= beta;
    let mut hi = 1u64;
    while !enough(hi) {
        if hi >= MAX_BLOCK_EXPONENT {
            return Err(Error::DivergenceViolated(format!(
                "no block of exponent <= 2^40 reaches beta={beta} after log2 N^k = {start}"
            )));
        }
        hi *= 2;
    }
    let mut lo = hi / 2; // enough(lo) is false, or lo == 0
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if enough(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn push_block(cumulative: &mut Vec<u64>, exponents: &mut Vec<u64>, ell: u64) -> Result<()> {
    let last = *cumulative.last().unwrap();
    let next = last
        .checked_add(ell)
        .ok_or_else(|| Error::InvalidArgument("log2 N^k overflows u64".into()))?;
    exponents.push(ell);
    cumulative.push(next);
    Ok(())
}

/// Greedy doubling schedule with `k_max` blocks.
pub fn build_schedule(psi: &ApproxFunction, beta: f64, alpha: f64, k_max: usize) -> Result<Schedule> {
    validate(psi, beta, alpha)?;
    if !psi.divergent() {
        return Err(Error::DivergenceViolated("F_psi(Q, infinity) is finite".into()));
    }
    let mut exponents = Vec::with_capacity(k_max);
    let mut cumulative = vec![0u64];
    for _ in 0..k_max {
        let ell = greedy_exponent(psi, beta, alpha, *cumulative.last().unwrap())?;
        push_block(&mut cumulative, &mut exponents, ell)?;
    }
    Ok(Schedule { psi: psi.clone(), beta, alpha, exponents, cumulative })
}

/// The constant schedule N_k = 2^{⌈β/(κ α log 2)⌉} for ψ = power law κ.
pub fn constant_schedule(psi: &ApproxFunction, beta: f64, alpha: f64, k_max: usize) -> Result<Schedule> {
    validate(psi, beta, alpha)?;
    let kappa = match psi.family() {
        PsiFamily::PowerLaw { kappa } => *kappa,
        _ => return invalid("the constant schedule needs a power law psi"),
    };
    let ell = constant_exponent(kappa, beta, alpha)?;
    let mut exponents = Vec::with_capacity(k_max);
    let mut cumulative = vec![0u64];
    for _ in 0..k_max {
        push_block(&mut cumulative, &mut exponents, ell)?;
    }
    Ok(Schedule { psi: psi.clone(), beta, alpha, exponents, cumulative })
}

/// ⌈β/(κ α log 2)⌉, nudged so it agrees with the block-mass test used by
/// the greedy builder.
pub fn constant_exponent(kappa: f64, beta: f64, alpha: f64) -> Result<u64> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    let raw = (beta / (kappa * alpha * LN_2)).ceil();
    if !(raw <= MAX_BLOCK_EXPONENT as f64) {
        return invalid(format!("block exponent {raw} exceeds 2^40"));
    }
    let mut ell = (raw as u64).max(1);
    let mass = |l: u64| kappa * (alpha * LN_2 * l as f64);
    while ell > 1 && mass(ell - 1) >= beta {
        ell -= 1;
    }
    while mass(ell) < beta {
        ell += 1;
    }
    Ok(ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_theory::Dimensions;
    use proptest::prelude::*;

    fn d11() -> Dimensions {
        Dimensions::new(1, 1).unwrap()
    }

    #[test]
    fn headline_exponent() {
        // independent arithmetic: 0.5 / (0.05 * 0.5 * ln 2) = 28.85...
        let raw = 0.5 / (0.05 * 0.5 * 0.693_147_180_559_945_3);
        assert!(raw > 28.0 && raw < 29.0);
        assert_eq!(constant_exponent(0.05, 0.5, 0.5).unwrap(), 29);
        let psi = ApproxFunction::power_law(d11(), 0.05).unwrap();
        let s = build_schedule(&psi, 0.5, 0.5, 5).unwrap();
        assert!(s.exponents().iter().all(|&e| e == 29));
        let f = s.block_mass(0);
        assert!(f >= 0.5 && f <= 0.5 + 0.05 * 0.5 * LN_2);
        assert!((f - 0.5025).abs() < 1e-4);
        assert_eq!(s.block(0), Some(1 << 29));
    }

    #[test]
    fn exact_ratio_one() {
        let beta = 0.5 * LN_2;
        assert_eq!(constant_exponent(1.0, beta, 0.5).unwrap(), 1);
        let psi = ApproxFunction::power_law(d11(), 1.0).unwrap();
        let s = constant_schedule(&psi, beta, 0.5, 3).unwrap();
        assert_eq!(s.block(2), Some(2));
    }

    #[test]
    fn log_corrected_is_nondecreasing() {
        let psi = ApproxFunction::log_corrected(d11(), 1.0).unwrap();
        let s = build_schedule(&psi, 0.3, 0.5, 50).unwrap();
        assert!(s.check_bounds());
        assert!(s.exponents().windows(2).all(|w| w[1] >= w[0]));
        assert!(s.exponent(49) > s.exponent(0));
        // quadrature-free oracle: γ(ln ln Q2 − ln ln Q1) for Q1 > 2
        for k in 1..50 {
            let a = s.ln_q(k);
            let b = s.ln_q(k + 1);
            if a < LN_2 {
                continue;
            }
            let oracle = b.ln() - a.ln();
            assert!((s.block_mass(k) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn minimality() {
        let psi = ApproxFunction::log_corrected(Dimensions::new(1, 2).unwrap(), 0.4).unwrap();
        let s = build_schedule(&psi, 0.25, 1.0 / 3.0, 30).unwrap();
        for k in 0..s.len() {
            let smaller = block_mass(&psi, s.alpha(), s.log2_nprod(k), s.exponent(k) - 1);
            assert!(smaller < s.beta());
        }
    }

    #[test]
    fn non_divergent_is_rejected() {
        let z = ApproxFunction::zero(d11());
        assert!(matches!(build_schedule(&z, 0.5, 0.5, 2), Err(Error::DivergenceViolated(_))));
        let tiny = ApproxFunction::log_corrected(d11(), 1e-300).unwrap();
        assert!(matches!(build_schedule(&tiny, 1.0, 0.5, 2), Err(Error::DivergenceViolated(_))));
    }

    #[test]
    fn bad_parameters() {
        let psi = ApproxFunction::power_law(d11(), 0.05).unwrap();
        assert!(build_schedule(&psi, 0.0, 0.5, 2).is_err());
        assert!(build_schedule(&psi, 0.5, 1.0, 2).is_err());
        let lc = ApproxFunction::log_corrected(d11(), 1.0).unwrap();
        assert!(constant_schedule(&lc, 0.5, 0.5, 2).is_err());
    }

    proptest! {
        #[test]
        fn power_law_greedy_equals_constant(kappa in 0.005f64..2.0, beta in 0.05f64..2.0, alpha in 0.1f64..0.9) {
            let psi = ApproxFunction::power_law(Dimensions::new(1, 1).unwrap(), kappa).unwrap();
            let g = build_schedule(&psi, beta, alpha, 6).unwrap();
            let c = constant_schedule(&psi, beta, alpha, 6).unwrap();
            prop_assert_eq!(g.exponents(), c.exponents());
            prop_assert!(g.check_bounds());
        }

        #[test]
        fn bounds_hold(gamma in 0.5f64..3.0, beta in 0.05f64..0.6) {
            let psi = ApproxFunction::log_corrected(Dimensions::new(2, 1).unwrap(), gamma).unwrap();
            let s = build_schedule(&psi, beta, 2.0 / 3.0, 20).unwrap();
            prop_assert!(s.check_bounds());
        }
    }
}
