//! Measures of the danger windows W_ψ(Q1,Q2) = ∪ Δ_ψ(p,q) over
//! Q1 ≤ ‖q‖_ν ≤ Q2, compared against the law λ(W) ≈ 1 − e^{−ηF}.

use num_integer::Integer;
use rand::RngCore;

use crate::cf_oracle::window_hit;
use crate::core_theory::{eta, ApproxFunction, NormKind, NormSpec};
use crate::error::{invalid, Error, Result};
use crate::fractal::{CodingScheme, Word};
use crate::geometry::{q_shell, round_half_down, RowDensity};
use crate::rng::{count_hits, proportion, shard_rng, unit, unit_bits};
use crate::tolerances::SCHEDULE_SLACK;

/// Largest integer range the one-dimensional multiplicity sum sieves.
const SIEVE_LIMIT: u64 = 1 << 26;

/// Whether a window is inside the range where the measure law is expected
/// to hold: Q1 ≥ 100, φ(Q1) ≤ F/10 and F ≤ 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    InRegime,
    Marginal,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::InRegime => "in-regime",
            Regime::Marginal => "marginal",
        })
    }
}

pub fn regime(psi: &ApproxFunction, q1: f64, q2: f64) -> Result<Regime> {
    let f = psi.f_psi(q1, q2)?;
    Ok(if q1 >= 100.0 && psi.phi(q1) <= f / 10.0 && f <= 0.5 {
        Regime::InRegime
    } else {
        Regime::Marginal
    })
}

fn check_norms(psi: &ApproxFunction, mu: &NormSpec, nv: &NormSpec) -> Result<()> {
    let d = psi.dims();
    if mu.dim() != d.m || nv.dim() != d.n {
        return invalid(format!(
            "norm dimensions ({}, {}) do not match (m, n) = ({}, {})",
            mu.dim(),
            nv.dim(),
            d.m,
            d.n
        ));
    }
    Ok(())
}

fn check_window(q1: f64, q2: f64) -> Result<()> {
    if !(q1 > 0.0 && q2 >= q1 && q2.is_finite()) {
        return invalid(format!("bad window Q1={q1}, Q2={q2}"));
    }
    Ok(())
}

/// Whether the one-dimensional exact path applies: qψ(q) < 1/2 on the
/// window, so every hit comes from a convergent or one of its multiples.
fn one_dim_ok(psi: &ApproxFunction, q1: f64, q2: f64, mu: &NormSpec, nv: &NormSpec) -> bool {
    let d = psi.dims();
    if d.m != 1 || d.n != 1 {
        return false;
    }
    let steps = 256;
    let (a, b) = (q1.ln(), q2.ln());
    (0..=steps).all(|i| {
        let q = (a + (b - a) * i as f64 / steps as f64).exp();
        psi.phi(q) / (mu.scale() * nv.scale()) < 0.5 * (1.0 - 1e-9)
    })
}

/// Monte Carlo estimate of λ_K(W_ψ(Q1,Q2)) with its standard error.
pub fn mc_window_measure(
    psi: &ApproxFunction,
    q1: f64,
    q2: f64,
    mu: &NormSpec,
    nv: &NormSpec,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    check_norms(psi, mu, nv)?;
    check_window(q1, q2)?;
    let d = psi.dims().big_d();
    measure_in_cell(psi, q1, q2, mu, nv, &vec![0; d], 0, samples, seed)
}

/// (N^k)^D · λ_K(K_ω ∩ W_ψ(Q1,Q2)): the window measure seen from inside the
/// cylinder K_ω, sampled through Φ_ω. Requires Q^k ≤ Q1 ≤ Q2 ≤ Q^{k+1}.
#[allow(clippy::too_many_arguments)]
pub fn local_window_measure(
    scheme: &CodingScheme,
    word: &Word,
    psi: &ApproxFunction,
    q1: f64,
    q2: f64,
    mu: &NormSpec,
    nv: &NormSpec,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    check_norms(psi, mu, nv)?;
    check_window(q1, q2)?;
    if scheme.dims() != psi.dims() {
        return invalid("coding scheme and psi have different dimensions");
    }
    let k = word.len();
    if k >= scheme.depth() {
        return invalid(format!("word length {k} leaves no block in a schedule of depth {}", scheme.depth()));
    }
    let s = scheme.schedule();
    let (lo, hi) = (s.ln_q(k), s.ln_q(k + 1));
    let slack = SCHEDULE_SLACK * hi.abs().max(1.0);
    if q1.ln() < lo - slack || q2.ln() > hi + slack {
        return invalid(format!(
            "window [{q1}, {q2}] is outside block {k}: [{}, {}]",
            lo.exp(),
            hi.exp()
        ));
    }
    let offset = scheme.offset(word)?;
    measure_in_cell(psi, q1, q2, mu, nv, &offset, scheme.log2_nk(k), samples, seed)
}

/// Samples A = (C + Y)/N^k with Y uniform in K.
#[allow(clippy::too_many_arguments)]
fn measure_in_cell(
    psi: &ApproxFunction,
    q1: f64,
    q2: f64,
    mu: &NormSpec,
    nv: &NormSpec,
    offset: &[u128],
    log2_nk: u64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return invalid("samples must be positive");
    }
    if one_dim_ok(psi, q1, q2, mu, nv) && log2_nk + 53 <= 127 {
        // x = (C·2^53 + b) / (N^k·2^53), exact in u128
        let (sm, sn) = (mu.scale(), nv.scale());
        let base = offset[0] << 53;
        let den = 1u128 << (log2_nk + 53);
        let (lo, hi) = (q1 / sn, q2 / sn);
        let hits = count_hits(samples, seed, |rng| {
            let b = unit_bits(rng) as u128;
            window_hit(base + b, den, lo, hi, |q| psi.psi(sn * q) / sm)
        });
        return Ok(proportion(hits, samples));
    }
    if log2_nk > 40 {
        return Err(Error::Precision(format!(
            "cylinder sampling needs N^k ≤ 2^40 outside the one-dimensional path, got 2^{log2_nk}"
        )));
    }
    let d = psi.dims();
    let (m, n) = (d.m, d.n);
    let nk = (1u128 << log2_nk) as i128;
    let nkf = nk as f64;
    // per q: radius and the row offsets (C q mod N^k)
    let mut prepared: Vec<(Vec<f64>, f64, Vec<f64>)> = Vec::new();
    for (q, norm) in q_shell(nv, q1, q2)? {
        let r = psi.psi(norm);
        if r <= 0.0 {
            continue;
        }
        let offs = (0..m)
            .map(|i| {
                let s: i128 = (0..n).map(|j| offset[i * n + j] as i128 * q[j] as i128).sum();
                s.rem_euclid(nk) as f64
            })
            .collect();
        prepared.push((q.iter().map(|&x| x as f64).collect(), r, offs));
    }
    let hits = count_hits(samples, seed, |rng| {
        let y: Vec<f64> = (0..m * n).map(|_| unit(rng)).collect();
        let mut res = vec![0.0; m];
        prepared.iter().any(|(q, r, offs)| {
            for i in 0..m {
                let v = offs[i] + (0..n).map(|j| y[i * n + j] * q[j]).sum::<f64>();
                res[i] = (v - nkf * round_half_down(v / nkf)) / nkf;
            }
            mu.norm(&res) <= *r
        })
    });
    Ok(proportion(hits, samples))
}

/// Squarefree divisors of g with their Möbius signs.
fn mobius_divisors(mut g: u64) -> Vec<(u64, i64)> {
    let mut primes = Vec::new();
    let mut p = 2;
    while p * p <= g {
        if g % p == 0 {
            primes.push(p);
            while g % p == 0 {
                g /= p;
            }
        }
        p += 1;
    }
    if g > 1 {
        primes.push(g);
    }
    let mut out = vec![(1u64, 1i64)];
    for p in primes {
        let more: Vec<(u64, i64)> = out.iter().map(|&(d, s)| (d * p, -s)).collect();
        out.extend(more);
    }
    out
}

fn mobius_from_spf(mut g: u64, spf: &[u32]) -> Vec<(u64, i64)> {
    let mut out = vec![(1u64, 1i64)];
    while g > 1 {
        let p = spf[g as usize] as u64;
        while g % p == 0 {
            g /= p;
        }
        let more: Vec<(u64, i64)> = out.iter().map(|&(d, s)| (d * p, -s)).collect();
        out.extend(more);
    }
    out
}

fn smallest_prime_factors(limit: usize) -> Vec<u32> {
    let mut spf = vec![0u32; limit + 1];
    for i in 2..=limit {
        if spf[i] == 0 {
            let mut j = i;
            while j <= limit {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
                j += i;
            }
        }
    }
    spf
}

/// Σ_t |[dt − r, dt + r] ∩ [0, q]| / q.
fn uniform_row_sum(q: u64, d: u64, r: f64) -> f64 {
    let (qf, df) = (q as f64, d as f64);
    let h = |t: i64| {
        let x = t as f64 * df;
        ((x + r).min(qf) - (x - r).max(0.0)).max(0.0) / qf
    };
    let t_lo = (-r / df).ceil() as i64;
    let t_hi = ((qf + r) / df).floor() as i64;
    if 2.0 * r >= qf || t_hi - t_lo < 64 {
        return (t_lo..=t_hi).map(h).sum();
    }
    let a = (r / df).ceil() as i64;
    let b = ((qf - r) / df).floor() as i64;
    let interior = (b - a + 1).max(0) as f64 * 2.0 * r / qf;
    interior + (t_lo..a).map(h).sum::<f64>() + (b + 1..=t_hi).map(h).sum::<f64>()
}

/// Σ λ_K(Δ_ψ(p,q)) over primitive (p,q), one of each ± pair, with
/// Q1 ≤ ‖q‖_ν ≤ Q2. Needs a sup-norm μ.
pub fn sum_with_multiplicity(
    psi: &ApproxFunction,
    q1: f64,
    q2: f64,
    mu: &NormSpec,
    nv: &NormSpec,
) -> Result<f64> {
    check_norms(psi, mu, nv)?;
    check_window(q1, q2)?;
    if mu.kind() != NormKind::Sup {
        return Err(Error::ExactMeasureRequiresSup);
    }
    let m = psi.dims().m as i32;
    let sm = mu.scale();
    if psi.dims().n == 1 {
        let sn = nv.scale();
        let lo = (q1 / sn).ceil().max(1.0) as u64;
        let hi = (q2 / sn).floor() as u64;
        if hi < lo {
            return Ok(0.0);
        }
        if hi > SIEVE_LIMIT {
            return Err(Error::BudgetExceeded { required: hi as u128, limit: SIEVE_LIMIT as u128 });
        }
        let spf = smallest_prime_factors(hi as usize);
        let mut total = 0.0;
        for q in lo..=hi {
            let r = psi.psi(sn * q as f64) / sm;
            if r <= 0.0 {
                continue;
            }
            for (d, s) in mobius_from_spf(q, &spf) {
                total += s as f64 * uniform_row_sum(q, d, r).powi(m);
            }
        }
        return Ok(total);
    }
    let mut total = 0.0;
    for (q, norm) in q_shell(nv, q1, q2)? {
        let r = psi.psi(norm) / sm;
        if r <= 0.0 {
            continue;
        }
        let rho = RowDensity::new(&q)?;
        let (lo, hi) = rho.support();
        let g = q.iter().fold(0i64, |a, &b| a.gcd(&b)) as u64;
        for (d, s) in mobius_divisors(g) {
            let df = d as f64;
            let t_lo = ((lo as f64 - r) / df).ceil() as i64;
            let t_hi = ((hi as f64 + r) / df).floor() as i64;
            let row: f64 = (t_lo..=t_hi).map(|t| rho.window(t as f64 * df, r)).sum();
            total += s as f64 * row.powi(m);
        }
    }
    Ok(total)
}

/// Outcome of the quasi-independence audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairAudit {
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub samples: usize,
}

/// For sampled primitive r = (p, q) with Q1 ≤ q ≤ Q2, computes
/// Σ_{r' ∉ Zr, q ≤ |q'| ≤ Q2} λ(Δ(r) ∩ Δ(r')) exactly and reports its ratio to
/// Ψ(q)·(F + φ(Q1)). Only m = n = 1 is supported.
pub fn pair_correlation_audit(psi: &ApproxFunction, q1: f64, q2: f64, samples: usize, seed: u64) -> Result<PairAudit> {
    let d = psi.dims();
    if d.m != 1 || d.n != 1 {
        return Err(Error::Unsupported("pair correlation audit is exact only for m = n = 1".into()));
    }
    check_window(q1, q2)?;
    let lo = q1.ceil().max(1.0) as u64;
    let hi = q2.floor() as u64;
    if hi < lo {
        return invalid("window contains no integer q");
    }
    if samples == 0 {
        return invalid("samples must be positive");
    }
    let norm = psi.f_psi(q1, q2)? + psi.phi(q1);
    let interval = |p: u64, q: u64| {
        let c = p as f64 / q as f64;
        let w = psi.psi(q as f64) / q as f64;
        ((c - w).max(0.0), (c + w).min(1.0))
    };
    let mut rng = shard_rng(seed, 0);
    let (mut max_ratio, mut sum_ratio) = (0.0f64, 0.0);
    for _ in 0..samples {
        let q = lo + rng.next_u64() % (hi - lo + 1);
        let p = loop {
            let p = rng.next_u64() % (q + 1);
            if p.gcd(&q) == 1 {
                break p;
            }
        };
        let (a, b) = interval(p, q);
        let w = psi.psi(q as f64) / q as f64;
        let mut total = 0.0;
        for q2i in q..=hi {
            let w2 = psi.psi(q2i as f64) / q2i as f64;
            let c = p as f64 / q as f64;
            let from = ((c - w - w2) * q2i as f64).floor().max(0.0) as u64;
            let to = ((c + w + w2) * q2i as f64).ceil().min(q2i as f64) as u64;
            for p2 in from..=to {
                if p2 * q == p * q2i {
                    continue;
                }
                let (a2, b2) = interval(p2, q2i);
                total += (b.min(b2) - a.max(a2)).max(0.0);
            }
        }
        // r' and −r' are distinct lattice vectors with the same slab
        let ratio = 2.0 * total / (psi.big_psi(q as f64) * norm);
        max_ratio = max_ratio.max(ratio);
        sum_ratio += ratio;
    }
    Ok(PairAudit { max_ratio, mean_ratio: sum_ratio / samples as f64, samples })
}

/// n·V_ν·∫_a^b q^{n−1} f(q) dq, the integral of f(‖x‖_ν) over a ≤ ‖x‖_ν ≤ b.
pub fn radial_integral(nv: &NormSpec, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = nv.dim();
    let g = |q: f64| q.powi(n as i32 - 1) * f(q);
    let steps = 1 << 14;
    let h = (b - a) / steps as f64;
    let mut s = g(a) + g(b);
    for i in 1..steps {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + i as f64 * h);
    }
    n as f64 * nv.volume() * s * h / 3.0
}

/// Everything known about one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub q1: f64,
    pub q2: f64,
    pub mc_measure: f64,
    pub stderr: f64,
    pub multiplicity_sum: Option<f64>,
    pub predicted_f: f64,
    pub predicted_measure: f64,
    pub pair_correlation: Option<PairAudit>,
    pub regime: Regime,
}

impl WindowReport {
    /// −log(1 − measure)/(ηF).
    pub fn law_ratio(&self, eta: f64) -> f64 {
        -(1.0 - self.mc_measure).ln() / (eta * self.predicted_f)
    }
}

/// Runs the Monte Carlo estimate and, where available, the exact
/// multiplicity sum and the pair audit.
#[allow(clippy::too_many_arguments)]
pub fn window_report(
    psi: &ApproxFunction,
    q1: f64,
    q2: f64,
    mu: &NormSpec,
    nv: &NormSpec,
    samples: u64,
    seed: u64,
    pair_samples: usize,
) -> Result<WindowReport> {
    let (mc, se) = mc_window_measure(psi, q1, q2, mu, nv, samples, seed)?;
    let f = psi.f_psi(q1, q2)?;
    let e = eta(psi.dims(), mu, nv)?;
    let multiplicity_sum = match sum_with_multiplicity(psi, q1, q2, mu, nv) {
        Ok(v) => Some(v),
        Err(Error::ExactMeasureRequiresSup) | Err(Error::BudgetExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    let pair_correlation = if pair_samples > 0 && psi.dims().m == 1 && psi.dims().n == 1 {
        Some(pair_correlation_audit(psi, q1, q2, pair_samples, seed)?)
    } else {
        None
    };
    Ok(WindowReport {
        q1,
        q2,
        mc_measure: mc,
        stderr: se,
        multiplicity_sum,
        predicted_f: f,
        predicted_measure: 1.0 - (-e * f).exp(),
        pair_correlation,
        regime: regime(psi, q1, q2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_theory::Dimensions;
    use crate::fractal::CodingScheme;
    use crate::scheduler::build_schedule;
    use std::f64::consts::PI;

    fn d11() -> Dimensions {
        Dimensions::new(1, 1).unwrap()
    }

    fn euler_phi(mut n: u64) -> u64 {
        let mut out = n;
        let mut p = 2;
        while p * p <= n {
            if n % p == 0 {
                while n % p == 0 {
                    n /= p;
                }
                out -= out / p;
            }
            p += 1;
        }
        if n > 1 {
            out -= out / n;
        }
        out
    }

    #[test]
    fn trivial_windows() {
        let sup = NormSpec::sup(1);
        let zero = ApproxFunction::zero(d11());
        assert_eq!(mc_window_measure(&zero, 10.0, 1000.0, &sup, &sup, 5000, 1).unwrap().0, 0.0);
        let star = ApproxFunction::power_law(d11(), 1.0).unwrap();
        let (est, _) = mc_window_measure(&star, 1.0, 1e4, &sup, &sup, 5000, 1).unwrap();
        assert_eq!(est, 1.0);
        let p = ApproxFunction::power_law(d11(), 0.05).unwrap();
        let single = sum_with_multiplicity(&p, 50.0, 50.0, &sup, &sup).unwrap();
        assert!((single - 2.0 * 0.05 * 20.0 / 2500.0).abs() < 1e-15);
        assert_eq!(sum_with_multiplicity(&p, 50.5, 50.7, &sup, &sup).unwrap(), 0.0);
    }

    #[test]
    fn fast_and_generic_paths_agree() {
        // the generic path is forced by a 1×1 L2 norm scaled so that φ/scale is still small
        let sup = NormSpec::sup(1);
        let psi = ApproxFunction::power_law(d11(), 0.05).unwrap();
        let fast = mc_window_measure(&psi, 10.0, 300.0, &sup, &sup, 200_000, 9).unwrap();
        let s = q_shell(&sup, 10.0, 300.0).unwrap();
        let prepared: Vec<(f64, f64)> = s.iter().map(|(q, n)| (q[0] as f64, psi.psi(*n))).collect();
        let hits = count_hits(200_000, 10, |rng| {
            let x = unit(rng);
            prepared.iter().any(|&(q, r)| {
                let v = q * x;
                (v - v.round()).abs() <= r
            })
        });
        let (slow, se) = proportion(hits, 200_000);
        assert!((fast.0 - slow).abs() <= 4.0 * (se * se + fast.1 * fast.1).sqrt());
        // above φ = 1/2 the generic path runs and still agrees with brute force
        let wide = ApproxFunction::power_law(d11(), 0.7).unwrap();
        let (g, gse) = mc_window_measure(&wide, 2.0, 20.0, &sup, &sup, 50_000, 2).unwrap();
        let hits = count_hits(50_000, 3, |rng| {
            let x = unit(rng);
            (2..=20).any(|q| {
                let v = q as f64 * x;
                (v - v.round()).abs() <= 0.7 / q as f64
            })
        });
        let (b, bse) = proportion(hits, 50_000);
        assert!((g - b).abs() <= 4.0 * (gse * gse + bse * bse).sqrt());
    }

    #[test]
    fn multiplicity_sum_matches_euler_phi() {
        let sup = NormSpec::sup(1);
        let kappa = 0.05;
        let psi = ApproxFunction::power_law(d11(), kappa).unwrap();
        let got = sum_with_multiplicity(&psi, 10.0, 1000.0, &sup, &sup).unwrap();
        let oracle: f64 = (10..=1000u64).map(|q| 2.0 * kappa * euler_phi(q) as f64 / (q * q) as f64).sum();
        assert!((got - oracle).abs() < 1e-12 * oracle);
        // q = 1 contributes the two half slabs at 0 and 1
        let got = sum_with_multiplicity(&psi, 1.0, 1.0, &sup, &sup).unwrap();
        assert!((got - 2.0 * kappa).abs() < 1e-15);
    }

    #[test]
    fn multiplicity_sum_approaches_eta_f() {
        let sup = NormSpec::sup(1);
        let psi = ApproxFunction::power_law(d11(), 0.02).unwrap();
        let e = 12.0 / (PI * PI);
        let (q1, q2) = (1000.0, 1000.0 * 10f64.exp());
        let s = sum_with_multiplicity(&psi, q1, q2, &sup, &sup).unwrap();
        let ratio = s / (e * psi.f_psi(q1, q2).unwrap());
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn two_dimensional_sum_against_brute_force() {
        // m = 1, n = 2: primitive (p, q1, q2), slab measure from the row density
        let d = Dimensions::new(1, 2).unwrap();
        let psi = ApproxFunction::power_law(d, 0.1).unwrap();
        let nv = NormSpec::sup(2);
        let mu = NormSpec::sup(1);
        let got = sum_with_multiplicity(&psi, 2.0, 6.0, &mu, &nv).unwrap();
        let mut oracle = 0.0;
        for (q, norm) in q_shell(&nv, 2.0, 6.0).unwrap() {
            let rho = RowDensity::new(&q).unwrap();
            let r = psi.psi(norm);
            for p in -20i64..=20 {
                let g = p.gcd(&q[0]).gcd(&q[1]);
                if g == 1 {
                    oracle += rho.window(p as f64, r);
                }
            }
        }
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        let l2 = NormSpec::new(NormKind::L2, 1).unwrap();
        assert_eq!(sum_with_multiplicity(&psi, 2.0, 6.0, &l2, &nv), Err(Error::ExactMeasureRequiresSup));
    }

    #[test]
    fn union_bound_holds() {
        for (m, n, kappa, q2) in [(1, 1, 0.05, 300.0), (1, 2, 0.1, 8.0), (2, 1, 0.1, 12.0), (2, 2, 0.2, 5.0)] {
            let d = Dimensions::new(m, n).unwrap();
            let psi = ApproxFunction::power_law(d, kappa).unwrap();
            let (mu, nv) = (NormSpec::sup(m), NormSpec::sup(n));
            let (est, se) = mc_window_measure(&psi, 2.0, q2, &mu, &nv, 20_000, 4).unwrap();
            let sum = sum_with_multiplicity(&psi, 2.0, q2, &mu, &nv).unwrap();
            assert!(est <= sum + 4.0 * se, "{m}x{n}: {est} vs {sum}");
        }
    }

    #[test]
    fn law_holds_in_regime() {
        let sup = NormSpec::sup(1);
        let e = 12.0 / (PI * PI);
        for (kappa, f) in [(0.02, 0.3), (0.02, 0.25), (0.01, 0.15)] {
            let psi = ApproxFunction::power_law(d11(), kappa).unwrap();
            let (q1, q2) = (1000.0, 1000.0 * (f / kappa).exp());
            assert_eq!(regime(&psi, q1, q2).unwrap(), Regime::InRegime);
            let (est, se) = mc_window_measure(&psi, q1, q2, &sup, &sup, 200_000, 5).unwrap();
            let f = psi.f_psi(q1, q2).unwrap();
            let lhs = -(1.0 - est).ln();
            let bar = 4.0 * se / (1.0 - est);
            assert!((lhs - e * f).abs() <= (0.15 * e * f).max(bar), "κ={kappa}: {lhs} vs {}", e * f);
        }
    }

    #[test]
    fn pair_audit() {
        let tiny = ApproxFunction::power_law(d11(), 1e-6).unwrap();
        let a = pair_correlation_audit(&tiny, 50.0, 500.0, 50, 1).unwrap();
        assert_eq!(a.max_ratio, 0.0);
        let psi = ApproxFunction::power_law(d11(), 0.02).unwrap();
        let a = pair_correlation_audit(&psi, 50.0, 500.0, 200, 1).unwrap();
        assert!(a.max_ratio.is_finite() && a.max_ratio <= 50.0, "{a:?}");
        let wide = ApproxFunction::power_law(d11(), 0.2).unwrap();
        let a = pair_correlation_audit(&wide, 5.0, 500.0, 200, 1).unwrap();
        assert!(a.mean_ratio > 0.0 && a.max_ratio <= 50.0, "{a:?}");
        let d12 = Dimensions::new(1, 2).unwrap();
        let p12 = ApproxFunction::power_law(d12, 0.02).unwrap();
        assert!(matches!(pair_correlation_audit(&p12, 5.0, 10.0, 5, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn multiples_are_not_pairs() {
        // with q' = 2q only p' = 2p lands on the same centre; it must add nothing
        let psi = ApproxFunction::power_law(d11(), 0.001).unwrap();
        let a = pair_correlation_audit(&psi, 7.0, 14.0, 30, 2).unwrap();
        assert_eq!(a.max_ratio, 0.0);
    }

    #[test]
    fn radial_integrals() {
        let mut rng = shard_rng(8, 0);
        let fs: [(&str, fn(f64) -> f64); 3] = [
            ("exp", |q| (-q).exp()),
            ("rational", |q| 1.0 / (1.0 + q * q).powi(3)),
            ("indicator", |q| if q <= 1.5 { 1.0 } else { 0.0 }),
        ];
        for (kind, n) in [(NormKind::Sup, 2), (NormKind::L1, 2), (NormKind::L2, 3)] {
            let nv = NormSpec::new(kind, n).unwrap();
            for (name, f) in fs {
                let exact = radial_integral(&nv, f, 0.0, 40.0);
                let side = 2.0 * 40.0;
                let samples = 200_000;
                let vals: Vec<f64> = (0..samples)
                    .map(|_| {
                        let x: Vec<f64> = (0..n).map(|_| (unit(&mut rng) - 0.5) * side).collect();
                        let r = nv.norm(&x);
                        if r <= 40.0 {
                            f(r) * side.powi(n as i32)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mean = vals.iter().sum::<f64>() / samples as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
                let se = (var / samples as f64).sqrt();
                assert!((mean - exact).abs() <= 3.0 * se.max(1e-12), "{name} {kind:?}: {mean} vs {exact}");
            }
        }
    }

    #[test]
    fn empty_word_matches_global() {
        let sup = NormSpec::sup(1);
        let psi = ApproxFunction::power_law(d11(), 0.05).unwrap();
        let s = build_schedule(&psi, 0.1, 0.5, 4).unwrap();
        let scheme = CodingScheme::new(s.clone(), d11());
        let (q1, q2) = (s.q(0), s.q(1));
        let a = local_window_measure(&scheme, &Word::empty(), &psi, q1, q2, &sup, &sup, 30_000, 6).unwrap();
        let b = mc_window_measure(&psi, q1, q2, &sup, &sup, 30_000, 6).unwrap();
        assert_eq!(a, b);
        let w = Word { letters: vec![vec![0]] };
        assert!(local_window_measure(&scheme, &w, &psi, q1, q2, &sup, &sup, 1000, 6).is_err());
    }

    #[test]
    fn cylinders_average_to_the_global_measure() {
        // N = 2 per level: the four depth-two cylinders partition K
        for (m, n) in [(1, 1), (1, 2)] {
            let d = Dimensions::new(m, n).unwrap();
            let psi = ApproxFunction::power_law(d, 0.3).unwrap();
            let s = build_schedule(&ApproxFunction::power_law(d, 1.0).unwrap(), 0.5 * d.alpha() * 2f64.ln(), d.alpha(), 6).unwrap();
            assert!(s.exponents().iter().all(|&e| e == 1));
            let scheme = CodingScheme::new(s.clone(), d);
            let (mu, nv) = (NormSpec::sup(m), NormSpec::sup(n));
            let (q1, q2) = (s.q(2), s.q(3));
            let samples = 40_000;
            let (global, gse) = mc_window_measure(&psi, q1, q2, &mu, &nv, samples, 12).unwrap();
            let cells: Vec<Vec<u64>> = (0..1u64 << d.big_d()).map(|b| (0..d.big_d()).map(|i| (b >> i) & 1).collect()).collect();
            let mut acc = 0.0;
            let mut var = 0.0;
            let mut count = 0.0;
            for a in &cells {
                for b in &cells {
                    let w = Word { letters: vec![a.clone(), b.clone()] };
                    let (v, se) = local_window_measure(&scheme, &w, &psi, q1, q2, &mu, &nv, samples, 13).unwrap();
                    acc += v;
                    var += se * se;
                    count += 1.0;
                }
            }
            let avg = acc / count;
            let se = (var / (count * count) + gse * gse).sqrt();
            assert!((avg - global).abs() <= 4.0 * se, "{m}x{n}: {avg} vs {global}");
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let sup = NormSpec::sup(1);
        let psi = ApproxFunction::power_law(d11(), 0.05).unwrap();
        let a = window_report(&psi, 10.0, 1000.0, &sup, &sup, 50_000, 77, 20).unwrap();
        let b = window_report(&psi, 10.0, 1000.0, &sup, &sup, 50_000, 77, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.regime, Regime::Marginal);
        assert!(a.multiplicity_sum.is_some() && a.pair_correlation.is_some());
    }
}
