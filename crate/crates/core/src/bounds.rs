//! Lower bounds on the optimal miss rate and competitive-ratio bounds for LPR.

use serde::Serialize;

use crate::dist::{LruStack, Rng, StackDistribution, Trace};
use crate::error::{Error, Result};
use crate::policies::{simulate, simulate_belady, Policy};
use crate::segments::{kl_miss_rate, segmentation};

/// Best lower bound on the optimal miss rate and the `G` attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    /// 0 when every `G` degenerates.
    pub best_g: usize,
    pub value: f64,
}

/// `G / sum_{j=0}^{C+G-1} 1/(1 - S(j))`; 0 when some `S(j) = 1` in range.
pub fn l_opt_for(dist: &StackDistribution, c: usize, g: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..c + g {
        let tail = 1.0 - dist.cum(j);
        if tail <= 1e-15 {
            return 0.0;
        }
        sum += 1.0 / tail;
    }
    g as f64 / sum
}

/// Maximizes the bound over `G in [1, V - C]`.
pub fn l_opt(dist: &StackDistribution, c: usize) -> Result<LowerBound> {
    let v = dist.len();
    if c == 0 || c >= v {
        return Err(Error::CapacityOutOfRange {
            capacity: c,
            min: 1,
            max: v.saturating_sub(1),
        });
    }
    let mut best = LowerBound {
        best_g: 0,
        value: 0.0,
    };
    for g in 1..=v - c {
        let value = l_opt_for(dist, c, g);
        if value > best.value {
            best = LowerBound { best_g: g, value };
        }
    }
    Ok(best)
}

/// LPR miss rate at capacity `C`, from the closed form at `K(C), L(C)`.
pub fn lpr_miss_rate(dist: &StackDistribution, c: usize) -> Result<f64> {
    let kl = segmentation(dist).kl_for_capacity(c)?;
    if c == 1 {
        return Ok(1.0 - dist.prob(1));
    }
    kl_miss_rate(dist, kl.k, kl.l, c)
}

/// Flattened distribution with the same LPR miss rate and no larger OPT bound:
/// `s' = (sigma, eta, ..., eta, eta')` over `W` depths, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiUniform {
    pub sigma: f64,
    pub eta: f64,
    pub eta_prime: f64,
    pub d: i64,
    pub w: usize,
    pub k: usize,
    pub l: usize,
    /// The law over `W` depths (zero tail trimmed).
    pub dist: StackDistribution,
}

impl QuasiUniform {
    /// `(L + D - C) eta + eta'`, the LPR miss rate of the transformed law.
    pub fn lpr_miss_rate(&self, c: usize) -> f64 {
        (self.l as i64 + self.d - c as i64) as f64 * self.eta + self.eta_prime
    }
}

pub fn quasi_uniform_transform(dist: &StackDistribution, c: usize) -> Result<QuasiUniform> {
    let v = dist.len();
    if c < 2 || c >= v {
        return Err(Error::CapacityOutOfRange {
            capacity: c,
            min: 2,
            max: v.saturating_sub(1),
        });
    }
    let kl = segmentation(dist).kl_for_capacity(c)?;
    let (k, l) = (kl.k, kl.l);
    let eta = dist.mean(k + 1, l);
    let sigma = dist.cum(k) - (k as f64 - 1.0) * eta;
    let tail = 1.0 - dist.cum(l);
    let ratio = tail / eta;
    let snapped = ratio.round();
    let ceil = if (ratio - snapped).abs() <= 1e-9 * snapped.max(1.0) {
        snapped
    } else {
        ratio.ceil()
    };
    let d = ceil as i64 - 1;
    let eta_prime = tail - d as f64 * eta;
    let w = (l as i64 + d + 1) as usize;

    let mut raw = vec![0.0; v];
    raw[0] = sigma;
    for x in raw.iter_mut().take(w - 1).skip(1) {
        *x = eta;
    }
    raw[w - 1] = eta_prime;
    let dist = StackDistribution::new(&raw)?;
    Ok(QuasiUniform {
        sigma,
        eta,
        eta_prime,
        d,
        w,
        k,
        l,
        dist,
    })
}

/// Upper bound on the LPR/OPT miss ratio through the quasi-uniform reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiBound {
    pub chi_tilde: f64,
    /// `M_LPR[s] / L_OPT[s]`.
    pub direct_ratio: f64,
    /// `ln C`, the growth rate of the bound in `C`.
    pub ln_c: f64,
    /// `ln(1 / M_LPR)` when `M_LPR >= 1/C`.
    pub ln_inv_miss: Option<f64>,
}

pub fn chi_upper_bound(dist: &StackDistribution, c: usize) -> Result<ChiBound> {
    let m = lpr_miss_rate(dist, c)?;
    let lo = l_opt(dist, c)?;
    let direct_ratio = if lo.value > 0.0 {
        m / lo.value
    } else {
        f64::INFINITY
    };
    let q = quasi_uniform_transform(dist, c)?;
    let (w, cf) = (q.w as f64, c as f64);
    let chi_tilde = if q.w > c + 2 {
        let lead = (q.eta_prime + (w - 1.0 - cf) * q.eta) / (w - cf);
        let num = (w - 2.0) * q.eta + q.eta_prime;
        let den = 0.5 * (w - 2.0 - cf) * q.eta + q.eta_prime;
        lead * (2.0 + 2.0 / q.eta * (num / den).ln())
    } else {
        direct_ratio
    };
    Ok(ChiBound {
        chi_tilde,
        direct_ratio,
        ln_c: cf.ln(),
        ln_inv_miss: (m >= 1.0 / cf && m > 0.0).then(|| (1.0 / m).ln()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalChi {
    pub accesses: u64,
    pub lpr_misses: u64,
    pub opt_misses: u64,
    pub ratio: f64,
}

impl EmpiricalChi {
    pub fn opt_miss_rate(&self) -> f64 {
        self.opt_misses as f64 / self.accesses as f64
    }
}

/// LPR and Belady misses on one generated trace of `n` accesses.
pub fn empirical_chi(
    dist: &StackDistribution,
    c: usize,
    n: usize,
    seed: u64,
) -> Result<EmpiricalChi> {
    let v = dist.len();
    let stack = LruStack::identity(v);
    let trace = Trace::generate(dist, &stack, n, &mut Rng::new(seed));
    let lpr = simulate(&Policy::Lpr(segmentation(dist)), &trace, c, &stack)?;
    let opt = simulate_belady(&trace, c)?;
    Ok(EmpiricalChi {
        accesses: n as u64,
        lpr_misses: lpr.misses,
        opt_misses: opt.misses,
        ratio: if opt.misses == 0 {
            f64::INFINITY
        } else {
            lpr.misses as f64 / opt.misses as f64
        },
    })
}

/// Summary of every bound at one capacity.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct BoundsReport {
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "L_opt")]
    pub l_opt: f64,
    pub best_G: usize,
    #[serde(rename = "M_lpr")]
    pub m_lpr: f64,
    pub chi_tilde: f64,
    pub empirical_chi: Option<f64>,
}

/// Bounds at capacity `c`; `empirical` gives `(accesses, seed)` for the
/// simulated ratio.
pub fn bounds_report(
    dist: &StackDistribution,
    c: usize,
    empirical: Option<(usize, u64)>,
) -> Result<BoundsReport> {
    let lo = l_opt(dist, c)?;
    let chi = chi_upper_bound(dist, c)?;
    let empirical_chi = empirical
        .map(|(n, seed)| empirical_chi(dist, c, n, seed).map(|e| e.ratio))
        .transpose()?;
    Ok(BoundsReport {
        c,
        l_opt: lo.value,
        best_G: lo.best_g,
        m_lpr: lpr_miss_rate(dist, c)?,
        chi_tilde: chi.chi_tilde,
        empirical_chi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::counterexample_distribution;
    use proptest::prelude::*;

    #[test]
    fn lower_bound_examples() {
        let u = StackDistribution::uniform(4).unwrap();
        assert!((l_opt_for(&u, 2, 1) - 3.0 / 13.0).abs() < 1e-15);
        let d = counterexample_distribution();
        assert!((l_opt_for(&d, 2, 1) - 5.0 / 17.0).abs() < 1e-15);
        let b = l_opt(&d, 2).unwrap();
        assert_eq!(b.best_g, 3);
        assert!((b.value - 0.4313).abs() < 1e-4, "{}", b.value);
        assert!(l_opt(&d, 8).is_err());
    }

    #[test]
    fn degenerate_tail_skipped() {
        // trailing zeros are trimmed, so only V = 2 remains
        let d = StackDistribution::new(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(l_opt(&d, 2).is_err());
        assert_eq!(
            l_opt(&d, 1).unwrap(),
            LowerBound {
                best_g: 1,
                value: 1.0 / 3.0
            }
        );
        // a G reaching S(j) = 1 contributes nothing
        assert_eq!(l_opt_for(&d, 1, 2), 0.0);
    }

    #[test]
    fn counterexample_transform() {
        let d = counterexample_distribution();
        let q = quasi_uniform_transform(&d, 2).unwrap();
        assert_eq!((q.k, q.l, q.d, q.w), (1, 3, 2, 6));
        assert_eq!(q.sigma, 1.0 / 16.0);
        assert_eq!(q.eta, 3.0 / 16.0);
        assert_eq!(q.eta_prime, 3.0 / 16.0);
        // zero tail trimmed: the transformed law lives on W depths
        let expect: Vec<f64> = [1.0, 3.0, 3.0, 3.0, 3.0, 3.0]
            .iter()
            .map(|x| x / 16.0)
            .collect();
        assert_eq!(q.dist.probs(), expect.as_slice());
        assert_eq!(q.lpr_miss_rate(2), 12.0 / 16.0);
        assert!((lpr_miss_rate(&q.dist, 2).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn transform_of_quasi_uniform_is_fixed() {
        let d = StackDistribution::normalized(&[1.0, 3.0, 3.0, 3.0, 3.0, 3.0, 0.0, 0.0]).unwrap();
        let q = quasi_uniform_transform(&d, 2).unwrap();
        for (a, b) in q.dist.probs().iter().zip(d.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn chi_on_counterexample() {
        let d = counterexample_distribution();
        let chi = chi_upper_bound(&d, 2).unwrap();
        assert!((chi.direct_ratio - 0.75 / 0.4313).abs() < 1e-3);
        assert!(chi.chi_tilde >= chi.direct_ratio);
    }

    #[test]
    fn empirical_ratio_at_least_one_for_decreasing() {
        let d = StackDistribution::normalized(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        for c in 1..6 {
            assert!(empirical_chi(&d, c, 20_000, 3).unwrap().ratio >= 1.0);
        }
    }

    #[test]
    fn report_fields() {
        let d = counterexample_distribution();
        let r = bounds_report(&d, 2, None).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        for key in [
            "C",
            "L_opt",
            "best_G",
            "M_lpr",
            "chi_tilde",
            "empirical_chi",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(r.m_lpr, 0.75);
    }

    fn coupled_pair() -> impl Strategy<Value = (StackDistribution, StackDistribution)> {
        (3usize..12)
            .prop_flat_map(|v| {
                (
                    prop::collection::vec(0.01f64..1.0, v),
                    prop::collection::vec((0usize..v, 0usize..v, 0.0f64..1.0), 0..6),
                )
            })
            .prop_map(|(w, moves)| {
                let base = StackDistribution::normalized(&w).unwrap();
                let mut shifted = base.probs().to_vec();
                for (a, b, f) in moves {
                    let (lo, hi) = (a.min(b), a.max(b));
                    let amount = shifted[hi] * f;
                    shifted[hi] -= amount;
                    shifted[lo] += amount;
                }
                (StackDistribution::normalized(&shifted).unwrap(), base)
            })
    }

    proptest! {
        #[test]
        fn more_mass_on_top_lowers_the_bound((upper, lower) in coupled_pair(), c in 1usize..3) {
            let v = upper.len();
            prop_assume!(c < v);
            let a = l_opt(&upper, c).unwrap().value;
            let b = l_opt(&lower, c).unwrap().value;
            prop_assert!(a <= b + 1e-12, "{a} > {b}");
        }

        #[test]
        fn transform_is_sound(w in prop::collection::vec(0.01f64..1.0, 4..14), c_frac in 0.0f64..1.0) {
            let d = StackDistribution::normalized(&w).unwrap();
            let v = d.len();
            let c = 2 + ((v - 3) as f64 * c_frac) as usize;
            let q = quasi_uniform_transform(&d, c).unwrap();
            prop_assert!((q.sigma + (q.w as f64 - 2.0) * q.eta + q.eta_prime - 1.0).abs() < 1e-12);
            prop_assert!(q.eta_prime > 0.0 && q.eta_prime <= q.eta * (1.0 + 1e-12));
            for j in 0..=v {
                prop_assert!(q.dist.cum(j) >= d.cum(j) - 1e-12);
            }
            let m = lpr_miss_rate(&d, c).unwrap();
            prop_assert!((lpr_miss_rate(&q.dist, c).unwrap() - m).abs() < 1e-12);
            prop_assert!((q.lpr_miss_rate(c) - m).abs() < 1e-12);
            let lo = l_opt(&d, c).unwrap().value;
            let lo2 = l_opt(&q.dist, c).unwrap().value;
            prop_assert!(lo2 <= lo + 1e-12);
            let chi = chi_upper_bound(&d, c).unwrap();
            prop_assert!(chi.direct_ratio <= m / lo2 + 1e-9);
        }
    }
}
