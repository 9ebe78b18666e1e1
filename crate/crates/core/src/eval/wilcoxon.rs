use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{EvalError, Result};

/// Largest sample size (after dropping zero differences) given the exact
/// null distribution.
pub const EXACT_MAX_N: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W−)`.
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Paired two-sided signed-rank test of `a − b`. Zero differences are
/// dropped; tied magnitudes get average ranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(EvalError::Wilcoxon(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(EvalError::Wilcoxon("non-finite score".into()));
    }
    if diffs.is_empty() && !a.is_empty() {
        return Ok(WilcoxonResult {
            n: 0,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            method: WilcoxonMethod::Degenerate,
        });
    }
    let n = diffs.len();
    if n < 5 {
        return Err(EvalError::Wilcoxon(format!("need at least 5 non-zero differences, got {n}")));
    }

    // Doubled average ranks stay integral.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut rank2 = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // Ranks start+1 ..= end, doubled average = start + 1 + end.
        for &i in &order[start..end] {
            rank2[i] = (start + 1 + end) as u64;
        }
        tie_sizes.push(end - start);
        start = end;
    }
    let w_plus2: u64 = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| rank2[i]).sum();
    let total2: u64 = rank2.iter().sum();
    let w_plus = w_plus2 as f64 / 2.0;
    let w_minus = (total2 - w_plus2) as f64 / 2.0;

    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&rank2, w_plus2), WilcoxonMethod::Exact)
    } else {
        (normal_p(n, w_plus, &tie_sizes), WilcoxonMethod::Normal)
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        p_value,
        method,
    })
}

/// Null distribution of doubled `W+` over all `2^n` sign patterns, by
/// counting subsets of the doubled ranks.
fn exact_p(rank2: &[u64], w_plus2: u64) -> f64 {
    let total: u64 = rank2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    for &r in rank2 {
        for s in (r as usize..=total as usize).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let all = 2f64.powi(rank2.len() as i32);
    let lower: f64 = counts[..=w_plus2 as usize].iter().sum::<f64>() / all;
    let upper: f64 = counts[w_plus2 as usize..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie-corrected variance and continuity
/// correction.
fn normal_p(n: usize, w_plus: f64, tie_sizes: &[usize]) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enumerates every sign pattern directly.
    fn brute_force_p(diffs: &[f64]) -> f64 {
        let n = diffs.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
        let mut ranks = vec![0.0; n];
        let mut s = 0;
        while s < n {
            let mut e = s + 1;
            while e < n && diffs[idx[e]].abs() == diffs[idx[s]].abs() {
                e += 1;
            }
            for &i in &idx[s..e] {
                ranks[i] = (s + 1 + e) as f64 / 2.0;
            }
            s = e;
        }
        let observed: f64 = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| ranks[i]).sum();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= observed + 1e-9 {
                le += 1;
            }
            if w >= observed - 1e-9 {
                ge += 1;
            }
        }
        let all = (1u64 << n) as f64;
        (2.0 * (le as f64 / all).min(ge as f64 / all)).min(1.0)
    }

    #[test]
    fn all_positive_six() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [0.0; 6];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.w_plus, 21.0);
        assert!((r.p_value - 2.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn identical_vectors() {
        let a = [0.3, 0.5, 0.1];
        let r = wilcoxon_signed_rank(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.method, WilcoxonMethod::Degenerate);
    }

    #[test]
    fn preconditions() {
        assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(5..=12);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=3) as f64).collect();
            let b = vec![0.0; n];
            let Ok(r) = wilcoxon_signed_rank(&a, &b) else { continue };
            if r.method != WilcoxonMethod::Exact {
                continue;
            }
            let nz: Vec<f64> = a.iter().copied().filter(|x| *x != 0.0).collect();
            assert!((r.p_value - brute_force_p(&nz)).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_approximation_is_close_at_25() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let a: Vec<f64> = (0..25).map(|_| rng.random::<f64>() + 0.1).collect();
            let b: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let exact = wilcoxon_signed_rank(&a, &b).unwrap();
            let approx = normal_p(25, exact.w_plus, &[1; 25]);
            assert!((exact.p_value - approx).abs() < 0.02, "{} vs {approx}", exact.p_value);
        }
    }
}
