//! Total variation between n-fold product distributions.
//!
//! Sequences with the same symbol counts have the same mass under any i.i.d.
//! law, so the exact distance only needs one term per count vector:
//!
//! `tv = 1/2 * sum_types multinomial(n; k) * |prod p_i^k_i - prod q_i^k_i|`
//!
//! evaluated in log space. The number of count vectors is
//! `C(n + K - 1, K - 1)` for alphabet size `K`, which stays tractable for
//! the small alphabets this crate targets.

use super::ProbVec;
use crate::{Error, Result};

// enumeration budget, number of count vectors
const MAX_TYPES: u128 = 50_000_000;

/// Cumulative `ln(k!)` table for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    for k in 1..=n {
        t.push(t[k - 1] + (k as f64).ln());
    }
    t
}

fn count_types(n: usize, k: usize) -> u128 {
    // C(n + k - 1, k - 1) with early saturation
    let mut c: u128 = 1;
    for i in 0..(k - 1) {
        c = c.saturating_mul((n + i + 1) as u128) / (i as u128 + 1);
        if c > MAX_TYPES * 2 {
            return u128::MAX;
        }
    }
    c
}

/// Exact total variation distance between `p^(x n)` and `q^(x n)`, the
/// n-fold independent products of `p` and `q`.
pub fn product_tv(p: &ProbVec, q: &ProbVec, n: usize) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("product length must be positive".into()));
    }
    let k = p.len();
    let types = count_types(n, k);
    if types > MAX_TYPES {
        return Err(Error::TooLarge {
            what: "product type classes",
            required: types,
            budget: MAX_TYPES,
        });
    }
    let lnf = ln_factorials(n);
    let ln_p: Vec<f64> = p.iter().map(|&v| v.ln()).collect();
    let ln_q: Vec<f64> = q.iter().map(|&v| v.ln()).collect();

    // Walk count vectors with a running log-multinomial and log-mass for
    // the first `k - 1` symbols; the last symbol takes the remainder.
    let mut counts = vec![0usize; k];
    let mut total = 0.0;
    visit(
        0,
        n,
        &mut counts,
        &lnf,
        &ln_p,
        &ln_q,
        lnf[n],
        0.0,
        0.0,
        &mut total,
    );
    Ok((0.5 * total).min(1.0))
}

#[allow(clippy::too_many_arguments)]
fn visit(
    sym: usize,
    remaining: usize,
    counts: &mut [usize],
    lnf: &[f64],
    ln_p: &[f64],
    ln_q: &[f64],
    ln_comb: f64,
    lp: f64,
    lq: f64,
    total: &mut f64,
) {
    let k = counts.len();
    if sym == k - 1 {
        let c = remaining;
        let (mut lp, mut lq) = (lp, lq);
        if c > 0 {
            lp += c as f64 * ln_p[sym];
            lq += c as f64 * ln_q[sym];
        }
        let ln_comb = ln_comb - lnf[c];
        *total += ((ln_comb + lp).exp() - (ln_comb + lq).exp()).abs();
        return;
    }
    for c in 0..=remaining {
        let (mut nlp, mut nlq) = (lp, lq);
        if c > 0 {
            nlp += c as f64 * ln_p[sym];
            nlq += c as f64 * ln_q[sym];
        }
        counts[sym] = c;
        visit(
            sym + 1,
            remaining - c,
            counts,
            lnf,
            ln_p,
            ln_q,
            ln_comb - lnf[c],
            nlp,
            nlq,
            total,
        );
    }
    counts[sym] = 0;
}

/// Limit superior of the product distance as the block length grows: zero
/// when the single-letter laws already agree within `tol`, one otherwise,
/// because any fixed gap between `p` and `q` drives the product distance to
/// one exponentially fast.
pub fn limsup_product_tv(p: &ProbVec, q: &ProbVec, tol: f64) -> Result<f64> {
    let single = super::tv_distance(p, q)?;
    Ok(if single <= tol { 0.0 } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVec {
        ProbVec::new(v.to_vec()).unwrap()
    }

    // Brute-force oracle: enumerate all k^n sequences.
    fn oracle_sequences(p: &[f64], q: &[f64], n: usize) -> f64 {
        let k = p.len();
        let total = k.pow(n as u32);
        let mut s = 0.0;
        for mut flat in 0..total {
            let (mut mp, mut mq) = (1.0, 1.0);
            for _ in 0..n {
                let sym = flat % k;
                flat /= k;
                mp *= p[sym];
                mq *= q[sym];
            }
            s += (mp - mq).abs();
        }
        0.5 * s
    }

    #[test]
    fn matches_sequence_enumeration() {
        let cases: [(&[f64], &[f64]); 3] = [
            (&[0.5, 0.5], &[0.6, 0.4]),
            (&[0.2, 0.3, 0.5], &[0.3, 0.3, 0.4]),
            (&[1.0, 0.0], &[0.9, 0.1]),
        ];
        for (a, b) in cases {
            for n in 1..=8 {
                let fast = product_tv(&pv(a), &pv(b), n).unwrap();
                let slow = oracle_sequences(a, b, n);
                assert!(
                    (fast - slow).abs() < 1e-12,
                    "n={n}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn frozen_binary_values() {
        let p = pv(&[0.5, 0.5]);
        let q = pv(&[0.6, 0.4]);
        assert!((product_tv(&p, &q, 1).unwrap() - 0.1).abs() < 1e-15);
        assert!((product_tv(&p, &q, 2).unwrap() - 0.11).abs() < 1e-15);
        assert!((product_tv(&p, &q, 4).unwrap() - 0.1627).abs() < 1e-9);
    }

    #[test]
    fn identical_laws_stay_at_zero() {
        let p = pv(&[0.3, 0.7]);
        for n in [1, 7, 64, 511] {
            assert_eq!(product_tv(&p, &p, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn distance_grows_toward_one() {
        let p = pv(&[0.5, 0.5]);
        let q = pv(&[0.6, 0.4]);
        let mut prev = 0.0;
        for n in [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024] {
            let tv = product_tv(&p, &q, n).unwrap();
            assert!(tv >= prev - 1e-12, "n={n} decreased: {tv} < {prev}");
            assert!(tv <= 1.0);
            prev = tv;
        }
        assert!(prev > 0.99, "n=1024 distance only {prev}");
    }

    #[test]
    fn limsup_is_two_valued() {
        let p = pv(&[0.5, 0.5]);
        let q = pv(&[0.6, 0.4]);
        assert_eq!(limsup_product_tv(&p, &q, 1e-9).unwrap(), 1.0);
        assert_eq!(limsup_product_tv(&p, &p, 1e-9).unwrap(), 0.0);
        // a gap inside the tolerance counts as equality
        let r = pv(&[0.5 + 1e-12, 0.5 - 1e-12]);
        assert_eq!(limsup_product_tv(&p, &r, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn rejects_oversized_enumerations() {
        let p = ProbVec::uniform(20);
        let err = product_tv(&p, &p, 4096).unwrap_err();
        assert!(matches!(err, crate::Error::TooLarge { .. }));
    }
}
