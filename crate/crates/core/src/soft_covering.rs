//! Exact output-law synthesis from finite random codebooks.
//!
//! A sender and receiver share a side sequence `w^n` and a codebook of
//! `floor(2^(nR))` codewords, each drawn i.i.d. from the description law
//! `P(u|w_i)` position by position. The sender picks a codeword uniformly
//! and the receiver pushes it through the observation channel `P(v|w,u)`.
//! The synthesized output law is then the codeword-uniform mixture of
//! product laws over `v^n`, computed here exactly by enumeration, and the
//! question is how far it sits from the memoryless target `prod P(v|w_i)`
//! in total variation.
//!
//! The rate that separates convergence from failure is the conditional
//! mutual information between description and observation, weighted by the
//! empirical type of the shared sequence. [`SynthesisSpec::threshold`]
//! computes it; [`rate_sweep`] tabulates the gap against it.
//!
//! Codebooks are derived from a seed, one stream per codeword index, so
//! every law here is a deterministic function of `(spec, w^n, rate, seed)`.

use crate::coding::{index_count, ln_index_count, product_vector};
use crate::prob::{
    conditional_mutual_information, tv_padded, Channel, EmpiricalDist, JointTable, ProbVec,
};
use crate::rng::{mix, Stream};
use crate::{Error, Result};

/// Term ceiling for exact enumeration, `codewords * |V|^n`.
const SYNTH_TERM_BUDGET: u128 = 10_000_000;

/// Single-letter model for conditional distribution synthesis: a side law,
/// a description channel, and an observation channel.
#[derive(Debug, Clone)]
pub struct SynthesisSpec {
    p_w: ProbVec,
    u_given_w: Channel,
    v_given_wu: Channel,
}

impl SynthesisSpec {
    pub fn new(p_w: ProbVec, u_given_w: Channel, v_given_wu: Channel) -> Result<Self> {
        let kw = p_w.len();
        if u_given_w.in_dims() != [kw] {
            return Err(Error::ShapeMismatch {
                context: "description channel must condition on the side alphabet".into(),
            });
        }
        let ku = u_given_w.out_dim();
        if v_given_wu.in_dims() != [kw, ku] {
            return Err(Error::ShapeMismatch {
                context: "observation channel must condition on side and description".into(),
            });
        }
        Ok(SynthesisSpec {
            p_w,
            u_given_w,
            v_given_wu,
        })
    }

    pub fn w_size(&self) -> usize {
        self.p_w.len()
    }

    pub fn u_size(&self) -> usize {
        self.u_given_w.out_dim()
    }

    pub fn v_size(&self) -> usize {
        self.v_given_wu.out_dim()
    }

    pub fn side_law(&self) -> &ProbVec {
        &self.p_w
    }

    /// Description-observation information threshold for a fixed side
    /// sequence, in bits: the conditional mutual information of the
    /// single-letter law reweighted by the empirical type of `ws`.
    pub fn threshold(&self, ws: &[usize]) -> Result<f64> {
        let (kw, ku, kv) = (self.w_size(), self.u_size(), self.v_size());
        let phat = EmpiricalDist::from_sequence(ws, kw)?.to_prob_vec()?;
        let mut data = vec![0.0; ku * kv * kw];
        for w in 0..kw {
            if phat[w] == 0.0 {
                continue;
            }
            let urow = self.u_given_w.try_row(w)?;
            for u in 0..ku {
                if urow[u] == 0.0 {
                    continue;
                }
                let vrow = self.v_given_wu.try_row(w * ku + u)?;
                for v in 0..kv {
                    data[(u * kv + v) * kw + w] = phat[w] * urow[u] * vrow[v];
                }
            }
        }
        let joint = JointTable::new(vec![ku, kv, kw], data)?;
        conditional_mutual_information(&joint)
    }

    /// Memoryless target `prod_i P(v | w_i)` as a dense law over `v^n`,
    /// indexed by the big-endian flat sequence index.
    pub fn target_law(&self, ws: &[usize]) -> Result<Vec<f64>> {
        self.check_block(ws, 0.0)?;
        let mut marginals = Vec::with_capacity(self.w_size());
        for w in 0..self.w_size() {
            let urow = self.u_given_w.try_row(w)?;
            let mut out = vec![0.0; self.v_size()];
            for (u, &pu) in urow.iter().enumerate() {
                if pu == 0.0 {
                    continue;
                }
                for (v, &pv) in self.v_given_wu.try_row(w * self.u_size() + u)?.iter().enumerate() {
                    out[v] += pu * pv;
                }
            }
            marginals.push(out);
        }
        let picked: Vec<&[f64]> = ws.iter().map(|&w| marginals[w].as_slice()).collect();
        Ok(product_vector(&picked, self.v_size()))
    }

    /// Exact output law of a seeded codebook at the given rate.
    pub fn synthesized_law(&self, ws: &[usize], rate: f64, seed: u64) -> Result<Vec<f64>> {
        let codewords = self.check_block(ws, rate)?;
        let (ku, kv) = (self.u_size(), self.v_size());
        let size = kv.pow(ws.len() as u32);
        let mut law = vec![0.0; size];
        let share = 1.0 / codewords as f64;
        for j in 0..codewords {
            let mut st = Stream::new(mix(seed, j));
            let mut vrows: Vec<&[f64]> = Vec::with_capacity(ws.len());
            for &w in ws {
                let u = st.sample(self.u_given_w.try_row(w)?);
                vrows.push(self.v_given_wu.try_row(w * ku + u)?);
            }
            for (acc, term) in law.iter_mut().zip(product_vector(&vrows, kv)) {
                *acc += share * term;
            }
        }
        Ok(law)
    }

    /// Total variation between the synthesized and target output laws.
    pub fn synthesis_gap(&self, ws: &[usize], rate: f64, seed: u64) -> Result<f64> {
        let q = self.synthesized_law(ws, rate, seed)?;
        let t = self.target_law(ws)?;
        Ok(tv_padded(&q, &t))
    }

    /// Mean synthesis gap over independently seeded codebooks.
    pub fn mean_gap(&self, ws: &[usize], rate: f64, seeds: &[u64]) -> Result<f64> {
        if seeds.is_empty() {
            return Err(Error::Empty);
        }
        let mut acc = 0.0;
        for &s in seeds {
            acc += self.synthesis_gap(ws, rate, s)?;
        }
        Ok(acc / seeds.len() as f64)
    }

    /// Validates symbols and enumeration cost, returns the codebook size.
    fn check_block(&self, ws: &[usize], rate: f64) -> Result<u64> {
        if ws.is_empty() {
            return Err(Error::Empty);
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rate must be finite and nonnegative, got {rate}"
            )));
        }
        let kw = self.w_size();
        for &w in ws {
            if w >= kw {
                return Err(Error::SymbolOutOfRange {
                    symbol: w,
                    alphabet: kw,
                });
            }
        }
        let n = ws.len();
        let ln_work = ln_index_count(n, rate) + n as f64 * (self.v_size() as f64).ln();
        if ln_work > (SYNTH_TERM_BUDGET as f64).ln() {
            // saturating estimate, only used for the error report
            let required = if ln_work > 88.0 {
                u128::MAX
            } else {
                ln_work.exp().ceil() as u128
            };
            return Err(Error::TooLarge {
                what: "synthesis enumeration terms",
                required,
                budget: SYNTH_TERM_BUDGET,
            });
        }
        // within budget the count is far below the representable ceiling
        Ok(index_count(n, rate).expect("budgeted codebook fits in u64"))
    }
}

/// One cell of a synthesis sweep.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub rate: f64,
    pub mean_tv: f64,
    pub threshold: f64,
}

/// Tabulates the mean synthesis gap over a grid of block lengths and rates.
/// The side sequence for block length `n` repeats `pattern` cyclically.
pub fn rate_sweep(
    spec: &SynthesisSpec,
    pattern: &[usize],
    ns: &[usize],
    rates: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if pattern.is_empty() {
        return Err(Error::Empty);
    }
    let mut rows = Vec::with_capacity(ns.len() * rates.len());
    for &n in ns {
        let ws: Vec<usize> = (0..n).map(|i| pattern[i % pattern.len()]).collect();
        let threshold = spec.threshold(&ws)?;
        for &rate in rates {
            rows.push(SweepRow {
                n,
                rate,
                mean_tv: spec.mean_gap(&ws, rate, seeds)?,
                threshold,
            });
        }
    }
    Ok(rows)
}
