//! Finite-blocklength simulation of the random-codebook compression scheme.
//!
//! A scheme is a factored single-letter law over `(X, Z, U, Y)`: the source
//! `(X, Z)`, an auxiliary description symbol `U` drawn against `Z`, and a
//! reconstruction `Y` drawn from `(Z, U)`. The factorization makes `X` and
//! `Y` conditionally independent given `(U, Z)` by construction.
//!
//! Codebooks are never materialized. A codeword is indexed by the side
//! sequence `z^n` and a message pair `(m, m0)`, and every symbol of it is
//! regenerated on demand from a keyed counter function (see [`crate::rng`]),
//! so encoder and decoder agree bit for bit without storing the
//! exponentially large table.
//!
//! Trials run along one of two paths with the same distribution of reported
//! metrics:
//!
//! * explicit: the encoder enumerates all messages and samples one in
//!   proportion to the likelihood its codeword assigns to the observed
//!   source block. Exact for one pinned codebook, affordable only while
//!   `messages * n` stays small.
//! * codebook-averaged: the selected codeword is sampled directly from its
//!   law under a fresh random codebook, which is what the reported
//!   codebook-expected metrics integrate over anyway. Selection weight
//!   depends on a codeword only through its per-cell symbol counts, so the
//!   draw works on count profiles: profiles of an enormous codebook
//!   concentrate and the winner follows the per-position tilted posterior,
//!   while for enumerable codebooks a weighted race over per-codeword count
//!   draws reproduces the finite-pool selection exactly.
//!
//! Everything is a pure function of `(master_seed, codebook_seed,
//! trial_index)`; reports are byte-identical across runs.

use crate::prob::{
    compose, conditional_mutual_information, tv_empirical, tv_tables, Channel, DistortionMatrix,
    EmpiricalDist, JointTable,
};
use crate::rng::{chacha_from, digest_symbols, inv_cdf, mix, stream_word, unit_f64, Stream};
use crate::tolerances::FACTORIZATION;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

#[cfg(test)]
mod tests;

const LN_2: f64 = std::f64::consts::LN_2;

/// Relative log-weight below which a codeword is treated as unselectable.
const LN_WEIGHT_CUTOFF: f64 = -700.0;

/// Work ceiling (`messages * n`) for the explicit per-trial encoder.
const EXPLICIT_TRIAL_WORK: u128 = 10_000_000;

/// Largest enumerable codebook for the averaged-path selection race.
const RACE_MAX_MESSAGES: u64 = 1 << 20;

/// Expected number of codewords on the modal count profile above which the
/// averaged path treats the codebook as saturated and samples the tilted
/// posterior directly.
const DENSE_LN_COUNT: f64 = 13.8; // ln 1e6

/// Term ceiling for exact block-law enumeration.
const EXACT_TERM_BUDGET: u128 = 10_000_000;

/// Domain-separation words for per-trial key derivation.
const DOM_SOURCE: u64 = 1;
const DOM_COMMON: u64 = 2;
const DOM_ENCODE: u64 = 3;
const DOM_DECODE: u64 = 4;
const DOM_SELECT: u64 = 5;

/// Single-letter scheme: source law plus the factored description and
/// reconstruction channels.
#[derive(Debug, Clone)]
pub struct SchemeSpec {
    p_xz: JointTable,
    u_given_z: Channel,
    x_given_zu: Channel,
    y_given_zu: Channel,
    distortion: DistortionMatrix,
}

impl SchemeSpec {
    /// Validates shapes and checks that routing the source through the
    /// factored channels reproduces its law.
    pub fn new(
        p_xz: JointTable,
        u_given_z: Channel,
        x_given_zu: Channel,
        y_given_zu: Channel,
        distortion: DistortionMatrix,
    ) -> Result<Self> {
        if p_xz.axes() != 2 {
            return Err(Error::ShapeMismatch {
                context: format!("source law needs axes (x, z), got {:?}", p_xz.dims()),
            });
        }
        let kx = p_xz.dims()[0];
        let kz = p_xz.dims()[1];
        let ku = u_given_z.out_dim();
        if u_given_z.in_dims() != [kz] {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "description channel conditions on {:?}, source side alphabet is {kz}",
                    u_given_z.in_dims()
                ),
            });
        }
        for (name, ch) in [("source", &x_given_zu), ("reconstruction", &y_given_zu)] {
            if ch.in_dims() != [kz, ku] {
                return Err(Error::ShapeMismatch {
                    context: format!(
                        "{name} channel conditions on {:?}, expected [{kz}, {ku}]",
                        ch.in_dims()
                    ),
                });
            }
        }
        if x_given_zu.out_dim() != kx {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "source channel emits {} symbols, source alphabet is {kx}",
                    x_given_zu.out_dim()
                ),
            });
        }
        let ky = y_given_zu.out_dim();
        if distortion.x_size() != kx || distortion.y_size() != ky {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "distortion table is {}x{}, scheme alphabets are {kx}x{ky}",
                    distortion.x_size(),
                    distortion.y_size()
                ),
            });
        }
        let spec = SchemeSpec {
            p_xz,
            u_given_z,
            x_given_zu,
            y_given_zu,
            distortion,
        };
        // the factored route (z -> u -> x) must give back the source law
        let via = spec.single_letter()?.marginalize(&[2, 0])?;
        for (a, b) in via.as_slice().iter().zip(spec.p_xz.as_slice()) {
            if (a - b).abs() > FACTORIZATION {
                return Err(Error::ShapeMismatch {
                    context: format!(
                        "factored channels rebuild the source law to {a}, table says {b}"
                    ),
                });
            }
        }
        Ok(spec)
    }

    /// Builds a scheme from a solved reconstruction kernel by promoting the
    /// reconstruction itself to the description symbol: with `U = Y` the
    /// conditional-independence requirement holds automatically and the
    /// description channel is the kernel's output marginal against the side
    /// information.
    pub fn from_solution(
        source: &JointTable,
        kernel: &Channel,
        distortion: &DistortionMatrix,
    ) -> Result<Self> {
        let xzy = compose(source, kernel)?; // axes (x, z, y)
        let u_given_z = xzy.marginalize(&[1, 2])?.condition(1)?;
        let x_given_zu = xzy.marginalize(&[1, 2, 0])?.condition(2)?;
        let ky = kernel.out_dim();
        let kz = source.dims()[1];
        let mut rows = vec![0.0; kz * ky * ky];
        for z in 0..kz {
            for u in 0..ky {
                rows[(z * ky + u) * ky + u] = 1.0;
            }
        }
        let y_given_zu = Channel::new(vec![kz, ky], ky, rows)?;
        SchemeSpec::new(
            source.clone(),
            u_given_z,
            x_given_zu,
            y_given_zu,
            distortion.clone(),
        )
    }

    pub fn x_size(&self) -> usize {
        self.p_xz.dims()[0]
    }

    pub fn z_size(&self) -> usize {
        self.p_xz.dims()[1]
    }

    pub fn u_size(&self) -> usize {
        self.u_given_z.out_dim()
    }

    pub fn y_size(&self) -> usize {
        self.y_given_zu.out_dim()
    }

    pub fn source(&self) -> &JointTable {
        &self.p_xz
    }

    pub fn distortion(&self) -> &DistortionMatrix {
        &self.distortion
    }

    pub fn description_channel(&self) -> &Channel {
        &self.u_given_z
    }

    pub fn reconstruction_channel(&self) -> &Channel {
        &self.y_given_zu
    }

    /// Joint single-letter law over `(z, u, x, y)`.
    pub fn single_letter(&self) -> Result<JointTable> {
        let kz = self.z_size();
        let ku = self.u_size();
        let kx = self.x_size();
        let ky = self.y_size();
        let pz = self.p_xz.marginal(1)?;
        let mut mass = vec![0.0; kz * ku * kx * ky];
        for z in 0..kz {
            if pz[z] == 0.0 {
                continue;
            }
            let urow = self.u_given_z.try_row(z)?;
            for u in 0..ku {
                let zu = pz[z] * urow[u];
                if zu == 0.0 {
                    continue;
                }
                let xrow = self.x_given_zu.try_row(z * ku + u)?;
                let yrow = self.y_given_zu.try_row(z * ku + u)?;
                for x in 0..kx {
                    for y in 0..ky {
                        mass[((z * ku + u) * kx + x) * ky + y] = zu * xrow[x] * yrow[y];
                    }
                }
            }
        }
        JointTable::new(vec![kz, ku, kx, ky], mass)
    }

    /// Description rate below which the encoder cannot track the source:
    /// the conditional mutual information between source and description
    /// given side information, in bits.
    pub fn message_threshold(&self) -> Result<f64> {
        conditional_mutual_information(&self.single_letter()?.marginalize(&[2, 1, 0])?)
    }

    /// Combined message-plus-common-randomness rate below which the
    /// reconstruction side of the codebook is undersampled, in bits.
    pub fn total_threshold(&self) -> Result<f64> {
        conditional_mutual_information(&self.single_letter()?.marginalize(&[3, 1, 0])?)
    }

    /// Single-letter expected distortion of the scheme.
    pub fn expected_distortion(&self) -> Result<f64> {
        let xy = self.single_letter()?.marginalize(&[2, 3])?;
        crate::prob::expected_distortion(&xy, &self.distortion)
    }
}

/// Blocklength, rates, and the seeds and trial count of a simulation run.
#[derive(Debug, Clone, Copy)]
pub struct CodeConfig {
    pub n: usize,
    /// message rate, bits per symbol
    pub rate: f64,
    /// common-randomness rate, bits per symbol
    pub r0: f64,
    pub master_seed: u64,
    pub trials: usize,
}

/// `floor(2^(n r))` when it fits a `u64`.
pub(crate) fn index_count(n: usize, r: f64) -> Option<u64> {
    let bits = n as f64 * r;
    if bits >= 63.0 {
        None
    } else {
        Some((bits.exp2().floor() as u64).max(1))
    }
}

pub(crate) fn ln_index_count(n: usize, r: f64) -> f64 {
    match index_count(n, r) {
        Some(j) => (j as f64).ln(),
        // the floor is a vanishing relative correction at this scale
        None => n as f64 * r * LN_2,
    }
}

/// `Seeded` codewords come from the keyed counter function; `Exhaustive`
/// codebooks enumerate every description sequence exactly once.
#[derive(Debug, Clone, Copy)]
enum CodebookKind {
    Seeded(u64),
    Exhaustive,
}

/// A codebook bound to a scheme and a run configuration.
#[derive(Debug, Clone)]
pub struct Codebook<'a> {
    scheme: &'a SchemeSpec,
    config: CodeConfig,
    kind: CodebookKind,
}

impl<'a> Codebook<'a> {
    pub fn new(scheme: &'a SchemeSpec, config: CodeConfig, codebook_seed: u64) -> Result<Self> {
        if config.n == 0 {
            return Err(Error::InvalidParameter(
                "blocklength must be positive".into(),
            ));
        }
        for (name, r) in [
            ("message rate", config.rate),
            ("common-randomness rate", config.r0),
        ] {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {r}"
                )));
            }
        }
        Ok(Codebook {
            scheme,
            config,
            kind: CodebookKind::Seeded(codebook_seed),
        })
    }

    /// A deterministic codebook whose messages enumerate `U^n` exactly.
    /// Requires `floor(2^(n rate)) = |U|^n` and no common randomness.
    pub fn exhaustive(scheme: &'a SchemeSpec, config: CodeConfig) -> Result<Self> {
        let full = (scheme.u_size() as u128).checked_pow(config.n as u32);
        let j = index_count(config.n, config.rate).map(u128::from);
        if config.r0 != 0.0 || j.is_none() || j != full {
            return Err(Error::InvalidParameter(format!(
                "exhaustive codebook needs floor(2^(n rate)) = |U|^n and r0 = 0, \
                 got {j:?} messages over |U|^n = {full:?}"
            )));
        }
        Ok(Codebook {
            scheme,
            config,
            kind: CodebookKind::Exhaustive,
        })
    }

    pub fn config(&self) -> &CodeConfig {
        &self.config
    }

    pub fn scheme(&self) -> &SchemeSpec {
        self.scheme
    }

    /// Number of messages, when it fits a machine word.
    pub fn message_count(&self) -> Option<u64> {
        index_count(self.config.n, self.config.rate)
    }

    /// Number of common-randomness indices, when it fits a machine word.
    pub fn common_count(&self) -> Option<u64> {
        match self.kind {
            CodebookKind::Seeded(_) => index_count(self.config.n, self.config.r0),
            CodebookKind::Exhaustive => Some(1),
        }
    }

    fn check_sequence(&self, zs: &[usize]) -> Result<()> {
        if zs.len() != self.config.n {
            return Err(Error::LengthMismatch {
                expected: self.config.n,
                got: zs.len(),
            });
        }
        let kz = self.scheme.z_size();
        for &z in zs {
            if z >= kz {
                return Err(Error::SymbolOutOfRange {
                    symbol: z,
                    alphabet: kz,
                });
            }
        }
        Ok(())
    }

    fn check_indices(&self, m: u64, m0: u64) -> Result<()> {
        if let Some(j) = self.message_count() {
            if m >= j {
                return Err(Error::SymbolOutOfRange {
                    symbol: m as usize,
                    alphabet: j as usize,
                });
            }
        }
        if let Some(k0) = self.common_count() {
            if m0 >= k0 {
                return Err(Error::SymbolOutOfRange {
                    symbol: m0 as usize,
                    alphabet: k0 as usize,
                });
            }
        }
        Ok(())
    }

    /// The description sequence stored at `(z^n, m, m0)`. Regenerated, not
    /// looked up; identical for identical arguments.
    pub fn codeword(&self, zs: &[usize], m: u64, m0: u64) -> Result<Vec<usize>> {
        self.check_sequence(zs)?;
        self.check_indices(m, m0)?;
        match self.kind {
            CodebookKind::Seeded(seed) => {
                let key = mix(mix(mix(seed, digest_symbols(zs)), m), m0);
                let mut us = Vec::with_capacity(zs.len());
                for (i, &z) in zs.iter().enumerate() {
                    let row = self.scheme.u_given_z.try_row(z)?;
                    us.push(inv_cdf(row, unit_f64(stream_word(key, i as u64))));
                }
                Ok(us)
            }
            CodebookKind::Exhaustive => {
                let ku = self.scheme.u_size() as u64;
                let mut v = m;
                let mut us = vec![0usize; self.config.n];
                for slot in us.iter_mut().rev() {
                    *slot = (v % ku) as usize;
                    v /= ku;
                }
                Ok(us)
            }
        }
    }

    /// Log-likelihood the codeword assigns to a source block.
    fn ln_weight(&self, xs: &[usize], zs: &[usize], us: &[usize]) -> Result<f64> {
        let ku = self.scheme.u_size();
        let mut lw = 0.0;
        for ((&x, &z), &u) in xs.iter().zip(zs).zip(us) {
            let p = self.scheme.x_given_zu.try_row(z * ku + u)?[x];
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            lw += p.ln();
        }
        Ok(lw)
    }

    /// Samples a message in proportion to its codeword's likelihood of the
    /// observed block. Stable in log space; enumerates every message.
    pub fn likelihood_encode(
        &self,
        xs: &[usize],
        zs: &[usize],
        m0: u64,
        trial_seed: u64,
    ) -> Result<u64> {
        self.check_sequence(zs)?;
        if xs.len() != zs.len() {
            return Err(Error::LengthMismatch {
                expected: zs.len(),
                got: xs.len(),
            });
        }
        let kx = self.scheme.x_size();
        for &x in xs {
            if x >= kx {
                return Err(Error::SymbolOutOfRange {
                    symbol: x,
                    alphabet: kx,
                });
            }
        }
        let j = self.message_count().ok_or(Error::TooLarge {
            what: "explicit message enumeration",
            required: u128::MAX,
            budget: EXPLICIT_TRIAL_WORK,
        })?;
        let work = j as u128 * self.config.n as u128;
        if work > EXPLICIT_TRIAL_WORK {
            return Err(Error::TooLarge {
                what: "explicit message enumeration",
                required: work,
                budget: EXPLICIT_TRIAL_WORK,
            });
        }
        let mut lws = Vec::with_capacity(j as usize);
        let mut mx = f64::NEG_INFINITY;
        for m in 0..j {
            let us = self.codeword(zs, m, m0)?;
            let lw = self.ln_weight(xs, zs, &us)?;
            mx = mx.max(lw);
            lws.push(lw);
        }
        if mx == f64::NEG_INFINITY {
            return Err(Error::EncodingFailure);
        }
        let weights: Vec<f64> = lws
            .iter()
            .map(|&lw| {
                let rel = lw - mx;
                if rel < LN_WEIGHT_CUTOFF {
                    0.0
                } else {
                    rel.exp()
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let u = Stream::new(trial_seed).next_unit() * total;
        let mut acc = 0.0;
        for (m, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(m as u64);
            }
        }
        Ok(j - 1)
    }

    /// Reconstructs from a message: regenerates the codeword and pushes it
    /// through the reconstruction channel position by position.
    pub fn decode(&self, m: u64, zs: &[usize], m0: u64, trial_seed: u64) -> Result<Vec<usize>> {
        let us = self.codeword(zs, m, m0)?;
        let ku = self.scheme.u_size();
        let mut st = Stream::new(trial_seed);
        let mut ys = Vec::with_capacity(zs.len());
        for (&z, &u) in zs.iter().zip(&us) {
            let row = self.scheme.y_given_zu.try_row(z * ku + u)?;
            ys.push(st.sample(row));
        }
        Ok(ys)
    }
}

/// Outcome of a single encode-decode round trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub distortion: f64,
    pub empirical_tv: f64,
    /// selected message; meaningful only on the explicit path
    pub message: u64,
    pub common_randomness: u64,
}

/// Aggregated Monte Carlo statistics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SimReport {
    pub mean_distortion: f64,
    pub mean_empirical_tv: f64,
    /// 95% normal-approximation half-widths
    pub ci95_distortion: f64,
    pub ci95_tv: f64,
    /// trials that produced a reconstruction
    pub trials: usize,
    /// trials whose source block no codeword could explain
    pub encoding_failures: usize,
}

struct TrialKeys {
    source: u64,
    common: u64,
    encode: u64,
    decode: u64,
    select: u64,
}

fn trial_keys(master_seed: u64, trial: u64) -> TrialKeys {
    let base = mix(master_seed, trial);
    TrialKeys {
        source: mix(base, DOM_SOURCE),
        common: mix(base, DOM_COMMON),
        encode: mix(base, DOM_ENCODE),
        decode: mix(base, DOM_DECODE),
        select: mix(base, DOM_SELECT),
    }
}

/// One trial: draw a source block, pick common randomness, encode, decode,
/// and measure per-letter distortion and the distance between the source
/// and reconstruction types. Everything derives from
/// `(master_seed, trial_index)`.
pub fn run_trial(cb: &Codebook, trial: u64) -> Result<TrialResult> {
    let n = cb.config.n;
    let scheme = cb.scheme;
    let keys = trial_keys(cb.config.master_seed, trial);

    let kz = scheme.z_size();
    let mut src = Stream::new(keys.source);
    let mut xs = vec![0usize; n];
    let mut zs = vec![0usize; n];
    for i in 0..n {
        let cell = src.sample(scheme.p_xz.as_slice());
        xs[i] = cell / kz;
        zs[i] = cell % kz;
    }

    let m0 = match cb.common_count() {
        Some(k0) => stream_word(keys.common, 0) % k0,
        // beyond-enumeration index spaces select i.i.d. columns whatever
        // the index, so a raw word is the same uniform choice
        None => stream_word(keys.common, 0),
    };

    let explicit_work = cb
        .message_count()
        .map(|j| j as u128 * n as u128)
        .unwrap_or(u128::MAX);
    let (m, us) = if explicit_work <= EXPLICIT_TRIAL_WORK {
        let m = cb.likelihood_encode(&xs, &zs, m0, keys.encode)?;
        (m, cb.codeword(&zs, m, m0)?)
    } else {
        (0, averaged_selection(cb, &xs, &zs, keys.select)?)
    };

    let ku = scheme.u_size();
    let mut dec = Stream::new(keys.decode);
    let mut ys = vec![0usize; n];
    for i in 0..n {
        let row = scheme.y_given_zu.try_row(zs[i] * ku + us[i])?;
        ys[i] = dec.sample(row);
    }

    let mut dist = 0.0;
    for (&x, &y) in xs.iter().zip(&ys) {
        dist += scheme.distortion.get(x, y);
    }
    dist /= n as f64;

    let alphabet = scheme.x_size().max(scheme.y_size());
    let tx = EmpiricalDist::from_sequence(&xs, alphabet)?;
    let ty = EmpiricalDist::from_sequence(&ys, alphabet)?;
    let empirical_tv = tv_empirical(&tx, &ty)?;

    Ok(TrialResult {
        distortion: dist,
        empirical_tv,
        message: m,
        common_randomness: m0,
    })
}

/// Positions of a block grouped by their `(z, x)` cell.
struct CellGroup {
    z: usize,
    x: usize,
    positions: Vec<usize>,
}

fn group_cells(xs: &[usize], zs: &[usize], kz: usize) -> Vec<CellGroup> {
    let mut by_cell: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, (&x, &z)) in xs.iter().zip(zs).enumerate() {
        by_cell.entry(x * kz + z).or_default().push(i);
    }
    by_cell
        .into_iter()
        .map(|(cell, positions)| CellGroup {
            z: cell % kz,
            x: cell / kz,
            positions,
        })
        .collect()
}

/// Samples the codeword the likelihood encoder would select, with the
/// codebook itself integrated out. A codeword's selection weight depends
/// only on its per-cell symbol counts, so the draw happens over count
/// profiles; the chosen profile is then arranged uniformly over each cell's
/// positions, which is exactly the conditional law of an i.i.d. codeword
/// given its counts.
fn averaged_selection(
    cb: &Codebook,
    xs: &[usize],
    zs: &[usize],
    select_key: u64,
) -> Result<Vec<usize>> {
    let scheme = cb.scheme;
    let ku = scheme.u_size();
    let cells = group_cells(xs, zs, scheme.z_size());

    // per-cell codeword symbol law and selection tilt
    let mut mu: Vec<&[f64]> = Vec::with_capacity(cells.len());
    let mut beta: Vec<Vec<f64>> = Vec::with_capacity(cells.len());
    for c in &cells {
        let urow = scheme.u_given_z.try_row(c.z)?;
        let mut b = vec![0.0; ku];
        for u in 0..ku {
            if urow[u] > 0.0 {
                b[u] = scheme.x_given_zu.try_row(c.z * ku + u)?[c.x];
            }
        }
        if urow.iter().zip(&b).all(|(&m, &w)| m * w == 0.0) {
            // no description symbol can produce this source symbol at all
            return Err(Error::EncodingFailure);
        }
        mu.push(urow);
        beta.push(b);
    }

    // expected multiplicity of the modal profile decides the regime:
    // saturated codebooks concentrate on the tilted posterior, small ones
    // race explicitly
    let lnf = ln_factorials(cb.config.n);
    let mut ln_mode_count = ln_index_count(cb.config.n, cb.config.rate);
    for (c, (urow, b)) in cells.iter().zip(mu.iter().zip(&beta)) {
        let tilt = tilted_row(urow, b);
        let counts = rounded_counts(&tilt, c.positions.len());
        ln_mode_count += lnf[c.positions.len()];
        for (u, &k) in counts.iter().enumerate() {
            if k > 0 {
                ln_mode_count += k as f64 * urow[u].ln() - lnf[k];
            }
        }
    }

    let mut rng = chacha_from(&[select_key]);
    let winner: Vec<Vec<u64>> = if ln_mode_count >= DENSE_LN_COUNT {
        // tilted posterior, drawn per cell as multinomial counts
        cells
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let tilt = tilted_row(mu[ci], &beta[ci]);
                multinomial(&mut rng, c.positions.len() as u64, &tilt)
            })
            .collect()
    } else {
        let j = cb
            .message_count()
            .filter(|&j| j <= RACE_MAX_MESSAGES)
            .ok_or(Error::TooLarge {
                what: "codebook-averaged selection race",
                required: cb.message_count().map(u128::from).unwrap_or(u128::MAX),
                budget: RACE_MAX_MESSAGES as u128,
            })?;
        let ln_beta: Vec<Vec<f64>> = beta
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
                    .collect()
            })
            .collect();
        // selection in proportion to weight via a perturbed-maximum race
        let mut best_score = f64::NEG_INFINITY;
        let mut best: Option<Vec<Vec<u64>>> = None;
        for _ in 0..j {
            let mut lw = 0.0;
            let mut profile = Vec::with_capacity(cells.len());
            for (ci, c) in cells.iter().enumerate() {
                let counts = multinomial(&mut rng, c.positions.len() as u64, mu[ci]);
                for (u, &k) in counts.iter().enumerate() {
                    if k > 0 {
                        lw += k as f64 * ln_beta[ci][u];
                    }
                }
                profile.push(counts);
            }
            let gumbel = -(-rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).ln();
            let score = lw + gumbel;
            if score > best_score {
                best_score = score;
                best = Some(profile);
            }
        }
        best.ok_or(Error::EncodingFailure)?
    };

    // arrange each cell's counts uniformly over its positions
    let mut us = vec![0usize; cb.config.n];
    for (c, counts) in cells.iter().zip(&winner) {
        let mut symbols = Vec::with_capacity(c.positions.len());
        for (u, &k) in counts.iter().enumerate() {
            symbols.extend(std::iter::repeat(u).take(k as usize));
        }
        for i in (1..symbols.len()).rev() {
            let pick = rng.gen_range(0..=i);
            symbols.swap(i, pick);
        }
        for (&pos, &u) in c.positions.iter().zip(&symbols) {
            us[pos] = u;
        }
    }
    Ok(us)
}

fn tilted_row(mu: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = mu.iter().zip(beta).map(|(&m, &b)| m * b).collect();
    let s: f64 = t.iter().sum();
    for v in t.iter_mut() {
        *v /= s;
    }
    t
}

/// Integer counts near `n * p` summing to `n` (largest-remainder rounding).
fn rounded_counts(p: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = p
        .iter()
        .map(|&v| ((v * n as f64).floor() as usize).min(n))
        .collect();
    let mut total: usize = counts.iter().sum();
    while total > n {
        let i = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
        counts[i] -= 1;
        total -= 1;
    }
    let mut rem: Vec<(f64, usize)> = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v * n as f64 - counts[i] as f64, i))
        .collect();
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    for &(_, i) in &rem {
        if total == n {
            break;
        }
        counts[i] += 1;
        total += 1;
    }
    counts
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lnf = vec![0.0; n + 1];
    for i in 1..=n {
        lnf[i] = lnf[i - 1] + (i as f64).ln();
    }
    lnf
}

/// Multinomial counts via a chain of binomial draws. Mass that rounding
/// strands past the last positive entry goes to that entry, never to a
/// zero-probability symbol.
fn multinomial<R: Rng>(rng: &mut R, mut n: u64, p: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; p.len()];
    let Some(last_pos) = p.iter().rposition(|&v| v > 0.0) else {
        return counts;
    };
    let mut left = 1.0;
    for (i, &pi) in p.iter().enumerate().take(last_pos + 1) {
        if n == 0 {
            break;
        }
        if i == last_pos || left <= pi {
            counts[i] = n;
            break;
        }
        if pi == 0.0 {
            continue;
        }
        let q = (pi / left).clamp(0.0, 1.0);
        let k = Binomial::new(n, q)
            .expect("probability in range")
            .sample(rng);
        counts[i] = k;
        n -= k;
        left -= pi;
    }
    counts
}

/// Independent trials merged into means and confidence half-widths.
/// Encoding failures are counted, not hidden; a run where every trial
/// fails is an error.
pub fn monte_carlo(cb: &Codebook) -> Result<SimReport> {
    if cb.config.trials < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 trials, got {}",
            cb.config.trials
        )));
    }
    use rayon::prelude::*;
    let outcomes: Vec<Result<TrialResult>> = (0..cb.config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cb, t))
        .collect();
    let mut results = Vec::with_capacity(outcomes.len());
    let mut failures = 0usize;
    for out in outcomes {
        match out {
            Ok(r) => results.push(r),
            Err(Error::EncodingFailure) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if results.is_empty() {
        return Err(Error::AllTrialsFailed);
    }
    let k = results.len() as f64;
    let mean = |f: &dyn Fn(&TrialResult) -> f64| results.iter().map(|r| f(r)).sum::<f64>() / k;
    let half = |m: f64, f: &dyn Fn(&TrialResult) -> f64| {
        if results.len() < 2 {
            return 0.0;
        }
        let var = results.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (k - 1.0);
        1.96 * (var / k).sqrt()
    };
    let md = mean(&|r| r.distortion);
    let mt = mean(&|r| r.empirical_tv);
    Ok(SimReport {
        mean_distortion: md,
        mean_empirical_tv: mt,
        ci95_distortion: half(md, &|r| r.distortion),
        ci95_tv: half(mt, &|r| r.empirical_tv),
        trials: results.len(),
        encoding_failures: failures,
    })
}

/// Per-trial rows for file output: trial index plus the trial's result.
pub fn trial_rows(cb: &Codebook) -> Result<Vec<(u64, TrialResult)>> {
    use rayon::prelude::*;
    (0..cb.config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cb, t).map(|r| (t, r)))
        .collect()
}

/// Exact block laws over `(x^n, y^n)` for one pinned codebook: the law the
/// encoder and decoder induce, the auxiliary law that draws the codeword
/// uniformly instead of by likelihood, and the plain product of the
/// single-letter law. Axes are flattened sequence indices.
#[derive(Debug, Clone)]
pub struct ExactLaws {
    pub induced_xy: JointTable,
    pub auxiliary_xy: JointTable,
    pub product_xy: JointTable,
}

/// Exact distances that drive the block-law convergence story: induced vs
/// auxiliary, auxiliary vs product on the reconstruction-and-side margin,
/// induced vs product, and the distance between the induced block marginals
/// of source and reconstruction.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DiagnosticsRecord {
    pub tv_induced_auxiliary: f64,
    pub tv_auxiliary_product_yz: f64,
    pub tv_induced_product: f64,
    pub strong_tv: f64,
}

struct LawBundle {
    induced_xy: JointTable,
    auxiliary_xy: JointTable,
    product_xy: JointTable,
    auxiliary_yz: JointTable,
    product_yz: JointTable,
}

fn pow_checked(base: usize, exp: usize) -> Result<usize> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc *= base as u128;
        if acc > EXACT_TERM_BUDGET {
            return Err(Error::TooLarge {
                what: "sequence space enumeration",
                required: acc,
                budget: EXACT_TERM_BUDGET,
            });
        }
    }
    Ok(acc as usize)
}

/// All length-`n` sequences over an alphabet in flat-index order, most
/// significant position first.
pub(crate) fn sequences(alphabet: usize, n: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = (alphabet as u128).pow(n as u32) as usize;
    (0..total).map(move |mut flat| {
        let mut seq = vec![0usize; n];
        for slot in seq.iter_mut().rev() {
            *slot = flat % alphabet;
            flat /= alphabet;
        }
        seq
    })
}

/// Product law over all length-`n` sequences from per-position rows.
pub(crate) fn product_vector(rows: &[&[f64]], alphabet: usize) -> Vec<f64> {
    let mut v = vec![1.0];
    for row in rows {
        let mut next = vec![0.0; v.len() * alphabet];
        for (i, &base) in v.iter().enumerate() {
            if base == 0.0 {
                continue;
            }
            for (s, &p) in row.iter().enumerate() {
                next[i * alphabet + s] = base * p;
            }
        }
        v = next;
    }
    v
}

fn enumerate_laws(cb: &Codebook) -> Result<LawBundle> {
    let scheme = cb.scheme;
    let n = cb.config.n;
    let (kx, kz, ku, ky) = (
        scheme.x_size(),
        scheme.z_size(),
        scheme.u_size(),
        scheme.y_size(),
    );
    let nx = pow_checked(kx, n)?;
    let nz = pow_checked(kz, n)?;
    let ny = pow_checked(ky, n)?;
    let j = cb.message_count().ok_or(Error::TooLarge {
        what: "exact law enumeration",
        required: u128::MAX,
        budget: EXACT_TERM_BUDGET,
    })?;
    let k0 = cb.common_count().ok_or(Error::TooLarge {
        what: "exact law enumeration",
        required: u128::MAX,
        budget: EXACT_TERM_BUDGET,
    })?;
    let terms = nx as u128 * nz as u128 * j as u128 * k0 as u128;
    if terms > EXACT_TERM_BUDGET {
        return Err(Error::TooLarge {
            what: "exact law enumeration",
            required: terms,
            budget: EXACT_TERM_BUDGET,
        });
    }
    if (nx as u128 * ny as u128) > EXACT_TERM_BUDGET {
        return Err(Error::TooLarge {
            what: "sequence-pair law table",
            required: nx as u128 * ny as u128,
            budget: EXACT_TERM_BUDGET,
        });
    }

    let pz = scheme.p_xz.marginal(1)?;
    let single = scheme.single_letter()?;
    let pbar_xy = single.marginalize(&[2, 3])?;
    let pbar_yz = single.marginalize(&[3, 0])?;

    let mut induced = vec![0.0; nx * ny];
    let mut auxiliary = vec![0.0; nx * ny];
    let mut auxiliary_yz = vec![0.0; ny * nz];

    for (zflat, zseq) in sequences(kz, n).enumerate() {
        let zmass: f64 = zseq.iter().map(|&z| pz[z]).product();
        if zmass == 0.0 {
            continue;
        }
        // every codeword for this side sequence, expanded to its
        // sequence-level source and reconstruction product laws
        let mut xvecs = Vec::with_capacity((j * k0) as usize);
        let mut yvecs = Vec::with_capacity((j * k0) as usize);
        for m0 in 0..k0 {
            for m in 0..j {
                let us = cb.codeword(&zseq, m, m0)?;
                let mut xrows = Vec::with_capacity(n);
                let mut yrows = Vec::with_capacity(n);
                for (&z, &u) in zseq.iter().zip(&us) {
                    xrows.push(scheme.x_given_zu.try_row(z * ku + u)?);
                    yrows.push(scheme.y_given_zu.try_row(z * ku + u)?);
                }
                xvecs.push(product_vector(&xrows, kx));
                yvecs.push(product_vector(&yrows, ky));
            }
        }

        // auxiliary: uniform codeword choice drives both margins
        let unif = zmass / (j as f64 * k0 as f64);
        for (xv, yv) in xvecs.iter().zip(&yvecs) {
            for (xflat, &px) in xv.iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                let row = &mut auxiliary[xflat * ny..(xflat + 1) * ny];
                for (yflat, &py) in yv.iter().enumerate() {
                    row[yflat] += unif * px * py;
                }
            }
            for (yflat, &py) in yv.iter().enumerate() {
                auxiliary_yz[yflat * nz + zflat] += unif * py;
            }
        }

        // induced: the encoder weighs codewords by source likelihood
        for (xflat, xseq) in sequences(kx, n).enumerate() {
            let src: f64 = xseq
                .iter()
                .zip(&zseq)
                .map(|(&x, &z)| scheme.p_xz.as_slice()[x * kz + z])
                .product();
            if src == 0.0 {
                continue;
            }
            let row = &mut induced[xflat * ny..(xflat + 1) * ny];
            for m0 in 0..k0 {
                let block = &xvecs[(m0 * j) as usize..((m0 + 1) * j) as usize];
                let total: f64 = block.iter().map(|xv| xv[xflat]).sum();
                if total == 0.0 {
                    // a possible source block that no codeword of this
                    // column can explain leaves the induced law undefined
                    return Err(Error::EncodingFailure);
                }
                let scale = src / (k0 as f64 * total);
                for (mi, xv) in block.iter().enumerate() {
                    let f = xv[xflat] * scale;
                    if f == 0.0 {
                        continue;
                    }
                    let yv = &yvecs[(m0 * j) as usize + mi];
                    for (yflat, &py) in yv.iter().enumerate() {
                        row[yflat] += f * py;
                    }
                }
            }
        }
    }

    // plain product law over sequence pairs
    let mut product = vec![0.0; nx * ny];
    for (xflat, xseq) in sequences(kx, n).enumerate() {
        for (yflat, yseq) in sequences(ky, n).enumerate() {
            let mut p = 1.0;
            for (&x, &y) in xseq.iter().zip(&yseq) {
                p *= pbar_xy.as_slice()[x * ky + y];
            }
            product[xflat * ny + yflat] = p;
        }
    }
    let mut product_yz = vec![0.0; ny * nz];
    for (yflat, yseq) in sequences(ky, n).enumerate() {
        for (zflat, zseq) in sequences(kz, n).enumerate() {
            let mut p = 1.0;
            for (&y, &z) in yseq.iter().zip(&zseq) {
                p *= pbar_yz.as_slice()[y * kz + z];
            }
            product_yz[yflat * nz + zflat] = p;
        }
    }

    Ok(LawBundle {
        induced_xy: JointTable::new(vec![nx, ny], induced)?,
        auxiliary_xy: JointTable::new(vec![nx, ny], auxiliary)?,
        product_xy: JointTable::new(vec![nx, ny], product)?,
        auxiliary_yz: JointTable::new(vec![ny, nz], auxiliary_yz)?,
        product_yz: JointTable::new(vec![ny, nz], product_yz)?,
    })
}

/// Exact induced, auxiliary, and product laws for the pinned codebook.
/// Feasible only while the enumeration over source blocks, side blocks,
/// and message pairs stays within budget.
pub fn exact_joint_law(cb: &Codebook) -> Result<ExactLaws> {
    let bundle = enumerate_laws(cb)?;
    Ok(ExactLaws {
        induced_xy: bundle.induced_xy,
        auxiliary_xy: bundle.auxiliary_xy,
        product_xy: bundle.product_xy,
    })
}

/// Re-indexes a sequence-space mass vector from its own alphabet base into
/// a wider common base, so marginals over different alphabets compare on
/// one index space.
fn embed_sequence_masses(mass: &[f64], alphabet: usize, common: usize, n: usize) -> Vec<f64> {
    if alphabet == common {
        return mass.to_vec();
    }
    let total = (common as u128).pow(n as u32) as usize;
    let mut out = vec![0.0; total];
    for (flat, seq) in sequences(alphabet, n).enumerate() {
        let mut f = 0usize;
        for &s in &seq {
            f = f * common + s;
        }
        out[f] = mass[flat];
    }
    out
}

/// Exact block-law distances for one pinned codebook.
pub fn proof_diagnostics(cb: &Codebook) -> Result<DiagnosticsRecord> {
    let bundle = enumerate_laws(cb)?;
    let n = cb.config.n;
    let kx = cb.scheme.x_size();
    let ky = cb.scheme.y_size();
    let kc = kx.max(ky);
    pow_checked(kc, n)?;
    let px = embed_sequence_masses(bundle.induced_xy.marginal(0)?.as_slice(), kx, kc, n);
    let py = embed_sequence_masses(bundle.induced_xy.marginal(1)?.as_slice(), ky, kc, n);
    let strong_tv = crate::prob::tv_padded(&px, &py);
    Ok(DiagnosticsRecord {
        tv_induced_auxiliary: tv_tables(&bundle.induced_xy, &bundle.auxiliary_xy)?,
        tv_auxiliary_product_yz: tv_tables(&bundle.auxiliary_yz, &bundle.product_yz)?,
        tv_induced_product: tv_tables(&bundle.induced_xy, &bundle.product_xy)?,
        strong_tv,
    })
}

/// Field-wise mean of [`proof_diagnostics`] over codebook seeds.
pub fn mean_diagnostics(
    scheme: &SchemeSpec,
    config: CodeConfig,
    seeds: &[u64],
) -> Result<DiagnosticsRecord> {
    if seeds.is_empty() {
        return Err(Error::Empty);
    }
    use rayon::prelude::*;
    let records: Vec<DiagnosticsRecord> = seeds
        .par_iter()
        .map(|&s| proof_diagnostics(&Codebook::new(scheme, config, s)?))
        .collect::<Result<_>>()?;
    let k = records.len() as f64;
    Ok(DiagnosticsRecord {
        tv_induced_auxiliary: records.iter().map(|r| r.tv_induced_auxiliary).sum::<f64>() / k,
        tv_auxiliary_product_yz: records
            .iter()
            .map(|r| r.tv_auxiliary_product_yz)
            .sum::<f64>()
            / k,
        tv_induced_product: records.iter().map(|r| r.tv_induced_product).sum::<f64>() / k,
        strong_tv: records.iter().map(|r| r.strong_tv).sum::<f64>() / k,
    })
}
