//! Brute-force audit of the single-letter rate bound against small codes.
//!
//! A deterministic block code maps `(x^n, z^n)` to one of `M` messages and
//! the receiver maps `(message, z^n)` back to `y^n`. For any such code the
//! time-mixed single-letter statistics must obey the solver's rate
//! function: `log2(M)/n` can never fall below the minimal conditional rate
//! at the code's own achieved distortion and marginal divergence. This
//! module evaluates codes exactly and hunts for counterexamples, either
//! exhaustively over every code of a given shape or over a seeded random
//! sample.
//!
//! Nothing here should ever find a violation; the value of the search is
//! the machine check that the solver's reported curve really is a lower
//! envelope for operational codes.

use std::collections::HashMap;

use rand::Rng;

use crate::coding::sequences;
use crate::prob::{tv_padded, DistortionMatrix, JointTable};
use crate::rng::chacha_from;
use crate::solver::{solve_empirical_rdp, RdpProblem, SolverOptions};
use crate::{Error, Result};

/// Ceiling on `(encoder count) * (decoder count)` for exhaustive search.
const EXHAUSTIVE_BUDGET: u128 = 1_000_000;

/// Ceiling on `(|X| * |Z|)^n` when evaluating a single code exactly.
const STATE_BUDGET: u128 = 1_000_000;

/// Deterministic fixed-length code over flat block indices.
#[derive(Debug, Clone)]
pub struct SmallCode {
    n: usize,
    kx: usize,
    kz: usize,
    ky: usize,
    messages: usize,
    /// message per `(x^n, z^n)` cell, x-major
    encoder: Vec<usize>,
    /// reconstruction block per `(message, z^n)` cell, message-major
    decoder: Vec<usize>,
}

impl SmallCode {
    pub fn new(
        n: usize,
        kx: usize,
        kz: usize,
        ky: usize,
        messages: usize,
        encoder: Vec<usize>,
        decoder: Vec<usize>,
    ) -> Result<Self> {
        if n == 0 || kx == 0 || kz == 0 || ky == 0 || messages == 0 {
            return Err(Error::InvalidParameter(
                "code dimensions must all be positive".into(),
            ));
        }
        let states = pow_budget(kx, n)?
            .checked_mul(pow_budget(kz, n)?)
            .filter(|&s| s <= STATE_BUDGET)
            .ok_or(Error::TooLarge {
                what: "code state space",
                required: u128::MAX,
                budget: STATE_BUDGET,
            })?;
        if encoder.len() as u128 != states {
            return Err(Error::LengthMismatch {
                expected: states as usize,
                got: encoder.len(),
            });
        }
        let dec_cells = messages * pow_budget(kz, n)? as usize;
        if decoder.len() != dec_cells {
            return Err(Error::LengthMismatch {
                expected: dec_cells,
                got: decoder.len(),
            });
        }
        if let Some(&m) = encoder.iter().find(|&&m| m >= messages) {
            return Err(Error::SymbolOutOfRange {
                symbol: m,
                alphabet: messages,
            });
        }
        let kyn = pow_budget(ky, n)? as usize;
        if let Some(&y) = decoder.iter().find(|&&y| y >= kyn) {
            return Err(Error::SymbolOutOfRange {
                symbol: y,
                alphabet: kyn,
            });
        }
        Ok(SmallCode {
            n,
            kx,
            kz,
            ky,
            messages,
            encoder,
            decoder,
        })
    }

    pub fn rate(&self) -> f64 {
        (self.messages as f64).log2() / self.n as f64
    }

    pub fn encode(&self, x_flat: usize, z_flat: usize) -> usize {
        self.encoder[x_flat * self.kz.pow(self.n as u32) + z_flat]
    }

    pub fn reconstruct(&self, message: usize, z_flat: usize) -> usize {
        self.decoder[message * self.kz.pow(self.n as u32) + z_flat]
    }
}

/// Exact operational statistics of one code under a memoryless source.
#[derive(Debug, Clone)]
pub struct CodeReport {
    pub rate: f64,
    /// expected per-letter distortion
    pub distortion: f64,
    /// distance between the time-mixed source and reconstruction marginals
    pub time_mixed_tv: f64,
    /// expected distance between the block's empirical types
    pub mean_type_tv: f64,
    /// time-mixed joint law over `(X, Y, Z)`
    pub time_mixed: JointTable,
}

/// Evaluates every source block against the code. Exact, no sampling.
pub fn evaluate_code(
    code: &SmallCode,
    source: &JointTable,
    distortion: &DistortionMatrix,
) -> Result<CodeReport> {
    let (n, kx, kz, ky) = (code.n, code.kx, code.kz, code.ky);
    if source.dims() != [kx, kz] {
        return Err(Error::ShapeMismatch {
            context: "source table must match the code's X and Z alphabets".into(),
        });
    }
    if distortion.x_size() != kx || distortion.y_size() != ky {
        return Err(Error::ShapeMismatch {
            context: "distortion matrix must match the code's X and Y alphabets".into(),
        });
    }
    let xblocks: Vec<Vec<usize>> = sequences(kx, n).collect();
    let zblocks: Vec<Vec<usize>> = sequences(kz, n).collect();
    let yblocks: Vec<Vec<usize>> = sequences(ky, n).collect();
    let kc = kx.max(ky);

    let p = source.as_slice();
    let mut mean_d = 0.0;
    let mut mean_type_tv = 0.0;
    let mut mixed = vec![0.0; kx * ky * kz];
    let letter = 1.0 / n as f64;
    for (xf, xs) in xblocks.iter().enumerate() {
        for (zf, zs) in zblocks.iter().enumerate() {
            let mass: f64 = xs.iter().zip(zs).map(|(&x, &z)| p[x * kz + z]).product();
            if mass == 0.0 {
                continue;
            }
            let ys = &yblocks[code.reconstruct(code.encode(xf, zf), zf)];
            let mut counts = vec![0i32; 2 * kc];
            let mut d = 0.0;
            for t in 0..n {
                let (x, y, z) = (xs[t], ys[t], zs[t]);
                d += distortion.get(x, y);
                counts[x] += 1;
                counts[kc + y] += 1;
                mixed[(x * ky + y) * kz + z] += mass * letter;
            }
            mean_d += mass * d * letter;
            let diff: i32 = (0..kc).map(|s| (counts[s] - counts[kc + s]).abs()).sum();
            mean_type_tv += mass * 0.5 * diff as f64 * letter;
        }
    }
    let time_mixed = JointTable::new(vec![kx, ky, kz], mixed)?;
    let time_mixed_tv = tv_padded(
        time_mixed.marginal(0)?.as_slice(),
        time_mixed.marginal(1)?.as_slice(),
    );
    Ok(CodeReport {
        rate: code.rate(),
        distortion: mean_d,
        time_mixed_tv,
        mean_type_tv,
        time_mixed,
    })
}

/// A code whose rate fell below the solver bound at its own operating
/// point, by more than the audit tolerance.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Violation {
    pub rate: f64,
    pub distortion: f64,
    pub perception: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConverseSummary {
    pub codes: usize,
    pub solver_calls: usize,
    /// smallest observed `rate - bound`, negative means a violation
    pub worst_margin: f64,
    pub violations: Vec<Violation>,
}

struct BoundAudit<'a> {
    problem: &'a RdpProblem,
    opts: SolverOptions,
    cache: HashMap<(i64, i64), f64>,
    tol: f64,
    summary: ConverseSummary,
}

impl<'a> BoundAudit<'a> {
    fn new(problem: &'a RdpProblem, tol: f64) -> Self {
        BoundAudit {
            problem,
            opts: SolverOptions::default(),
            cache: HashMap::new(),
            tol,
            summary: ConverseSummary {
                codes: 0,
                solver_calls: 0,
                worst_margin: f64::INFINITY,
                violations: Vec::new(),
            },
        }
    }

    fn absorb(&mut self, report: &CodeReport) -> Result<()> {
        // quantized key: points closer than 1e-12 share a solve
        let key = (
            (report.distortion * 1e12).round() as i64,
            (report.time_mixed_tv * 1e12).round() as i64,
        );
        let bound = match self.cache.get(&key) {
            Some(&b) => b,
            None => {
                let sol = solve_empirical_rdp(
                    self.problem,
                    report.distortion,
                    report.time_mixed_tv,
                    &self.opts,
                )?;
                self.summary.solver_calls += 1;
                self.cache.insert(key, sol.rate);
                sol.rate
            }
        };
        let margin = report.rate - bound;
        self.summary.codes += 1;
        if margin < self.summary.worst_margin {
            self.summary.worst_margin = margin;
        }
        if margin < -self.tol {
            self.summary.violations.push(Violation {
                rate: report.rate,
                distortion: report.distortion,
                perception: report.time_mixed_tv,
                bound,
            });
        }
        Ok(())
    }
}

fn pow_budget(base: usize, exp: usize) -> Result<u128> {
    (base as u128)
        .checked_pow(exp as u32)
        .filter(|&v| v <= EXHAUSTIVE_BUDGET.max(STATE_BUDGET))
        .ok_or(Error::TooLarge {
            what: "block alphabet power",
            required: u128::MAX,
            budget: EXHAUSTIVE_BUDGET.max(STATE_BUDGET),
        })
}

fn digits(mut value: u64, base: usize, cells: usize) -> Vec<usize> {
    let mut out = vec![0usize; cells];
    for slot in out.iter_mut().rev() {
        *slot = (value % base as u64) as usize;
        value /= base as u64;
    }
    out
}

/// Checks every deterministic code with `messages` messages at block
/// length `n` against the solver bound.
pub fn exhaustive_check(
    problem: &RdpProblem,
    n: usize,
    messages: usize,
    tol: f64,
) -> Result<ConverseSummary> {
    let source = problem.source();
    let kx = source.dims()[0];
    let kz = source.dims()[1];
    let ky = problem.distortion().y_size();
    let enc_cells = (pow_budget(kx, n)? * pow_budget(kz, n)?) as usize;
    let dec_cells = messages * pow_budget(kz, n)? as usize;
    let kyn = pow_budget(ky, n)? as usize;
    let enc_count = pow_budget(messages, enc_cells)?;
    let dec_count = pow_budget(kyn, dec_cells)?;
    let pairs = enc_count.checked_mul(dec_count).ok_or(Error::TooLarge {
        what: "code pairs",
        required: u128::MAX,
        budget: EXHAUSTIVE_BUDGET,
    })?;
    if pairs > EXHAUSTIVE_BUDGET {
        return Err(Error::TooLarge {
            what: "code pairs",
            required: pairs,
            budget: EXHAUSTIVE_BUDGET,
        });
    }

    let mut audit = BoundAudit::new(problem, tol);
    for e in 0..enc_count as u64 {
        let encoder = digits(e, messages, enc_cells);
        for d in 0..dec_count as u64 {
            let decoder = digits(d, kyn, dec_cells);
            let code = SmallCode::new(n, kx, kz, ky, messages, encoder.clone(), decoder)?;
            let report = evaluate_code(&code, source, problem.distortion())?;
            audit.absorb(&report)?;
        }
    }
    Ok(audit.summary)
}

/// The deterministic code stream that [`sampled_check`] audits: uniformly
/// random encoder and decoder tables, all derived from `seed`.
pub fn sampled_codes(
    problem: &RdpProblem,
    n: usize,
    messages: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<SmallCode>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let source = problem.source();
    let kx = source.dims()[0];
    let kz = source.dims()[1];
    let ky = problem.distortion().y_size();
    let enc_cells = (pow_budget(kx, n)? * pow_budget(kz, n)?) as usize;
    let dec_cells = messages * pow_budget(kz, n)? as usize;
    let kyn = pow_budget(ky, n)? as usize;

    let mut rng = chacha_from(&[seed]);
    (0..samples)
        .map(|_| {
            let encoder: Vec<usize> =
                (0..enc_cells).map(|_| rng.gen_range(0..messages)).collect();
            let decoder: Vec<usize> = (0..dec_cells).map(|_| rng.gen_range(0..kyn)).collect();
            SmallCode::new(n, kx, kz, ky, messages, encoder, decoder)
        })
        .collect()
}

/// Checks a seeded random sample of codes against the solver bound.
pub fn sampled_check(
    problem: &RdpProblem,
    n: usize,
    messages: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ConverseSummary> {
    let mut audit = BoundAudit::new(problem, tol);
    for code in sampled_codes(problem, n, messages, samples, seed)? {
        let report = evaluate_code(&code, problem.source(), problem.distortion())?;
        audit.absorb(&report)?;
    }
    Ok(audit.summary)
}
