//! Rate surface solver.
//!
//! Computes the minimum conditional mutual information `I(X;Y|Z)` over
//! reconstruction kernels `W(y|x,z)` subject to an average-distortion budget
//! and a total-variation budget between the source marginal `P_X` and the
//! reconstruction marginal `P_Y`. The outer layer maximizes the concave dual
//! `G(lambda, nu)` over the multiplier quadrant with a cutting-plane model:
//! every inner iterate `W` yields the valid overestimate
//!
//! `G(l, n) <= I(W) + l (E[d](W) - delta) + n (tv(W) - pi)`
//!
//! because the dual is a minimum over kernels and `W` is one of them. The
//! next probe goes wherever the model is largest. Cut validity does not
//! depend on inner accuracy, so a sloppy inner solve (the alternation
//! degenerates when the distortion price vanishes) still shrinks the search
//! region instead of trapping it; coordinate-wise bisection lacks exactly
//! this property and jams at nonsmooth corners of the dual. Inner solves
//! are warm-started; every one contributes to a running certified lower
//! bound, and the best feasible iterate seen anywhere is what gets
//! reported. Convergence is declared by certificate only: best feasible
//! information minus best dual bound under the gap target.
//!
//! Public values are in bits. Reported rates carry the constraint tolerance
//! as additive slack, so `rate` is an honest upper report for a kernel that
//! satisfies both budgets within that same tolerance.

mod brute;
mod inner;
mod region;

pub use brute::{brute_force_rdp, BruteSolution};
pub use region::{check_region_membership, RegionReport};

use crate::prob::{Channel, DistortionMatrix, JointTable};
use crate::{Error, Result};
use inner::{Env, InnerOpts, State};

const LN_2: f64 = std::f64::consts::LN_2;

/// A finite-alphabet source with two-sided conditioning and a distortion
/// table. The source law is over `(X, Z)`; the reconstruction alphabet is
/// whatever the distortion table's column space says it is.
#[derive(Debug, Clone)]
pub struct RdpProblem {
    source: JointTable,
    distortion: DistortionMatrix,
}

impl RdpProblem {
    pub fn new(source: JointTable, distortion: DistortionMatrix) -> Result<Self> {
        if source.axes() != 2 {
            return Err(Error::ShapeMismatch {
                context: format!("source law needs axes (x, z), got {:?}", source.dims()),
            });
        }
        if source.dims()[0] != distortion.x_size() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "distortion rows {} do not match source alphabet {}",
                    distortion.x_size(),
                    source.dims()[0]
                ),
            });
        }
        Ok(RdpProblem { source, distortion })
    }

    /// Source without conditioning: the side alphabet collapses to one value.
    pub fn unconditional(px: &crate::prob::ProbVec, distortion: DistortionMatrix) -> Result<Self> {
        let source = JointTable::new(vec![px.len(), 1], px.as_slice().to_vec())?;
        RdpProblem::new(source, distortion)
    }

    pub fn source(&self) -> &JointTable {
        &self.source
    }

    pub fn distortion(&self) -> &DistortionMatrix {
        &self.distortion
    }

    pub fn x_size(&self) -> usize {
        self.source.dims()[0]
    }

    pub fn z_size(&self) -> usize {
        self.source.dims()[1]
    }

    pub fn y_size(&self) -> usize {
        self.distortion.y_size()
    }

    /// Smallest average distortion any kernel can achieve.
    pub fn distortion_floor(&self) -> f64 {
        Env::new(&self.source, &self.distortion).distortion_floor()
    }

    /// Smallest total variation any kernel can achieve; nonzero only when
    /// the reconstruction alphabet cannot carry all source mass.
    pub fn perception_floor(&self) -> f64 {
        let env = Env::new(&self.source, &self.distortion);
        env.px_ext.iter().skip(env.ky).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// feasibility slack for both budgets, also added to reported rates
    pub constraint_tol: f64,
    /// stop once the certified gap (bits) is below this
    pub gap_target: f64,
    pub inner_max_iters: usize,
    /// inner certified-gap stop, nats
    pub inner_gap: f64,
    /// cutting-plane evaluations before giving up on the gap target
    pub max_probes: usize,
    /// the dual maximum escaping past this along a multiplier axis means
    /// the corresponding budget is unreachable
    pub multiplier_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            // a marginal-matching residual is resolved through differences
            // of the dual value, so it cannot be certified much below the
            // square root of f64 resolution; 1e-7 is attainable reliably
            constraint_tol: 1e-7,
            gap_target: 1e-8,
            inner_max_iters: 20_000,
            inner_gap: 1e-12,
            max_probes: 400,
            multiplier_cap: 1e7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RdpSolution {
    /// achieved information in bits plus the constraint tolerance
    pub rate: f64,
    pub distortion: f64,
    pub perception: f64,
    /// distortion multiplier, bits per unit distortion
    pub lambda: f64,
    /// perception multiplier, bits per unit total variation
    pub nu: f64,
    /// best certified lower bound on the optimum, bits
    pub dual_bound: f64,
    /// rate minus dual bound, clamped at zero
    pub gap: f64,
    pub converged: bool,
    pub inner_iterations: usize,
    /// optimal reconstruction kernel, conditioned on (x, z)
    pub kernel: Channel,
}

struct Incumbent {
    i: f64,
    ed: f64,
    tv: f64,
    lambda: f64,
    nu: f64,
    w: Vec<f64>,
}

struct Driver<'a> {
    env: Env<'a>,
    st: State,
    opts: &'a SolverOptions,
    delta: f64,
    pi: f64,
    best: Option<Incumbent>,
    best_dual: f64,
    total_iters: usize,
}

impl<'a> Driver<'a> {
    fn eval(&mut self, lambda: f64, nu: f64) -> inner::InnerOut {
        self.st.reopen_support(&self.env);
        let out = inner::solve(
            &self.env,
            lambda,
            nu,
            self.delta,
            self.pi,
            &mut self.st,
            &InnerOpts {
                max_iters: self.opts.inner_max_iters,
                gap_tol: self.opts.inner_gap,
            },
        );
        self.total_iters += out.iters;
        self.best_dual = self.best_dual.max(out.dual);
        let tol = self.opts.constraint_tol;
        if out.ed <= self.delta + tol && out.tv <= self.pi + tol {
            let better = self.best.as_ref().map_or(true, |b| out.i < b.i);
            if better {
                self.best = Some(Incumbent {
                    i: out.i,
                    ed: out.ed,
                    tv: out.tv,
                    lambda,
                    nu,
                    w: self.st.w.clone(),
                });
            }
        } else {
            self.blend_over_budget(&out, lambda, nu);
        }
        out
    }

    /// At a kink of the dual the optimum is a mixture of branch minimizers,
    /// so a probe there can come back over budget even though its convex
    /// combination with the incumbent is feasible and strictly better.
    /// Information is convex in the kernel, distortion is linear, and the
    /// marginal mismatch is convex, so mixing toward the budget boundary
    /// can only help; the mixture is evaluated exactly and gated like any
    /// other candidate.
    fn blend_over_budget(&mut self, out: &inner::InnerOut, lambda: f64, nu: f64) {
        let tol = self.opts.constraint_tol;
        let Some(b) = &self.best else { return };
        let mut th = 1.0f64;
        if out.ed > self.delta + tol {
            let den = out.ed - b.ed;
            if den <= 0.0 {
                return;
            }
            th = th.min((self.delta - b.ed) / den);
        }
        if out.tv > self.pi + tol {
            let den = out.tv - b.tv;
            if den <= 0.0 {
                return;
            }
            th = th.min((self.pi - b.tv) / den);
        }
        if !(th > 0.0 && th < 1.0) {
            return;
        }
        let w: Vec<f64> = self
            .st
            .w
            .iter()
            .zip(&b.w)
            .map(|(&fresh, &inc)| th * fresh + (1.0 - th) * inc)
            .collect();
        let (i, ed, tv) = inner::assess(&self.env, &w);
        if ed <= self.delta + tol && tv <= self.pi + tol && i < b.i {
            self.best = Some(Incumbent {
                i,
                ed,
                tv,
                lambda,
                nu,
                w,
            });
        }
    }

    fn finish(self, requested_pi: f64) -> Result<RdpSolution> {
        let ctol = self.opts.constraint_tol;
        let best = self.best.ok_or_else(|| {
            Error::Infeasible(format!(
                "no kernel met distortion {} and perception {}",
                self.delta, requested_pi
            ))
        })?;
        let rate = best.i / LN_2 + ctol;
        let dual_bound = (self.best_dual / LN_2).max(0.0);
        let gap = (rate - dual_bound).max(0.0);
        // the deliberate tolerance inflation of `rate` must not count
        // against the certificate
        let core_gap = (best.i / LN_2 - dual_bound).max(0.0);
        let kx = self.env.kx;
        let kz = self.env.kz;
        let kernel = Channel::new(vec![kx, kz], self.env.ky, best.w)?;
        Ok(RdpSolution {
            rate,
            distortion: best.ed,
            perception: best.tv,
            lambda: best.lambda / LN_2,
            nu: best.nu / LN_2,
            dual_bound,
            gap,
            converged: core_gap <= self.opts.gap_target,
            inner_iterations: self.total_iters,
            kernel,
        })
    }
}

/// One affine overestimate of the dual surface: for the iterate behind it,
/// `G(l, n) <= i + e l + t n` with `e, t` the budget residuals.
#[derive(Clone, Copy)]
struct Cut {
    i: f64,
    e: f64,
    t: f64,
}

impl Cut {
    fn at(&self, l: f64, n: f64) -> f64 {
        self.i + self.e * l + self.t * n
    }
}

/// Maximizer of the cut model over `[0, l_hi] x [0, n_hi]`, found on a
/// log-spaced grid refined around the best cell. The model is concave, so
/// the coarse argmax localizes the true one and refinement closes in.
fn model_argmax(cuts: &[Cut], l_hi: f64, n_hi: f64, tv_active: bool) -> (f64, f64) {
    const GRID: usize = 25;
    let c = 1e-3;
    let a_l = (1.0 + l_hi / c).ln();
    let a_n = (1.0 + n_hi / c).ln();
    let to_l = |x: f64| c * ((a_l * x).exp() - 1.0);
    let to_n = |y: f64| c * ((a_n * y).exp() - 1.0);
    let model = |l: f64, n: f64| {
        cuts.iter()
            .map(|k| k.at(l, n))
            .fold(f64::INFINITY, f64::min)
    };
    let (mut lo_x, mut hi_x) = (0.0f64, 1.0f64);
    let (mut lo_y, mut hi_y) = (0.0f64, 1.0f64);
    let mut best = (0.0, 0.0);
    for _ in 0..9 {
        let ny = if tv_active { GRID } else { 1 };
        let mut bv = f64::NEG_INFINITY;
        let (mut bx, mut by) = (lo_x, lo_y);
        for ix in 0..GRID {
            let x = lo_x + (hi_x - lo_x) * ix as f64 / (GRID - 1) as f64;
            for iy in 0..ny {
                let y = if ny == 1 {
                    0.0
                } else {
                    lo_y + (hi_y - lo_y) * iy as f64 / (ny - 1) as f64
                };
                let v = model(to_l(x), to_n(y));
                if v > bv {
                    bv = v;
                    bx = x;
                    by = y;
                }
            }
        }
        best = (to_l(bx), to_n(by));
        let step_x = 1.5 * (hi_x - lo_x) / (GRID - 1) as f64;
        lo_x = (bx - step_x).max(0.0);
        hi_x = (bx + step_x).min(1.0);
        if tv_active {
            let step_y = 1.5 * (hi_y - lo_y) / (GRID - 1) as f64;
            lo_y = (by - step_y).max(0.0);
            hi_y = (by + step_y).min(1.0);
        }
    }
    best
}

/// Minimum rate compatible with the distortion budget `delta` and the
/// marginal-matching budget `pi`, for a single-letter memoryless source.
pub fn solve_empirical_rdp(
    prob: &RdpProblem,
    delta: f64,
    pi: f64,
    opts: &SolverOptions,
) -> Result<RdpSolution> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "distortion budget must be finite and nonnegative, got {delta}"
        )));
    }
    if !pi.is_finite() || pi < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "perception budget must be finite and nonnegative, got {pi}"
        )));
    }
    let pi_eff = pi.min(1.0);
    let env = Env::new(prob.source(), prob.distortion());
    let slack = opts.constraint_tol;
    if delta + slack < env.distortion_floor() {
        return Err(Error::Infeasible(format!(
            "distortion budget {delta} below floor {}",
            env.distortion_floor()
        )));
    }
    let tv_floor: f64 = env.px_ext.iter().skip(env.ky).sum();
    if pi_eff + slack < tv_floor {
        return Err(Error::Infeasible(format!(
            "perception budget {pi} below floor {tv_floor} forced by the alphabets"
        )));
    }

    let st = State::fresh(&env);
    let mut drv = Driver {
        env,
        st,
        opts,
        delta,
        pi: pi_eff,
        best: None,
        best_dual: f64::NEG_INFINITY,
        total_iters: 0,
    };

    // perception never binds when the whole unit budget is allowed
    let tv_active = pi_eff < 1.0;
    let cap = opts.multiplier_cap;
    // The dual is constant in the perception multiplier once the tilt box
    // is wide enough to hold the optimal tilt, so searching further out
    // buys nothing and costs a lot: iterate tv residuals carry harmless
    // absolute noise near 1e-9, and at nu ~ 1e7 the model term `t n` would
    // amplify that noise past the gap target and drown the distortion
    // geometry. Keep the nu box small and widen it only when a probe at
    // its top still breaks the perception budget.
    let mut n_hi = 32.0f64.min(cap);
    let mut cuts: Vec<Cut> = Vec::new();
    let mut best_dual_seen = f64::NEG_INFINITY;
    let mut best_info_seen = f64::INFINITY;
    let mut stall = 0;
    let mut boundary = 0;
    for probe in 0..opts.max_probes {
        let (l, n) = match probe {
            0 => (0.0, 0.0),
            1 => (1.0, if tv_active { 1.0 } else { 0.0 }),
            _ => model_argmax(&cuts, cap, n_hi, tv_active),
        };
        let out = drv.eval(l, n);
        cuts.push(Cut {
            i: out.i,
            e: out.ed - delta,
            t: out.tv - pi_eff,
        });
        if tv_active && n >= 0.98 * n_hi && out.tv > pi_eff + 0.5 * slack && n_hi < cap {
            n_hi = (n_hi.max(out.u_span) * 8.0).min(cap);
        }
        if let Some(b) = &drv.best {
            if (b.i - drv.best_dual.max(0.0)) / LN_2 <= opts.gap_target {
                break;
            }
        }
        // the model maximum running off along an axis means that budget is
        // unreachable and the dual is unbounded in that direction
        if l >= 0.999 * cap || n >= 0.999 * cap {
            boundary += 1;
            if boundary >= 3 && drv.best.is_none() {
                let (name, budget, residual) = if l >= 0.999 * cap {
                    ("distortion", delta, out.ed)
                } else {
                    ("perception", pi_eff, out.tv)
                };
                return Err(Error::Infeasible(format!(
                    "{name} budget {budget} unreachable: residual {residual} at multiplier cap {cap}"
                )));
            }
        } else {
            boundary = 0;
        }
        // certified progress stalling with the gap still open means the
        // remaining error sits below what the inner solves can resolve
        let info = drv.best.as_ref().map_or(f64::INFINITY, |b| b.i);
        if drv.best_dual > best_dual_seen + 1e-15 || info < best_info_seen - 1e-15 {
            stall = 0;
        } else {
            stall += 1;
            if stall >= 12 {
                break;
            }
        }
        best_dual_seen = best_dual_seen.max(drv.best_dual);
        best_info_seen = best_info_seen.min(info);
    }
    drv.finish(pi)
}

/// Rate-distortion function with the perception budget wide open. Same code
/// path as [`solve_empirical_rdp`] with the budget pinned at one.
pub fn solve_conditional_rd(
    prob: &RdpProblem,
    delta: f64,
    opts: &SolverOptions,
) -> Result<RdpSolution> {
    solve_empirical_rdp(prob, delta, 1.0, opts)
}

/// Rate under an exact marginal-matching requirement.
pub fn solve_perfect_realism(
    prob: &RdpProblem,
    delta: f64,
    opts: &SolverOptions,
) -> Result<RdpSolution> {
    solve_empirical_rdp(prob, delta, 0.0, opts)
}

/// Rate when the perception budget is enforced against product laws of
/// growing block length. The product distance is two-valued in the limit,
/// so any budget below one collapses to exact marginal matching and any
/// budget of one or more removes the constraint.
pub fn solve_strong_rdp(
    prob: &RdpProblem,
    delta: f64,
    pi: f64,
    opts: &SolverOptions,
) -> Result<RdpSolution> {
    if !pi.is_finite() || pi < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "perception budget must be finite and nonnegative, got {pi}"
        )));
    }
    if pi >= 1.0 {
        solve_empirical_rdp(prob, delta, 1.0, opts)
    } else {
        solve_empirical_rdp(prob, delta, 0.0, opts)
    }
}

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub delta: f64,
    pub pi: f64,
    pub rate: f64,
    pub distortion: f64,
    pub perception: f64,
    pub gap: f64,
    pub converged: bool,
}

/// Rate surface over a grid of budgets. Infeasible corners are skipped.
pub fn rdp_curve(
    prob: &RdpProblem,
    deltas: &[f64],
    pis: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<CurvePoint>> {
    use rayon::prelude::*;
    if deltas.is_empty() || pis.is_empty() {
        return Err(Error::Empty);
    }
    let pairs: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| pis.iter().map(move |&p| (d, p)))
        .collect();
    let points: Vec<Option<CurvePoint>> = pairs
        .par_iter()
        .map(|&(delta, pi)| match solve_empirical_rdp(prob, delta, pi, opts) {
            Ok(sol) => Ok(Some(CurvePoint {
                delta,
                pi,
                rate: sol.rate,
                distortion: sol.distortion,
                perception: sol.perception,
                gap: sol.gap,
                converged: sol.converged,
            })),
            Err(Error::Infeasible(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(points.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests;
