//! Fixed-multiplier inner minimization.
//!
//! For multipliers `(lambda, nu)` this minimizes
//!
//! `F(W) = I(X;Y|Z) + lambda * E[d(X,Y)] + nu * tv(P_X, P_Y)`
//!
//! over reconstruction kernels `W(y|x,z)` by alternating exact coordinate
//! updates (the output-reference update and the tilted row update) with a
//! damped ascent on the total-variation tilt. The tilt vector `u` lives in
//! the box `[-nu/2, nu/2]` per output symbol; `nu * tv` equals the maximum
//! of `sum_y u_y (P_Y(y) - P_X(y))` over that box, so the inner problem is
//! a convex-concave saddle. Walking the tilt directly (rather than the
//! normalized subgradient) keeps the step scale independent of `nu`, which
//! matters because the outer layer probes very large multipliers when it
//! pins the output marginal exactly. Interior tilt values at convergence
//! act as equality multipliers, which is what makes perfect-realism budgets
//! attainable at finite `nu`.
//!
//! Everything in this module works in nats. The public layer converts.
//!
//! Each solve also produces a certified lower bound on the dual value via
//! the scaled reference-law bound: for any reference outputs `q_z`, any
//! tilt `u` in the box, and `alpha_z(x) = 1 / sum_y q_z(y) exp(-d'(x,y))`
//! with `d'(x,y) = lambda d(x,y) + u_y`,
//!
//! `min_W F >= -u . P_X + sum_z P(z) [ sum_x P(x|z) ln alpha_z(x)
//!            - ln max_y sum_x P(x|z) alpha_z(x) exp(-d'(x,y)) ]`
//!
//! which is tight as `q_z` and `u` approach their optima. The gap between
//! the primal value and this bound certifies inner accuracy regardless of
//! how the iteration behaved.

use crate::prob::{DistortionMatrix, JointTable};
use crate::tolerances::LOG_WEIGHT_FLOOR;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell {
    pub x: usize,
    pub z: usize,
    pub w: f64,
}

/// Problem data shared by every inner solve of one outer run.
pub(crate) struct Env<'a> {
    pub kx: usize,
    pub ky: usize,
    pub kz: usize,
    /// max(kx, ky); the padded alphabet both marginals embed into
    pub ext: usize,
    /// positive-mass source cells only
    pub cells: Vec<Cell>,
    pub pz: Vec<f64>,
    /// source marginal over the padded output alphabet
    pub px_ext: Vec<f64>,
    pub dist: &'a DistortionMatrix,
}

impl<'a> Env<'a> {
    pub fn new(source: &JointTable, dist: &'a DistortionMatrix) -> Self {
        let kx = source.dims()[0];
        let kz = source.dims()[1];
        let ky = dist.y_size();
        let ext = kx.max(ky);
        let mut cells = Vec::new();
        let mut pz = vec![0.0; kz];
        let mut px_ext = vec![0.0; ext];
        for x in 0..kx {
            for z in 0..kz {
                let w = source.as_slice()[x * kz + z];
                pz[z] += w;
                px_ext[x] += w;
                if w > 0.0 {
                    cells.push(Cell { x, z, w });
                }
            }
        }
        Env {
            kx,
            ky,
            kz,
            ext,
            cells,
            pz,
            px_ext,
            dist,
        }
    }

    pub fn distortion_floor(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| {
                c.w * self
                    .dist
                    .row(c.x)
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }
}

/// Mutable iterate carried between inner solves for warm starting.
pub(crate) struct State {
    /// kernel rows, kx*kz by ky, zero-mass rows stay uniform
    pub w: Vec<f64>,
    /// marginal-matching tilt over the padded alphabet, nats
    pub u: Vec<f64>,
    eta: f64,
}

impl State {
    pub fn fresh(env: &Env) -> Self {
        let mut w = vec![1.0 / env.ky as f64; env.kx * env.kz * env.ky];
        // bias the start toward the source marginal so perception-tight
        // solves begin near feasibility
        for c in &env.cells {
            let row = &mut w[(c.x * env.kz + c.z) * env.ky..][..env.ky];
            let mut sum = 0.0;
            for (y, v) in row.iter_mut().enumerate() {
                let px = if y < env.ext { env.px_ext[y] } else { 0.0 };
                *v = 0.5 * *v + 0.5 * px;
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        State {
            w,
            u: vec![0.0; env.ext],
            eta: 4.0,
        }
    }

    /// Pulls every kernel row slightly toward uniform. Zero entries are
    /// absorbing under multiplicative updates, so a warm start from a
    /// different multiplier point must reopen the support first.
    pub fn reopen_support(&mut self, env: &Env) {
        const MIX: f64 = 1e-3;
        let u = 1.0 / env.ky as f64;
        for v in self.w.iter_mut() {
            *v = (1.0 - MIX) * *v + MIX * u;
        }
        self.eta = self.eta.clamp(1e-3, 16.0);
    }
}

pub(crate) struct InnerOut {
    /// conditional mutual information of the iterate, nats
    pub i: f64,
    pub ed: f64,
    pub tv: f64,
    /// certified lower bound on the dual value at these multipliers for
    /// the (delta, pi) targets passed in, nats
    pub dual: f64,
    pub iters: usize,
    /// twice the largest tilt magnitude; the smallest box that would have
    /// held this solve's tilt without clamping
    pub u_span: f64,
}

pub(crate) struct InnerOpts {
    pub max_iters: usize,
    /// stop once the certified primal-dual gap (nats) is below this
    pub gap_tol: f64,
}

fn marginals(env: &Env, w: &[f64], q: &mut [f64], py: &mut [f64]) {
    q.fill(0.0);
    py.fill(0.0);
    for c in &env.cells {
        let row = &w[(c.x * env.kz + c.z) * env.ky..][..env.ky];
        for (y, &v) in row.iter().enumerate() {
            q[c.z * env.ky + y] += c.w * v;
        }
    }
    for z in 0..env.kz {
        if env.pz[z] > 0.0 {
            for y in 0..env.ky {
                let m = q[z * env.ky + y] / env.pz[z];
                q[z * env.ky + y] = m;
                py[y] += env.pz[z] * m;
            }
        }
    }
}

fn evaluate(env: &Env, w: &[f64], q: &[f64], py: &[f64]) -> (f64, f64, f64) {
    let mut i = 0.0;
    let mut ed = 0.0;
    for c in &env.cells {
        let row = &w[(c.x * env.kz + c.z) * env.ky..][..env.ky];
        let drow = env.dist.row(c.x);
        for (y, &v) in row.iter().enumerate() {
            if v > 0.0 {
                i += c.w * v * (v / q[c.z * env.ky + y]).ln();
            }
            ed += c.w * v * drow[y];
        }
    }
    let mut tv = 0.0;
    for y in 0..env.ext {
        let p = if y < env.ky { py[y] } else { 0.0 };
        tv += (p - env.px_ext[y]).abs();
    }
    (i.max(0.0), ed, 0.5 * tv)
}

/// Information, distortion, and marginal mismatch of an arbitrary kernel.
pub(crate) fn assess(env: &Env, w: &[f64]) -> (f64, f64, f64) {
    let mut q = vec![0.0; env.kz * env.ky];
    let mut py = vec![0.0; env.ky];
    marginals(env, w, &mut q, &mut py);
    evaluate(env, w, &q, &py)
}

/// Certified dual value at `(lambda, nu)` for targets `(delta, pi)`.
/// Requires `|u_y| <= nu / 2` for every coordinate.
fn lower_bound(
    env: &Env,
    q: &[f64],
    u: &[f64],
    lambda: f64,
    nu: f64,
    delta: f64,
    pi: f64,
) -> f64 {
    let mut bound = -lambda * delta - nu * pi;
    for (y, &uv) in u.iter().enumerate() {
        bound -= uv * env.px_ext[y];
    }
    // ln alpha per positive-mass cell, then the per-z scaling correction
    let mut ln_alpha = vec![0.0; env.kx * env.kz];
    for c in &env.cells {
        let drow = env.dist.row(c.x);
        let mut m = f64::NEG_INFINITY;
        for y in 0..env.ky {
            if q[c.z * env.ky + y] > 0.0 {
                m = m.max(-lambda * drow[y] - u[y]);
            }
        }
        let mut acc = 0.0;
        for y in 0..env.ky {
            let qv = q[c.z * env.ky + y];
            if qv > 0.0 {
                acc += qv * (-lambda * drow[y] - u[y] - m).exp();
            }
        }
        ln_alpha[c.x * env.kz + c.z] = -(m + acc.ln());
        bound += c.w * ln_alpha[c.x * env.kz + c.z];
    }
    for z in 0..env.kz {
        if env.pz[z] == 0.0 {
            continue;
        }
        // scaling alpha by 1/max_y c makes it feasible for the dual
        // constraint with equality at the binding output, so subtracting
        // ln max_y c is always valid and tight
        let mut ln_cmax = f64::NEG_INFINITY;
        for y in 0..env.ky {
            // logsumexp over x of ln P(x|z) + ln alpha - d'
            let mut m = f64::NEG_INFINITY;
            for c in env.cells.iter().filter(|c| c.z == z) {
                let t = (c.w / env.pz[z]).ln() + ln_alpha[c.x * env.kz + c.z]
                    - lambda * env.dist.get(c.x, y)
                    - u[y];
                m = m.max(t);
            }
            let mut acc = 0.0;
            for c in env.cells.iter().filter(|c| c.z == z) {
                let t = (c.w / env.pz[z]).ln() + ln_alpha[c.x * env.kz + c.z]
                    - lambda * env.dist.get(c.x, y)
                    - u[y];
                acc += (t - m).exp();
            }
            ln_cmax = ln_cmax.max(m + acc.ln());
        }
        bound -= env.pz[z] * ln_cmax;
    }
    bound
}

fn row_update(env: &Env, lambda: f64, u: &[f64], q: &[f64], w: &mut [f64]) {
    let ky = env.ky;
    for c in &env.cells {
        let row = &mut w[(c.x * env.kz + c.z) * ky..][..ky];
        let drow = env.dist.row(c.x);
        let mut m = f64::NEG_INFINITY;
        for y in 0..ky {
            // flooring keeps starved outputs revivable by a strong tilt
            let lnq = q[c.z * ky + y].ln().max(LOG_WEIGHT_FLOOR);
            row[y] = lnq - lambda * drow[y] - u[y];
            m = m.max(row[y]);
        }
        let mut sum = 0.0;
        for y in 0..ky {
            row[y] = (row[y] - m).exp();
            sum += row[y];
        }
        for y in 0..ky {
            row[y] /= sum;
        }
    }
}

/// Alternates row and reference updates at fixed tilt until the tilted
/// Lagrangian `I + lambda E[d] + u . P_Y` plateaus or the step allowance
/// runs out. Each pass decreases that Lagrangian, so the plateau test is
/// reliable. Returns the iterate statistics and the number of passes.
fn settle(
    env: &Env,
    lambda: f64,
    st: &mut State,
    q: &mut [f64],
    py: &mut [f64],
    max_steps: usize,
) -> ((f64, f64, f64), usize) {
    let mut e = evaluate(env, &st.w, q, py);
    let tilt = |e: &(f64, f64, f64), py: &[f64], u: &[f64]| {
        let mut j = e.0 + lambda * e.1;
        for (y, &p) in py.iter().enumerate() {
            j += u[y] * p;
        }
        j
    };
    let mut prev = tilt(&e, py, &st.u);
    let mut plateau = 0;
    let mut used = 0;
    while used < max_steps {
        row_update(env, lambda, &st.u, q, &mut st.w);
        marginals(env, &st.w, q, py);
        used += 1;
        e = evaluate(env, &st.w, q, py);
        let j = tilt(&e, py, &st.u);
        if (prev - j).abs() <= 1e-14 * (1.0 + j.abs()) {
            plateau += 1;
            if plateau >= 4 {
                break;
            }
        } else {
            plateau = 0;
        }
        prev = j;
    }
    (e, used)
}

/// One backtracking ascent step on the settled dual value
/// `G(u) = min_{W} [ I + lambda E[d] + u . (P_Y - P_X) ]`, projected onto
/// the tilt box. `G` is concave, so accepting only non-decreasing moves
/// rules out the wall-to-wall oscillation raw subgradient steps fall into
/// when the box is enormous. Returns false once no admissible move helps,
/// which means the saddle is reached to working precision.
#[allow(clippy::too_many_arguments)]
fn tilt_ascent(
    env: &Env,
    lambda: f64,
    box_hi: f64,
    st: &mut State,
    q: &mut [f64],
    py: &mut [f64],
    eval: &mut (f64, f64, f64),
    budget: &mut usize,
) -> bool {
    let ky = env.ky;
    let g_of = |e: &(f64, f64, f64), u: &[f64], py: &[f64]| {
        let mut g = e.0 + lambda * e.1;
        for (y, &uv) in u.iter().enumerate() {
            let p = if y < ky { py[y] } else { 0.0 };
            g += uv * (p - env.px_ext[y]);
        }
        g
    };
    let g0 = g_of(eval, &st.u, py);
    let mut grad = vec![0.0; env.ext];
    let mut gn = 0.0;
    for y in 0..env.ext {
        let p = if y < ky { py[y] } else { 0.0 };
        grad[y] = p - env.px_ext[y];
        gn += grad[y] * grad[y];
    }
    if gn == 0.0 {
        return false;
    }
    let u0 = st.u.clone();
    let w0 = st.w.clone();
    let q0 = q.to_vec();
    let py0 = py.to_vec();
    let e0 = *eval;
    while *budget > 0 {
        let mut moved = false;
        for y in 0..env.ext {
            st.u[y] = (u0[y] + st.eta * grad[y]).clamp(-box_hi, box_hi);
            moved |= st.u[y] != u0[y];
        }
        if !moved {
            st.u.copy_from_slice(&u0);
            return false;
        }
        let allowance = (*budget).min(24);
        let (e1, used) = settle(env, lambda, st, q, py, allowance);
        *budget -= used;
        let g1 = g_of(&e1, &st.u, py);
        // strict sufficient increase; anything weaker lets fp noise walk
        // the tilt in circles until the budget is gone
        if g1 > g0 + 1e-15 * (1.0 + g0.abs()) {
            st.eta = (st.eta * 1.6).min(1e9);
            *eval = e1;
            return true;
        }
        st.eta *= 0.5;
        st.w.copy_from_slice(&w0);
        q.copy_from_slice(&q0);
        py.copy_from_slice(&py0);
        *eval = e0;
        if st.eta < 1e-12 {
            st.u.copy_from_slice(&u0);
            return false;
        }
    }
    st.u.copy_from_slice(&u0);
    false
}

pub(crate) fn solve(
    env: &Env,
    lambda: f64,
    nu: f64,
    delta: f64,
    pi: f64,
    st: &mut State,
    opts: &InnerOpts,
) -> InnerOut {
    let ky = env.ky;
    let box_hi = 0.5 * nu;
    for uv in st.u.iter_mut() {
        *uv = uv.clamp(-box_hi, box_hi);
    }
    // outputs the reconstruction alphabet lacks always carry the full tilt
    for uv in st.u.iter_mut().skip(ky) {
        *uv = -box_hi;
    }
    let mut q = vec![0.0; env.kz * ky];
    let mut py = vec![0.0; ky];

    // with a vanishing distortion price the alternation has no unique
    // attractor (every row tilts identically), so hand back the
    // information-free kernel carrying the source marginal; it is within
    // lambda * d_max of the inner optimum and certifies almost exactly
    if lambda * env.dist.max_entry() <= 1e-10 {
        let leftover: f64 = env.px_ext.iter().skip(ky).sum();
        let mut row = vec![0.0; ky];
        for (y, r) in row.iter_mut().enumerate() {
            *r = env.px_ext[y] + leftover / ky as f64;
        }
        for c in &env.cells {
            st.w[(c.x * env.kz + c.z) * ky..][..ky].copy_from_slice(&row);
        }
        st.u.fill(0.0);
        marginals(env, &st.w, &mut q, &mut py);
        let eval = evaluate(env, &st.w, &q, &py);
        let dual = lower_bound(env, &q, &st.u, lambda, nu, delta, pi);
        return InnerOut {
            i: eval.0,
            ed: eval.1,
            tv: eval.2,
            dual,
            iters: 1,
            u_span: 0.0,
        };
    }

    marginals(env, &st.w, &mut q, &mut py);
    let mut best_dual = f64::NEG_INFINITY;
    let mut budget = opts.max_iters;
    let mut eval;

    loop {
        let allowance = budget.min(1024);
        let (e, used) = settle(env, lambda, st, &mut q, &mut py, allowance);
        budget -= used;
        eval = e;
        let lb = lower_bound(env, &q, &st.u, lambda, nu, delta, pi);
        best_dual = best_dual.max(lb);
        let primal = eval.0 + lambda * (eval.1 - delta) + nu * (eval.2 - pi);
        if primal - best_dual <= opts.gap_tol || budget == 0 {
            break;
        }
        if nu == 0.0 {
            // plain alternation has nothing else to move once settled
            if used < allowance {
                break;
            }
            continue;
        }
        if !tilt_ascent(
            env, lambda, box_hi, st, &mut q, &mut py, &mut eval, &mut budget,
        ) {
            let lb = lower_bound(env, &q, &st.u, lambda, nu, delta, pi);
            best_dual = best_dual.max(lb);
            break;
        }
    }

    let u_span = 2.0
        * st.u
            .iter()
            .take(ky)
            .fold(0.0f64, |m, &v| m.max(v.abs()));
    InnerOut {
        i: eval.0,
        ed: eval.1,
        tv: eval.2,
        dual: best_dual,
        iters: opts.max_iters - budget,
        u_span,
    }
}
