//! Grid-search oracle for the rate surface.
//!
//! Restricts every kernel row to the simplex grid with denominator
//! `resolution` and minimizes exactly over that grid, giving a solver-free
//! reference value. Two routes share the evaluation formulas:
//!
//! * a direct odometer over all row combinations when their product is
//!   small enough, and
//! * an exact two-slice sweep for binary alphabets with two conditioning
//!   symbols, where the direct product (`(res+1)^4` combinations) is out of
//!   reach. The sweep sorts one slice by distortion, inserts entries into a
//!   segment tree keyed by output-mass rank as the budget grows, and
//!   answers each combined query with a range minimum, which reproduces the
//!   full product minimum without enumerating it.

use super::RdpProblem;
use crate::prob::Channel;
use crate::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;
// comparison slop for grid arithmetic; keeps both routes consistent
const GRID_EPS: f64 = 1e-12;
const MAX_DIRECT_COMBOS: u128 = 20_000_000;

#[derive(Debug, Clone)]
pub struct BruteSolution {
    /// grid-optimal information in bits, no slack added
    pub rate: f64,
    pub distortion: f64,
    pub perception: f64,
    pub kernel: Channel,
}

/// All compositions of `total` into `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(left - c, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}

struct Eval<'a> {
    prob: &'a RdpProblem,
    pz: Vec<f64>,
    px_ext: Vec<f64>,
    ext: usize,
}

impl<'a> Eval<'a> {
    fn new(prob: &'a RdpProblem) -> Self {
        let (kx, kz, ky) = (prob.x_size(), prob.z_size(), prob.y_size());
        let ext = kx.max(ky);
        let mut pz = vec![0.0; kz];
        let mut px_ext = vec![0.0; ext];
        for x in 0..kx {
            for z in 0..kz {
                let w = prob.source().as_slice()[x * kz + z];
                pz[z] += w;
                px_ext[x] += w;
            }
        }
        Eval {
            prob,
            pz,
            px_ext,
            ext,
        }
    }

    /// (information nats, distortion, total variation) of a full kernel
    /// given as one row per (x, z) cell.
    fn eval(&self, rows: &[&[f64]]) -> (f64, f64, f64) {
        let (kx, kz, ky) = (
            self.prob.x_size(),
            self.prob.z_size(),
            self.prob.y_size(),
        );
        let src = self.prob.source().as_slice();
        let d = self.prob.distortion();
        let mut q = vec![0.0; kz * ky];
        for x in 0..kx {
            for z in 0..kz {
                let w = src[x * kz + z];
                for y in 0..ky {
                    q[z * ky + y] += w * rows[x * kz + z][y];
                }
            }
        }
        let mut i = 0.0;
        let mut ed = 0.0;
        let mut py = vec![0.0; ky];
        for z in 0..kz {
            if self.pz[z] == 0.0 {
                continue;
            }
            for y in 0..ky {
                py[y] += q[z * ky + y];
            }
        }
        for x in 0..kx {
            for z in 0..kz {
                let w = src[x * kz + z];
                if w == 0.0 {
                    continue;
                }
                for y in 0..ky {
                    let v = rows[x * kz + z][y];
                    ed += w * v * d.get(x, y);
                    if v > 0.0 {
                        // q here is already P(z) * P(y|z)
                        i += w * v * (v * self.pz[z] / q[z * ky + y]).ln();
                    }
                }
            }
        }
        let mut tv = 0.0;
        for y in 0..self.ext {
            let p = if y < ky { py[y] } else { 0.0 };
            tv += (p - self.px_ext[y]).abs();
        }
        (i.max(0.0), ed, 0.5 * tv)
    }
}

fn direct(
    prob: &RdpProblem,
    delta: f64,
    pi: f64,
    grid: &[Vec<f64>],
) -> Result<BruteSolution> {
    let cells = prob.x_size() * prob.z_size();
    let ev = Eval::new(prob);
    let mut pick = vec![0usize; cells];
    let mut best: Option<(f64, f64, f64, Vec<usize>)> = None;
    loop {
        let rows: Vec<&[f64]> = pick.iter().map(|&g| grid[g].as_slice()).collect();
        let (i, ed, tv) = ev.eval(&rows);
        if ed <= delta + GRID_EPS && tv <= pi + GRID_EPS {
            let better = best.as_ref().map_or(true, |b| i < b.0);
            if better {
                best = Some((i, ed, tv, pick.clone()));
            }
        }
        // odometer
        let mut axis = 0;
        loop {
            if axis == cells {
                let (i, ed, tv, pick) = best.ok_or_else(|| {
                    Error::Infeasible(format!(
                        "no grid kernel met distortion {delta} and perception {pi}"
                    ))
                })?;
                let rows: Vec<Vec<f64>> = pick.iter().map(|&g| grid[g].clone()).collect();
                let kernel =
                    Channel::from_rows(vec![prob.x_size(), prob.z_size()], &rows)?;
                return Ok(BruteSolution {
                    rate: i / LN_2,
                    distortion: ed,
                    perception: tv,
                    kernel,
                });
            }
            pick[axis] += 1;
            if pick[axis] < grid.len() {
                break;
            }
            pick[axis] = 0;
            axis += 1;
        }
    }
}

/// Range-minimum tree over (value, payload) pairs.
struct MinTree {
    size: usize,
    node: Vec<(f64, usize)>,
}

impl MinTree {
    fn new(leaves: usize) -> Self {
        let mut size = 1;
        while size < leaves.max(1) {
            size *= 2;
        }
        MinTree {
            size,
            node: vec![(f64::INFINITY, usize::MAX); 2 * size],
        }
    }

    fn insert(&mut self, leaf: usize, value: f64, payload: usize) {
        let mut i = leaf + self.size;
        if value < self.node[i].0 {
            self.node[i] = (value, payload);
            i /= 2;
            while i >= 1 {
                let l = self.node[2 * i];
                let r = self.node[2 * i + 1];
                let m = if l.0 <= r.0 { l } else { r };
                if m == self.node[i] {
                    break;
                }
                self.node[i] = m;
                if i == 1 {
                    break;
                }
                i /= 2;
            }
        }
    }

    /// min over leaves in [lo, hi], inclusive
    fn query(&self, lo: usize, hi: usize) -> (f64, usize) {
        if lo > hi {
            return (f64::INFINITY, usize::MAX);
        }
        let (mut l, mut r) = (lo + self.size, hi + self.size + 1);
        let mut best = (f64::INFINITY, usize::MAX);
        while l < r {
            if l % 2 == 1 {
                if self.node[l].0 < best.0 {
                    best = self.node[l];
                }
                l += 1;
            }
            if r % 2 == 1 {
                r -= 1;
                if self.node[r].0 < best.0 {
                    best = self.node[r];
                }
            }
            l /= 2;
            r /= 2;
        }
        best
    }
}

/// Per-slice grid entry: weighted information, distortion share, and the
/// slice's contribution to the output mass on symbol zero.
#[derive(Debug, Clone, Copy)]
struct SliceEntry {
    i: f64,
    d: f64,
    v: f64,
    c0: usize,
    c1: usize,
}

fn slice_table(prob: &RdpProblem, z: usize, res: usize) -> Vec<SliceEntry> {
    let src = prob.source().as_slice();
    let kz = prob.z_size();
    let d = prob.distortion();
    let p0 = src[z]; // x = 0
    let p1 = src[kz + z]; // x = 1
    let pz = p0 + p1;
    let mut out = Vec::with_capacity((res + 1) * (res + 1));
    for c0 in 0..=res {
        let w00 = c0 as f64 / res as f64;
        for c1 in 0..=res {
            let w10 = c1 as f64 / res as f64;
            let q0 = p0 * w00 + p1 * w10;
            let q1 = pz - q0;
            let mut i = 0.0;
            for (px, w0) in [(p0, w00), (p1, w10)] {
                if px == 0.0 {
                    continue;
                }
                if w0 > 0.0 && q0 > 0.0 {
                    i += px * w0 * (w0 * pz / q0).ln();
                }
                let w1 = 1.0 - w0;
                if w1 > 0.0 && q1 > 0.0 {
                    i += px * w1 * (w1 * pz / q1).ln();
                }
            }
            let dd = p0 * (w00 * d.get(0, 0) + (1.0 - w00) * d.get(0, 1))
                + p1 * (w10 * d.get(1, 0) + (1.0 - w10) * d.get(1, 1));
            out.push(SliceEntry {
                i: i.max(0.0),
                d: dd,
                v: q0,
                c0,
                c1,
            });
        }
    }
    out
}

pub(super) fn split_sweep(prob: &RdpProblem, delta: f64, pi: f64, res: usize) -> Result<BruteSolution> {
    let px0 = prob.source().as_slice()[0] + prob.source().as_slice()[1];
    let (lo_v, hi_v) = (px0 - pi - GRID_EPS, px0 + pi + GRID_EPS);
    let a = slice_table(prob, 0, res);
    let mut b = slice_table(prob, 1, res);
    b.sort_by(|p, q| p.d.total_cmp(&q.d));

    // rank the second slice's mass contributions for range queries
    let mut vs: Vec<f64> = b.iter().map(|e| e.v).collect();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    let rank = |v: f64| vs.partition_point(|&u| u < v);

    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&p, &q| a[q].d.total_cmp(&a[p].d)); // descending budget use

    let mut tree = MinTree::new(vs.len());
    let mut inserted = 0usize;
    let mut best: Option<(f64, usize, usize)> = None;
    for &ai in &order {
        let ea = &a[ai];
        let budget = delta + GRID_EPS - ea.d;
        if budget < 0.0 {
            continue;
        }
        while inserted < b.len() && b[inserted].d <= budget {
            let e = &b[inserted];
            tree.insert(rank(e.v), e.i, inserted);
            inserted += 1;
        }
        if inserted == 0 {
            continue;
        }
        // window for the partner's mass contribution
        let lo = vs.partition_point(|&u| u < lo_v - ea.v);
        let hi = vs.partition_point(|&u| u <= hi_v - ea.v);
        if lo >= hi {
            continue;
        }
        let (bi_val, bi) = tree.query(lo, hi - 1);
        if bi != usize::MAX {
            let total = ea.i + bi_val;
            if best.as_ref().map_or(true, |&(t, _, _)| total < t) {
                best = Some((total, ai, bi));
            }
        }
    }

    let (i, ai, bi) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no grid kernel met distortion {delta} and perception {pi}"
        ))
    })?;
    let (ea, eb) = (&a[ai], &b[bi]);
    let r = res as f64;
    let rows = vec![
        vec![ea.c0 as f64 / r, 1.0 - ea.c0 as f64 / r], // (x=0, z=0)
        vec![eb.c0 as f64 / r, 1.0 - eb.c0 as f64 / r], // (x=0, z=1)
        vec![ea.c1 as f64 / r, 1.0 - ea.c1 as f64 / r], // (x=1, z=0)
        vec![eb.c1 as f64 / r, 1.0 - eb.c1 as f64 / r], // (x=1, z=1)
    ];
    let kernel = Channel::from_rows(vec![2, 2], &rows)?;
    Ok(BruteSolution {
        rate: i / LN_2,
        distortion: ea.d + eb.d,
        perception: (ea.v + eb.v - px0).abs(),
        kernel,
    })
}

/// Exact minimum of the rate over all kernels whose rows live on the
/// simplex grid with denominator `resolution`.
pub fn brute_force_rdp(
    prob: &RdpProblem,
    delta: f64,
    pi: f64,
    resolution: usize,
) -> Result<BruteSolution> {
    if resolution == 0 {
        return Err(Error::InvalidParameter(
            "grid resolution must be positive".into(),
        ));
    }
    if !delta.is_finite() || delta < 0.0 || !pi.is_finite() || pi < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "budgets must be finite and nonnegative, got ({delta}, {pi})"
        )));
    }
    let cells = prob.x_size() * prob.z_size();
    let per_cell = {
        // C(res + ky - 1, ky - 1)
        let mut c: u128 = 1;
        for i in 0..(prob.y_size() - 1) {
            c = c.saturating_mul((resolution + i + 1) as u128) / (i as u128 + 1);
        }
        c
    };
    let combos = (0..cells).try_fold(1u128, |acc, _| acc.checked_mul(per_cell));
    match combos {
        Some(n) if n <= MAX_DIRECT_COMBOS => {
            let grid: Vec<Vec<f64>> = compositions(resolution, prob.y_size())
                .into_iter()
                .map(|c| {
                    c.into_iter()
                        .map(|k| k as f64 / resolution as f64)
                        .collect()
                })
                .collect();
            direct(prob, delta, pi.min(1.0), &grid)
        }
        _ if prob.x_size() == 2 && prob.y_size() == 2 && prob.z_size() == 2 => {
            split_sweep(prob, delta, pi.min(1.0), resolution)
        }
        _ => Err(Error::TooLarge {
            what: "grid kernel combinations",
            required: combos.unwrap_or(u128::MAX),
            budget: MAX_DIRECT_COMBOS,
        }),
    }
}
