//! Validated probability primitives.
//!
//! All types are immutable after construction and all constructors validate
//! their invariants, so downstream numeric code never re-checks shapes or
//! normalization. Joint tables are stored row-major with the last axis
//! fastest; channels store one mass row per joint configuration of their
//! conditioning axes, row-major over those axes in the order listed.

mod info;
mod product_tv;

pub use info::{
    conditional_mutual_information, entropy, expected_distortion, mutual_information,
    tv_distance, tv_empirical, tv_tables,
};
pub use product_tv::{limsup_product_tv, product_tv};

pub(crate) use info::tv_padded;

use crate::tolerances::NORMALIZATION;
use crate::{Error, Result};

fn check_mass(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidMass { value: v });
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION {
        return Err(Error::NotNormalized {
            sum,
            tol: NORMALIZATION,
        });
    }
    Ok(())
}

pub(crate) fn flat_index(idx: &[usize], dims: &[usize]) -> usize {
    debug_assert_eq!(idx.len(), dims.len());
    let mut f = 0;
    for (&i, &d) in idx.iter().zip(dims) {
        debug_assert!(i < d);
        f = f * d + i;
    }
    f
}

pub(crate) fn unflatten(mut flat: usize, dims: &[usize], idx: &mut [usize]) {
    for ax in (0..dims.len()).rev() {
        idx[ax] = flat % dims[ax];
        flat /= dims[ax];
    }
}

/// A probability distribution over a finite alphabet `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    /// Validates that `p` is a distribution: nonnegative entries summing to
    /// one within [`NORMALIZATION`].
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_mass(&p)?;
        Ok(ProbVec(p))
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        for &w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidMass { value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::NotNormalized {
                sum,
                tol: NORMALIZATION,
            });
        }
        Ok(ProbVec(weights.iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "alphabet must be nonempty");
        ProbVec(vec![1.0 / k as f64; k])
    }

    pub fn point_mass(k: usize, at: usize) -> Self {
        assert!(at < k, "point mass outside alphabet");
        let mut p = vec![0.0; k];
        p[at] = 1.0;
        ProbVec(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ProbVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A joint distribution over several finite axes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    dims: Vec<usize>,
    mass: Vec<f64>,
}

impl JointTable {
    pub fn new(dims: Vec<usize>, mass: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Empty);
        }
        let expected: usize = dims.iter().product();
        if mass.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: mass.len(),
            });
        }
        check_mass(&mass)?;
        Ok(JointTable { dims, mass })
    }

    /// Independent product of single-axis distributions.
    pub fn product(factors: &[&ProbVec]) -> Self {
        assert!(!factors.is_empty());
        let dims: Vec<usize> = factors.iter().map(|f| f.len()).collect();
        let total: usize = dims.iter().product();
        let mut mass = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims.len()];
        for flat in 0..total {
            unflatten(flat, &dims, &mut idx);
            mass.push(idx.iter().zip(factors).map(|(&i, f)| f[i]).product());
        }
        JointTable { dims, mass }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn axes(&self) -> usize {
        self.dims.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_at(&self, idx: &[usize]) -> f64 {
        self.mass[flat_index(idx, &self.dims)]
    }

    /// Marginal distribution of one axis.
    pub fn marginal(&self, axis: usize) -> Result<ProbVec> {
        if axis >= self.dims.len() {
            return Err(Error::AxisOutOfBounds {
                axis,
                axes: self.dims.len(),
            });
        }
        let mut out = vec![0.0; self.dims[axis]];
        let mut idx = vec![0usize; self.dims.len()];
        for (flat, &m) in self.mass.iter().enumerate() {
            unflatten(flat, &self.dims, &mut idx);
            out[idx[axis]] += m;
        }
        ProbVec::new(out)
    }

    /// Marginal table over `keep`, whose axes appear in the order listed.
    /// Listing axes in a permuted order permutes the table.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointTable> {
        if keep.is_empty() {
            return Err(Error::Empty);
        }
        for &axis in keep {
            if axis >= self.dims.len() {
                return Err(Error::AxisOutOfBounds {
                    axis,
                    axes: self.dims.len(),
                });
            }
        }
        let out_dims: Vec<usize> = keep.iter().map(|&ax| self.dims[ax]).collect();
        let total: usize = out_dims.iter().product();
        let mut out = vec![0.0; total];
        let mut idx = vec![0usize; self.dims.len()];
        for (flat, &m) in self.mass.iter().enumerate() {
            unflatten(flat, &self.dims, &mut idx);
            let mut f = 0;
            for (&ax, &d) in keep.iter().zip(&out_dims) {
                f = f * d + idx[ax];
            }
            out[f] += m;
        }
        JointTable::new(out_dims, out)
    }

    /// Conditional law of `target` given all remaining axes (in original
    /// order). Rows conditioned on zero-mass configurations are flagged
    /// undefined rather than invented; consumers must not read them.
    pub fn condition(&self, target: usize) -> Result<Channel> {
        if target >= self.dims.len() {
            return Err(Error::AxisOutOfBounds {
                axis: target,
                axes: self.dims.len(),
            });
        }
        if self.dims.len() < 2 {
            return Err(Error::ShapeMismatch {
                context: "conditioning needs at least two axes".into(),
            });
        }
        let in_axes: Vec<usize> = (0..self.dims.len()).filter(|&a| a != target).collect();
        let in_dims: Vec<usize> = in_axes.iter().map(|&a| self.dims[a]).collect();
        let out_dim = self.dims[target];
        let n_rows: usize = in_dims.iter().product();
        let mut rows = vec![0.0; n_rows * out_dim];
        let mut idx = vec![0usize; self.dims.len()];
        for (flat, &m) in self.mass.iter().enumerate() {
            unflatten(flat, &self.dims, &mut idx);
            let mut r = 0;
            for (&ax, &d) in in_axes.iter().zip(&in_dims) {
                r = r * d + idx[ax];
            }
            rows[r * out_dim + idx[target]] += m;
        }
        let mut defined = vec![true; n_rows];
        for r in 0..n_rows {
            let row = &mut rows[r * out_dim..(r + 1) * out_dim];
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                row.fill(f64::NAN);
                defined[r] = false;
            } else {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        Ok(Channel {
            in_dims,
            out_dim,
            rows,
            defined,
        })
    }
}

/// A conditional distribution: one output row per joint configuration of the
/// conditioning axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    in_dims: Vec<usize>,
    out_dim: usize,
    rows: Vec<f64>,
    defined: Vec<bool>,
}

impl Channel {
    /// Validates that every row is a distribution over `out_dim`.
    pub fn new(in_dims: Vec<usize>, out_dim: usize, rows: Vec<f64>) -> Result<Self> {
        if in_dims.is_empty() || in_dims.iter().any(|&d| d == 0) || out_dim == 0 {
            return Err(Error::Empty);
        }
        let n_rows: usize = in_dims.iter().product();
        if rows.len() != n_rows * out_dim {
            return Err(Error::LengthMismatch {
                expected: n_rows * out_dim,
                got: rows.len(),
            });
        }
        for r in 0..n_rows {
            check_mass(&rows[r * out_dim..(r + 1) * out_dim])?;
        }
        Ok(Channel {
            in_dims,
            out_dim,
            rows,
            defined: vec![true; n_rows],
        })
    }

    /// Builds a channel from per-row distributions.
    pub fn from_rows(in_dims: Vec<usize>, rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows: usize = in_dims.iter().product();
        if rows.len() != n_rows {
            return Err(Error::LengthMismatch {
                expected: n_rows,
                got: rows.len(),
            });
        }
        let out_dim = rows.first().map_or(0, |r| r.len());
        let mut flat = Vec::with_capacity(n_rows * out_dim);
        for row in rows {
            if row.len() != out_dim {
                return Err(Error::LengthMismatch {
                    expected: out_dim,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Channel::new(in_dims, out_dim, flat)
    }

    /// The deterministic identity channel on `k` symbols.
    pub fn identity(k: usize) -> Self {
        let mut rows = vec![0.0; k * k];
        for i in 0..k {
            rows[i * k + i] = 1.0;
        }
        Channel {
            in_dims: vec![k],
            out_dim: k,
            rows,
            defined: vec![true; k],
        }
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn n_rows(&self) -> usize {
        self.defined.len()
    }

    pub fn flat_row_index(&self, idx: &[usize]) -> usize {
        flat_index(idx, &self.in_dims)
    }

    pub fn is_defined(&self, flat_row: usize) -> bool {
        self.defined[flat_row]
    }

    /// Mass row by flat index. Panics if the row is undefined; use
    /// [`Channel::try_row`] when conditioning may have produced holes.
    pub fn row(&self, flat_row: usize) -> &[f64] {
        assert!(
            self.defined[flat_row],
            "read of undefined conditional row {flat_row}"
        );
        &self.rows[flat_row * self.out_dim..(flat_row + 1) * self.out_dim]
    }

    pub fn try_row(&self, flat_row: usize) -> Result<&[f64]> {
        if !self.defined[flat_row] {
            return Err(Error::UndefinedRow { row: flat_row });
        }
        Ok(&self.rows[flat_row * self.out_dim..(flat_row + 1) * self.out_dim])
    }

    /// Row addressed by a full conditioning index.
    pub fn row_at(&self, idx: &[usize]) -> &[f64] {
        self.row(self.flat_row_index(idx))
    }
}

/// Joint law of conditioning axes and channel output: `prior` over the
/// channel's `in_dims` composed with the channel, output axis appended last.
/// Zero-mass prior cells contribute zero without reading the channel row, so
/// undefined rows under zero-mass configurations are harmless.
pub fn compose(prior: &JointTable, ch: &Channel) -> Result<JointTable> {
    if prior.dims() != ch.in_dims() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "prior axes {:?} do not match channel conditioning axes {:?}",
                prior.dims(),
                ch.in_dims()
            ),
        });
    }
    let mut dims = prior.dims().to_vec();
    dims.push(ch.out_dim());
    let mut mass = vec![0.0; prior.as_slice().len() * ch.out_dim()];
    for (r, &m) in prior.as_slice().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let row = ch.try_row(r)?;
        for (y, &w) in row.iter().enumerate() {
            mass[r * ch.out_dim() + y] = m * w;
        }
    }
    JointTable::new(dims, mass)
}

/// Single-axis convenience form of [`compose`].
pub fn compose_dist(prior: &ProbVec, ch: &Channel) -> Result<JointTable> {
    let table = JointTable::new(vec![prior.len()], prior.as_slice().to_vec())?;
    compose(&table, ch)
}

/// Empirical distribution with exact integer counts, so masses are exact
/// multiples of `1/n` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDist {
    dims: Vec<usize>,
    counts: Vec<u64>,
    n: u64,
}

impl EmpiricalDist {
    pub fn from_sequence(seq: &[usize], alphabet: usize) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::Empty);
        }
        if alphabet == 0 {
            return Err(Error::Empty);
        }
        let mut counts = vec![0u64; alphabet];
        for &s in seq {
            if s >= alphabet {
                return Err(Error::SymbolOutOfRange {
                    symbol: s,
                    alphabet,
                });
            }
            counts[s] += 1;
        }
        Ok(EmpiricalDist {
            dims: vec![alphabet],
            counts,
            n: seq.len() as u64,
        })
    }

    /// Joint empirical type of aligned symbol pairs.
    pub fn from_pairs(xs: &[usize], ys: &[usize], kx: usize, ky: usize) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty);
        }
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let mut counts = vec![0u64; kx * ky];
        for (&x, &y) in xs.iter().zip(ys) {
            if x >= kx {
                return Err(Error::SymbolOutOfRange {
                    symbol: x,
                    alphabet: kx,
                });
            }
            if y >= ky {
                return Err(Error::SymbolOutOfRange {
                    symbol: y,
                    alphabet: ky,
                });
            }
            counts[x * ky + y] += 1;
        }
        Ok(EmpiricalDist {
            dims: vec![kx, ky],
            counts,
            n: xs.len() as u64,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn sample_size(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn to_table(&self) -> JointTable {
        let mass: Vec<f64> = self
            .counts
            .iter()
            .map(|&c| c as f64 / self.n as f64)
            .collect();
        JointTable::new(self.dims.clone(), mass).expect("counts always normalize")
    }

    pub fn to_prob_vec(&self) -> Result<ProbVec> {
        if self.dims.len() != 1 {
            return Err(Error::ShapeMismatch {
                context: format!("expected one axis, table has {}", self.dims.len()),
            });
        }
        ProbVec::new(
            self.counts
                .iter()
                .map(|&c| c as f64 / self.n as f64)
                .collect(),
        )
    }
}

/// A distortion table over `x_size * y_size` symbol pairs. Entries are
/// finite and nonnegative; the maximum entry is exposed as `max_entry`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    x_size: usize,
    y_size: usize,
    entries: Vec<f64>,
    max_entry: f64,
}

impl DistortionMatrix {
    pub fn new(x_size: usize, y_size: usize, entries: Vec<f64>) -> Result<Self> {
        if x_size == 0 || y_size == 0 {
            return Err(Error::Empty);
        }
        if entries.len() != x_size * y_size {
            return Err(Error::LengthMismatch {
                expected: x_size * y_size,
                got: entries.len(),
            });
        }
        let mut max_entry = 0.0f64;
        for &e in &entries {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::InvalidDistortion { value: e });
            }
            max_entry = max_entry.max(e);
        }
        Ok(DistortionMatrix {
            x_size,
            y_size,
            entries,
            max_entry,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Empty);
        }
        let y_size = rows[0].len();
        let mut entries = Vec::with_capacity(rows.len() * y_size);
        for row in rows {
            if row.len() != y_size {
                return Err(Error::LengthMismatch {
                    expected: y_size,
                    got: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        DistortionMatrix::new(rows.len(), y_size, entries)
    }

    /// 0/1 loss on a shared alphabet of size `k`.
    pub fn hamming(k: usize) -> Self {
        let mut entries = vec![1.0; k * k];
        for i in 0..k {
            entries[i * k + i] = 0.0;
        }
        DistortionMatrix {
            x_size: k,
            y_size: k,
            entries,
            max_entry: if k > 1 { 1.0 } else { 0.0 },
        }
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.y_size + y]
    }

    pub fn max_entry(&self) -> f64 {
        self.max_entry
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.y_size..(x + 1) * self.y_size]
    }
}
