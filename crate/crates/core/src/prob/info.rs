//! Information measures and total variation.
//!
//! All entropic quantities are reported in bits. Zero-mass terms contribute
//! zero, matching the usual continuous extension of `p log p` at zero.

use super::{DistortionMatrix, EmpiricalDist, JointTable, ProbVec};
use crate::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;

pub(crate) fn entropy_of_slice(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h / LN_2
}

/// Shannon entropy in bits.
pub fn entropy(p: &ProbVec) -> f64 {
    entropy_of_slice(p.as_slice())
}

/// Half the L1 distance between two equal-length mass vectors.
pub(crate) fn tv_padded(a: &[f64], b: &[f64]) -> f64 {
    let long = a.len().max(b.len());
    let mut s = 0.0;
    for i in 0..long {
        let pa = a.get(i).copied().unwrap_or(0.0);
        let pb = b.get(i).copied().unwrap_or(0.0);
        s += (pa - pb).abs();
    }
    0.5 * s
}

/// Total variation distance between distributions on a shared alphabet.
pub fn tv_distance(a: &ProbVec, b: &ProbVec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(tv_padded(a.as_slice(), b.as_slice()))
}

/// Total variation distance between joint tables of identical shape.
pub fn tv_tables(a: &JointTable, b: &JointTable) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            context: format!("table shapes {:?} and {:?} differ", a.dims(), b.dims()),
        });
    }
    Ok(tv_padded(a.as_slice(), b.as_slice()))
}

/// Total variation distance between empirical types of identical shape.
pub fn tv_empirical(a: &EmpiricalDist, b: &EmpiricalDist) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            context: format!("type shapes {:?} and {:?} differ", a.dims(), b.dims()),
        });
    }
    let na = a.sample_size() as f64;
    let nb = b.sample_size() as f64;
    let mut s = 0.0;
    for (&ca, &cb) in a.counts().iter().zip(b.counts()) {
        s += (ca as f64 / na - cb as f64 / nb).abs();
    }
    Ok(0.5 * s)
}

/// Mutual information `I(axis 0; axis 1)` of a two-axis table, in bits.
pub fn mutual_information(joint: &JointTable) -> Result<f64> {
    if joint.axes() != 2 {
        return Err(Error::ShapeMismatch {
            context: format!("mutual information needs two axes, table has {}", joint.axes()),
        });
    }
    let (kx, ky) = (joint.dims()[0], joint.dims()[1]);
    let px = joint.marginal(0)?;
    let py = joint.marginal(1)?;
    let mut i = 0.0;
    for x in 0..kx {
        for y in 0..ky {
            let p = joint.as_slice()[x * ky + y];
            if p > 0.0 {
                i += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    // tiny negative values are pure rounding
    Ok((i / LN_2).max(0.0))
}

/// Conditional mutual information `I(axis 0; axis 1 | axis 2)` of a
/// three-axis table, in bits. Computed as a single sum over cells rather
/// than by materializing per-condition slices, so zero-mass conditions need
/// no special casing.
pub fn conditional_mutual_information(joint: &JointTable) -> Result<f64> {
    if joint.axes() != 3 {
        return Err(Error::ShapeMismatch {
            context: format!(
                "conditional mutual information needs three axes, table has {}",
                joint.axes()
            ),
        });
    }
    let (kx, ky, kz) = (joint.dims()[0], joint.dims()[1], joint.dims()[2]);
    let pz = joint.marginal(2)?;
    // p(x,z) and p(y,z)
    let pxz = joint.marginalize(&[0, 2])?;
    let pyz = joint.marginalize(&[1, 2])?;
    let mut i = 0.0;
    for x in 0..kx {
        for y in 0..ky {
            for z in 0..kz {
                let p = joint.as_slice()[(x * ky + y) * kz + z];
                if p > 0.0 {
                    let ratio = p * pz[z]
                        / (pxz.as_slice()[x * kz + z] * pyz.as_slice()[y * kz + z]);
                    i += p * ratio.ln();
                }
            }
        }
    }
    Ok((i / LN_2).max(0.0))
}

/// Average distortion of a two-axis source/reconstruction law.
pub fn expected_distortion(joint: &JointTable, d: &DistortionMatrix) -> Result<f64> {
    if joint.axes() != 2 || joint.dims()[0] != d.x_size() || joint.dims()[1] != d.y_size() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "distortion table is {}x{}, joint law is {:?}",
                d.x_size(),
                d.y_size(),
                joint.dims()
            ),
        });
    }
    let ky = d.y_size();
    let mut s = 0.0;
    for x in 0..d.x_size() {
        for y in 0..ky {
            s += joint.as_slice()[x * ky + y] * d.get(x, y);
        }
    }
    Ok(s)
}
