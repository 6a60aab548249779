//! Problem-file schema and conversion into validated core types.
//!
//! Layout of the JSON document:
//!
//! ```json
//! {
//!   "x_alphabet": ["0", "1"],
//!   "z_alphabet": ["-"],
//!   "y_alphabet": ["0", "1"],
//!   "p_xz":       [[0.5], [0.5]],
//!   "distortion": [[0.0, 1.0], [1.0, 0.0]],
//!   "scheme": {
//!     "u_alphabet": ["0", "1"],
//!     "u_given_z":  [[0.5, 0.5]],
//!     "x_given_zu": [[0.8, 0.2], [0.2, 0.8]],
//!     "y_given_zu": [[1.0, 0.0], [0.0, 1.0]]
//!   }
//! }
//! ```
//!
//! `p_xz` holds one row per source symbol with one column per side symbol.
//! `u_given_z` holds one row per side symbol. The `*_given_zu` tables hold
//! one row per `(z, u)` pair, z-major. The optional `scheme` block is only
//! needed by the simulation and soft-covering subcommands.

use std::fs;
use std::path::Path;

use rdp_core::coding::SchemeSpec;
use rdp_core::prob::{Channel, DistortionMatrix, JointTable};
use rdp_core::soft_covering::SynthesisSpec;
use rdp_core::solver::RdpProblem;
use serde::Deserialize;

use crate::io::fnv1a64;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub x_alphabet: Vec<String>,
    pub z_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    pub p_xz: Vec<Vec<f64>>,
    pub distortion: Vec<Vec<f64>>,
    #[serde(default)]
    pub scheme: Option<SchemeFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeFile {
    pub u_alphabet: Vec<String>,
    pub u_given_z: Vec<Vec<f64>>,
    pub x_given_zu: Vec<Vec<f64>>,
    pub y_given_zu: Vec<Vec<f64>>,
}

fn check_labels(key: &str, labels: &[String]) -> Result<(), String> {
    if labels.is_empty() {
        return Err(format!("{key}: alphabet must not be empty"));
    }
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(format!("{key}: duplicate label `{l}`"));
        }
    }
    Ok(())
}

fn flatten(key: &str, rows: &[Vec<f64>], want_rows: usize, want_cols: usize) -> Result<Vec<f64>, String> {
    if rows.len() != want_rows {
        return Err(format!(
            "{key}: expected {want_rows} rows, got {}",
            rows.len()
        ));
    }
    let mut flat = Vec::with_capacity(want_rows * want_cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != want_cols {
            return Err(format!(
                "{key}: row {i} has {} entries, expected {want_cols}",
                row.len()
            ));
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

impl ProblemFile {
    /// Parses and digests a problem file. Error messages carry the
    /// offending key or path.
    pub fn load(path: &Path) -> Result<(ProblemFile, String), String> {
        let bytes =
            fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let pf: ProblemFile = serde_json::from_slice(&bytes)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        check_labels("x_alphabet", &pf.x_alphabet)?;
        check_labels("z_alphabet", &pf.z_alphabet)?;
        check_labels("y_alphabet", &pf.y_alphabet)?;
        if let Some(s) = &pf.scheme {
            check_labels("scheme.u_alphabet", &s.u_alphabet)?;
        }
        Ok((pf, fnv1a64(&bytes)))
    }

    pub fn source(&self) -> Result<JointTable, String> {
        let flat = flatten("p_xz", &self.p_xz, self.x_alphabet.len(), self.z_alphabet.len())?;
        JointTable::new(vec![self.x_alphabet.len(), self.z_alphabet.len()], flat)
            .map_err(|e| format!("p_xz: {e}"))
    }

    pub fn distortion_matrix(&self) -> Result<DistortionMatrix, String> {
        let flat = flatten(
            "distortion",
            &self.distortion,
            self.x_alphabet.len(),
            self.y_alphabet.len(),
        )?;
        DistortionMatrix::new(self.x_alphabet.len(), self.y_alphabet.len(), flat)
            .map_err(|e| format!("distortion: {e}"))
    }

    pub fn rdp_problem(&self) -> Result<RdpProblem, String> {
        RdpProblem::new(self.source()?, self.distortion_matrix()?)
            .map_err(|e| format!("problem: {e}"))
    }

    fn scheme_block(&self) -> Result<&SchemeFile, String> {
        self.scheme
            .as_ref()
            .ok_or_else(|| "scheme: this subcommand needs the scheme block".to_string())
    }

    /// The simulation scheme: description and reconstruction channels
    /// around the declared source.
    pub fn scheme_spec(&self) -> Result<SchemeSpec, String> {
        let s = self.scheme_block()?;
        let (kx, kz, ky) = (
            self.x_alphabet.len(),
            self.z_alphabet.len(),
            self.y_alphabet.len(),
        );
        let ku = s.u_alphabet.len();
        let u_given_z = Channel::new(
            vec![kz],
            ku,
            flatten("scheme.u_given_z", &s.u_given_z, kz, ku)?,
        )
        .map_err(|e| format!("scheme.u_given_z: {e}"))?;
        let x_given_zu = Channel::new(
            vec![kz, ku],
            kx,
            flatten("scheme.x_given_zu", &s.x_given_zu, kz * ku, kx)?,
        )
        .map_err(|e| format!("scheme.x_given_zu: {e}"))?;
        let y_given_zu = Channel::new(
            vec![kz, ku],
            ky,
            flatten("scheme.y_given_zu", &s.y_given_zu, kz * ku, ky)?,
        )
        .map_err(|e| format!("scheme.y_given_zu: {e}"))?;
        SchemeSpec::new(
            self.source()?,
            u_given_z,
            x_given_zu,
            y_given_zu,
            self.distortion_matrix()?,
        )
        .map_err(|e| format!("scheme: {e}"))
    }

    /// The synthesis view of the scheme block: side symbol, description,
    /// reconstruction as the observation.
    pub fn synthesis_spec(&self) -> Result<SynthesisSpec, String> {
        let scheme = self.scheme_spec()?;
        let p_w = self
            .source()?
            .marginal(1)
            .map_err(|e| format!("p_xz: {e}"))?;
        SynthesisSpec::new(
            p_w,
            scheme.description_channel().clone(),
            scheme.reconstruction_channel().clone(),
        )
        .map_err(|e| format!("scheme: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_doc() -> serde_json::Value {
        serde_json::json!({
            "x_alphabet": ["0", "1"],
            "z_alphabet": ["-"],
            "y_alphabet": ["0", "1"],
            "p_xz": [[0.5], [0.5]],
            "distortion": [[0.0, 1.0], [1.0, 0.0]],
        })
    }

    fn load_value(v: serde_json::Value) -> Result<(ProblemFile, String), String> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
        ProblemFile::load(&path)
    }

    #[test]
    fn round_trips_a_minimal_problem() {
        let (pf, digest) = load_value(binary_doc()).unwrap();
        assert!(digest.starts_with("fnv1a64:"));
        let prob = pf.rdp_problem().unwrap();
        assert_eq!(prob.x_size(), 2);
        assert!(pf.scheme_spec().is_err());
    }

    #[test]
    fn errors_name_the_offending_key() {
        let mut v = binary_doc();
        v.as_object_mut().unwrap().remove("p_xz");
        let err = load_value(v).unwrap_err();
        assert!(err.contains("p_xz"), "{err}");

        // shape errors surface on conversion and still name the key
        let mut v = binary_doc();
        v["p_xz"] = serde_json::json!([[0.5, 0.5]]);
        let (pf, _) = load_value(v).unwrap();
        let err = pf.source().unwrap_err();
        assert!(err.contains("p_xz"), "{err}");

        let mut v = binary_doc();
        v["distortion"] = serde_json::json!([[0.0, 1.0]]);
        let (pf, _) = load_value(v).unwrap();
        let err = pf.distortion_matrix().unwrap_err();
        assert!(err.contains("distortion"), "{err}");
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let mut v = binary_doc();
        v["x_alphabet"] = serde_json::json!(["a", "a"]);
        let err = load_value(v).unwrap_err();
        assert!(err.contains("x_alphabet"), "{err}");
    }
}
