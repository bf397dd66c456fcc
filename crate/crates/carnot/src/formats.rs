//! On-disk formats: group definitions (JSON), set samples (CSV) and the small
//! comma-separated argument forms used on the command line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use carnot_core::algebra::Grading;
use carnot_core::measure::SampleMeta;
use carnot_core::{BuiltinGroup, CarnotAlgebra, GroupPoint, SetSample, StructureConstants};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// One structure-constant record `[e_i, e_j] += c e_k`, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRecord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub c: f64,
}

/// The JSON group definition.
///
/// `h_inner` is the row-major horizontal inner product; the identity when
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFile {
    pub name: String,
    pub layers: Vec<usize>,
    #[serde(default)]
    pub brackets: Vec<BracketRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_inner: Option<Vec<f64>>,
}

impl GroupFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("malformed group definition")
    }

    pub fn to_algebra(&self) -> Result<CarnotAlgebra> {
        let grading = Grading::new(self.layers.clone())?;
        let n = grading.total_dim();
        let mut records = Vec::with_capacity(self.brackets.len());
        for b in &self.brackets {
            for (what, idx) in [("i", b.i), ("j", b.j), ("k", b.k)] {
                if idx == 0 || idx > n {
                    bail!("bracket index {what} = {idx} is outside 1..={n}");
                }
            }
            records.push((b.i - 1, b.j - 1, b.k - 1, b.c));
        }
        let sc = StructureConstants::from_records(&records);
        let d1 = grading.layer_dim(1);
        let h = match &self.h_inner {
            None => None,
            Some(v) if v.len() == d1 * d1 => Some(DMatrix::from_row_slice(d1, d1, v)),
            Some(v) => bail!("h_inner has {} entries, expected {}", v.len(), d1 * d1),
        };
        Ok(CarnotAlgebra::new(self.name.clone(), grading, sc, h)?)
    }

    /// Canonical description of an algebra: every nonzero stored constant,
    /// in index order, and `h_inner` only when it is not the identity.
    pub fn from_algebra(alg: &CarnotAlgebra) -> Self {
        let brackets = alg
            .constants()
            .iter()
            .filter(|e| e.3 != 0.0)
            .map(|(i, j, k, c)| BracketRecord {
                i: i + 1,
                j: j + 1,
                k: k + 1,
                c,
            })
            .collect();
        let h_inner = (!alg.has_orthonormal_frame()).then(|| {
            let h = alg.h_inner();
            (0..h.nrows())
                .flat_map(|r| (0..h.ncols()).map(move |c| h[(r, c)]))
                .collect()
        });
        Self {
            name: alg.name().to_string(),
            layers: alg.grading().layer_dims().to_vec(),
            brackets,
            h_inner,
        }
    }
}

/// A built-in name, or a path to a JSON group definition.
pub fn resolve_group(source: &str) -> Result<CarnotAlgebra> {
    let path = Path::new(source);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
        return GroupFile::parse(&text)?.to_algebra();
    }
    let which: BuiltinGroup = source
        .parse()
        .with_context(|| format!("`{source}` is neither a file nor a built-in group"))?;
    Ok(which.build()?)
}

/// Writes a sample as CSV, one point per row, with a trailing weight column
/// when the sample is weighted.
pub fn sample_to_csv(set: &SetSample) -> String {
    let mut out = String::new();
    for i in 0..set.len() {
        let mut first = true;
        for x in set.point(i) {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{x}").unwrap();
        }
        if let Some(w) = set.weights() {
            write!(out, ",{}", w[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV sample of points of a `dim`-dimensional group. Rows have
/// either `dim` or `dim + 1` columns (the last being a weight), consistently.
/// Blank lines and lines starting with `#` are skipped.
pub fn sample_from_csv(text: &str, dim: usize, origin: &str) -> Result<SetSample> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut weighted = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = parse_row(line).with_context(|| format!("{origin}:{}", lineno + 1))?;
        let has_weight = match row.len() {
            n if n == dim => false,
            n if n == dim + 1 => true,
            n => bail!(
                "{origin}:{}: {n} columns, expected {dim} or {}",
                lineno + 1,
                dim + 1
            ),
        };
        if *weighted.get_or_insert(has_weight) != has_weight {
            bail!(
                "{origin}:{}: weight column present on some rows only",
                lineno + 1
            );
        }
        if has_weight {
            weights.push(row[dim]);
        }
        points.push(GroupPoint::new(row[..dim].to_vec()));
    }
    let weights = (weighted == Some(true)).then_some(weights);
    Ok(SetSample::new(
        points,
        weights,
        SampleMeta::new(origin, None, None),
    )?)
}

pub fn read_sample(path: &Path, dim: usize) -> Result<SetSample> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    sample_from_csv(&text, dim, &path.display().to_string())
}

/// `1,0,0` or `1 0 0`.
pub fn parse_row(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("`{t}` is not a number"))
        })
        .collect()
}

/// Coordinates of a point of `alg`.
pub fn parse_point(alg: &CarnotAlgebra, s: &str) -> Result<GroupPoint> {
    let v = parse_row(s)?;
    if v.len() != alg.dim() {
        bail!(
            "point `{s}` has {} coordinates, the group has dimension {}",
            v.len(),
            alg.dim()
        );
    }
    Ok(GroupPoint::new(v))
}

/// Basis rows separated by `;`, e.g. `0,1,0;0,0,1`.
pub fn parse_basis(alg: &CarnotAlgebra, s: &str) -> Result<Vec<Vec<f64>>> {
    let rows = s
        .split(';')
        .filter(|r| !r.trim().is_empty())
        .map(parse_row)
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        bail!("empty subspace basis");
    }
    if let Some(r) = rows.iter().find(|r| r.len() != alg.dim()) {
        bail!(
            "basis row has {} entries, the group has dimension {}",
            r.len(),
            alg.dim()
        );
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_file_matches_builtin() {
        let text =
            r#"{"name": "h", "layers": [2, 1], "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1.0}]}"#;
        let alg = GroupFile::parse(text).unwrap().to_algebra().unwrap();
        let h = BuiltinGroup::Heisenberg(1).build().unwrap();
        assert_eq!(alg.constants(), h.constants());
        assert!(alg.validate().passed());
    }

    #[test]
    fn zero_index_is_rejected() {
        let text =
            r#"{"name": "h", "layers": [2, 1], "brackets": [{"i": 0, "j": 2, "k": 3, "c": 1.0}]}"#;
        assert!(GroupFile::parse(text).unwrap().to_algebra().is_err());
    }

    #[test]
    fn builtins_round_trip_through_files() {
        for b in BuiltinGroup::catalogue() {
            let alg = b.build().unwrap();
            let file = GroupFile::from_algebra(&alg);
            let text = serde_json::to_string(&file).unwrap();
            let back = GroupFile::parse(&text).unwrap().to_algebra().unwrap();
            assert_eq!(back.constants(), alg.constants(), "{b}");
            assert_eq!(back.grading(), alg.grading());
        }
    }

    #[test]
    fn weighted_csv_round_trip() {
        let text = "# a comment\n0.5,1,2,0.25\n\n-1,0,3e-2,0.5\n";
        let s = sample_from_csv(text, 3, "t").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.weights(), Some(&[0.25, 0.5][..]));
        let again = sample_from_csv(&sample_to_csv(&s), 3, "t").unwrap();
        assert_eq!(again.points(), s.points());
        assert_eq!(again.weights(), s.weights());
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(sample_from_csv("1,2,3\n1,2,3,4\n", 3, "t").is_err());
        assert!(sample_from_csv("1,2\n", 3, "t").is_err());
        assert!(sample_from_csv("", 3, "t").is_err());
    }

    #[test]
    fn basis_parsing() {
        let h = BuiltinGroup::Heisenberg(1).build().unwrap();
        assert_eq!(parse_basis(&h, "0,1,0; 0,0,1").unwrap().len(), 2);
        assert!(parse_basis(&h, "0,1").is_err());
        assert_eq!(parse_point(&h, "1 2 3").unwrap().coords(), &[1.0, 2.0, 3.0]);
    }
}
