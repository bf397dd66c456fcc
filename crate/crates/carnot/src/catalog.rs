//! Maps and scalar fields addressable by name on the command line.
//!
//! Maps: `identity`, `dilation(t)`, `translation(x1,..,xn)`, `automorphism`,
//! `graded(a11,a12,..)` (row-major horizontal block), `shear`, `project`,
//! `qnorm`, `fold`, `constant(x1,..,xn)`, and compositions `f*g` meaning
//! `f∘g`.
//!
//! Fields: `x1`..`xn` (or the letters `a`, `b`, `c`, ..) for coordinates,
//! `quasi_sphere`, `qnorm`, optionally followed by `|dilate(λ)` and
//! `|translate(x1,..,xn)` modifiers applied left to right.

use anyhow::{anyhow, bail, Context, Result};
use carnot_core::levelset::ScalarField;
use carnot_core::pansu::{CarnotMap, GradedHom};
use carnot_core::{CarnotAlgebra, GroupPoint};
use nalgebra::DMatrix;

use crate::formats::parse_row;

/// Splits `name(args)` into the name and parsed numeric arguments.
fn call(s: &str) -> Result<(&str, Vec<f64>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, Vec::new())),
        Some(p) => {
            let inner = s[p + 1..]
                .strip_suffix(')')
                .ok_or_else(|| anyhow!("unbalanced parentheses in `{s}`"))?;
            Ok((s[..p].trim(), parse_row(inner)?))
        }
    }
}

fn expect_args(name: &str, args: &[f64], n: usize) -> Result<()> {
    if args.len() != n {
        bail!("`{name}` takes {n} argument(s), got {}", args.len());
    }
    Ok(())
}

pub const MAP_NAMES: &[&str] = &[
    "identity",
    "dilation(t)",
    "translation(..)",
    "automorphism",
    "graded(..)",
    "shear",
    "project",
    "qnorm",
    "fold",
    "constant(..)",
];

/// Resolves a map on `alg`; compositions are checked for matching groups.
pub fn map_by_name(alg: &CarnotAlgebra, spec: &str) -> Result<CarnotMap> {
    let parts: Vec<&str> = spec.split('*').collect();
    // Innermost map last: `f*g*h = f∘g∘h`.
    let mut acc: Option<CarnotMap> = None;
    for part in parts.iter().rev() {
        let source = acc.as_ref().map_or(alg, |m| m.target());
        let m = single_map(source, part).with_context(|| format!("in map `{spec}`"))?;
        acc = Some(match acc {
            None => m,
            Some(inner) => CarnotMap::compose(&m, &inner)?,
        });
    }
    acc.ok_or_else(|| anyhow!("empty map name"))
}

fn single_map(alg: &CarnotAlgebra, s: &str) -> Result<CarnotMap> {
    let (name, args) = call(s)?;
    let n = alg.dim();
    Ok(match name {
        "identity" | "id" => {
            expect_args(name, &args, 0)?;
            CarnotMap::identity(alg)
        }
        "dilation" | "dilate" => {
            expect_args(name, &args, 1)?;
            CarnotMap::dilation(alg, args[0])?
        }
        "translation" | "translate" => {
            expect_args(name, &args, n)?;
            CarnotMap::left_translation(alg, &GroupPoint::new(args))?
        }
        "automorphism" => {
            expect_args(name, &args, 0)?;
            CarnotMap::standard_automorphism(alg)?
        }
        "graded" => {
            let d1 = alg.horizontal_dim();
            expect_args(name, &args, d1 * d1)?;
            let a = DMatrix::from_row_slice(d1, d1, &args);
            let hom = GradedHom::from_horizontal(alg, alg, &a)?;
            if hom.residual() > 1e-9 {
                bail!("the horizontal block does not extend to a graded homomorphism");
            }
            CarnotMap::graded(hom)
        }
        "shear" => {
            expect_args(name, &args, 0)?;
            CarnotMap::shear(alg)?
        }
        "project" => {
            expect_args(name, &args, 0)?;
            CarnotMap::horizontal_projection(alg)?
        }
        "qnorm" => {
            expect_args(name, &args, 0)?;
            CarnotMap::quasi_norm(alg)
        }
        "fold" => {
            expect_args(name, &args, 0)?;
            if alg.dim() != 1 {
                bail!("`fold` is defined on abelian1");
            }
            CarnotMap::fold()
        }
        "constant" => {
            expect_args(name, &args, n)?;
            CarnotMap::constant(alg, alg, &GroupPoint::new(args))?
        }
        other => bail!(
            "unknown map `{other}`; known maps: {}",
            MAP_NAMES.join(", ")
        ),
    })
}

/// Resolves a field on `alg`.
pub fn field_by_name(alg: &CarnotAlgebra, spec: &str) -> Result<ScalarField> {
    let mut parts = spec.split('|');
    let head = parts.next().unwrap_or("").trim();
    let mut f = base_field(alg, head)?;
    for m in parts {
        let (name, args) = call(m)?;
        f = match name {
            "dilate" | "dilation" => {
                expect_args(name, &args, 1)?;
                f.dilated(args[0])?
            }
            "translate" | "translation" => {
                expect_args(name, &args, alg.dim())?;
                f.translated(&GroupPoint::new(args))?
            }
            other => bail!("unknown field modifier `{other}`"),
        };
    }
    Ok(f)
}

fn base_field(alg: &CarnotAlgebra, name: &str) -> Result<ScalarField> {
    match name {
        "quasi_sphere" | "quasisphere" => Ok(ScalarField::quasi_sphere(alg)?),
        "qnorm" => Ok(ScalarField::qnorm(alg)),
        _ => {
            let j = if let Some(rest) = name.strip_prefix('x') {
                rest.parse::<usize>()
                    .ok()
                    .filter(|&j| j >= 1)
                    .map(|j| j - 1)
                    .ok_or_else(|| anyhow!("bad coordinate field `{name}`"))?
            } else if name.len() == 1 && name.as_bytes()[0].is_ascii_lowercase() {
                (name.as_bytes()[0] - b'a') as usize
            } else {
                bail!("unknown field `{name}`; use x1..xn, a letter, quasi_sphere or qnorm");
            };
            Ok(ScalarField::coordinate(alg, j)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use carnot_core::BuiltinGroup;

    fn h3() -> CarnotAlgebra {
        BuiltinGroup::Heisenberg(1).build().unwrap()
    }

    #[test]
    fn maps_resolve_and_compose() {
        let g = h3();
        let m = map_by_name(&g, "dilation(2)*automorphism").unwrap();
        let y = m.apply(&[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![4.0, 6.0, 24.0]);
        let t = map_by_name(&g, "translation(1,0,0)").unwrap();
        assert_eq!(t.apply(&[0.0, 1.0, 0.0]), vec![1.0, 1.0, 0.5]);
        let p = map_by_name(&g, "qnorm*identity").unwrap();
        assert_eq!(p.target().dim(), 1);
        assert!(map_by_name(&g, "dilation").is_err());
        assert!(map_by_name(&g, "nonsense").is_err());
        assert!(map_by_name(&g, "graded(1,1,0,1)").is_ok());
    }

    #[test]
    fn fields_resolve() {
        let g = h3();
        assert_eq!(field_by_name(&g, "c").unwrap().eval(&[1.0, 2.0, 3.0]), 3.0);
        assert_eq!(field_by_name(&g, "x2").unwrap().eval(&[1.0, 2.0, 3.0]), 2.0);
        let q = field_by_name(&g, "quasi_sphere|dilate(2)").unwrap();
        assert!((q.eval(&[2.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(field_by_name(&g, "x4").is_err());
        assert!(field_by_name(&g, "quasi_sphere|spin(1)").is_err());
    }
}
