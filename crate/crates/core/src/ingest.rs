//! Heterogeneous cell fields: the plain-text field format, a synthetic
//! log-normal generator and the porosity to stiffness relation used to
//! derive per-cell materials.
//!
//! A field file holds one line per mesh row, bottom row first, with `nx`
//! whitespace-separated decimal values per line. Blank lines and lines
//! starting with `#` are skipped.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assembly::{Material, MaterialField};
use crate::error::{Error, Result};

/// Porosity at which the Young's modulus vanishes.
pub const CRITICAL_POROSITY: f64 = 0.5;
/// Young's modulus of the solid at zero porosity.
pub const SOLID_MODULUS: f64 = 100.0;
const MODULUS_EXPONENT: f64 = 2.1;

/// `E = 100 (1 - φ/0.5)^2.1`.
pub fn young_modulus(porosity: f64) -> Result<f64> {
    if !(0.0..CRITICAL_POROSITY).contains(&porosity) {
        return Err(Error::OutOfRange(format!(
            "porosity {porosity} outside [0, {CRITICAL_POROSITY})"
        )));
    }
    Ok(SOLID_MODULUS * (1.0 - porosity / CRITICAL_POROSITY).powf(MODULUS_EXPONENT))
}

/// Lamé parameters `(λ, μ)` from Young's modulus and Poisson ratio.
pub fn lame_from_e(e: f64, nu: f64) -> Result<(f64, f64)> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::OutOfRange(format!("Young's modulus {e} must be positive")));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::OutOfRange(format!("Poisson ratio {nu} outside [0, 0.5)")));
    }
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((lambda, mu))
}

/// Scalar value per cell, row-major with row 0 at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::DimensionMismatch {
                what: "cell field",
                expected: nx * ny,
                got: values.len(),
            });
        }
        Ok(Self { nx, ny, values })
    }

    pub fn uniform(nx: usize, ny: usize, value: f64) -> Self {
        Self {
            nx,
            ny,
            values: vec![value; nx * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Parses a field file of exactly `nx x ny` values.
    pub fn load(path: &Path, nx: usize, ny: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path, nx, ny)
    }

    /// Parses field text; `path` only labels errors.
    pub fn parse(text: &str, path: &Path, nx: usize, ny: usize) -> Result<Self> {
        let err = |row: usize, column: usize, reason: String| Error::FieldParse {
            path: path.to_path_buf(),
            row,
            column,
            reason,
        };
        let mut values = Vec::with_capacity(nx * ny);
        let mut row = 0;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if row == ny {
                return Err(err(row + 1, 1, format!("more than {ny} rows")));
            }
            let mut column = 0;
            for token in line.split_whitespace() {
                column += 1;
                if column > nx {
                    return Err(err(row + 1, column, format!("more than {nx} values")));
                }
                let v: f64 = token
                    .parse()
                    .map_err(|_| err(row + 1, column, format!("not a number: {token:?}")))?;
                if !v.is_finite() {
                    return Err(err(row + 1, column, format!("non-finite value {token}")));
                }
                values.push(v);
            }
            if column < nx {
                return Err(err(row + 1, column + 1, format!("missing value, expected {nx} per row")));
            }
            row += 1;
        }
        if row < ny {
            return Err(err(row + 1, 1, format!("missing row, expected {ny} rows")));
        }
        Ok(Self { nx, ny, values })
    }

    /// Text form readable by [`CellField::parse`]; values use the shortest
    /// representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20);
        for row in self.values.chunks(self.nx) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{v:?}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Field on a grid `factor` times finer, each value copied to the
    /// covered cells.
    pub fn refine(&self, factor: usize) -> Self {
        let (nx, ny) = (self.nx * factor, self.ny * factor);
        let values = (0..nx * ny)
            .map(|c| self.get((c % nx) / factor, (c / nx) / factor))
            .collect();
        Self { nx, ny, values }
    }
}

/// Parameters of the synthetic permeability and porosity generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub nx: usize,
    pub ny: usize,
    pub seed: u64,
    /// Orders of magnitude between the smallest and largest permeability.
    #[serde(default = "default_span")]
    pub span_decades: f64,
    /// log10 of the geometric mean of the extreme permeabilities.
    #[serde(default)]
    pub log10_center: f64,
    /// Smoothing passes of the white noise; larger means longer
    /// correlation.
    #[serde(default = "default_smoothing")]
    pub smoothing: usize,
    /// Porosity range; porosity increases with log permeability.
    #[serde(default = "default_porosity_range")]
    pub porosity_range: (f64, f64),
}

fn default_span() -> f64 {
    7.0
}

fn default_smoothing() -> usize {
    2
}

fn default_porosity_range() -> (f64, f64) {
    (0.05, 0.35)
}

impl GeneratorSpec {
    pub fn new(nx: usize, ny: usize, seed: u64) -> Self {
        Self {
            nx,
            ny,
            seed,
            span_decades: default_span(),
            log10_center: 0.0,
            smoothing: default_smoothing(),
            porosity_range: default_porosity_range(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::config("generator", "grid must be non-empty"));
        }
        if !(self.span_decades >= 0.0 && self.span_decades.is_finite()) {
            return Err(Error::config("generator.span_decades", "must be finite and non-negative"));
        }
        let (lo, hi) = self.porosity_range;
        if !(0.0 <= lo && lo <= hi && hi < CRITICAL_POROSITY) {
            return Err(Error::config(
                "generator.porosity_range",
                format!("need 0 <= low <= high < {CRITICAL_POROSITY}"),
            ));
        }
        Ok(())
    }
}

/// Generated permeability and porosity.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFields {
    pub permeability: CellField,
    pub porosity: CellField,
}

/// Smoothed Gaussian noise mapped so that `log10 k` spans exactly
/// `span_decades` around `log10_center`.
pub fn generate_field(spec: &GeneratorSpec) -> Result<GeneratedFields> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut g: Vec<f64> = (0..nx * ny).map(|_| StandardNormal.sample(&mut rng)).collect();
    for _ in 0..spec.smoothing {
        let mut next = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let (mut sum, mut count) = (0.0, 0.0);
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny {
                            sum += g[b as usize * nx + a as usize];
                            count += 1.0;
                        }
                    }
                }
                next[j * nx + i] = sum / count;
            }
        }
        g = next;
    }
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unit: Vec<f64> = if hi > lo {
        g.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; g.len()]
    };
    let perm = unit
        .iter()
        .map(|s| 10f64.powf(spec.log10_center + spec.span_decades * (s - 0.5)))
        .collect();
    let (plo, phi) = spec.porosity_range;
    let poro = unit.iter().map(|s| plo + (phi - plo) * s).collect();
    Ok(GeneratedFields {
        permeability: CellField::new(nx, ny, perm)?,
        porosity: CellField::new(nx, ny, poro)?,
    })
}

/// Per-cell materials: stiffness from porosity, isotropic permeability.
pub fn heterogeneous_material(
    porosity: &CellField,
    permeability: &CellField,
    poisson_ratio: f64,
    storativity: f64,
    alpha: f64,
) -> Result<MaterialField> {
    if porosity.nx != permeability.nx || porosity.ny != permeability.ny {
        return Err(Error::DimensionMismatch {
            what: "permeability field",
            expected: porosity.values.len(),
            got: permeability.values.len(),
        });
    }
    porosity
        .values
        .iter()
        .zip(&permeability.values)
        .enumerate()
        .map(|(cell, (&phi, &k))| {
            if !(k > 0.0) {
                return Err(Error::InvalidMaterial {
                    cell,
                    field: "permeability",
                    value: k,
                });
            }
            let (lambda, mu) = lame_from_e(young_modulus(phi)?, poisson_ratio)?;
            Ok(Material::isotropic(lambda, mu, k, storativity, alpha))
        })
        .collect::<Result<Vec<_>>>()
        .map(MaterialField::PerCell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn modulus_at_reference_points() {
        assert_eq!(young_modulus(0.0).unwrap(), 100.0);
        assert_relative_eq!(young_modulus(0.25).unwrap(), 100.0 * 0.5f64.powf(2.1), max_relative = 1e-14);
        assert!((young_modulus(0.25).unwrap() - 23.33).abs() < 5e-3);
        assert!(young_modulus(0.5 - 1e-9).unwrap() < 1e-15);
        assert!(young_modulus(0.5).is_err());
        assert!(young_modulus(-0.1).is_err());
    }

    #[test]
    fn lame_reference_values() {
        let (l, m) = lame_from_e(1.0, 0.0).unwrap();
        assert_eq!((l, m), (0.0, 0.5));
        let (l, m) = lame_from_e(100.0, 0.2).unwrap();
        assert_relative_eq!(m, 100.0 / 2.4, max_relative = 1e-14);
        assert_relative_eq!(l, 20.0 / 0.72, max_relative = 1e-14);
        assert!(lame_from_e(1.0, 0.5).is_err());
        assert!(lame_from_e(-1.0, 0.2).is_err());
    }

    #[test]
    fn parse_uniform_and_errors() {
        let p = Path::new("field.txt");
        let f = CellField::parse("1.0 1.0\n1.0 1.0\n", p, 2, 2).unwrap();
        assert_eq!(f, CellField::uniform(2, 2, 1.0));
        match CellField::parse("1 2\n3\n", p, 2, 2) {
            Err(Error::FieldParse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        match CellField::parse("1 x\n3 4\n", p, 2, 2) {
            Err(Error::FieldParse { row, column, .. }) => assert_eq!((row, column), (1, 2)),
            other => panic!("{other:?}"),
        }
        assert!(CellField::parse("1 2\n", p, 2, 2).is_err());
        assert!(CellField::parse("1 2\n3 4\n5 6\n", p, 2, 2).is_err());
    }

    #[test]
    fn generator_spans_requested_decades() {
        let f = generate_field(&GeneratorSpec::new(32, 32, 4)).unwrap();
        let ratio = f.permeability.max() / f.permeability.min();
        assert!((ratio.log10() - 7.0).abs() < 1e-9);
        assert!(f.porosity.max() < CRITICAL_POROSITY);
        assert_eq!(f, generate_field(&GeneratorSpec::new(32, 32, 4)).unwrap());
    }

    #[test]
    fn refine_copies_values() {
        let f = CellField::new(2, 1, vec![1.0, 2.0]).unwrap();
        let r = f.refine(2);
        assert_eq!(r.values(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }
}
