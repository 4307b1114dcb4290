//! Result files: legacy ASCII VTK fields, raw DOF CSV and tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::subdomain::{Discretization, Fields};

/// Cell averages of every field on the global cell numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAverages {
    pub pressure: Vec<f64>,
    pub rotation: Vec<f64>,
    pub displacement: Vec<[f64; 2]>,
    pub velocity: Vec<[f64; 2]>,
    /// Rows of the stress tensor.
    pub stress: Vec<[[f64; 2]; 2]>,
}

pub fn cell_averages(disc: &Discretization, fields: &[Fields]) -> CellAverages {
    let n = disc.mesh.n_cells();
    let mut out = CellAverages {
        pressure: vec![0.0; n],
        rotation: vec![0.0; n],
        displacement: vec![[0.0; 2]; n],
        velocity: vec![[0.0; 2]; n],
        stress: vec![[[0.0; 2]; 2]; n],
    };
    for (sub, f) in disc.subdomains.iter().zip(fields) {
        let d = &sub.dofmap;
        for (lc, (&cell, cv)) in d.cells().iter().zip(&sub.cells).enumerate() {
            out.pressure[cell] = f.p[lc];
            out.rotation[cell] = f.gamma[lc];
            out.displacement[cell] = [f.u[2 * lc], f.u[2 * lc + 1]];
            let dofs = d.cell_bdm_dofs(lc);
            let mut z = [0.0; 2];
            let mut s = [[0.0; 2]; 2];
            for q in 0..cv.points.len() {
                let w = cv.jxw[q] / cv.area;
                for (a, &dof) in dofs.iter().enumerate() {
                    let phi = cv.basis[q][a];
                    for k in 0..2 {
                        z[k] += w * f.z[dof] * phi[k];
                        for r in 0..2 {
                            s[r][k] += w * f.sigma[d.sigma(r, dof)] * phi[k];
                        }
                    }
                }
            }
            out.velocity[cell] = z;
            out.stress[cell] = s;
        }
    }
    out
}

/// Legacy ASCII unstructured grid with cell data.
pub fn vtk_string(mesh: &Mesh, averages: &CellAverages, title: &str) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# vtk DataFile Version 3.0");
    let _ = writeln!(w, "{}", title.lines().next().unwrap_or("").chars().take(255).collect::<String>());
    let _ = writeln!(w, "ASCII");
    let _ = writeln!(w, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(w, "POINTS {} double", mesh.n_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(w, "{:?} {:?} 0", v[0], v[1]);
    }
    let nc = mesh.n_cells();
    let _ = writeln!(w, "CELLS {} {}", nc, 5 * nc);
    for c in 0..nc {
        let v = mesh.cell_vertices(c);
        let _ = writeln!(w, "4 {} {} {} {}", v[0], v[1], v[2], v[3]);
    }
    let _ = writeln!(w, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(w, "9");
    }
    let _ = writeln!(w, "CELL_DATA {nc}");
    let scalar = |w: &mut String, name: &str, values: &[f64]| {
        let _ = writeln!(w, "SCALARS {name} double 1");
        let _ = writeln!(w, "LOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(w, "{v:?}");
        }
    };
    let vector = |w: &mut String, name: &str, values: &mut dyn Iterator<Item = [f64; 2]>| {
        let _ = writeln!(w, "VECTORS {name} double");
        for v in values {
            let _ = writeln!(w, "{:?} {:?} 0", v[0], v[1]);
        }
    };
    scalar(w, "pressure", &averages.pressure);
    scalar(w, "rotation", &averages.rotation);
    vector(w, "displacement", &mut averages.displacement.iter().copied());
    vector(w, "velocity", &mut averages.velocity.iter().copied());
    vector(w, "stress_x", &mut averages.stress.iter().map(|s| s[0]));
    vector(w, "stress_y", &mut averages.stress.iter().map(|s| s[1]));
    s
}

pub fn write_vtk(path: &Path, disc: &Discretization, fields: &[Fields], title: &str) -> Result<()> {
    let text = vtk_string(&disc.mesh, &cell_averages(disc, fields), title);
    std::fs::write(path, text)?;
    Ok(())
}

/// Field names in DOF files.
const FIELD_NAMES: [&str; 5] = ["sigma", "u", "gamma", "z", "p"];

#[derive(Debug, Serialize, Deserialize)]
struct DofRecord {
    subdomain: usize,
    field: String,
    index: usize,
    value: f64,
}

/// Every DOF of every subdomain, one row each. Values round-trip exactly.
pub fn write_dofs<W: Write>(out: W, fields: &[Fields]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (s, f) in fields.iter().enumerate() {
        for (name, values) in FIELD_NAMES.iter().zip([&f.sigma, &f.u, &f.gamma, &f.z, &f.p]) {
            for (index, &value) in values.iter().enumerate() {
                w.serialize(DofRecord {
                    subdomain: s,
                    field: (*name).to_string(),
                    index,
                    value,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a DOF file written by [`write_dofs`] into fields shaped like
/// `template`.
pub fn read_dofs<R: std::io::Read>(input: R, template: &[Fields]) -> Result<Vec<Fields>> {
    let mut out: Vec<Fields> = template.to_vec();
    let mut seen = 0usize;
    let total: usize = template.iter().map(|f| f.to_full().len()).sum();
    let mut r = csv::Reader::from_reader(input);
    for rec in r.deserialize() {
        let rec: DofRecord = rec?;
        let f = out.get_mut(rec.subdomain).ok_or_else(|| {
            Error::Degenerate(format!("DOF file names subdomain {} of {}", rec.subdomain, template.len()))
        })?;
        let slot = match rec.field.as_str() {
            "sigma" => &mut f.sigma,
            "u" => &mut f.u,
            "gamma" => &mut f.gamma,
            "z" => &mut f.z,
            "p" => &mut f.p,
            other => return Err(Error::Degenerate(format!("unknown field {other:?} in DOF file"))),
        };
        let len = slot.len();
        *slot.get_mut(rec.index).ok_or_else(|| {
            Error::Degenerate(format!("{} index {} out of range {len}", rec.field, rec.index))
        })? = rec.value;
        seen += 1;
    }
    if seen != total {
        return Err(Error::DimensionMismatch {
            what: "DOF file rows",
            expected: total,
            got: seen,
        });
    }
    Ok(out)
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Formats a float for tables; empty for missing values.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}
