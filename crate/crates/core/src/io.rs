//! CSV persistence for meshes and fields.
//!
//! * `nodes.csv`: `id,x[,y]`
//! * `cells.csv`: `cell,n0,n1[,n2]`
//! * `field.csv`: `node,value`
//! * `vfield.csv`: `cell,x[,y]`
//!
//! Floats are written with the shortest representation that round-trips.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, ScalarField, VectorField};

fn axis_header(dim: usize) -> &'static str {
    if dim == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn write_nodes(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "id,{}", axis_header(mesh.dim()))?;
    for i in 0..mesh.n_nodes() {
        writeln!(out, "{i},{}", join(mesh.node(i)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cells(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let header = if mesh.dim() == 1 {
        "cell,n0,n1"
    } else {
        "cell,n0,n1,n2"
    };
    writeln!(out, "{header}")?;
    for c in 0..mesh.n_cells() {
        let ids: Vec<String> = mesh.cell_nodes(c).iter().map(|n| n.to_string()).collect();
        writeln!(out, "{c},{}", ids.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_field(u: &ScalarField, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "node,value")?;
    for (i, v) in u.values().iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_vfield(z: &VectorField, path: &Path) -> Result<()> {
    let mesh = z.mesh();
    let mut out = create(path)?;
    writeln!(out, "cell,{}", axis_header(mesh.dim()))?;
    for c in 0..mesh.n_cells() {
        writeln!(out, "{c},{}", join(z.get(c)))?;
    }
    out.flush()?;
    Ok(())
}

/// Mesh files plus one scalar field, all in `dir`.
pub fn write_mesh(mesh: &Mesh, dir: &Path) -> Result<()> {
    write_nodes(mesh, &dir.join("nodes.csv"))?;
    write_cells(mesh, &dir.join("cells.csv"))
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width + 1 {
            return Err(Error::InvalidField(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                line + 2,
                record.len(),
                width + 1
            )));
        }
        let parse_err = |what: &str| {
            Error::InvalidField(format!("{}: row {}: bad {what}", path.display(), line + 2))
        };
        let id: usize = record[0].trim().parse().map_err(|_| parse_err("id"))?;
        let vals = (1..=width)
            .map(|k| {
                record[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err("value"))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, vals));
    }
    Ok(rows)
}

fn check_ids(path: &Path, rows: &[(usize, Vec<f64>)], expected: usize) -> Result<()> {
    if rows.len() != expected || rows.iter().enumerate().any(|(i, (id, _))| *id != i) {
        return Err(Error::InvalidField(format!(
            "{}: expected ids 0..{expected} in order",
            path.display()
        )));
    }
    Ok(())
}

pub fn read_field(mesh: &Arc<Mesh>, path: &Path) -> Result<ScalarField> {
    let rows = read_rows(path, 1)?;
    check_ids(path, &rows, mesh.n_nodes())?;
    ScalarField::new(mesh, rows.into_iter().map(|(_, v)| v[0]).collect())
}

pub fn read_vfield(mesh: &Arc<Mesh>, path: &Path) -> Result<VectorField> {
    let rows = read_rows(path, mesh.dim())?;
    check_ids(path, &rows, mesh.n_cells())?;
    VectorField::new(mesh, rows.into_iter().map(|(_, v)| v).collect())
}
