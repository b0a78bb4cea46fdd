//! Field serialization: flat little-endian `f64` binaries in canonical node
//! order (axis 0 fastest) with a JSON sidecar describing the grid, plus CSV
//! export of 1D/2D slices.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, ScalarField, VectorField};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dimension: usize,
    half_extent: f64,
    resolution: usize,
    kind: String,
    components: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_f64s(path: &Path, chunks: &[&[f64]]) -> Result<()> {
    let mut bytes = Vec::with_capacity(chunks.iter().map(|c| c.len()).sum::<usize>() * 8);
    for chunk in chunks {
        for v in chunk.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

/// Write-temp-then-rename so partially written artifacts never appear.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Config(format!(
            "field binary {} has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn check_sidecar(path: &Path, domain: &GridDomain, kind: &str) -> Result<Sidecar> {
    let text = fs::read_to_string(sidecar_path(path))?;
    let sc: Sidecar = serde_json::from_str(&text)?;
    if sc.dimension != domain.dimension()
        || sc.resolution != domain.resolution()
        || (sc.half_extent - domain.half_extent()).abs() > 1e-12
    {
        return Err(Error::Config(format!(
            "field file {} was sampled on a different grid",
            path.display()
        )));
    }
    if sc.kind != kind {
        return Err(Error::Config(format!(
            "field file {} holds a {} field, expected {kind}",
            path.display(),
            sc.kind
        )));
    }
    Ok(sc)
}

pub fn save_scalar_field(field: &ScalarField, path: &Path) -> Result<()> {
    let d = field.domain();
    let sc = Sidecar {
        dimension: d.dimension(),
        half_extent: d.half_extent(),
        resolution: d.resolution(),
        kind: "scalar".into(),
        components: 1,
    };
    atomic_write(&sidecar_path(path), serde_json::to_string_pretty(&sc)?.as_bytes())?;
    write_f64s(path, &[field.values()])
}

pub fn load_scalar_field(path: &Path, domain: &Arc<GridDomain>) -> Result<ScalarField> {
    check_sidecar(path, domain, "scalar")?;
    let values = read_f64s(path, domain.node_count())?;
    ScalarField::from_values(domain.clone(), values)
}

/// Vector fields are stored component-major: `d` full scalar blocks.
pub fn save_vector_field(field: &VectorField, path: &Path) -> Result<()> {
    let d = field.domain();
    let sc = Sidecar {
        dimension: d.dimension(),
        half_extent: d.half_extent(),
        resolution: d.resolution(),
        kind: "vector".into(),
        components: d.dimension(),
    };
    atomic_write(&sidecar_path(path), serde_json::to_string_pretty(&sc)?.as_bytes())?;
    let chunks: Vec<&[f64]> = field.components().iter().map(|c| c.as_slice()).collect();
    write_f64s(path, &chunks)
}

pub fn load_vector_field(path: &Path, domain: &Arc<GridDomain>) -> Result<VectorField> {
    check_sidecar(path, domain, "vector")?;
    let nc = domain.node_count();
    let all = read_f64s(path, nc * domain.dimension())?;
    let components = all.chunks_exact(nc).map(|c| c.to_vec()).collect();
    VectorField::from_components(domain.clone(), components)
}

/// Floats in CSV output carry 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV of a 1D or 2D slice: `axes` vary, all other axes are pinned to
/// `fixed` lattice indices (in axis order, skipping the slice axes).
pub fn export_slice_csv(
    field: &ScalarField,
    axes: &[usize],
    fixed: &[usize],
    path: &Path,
) -> Result<()> {
    let domain = field.domain();
    let d = domain.dimension();
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::Config("slice export supports 1 or 2 varying axes".into()));
    }
    if axes.iter().any(|&a| a >= d) {
        return Err(Error::Config("slice axis out of range".into()));
    }
    if fixed.len() != d - axes.len() {
        return Err(Error::Config(format!(
            "expected {} fixed indices, got {}",
            d - axes.len(),
            fixed.len()
        )));
    }
    let n = domain.resolution();
    if fixed.iter().any(|&i| i >= n) {
        return Err(Error::Config("fixed lattice index out of range".into()));
    }
    let mut header: Vec<String> = axes.iter().map(|a| format!("x{a}")).collect();
    header.push("value".into());
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push_str("\r\n");

    let mut multi = vec![0usize; d];
    let mut fixed_it = fixed.iter();
    for (axis, slot) in multi.iter_mut().enumerate() {
        if !axes.contains(&axis) {
            *slot = *fixed_it.next().unwrap();
        }
    }
    let emit = |multi: &[usize], out: &mut String| {
        let idx = domain.flat_index(multi);
        let mut row: Vec<String> = axes
            .iter()
            .map(|&a| format_float(domain.axis_coord(multi[a])))
            .collect();
        row.push(format_float(field.values()[idx]));
        out.push_str(&row.join(","));
        out.push_str("\r\n");
    };
    if axes.len() == 1 {
        for i in 0..n {
            multi[axes[0]] = i;
            emit(&multi, &mut out);
        }
    } else {
        for j in 0..n {
            for i in 0..n {
                multi[axes[0]] = i;
                multi[axes[1]] = j;
                emit(&multi, &mut out);
            }
        }
    }
    atomic_write(path, out.as_bytes())
}
