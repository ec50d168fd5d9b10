//! On-disk layout of a run directory.
//!
//! ```text
//! out/
//!   config.json      effective config, defaults filled in
//!   metrics.json     diagnostics and solve report
//!   density.json     spherical-harmonic coefficients
//!   far_field.csv    r, r_sup_u
//!   traces.csv       boundary pressure and normal velocity
//!   grids/<name>.<ext> + <name>.<ext>.json
//!   frames/frame_####.<ext> + header
//! ```
//!
//! Grid payloads are either raw little-endian `f64` pairs `(re, im)` in
//! row-major order (index `i·nx + j` ↔ `(x_j, y_i)`), or CSV with columns
//! `x,y,re,im`. Each payload has a JSON sidecar header.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nfs_core::potentials::{BoundaryTraces, DensityCoefficients};
use nfs_core::scenario::{GridData, ScenarioRun};
use nfs_core::{NfsError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum GridFormat {
    #[default]
    Bin,
    Csv,
}

impl GridFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GridFormat::Bin => "grid",
            GridFormat::Csv => "csv",
        }
    }
}

impl FromStr for GridFormat {
    type Err = NfsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bin" => Ok(GridFormat::Bin),
            "csv" => Ok(GridFormat::Csv),
            _ => Err(NfsError::Config(format!("unknown grid format '{s}'"))),
        }
    }
}

/// Sidecar header describing one grid payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub name: String,
    pub quantity: String,
    pub format: String,
    pub nx: usize,
    pub ny: usize,
    pub z: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub scenario_hash: String,
}

/// Density file: coefficients plus a note on their ordering.
#[derive(Serialize)]
struct DensityFile<'a> {
    ordering: &'static str,
    normalization: &'static str,
    #[serde(flatten)]
    density: &'a DensityCoefficients,
}

pub fn grid_coordinates(g: &GridHeader, idx: usize) -> (f64, f64) {
    let (i, j) = (idx / g.nx, idx % g.nx);
    let lerp = |r: [f64; 2], n: usize, t: usize| {
        if n < 2 {
            r[0]
        } else {
            r[0] + (r[1] - r[0]) * t as f64 / (n - 1) as f64
        }
    };
    (lerp(g.x_range, g.nx, j), lerp(g.y_range, g.ny, i))
}

fn header_for(g: &GridData, format: GridFormat, hash: &str) -> GridHeader {
    GridHeader {
        name: g.name.clone(),
        quantity: g.quantity.clone(),
        format: match format {
            GridFormat::Bin => "f64le-complex".into(),
            GridFormat::Csv => "csv".into(),
        },
        nx: g.nx,
        ny: g.ny,
        z: g.z,
        x_range: g.x_range,
        y_range: g.y_range,
        scenario_hash: hash.to_string(),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Write one grid payload and its header into `dir`.
pub fn write_grid(dir: &Path, g: &GridData, format: GridFormat, hash: &str) -> Result<PathBuf> {
    let header = header_for(g, format, hash);
    let path = dir.join(format!("{}.{}", g.name, format.extension()));
    let mut f = BufWriter::new(fs::File::create(&path)?);
    match format {
        GridFormat::Bin => {
            for v in &g.values {
                f.write_all(&v.re.to_le_bytes())?;
                f.write_all(&v.im.to_le_bytes())?;
            }
        }
        GridFormat::Csv => {
            writeln!(f, "x,y,re,im")?;
            for (idx, v) in g.values.iter().enumerate() {
                let (x, y) = grid_coordinates(&header, idx);
                writeln!(f, "{x:.16e},{y:.16e},{:.16e},{:.16e}", v.re, v.im)?;
            }
        }
    }
    f.flush()?;
    write_json(&sidecar(&path), &header)?;
    Ok(path)
}

fn sidecar(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Read a grid payload written by [`write_grid`].
pub fn read_grid(payload: &Path) -> Result<(GridHeader, Vec<Complex64>)> {
    let header: GridHeader = serde_json::from_slice(&fs::read(sidecar(payload))?)?;
    let n = header.nx * header.ny;
    let values = if header.format == "csv" {
        let text = fs::read_to_string(payload)?;
        let mut out = Vec::with_capacity(n);
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| NfsError::Data(format!("bad number '{s}': {e}")))
            };
            if cols.len() != 4 {
                return Err(NfsError::Data(format!("expected 4 columns, got '{line}'")));
            }
            out.push(Complex64::new(parse(cols[2])?, parse(cols[3])?));
        }
        out
    } else {
        let bytes = fs::read(payload)?;
        if bytes.len() != 16 * n {
            return Err(NfsError::Data(format!("payload has {} bytes, expected {}", bytes.len(), 16 * n)));
        }
        bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect()
    };
    if values.len() != n {
        return Err(NfsError::Data(format!("grid has {} values, header says {n}", values.len())));
    }
    Ok((header, values))
}

fn write_traces(path: &Path, t: &BoundaryTraces) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    writeln!(f, "x,y,z,p_re,p_im,vn_re,vn_im")?;
    for ((x, p), v) in t.points.iter().zip(&t.pressure).zip(&t.normal_velocity) {
        writeln!(
            f,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            x[0], x[1], x[2], p.re, p.im, v.re, v.im
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Write every artifact of `run` into `dir`, which must already exist.
pub fn write_run(dir: &Path, run: &ScenarioRun, format: GridFormat) -> Result<()> {
    let hash = &run.metrics.config_hash;
    write_json(&dir.join("config.json"), &run.config)?;
    write_json(&dir.join("metrics.json"), &run.metrics)?;
    write_json(
        &dir.join("density.json"),
        &DensityFile {
            ordering: "flat index l*l + l + m, l = 0..=max_degree, m = -l..=l",
            normalization: "orthonormal complex spherical harmonics, Condon-Shortley phase",
            density: &run.density,
        },
    )?;

    let mut ff = BufWriter::new(fs::File::create(dir.join("far_field.csv"))?);
    writeln!(ff, "r,r_sup_u")?;
    for s in &run.metrics.diagnostics.far_field {
        writeln!(ff, "{:.16e},{:.16e}", s.radius, s.r_sup)?;
    }
    ff.flush()?;

    if let Some(t) = &run.traces {
        write_traces(&dir.join("traces.csv"), t)?;
    }
    if !run.grids.is_empty() {
        let grids = dir.join("grids");
        fs::create_dir_all(&grids)?;
        for g in &run.grids {
            write_grid(&grids, g, format, hash)?;
        }
    }
    if !run.frames.is_empty() {
        let frames = dir.join("frames");
        fs::create_dir_all(&frames)?;
        for g in &run.frames {
            write_grid(&frames, g, format, hash)?;
        }
    }
    Ok(())
}

/// Write into a sibling staging directory, then move the result into
/// place so a failed write leaves nothing behind at `out`.
pub fn write_run_atomic(out: &Path, run: &ScenarioRun, format: GridFormat) -> Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let file_name = out
        .file_name()
        .ok_or_else(|| NfsError::Config(format!("invalid output directory {}", out.display())))?;
    let staging = parent.join(format!(".{}.partial-{}", file_name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir(&staging)?;

    let result = write_run(&staging, run, format).and_then(|()| {
        if out.exists() {
            fs::remove_dir_all(out)?;
        }
        fs::rename(&staging, out)?;
        Ok(())
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

/// Load the density written by [`write_run`].
pub fn read_density(path: &Path) -> Result<DensityCoefficients> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
