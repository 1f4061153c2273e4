//! Persistent artifacts: the binary field-dump format, run metadata, and
//! the convergence log.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SurfaceField;
use crate::grid::GridSpec;
use crate::minimizer::HistoryEntry;

/// Magic token opening every field dump.
pub const FIELD_MAGIC: &str = "CAPWAVE1";
/// Fixed byte length of the text header preceding the samples.
pub const FIELD_HEADER_LEN: usize = 64;

/// Header of a field dump: enough to rebuild the horizontal grid. The
/// vertical resolution and penalty radii are solver-side parameters, not
/// properties of the stored surface, so they are supplied on load.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHeader {
    pub n_x: usize,
    pub n_z: usize,
    pub l_x: f64,
    pub l_z: f64,
    pub beta: f64,
    pub mu: f64,
}

impl FieldHeader {
    pub fn of(grid: &GridSpec) -> Self {
        FieldHeader {
            n_x: grid.n_x,
            n_z: grid.n_z,
            l_x: grid.l_x,
            l_z: grid.l_z,
            beta: grid.beta,
            mu: grid.mu,
        }
    }

    /// Rebuild the full grid by combining the stored horizontal data with
    /// the solver-side parameters.
    pub fn grid(&self, n_y: usize, m_ball: f64, m_tilde: f64) -> Result<Arc<GridSpec>> {
        Ok(Arc::new(GridSpec::new(
            self.n_x, self.n_z, n_y, self.l_x, self.l_z, self.beta, self.mu, m_ball, m_tilde,
        )?))
    }
}

/// Serialize the header line. Rust's shortest-roundtrip float formatting
/// keeps the values bit-exact through a text round trip.
fn header_bytes(h: &FieldHeader) -> Result<[u8; FIELD_HEADER_LEN]> {
    let line = format!(
        "{FIELD_MAGIC} {} {} {} {} {} {}",
        h.n_x, h.n_z, h.l_x, h.l_z, h.beta, h.mu
    );
    if line.len() >= FIELD_HEADER_LEN {
        return Err(Error::FileFormat(format!(
            "header does not fit in {FIELD_HEADER_LEN} bytes: {line:?}"
        )));
    }
    let mut bytes = [b' '; FIELD_HEADER_LEN];
    bytes[..line.len()].copy_from_slice(line.as_bytes());
    bytes[FIELD_HEADER_LEN - 1] = b'\n';
    Ok(bytes)
}

/// Write a surface field: 64-byte text header, then row-major (z fastest)
/// little-endian binary doubles.
pub fn write_field(path: &Path, field: &SurfaceField) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header_bytes(&FieldHeader::of(field.grid()))?)?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a dump written by [`write_field`].
pub fn read_field(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let mut input = BufReader::new(File::open(path)?);
    let mut head = [0u8; FIELD_HEADER_LEN];
    input.read_exact(&mut head)?;
    let text = std::str::from_utf8(&head)
        .map_err(|_| Error::FileFormat("header is not valid text".into()))?;
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some(FIELD_MAGIC) {
        return Err(Error::FileFormat(format!(
            "missing {FIELD_MAGIC} magic in header {text:?}"
        )));
    }
    let mut next = |name: &str| -> Result<&str> {
        tokens
            .next()
            .ok_or_else(|| Error::FileFormat(format!("header missing field {name}")))
    };
    let parse_usize = |name: &str, s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::FileFormat(format!("bad {name} in header: {s:?}")))
    };
    let parse_f64 = |name: &str, s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::FileFormat(format!("bad {name} in header: {s:?}")))
    };
    let header = FieldHeader {
        n_x: parse_usize("nx", next("nx")?)?,
        n_z: parse_usize("nz", next("nz")?)?,
        l_x: parse_f64("lx", next("lx")?)?,
        l_z: parse_f64("lz", next("lz")?)?,
        beta: parse_f64("beta", next("beta")?)?,
        mu: parse_f64("mu", next("mu")?)?,
    };
    let count = header.n_x * header.n_z;
    let mut payload = Vec::with_capacity(count * 8);
    input.read_to_end(&mut payload)?;
    if payload.len() != count * 8 {
        return Err(Error::FileFormat(format!(
            "expected {} sample bytes, found {}",
            count * 8,
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, values))
}

/// Load a field dump and rebuild it on a full grid; the vertical resolution
/// and penalty radii come from the caller.
pub fn load_field(
    path: &Path,
    n_y: usize,
    m_ball: f64,
    m_tilde: f64,
) -> Result<(Arc<GridSpec>, SurfaceField)> {
    let (header, values) = read_field(path)?;
    let grid = header.grid(n_y, m_ball, m_tilde)?;
    let field = SurfaceField::from_values(&grid, values)?;
    Ok((grid, field))
}

/// Write the convergence history as CSV, thinned to every `log_every`-th
/// accepted step but always keeping the first and last records.
pub fn write_convergence_csv(
    path: &Path,
    history: &[HistoryEntry],
    log_every: usize,
) -> Result<()> {
    let every = log_every.max(1);
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "iter,j,residual,l,speed,h3")?;
    let last = history.len().saturating_sub(1);
    for (i, h) in history.iter().enumerate() {
        if i % every != 0 && i != last {
            continue;
        }
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            h.iter, h.j, h.residual, h.l, h.speed, h.h3
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Everything needed to reproduce a run bit-for-bit, plus its outcome.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub format: String,
    /// Spectral conventions the dumps depend on.
    pub transform: String,
    pub grid: GridSpec,
    pub m_tilde: f64,
    pub m_ball: f64,
    pub kappa_rho: f64,
    pub tol_grad: f64,
    pub max_iter: usize,
    pub bvp_tol: f64,
    pub seed: String,
    pub bump_amplitude: f64,
    pub seed_file: Option<String>,
    pub continuation: Option<Vec<f64>>,
    pub log_every: usize,
    pub emit_fields: bool,
    pub emit_slices: bool,
    pub outcome: Option<RunOutcome>,
}

/// Final-state summary recorded alongside the inputs.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub stop: String,
    pub iterations: usize,
    pub j_mu: f64,
    pub j_penalised: f64,
    pub residual: f64,
    pub speed: f64,
    pub l_total: f64,
    pub h3_norm: f64,
    pub penalty: f64,
    pub elapsed_seconds: f64,
}

pub fn write_metadata(path: &Path, meta: &RunMetadata) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, meta)
        .map_err(|e| Error::FileFormat(format!("metadata serialization failed: {e}")))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let input = BufReader::new(File::open(path)?);
    serde_json::from_reader(input)
        .map_err(|e| Error::FileFormat(format!("metadata parse failed: {e}")))
}

/// Centerline slices and a decimated surface grid as plot-ready CSV.
pub fn write_slices(dir: &Path, field: &SurfaceField) -> Result<()> {
    let g = field.grid();
    let (icx, icz) = (g.n_x / 2, g.n_z / 2);
    let mut out = BufWriter::new(File::create(dir.join("slice_x.csv"))?);
    writeln!(out, "x,eta")?;
    for ix in 0..g.n_x {
        writeln!(out, "{:e},{:e}", g.x(ix), field.values()[g.idx(ix, icz)])?;
    }
    out.flush()?;
    let mut out = BufWriter::new(File::create(dir.join("slice_z.csv"))?);
    writeln!(out, "z,eta")?;
    for iz in 0..g.n_z {
        writeln!(out, "{:e},{:e}", g.z(iz), field.values()[g.idx(icx, iz)])?;
    }
    out.flush()?;
    // Decimate the surface to at most 128 samples per axis.
    let sx = g.n_x.div_ceil(128).max(1);
    let sz = g.n_z.div_ceil(128).max(1);
    let mut out = BufWriter::new(File::create(dir.join("surface.csv"))?);
    writeln!(out, "x,z,eta")?;
    for ix in (0..g.n_x).step_by(sx) {
        for iz in (0..g.n_z).step_by(sz) {
            writeln!(
                out,
                "{:e},{:e},{:e}",
                g.x(ix),
                g.z(iz),
                field.values()[g.idx(ix, iz)]
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
