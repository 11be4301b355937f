//! File formats: bit-packed indicator bitmaps, raw field dumps, CSV tables.

use crate::error::{Error, Result};
use crate::geometry::IndicatorGrid;
use crate::mesh::{Bc, Grid, GridFunction};
use std::io::{Read, Write};

const BITMAP_MAGIC: &[u8; 4] = b"DPLB";
const FIELD_MAGIC: &[u8; 4] = b"DPGF";
const FORMAT_VERSION: u32 = 1;

/// 32-byte header + LSB-first bit packing; round-trips bit-exactly.
pub fn write_bitmap<W: Write>(chi: &IndicatorGrid, mut w: W) -> Result<()> {
    w.write_all(BITMAP_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(chi.grid.dim as u32).to_le_bytes())?;
    w.write_all(&(chi.grid.n as u32).to_le_bytes())?;
    w.write_all(&chi.grid.extent.to_le_bytes())?;
    let flags: u32 = chi.grid.torus as u32;
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    let mut packed = vec![0u8; chi.cells.len().div_ceil(8)];
    for (i, &b) in chi.cells.iter().enumerate() {
        if b {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&packed)?;
    Ok(())
}

pub fn read_bitmap<R: Read>(mut r: R) -> Result<IndicatorGrid> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[0..4] != BITMAP_MAGIC {
        return Err(Error::Config("not a bitmap file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Config(format!("unsupported bitmap version {version}")));
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let extent = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let flags = u32::from_le_bytes(header[24..28].try_into().unwrap());
    let grid = Grid::new(n, dim, extent, flags & 1 == 1);
    let mut packed = vec![0u8; grid.cells().div_ceil(8)];
    r.read_exact(&mut packed)?;
    let cells = (0..grid.cells()).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
    Ok(IndicatorGrid { grid, cells, provenance: None })
}

/// 32-byte header + row-major little-endian doubles (dense values).
pub fn write_field<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(f.grid.dim as u32).to_le_bytes())?;
    w.write_all(&(f.grid.n as u32).to_le_bytes())?;
    w.write_all(&f.grid.extent.to_le_bytes())?;
    let bc_tag: u32 = match &f.bc {
        Bc::Periodic => 0,
        Bc::DirichletZero => 1,
        Bc::MaskedDirichlet(_) => 2,
    };
    let flags: u32 = (f.grid.torus as u32) | (bc_tag << 1);
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for v in f.dense_values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<GridFunction> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[0..4] != FIELD_MAGIC {
        return Err(Error::Config("not a field file (bad magic)".into()));
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let extent = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let flags = u32::from_le_bytes(header[24..28].try_into().unwrap());
    let grid = Grid::new(n, dim, extent, flags & 1 == 1);
    let bc = match flags >> 1 {
        0 => Bc::Periodic,
        1 => Bc::DirichletZero,
        // masked functions come back dense-extended
        _ => {
            if grid.torus {
                Bc::Periodic
            } else {
                Bc::DirichletZero
            }
        }
    };
    let mut values = Vec::with_capacity(grid.cells());
    let mut buf = [0u8; 8];
    for _ in 0..grid.cells() {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok(GridFunction::dense(grid, bc, values))
}

/// `x,y,value` per cell (x-only in one dimension).
pub fn field_csv<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    let grid = f.grid;
    if grid.dim == 2 {
        writeln!(w, "x,y,value")?;
    } else {
        writeln!(w, "x,value")?;
    }
    for (c, v) in f.dense_values().iter().enumerate() {
        let x = grid.cell_center(c);
        if grid.dim == 2 {
            writeln!(w, "{},{},{:.17e}", x[0], x[1], v)?;
        } else {
            writeln!(w, "{},{:.17e}", x[0], v)?;
        }
    }
    Ok(())
}

pub fn sweep_csv<W: Write>(report: &crate::dporosity::SweepReport, mut w: W) -> Result<()> {
    writeln!(w, "eps,err_h1_outside,err_l2_inside,grad_defect,combined,slope")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6}",
            row.eps, row.h1_outside, row.l2_inside, row.grad_defect, row.combined,
            report.fit.slope
        )?;
    }
    Ok(())
}

/// Residual-history CSV (iteration, relative residual).
pub fn residual_csv<W: Write>(history: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "iteration,rel_residual")?;
    for (i, r) in history.iter().enumerate() {
        writeln!(w, "{},{:.12e}", i + 1, r)?;
    }
    Ok(())
}
