//! Stored velocity histories and the `.lcns` snapshot format.
//!
//! Layout, all little-endian:
//!
//! | offset | type      | content                      |
//! |--------|-----------|------------------------------|
//! | 0      | `[u8; 4]` | magic `LCNS`                 |
//! | 4      | `u32`     | format version (1)           |
//! | 8      | `u64`     | cells `M`                    |
//! | 16     | `u64`     | steps                        |
//! | 24     | `f64`     | `dt`                         |
//! | 32     | `f64`...  | `(steps + 1) * (M + 1)` values, one snapshot per row |

use std::io::{Read, Write};

use super::Grid;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"LCNS";
const VERSION: u32 = 1;

/// Node velocities at every time level `t_0 = 0, ..., t_steps = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHistory {
    grid: Grid,
    values: Vec<f64>,
}

impl FieldHistory {
    /// Wraps `(steps + 1) * (M + 1)` row-major values.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let width = grid.cells() + 1;
        if values.len() != (grid.steps() + 1) * width {
            return Err(Error::Precondition(format!(
                "history holds {} values, grid needs {}",
                values.len(),
                (grid.steps() + 1) * width
            )));
        }
        for (k, row) in values.chunks_exact(width).enumerate() {
            if row[0] != 0.0 || row[width - 1] != 0.0 {
                return Err(Error::Precondition(format!(
                    "snapshot {k} violates the Dirichlet boundary condition"
                )));
            }
        }
        Ok(Self { grid, values })
    }

    /// Identically zero history.
    pub fn zeros(grid: Grid) -> Self {
        let n = (grid.steps() + 1) * (grid.cells() + 1);
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Samples `u(t_k, x_i)` from a closed-form field; boundary values are
    /// forced to zero.
    pub fn from_fn(grid: Grid, u: impl Fn(f64, f64) -> f64) -> Self {
        let m = grid.cells();
        let mut values = Vec::with_capacity((grid.steps() + 1) * (m + 1));
        for k in 0..=grid.steps() {
            let t = grid.time(k);
            values.push(0.0);
            values.extend((1..m).map(|i| u(t, grid.node(i))));
            values.push(0.0);
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        let w = self.grid.cells() + 1;
        &self.values[k * w..(k + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Snapshots `k0..=k1` as a history of its own, time shifted to start at 0.
    pub fn window(&self, k0: usize, k1: usize) -> Result<Self> {
        if !(k0 < k1 && k1 <= self.grid.steps()) {
            return Err(Error::Precondition(format!(
                "window {k0}..={k1} not inside 0..={}",
                self.grid.steps()
            )));
        }
        let w = self.grid.cells() + 1;
        let grid = Grid::from_step(self.grid.cells(), k1 - k0, self.grid.dt())?;
        Ok(Self {
            grid,
            values: self.values[k0 * w..(k1 + 1) * w].to_vec(),
        })
    }

    /// `int_0^T u(t, x) dt`: trapezoid in time, linear interpolation in space.
    pub fn time_integral(&self, x: f64) -> Result<f64> {
        if !(0.0..=std::f64::consts::PI).contains(&x) {
            return Err(Error::OutOfDomain { x });
        }
        let m = self.grid.cells();
        let s = x / self.grid.dx();
        let i = (s.floor() as usize).min(m - 1);
        let w = s - i as f64;
        let mut total = 0.0;
        for k in 0..=self.grid.steps() {
            let row = self.snapshot(k);
            let v = (1.0 - w) * row[i] + w * row[i + 1];
            let weight = if k == 0 || k == self.grid.steps() { 0.5 } else { 1.0 };
            total += weight * v;
        }
        Ok(total * self.grid.dt())
    }

    pub fn write_lcns(&self, mut w: impl Write) -> Result<()> {
        let mut header = Vec::with_capacity(32);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&(self.grid.cells() as u64).to_le_bytes());
        header.extend_from_slice(&(self.grid.steps() as u64).to_le_bytes());
        header.extend_from_slice(&self.grid.dt().to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(8 * (self.grid.cells() + 1));
        for k in 0..self.len() {
            buf.clear();
            for v in self.snapshot(k) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_lcns(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let cells = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let steps = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let dt = f64::from_le_bytes(header[24..32].try_into().unwrap());
        let grid = Grid::from_step(cells, steps, dt).map_err(|e| Error::Format(e.to_string()))?;
        let count = (steps + 1)
            .checked_mul(cells + 1)
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * count {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                8 * count,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_values(grid, values).map_err(|e| Error::Format(e.to_string()))
    }

    /// `t,x,value` rows, one per node and time level.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,x,value")?;
        let nodes = self.grid.nodes();
        for k in 0..self.len() {
            let t = self.grid.time(k);
            for (x, v) in nodes.iter().zip(self.snapshot(k)) {
                writeln!(w, "{t:.16e},{x:.16e},{v:.16e}")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
