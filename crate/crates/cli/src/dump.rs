//! Plain-text grid dumps.
//!
//! Header `nx ny h origin_x origin_y`, then one line `i j x y u phi mask` per
//! node in index order. Values use the shortest round-trip float format, so
//! reading and re-writing a dump reproduces it byte for byte.

use std::io::{BufRead, Write};

use gpe_levelset::flow::Discretization;
use gpe_levelset::geometry::{GridClassification, LevelSetField, NodeKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("field has {got} interior values, classification has {want}")]
    Size { got: usize, want: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    Regular,
    Irregular,
    Ghost1,
    Ghost2,
    /// Interior node within rounding of the boundary, held at zero.
    Pinned,
    Exterior,
}

impl Mask {
    pub fn label(self) -> &'static str {
        match self {
            Mask::Regular => "regular",
            Mask::Irregular => "irregular",
            Mask::Ghost1 => "ghost1",
            Mask::Ghost2 => "ghost2",
            Mask::Pinned => "pinned",
            Mask::Exterior => "exterior",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        Some(match s {
            "regular" => Mask::Regular,
            "irregular" => Mask::Irregular,
            "ghost1" => Mask::Ghost1,
            "ghost2" => Mask::Ghost2,
            "pinned" => Mask::Pinned,
            "exterior" => Mask::Exterior,
            _ => return None,
        })
    }
}

impl From<NodeKind> for Mask {
    fn from(k: NodeKind) -> Self {
        match k {
            NodeKind::Regular => Mask::Regular,
            NodeKind::Irregular => Mask::Irregular,
            NodeKind::Ghost1 => Mask::Ghost1,
            NodeKind::Ghost2 => Mask::Ghost2,
            NodeKind::Pinned => Mask::Pinned,
            NodeKind::Exterior => Mask::Exterior,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DumpRow {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub phi: f64,
    pub mask: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub rows: Vec<DumpRow>,
}

impl FieldDump {
    /// Dump of an interior field; every non-interior node is written with `u = 0`.
    pub fn from_field(
        ls: &LevelSetField,
        cls: &GridClassification,
        interior: &[f64],
    ) -> Result<Self, DumpError> {
        if interior.len() != cls.n_interior() {
            return Err(DumpError::Size {
                got: interior.len(),
                want: cls.n_interior(),
            });
        }
        let grid = ls.grid();
        let full = cls.scatter(interior);
        let rows = (0..grid.len())
            .map(|idx| {
                let (i, j) = grid.coords(idx);
                let p = grid.node(i, j);
                let kind = cls.kind(idx);
                DumpRow {
                    i,
                    j,
                    x: p[0],
                    y: p[1],
                    u: if kind.is_interior() { full[idx] } else { 0.0 },
                    phi: ls.values()[idx],
                    mask: kind.into(),
                }
            })
            .collect();
        Ok(Self {
            nx: grid.nx(),
            ny: grid.ny(),
            h: grid.h(),
            origin: grid.origin(),
            rows,
        })
    }

    pub fn from_solution(disc: &Discretization, u: &[f64]) -> Result<Self, DumpError> {
        Self::from_field(&disc.level_set, &disc.classification, u)
    }

    /// Geometry only: `u = 0` everywhere.
    pub fn from_geometry(disc: &Discretization) -> Self {
        let zeros = vec![0.0; disc.n_unknowns()];
        Self::from_solution(disc, &zeros).expect("sizes match by construction")
    }

    pub fn count(&self, mask: Mask) -> usize {
        self.rows.iter().filter(|r| r.mask == mask).count()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {:e} {:e} {:e}", self.nx, self.ny, self.h, self.origin[0], self.origin[1])?;
        for r in &self.rows {
            writeln!(
                w,
                "{} {} {:e} {:e} {:e} {:e} {}",
                r.i,
                r.j,
                r.x,
                r.y,
                r.u,
                r.phi,
                r.mask.label()
            )?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, DumpError> {
        let mut lines = r.lines().enumerate();
        let err = |line: usize, message: &str| DumpError::Parse {
            line,
            message: message.to_string(),
        };
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty dump"))?;
        let header = header?;
        let hf: Vec<&str> = header.split_whitespace().collect();
        if hf.len() != 5 {
            return Err(err(1, "header must be 'nx ny h origin_x origin_y'"));
        }
        let num = |s: &str, line: usize| s.parse::<f64>().map_err(|_| err(line, &format!("bad number '{s}'")));
        let int = |s: &str, line: usize| s.parse::<usize>().map_err(|_| err(line, &format!("bad index '{s}'")));
        let nx = int(hf[0], 1)?;
        let ny = int(hf[1], 1)?;
        let h = num(hf[2], 1)?;
        let origin = [num(hf[3], 1)?, num(hf[4], 1)?];
        let mut rows = Vec::with_capacity(nx * ny);
        for (n, line) in lines {
            let line = line?;
            let ln = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(err(ln, "expected 'i j x y u phi mask'"));
            }
            rows.push(DumpRow {
                i: int(f[0], ln)?,
                j: int(f[1], ln)?,
                x: num(f[2], ln)?,
                y: num(f[3], ln)?,
                u: num(f[4], ln)?,
                phi: num(f[5], ln)?,
                mask: Mask::from_label(f[6]).ok_or_else(|| err(ln, &format!("unknown mask '{}'", f[6])))?,
            });
        }
        if rows.len() != nx * ny {
            return Err(err(rows.len() + 1, &format!("expected {} node lines, found {}", nx * ny, rows.len())));
        }
        Ok(Self {
            nx,
            ny,
            h,
            origin,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FieldDump {
        let rows = (0..9)
            .map(|k| DumpRow {
                i: k % 3,
                j: k / 3,
                x: (k % 3) as f64 * 0.5,
                y: (k / 3) as f64 * 0.5,
                u: 1.0,
                phi: -0.1 - k as f64 / 7.0,
                mask: Mask::Regular,
            })
            .collect();
        FieldDump {
            nx: 3,
            ny: 3,
            h: 0.5,
            origin: [0.0, 0.0],
            rows,
        }
    }

    #[test]
    fn three_by_three_dump() {
        let d = tiny();
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert_eq!(text.lines().next().unwrap(), "3 3 5e-1 0e0 0e0");
        assert!(text.lines().skip(1).all(|l| l.ends_with(" regular")));
        let back = FieldDump::read(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn rejects_truncated_dumps() {
        let mut buf = Vec::new();
        tiny().write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(FieldDump::read(cut.as_bytes()).is_err());
        assert!(FieldDump::read("3 3 0.5 0\n".as_bytes()).is_err());
    }
}
