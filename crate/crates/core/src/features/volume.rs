//! Dense 3D scalar grids, binary masks and the `VOL1` text bundle format.
//!
//! Voxels are stored x-fastest: `index = x + nx * (y + ny * z)`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{parse_err, Error, Result};

pub type Dims = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: [f64; 3],
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: Dims,
    data: Vec<u8>,
}

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub(crate) fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!("degenerate dims {dims:?}")));
    }
    Ok(())
}

impl Volume {
    pub fn new(dims: Dims, spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if data.len() != voxel_count(dims) {
            return Err(Error::InvalidVolume(format!(
                "expected {} values for dims {dims:?}, got {}",
                voxel_count(dims),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!("non-finite value at voxel {i}")));
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel index.
    pub fn from_fn(
        dims: Dims,
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume::new(dims, spacing, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[linear_index(self.dims, x, y, z)]
    }

    /// Values of voxels where `mask` is set, in storage order.
    pub fn masked_values(&self, mask: &Mask) -> Result<Vec<f64>> {
        mask.check_matches(self)?;
        Ok(self
            .data
            .iter()
            .zip(&mask.data)
            .filter(|(_, &m)| m != 0)
            .map(|(v, _)| *v)
            .collect())
    }

    pub fn read_vol1(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let (dims, spacing, data) = parse_vol1(&text).map_err(|m| parse_err(path, m))?;
        Volume::new(dims, spacing, data).map_err(|e| parse_err(path, e.to_string()))
    }

    pub fn to_vol1(&self) -> String {
        render_vol1(self.dims, self.spacing, self.data.iter().map(|v| v.to_string()))
    }

    pub fn write_vol1(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_vol1())?;
        Ok(())
    }
}

impl Mask {
    pub fn new(dims: Dims, data: Vec<u8>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != voxel_count(dims) {
            return Err(Error::InvalidVolume(format!(
                "expected {} mask values for dims {dims:?}, got {}",
                voxel_count(dims),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidVolume(format!("mask value at voxel {i} is not 0/1")));
        }
        Ok(Mask { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(u8::from(f(x, y, z)));
                }
            }
        }
        Mask::new(dims, data)
    }

    pub fn full(dims: Dims) -> Result<Self> {
        Mask::from_fn(dims, |_, _, _| true)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[linear_index(self.dims, x, y, z)] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m != 0).count()
    }

    /// Foreground voxel indices as `[x, y, z]`, in storage order.
    pub fn foreground(&self) -> Vec<[usize; 3]> {
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::new();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if self.contains(x, y, z) {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    pub(crate) fn check_matches(&self, v: &Volume) -> Result<()> {
        if self.dims != v.dims {
            return Err(Error::Shape(format!(
                "mask dims {:?} do not match volume dims {:?}",
                self.dims, v.dims
            )));
        }
        Ok(())
    }

    /// Masks have no spacing of their own; the `spacing` line is written as
    /// ones and ignored on read.
    pub fn read_vol1(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let (dims, _, data) = parse_vol1(&text).map_err(|m| parse_err(path, m))?;
        let mut bits = Vec::with_capacity(data.len());
        for (i, v) in data.into_iter().enumerate() {
            match v {
                v if v == 0.0 => bits.push(0),
                v if v == 1.0 => bits.push(1),
                _ => return Err(parse_err(path, format!("mask value {v} at voxel {i} is not 0/1"))),
            }
        }
        Mask::new(dims, bits).map_err(|e| parse_err(path, e.to_string()))
    }

    pub fn to_vol1(&self) -> String {
        render_vol1(self.dims, [1.0; 3], self.data.iter().map(|v| v.to_string()))
    }

    pub fn write_vol1(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_vol1())?;
        Ok(())
    }
}

fn render_vol1(dims: Dims, spacing: [f64; 3], values: impl Iterator<Item = String>) -> String {
    let mut out = String::from("VOL1\n");
    let _ = writeln!(out, "dims {} {} {}", dims[0], dims[1], dims[2]);
    let _ = writeln!(out, "spacing {} {} {}", spacing[0], spacing[1], spacing[2]);
    out.push_str("data\n");
    // one x-row per line
    let row = dims[0];
    for (i, v) in values.enumerate() {
        out.push_str(&v);
        out.push(if (i + 1) % row == 0 { '\n' } else { ' ' });
    }
    out
}

type Parsed = (Dims, [f64; 3], Vec<f64>);

fn parse_vol1(text: &str) -> std::result::Result<Parsed, String> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("VOL1") => {}
        other => return Err(format!("expected `VOL1` magic, found {other:?}")),
    }
    let dims_line = lines.next().ok_or("missing dims line")?;
    let dims: Vec<usize> = keyed_fields(dims_line, "dims")?
        .iter()
        .map(|s| s.parse::<usize>().map_err(|e| format!("bad dim `{s}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let spacing_line = lines.next().ok_or("missing spacing line")?;
    let spacing: Vec<f64> = keyed_fields(spacing_line, "spacing")?
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad spacing `{s}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match lines.next().map(str::trim) {
        Some("data") => {}
        other => return Err(format!("expected `data` line, found {other:?}")),
    }
    let dims = [dims[0], dims[1], dims[2]];
    let expected = voxel_count(dims);
    let mut data = Vec::with_capacity(expected);
    for tok in lines.flat_map(str::split_whitespace) {
        let v: f64 = tok
            .parse()
            .map_err(|e| format!("bad value `{tok}` at voxel {}: {e}", data.len()))?;
        data.push(v);
    }
    if data.len() != expected {
        return Err(format!("expected {expected} values, found {}", data.len()));
    }
    Ok((dims, [spacing[0], spacing[1], spacing[2]], data))
}

fn keyed_fields<'a>(line: &'a str, key: &str) -> std::result::Result<Vec<&'a str>, String> {
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(format!("expected `{key}` line, found `{line}`"));
    }
    let fields: Vec<&str> = it.collect();
    if fields.len() != 3 {
        return Err(format!("`{key}` needs 3 values, found {}", fields.len()));
    }
    Ok(fields)
}
