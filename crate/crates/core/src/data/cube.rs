// SPDX-License-Identifier: Apache-2.0

//! Sparse photon-count cube and its binary file format.
//!
//! Only active bins are stored. On disk ("SPCB" v1, little-endian):
//!
//! | field | type |
//! |-------|------|
//! | magic `SPCB` | 4 bytes |
//! | version = 1 | u32 |
//! | n_rows, n_cols, n_bins | u32 x 3 |
//! | bin width (seconds) | f64 |
//! | per pixel, row-major: n_events, then (bin, count) pairs | u32, (u32, u32)* |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPCB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonCube {
    n_rows: usize,
    n_cols: usize,
    n_bins: usize,
    bin_width: f64,
    offsets: Vec<usize>,
    bins: Vec<u32>,
    counts: Vec<u32>,
    total: u64,
}

/// Active bins of one pixel, bin indices strictly increasing.
#[derive(Debug, Clone, Copy)]
pub struct Histogram<'a> {
    pub bins: &'a [u32],
    pub counts: &'a [u32],
}

impl<'a> Histogram<'a> {
    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + 'a {
        self.bins.iter().copied().zip(self.counts.iter().copied())
    }

    /// Index range of events whose bin lies in `[lo, hi]`.
    pub fn range(&self, lo: usize, hi: usize) -> std::ops::Range<usize> {
        let a = self.bins.partition_point(|&b| (b as usize) < lo);
        let b = self.bins.partition_point(|&b| (b as usize) <= hi);
        a..b.max(a)
    }
}

/// Incremental row-major builder.
#[derive(Debug)]
pub struct CubeBuilder {
    cube: PhotonCube,
}

impl CubeBuilder {
    pub fn new(n_rows: usize, n_cols: usize, n_bins: usize, bin_width: f64) -> Self {
        CubeBuilder {
            cube: PhotonCube {
                n_rows,
                n_cols,
                n_bins,
                bin_width,
                offsets: vec![0],
                bins: Vec::new(),
                counts: Vec::new(),
                total: 0,
            },
        }
    }

    pub fn pixels_written(&self) -> usize {
        self.cube.offsets.len() - 1
    }

    /// Appends the next pixel's events. Zero counts are dropped; bins must be
    /// strictly increasing and inside the gate.
    pub fn push_pixel(&mut self, events: impl IntoIterator<Item = (u32, u32)>) -> Result<()> {
        let k = self.pixels_written();
        let (row, col) = (k / self.cube.n_cols.max(1), k % self.cube.n_cols.max(1));
        if k >= self.cube.n_rows * self.cube.n_cols {
            return Err(Error::argument("too many pixels for cube dimensions"));
        }
        let start = self.cube.bins.len();
        for (bin, count) in events {
            if count == 0 {
                continue;
            }
            let bad = |msg: String| Error::Invariant { row, col, msg };
            if bin as usize >= self.cube.n_bins {
                self.cube.bins.truncate(start);
                self.cube.counts.truncate(start);
                return Err(bad(format!("bin {bin} >= n_bins {}", self.cube.n_bins)));
            }
            if self.cube.bins.len() > start && *self.cube.bins.last().unwrap() >= bin {
                self.cube.bins.truncate(start);
                self.cube.counts.truncate(start);
                return Err(bad("bins not strictly increasing".into()));
            }
            self.cube.bins.push(bin);
            self.cube.counts.push(count);
        }
        self.cube.total += self.cube.counts[start..].iter().map(|&c| c as u64).sum::<u64>();
        self.cube.offsets.push(self.cube.bins.len());
        Ok(())
    }

    pub fn finish(self) -> Result<PhotonCube> {
        let expected = self.cube.n_rows * self.cube.n_cols;
        if self.pixels_written() != expected {
            return Err(Error::argument(format!(
                "cube has {} of {expected} pixels",
                self.pixels_written()
            )));
        }
        Ok(self.cube)
    }
}

impl PhotonCube {
    pub fn empty(n_rows: usize, n_cols: usize, n_bins: usize, bin_width: f64) -> Self {
        let mut b = CubeBuilder::new(n_rows, n_cols, n_bins, bin_width);
        for _ in 0..n_rows * n_cols {
            b.push_pixel(std::iter::empty()).expect("empty pixel");
        }
        b.finish().expect("complete cube")
    }

    /// Builds a cube from per-pixel event lists in row-major order.
    pub fn from_pixels<I, E>(n_rows: usize, n_cols: usize, n_bins: usize, bin_width: f64, pixels: I) -> Result<Self>
    where
        I: IntoIterator<Item = E>,
        E: IntoIterator<Item = (u32, u32)>,
    {
        let mut b = CubeBuilder::new(n_rows, n_cols, n_bins, bin_width);
        for events in pixels {
            b.push_pixel(events)?;
        }
        b.finish()
    }

    /// Builds a cube from dense counts laid out `[pixel][bin]`.
    pub fn from_dense(n_rows: usize, n_cols: usize, n_bins: usize, bin_width: f64, dense: &[u32]) -> Result<Self> {
        if dense.len() != n_rows * n_cols * n_bins {
            return Err(Error::argument("dense cube has the wrong length"));
        }
        Self::from_pixels(
            n_rows,
            n_cols,
            n_bins,
            bin_width,
            dense
                .chunks(n_bins.max(1))
                .map(|h| h.iter().enumerate().map(|(t, &z)| (t as u32, z))),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }
    pub fn n_pixels(&self) -> usize {
        self.n_rows * self.n_cols
    }
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }
    pub fn total_photons(&self) -> u64 {
        self.total
    }
    pub fn active_bins(&self) -> usize {
        self.bins.len()
    }
    pub fn mean_active_bins(&self) -> f64 {
        self.bins.len() as f64 / self.n_pixels().max(1) as f64
    }

    #[inline]
    pub fn histogram(&self, pixel: usize) -> Histogram<'_> {
        let r = self.offsets[pixel]..self.offsets[pixel + 1];
        Histogram {
            bins: &self.bins[r.clone()],
            counts: &self.counts[r],
        }
    }

    pub fn histogram_at(&self, i: usize, j: usize) -> Histogram<'_> {
        self.histogram(i * self.n_cols + j)
    }

    /// Count at one bin (zero when inactive).
    pub fn count(&self, pixel: usize, bin: usize) -> u32 {
        let h = self.histogram(pixel);
        match h.bins.binary_search(&(bin as u32)) {
            Ok(k) => h.counts[k],
            Err(_) => 0,
        }
    }

    /// Re-checks every invariant, including the cached photon total.
    pub fn validate(&self) -> Result<()> {
        let mut total = 0u64;
        for p in 0..self.n_pixels() {
            let (row, col) = (p / self.n_cols, p % self.n_cols);
            let h = self.histogram(p);
            let mut prev: Option<u32> = None;
            for (bin, count) in h.iter() {
                let bad = |msg: String| Error::Invariant { row, col, msg };
                if bin as usize >= self.n_bins {
                    return Err(bad(format!("bin {bin} >= n_bins {}", self.n_bins)));
                }
                if count == 0 {
                    return Err(bad(format!("zero count stored at bin {bin}")));
                }
                if prev.is_some_and(|p| p >= bin) {
                    return Err(bad("bins not strictly increasing".into()));
                }
                prev = Some(bin);
                total += count as u64;
            }
        }
        if total != self.total {
            return Err(Error::format(format!(
                "cached photon total {} != recomputed {total}",
                self.total
            )));
        }
        Ok(())
    }

    /// Tiles the cube `reps[0] x reps[1]` times.
    pub fn tiled(&self, reps: [usize; 2]) -> Self {
        let rows = self.n_rows * reps[0];
        let cols = self.n_cols * reps[1];
        let pixels = (0..rows * cols).map(|k| {
            let (i, j) = (k / cols, k % cols);
            self.histogram_at(i % self.n_rows, j % self.n_cols).iter()
        });
        Self::from_pixels(rows, cols, self.n_bins, self.bin_width, pixels).expect("tiling a valid cube")
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let dim = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::argument(format!("{what} does not fit in u32")))
        };
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&dim(self.n_rows, "n_rows")?.to_le_bytes())?;
        w.write_all(&dim(self.n_cols, "n_cols")?.to_le_bytes())?;
        w.write_all(&dim(self.n_bins, "n_bins")?.to_le_bytes())?;
        w.write_all(&self.bin_width.to_le_bytes())?;
        for p in 0..self.n_pixels() {
            let h = self.histogram(p);
            w.write_all(&(h.len() as u32).to_le_bytes())?;
            for (bin, count) in h.iter() {
                w.write_all(&bin.to_le_bytes())?;
                w.write_all(&count.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::format(format!("bad magic {magic:?}, expected SPCB")));
        }
        let version = read_u32(r, "version")?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported version {version}")));
        }
        let n_rows = read_u32(r, "n_rows")? as usize;
        let n_cols = read_u32(r, "n_cols")? as usize;
        let n_bins = read_u32(r, "n_bins")? as usize;
        let mut wbuf = [0u8; 8];
        read_exact(r, &mut wbuf, "bin width")?;
        let bin_width = f64::from_le_bytes(wbuf);
        let mut b = CubeBuilder::new(n_rows, n_cols, n_bins, bin_width);
        let mut events = Vec::new();
        for p in 0..n_rows * n_cols {
            let n = read_u32(r, "event count")? as usize;
            events.clear();
            for _ in 0..n {
                let bin = read_u32(r, "event bin")?;
                let count = read_u32(r, "event count")?;
                if count == 0 {
                    return Err(Error::Invariant {
                        row: p / n_cols,
                        col: p % n_cols,
                        msg: format!("zero count stored at bin {bin}"),
                    });
                }
                events.push((bin, count));
            }
            b.push_pixel(events.iter().copied())?;
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::format("trailing bytes after last pixel"));
        }
        b.finish()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(format!("truncated file while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
