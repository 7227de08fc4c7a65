//! PRIMG raster files.
//!
//! Layout: magic `PRIMG\0`, then little-endian `u32 version` (=1),
//! `u32 d`, `u32 dims[d]`, `u8 kind` (0 = real f64, 1 = complex f64
//! interleaved re,im), payload row-major. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Dims, Image, Spectrum};

const MAGIC: &[u8; 6] = b"PRIMG\0";
const VERSION: u32 = 1;

fn write_header(w: &mut impl std::io::Write, dims: &Dims, kind: u8) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dims.d() as u32).to_le_bytes())?;
    for &n in dims.sides() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&[kind])?;
    Ok(())
}

fn read_header(r: &mut impl std::io::Read) -> Result<(Dims, u8)> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadFormat("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::BadFormat(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    if d == 0 || d > 8 {
        return Err(Error::BadFormat(format!("implausible dimension count {d}")));
    }
    let mut sides = Vec::with_capacity(d);
    for _ in 0..d {
        r.read_exact(&mut b4)?;
        sides.push(u32::from_le_bytes(b4) as usize);
    }
    let dims = Dims::new(&sides)
        .map_err(|e| Error::BadFormat(format!("bad dims in header: {e}")))?;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    if kind[0] > 1 {
        return Err(Error::BadFormat(format!("unknown kind {}", kind[0])));
    }
    Ok((dims, kind[0]))
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, image.dims(), 0)?;
    for &x in image.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum(path: impl AsRef<Path>, spectrum: &Spectrum) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, spectrum.dims(), 1)?;
    for v in spectrum.data() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub enum Raster {
    Real(Image),
    Complex(Spectrum),
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let mut r = BufReader::new(File::open(path)?);
    let (dims, kind) = read_header(&mut r)?;
    let total = dims.total();
    let mut b8 = [0u8; 8];
    match kind {
        0 => {
            let mut data = Vec::with_capacity(total);
            for _ in 0..total {
                r.read_exact(&mut b8)?;
                data.push(f64::from_le_bytes(b8));
            }
            expect_eof(&mut r)?;
            Ok(Raster::Real(Image::new(dims, data)?))
        }
        _ => {
            let mut data = Vec::with_capacity(total);
            for _ in 0..total {
                r.read_exact(&mut b8)?;
                let re = f64::from_le_bytes(b8);
                r.read_exact(&mut b8)?;
                let im = f64::from_le_bytes(b8);
                data.push(Complex64::new(re, im));
            }
            expect_eof(&mut r)?;
            Ok(Raster::Complex(Spectrum::new(dims, data)?))
        }
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    match read_raster(path)? {
        Raster::Real(img) => Ok(img),
        Raster::Complex(_) => Err(Error::BadFormat("expected real raster, found complex".into())),
    }
}

pub fn read_spectrum(path: impl AsRef<Path>) -> Result<Spectrum> {
    match read_raster(path)? {
        Raster::Complex(s) => Ok(s),
        Raster::Real(_) => Err(Error::BadFormat("expected complex raster, found real".into())),
    }
}

fn expect_eof(r: &mut impl std::io::Read) -> Result<()> {
    let mut buf = [0u8; 1];
    match r.read(&mut buf)? {
        0 => Ok(()),
        _ => Err(Error::BadFormat("trailing bytes after payload".into())),
    }
}
