//! Periodic d-dimensional rasters and the DFT pair.
//!
//! The forward transform uses a *positive* exponent,
//! `f̂_k = Σ_j f_j exp(+2πi j·k / n)`, with no prefactor; the inverse
//! carries the 1/|J| factor. Most FFT libraries default to the opposite
//! sign, so the wrappers here map the forward transform onto the
//! backend's inverse direction. All tangent-phase computations in this
//! crate inherit this convention.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side lengths of the periodic lattice `J = {0,…,n_i−1}^d`.
/// Each side must be even (the lattice is doubly oversampled) and ≥ 4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims(Vec<usize>);

impl Dims {
    pub fn new(sides: &[usize]) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidArgument("dims must have d ≥ 1".into()));
        }
        for &n in sides {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "side length {n} must be even and ≥ 4"
                )));
            }
        }
        Ok(Dims(sides.to_vec()))
    }

    /// Square d=2 grid, the workhorse case.
    pub fn square(side: usize) -> Result<Self> {
        Dims::new(&[side, side])
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.0
    }

    /// Number of lattice points |J|.
    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    /// Flat row-major offset of a (componentwise mod-n) index.
    pub fn flat(&self, idx: &[i64]) -> usize {
        debug_assert_eq!(idx.len(), self.d());
        let mut off = 0usize;
        for (i, &n) in self.0.iter().enumerate() {
            let n = n as i64;
            off = off * n as usize + idx[i].rem_euclid(n) as usize;
        }
        off
    }

    /// Multi-index of a flat row-major offset.
    pub fn unflat(&self, mut flat: usize) -> Vec<i64> {
        let mut idx = vec![0i64; self.d()];
        for i in (0..self.d()).rev() {
            let n = self.0[i];
            idx[i] = (flat % n) as i64;
            flat /= n;
        }
        idx
    }

    /// Flat offset of the negated index −j mod n.
    pub fn flat_neg(&self, flat: usize) -> usize {
        let idx = self.unflat(flat);
        let neg: Vec<i64> = idx.iter().map(|&x| -x).collect();
        self.flat(&neg)
    }

    /// True if every component of the index is 0 or n/2 (its own
    /// Hermitian partner).
    pub fn is_self_conjugate(&self, flat: usize) -> bool {
        self.flat_neg(flat) == flat
    }
}

/// Translation / frequency offset on the lattice, interpreted mod n.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexVector(pub Vec<i64>);

impl IndexVector {
    pub fn zero(d: usize) -> Self {
        IndexVector(vec![0; d])
    }
}

/// Real-valued raster on the periodic lattice, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    dims: Dims,
    data: Vec<f64>,
}

impl Image {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.total() {
            return Err(Error::DimMismatch(format!(
                "data length {} != |J| = {}",
                data.len(),
                dims.total()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("image contains NaN/Inf".into()));
        }
        Ok(Image { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        let n = dims.total();
        Image {
            dims,
            data: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.total());
        Image { dims, data }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, idx: &[i64]) -> f64 {
        self.data[self.dims.flat(idx)]
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn norm1(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn dist2(&self, other: &Image) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &Image) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// self + scale·other
    pub fn axpy(&self, scale: f64, other: &Image) -> Image {
        debug_assert_eq!(self.dims, other.dims);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Image::from_parts(self.dims.clone(), data)
    }

    pub fn scale(&self, s: f64) -> Image {
        Image::from_parts(self.dims.clone(), self.data.iter().map(|x| x * s).collect())
    }
}

/// Complex DFT raster indexed by k ∈ J.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    dims: Dims,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dims.total() {
            return Err(Error::DimMismatch(format!(
                "data length {} != |J| = {}",
                data.len(),
                dims.total()
            )));
        }
        Ok(Spectrum { dims, data })
    }

    pub(crate) fn from_parts(dims: Dims, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), dims.total());
        Spectrum { dims, data }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.norm()))
    }

    /// Largest relative deviation from Hermitian symmetry,
    /// max_k |x_k − conj(x_{−k})| / max|x|.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for k in 0..self.data.len() {
            let kn = self.dims.flat_neg(k);
            let diff = (self.data[k] - self.data[kn].conj()).norm();
            worst = worst.max(diff / scale);
        }
        worst
    }
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn with_plan<F: FnOnce(&Arc<dyn Fft<f64>>)>(len: usize, positive_exponent: bool, f: F) {
    PLANS.with(|cell| {
        let mut cell = cell.borrow_mut();
        let (planner, cache) = &mut *cell;
        let plan = cache
            .entry((len, positive_exponent))
            .or_insert_with(|| {
                // rustfft "inverse" is the positive-exponent direction
                let dir = if positive_exponent {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                };
                planner.plan_fft(len, dir)
            })
            .clone();
        f(&plan);
    });
}

/// In-place unnormalized n-dimensional transform along every axis.
fn fft_nd(data: &mut [Complex64], sides: &[usize], positive_exponent: bool) {
    let total: usize = sides.iter().product();
    debug_assert_eq!(data.len(), total);
    let d = sides.len();
    for axis in 0..d {
        let len = sides[axis];
        let stride: usize = sides[axis + 1..].iter().product();
        let block = len * stride;
        with_plan(len, positive_exponent, |plan| {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            let mut line = vec![Complex64::default(); len];
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    if stride == 1 {
                        plan.process_with_scratch(&mut data[base..base + len], &mut scratch);
                    } else {
                        for (t, slot) in line.iter_mut().enumerate() {
                            *slot = data[base + off + t * stride];
                        }
                        plan.process_with_scratch(&mut line, &mut scratch);
                        for (t, v) in line.iter().enumerate() {
                            data[base + off + t * stride] = *v;
                        }
                    }
                }
            }
        });
    }
}

/// Forward transform: f̂_k = Σ_j f_j exp(+2πi j·k / n), unnormalized.
pub fn dft(image: &Image) -> Spectrum {
    let mut data: Vec<Complex64> = image.data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_nd(&mut data, image.dims.sides(), true);
    Spectrum::from_parts(image.dims.clone(), data)
}

/// Relative tolerance for the Hermitian-symmetry precondition of [`idft`].
pub const HERMITIAN_TOL: f64 = 1e-8;

/// Inverse transform with the 1/|J| factor. The spectrum must be
/// Hermitian-symmetric to within `HERMITIAN_TOL` (relative); the residual
/// imaginary part is checked against the same tolerance and discarded.
pub fn idft(spectrum: &Spectrum) -> Result<Image> {
    let defect = spectrum.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::InconsistentSpectrum(format!(
            "Hermitian symmetry violated: relative defect {defect:.3e}"
        )));
    }
    let mut data = spectrum.data.clone();
    fft_nd(&mut data, spectrum.dims.sides(), false);
    let scale = 1.0 / spectrum.dims.total() as f64;
    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    for v in &data {
        max_re = max_re.max(v.re.abs());
        max_im = max_im.max(v.im.abs());
    }
    if max_re > 0.0 && max_im * scale > HERMITIAN_TOL * max_re * scale {
        return Err(Error::InconsistentSpectrum(format!(
            "imaginary residue {:.3e} above tolerance",
            max_im / max_re
        )));
    }
    let real: Vec<f64> = data.iter().map(|v| v.re * scale).collect();
    Ok(Image::from_parts(spectrum.dims.clone(), real))
}

/// Periodic translate: out_j = in_{j−v mod n}.
pub fn translate(image: &Image, v: &IndexVector) -> Image {
    let dims = image.dims.clone();
    let mut out = vec![0.0; dims.total()];
    for (flat, slot) in out.iter_mut().enumerate() {
        let mut idx = dims.unflat(flat);
        for (c, x) in idx.iter_mut().enumerate() {
            *x -= v.0[c];
        }
        *slot = image.data[dims.flat(&idx)];
    }
    Image::from_parts(dims, out)
}

/// Inversion: out_j = in_{−j mod n}.
pub fn invert_image(image: &Image) -> Image {
    let dims = image.dims.clone();
    let mut out = vec![0.0; dims.total()];
    for (flat, slot) in out.iter_mut().enumerate() {
        *slot = image.data[dims.flat_neg(flat)];
    }
    Image::from_parts(dims, out)
}

/// Periodic discrete convolution, [f∗g]_j = Σ_k f_{j−k} g_k,
/// computed spectrally.
pub fn convolve(f: &Image, g: &Image) -> Result<Image> {
    if f.dims != g.dims {
        return Err(Error::DimMismatch("convolve: dims differ".into()));
    }
    let fh = dft(f);
    let gh = dft(g);
    let prod: Vec<Complex64> = fh
        .data
        .iter()
        .zip(&gh.data)
        .map(|(a, b)| a * b)
        .collect();
    idft(&Spectrum::from_parts(f.dims.clone(), prod))
}

/// Autocorrelation [F⋆F]_j = Σ_l f_l f_{j+l}; its DFT is |f̂|².
pub fn autocorrelation(image: &Image) -> Image {
    let fh = dft(image);
    let sq: Vec<Complex64> = fh
        .data
        .iter()
        .map(|a| Complex64::new(a.norm_sqr(), 0.0))
        .collect();
    // |f̂|² is real and even, so the inverse cannot fail
    idft(&Spectrum::from_parts(image.dims.clone(), sq)).expect("autocorrelation spectrum is Hermitian")
}
