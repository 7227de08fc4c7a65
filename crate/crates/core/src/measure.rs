//! The magnitude-DFT measurement, supports, and trivial-associate
//! bookkeeping.
//!
//! The measurement sends a real image to the entrywise modulus of its
//! DFT. Periodic translations and the inversion `f_j ↦ f_{−j}` leave
//! the measurement unchanged — the 2·|J| images so obtained are the
//! *trivial associates*, and error metrics must quotient them out.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft, idft, invert_image, translate, Dims, Image, IndexVector, Spectrum};

/// Non-negative moduli `a_k = |f̂_k|`, k ∈ J.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeData {
    dims: Dims,
    data: Vec<f64>,
}

impl MagnitudeData {
    /// Validates non-negativity and the evenness `a_{−k} = a_k` that any
    /// real image's data must satisfy (to 1e−12 relative).
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.total() {
            return Err(Error::DimMismatch("magnitude data length != |J|".into()));
        }
        if data.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InconsistentData("negative or non-finite entry".into()));
        }
        let scale = data.iter().cloned().fold(0.0f64, f64::max);
        for k in 0..data.len() {
            let kn = dims.flat_neg(k);
            if (data[k] - data[kn]).abs() > 1e-12 * scale {
                return Err(Error::InconsistentData(format!(
                    "a_k != a_(−k) at flat index {k}"
                )));
            }
        }
        Ok(MagnitudeData { dims, data })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0f64, f64::max)
    }

    pub fn dist2(&self, other: &MagnitudeData) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Boolean raster encoding a support set S ⊂ J.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl SupportMask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.total() {
            return Err(Error::DimMismatch("mask length != |J|".into()));
        }
        Ok(SupportMask { dims, bits })
    }

    pub fn full(dims: Dims) -> Self {
        let n = dims.total();
        SupportMask {
            dims,
            bits: vec![true; n],
        }
    }

    pub fn empty(dims: Dims) -> Self {
        let n = dims.total();
        SupportMask {
            dims,
            bits: vec![false; n],
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Flat indices of the set pixels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn contains(&self, other: &SupportMask) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(&a, &b)| a || !b)
    }

    pub fn union(&self, other: &SupportMask) -> SupportMask {
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        SupportMask {
            dims: self.dims.clone(),
            bits,
        }
    }

    /// Whether the set fits (periodically) in a box with every side
    /// length ≤ half the period — the small-support condition.
    pub fn has_small_support(&self) -> bool {
        if self.popcount() == 0 {
            return true;
        }
        let dims = &self.dims;
        for axis in 0..dims.d() {
            let n = dims.sides()[axis];
            let mut occupied = vec![false; n];
            for (flat, &b) in self.bits.iter().enumerate() {
                if b {
                    occupied[dims.unflat(flat)[axis] as usize] = true;
                }
            }
            // shortest periodic window covering the occupied coordinates:
            // n minus the longest run of empty slots (cyclically)
            let mut longest_gap = 0usize;
            let mut cur = 0usize;
            for i in 0..2 * n {
                if occupied[i % n] {
                    cur = 0;
                } else {
                    cur += 1;
                    longest_gap = longest_gap.max(cur.min(n));
                }
            }
            if n - longest_gap > n / 2 {
                return false;
            }
        }
        true
    }
}

/// `a_k = |f̂_k|`.
pub fn measure(image: &Image) -> MagnitudeData {
    let s = dft(image);
    MagnitudeData {
        dims: image.dims().clone(),
        data: s.data().iter().map(|v| v.norm()).collect(),
    }
}

/// Mask of pixels with |f_j| ≥ eps.
pub fn support_of(image: &Image, eps: f64) -> SupportMask {
    SupportMask {
        dims: image.dims().clone(),
        bits: image.data().iter().map(|&x| x.abs() >= eps).collect(),
    }
}

/// Periodic ℓ∞ dilation by p pixels.
pub fn pad_support(mask: &SupportMask, p: usize) -> SupportMask {
    if p == 0 {
        return mask.clone();
    }
    let dims = mask.dims.clone();
    // dilate one axis at a time: a p-ball in ℓ∞ is a product of intervals
    let mut bits = mask.bits.clone();
    for axis in 0..dims.d() {
        let n = dims.sides()[axis] as i64;
        let reach = (p as i64).min(n / 2); // beyond half the period the axis saturates
        let mut next = vec![false; bits.len()];
        for (flat, slot) in next.iter_mut().enumerate() {
            let idx = dims.unflat(flat);
            'probe: for off in -reach..=reach {
                let mut probe = idx.clone();
                probe[axis] += off;
                if bits[dims.flat(&probe)] {
                    *slot = true;
                    break 'probe;
                }
            }
        }
        bits = next;
    }
    SupportMask { dims, bits }
}

/// A trivial associate: `invert` first (if set), then translate by `v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Associate {
    pub v: IndexVector,
    pub inverted: bool,
}

pub fn apply_associate(image: &Image, assoc: &Associate) -> Image {
    let base = if assoc.inverted {
        invert_image(image)
    } else {
        image.clone()
    };
    translate(&base, &assoc.v)
}

/// Minimum ℓ2 distance from `recon` to any trivial associate of
/// `reference`, with the minimizing associate.
///
/// Alignment by FFT cross-correlation: for each candidate reference g
/// (the reference and its inversion), ‖r − g^{(v)}‖² =
/// ‖r‖² + ‖g‖² − 2·[r ⋆ g]_v, so the best shifts maximize the
/// cross-correlation, which one inverse transform delivers for all v
/// at once. Exact distances are then evaluated at the top candidates.
pub fn true_error(recon: &Image, reference: &Image) -> Result<(f64, Associate)> {
    if recon.dims() != reference.dims() {
        return Err(Error::DimMismatch("true_error: dims differ".into()));
    }
    let dims = recon.dims().clone();
    let total = dims.total();
    let rn2 = recon.data().iter().map(|x| x * x).sum::<f64>();
    let rhat = dft(recon);

    let mut best = (f64::INFINITY, Associate { v: IndexVector::zero(dims.d()), inverted: false });
    for inverted in [false, true] {
        let g = if inverted {
            invert_image(reference)
        } else {
            reference.clone()
        };
        let gn2 = g.data().iter().map(|x| x * x).sum::<f64>();
        // cross-correlation c_v = Σ_j r_j g_{j−v}: spectrum r̂_k conj(ĝ_k)
        let ghat = dft(&g);
        let prod: Vec<Complex64> = rhat
            .data()
            .iter()
            .zip(ghat.data())
            .map(|(a, b)| a * b.conj())
            .collect();
        let corr = idft(&Spectrum::new(dims.clone(), prod)?)?;
        // a handful of top correlation peaks guards against numerical ties
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| corr.data()[b].partial_cmp(&corr.data()[a]).unwrap());
        for &flat in order.iter().take(8.min(total)) {
            let d2 = (rn2 + gn2 - 2.0 * corr.data()[flat]).max(0.0);
            let d = d2.sqrt();
            if d < best.0 {
                best = (
                    d,
                    Associate {
                        v: IndexVector(dims.unflat(flat)),
                        inverted,
                    },
                );
            }
        }
    }
    // exact distance at the chosen associate (correlation arithmetic can
    // lose a few digits near zero)
    let aligned = apply_associate(reference, &best.1);
    best.0 = recon.dist2(&aligned);
    Ok(best)
}
