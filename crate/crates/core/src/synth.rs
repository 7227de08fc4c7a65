//! Generators for the synthetic image families and the two
//! non-uniqueness constructions, plus the protocol modifications
//! (sharp masks, external reference objects) used to break them.
//!
//! The lattice maps to continuous coordinates by x = j/N (N = half the
//! side), so a centered N×N pixel box is the unit square and every
//! generated object has small support by construction.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{convolve, dft, invert_image, translate, Dims, Image, IndexVector};
use crate::measure::{pad_support, support_of, true_error, SupportMask};

fn default_count_range() -> (usize, usize) {
    (3, 10)
}
fn default_radius_range() -> (f64, f64) {
    (0.03, 0.15)
}
fn default_intensity_range() -> (f64, f64) {
    (0.5, 1.5)
}

/// Random-disc parameters (coordinates in units of the support box,
/// which spans one unit per axis).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiscParams {
    #[serde(default = "default_count_range")]
    pub count_range: (usize, usize),
    #[serde(default = "default_radius_range")]
    pub radius_range: (f64, f64),
    #[serde(default = "default_intensity_range")]
    pub intensity_range: (f64, f64),
}

impl Default for DiscParams {
    fn default() -> Self {
        DiscParams {
            count_range: default_count_range(),
            radius_range: default_radius_range(),
            intensity_range: default_intensity_range(),
        }
    }
}

/// One coherent packet: a Gaussian envelope times an oscillation,
/// f_j = exp(−σ²|j−l|²)·cos(⟨κ, j−l⟩) with j in pixels and κ in
/// radians per pixel.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub sigma: f64,
    pub center: Vec<i64>,
    pub wavevector: Vec<f64>,
}

/// Scene description; serializes to the JSON consumed by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub family: Family,
    pub dims: Vec<usize>,
    pub seed: u64,
    /// Pixel box (per-axis origin and side) that must contain the
    /// object; defaults to the centered half-period box.
    #[serde(default)]
    pub support_box: Option<PixelBox>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Discs {
        #[serde(default)]
        params: DiscParams,
    },
    RadialPower {
        k: u32,
        #[serde(default)]
        params: DiscParams,
    },
    SmoothedDiscs {
        k: u32,
        #[serde(default)]
        params: DiscParams,
    },
    Microlocal {
        #[serde(default)]
        packets: Vec<Packet>,
        #[serde(default)]
        translations: Vec<Vec<i64>>,
    },
    ReduciblePair,
    InversionSymmetric {
        support_size: usize,
    },
}

/// Axis-aligned pixel rectangle (origin per axis, side per axis).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct PixelBox {
    pub origin: Vec<i64>,
    pub sides: Vec<usize>,
}

impl PixelBox {
    /// Centered box with half-period sides: the default object region.
    pub fn centered_half(dims: &Dims) -> Self {
        PixelBox {
            origin: dims.sides().iter().map(|&n| n as i64 / 4).collect(),
            sides: dims.sides().iter().map(|&n| n / 2).collect(),
        }
    }
}

pub enum Generated {
    Single(Image),
    Pair(Image, Image),
}

/// Generates the scene a spec describes. Deterministic per spec.
pub fn generate(spec: &SceneSpec) -> Result<Generated> {
    let dims = Dims::new(&spec.dims)?;
    let bx = spec
        .support_box
        .clone()
        .unwrap_or_else(|| PixelBox::centered_half(&dims));
    match &spec.family {
        Family::Discs { params } => Ok(Generated::Single(gen_radial_power(
            &dims, spec.seed, 0, params, &bx,
        )?)),
        Family::RadialPower { k, params } => Ok(Generated::Single(gen_radial_power(
            &dims, spec.seed, *k, params, &bx,
        )?)),
        Family::SmoothedDiscs { k, params } => {
            let hard = gen_radial_power(&dims, spec.seed, 0, params, &bx)?;
            Ok(Generated::Single(if *k == 0 {
                hard
            } else {
                smooth(&hard, *k)?
            }))
        }
        Family::Microlocal {
            packets,
            translations,
        } => {
            let packets = if packets.is_empty() {
                default_microlocal_packets(&dims)
            } else {
                packets.clone()
            };
            let translations = if translations.is_empty() {
                default_microlocal_translations(packets.len())
            } else {
                translations.iter().cloned().map(IndexVector).collect()
            };
            let (a, b) = gen_microlocal_pair(&dims, &packets, &translations)?;
            Ok(Generated::Pair(a, b))
        }
        Family::ReduciblePair => {
            let (a, b) = gen_reducible_pair(&dims, spec.seed)?;
            Ok(Generated::Pair(a, b))
        }
        Family::InversionSymmetric { support_size } => Ok(Generated::Single(
            gen_inversion_symmetric(&dims, spec.seed, *support_size)?,
        )),
    }
}

/// Point samples of Σ_i α_i χ_{[0,r_i]}(‖x−c_i‖)·‖x−c_i‖^k on the grid
/// x = j/N; k = 0 gives piecewise-constant discs (a hard object). All
/// discs are placed strictly inside the support box.
pub fn gen_radial_power(
    dims: &Dims,
    seed: u64,
    k: u32,
    params: &DiscParams,
    bx: &PixelBox,
) -> Result<Image> {
    validate_box(dims, bx)?;
    let (clo, chi) = params.count_range;
    let (rlo, rhi) = params.radius_range;
    let (ilo, ihi) = params.intensity_range;
    if clo < 1 || chi < clo || rlo <= 0.0 || rhi < rlo || ilo <= 0.0 || ihi < ilo {
        return Err(Error::InvalidArgument("bad disc parameter ranges".into()));
    }
    if 2.0 * rhi >= 1.0 {
        return Err(Error::InfeasibleScene(
            "disc diameter exceeds the support box".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(clo..=chi);
    // disc geometry in box units; one unit = the box side on each axis
    struct Disc {
        center: Vec<f64>,
        radius: f64,
        alpha: f64,
    }
    let d = dims.d();
    let discs: Vec<Disc> = (0..count)
        .map(|_| {
            let radius = rng.gen_range(rlo..=rhi);
            let center = (0..d).map(|_| rng.gen_range(radius..1.0 - radius)).collect();
            let alpha = rng.gen_range(ilo..=ihi);
            Disc {
                center,
                radius,
                alpha,
            }
        })
        .collect();
    let mut img = Image::zeros(dims.clone());
    for flat in 0..dims.total() {
        let j = dims.unflat(flat);
        // pixel position in box units
        let x: Vec<f64> = (0..d)
            .map(|c| (j[c] - bx.origin[c]) as f64 / bx.sides[c] as f64)
            .collect();
        if x.iter().any(|&v| !(0.0..1.0).contains(&v)) {
            continue;
        }
        let mut acc = 0.0;
        for disc in &discs {
            let dist = x
                .iter()
                .zip(&disc.center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist <= disc.radius {
                acc += disc.alpha
                    * if k == 0 {
                        1.0
                    } else {
                        dist.powi(k as i32)
                    };
            }
        }
        img.data_mut()[flat] = acc;
    }
    Ok(img)
}

/// Random hard discs (the k = 0 radial family).
pub fn gen_discs(dims: &Dims, seed: u64, params: &DiscParams, bx: &PixelBox) -> Result<Image> {
    gen_radial_power(dims, seed, 0, params, bx)
}

fn validate_box(dims: &Dims, bx: &PixelBox) -> Result<()> {
    if bx.origin.len() != dims.d() || bx.sides.len() != dims.d() {
        return Err(Error::DimMismatch("support box dimension".into()));
    }
    for c in 0..dims.d() {
        if bx.sides[c] == 0 || bx.sides[c] > dims.sides()[c] / 2 {
            return Err(Error::InfeasibleScene(format!(
                "support box side {} on axis {c} exceeds half the period",
                bx.sides[c]
            )));
        }
    }
    Ok(())
}

/// The sampled Gaussian smoothing kernel of smoothness level k ≥ 1:
/// g_j ∝ exp(−16‖j‖²/(k+1)²) with j the centered (folded) pixel
/// offset, normalized to unit ℓ1 mass. Inversion symmetric.
pub fn gaussian_kernel(k: u32, dims: &Dims) -> Result<Image> {
    if k < 1 {
        return Err(Error::InvalidArgument("kernel smoothness k must be ≥ 1".into()));
    }
    let mut img = Image::zeros(dims.clone());
    let denom = (k as f64 + 1.0) * (k as f64 + 1.0);
    let mut mass = 0.0;
    for flat in 0..dims.total() {
        let j = dims.unflat(flat);
        let r2: f64 = j
            .iter()
            .zip(dims.sides())
            .map(|(&jc, &nc)| {
                let f = if jc > nc as i64 / 2 { jc - nc as i64 } else { jc };
                (f * f) as f64
            })
            .sum();
        let v = (-16.0 * r2 / denom).exp();
        img.data_mut()[flat] = v;
        mass += v;
    }
    for v in img.data_mut() {
        *v /= mass;
    }
    Ok(img)
}

/// Convolution with the level-k Gaussian kernel.
pub fn smooth(image: &Image, k: u32) -> Result<Image> {
    convolve(image, &gaussian_kernel(k, image.dims())?)
}

/// The four standard packets: a plain Gaussian plus three modulated
/// ones, all centered mid-grid. The envelope width makes the common
/// support a disk of diameter ≈475 pixels at the 1e−12 level on a
/// 1024² grid, scaling with the grid.
pub fn default_microlocal_packets(dims: &Dims) -> Vec<Packet> {
    let center: Vec<i64> = dims.sides().iter().map(|&n| n as i64 / 2).collect();
    // e^{−σ²r²} = 1e−12 at r = 237.5·(n/1024)
    let scale = dims.sides()[0] as f64 / 1024.0;
    let sigma = (1e12f64.ln()).sqrt() / (237.5 * scale);
    let d = dims.d();
    let embed = |v: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; d];
        for (i, &x) in v.iter().enumerate().take(d) {
            w[i] = x;
        }
        w
    };
    vec![
        Packet {
            sigma,
            center: center.clone(),
            wavevector: vec![0.0; d],
        },
        Packet {
            sigma,
            center: center.clone(),
            wavevector: embed(&[70.0, 60.0]),
        },
        Packet {
            sigma,
            center: center.clone(),
            wavevector: embed(&[-60.0, 70.0]),
        },
        Packet {
            sigma,
            center,
            wavevector: embed(&[200.0, 200.0]),
        },
    ]
}

pub fn default_microlocal_translations(count: usize) -> Vec<IndexVector> {
    let base = [
        vec![0i64, 0],
        vec![-8, 0],
        vec![0, -8],
        vec![8, 8],
    ];
    (0..count)
        .map(|i| IndexVector(base[i % base.len()].clone()))
        .collect()
}

/// Samples one packet on the grid (periodically folded displacement).
pub fn sample_packet(dims: &Dims, p: &Packet) -> Result<Image> {
    if p.center.len() != dims.d() || p.wavevector.len() != dims.d() {
        return Err(Error::DimMismatch("packet dimension".into()));
    }
    let mut img = Image::zeros(dims.clone());
    for flat in 0..dims.total() {
        let j = dims.unflat(flat);
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for c in 0..dims.d() {
            let n = dims.sides()[c] as i64;
            let mut dj = (j[c] - p.center[c]).rem_euclid(n);
            if dj > n / 2 {
                dj -= n;
            }
            r2 += (dj * dj) as f64;
            phase += p.wavevector[c] * dj as f64;
        }
        img.data_mut()[flat] = (-p.sigma * p.sigma * r2).exp() * phase.cos();
    }
    Ok(img)
}

/// Verifies pairwise spectral disjointness of the packets at the given
/// relative threshold. Returns the overlapping pairs on failure.
pub fn check_spectral_disjointness(
    dims: &Dims,
    packets: &[Packet],
    threshold_rel: f64,
) -> Result<Vec<Image>> {
    let samples: Vec<Image> = packets
        .iter()
        .map(|p| sample_packet(dims, p))
        .collect::<Result<_>>()?;
    let spectra: Vec<Vec<Complex64>> = samples.iter().map(|s| dft(s).data().to_vec()).collect();
    let maxima: Vec<f64> = spectra
        .iter()
        .map(|s| s.iter().fold(0.0f64, |m, v| m.max(v.norm())))
        .collect();
    let global_max = maxima.iter().cloned().fold(0.0f64, f64::max);
    let cut = threshold_rel * global_max;
    let mut overlaps = Vec::new();
    for a in 0..packets.len() {
        for b in a + 1..packets.len() {
            let hit = (0..dims.total())
                .any(|k| spectra[a][k].norm() > cut && spectra[b][k].norm() > cut);
            if hit {
                overlaps.push((a, b));
            }
        }
    }
    if overlaps.is_empty() {
        Ok(samples)
    } else {
        Err(Error::SpectralOverlap(overlaps))
    }
}

/// Default relative threshold for packet spectral disjointness.
pub const SPECTRAL_DISJOINT_THRESHOLD: f64 = 1e-13;

/// The microlocal pair: F_a = Σ F_l and F_b = Σ F_l^{(v_l)}. Both
/// share magnitude data to roughly the disjointness threshold while
/// being far from trivial associates of each other.
pub fn gen_microlocal_pair(
    dims: &Dims,
    packets: &[Packet],
    translations: &[IndexVector],
) -> Result<(Image, Image)> {
    if packets.len() != translations.len() {
        return Err(Error::DimMismatch("one translation per packet".into()));
    }
    let samples = check_spectral_disjointness(dims, packets, SPECTRAL_DISJOINT_THRESHOLD)?;
    let mut fa = Image::zeros(dims.clone());
    let mut fb = Image::zeros(dims.clone());
    for (s, v) in samples.iter().zip(translations) {
        fa = fa.axpy(1.0, s);
        fb = fb.axpy(1.0, &translate(s, v));
    }
    Ok((fa, fb))
}

/// General signed/translated/inverted combination of the packets.
pub fn gen_microlocal_combination(
    dims: &Dims,
    packets: &[Packet],
    translations: &[IndexVector],
    signs: &[i8],
    inverted: &[bool],
) -> Result<Image> {
    if packets.len() != translations.len()
        || packets.len() != signs.len()
        || packets.len() != inverted.len()
    {
        return Err(Error::DimMismatch("combination parameter lengths".into()));
    }
    let samples = check_spectral_disjointness(dims, packets, SPECTRAL_DISJOINT_THRESHOLD)?;
    let mut out = Image::zeros(dims.clone());
    for (((s, v), &sg), &inv) in samples.iter().zip(translations).zip(signs).zip(inverted) {
        let s = if inv { invert_image(s) } else { s.clone() };
        out = out.axpy(if sg < 0 { -1.0 } else { 1.0 }, &translate(&s, v));
    }
    Ok(out)
}

/// A reducible-spectrum pair: non-negative factors F₁, F₂ whose
/// supports are inversion symmetric (about their own centers) but
/// whose values are not. F = F₁∗F₂ and F′ = F₁∗(F̌₂ translated back
/// over F₂'s box) then share magnitude data exactly — |f̂₁ĝ| is blind
/// to conjugating ĝ — and share bounding rectangles, yet are not
/// trivial associates.
pub fn gen_reducible_pair(dims: &Dims, seed: u64) -> Result<(Image, Image)> {
    let d = dims.d();
    let min_side = *dims.sides().iter().min().unwrap();
    // factor half-width: two factor boxes of side 2w+1 convolve to a box
    // of side 4w+1, which must stay within the half period
    let w = ((min_side / 2 - 1) / 4).clamp(1, 6) as i64;
    for attempt in 0..32 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt * 0x9E37_79B9));
        let center: Vec<i64> = dims.sides().iter().map(|&n| n as i64 / 2).collect();
        let draw_factor = |rng: &mut ChaCha8Rng| -> Image {
            let mut img = Image::zeros(dims.clone());
            // choose orbits {o, −o} of box offsets; equal membership,
            // independent values
            let mut offsets = vec![vec![0i64; d]];
            enumerate_box_offsets(d, w, &mut offsets);
            for off in &offsets {
                let neg: Vec<i64> = off.iter().map(|&x| -x).collect();
                if neg < *off {
                    continue; // handle each orbit once
                }
                if rng.gen_bool(0.6) {
                    let j: Vec<i64> = center.iter().zip(off).map(|(a, b)| a + b).collect();
                    let jn: Vec<i64> = center.iter().zip(&neg).map(|(a, b)| a + b).collect();
                    img.data_mut()[dims.flat(&j)] = rng.gen_range(0.5..1.5);
                    let v = rng.gen_range(0.5..1.5);
                    if jn != j {
                        img.data_mut()[dims.flat(&jn)] = v;
                    }
                }
            }
            img
        };
        let f1 = draw_factor(&mut rng);
        let f2 = draw_factor(&mut rng);
        if f1.norm2() == 0.0 || f2.norm2() == 0.0 {
            continue;
        }
        let f = convolve(&f1, &f2)?;
        // F̌₂ is symmetric about −center; translating by 2·center puts
        // its (inversion-symmetric) support back on F₂'s box
        let back = IndexVector(center.iter().map(|&c| 2 * c).collect());
        let g2 = translate(&invert_image(&f2), &back);
        let fp = convolve(&f1, &g2)?;
        let (dist, _) = true_error(&fp, &f)?;
        if dist > 0.05 * f.norm2() {
            return Ok((f, fp));
        }
    }
    Err(Error::InfeasibleScene(
        "reducible pair: factors kept drawing inversion-symmetric values".into(),
    ))
}

fn enumerate_box_offsets(d: usize, w: i64, out: &mut Vec<Vec<i64>>) {
    out.clear();
    let side = (2 * w + 1) as usize;
    let total = side.pow(d as u32);
    for mut t in 0..total {
        let mut off = vec![0i64; d];
        for o in off.iter_mut() {
            *o = (t % side) as i64 - w;
            t /= side;
        }
        out.push(off);
    }
}

/// Entrywise product with a sharp cut-off mask; also returns the
/// 1-pixel padded mask the solver should use as its support estimate.
pub fn apply_sharp_mask(image: &Image, mask: &SupportMask) -> (Image, SupportMask) {
    let masked = crate::project::project_support(mask, image);
    (masked, pad_support(mask, 1))
}

/// Adds a known hard reference object, translated by `offset`, outside
/// the object's support. Returns the combined image and the holography
/// support estimate: the 1-pixel padded bounding rectangle of the
/// object's support at the absolute threshold `obj_support_eps`, plus
/// the exact (unpadded) reference support. Loosening the reference
/// support weakens the transversality the reference provides, so the
/// estimate keeps it exact.
pub fn add_reference_object(
    image: &Image,
    reference: &Image,
    offset: &IndexVector,
    obj_support_eps: f64,
) -> Result<(Image, SupportMask)> {
    let moved = translate(reference, offset);
    let obj_support = support_of(image, obj_support_eps.max(f64::MIN_POSITIVE));
    let ref_support = support_of(&moved, f64::MIN_POSITIVE);
    let overlap = obj_support
        .bits()
        .iter()
        .zip(ref_support.bits())
        .any(|(&a, &b)| a && b);
    if overlap {
        return Err(Error::InfeasibleScene(
            "reference object overlaps the specimen support".into(),
        ));
    }
    let combined = image.axpy(1.0, &moved);
    let mask = pad_support(&bounding_box_mask(&obj_support), 1).union(&ref_support);
    Ok((combined, mask))
}

/// Filled axis-aligned (periodic) bounding rectangle of a mask: per
/// axis, the shortest cyclic interval covering the occupied
/// coordinates.
pub fn bounding_box_mask(mask: &SupportMask) -> SupportMask {
    let dims = mask.dims().clone();
    if mask.popcount() == 0 {
        return mask.clone();
    }
    let mut intervals = Vec::new(); // (start, len) per axis
    for axis in 0..dims.d() {
        let n = dims.sides()[axis];
        let mut occupied = vec![false; n];
        for (flat, &b) in mask.bits().iter().enumerate() {
            if b {
                occupied[dims.unflat(flat)[axis] as usize] = true;
            }
        }
        // longest cyclic run of empty slots; the box is its complement
        let mut best_gap = 0usize;
        let mut best_end = 0usize;
        let mut cur = 0usize;
        for i in 0..2 * n {
            if occupied[i % n] {
                cur = 0;
            } else {
                cur += 1;
                if cur.min(n) > best_gap {
                    best_gap = cur.min(n);
                    best_end = i % n;
                }
            }
        }
        let start = (best_end + 1) % n;
        intervals.push((start, n - best_gap));
    }
    let mut out = SupportMask::empty(dims.clone());
    for flat in 0..dims.total() {
        let j = dims.unflat(flat);
        let inside = (0..dims.d()).all(|c| {
            let (start, len) = intervals[c];
            let rel = (j[c] as usize + dims.sides()[c] - start) % dims.sides()[c];
            rel < len
        });
        if inside {
            out.bits_mut()[flat] = true;
        }
    }
    out
}

/// An asymmetric L-shaped constant block anchored at the origin: the
/// default "known hard object" for holography.
pub fn l_shaped_reference(dims: &Dims, arm: usize, thickness: usize, value: f64) -> Result<Image> {
    if dims.d() != 2 {
        return Err(Error::InvalidArgument("L-shaped reference is 2-d".into()));
    }
    if thickness == 0 || arm <= thickness {
        return Err(Error::InvalidArgument("need arm > thickness ≥ 1".into()));
    }
    let mut img = Image::zeros(dims.clone());
    for i in 0..arm as i64 {
        for j in 0..thickness as i64 {
            img.data_mut()[dims.flat(&[i, j])] = value;
        }
    }
    for j in 0..arm as i64 {
        for i in 0..thickness as i64 {
            img.data_mut()[dims.flat(&[i, j])] = value;
        }
    }
    Ok(img)
}

/// Random image with g_j = g_{−j} and exactly `support_size` nonzero
/// pixels (its DFT is real).
pub fn gen_inversion_symmetric(dims: &Dims, seed: u64, support_size: usize) -> Result<Image> {
    let total = dims.total();
    if support_size > total {
        return Err(Error::InvalidArgument("support_size exceeds |J|".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::zeros(dims.clone());
    let self_paired: Vec<usize> = (0..total).filter(|&f| dims.is_self_conjugate(f)).collect();
    let mut placed = 0usize;
    let mut guard = 0usize;
    while placed < support_size {
        guard += 1;
        if guard > 100 * total {
            return Err(Error::InfeasibleScene(
                "could not hit the requested support size".into(),
            ));
        }
        let need_single = support_size - placed == 1;
        if need_single {
            // consume a self-paired pixel to fix parity
            let Some(&f) = self_paired.iter().find(|&&f| img.data()[f] == 0.0) else {
                return Err(Error::InfeasibleScene(
                    "odd support size but no free self-paired pixel".into(),
                ));
            };
            img.data_mut()[f] = rng.gen_range(0.5..1.5);
            placed += 1;
            continue;
        }
        let f = rng.gen_range(0..total);
        let fneg = dims.flat_neg(f);
        if f == fneg || img.data()[f] != 0.0 {
            continue;
        }
        let v = rng.gen_range(0.5..1.5);
        img.data_mut()[f] = v;
        img.data_mut()[fneg] = v;
        placed += 2;
    }
    Ok(img)
}
