//! Closest-point maps onto the magnitude torus and the auxiliary
//! constraint sets (support subspace, non-negative orthant, ℓ1 ball),
//! plus the reflection operator used by the hybrid map.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{dft, idft, Image, Spectrum};
use crate::measure::{MagnitudeData, SupportMask};

/// Constraint set B for the feasibility problem 𝕋_a ∩ B.
#[derive(Clone, Debug)]
pub enum ConstraintSet {
    /// Linear subspace of images vanishing off the mask.
    Support(SupportMask),
    /// Non-negative orthant.
    NonNegative,
    /// ℓ1 ball of the given radius (> 0).
    L1Ball(f64),
    /// Non-negative orthant intersected with a support subspace.
    SupportNonNegative(SupportMask),
}

impl ConstraintSet {
    pub fn project(&self, image: &Image) -> Image {
        match self {
            ConstraintSet::Support(mask) => project_support(mask, image),
            ConstraintSet::NonNegative => project_nonneg(image),
            ConstraintSet::L1Ball(r) => project_l1ball(*r, image),
            ConstraintSet::SupportNonNegative(mask) => {
                project_nonneg(&project_support(mask, image))
            }
        }
    }

    /// Linear subspaces make the hybrid map a Douglas–Rachford map.
    pub fn is_linear(&self) -> bool {
        matches!(self, ConstraintSet::Support(_))
    }
}

/// Modulus threshold below which a spectral coefficient counts as zero
/// and its phase factor is taken to be 1.
const ZERO_MODULUS: f64 = 1e-300;

/// Closest point on the magnitude torus 𝕋_a: keep the phase of each
/// DFT coefficient, replace its modulus with the datum.
pub fn project_torus(data: &MagnitudeData, image: &Image) -> Result<Image> {
    if data.dims() != image.dims() {
        return Err(Error::DimMismatch("project_torus: dims differ".into()));
    }
    let s = dft(image);
    let out: Vec<Complex64> = s
        .data()
        .iter()
        .zip(data.data())
        .map(|(v, &a)| {
            let m = v.norm();
            if m < ZERO_MODULUS {
                Complex64::new(a, 0.0)
            } else {
                v * (a / m)
            }
        })
        .collect();
    idft(&Spectrum::new(image.dims().clone(), out)?)
}

/// Orthogonal projection onto the support subspace B_S.
pub fn project_support(mask: &SupportMask, image: &Image) -> Image {
    debug_assert_eq!(mask.dims(), image.dims());
    let data = image
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&x, &b)| if b { x } else { 0.0 })
        .collect();
    Image::new(image.dims().clone(), data).expect("masking preserves validity")
}

/// Entrywise clamp onto the non-negative orthant B_+.
pub fn project_nonneg(image: &Image) -> Image {
    let data = image.data().iter().map(|&x| x.max(0.0)).collect();
    Image::new(image.dims().clone(), data).expect("clamp preserves validity")
}

/// Exact Euclidean projection onto the ℓ1 ball of the given radius,
/// by soft-thresholding at the level determined from the sorted
/// magnitudes (non-iterative).
pub fn project_l1ball(radius: f64, image: &Image) -> Image {
    assert!(radius > 0.0, "ℓ1-ball radius must be positive");
    if image.norm1() <= radius {
        return image.clone();
    }
    let mut mags: Vec<f64> = image.data().iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // largest m with mags[m−1] > (Σ_{i<m} mags[i] − radius)/m; threshold
    // θ = (prefix − radius)/m then shrinks every entry toward zero
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        prefix += m;
        let cand = (prefix - radius) / (i + 1) as f64;
        if m > cand {
            theta = cand;
        } else {
            break;
        }
    }
    let data = image
        .data()
        .iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect();
    Image::new(image.dims().clone(), data).expect("shrinkage preserves validity")
}

/// Reflection R(F) = 2·P(F) − F across the projection's target set.
pub fn reflect(project: impl Fn(&Image) -> Image, image: &Image) -> Image {
    reflect_from(&project(image), image)
}

/// Reflection given an already-computed projection value.
pub fn reflect_from(projected: &Image, image: &Image) -> Image {
    projected.scale(2.0).axpy(-1.0, image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;
    use crate::measure::measure;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_image(sides: &[usize], seed: u64) -> Image {
        let dims = Dims::new(sides).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.total()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Image::new(dims, data).unwrap()
    }

    #[test]
    fn torus_point_is_fixed() {
        let f = random_image(&[8, 8], 1);
        let a = measure(&f);
        let p = project_torus(&a, &f).unwrap();
        assert!(f.dist2(&p) < 1e-12 * f.norm2());
    }

    #[test]
    fn positive_scaling_projects_back() {
        let f = random_image(&[8, 8], 2);
        let a = measure(&f);
        let p = project_torus(&a, &f.scale(3.7)).unwrap();
        assert!(f.dist2(&p) < 1e-12 * f.norm2());
    }

    #[test]
    fn torus_output_lies_on_torus() {
        let f = random_image(&[8, 8], 3);
        let a = measure(&random_image(&[8, 8], 4));
        let p = project_torus(&a, &f).unwrap();
        let ap = measure(&p);
        assert!(ap.dist2(&a) < 1e-10 * a.norm2());
        // idempotence
        let pp = project_torus(&a, &p).unwrap();
        assert!(p.dist2(&pp) < 1e-12 * p.norm2());
    }

    #[test]
    fn support_projection_is_orthogonal() {
        let dims = Dims::square(6).unwrap();
        let f = random_image(&[6, 6], 5);
        let g = random_image(&[6, 6], 6);
        let mut mask = SupportMask::empty(dims.clone());
        for i in 0..10 {
            mask.bits_mut()[i * 3 % 36] = true;
        }
        let pf = project_support(&mask, &f);
        let pg = project_support(&mask, &g);
        let resid = f.axpy(-1.0, &pf);
        assert!(resid.dot(&pg).abs() < 1e-12);
        assert_eq!(project_support(&SupportMask::full(dims.clone()), &f), f);
        assert_eq!(
            project_support(&SupportMask::empty(dims.clone()), &f),
            Image::zeros(dims)
        );
    }

    #[test]
    fn nonneg_projection_basics() {
        let f = random_image(&[4, 4], 7);
        let p = project_nonneg(&f);
        assert!(p.data().iter().all(|&x| x >= 0.0));
        assert_eq!(project_nonneg(&p), p);
        let neg = Image::new(Dims::square(4).unwrap(), vec![-1.0; 16]).unwrap();
        assert_eq!(project_nonneg(&neg), Image::zeros(Dims::square(4).unwrap()));
    }

    #[test]
    fn nonneg_is_closest_orthant_point_exhaustive() {
        // on a 2x2-equivalent 4-pixel grid, compare against every
        // sign-pattern candidate (zero-or-keep per pixel)
        let dims = Dims::square(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut data = vec![0.0; 16];
        for x in data.iter_mut().take(4) {
            *x = rng.gen_range(-1.0..1.0);
        }
        let f = Image::new(dims, data).unwrap();
        let p = project_nonneg(&f);
        for pattern in 0..16u32 {
            let mut cand = f.clone();
            for i in 0..4 {
                if pattern & (1 << i) != 0 {
                    cand.data_mut()[i] = 0.0;
                } else if cand.data()[i] < 0.0 {
                    continue; // candidate outside the orthant
                }
            }
            if cand.data().iter().any(|&x| x < 0.0) {
                continue;
            }
            assert!(f.dist2(&p) <= f.dist2(&cand) + 1e-12);
        }
    }

    #[test]
    fn l1ball_interior_point_fixed() {
        let f = random_image(&[4, 4], 9);
        let r = f.norm1() + 1.0;
        assert_eq!(project_l1ball(r, &f), f);
    }

    #[test]
    fn l1ball_hand_example() {
        // (3, 1) with radius 2 → (2, 0)
        let dims = Dims::square(4).unwrap();
        let mut data = vec![0.0; 16];
        data[0] = 3.0;
        data[1] = 1.0;
        let f = Image::new(dims, data).unwrap();
        let p = project_l1ball(2.0, &f);
        assert!((p.data()[0] - 2.0).abs() < 1e-12);
        assert!(p.data()[1].abs() < 1e-12);
        assert!((p.norm1() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn l1ball_matches_grid_search() {
        // three active pixels, dense search over the radius-r simplex faces
        let dims = Dims::square(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let mut data = vec![0.0; 16];
            for x in data.iter_mut().take(3) {
                *x = rng.gen_range(-2.0..2.0);
            }
            let f = Image::new(dims.clone(), data).unwrap();
            let r = 1.0;
            let p = project_l1ball(r, &f);
            assert!(p.norm1() <= r + 1e-12);
            let mut best = f64::INFINITY;
            let steps = 200;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let a = r * i as f64 / steps as f64;
                    let b = r * j as f64 / steps as f64;
                    let c = r - a - b;
                    let mut cand = vec![0.0; 16];
                    cand[0] = a.copysign(f.data()[0]);
                    cand[1] = b.copysign(f.data()[1]);
                    cand[2] = c.copysign(f.data()[2]);
                    let cand = Image::new(dims.clone(), cand).unwrap();
                    best = best.min(f.dist2(&cand));
                }
            }
            // grid is coarse; the exact projection can only be better
            assert!(f.dist2(&p) <= best + 1e-2);
            assert!((f.dist2(&p) - best).abs() < 1e-2);
        }
    }

    #[test]
    fn reflect_identities() {
        let dims = Dims::square(6).unwrap();
        let f = random_image(&[6, 6], 11);
        // full mask: projection is the identity, so reflection is too
        let full = SupportMask::full(dims.clone());
        let r = reflect_from(&project_support(&full, &f), &f);
        assert!(f.dist2(&r) < 1e-14);
        // linear subspace: reflecting twice is the identity
        let mut mask = SupportMask::empty(dims);
        for i in 0..18 {
            mask.bits_mut()[i * 2 % 36] = true;
        }
        let r1 = reflect_from(&project_support(&mask, &f), &f);
        let r2 = reflect_from(&project_support(&mask, &r1), &r1);
        assert!(f.dist2(&r2) < 1e-12);
        // fixed points of reflection = fixed points of projection
        let p = project_support(&mask, &f);
        let rp = reflect_from(&project_support(&mask, &p), &p);
        assert!(p.dist2(&rp) < 1e-14);
    }
}
