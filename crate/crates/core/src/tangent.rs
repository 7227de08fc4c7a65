//! Tangent and normal fibers of the magnitude torus, principal angles
//! against constraint subspaces, intersection dimensions, and the
//! non-negativity cone — the diagnostics that decide whether a
//! feasibility problem is well posed at a solution.
//!
//! The torus `𝕋_a = {F real : |f̂_k| = a_k}` is a product of circles,
//! one per active conjugate frequency pair. Its tangent fiber at F has
//! one closed-form basis vector per unordered pair {k, −k} with k not
//! its own conjugate and a_k above the active cutoff:
//!
//! ```text
//! τ^{(k)}_j = −√(2/|J|) · sin(φ_k − θ_{jk}),   θ_{jk} = 2π Σ_c j_c k_c / n_c,
//! ```
//!
//! with φ_k the phase of f̂_k. Distinct pairs occupy disjoint spectral
//! supports, so the family is orthonormal by construction — no
//! Gram–Schmidt. The normal fiber swaps sin for cos and adds the
//! self-conjugate active frequencies. Large grids never materialize a
//! dense basis: rows of the basis matrix are evaluated on demand and
//! tangent projections run through the FFT.

use faer::Mat;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{dft, idft, Dims, Image, Spectrum};
use crate::measure::{measure, SupportMask};

/// Relative modulus cutoff below which a frequency counts as inactive
/// (vanishing coefficients lower the torus dimension).
pub const ACTIVE_CUTOFF: f64 = 1e-12;

/// Default singular-value tolerance for counting intersection
/// dimensions: σ ≥ 1 − tol counts as an intersection direction.
pub const INTERSECTION_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug)]
struct ActivePair {
    /// Flat index of the canonical representative (smaller flat index
    /// of {k, −k}).
    k: usize,
    /// Phase of f̂_k at the representative.
    phase: f64,
}

#[derive(Clone, Copy, Debug)]
struct SelfConjugate {
    k: usize,
    /// Sign of the (real) coefficient f̂_k.
    sign: f64,
}

/// Factored description of the tangent/normal fibers at an image:
/// active frequency pairs and their phases. All basis vectors and
/// projections derive from this without dense storage.
#[derive(Clone, Debug)]
pub struct TangentMap {
    dims: Dims,
    pairs: Vec<ActivePair>,
    self_conj: Vec<SelfConjugate>,
}

impl TangentMap {
    pub fn new(image: &Image) -> Self {
        Self::with_cutoff(image, ACTIVE_CUTOFF)
    }

    pub fn with_cutoff(image: &Image, cutoff_rel: f64) -> Self {
        let s = dft(image);
        let dims = image.dims().clone();
        let amax = s.max_abs();
        let cut = cutoff_rel * amax;
        let mut pairs = Vec::new();
        let mut self_conj = Vec::new();
        for k in 0..dims.total() {
            let kn = dims.flat_neg(k);
            let v = s.data()[k];
            if v.norm() <= cut {
                continue;
            }
            if kn == k {
                self_conj.push(SelfConjugate {
                    k,
                    sign: if v.re >= 0.0 { 1.0 } else { -1.0 },
                });
            } else if k < kn {
                pairs.push(ActivePair { k, phase: v.arg() });
            }
        }
        TangentMap {
            dims,
            pairs,
            self_conj,
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    /// Dimension of the tangent fiber.
    pub fn tangent_dim(&self) -> usize {
        self.pairs.len()
    }

    /// Dimension of the normal fiber.
    pub fn normal_dim(&self) -> usize {
        self.pairs.len() + self.self_conj.len()
    }

    /// Per-axis angular frequencies 2π k_c / n_c of pair `c`.
    fn pair_freqs(&self, c: usize) -> Vec<f64> {
        let k = self.dims.unflat(self.pairs[c].k);
        k.iter()
            .zip(self.dims.sides())
            .map(|(&kc, &nc)| 2.0 * std::f64::consts::PI * kc as f64 / nc as f64)
            .collect()
    }

    /// Entry j of the c-th tangent basis vector.
    fn tangent_entry(&self, c: usize, freqs: &[f64], j: &[i64], scale: f64) -> f64 {
        let theta: f64 = freqs
            .iter()
            .zip(j)
            .map(|(&w, &jc)| w * jc as f64)
            .sum();
        -scale * (self.pairs[c].phase - theta).sin()
    }

    fn pair_scale(&self) -> f64 {
        (2.0 / self.dims.total() as f64).sqrt()
    }

    /// The c-th tangent basis vector as a dense image.
    pub fn tangent_vector(&self, c: usize) -> Image {
        let scale = self.pair_scale();
        let freqs = self.pair_freqs(c);
        let total = self.dims.total();
        let mut data = vec![0.0; total];
        for (flat, slot) in data.iter_mut().enumerate() {
            let j = self.dims.unflat(flat);
            *slot = self.tangent_entry(c, &freqs, &j, scale);
        }
        Image::new(self.dims.clone(), data).expect("finite by construction")
    }

    /// Spectral coefficient u_k = i e^{iφ} √(|J|/2) of the c-th tangent
    /// vector at its representative frequency.
    fn spectral_coeff(&self, c: usize) -> Complex64 {
        let alpha = (self.dims.total() as f64 / 2.0).sqrt();
        Complex64::new(0.0, alpha) * Complex64::from_polar(1.0, self.pairs[c].phase)
    }

    /// Coefficients ⟨τ^{(c)}, x⟩ for all c, via one FFT.
    pub fn coefficients(&self, x: &Image) -> Vec<f64> {
        let xh = dft(x);
        let inv_total = 1.0 / self.dims.total() as f64;
        (0..self.pairs.len())
            .map(|c| {
                let u = self.spectral_coeff(c);
                2.0 * inv_total * (u.conj() * xh.data()[self.pairs[c].k]).re
            })
            .collect()
    }

    /// Image Σ_c coeffs[c] · τ^{(c)}, via one inverse FFT.
    pub fn combine(&self, coeffs: &[f64]) -> Result<Image> {
        if coeffs.len() != self.pairs.len() {
            return Err(Error::DimMismatch("combine: coefficient count".into()));
        }
        let total = self.dims.total();
        let mut yh = vec![Complex64::default(); total];
        for (c, &w) in coeffs.iter().enumerate() {
            let u = self.spectral_coeff(c) * w;
            let k = self.pairs[c].k;
            yh[k] = u;
            yh[self.dims.flat_neg(k)] = u.conj();
        }
        idft(&Spectrum::new(self.dims.clone(), yh)?)
    }

    /// Orthogonal projection of x onto the tangent fiber (two FFTs).
    pub fn project_tangent(&self, x: &Image) -> Result<Image> {
        self.combine(&self.coefficients(x))
    }

    /// Rows of the tangent basis matrix at the given flat pixel indices:
    /// the matrix H = Vᵗ U for V the standard support basis on those
    /// pixels, built without a dense U.
    pub fn rows_matrix(&self, rows: &[usize]) -> Mat<f64> {
        let scale = self.pair_scale();
        let m = self.pairs.len();
        let unflat: Vec<Vec<i64>> = rows.iter().map(|&r| self.dims.unflat(r)).collect();
        let freqs: Vec<Vec<f64>> = (0..m).map(|c| self.pair_freqs(c)).collect();
        Mat::from_fn(rows.len(), m, |r, c| {
            self.tangent_entry(c, &freqs[c], &unflat[r], scale)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisLabel {
    Tangent,
    Normal,
    Support,
}

#[derive(Clone, Debug)]
enum Repr {
    /// Orthonormal columns, stored densely.
    Dense(Mat<f64>),
    /// Standard basis vectors e_j for the listed flat indices.
    Standard(Vec<usize>),
}

/// Orthonormal basis of a subspace of ℝ^J.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    ambient: usize,
    label: BasisLabel,
    repr: Repr,
}

/// Ambient dimension above which dense basis construction is refused.
pub const DENSE_AMBIENT_LIMIT: usize = 4096;

impl SubspaceBasis {
    pub fn from_columns(columns: Mat<f64>, label: BasisLabel) -> Result<Self> {
        let ambient = columns.nrows();
        for a in 0..columns.ncols() {
            for b in a..columns.ncols() {
                let dot: f64 = (0..ambient).map(|i| columns[(i, a)] * columns[(i, b)]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "columns not orthonormal: ⟨{a},{b}⟩ = {dot}"
                    )));
                }
            }
        }
        Ok(SubspaceBasis {
            ambient,
            label,
            repr: Repr::Dense(columns),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Dense(m) => m.ncols(),
            Repr::Standard(idx) => idx.len(),
        }
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    /// Dense column matrix (materializes standard bases).
    pub fn to_dense(&self) -> Mat<f64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Standard(idx) => Mat::from_fn(self.ambient, idx.len(), |i, c| {
                if i == idx[c] {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    /// Residual ‖x − P(x)‖₂ of projecting x onto the span.
    pub fn projection_residual(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.ambient);
        let mut proj = vec![0.0; self.ambient];
        match &self.repr {
            Repr::Dense(m) => {
                for c in 0..m.ncols() {
                    let coef: f64 = (0..self.ambient).map(|i| m[(i, c)] * x[i]).sum();
                    for (i, p) in proj.iter_mut().enumerate() {
                        *p += coef * m[(i, c)];
                    }
                }
            }
            Repr::Standard(idx) => {
                for &i in idx {
                    proj[i] = x[i];
                }
            }
        }
        x.iter()
            .zip(&proj)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn dense_guard(dims: &Dims) -> Result<()> {
    if dims.total() > DENSE_AMBIENT_LIMIT {
        return Err(Error::TooLarge(format!(
            "dense basis on |J| = {} > {DENSE_AMBIENT_LIMIT}; use TangentMap row/projection paths",
            dims.total()
        )));
    }
    Ok(())
}

/// Dense orthonormal tangent basis (small grids only).
pub fn tangent_basis(image: &Image) -> Result<SubspaceBasis> {
    dense_guard(image.dims())?;
    let map = TangentMap::new(image);
    let total = map.dims.total();
    let scale = map.pair_scale();
    let cols = Mat::from_fn(total, map.pairs.len(), |j, c| {
        let jj = map.dims.unflat(j);
        map.tangent_entry(c, &map.pair_freqs(c), &jj, scale)
    });
    Ok(SubspaceBasis {
        ambient: total,
        label: BasisLabel::Tangent,
        repr: Repr::Dense(cols),
    })
}

/// Dense orthonormal normal basis: the cos-combinations of the active
/// pairs plus one vector per active self-conjugate frequency.
pub fn normal_basis(image: &Image) -> Result<SubspaceBasis> {
    dense_guard(image.dims())?;
    let map = TangentMap::new(image);
    let total = map.dims.total();
    let scale = map.pair_scale();
    let npairs = map.pairs.len();
    let self_scale = 1.0 / (total as f64).sqrt();
    let cols = Mat::from_fn(total, map.normal_dim(), |j, c| {
        let jj = map.dims.unflat(j);
        if c < npairs {
            let freqs = map.pair_freqs(c);
            let theta: f64 = freqs
                .iter()
                .zip(&jj)
                .map(|(&w, &jc)| w * jc as f64)
                .sum();
            scale * (map.pairs[c].phase - theta).cos()
        } else {
            let sc = map.self_conj[c - npairs];
            let k = map.dims.unflat(sc.k);
            let theta: f64 = k
                .iter()
                .zip(map.dims.sides())
                .zip(&jj)
                .map(|((&kc, &nc), &jc)| {
                    2.0 * std::f64::consts::PI * (kc * jc) as f64 / nc as f64
                })
                .sum();
            sc.sign * self_scale * theta.cos()
        }
    });
    Ok(SubspaceBasis {
        ambient: total,
        label: BasisLabel::Normal,
        repr: Repr::Dense(cols),
    })
}

/// Standard basis of the support subspace B_S (any grid size).
pub fn support_basis(mask: &SupportMask) -> SubspaceBasis {
    SubspaceBasis {
        ambient: mask.dims().total(),
        label: BasisLabel::Support,
        repr: Repr::Standard(mask.indices()),
    }
}

/// Cosines of the principal angles between two subspaces, descending.
#[derive(Clone, Debug)]
pub struct AngleSpectrum {
    sigmas: Vec<f64>,
}

impl AngleSpectrum {
    pub fn from_singular_values(mut sigmas: Vec<f64>) -> Result<Self> {
        for s in sigmas.iter_mut() {
            if !(*s >= -1e-10 && *s <= 1.0 + 1e-10) {
                return Err(Error::Linalg(format!("singular value {s} outside [0,1]")));
            }
            *s = s.clamp(0.0, 1.0);
        }
        sigmas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(AngleSpectrum { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// CSV rows `n,sigma,log10_one_minus_sigma` (1−σ floored at 1e−17
    /// so σ = 1 rows stay finite).
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "n,sigma,log10_one_minus_sigma")?;
        for (n, &s) in self.sigmas.iter().enumerate() {
            let gap = (1.0 - s).max(1e-17);
            writeln!(w, "{},{:.17e},{:.6}", n + 1, s, gap.log10())?;
        }
        Ok(())
    }
}

fn singular_values(h: &Mat<f64>) -> Result<Vec<f64>> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Ok(Vec::new());
    }
    h.singular_values()
        .map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))
}

/// Principal-angle cosines between span(V) and span(U): singular values
/// of H = VᵗU.
pub fn principal_angles(v: &SubspaceBasis, u: &SubspaceBasis) -> Result<AngleSpectrum> {
    if v.ambient != u.ambient {
        return Err(Error::DimMismatch("principal_angles: ambient dims differ".into()));
    }
    let h = match (&v.repr, &u.repr) {
        (Repr::Standard(rows), Repr::Dense(m)) => {
            Mat::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
        }
        (Repr::Dense(m), Repr::Standard(rows)) => {
            Mat::from_fn(m.ncols(), rows.len(), |r, c| m[(rows[c], r)])
        }
        (Repr::Standard(a), Repr::Standard(b)) => Mat::from_fn(a.len(), b.len(), |r, c| {
            if a[r] == b[c] {
                1.0
            } else {
                0.0
            }
        }),
        (Repr::Dense(a), Repr::Dense(b)) => {
            Mat::from_fn(a.ncols(), b.ncols(), |r, c| {
                (0..v.ambient).map(|i| a[(i, r)] * b[(i, c)]).sum()
            })
        }
    };
    AngleSpectrum::from_singular_values(singular_values(&h)?)
}

/// Number of principal-angle cosines ≥ 1 − tol: the dimension of the
/// (numerical) intersection of the two subspaces.
pub fn intersection_dimension(spectrum: &AngleSpectrum, tol: f64) -> usize {
    assert!(tol > 0.0 && tol < 1.0);
    spectrum.sigmas.iter().filter(|&&s| s >= 1.0 - tol).count()
}

/// Principal angles between the tangent fiber of `map` and the support
/// subspace of `mask`, built row-wise — works at any grid size.
pub fn support_tangent_angles(map: &TangentMap, mask: &SupportMask) -> Result<AngleSpectrum> {
    if map.dims() != mask.dims() {
        return Err(Error::DimMismatch("support_tangent_angles: dims differ".into()));
    }
    let h = map.rows_matrix(&mask.indices());
    AngleSpectrum::from_singular_values(singular_values(&h)?)
}

/// Tuning knobs for [`nonneg_cone_dimension`].
#[derive(Clone, Debug)]
pub struct ConeParams {
    /// Pixels with f_j < zero_eps_rel·max(f) count as zero pixels.
    pub zero_eps_rel: f64,
    /// σ-tolerance for the lineality space (tangent vectors vanishing
    /// on the zero set).
    pub lineality_tol: f64,
    /// Random ray-sampling starts.
    pub random_starts: usize,
    /// Alternating-projection iterations per start.
    pub iters_per_start: usize,
    /// Accept a ray when its worst zero-set violation is below this
    /// multiple of its ℓ2 norm.
    pub feasibility_tol: f64,
    /// Relative singular-value cutoff for the rank of the collected
    /// ray family.
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for ConeParams {
    fn default() -> Self {
        ConeParams {
            zero_eps_rel: 1e-14,
            lineality_tol: 1e-9,
            random_starts: 128,
            iters_per_start: 300,
            feasibility_tol: 1e-9,
            rank_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Dimensions of the cone K = {τ in the tangent fiber : τ_j ≥ 0 at
/// every zero pixel of F} — the tangent directions that keep a
/// non-negative image non-negative to first order.
///
/// Returns `(lineality_dim, cone_span_dim)`: the dimension of the
/// largest linear subspace inside K (tangent vectors supported on
/// S_F), and the dimension of K's linear span.
///
/// The lineality space is exact (an SVD null-space computation on
/// whichever of the support/zero pixel sets is smaller). The span is
/// probed by sampling: alternating projections between the tangent
/// fiber and the half-space constraints drive many starts toward cone
/// members; rays are accepted only after verifying near-feasibility,
/// so the result can undercount but not overcount. K always contains
/// its lineality space, so `cone_span_dim ≥ lineality_dim`.
pub fn nonneg_cone_dimension(image: &Image, params: &ConeParams) -> Result<(usize, usize)> {
    if image.data().iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidArgument(
            "nonneg_cone_dimension requires a non-negative image".into(),
        ));
    }
    let map = TangentMap::new(image);
    let m = map.tangent_dim();
    let total = image.dims().total();
    let fmax = image.max_abs();
    let zero_cut = params.zero_eps_rel * fmax;
    let zero_pixels: Vec<usize> = (0..total).filter(|&j| image.data()[j] < zero_cut).collect();
    let support_pixels: Vec<usize> = (0..total).filter(|&j| image.data()[j] >= zero_cut).collect();

    // Lineality: τ_Z = 0. Rank-nullity on the cheaper side: coefficient
    // vectors killing the zero-set rows, or σ≈1 directions against the
    // support rows (H_S and H_Z have σ pairing as σ_S² + σ_Z² = 1).
    let lineality_vectors: Vec<Vec<f64>> = if zero_pixels.len() <= support_pixels.len() {
        let hz = map.rows_matrix(&zero_pixels);
        let sigma_cut = (2.0 * params.lineality_tol).sqrt();
        right_singular_vectors_below(&hz, sigma_cut)?
    } else {
        let hs = map.rows_matrix(&support_pixels);
        right_singular_vectors_at_least(&hs, 1.0 - params.lineality_tol)?
    };
    let lineality_dim = lineality_vectors.len();
    if m == 0 {
        return Ok((0, 0));
    }

    // Ray sampling: alternate clamping on the zero set with tangent
    // projection, from random tangent vectors and from tangent
    // projections of deltas at zero pixels bordering the support.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut starts: Vec<Image> = Vec::new();
    for _ in 0..params.random_starts {
        let coeffs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
        starts.push(map.combine(&coeffs)?);
    }
    for &z in boundary_zero_pixels(image, &zero_pixels, zero_cut)
        .iter()
        .take(params.random_starts)
    {
        let mut delta = Image::zeros(image.dims().clone());
        delta.data_mut()[z] = 1.0;
        starts.push(map.project_tangent(&delta)?);
    }

    let mut rays: Vec<Vec<f64>> = Vec::new();
    for start in &starts {
        let mut x = start.clone();
        let n = x.norm2();
        if n < 1e-12 {
            continue;
        }
        x = x.scale(1.0 / n);
        for _ in 0..params.iters_per_start {
            for &z in &zero_pixels {
                if x.data()[z] < 0.0 {
                    x.data_mut()[z] = 0.0;
                }
            }
            x = map.project_tangent(&x)?;
            let n = x.norm2();
            if n < 1e-12 {
                break;
            }
            x = x.scale(1.0 / n);
        }
        let n = x.norm2();
        if n < 0.5 {
            continue;
        }
        let worst = zero_pixels
            .iter()
            .map(|&z| (-x.data()[z]).max(0.0))
            .fold(0.0f64, f64::max);
        if worst <= params.feasibility_tol * n {
            rays.push(map.coefficients(&x));
        }
    }

    // span of the cone = rank of [lineality vectors | accepted rays]
    let cols: Vec<&Vec<f64>> = lineality_vectors.iter().chain(rays.iter()).collect();
    if cols.is_empty() {
        return Ok((lineality_dim, 0));
    }
    let mat = Mat::from_fn(m, cols.len(), |i, c| cols[c][i]);
    let sv = singular_values(&mat)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let span = sv.iter().filter(|&&s| s > params.rank_tol * smax).count();
    Ok((lineality_dim, span.max(lineality_dim)))
}

/// Zero pixels with a supported neighbor (ℓ∞ distance 1) — where the
/// cone's extreme rays concentrate.
fn boundary_zero_pixels(image: &Image, zero_pixels: &[usize], zero_cut: f64) -> Vec<usize> {
    let dims = image.dims();
    let d = dims.d();
    let mut out = Vec::new();
    'pixel: for &z in zero_pixels {
        let idx = dims.unflat(z);
        let mut offsets = vec![-1i64; d];
        loop {
            let probe: Vec<i64> = idx.iter().zip(&offsets).map(|(a, b)| a + b).collect();
            if image.data()[dims.flat(&probe)] >= zero_cut {
                out.push(z);
                continue 'pixel;
            }
            // advance the ±1 offset counter
            let mut carry = true;
            for o in offsets.iter_mut() {
                if carry {
                    *o += 1;
                    if *o > 1 {
                        *o = -1;
                    } else {
                        carry = false;
                    }
                }
            }
            if carry {
                break;
            }
        }
    }
    out
}

/// Right singular vectors of `h` with σ ≤ cut (null-ish space).
fn right_singular_vectors_below(h: &Mat<f64>, cut: f64) -> Result<Vec<Vec<f64>>> {
    let m = h.ncols();
    if h.nrows() == 0 {
        // no constraints: the whole coefficient space
        return Ok((0..m)
            .map(|c| (0..m).map(|i| if i == c { 1.0 } else { 0.0 }).collect())
            .collect());
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let svd = h
        .thin_svd()
        .map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let r = s.nrows();
    let mut out = Vec::new();
    for i in 0..r {
        if s[i] <= cut {
            out.push((0..m).map(|j| v[(j, i)]).collect());
        }
    }
    // rank-deficient wide matrices: σ beyond the thin rank are exact zeros
    if h.nrows() < m {
        // thin SVD of an s×m matrix (s<m) yields only s right vectors;
        // complete the null space via the full V when needed
        let known = r;
        if known < m {
            // project standard basis onto the orthogonal complement of
            // the thin V block and orthonormalize
            let mut extras: Vec<Vec<f64>> = Vec::new();
            let mut basis: Vec<Vec<f64>> = (0..known).map(|i| (0..m).map(|j| v[(j, i)]).collect()).collect();
            for c in 0..m {
                if extras.len() + known >= m {
                    break;
                }
                let mut cand: Vec<f64> = (0..m).map(|i| if i == c { 1.0 } else { 0.0 }).collect();
                for b in basis.iter().chain(extras.iter()) {
                    let dot: f64 = b.iter().zip(&cand).map(|(a, x)| a * x).sum();
                    for (ci, bi) in cand.iter_mut().zip(b) {
                        *ci -= dot * bi;
                    }
                }
                let n: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-8 {
                    for ci in cand.iter_mut() {
                        *ci /= n;
                    }
                    extras.push(cand);
                }
            }
            basis.clear();
            out.extend(extras);
        }
    }
    Ok(out)
}

/// Right singular vectors of `h` with σ ≥ cut.
fn right_singular_vectors_at_least(h: &Mat<f64>, cut: f64) -> Result<Vec<Vec<f64>>> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Ok(Vec::new());
    }
    let svd = h
        .thin_svd()
        .map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let mut out = Vec::new();
    for i in 0..s.nrows() {
        if s[i] >= cut {
            out.push((0..h.ncols()).map(|j| v[(j, i)]).collect());
        }
    }
    Ok(out)
}

/// Log–log slope of the measurement separation t ↦ ‖M(F) − M(F + tτ)‖₂
/// over t ∈ {1e−1, …, 1e−5}. Directions tangent to the torus separate
/// quadratically (slope ≈ 2); directions with a normal component
/// separate linearly (slope ≈ 1).
pub fn quadratic_separation_exponent(image: &Image, tau: &Image) -> Result<f64> {
    if image.dims() != tau.dims() {
        return Err(Error::DimMismatch("separation: dims differ".into()));
    }
    let n = tau.norm2();
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "direction must be unit ℓ2 norm, got {n}"
        )));
    }
    let a = measure(image);
    let amax = a.max();
    let ts: Vec<f64> = (1..=5).map(|e| 10f64.powi(-e)).collect();
    let mut logs = Vec::with_capacity(ts.len());
    for &t in &ts {
        let perturbed = image.axpy(t, tau);
        let d = measure(&perturbed).dist2(&a);
        if d < 1e-13 * amax {
            return Err(Error::DegenerateFit(format!(
                "separation {d:.3e} at t = {t:.0e} is below noise"
            )));
        }
        logs.push((t.ln(), d.ln()));
    }
    // least-squares slope
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
