//! Iterative maps for the feasibility problem 𝕋_a ∩ B, their run
//! loops and traces, stagnation detection, and the linear block model
//! that explains contraction normal to the fixed-point set.
//!
//! The hybrid map is `D(F) = F + P_A(R_B(F)) − P_B(F)` with A the
//! magnitude torus and `R_B = 2P_B − Id`; this is hybrid input-output
//! with feedback parameter 1, and a Douglas–Rachford map whenever B is
//! a linear subspace. Its residual `E(F) = ‖P_B(F) − P_A(R_B(F))‖₂`
//! coincides with the step norm, so convergence is observable.

use faer::Mat;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::measure::MagnitudeData;
use crate::project::{project_torus, reflect_from, ConstraintSet};

/// Which fixed-point iteration to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterMap {
    /// F ↦ P_B(P_A(F)).
    Alternating,
    /// F ↦ F + P_A(R_B(F)) − P_B(F).
    Hybrid,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub map: IterMap,
    pub constraint: ConstraintSet,
    pub max_iters: usize,
    pub seed: u64,
    pub record_every: usize,
    /// Number of consecutive records over which a flat residual counts
    /// as stagnation.
    pub stagnation_window: usize,
    /// Minimum relative decrease of the median residual and step norm
    /// across the window for the run to still count as progressing;
    /// anything slower is declared stagnation.
    pub stagnation_rel_tol: f64,
    /// Converged when the residual drops below this multiple of ‖a‖₂.
    pub converge_rel_tol: f64,
    /// When tracking a reference, also stop (as converged) once the
    /// recorded true error falls below this absolute threshold. For
    /// experiments with known ground truth whose verdict is an error
    /// threshold; ignored when no reference is supplied.
    pub stop_true_error: Option<f64>,
}

impl SolverConfig {
    pub fn new(map: IterMap, constraint: ConstraintSet) -> Self {
        SolverConfig {
            map,
            constraint,
            max_iters: 10_000,
            seed: 0,
            record_every: 1,
            stagnation_window: 500,
            stagnation_rel_tol: 0.3,
            converge_rel_tol: 1e-14,
            stop_true_error: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be ≥ 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::InvalidArgument("record_every must be ≥ 1".into()));
        }
        if self.stagnation_window < 2 {
            return Err(Error::InvalidArgument("stagnation_window must be ≥ 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    Stagnated,
    MaxIters,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Stagnated => "stagnated",
            RunStatus::MaxIters => "max_iters",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IterRecord {
    pub iter: usize,
    pub residual: f64,
    pub true_error: Option<f64>,
    pub step_norm: f64,
}

#[derive(Clone, Debug)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
    pub status: RunStatus,
    pub seed: u64,
    pub iters_run: usize,
}

impl IterTrace {
    pub fn final_residual(&self) -> f64 {
        self.records.last().map(|r| r.residual).unwrap_or(f64::NAN)
    }

    pub fn final_true_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.true_error)
    }

    /// CSV rows `iter,residual,true_error,step_norm` followed by a
    /// terminal comment line with the run status and seed.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "iter,residual,true_error,step_norm")?;
        for r in &self.records {
            match r.true_error {
                Some(te) => writeln!(w, "{},{:e},{:e},{:e}", r.iter, r.residual, te, r.step_norm)?,
                None => writeln!(w, "{},{:e},,{:e}", r.iter, r.residual, r.step_norm)?,
            }
        }
        writeln!(w, "# status={} seed={}", self.status.as_str(), self.seed)?;
        Ok(())
    }
}

/// One application of P_B ∘ P_A.
pub fn alternating_step(
    data: &MagnitudeData,
    constraint: &ConstraintSet,
    f: &Image,
) -> Result<Image> {
    let pa = project_torus(data, f)?;
    Ok(constraint.project(&pa))
}

/// One application of the hybrid map, returning the next iterate and
/// the residual E(F) = ‖P_B(F) − P_A(R_B(F))‖₂ (= the step norm).
pub fn hybrid_step(
    data: &MagnitudeData,
    constraint: &ConstraintSet,
    f: &Image,
) -> Result<(Image, f64)> {
    let pb = constraint.project(f);
    let rb = reflect_from(&pb, f);
    let pa_rb = project_torus(data, &rb)?;
    let step = pa_rb.axpy(-1.0, &pb);
    let next = f.axpy(1.0, &step);
    Ok((next, step.norm2()))
}

/// Residual E(F) for any iterate of either map.
pub fn residual(data: &MagnitudeData, constraint: &ConstraintSet, f: &Image) -> Result<f64> {
    let pb = constraint.project(f);
    let rb = reflect_from(&pb, f);
    let pa_rb = project_torus(data, &rb)?;
    Ok(pb.dist2(&pa_rb))
}

/// Default initial iterate: a standard-normal white-noise image drawn
/// from the seed, projected onto the torus.
pub fn random_torus_start(data: &MagnitudeData, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..data.dims().total())
        .map(|_| {
            // Box–Muller from two uniforms keeps the draw stable across
            // rand's distribution implementations
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    let noise = Image::new(data.dims().clone(), noise)?;
    project_torus(data, &noise)
}

/// True iff the run has stopped making progress over the window while
/// the residual stays above the numerical-convergence floor. The
/// residual of a stalled hybrid map oscillates within an order of
/// magnitude rather than holding a constant value, so progress is
/// judged by comparing the medians of the early and late halves of the
/// window: stagnation means the late median has not dropped by at
/// least `rel_tol` relative to the early one.
pub fn stagnation_detect(window: &[IterRecord], rel_tol: f64, data_norm: f64) -> bool {
    if window.len() < 4 {
        return false;
    }
    let median = |xs: &mut Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    let half = window.len() / 2;
    let stalled = |get: fn(&IterRecord) -> f64| {
        let early = median(&mut window[..half].iter().map(get).collect());
        let late = median(&mut window[half..].iter().map(get).collect());
        early > 0.0 && late > (1.0 - rel_tol) * early
    };
    let mut res: Vec<f64> = window.iter().map(|r| r.residual).collect();
    let res_med = median(&mut res);
    stalled(|r| r.residual) && stalled(|r| r.step_norm) && res_med > 1e-10 * data_norm
}

/// Runs the configured map from `f0`. Returns the final reconstruction
/// rⁿ = P_B(Fⁿ) and the trace; `reference`, when given, adds the
/// associate-aligned true error of rⁿ to every record.
pub fn run(
    data: &MagnitudeData,
    config: &SolverConfig,
    f0: &Image,
    reference: Option<&Image>,
) -> Result<(Image, IterTrace)> {
    config.validate()?;
    if f0.dims() != data.dims() {
        return Err(Error::DimMismatch("run: F0 dims differ from data".into()));
    }
    let data_norm = data.norm2();
    let converge_at = config.converge_rel_tol * data_norm;
    let mut f = f0.clone();
    let mut records: Vec<IterRecord> = Vec::new();
    let mut status = RunStatus::MaxIters;
    let mut iters_run = 0;

    let record = |records: &mut Vec<IterRecord>, iter: usize, res: f64, step: f64, f: &Image| -> Result<()> {
        let te = match reference {
            Some(r) => {
                let recon = config.constraint.project(f);
                Some(crate::measure::true_error(&recon, r)?.0)
            }
            None => None,
        };
        records.push(IterRecord {
            iter,
            residual: res,
            true_error: te,
            step_norm: step,
        });
        Ok(())
    };

    for n in 0..=config.max_iters {
        let (next, res, step) = match config.map {
            IterMap::Hybrid => {
                let (next, res) = hybrid_step(data, &config.constraint, &f)?;
                (next, res, res)
            }
            IterMap::Alternating => {
                let res = residual(data, &config.constraint, &f)?;
                let next = alternating_step(data, &config.constraint, &f)?;
                let step = next.dist2(&f);
                (next, res, step)
            }
        };
        iters_run = n;
        let is_record = n % config.record_every == 0 || n == config.max_iters;
        if is_record {
            record(&mut records, n, res, step, &f)?;
            if let (Some(stop), Some(te)) = (
                config.stop_true_error,
                records.last().and_then(|r| r.true_error),
            ) {
                if te < stop {
                    status = RunStatus::Converged;
                    break;
                }
            }
        }
        if res <= converge_at {
            if !is_record {
                record(&mut records, n, res, step, &f)?;
            }
            status = RunStatus::Converged;
            break;
        }
        if is_record && records.len() >= config.stagnation_window {
            let window = &records[records.len() - config.stagnation_window..];
            if stagnation_detect(window, config.stagnation_rel_tol, data_norm) {
                status = RunStatus::Stagnated;
                break;
            }
        }
        if n == config.max_iters {
            break;
        }
        f = next;
    }

    let recon = config.constraint.project(&f);
    Ok((
        recon,
        IterTrace {
            records,
            status,
            seed: config.seed,
            iters_run,
        },
    ))
}

/// The block matrix `[[2HᵗH, Hᵗ], [−H, 0]]` — the linearization of the
/// hybrid map in a split basis near a transversal fixed point, for H
/// the matrix of principal-angle cosines (|S|×m, singular values in
/// [0,1]). All eigenvalue moduli are < 1 exactly when every singular
/// value of H lies in (0,1).
pub fn linear_model_matrix(h: &Mat<f64>) -> Mat<f64> {
    let s = h.nrows();
    let m = h.ncols();
    let n = m + s;
    Mat::from_fn(n, n, |i, j| {
        if i < m && j < m {
            // 2HᵗH
            2.0 * (0..s).map(|t| h[(t, i)] * h[(t, j)]).sum::<f64>()
        } else if i < m {
            // Hᵗ
            h[(j - m, i)]
        } else if j < m {
            // −H
            -h[(i - m, j)]
        } else {
            0.0
        }
    })
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(a: &Mat<f64>) -> Result<f64> {
    let eigs = a
        .eigenvalues()
        .map_err(|e| Error::Linalg(format!("eigenvalue computation failed: {e:?}")))?;
    Ok(eigs
        .iter()
        .map(|z: &num_complex::Complex<f64>| z.norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;
    use crate::measure::{measure, support_of, SupportMask};
    use crate::project::project_support;
    use rand_chacha::ChaCha8Rng;

    fn random_image(sides: &[usize], seed: u64) -> Image {
        let dims = Dims::new(sides).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.total()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Image::new(dims, data).unwrap()
    }

    /// Small-support image: random values in the top-left quadrant.
    fn supported_image(side: usize, seed: u64) -> Image {
        let dims = Dims::square(side).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::zeros(dims.clone());
        for i in 0..side as i64 / 2 {
            for j in 0..side as i64 / 2 {
                img.data_mut()[dims.flat(&[i, j])] = rng.gen_range(0.1..1.0);
            }
        }
        img
    }

    #[test]
    fn intersection_points_are_fixed() {
        let f = supported_image(8, 1);
        let a = measure(&f);
        let mask = support_of(&f, 0.0);
        let constraint = ConstraintSet::Support(mask);
        let alt = alternating_step(&a, &constraint, &f).unwrap();
        assert!(f.dist2(&alt) < 1e-12 * f.norm2());
        let (hyb, res) = hybrid_step(&a, &constraint, &f).unwrap();
        assert!(f.dist2(&hyb) < 1e-12 * f.norm2());
        assert!(res < 1e-12 * f.norm2());
    }

    #[test]
    fn full_mask_alternating_is_torus_projection() {
        let f = random_image(&[8, 8], 2);
        let a = measure(&random_image(&[8, 8], 3));
        let constraint = ConstraintSet::Support(SupportMask::full(f.dims().clone()));
        let step = alternating_step(&a, &constraint, &f).unwrap();
        let pa = project_torus(&a, &f).unwrap();
        assert!(step.dist2(&pa) < 1e-12 * pa.norm2());
    }

    #[test]
    fn alternating_distance_to_b_nonincreasing() {
        let truth = supported_image(8, 4);
        let a = measure(&truth);
        let mask = support_of(&truth, 0.0);
        let constraint = ConstraintSet::Support(mask.clone());
        let mut f = random_torus_start(&a, 5).unwrap();
        let mut prev = f.dist2(&project_support(&mask, &f));
        for _ in 0..50 {
            // distance measured at the torus point P_A(F), which the next
            // alternating iterate projects onto B
            let pa = project_torus(&a, &f).unwrap();
            let d = pa.dist2(&project_support(&mask, &pa));
            assert!(d <= prev + 1e-10);
            prev = d;
            f = alternating_step(&a, &constraint, &f).unwrap();
        }
    }

    #[test]
    fn hybrid_agrees_with_douglas_rachford_for_linear_b() {
        // for linear A and B the hybrid map is ½(R_A R_B + Id); check on
        // support subspaces playing both roles
        let dims = Dims::square(6).unwrap();
        let f = random_image(&[6, 6], 6);
        let mut mask_a = SupportMask::empty(dims.clone());
        let mut mask_b = SupportMask::empty(dims.clone());
        for i in 0..36 {
            if i % 3 != 0 {
                mask_a.bits_mut()[i] = true;
            }
            if i % 2 == 0 {
                mask_b.bits_mut()[i] = true;
            }
        }
        let pa = |x: &Image| project_support(&mask_a, x);
        let pb = |x: &Image| project_support(&mask_b, x);
        // D(F) = F + P_A(R_B F) − P_B F with these linear projections
        let rb = reflect_from(&pb(&f), &f);
        let hybrid = f.axpy(1.0, &pa(&rb).axpy(-1.0, &pb(&f)));
        // ½(R_A R_B + Id)(F)
        let ra_rb = reflect_from(&pa(&rb), &rb);
        let dr = ra_rb.axpy(1.0, &f).scale(0.5);
        assert!(hybrid.dist2(&dr) < 1e-12 * f.norm2());
    }

    #[test]
    fn run_converges_immediately_at_intersection() {
        let f = supported_image(8, 7);
        let a = measure(&f);
        let config = SolverConfig::new(IterMap::Hybrid, ConstraintSet::Support(support_of(&f, 0.0)));
        let (recon, trace) = run(&a, &config, &f, None).unwrap();
        assert_eq!(trace.status, RunStatus::Converged);
        assert_eq!(trace.iters_run, 0);
        assert!(trace.final_residual() < 1e-12 * a.norm2());
        assert!(recon.dist2(&f) < 1e-12 * f.norm2());
    }

    #[test]
    fn hybrid_residual_equals_step_norm_along_run() {
        let truth = supported_image(8, 8);
        let a = measure(&truth);
        let constraint = ConstraintSet::Support(support_of(&truth, 0.0));
        let mut f = random_torus_start(&a, 9).unwrap();
        for _ in 0..30 {
            let (next, res) = hybrid_step(&a, &constraint, &f).unwrap();
            assert!((next.dist2(&f) - res).abs() <= 1e-12 * res.max(1.0));
            // the reported residual matches the standalone definition
            let e = residual(&a, &constraint, &f).unwrap();
            assert!((e - res).abs() <= 1e-12 * res.max(1.0));
            f = next;
        }
    }

    #[test]
    fn data_residual_bound_holds() {
        let truth = supported_image(8, 10);
        let a = measure(&truth);
        let constraint = ConstraintSet::Support(support_of(&truth, 0.0));
        let sqrt_j = (truth.dims().total() as f64).sqrt();
        let mut f = random_torus_start(&a, 11).unwrap();
        for _ in 0..30 {
            let recon = constraint.project(&f);
            let e = residual(&a, &constraint, &f).unwrap();
            let data_gap = measure(&recon).dist2(&a);
            assert!(data_gap <= sqrt_j * e + 1e-10);
            f = hybrid_step(&a, &constraint, &f).unwrap().0;
        }
    }

    #[test]
    fn stagnation_detector_cases() {
        let decaying: Vec<IterRecord> = (0..10)
            .map(|i| IterRecord {
                iter: i,
                residual: 0.5f64.powi(i as i32),
                true_error: None,
                step_norm: 0.5f64.powi(i as i32),
            })
            .collect();
        assert!(!stagnation_detect(&decaying, 0.01, 1.0));
        let flat: Vec<IterRecord> = (0..10)
            .map(|i| IterRecord {
                iter: i,
                residual: 1e-4,
                true_error: None,
                step_norm: 1e-4,
            })
            .collect();
        assert!(stagnation_detect(&flat, 0.01, 1.0));
        // flat but already at numerical convergence — not stagnation
        let tiny: Vec<IterRecord> = flat
            .iter()
            .map(|r| IterRecord {
                residual: 1e-14,
                step_norm: 1e-14,
                ..*r
            })
            .collect();
        assert!(!stagnation_detect(&tiny, 0.01, 1.0));
    }

    #[test]
    fn run_is_deterministic() {
        let truth = supported_image(8, 12);
        let a = measure(&truth);
        let mut config =
            SolverConfig::new(IterMap::Hybrid, ConstraintSet::Support(support_of(&truth, 0.0)));
        config.max_iters = 200;
        config.seed = 13;
        let f0 = random_torus_start(&a, config.seed).unwrap();
        let (r1, t1) = run(&a, &config, &f0, Some(&truth)).unwrap();
        let (r2, t2) = run(&a, &config, &f0, Some(&truth)).unwrap();
        assert_eq!(r1.data(), r2.data());
        assert_eq!(t1.records.len(), t2.records.len());
        for (x, y) in t1.records.iter().zip(&t2.records) {
            assert_eq!(x.residual.to_bits(), y.residual.to_bits());
            assert_eq!(x.step_norm.to_bits(), y.step_norm.to_bits());
        }
    }

    #[test]
    fn trace_csv_format() {
        let trace = IterTrace {
            records: vec![
                IterRecord {
                    iter: 0,
                    residual: 0.5,
                    true_error: Some(0.25),
                    step_norm: 0.5,
                },
                IterRecord {
                    iter: 1,
                    residual: 0.1,
                    true_error: None,
                    step_norm: 0.1,
                },
            ],
            status: RunStatus::MaxIters,
            seed: 42,
            iters_run: 1,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,residual,true_error,step_norm");
        assert!(lines.next().unwrap().starts_with("0,"));
        let second = lines.next().unwrap();
        assert_eq!(second.split(',').nth(2).unwrap(), "");
        assert_eq!(lines.next().unwrap(), "# status=max_iters seed=42");
    }

    #[test]
    fn linear_model_zero_and_scalar() {
        let zero = Mat::<f64>::zeros(3, 2);
        let m = linear_model_matrix(&zero);
        assert_eq!(m.nrows(), 5);
        assert!(spectral_radius(&m).unwrap() < 1e-12);

        let h = Mat::from_fn(1, 1, |_, _| 0.5);
        let m = linear_model_matrix(&h);
        let rho = spectral_radius(&m).unwrap();
        assert!(rho < 1.0, "rho = {rho}");
    }

    #[test]
    fn linear_model_contracts_for_sigma_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let s = rng.gen_range(1..5);
            let m = rng.gen_range(1..5);
            // H = U diag(σ) Vᵗ with σ ∈ (0.05, 0.95) via random rotations
            let h = random_matrix_with_singular_values(&mut rng, s, m, 0.05, 0.95);
            let rho = spectral_radius(&linear_model_matrix(&h)).unwrap();
            assert!(rho < 1.0, "rho = {rho}");
        }
    }

    #[test]
    fn linear_model_stalls_at_sigma_one() {
        let h = Mat::from_fn(1, 1, |_, _| 1.0);
        let rho = spectral_radius(&linear_model_matrix(&h)).unwrap();
        assert!((rho - 1.0).abs() < 1e-10, "rho = {rho}");
    }

    /// Random s×m matrix with singular values uniform in (lo, hi).
    pub(crate) fn random_matrix_with_singular_values(
        rng: &mut impl Rng,
        s: usize,
        m: usize,
        lo: f64,
        hi: f64,
    ) -> Mat<f64> {
        let r = s.min(m);
        let sigma: Vec<f64> = (0..r).map(|_| rng.gen_range(lo..hi)).collect();
        let u = random_orthogonal(rng, s);
        let v = random_orthogonal(rng, m);
        Mat::from_fn(s, m, |i, j| {
            (0..r).map(|t| u[(i, t)] * sigma[t] * v[(j, t)]).sum()
        })
    }

    fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Mat<f64> {
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0f64));
        let qr = a.qr();
        let q = qr.compute_Q();
        Mat::from_fn(n, n, |i, j| q[(i, j)])
    }
}
