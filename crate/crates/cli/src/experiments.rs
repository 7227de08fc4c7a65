//! Experiment orchestration: each experiment generates its scene(s),
//! runs the relevant computation, writes CSV/raster artifacts plus a
//! manifest, and records a pass/fail verdict for the checks it defines.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use faer::Mat;
use phaseret::grid::{convolve, dft, Dims, Image, IndexVector};
use phaseret::measure::{measure, pad_support, support_of, true_error, MagnitudeData, SupportMask};
use phaseret::project::ConstraintSet;
use phaseret::solve::{
    linear_model_matrix, random_torus_start, run, spectral_radius, IterMap,
    SolverConfig,
};
use phaseret::synth::{
    add_reference_object, apply_sharp_mask, gaussian_kernel, generate, l_shaped_reference,
    DiscParams, Family, Generated, SceneSpec,
};
use phaseret::tangent::{
    intersection_dimension, nonneg_cone_dimension, support_tangent_angles, ConeParams, TangentMap,
};
use phaseret::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentKind, RunManifest};

/// σ-tolerance used by the table/figure experiments when counting
/// intersection dimensions. Tighter tolerances (1e−12) give identical
/// counts on the reference grids; 1e−15 undercounts because the SVD
/// resolves the σ = 1 cluster only to ~1e−13.
pub const EXPERIMENT_INTERSECTION_TOL: f64 = 1e-9;

/// Default relative support threshold for synthetic smooth images.
pub const DEFAULT_SUPPORT_EPS_REL: f64 = 1e-14;

/// Relative support threshold used by the solver experiments (loose
/// enough to capture the smoothing halo that matters dynamically).
pub const SOLVER_SUPPORT_EPS_REL: f64 = 1e-10;

/// Relative amplitude level whose bounding box the sharp cut-off mask
/// is built from: the mask must cut through the bulk of the object so
/// the masked image has order-one jumps along its whole boundary.
pub const SHARP_MASK_BULK_EPS_REL: f64 = 0.05;

/// Relative threshold for the holography enclosing box (see the
/// comment at its use).
pub const HOLOGRAPHY_BOX_EPS_REL: f64 = 1e-5;

/// Runs the experiment described by `config`, writing all artifacts
/// into `out_dir` (created if absent). The returned manifest's
/// `passed` field reflects the experiment's own acceptance checks.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let mut manifest = RunManifest::new(config);
    match config.experiment {
        ExperimentKind::Table1 => table1(config, out_dir, &mut manifest)?,
        ExperimentKind::Table2 => table2(config, out_dir, &mut manifest)?,
        ExperimentKind::Fig4Spectra => fig4_spectra(config, out_dir, &mut manifest)?,
        ExperimentKind::Fig41Spectra => fig4_1_spectra(config, out_dir, &mut manifest)?,
        ExperimentKind::Restarts => restarts(config, out_dir, &mut manifest)?,
        ExperimentKind::NonuniqueMicrolocal => nonunique_microlocal(config, out_dir, &mut manifest)?,
        ExperimentKind::NonuniqueReducible => nonunique_reducible(config, out_dir, &mut manifest)?,
        ExperimentKind::SharpMask => masked_protocol(config, out_dir, &mut manifest, false)?,
        ExperimentKind::Holography => masked_protocol(config, out_dir, &mut manifest, true)?,
        ExperimentKind::LinearModel => linear_model(config, out_dir, &mut manifest)?,
    }
    manifest.wall_ms = started.elapsed().as_millis();
    manifest.write(out_dir)?;
    Ok(manifest)
}

fn write_text(dir: &Path, name: &str, text: &str, manifest: &mut RunManifest) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn write_raster(dir: &Path, name: &str, image: &Image, manifest: &mut RunManifest) -> Result<()> {
    phaseret::io::write_image(dir.join(name), image)?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn single_image(scene: &SceneSpec) -> Result<Image> {
    match generate(scene)? {
        Generated::Single(img) => Ok(img),
        Generated::Pair(_, _) => Err(Error::InvalidArgument(
            "experiment expects a single-image scene".into(),
        )),
    }
}

fn smoothed_disc_scene(side: usize, k: u32, seed: u64) -> SceneSpec {
    SceneSpec {
        family: Family::SmoothedDiscs {
            k,
            params: DiscParams::default(),
        },
        dims: vec![side, side],
        seed,
        support_box: None,
    }
}

/// Intersection dimensions of the tangent fiber with padded support
/// subspaces, over smoothness levels × paddings × random samples.
fn table1(config: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let levels: Vec<u32> = config
        .smoothness_levels
        .clone()
        .unwrap_or_else(|| (0..=4).collect());
    let pads: Vec<usize> = config.pads.clone().unwrap_or_else(|| (0..=4).collect());
    let samples = config.samples.unwrap_or(5);
    let eps_rel = config.support_eps_rel.unwrap_or(DEFAULT_SUPPORT_EPS_REL);
    let tol = config.intersection_tol.unwrap_or(EXPERIMENT_INTERSECTION_TOL);
    let side = config
        .scene
        .as_ref()
        .map(|s| s.dims[0])
        .unwrap_or(64);
    let dims = Dims::square(side)?;
    let total = dims.total();

    // expected k = 0 row for the default 64×64 protocol
    let k0_expected = [0usize, 4, 12, 24, 40];
    let mut csv = String::from(
        "k,sample,pad,support_size,tangent_dim,kernel_support,lower_bound,dim,sum_support_dim\n",
    );
    let mut all_k0_exact = true;
    let mut all_bounds_hold = true;
    // dims[(k index, sample, pad index)] for the monotonicity check
    let mut measured = vec![vec![vec![0usize; pads.len()]; samples]; levels.len()];

    for (ki, &k) in levels.iter().enumerate() {
        let kernel_mask = if k == 0 {
            None
        } else {
            let g = gaussian_kernel(k, &dims)?;
            Some(support_of(&g, eps_rel * g.max_abs()))
        };
        let kernel_support = kernel_mask.as_ref().map(|m| m.popcount()).unwrap_or(1);
        for sample in 0..samples {
            let seed = config.seed + sample as u64;
            let hard = single_image(&smoothed_disc_scene(side, 0, seed))?;
            let image = single_image(&smoothed_disc_scene(side, k, seed))?;
            let map = TangentMap::new(&image);
            let tangent_dim = map.tangent_dim();
            // convolving with an inversion-symmetric kernel of support
            // S_g guarantees at least this intersection dimension with
            // the sum-support subspace B_{S_F ⊕ S_g}
            let bound = tangent_dim as i64 - (total as i64 - kernel_support as i64) / 2;
            let support = support_of(&image, eps_rel * image.max_abs());
            // the guaranteed directions live on S_F ⊕ S_g, which is
            // slightly larger than the thresholded support of F ∗ g —
            // measure the bound against the subspace it applies to
            let sum_support_dim = match &kernel_mask {
                Some(km) => {
                    let hard_support = support_of(&hard, eps_rel * hard.max_abs());
                    let sum_mask = minkowski_sum(&hard_support, km)?;
                    let spectrum = support_tangent_angles(&map, &sum_mask)?;
                    intersection_dimension(&spectrum, tol)
                }
                None => 0,
            };
            if k >= 1 && (sum_support_dim as i64) < bound {
                all_bounds_hold = false;
            }
            for (pi, &p) in pads.iter().enumerate() {
                let mask = pad_support(&support, p);
                let spectrum = support_tangent_angles(&map, &mask)?;
                let dim = intersection_dimension(&spectrum, tol);
                measured[ki][sample][pi] = dim;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    k,
                    sample,
                    p,
                    support.popcount(),
                    tangent_dim,
                    kernel_support,
                    bound,
                    dim,
                    sum_support_dim
                ));
                if k == 0 && side == 64 && p < k0_expected.len() && dim != k0_expected[p] {
                    all_k0_exact = false;
                }
            }
        }
    }

    // dimensions must not decrease with smoothness (same underlying
    // disc geometry per sample, progressively smoothed)
    let mut monotone = true;
    for sample in 0..samples {
        for pi in 0..pads.len() {
            for ki in 1..levels.len() {
                if measured[ki][sample][pi] < measured[ki - 1][sample][pi] {
                    monotone = false;
                }
            }
        }
    }

    write_text(dir, "table1.csv", &csv, manifest)?;
    manifest.note("intersection_tol", tol);
    manifest.note("support_eps_rel", eps_rel);
    manifest.note("k0_row_exact", all_k0_exact);
    manifest.note("kernel_bounds_hold", all_bounds_hold);
    manifest.note("monotone_in_smoothness", monotone);
    manifest.seeds = (0..samples as u64).map(|s| config.seed + s).collect();
    manifest.passed = all_k0_exact && all_bounds_hold && monotone;
    Ok(())
}

/// Minkowski sum of two masks (periodic), computed by convolving the
/// indicator images.
fn minkowski_sum(a: &SupportMask, b: &SupportMask) -> Result<SupportMask> {
    let dims = a.dims().clone();
    let ind = |m: &SupportMask| {
        let data = m.bits().iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
        Image::new(dims.clone(), data)
    };
    let conv = convolve(&ind(a)?, &ind(b)?)?;
    let bits = conv.data().iter().map(|&v| v > 0.5).collect();
    SupportMask::new(dims, bits)
}

/// Non-negativity cone dimensions over smoothness levels.
fn table2(config: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let levels: Vec<u32> = config
        .smoothness_levels
        .clone()
        .unwrap_or_else(|| (0..=6).collect());
    let samples = config.samples.unwrap_or(1);
    let side = config.scene.as_ref().map(|s| s.dims[0]).unwrap_or(128);
    let mut csv = String::from("k,sample,lineality,cone_span\n");
    let mut spans = vec![vec![0usize; levels.len()]; samples];
    for sample in 0..samples {
        let seed = config.seed + sample as u64;
        for (ki, &k) in levels.iter().enumerate() {
            let mut image = single_image(&smoothed_disc_scene(side, k, seed))?;
            // spectral convolution leaves ≈ −1e−17 noise on zero pixels;
            // clamp it, but refuse genuinely negative scenes
            let floor = -1e-12 * image.max_abs();
            if image.data().iter().any(|&v| v < floor) {
                return Err(Error::InfeasibleScene("scene is not non-negative".into()));
            }
            for v in image.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let params = ConeParams {
                seed: config.seed,
                random_starts: 48,
                iters_per_start: 200,
                ..ConeParams::default()
            };
            let (lineality, span) = nonneg_cone_dimension(&image, &params)?;
            spans[sample][ki] = span;
            csv.push_str(&format!("{},{},{},{}\n", k, sample, lineality, span));
        }
    }
    let mut hard_zero = true;
    let mut monotone = true;
    for (sample, row) in spans.iter().enumerate() {
        if levels.first() == Some(&0) && row[0] != 0 {
            hard_zero = false;
        }
        for ki in 1..row.len() {
            if row[ki] < row[ki - 1] {
                monotone = false;
            }
        }
        let _ = sample;
    }
    write_text(dir, "table2.csv", &csv, manifest)?;
    manifest.note("hard_image_cone_zero", hard_zero);
    manifest.note("monotone_in_smoothness", monotone);
    manifest.seeds = (0..samples as u64).map(|s| config.seed + s).collect();
    manifest.passed = hard_zero && monotone;
    Ok(())
}

/// Principal-angle spectra (`log10(1−σ_n)`) for smoothed-disc images.
fn fig4_spectra(config: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let levels: Vec<u32> = config
        .smoothness_levels
        .clone()
        .unwrap_or_else(|| (0..=4).collect());
    let pads: Vec<usize> = config.pads.clone().unwrap_or_else(|| vec![1]);
    let samples = config.samples.unwrap_or(1);
    let eps_rel = config.support_eps_rel.unwrap_or(DEFAULT_SUPPORT_EPS_REL);
    let side = config.scene.as_ref().map(|s| s.dims[0]).unwrap_or(64);
    for &k in &levels {
        for sample in 0..samples {
            let seed = config.seed + sample as u64;
            let image = single_image(&smoothed_disc_scene(side, k, seed))?;
            let map = TangentMap::new(&image);
            let support = support_of(&image, eps_rel * image.max_abs());
            for &p in &pads {
                let spectrum = support_tangent_angles(&map, &pad_support(&support, p))?;
                let name = format!("spectrum_k{k}_p{p}_s{sample}.csv");
                let mut buf = Vec::new();
                spectrum.write_csv(&mut buf)?;
                write_text(dir, &name, &String::from_utf8_lossy(&buf), manifest)?;
            }
        }
    }
    manifest.note("support_eps_rel", eps_rel);
    manifest.seeds = (0..samples as u64).map(|s| config.seed + s).collect();
    manifest.passed = true;
    Ok(())
}

/// Principal-angle spectra and intersection dimensions for the
/// radial-power family; the dimension at padding p must equal 2p(p+1)
/// independent of the power k.
fn fig4_1_spectra(config: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let levels: Vec<u32> = config
        .smoothness_levels
        .clone()
        .unwrap_or_else(|| (0..=4).collect());
    let pads: Vec<usize> = config.pads.clone().unwrap_or_else(|| vec![1, 3]);
    let samples = config.samples.unwrap_or(1);
    let eps_rel = config.support_eps_rel.unwrap_or(DEFAULT_SUPPORT_EPS_REL);
    let tol = config.intersection_tol.unwrap_or(EXPERIMENT_INTERSECTION_TOL);
    let side = config.scene.as_ref().map(|s| s.dims[0]).unwrap_or(64);
    let mut csv = String::from("k,sample,pad,expected,dim\n");
    let mut all_exact = true;
    for &k in &levels {
        for sample in 0..samples {
            let seed = config.seed + sample as u64;
            let scene = SceneSpec {
                family: Family::RadialPower {
                    k,
                    params: DiscParams::default(),
                },
                dims: vec![side, side],
                seed,
                support_box: None,
            };
            let image = single_image(&scene)?;
            let map = TangentMap::new(&image);
            let support = support_of(&image, eps_rel * image.max_abs());
            for &p in &pads {
                let spectrum = support_tangent_angles(&map, &pad_support(&support, p))?;
                let dim = intersection_dimension(&spectrum, tol);
                let expected = 2 * p * (p + 1);
                if dim != expected {
                    all_exact = false;
                }
                csv.push_str(&format!("{},{},{},{},{}\n", k, sample, p, expected, dim));
                let name = format!("spectrum_k{k}_p{p}_s{sample}.csv");
                let mut buf = Vec::new();
                spectrum.write_csv(&mut buf)?;
                write_text(dir, &name, &String::from_utf8_lossy(&buf), manifest)?;
            }
        }
    }
    write_text(dir, "dims.csv", &csv, manifest)?;
    manifest.note("dims_match_2p_p_plus_1", all_exact);
    manifest.seeds = (0..samples as u64).map(|s| config.seed + s).collect();
    manifest.passed = all_exact;
    Ok(())
}

struct RestartOutcome {
    seed: u64,
    status: String,
    final_residual: f64,
    final_error: f64,
    /// Median residual over the last quarter of the trace (robust to
    /// the order-of-magnitude oscillation of a stalled hybrid map).
    median_residual: f64,
    /// Median true error over the same tail window.
    median_error: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Runs `restarts` independent hybrid-map trials against `data` with
/// the given support constraint, tracing against `truth` (unit norm).
#[allow(clippy::too_many_arguments)]
fn run_restarts(
    data: &MagnitudeData,
    mask: &SupportMask,
    truth: &Image,
    base_seed: u64,
    restarts: usize,
    max_iters: usize,
    record_every: usize,
    stagnation_window: usize,
    stagnation_rel_tol: f64,
    stop_true_error: Option<f64>,
    dir: &Path,
    prefix: &str,
    manifest: &mut RunManifest,
) -> Result<Vec<RestartOutcome>> {
    let mut outcomes = Vec::with_capacity(restarts);
    let mut best: Option<(f64, Image)> = None;
    for i in 0..restarts {
        let seed = base_seed + i as u64;
        let mut solver = SolverConfig::new(IterMap::Hybrid, ConstraintSet::Support(mask.clone()));
        solver.max_iters = max_iters;
        solver.seed = seed;
        solver.record_every = record_every;
        solver.stagnation_window = stagnation_window;
        solver.stagnation_rel_tol = stagnation_rel_tol;
        solver.stop_true_error = stop_true_error;
        let f0 = random_torus_start(data, seed)?;
        let (recon, trace) = run(data, &solver, &f0, Some(truth))?;
        let name = format!("{prefix}trace_{i}.csv");
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        write_text(dir, &name, &String::from_utf8_lossy(&buf), manifest)?;
        let err = trace.final_true_error().unwrap_or(f64::NAN);
        if best.as_ref().map(|(e, _)| err < *e).unwrap_or(true) {
            best = Some((err, recon));
        }
        let tail_len = (trace.records.len() / 4).max(1).min(trace.records.len());
        let tail = &trace.records[trace.records.len() - tail_len..];
        outcomes.push(RestartOutcome {
            seed,
            status: trace.status.as_str().to_string(),
            final_residual: trace.final_residual(),
            final_error: err,
            median_residual: median(tail.iter().map(|r| r.residual).collect()),
            median_error: median(tail.iter().filter_map(|r| r.true_error).collect()),
        });
        manifest.seeds.push(seed);
        manifest.statuses.push(trace.status.as_str().to_string());
    }
    if let Some((_, recon)) = best {
        write_raster(dir, &format!("{prefix}best_recon.primg"), &recon, manifest)?;
    }
    Ok(outcomes)
}

fn outcomes_csv(outcomes: &[RestartOutcome]) -> String {
    let mut csv =
        String::from("seed,status,final_residual,final_true_error,median_residual,median_true_error\n");
    for o in outcomes {
        csv.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e}\n",
            o.seed, o.status, o.final_residual, o.final_error, o.median_residual, o.median_error
        ));
    }
    csv
}

/// Multi-restart convergence study. For hard (k = 0) scenes the check
/// is that at least half the runs reconstruct to 1e−8 relative error;
/// for smoothed scenes, that at least 80% of runs stagnate with the
/// residual tracking the square of the true error.
fn restarts(config: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let scene = config
        .scene
        .clone()
        .unwrap_or_else(|| smoothed_disc_scene(256, 0, config.seed));
    let smoothed = matches!(scene.family, Family::SmoothedDiscs { k, .. } if k >= 1);
    let truth = {
        let raw = single_image(&scene)?;
        let n = raw.norm2();
        if n == 0.0 {
            return Err(Error::InfeasibleScene("empty scene".into()));
        }
        raw.scale(1.0 / n) // unit norm makes all error thresholds relative
    };
    write_raster(dir, "truth.primg", &truth, manifest)?;
    let p = config.pad.unwrap_or(1);
    let eps_rel = config.support_eps_rel.unwrap_or(SOLVER_SUPPORT_EPS_REL);
    let mask = pad_support(&support_of(&truth, eps_rel * truth.max_abs()), p);
    let data = measure(&truth);
    let restarts_n = config.restarts.unwrap_or(10);
    let max_iters = config.max_iters.unwrap_or(if smoothed { 10_000 } else { 50_000 });
    let record_every = config.record_every.unwrap_or(if smoothed { 20 } else { 100 });
    let window = config.stagnation_window.unwrap_or(if smoothed { 200 } else { 1000 });
    let stag_tol = config.stagnation_rel_tol.unwrap_or(0.3);

    let outcomes = run_restarts(
        &data,
        &mask,
        &truth,
        config.seed,
        restarts_n,
        max_iters,
        record_every,
        window,
        stag_tol,
        None,
        dir,
        "",
        manifest,
    )?;
    write_text(dir, "outcomes.csv", &outcomes_csv(&outcomes), manifest)?;

    let passed = if smoothed {
        // stagnated with residual ≈ (true error)² within a factor 100
        let good = outcomes
            .iter()
            .filter(|o| {
                let ratio = o.median_residual / (o.median_error * o.median_error);
                o.status == "stagnated" && (1e-2..=1e2).contains(&ratio)
            })
            .count();
        manifest.note("stagnated_with_quadratic_residual", good);
        good * 10 >= restarts_n * 8
    } else {
        let converged = outcomes.iter().filter(|o| o.final_error < 1e-8).count();
        manifest.note("runs_below_1e8", converged);
        converged * 2 >= restarts_n
    };
    manifest.note("smoothed_mode", smoothed);
    manifest.note("pad", p);
    manifest.passed = passed;
    Ok(())
}

/// Two images built from spectrally disjoint packets, one with its
/// packets independently translated: near-identical magnitude data,
/// far-apart images.
fn nonunique_microlocal(
    config: &ExperimentConfig,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let scene = config.scene.clone().unwrap_or(SceneSpec {
        family: Family::Microlocal {
            packets: vec![],
            translations: vec![],
        },
        dims: vec![1024, 1024],
        seed: config.seed,
        support_box: None,
    });
    let (fa, fb) = match generate(&scene)? {
        Generated::Pair(a, b) => (a, b),
        Generated::Single(_) => {
            return Err(Error::InvalidArgument(
                "microlocal experiment needs a pair scene".into(),
            ))
        }
    };
    let (da, db) = (measure(&fa), measure(&fb));
    let amax = da.max();
    let max_diff = da
        .data()
        .iter()
        .zip(db.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let rel_diff = max_diff / amax;
    let (dist, _) = true_error(&fb, &fa)?;
    let rel_dist = dist / fa.norm2();
    write_raster(dir, "image_a.primg", &fa, manifest)?;
    write_raster(dir, "image_b.primg", &fb, manifest)?;
    // record the packet parameters actually used (σ is derived from
    // the grid size when the scene doesn't pin it down)
    let dims = Dims::new(&scene.dims)?;
    let packets = phaseret::synth::default_microlocal_packets(&dims);
    manifest.note("packet_sigma", packets[0].sigma);
    manifest.note("max_data_diff_rel", rel_diff);
    manifest.note("image_distance_rel", rel_dist);
    manifest.passed = rel_diff <= 1e-12;
    Ok(())
}

/// Reducible-spectrum pairs over several seeds: equal data, distant
/// images, every seed.
fn nonunique_reducible(
    config: &ExperimentConfig,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let samples = config.samples.unwrap_or(10);
    let side = config.scene.as_ref().map(|s| s.dims[0]).unwrap_or(64);
    let mut csv = String::from("seed,data_diff_rel,image_distance_rel\n");
    let mut all_pass = true;
    for i in 0..samples {
        let seed = config.seed + i as u64;
        let scene = SceneSpec {
            family: Family::ReduciblePair,
            dims: vec![side, side],
            seed,
            support_box: None,
        };
        let (f, fp) = match generate(&scene)? {
            Generated::Pair(a, b) => (a, b),
            _ => unreachable!("reducible scenes generate pairs"),
        };
        let (da, db) = (measure(&f), measure(&fp));
        let data_rel = da.dist2(&db) / da.norm2();
        let (dist, _) = true_error(&fp, &f)?;
        let dist_rel = dist / f.norm2();
        if data_rel > 1e-12 || dist_rel < 0.05 {
            all_pass = false;
        }
        csv.push_str(&format!("{},{:e},{:e}\n", seed, data_rel, dist_rel));
        manifest.seeds.push(seed);
    }
    write_text(dir, "pairs.csv", &csv, manifest)?;
    manifest.note("all_pairs_pass", all_pass);
    manifest.passed = all_pass;
    Ok(())
}

/// Axis bounds (min, max) of a mask assumed not to wrap the period.
fn mask_bounds(mask: &SupportMask) -> Vec<(i64, i64)> {
    let dims = mask.dims();
    let mut bounds = vec![(i64::MAX, i64::MIN); dims.d()];
    for (flat, &b) in mask.bits().iter().enumerate() {
        if b {
            let j = dims.unflat(flat);
            for (c, &jc) in j.iter().enumerate() {
                bounds[c].0 = bounds[c].0.min(jc);
                bounds[c].1 = bounds[c].1.max(jc);
            }
        }
    }
    bounds
}

/// A sharp cut-off mask: an egg-shaped region inscribed in the
/// bounding box of the image's high-amplitude set (pass an eps around
/// a few percent of max, so the cut runs through the bulk of the
/// object and the masked image has order-one jumps along its whole
/// boundary). Two properties of the shape matter:
///
/// - the boundary is smoothly curved, so its edge-diffraction spectrum
///   sweeps every direction — a polygonal cut concentrates each edge's
///   spectral contribution near that edge's normal, and those nearly
///   disjoint packets admit near-duplicate images that the solver
///   happily converges to instead of the target;
/// - the first-harmonic term makes the region non-invariant under
///   inversion, which would otherwise preserve the problematic
///   symmetry.
fn corner_cut_mask(image: &Image, eps_abs: f64) -> SupportMask {
    let dims = image.dims().clone();
    let support = support_of(image, eps_abs);
    let b = mask_bounds(&support);
    let (i0, i1) = b[0];
    let (j0, j1) = b[1];
    let (ci, cj) = ((i0 + i1) as f64 / 2.0, (j0 + j1) as f64 / 2.0);
    // keep the 15% radial excursion of the egg profile inside the box
    let (ai, aj) = (
        ((i1 - i0) as f64 / 2.0 / 1.15).max(1.0),
        ((j1 - j0) as f64 / 2.0 / 1.15).max(1.0),
    );
    let mut mask = SupportMask::empty(dims.clone());
    for flat in 0..dims.total() {
        let j = dims.unflat(flat);
        let (u, v) = ((j[0] as f64 - ci) / ai, (j[1] as f64 - cj) / aj);
        let rho = (u * u + v * v).sqrt();
        let theta = v.atan2(u);
        if rho <= 1.0 + 0.15 * theta.cos() + 0.08 * (2.0 * theta).sin() {
            mask.bits_mut()[flat] = true;
        }
    }
    mask
}

/// Shared driver for the sharp-mask and holography experiments: run
/// the modified protocol and an unmodified baseline on the same smooth
/// image, best of `restarts` each.
fn masked_protocol(
    config: &ExperimentConfig,
    dir: &Path,
    manifest: &mut RunManifest,
    holography: bool,
) -> Result<()> {
    let scene = config
        .scene
        .clone()
        .unwrap_or_else(|| smoothed_disc_scene(128, 6, config.seed));
    let truth = {
        let raw = single_image(&scene)?;
        let n = raw.norm2();
        raw.scale(1.0 / n)
    };
    write_raster(dir, "truth.primg", &truth, manifest)?;
    let eps_rel = config.support_eps_rel.unwrap_or(SOLVER_SUPPORT_EPS_REL);
    let eps_abs = eps_rel * truth.max_abs();
    let restarts_n = config.restarts.unwrap_or(20);
    // protocol runs converge geometrically but slowly (observed error
    // decay ~3e−5 per iteration for holography, faster for the sharp
    // mask), so they get a larger budget than the baseline, which only
    // has to demonstrate stagnation
    let protocol_iters = config
        .max_iters
        .unwrap_or(if holography { 80_000 } else { 50_000 });
    let baseline_iters = config.max_iters.unwrap_or(20_000);
    let record_every = config.record_every.unwrap_or(50);
    let window = config.stagnation_window.unwrap_or(100);
    let stag_tol = config.stagnation_rel_tol.unwrap_or(0.3);

    // modified protocol: target image + support estimate
    let (target, estimate) = if holography {
        let dims = truth.dims().clone();
        let arm = dims.sides()[0] / 8;
        let reference = l_shaped_reference(&dims, arm, arm / 4, truth.max_abs())?;
        // enclosing box from a mid-range threshold: tight enough that
        // the slowest contraction mode stays well away from 1, loose
        // enough that the excluded halo mass (~7e−9 of the norm) is far
        // below the reconstruction target
        let box_eps = HOLOGRAPHY_BOX_EPS_REL * truth.max_abs();
        let (combined, mask) =
            add_reference_object(&truth, &reference, &IndexVector(vec![2, 2]), box_eps)?;
        write_raster(dir, "reference.primg", &reference, manifest)?;
        (combined, mask)
    } else {
        let cut = corner_cut_mask(&truth, SHARP_MASK_BULK_EPS_REL * truth.max_abs());
        let (masked, estimate) = apply_sharp_mask(&truth, &cut);
        (masked, estimate)
    };
    write_raster(dir, "target.primg", &target, manifest)?;
    let target_norm = target.norm2();
    let data = measure(&target);
    // protocol runs get the full iteration budget: a long searching
    // phase before the plunge into the basin looks exactly like
    // stagnation, so early exit would discard eventual converges
    let no_stagnation_window = protocol_iters / record_every + 2;
    let protocol = run_restarts(
        &data,
        &estimate,
        &target,
        config.seed,
        restarts_n,
        protocol_iters,
        record_every,
        no_stagnation_window,
        stag_tol,
        // stop as soon as the verdict threshold is safely cleared
        Some(0.5e-6 * target_norm),
        dir,
        "protocol_",
        manifest,
    )?;
    write_text(dir, "protocol_outcomes.csv", &outcomes_csv(&protocol), manifest)?;

    // baseline: the smooth image with a padded-support constraint only
    let base_mask = pad_support(&support_of(&truth, eps_abs), config.pad.unwrap_or(1));
    let base_data = measure(&truth);
    let baseline = run_restarts(
        &base_data,
        &base_mask,
        &truth,
        config.seed + 1000,
        restarts_n,
        baseline_iters,
        record_every,
        window,
        stag_tol,
        None,
        dir,
        "baseline_",
        manifest,
    )?;
    write_text(dir, "baseline_outcomes.csv", &outcomes_csv(&baseline), manifest)?;

    let best_protocol = protocol
        .iter()
        .map(|o| o.final_error / target_norm)
        .fold(f64::INFINITY, f64::min);
    let best_baseline = baseline
        .iter()
        .map(|o| o.final_error) // truth has unit norm
        .fold(f64::INFINITY, f64::min);
    manifest.note("best_protocol_rel_error", best_protocol);
    manifest.note("best_baseline_rel_error", best_baseline);
    manifest.note("protocol", if holography { "holography" } else { "sharp_mask" });
    manifest.passed = best_protocol < 1e-6 && best_baseline > 1e-2;
    Ok(())
}

/// Eigenvalue moduli of the linearized hybrid map `[[2HᵗH, Hᵗ], [−H, 0]]`
/// for random H with singular values inside (0, 1), plus the σ = 1
/// stall case.
fn linear_model(config: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let samples = config.samples.unwrap_or(100);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut csv = String::from("index,rows,cols,spectral_radius\n");
    let mut all_contract = true;
    for idx in 0..samples {
        let s = rng.gen_range(1..=8usize);
        let m = rng.gen_range(1..=8usize);
        let h = random_matrix_with_singular_values(&mut rng, s, m, 0.02, 0.98);
        let rho = spectral_radius(&linear_model_matrix(&h))?;
        if rho >= 1.0 {
            all_contract = false;
        }
        csv.push_str(&format!("{},{},{},{:e}\n", idx, s, m, rho));
    }
    // non-transversal stall: a singular value exactly 1
    let mut h1 = random_matrix_with_singular_values(&mut rng, 4, 4, 0.2, 0.8);
    // overwrite with an exact σ = 1 direction by embedding the identity
    // in the first coordinate
    h1[(0, 0)] = 1.0;
    for t in 1..4 {
        h1[(0, t)] = 0.0;
        h1[(t, 0)] = 0.0;
    }
    let rho_stall = spectral_radius(&linear_model_matrix(&h1))?;
    let stall_on_unit_circle = (rho_stall - 1.0).abs() <= 1e-8;
    csv.push_str(&format!("stall,4,4,{:e}\n", rho_stall));
    write_text(dir, "spectral_radii.csv", &csv, manifest)?;
    manifest.note("all_contract", all_contract);
    manifest.note("stall_spectral_radius", rho_stall);
    manifest.passed = all_contract && stall_on_unit_circle;
    Ok(())
}

/// Random s×m matrix with singular values uniform in (lo, hi).
pub fn random_matrix_with_singular_values(
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
    Mat::from_fn(s, m, |i, j| (0..r).map(|t| u[(i, t)] * sigma[t] * v[(j, t)]).sum())
}

fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Mat<f64> {
    let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0f64));
    let q = a.qr().compute_Q();
    Mat::from_fn(n, n, |i, j| q[(i, j)])
}

/// Converts a real PRIMG raster to CSV (`index per axis..., value`) or,
/// for 2-d rasters, to a binary 16-bit PGM scaled to the value range.
pub fn convert_raster(input: &Path, output: &Path) -> Result<()> {
    let image = phaseret::io::read_image(input)?;
    let ext = output
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "csv" => {
            let dims = image.dims();
            let mut out = String::new();
            for c in 0..dims.d() {
                out.push_str(&format!("j{c},"));
            }
            out.push_str("value\n");
            for flat in 0..dims.total() {
                let j = dims.unflat(flat);
                for jc in &j {
                    out.push_str(&format!("{jc},"));
                }
                out.push_str(&format!("{:e}\n", image.data()[flat]));
            }
            std::fs::write(output, out)?;
        }
        "pgm" => {
            let dims = image.dims();
            if dims.d() != 2 {
                return Err(Error::InvalidArgument("PGM export requires a 2-d raster".into()));
            }
            let (rows, cols) = (dims.sides()[0], dims.sides()[1]);
            let lo = image.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = image.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let mut bytes = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
            for &v in image.data() {
                let q = (((v - lo) / span) * 65535.0).round() as u16;
                bytes.extend_from_slice(&q.to_be_bytes());
            }
            let mut f = std::fs::File::create(output)?;
            f.write_all(&bytes)?;
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unsupported convert target '.{other}' (use .csv or .pgm)"
            )))
        }
    }
    Ok(())
}

/// Summary statistics the `analyze` subcommand prints for a trace CSV.
pub struct TraceSummary {
    pub records: usize,
    pub status: String,
    pub seed: u64,
    pub final_residual: f64,
    pub final_true_error: Option<f64>,
}

/// Parses a solver trace CSV produced by this tool.
pub fn read_trace(path: &Path) -> Result<TraceSummary> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::BadFormat("empty trace".into()))?;
    if header != "iter,residual,true_error,step_norm" {
        return Err(Error::BadFormat("not a solver trace CSV".into()));
    }
    let mut records = 0usize;
    let mut final_residual = f64::NAN;
    let mut final_true_error = None;
    let mut status = String::new();
    let mut seed = 0u64;
    for line in lines {
        if let Some(rest) = line.strip_prefix("# ") {
            for part in rest.split_whitespace() {
                if let Some(v) = part.strip_prefix("status=") {
                    status = v.to_string();
                } else if let Some(v) = part.strip_prefix("seed=") {
                    seed = v
                        .parse()
                        .map_err(|_| Error::BadFormat("bad seed in trace footer".into()))?;
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::BadFormat(format!("bad trace row: {line}")));
        }
        final_residual = fields[1]
            .parse()
            .map_err(|_| Error::BadFormat("bad residual".into()))?;
        final_true_error = if fields[2].is_empty() {
            None
        } else {
            Some(
                fields[2]
                    .parse()
                    .map_err(|_| Error::BadFormat("bad true_error".into()))?,
            )
        };
        records += 1;
    }
    if status.is_empty() {
        return Err(Error::BadFormat("trace missing status footer".into()));
    }
    Ok(TraceSummary {
        records,
        status,
        seed,
        final_residual,
        final_true_error,
    })
}

/// Data-space magnitudes of a raster (used by `analyze --spectrum-of`).
pub fn magnitude_of(image: &Image) -> Vec<f64> {
    dft(image).data().iter().map(|z| z.norm()).collect()
}
