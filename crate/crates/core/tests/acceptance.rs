//! Acceptance suite. Each test prints one `PASS` or `FAIL` line naming its
//! criterion, then asserts it. Tests hold a shared lock so that the runtime
//! budgets are measured without competing work.
//!
//! Run with `cargo test -p sphmimo-core --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphmimo::analysis::{
    effective_rank, effective_rank_from_spectrum, reproduce_field, reproduction_target, singular_spectrum,
    windowed_system,
};
use sphmimo::commands::{cmd_analyze_rank, cmd_simulate, AnalyzeRequest};
use sphmimo::freefield::{
    cap_diag, freefield_system_sh, nearfield_pressure_open, planewave_amplitude, propagation_diag, SceneGeometry,
    SphArraySpec,
};
use sphmimo::io::config::{ConfigOverrides, RunConfig};
use sphmimo::room::{room_system_sh, synthesize_rir, RoomSpec, SynthesisParams};
use sphmimo::sampling::{SphGrid, SteeringMatrix, ShVector, BUILTIN_GRIDS};
use sphmimo::special::{mode_strength_seq, sh_count, sh_row, RadialContext, SphereKind, AIR_DENSITY, SPEED_OF_SOUND};
use sphmimo::transforms::{apply_left, apply_right, mirror_plane_matrix, wigner_d_matrix, MirrorPlane, ShOperator};
use sphmimo::CMatrix;

static SERIAL: Mutex<()> = Mutex::new(());

const BETAS: [f64; 3] = [0.005, 0.05, 0.5];

fn report(name: &str, ok: bool, detail: &str) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shoebox(beta: f64) -> RunConfig {
    RunConfig::load(&configs_dir().join(format!("shoebox_beta_{beta}.json")), &ConfigOverrides::default())
        .expect("shipped config loads")
}

fn grid72() -> SphGrid {
    SphGrid::builtin("tdesign10_72").unwrap()
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// A free-field scene with random orders, radii, sphere kind, distance and
/// orientation; `k` is drawn so that `k·r_L ∈ [0.5, 5]`.
struct RandomScene {
    spec_l: SphArraySpec,
    spec_m: SphArraySpec,
    geom: SceneGeometry,
    k: f64,
}

fn random_scene(rng: &mut ChaCha8Rng) -> RandomScene {
    let (nl, nm) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    let r_l = rng.gen_range(0.05..0.3);
    let r_m = rng.gen_range(0.03..0.2);
    let sphere = if rng.gen_bool(0.5) {
        SphereKind::Rigid { r0: r_m * rng.gen_range(0.5..=1.0) }
    } else {
        SphereKind::Open
    };
    let spec_l = SphArraySpec::loudspeaker(r_l, grid72(), nl, rng.gen_range(0.1..0.6)).unwrap();
    let spec_m = SphArraySpec::microphone(r_m, grid72(), nm, sphere).unwrap();
    let dir = random_direction(rng);
    let d = rng.gen_range(10.0..30.0) * r_l;
    let pos_l = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
    let pos_m = [pos_l[0] + d * dir[0], pos_l[1] + d * dir[1], pos_l[2] + d * dir[2]];
    let k = rng.gen_range(0.5..5.0) / r_l;
    RandomScene {
        spec_l,
        spec_m,
        geom: SceneGeometry::new(pos_l, pos_m).unwrap(),
        k,
    }
}

#[test]
fn unit_rank_of_free_field_scenes() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let s = random_scene(&mut rng);
        let g = freefield_system_sh(&s.spec_l, &s.spec_m, &s.geom, s.k).unwrap();
        let sv = singular_spectrum(g.entries());
        worst = worst.max(sv[1] / sv[0]);
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-12 && elapsed < Duration::from_secs(10);
    report(
        "unit rank (50 free-field scenes)",
        ok,
        &format!("max sigma2/sigma1 = {worst:.2e} (< 1e-12), {:.2} s (< 10 s)", elapsed.as_secs_f64()),
    );
    assert!(ok);
}

fn random_rotation(rng: &mut ChaCha8Rng, order: usize) -> ShOperator {
    wigner_d_matrix(order, rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI))
}

fn random_mirror(rng: &mut ChaCha8Rng, order: usize) -> ShOperator {
    let plane = [MirrorPlane::Xz, MirrorPlane::Yz, MirrorPlane::Xy][rng.gen_range(0..3)];
    mirror_plane_matrix(order, plane)
}

fn max_sv_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / a[0]
}

#[test]
fn rotation_and_mirror_invariance() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let s = random_scene(&mut rng);
        // half the scenes are rooms with one reflection order, so the spectrum is not rank one
        let sys = if i % 2 == 0 {
            freefield_system_sh(&s.spec_l, &s.spec_m, &s.geom, s.k).unwrap()
        } else {
            let (pl, pm) = ([1.0, 1.2, 1.4], [3.1, 2.7, 2.2]);
            let geom = SceneGeometry::new(pl, pm).unwrap();
            let room = RoomSpec::uniform([4.0, 3.5, 3.0], rng.gen_range(0.1..0.9), 1, geom).unwrap();
            room_system_sh(&room, &s.spec_l, &s.spec_m, s.k).unwrap()
        };
        let base = singular_spectrum(sys.entries());
        let (nm, nl) = (sys.mic_order(), sys.speaker_order());
        let variants = [
            apply_left(&sys, &random_rotation(&mut rng, nm)).unwrap(),
            apply_right(&sys, &random_rotation(&mut rng, nl)).unwrap(),
            apply_left(&sys, &random_mirror(&mut rng, nm)).unwrap(),
            apply_right(&sys, &random_mirror(&mut rng, nl)).unwrap(),
            apply_right(
                &apply_left(&sys, &random_mirror(&mut rng, nm).compose(&random_rotation(&mut rng, nm)).unwrap())
                    .unwrap(),
                &random_rotation(&mut rng, nl),
            )
            .unwrap(),
        ];
        for v in &variants {
            worst = worst.max(max_sv_gap(&base, &singular_spectrum(v.entries())));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-9 && elapsed < Duration::from_secs(20);
    report(
        "rotation/mirror invariance (50 scenes)",
        ok,
        &format!("max |d sigma|/sigma1 = {worst:.2e} (< 1e-9), {:.2} s (< 20 s)", elapsed.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn rank_bound_for_synthetic_image_sets() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec_l = SphArraySpec::loudspeaker(0.2, grid72(), 5, 0.3).unwrap();
    let spec_m = SphArraySpec::microphone(0.15, grid72(), 5, SphereKind::Rigid { r0: 0.15 }).unwrap();
    let k = 2.0 * PI * 700.0 / SPEED_OF_SOUND;
    let pos_m = [0.0; 3];
    let mut ok = true;
    let mut detail = Vec::new();
    for images in [1usize, 3, 10] {
        let mut g = CMatrix::zeros(36, 36);
        for _ in 0..images {
            let dir = random_direction(&mut rng);
            let d = rng.gen_range(3.0..20.0);
            let geom = SceneGeometry::new([d * dir[0], d * dir[1], d * dir[2]], pos_m).unwrap();
            let a = rng.gen_range(0.1..1.0);
            g += freefield_system_sh(&spec_l, &spec_m, &geom, k).unwrap().entries() * Complex64::new(a, 0.0);
        }
        let sv = singular_spectrum(&g);
        let rank = sv.iter().filter(|s| **s > 1e-10 * sv[0]).count();
        let tail = sv.get(images).map_or(0.0, |s| s / sv[0]);
        ok &= rank <= images.min(36) && tail < 1e-10;
        detail.push(format!("I={images}: rank {rank}, sigma_(I+1)/sigma1 = {tail:.1e}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    report(
        "rank bound (I = 1, 3, 10; N = 5)",
        ok,
        &format!("{}; {:.2} s (< 10 s)", detail.join("; "), elapsed.as_secs_f64()),
    );
    assert!(ok);
}

/// First τ on a 0.5 ms grid at or after the midpoint of the gap between the
/// end of the direct event and the start of the earliest reflection.
fn first_post_direct_tau(cfg: &RunConfig) -> f64 {
    let room = cfg.room_spec().unwrap();
    let geom = room.geometry();
    let spread = cfg.scene.loudspeaker.radius + cfg.scene.microphone.radius;
    let direct_end = (geom.distance() + spread) / SPEED_OF_SOUND;
    let first = sphmimo::room::enumerate_images(&room)
        .iter()
        .filter(|g| !g.is_direct())
        .map(|g| g.distance)
        .fold(f64::INFINITY, f64::min);
    let reflection_start = (first - spread) / SPEED_OF_SOUND;
    let mid = 0.5 * (direct_end + reflection_start);
    (mid / 5e-4).ceil() * 5e-4
}

#[test]
fn erank_against_window_length_in_three_rooms() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut early = Vec::new();
    let mut steady = Vec::new();
    let mut tau0 = 0.0;
    for beta in BETAS {
        let cfg = shoebox(beta);
        let rir = synthesize_rir(
            &cfg.room_spec().unwrap(),
            &cfg.loudspeaker_spec().unwrap(),
            &cfg.microphone_spec().unwrap(),
            SynthesisParams::new(cfg.synthesis.fs, cfg.synthesis.length),
        )
        .unwrap();
        let f = cfg.analysis.analysis_freq;
        tau0 = first_post_direct_tau(&cfg);
        early.push(effective_rank(&windowed_system(&rir, tau0, f).unwrap()).unwrap());
        steady.push(effective_rank(&windowed_system(&rir, rir.duration(), f).unwrap()).unwrap());
    }
    let elapsed = start.elapsed();
    let a = early.iter().all(|e| (e - 1.0).abs() <= 0.3);
    let b = steady.windows(2).all(|w| w[1] > w[0]);
    let c = steady.iter().all(|e| *e <= 36.0);
    let fast = elapsed < Duration::from_secs(300);
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>().join(" / ");
    report(
        "erank-vs-window (a) erank at first post-direct tau within 0.3 of 1",
        a,
        &format!("tau = {:.1} ms, erank {} for beta 0.005 / 0.05 / 0.5", tau0 * 1e3, fmt(&early)),
    );
    report("erank-vs-window (b) steady-state erank strictly increasing", b, &format!("erank {}", fmt(&steady)));
    report("erank-vs-window (c) steady-state erank <= 36", c, &format!("max {:.3}", steady.iter().cloned().fold(0.0, f64::max)));
    report("erank-vs-window runtime < 5 min", fast, &format!("{:.1} s", elapsed.as_secs_f64()));
    assert!(a && b && c && fast);
}

#[test]
fn reproduction_error_against_reflection() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut errors = Vec::new();
    let mut counts = Vec::new();
    for beta in BETAS {
        let cfg = shoebox(beta);
        let k = 2.0 * PI * cfg.analysis.analysis_freq / SPEED_OF_SOUND;
        let sys = room_system_sh(
            &cfg.room_spec().unwrap(),
            &cfg.loudspeaker_spec().unwrap(),
            &cfg.microphone_spec().unwrap(),
            k,
        )
        .unwrap();
        let target = reproduction_target(sys.mic_order()).unwrap();
        let r = reproduce_field(&sys, &target, cfg.analysis.threshold_db).unwrap();
        errors.push(r.error_db);
        counts.push(r.inverted_count);
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let gap = errors[0] - errors[2];
    let wide = gap >= 15.0;
    let counts_ok = counts.windows(2).all(|w| w[1] >= w[0]);
    let detail = format!(
        "errors {:.2} / {:.2} / {:.2} dB, inverted {} / {} / {}",
        errors[0], errors[1], errors[2], counts[0], counts[1], counts[2]
    );
    report("reproduction-vs-reflection error strictly decreasing", decreasing, &detail);
    report("reproduction-vs-reflection beta 0.5 at least 15 dB below beta 0.005", wide, &format!("gap {gap:.2} dB"));
    report("reproduction-vs-reflection inverted count nondecreasing", counts_ok, &detail);
    assert!(decreasing && wide && counts_ok);
}

#[test]
fn effective_rank_oracles() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let identity = effective_rank(&CMatrix::identity(6, 6)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = DMatrix::from_fn(5, 1, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let v = DMatrix::from_fn(1, 7, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let outer = effective_rank(&(&u * &v)).unwrap();
    let pair = effective_rank_from_spectrum(&[3.0, 1.0]).unwrap();
    let hand = {
        let (p, q) = (0.75f64, 0.25f64);
        (-(p * p.ln() + q * q.ln())).exp()
    };
    let m = DMatrix::from_fn(6, 4, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let e1 = effective_rank(&m).unwrap();
    let e2 = effective_rank(&(&m * Complex64::new(-37.5, 12.0))).unwrap();
    let ok = identity == 6.0
        && (outer - 1.0).abs() < 1e-12
        && (pair - 1.7548).abs() < 1e-4
        && (pair - hand).abs() < 1e-12
        && (e1 - e2).abs() < 1e-12;
    report(
        "effective-rank oracles",
        ok,
        &format!(
            "I6 {identity}, outer product {outer:.15}, {{3,1}} {pair:.6} (hand {hand:.6}), scale gap {:.1e}",
            (e1 - e2).abs()
        ),
    );
    assert!(ok);
}

#[test]
fn sft_round_trip_and_near_far_agreement() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = true;
    let mut detail = Vec::new();
    for name in BUILTIN_GRIDS {
        let grid = SphGrid::builtin(name).unwrap();
        let order = grid.exactness_order();
        let y = SteeringMatrix::new(&grid, order);
        let gram = y.entries().adjoint() * y.entries() * Complex64::new(4.0 * PI / grid.len() as f64, 0.0);
        let ortho = (gram - CMatrix::identity(sh_count(order), sh_count(order))).camax();
        let coeffs: Vec<Complex64> = (0..sh_count(order))
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let f = ShVector::new(coeffs.clone(), order).unwrap();
        let back = y.forward(&y.inverse(&f).unwrap()).unwrap();
        let trip = back.coeffs().iter().zip(&coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        ok &= ortho < 1e-10 && trip < 1e-10;
        detail.push(format!("{name} (order {order}): ortho {ortho:.1e}, round trip {trip:.1e}"));
    }
    report("SFT orthonormality and round trip on shipped grids", ok, &detail.join("; "));

    // the plane-wave link against direct evaluation of the cap-array field on a
    // small sphere around a far point, with the loudspeaker beamed at it
    let spec_l = SphArraySpec::loudspeaker(0.1, grid72(), 5, 0.3).unwrap();
    let k = 2.0 * PI * 700.0 / SPEED_OF_SOUND;
    let mut worst = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..5 {
        let dir = random_direction(&mut rng);
        let d = rng.gen_range(5.0..10.0);
        let centre = [d * dir[0], d * dir[1], d * dir[2]];
        let geom = SceneGeometry::new([0.0; 3], centre).unwrap();
        min_ratio = min_ratio.min(geom.distance() / spec_l.radius());
        // matched beam toward the microphone: u = conj(y(θ) H Q)
        let theta = geom.theta_lm();
        let h = propagation_diag(&spec_l, geom.distance(), k).unwrap();
        let q = cap_diag(&spec_l).unwrap();
        let beam: Vec<Complex64> = sh_row(5, theta.theta, theta.phi)
            .iter()
            .zip(h.iter().zip(&q))
            .map(|(y, (h, q))| (y * h * *q).conj())
            .collect();
        let steering = SteeringMatrix::new(spec_l.grid(), 5);
        let u = steering.inverse(&ShVector::new(beam, 5).unwrap()).unwrap();
        let u_sh = steering.forward(&u).unwrap();
        let a = planewave_amplitude(&spec_l, &u_sh, &geom, k).unwrap();
        let (r_m, order_m) = (0.04, 12);
        let ctx = RadialContext {
            k,
            r_speaker: spec_l.radius(),
            r_mic: r_m,
            sphere: SphereKind::Open,
            rho0: AIR_DENSITY,
            c: SPEED_OF_SOUND,
        };
        let b = mode_strength_seq(order_m, &ctx).unwrap();
        let eta = geom.eta_ml();
        let y_eta = sh_row(order_m, eta.theta, eta.phi);
        for p in SphGrid::builtin("icosahedron_12").unwrap().points() {
            let y = sh_row(order_m, p.theta, p.phi);
            let far: Complex64 = (0..sh_count(order_m))
                .map(|i| a * b[(i as f64).sqrt() as usize] * y_eta[i].conj() * y[i])
                .sum();
            let c = p.to_cartesian();
            let obs = [centre[0] + r_m * c[0], centre[1] + r_m * c[1], centre[2] + r_m * c[2]];
            let near = nearfield_pressure_open(&spec_l, &u, obs, k, 5).unwrap();
            worst = worst.max((near.norm() - far.norm()).abs() / far.norm());
        }
    }
    let near_ok = worst < 0.01 && min_ratio >= 10.0;
    report(
        "near-field vs far-field magnitude within 1% at D/r_L >= 10",
        near_ok,
        &format!("max relative mismatch {:.3}%, min D/r_L {min_ratio:.1}", worst * 100.0),
    );
    assert!(ok && near_ok);
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let overrides = ConfigOverrides {
        length: Some(8192),
        max_order: Some(3),
        directory: Some(dir.to_path_buf()),
        ..Default::default()
    };
    let cfg = RunConfig::load(&configs_dir().join("shoebox_beta_0.5.json"), &overrides).unwrap();
    cmd_simulate(&cfg).unwrap();
    let req = AnalyzeRequest {
        rir: dir.join("rir.wav"),
        freq: cfg.analysis.analysis_freq,
        tau_grid: cfg.tau_grid().unwrap(),
        spectrum_taus: cfg.analysis.spectrum_taus.clone(),
        out_dir: dir.to_path_buf(),
        arrays: None,
        omni_trace: true,
        singular_spectra: true,
    };
    cmd_analyze_rank(&req).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "wav"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_and_analyze_are_deterministic() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    let csvs = first.iter().filter(|(n, _)| n.ends_with(".csv")).count();
    let ok = first == second && csvs >= 5;
    report(
        "determinism of simulate + analyze-rank",
        ok,
        &format!("{} files compared ({csvs} CSV), byte-identical: {}", first.len(), first == second),
    );
    assert!(ok);
}
