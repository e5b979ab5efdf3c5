//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rawsplat::camera::{Camera, PoseRecord};
use rawsplat::colmap::{binary, parse_cameras, parse_images, parse_points3d, text};
use rawsplat::gradcheck::Problem;
use rawsplat::isp::{
    demosaic_bilinear, fit_color_correction, ksigma_forward, ksigma_inverse, srgb_oetf, DenoiseMethod, LdrImage,
    LinearImage, NoiseParams,
};
use rawsplat::loss::{darkest_fraction_mask, masked_psnr, psnr_values, LossConfig, LossMode};
use rawsplat::pipeline::{ingest, run_isp, run_train, PipelineConfig, Schedule, FINAL_CLOUD_FILE, TRAIN_LOG_FILE};
use rawsplat::raw_io::{load_raw_frame, save_raw_frame, BayerPlane, Cfa};
use rawsplat::render::{rasterize_forward, rasterize_oracle, RasterConfig, View};
use rawsplat::scene::{encode_ply, init_from_seed, load_ply, logit, GaussianCloud, PlyPrecision};
use rawsplat::synthetic::{noisy_capture, SceneSpec, SyntheticScene};
use rawsplat::train::{train, Preset, TrainConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/three_view")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn gradient_correctness() -> Outcome {
    let t = Instant::now();
    let report = Problem::random(0, 10, 32).run().expect("gradcheck runs");
    let elapsed = t.elapsed();
    let per_class: Vec<String> = report
        .classes
        .iter()
        .map(|c| format!("{:?} {:.1e}", c.class, c.max_rel_error))
        .collect();
    let err = report.max_rel_error();
    outcome(
        err < 1e-3 && elapsed < Duration::from_secs(60),
        format!("max rel err {err:.2e} < 1e-3 [{}], {elapsed:.1?} < 60 s", per_class.join(", ")),
    )
}

fn random_scene(seed: u64, n: usize) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = GaussianCloud::default();
    for _ in 0..n {
        let pos = [0; 3].map(|_| rng.random_range(-1.5..1.5));
        let log_scale = [0; 3].map(|_| rng.random_range(0.02f64..0.4).ln());
        let quat = [0; 4].map(|_| rng.random_range(-1.0..1.0));
        let mut sh = [[0.0; 3]; 16];
        for c in sh.iter_mut() {
            *c = [0; 3].map(|_| rng.random_range(-0.5..0.5));
        }
        cloud.push(pos, log_scale, quat, sh, logit(rng.random_range(0.05..0.99)));
    }
    cloud
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle_equivalence() -> Outcome {
    let camera = Camera::new(1, 64, 64, 70.0, 32.0, 32.0).unwrap();
    let (mut worst_default, mut worst_untruncated) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let cloud = random_scene(seed, 100);
        let pose = PoseRecord::look_at(1, 1, "v", [0.4, -0.3, -5.0], [0.0; 3], [0.0, 1.0, 0.0]);
        let view = View::new(&camera, &pose);
        for (cfg, worst) in [
            (RasterConfig::default(), &mut worst_default),
            (RasterConfig::untruncated(), &mut worst_untruncated),
        ] {
            let tiled = rasterize_forward(&cloud, &view, &cfg);
            let oracle = rasterize_oracle(&cloud, &view, &cfg);
            *worst = worst.max(max_abs_diff(&tiled.color.data, &oracle.color.data));
        }
    }
    outcome(
        worst_default < 1e-5 && worst_untruncated == 0.0,
        format!("20 scenes: default max diff {worst_default:.1e} < 1e-5, untruncated {worst_untruncated:.1e} == 0"),
    )
}

fn held_out_psnr(scene: &SyntheticScene, cloud: &GaussianCloud, truth: &[LinearImage], raster: &RasterConfig) -> Vec<f64> {
    scene
        .bundle
        .test_indices
        .iter()
        .map(|&i| {
            let out = rasterize_forward(cloud, &View::new(scene.camera(), &scene.bundle.poses[i]), raster);
            psnr_values(&out.color.data, &truth[i].data, 1.0).unwrap()
        })
        .collect()
}

fn synthetic_reconstruction(scene: &SyntheticScene) -> Outcome {
    let raster = RasterConfig::default();
    let targets = scene.render_all(&raster);
    let views = scene.views(&targets, &scene.bundle.train_indices);
    let t = Instant::now();
    let cloud = init_from_seed(&scene.jittered_seed(0.05, 1), 0.1).unwrap();
    let cfg = TrainConfig::desk(Preset::Tuned, 2000);
    let (fit, _) = train(cloud, &views, scene.bundle.extent, &cfg, &LossConfig::default(), &raster).unwrap();
    let elapsed = t.elapsed();
    let psnr = held_out_psnr(scene, &fit, &targets, &raster);
    let m = mean(&psnr);
    let min = psnr.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        m >= 35.0 && elapsed < Duration::from_secs(600),
        format!(
            "{} train views, range {:.0}:1, N {} -> {}, held-out PSNR mean {m:.2} dB (min {min:.2}) >= 35, {elapsed:.1?} < 600 s",
            views.len(),
            scene.dynamic_range(),
            scene.truth.len(),
            fit.len()
        ),
    )
}

fn hdr_loss_benefit(scene: &SyntheticScene) -> Outcome {
    let raster = RasterConfig::default();
    let clean = scene.render_all(&raster);
    let np = NoiseParams::new(0.002, 1e-6).unwrap();
    let mut margins = Vec::new();
    for seed in 0..3u64 {
        let noisy: Vec<LinearImage> = clean
            .iter()
            .enumerate()
            .map(|(i, c)| noisy_capture(c, Cfa::Rggb, &np, DenoiseMethod::Bilateral, seed * 1000 + i as u64).unwrap())
            .collect();
        let views = scene.views(&noisy, &scene.bundle.train_indices);
        let mut dark = Vec::new();
        for mode in [LossMode::HdrL1Dssim, LossMode::PlainL1Dssim] {
            let cloud = init_from_seed(&scene.jittered_seed(0.05, seed + 1), 0.1).unwrap();
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::desk(Preset::Tuned, 2000)
            };
            let loss = LossConfig::default().with_mode(mode);
            let (fit, _) = train(cloud, &views, scene.bundle.extent, &cfg, &loss, &raster).unwrap();
            let per_view: Vec<f64> = scene
                .bundle
                .test_indices
                .iter()
                .map(|&i| {
                    let out = rasterize_forward(&fit, &View::new(scene.camera(), &scene.bundle.poses[i]), &raster);
                    let mask = darkest_fraction_mask(&clean[i], 0.1);
                    masked_psnr(&out.color, &clean[i], &mask, 1.0).unwrap()
                })
                .collect();
            dark.push(mean(&per_view));
        }
        margins.push(dark[0] - dark[1]);
    }
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let shown: Vec<String> = margins.iter().map(|m| format!("{m:+.2}")).collect();
    outcome(
        worst >= 1.0,
        format!("darkest-decile PSNR gain of hdr_l1_dssim over plain_l1_dssim per seed [{}] dB, min >= 1", shown.join(", ")),
    )
}

fn point_count_tuning(scene: &SyntheticScene) -> Outcome {
    let raster = RasterConfig::default();
    let targets = scene.render_all(&raster);
    let views = scene.views(&targets, &scene.bundle.train_indices);
    let seed = scene.sparse_seed(0.05, 1);
    let counts: Vec<usize> = [Preset::Tuned, Preset::Baseline]
        .iter()
        .map(|&p| {
            let cloud = init_from_seed(&seed, 0.1).unwrap();
            let cfg = TrainConfig::desk(p, 2000);
            train(cloud, &views, scene.bundle.extent, &cfg, &LossConfig::default(), &raster)
                .unwrap()
                .0
                .len()
        })
        .collect();
    let ratio = counts[0] as f64 / counts[1] as f64;
    outcome(
        ratio <= 0.6,
        format!("sparse seed of {} points: N tuned {} / baseline {} = {ratio:.3} <= 0.6", seed.len(), counts[0], counts[1]),
    )
}

fn isp_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let np = NoiseParams::new(0.0031, 2.3e-5).unwrap();
    let data: Vec<f64> = (0..64 * 64).map(|_| rng.random_range(-0.01..1.2)).collect();
    let plane = BayerPlane::new(64, 64, Cfa::Rggb, data).unwrap();
    let back = ksigma_inverse(&ksigma_forward(&plane, &np).unwrap(), &np).unwrap();
    let ksigma = max_abs_diff(&plane.data, &back.data);

    let mut demosaic = 0.0f64;
    let (w, h) = (12, 10);
    for cfa in [Cfa::Rggb, Cfa::Bggr, Cfa::Grbg, Cfa::Gbrg] {
        for (c0, gx, gy) in [(0.4, 0.0, 0.0), (0.1, 0.03, 0.0), (0.1, 0.0, 0.05), (0.2, 0.02, -0.01)] {
            let data = (0..h).flat_map(|y| (0..w).map(move |x| c0 + gx * x as f64 + gy * y as f64)).collect();
            let img = demosaic_bilinear(&BayerPlane::new(w, h, cfa, data).unwrap());
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let expect = c0 + gx * x as f64 + gy * y as f64;
                    for v in img.pixel(x, y) {
                        demosaic = demosaic.max((v - expect).abs());
                    }
                }
            }
        }
    }

    let knee = 0.003_130_8;
    let d = 1e-12;
    let knee_jump = (srgb_oetf(knee + d) - srgb_oetf(knee - d)).abs();

    let reference: Vec<f64> = (0..32 * 32 * 3).map(|_| rng.random_range(0.1..0.9)).collect();
    let (gain, bias) = ([0.8, 1.15, 0.95], [0.05, -0.07, 0.02]);
    let distorted: Vec<f64> = reference
        .iter()
        .enumerate()
        .map(|(i, v)| (v - bias[i % 3]) / gain[i % 3])
        .collect();
    let fit = fit_color_correction(
        &LdrImage::new(32, 32, distorted).unwrap(),
        &LdrImage::new(32, 32, reference).unwrap(),
    )
    .unwrap();
    let color = (0..3)
        .map(|c| (fit.channels[c].gain - gain[c]).abs().max((fit.channels[c].bias - bias[c]).abs()))
        .fold(0.0, f64::max);
    let ok = ksigma < 1e-6 && demosaic < 1e-6 && knee_jump < 1e-6 && color < 1e-6;
    outcome(
        ok,
        format!(
            "k-sigma round trip {ksigma:.1e}, demosaic interior {demosaic:.1e}, OETF knee jump {knee_jump:.1e}, affine fit {color:.1e}, all < 1e-6"
        ),
    )
}

fn parser_fidelity() -> Outcome {
    let dir = fixture_dir();
    let bin = dir.join("colmap_bin");
    let txt = dir.join("colmap_txt");
    let cams_b = parse_cameras(&bin.join("cameras.bin")).unwrap();
    let imgs_b = parse_images(&bin.join("images.bin")).unwrap();
    let pts_b = parse_points3d(&bin.join("points3D.bin")).unwrap();
    let agree = cams_b == parse_cameras(&txt.join("cameras.txt")).unwrap()
        && imgs_b == parse_images(&txt.join("images.txt")).unwrap()
        && pts_b == parse_points3d(&txt.join("points3D.txt")).unwrap();
    let bin_exact = binary::read_cameras(&binary::write_cameras(&cams_b)).unwrap() == cams_b
        && binary::read_images(&binary::write_images(&imgs_b)).unwrap() == imgs_b
        && binary::read_points3d(&binary::write_points3d(&pts_b)).unwrap() == pts_b;
    let txt_exact = text::read_cameras(&text::write_cameras(&cams_b)).unwrap() == cams_b
        && text::read_images(&text::write_images(&imgs_b)).unwrap() == imgs_b
        && text::read_points3d(&text::write_points3d(&pts_b)).unwrap() == pts_b;

    let ply_path = dir.join("truth.ply");
    let cloud = load_ply(&ply_path).unwrap();
    let ply_exact = encode_ply(&cloud, PlyPrecision::F32) == std::fs::read(&ply_path).unwrap()
        && rawsplat::scene::decode_ply(&encode_ply(&cloud, PlyPrecision::F64)).unwrap() == cloud;

    let tmp = tempfile::tempdir().unwrap();
    let raw_exact = imgs_b.iter().all(|pose| {
        let stem = pose.stem();
        let frame = load_raw_frame(&dir.join(format!("raw/{stem}.pgm")), &dir.join(format!("raw/{stem}.json"))).unwrap();
        let (m, s) = (tmp.path().join("f.pgm"), tmp.path().join("f.json"));
        save_raw_frame(&frame, &m, &s).unwrap();
        load_raw_frame(&m, &s).unwrap() == frame
            && std::fs::read(&m).unwrap() == std::fs::read(dir.join(format!("raw/{stem}.pgm"))).unwrap()
    });
    outcome(
        agree && bin_exact && txt_exact && ply_exact && raw_exact,
        format!(
            "{} views, {} points: bin==txt {agree}, write/read bin {bin_exact} txt {txt_exact}, PLY {ply_exact}, raw {raw_exact}",
            imgs_b.len(),
            pts_b.len()
        ),
    )
}

fn train_in_pool(threads: usize, root: &Path) -> (Vec<u8>, Vec<u8>) {
    let fixture = fixture_dir();
    let scene = root.join(format!("scene_{threads}"));
    ingest(&fixture.join("colmap_bin"), &fixture.join("raw"), &scene, 3).unwrap();
    run_isp(&scene, DenoiseMethod::Bilateral).unwrap();
    let out = root.join(format!("out_{threads}"));
    let mut cfg = PipelineConfig::new(&scene, &out);
    cfg.schedule = Schedule::Desk;
    cfg.iterations = Some(300);
    cfg.seed = 9;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_train(&cfg, None)).unwrap();
    (
        std::fs::read(out.join(FINAL_CLOUD_FILE)).unwrap(),
        std::fs::read(out.join(TRAIN_LOG_FILE)).unwrap(),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<(Vec<u8>, Vec<u8>)> = [1, 1, 2, 4].iter().map(|&t| train_in_pool(t, &tmp.path().join(format!("{t}_{}", rand::random::<u32>())))).collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!(
            "train on the fixture with 1, 1, 2 and 4 workers: checkpoints and logs bit-identical {same} ({} byte PLY)",
            runs[0].0.len()
        ),
    )
}

fn throughput() -> Outcome {
    let camera = Camera::new(1, 512, 512, 560.0, 256.0, 256.0).unwrap();
    let pose = PoseRecord::look_at(1, 1, "v", [0.0, 0.0, -6.0], [0.0; 3], [0.0, 1.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut cloud = GaussianCloud::default();
    for _ in 0..10_000 {
        let pos = [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5), rng.random_range(-2.0..2.0)];
        let log_scale = [0; 3].map(|_| rng.random_range(0.005f64..0.05).ln());
        let quat = [0; 4].map(|_| rng.random_range(-1.0..1.0));
        let mut sh = [[0.0; 3]; 16];
        sh[0] = [0; 3].map(|_| rng.random_range(-0.5..0.5));
        cloud.push(pos, log_scale, quat, sh, logit(rng.random_range(0.3..0.9)));
    }
    let view = View::new(&camera, &pose);
    let cfg = RasterConfig::default();
    rasterize_forward(&cloud, &view, &cfg);
    let t = Instant::now();
    let reps = 5;
    let mut tiled = None;
    for _ in 0..reps {
        tiled = Some(rasterize_forward(&cloud, &view, &cfg));
    }
    let t_tiled = t.elapsed() / reps;
    let t = Instant::now();
    let oracle = rasterize_oracle(&cloud, &view, &cfg);
    let t_oracle = t.elapsed();
    let speedup = t_oracle.as_secs_f64() / t_tiled.as_secs_f64();
    let diff = max_abs_diff(&tiled.unwrap().color.data, &oracle.color.data);
    outcome(
        speedup >= 20.0 && diff < 1e-5,
        format!("10k Gaussians at 512x512: tiled {t_tiled:.1?}, oracle {t_oracle:.1?}, speedup {speedup:.1}x >= 20 (max diff {diff:.1e})"),
    )
}

fn main() {
    let scene = SyntheticScene::generate(&SceneSpec::default()).expect("synthetic scene");
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("gradient correctness", Box::new(gradient_correctness)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("synthetic reconstruction", Box::new(|| synthetic_reconstruction(&scene))),
        ("HDR loss benefit", Box::new(|| hdr_loss_benefit(&scene))),
        ("tuning effect on point count", Box::new(|| point_count_tuning(&scene))),
        ("ISP exactness", Box::new(isp_exactness)),
        ("parser fidelity", Box::new(parser_fidelity)),
        ("determinism", Box::new(determinism)),
        ("throughput", Box::new(throughput)),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("[{id}] {name}: {verdict} - {} ({:.1?})", o.detail, t.elapsed());
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
