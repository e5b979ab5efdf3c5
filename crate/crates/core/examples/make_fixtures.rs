//! Regenerates the checked-in three-view fixture: a COLMAP model in both
//! encodings, raw Bayer frames with sidecars, and the ground-truth cloud.
//!
//! Usage: cargo run -p rawsplat --example make_fixtures -- <out_dir>

use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rawsplat::colmap::{binary, text};
use rawsplat::isp::NoiseParams;
use rawsplat::raw_io::{save_raw_frame, Cfa};
use rawsplat::render::RasterConfig;
use rawsplat::scene::{save_ply, PlyPrecision};
use rawsplat::synthetic::{add_sensor_noise, mosaic, to_raw_frame, SceneSpec, SyntheticScene};

fn main() -> rawsplat::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fixtures/three_view".into()).into();
    let spec = SceneSpec {
        n_gaussians: 150,
        n_views: 3,
        test_every: 3,
        width: 32,
        height: 32,
        seed: 11,
    };
    let scene = SyntheticScene::generate(&spec)?;
    let b = &scene.bundle;
    let write = |p: PathBuf, bytes: &[u8]| fs::write(&p, bytes).expect("write fixture");
    for sub in ["colmap_bin", "colmap_txt", "raw"] {
        fs::create_dir_all(out.join(sub)).expect("create fixture dir");
    }
    write(out.join("colmap_bin/cameras.bin"), &binary::write_cameras(&b.cameras));
    write(out.join("colmap_bin/images.bin"), &binary::write_images(&b.poses));
    write(out.join("colmap_bin/points3D.bin"), &binary::write_points3d(&b.seed));
    write(out.join("colmap_txt/cameras.txt"), text::write_cameras(&b.cameras).as_bytes());
    write(out.join("colmap_txt/images.txt"), text::write_images(&b.poses).as_bytes());
    write(out.join("colmap_txt/points3D.txt"), text::write_points3d(&b.seed).as_bytes());
    let np = NoiseParams::new(0.002, 1e-6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (pose, img) in b.poses.iter().zip(scene.render_all(&RasterConfig::default())) {
        let plane = add_sensor_noise(&mosaic(&img, Cfa::Rggb), &np, &mut rng);
        let frame = to_raw_frame(&plane, 12, 256, 4095, &np)?;
        let stem = pose.stem();
        save_raw_frame(&frame, &out.join(format!("raw/{stem}.pgm")), &out.join(format!("raw/{stem}.json")))?;
    }
    save_ply(&scene.truth, &out.join("truth.ply"), PlyPrecision::F32)?;
    Ok(())
}
