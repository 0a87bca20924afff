//! Regenerates the fixtures under `tests/fixtures`:
//! `cargo run -p basecal --example make_fixtures`.

#[path = "../tests/support/mod.rs"]
mod support;

use std::path::Path;

use basecal::formats::write_json;
use basecal::io::{save, Format};
use basecal_core::basepose::ReferenceModel;
use basecal_core::cloud::transform;
use basecal_core::geometry::{RigidTransform, Vec3};
use basecal_core::registration::MatchParams;
use basecal_core::synth::{seeded_rng, shapes};
use basecal_core::PointCloud;
use serde_json::json;

fn write_case(dir: &Path, model: &PointCloud, scan_model: &PointCloud, seed: u64, clutter: bool) {
    std::fs::create_dir_all(dir).unwrap();
    let scan_prepared = ReferenceModel::raw(scan_model.clone())
        .unwrap()
        .prepare(&MatchParams::default())
        .unwrap();
    let scene = support::random_scene(scan_model, &scan_prepared, &mut seeded_rng(seed), 0.4);
    let mut scan = scene.scan.clone();
    if clutter {
        // A table top off to the side of the base, outside the box.
        let patch = shapes::plane_patch(1500, 0.15, seed + 1);
        let off = scene.bbox.center() + Vec3::new(scene.bbox.extent().x + 0.2, 0.0, 0.05);
        let patch = transform(&patch, &RigidTransform::from_translation(off));
        scan.extend(&patch.iter().filter(|p| !scene.bbox.contains(p)).copied().collect());
    }
    save(&dir.join("model.ply"), model, Format::PlyBinaryLe).unwrap();
    save(&dir.join("scan.ply"), &scan, Format::PlyBinaryLe).unwrap();
    write_json(&dir.join("box.json"), &scene.bbox).unwrap();
    write_json(&dir.join("dh.json"), &support::robot()).unwrap();
    let joints: Vec<String> = scene.joints.iter().map(|q| q.to_string()).collect();
    std::fs::write(
        dir.join("joints.csv"),
        format!("q1,q2,q3,q4,q5,q6\n{}\n", joints.join(",")),
    )
    .unwrap();
    write_json(
        &dir.join("truth.json"),
        &json!({
            "x": scene.x_star,
            "cam_to_base": scene.cam_to_base,
            "overlap": scene.overlap,
            "tolerance": {"rotation_deg": 0.05, "translation_m": 0.0001},
        }),
    )
    .unwrap();
    println!(
        "{}: scan {} points, overlap {:.3}",
        dir.display(),
        scan.len(),
        scene.overlap
    );
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let base = shapes::base_model(6000, 21);
    write_case(&root.join("end_to_end"), &base, &base, 2024, true);
    let cylinder = shapes::cylinder_model(6000, 31);
    write_case(
        &root.join("symmetric"),
        &cylinder,
        &shapes::cylinder_model(6000, 32),
        77,
        false,
    );
}
