//! Regenerates the box-room fixtures under `tests/fixtures/`.
//!
//! `cargo run -p planeseg --example gen_fixtures [out_dir]`

use std::path::PathBuf;

use planeseg::dataset_io::{
    save_annotation, save_depth, save_intrinsics, AnnotatedInstance, Annotation,
};
use planeseg::synthetic::{default_intrinsics, BoxRoom};
use planeseg::{annotate_depth, NdtRansacConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    let room = out.join("box_room");
    for d in ["depth", "annotation"] {
        std::fs::create_dir_all(room.join(d))?;
    }
    for d in ["gt", "pred"] {
        std::fs::create_dir_all(out.join("eval").join(d))?;
    }

    let intr = default_intrinsics();
    let frame = BoxRoom::default().render(&intr, 7);
    save_depth(&frame.depth, room.join("depth/frame_000.png"))?;
    save_intrinsics(&intr, room.join("intrinsics.json"))?;

    let mut ann = annotate_depth(&frame.depth, &intr, &NdtRansacConfig::<f64>::default())?;
    ann.source = Some("depth/frame_000.png".into());
    ann.intrinsics = Some("intrinsics.json".into());
    save_annotation(&ann, room.join("annotation/frame_000.png"))?;
    println!("annotation: {} instances", ann.instances.len());

    // Ground truth for evaluation is the analytic labelling of the render.
    let gt = Annotation {
        instances: frame
            .gt_labels
            .ids()
            .into_iter()
            .map(|id| {
                let mask = frame.gt_labels.mask_of(id);
                AnnotatedInstance {
                    id,
                    plane: frame.planes[id as usize - 1],
                    bbox: mask.bounding_box().expect("non-empty"),
                    area_px: mask.count(),
                    score: None,
                }
            })
            .collect(),
        labels: frame.gt_labels.clone(),
        source: Some("depth/frame_000.png".into()),
        intrinsics: Some("intrinsics.json".into()),
    };
    save_annotation(&gt, out.join("eval/gt/frame_000.png"))?;

    // Prediction: the extracted annotation minus its smallest instance.
    let mut pred = ann.clone();
    let smallest = pred
        .instances
        .iter()
        .min_by_key(|i| i.area_px)
        .map(|i| i.id)
        .expect("instances");
    pred.instances.retain(|i| i.id != smallest);
    for l in &mut pred.labels.labels {
        if *l == smallest {
            *l = 0;
        }
    }
    for (n, inst) in pred.instances.iter_mut().enumerate() {
        inst.score = Some(0.9 - 0.1 * n as f64);
    }
    save_annotation(&pred, out.join("eval/pred/frame_000.png"))?;
    println!("pred: dropped id {smallest}");
    Ok(())
}
