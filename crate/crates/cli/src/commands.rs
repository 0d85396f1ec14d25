use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use log::{info, warn};
use planeseg::assembly::{assemble, crop_mask, CoeffMatrix, PrototypeStack};
use planeseg::bench::bench_nms;
use planeseg::dataset_io::{
    load_annotation, load_depth, load_intrinsics, read_detections, read_tensors, save_annotation,
    sidecar_path, write_detections, write_ply, write_tensors, DetectionFile, RawTensor,
};
use planeseg::geometry::unproject;
use planeseg::metrics::{evaluate, EvalFrame, StatsAccumulator};
use planeseg::nms::{fast_nms_indices, ff_nms_indices};
use planeseg::{annotate_depth, CameraIntrinsics, Interpolation, NdtRansacConfig, NmsConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::*;

struct Context {
    file: FileConfig,
    seed: Option<u64>,
    pool: rayon::ThreadPool,
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = config::load(cli.config.as_deref())?;
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::internal(e.to_string()))?;
    let ctx = Context {
        seed: cli.seed.or(file.seed),
        file,
        pool,
    };
    match cli.command {
        Command::Annotate(a) => annotate(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::NmsFilter(a) => nms_filter(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Assemble(a) => assemble_cmd(a),
        Command::ExportPly(a) => export_ply(a),
        Command::BenchNms(a) => bench(&ctx, a),
    }
}

fn ndt_config(ctx: &Context, f: &NdtFlags) -> Result<NdtRansacConfig<f64>, CliError> {
    let mut c = ctx.file.ndt;
    macro_rules! over {
        ($($field:ident),*) => { $( if let Some(v) = f.$field { c.$field = v; } )* };
    }
    over!(
        cell_size,
        min_points_per_cell,
        planarity_ratio,
        ransac_iters,
        dist_thresh,
        angle_thresh,
        min_inlier_cells,
        min_mask_area
    );
    if let Some(s) = ctx.seed {
        c.rng_seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn nms_config(ctx: &Context, f: &NmsFlags) -> Result<NmsConfig<f64>, CliError> {
    let mut c = ctx.file.nms;
    macro_rules! over {
        ($($field:ident),*) => { $( if let Some(v) = f.$field { c.$field = v; } )* };
    }
    over!(n1, n2, t, top_n, score_thresh);
    c.validate()?;
    Ok(c)
}

/// `*.png` files directly inside `dir`, sorted by path.
fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry
            .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?
            .path();
        if p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn print_json<S: Serialize>(value: &S) -> Result<(), CliError> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?
    );
    Ok(())
}

/// Runs `f` on every item in the pool; results keep input order.
fn par_map<T, R, F>(ctx: &Context, items: &[T], f: F) -> Vec<Result<R, CliError>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CliError> + Sync,
{
    ctx.pool.install(|| {
        items
            .par_iter()
            .map(|it| {
                catch_unwind(AssertUnwindSafe(|| f(it)))
                    .unwrap_or_else(|_| Err(CliError::internal("worker panicked")))
            })
            .collect()
    })
}

#[derive(Serialize)]
struct FrameFailure {
    frame: String,
    code: i32,
    error: String,
}

fn annotate(ctx: &Context, a: AnnotateArgs) -> Result<(), CliError> {
    let cfg = ndt_config(ctx, &a.ndt)?;
    let intr: CameraIntrinsics<f64> = load_intrinsics(&a.intrinsics)?;
    let frames = list_pngs(&a.depth_dir)?;
    ensure_dir(&a.out_dir)?;
    if frames.is_empty() {
        warn!("no depth frames in {}", a.depth_dir.display());
        println!("annotated 0 frames");
        return Ok(());
    }
    let intr_name = file_name(&a.intrinsics);
    let results = par_map(ctx, &frames, |path| {
        let depth = load_depth(path)?;
        let mut ann = annotate_depth(&depth, &intr, &cfg)?;
        ann.source = Some(file_name(path));
        ann.intrinsics = Some(intr_name.clone());
        save_annotation(&ann, a.out_dir.join(file_name(path)))?;
        Ok(ann.instances.len())
    });

    let mut failures = Vec::new();
    let mut planes = 0;
    for (path, r) in frames.iter().zip(results) {
        match r {
            Ok(n) => {
                planes += n;
                println!("{}: {n} planes", file_name(path));
            }
            Err(e) => {
                eprintln!("{}: error: {e}", file_name(path));
                failures.push(FrameFailure {
                    frame: file_name(path),
                    code: e.code,
                    error: e.msg,
                });
            }
        }
    }
    let ok = frames.len() - failures.len();
    println!("annotated {ok} of {} frames, {planes} planes", frames.len());
    if let Some(first) = failures.first() {
        let manifest = a.out_dir.join("errors.json");
        let code = first.code;
        write_json(&manifest, &failures)?;
        return Err(CliError {
            code,
            msg: format!(
                "{} frames failed; see {}",
                failures.len(),
                manifest.display()
            ),
        });
    }
    Ok(())
}

/// Label PNGs in `dir` that have a sidecar.
fn list_annotations(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    Ok(list_pngs(dir)?
        .into_iter()
        .filter(|p| sidecar_path(p).is_file())
        .collect())
}

fn stats(ctx: &Context, a: StatsArgs) -> Result<(), CliError> {
    let files = list_annotations(&a.ann_dir)?;
    if files.is_empty() {
        warn!("no annotations in {}", a.ann_dir.display());
    }
    let mut acc = StatsAccumulator::default();
    for r in par_map(ctx, &files, |p| {
        let ann = load_annotation::<f64>(p)?;
        let mut one = StatsAccumulator::default();
        one.add_frame(&ann.instance_set(), ann.labels.labels.len());
        Ok(one)
    }) {
        acc = acc.merge(r?);
    }
    let report = acc.report();
    info!("{} frames", report.frames);
    print_json(&report)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    Ok(())
}

fn nms_filter(ctx: &Context, a: NmsFilterArgs) -> Result<(), CliError> {
    let cfg = nms_config(ctx, &a.nms)?;
    let file = read_detections::<f64>(&a.input)?;
    let keep = match a.fast {
        Some(thr) if (0.0..=1.0).contains(&thr) => fast_nms_indices(&file.detections, &cfg, thr)?,
        Some(thr) => {
            return Err(CliError::config(format!(
                "--fast threshold {thr} outside [0, 1]"
            )))
        }
        None => ff_nms_indices(&file.detections, &cfg)?,
    };
    let total = file.detections.len();
    let out = DetectionFile {
        detections: keep.iter().map(|&i| file.detections[i].clone()).collect(),
        ..file
    };
    write_detections(&out, &a.output)?;
    println!("kept {} of {total} detections", keep.len());
    Ok(())
}

fn eval(ctx: &Context, a: EvalArgs) -> Result<(), CliError> {
    let interp = match &a.interpolation {
        None => ctx.file.interpolation,
        Some(s) => Interpolation::parse(s)
            .ok_or_else(|| CliError::config(format!("bad interpolation `{s}`")))?,
    };
    let gt_files = list_annotations(&a.gt_dir)?;
    if gt_files.is_empty() {
        warn!("no ground-truth annotations in {}", a.gt_dir.display());
    }
    let frames = par_map(ctx, &gt_files, |gt_path| {
        let pred_path = a.pred_dir.join(file_name(gt_path));
        if !pred_path.is_file() {
            return Err(CliError::io(format!(
                "missing prediction {}",
                pred_path.display()
            )));
        }
        let gt = load_annotation::<f64>(gt_path)?;
        let pred = load_annotation::<f64>(&pred_path)?;
        Ok(EvalFrame {
            gt: gt.instance_set(),
            pred: pred.instance_set(),
            gt_labels: gt.labels,
            pred_labels: pred.labels,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate(&frames, interp)?;
    print!("{}", report.to_table());
    println!(
        "{}",
        serde_json::to_string(&report).map_err(|e| CliError::internal(e.to_string()))?
    );
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    Ok(())
}

fn assemble_cmd(a: AssembleArgs) -> Result<(), CliError> {
    let tensors = read_tensors(&a.prototypes)?;
    let proto = tensors
        .first()
        .filter(|t| t.shape.len() == 3)
        .ok_or_else(|| {
            CliError::io(format!(
                "{}: expected an h x w x k tensor first",
                a.prototypes.display()
            ))
        })?;
    let (h, w, k) = (proto.shape[0], proto.shape[1], proto.shape[2]);
    let p = PrototypeStack::new(h, w, k, proto.to_scalars::<f64>())?;
    let dets = read_detections::<f64>(&a.detections)?.detections;
    let c = CoeffMatrix::new(
        dets.len(),
        k,
        dets.iter().flat_map(|d| d.coeffs.iter().copied()).collect(),
    )?;
    let mut masks = assemble(&p, &c)?.masks;
    if a.crop {
        for (m, d) in masks.iter_mut().zip(&dets) {
            *m = crop_mask(m, &d.bbox);
        }
    }
    let data: Vec<f64> = masks
        .iter()
        .flat_map(|m| m.values.iter().copied())
        .collect();
    write_tensors(
        &a.output,
        &[RawTensor::from_scalars(vec![masks.len(), h, w], &data)?],
    )?;
    println!("assembled {} masks of {h}x{w}", masks.len());
    Ok(())
}

fn export_ply(a: ExportPlyArgs) -> Result<(), CliError> {
    let depth = load_depth(&a.depth)?;
    let intr: CameraIntrinsics<f64> = load_intrinsics(&a.intrinsics)?;
    let cloud = unproject(&depth, &intr)?;
    let labels = a
        .labels
        .as_ref()
        .map(load_annotation::<f64>)
        .transpose()?
        .map(|ann| ann.labels);
    write_ply(&a.output, &cloud, labels.as_ref())?;
    println!("wrote {} points", cloud.len());
    Ok(())
}

fn bench(ctx: &Context, a: BenchArgs) -> Result<(), CliError> {
    let c = nms_config(ctx, &a.nms)?;
    let cfg = NmsConfig::<f32> {
        n1: c.n1 as f32,
        n2: c.n2 as f32,
        t: c.t as f32,
        top_n: c.top_n,
        score_thresh: c.score_thresh as f32,
    };
    if a.n == 0 {
        return Err(CliError::config("--n must be at least 1"));
    }
    let report = bench_nms(a.n, a.k, a.trials, &cfg, ctx.seed.unwrap_or(0))?;
    print_json(&report)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    Ok(())
}
