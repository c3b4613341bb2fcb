use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Point2, Rotation3, Vector3};
use serde::Serialize;
use tokenwarp::camera::{make_patch_grid, relative_pose, CameraIntrinsics, CameraPose, PoseDirection, RelativePose};
use tokenwarp::error::Error;
use tokenwarp::fetch::{adaptive_fetch, extract_fixed_patches, nearest_fetch, tile_patches, FetchMap, FetchMode};
use tokenwarp::io::{self, FrameBundle, FramePaths, PoseConvention};
use tokenwarp::jitter::{apply_jitter, gen_jitter_field, JitterMode};
use tokenwarp::mesh::{build_mesh, MeshOptions};
use tokenwarp::raster::Image;
use tokenwarp::synth::{gen_plane_scene, gen_two_plane_scene, Texture};
use tokenwarp::viewbench::{
    bin_and_sample_pairs, covisible_keypoints, gen_question, geometry_oracle, overlap_ratio, pick_keypoint,
    render_markers, select_keypoint_pair, visible_set, FramePair as PairCandidate, KeypointPair, OverlapBin,
    ScenePoints, TaskKind, VqaInstance, ViewPairRecord,
};
use tokenwarp::warp::{backward_warp_grid, forward_warp_grid, pixel_backward_warp_image, pixel_forward_warp_image};

use crate::{Cli, Command, Common, Convention, Direction, Fetch, FramePair, PointsArgs, Scene, Task};

/// Decorrelates the pixel-noise stream from the jitter-field stream.
const NOISE_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_rgb(s: &str) -> std::result::Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [r, g, b] = parts[..] else {
        return Err(format!("expected r,g,b, got {s:?}"));
    };
    let c = |v: &str| v.trim().parse::<u8>().map_err(|_| format!("bad color component {v:?}"));
    Ok([c(r)?, c(g)?, c(b)?])
}

impl Common {
    fn convention(&self) -> Result<PoseConvention> {
        match self.pose_convention {
            Some(Convention::C2w) => Ok(PoseConvention::C2w),
            Some(Convention::W2c) => Ok(PoseConvention::W2c),
            None => Err(usage("--pose-convention c2w|w2c is required for commands that read or write poses")),
        }
    }

    fn out(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| usage("--out is required for this command"))
    }

    fn load(&self, scan: &Path, id: &str) -> Result<FrameBundle> {
        Ok(io::load_frame(&FramePaths::in_scan(scan, id), self.convention()?, self.depth_scale)?)
    }

    /// JSON to `--out` when given, otherwise to standard output.
    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        match &self.out {
            Some(p) => io::write_json(p, value)?,
            None => print_stdout(&serde_json::to_string_pretty(value).expect("serializable")),
        }
        Ok(())
    }
}

/// A closed pipe on standard output is not an error worth a panic.
fn print_stdout(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("json")
}

struct LoadedPair {
    source: FrameBundle,
    target: FrameBundle,
    relative: RelativePose,
}

fn load_pair(common: &Common, frames: &FramePair) -> Result<LoadedPair> {
    let source = common.load(&frames.scan, &frames.source)?;
    let target = common.load(&frames.scan, &frames.target)?;
    if source.intrinsics != target.intrinsics {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", source.intrinsics),
            actual: format!("{:?}", target.intrinsics),
        }
        .into());
    }
    let relative = relative_pose(&source.pose, &target.pose, PoseDirection::SourceToTarget);
    Ok(LoadedPair { source, target, relative })
}

fn unproject_frames(frames: &[&FrameBundle], stride: u32) -> ScenePoints {
    let mut pts = Vec::new();
    for f in frames {
        let to_world = f.pose.inverse();
        for y in (0..f.depth.height()).step_by(stride as usize) {
            for x in (0..f.depth.width()).step_by(stride as usize) {
                let Some(d) = f.depth.get(x, y) else { continue };
                if let Ok(p) = f.intrinsics.unproject(&Point2::new(x as f64 + 0.5, y as f64 + 0.5), d) {
                    pts.push(to_world.transform_point(&p));
                }
            }
        }
    }
    ScenePoints(pts)
}

fn scene_points(args: &PointsArgs, frames: &[&FrameBundle]) -> Result<ScenePoints> {
    match &args.points {
        Some(p) => Ok(io::read_points(p)?),
        None => Ok(unproject_frames(frames, args.stride)),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::WarpPixels { frames, mode, fill, mask } => warp_pixels(common, &frames, mode, fill, mask.as_deref()),
        Command::WarpTokens {
            frames,
            direction,
            fetch,
            patch_size,
            max_depth_ratio,
            render,
        } => warp_tokens(common, &frames, direction, fetch, patch_size, max_depth_ratio, render.as_deref()),
        Command::Overlap { frames, points } => overlap(common, &frames, &points),
        Command::Pairs {
            scan,
            per_bin,
            seed,
            frames,
            points,
        } => pairs(common, &scan, per_bin, seed, frames, &points),
        Command::Annotate {
            frames,
            task,
            tau,
            seed,
            count,
            points,
        } => annotate(common, &frames, task, tau, seed, count, &points),
        Command::Oracle { scan, instances } => oracle(common, &scan, &instances),
        Command::Jitter {
            image,
            patch_size,
            max_disp,
            seed,
            neighborhood,
            pixel_baseline,
        } => jitter(common, &image, patch_size, max_disp, seed, neighborhood, pixel_baseline),
        Command::Synth { .. } => synth(common, &cli.command),
    }
}

#[derive(Serialize)]
struct WarpPixelsSummary {
    mode: &'static str,
    width: u32,
    height: u32,
    holes: usize,
}

fn warp_pixels(common: &Common, frames: &FramePair, mode: Direction, fill: [u8; 3], mask: Option<&Path>) -> Result<()> {
    let out = common.out()?;
    let p = load_pair(common, frames)?;
    let k = &p.source.intrinsics;
    let warped = match mode {
        Direction::Forward => pixel_forward_warp_image(&p.source.image, &p.source.depth, &p.relative, k, fill)?,
        Direction::Backward => {
            let mesh = build_mesh(&p.source.depth, k, &MeshOptions::default())?;
            pixel_backward_warp_image(&p.source.image, &mesh, &p.relative, k, fill)?
        }
    };
    io::write_image(out, &warped.image)?;
    if let Some(m) = mask {
        io::write_image(m, &warped.mask_image())?;
    }
    if common.emit_json {
        let summary = WarpPixelsSummary {
            mode: if mode == Direction::Forward { "forward" } else { "backward" },
            width: k.width,
            height: k.height,
            holes: warped.hole_count(),
        };
        io::write_json(&sidecar(out), &summary)?;
    }
    Ok(())
}

fn warp_tokens(
    common: &Common,
    frames: &FramePair,
    direction: Direction,
    fetch: Fetch,
    patch_size: u32,
    max_depth_ratio: Option<f64>,
    render: Option<&Path>,
) -> Result<()> {
    let out = common.out()?;
    let p = load_pair(common, frames)?;
    let k = &p.source.intrinsics;
    let grid = make_patch_grid(k.height, k.width, patch_size)?;
    let (map, tiles) = match direction {
        Direction::Forward => {
            if render.is_some() {
                return Err(usage("--render needs --direction backward"));
            }
            let field = forward_warp_grid(&grid, &p.source.depth, &p.relative, k)?;
            (FetchMap::from_forward(&field), None)
        }
        Direction::Backward => {
            let mesh = build_mesh(&p.source.depth, k, &MeshOptions { max_depth_ratio })?;
            let field = backward_warp_grid(&grid, &mesh, &p.relative, k)?;
            match fetch {
                Fetch::Nearest => {
                    let map = nearest_fetch(&field, &grid)?;
                    let fixed = extract_fixed_patches(&p.source.image, &grid)?;
                    let patches: Vec<_> = map.entries.iter().map(|e| e.nearest.map(|n| fixed[n as usize].clone())).collect();
                    (map, Some(patches))
                }
                Fetch::Adaptive => {
                    let a = adaptive_fetch(&field, &p.source.image, patch_size)?;
                    (a.map, Some(a.patches))
                }
            }
        }
    };
    debug_assert!(direction == Direction::Backward || map.mode == FetchMode::ForwardPositions);
    io::write_fetch_map(&map, out)?;
    if common.emit_json {
        io::write_fetch_map_json(&map, &sidecar(out))?;
    }
    if let (Some(path), Some(patches)) = (render, tiles) {
        io::write_image(path, &tile_patches(&grid, &patches, [0, 0, 0]))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OverlapReport {
    source: String,
    target: String,
    overlap: f64,
    bin: Option<OverlapBin>,
}

fn overlap(common: &Common, frames: &FramePair, points: &PointsArgs) -> Result<()> {
    let p = load_pair(common, frames)?;
    let pts = scene_points(points, &[&p.source, &p.target])?;
    let vs = visible_set(&pts, &p.source.pose, &p.source.intrinsics, &p.source.depth, common.occlusion_tol);
    let vt = visible_set(&pts, &p.target.pose, &p.target.intrinsics, &p.target.depth, common.occlusion_tol);
    let overlap = overlap_ratio(&vs, &vt);
    common.emit(&OverlapReport {
        source: p.source.id,
        target: p.target.id,
        overlap,
        bin: OverlapBin::from_ratio(overlap),
    })
}

fn frame_ids(scan: &Path) -> Result<Vec<String>> {
    let dir = scan.join("color");
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .collect();
    ids.sort_by(|a, b| match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    Ok(ids)
}

fn pairs(
    common: &Common,
    scan: &Path,
    per_bin: usize,
    seed: u64,
    frames: Option<Vec<String>>,
    points: &PointsArgs,
) -> Result<()> {
    let ids = match frames {
        Some(ids) => ids,
        None => frame_ids(scan)?,
    };
    let bundles = ids.iter().map(|id| common.load(scan, id)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FrameBundle> = bundles.iter().collect();
    let pts = scene_points(points, &refs)?;
    let visible: Vec<_> = bundles
        .iter()
        .map(|f| visible_set(&pts, &f.pose, &f.intrinsics, &f.depth, common.occlusion_tol))
        .collect();
    let mut candidates = Vec::new();
    for i in 0..bundles.len() {
        for j in i + 1..bundles.len() {
            candidates.push(PairCandidate {
                source: bundles[i].id.clone(),
                target: bundles[j].id.clone(),
                overlap: overlap_ratio(&visible[i], &visible[j]),
            });
        }
    }
    let records: Vec<ViewPairRecord> = bin_and_sample_pairs(&candidates, per_bin, seed);
    match &common.out {
        Some(p) => io::write_json_lines(p, &records)?,
        None => {
            for r in &records {
                print_stdout(&serde_json::to_string(r).expect("serializable"));
            }
        }
    }
    Ok(())
}

fn task_kind(task: Task) -> TaskKind {
    match task {
        Task::Text => TaskKind::Text,
        Task::Shape => TaskKind::Shape,
        Task::Object => TaskKind::Object,
    }
}

/// Writes `instances.jsonl` plus `N_source.png` / `N_target.png` marker images into `--out`.
fn annotate(
    common: &Common,
    frames: &FramePair,
    task: Task,
    tau: f64,
    seed: u64,
    count: usize,
    points: &PointsArgs,
) -> Result<()> {
    let out = common.out()?;
    let p = load_pair(common, frames)?;
    let k = &p.source.intrinsics;
    let pts = scene_points(points, &[&p.source, &p.target])?;
    let vs = visible_set(&pts, &p.source.pose, k, &p.source.depth, common.occlusion_tol);
    let vt = visible_set(&pts, &p.target.pose, k, &p.target.depth, common.occlusion_tol);
    let bin = OverlapBin::from_ratio(overlap_ratio(&vs, &vt));
    let candidates = covisible_keypoints(&pts, &vs.intersection(&vt), &p.source.pose, &p.target.pose, k);

    let mut seen = HashSet::new();
    let mut instances = Vec::new();
    for i in 0..count as u64 {
        let s = seed.wrapping_add(i);
        let pair = match task {
            Task::Object => pick_keypoint(&candidates, s).map(|a| KeypointPair { a, b: a }),
            _ => select_keypoint_pair(&candidates, tau, s),
        };
        let Some(pair) = pair else { continue };
        // the same two points with roles swapped is the same question
        let key = (pair.a.index.min(pair.b.index), pair.a.index.max(pair.b.index));
        if !seen.insert(key) {
            continue;
        }
        let mut q: VqaInstance = gen_question(&pair, task_kind(task), s);
        q.source_frame = p.source.id.clone();
        q.target_frame = p.target.id.clone();
        q.overlap_bin = bin;
        instances.push(q);
    }

    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    for (n, q) in instances.iter().enumerate() {
        io::write_image(&out.join(format!("{n}_source.png")), &render_markers(&p.source.image, &q.markers)?)?;
        io::write_image(&out.join(format!("{n}_target.png")), &render_markers(&p.target.image, &q.target_markers)?)?;
    }
    io::write_json_lines(&out.join("instances.jsonl"), &instances)?;
    eprintln!("{} instance(s) from {} co-visible keypoints", instances.len(), candidates.len());
    Ok(())
}

#[derive(Serialize)]
struct OracleResult {
    source_frame: String,
    target_frame: String,
    question: String,
    answer: Option<String>,
    predicted: String,
    correct: bool,
}

#[derive(Serialize)]
struct OracleReport {
    total: usize,
    correct: usize,
    accuracy: f64,
    results: Vec<OracleResult>,
}

fn oracle(common: &Common, scan: &Path, instances: &Path) -> Result<()> {
    let text = std::fs::read_to_string(instances).map_err(|e| Error::Io { path: instances.to_path_buf(), source: e })?;
    let mut results = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let q: VqaInstance = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: instances.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        if q.task == TaskKind::Object {
            continue;
        }
        let p = load_pair(
            common,
            &FramePair {
                scan: scan.to_path_buf(),
                source: q.source_frame.clone(),
                target: q.target_frame.clone(),
            },
        )?;
        let side = geometry_oracle(&q.keypoints, &p.source.depth, &p.relative, &p.source.intrinsics)?;
        results.push(OracleResult {
            correct: q.answer.as_deref() == Some(side.as_str()),
            predicted: side.to_string(),
            source_frame: q.source_frame,
            target_frame: q.target_frame,
            question: q.question,
            answer: q.answer,
        });
    }
    let correct = results.iter().filter(|r| r.correct).count();
    let total = results.len();
    common.emit(&OracleReport {
        total,
        correct,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        results,
    })
}

#[derive(Serialize)]
struct JitterReport {
    rows: u32,
    cols: u32,
    max_displacement: f64,
    neighborhood: u32,
    seed: u64,
    pixel_baseline: bool,
    displacements: Vec<[f64; 2]>,
}

fn jitter(
    common: &Common,
    image: &Path,
    patch_size: u32,
    max_disp: f64,
    seed: u64,
    neighborhood: u32,
    pixel_baseline: bool,
) -> Result<()> {
    let out = common.out()?;
    let img = io::read_image(image)?;
    let grid = make_patch_grid(img.height(), img.width(), patch_size)?;
    let field = gen_jitter_field(&grid, max_disp, neighborhood, seed)?;
    let mode = if pixel_baseline {
        JitterMode::PixelBaseline {
            noise_seed: seed ^ NOISE_SEED_SALT,
        }
    } else {
        JitterMode::Token
    };
    let patches: Vec<_> = apply_jitter(&grid, &field, &img, mode)?.into_iter().map(Some).collect();
    io::write_image(out, &tile_patches(&grid, &patches, [0, 0, 0]))?;
    if common.emit_json {
        let report = JitterReport {
            rows: field.rows,
            cols: field.cols,
            max_displacement: max_disp,
            neighborhood,
            seed,
            pixel_baseline,
            displacements: field.displacements.iter().map(|d| [d.x, d.y]).collect(),
        };
        io::write_json(&sidecar(out), &report)?;
    }
    Ok(())
}

fn synth(common: &Common, command: &Command) -> Result<()> {
    let Command::Synth {
        scene,
        width,
        height,
        fx,
        fy,
        cx,
        cy,
        depth,
        z_near,
        z_far,
        split,
        tx,
        ty,
        tz,
        rx,
        ry,
        rz,
        period,
        pfm,
    } = *command
    else {
        unreachable!("dispatched on Synth")
    };
    let out = common.out()?;
    let convention = common.convention()?;
    let k = CameraIntrinsics::new(
        fx,
        fy,
        cx.unwrap_or(width as f64 / 2.0),
        cy.unwrap_or(height as f64 / 2.0),
        width,
        height,
    )?;
    // camera-to-world rotation and center of the target camera
    let r = Rotation3::from_euler_angles(rx.to_radians(), ry.to_radians(), rz.to_radians());
    let c2w = CameraPose::new(*r.matrix(), Vector3::new(tx, ty, tz))?;
    let target_pose = c2w.inverse();
    let texture = Texture { period, ..Texture::default() };
    let scene = match scene {
        Scene::Plane => gen_plane_scene(&k, depth, texture, target_pose)?,
        Scene::TwoPlane => gen_two_plane_scene(&k, z_near, z_far, split.unwrap_or(width / 2), texture, target_pose)?,
    };
    let (target_image, target_depth) = scene.render_target();

    for sub in ["color", "depth", "pose"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir, source: e })?;
    }
    let frames: [(&str, &Image, _, &CameraPose); 2] = [
        ("0", &scene.image, &scene.depth, &scene.source_pose),
        ("1", &target_image, &target_depth, &scene.target_pose),
    ];
    for (id, image, d, pose) in frames {
        io::write_image(&out.join("color").join(format!("{id}.png")), image)?;
        if pfm {
            io::write_pfm(&out.join("depth").join(format!("{id}.pfm")), d)?;
        } else {
            io::write_depth_png(&out.join("depth").join(format!("{id}.png")), d, common.depth_scale)?;
        }
        io::write_pose(&out.join("pose").join(format!("{id}.txt")), pose, convention)?;
    }
    io::write_intrinsics(&out.join("intrinsic.txt"), &k)?;
    if common.emit_json {
        io::write_json(&out.join("scene.json"), &scene.planes)?;
    }
    Ok(())
}
