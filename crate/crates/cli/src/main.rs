#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use screwgrasp::dataset::{design_matrix, generate_cuboid_family, generate_dataset, plan_dataset, reduced_family, FamilyConfig, FeatureVariant};
use screwgrasp::evaluation::{
    fge, run_object_table, run_trials, table_objects, FgeConfig, ScrewSampler, TaskSetup, TrialConfig, TrialObject,
    DEFAULT_TRIAL_MASS,
};
use screwgrasp::geometry::{AntipodalPair, PointCloud, Screw, Vec3};
use screwgrasp::io::{self, RunConfig};
use screwgrasp::metric::{env_contact, grasp_metric, ContactKind, ContactSpec, FrictionModel, Physics};
use screwgrasp::mlp::{train, MlpModel};
use screwgrasp::region::{compute_region, poses_from_point, prepare_faces, GraspPose, GraspRegion, MlpScorer};
use screwgrasp::scan::{desk_objects, estimate_normals, overview_camera, render_partial_cloud, TriMesh, VirtualCamera, DEFAULT_NORMAL_K};

mod output;

/// Bad command-line arguments; exits with code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "screwgrasp", version, about = "Task-oriented antipodal grasp regions from point clouds")]
struct Cli {
    /// JSON run configuration; unset keys keep their defaults.
    #[arg(long, global = true, env = "SCREWGRASP_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for solver and trial loops.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label the cuboid family and write the dataset CSV.
    GenData(GenDataArgs),
    /// Train the surrogate on a dataset CSV.
    Train(TrainArgs),
    /// Score a cloud and write the grasping region.
    Region(RegionArgs),
    /// Sample end-effector poses from a region file.
    Poses(PosesArgs),
    /// Final grasp evaluation of the surrogate on one cloud and screw.
    Fge(FgeArgs),
    /// FGE trials over scanned meshes.
    Trials(TrialsArgs),
    /// Per-object mean FGE for box pivoting, cylinder pouring and T-handle pivoting.
    Table(TableArgs),
    /// Render a partial cloud of a mesh.
    Scan(ScanArgs),
    /// Grasp metric of a single antipodal pair.
    Metric(MetricArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Output CSV.
    #[arg(long, required_unless_present = "dry_run")]
    out: Option<PathBuf>,
    /// The 12-cuboid subset instead of all 144.
    #[arg(long)]
    reduced: bool,
    /// Print the cuboid and sample counts without solving.
    #[arg(long)]
    dry_run: bool,
    /// Also write train.csv and val.csv into this directory.
    #[arg(long)]
    split_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Loss trace as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TaskArgs {
    /// Screw as `px,py,pz,lx,ly,lz`: a point on the axis and its direction.
    #[arg(long, value_parser = parse_screw, allow_hyphen_values = true)]
    screw: Screw,
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,1", allow_hyphen_values = true)]
    support_normal: Vec3,
}

#[derive(Args, Debug)]
struct RegionArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, allow_hyphen_values = true)]
    y_th: Option<f64>,
    /// Cloud with scores as PLY quality and colors.
    #[arg(long)]
    out_ply: PathBuf,
    /// Region indices and scores as JSON.
    #[arg(long)]
    out_json: PathBuf,
}

#[derive(Args, Debug)]
struct PosesArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// Region JSON written by `region`.
    #[arg(long)]
    region: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FgeArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    /// Environment contact `px,py,pz,nx,ny,nz`; repeatable.
    #[arg(long, value_parser = parse_six, allow_hyphen_values = true)]
    env: Vec<[f64; 6]>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 100)]
    top_m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SamplerArg {
    Mixed,
    Pivot,
}

#[derive(Args, Debug)]
struct TrialsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory of OBJ meshes; the built-in desk objects when absent.
    #[arg(long)]
    meshes: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    objects: usize,
    #[arg(long, default_value_t = 4)]
    screws: usize,
    #[arg(long, value_enum, default_value = "mixed")]
    sampler: SamplerArg,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 50)]
    top_m: usize,
    /// Object mass in kg.
    #[arg(long, default_value_t = DEFAULT_TRIAL_MASS)]
    mass: f64,
    /// Receives trials.csv, histogram.csv, per_object.csv and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct TableArgs {
    #[arg(long)]
    model: PathBuf,
    /// Trials per object.
    #[arg(long, default_value_t = 9)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 50)]
    top_m: usize,
    /// Object mass in kg.
    #[arg(long, default_value_t = DEFAULT_TRIAL_MASS)]
    mass: f64,
    /// Receives table.csv and table_trials.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Camera position; an elevated diagonal view when absent.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, requires = "target")]
    eye: Option<Vec3>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, requires = "eye")]
    target: Option<Vec3>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Estimate normals, oriented toward the camera.
    #[arg(long)]
    normals: bool,
}

#[derive(Args, Debug)]
struct MetricArgs {
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    ci: Vec3,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    cj: Vec3,
    #[arg(long, value_parser = parse_screw, allow_hyphen_values = true)]
    screw: Screw,
    #[arg(long, value_parser = parse_six, allow_hyphen_values = true)]
    env: Vec<[f64; 6]>,
    /// Fixed friction coefficient instead of sampled draws.
    #[arg(long)]
    mu: Option<f64>,
    /// Normal force bound; the configured value when absent.
    #[arg(long)]
    f_max: Option<f64>,
    /// No mass, no gravity.
    #[arg(long)]
    gravity_free: bool,
    /// Center of mass; the pair midpoint when absent.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    com: Option<Vec3>,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; N] = v
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))?;
    if arr.iter().any(|x| !x.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(arr)
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    parse_floats::<3>(s).map(|a| Vec3::new(a[0], a[1], a[2]))
}

fn parse_six(s: &str) -> Result<[f64; 6], String> {
    parse_floats::<6>(s)
}

fn parse_screw(s: &str) -> Result<Screw, String> {
    let a = parse_floats::<6>(s)?;
    Screw::from_point_dir(Vec3::new(a[0], a[1], a[2]), Vec3::new(a[3], a[4], a[5])).map_err(|e| e.to_string())
}

fn env_contacts(raw: &[[f64; 6]], fm: &FrictionModel) -> anyhow::Result<Vec<ContactSpec>> {
    raw.iter()
        .map(|a| {
            let n = Vec3::new(a[3], a[4], a[5]);
            if !(n.norm() > 1e-12) {
                return Err(usage("environment contact normal is zero"));
            }
            Ok(env_contact(Vec3::new(a[0], a[1], a[2]), n.normalize(), fm))
        })
        .collect()
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds.data = seed;
        cfg.seeds.train = seed;
        cfg.seeds.eval = seed;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.chain().find_map(|c| c.downcast_ref::<screwgrasp::Error>()) {
        Some(se) if se.is_numerical() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenData(a) => gen_data(&cfg, a),
        Command::Train(a) => train_cmd(&cfg, a),
        Command::Region(a) => region_cmd(&cfg, a),
        Command::Poses(a) => poses_cmd(&cfg, a),
        Command::Fge(a) => fge_cmd(&cfg, a),
        Command::Trials(a) => trials_cmd(&cfg, a),
        Command::Table(a) => table_cmd(&cfg, a),
        Command::Scan(a) => scan_cmd(&cfg, a),
        Command::Metric(a) => metric_cmd(&cfg, a),
    }
}

fn gen_data(cfg: &RunConfig, a: &GenDataArgs) -> anyhow::Result<()> {
    let family = FamilyConfig::default();
    let cuboids = if a.reduced {
        reduced_family(&family)?
    } else {
        generate_cuboid_family(&family)?
    };
    let plan = plan_dataset(&cuboids, cfg.grid());
    if a.dry_run {
        println!("{}", serde_json::to_string_pretty(&plan)?);
        return Ok(());
    }
    let out = a.out.as_ref().expect("clap requires --out");
    let samples = generate_dataset(&cuboids, cfg.grid(), &cfg.friction_model(), &cfg.physics)?;
    io::save_dataset(out, &samples)?;
    if let Some(dir) = &a.split_dir {
        io::export_dataset(dir, &samples, &cfg.split())?;
    }
    let infeasible = samples.iter().filter(|s| s.eta_raw.is_nan()).count();
    println!(
        "{} cuboids, {} samples ({infeasible} infeasible) -> {}",
        plan.n_cuboids,
        samples.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainOutput {
    n_samples: usize,
    steps: usize,
    loss_trace: Vec<f64>,
}

fn train_cmd(cfg: &RunConfig, a: &TrainArgs) -> anyhow::Result<()> {
    let samples = io::load_dataset(&a.data)?;
    if samples.is_empty() {
        return Err(screwgrasp::Error::format(&a.data, "dataset has no rows").into());
    }
    let (x, y) = design_matrix(FeatureVariant::Plucker12, &samples)?;
    let mut model = MlpModel::init(x.ncols(), cfg.train.hidden_width, cfg.seeds.train)?;
    let report = train(&mut model, x.view(), y.view(), &cfg.train_config())?;
    io::save_model(&a.out, &model)?;
    if let Some(path) = &a.report {
        write_json(
            path,
            &TrainOutput {
                n_samples: samples.len(),
                steps: report.steps,
                loss_trace: report.loss_trace.clone(),
            },
        )?;
    }
    println!(
        "trained on {} samples, final loss {:.6} -> {}",
        samples.len(),
        report.loss_trace.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScrewJson {
    l: Vec3,
    m: Vec3,
}

/// Region file shared by `region` and `poses`.
#[derive(Serialize, Deserialize)]
struct RegionJson {
    screw: ScrewJson,
    support_normal: Vec3,
    y_th: f64,
    n_points: usize,
    closing_axis: usize,
    indices: Vec<usize>,
    scores: Vec<f64>,
}

fn pipeline_with(cfg: &RunConfig, y_th: Option<f64>) -> anyhow::Result<screwgrasp::region::PipelineConfig> {
    let mut p = cfg.pipeline_config();
    if let Some(t) = y_th {
        if !(0.0..=1.0).contains(&t) {
            return Err(usage(format!("--y-th {t} outside [0, 1]")));
        }
        p.y_th = t;
    }
    Ok(p)
}

fn region_cmd(cfg: &RunConfig, a: &RegionArgs) -> anyhow::Result<()> {
    let pipeline = pipeline_with(cfg, a.y_th)?;
    let (cloud, _) = io::load_cloud(&a.cloud)?;
    let model = io::load_model(&a.model)?;
    let out = compute_region(&cloud, &a.task.screw, &a.task.support_normal, &MlpScorer::new(&model), &pipeline)?;
    io::save_cloud(&a.out_ply, &cloud, Some(&out.scored.scores))?;
    write_json(
        &a.out_json,
        &RegionJson {
            screw: ScrewJson {
                l: a.task.screw.direction(),
                m: a.task.screw.moment(),
            },
            support_normal: a.task.support_normal,
            y_th: pipeline.y_th,
            n_points: cloud.len(),
            closing_axis: out.field.faces.closing_axis,
            indices: out.region.indices.clone(),
            scores: out.region.scores.clone(),
        },
    )?;
    println!("{} of {} points at or above y_th = {}", out.region.len(), cloud.len(), pipeline.y_th);
    Ok(())
}

fn with_normals(cloud: PointCloud, viewpoint: &Vec3) -> anyhow::Result<PointCloud> {
    if cloud.normals().is_some() {
        return Ok(cloud);
    }
    let k = DEFAULT_NORMAL_K.min(cloud.len());
    Ok(estimate_normals(&cloud, k, viewpoint)?)
}

#[derive(Serialize)]
struct PosesOutput {
    poses: Vec<GraspPose>,
    failed_draws: usize,
}

fn poses_cmd(cfg: &RunConfig, a: &PosesArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.region).with_context(|| format!("reading {}", a.region.display()))?;
    let rj: RegionJson = serde_json::from_str(&text)
        .map_err(|e| screwgrasp::Error::format(&a.region, e.to_string()))?;
    let (cloud, _) = io::load_cloud(&a.cloud)?;
    if rj.n_points != cloud.len() {
        return Err(screwgrasp::Error::format(&a.region, "region was computed on a different cloud").into());
    }
    let screw = Screw::from_plucker(rj.screw.l, rj.screw.m)?;
    let pipeline = pipeline_with(cfg, Some(rj.y_th))?;
    let (_, faces) = prepare_faces(&cloud, &screw, &rj.support_normal, &pipeline)?;
    let viewpoint = cloud.centroid() + rj.support_normal.normalize();
    let cloud = with_normals(cloud, &viewpoint)?;
    let region = GraspRegion {
        indices: rj.indices,
        scores: rj.scores,
        y_th: rj.y_th,
    };
    region.require_nonempty()?;
    let mut poses = Vec::new();
    let mut failed = 0;
    let mut last_err = None;
    for i in 0..a.count {
        match poses_from_point(&region, &cloud, &faces, &pipeline.gripper, cfg.seeds.eval.wrapping_add(i as u64)) {
            Ok(p) => poses.push(p),
            Err(e) => {
                failed += 1;
                last_err = Some(e);
            }
        }
    }
    if poses.is_empty() {
        if let Some(e) = last_err {
            return Err(e.into());
        }
    }
    write_json(&a.out, &PosesOutput { poses, failed_draws: failed })?;
    Ok(())
}

fn fge_cmd(cfg: &RunConfig, a: &FgeArgs) -> anyhow::Result<()> {
    let fge_cfg = FgeConfig {
        top_k: a.top_k,
        top_m: a.top_m,
        seed: cfg.seeds.eval,
    };
    fge_cfg.validate().map_err(|e| usage(e.to_string()))?;
    let fm = cfg.friction_model();
    let (cloud, _) = io::load_cloud(&a.cloud)?;
    let model = io::load_model(&a.model)?;
    let task = TaskSetup {
        screw: a.task.screw,
        support_normal: a.task.support_normal,
        env: env_contacts(&a.env, &fm)?,
    };
    let id = a.cloud.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud");
    let report = fge(id, &cloud, &task, &model, &fge_cfg, &cfg.pipeline_config(), &fm, &cfg.physics)?;
    match &a.out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn trial_meshes(dir: Option<&Path>) -> anyhow::Result<Vec<(String, TriMesh)>> {
    let Some(dir) = dir else {
        return Ok(desk_objects()?);
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string();
            Ok((id, io::load_mesh(&p)?))
        })
        .collect()
}

fn trials_cmd(cfg: &RunConfig, a: &TrialsArgs) -> anyhow::Result<()> {
    if a.objects == 0 || a.screws == 0 {
        return Err(usage("--objects and --screws must be positive"));
    }
    let fge_cfg = FgeConfig {
        top_k: a.top_k,
        top_m: a.top_m,
        seed: cfg.seeds.eval,
    };
    fge_cfg.validate().map_err(|e| usage(e.to_string()))?;
    let meshes = trial_meshes(a.meshes.as_deref())?;
    if meshes.len() < a.objects {
        return Err(usage(format!("{} objects requested, {} meshes available", a.objects, meshes.len())));
    }
    let model = io::load_model(&a.model)?;
    let objects = scan_objects(&meshes[..a.objects], cfg.seeds.eval)?;
    let trial_cfg = TrialConfig {
        fge: fge_cfg,
        sampler: match a.sampler {
            SamplerArg::Mixed => ScrewSampler::Mixed,
            SamplerArg::Pivot => ScrewSampler::Pivot,
        },
        seed: cfg.seeds.eval,
    };
    let fm = cfg.friction_model();
    let physics = trial_physics(cfg, a.mass)?;
    let out = run_trials(&objects, a.screws, &model, &trial_cfg, &cfg.pipeline_config(), &fm, &physics)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    output::write_trials(&a.out_dir, &objects, a.screws, &out)?;
    println!(
        "{} trials, {} failed, median y_max {:.3}, {:.0}% at or above 0.9",
        out.summary.n_trials + out.summary.n_failed,
        out.summary.n_failed,
        out.summary.median_y_max,
        100.0 * out.summary.frac_at_least_0_9
    );
    for m in &out.per_object {
        println!("{:<16} {:.3}", m.object_id, m.mean_y_max);
    }
    Ok(())
}

fn trial_physics(cfg: &RunConfig, mass: f64) -> anyhow::Result<Physics> {
    let physics = Physics { mass, ..cfg.physics };
    physics.validate().map_err(|e| usage(e.to_string()))?;
    Ok(physics)
}

fn table_cmd(cfg: &RunConfig, a: &TableArgs) -> anyhow::Result<()> {
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let fge_cfg = FgeConfig {
        top_k: a.top_k,
        top_m: a.top_m,
        seed: cfg.seeds.eval,
    };
    fge_cfg.validate().map_err(|e| usage(e.to_string()))?;
    let physics = trial_physics(cfg, a.mass)?;
    let model = io::load_model(&a.model)?;
    let fm = cfg.friction_model();
    let out = run_object_table(
        &table_objects()?,
        a.trials,
        &model,
        &fge_cfg,
        cfg.seeds.eval,
        &cfg.pipeline_config(),
        &fm,
        &physics,
    )?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    output::write_table(&a.out_dir, a.trials, &out)?;
    for r in &out.rows {
        println!("{:<10} {:<6} {:>2} {:.3}", r.object_id, r.task.name(), r.n_trials, r.mean_y_max);
    }
    Ok(())
}

fn scan_objects(meshes: &[(String, TriMesh)], seed: u64) -> anyhow::Result<Vec<TrialObject>> {
    meshes
        .iter()
        .enumerate()
        .map(|(i, (id, mesh))| {
            let cam = overview_camera(mesh)?;
            let cloud = render_partial_cloud(mesh, &cam, seed.wrapping_add(i as u64))
                .with_context(|| format!("scanning {id}"))?;
            Ok(TrialObject {
                id: id.clone(),
                cloud,
                support_normal: Vec3::z(),
            })
        })
        .collect()
}

fn scan_cmd(cfg: &RunConfig, a: &ScanArgs) -> anyhow::Result<()> {
    let mesh = io::load_mesh(&a.mesh)?;
    let mut cam = match (a.eye, a.target) {
        (Some(eye), Some(target)) => VirtualCamera::look_at(eye, target, Vec3::z()).map_err(|e| usage(e.to_string()))?,
        _ => overview_camera(&mesh)?,
    };
    if a.width.is_some() || a.height.is_some() {
        cam = cam.with_resolution(a.width.unwrap_or(cam.width), a.height.unwrap_or(cam.height));
    }
    if let Some(n) = a.noise {
        cam = cam.with_noise(n);
    }
    cam.validate().map_err(|e| usage(e.to_string()))?;
    let mut cloud = render_partial_cloud(&mesh, &cam, cfg.seeds.eval)?;
    if a.normals {
        cloud = with_normals(cloud, &cam.position)?;
    }
    io::save_cloud(&a.out, &cloud, None)?;
    println!("{} points -> {}", cloud.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct MetricOutput {
    eta: f64,
    n_feasible: usize,
    n_excluded: usize,
}

fn metric_cmd(cfg: &RunConfig, a: &MetricArgs) -> anyhow::Result<()> {
    let pair = AntipodalPair::from_points(a.ci, a.cj).map_err(|_| usage("contacts coincide"))?;
    let mut fm = cfg.friction_model();
    if let Some(mu) = a.mu {
        if !(0.0..=1.0).contains(&mu) {
            return Err(usage(format!("--mu {mu} outside [0, 1]")));
        }
        fm = FrictionModel {
            rng_seed: fm.rng_seed,
            mu_env: fm.mu_env,
            ..FrictionModel::fixed(mu)
        };
    }
    let f_max = a.f_max.unwrap_or(cfg.physics.f_normal_max);
    if !(f_max > 0.0) {
        return Err(usage("--f-max must be positive"));
    }
    let physics = if a.gravity_free {
        Physics::gravity_free(f_max)
    } else {
        Physics {
            f_normal_max: f_max,
            ..cfg.physics
        }
    };
    let env = env_contacts(&a.env, &fm)?;
    debug_assert!(env.iter().all(|c| c.kind == ContactKind::Environment));
    let com = a.com.unwrap_or_else(|| pair.midpoint());
    let est = grasp_metric(&pair, &a.screw, &env, &fm, &physics, com)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&MetricOutput {
            eta: est.eta,
            n_feasible: est.n_feasible,
            n_excluded: est.n_excluded,
        })?
    );
    Ok(())
}
