//! Region quality against the exact metric: exact fields, final grasp
//! evaluation (FGE), threshold precision, and the batch trial harness.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_labels, pair_metric, GridRes, ENV_FRACTIONS};
use crate::error::{Error, Result};
use crate::geometry::{oriented_box_pca, AntipodalPair, OrientedBox, PointCloud, Screw, Vec3};
use crate::metric::{env_contact, ContactSpec, FrictionModel, Physics};
use crate::mlp::MlpModel;
use crate::region::{
    build_box_field, prepare_faces, transfer_to_cloud, BoxMetricField, FacePair, MlpScorer,
    PipelineConfig, VertexScorer, VertexScores,
};
use crate::scan::{desk_objects, overview_camera_at, render_partial_cloud, TriMesh};

/// Exact metric as the scoring step; everything expressed in `{O}`.
pub struct ExactScorer {
    pub env: Vec<ContactSpec>,
    pub fm: FrictionModel,
    pub physics: Physics,
    pub com: Vec3,
}

impl ExactScorer {
    /// Moves world-frame environment contacts, gravity and center of mass into `{O}`.
    pub fn for_faces(
        faces: &FacePair,
        env_world: &[ContactSpec],
        fm: &FrictionModel,
        physics: &Physics,
        com_world: Vec3,
    ) -> Self {
        let t = faces.to_object();
        Self {
            env: env_world.iter().map(|c| c.transformed(&t)).collect(),
            fm: *fm,
            physics: Physics {
                gravity: t.apply_vector(&physics.gravity),
                ..*physics
            },
            com: t.apply_point(&com_world),
        }
    }
}

impl VertexScorer for ExactScorer {
    /// Mean metric per vertex, min-max normalized over the grid; vertices with
    /// no feasible friction draw keep a NaN raw value and score 0.
    fn score(&self, pairs: &[AntipodalPair], screw: &Screw) -> Result<VertexScores> {
        let eta: Vec<f64> = pairs
            .par_iter()
            .map(|p| {
                pair_metric(p, screw, &self.env, &self.fm, &self.physics, self.com)
                    .map(|e| e.unwrap_or(f64::NAN))
            })
            .collect::<Result<_>>()?;
        if eta.iter().all(|e| e.is_nan()) {
            return Err(Error::NoFeasibleGrasp);
        }
        Ok(VertexScores {
            y: normalize_labels(&eta),
            eta: Some(eta),
        })
    }
}

/// Same grid as the surrogate field; the box center stands in for the center of mass.
pub fn compute_region_exact(
    faces: &FacePair,
    screw: &Screw,
    res: GridRes,
    env: &[ContactSpec],
    fm: &FrictionModel,
    physics: &Physics,
) -> Result<BoxMetricField> {
    let scorer = ExactScorer::for_faces(faces, env, fm, physics, faces.canonical_box().center);
    build_box_field(faces, screw, res, &scorer)
}

/// Positives are `y ≥ y_th`. `None` when nothing is predicted positive.
pub fn precision_at_threshold(predicted: &[f64], exact: &[f64], y_th: f64) -> Result<Option<f64>> {
    if predicted.len() != exact.len() {
        return Err(Error::DimensionMismatch {
            expected: exact.len(),
            got: predicted.len(),
        });
    }
    let mut n_pos = 0usize;
    let mut n_true = 0usize;
    for (p, e) in predicted.iter().zip(exact) {
        if *p >= y_th {
            n_pos += 1;
            if *e >= y_th {
                n_true += 1;
            }
        }
    }
    Ok((n_pos > 0).then(|| n_true as f64 / n_pos as f64))
}

/// Ranks with ties averaged; NaN sorts lowest.
fn ranks(v: &[f64]) -> Vec<f64> {
    let key = |x: f64| if x.is_nan() { f64::NEG_INFINITY } else { x };
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| key(v[a]).total_cmp(&key(v[b])));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && key(v[idx[j + 1]]) == key(v[idx[i]]) {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgeConfig {
    pub top_k: usize,
    pub top_m: usize,
    pub seed: u64,
}

impl Default for FgeConfig {
    fn default() -> Self {
        Self {
            top_k: 10,
            top_m: 100,
            seed: 0,
        }
    }
}

impl FgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k < 1 || self.top_m <= self.top_k {
            return Err(Error::InvalidInput("FGE needs top_m > top_k >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub object_id: String,
    /// Trial index within the object.
    pub trial: usize,
    pub screw: Screw,
    pub y_max: f64,
    /// Raw metric of the surrogate's picks, best surrogate score first.
    pub picked_eta: Vec<f64>,
    pub precision: Option<f64>,
    /// Vertex-level rank agreement of surrogate and exact fields.
    pub spearman: f64,
    pub top_k: usize,
    pub top_m: usize,
    pub wall_time_s: f64,
}

/// Grid vertices at the corners of cells that some cloud point projects into.
pub fn supported_vertices(field: &BoxMetricField, cloud: &PointCloud) -> Result<Vec<usize>> {
    let scored = transfer_to_cloud(field, cloud)?;
    let mut v: Vec<usize> = scored
        .occupied_cells()
        .into_iter()
        .flat_map(|c| field.cell_vertices(c))
        .collect();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

/// Indices of the `n` largest keys, ties to the lower index; NaN ranks last.
fn top_n(candidates: &[usize], key: &[f64], n: usize) -> Vec<usize> {
    let k = |i: usize| if key[i].is_nan() { f64::NEG_INFINITY } else { key[i] };
    let mut c = candidates.to_vec();
    c.sort_by(|&a, &b| k(b).total_cmp(&k(a)).then(a.cmp(&b)));
    c.truncate(n);
    c
}

/// FGE from a surrogate and an exact field over the same grid.
pub fn fge_from_fields(
    surrogate: &BoxMetricField,
    exact: &BoxMetricField,
    cloud: &PointCloud,
    cfg: &FgeConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let eta = exact
        .vertex_eta
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("exact field carries no raw metric".into()))?;
    if surrogate.grid != exact.grid {
        return Err(Error::InvalidInput("fields are over different grids".into()));
    }
    let support = supported_vertices(surrogate, cloud)?;
    if support.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let picks = top_n(&support, &surrogate.vertex_y, cfg.top_k);
    let best = top_n(&support, eta, cfg.top_m);
    let mut union: Vec<usize> = picks.iter().chain(&best).copied().collect();
    union.sort_unstable();
    union.dedup();
    let joint = normalize_labels(&union.iter().map(|&v| eta[v]).collect::<Vec<_>>());
    let y_max = picks
        .iter()
        .map(|v| joint[union.binary_search(v).expect("picks are in the union")])
        .fold(0.0, f64::max);
    Ok((y_max, picks.iter().map(|&v| eta[v]).collect()))
}

/// World-frame task description for one FGE run.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSetup {
    pub screw: Screw,
    pub support_normal: Vec3,
    pub env: Vec<ContactSpec>,
}

pub fn fge(
    object_id: &str,
    cloud: &PointCloud,
    task: &TaskSetup,
    model: &MlpModel,
    cfg: &FgeConfig,
    pipeline: &PipelineConfig,
    fm: &FrictionModel,
    physics: &Physics,
) -> Result<TrialReport> {
    let start = Instant::now();
    pipeline.validate()?;
    let (_, faces) = prepare_faces(cloud, &task.screw, &task.support_normal, pipeline)?;
    let surrogate = build_box_field(&faces, &task.screw, pipeline.res, &MlpScorer::new(model))?;
    let exact = compute_region_exact(&faces, &task.screw, pipeline.res, &task.env, fm, physics)?;
    let (y_max, picked_eta) = fge_from_fields(&surrogate, &exact, cloud, cfg)?;
    let precision = precision_at_threshold(&surrogate.vertex_y, &exact.vertex_y, pipeline.y_th)?;
    Ok(TrialReport {
        object_id: object_id.to_string(),
        trial: 0,
        screw: task.screw,
        y_max,
        picked_eta,
        precision,
        spearman: spearman(&surrogate.vertex_y, &exact.vertex_y)?,
        top_k: cfg.top_k,
        top_m: cfg.top_m,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Random task screw relative to an object box. Screws are drawn parallel to
/// a box axis the gripper can close along, so that the selected face pair is
/// perpendicular to the screw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrewSampler {
    /// Even odds of a bottom-edge pivot (environment contacts on the edge) or
    /// an axis through the interior (no contacts).
    #[default]
    Mixed,
    /// Bottom-edge pivots only.
    Pivot,
}

/// Bottom edge `e` (0..4) of the box as a lifting pivot: direction chosen so
/// that positive rotation raises the box center. Edges 0 and 1 run along box
/// axis 0, edges 2 and 3 along axis 1; axis 2 is the support normal.
pub fn pivot_task(b: &OrientedBox, edge: usize, up: &Vec3, fm: &FrictionModel) -> Result<TaskSetup> {
    let h = b.half_extents;
    let along = if edge < 2 { 0 } else { 1 };
    let across = 1 - along;
    let side = if edge.is_multiple_of(2) { -1.0 } else { 1.0 };
    let mut mid = Vec3::zeros();
    mid[across] = side * h[across];
    mid[2] = -h[2];
    let mut dir = Vec3::zeros();
    dir[along] = 1.0;
    let p = b.to_world(&mid);
    let mut l = b.rotation * dir;
    if l.cross(&(b.center - p)).dot(up) < 0.0 {
        l = -l;
    }
    let half = b.rotation * dir * h[along];
    let env = ENV_FRACTIONS
        .iter()
        .map(|&t| env_contact(p - half + 2.0 * half * t, *up, fm))
        .collect();
    Ok(TaskSetup {
        screw: Screw::from_point_dir(p, l)?,
        support_normal: *up,
        env,
    })
}

/// Box axes whose extent fits the gripper opening.
pub fn graspable_axes(b: &OrientedBox, max_opening: f64) -> Vec<usize> {
    (0..3).filter(|&k| b.extent(k) <= max_opening).collect()
}

pub fn sample_task(
    b: &OrientedBox,
    up: &Vec3,
    sampler: ScrewSampler,
    max_opening: f64,
    fm: &FrictionModel,
    rng: &mut ChaCha8Rng,
) -> Result<TaskSetup> {
    let axes = graspable_axes(b, max_opening);
    if axes.is_empty() {
        return Err(Error::ExceedsGripperOpening);
    }
    let pivot_axes: Vec<usize> = axes.iter().copied().filter(|&k| k < 2).collect();
    let pivot = match sampler {
        ScrewSampler::Pivot => true,
        // Interior axes only when no bottom edge qualifies.
        ScrewSampler::Mixed => rng.random_bool(0.5) && !pivot_axes.is_empty(),
    };
    if pivot {
        if pivot_axes.is_empty() {
            return Err(Error::InvalidInput("no bottom edge runs along a graspable axis".into()));
        }
        let along = pivot_axes[rng.random_range(0..pivot_axes.len())];
        return pivot_task(b, 2 * along + rng.random_range(0..2), up, fm);
    }
    let axis = axes[rng.random_range(0..axes.len())];
    let mut local = Vec3::zeros();
    for k in 0..3 {
        if k != axis {
            local[k] = rng.random_range(-0.5..0.5) * b.half_extents[k];
        }
    }
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Ok(TaskSetup {
        screw: Screw::from_point_dir(b.to_world(&local), sign * b.axis(axis))?,
        support_normal: *up,
        env: Vec::new(),
    })
}

/// Named task for the per-object table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectTask {
    /// About a bottom edge, environment contacts on the edge.
    Pivot,
    /// About a top edge, no environment contacts.
    Pour,
}

impl ObjectTask {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pivot => "pivot",
            Self::Pour => "pour",
        }
    }
}

/// Task screw along the narrowest graspable horizontal box axis, on the box
/// side selected by `side` (0 or 1).
pub fn object_task(
    b: &OrientedBox,
    task: ObjectTask,
    side: usize,
    up: &Vec3,
    max_opening: f64,
    fm: &FrictionModel,
) -> Result<TaskSetup> {
    let along = graspable_axes(b, max_opening)
        .into_iter()
        .filter(|&k| k < 2)
        .min_by(|&a, &c| b.extent(a).total_cmp(&b.extent(c)))
        .ok_or(Error::ExceedsGripperOpening)?;
    let sign = if side.is_multiple_of(2) { -1.0 } else { 1.0 };
    match task {
        ObjectTask::Pivot => pivot_task(b, 2 * along + side % 2, up, fm),
        ObjectTask::Pour => {
            let h = b.half_extents;
            let mut mid = Vec3::zeros();
            mid[1 - along] = sign * h[1 - along];
            mid[2] = h[2];
            let p = b.to_world(&mid);
            let mut l = b.axis(along);
            if l.cross(&(b.center - p)).dot(up) < 0.0 {
                l = -l;
            }
            Ok(TaskSetup {
                screw: Screw::from_point_dir(p, l)?,
                support_normal: *up,
                env: Vec::new(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialObject {
    pub id: String,
    /// World frame.
    pub cloud: PointCloud,
    pub support_normal: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct TrialConfig {
    pub fge: FgeConfig,
    pub sampler: ScrewSampler,
    pub seed: u64,
}


pub const HISTOGRAM_BIN: f64 = 0.05;
/// Object mass for trials: light enough that a two-finger grip alone can hold
/// the weight, so tasks without environment contacts stay feasible.
pub const DEFAULT_TRIAL_MASS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n_trials: usize,
    pub n_failed: usize,
    pub median_y_max: f64,
    pub frac_at_least_0_9: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMean {
    pub object_id: String,
    pub n_trials: usize,
    pub mean_y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub object_id: String,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsOutput {
    pub reports: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
    /// Counts per bin `[k·0.05, (k+1)·0.05)`, the last bin closed.
    pub histogram: Vec<usize>,
    pub summary: TrialSummary,
    pub per_object: Vec<ObjectMean>,
}

pub fn histogram(values: &[f64]) -> Vec<usize> {
    let n_bins = (1.0 / HISTOGRAM_BIN).round() as usize;
    let mut h = vec![0; n_bins];
    for &v in values {
        let b = ((v / HISTOGRAM_BIN + 1e-9).floor() as usize).min(n_bins - 1);
        h[b] += 1;
    }
    h
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Screws for object `o` come from a generator seeded by `(seed, o)`, so each
/// object's trials are independent of the others.
pub fn run_trials(
    objects: &[TrialObject],
    screws_per_object: usize,
    model: &MlpModel,
    cfg: &TrialConfig,
    pipeline: &PipelineConfig,
    fm: &FrictionModel,
    physics: &Physics,
) -> Result<TrialsOutput> {
    if objects.is_empty() {
        return Err(Error::InvalidInput("no trial objects".into()));
    }
    cfg.fge.validate()?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (o, obj) in objects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(o as u64);
        let bbox = oriented_box_pca(&obj.cloud, &obj.support_normal)?.bbox;
        for trial in 0..screws_per_object {
            let outcome = sample_task(&bbox, &obj.support_normal, cfg.sampler, pipeline.gripper.max_opening, fm, &mut rng)
                .and_then(|task| {
                    let fge_cfg = FgeConfig {
                        seed: cfg.seed ^ ((o as u64) << 32 | trial as u64),
                        ..cfg.fge
                    };
                    fge(&obj.id, &obj.cloud, &task, model, &fge_cfg, pipeline, fm, physics)
                });
            match outcome {
                Ok(mut r) => {
                    r.trial = trial;
                    log::info!("{} trial {trial}: y_max {:.3}", obj.id, r.y_max);
                    reports.push(r);
                }
                Err(e) => {
                    log::warn!("{} trial {trial} failed: {e}", obj.id);
                    failures.push(TrialFailure {
                        object_id: obj.id.clone(),
                        trial,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    let y: Vec<f64> = reports.iter().map(|r| r.y_max).collect();
    let summary = TrialSummary {
        n_trials: reports.len(),
        n_failed: failures.len(),
        median_y_max: median(&y),
        frac_at_least_0_9: if y.is_empty() {
            0.0
        } else {
            y.iter().filter(|&&v| v >= 0.9).count() as f64 / y.len() as f64
        },
    };
    let per_object = objects
        .iter()
        .map(|obj| {
            let ys: Vec<f64> = reports
                .iter()
                .filter(|r| r.object_id == obj.id)
                .map(|r| r.y_max)
                .collect();
            ObjectMean {
                object_id: obj.id.clone(),
                n_trials: ys.len(),
                mean_y_max: ys.iter().sum::<f64>() / ys.len() as f64,
            }
        })
        .collect();
    Ok(TrialsOutput {
        histogram: histogram(&y),
        reports,
        failures,
        summary,
        per_object,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableObject {
    pub id: String,
    /// Resting on `z = 0`.
    pub mesh: TriMesh,
    pub task: ObjectTask,
}

/// Box pivoting, cylinder pouring and T-handle pivoting.
pub fn table_objects() -> Result<Vec<TableObject>> {
    let tasks = [("box", ObjectTask::Pivot), ("cylinder", ObjectTask::Pour), ("t_handle", ObjectTask::Pivot)];
    let meshes = desk_objects()?;
    Ok(tasks
        .iter()
        .filter_map(|&(id, task)| {
            meshes.iter().find(|(m, _)| m == id).map(|(_, mesh)| TableObject {
                id: id.to_string(),
                mesh: mesh.clone(),
                task,
            })
        })
        .collect())
}

/// Camera azimuths cycled through by table trials.
pub const TABLE_VIEWS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub object_id: String,
    pub task: ObjectTask,
    pub n_trials: usize,
    pub n_failed: usize,
    pub mean_y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOutput {
    pub reports: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
    pub rows: Vec<TableRow>,
}

/// Trial `t` scans from view `t % TABLE_VIEWS` and takes the task on box
/// side `(t / TABLE_VIEWS) % 2`.
pub fn run_object_table(
    objects: &[TableObject],
    trials_per_object: usize,
    model: &MlpModel,
    fge_cfg: &FgeConfig,
    seed: u64,
    pipeline: &PipelineConfig,
    fm: &FrictionModel,
    physics: &Physics,
) -> Result<TableOutput> {
    if objects.is_empty() || trials_per_object == 0 {
        return Err(Error::InvalidInput("table needs objects and trials".into()));
    }
    fge_cfg.validate()?;
    let up = Vec3::z();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (o, obj) in objects.iter().enumerate() {
        let mut ys = Vec::new();
        for t in 0..trials_per_object {
            let trial_seed = seed ^ ((o as u64) << 32 | t as u64);
            let azimuth = std::f64::consts::TAU * (t % TABLE_VIEWS) as f64 / TABLE_VIEWS as f64;
            let outcome = overview_camera_at(&obj.mesh, azimuth)
                .and_then(|cam| render_partial_cloud(&obj.mesh, &cam, trial_seed))
                .and_then(|cloud| {
                    let bbox = oriented_box_pca(&cloud, &up)?.bbox;
                    let task = object_task(&bbox, obj.task, t / TABLE_VIEWS, &up, pipeline.gripper.max_opening, fm)?;
                    let cfg = FgeConfig { seed: trial_seed, ..*fge_cfg };
                    fge(&obj.id, &cloud, &task, model, &cfg, pipeline, fm, physics)
                });
            match outcome {
                Ok(mut r) => {
                    r.trial = t;
                    log::info!("{} ({}) trial {t}: y_max {:.3}", obj.id, obj.task.name(), r.y_max);
                    ys.push(r.y_max);
                    reports.push(r);
                }
                Err(e) => {
                    log::warn!("{} trial {t} failed: {e}", obj.id);
                    failures.push(TrialFailure {
                        object_id: obj.id.clone(),
                        trial: t,
                        error: e.to_string(),
                    });
                }
            }
        }
        rows.push(TableRow {
            object_id: obj.id.clone(),
            task: obj.task,
            n_trials: ys.len(),
            n_failed: trials_per_object - ys.len(),
            mean_y_max: ys.iter().sum::<f64>() / ys.len() as f64,
        });
    }
    Ok(TableOutput { reports, failures, rows })
}
