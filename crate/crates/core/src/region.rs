//! Ideal grasping region on an object cloud: box fit, face selection, metric
//! field over a contact grid, transfer onto the cloud, thresholding, and
//! end-effector poses.
//!
//! All field computation happens in the object frame `{O}` of a canonical box
//! whose `y` axis is the closing direction and whose `z` axis is the support
//! normal (when the closing direction is horizontal). In `{O}` the box spans
//! `[0, e_x] × [0, e_y] × [0, e_z]`, `F^i` is the face `y = 0` and `F^j` the
//! face `y = e_y`, matching the layout of the training cuboids.

use nalgebra::Matrix3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode, inset, FeatureVariant, GridRes};
use crate::error::{Error, Result};
use crate::geometry::{
    object_frame_from_box, oriented_box_pca, AntipodalPair, Face, FaceGrid, OrientedBox,
    PointCloud, RigidTransform, Screw, Side, Vec3,
};
use crate::mlp::MlpModel;

pub const DEFAULT_Y_TH: f64 = 0.6;
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperGeometry {
    /// Maximum opening `g_w`.
    #[serde(rename = "g_w")]
    pub max_opening: f64,
    pub finger_depth: f64,
    pub finger_thickness: f64,
    pub palm_clearance: f64,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        Self {
            max_opening: 0.08,
            finger_depth: 0.045,
            finger_thickness: 0.01,
            palm_clearance: 0.005,
        }
    }
}

impl GripperGeometry {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.max_opening,
            self.finger_depth,
            self.finger_thickness,
            self.palm_clearance,
        ];
        if dims.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("gripper dimensions must be positive".into()));
        }
        if !(self.max_opening > self.finger_thickness) {
            return Err(Error::InvalidInput(
                "gripper opening must exceed finger thickness".into(),
            ));
        }
        Ok(())
    }

    /// Deepest reach from a face to the grasp center.
    pub fn reach(&self) -> f64 {
        self.finger_depth - self.palm_clearance
    }
}

/// How the closing direction is chosen among face pairs that fit the gripper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosingPreference {
    /// Closing direction most parallel to the screw (max `|n·l|`): contacts
    /// on the faces perpendicular to the screw, as in the training data.
    #[default]
    AlongScrew,
    /// Closing direction most perpendicular to the screw (min `|n·l|`).
    AcrossScrew,
}

/// Opposite faces of the canonical box; `f_i` is `y = 0` in `{O}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePair {
    pub f_i: Face,
    pub f_j: Face,
    /// Axis of the source box along which the gripper closes.
    pub closing_axis: usize,
}

impl FacePair {
    pub fn canonical_box(&self) -> &OrientedBox {
        &self.f_i.bbox
    }

    /// World to `{O}`.
    pub fn to_object(&self) -> RigidTransform {
        object_frame_from_box(self.canonical_box())
    }

    /// Box dimensions along the `{O}` axes.
    pub fn extents(&self) -> Vec3 {
        self.canonical_box().half_extents * 2.0
    }

    pub fn separation(&self) -> f64 {
        self.extents().y
    }
}

pub fn select_face_pair(b: &OrientedBox, s: &Screw, g: &GripperGeometry) -> Result<FacePair> {
    select_face_pair_with(b, s, g, ClosingPreference::default())
}

/// Picks the closing axis among those with separation `≤ g_w`; ties go to
/// the smaller separation, then the smaller axis index.
pub fn select_face_pair_with(
    b: &OrientedBox,
    s: &Screw,
    g: &GripperGeometry,
    pref: ClosingPreference,
) -> Result<FacePair> {
    let l = s.direction();
    let mut best: Option<(usize, f64, f64)> = None;
    for k in 0..3 {
        let sep = b.extent(k);
        if sep > g.max_opening {
            continue;
        }
        let align = b.axis(k).dot(&l).abs();
        let key = match pref {
            ClosingPreference::AlongScrew => -align,
            ClosingPreference::AcrossScrew => align,
        };
        let better = match best {
            None => true,
            Some((_, bk, bs)) => key < bk - TIE_TOL || (key <= bk + TIE_TOL && sep < bs - TIE_TOL),
        };
        if better {
            best = Some((k, key, sep));
        }
    }
    let (k, _, _) = best.ok_or(Error::ExceedsGripperOpening)?;
    let canon = canonical_box(b, s, k);
    Ok(FacePair {
        f_i: Face::new(canon, 1, Side::Neg)?,
        f_j: Face::new(canon, 1, Side::Pos)?,
        closing_axis: k,
    })
}

/// Box re-axed as `[x_O, y_O, z_O]` with `y_O = ±a_k`.
///
/// `y_O` points along the screw direction (then toward the screw line, then
/// `+a_k`); `z_O` is the box's third axis unless that is the closing axis.
fn canonical_box(b: &OrientedBox, s: &Screw, k: usize) -> OrientedBox {
    let a_k = b.axis(k);
    let l = s.direction();
    let toward_line = s.point_on_line() - b.center;
    let toward_line = toward_line - l * toward_line.dot(&l);
    let sign = if l.dot(&a_k).abs() > TIE_TOL {
        l.dot(&a_k).signum()
    } else if toward_line.dot(&a_k).abs() > TIE_TOL {
        toward_line.dot(&a_k).signum()
    } else {
        1.0
    };
    let y = sign * a_k;
    let kz = if k == 2 { 1 } else { 2 };
    let z = b.axis(kz);
    let x = y.cross(&z);
    let kx = 3 - k - kz;
    OrientedBox {
        center: b.center,
        rotation: Matrix3::from_columns(&[x, y, z]),
        half_extents: Vec3::new(b.half_extents[kx], b.half_extents[k], b.half_extents[kz]),
    }
}

/// Per-vertex scores; `eta` carries raw metric values when they exist.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexScores {
    pub y: Vec<f64>,
    pub eta: Option<Vec<f64>>,
}

/// Step 5 of the region algorithm: scores grid pairs given in `{O}`.
pub trait VertexScorer {
    fn score(&self, pairs: &[AntipodalPair], screw: &Screw) -> Result<VertexScores>;
}

pub struct MlpScorer<'a> {
    pub model: &'a MlpModel,
    pub variant: FeatureVariant,
}

impl<'a> MlpScorer<'a> {
    pub fn new(model: &'a MlpModel) -> Self {
        Self {
            model,
            variant: FeatureVariant::Plucker12,
        }
    }
}

impl VertexScorer for MlpScorer<'_> {
    fn score(&self, pairs: &[AntipodalPair], screw: &Screw) -> Result<VertexScores> {
        let d = self.variant.len();
        let mut flat = Vec::with_capacity(pairs.len() * d);
        for p in pairs {
            flat.extend(encode(self.variant, p, screw)?);
        }
        let x = Array2::from_shape_vec((pairs.len(), d), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let y = self.model.forward_eval(x.view())?;
        Ok(VertexScores {
            y: y.to_vec(),
            eta: None,
        })
    }
}

pub struct ConstantScorer(pub f64);

impl VertexScorer for ConstantScorer {
    fn score(&self, pairs: &[AntipodalPair], _: &Screw) -> Result<VertexScores> {
        Ok(VertexScores {
            y: vec![self.0; pairs.len()],
            eta: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMetricField {
    pub faces: FacePair,
    /// Task screw in `{O}`.
    pub screw: Screw,
    /// `u` along `x_O`, `v` along `z_O`, both in `{O}` coordinates.
    pub grid: FaceGrid,
    /// Vertex pairs in `{O}`, `u` fastest.
    pub pairs: Vec<AntipodalPair>,
    pub vertex_y: Vec<f64>,
    pub vertex_eta: Option<Vec<f64>>,
    /// Mean of the four corner values, cells `u` fastest.
    pub cell_y: Vec<f64>,
}

impl BoxMetricField {
    pub fn to_object(&self) -> RigidTransform {
        self.faces.to_object()
    }

    pub fn n_vertices(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_y.len()
    }

    /// `{O}` coordinates `(u, v)` of a cell center.
    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let nu = self.grid.res_u() - 1;
        let (cu, cv) = (cell % nu, cell / nu);
        let u = &self.grid.u_coords;
        let v = &self.grid.v_coords;
        ((u[cu] + u[cu + 1]) / 2.0, (v[cv] + v[cv + 1]) / 2.0)
    }

    /// Indices of the four corner vertices of a cell.
    pub fn cell_vertices(&self, cell: usize) -> [usize; 4] {
        let nu = self.grid.res_u() - 1;
        let (cu, cv) = (cell % nu, cell / nu);
        [
            self.grid.vertex_index(cu, cv),
            self.grid.vertex_index(cu + 1, cv),
            self.grid.vertex_index(cu, cv + 1),
            self.grid.vertex_index(cu + 1, cv + 1),
        ]
    }
}

/// Grid pairs across the face pair, in `{O}`.
pub fn face_grid(faces: &FacePair, res: GridRes) -> Result<(FaceGrid, Vec<AntipodalPair>)> {
    if res.res_u < 2 || res.res_v < 2 {
        return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
    }
    let e = faces.extents();
    let grid = FaceGrid {
        u_coords: inset(e.x, res.res_u),
        v_coords: inset(e.z, res.res_v),
    };
    let mut pairs = Vec::with_capacity(res.n_vertices());
    for &v in &grid.v_coords {
        for &u in &grid.u_coords {
            pairs.push(AntipodalPair {
                c_i: Vec3::new(u, 0.0, v),
                c_j: Vec3::new(u, e.y, v),
                n_i: Vec3::y(),
                n_j: -Vec3::y(),
            });
        }
    }
    Ok((grid, pairs))
}

/// `screw` is in world coordinates.
pub fn build_box_field(
    faces: &FacePair,
    screw: &Screw,
    res: GridRes,
    scorer: &dyn VertexScorer,
) -> Result<BoxMetricField> {
    let (grid, pairs) = face_grid(faces, res)?;
    let screw_o = screw.transformed(&faces.to_object());
    let scores = scorer.score(&pairs, &screw_o)?;
    if scores.y.len() != pairs.len() {
        return Err(Error::DimensionMismatch {
            expected: pairs.len(),
            got: scores.y.len(),
        });
    }
    if scores.y.iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::Numerical("vertex score outside [0, 1]".into()));
    }
    let mut field = BoxMetricField {
        faces: *faces,
        screw: screw_o,
        grid,
        pairs,
        vertex_y: scores.y,
        vertex_eta: scores.eta,
        cell_y: Vec::new(),
    };
    field.cell_y = (0..field.grid.n_cells())
        .map(|c| {
            let [a, b, cc, d] = field.cell_vertices(c);
            let y = &field.vertex_y;
            (y[a] + y[b] + y[cc] + y[d]) / 4.0
        })
        .collect();
    Ok(field)
}

/// Per-point transferred scores and containing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCloud {
    pub scores: Vec<f64>,
    pub cells: Vec<Option<usize>>,
}

impl ScoredCloud {
    /// Sorted, deduplicated cells containing at least one projected point.
    pub fn occupied_cells(&self) -> Vec<usize> {
        let mut cells: Vec<usize> = self.cells.iter().flatten().copied().collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

/// Projects world points onto `F^i` and reads the containing cell's mean.
/// Points outside the grid score 0.
pub fn transfer_to_cloud(field: &BoxMetricField, cloud: &PointCloud) -> Result<ScoredCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let t = field.to_object();
    let nu = field.grid.res_u() - 1;
    let mut scores = Vec::with_capacity(cloud.len());
    let mut cells = Vec::with_capacity(cloud.len());
    for p in cloud.points() {
        let q = t.apply_point(p);
        let cell = field
            .grid
            .locate(q.x, q.z)
            .map(|(cu, cv)| cv * nu + cu);
        scores.push(cell.map_or(0.0, |c| field.cell_y[c]));
        cells.push(cell);
    }
    Ok(ScoredCloud { scores, cells })
}

/// Ideal grasping region: indices into the source cloud with their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRegion {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub y_th: f64,
}

impl GraspRegion {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn require_nonempty(&self) -> Result<&Self> {
        if self.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(self)
    }
}

/// Points with score `≥ y_th`, in input order. An empty result is logged.
pub fn threshold_region(scores: &[f64], y_th: f64) -> GraspRegion {
    let indices: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= y_th).collect();
    if indices.is_empty() {
        log::warn!("no point reaches y_th = {y_th}; the grasping region is empty");
    }
    GraspRegion {
        scores: indices.iter().map(|&i| scores[i]).collect(),
        indices,
        y_th,
    }
}

/// Face of the canonical box the gripper enters through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approach {
    /// `{O}` axis of the face normal: 0 (`x_O`) or 2 (`z_O`).
    pub axis: usize,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    /// Columns: closing axis, `z × x`, approach direction (into the box).
    pub rotation: Matrix3<f64>,
    /// Grasp center `g_c`.
    pub translation: Vec3,
    pub opening: f64,
    pub approach: Approach,
    pub e_i: Vec3,
    pub e_j: Vec3,
}

/// Approach faces orthogonal to the closing axis whose distance to `g_c`
/// (world point) is within the finger reach.
pub fn filter_approach(g_c: &Vec3, faces: &FacePair, g: &GripperGeometry) -> Vec<Approach> {
    let q = faces.to_object().apply_point(g_c);
    let e = faces.extents();
    let mut out = Vec::new();
    for axis in [0, 2] {
        for side in [Side::Neg, Side::Pos] {
            let dist = match side {
                Side::Neg => q[axis],
                Side::Pos => e[axis] - q[axis],
            };
            if dist <= g.reach() {
                out.push(Approach { axis, side });
            }
        }
    }
    out
}

fn make_pose(faces: &FacePair, e_i: Vec3, e_j: Vec3, approach: Approach) -> GraspPose {
    let b = faces.canonical_box();
    let closing = b.axis(1);
    let inward = -approach.side.sign() * b.axis(approach.axis);
    let y = inward.cross(&closing);
    GraspPose {
        rotation: Matrix3::from_columns(&[closing, y, inward]),
        translation: (e_i + e_j) / 2.0,
        opening: (e_j - e_i).norm(),
        approach,
        e_i,
        e_j,
    }
}

/// One pose per (occupied cell with `y_avg ≥ y_th`, reachable approach), in
/// cell order.
pub fn poses_from_grid(
    field: &BoxMetricField,
    scored: &ScoredCloud,
    g: &GripperGeometry,
    y_th: f64,
) -> Vec<GraspPose> {
    let from_o = field.to_object().inverse();
    let sep = field.faces.separation();
    let mut poses = Vec::new();
    if sep > g.max_opening {
        return poses;
    }
    for cell in scored.occupied_cells() {
        if field.cell_y[cell] < y_th {
            continue;
        }
        let (u, v) = field.cell_center(cell);
        let e_i = from_o.apply_point(&Vec3::new(u, 0.0, v));
        let e_j = from_o.apply_point(&Vec3::new(u, sep, v));
        let g_c = (e_i + e_j) / 2.0;
        for a in filter_approach(&g_c, &field.faces, g) {
            poses.push(make_pose(&field.faces, e_i, e_j, a));
        }
    }
    poses
}

/// Pose from a seeded random region point `e^i`; `e^j` lies on the opposite
/// face along the closing axis. Among reachable approaches one is drawn with
/// the same generator.
pub fn poses_from_point(
    region: &GraspRegion,
    cloud: &PointCloud,
    faces: &FacePair,
    g: &GripperGeometry,
    seed: u64,
) -> Result<GraspPose> {
    region.require_nonempty()?;
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::InvalidInput("cloud has no normals".into()))?;
    if region.indices.iter().any(|&i| i >= cloud.len()) {
        return Err(Error::InvalidInput("region index out of range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = region.indices[rng.random_range(0..region.len())];
    let t = faces.to_object();
    let e_i = cloud.points()[idx];
    let q = t.apply_point(&e_i);
    let n = t.apply_vector(&normals[idx]);
    let y_j = if n.y <= 0.0 { faces.separation() } else { 0.0 };
    let e_j = t.inverse().apply_point(&Vec3::new(q.x, y_j, q.z));
    if (e_j - e_i).norm() > g.max_opening {
        return Err(Error::ExceedsGripperOpening);
    }
    let approaches = filter_approach(&((e_i + e_j) / 2.0), faces, g);
    if approaches.is_empty() {
        return Err(Error::Unreachable);
    }
    let a = approaches[rng.random_range(0..approaches.len())];
    Ok(make_pose(faces, e_i, e_j, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub res: GridRes,
    pub y_th: f64,
    pub gripper: GripperGeometry,
    pub preference: ClosingPreference,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            res: GridRes::default(),
            y_th: DEFAULT_Y_TH,
            gripper: GripperGeometry::default(),
            preference: ClosingPreference::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gripper.validate()?;
        if !(0.0..=1.0).contains(&self.y_th) {
            return Err(Error::InvalidInput(format!("y_th = {} outside [0, 1]", self.y_th)));
        }
        if self.res.res_u < 2 || self.res.res_v < 2 {
            return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
        }
        Ok(())
    }
}

/// Box fit and face selection (region algorithm lines 1–2).
pub fn prepare_faces(
    cloud: &PointCloud,
    screw: &Screw,
    support_normal: &Vec3,
    cfg: &PipelineConfig,
) -> Result<(OrientedBox, FacePair)> {
    let bbox = oriented_box_pca(cloud, support_normal)?.bbox;
    let faces = select_face_pair_with(&bbox, screw, &cfg.gripper, cfg.preference)?;
    Ok((bbox, faces))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOutput {
    pub bbox: OrientedBox,
    pub field: BoxMetricField,
    pub scored: ScoredCloud,
    pub region: GraspRegion,
}

/// Complete region algorithm with a pluggable scoring step.
pub fn compute_region(
    cloud: &PointCloud,
    screw: &Screw,
    support_normal: &Vec3,
    scorer: &dyn VertexScorer,
    cfg: &PipelineConfig,
) -> Result<RegionOutput> {
    cfg.validate()?;
    let (bbox, faces) = prepare_faces(cloud, screw, support_normal, cfg)?;
    region_on_faces(cloud, screw, bbox, &faces, scorer, cfg)
}

pub fn region_on_faces(
    cloud: &PointCloud,
    screw: &Screw,
    bbox: OrientedBox,
    faces: &FacePair,
    scorer: &dyn VertexScorer,
    cfg: &PipelineConfig,
) -> Result<RegionOutput> {
    let field = build_box_field(faces, screw, cfg.res, scorer)?;
    let scored = transfer_to_cloud(&field, cloud)?;
    let region = threshold_region(&scored.scores, cfg.y_th);
    Ok(RegionOutput {
        bbox,
        field,
        scored,
        region,
    })
}
