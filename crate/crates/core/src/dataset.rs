//! Pivoting-cuboid training data: the cuboid family, contact grids, metric
//! labels with per-cuboid normalization, and feature encodings.
//!
//! A cuboid lives in its object frame with face `F^i` in the plane `y = 0`
//! spanning `x ∈ [0, L_i]`, face `F^j` in `y = W` spanning `x ∈ [0, L_j]`,
//! and height `z ∈ [0, H]`. The far end face is slanted when `L_i ≠ L_j`; its
//! bottom edge, from `(L_i, 0, 0)` to `(L_j, W, 0)`, is the pivot edge.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AntipodalPair, Screw, Vec3, GRID_MARGIN};
use crate::metric::{
    average_over_draws, env_contact, ContactSpec, FrictionModel, Physics, TaskInstance,
};

pub const FAMILY_SIDE: usize = 12;
pub const DEFAULT_RES_LENGTH: usize = 34;
pub const DEFAULT_RES_HEIGHT: usize = 19;
/// Pivot-edge fractions where the two environment contacts sit.
pub const ENV_FRACTIONS: [f64; 2] = [0.25, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub width: f64,
    pub height: f64,
    pub length_min: f64,
    pub length_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            width: 0.06,
            height: 0.10,
            length_min: 0.14,
            length_max: 0.25,
            delta_min: 0.005,
            delta_max: 0.06,
        }
    }
}

impl FamilyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.width, self.height, self.length_min, self.delta_min];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("cuboid dimensions must be positive".into()));
        }
        if !(self.length_max >= self.length_min) || !(self.delta_max >= self.delta_min) {
            return Err(Error::InvalidInput("family ranges are inverted".into()));
        }
        if !(self.length_min - self.delta_max > 0.0) {
            return Err(Error::InvalidInput("L - δ must stay positive".into()));
        }
        Ok(())
    }

    fn length(&self, i: usize) -> f64 {
        lerp(self.length_min, self.length_max, i)
    }

    fn delta(&self, i: usize) -> f64 {
        lerp(self.delta_min, self.delta_max, i)
    }
}

fn lerp(lo: f64, hi: f64, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (FAMILY_SIDE - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidSpec {
    pub id: usize,
    pub length_i: f64,
    pub length_j: f64,
    pub width: f64,
    pub height: f64,
    pub pivot_edge: Screw,
}

impl CuboidSpec {
    pub fn new(id: usize, length_i: f64, length_j: f64, width: f64, height: f64) -> Result<Self> {
        if [length_i, length_j, width, height].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("cuboid dimensions must be positive".into()));
        }
        let a = Vec3::new(length_i, 0.0, 0.0);
        let b = Vec3::new(length_j, width, 0.0);
        let pivot_edge = Screw::from_point_dir((a + b) / 2.0, b - a)?;
        Ok(Self {
            id,
            length_i,
            length_j,
            width,
            height,
            pivot_edge,
        })
    }

    /// Pivot edge end points on `F^i` and `F^j`.
    pub fn edge_ends(&self) -> (Vec3, Vec3) {
        (
            Vec3::new(self.length_i, 0.0, 0.0),
            Vec3::new(self.length_j, self.width, 0.0),
        )
    }

    pub fn contact_span(&self) -> f64 {
        self.length_i.min(self.length_j)
    }

    /// Centroid of the uniform-density prism.
    pub fn center_of_mass(&self) -> Vec3 {
        let (li, lj, w) = (self.length_i, self.length_j, self.width);
        let poly = [(0.0, 0.0), (li, 0.0), (lj, w), (0.0, w)];
        let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for k in 0..4 {
            let (x0, y0) = poly[k];
            let (x1, y1) = poly[(k + 1) % 4];
            let cross = x0 * y1 - x1 * y0;
            area += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        area /= 2.0;
        Vec3::new(cx / (6.0 * area), cy / (6.0 * area), self.height / 2.0)
    }

    /// Ground contacts on the pivot edge with upward inward normals.
    pub fn env_contacts(&self, fm: &FrictionModel) -> Vec<ContactSpec> {
        let (a, b) = self.edge_ends();
        ENV_FRACTIONS
            .iter()
            .map(|&t| env_contact(a + (b - a) * t, Vec3::z(), fm))
            .collect()
    }

    /// Antipodal pairs across `y = 0` / `y = W`, row-major with length fastest.
    pub fn contact_grid(&self, res_length: usize, res_height: usize) -> Result<Vec<AntipodalPair>> {
        if res_length < 2 || res_height < 2 {
            return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
        }
        let xs = inset(self.contact_span(), res_length);
        let zs = inset(self.height, res_height);
        let n_i = Vec3::y();
        let mut pairs = Vec::with_capacity(xs.len() * zs.len());
        for &z in &zs {
            for &x in &xs {
                pairs.push(AntipodalPair {
                    c_i: Vec3::new(x, 0.0, z),
                    c_j: Vec3::new(x, self.width, z),
                    n_i,
                    n_j: -n_i,
                });
            }
        }
        Ok(pairs)
    }
}

/// `n` evenly spaced coordinates over `[0, span]`, inset by [`GRID_MARGIN`] at both ends.
pub(crate) fn inset(span: f64, n: usize) -> Vec<f64> {
    let lo = GRID_MARGIN * span;
    let hi = (1.0 - GRID_MARGIN) * span;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Cuboid `(iL, iδ)`: `L_j = L + δ` on even `iL + iδ`, `L − δ` otherwise.
pub fn family_member(cfg: &FamilyConfig, i_length: usize, i_delta: usize) -> Result<CuboidSpec> {
    if i_length >= FAMILY_SIDE || i_delta >= FAMILY_SIDE {
        return Err(Error::InvalidInput("family index out of range".into()));
    }
    let l = cfg.length(i_length);
    let d = cfg.delta(i_delta);
    let sign = if (i_length + i_delta).is_multiple_of(2) { 1.0 } else { -1.0 };
    CuboidSpec::new(
        i_length * FAMILY_SIDE + i_delta,
        l,
        l + sign * d,
        cfg.width,
        cfg.height,
    )
}

/// All 144 cuboids, ordered by id.
pub fn generate_cuboid_family(cfg: &FamilyConfig) -> Result<Vec<CuboidSpec>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(FAMILY_SIDE * FAMILY_SIDE);
    for il in 0..FAMILY_SIDE {
        for id in 0..FAMILY_SIDE {
            out.push(family_member(cfg, il, id)?);
        }
    }
    Ok(out)
}

/// `δ` index paired with length index `k` in the reduced family: every length
/// and every `δ` appears once, with six `+δ` and six `−δ` cuboids.
pub fn reduced_delta_index(k: usize) -> usize {
    (10 * k + 7 * (k / 6)) % FAMILY_SIDE
}

pub fn reduced_family(cfg: &FamilyConfig) -> Result<Vec<CuboidSpec>> {
    cfg.validate()?;
    (0..FAMILY_SIDE)
        .map(|k| family_member(cfg, k, reduced_delta_index(k)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub pair: AntipodalPair,
    pub screw: Screw,
    pub eta_raw: f64,
    pub y: f64,
    pub cuboid_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRes {
    pub res_u: usize,
    pub res_v: usize,
}

impl Default for GridRes {
    fn default() -> Self {
        Self {
            res_u: DEFAULT_RES_LENGTH,
            res_v: DEFAULT_RES_HEIGHT,
        }
    }
}

impl GridRes {
    pub fn n_vertices(&self) -> usize {
        self.res_u * self.res_v
    }
}

/// Mean metric of one pair, or `None` when no friction draw is feasible:
/// the grasp cannot hold the object through the task at all.
pub fn pair_metric(
    pair: &AntipodalPair,
    screw: &Screw,
    env: &[ContactSpec],
    fm: &FrictionModel,
    physics: &Physics,
    com: Vec3,
) -> Result<Option<f64>> {
    let base = TaskInstance::from_pair(pair, screw, env, fm.mu_mean, physics, com);
    match average_over_draws(&base, fm) {
        Ok(est) => Ok(Some(est.eta)),
        Err(Error::NoFeasibleGrasp) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Raw metric for every grid pair of one cuboid, in grid order; NaN marks
/// pairs with no feasible friction draw.
pub fn label_cuboid_raw(
    c: &CuboidSpec,
    res: GridRes,
    fm: &FrictionModel,
    physics: &Physics,
) -> Result<Vec<(AntipodalPair, f64)>> {
    let pairs = c.contact_grid(res.res_u, res.res_v)?;
    let env = c.env_contacts(fm);
    let com = c.center_of_mass();
    pairs
        .into_par_iter()
        .map(|pair| {
            let eta = pair_metric(&pair, &c.pivot_edge, &env, fm, physics, com)?;
            Ok((pair, eta.unwrap_or(f64::NAN)))
        })
        .collect()
}

pub fn label_cuboid(
    c: &CuboidSpec,
    res: GridRes,
    fm: &FrictionModel,
    physics: &Physics,
) -> Result<Vec<MetricSample>> {
    let raw = label_cuboid_raw(c, res, fm, physics)?;
    let etas: Vec<f64> = raw.iter().map(|(_, e)| *e).collect();
    let n_infeasible = etas.iter().filter(|e| e.is_nan()).count();
    if n_infeasible == etas.len() {
        return Err(Error::NoFeasibleGrasp);
    }
    if n_infeasible > 0 {
        log::warn!(
            "cuboid {}: {n_infeasible} of {} pairs infeasible for every friction draw",
            c.id,
            etas.len()
        );
    }
    let ys = normalize_labels(&etas);
    Ok(raw
        .into_iter()
        .zip(ys)
        .map(|((pair, eta_raw), y)| MetricSample {
            pair,
            screw: c.pivot_edge,
            eta_raw,
            y,
            cuboid_id: c.id,
        })
        .collect())
}

/// Maps values onto `[0, 1]`; a constant input maps to 0.5 everywhere.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.5; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect()
}

/// Min-max over the finite values; NaN (infeasible) entries map to 0.
pub fn normalize_labels(values: &[f64]) -> Vec<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let mut scaled = min_max_normalize(&finite).into_iter();
    values
        .iter()
        .map(|v| {
            if v.is_finite() {
                scaled.next().unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Expected sample counts without solving anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub n_cuboids: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub samples_per_cuboid: usize,
    pub n_samples: usize,
}

pub fn plan_dataset(cuboids: &[CuboidSpec], res: GridRes) -> DatasetPlan {
    let n_plus = cuboids.iter().filter(|c| c.length_j > c.length_i).count();
    DatasetPlan {
        n_cuboids: cuboids.len(),
        n_plus,
        n_minus: cuboids.len() - n_plus,
        samples_per_cuboid: res.n_vertices(),
        n_samples: cuboids.len() * res.n_vertices(),
    }
}

/// Labels every cuboid; samples ordered by cuboid then grid index.
pub fn generate_dataset(
    cuboids: &[CuboidSpec],
    res: GridRes,
    fm: &FrictionModel,
    physics: &Physics,
) -> Result<Vec<MetricSample>> {
    let mut out = Vec::with_capacity(cuboids.len() * res.n_vertices());
    for c in cuboids {
        log::info!("labelling cuboid {}", c.id);
        out.extend(label_cuboid(c, res, fm, physics)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureVariant {
    Plucker12,
    Pointdir12,
    Combined15,
    Arms18,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 4] = [
        FeatureVariant::Plucker12,
        FeatureVariant::Pointdir12,
        FeatureVariant::Combined15,
        FeatureVariant::Arms18,
    ];

    pub fn len(self) -> usize {
        match self {
            FeatureVariant::Plucker12 | FeatureVariant::Pointdir12 => 12,
            FeatureVariant::Combined15 => 15,
            FeatureVariant::Arms18 => 18,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            FeatureVariant::Plucker12 => "plucker12",
            FeatureVariant::Pointdir12 => "pointdir12",
            FeatureVariant::Combined15 => "combined15",
            FeatureVariant::Arms18 => "arms18",
        }
    }
}

impl std::str::FromStr for FeatureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureVariant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature variant `{s}`")))
    }
}

/// Feature vector for one pair and screw, all in the object frame.
pub fn encode(variant: FeatureVariant, pair: &AntipodalPair, screw: &Screw) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(variant.len());
    x.extend(pair.c_i.iter());
    x.extend(pair.c_j.iter());
    x.extend(screw.direction().iter());
    if variant == FeatureVariant::Plucker12 {
        x.extend(screw.moment().iter());
        return Ok(x);
    }
    let p = screw.anchor().ok_or(Error::MissingAnchor)?;
    if variant != FeatureVariant::Pointdir12 {
        x.extend(screw.moment().iter());
    }
    x.extend(p.iter());
    if variant == FeatureVariant::Arms18 {
        let g = pair.midpoint();
        x.extend([g.norm(), p.norm(), (g - p).norm()]);
    }
    Ok(x)
}

/// Row-major feature matrix for many samples.
pub fn encode_samples(variant: FeatureVariant, samples: &[MetricSample]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len() * variant.len());
    for s in samples {
        out.extend(encode(variant, &s.pair, &s.screw)?);
    }
    Ok(out)
}

/// Features and labels ready for training.
pub fn design_matrix(variant: FeatureVariant, samples: &[MetricSample]) -> Result<(Array2<f64>, Array1<f64>)> {
    let x = Array2::from_shape_vec((samples.len(), variant.len()), encode_samples(variant, samples)?)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((x, samples.iter().map(|s| s.y).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: f64,
    pub seed: u64,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            train: 0.8,
            seed: 0,
        }
    }
}

/// Seeded shuffle, then the first `round(train · n)` samples form the training set.
pub fn split_samples(samples: &[MetricSample], split: &Split) -> (Vec<MetricSample>, Vec<MetricSample>) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed));
    let n_train = ((samples.len() as f64) * split.train.clamp(0.0, 1.0)).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    (pick(&order[..n_train]), pick(&order[n_train..]))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn family_counts() {
        let fam = generate_cuboid_family(&FamilyConfig::default()).unwrap();
        assert_eq!(fam.len(), 144);
        let plan = plan_dataset(&fam, GridRes::default());
        assert_eq!((plan.n_plus, plan.n_minus), (72, 72));
        assert_eq!(plan.n_samples, 93_024);
        assert_eq!(72 * plan.samples_per_cuboid, 46_512);
        assert!(fam.iter().all(|c| c.length_i != c.length_j));
    }

    #[test]
    fn reduced_family_is_balanced_and_covers_every_delta() {
        let mut deltas: Vec<usize> = (0..FAMILY_SIDE).map(reduced_delta_index).collect();
        deltas.sort();
        assert_eq!(deltas, (0..FAMILY_SIDE).collect::<Vec<_>>());
        let fam = reduced_family(&FamilyConfig::default()).unwrap();
        let plan = plan_dataset(&fam, GridRes::default());
        assert_eq!((plan.n_plus, plan.n_minus, plan.n_samples), (6, 6, 7752));
    }

    #[test]
    fn pivot_anchor_at_bottom_edge_center() {
        for c in generate_cuboid_family(&FamilyConfig::default()).unwrap() {
            let (a, b) = c.edge_ends();
            let p = c.pivot_edge.anchor().unwrap();
            assert_abs_diff_eq!(p, (a + b) / 2.0, epsilon = 1e-15);
            assert_eq!(p.z, 0.0);
            assert!(c.pivot_edge.direction().y > 0.0);
        }
    }

    #[test]
    fn center_of_mass_of_rectangular_cuboid() {
        let c = CuboidSpec::new(0, 0.2, 0.2, 0.06, 0.1).unwrap();
        assert_abs_diff_eq!(c.center_of_mass(), Vec3::new(0.1, 0.03, 0.05), epsilon = 1e-15);
    }

    #[test]
    fn grid_restricted_to_shorter_face() {
        let c = CuboidSpec::new(0, 0.2, 0.15, 0.06, 0.1).unwrap();
        let pairs = c.contact_grid(34, 19).unwrap();
        assert_eq!(pairs.len(), 646);
        let max_x = pairs.iter().map(|p| p.c_i.x).fold(0.0, f64::max);
        assert_abs_diff_eq!(max_x, 0.95 * 0.15, epsilon = 1e-15);
        assert_eq!(pairs[1].c_i.z, pairs[0].c_i.z);
    }

    #[test]
    fn encodings_share_prefix() {
        let c = CuboidSpec::new(0, 0.2, 0.15, 0.06, 0.1).unwrap();
        let pair = c.contact_grid(3, 3).unwrap()[4];
        let xs: Vec<_> = FeatureVariant::ALL
            .iter()
            .map(|&v| encode(v, &pair, &c.pivot_edge).unwrap())
            .collect();
        for (x, v) in xs.iter().zip(FeatureVariant::ALL) {
            assert_eq!(x.len(), v.len());
            assert_eq!(x[..6], xs[0][..6]);
        }
    }

    #[test]
    fn arms_vanish_at_origin() {
        let pair = AntipodalPair::from_points(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0))
            .unwrap();
        let screw = Screw::from_point_dir(Vec3::zeros(), Vec3::z()).unwrap();
        let x = encode(FeatureVariant::Arms18, &pair, &screw).unwrap();
        assert_eq!(x[15..], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_anchor() {
        let pair = AntipodalPair::from_points(Vec3::zeros(), Vec3::x()).unwrap();
        let screw = Screw::from_plucker(Vec3::z(), Vec3::zeros()).unwrap();
        assert!(encode(FeatureVariant::Plucker12, &pair, &screw).is_ok());
        assert!(matches!(
            encode(FeatureVariant::Pointdir12, &pair, &screw),
            Err(Error::MissingAnchor)
        ));
    }

    #[test]
    fn normalization_bounds_and_constant_guard() {
        let y = min_max_normalize(&[3.0, -1.0, 1.0]);
        assert_eq!(y, vec![1.0, 0.0, 0.5]);
        assert_eq!(min_max_normalize(&[2.0, 2.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn infeasible_labels_sit_at_zero() {
        let y = normalize_labels(&[f64::NAN, -2.0, 0.0, f64::NAN, -1.0]);
        assert_eq!(y, vec![0.0, 0.0, 1.0, 0.0, 0.5]);
    }
}
