//! File formats and run configuration: ASCII PLY clouds, OBJ meshes, the
//! `SGM1` model container, the dataset CSV, and the JSON run config.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{split_samples, GridRes, MetricSample, Split};
use crate::error::{Error, Result};
use crate::geometry::{AntipodalPair, PointCloud, Screw, Vec3};
use crate::metric::{FrictionModel, Physics};
use crate::mlp::{Architecture, HiddenLayer, MlpModel, TrainConfig, N_HIDDEN};
use crate::region::{ClosingPreference, GripperGeometry, PipelineConfig, DEFAULT_Y_TH};
use crate::scan::TriMesh;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- PLY

/// Blue-to-red ramp: 0 is `(0, 0, 255)`, 1 is `(255, 0, 0)`.
pub fn score_color(s: f64) -> [u8; 3] {
    let red = (255.0 * s.clamp(0.0, 1.0)).floor() as u8;
    [red, 0, 255 - red]
}

/// ASCII PLY text. Scores, when given, go to `quality` plus a color ramp.
pub fn cloud_to_ply(cloud: &PointCloud, scores: Option<&[f64]>) -> Result<String> {
    if let Some(s) = scores {
        if s.len() != cloud.len() {
            return Err(Error::DimensionMismatch {
                expected: cloud.len(),
                got: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
    }
    let normals = cloud.normals();
    let mut out = String::with_capacity(64 * cloud.len() + 256);
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", cloud.len()).unwrap();
    for c in ["x", "y", "z"] {
        writeln!(out, "property float {c}").unwrap();
    }
    if normals.is_some() {
        for c in ["nx", "ny", "nz"] {
            writeln!(out, "property float {c}").unwrap();
        }
    }
    if scores.is_some() {
        out.push_str("property float quality\n");
        for c in ["red", "green", "blue"] {
            writeln!(out, "property uchar {c}").unwrap();
        }
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        write!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z).unwrap();
        if let Some(n) = normals {
            write!(out, " {:.6} {:.6} {:.6}", n[i].x, n[i].y, n[i].z).unwrap();
        }
        if let Some(s) = scores {
            let [r, g, b] = score_color(s[i]);
            write!(out, " {:.6} {r} {g} {b}", s[i]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud, scores: Option<&[f64]>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, cloud_to_ply(cloud, scores)?.as_bytes())
}

/// Cloud and optional `quality` scores; normals are renormalized.
pub fn parse_ply(text: &str, path: &Path) -> Result<(PointCloud, Option<Vec<f64>>)> {
    let bad = |m: String| Error::format(path, m);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing `ply` magic".into()));
    }
    let mut n_vertex: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut ended = false;
    for line in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", "1.0"] => {}
            ["format", ..] => return Err(bad(format!("unsupported format `{line}`"))),
            ["element", "vertex", n] => {
                let n = n.parse().map_err(|_| bad(format!("bad vertex count `{n}`")))?;
                n_vertex = Some(n);
                in_vertex = true;
            }
            ["element", _, n] => {
                if n.parse::<usize>().map_err(|_| bad(format!("bad element count `{n}`")))? != 0 {
                    return Err(bad("only vertex elements are supported".into()));
                }
                in_vertex = false;
            }
            ["property", "list", ..] => return Err(bad("list properties are not supported".into())),
            ["property", _ty, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => {
                ended = true;
                break;
            }
            _ => return Err(bad(format!("malformed header line `{line}`"))),
        }
    }
    if !ended {
        return Err(bad("missing end_header".into()));
    }
    let n = n_vertex.ok_or_else(|| bad("no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let xyz = ["x", "y", "z"].map(col);
    let [Some(ix), Some(iy), Some(iz)] = xyz else {
        return Err(bad("vertex element lacks x, y, z".into()));
    };
    let nrm = match ["nx", "ny", "nz"].map(col) {
        [Some(a), Some(b), Some(c)] => Some([a, b, c]),
        [None, None, None] => None,
        _ => return Err(bad("partial normal properties".into())),
    };
    let iq = col("quality");

    let mut points = Vec::with_capacity(n);
    let mut normals = nrm.map(|_| Vec::with_capacity(n));
    let mut quality = iq.map(|_| Vec::with_capacity(n));
    let mut rows = lines.filter(|l| !l.trim().is_empty());
    for r in 0..n {
        let line = rows
            .next()
            .ok_or_else(|| bad(format!("expected {n} vertices, found {r}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("vertex {r}: unparsable value")))?;
        if vals.len() != props.len() {
            return Err(bad(format!(
                "vertex {r}: {} values for {} properties",
                vals.len(),
                props.len()
            )));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("vertex {r}: non-finite value")));
        }
        points.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        if let (Some(ns), Some([a, b, c])) = (normals.as_mut(), nrm) {
            let v = Vec3::new(vals[a], vals[b], vals[c]);
            let len = v.norm();
            if !(len > 1e-12) {
                return Err(bad(format!("vertex {r}: zero normal")));
            }
            ns.push(v / len);
        }
        if let (Some(q), Some(i)) = (quality.as_mut(), iq) {
            q.push(vals[i]);
        }
    }
    if rows.next().is_some() {
        return Err(bad(format!("more than {n} vertex rows")));
    }
    let mut cloud = PointCloud::new(points, "world").map_err(|e| bad(e.to_string()))?;
    if let Some(ns) = normals {
        cloud = cloud.with_normals(ns)?;
    }
    Ok((cloud, quality))
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<(PointCloud, Option<Vec<f64>>)> {
    let path = path.as_ref();
    parse_ply(&read_text(path)?, path)
}

// ---------------------------------------------------------------- OBJ

/// `v`/`f` records only; polygons are fan-split. Face indices may be
/// negative (relative) and may carry `/vt/vn` suffixes.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let bad = |m: String| Error::format(path, m);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("line {}: bad vertex", ln + 1)))?;
                if c.len() != 3 || c.iter().any(|v| !v.is_finite()) {
                    return Err(bad(format!("line {}: bad vertex", ln + 1)));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().ok()?;
                        let n = vertices.len() as i64;
                        let k = if i > 0 { i - 1 } else { n + i };
                        (i != 0 && (0..n).contains(&k)).then_some(k as usize)
                    })
                    .collect::<Option<_>>()
                    .ok_or_else(|| bad(format!("line {}: bad face index", ln + 1)))?;
                if idx.len() < 3 {
                    return Err(bad(format!("line {}: face with fewer than 3 vertices", ln + 1)));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(bad("mesh has no faces".into()));
    }
    TriMesh::new(vertices, triangles).map_err(|e| bad(e.to_string()))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    parse_obj(&read_text(path)?, path)
}

pub fn mesh_to_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    out
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    write_bytes(path.as_ref(), mesh_to_obj(mesh).as_bytes())
}

// ---------------------------------------------------------------- model

pub const MODEL_MAGIC: &[u8; 4] = b"SGM1";
pub const MODEL_VERSION: u32 = 1;
const FLAG_BN: u32 = 1;
const FLAG_SKIP: u32 = 2;
const HEADER_LEN: usize = 4 + 4 * 5;

/// Header, then per hidden layer `w` (row-major), `b`, `γ`, `β`,
/// running mean, running variance, then head weights and bias; all f64 LE.
pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let arch = model.architecture();
    let flags = if arch.batch_norm { FLAG_BN } else { 0 } | if arch.skip { FLAG_SKIP } else { 0 };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (model.n_params() + 2 * N_HIDDEN * model.hidden_width()));
    out.extend_from_slice(MODEL_MAGIC);
    for v in [
        MODEL_VERSION,
        model.input_dim() as u32,
        model.hidden_width() as u32,
        model.layers().len() as u32,
        flags,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut put = |xs: &mut dyn Iterator<Item = &f64>| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    for l in model.layers() {
        put(&mut l.w.iter());
        put(&mut l.b.iter());
        put(&mut l.gamma.iter());
        put(&mut l.beta.iter());
        put(&mut l.running_mean.iter());
        put(&mut l.running_var.iter());
    }
    let (head_w, head_b) = model.head();
    put(&mut head_w.iter());
    put(&mut std::iter::once(&head_b));
    out
}

pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<MlpModel> {
    let bad = |m: String| Error::format(path, m);
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header".into()));
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (version, input, width, n_hidden, flags) = (word(0), word(1), word(2), word(3), word(4));
    if version != MODEL_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    if n_hidden as usize != N_HIDDEN || input == 0 || width == 0 || flags & !(FLAG_BN | FLAG_SKIP) != 0 {
        return Err(bad(format!(
            "unsupported dims input={input} width={width} hidden={n_hidden} flags={flags}"
        )));
    }
    let (input, width) = (input as usize, width as usize);
    let per_layer = |fan_in: usize| width * fan_in + 5 * width;
    let n_f64 = per_layer(input) + (N_HIDDEN - 1) * per_layer(width) + width + 1;
    let expected = HEADER_LEN + 8 * n_f64;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut vals = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| Array1::from_iter(vals.by_ref().take(n));
    let mut layers = Vec::with_capacity(N_HIDDEN);
    for l in 0..N_HIDDEN {
        let fan_in = if l == 0 { input } else { width };
        let w = take(width * fan_in)
            .into_shape_with_order((width, fan_in))
            .map_err(|e| bad(e.to_string()))?;
        layers.push(HiddenLayer {
            w: Array2::from(w),
            b: take(width),
            gamma: take(width),
            beta: take(width),
            running_mean: take(width),
            running_var: take(width),
        });
    }
    let head_w = take(width);
    let head_b = take(1)[0];
    let arch = Architecture {
        batch_norm: flags & FLAG_BN != 0,
        skip: flags & FLAG_SKIP != 0,
    };
    MlpModel::from_parts(arch, layers, head_w, head_b).map_err(|e| bad(e.to_string()))
}

pub fn save_model(path: impl AsRef<Path>, model: &MlpModel) -> Result<()> {
    write_bytes(path.as_ref(), &model_to_bytes(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, path)
}

// ---------------------------------------------------------------- dataset CSV

pub const DATASET_HEADER: [&str; 15] = [
    "cuboid_id", "cix", "ciy", "ciz", "cjx", "cjy", "cjz", "lx", "ly", "lz", "mx", "my", "mz",
    "eta_raw", "y",
];

/// Floats use the shortest representation that round-trips.
pub fn write_dataset_csv<W: std::io::Write>(w: W, samples: &[MetricSample]) -> Result<()> {
    let to_err = |e: csv::Error| Error::InvalidInput(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(DATASET_HEADER).map_err(to_err)?;
    for s in samples {
        let (l, m) = (s.screw.direction(), s.screw.moment());
        let mut rec = vec![s.cuboid_id.to_string()];
        for v in s.pair.c_i.iter().chain(s.pair.c_j.iter()).chain(l.iter()).chain(m.iter()) {
            rec.push(v.to_string());
        }
        rec.push(s.eta_raw.to_string());
        rec.push(s.y.to_string());
        wr.write_record(&rec).map_err(to_err)?;
    }
    wr.flush().map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Screws come back without an anchor point.
pub fn read_dataset_csv<R: std::io::Read>(r: R, path: &Path) -> Result<Vec<MetricSample>> {
    let bad = |m: String| Error::format(path, m);
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(DATASET_HEADER) {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = row + 2;
        let cuboid_id: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("line {line}: bad cuboid_id")))?;
        let v: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("line {line}: unparsable number")))?;
        if v[..12].iter().any(|x| !x.is_finite()) || !v[13].is_finite() {
            return Err(bad(format!("line {line}: non-finite geometry or label")));
        }
        let vec = |i: usize| Vec3::new(v[i], v[i + 1], v[i + 2]);
        let pair = AntipodalPair::from_points(vec(0), vec(3))
            .map_err(|e| bad(format!("line {line}: {e}")))?;
        let screw = Screw::from_plucker(vec(6), vec(9)).map_err(|e| bad(format!("line {line}: {e}")))?;
        out.push(MetricSample {
            pair,
            screw,
            eta_raw: v[12],
            y: v[13],
            cuboid_id,
        });
    }
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, samples: &[MetricSample]) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_csv(std::io::BufWriter::new(f), samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<MetricSample>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_csv(std::io::BufReader::new(f), path)
}

/// Writes `train.csv` and `val.csv` under `dir`; returns their row counts.
pub fn export_dataset(dir: impl AsRef<Path>, samples: &[MetricSample], split: &Split) -> Result<(usize, usize)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (train, val) = split_samples(samples, split);
    save_dataset(dir.join("train.csv"), &train)?;
    save_dataset(dir.join("val.csv"), &val)?;
    Ok((train.len(), val.len()))
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionSection {
    pub mu_mean: f64,
    pub mu_std: f64,
    pub mu_env: f64,
    pub n_samples: usize,
}

impl Default for FrictionSection {
    fn default() -> Self {
        let fm = FrictionModel::default();
        Self {
            mu_mean: fm.mu_mean,
            mu_std: fm.mu_std,
            mu_env: fm.mu_env,
            n_samples: fm.n_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub y_th: f64,
    pub res_u: usize,
    pub res_v: usize,
    pub preference: ClosingPreference,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let res = GridRes::default();
        Self {
            y_th: DEFAULT_Y_TH,
            res_u: res.res_u,
            res_v: res.res_v,
            preference: ClosingPreference::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            epochs: t.epochs,
            batch_size: t.batch_size,
            hidden_width: crate::mlp::DEFAULT_HIDDEN_WIDTH,
        }
    }
}

/// `data` drives friction draws and the train/validation split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub train: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: FrictionModel::default().rng_seed,
            train: 0,
            eval: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub friction: FrictionSection,
    pub physics: Physics,
    pub gripper: GripperGeometry,
    pub pipeline: PipelineSection,
    pub train: TrainSection,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        cfg.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.friction_model().validate()?;
        if self.friction.mu_mean > 1.0 || self.friction.mu_env > 1.0 {
            return Err(Error::InvalidInput("friction coefficients above 1".into()));
        }
        self.physics.validate()?;
        self.pipeline_config().validate()?;
        self.train_config().validate()?;
        if self.train.hidden_width == 0 {
            return Err(Error::InvalidInput("hidden_width must be positive".into()));
        }
        Ok(())
    }

    pub fn friction_model(&self) -> FrictionModel {
        FrictionModel {
            mu_mean: self.friction.mu_mean,
            mu_std: self.friction.mu_std,
            n_samples: self.friction.n_samples,
            mu_env: self.friction.mu_env,
            rng_seed: self.seeds.data,
        }
    }

    pub fn grid(&self) -> GridRes {
        GridRes {
            res_u: self.pipeline.res_u,
            res_v: self.pipeline.res_v,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            res: self.grid(),
            y_th: self.pipeline.y_th,
            gripper: self.gripper,
            preference: self.pipeline.preference,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.seeds.train,
        }
    }

    pub fn split(&self) -> Split {
        Split {
            seed: self.seeds.data,
            ..Split::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::box_mesh;
    use ndarray::array;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    fn sample_cloud() -> PointCloud {
        PointCloud::new(
            vec![
                Vec3::new(0.1234567, -2.0, 3.5),
                Vec3::new(1e-7, 0.0, -0.25),
                Vec3::new(10.0, 20.0, 30.0),
            ],
            "world",
        )
        .unwrap()
    }

    #[test]
    fn ply_round_trip() {
        let cloud = sample_cloud();
        let (back, q) = parse_ply(&cloud_to_ply(&cloud, None).unwrap(), p()).unwrap();
        assert!(q.is_none());
        for (a, b) in cloud.points().iter().zip(back.points()) {
            assert!((a - b).amax() <= 1e-6);
        }
    }

    #[test]
    fn ply_quality_column_follows_scores() {
        let cloud = sample_cloud();
        let without = cloud_to_ply(&cloud, None).unwrap();
        assert!(!without.contains("quality"));
        let with = cloud_to_ply(&cloud, Some(&[0.0, 0.5, 1.0])).unwrap();
        assert!(with.contains("property float quality"));
        assert!(with.contains(" 0.500000 127 0 128\n"));
        let (_, q) = parse_ply(&with, p()).unwrap();
        assert_eq!(q.unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(score_color(0.0), [0, 0, 255]);
        assert_eq!(score_color(1.0), [255, 0, 0]);
        assert_eq!(score_color(0.5), [127, 0, 128]);
    }

    #[test]
    fn ply_normals_are_renormalized() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nproperty float nx\nproperty float ny\nproperty float nz\n\
                    end_header\n0 0 0 0 0 2\n";
        let (c, _) = parse_ply(text, p()).unwrap();
        assert_eq!(c.normals().unwrap()[0], Vec3::z());
    }

    #[test]
    fn ply_errors() {
        let head = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        assert!(parse_ply(&format!("{head}0 0 0\n"), p()).is_err());
        assert!(parse_ply(&format!("{head}0 0 0\n1 1 1\n2 2 2\n"), p()).is_err());
        assert!(parse_ply(&format!("{head}0 0 0\nnan 1 1\n"), p()).is_err());
        assert!(parse_ply(&format!("{head}0 0 0\n1 1\n"), p()).is_err());
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n", p()).is_err());
        assert!(parse_ply("plx\n", p()).is_err());
        assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n", p()).is_err());
        assert!(parse_ply(&format!("{head}0 0 0\n1 1 1\n"), p()).is_ok());
    }

    #[test]
    fn obj_cube_and_fan_split() {
        let cube = box_mesh(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let m = parse_obj(&mesh_to_obj(&cube), p()).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.triangles().len(), 12);
        assert_eq!(m.triangles(), cube.triangles());

        let quads = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0.5 1.5 0\nf 1 2 3 4\nf 1/1/1 3//2 5 4\nf -5 -4 -3\n";
        let m = parse_obj(quads, p()).unwrap();
        assert_eq!(m.triangles().len(), 2 + 2 + 1);
    }

    #[test]
    fn obj_errors() {
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\n", p()).is_err());
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 3\n", p()).is_err());
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n", p()).is_err());
        assert!(parse_obj("v 0 0\n", p()).is_err());
    }

    #[test]
    fn model_round_trip_is_bit_identical() {
        let model = MlpModel::init(12, 8, 3).unwrap();
        let bytes = model_to_bytes(&model);
        let back = model_from_bytes(&bytes, p()).unwrap();
        assert_eq!(back.params_flat(), model.params_flat());
        let x = array![[0.1, -0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2]];
        let (a, b) = (model.forward_eval(x.view()).unwrap(), back.forward_eval(x.view()).unwrap());
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(model_to_bytes(&back), bytes);
    }

    #[test]
    fn model_rejects_corruption() {
        let bytes = model_to_bytes(&MlpModel::init(12, 8, 3).unwrap());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(model_from_bytes(&wrong, p()).is_err());
        let mut ver = bytes.clone();
        ver[4] = 2;
        assert!(model_from_bytes(&ver, p()).is_err());
        assert!(model_from_bytes(&bytes[..bytes.len() - 1], p()).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(model_from_bytes(&longer, p()).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let screw = Screw::from_point_dir(Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.3, 0.4, 0.0)).unwrap();
        let samples = vec![
            MetricSample {
                pair: AntipodalPair::from_points(Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.1, 0.05, 0.2)).unwrap(),
                screw,
                eta_raw: 0.123456789012345,
                y: 1.0 / 3.0,
                cuboid_id: 7,
            },
            MetricSample {
                pair: AntipodalPair::from_points(Vec3::new(0.2, 0.0, 0.1), Vec3::new(0.2, 0.05, 0.1)).unwrap(),
                screw,
                eta_raw: f64::NAN,
                y: 0.0,
                cuboid_id: 7,
            },
        ];
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cuboid_id,cix,ciy,ciz,cjx,cjy,cjz,lx,ly,lz,mx,my,mz,eta_raw,y\n"));
        let back = read_dataset_csv(buf.as_slice(), p()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.cuboid_id, b.cuboid_id);
            assert!((a.pair.c_i - b.pair.c_i).amax() <= 1e-12);
            assert!((a.pair.c_j - b.pair.c_j).amax() <= 1e-12);
            assert!((a.screw.direction() - b.screw.direction()).amax() <= 1e-12);
            assert!((a.screw.moment() - b.screw.moment()).amax() <= 1e-12);
            assert!(b.screw.anchor().is_none());
            assert_eq!(a.y, b.y);
        }
        assert_eq!(back[0].eta_raw, samples[0].eta_raw);
        assert!(back[1].eta_raw.is_nan());
    }

    #[test]
    fn dataset_csv_rejects_bad_header() {
        assert!(read_dataset_csv("a,b\n1,2\n".as_bytes(), p()).is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pipeline.y_th, 0.6);
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(cfg.friction.mu_env, 0.4);
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = RunConfig::from_json(r#"{"pipeline": {"y_th": 0.7}, "gripper": {"g_w": 0.1}}"#).unwrap();
        assert_eq!(partial.pipeline.y_th, 0.7);
        assert_eq!(partial.pipeline.res_u, 34);
        assert_eq!(partial.gripper.max_opening, 0.1);
        assert!(RunConfig::from_json(r#"{"pipeline": {"y_th": 1.1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"lr": 0.1, "momentum": 0.9}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"batch_size": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"friction": {"n_samples": 0}}"#).is_err());
    }
}
