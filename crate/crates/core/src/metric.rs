//! Task-dependent grasp metric: the largest moment about a task screw that a
//! two-finger grasp can exert, with optional environment contacts and gravity.

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tangent_basis, AntipodalPair, RigidTransform, Screw, Vec3};
use crate::socp::{self, ConeDims, ConeProgram, SolveStatus, SolverSettings};

/// Finite stand-in for an unbounded environment normal force.
pub const ENV_FORCE_LIMIT: f64 = 1e4;

const MU_MIN: f64 = 0.01;
const MU_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    Robot,
    Environment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSpec {
    pub position: Vec3,
    pub inward_normal: Vec3,
    pub mu: f64,
    pub f_normal_max: f64,
    pub kind: ContactKind,
}

impl ContactSpec {
    pub fn new(
        position: Vec3,
        inward_normal: Vec3,
        mu: f64,
        f_normal_max: f64,
        kind: ContactKind,
    ) -> Result<Self> {
        let c = Self {
            position,
            inward_normal,
            mu,
            f_normal_max,
            kind,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) {
            return Err(Error::InvalidInput(format!("friction coefficient {}", self.mu)));
        }
        if !(self.f_normal_max > 0.0) {
            return Err(Error::InvalidInput(format!(
                "normal force bound {}",
                self.f_normal_max
            )));
        }
        if (self.inward_normal.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput("contact normal is not unit length".into()));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite contact position".into()));
        }
        Ok(())
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            position: t.apply_point(&self.position),
            inward_normal: t.apply_vector(&self.inward_normal),
            ..*self
        }
    }
}

/// Object mass, gravity and force limits shared by every instance of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub mass: f64,
    pub gravity: Vec3,
    /// Normal force bound of each robot contact (N).
    pub f_normal_max: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            f_normal_max: 10.0,
        }
    }
}

impl Physics {
    pub fn gravity_free(f_normal_max: f64) -> Self {
        Self {
            mass: 0.0,
            gravity: Vec3::zeros(),
            f_normal_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass >= 0.0) || !(self.f_normal_max > 0.0) {
            return Err(Error::InvalidInput(
                "mass must be nonnegative and f_normal_max positive".into(),
            ));
        }
        if !self.gravity.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite gravity".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub screw: Screw,
    pub robot_contacts: [ContactSpec; 2],
    pub env_contacts: Vec<ContactSpec>,
    pub mass: f64,
    pub com: Vec3,
    pub gravity: Vec3,
}

impl TaskInstance {
    /// Instance for an antipodal pair with both robot contacts at friction `mu`.
    pub fn from_pair(
        pair: &AntipodalPair,
        screw: &Screw,
        env: &[ContactSpec],
        mu: f64,
        physics: &Physics,
        com: Vec3,
    ) -> Self {
        let robot = |c, n| ContactSpec {
            position: c,
            inward_normal: n,
            mu,
            f_normal_max: physics.f_normal_max,
            kind: ContactKind::Robot,
        };
        Self {
            screw: *screw,
            robot_contacts: [robot(pair.c_i, pair.n_i), robot(pair.c_j, pair.n_j)],
            env_contacts: env.to_vec(),
            mass: physics.mass,
            com,
            gravity: physics.gravity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.contacts() {
            c.validate()?;
        }
        let [a, b] = &self.robot_contacts;
        if (a.inward_normal + b.inward_normal).norm() > 1e-6 {
            return Err(Error::InvalidInput("robot contacts are not antipodal".into()));
        }
        if !(self.mass >= 0.0) {
            return Err(Error::InvalidInput("negative mass".into()));
        }
        Ok(())
    }

    pub fn contacts(&self) -> impl Iterator<Item = &ContactSpec> {
        self.robot_contacts.iter().chain(self.env_contacts.iter())
    }

    pub fn n_contacts(&self) -> usize {
        2 + self.env_contacts.len()
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            screw: self.screw.transformed(t),
            robot_contacts: self.robot_contacts.map(|c| c.transformed(t)),
            env_contacts: self.env_contacts.iter().map(|c| c.transformed(t)).collect(),
            mass: self.mass,
            com: t.apply_point(&self.com),
            gravity: t.apply_vector(&self.gravity),
        }
    }

    /// Copy with every robot contact's friction coefficient replaced.
    pub fn with_robot_mu(&self, mu: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.robot_contacts {
            c.mu = mu;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSolution {
    /// Optimal moment about the screw (N·m); NaN unless `status` is optimal.
    pub eta: f64,
    pub contact_forces: Vec<Vec3>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionModel {
    pub mu_mean: f64,
    pub mu_std: f64,
    pub n_samples: usize,
    pub mu_env: f64,
    pub rng_seed: u64,
}

impl Default for FrictionModel {
    fn default() -> Self {
        Self {
            mu_mean: 0.3,
            mu_std: 0.05,
            n_samples: 50,
            mu_env: 0.4,
            rng_seed: 42,
        }
    }
}

impl FrictionModel {
    /// A single deterministic draw at `mu`.
    pub fn fixed(mu: f64) -> Self {
        Self {
            mu_mean: mu,
            mu_std: 0.0,
            n_samples: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be at least 1".into()));
        }
        if !(self.mu_std >= 0.0) || !(self.mu_mean >= 0.0) || !(self.mu_env >= 0.0) {
            return Err(Error::InvalidInput("friction parameters must be nonnegative".into()));
        }
        Ok(())
    }

    /// Robot friction draws, clamped to `[0.01, 1]`.
    pub fn sample_mus(&self) -> Vec<f64> {
        if self.mu_std == 0.0 {
            return vec![self.mu_mean.clamp(MU_MIN, MU_MAX); self.n_samples];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let normal = Normal::new(self.mu_mean, self.mu_std).expect("validated std");
        (0..self.n_samples)
            .map(|_| normal.sample(&mut rng).clamp(MU_MIN, MU_MAX))
            .collect()
    }
}

/// Environment contact with the model's environment friction.
pub fn env_contact(position: Vec3, inward_normal: Vec3, fm: &FrictionModel) -> ContactSpec {
    ContactSpec {
        position,
        inward_normal,
        mu: fm.mu_env,
        f_normal_max: ENV_FORCE_LIMIT,
        kind: ContactKind::Environment,
    }
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Conic program over `x = [f_1, …, f_K, λ]` minimizing `−λ`.
///
/// Equalities: force balance (3 rows) and moment balance about the screw
/// anchor equal to `λ l` (3 rows). Cones: per contact the bounds
/// `0 ≤ f·n ≤ f_max` in the orthant and `(μ f·n, t₁·f, t₂·f)` in a 3-D
/// second-order cone.
pub fn build_program(t: &TaskInstance) -> ConeProgram {
    let k = t.n_contacts();
    let n = 3 * k + 1;
    let l = t.screw.direction();
    let p = t.screw.point_on_line();
    let weight = t.gravity * t.mass;

    let mut c = DVector::zeros(n);
    c[n - 1] = -1.0;

    let mut a = DMatrix::zeros(6, n);
    let mut b = DVector::zeros(6);
    let mut g = DMatrix::zeros(5 * k, n);
    let mut h = DVector::zeros(5 * k);
    for (i, contact) in t.contacts().enumerate() {
        let col = 3 * i;
        a.view_mut((0, col), (3, 3)).copy_from(&Matrix3::identity());
        a.view_mut((3, col), (3, 3))
            .copy_from(&skew(&(contact.position - p)));

        let nrm = contact.inward_normal;
        let (t1, t2) = tangent_basis(&nrm);
        for j in 0..3 {
            g[(2 * i, col + j)] = nrm[j];
            g[(2 * i + 1, col + j)] = -nrm[j];
            let soc = 2 * k + 3 * i;
            g[(soc, col + j)] = -contact.mu * nrm[j];
            g[(soc + 1, col + j)] = -t1[j];
            g[(soc + 2, col + j)] = -t2[j];
        }
        h[2 * i] = contact.f_normal_max;
    }
    for j in 0..3 {
        a[(3 + j, n - 1)] = -l[j];
    }
    let gravity_moment = (t.com - p).cross(&weight);
    for j in 0..3 {
        b[j] = -weight[j];
        b[3 + j] = -gravity_moment[j];
    }
    ConeProgram {
        c,
        a,
        b,
        g,
        h,
        cones: ConeDims {
            nonneg: 2 * k,
            soc: vec![3; k],
        },
    }
}

/// Equality rows over the forces alone once `λ` is eliminated: force balance
/// plus the moment balance projected off the screw axis.
pub fn eliminate_lambda(t: &TaskInstance, prog: &ConeProgram) -> DMatrix<f64> {
    let n_f = prog.n_variables() - 1;
    let (e1, e2) = tangent_basis(&t.screw.direction());
    let mut out = DMatrix::zeros(5, n_f);
    out.view_mut((0, 0), (3, n_f))
        .copy_from(&prog.a.view((0, 0), (3, n_f)));
    let moment = prog.a.view((3, 0), (3, n_f));
    for (row, e) in [e1, e2].iter().enumerate() {
        let projected = e.transpose() * moment;
        out.row_mut(3 + row).copy_from(&projected);
    }
    out
}

pub fn solve_program(prog: &ConeProgram, settings: &SolverSettings) -> MetricSolution {
    let sol = socp::solve(prog, settings);
    let k = (prog.n_variables() - 1) / 3;
    let contact_forces = (0..k)
        .map(|i| Vec3::new(sol.x[3 * i], sol.x[3 * i + 1], sol.x[3 * i + 2]))
        .collect();
    let eta = if sol.status == SolveStatus::Optimal {
        sol.x[prog.n_variables() - 1]
    } else {
        f64::NAN
    };
    MetricSolution {
        eta,
        contact_forces,
        status: sol.status,
        kkt_residual: sol.kkt_residual(),
    }
}

pub fn solve(t: &TaskInstance) -> MetricSolution {
    solve_program(&build_program(t), &SolverSettings::default())
}

/// Mean metric over friction draws, with the number of excluded draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub eta: f64,
    pub n_feasible: usize,
    pub n_excluded: usize,
}

/// Averages the metric over `fm`'s friction draws; both robot contacts share
/// each draw. Draws that do not solve to optimality are excluded.
pub fn grasp_metric(
    pair: &AntipodalPair,
    screw: &Screw,
    env: &[ContactSpec],
    fm: &FrictionModel,
    physics: &Physics,
    com: Vec3,
) -> Result<MetricEstimate> {
    let base = TaskInstance::from_pair(pair, screw, env, fm.mu_mean, physics, com);
    grasp_metric_for(&base, fm)
}

pub fn grasp_metric_for(base: &TaskInstance, fm: &FrictionModel) -> Result<MetricEstimate> {
    let est = average_over_draws(base, fm)?;
    if est.n_excluded * 10 > fm.n_samples {
        log::warn!("{} of {} friction draws excluded", est.n_excluded, fm.n_samples);
    }
    Ok(est)
}

/// [`grasp_metric_for`] without the exclusion warning, for bulk callers that
/// report exclusions in aggregate.
pub(crate) fn average_over_draws(base: &TaskInstance, fm: &FrictionModel) -> Result<MetricEstimate> {
    fm.validate()?;
    let settings = SolverSettings::default();
    let mut prog = build_program(base);
    let n_contacts = base.n_contacts();
    let mut sum = 0.0;
    let mut n_feasible = 0;
    for mu in fm.sample_mus() {
        // Only the robot friction rows change between draws.
        for (i, contact) in base.robot_contacts.iter().enumerate() {
            let row = 2 * n_contacts + 3 * i;
            for j in 0..3 {
                prog.g[(row, 3 * i + j)] = -mu * contact.inward_normal[j];
            }
        }
        let sol = solve_program(&prog, &settings);
        if sol.status == SolveStatus::Optimal {
            sum += sol.eta;
            n_feasible += 1;
        }
    }
    if n_feasible == 0 {
        return Err(Error::NoFeasibleGrasp);
    }
    Ok(MetricEstimate {
        eta: sum / n_feasible as f64,
        n_feasible,
        n_excluded: fm.n_samples - n_feasible,
    })
}
