//! Dense primal-dual interior-point solver for small second-order cone programs.
//!
//! Solves
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = b
//!             G x + s = h,   s ∈ K
//! ```
//!
//! where `K` is a product of a nonnegative orthant and second-order cones
//! `{(t, u) : t ≥ ‖u‖}`. The iteration runs on the homogeneous self-dual
//! embedding so infeasibility and unboundedness come with certificates.
//! Scaling is Nesterov–Todd; steps are Mehrotra predictor-corrector.
//! Problems here have a few dozen variables, so the KKT system is assembled
//! and LU-factored densely every iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Cone layout of the slack vector: `nonneg` orthant entries first, then one
/// second-order cone per entry of `soc` (its dimension).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConeDims {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeDims {
    pub fn total(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant entry and one per second-order cone.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.soc.iter().scan(self.nonneg, |start, &len| {
            let block = (*start, len);
            *start += len;
            Some(block)
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub cones: ConeDims,
}

impl ConeProgram {
    pub fn n_variables(&self) -> usize {
        self.c.len()
    }

    pub fn n_equalities(&self) -> usize {
        self.a.nrows()
    }

    fn check_dims(&self) -> Result<(), String> {
        let n = self.c.len();
        if self.a.ncols() != n || self.g.ncols() != n {
            return Err("column count of A or G differs from len(c)".into());
        }
        if self.a.nrows() != self.b.len() {
            return Err("rows of A differ from len(b)".into());
        }
        if self.g.nrows() != self.h.len() || self.h.len() != self.cones.total() {
            return Err("rows of G, len(h) and cone dimensions disagree".into());
        }
        if self.cones.soc.iter().any(|&d| d < 2) {
            return Err("second-order cones need dimension at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub primal_objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Residual of the infeasibility (or unboundedness) certificate, when one was found.
    pub certificate_residual: Option<f64>,
}

impl ConeSolution {
    pub fn kkt_residual(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.gap)
    }
}

const STATIC_REG: f64 = 1e-10;
const REFINE_STEPS: usize = 2;
const STEP_FRACTION: f64 = 0.99;

pub fn solve(prog: &ConeProgram, settings: &SolverSettings) -> ConeSolution {
    if let Err(msg) = prog.check_dims() {
        panic!("malformed cone program: {msg}");
    }
    Solver::new(prog, settings).run()
}

struct Solver<'a> {
    prog: &'a ConeProgram,
    settings: SolverSettings,
    n: usize,
    p: usize,
    m: usize,
    kkt_static: DMatrix<f64>,
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    rx: DVector<f64>,
    ry: DVector<f64>,
    rz: DVector<f64>,
    rt: f64,
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

impl<'a> Solver<'a> {
    fn new(prog: &'a ConeProgram, settings: &SolverSettings) -> Self {
        let (n, p, m) = (prog.c.len(), prog.a.nrows(), prog.g.nrows());
        let mut k = DMatrix::<f64>::zeros(n + p + m, n + p + m);
        k.view_mut((0, n), (n, p)).copy_from(&prog.a.transpose());
        k.view_mut((n, 0), (p, n)).copy_from(&prog.a);
        k.view_mut((0, n + p), (n, m)).copy_from(&prog.g.transpose());
        k.view_mut((n + p, 0), (m, n)).copy_from(&prog.g);
        Self {
            prog,
            settings: *settings,
            n,
            p,
            m,
            kkt_static: k,
        }
    }

    /// KKT matrix `[0 Aᵀ Gᵀ; A 0 0; G 0 −H]` with `reg` on the diagonal
    /// blocks (`+` for x, `−` for y and z).
    fn kkt(&self, hessian: &DMatrix<f64>, reg: f64) -> DMatrix<f64> {
        let (n, p, m) = (self.n, self.p, self.m);
        let mut k = self.kkt_static.clone();
        for i in 0..n {
            k[(i, i)] = reg;
        }
        for i in 0..p {
            k[(n + i, n + i)] = -reg;
        }
        let mut hb = k.view_mut((n + p, n + p), (m, m));
        hb -= hessian;
        for i in 0..m {
            hb[(i, i)] -= reg;
        }
        k
    }

    fn factor_and_solve(&self, hessian: &DMatrix<f64>) -> Option<KktSolver> {
        let exact = self.kkt(hessian, 0.0);
        let lu = DenseLu::factor(self.kkt(hessian, STATIC_REG))?;
        Some(KktSolver { exact, lu })
    }

    fn split(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            v.rows(0, self.n).into_owned(),
            v.rows(self.n, self.p).into_owned(),
            v.rows(self.n + self.p, self.m).into_owned(),
        )
    }

    fn stack(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.n + self.p + self.m);
        v.rows_mut(0, self.n).copy_from(a);
        v.rows_mut(self.n, self.p).copy_from(b);
        v.rows_mut(self.n + self.p, self.m).copy_from(c);
        v
    }

    fn initial_point(&self) -> Option<Iterate> {
        let prog = self.prog;
        let kkt = self.factor_and_solve(&DMatrix::identity(self.m, self.m))?;
        let zero_n = DVector::zeros(self.n);
        let primal = kkt.solve(&self.stack(&zero_n, &prog.b, &prog.h))?;
        let (x, _, zp) = self.split(&primal);
        let s = shift_into_cone(&(-zp), &prog.cones);

        let dual = kkt.solve(&self.stack(
            &(-&prog.c),
            &DVector::zeros(self.p),
            &DVector::zeros(self.m),
        ))?;
        let (_, y, zd) = self.split(&dual);
        let z = shift_into_cone(&zd, &prog.cones);
        Some(Iterate {
            x,
            y,
            z,
            s,
            tau: 1.0,
            kappa: 1.0,
        })
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let prog = self.prog;
        Residuals {
            rx: prog.a.tr_mul(&it.y) + prog.g.tr_mul(&it.z) + &prog.c * it.tau,
            ry: &prog.a * &it.x - &prog.b * it.tau,
            rz: &prog.g * &it.x + &it.s - &prog.h * it.tau,
            rt: it.kappa + prog.c.dot(&it.x) + prog.b.dot(&it.y) + prog.h.dot(&it.z),
        }
    }

    fn run(&self) -> ConeSolution {
        let prog = self.prog;
        let tol = self.settings.tol;
        let cones = &prog.cones;
        let degree = cones.degree() as f64;
        let b_scale = 1.0 + prog.b.norm().max(prog.h.norm());
        let c_scale = 1.0 + prog.c.norm();

        let Some(mut it) = self.initial_point() else {
            return self.finish(None, SolveStatus::MaxIter, 0, [f64::INFINITY; 3], None);
        };

        let mut metrics = [f64::INFINITY; 3];
        for iter in 0..=self.settings.max_iter {
            let r = self.residuals(&it);
            let pcost = prog.c.dot(&it.x) / it.tau;
            let dcost = -(prog.b.dot(&it.y) + prog.h.dot(&it.z)) / it.tau;
            let pres = r.ry.norm().max(r.rz.norm()) / it.tau / b_scale;
            let dres = r.rx.norm() / it.tau / c_scale;
            let gap = it.s.dot(&it.z) / (it.tau * it.tau);
            metrics = [pres, dres, gap];

            if pres <= tol
                && dres <= tol
                && gap <= tol * (1.0 + pcost.abs().min(dcost.abs()))
            {
                return self.finish(Some(&it), SolveStatus::Optimal, iter, metrics, None);
            }
            let by_hz = prog.b.dot(&it.y) + prog.h.dot(&it.z);
            if by_hz < 0.0 {
                let cert = (prog.a.tr_mul(&it.y) + prog.g.tr_mul(&it.z)).norm() / -by_hz;
                if cert <= tol {
                    return self.finish(
                        Some(&it),
                        SolveStatus::Infeasible,
                        iter,
                        metrics,
                        Some(cert),
                    );
                }
            }
            let cx = prog.c.dot(&it.x);
            if cx < 0.0 {
                let cert = (&prog.a * &it.x)
                    .norm()
                    .max((&prog.g * &it.x + &it.s).norm())
                    / -cx;
                if cert <= tol {
                    return self.finish(
                        Some(&it),
                        SolveStatus::Unbounded,
                        iter,
                        metrics,
                        Some(cert),
                    );
                }
            }
            if iter == self.settings.max_iter {
                break;
            }

            let Some(scaling) = NtScaling::new(&it.s, &it.z, cones) else {
                break;
            };
            let Some(kkt) = self.factor_and_solve(&(&scaling.w * &scaling.w)) else {
                break;
            };
            let Some(u1) = kkt.solve(&self.stack(&(-&prog.c), &prog.b, &prog.h)) else {
                break;
            };
            let u1 = self.split(&u1);
            let mu = (it.s.dot(&it.z) + it.tau * it.kappa) / (degree + 1.0);

            // Predictor.
            let lambda_sq = cone_prod(&scaling.lambda, &scaling.lambda, cones);
            let d_s = -&lambda_sq;
            let d_k = -it.tau * it.kappa;
            let Some(aff) = self.direction(&it, &r, &kkt, &u1, &scaling, 1.0, &d_s, d_k) else {
                break;
            };
            let alpha_aff = self.max_step(&it, &aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // Corrector.
            let corr = cone_prod(&(&scaling.winv * &aff.ds), &(&scaling.w * &aff.dz), cones);
            let d_s = -lambda_sq + cone_identity(cones) * (sigma * mu) - corr;
            let d_k = -it.tau * it.kappa + sigma * mu - aff.dtau * aff.dkappa;
            let Some(dir) =
                self.direction(&it, &r, &kkt, &u1, &scaling, 1.0 - sigma, &d_s, d_k)
            else {
                break;
            };
            let alpha = (STEP_FRACTION * self.max_step(&it, &dir)).min(1.0);
            if !(alpha > 1e-12) {
                break;
            }
            it.x += &dir.dx * alpha;
            it.y += &dir.dy * alpha;
            it.z += &dir.dz * alpha;
            it.s += &dir.ds * alpha;
            it.tau += alpha * dir.dtau;
            it.kappa += alpha * dir.dkappa;
        }
        let iters = self.settings.max_iter;
        self.finish(Some(&it), SolveStatus::MaxIter, iters, metrics, None)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        r: &Residuals,
        kkt: &KktSolver,
        u1: &(DVector<f64>, DVector<f64>, DVector<f64>),
        scaling: &NtScaling,
        res_factor: f64,
        d_s: &DVector<f64>,
        d_k: f64,
    ) -> Option<Direction> {
        let prog = self.prog;
        let t = cone_div(&scaling.lambda, d_s, &prog.cones);
        let w_t = &scaling.w * &t;
        let rhs = self.stack(
            &(-res_factor * &r.rx),
            &(-res_factor * &r.ry),
            &(-res_factor * &r.rz - &w_t),
        );
        let (u2x, u2y, u2z) = self.split(&kkt.solve(&rhs)?);
        let (u1x, u1y, u1z) = u1;
        let denom = prog.c.dot(u1x) + prog.b.dot(u1y) + prog.h.dot(u1z) - it.kappa / it.tau;
        let numer = -res_factor * r.rt
            - d_k / it.tau
            - (prog.c.dot(&u2x) + prog.b.dot(&u2y) + prog.h.dot(&u2z));
        let dtau = numer / denom;
        if !dtau.is_finite() {
            return None;
        }
        let dx = u2x + u1x * dtau;
        let dy = u2y + u1y * dtau;
        let dz = u2z + u1z * dtau;
        let ds = &scaling.w * (t - &scaling.w * &dz);
        let dkappa = (d_k - it.kappa * dtau) / it.tau;
        Some(Direction {
            dx,
            dy,
            dz,
            ds,
            dtau,
            dkappa,
        })
    }

    fn max_step(&self, it: &Iterate, d: &Direction) -> f64 {
        let cones = &self.prog.cones;
        let mut alpha = max_cone_step(&it.s, &d.ds, cones).min(max_cone_step(&it.z, &d.dz, cones));
        if d.dtau < 0.0 {
            alpha = alpha.min(-it.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            alpha = alpha.min(-it.kappa / d.dkappa);
        }
        alpha
    }

    fn finish(
        &self,
        it: Option<&Iterate>,
        status: SolveStatus,
        iterations: usize,
        metrics: [f64; 3],
        certificate_residual: Option<f64>,
    ) -> ConeSolution {
        let prog = self.prog;
        let (x, y, z, s) = match it {
            None => (
                DVector::zeros(self.n),
                DVector::zeros(self.p),
                DVector::zeros(self.m),
                DVector::zeros(self.m),
            ),
            Some(it) => {
                let scale = match status {
                    SolveStatus::Infeasible => {
                        -1.0 / (prog.b.dot(&it.y) + prog.h.dot(&it.z))
                    }
                    SolveStatus::Unbounded => -1.0 / prog.c.dot(&it.x),
                    _ => 1.0 / it.tau,
                };
                (
                    &it.x * scale,
                    &it.y * scale,
                    &it.z * scale,
                    &it.s * scale,
                )
            }
        };
        let primal_objective = match status {
            SolveStatus::Optimal | SolveStatus::MaxIter => prog.c.dot(&x),
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::Unbounded => f64::NEG_INFINITY,
        };
        ConeSolution {
            status,
            x,
            y,
            z,
            s,
            primal_objective,
            iterations,
            primal_residual: metrics[0],
            dual_residual: metrics[1],
            gap: metrics[2],
            certificate_residual,
        }
    }
}

struct KktSolver {
    exact: DMatrix<f64>,
    lu: DenseLu,
}

impl KktSolver {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = rhs.clone();
        self.lu.solve_in_place(x.as_mut_slice());
        let target = 1e-13 * rhs.amax();
        for _ in 0..REFINE_STEPS {
            let mut r = rhs - &self.exact * &x;
            if r.amax() <= target {
                break;
            }
            self.lu.solve_in_place(r.as_mut_slice());
            x += r;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// Column-major LU with partial pivoting; zero multipliers are skipped,
/// which pays off on the block-sparse KKT matrix.
struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let mut lu = m.data.into();
        let lu: &mut Vec<f64> = &mut lu;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let col_k = k * n;
            let (mut piv, mut best) = (k, lu[col_k + k].abs());
            for i in k + 1..n {
                let v = lu[col_k + i].abs();
                if v > best {
                    piv = i;
                    best = v;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return None;
            }
            if piv != k {
                perm.swap(k, piv);
                for j in 0..n {
                    lu.swap(j * n + k, j * n + piv);
                }
            }
            let inv = 1.0 / lu[col_k + k];
            for i in k + 1..n {
                lu[col_k + i] *= inv;
            }
            for j in k + 1..n {
                let a = lu[j * n + k];
                if a == 0.0 {
                    continue;
                }
                let (head, tail) = lu.split_at_mut(j * n);
                let lcol = &head[col_k + k + 1..col_k + n];
                let ucol = &mut tail[k + 1..n];
                for (u, l) in ucol.iter_mut().zip(lcol) {
                    *u -= a * l;
                }
            }
        }
        Some(Self {
            n,
            lu: std::mem::take(lu),
            perm,
        })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                let col = &self.lu[k * n + k + 1..k * n + n];
                for (xi, l) in x[k + 1..].iter_mut().zip(col) {
                    *xi -= xk * l;
                }
            }
        }
        for k in (0..n).rev() {
            x[k] /= self.lu[k * n + k];
            let xk = x[k];
            if xk != 0.0 {
                let col = &self.lu[k * n..k * n + k];
                for (xi, u) in x[..k].iter_mut().zip(col) {
                    *xi -= xk * u;
                }
            }
        }
        b.copy_from_slice(&x);
    }
}

/// Nesterov–Todd scaling `W` (symmetric, block diagonal) with `W z = W⁻¹ s = λ`.
struct NtScaling {
    w: DMatrix<f64>,
    winv: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl NtScaling {
    fn new(s: &DVector<f64>, z: &DVector<f64>, cones: &ConeDims) -> Option<Self> {
        let m = s.len();
        let mut w = DMatrix::zeros(m, m);
        let mut winv = DMatrix::zeros(m, m);
        for i in 0..cones.nonneg {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            let d = (s[i] / z[i]).sqrt();
            w[(i, i)] = d;
            winv[(i, i)] = 1.0 / d;
        }
        for (start, len) in cones.soc_blocks() {
            let sb = s.rows(start, len);
            let zb = z.rows(start, len);
            let s_det = soc_det(sb.as_slice());
            let z_det = soc_det(zb.as_slice());
            if !(s_det > 0.0 && z_det > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                return None;
            }
            let s_bar = sb / s_det.sqrt();
            let z_bar = zb / z_det.sqrt();
            let gamma = ((1.0 + s_bar.dot(&z_bar)) / 2.0).sqrt();
            let w0 = (s_bar[0] + z_bar[0]) / (2.0 * gamma);
            let w1 = (s_bar.rows(1, len - 1) - z_bar.rows(1, len - 1)) / (2.0 * gamma);
            let eta = (s_det / z_det).powf(0.25);
            let outer = &w1 * w1.transpose() / (1.0 + w0);

            let mut blk = w.view_mut((start, start), (len, len));
            blk[(0, 0)] = eta * w0;
            let mut inv = winv.view_mut((start, start), (len, len));
            inv[(0, 0)] = w0 / eta;
            for a in 0..len - 1 {
                blk[(0, a + 1)] = eta * w1[a];
                blk[(a + 1, 0)] = eta * w1[a];
                inv[(0, a + 1)] = -w1[a] / eta;
                inv[(a + 1, 0)] = -w1[a] / eta;
                for b in 0..len - 1 {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    blk[(a + 1, b + 1)] = eta * (delta + outer[(a, b)]);
                    inv[(a + 1, b + 1)] = (delta + outer[(a, b)]) / eta;
                }
            }
        }
        let lambda = &w * z;
        Some(Self { w, winv, lambda })
    }
}

fn soc_det(v: &[f64]) -> f64 {
    let tail: f64 = v[1..].iter().map(|x| x * x).sum();
    (v[0] - tail.sqrt()) * (v[0] + tail.sqrt())
}

fn cone_identity(cones: &ConeDims) -> DVector<f64> {
    let mut e = DVector::zeros(cones.total());
    for i in 0..cones.nonneg {
        e[i] = 1.0;
    }
    for (start, _) in cones.soc_blocks() {
        e[start] = 1.0;
    }
    e
}

/// Jordan product `u ∘ v`.
fn cone_prod(u: &DVector<f64>, v: &DVector<f64>, cones: &ConeDims) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for i in 0..cones.nonneg {
        out[i] = u[i] * v[i];
    }
    for (start, len) in cones.soc_blocks() {
        let ub = u.rows(start, len);
        let vb = v.rows(start, len);
        out[start] = ub.dot(&vb);
        for k in 1..len {
            out[start + k] = ub[0] * vb[k] + vb[0] * ub[k];
        }
    }
    out
}

/// Solves `λ ∘ x = v` for `x`.
fn cone_div(lambda: &DVector<f64>, v: &DVector<f64>, cones: &ConeDims) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for i in 0..cones.nonneg {
        out[i] = v[i] / lambda[i];
    }
    for (start, len) in cones.soc_blocks() {
        let l = lambda.rows(start, len);
        let vb = v.rows(start, len);
        let det = soc_det(l.as_slice());
        let l1v1: f64 = (1..len).map(|k| l[k] * vb[k]).sum();
        let x0 = (l[0] * vb[0] - l1v1) / det;
        out[start] = x0;
        for k in 1..len {
            out[start + k] = (vb[k] - x0 * l[k]) / l[0];
        }
    }
    out
}

/// Largest `α` with `u + α du` in the cone, for `u` in its interior.
fn max_cone_step(u: &DVector<f64>, du: &DVector<f64>, cones: &ConeDims) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..cones.nonneg {
        if du[i] < 0.0 {
            alpha = alpha.min(-u[i] / du[i]);
        }
    }
    for (start, len) in cones.soc_blocks() {
        let ub = u.rows(start, len);
        let db = du.rows(start, len);
        let tail = |x: &nalgebra::DVectorView<f64>, y: &nalgebra::DVectorView<f64>| -> f64 {
            (1..len).map(|k| x[k] * y[k]).sum()
        };
        let qa = db[0] * db[0] - tail(&db, &db);
        let qb = 2.0 * (ub[0] * db[0] - tail(&ub, &db));
        let qc = soc_det(ub.as_slice()).max(0.0);
        alpha = alpha.min(first_positive_root(qa, qb, qc));
        if db[0] < 0.0 {
            alpha = alpha.min(-ub[0] / db[0]);
        }
    }
    alpha
}

/// Smallest positive root of `a α² + b α + c` with `c ≥ 0`, or infinity.
fn first_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let r1 = q / a;
    let r2 = if q != 0.0 { c / q } else { f64::INFINITY };
    [r1, r2]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// `u + (1 + α) e` when `u` lies outside the interior of the cone.
fn shift_into_cone(u: &DVector<f64>, cones: &ConeDims) -> DVector<f64> {
    let mut alpha = f64::NEG_INFINITY;
    for i in 0..cones.nonneg {
        alpha = alpha.max(-u[i]);
    }
    for (start, len) in cones.soc_blocks() {
        let ub = u.rows(start, len);
        let tail = ub.rows(1, len - 1).norm();
        alpha = alpha.max(tail - ub[0]);
    }
    if alpha < 0.0 {
        u.clone()
    } else {
        u + cone_identity(cones) * (1.0 + alpha)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn soc_only(n: usize) -> ConeDims {
        ConeDims {
            nonneg: 0,
            soc: vec![n],
        }
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_lambda() {
        let cones = ConeDims {
            nonneg: 2,
            soc: vec![3, 4],
        };
        let s = DVector::from_vec(vec![0.5, 2.0, 3.0, 1.0, -0.5, 2.0, 0.3, 0.4, -1.0]);
        let z = DVector::from_vec(vec![1.5, 0.1, 1.0, 0.2, 0.6, 4.0, -1.0, 2.0, 0.5]);
        let w = NtScaling::new(&s, &z, &cones).unwrap();
        assert_abs_diff_eq!(&w.w * &z, w.lambda.clone(), epsilon = 1e-12);
        assert_abs_diff_eq!(&w.winv * &s, w.lambda.clone(), epsilon = 1e-12);
        assert_abs_diff_eq!(&w.w * &w.winv, DMatrix::identity(9, 9), epsilon = 1e-12);
    }

    #[test]
    fn jordan_division_inverts_product() {
        let cones = ConeDims {
            nonneg: 1,
            soc: vec![3],
        };
        let l = DVector::from_vec(vec![2.0, 3.0, 0.5, -1.0]);
        let v = DVector::from_vec(vec![0.7, 1.0, -2.0, 0.25]);
        let x = cone_div(&l, &v, &cones);
        assert_abs_diff_eq!(cone_prod(&l, &x, &cones), v, epsilon = 1e-12);
    }

    #[test]
    fn step_to_cone_boundary() {
        let cones = soc_only(3);
        let u = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let du = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(max_cone_step(&u, &du, &cones), 1.0, epsilon = 1e-12);
        let du = DVector::from_vec(vec![1.0, 0.5, 0.0]);
        assert_eq!(max_cone_step(&u, &du, &cones), f64::INFINITY);
    }

    #[test]
    fn linear_program() {
        // min -x1 - x2  s.t. x1 + 2 x2 <= 4, 3 x1 + x2 <= 6, x >= 0  -> (1.6, 1.2)
        let prog = ConeProgram {
            c: DVector::from_vec(vec![-1.0, -1.0]),
            a: DMatrix::zeros(0, 2),
            b: DVector::zeros(0),
            g: DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
            h: DVector::from_vec(vec![4.0, 6.0, 0.0, 0.0]),
            cones: ConeDims {
                nonneg: 4,
                soc: vec![],
            },
        };
        let sol = solve(&prog, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.6, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 1.2, epsilon = 1e-6);
    }

    #[test]
    fn norm_minimization_on_hyperplane() {
        // min t  s.t. ||x|| <= t, x1 + x2 = 2  ->  t = sqrt(2)
        let prog = ConeProgram {
            c: DVector::from_vec(vec![1.0, 0.0, 0.0]),
            a: DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]),
            b: DVector::from_vec(vec![2.0]),
            g: -DMatrix::<f64>::identity(3, 3),
            h: DVector::zeros(3),
            cones: soc_only(3),
        };
        let sol = solve(&prog, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.primal_objective, 2f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x <= -1 and x >= 0
        let prog = ConeProgram {
            c: DVector::from_vec(vec![1.0]),
            a: DMatrix::zeros(0, 1),
            b: DVector::zeros(0),
            g: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            h: DVector::from_vec(vec![-1.0, 0.0]),
            cones: ConeDims {
                nonneg: 2,
                soc: vec![],
            },
        };
        let sol = solve(&prog, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.certificate_residual.unwrap() <= 1e-7);
    }

    #[test]
    fn detects_unboundedness() {
        // min -x s.t. x >= 0
        let prog = ConeProgram {
            c: DVector::from_vec(vec![-1.0]),
            a: DMatrix::zeros(0, 1),
            b: DVector::zeros(0),
            g: DMatrix::from_row_slice(1, 1, &[-1.0]),
            h: DVector::zeros(1),
            cones: ConeDims {
                nonneg: 1,
                soc: vec![],
            },
        };
        let sol = solve(&prog, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }
}
