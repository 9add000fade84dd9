//! Dense primal-dual interior-point solver for block linear matrix inequality
//! programs
//!
//! ```text
//! min  cᵀz + c0   s.t.  A z = b,   F_j(z) = F_j0 + Σ_k z_k F_jk ⪰ 0
//! ```
//!
//! Equalities are removed by a null-space parametrisation. The remaining
//! problem is solved from an infeasible start with Nesterov-Todd scaling and
//! a Mehrotra-style centering parameter.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{sym_eigen, SymMatrix};

/// One symmetric block constraint `F_0 + Σ z_k F_k ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub name: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        LmiBlock {
            name: name.into(),
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    /// Adds `v` at `(r, c)` and `(c, r)` of the constant part.
    pub fn add_constant(&mut self, r: usize, c: usize, v: f64) {
        self.constant[(r, c)] += v;
        if r != c {
            self.constant[(c, r)] += v;
        }
    }

    /// Adds `v·z_var` at `(r, c)` and `(c, r)`.
    pub fn add_term(&mut self, var: usize, r: usize, c: usize, v: f64) {
        let pos = match self.terms.iter().position(|(k, _)| *k == var) {
            Some(p) => p,
            None => {
                self.terms.push((var, DMatrix::zeros(self.dim, self.dim)));
                self.terms.len() - 1
            }
        };
        let m = &mut self.terms[pos].1;
        m[(r, c)] += v;
        if r != c {
            m[(c, r)] += v;
        }
    }

    pub fn evaluate(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, m) in &self.terms {
            out += m * z[*k];
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SdpProgram {
    pub n_vars: usize,
    pub objective: DVector<f64>,
    pub objective_constant: f64,
    /// Sparse equality rows `Σ a_k z_k = b`.
    pub equalities: Vec<(Vec<(usize, f64)>, f64)>,
    pub blocks: Vec<LmiBlock>,
}

impl SdpProgram {
    pub fn new(n_vars: usize) -> Self {
        SdpProgram {
            n_vars,
            objective: DVector::zeros(n_vars),
            objective_constant: 0.0,
            equalities: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn constraint_count(&self) -> usize {
        self.equalities.len() + self.blocks.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Per-block bound on `‖X_j S_j‖_F` at termination.
pub const COMPLEMENTARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SdpResult {
    pub z: DVector<f64>,
    /// Slack blocks `F_j(z)`.
    pub slacks: Vec<DMatrix<f64>>,
    /// Dual blocks.
    pub duals: Vec<DMatrix<f64>>,
    pub status: SdpStatus,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub log: Vec<IterationLog>,
}

impl SdpResult {
    /// Largest `‖X_j S_j‖_F` over blocks.
    pub fn complementarity(&self) -> f64 {
        self.duals
            .iter()
            .zip(&self.slacks)
            .map(|(x, s)| (x * s).norm())
            .fold(0.0, f64::max)
    }
}

/// Program with equalities eliminated: `z = z0 + N y`.
struct Reduced {
    z0: DVector<f64>,
    basis: DMatrix<f64>,
    c: DVector<f64>,
    c0: f64,
    g0: Vec<DMatrix<f64>>,
    g: Vec<Vec<DMatrix<f64>>>,
}

fn reduce(prog: &SdpProgram) -> Result<Reduced> {
    let n = prog.n_vars;
    let (z0, basis) = if prog.equalities.is_empty() {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let p = prog.equalities.len();
        let mut a = DMatrix::zeros(p, n);
        let mut b = DVector::zeros(p);
        for (r, (row, rhs)) in prog.equalities.iter().enumerate() {
            for &(k, v) in row {
                if k >= n {
                    return Err(Error::InvalidProblem(format!("equality references variable {k}")));
                }
                a[(r, k)] += v;
            }
            b[r] = *rhs;
        }
        let e = sym_eigen(&SymMatrix::new(a.transpose() * &a))?;
        let cut = 1e-12 * e.spectral_radius().max(1.0);
        let atb = a.transpose() * &b;
        let mut z0 = DVector::zeros(n);
        let mut null = Vec::new();
        for k in 0..n {
            let v = e.eigenvectors.column(k);
            let l = e.eigenvalues[k];
            if l > cut {
                z0 += v * (v.dot(&atb) / l);
            } else {
                null.push(v.clone_owned());
            }
        }
        if (&a * &z0 - &b).amax() > 1e-9 * (1.0 + b.amax()) {
            return Err(Error::InvalidProblem("equality constraints are inconsistent".into()));
        }
        let basis = if null.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&null)
        };
        (z0, basis)
    };
    let m = basis.ncols();
    let c = basis.transpose() * &prog.objective;
    let c0 = prog.objective_constant + prog.objective.dot(&z0);
    let mut g0 = Vec::new();
    let mut g = Vec::new();
    for blk in &prog.blocks {
        g0.push(blk.evaluate(&z0));
        let mut gi = vec![DMatrix::zeros(blk.dim, blk.dim); m];
        for (k, fk) in &blk.terms {
            for (i, gm) in gi.iter_mut().enumerate() {
                let w = basis[(*k, i)];
                if w != 0.0 {
                    *gm += fk * w;
                }
            }
        }
        g.push(gi);
    }
    Ok(Reduced { z0, basis, c, c0, g0, g })
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Largest `α ≤ ∞` with `P + α dP ⪰ 0`, given the Cholesky factor of `P`.
fn max_step(chol: &DMatrix<f64>, dp: &DMatrix<f64>) -> Result<f64> {
    let n = chol.nrows();
    if n == 1 {
        let p = chol[(0, 0)] * chol[(0, 0)];
        return Ok(if dp[(0, 0)] < 0.0 { -p / dp[(0, 0)] } else { f64::INFINITY });
    }
    let linv = chol
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
    let t = SymMatrix::new(&linv * dp * linv.transpose());
    let lmin = sym_eigen(&t)?.eigenvalues[0];
    Ok(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NumericalFailure(format!("{what} block lost positive definiteness")))
}

/// Nesterov-Todd scaling point `W` with `W S W = X`.
fn nt_scaling(lx: &DMatrix<f64>, ls: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = (ls.transpose() * lx).svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::NumericalFailure("SVD failed in scaling".into()))?;
    let v = vt.transpose();
    let sinv = svd.singular_values.map(|s| 1.0 / s);
    let inner = &v * DMatrix::from_diagonal(&sinv) * &vt;
    Ok(sym(lx * inner * lx.transpose()))
}

pub fn solve(prog: &SdpProgram, opts: &SolverOptions) -> Result<SdpResult> {
    if prog.objective.len() != prog.n_vars {
        return Err(Error::InvalidProblem("objective length differs from variable count".into()));
    }
    for blk in &prog.blocks {
        if let Some((k, _)) = blk.terms.iter().find(|(k, _)| *k >= prog.n_vars) {
            return Err(Error::InvalidProblem(format!("block {} references variable {k}", blk.name)));
        }
    }
    let red = reduce(prog)?;
    let m = red.basis.ncols();
    let nb = red.g0.len();
    let total_dim: usize = prog.blocks.iter().map(|b| b.dim).sum();

    let scale = red
        .g0
        .iter()
        .map(|g| g.amax())
        .chain(std::iter::once(red.c.amax()))
        .fold(1.0, f64::max);
    let xi = 10.0 * scale.sqrt().max(1.0);
    let mut y = DVector::<f64>::zeros(m);
    let mut s: Vec<DMatrix<f64>> = prog.blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim) * xi).collect();
    let mut x: Vec<DMatrix<f64>> = s.clone();

    let g0_norm = red.g0.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    let c_norm = red.c.norm();
    let mut log = Vec::new();
    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    let (mut pres, mut dres, mut gap);

    loop {
        // residuals at the current iterate
        let mut rp: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for j in 0..nb {
            let mut f = red.g0[j].clone();
            for i in 0..m {
                if y[i] != 0.0 {
                    f += &red.g[j][i] * y[i];
                }
            }
            rp.push(f - &s[j]);
        }
        let mut rd = red.c.clone();
        for j in 0..nb {
            for i in 0..m {
                rd[i] -= trace_prod(&red.g[j][i], &x[j]);
            }
        }
        let mu = (0..nb).map(|j| trace_prod(&x[j], &s[j])).sum::<f64>() / total_dim as f64;
        let pobj = red.c.dot(&y) + red.c0;
        let dobj = -(0..nb).map(|j| trace_prod(&red.g0[j], &x[j])).sum::<f64>() + red.c0;
        pres = rp.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + g0_norm);
        dres = rd.norm() / (1.0 + c_norm);
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        let comp = (0..nb).map(|j| (&x[j] * &s[j]).norm()).fold(0.0, f64::max);
        let entry = IterationLog {
            iteration: iterations,
            primal_objective: pobj,
            dual_objective: dobj,
            gap,
            primal_residual: pres,
            dual_residual: dres,
            mu,
        };
        if opts.verbose {
            eprintln!(
                "{:4} pobj {:+.8e} dobj {:+.8e} gap {:.2e} pres {:.2e} dres {:.2e} mu {:.2e} comp {:.2e}",
                entry.iteration, pobj, dobj, gap, pres, dres, mu, comp
            );
        }
        log.push(entry);
        if pres <= opts.tol && dres <= opts.tol && gap <= opts.tol && comp <= COMPLEMENTARITY_TOL {
            status = SdpStatus::Optimal;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let xnorm = x.iter().map(|b| b.amax()).fold(0.0, f64::max);
        if y.amax() > 1e12 || xnorm > 1e12 {
            status = SdpStatus::Infeasible;
            break;
        }
        iterations += 1;
        let centring = pres <= opts.tol && dres <= opts.tol && gap <= opts.tol;

        let lx: Vec<DMatrix<f64>> = x.iter().map(|b| cholesky(b, "dual")).collect::<Result<_>>()?;
        let ls: Vec<DMatrix<f64>> = s.iter().map(|b| cholesky(b, "slack")).collect::<Result<_>>()?;
        let w: Vec<DMatrix<f64>> = (0..nb).map(|j| nt_scaling(&lx[j], &ls[j])).collect::<Result<_>>()?;
        let sinv: Vec<DMatrix<f64>> = ls
            .iter()
            .map(|l| {
                let n = l.nrows();
                let li = l.clone().solve_lower_triangular(&DMatrix::identity(n, n)).unwrap_or_else(|| DMatrix::zeros(n, n));
                li.transpose() * li
            })
            .collect();

        // Schur complement matrix M_ik = Σ_j tr(G_ji W G_jk W)
        let mut mm = DMatrix::<f64>::zeros(m, m);
        let mut wrw = Vec::with_capacity(nb);
        for j in 0..nb {
            let wj = &w[j];
            let scaled: Vec<DMatrix<f64>> = red.g[j].iter().map(|gk| wj * gk * wj).collect();
            for i in 0..m {
                if red.g[j][i].amax() == 0.0 {
                    continue;
                }
                for k in i..m {
                    let v = trace_prod(&red.g[j][i], &scaled[k]);
                    mm[(i, k)] += v;
                    if k != i {
                        mm[(k, i)] += v;
                    }
                }
            }
            wrw.push(wj * &rp[j] * wj);
        }
        let (dy, ds, dx, a_s, a_x) = {
        let chol_m = mm.clone().cholesky();
        let lu_m = if chol_m.is_none() { Some(mm.clone().full_piv_lu()) } else { None };
        let solve_m = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
            match (&chol_m, &lu_m) {
                (Some(c), _) => Ok(c.solve(rhs)),
                (None, Some(lu)) => lu
                    .solve(rhs)
                    .ok_or_else(|| Error::NumericalFailure("Schur complement matrix is singular".into())),
                _ => unreachable!(),
            }
        };

        let direction = |sigma: f64| -> Result<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            let mut rhs = -red.c.clone();
            for j in 0..nb {
                let t = &sinv[j] * (sigma * mu) - &wrw[j];
                for i in 0..m {
                    rhs[i] += trace_prod(&red.g[j][i], &t);
                }
            }
            let dy = solve_m(&rhs)?;
            let mut ds = Vec::with_capacity(nb);
            let mut dx = Vec::with_capacity(nb);
            for j in 0..nb {
                let mut d = rp[j].clone();
                for i in 0..m {
                    if dy[i] != 0.0 {
                        d += &red.g[j][i] * dy[i];
                    }
                }
                let d = sym(d);
                let dxj = sym(&sinv[j] * (sigma * mu) - &x[j] - &w[j] * &d * &w[j]);
                ds.push(d);
                dx.push(dxj);
            }
            Ok((dy, ds, dx))
        };
        let steps = |ds: &[DMatrix<f64>], dx: &[DMatrix<f64>]| -> Result<(f64, f64)> {
            let mut a_s = f64::INFINITY;
            let mut a_x = f64::INFINITY;
            for j in 0..nb {
                a_s = a_s.min(max_step(&ls[j], &ds[j])?);
                a_x = a_x.min(max_step(&lx[j], &dx[j])?);
            }
            Ok((a_s, a_x))
        };

        let (_, ds_a, dx_a) = direction(0.0)?;
        let (as_a, ax_a) = steps(&ds_a, &dx_a)?;
        let (as_a, ax_a) = (as_a.min(1.0), ax_a.min(1.0));
        let mu_aff = (0..nb)
            .map(|j| trace_prod(&(&x[j] + &dx_a[j] * ax_a), &(&s[j] + &ds_a[j] * as_a)))
            .sum::<f64>()
            / total_dim as f64;
        // residuals and gap already met: recentre so that X S approaches mu I
        let sigma = if centring { 1.0 } else { (mu_aff / mu).clamp(0.0, 1.0).powi(3).max(1e-3) };

        let (dy, ds, dx) = direction(sigma)?;
        let (a_s, a_x) = steps(&ds, &dx)?;
        let a_s = (0.95 * a_s).min(1.0);
        let a_x = (0.95 * a_x).min(1.0);
        (dy, ds, dx, a_s, a_x)
        };
        y += &dy * a_s;
        for j in 0..nb {
            s[j] = sym(&s[j] + &ds[j] * a_s);
            x[j] = sym(&x[j] + &dx[j] * a_x);
        }
    }

    let z = &red.z0 + &red.basis * &y;
    let slacks: Vec<DMatrix<f64>> = prog.blocks.iter().map(|b| b.evaluate(&z)).collect();
    let objective = prog.objective.dot(&z) + prog.objective_constant;
    let dual_objective = log.last().map(|l| l.dual_objective).unwrap_or(objective);
    Ok(SdpResult {
        z,
        slacks,
        duals: x,
        status,
        objective,
        dual_objective,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        log,
    })
}
