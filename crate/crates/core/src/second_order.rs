//! Goh-transformed second variation of the transformed problem and its positivity test.
//!
//! The transformed state is `X = (x^1, …, x^N, τ_1, …, τ_{N−1})` on `s ∈ [0, 1]`, with
//! `Ẋ = F(U, X)`, one control `U^j` per singular arc and `τ̇ = 0`. Along a linearized
//! direction `Ż = ÃZ + B̃V` the Goh variables `Y = ∫V`, `Ξ = Z − B̃Y` satisfy
//! `Ξ̇ = ÃΞ + ẼY` with `Ẽ = ÃB̃ − dB̃/ds`, and the second variation becomes
//!
//! ```text
//! Ω̃ = ½ρ(Ξ0, Ξ1, h) + ½∫ (ΞᵀH̃_XX Ξ + 2Y M̃ Ξ + Y R̃ Y) ds,
//! M̃ = B̃ᵀH̃_XX − dH̃_UX/ds − H̃_UX Ã,
//! R̃ = B̃ᵀH̃_XX B̃ − 2H̃_UX Ẽ − d(H̃_UX B̃)/ds,
//! ρ = D²ℓ̃(Ξ0, Ξ1 + B̃1 h)² + h H̃_UX(1)(2Ξ1 + B̃1 h).
//! ```
//!
//! `Y` is piecewise constant on the trajectory grid and `h` is a free endpoint value, so
//! a direction is the vector `z = (Ξ0, Y, h)` and `Ω̃(z) = zᵀ Hess z`.

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::arcs::ArcKind;
use crate::dynamics::{hamiltonian_state_gradient, TpTrajectory};
use crate::error::{Error, Result};
use crate::numdiff;
use crate::problem::{gamma_control, ControlAffineProblem, Matrix, Vector};
use crate::shooting::ShootingVector;

const FD_STEP: f64 = 1e-6;

/// Indexing of the free coordinates `z = (Ξ0, Y, h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GohLayout {
    /// Dimension of `X`, `Nn + N − 1`.
    pub nx: usize,
    /// Number of singular arcs (control channels).
    pub ns: usize,
    /// Grid intervals per arc.
    pub steps: usize,
}

impl GohLayout {
    pub fn free(&self) -> usize {
        self.nx + self.ns * self.steps + self.ns
    }

    /// Coordinate of `Y` on interval `i` of channel `j`.
    pub fn y(&self, i: usize, j: usize) -> usize {
        self.nx + i * self.ns + j
    }

    pub fn h(&self, j: usize) -> usize {
        self.nx + self.ns * self.steps + j
    }

    pub fn ds(&self) -> f64 {
        1.0 / self.steps as f64
    }
}

/// Pointwise data of the transformed problem along an extremal.
struct TpPoint<'a> {
    p: &'a dyn ControlAffineProblem,
    kinds: &'a [ArcKind],
    horizon: f64,
    n: usize,
}

impl TpPoint<'_> {
    fn arcs(&self) -> usize {
        self.kinds.len()
    }

    fn x(&self, xx: &Vector, k: usize) -> Vector {
        xx.rows(k * self.n, self.n).into_owned()
    }

    fn dt(&self, xx: &Vector, k: usize) -> f64 {
        let big_n = self.arcs();
        let tau0 = self.big_n_offset();
        let start = if k == 0 { 0.0 } else { xx[tau0 + k - 1] };
        let end = if k + 1 == big_n { self.horizon } else { xx[tau0 + k] };
        end - start
    }

    fn big_n_offset(&self) -> usize {
        self.arcs() * self.n
    }

    fn singular_arcs(&self) -> Vec<usize> {
        (0..self.arcs()).filter(|&k| self.kinds[k] == ArcKind::Singular).collect()
    }

    fn control(&self, k: usize, x: &Vector, u: &Vector) -> Result<f64> {
        let b = self.p.bounds();
        Ok(match self.kinds[k] {
            ArcKind::BMinus => b.lower.unwrap_or(0.0),
            ArcKind::BPlus => b.upper.unwrap_or(0.0),
            ArcKind::Constrained => gamma_control(self.p, x)?,
            ArcKind::Singular => u[self.singular_arcs().iter().position(|&j| j == k).expect("singular arc")],
        })
    }

    /// `F(U, X)`
    fn field(&self, u: &Vector, xx: &Vector) -> Result<Vector> {
        let mut out = Vector::zeros(xx.len());
        for k in 0..self.arcs() {
            let x = self.x(xx, k);
            let w = self.control(k, &x, u)?;
            let f = (self.p.drift(&x) + self.p.control_field(&x) * w) * self.dt(xx, k);
            out.rows_mut(k * self.n, self.n).copy_from(&f);
        }
        Ok(out)
    }

    /// `H^k` for every arc.
    fn arc_hamiltonians(&self, u: &Vector, xx: &Vector, pp: &Vector) -> Result<Vec<f64>> {
        (0..self.arcs())
            .map(|k| {
                let x = self.x(xx, k);
                let c = self.x(pp, k);
                let w = self.control(k, &x, u)?;
                Ok(c.dot(&(self.p.drift(&x) + self.p.control_field(&x) * w)))
            })
            .collect()
    }

    /// `∇_X H̃` with `H̃ = Σ dt_k H^k`.
    fn hamiltonian_gradient(&self, u: &Vector, xx: &Vector, pp: &Vector) -> Result<Vector> {
        let mut g = Vector::zeros(xx.len());
        for k in 0..self.arcs() {
            let x = self.x(xx, k);
            let c = self.x(pp, k);
            let w = self.control(k, &x, u)?;
            let gx = hamiltonian_state_gradient(self.p, self.kinds[k], &x, &c, w)? * self.dt(xx, k);
            g.rows_mut(k * self.n, self.n).copy_from(&gx);
        }
        let h = self.arc_hamiltonians(u, xx, pp)?;
        let off = self.big_n_offset();
        for m in 0..self.arcs() - 1 {
            g[off + m] = h[m] - h[m + 1];
        }
        Ok(g)
    }

    /// `H̃_UX`, one row per singular arc.
    fn hamiltonian_ux(&self, xx: &Vector, pp: &Vector) -> Matrix {
        let sing = self.singular_arcs();
        let off = self.big_n_offset();
        let mut m = Matrix::zeros(sing.len(), xx.len());
        for (j, &k) in sing.iter().enumerate() {
            let x = self.x(xx, k);
            let c = self.x(pp, k);
            let row = self.p.control_field_jacobian(&x).tr_mul(&c) * self.dt(xx, k);
            m.view_mut((j, k * self.n), (1, self.n)).copy_from(&row.transpose());
            let pf1 = c.dot(&self.p.control_field(&x));
            if k >= 1 {
                m[(j, off + k - 1)] -= pf1;
            }
            if k + 1 < self.arcs() {
                m[(j, off + k)] += pf1;
            }
        }
        m
    }
}

/// Linearized transformed problem along an extremal, sampled at the grid nodes.
#[derive(Clone, Debug)]
pub struct LinearizedData {
    pub layout: GohLayout,
    /// `Ã = F_X` per node.
    pub a: Vec<Matrix>,
    /// `B̃ = F_U` per node, `nx × ns`.
    pub b: Vec<Matrix>,
    /// `Ẽ = ÃB̃ − dB̃/ds` per node.
    pub e: Vec<Matrix>,
    /// `H̃_XX` per node (symmetrized).
    pub hxx: Vec<Matrix>,
    /// `H̃_UX` per node, `ns × nx`.
    pub hux: Vec<Matrix>,
    pub m: Vec<Matrix>,
    pub r: Vec<Matrix>,
    /// Hessian of the endpoint Lagrangian in `(X0, X1)`, `2nx × 2nx`.
    pub d2l: Matrix,
    /// Jacobian of the endpoint constraints of the transformed problem in `(X0, X1)`.
    pub dphi: Matrix,
    /// Per node, gradients of `g` on the constrained arcs embedded in `X` coordinates.
    pub constrained_rows: Vec<(usize, Vector)>,
    /// Largest entry of the antisymmetric part of `H̃_UX B̃`.
    pub goh_asymmetry: f64,
    /// Largest entry of the antisymmetric part of the finite-difference `H̃_XX`.
    pub hxx_asymmetry: f64,
}

fn node_derivative(vals: &[Matrix], i: usize, ds: f64) -> Matrix {
    let last = vals.len() - 1;
    if i == 0 {
        (&vals[1] - &vals[0]) / ds
    } else if i == last {
        (&vals[last] - &vals[last - 1]) / ds
    } else {
        (&vals[i + 1] - &vals[i - 1]) / (2.0 * ds)
    }
}

fn antisymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).amax() * 0.5
}

fn symmetric_part(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Samples `Ã, B̃, Ẽ, H̃_XX, H̃_UX, M̃, R̃` on the trajectory grid and the endpoint data.
pub fn linearize(p: &dyn ControlAffineProblem, traj: &TpTrajectory, w: &ShootingVector) -> Result<LinearizedData> {
    let kinds = &traj.structure.kinds;
    let big_n = kinds.len();
    let n = p.state_dim();
    let steps = traj.arcs[0].steps();
    if traj.arcs.iter().any(|a| a.steps() != steps) {
        return Err(Error::Assembly("all arcs must share the same grid".into()));
    }
    let tp = TpPoint { p, kinds, horizon: traj.horizon, n };
    let sing = tp.singular_arcs();
    let layout = GohLayout { nx: big_n * n + big_n - 1, ns: sing.len(), steps };
    let nx = layout.nx;
    let ds = layout.ds();

    let pack = |i: usize, costate: bool| -> Vector {
        let mut v = Vector::zeros(nx);
        for (k, arc) in traj.arcs.iter().enumerate() {
            let src = if costate { &arc.p[i] } else { &arc.x[i] };
            v.rows_mut(k * n, n).copy_from(src);
        }
        if !costate {
            for (m, &t) in traj.structure.tau.iter().enumerate() {
                v[big_n * n + m] = t;
            }
        }
        v
    };

    let (mut a, mut b, mut hxx, mut hux) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut hxx_asym: f64 = 0.0;
    for i in 0..=steps {
        let xx = pack(i, false);
        let pp = pack(i, true);
        let u = Vector::from_iterator(sing.len(), sing.iter().map(|&k| traj.arcs[k].w[i]));
        a.push(numdiff::jacobian(|y| tp.field(&u, y), &xx, FD_STEP)?);
        b.push(if sing.is_empty() { Matrix::zeros(nx, 0) } else { numdiff::jacobian(|v| tp.field(v, &xx), &u, FD_STEP)? });
        let h = numdiff::jacobian(|y| tp.hamiltonian_gradient(&u, y, &pp), &xx, FD_STEP)?;
        hxx_asym = hxx_asym.max(antisymmetry(&h));
        hxx.push(symmetric_part(&h));
        hux.push(tp.hamiltonian_ux(&xx, &pp));
    }
    let scale = 1.0 + hxx.iter().map(|m| m.amax()).fold(0.0, f64::max);
    if hxx_asym > 1e-4 * scale {
        return Err(Error::Assembly(format!("finite-difference H_XX is not symmetric (asymmetry {hxx_asym:e})")));
    }

    let hb: Vec<Matrix> = hux.iter().zip(&b).map(|(h, b)| h * b).collect();
    let goh_asymmetry = hb.iter().map(antisymmetry).fold(0.0, f64::max);
    let mut e = Vec::new();
    let mut m = Vec::new();
    let mut r = Vec::new();
    for i in 0..=steps {
        let ei = &a[i] * &b[i] - node_derivative(&b, i, ds);
        let mi = b[i].tr_mul(&hxx[i]) - node_derivative(&hux, i, ds) - &hux[i] * &a[i];
        let ri = b[i].tr_mul(&hxx[i]) * &b[i] - &hux[i] * &ei * 2.0 - node_derivative(&hb, i, ds);
        r.push(symmetric_part(&ri));
        m.push(mi);
        e.push(ei);
    }

    let (d2l, dphi) = endpoint_data(p, kinds, w, &pack(0, false), &pack(steps, false), n)?;

    let mut constrained_rows = Vec::new();
    for (k, arc) in traj.arcs.iter().enumerate() {
        if arc.kind == ArcKind::Constrained {
            for (i, x) in arc.x.iter().enumerate() {
                let mut row = Vector::zeros(nx);
                row.rows_mut(k * n, n).copy_from(&p.constraint_gradient(x));
                constrained_rows.push((i, row));
            }
        }
    }

    Ok(LinearizedData { layout, a, b, e, hxx, hux, m, r, d2l, dphi, constrained_rows, goh_asymmetry, hxx_asymmetry: hxx_asym })
}

/// Hessian of `ℓ̃ = φ + Ψ·Φ + Σ γ_k g(x0^k)` and Jacobian of
/// `Φ̃ = (Φ, g(x0^k) for k ∈ C, x1^k − x0^{k+1})`, both in `(X0, X1)`.
fn endpoint_data(
    p: &dyn ControlAffineProblem,
    kinds: &[ArcKind],
    w: &ShootingVector,
    x0: &Vector,
    x1: &Vector,
    n: usize,
) -> Result<(Matrix, Matrix)> {
    let big_n = kinds.len();
    let nx = x0.len();
    let constrained: Vec<usize> = (0..big_n).filter(|&k| kinds[k] == ArcKind::Constrained).collect();
    let split = |z: &Vector| (z.rows(0, nx).into_owned(), z.rows(nx, nx).into_owned());
    let arc = |xx: &Vector, k: usize| xx.rows(k * n, n).into_owned();

    let grad = |z: &Vector| -> Result<Vector> {
        let (a, b) = split(z);
        let (xa, xb) = (arc(&a, 0), arc(&b, big_n - 1));
        let (g0, g1) = p.cost_gradient(&xa, &xb);
        let (j0, j1) = p.endpoint_jacobian(&xa, &xb);
        let mut out = Vector::zeros(2 * nx);
        out.rows_mut(0, n).copy_from(&(g0 + j0.tr_mul(&w.psi)));
        for (j, &k) in constrained.iter().enumerate() {
            let dg = p.constraint_gradient(&arc(&a, k)) * w.gamma[j];
            let mut blk = out.rows_mut(k * n, n);
            blk += dg;
        }
        out.rows_mut(nx + (big_n - 1) * n, n).copy_from(&(g1 + j1.tr_mul(&w.psi)));
        Ok(out)
    };
    let cons = |z: &Vector| -> Result<Vector> {
        let (a, b) = split(z);
        let mut out: Vec<f64> = p.endpoint(&arc(&a, 0), &arc(&b, big_n - 1)).iter().copied().collect();
        for &k in &constrained {
            out.push(p.constraint(&arc(&a, k)));
        }
        for k in 0..big_n - 1 {
            out.extend((arc(&b, k) - arc(&a, k + 1)).iter());
        }
        Ok(Vector::from_vec(out))
    };
    let mut z = Vector::zeros(2 * nx);
    z.rows_mut(0, nx).copy_from(x0);
    z.rows_mut(nx, nx).copy_from(x1);
    let d2l = symmetric_part(&numdiff::jacobian(grad, &z, FD_STEP)?);
    let dphi = numdiff::jacobian(cons, &z, FD_STEP)?;
    Ok((d2l, dphi))
}

/// Integrates `Ẇ = Ã W + Forcing_i · drive(i)` over the grid with RK4, the matrices
/// being linearly interpolated inside each interval. Returns `W` at every node.
fn propagate(a: &[Matrix], forcing: &[Matrix], drive: &dyn Fn(usize) -> Matrix, start: Matrix, ds: f64) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(a.len());
    let mut w = start;
    out.push(w.clone());
    for i in 0..a.len() - 1 {
        let d = drive(i);
        let am = (&a[i] + &a[i + 1]) * 0.5;
        let f0 = &forcing[i] * &d;
        let fm = (&forcing[i] + &forcing[i + 1]) * 0.5 * &d;
        let f1 = &forcing[i + 1] * &d;
        let k1 = &a[i] * &w + &f0;
        let k2 = &am * (&w + &k1 * (0.5 * ds)) + &fm;
        let k3 = &am * (&w + &k2 * (0.5 * ds)) + &fm;
        let k4 = &a[i + 1] * (&w + &k3 * ds) + &f1;
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (ds / 6.0);
        out.push(w.clone());
    }
    out
}

/// Maps from `z` to `Ξ` at every node: `Ξ_i = G_i z`.
pub fn xi_maps(lin: &LinearizedData) -> Vec<Matrix> {
    let l = lin.layout;
    let nf = l.free();
    let mut start = Matrix::zeros(l.nx, nf);
    start.view_mut((0, 0), (l.nx, l.nx)).fill_with_identity();
    let drive = |i: usize| {
        let mut s = Matrix::zeros(l.ns, nf);
        for j in 0..l.ns {
            s[(j, l.y(i, j))] = 1.0;
        }
        s
    };
    propagate(&lin.a, &lin.e, &drive, start, l.ds())
}

/// Symmetric matrix, constraints and Gram matrix of the discretized `Ω̃`.
#[derive(Clone, Debug)]
pub struct QuadraticFormData {
    pub layout: GohLayout,
    /// `Ω̃(z) = zᵀ Hess z`.
    pub hess: Matrix,
    /// Linearized endpoint constraints in `z`, followed by the constrained-arc rows.
    pub cons: Matrix,
    /// Diagonal of the Gram matrix of `|Ξ0|² + ∫|Y|² + |h|²`.
    pub gram: Vector,
    pub goh_asymmetry: f64,
}

impl QuadraticFormData {
    pub fn omega(&self, z: &Vector) -> f64 {
        z.dot(&(&self.hess * z))
    }
}

pub fn assemble_omega(lin: &LinearizedData) -> Result<QuadraticFormData> {
    let l = lin.layout;
    let (nx, ns, steps) = (l.nx, l.ns, l.steps);
    let nf = l.free();
    let ds = l.ds();
    let g = xi_maps(lin);

    let y_sel = |i: usize| {
        let mut s = Matrix::zeros(ns, nf);
        for j in 0..ns {
            s[(j, l.y(i, j))] = 1.0;
        }
        s
    };
    let mut h_sel = Matrix::zeros(ns, nf);
    for j in 0..ns {
        h_sel[(j, l.h(j))] = 1.0;
    }

    // ½∫ with the trapezoidal rule; Y is constant on each interval, so each node sees
    // the Y values of its neighbouring intervals
    let mut hess = Matrix::zeros(nf, nf);
    for i in 0..=steps {
        let wt = if i == 0 || i == steps { 0.5 * ds } else { ds };
        let gi = &g[i];
        hess += gi.tr_mul(&(&lin.hxx[i] * gi)) * (0.5 * wt);
        let mg = &lin.m[i] * gi;
        for iv in [i.checked_sub(1), (i < steps).then_some(i)].into_iter().flatten() {
            let s = y_sel(iv);
            let cross = s.tr_mul(&mg) * (0.5 * 0.5 * ds);
            hess += &cross + cross.transpose();
        }
    }
    for i in 0..steps {
        let s = y_sel(i);
        let rbar = (&lin.r[i] + &lin.r[i + 1]) * 0.5;
        hess += s.tr_mul(&(rbar * &s)) * (0.5 * ds);
    }

    // ½ρ
    let end = &g[steps] + &lin.b[steps] * &h_sel;
    let mut ends = Matrix::zeros(2 * nx, nf);
    ends.view_mut((0, 0), (nx, nf)).copy_from(&g[0]);
    ends.view_mut((nx, 0), (nx, nf)).copy_from(&end);
    hess += ends.tr_mul(&(&lin.d2l * &ends)) * 0.5;
    let tail = h_sel.tr_mul(&(&lin.hux[steps] * (&g[steps] * 2.0 + &lin.b[steps] * &h_sel)));
    hess += symmetric_part(&tail) * 0.5;
    let hess = symmetric_part(&hess);

    let mut rows: Vec<Vector> = (&lin.dphi * &ends).row_iter().map(|r| r.transpose()).collect();
    for (i, row) in &lin.constrained_rows {
        rows.push(g[*i].tr_mul(row));
    }
    let mut cons = Matrix::zeros(rows.len(), nf);
    for (r, row) in rows.iter().enumerate() {
        cons.set_row(r, &row.transpose());
    }

    let mut gram = Vector::from_element(nf, 1.0);
    for i in 0..steps {
        for j in 0..ns {
            gram[l.y(i, j)] = ds;
        }
    }
    Ok(QuadraticFormData { layout: l, hess, cons, gram, goh_asymmetry: lin.goh_asymmetry })
}

/// Orthonormal basis of `{z : C z = 0}`; singular values below `rcond·σ_max` count as zero.
pub fn nullspace(c: &Matrix, cols: usize, rcond: f64) -> Matrix {
    if c.nrows() == 0 {
        return Matrix::identity(cols, cols);
    }
    let padded = if c.nrows() < cols {
        let mut m = Matrix::zeros(cols, cols);
        m.view_mut((0, 0), c.shape()).copy_from(c);
        m
    } else {
        c.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.amax();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= rcond * smax).collect();
    let mut basis = Matrix::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &vt.row(i).transpose());
    }
    basis
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// Smallest generalized eigenvalue of `Ω̃` against the order function on the cone.
    pub c_est: f64,
    pub nullspace_dim: usize,
    pub goh_asymmetry: f64,
    pub pass: bool,
    /// Largest generalized eigenvalue magnitude, the scale of the pass margin.
    pub lambda_max: f64,
    /// Same estimate with the endpoint values `h` fixed to zero.
    pub c_est_without_h: Option<f64>,
    pub warning: Option<String>,
}

/// Extreme generalized eigenvalues of `(H, diag(gram))` restricted to `ker C`.
pub fn reduced_spectrum(hess: &Matrix, cons: &Matrix, gram: &Vector) -> Result<Option<(f64, f64, usize)>> {
    let basis = nullspace(cons, hess.ncols(), 1e-9);
    let d = basis.ncols();
    if d == 0 {
        return Ok(None);
    }
    let gb = Matrix::from_diagonal(gram) * &basis;
    let gr = symmetric_part(&basis.tr_mul(&gb));
    let hr = symmetric_part(&basis.tr_mul(&(hess * &basis)));
    let chol = Cholesky::new(gr).ok_or_else(|| Error::Assembly("reduced Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_h = l.solve_lower_triangular(&hr).ok_or_else(|| Error::Assembly("singular Gram factor".into()))?;
    let m = l
        .solve_lower_triangular(&linv_h.transpose())
        .ok_or_else(|| Error::Assembly("singular Gram factor".into()))?;
    let eig = SymmetricEigen::new(symmetric_part(&m)).eigenvalues;
    Ok(Some((eig.min(), eig.amax(), d)))
}

/// Uniform positivity of `Ω̃` on the discretized critical cone.
pub fn check_positivity(q: &QuadraticFormData) -> Result<PositivityReport> {
    let Some((c_est, lambda_max, dim)) = reduced_spectrum(&q.hess, &q.cons, &q.gram)? else {
        return Ok(PositivityReport {
            c_est: f64::INFINITY,
            nullspace_dim: 0,
            goh_asymmetry: q.goh_asymmetry,
            pass: true,
            lambda_max: 0.0,
            c_est_without_h: None,
            warning: Some("critical cone is {0}; positivity holds vacuously".into()),
        });
    };
    let l = q.layout;
    let c_est_without_h = if l.ns > 0 {
        let mut cons = q.cons.clone().insert_rows(q.cons.nrows(), l.ns, 0.0);
        for j in 0..l.ns {
            cons[(q.cons.nrows() + j, l.h(j))] = 1.0;
        }
        reduced_spectrum(&q.hess, &cons, &q.gram)?.map(|(c, _, _)| c)
    } else {
        None
    };
    Ok(PositivityReport {
        c_est,
        nullspace_dim: dim,
        goh_asymmetry: q.goh_asymmetry,
        pass: c_est > 1e-6 * lambda_max,
        lambda_max,
        c_est_without_h,
        warning: None,
    })
}

/// `Q̃(V, Z) = ½D²ℓ̃(Z0, Z1)² + ½∫(ZᵀH̃_XX Z + 2V H̃_UX Z) ds` for piecewise-constant `V`
/// (`ns × steps`), with `Z` integrated from `z0` along `Ż = ÃZ + B̃V`.
pub fn q_tilde(lin: &LinearizedData, z0: &Vector, v: &Matrix) -> f64 {
    let l = lin.layout;
    let ds = l.ds();
    let drive = |i: usize| Matrix::from_column_slice(l.ns, 1, v.column(i).into_owned().as_slice());
    let zs = propagate(&lin.a, &lin.b, &drive, Matrix::from_column_slice(l.nx, 1, z0.as_slice()), ds);
    let z: Vec<Vector> = zs.iter().map(|m| m.column(0).into_owned()).collect();
    let mut ends = Vector::zeros(2 * l.nx);
    ends.rows_mut(0, l.nx).copy_from(&z[0]);
    ends.rows_mut(l.nx, l.nx).copy_from(&z[l.steps]);
    let mut total = 0.5 * ends.dot(&(&lin.d2l * &ends));
    for i in 0..=l.steps {
        let wt = if i == 0 || i == l.steps { 0.5 * ds } else { ds };
        total += 0.5 * wt * z[i].dot(&(&lin.hxx[i] * &z[i]));
    }
    for i in 0..l.steps {
        let vh = v.column(i).transpose();
        let cross = (&vh * (&lin.hux[i] * &z[i]))[0] + (&vh * (&lin.hux[i + 1] * &z[i + 1]))[0];
        total += 0.5 * ds * cross;
    }
    total
}

/// Goh coordinates `z = (Z0, Y, Y(1))` of a piecewise-constant `V`, with `Y` sampled at
/// interval midpoints.
pub fn goh_coordinates(layout: &GohLayout, z0: &Vector, v: &Matrix) -> Vector {
    let ds = layout.ds();
    let mut z = Vector::zeros(layout.free());
    z.rows_mut(0, layout.nx).copy_from(z0);
    for j in 0..layout.ns {
        let mut acc = 0.0;
        for i in 0..layout.steps {
            z[layout.y(i, j)] = acc + 0.5 * ds * v[(j, i)];
            acc += ds * v[(j, i)];
        }
        z[layout.h(j)] = acc;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{Regulator, ToyBang};
    use crate::shooting::Shooting;

    fn regulator(steps: usize) -> (Regulator, TpTrajectory, ShootingVector) {
        let reg = Regulator::default();
        let w = reg.exact_omega();
        let traj = Shooting::new(&reg, reg.structure().kinds, steps).unwrap().trajectory(&w).unwrap();
        (reg, traj, w)
    }

    #[test]
    fn regulator_linearization_matches_hand_jacobian() {
        let (_, traj, w) = regulator(40);
        let lin = linearize(&Regulator::default(), &traj, &w).unwrap();
        assert_eq!(lin.layout, GohLayout { nx: 11, ns: 1, steps: 40 });
        let i = 17;
        let dts = [1.2, 1.4, 2.4];
        let mut exact = Matrix::zeros(11, 11);
        for k in 0..3 {
            let x = &traj.arcs[k].x[i];
            let u = traj.arcs[k].w[i];
            let o = 3 * k;
            exact[(o, o + 1)] = dts[k];
            exact[(o + 2, o)] = dts[k] * x[0];
            exact[(o + 2, o + 1)] = dts[k] * x[1];
            let f = [x[1], u, 0.5 * (x[0] * x[0] + x[1] * x[1])];
            for r in 0..3 {
                if k < 2 {
                    exact[(o + r, 9 + k)] += f[r];
                }
                if k > 0 {
                    exact[(o + r, 9 + k - 1)] -= f[r];
                }
            }
        }
        assert!((&lin.a[i] - exact).amax() < 1e-7);
        // the singular channel drives ẋ2 of the last arc
        assert!((lin.b[i][(7, 0)] - 2.4).abs() < 1e-9);
        assert_eq!(lin.b[i].iter().filter(|v| v.abs() > 1e-12).count(), 1);
        assert!(lin.goh_asymmetry < 1e-10);
    }

    #[test]
    fn bang_problem_has_no_control_directions() {
        let toy = ToyBang;
        let w = toy.exact_omega();
        let traj = Shooting::new(&toy, toy.structure().kinds, 10).unwrap().trajectory(&w).unwrap();
        let lin = linearize(&toy, &traj, &w).unwrap();
        assert_eq!(lin.a[3].amax(), 0.0);
        assert_eq!(lin.layout.free(), 1);
        let q = assemble_omega(&lin).unwrap();
        // Φ = x0 pins the only coordinate
        let rep = check_positivity(&q).unwrap();
        assert_eq!(rep.nullspace_dim, 0);
        assert!(rep.pass && rep.warning.is_some());
    }

    #[test]
    fn zero_direction_and_symmetry() {
        let (reg, traj, w) = regulator(30);
        let q = assemble_omega(&linearize(&reg, &traj, &w).unwrap()).unwrap();
        assert_eq!(q.omega(&Vector::zeros(q.layout.free())), 0.0);
        assert!((&q.hess - q.hess.transpose()).amax() < 1e-12);
    }

    #[test]
    fn transformation_identity_with_nonzero_ux_term() {
        // perturbed costates make H_UX nonzero, exercising the M̃, R̃ and ρ corrections
        let reg = Regulator::default();
        let mut w = reg.exact_omega();
        w.p0[2][1] = 0.3;
        w.p0[2][0] += 0.1;
        let traj = Shooting::new(&reg, reg.structure().kinds, 200).unwrap().trajectory(&w).unwrap();
        let lin = linearize(&reg, &traj, &w).unwrap();
        assert!(lin.hux.iter().any(|h| h.amax() > 0.1));
        let q = assemble_omega(&lin).unwrap();
        let l = lin.layout;
        let z0 = Vector::from_fn(l.nx, |i, _| ((i * 7 + 3) % 5) as f64 * 0.2 - 0.4);
        let v = Matrix::from_fn(l.ns, l.steps, |_, i| (6.0 * i as f64 / l.steps as f64).sin() + 0.5);
        let qt = q_tilde(&lin, &z0, &v);
        let om = q.omega(&goh_coordinates(&l, &z0, &v));
        assert!((qt - om).abs() <= 1e-3 * qt.abs().max(om.abs()), "{qt} vs {om}");
    }

    #[test]
    fn identity_form_has_unit_constant() {
        let h = Matrix::identity(3, 3);
        let (c, lmax, d) = reduced_spectrum(&h, &Matrix::zeros(0, 3), &Vector::from_element(3, 1.0)).unwrap().unwrap();
        assert!((c - 1.0).abs() < 1e-14 && (lmax - 1.0).abs() < 1e-14 && d == 3);
    }

    #[test]
    fn indefinite_direction_in_the_kernel_is_found() {
        // diag(1, −1, 2) with z1 = 0: the kernel is span(e2, e3) and contains e2
        let h = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0, 2.0]));
        let c = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let (cmin, _, d) = reduced_spectrum(&h, &c, &Vector::from_element(3, 1.0)).unwrap().unwrap();
        assert_eq!(d, 2);
        assert!((cmin + 1.0).abs() < 1e-12);
        // with z2 = 0 as well only e3 remains
        let c = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let (cmin, _, _) = reduced_spectrum(&h, &c, &Vector::from_element(3, 1.0)).unwrap().unwrap();
        assert!((cmin - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_is_basis_independent() {
        let h = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let c = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let gram = Vector::from_vec(vec![1.0, 0.5, 2.0]);
        let a = reduced_spectrum(&h, &c, &gram).unwrap().unwrap();
        let b = reduced_spectrum(&h, &(c * 3.0), &gram).unwrap().unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    }
}
