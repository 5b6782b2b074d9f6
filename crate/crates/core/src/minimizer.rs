//! Constrained minimization of the discrete stored energy over interior
//! nodal positions with Dirichlet boundary data.
//!
//! The augmented objective per element is
//!   |T| [ W(x_T, F_T) - eps log det F_T + beta ramp(K_T - M_T)^2 ]
//! plus the optional body-force term. Positivity of every element Jacobian
//! is maintained by a fraction-to-boundary cap on the line search (the step
//! stops short of the first root of det along the direction), and the
//! barrier weight eps is driven down geometrically over outer continuation
//! rounds. The inner iteration is plain gradient descent with a
//! Barzilai-Borwein trial step and Armijo backtracking; every accept/reject
//! decision lands in the trace.

use crate::admissibility::BoundField;
use crate::energy::EnergyDensity;
use crate::mesh::{
    element_gradients, interpolate_boundary, BodyForce, BoundaryData, BoundaryError, Deformation,
    EnergyDomainError, MeshError, SimplicialMesh,
};
use crate::sampling::trial_rng;
use crate::tensor::{sym_eigen, Mat, NormKind};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MinimizeError {
    #[error("infeasible start: element {element} has nonpositive determinant")]
    InfeasibleStart { element: usize },
    #[error("boundary data rejected: {reason}")]
    SetupRejected { reason: String },
    #[error("line search failed to find sufficient decrease after {backtracks} backtracks at iteration {iteration}")]
    LineSearchFailure {
        iteration: usize,
        backtracks: usize,
        trace: Box<MinimizationTrace>,
    },
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Energy(#[from] EnergyDomainError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Step-size, barrier and termination parameters.
#[derive(Debug, Clone)]
pub struct MinimizerConfig {
    /// Initial log-det barrier weight (eps >= 0; 0 disables the barrier).
    pub eps_start: f64,
    /// Final barrier weight of the continuation.
    pub eps_min: f64,
    /// Geometric factor applied to eps per outer round.
    pub eps_shrink: f64,
    /// Distortion penalty weight (used when a bound field is present).
    pub beta: f64,
    /// Fraction-to-boundary parameter in (0, 1).
    pub tau: f64,
    /// Relative gradient tolerance.
    pub grad_tol: f64,
    /// Total inner-iteration budget across all continuation rounds.
    pub max_iterations: usize,
    /// Backtracking shrink factor in (0, 1).
    pub backtrack_shrink: f64,
    /// Sufficient-decrease constant in (0, 1).
    pub armijo_c: f64,
    pub max_backtracks: usize,
    pub seed: u64,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        MinimizerConfig {
            eps_start: 1e-2,
            eps_min: 1e-8,
            eps_shrink: 0.1,
            beta: 1e2,
            tau: 0.9,
            grad_tol: 1e-8,
            max_iterations: 100_000,
            backtrack_shrink: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 60,
            seed: 0,
        }
    }
}

impl MinimizerConfig {
    pub fn validate(&self) -> Result<(), MinimizeError> {
        let reject = |reason: String| Err(MinimizeError::SetupRejected { reason });
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return reject(format!("tau = {} must lie in (0, 1)", self.tau));
        }
        if self.grad_tol <= 0.0 {
            return reject(format!("grad_tol = {} must be positive", self.grad_tol));
        }
        if self.eps_start < 0.0 || self.eps_min < 0.0 || self.eps_min > self.eps_start {
            return reject(format!(
                "barrier weights need 0 <= eps_min <= eps_start, got {} and {}",
                self.eps_min, self.eps_start
            ));
        }
        if !(self.eps_shrink > 0.0 && self.eps_shrink < 1.0) {
            return reject(format!("eps_shrink = {} must lie in (0, 1)", self.eps_shrink));
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return reject(format!(
                "backtrack_shrink = {} must lie in (0, 1)",
                self.backtrack_shrink
            ));
        }
        if self.beta < 0.0 {
            return reject(format!("beta = {} must be nonnegative", self.beta));
        }
        Ok(())
    }
}

/// One accepted iterate.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Stored energy (plus body force), without barrier or penalty terms.
    pub energy: f64,
    pub augmented: f64,
    pub grad_inf: f64,
    pub step: f64,
    pub backtracks: usize,
    pub min_det: f64,
    /// max over elements of K/M; 0 when no bound field is attached.
    pub max_km_ratio: f64,
    pub barrier_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminationReason {
    Converged,
    IterationCap,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct MinimizationTrace {
    pub records: Vec<IterationRecord>,
    pub termination: TerminationReason,
    pub final_energy: f64,
    pub final_grad_inf: f64,
}

// ---------------------------------------------------------------------------
// objective machinery
// ---------------------------------------------------------------------------

struct ElementData {
    verts: Vec<usize>,
    e_inv: Mat,
    ref_vol: f64,
    centroid: [f64; 3],
}

pub(crate) struct Objective<'a> {
    mesh: &'a SimplicialMesh,
    energy: &'a EnergyDensity,
    bound: Option<&'a BoundField>,
    theta: Option<&'a BodyForce>,
    norm: NormKind,
    elems: Vec<ElementData>,
    is_interior: Vec<bool>,
}

struct ElementEval {
    augmented: f64,
    energy: f64,
    det: f64,
    km: f64,
}

impl<'a> Objective<'a> {
    fn new(
        mesh: &'a SimplicialMesh,
        energy: &'a EnergyDensity,
        bound: Option<&'a BoundField>,
        theta: Option<&'a BodyForce>,
        norm: NormKind,
    ) -> Result<Objective<'a>, MeshError> {
        let n = mesh.dim();
        let mut elems = Vec::with_capacity(mesh.num_elements());
        for e in 0..mesh.num_elements() {
            let el = mesh.element(e).to_vec();
            let x0 = mesh.vertex(el[0]);
            let mut edge = Mat::zeros(n);
            for c in 0..n {
                let xc = mesh.vertex(el[c + 1]);
                for r in 0..n {
                    edge.set(r, c, xc[r] - x0[r]);
                }
            }
            let det = edge.determinant();
            if det <= 0.0 {
                return Err(MeshError::DegenerateElement {
                    element: e,
                    volume: det,
                });
            }
            elems.push(ElementData {
                verts: el,
                e_inv: edge.adjugate().scale(1.0 / det),
                ref_vol: det / if n == 2 { 2.0 } else { 6.0 },
                centroid: mesh.centroid(e),
            });
        }
        let mut is_interior = vec![true; mesh.num_vertices()];
        for &b in mesh.boundary_nodes() {
            is_interior[b] = false;
        }
        Ok(Objective {
            mesh,
            energy,
            bound,
            theta,
            norm,
            elems,
            is_interior,
        })
    }

    fn dim(&self) -> usize {
        self.mesh.dim()
    }

    fn gradient_f(&self, images: &[f64], elem: &ElementData) -> Mat {
        let n = self.dim();
        let y0 = &images[elem.verts[0] * n..elem.verts[0] * n + n];
        let mut y = Mat::zeros(n);
        for c in 0..n {
            let yc = &images[elem.verts[c + 1] * n..elem.verts[c + 1] * n + n];
            for r in 0..n {
                y.set(r, c, yc[r] - y0[r]);
            }
        }
        y.matmul(&elem.e_inv)
    }

    fn eval_element(&self, images: &[f64], e: usize, eps: f64, beta: f64) -> Option<ElementEval> {
        let n = self.dim();
        let elem = &self.elems[e];
        let f = self.gradient_f(images, elem);
        let det = f.determinant();
        if det <= 0.0 {
            return None;
        }
        let w = self.energy.eval(&elem.centroid[..n], &f).ok()?;
        let mut aug = w - eps * det.ln();
        let mut km = 0.0;
        if let Some(bound) = self.bound {
            let k = f.norm(self.norm).powi(n as i32) / det;
            let m = bound.value(e);
            km = k / m;
            let excess = (k - m).max(0.0);
            aug += beta * excess * excess;
        }
        let mut energy = w;
        if let Some(bf) = self.theta {
            let mut yc = [0.0; 3];
            for &v in &elem.verts {
                for r in 0..n {
                    yc[r] += images[v * n + r];
                }
            }
            for y in yc.iter_mut() {
                *y /= elem.verts.len() as f64;
            }
            let t = bf.eval(&elem.centroid[..n], &yc[..n]);
            aug += t;
            energy += t;
        }
        Some(ElementEval {
            augmented: aug * elem.ref_vol,
            energy: energy * elem.ref_vol,
            det,
            km,
        })
    }

    /// Augmented objective, stored energy, min det and max K/M; `None` if
    /// any element leaves the feasible region or the energy domain.
    fn evaluate(&self, images: &[f64], eps: f64, beta: f64) -> Option<(f64, f64, f64, f64)> {
        let evals: Vec<Option<ElementEval>> = (0..self.elems.len())
            .into_par_iter()
            .map(|e| self.eval_element(images, e, eps, beta))
            .collect();
        let mut aug = 0.0;
        let mut aug_c = 0.0;
        let mut en = 0.0;
        let mut en_c = 0.0;
        let mut min_det = f64::INFINITY;
        let mut max_km = 0.0f64;
        for ev in evals {
            let ev = ev?;
            let y = ev.augmented - aug_c;
            let t = aug + y;
            aug_c = (t - aug) - y;
            aug = t;
            let y = ev.energy - en_c;
            let t = en + y;
            en_c = (t - en) - y;
            en = t;
            min_det = min_det.min(ev.det);
            max_km = max_km.max(ev.km);
        }
        Some((aug, en, min_det, max_km))
    }

    /// Gradient of the augmented objective with respect to all nodal
    /// positions; boundary entries are zeroed.
    fn gradient(&self, images: &[f64], eps: f64, beta: f64) -> Result<Vec<f64>, EnergyDomainError> {
        let n = self.dim();
        let per_element: Vec<Result<(Mat, Option<[f64; 3]>), EnergyDomainError>> = (0..self.elems.len())
            .into_par_iter()
            .map(|e| {
                let elem = &self.elems[e];
                let f = self.gradient_f(images, elem);
                let det = f.determinant();
                if det <= 0.0 {
                    return Err(EnergyDomainError {
                        element: e,
                        source: crate::energy::EnergyError::NonpositiveDeterminant { det },
                    });
                }
                let mut g = self
                    .energy
                    .grad(&elem.centroid[..n], &f)
                    .map_err(|source| EnergyDomainError { element: e, source })?;
                let cof = f.cofactor();
                if eps > 0.0 {
                    g = g.add(&cof.scale(-eps / det));
                }
                if let Some(bound) = self.bound {
                    let k = f.norm(self.norm).powi(n as i32) / det;
                    let m = bound.value(e);
                    if k > m && beta > 0.0 {
                        let dk = self.distortion_gradient(&f, det, k);
                        g = g.add(&dk.scale(2.0 * beta * (k - m)));
                    }
                }
                let mut theta_grad: Option<[f64; 3]> = None;
                if let Some(bf) = self.theta {
                    let mut yc = [0.0; 3];
                    for &v in &elem.verts {
                        for r in 0..n {
                            yc[r] += images[v * n + r];
                        }
                    }
                    for y in yc.iter_mut() {
                        *y /= elem.verts.len() as f64;
                    }
                    let mut gt = [0.0; 3];
                    bf.grad_y(&elem.centroid[..n], &yc[..n], &mut gt);
                    theta_grad = Some(gt);
                }
                // nodal scatter matrix: columns give the gradients at the
                // non-base vertices
                let p = g.matmul(&elem.e_inv.transpose()).scale(elem.ref_vol);
                Ok((p, theta_grad))
            })
            .collect();
        let mut grad = vec![0.0; images.len()];
        for (e, res) in per_element.into_iter().enumerate() {
            let (p, theta_grad) = res?;
            let elem = &self.elems[e];
            for r in 0..n {
                let mut base = 0.0;
                for c in 0..n {
                    let v = elem.verts[c + 1];
                    grad[v * n + r] += p.get(r, c);
                    base -= p.get(r, c);
                }
                grad[elem.verts[0] * n + r] += base;
            }
            if let Some(gt) = theta_grad {
                let share = elem.ref_vol / elem.verts.len() as f64;
                for &v in &elem.verts {
                    for r in 0..n {
                        grad[v * n + r] += share * gt[r];
                    }
                }
            }
        }
        for (i, inter) in self.is_interior.iter().enumerate() {
            if !inter {
                for r in 0..n {
                    grad[i * n + r] = 0.0;
                }
            }
        }
        Ok(grad)
    }

    /// d/dF of K = |F|^n / det F.
    fn distortion_gradient(&self, f: &Mat, det: f64, k: f64) -> Mat {
        let n = self.dim();
        let cof = f.cofactor();
        match self.norm {
            NormKind::Operator => {
                let (mu, vecs) = sym_eigen(&f.gram());
                let sigma1 = mu[0].max(0.0).sqrt().max(1e-300);
                // u1 v1^T = F v1 v1^T / sigma1
                let mut v1v1 = Mat::zeros(n);
                for a in 0..n {
                    for b in 0..n {
                        v1v1.set(a, b, vecs.get(a, 0) * vecs.get(b, 0));
                    }
                }
                let uvt = f.matmul(&v1v1).scale(1.0 / sigma1);
                uvt.scale(n as f64 * sigma1.powi(n as i32 - 1) / det)
                    .add(&cof.scale(-k / det))
            }
            NormKind::Frobenius => {
                let fr = f.frobenius_norm().max(1e-300);
                f.scale(n as f64 * fr.powi(n as i32 - 2) / det)
                    .add(&cof.scale(-k / det))
            }
        }
    }

    /// Fraction-to-boundary bound: tau times the smallest positive root of
    /// any element determinant along the direction, capped at 1e6 when no
    /// positive root exists.
    fn max_feasible_step(&self, images: &[f64], direction: &[f64], tau: f64) -> f64 {
        let n = self.dim();
        let roots: Vec<f64> = self
            .elems
            .par_iter()
            .map(|elem| {
                let f = self.gradient_f(images, elem);
                let df = {
                    let d0 = &direction[elem.verts[0] * n..elem.verts[0] * n + n];
                    let mut dy = Mat::zeros(n);
                    for c in 0..n {
                        let dc = &direction[elem.verts[c + 1] * n..elem.verts[c + 1] * n + n];
                        for r in 0..n {
                            dy.set(r, c, dc[r] - d0[r]);
                        }
                    }
                    dy.matmul(&elem.e_inv)
                };
                // det(F + t dF) coefficients via adjugate contractions
                let c0 = f.determinant();
                let c1 = trace_product(&f.adjugate(), &df);
                match n {
                    2 => smallest_positive_root(&[c0, c1, df.determinant()]),
                    3 => {
                        let c2 = trace_product(&df.adjugate(), &f);
                        smallest_positive_root(&[c0, c1, c2, df.determinant()])
                    }
                    _ => unreachable!(),
                }
                .unwrap_or(f64::INFINITY)
            })
            .collect();
        let min_root = roots.into_iter().fold(f64::INFINITY, f64::min);
        if min_root.is_finite() {
            tau * min_root
        } else {
            1e6
        }
    }
}

fn trace_product(a: &Mat, b: &Mat) -> f64 {
    let n = a.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a.get(i, j) * b.get(j, i);
        }
    }
    acc
}

/// Smallest strictly positive real root of `c[0] + c[1] t + c[2] t^2 (+
/// c[3] t^3)`; `None` when there is none. The constant term is positive in
/// every call site (current determinant).
fn smallest_positive_root(c: &[f64]) -> Option<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let c: Vec<f64> = c.iter().map(|v| v / scale).collect();
    let mut roots: Vec<f64> = Vec::with_capacity(3);
    match c.len() {
        3 => quadratic_roots(c[0], c[1], c[2], &mut roots),
        4 => cubic_roots(c[0], c[1], c[2], c[3], &mut roots),
        _ => unreachable!(),
    }
    let poly = |t: f64| -> f64 {
        let mut acc = 0.0;
        for k in (0..c.len()).rev() {
            acc = acc * t + c[k];
        }
        acc
    };
    let dpoly = |t: f64| -> f64 {
        let mut acc = 0.0;
        for k in (1..c.len()).rev() {
            acc = acc * t + k as f64 * c[k];
        }
        acc
    };
    let mut best: Option<f64> = None;
    for &r in &roots {
        if !r.is_finite() || r <= 0.0 {
            continue;
        }
        // polish
        let mut t = r;
        for _ in 0..3 {
            let d = dpoly(t);
            if d.abs() > 1e-300 {
                t -= poly(t) / d;
            }
        }
        if t > 0.0 && (best.is_none() || t < best.unwrap()) {
            best = Some(t);
        }
    }
    best
}

fn quadratic_roots(c0: f64, c1: f64, c2: f64, out: &mut Vec<f64>) {
    if c2.abs() < 1e-14 {
        if c1.abs() > 1e-300 {
            out.push(-c0 / c1);
        }
        return;
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (c1 + c1.signum() * sq);
    if q != 0.0 {
        out.push(q / c2);
        out.push(c0 / q);
    } else {
        out.push(0.0);
    }
}

fn cubic_roots(c0: f64, c1: f64, c2: f64, c3: f64, out: &mut Vec<f64>) {
    if c3.abs() < 1e-14 {
        quadratic_roots(c0, c1, c2, out);
        return;
    }
    // normalized: t^3 + a t^2 + b t + c
    let a = c2 / c3;
    let b = c1 / c3;
    let c = c0 / c3;
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let q3 = q * q * q;
    if r * r < q3 {
        let theta = (r / q3.sqrt()).clamp(-1.0, 1.0).acos();
        let m = -2.0 * q.sqrt();
        for k in 0..3 {
            out.push(m * ((theta + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - a / 3.0);
        }
    } else {
        let s = -(r.signum()) * (r.abs() + (r * r - q3).sqrt()).cbrt();
        let t = if s != 0.0 { q / s } else { 0.0 };
        out.push(s + t - a / 3.0);
    }
}

// ---------------------------------------------------------------------------
// public operations
// ---------------------------------------------------------------------------

/// Gradient of the augmented objective with respect to interior nodal
/// positions (boundary entries are zero).
pub fn assemble_gradient(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    energy: &EnergyDensity,
    eps: f64,
    beta: f64,
    bound: Option<&BoundField>,
    theta: Option<&BodyForce>,
    norm: NormKind,
) -> Result<Vec<f64>, MinimizeError> {
    let obj = Objective::new(mesh, energy, bound, theta, norm)?;
    Ok(obj.gradient(&phi.images, eps, beta)?)
}

/// Fraction-to-boundary step bound along a nodal direction.
pub fn max_feasible_step(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    direction: &[f64],
    tau: f64,
) -> Result<f64, MeshError> {
    let energy = EnergyDensity::DetOnly;
    let obj = Objective::new(mesh, &energy, None, None, NormKind::Operator)?;
    Ok(obj.max_feasible_step(&phi.images, direction, tau))
}

/// Rejects affine boundary data with nonpositive determinant and, in two
/// dimensions, self-intersecting boundary images.
fn validate_boundary(
    mesh: &SimplicialMesh,
    boundary: &BoundaryData,
    images: &Deformation,
) -> Result<(), MinimizeError> {
    if let BoundaryData::Affine { matrix, .. } = boundary {
        let det = matrix.determinant();
        if det <= 0.0 {
            return Err(MinimizeError::SetupRejected {
                reason: format!("affine boundary data has nonpositive determinant {det:e}"),
            });
        }
    }
    if mesh.dim() == 2 {
        // boundary facets as directed segments in image space
        use std::collections::HashMap;
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for e in 0..mesh.num_elements() {
            let el = mesh.element(e);
            for i in 0..3 {
                let (a, b) = (el[i], el[(i + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let segments: Vec<(usize, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .map(|(k, _)| k)
            .collect();
        for (i, &(a, b)) in segments.iter().enumerate() {
            for &(c, d) in segments.iter().skip(i + 1) {
                if a == c || a == d || b == c || b == d {
                    continue;
                }
                if segments_intersect(
                    images.image(2, a),
                    images.image(2, b),
                    images.image(2, c),
                    images.image(2, d),
                ) {
                    return Err(MinimizeError::SetupRejected {
                        reason: format!(
                            "boundary image self-intersects: segments ({a},{b}) and ({c},{d})"
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

fn segments_intersect(p1: &[f64], p2: &[f64], p3: &[f64], p4: &[f64]) -> bool {
    let orient = |a: &[f64], b: &[f64], c: &[f64]| -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = orient(p3, p4, p1);
    let d2 = orient(p3, p4, p2);
    let d3 = orient(p1, p2, p3);
    let d4 = orient(p1, p2, p4);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Minimizes the (augmented) discrete energy; returns the final deformation
/// and the full iterate trace. `start` overrides the boundary-interpolated
/// initializer (its boundary nodes are reset to the boundary data).
#[allow(clippy::too_many_arguments)]
pub fn minimize(
    mesh: &SimplicialMesh,
    energy: &EnergyDensity,
    boundary: &BoundaryData,
    bound: Option<&BoundField>,
    theta: Option<&BodyForce>,
    config: &MinimizerConfig,
    norm: NormKind,
    start: Option<&Deformation>,
) -> Result<(Deformation, MinimizationTrace), MinimizeError> {
    config.validate()?;
    let n = mesh.dim();
    let (mut current, _diag) = interpolate_boundary(mesh, boundary)?;
    if let Some(s) = start {
        let mut images = s.images.clone();
        for &b in mesh.boundary_nodes() {
            for r in 0..n {
                images[b * n + r] = current.images[b * n + r];
            }
        }
        current = Deformation { images };
    }
    validate_boundary(mesh, boundary, &current)?;
    {
        let grads = element_gradients(mesh, &current)?;
        if let Some(g) = grads.iter().find(|g| g.f.determinant() <= 0.0) {
            return Err(MinimizeError::InfeasibleStart { element: g.element });
        }
    }

    let obj = Objective::new(mesh, energy, bound, theta, norm)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut iteration = 0usize;
    let mut eps = config.eps_start;
    let beta = if bound.is_some() { config.beta } else { 0.0 };
    let mut termination = TerminationReason::Converged;

    let mut prev_images: Option<Vec<f64>> = None;
    let mut prev_grad: Option<Vec<f64>> = None;
    let mut last_step = 0.0f64;

    'outer: loop {
        let mut round_done = false;
        while !round_done {
            let (aug, energy_val, min_det, max_km) = obj
                .evaluate(&current.images, eps, beta)
                .expect("accepted iterates stay feasible");
            let grad = obj.gradient(&current.images, eps, beta)?;
            let grad_inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let tol = config.grad_tol * (1.0 + aug.abs());
            if grad_inf <= tol {
                records.push(IterationRecord {
                    iteration,
                    energy: energy_val,
                    augmented: aug,
                    grad_inf,
                    step: 0.0,
                    backtracks: 0,
                    min_det,
                    max_km_ratio: max_km,
                    barrier_eps: eps,
                });
                round_done = true;
                continue;
            }
            if iteration >= config.max_iterations {
                termination = TerminationReason::IterationCap;
                break 'outer;
            }

            // Barzilai-Borwein trial step from the previous gradient pair
            let mut trial = match (&prev_images, &prev_grad) {
                (Some(pi), Some(pg)) => {
                    let mut sy = 0.0;
                    let mut yy = 0.0;
                    for k in 0..grad.len() {
                        let sk = current.images[k] - pi[k];
                        let yk = grad[k] - pg[k];
                        sy += sk * yk;
                        yy += yk * yk;
                    }
                    if sy > 0.0 && yy > 0.0 {
                        sy / yy
                    } else {
                        (last_step * 4.0).max(1e-12)
                    }
                }
                _ => 1.0 / (1.0 + grad_inf),
            };
            let direction: Vec<f64> = grad.iter().map(|g| -g).collect();
            let cap = obj.max_feasible_step(&current.images, &direction, config.tau);
            trial = trial.min(cap).max(1e-300);

            let gg: f64 = grad.iter().map(|g| g * g).sum();
            let mut accepted = false;
            let mut backtracks = 0usize;
            let mut step = trial;
            let mut probe = vec![0.0; current.images.len()];
            while backtracks <= config.max_backtracks {
                for k in 0..probe.len() {
                    probe[k] = current.images[k] + step * direction[k];
                }
                if let Some((new_aug, new_energy, new_min_det, new_max_km)) =
                    obj.evaluate(&probe, eps, beta)
                {
                    if new_aug <= aug - config.armijo_c * step * gg {
                        prev_images = Some(current.images.clone());
                        prev_grad = Some(grad.clone());
                        current.images.copy_from_slice(&probe);
                        last_step = step;
                        iteration += 1;
                        records.push(IterationRecord {
                            iteration,
                            energy: new_energy,
                            augmented: new_aug,
                            grad_inf,
                            step,
                            backtracks,
                            min_det: new_min_det,
                            max_km_ratio: new_max_km,
                            barrier_eps: eps,
                        });
                        accepted = true;
                        break;
                    }
                }
                step *= config.backtrack_shrink;
                backtracks += 1;
            }
            if !accepted {
                let trace = MinimizationTrace {
                    records,
                    termination: TerminationReason::LineSearchFailure,
                    final_energy: energy_val,
                    final_grad_inf: grad_inf,
                };
                return Err(MinimizeError::LineSearchFailure {
                    iteration,
                    backtracks,
                    trace: Box::new(trace),
                });
            }
        }
        if eps <= config.eps_min || eps == 0.0 {
            break;
        }
        eps = (eps * config.eps_shrink).max(config.eps_min);
        // reset the BB memory across barrier changes
        prev_images = None;
        prev_grad = None;
    }

    let (aug, energy_val, _, _) = obj
        .evaluate(&current.images, eps, beta)
        .expect("final iterate is feasible");
    let grad = obj.gradient(&current.images, eps, beta)?;
    let grad_inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let _ = aug;
    let trace = MinimizationTrace {
        records,
        termination,
        final_energy: energy_val,
        final_grad_inf: grad_inf,
    };
    Ok((current, trace))
}

// ---------------------------------------------------------------------------
// experiment harnesses
// ---------------------------------------------------------------------------

/// Outcome of the affine-competitor search.
#[derive(Debug, Clone)]
pub struct QuasiconvexityOutcome {
    pub pass: bool,
    pub trials: usize,
    pub violations: usize,
    /// Smallest observed `I(affine + zeta) - |Omega| W(F0)`.
    pub min_margin: f64,
    pub affine_energy: f64,
}

/// Additive slack on the quasiconvexity comparison.
pub const QC_SLACK: f64 = 1e-10;

/// Tests whether random boundary-fixed perturbations can beat the affine
/// deformation: for quasiconvex W they cannot.
pub fn quasiconvexity_affine_test(
    energy: &EnergyDensity,
    f0: &Mat,
    mesh: &SimplicialMesh,
    trials: usize,
    seed: u64,
) -> Result<QuasiconvexityOutcome, MinimizeError> {
    let n = mesh.dim();
    let affine = Deformation::from_affine(mesh, f0, &vec![0.0; n]);
    let base = crate::mesh::total_energy(mesh, &affine, energy, None)?;
    let det_obj = EnergyDensity::DetOnly;
    let obj = Objective::new(mesh, &det_obj, None, None, NormKind::Operator)?;
    let outcomes: Vec<(f64, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let mut direction = vec![0.0; affine.images.len()];
            for i in 0..mesh.num_vertices() {
                if mesh.is_boundary_node(i) {
                    continue;
                }
                for r in 0..n {
                    direction[i * n + r] = rng.random::<f64>() * 2.0 - 1.0;
                }
            }
            let cap = obj.max_feasible_step(&affine.images, &direction, 0.9);
            let amp = cap.min(1.0) * (0.05 + 0.9 * rng.random::<f64>());
            let probe = Deformation {
                images: affine
                    .images
                    .iter()
                    .zip(direction.iter())
                    .map(|(x, d)| x + amp * d)
                    .collect(),
            };
            match crate::mesh::total_energy(mesh, &probe, energy, None) {
                Ok(e) => {
                    let margin = e - base;
                    (margin, margin < -QC_SLACK * (1.0 + base.abs()))
                }
                Err(_) => (f64::INFINITY, false),
            }
        })
        .collect();
    let violations = outcomes.iter().filter(|(_, v)| *v).count();
    let min_margin = outcomes
        .iter()
        .map(|(m, _)| *m)
        .fold(f64::INFINITY, f64::min);
    Ok(QuasiconvexityOutcome {
        pass: violations == 0,
        trials,
        violations,
        min_margin,
        affine_energy: base,
    })
}

/// One row of the semicontinuity table.
#[derive(Debug, Clone)]
pub struct SemicontinuityRow {
    pub k: usize,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct SemicontinuityTable {
    pub rows: Vec<SemicontinuityRow>,
    pub limit_energy: f64,
    /// I(phi_0) <= min over the last half of the sequence + slack.
    pub holds: bool,
}

/// Evaluates the energy along a deformation sequence and compares the limit
/// energy against the tail.
pub fn semicontinuity_experiment(
    family: &crate::admissibility::studies::SequenceFamily,
    energy: &EnergyDensity,
    levels: usize,
) -> Result<SemicontinuityTable, MinimizeError> {
    let mut rows = Vec::with_capacity(levels);
    let mut limit_energy = 0.0;
    for k in 1..=levels {
        let (mesh, phi_k, phi_0) = family.member(k);
        let e_k = crate::mesh::total_energy(&mesh, &phi_k, energy, None)?;
        rows.push(SemicontinuityRow { k, energy: e_k });
        if k == levels {
            limit_energy = crate::mesh::total_energy(&mesh, &phi_0, energy, None)?;
        }
    }
    let tail = levels.div_ceil(2);
    let tail_min = rows[levels - tail..]
        .iter()
        .map(|r| r.energy)
        .fold(f64::INFINITY, f64::min);
    let holds = limit_energy <= tail_min + 1e-8 * (1.0 + limit_energy.abs());
    Ok(SemicontinuityTable {
        rows,
        limit_energy,
        holds,
    })
}
