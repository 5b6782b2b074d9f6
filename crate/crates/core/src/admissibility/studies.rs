//! Refinement studies on the unit square: the divergence-free structure of
//! adjugate rows (integration against gradients of boundary-vanishing test
//! functions) and weak continuity of minors along oscillating deformation
//! sequences.

use crate::mesh::{element_gradients, kahan_sum, make_mesh, refine, Deformation, MeshShape, SimplicialMesh};
use crate::quadrature::integrate_on_simplex;
use crate::sampling::trial_rng;
use crate::tensor::{Mat, MinorSpec};
use rand::Rng;
use rayon::prelude::*;

/// Closed-form smooth test map with an analytic gradient.
#[derive(Debug, Clone)]
pub enum SmoothMap {
    Affine { matrix: Mat, offset: Vec<f64> },
    /// (x1^2, x2)
    Parabola,
    /// identity plus a polynomial bump: x + amplitude * s(x1) s(x2) * dir,
    /// s(t) = t^2 (1 - t)^2, dir = (1, -0.7). Vanishes with its gradient on
    /// the boundary of the unit square.
    Bump { amplitude: f64 },
    /// (x1 + a x2^2, x2 + b x1^2)
    CrossQuadratic { a: f64, b: f64 },
}

impl SmoothMap {
    pub fn eval(&self, x: &[f64]) -> [f64; 2] {
        match self {
            SmoothMap::Affine { matrix, offset } => {
                let mut out = [0.0; 3];
                matrix.apply(x, &mut out);
                [
                    out[0] + offset.first().copied().unwrap_or(0.0),
                    out[1] + offset.get(1).copied().unwrap_or(0.0),
                ]
            }
            SmoothMap::Parabola => [x[0] * x[0], x[1]],
            SmoothMap::Bump { amplitude } => {
                let b = bump(x[0]) * bump(x[1]);
                [x[0] + amplitude * b, x[1] - 0.7 * amplitude * b]
            }
            SmoothMap::CrossQuadratic { a, b } => {
                [x[0] + a * x[1] * x[1], x[1] + b * x[0] * x[0]]
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Mat {
        match self {
            SmoothMap::Affine { matrix, .. } => *matrix,
            SmoothMap::Parabola => Mat::from_rows(2, &[2.0 * x[0], 0.0, 0.0, 1.0]),
            SmoothMap::Bump { amplitude } => {
                let gx = bump_prime(x[0]) * bump(x[1]);
                let gy = bump(x[0]) * bump_prime(x[1]);
                Mat::from_rows(
                    2,
                    &[
                        1.0 + amplitude * gx,
                        amplitude * gy,
                        -0.7 * amplitude * gx,
                        1.0 - 0.7 * amplitude * gy,
                    ],
                )
            }
            SmoothMap::CrossQuadratic { a, b } => Mat::from_rows(
                2,
                &[1.0, 2.0 * a * x[1], 2.0 * b * x[0], 1.0],
            ),
        }
    }
}

fn bump(t: f64) -> f64 {
    let u = t * (1.0 - t);
    u * u
}

fn bump_prime(t: f64) -> f64 {
    2.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

/// Polynomial test function vanishing on the boundary of the unit square.
#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub eval: fn(&[f64]) -> f64,
    pub grad: fn(&[f64]) -> [f64; 2],
}

fn bubble(x: &[f64]) -> f64 {
    x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])
}

fn bubble_grad(x: &[f64]) -> [f64; 2] {
    [
        (1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]),
        x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1]),
    ]
}

/// Fixed family of four boundary-vanishing polynomial bubbles.
pub fn theta_family() -> [TestFunction; 4] {
    [
        TestFunction {
            name: "bubble",
            eval: bubble,
            grad: bubble_grad,
        },
        TestFunction {
            name: "bubble_x",
            eval: |x| bubble(x) * (x[0] - 1.0 / 3.0),
            grad: |x| {
                let b = bubble(x);
                let g = bubble_grad(x);
                [g[0] * (x[0] - 1.0 / 3.0) + b, g[1] * (x[0] - 1.0 / 3.0)]
            },
        },
        TestFunction {
            name: "bubble_y",
            eval: |x| bubble(x) * (x[1] - 2.0 / 5.0),
            grad: |x| {
                let b = bubble(x);
                let g = bubble_grad(x);
                [g[0] * (x[1] - 2.0 / 5.0), g[1] * (x[1] - 2.0 / 5.0) + b]
            },
        },
        TestFunction {
            name: "bubble_xy",
            eval: |x| bubble(x) * x[0] * x[1],
            grad: |x| {
                let b = bubble(x);
                let g = bubble_grad(x);
                [
                    g[0] * x[0] * x[1] + b * x[1],
                    g[1] * x[0] * x[1] + b * x[0],
                ]
            },
        },
    ]
}

/// Residuals of the divergence-free adjugate-row pairing
/// `sum_j int Adj(Df)_{jk} d(theta)/dx_j dx` on a sequence of uniformly
/// refined unit-square meshes. Adj(Df) is sampled piecewise-constant at the
/// first vertex of each element; the pairing then decays at O(h) for smooth
/// nonaffine maps and vanishes to rounding for affine ones.
pub fn piola_identity_residual(map: &SmoothMap, base_resolution: usize, levels: usize) -> Vec<f64> {
    let thetas = theta_family();
    let mut residuals = Vec::with_capacity(levels);
    let mut mesh = make_mesh(MeshShape::UnitSquare, base_resolution);
    for _ in 0..levels {
        let per_element: Vec<[[f64; 2]; 4]> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let el = mesh.element(e);
                let verts: Vec<&[f64]> = el.iter().map(|&v| mesh.vertex(v)).collect();
                let adj = map.gradient(mesh.vertex(el[0])).adjugate();
                let mut vals = [[0.0f64; 2]; 4];
                for (ti, theta) in thetas.iter().enumerate() {
                    // int_T dtheta/dx_j dx by exact-degree quadrature
                    let mut gj = [0.0f64; 2];
                    for j in 0..2 {
                        gj[j] = integrate_on_simplex(2, &verts, &mut |x| (theta.grad)(x)[j]);
                    }
                    for k in 0..2 {
                        let mut acc = 0.0;
                        for j in 0..2 {
                            acc += adj.get(j, k) * gj[j];
                        }
                        vals[ti][k] = acc;
                    }
                }
                vals
            })
            .collect();
        let mut worst = 0.0f64;
        for ti in 0..thetas.len() {
            for k in 0..2 {
                let total = kahan_sum(per_element.iter().map(|v| v[ti][k]));
                worst = worst.max(total.abs());
            }
        }
        residuals.push(worst);
        mesh = refine(&mesh);
    }
    residuals
}

/// Shipped deformation sequence generators on the unit square.
#[derive(Debug, Clone)]
pub enum SequenceFamily {
    /// phi_k = phi_0 = identity on a fixed mesh.
    Constant { resolution: usize },
    /// phi_k(x) = x + (omega k)^{-1} A sin(omega k B x) applied nodally on a
    /// mesh of resolution `oversample * k`, with omega = 2 pi. Converges
    /// weakly (not strongly) to the identity.
    Oscillation {
        amplitude: Mat,
        frequency: Mat,
        oversample: usize,
    },
    /// phi_k = F0 x + k^{-1} zeta with a fixed random interior perturbation
    /// zeta; converges strongly to the affine map.
    AffineLimit { f0: Mat, resolution: usize, seed: u64 },
}

impl SequenceFamily {
    /// Default oscillation family used by the experiments.
    pub fn standard_oscillation(oversample: usize) -> SequenceFamily {
        SequenceFamily::Oscillation {
            amplitude: Mat::from_rows(2, &[0.25, 0.1, -0.15, 0.2]),
            frequency: Mat::from_rows(2, &[1.0, 2.0, 3.0, 1.0]),
            oversample,
        }
    }

    /// The k-th member: mesh, deformation, and the limit deformation on the
    /// same mesh (k >= 1).
    pub fn member(&self, k: usize) -> (SimplicialMesh, Deformation, Deformation) {
        match self {
            SequenceFamily::Constant { resolution } => {
                let mesh = make_mesh(MeshShape::UnitSquare, *resolution);
                let id = Deformation::identity_of(&mesh);
                (mesh, id.clone(), id)
            }
            SequenceFamily::Oscillation {
                amplitude,
                frequency,
                oversample,
            } => {
                let mesh = make_mesh(MeshShape::UnitSquare, oversample * k);
                let omega = std::f64::consts::TAU * k as f64;
                let mut images = Vec::with_capacity(mesh.num_vertices() * 2);
                for i in 0..mesh.num_vertices() {
                    let x = mesh.vertex(i);
                    let mut bx = [0.0; 3];
                    frequency.apply(x, &mut bx);
                    let s = [(omega * bx[0]).sin(), (omega * bx[1]).sin()];
                    let mut a_s = [0.0; 3];
                    amplitude.apply(&s, &mut a_s);
                    images.push(x[0] + a_s[0] / omega);
                    images.push(x[1] + a_s[1] / omega);
                }
                let limit = Deformation::identity_of(&mesh);
                (mesh, Deformation { images }, limit)
            }
            SequenceFamily::AffineLimit { f0, resolution, seed } => {
                let mesh = make_mesh(MeshShape::UnitSquare, *resolution);
                let limit = Deformation::from_affine(&mesh, f0, &[0.0; 2]);
                let mut rng = trial_rng(*seed, 0);
                let mut images = limit.images.clone();
                // perturbation well below the mesh edge length keeps every
                // element flip-free along the whole sequence
                let amp = 0.2 / (*resolution as f64 * k as f64);
                for i in 0..mesh.num_vertices() {
                    if mesh.is_boundary_node(i) {
                        continue;
                    }
                    for r in 0..2 {
                        images[i * 2 + r] += (rng.random::<f64>() - 0.5) * amp;
                    }
                }
                (mesh, Deformation { images }, limit)
            }
        }
    }
}

/// One row of the minor weak-continuity table.
#[derive(Debug, Clone)]
pub struct MinorContinuityRow {
    pub k: usize,
    /// pairings `int M(D phi_k) theta dx` per test function
    pub lhs: Vec<f64>,
    /// pairings `int M(D phi_0) theta dx` per test function
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MinorContinuityTable {
    pub rows: Vec<MinorContinuityRow>,
    pub converged: bool,
    /// Largest normalized discrepancy on the final row.
    pub final_discrepancy: f64,
}

/// Relative tolerance on the final entry of the table.
pub const MINOR_CONTINUITY_TOL: f64 = 0.05;

/// Pairs the chosen minor of D(phi_k) against each test function and
/// compares with the same pairing for the limit deformation.
pub fn minor_weak_continuity_test(
    family: &SequenceFamily,
    spec: &MinorSpec,
    levels: usize,
) -> MinorContinuityTable {
    let thetas = theta_family();
    let mut rows = Vec::with_capacity(levels);
    for k in 1..=levels {
        let (mesh, phi_k, phi_0) = family.member(k);
        let lhs = minor_pairings(&mesh, &phi_k, spec, &thetas);
        let rhs = minor_pairings(&mesh, &phi_0, spec, &thetas);
        rows.push(MinorContinuityRow { k, lhs, rhs });
    }
    let last = rows.last().expect("levels >= 1");
    let (mesh, _, _) = family.member(levels);
    let theta_scales: Vec<f64> = theta_family()
        .iter()
        .map(|t| integral_of(&mesh, |x| (t.eval)(x).abs()))
        .collect();
    let mut worst = 0.0f64;
    for i in 0..last.lhs.len() {
        let denom = last.rhs[i].abs() + theta_scales[i];
        worst = worst.max((last.lhs[i] - last.rhs[i]).abs() / denom);
    }
    MinorContinuityTable {
        converged: worst <= MINOR_CONTINUITY_TOL,
        final_discrepancy: worst,
        rows,
    }
}

fn minor_pairings(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    spec: &MinorSpec,
    thetas: &[TestFunction],
) -> Vec<f64> {
    let grads = element_gradients(mesh, phi).expect("valid mesh");
    let per_element: Vec<Vec<f64>> = grads
        .par_iter()
        .map(|g| {
            let el = mesh.element(g.element);
            let verts: Vec<&[f64]> = el.iter().map(|&v| mesh.vertex(v)).collect();
            let m = g.f.minor(spec);
            thetas
                .iter()
                .map(|t| m * integrate_on_simplex(2, &verts, &mut |x| (t.eval)(x)))
                .collect()
        })
        .collect();
    (0..thetas.len())
        .map(|ti| kahan_sum(per_element.iter().map(|v| v[ti])))
        .collect()
}

fn integral_of(mesh: &SimplicialMesh, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let per: Vec<f64> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let el = mesh.element(e);
            let verts: Vec<&[f64]> = el.iter().map(|&v| mesh.vertex(v)).collect();
            integrate_on_simplex(2, &verts, &mut |x| f(x))
        })
        .collect();
    kahan_sum(per)
}
