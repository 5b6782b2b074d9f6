//! Gauss quadrature on reference simplices via the Duffy transform.
//!
//! A 5-point Gauss-Legendre rule per axis collapsed onto the simplex gives
//! exactness for all polynomials of total degree <= 8 on triangles and
//! <= 7 on tetrahedra, which covers every closed-form integrand used by the
//! refinement studies.

use std::sync::OnceLock;

/// Quadrature rule on the reference simplex (unit triangle or tetrahedron).
/// Weights sum to the reference volume 1/n!.
pub struct SimplexRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// 5-point Gauss-Legendre nodes and weights on [0, 1], from closed forms.
fn gauss5_unit() -> ([f64; 5], [f64; 5]) {
    let x1 = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let x2 = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let w0 = 128.0 / 225.0;
    let w1 = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let w2 = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    let nodes = [-x2, -x1, 0.0, x1, x2];
    let weights = [w2, w1, w0, w1, w2];
    let mut un = [0.0; 5];
    let mut uw = [0.0; 5];
    for i in 0..5 {
        un[i] = 0.5 * (nodes[i] + 1.0);
        uw[i] = 0.5 * weights[i];
    }
    (un, uw)
}

fn build_triangle_rule() -> SimplexRule {
    let (u, w) = gauss5_unit();
    let mut points = Vec::with_capacity(25);
    let mut weights = Vec::with_capacity(25);
    for i in 0..5 {
        for j in 0..5 {
            points.push([u[i], u[j] * (1.0 - u[i]), 0.0]);
            weights.push(w[i] * w[j] * (1.0 - u[i]));
        }
    }
    SimplexRule { points, weights }
}

fn build_tet_rule() -> SimplexRule {
    let (u, w) = gauss5_unit();
    let mut points = Vec::with_capacity(125);
    let mut weights = Vec::with_capacity(125);
    for i in 0..5 {
        for j in 0..5 {
            for k in 0..5 {
                let x = u[i];
                let y = u[j] * (1.0 - u[i]);
                let z = u[k] * (1.0 - u[i]) * (1.0 - u[j]);
                points.push([x, y, z]);
                weights.push(w[i] * w[j] * w[k] * (1.0 - u[i]) * (1.0 - u[i]) * (1.0 - u[j]));
            }
        }
    }
    SimplexRule { points, weights }
}

/// Reference rule for the given simplex dimension (2 or 3).
pub fn simplex_rule(dim: usize) -> &'static SimplexRule {
    static TRI: OnceLock<SimplexRule> = OnceLock::new();
    static TET: OnceLock<SimplexRule> = OnceLock::new();
    match dim {
        2 => TRI.get_or_init(build_triangle_rule),
        3 => TET.get_or_init(build_tet_rule),
        _ => unreachable!(),
    }
}

/// Integrate `f` over the physical simplex with vertices `verts`
/// (`dim + 1` vertices of length `dim`).
pub fn integrate_on_simplex(dim: usize, verts: &[&[f64]], f: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    let rule = simplex_rule(dim);
    // volume scale: |det E| where E columns are edge vectors; reference
    // weights already sum to 1/n!.
    let mut e = [[0.0f64; 3]; 3];
    for c in 0..dim {
        for r in 0..dim {
            e[r][c] = verts[c + 1][r] - verts[0][r];
        }
    }
    let det = match dim {
        2 => e[0][0] * e[1][1] - e[0][1] * e[1][0],
        3 => {
            e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
        }
        _ => unreachable!(),
    };
    let scale = det.abs();
    let mut acc = 0.0;
    let mut x = [0.0f64; 3];
    for (p, &w) in rule.points.iter().zip(rule.weights.iter()) {
        for r in 0..dim {
            let mut v = verts[0][r];
            for c in 0..dim {
                v += e[r][c] * p[c];
            }
            x[r] = v;
        }
        acc += w * f(&x[..dim]);
    }
    // reference weights integrate over the unit simplex; physical volume is
    // |det| times the reference volume, and the weights carry the 1/n!.
    acc * scale
}
