//! Point location in deformed meshes: Banach indicatrix, topological degree
//! and the sense-preserving verdict.
//!
//! Both the indicatrix and the degree are undefined on the measure-zero set
//! of image facets. Sample points landing within `FACET_TOL` times the image
//! diameter of a facet are nudged deterministically along a fixed direction
//! and the nudge is recorded in the output.

use super::AdmissibilityError;
use crate::mesh::{element_gradients, Deformation, SimplicialMesh};
use crate::sampling::trial_rng;
use crate::tensor::Mat;
use rand::Rng;

/// Relative facet-degeneracy tolerance.
pub const FACET_TOL: f64 = 1e-12;

/// Fixed nudge direction (normalized irrational components).
fn nudge_direction(dim: usize) -> [f64; 3] {
    let raw = [1.0, std::f64::consts::SQRT_2, std::f64::consts::E];
    let norm: f64 = raw[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = [0.0; 3];
    for i in 0..dim {
        out[i] = raw[i] / norm;
    }
    out
}

/// Bounding-box diagonal of the image configuration.
pub fn image_diameter(mesh: &SimplicialMesh, phi: &Deformation) -> f64 {
    let n = mesh.dim();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for i in 0..mesh.num_vertices() {
        let y = phi.image(n, i);
        for r in 0..n {
            lo[r] = lo[r].min(y[r]);
            hi[r] = hi[r].max(y[r]);
        }
    }
    (0..n).map(|r| (hi[r] - lo[r]).powi(2)).sum::<f64>().sqrt()
}

fn dist2_point_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    dx * dx + dy * dy
}

/// Squared distance from a point to a triangle in 3-space.
fn dist2_point_triangle(p: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let sub = |u: &[f64], v: &[f64]| [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    let dist2_to = |q: [f64; 3]| {
        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
        dot(&d, &d)
    };
    if d1 <= 0.0 && d2 <= 0.0 {
        return dist2_to([a[0], a[1], a[2]]);
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return dist2_to([b[0], b[1], b[2]]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return dist2_to([a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]]);
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return dist2_to([c[0], c[1], c[2]]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return dist2_to([a[0] + t * ac[0], a[1] + t * ac[1], a[2] + t * ac[2]]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return dist2_to([
            b[0] + t * (c[0] - b[0]),
            b[1] + t * (c[1] - b[1]),
            b[2] + t * (c[2] - b[2]),
        ]);
    }
    // interior projection
    let n = [
        ab[1] * ac[2] - ab[2] * ac[1],
        ab[2] * ac[0] - ab[0] * ac[2],
        ab[0] * ac[1] - ab[1] * ac[0],
    ];
    let nn = dot(&n, &n);
    if nn == 0.0 {
        return dist2_to([a[0], a[1], a[2]]);
    }
    let d = dot(&n, &ap);
    d * d / nn
}

/// Smallest distance from `y` to any image facet of the given elements.
fn min_facet_distance(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    y: &[f64],
    region: &[usize],
) -> f64 {
    let n = mesh.dim();
    let mut best = f64::INFINITY;
    for &e in region {
        let el = mesh.element(e);
        match n {
            2 => {
                for skip in 0..3 {
                    let ids: Vec<usize> = (0..3).filter(|&i| i != skip).map(|i| el[i]).collect();
                    let d2 = dist2_point_segment(y, phi.image(2, ids[0]), phi.image(2, ids[1]));
                    best = best.min(d2);
                }
            }
            3 => {
                for skip in 0..4 {
                    let ids: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| el[i]).collect();
                    let d2 = dist2_point_triangle(
                        y,
                        phi.image(3, ids[0]),
                        phi.image(3, ids[1]),
                        phi.image(3, ids[2]),
                    );
                    best = best.min(d2);
                }
            }
            _ => unreachable!(),
        }
    }
    best.sqrt()
}

/// Barycentric coordinates (lambda_1..lambda_n; lambda_0 = 1 - sum) of `y`
/// with respect to the image of element `e`. `None` when the image simplex
/// is degenerate.
fn image_barycentric(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    e: usize,
    y: &[f64],
) -> Option<[f64; 3]> {
    let n = mesh.dim();
    let el = mesh.element(e);
    let y0 = phi.image(n, el[0]);
    let mut m = Mat::zeros(n);
    for c in 0..n {
        let yc = phi.image(n, el[c + 1]);
        for r in 0..n {
            m.set(r, c, yc[r] - y0[r]);
        }
    }
    let inv = m.inverse()?;
    let rhs: Vec<f64> = (0..n).map(|r| y[r] - y0[r]).collect();
    let mut lambda = [0.0; 3];
    inv.apply(&rhs, &mut lambda);
    Some(lambda)
}

fn strictly_inside(lambda: &[f64], n: usize) -> bool {
    let sum: f64 = lambda[..n].iter().sum();
    lambda[..n].iter().all(|&l| l > 0.0) && sum < 1.0
}

/// Result of a Banach-indicatrix query.
#[derive(Debug, Clone)]
pub struct IndicatrixResult {
    pub count: usize,
    /// The point actually evaluated (after any deterministic nudge).
    pub used_point: Vec<f64>,
    pub nudged: bool,
}

/// Number of elements of `region` whose affine image covers `y`, each with
/// multiplicity 1.
pub fn banach_indicatrix(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    y: &[f64],
    region: &[usize],
) -> IndicatrixResult {
    let n = mesh.dim();
    let tol = FACET_TOL * image_diameter(mesh, phi).max(1e-300);
    let dir = nudge_direction(n);
    let mut point: Vec<f64> = y[..n].to_vec();
    let mut nudged = false;
    let mut step = 8.0 * tol;
    for _attempt in 0..64 {
        if min_facet_distance(mesh, phi, &point, region) > tol {
            break;
        }
        for r in 0..n {
            point[r] += step * dir[r];
        }
        nudged = true;
        step *= 2.0;
    }
    let count = region
        .iter()
        .filter(|&&e| {
            image_barycentric(mesh, phi, e, &point)
                .map(|l| strictly_inside(&l, n))
                .unwrap_or(false)
        })
        .count();
    IndicatrixResult {
        count,
        used_point: point,
        nudged,
    }
}

/// Winding number of the oriented boundary image of `subdomain` around `y`
/// (n = 2). For n = 3 the degree is the signed preimage count.
///
/// Errors when `y` lies within the facet tolerance of the boundary image.
pub fn topological_degree(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    y: &[f64],
    subdomain: &[usize],
) -> Result<i64, AdmissibilityError> {
    match mesh.dim() {
        2 => winding_degree(mesh, phi, y, subdomain),
        3 => signed_preimage_count(mesh, phi, y, subdomain),
        _ => unreachable!(),
    }
}

fn boundary_edges(mesh: &SimplicialMesh, subdomain: &[usize]) -> Vec<(usize, usize)> {
    use std::collections::HashSet;
    let mut directed: HashSet<(usize, usize)> = HashSet::new();
    for &e in subdomain {
        let el = mesh.element(e);
        for i in 0..3 {
            directed.insert((el[i], el[(i + 1) % 3]));
        }
    }
    let mut edges: Vec<(usize, usize)> = directed
        .iter()
        .filter(|&&(a, b)| !directed.contains(&(b, a)))
        .copied()
        .collect();
    edges.sort_unstable();
    edges
}

fn winding_degree(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    y: &[f64],
    subdomain: &[usize],
) -> Result<i64, AdmissibilityError> {
    let tol = FACET_TOL * image_diameter(mesh, phi).max(1e-300);
    let edges = boundary_edges(mesh, subdomain);
    let mut min_dist2 = f64::INFINITY;
    for &(a, b) in &edges {
        min_dist2 = min_dist2.min(dist2_point_segment(y, phi.image(2, a), phi.image(2, b)));
    }
    let min_dist = min_dist2.sqrt();
    if min_dist <= tol {
        return Err(AdmissibilityError::DegenerateSamplePoint {
            distance: min_dist,
            tolerance: tol,
        });
    }
    let mut total = 0.0f64;
    for &(a, b) in &edges {
        let pa = phi.image(2, a);
        let pb = phi.image(2, b);
        let va = [pa[0] - y[0], pa[1] - y[1]];
        let vb = [pb[0] - y[0], pb[1] - y[1]];
        let cross = va[0] * vb[1] - va[1] * vb[0];
        let dot = va[0] * vb[0] + va[1] * vb[1];
        total += cross.atan2(dot);
    }
    let winding = total / std::f64::consts::TAU;
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.25 {
        return Err(AdmissibilityError::DegenerateSamplePoint {
            distance: min_dist,
            tolerance: tol,
        });
    }
    Ok(rounded as i64)
}

/// Sum over preimage elements of sign(det F). Errors when a preimage lies on
/// (or within tolerance of) an element image facet.
pub fn signed_preimage_count(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    y: &[f64],
    subdomain: &[usize],
) -> Result<i64, AdmissibilityError> {
    let n = mesh.dim();
    let tol = FACET_TOL * image_diameter(mesh, phi).max(1e-300);
    let grads = element_gradients(mesh, phi)?;
    let mut total = 0i64;
    for &e in subdomain {
        let Some(lambda) = image_barycentric(mesh, phi, e, y) else {
            continue;
        };
        if strictly_inside(&lambda, n) {
            let d = min_facet_distance(mesh, phi, y, &[e]);
            if d <= tol {
                return Err(AdmissibilityError::DegenerateSamplePoint {
                    distance: d,
                    tolerance: tol,
                });
            }
            total += grads[e].f.determinant().signum() as i64;
        }
    }
    Ok(total)
}

/// One degree evaluation inside the sense-preserving sweep.
#[derive(Debug, Clone)]
pub struct SenseSample {
    pub point: Vec<f64>,
    pub degree: i64,
    pub subdomain_size: usize,
}

#[derive(Debug, Clone)]
pub struct SenseVerdict {
    pub sense_preserving: bool,
    pub samples: Vec<SenseSample>,
    pub skipped: usize,
    pub has_positive_jacobian: bool,
}

/// Evaluates the degree at sampled interior image points over sampled
/// subdomains. Evidence of sense preservation means every computed degree is
/// at least 1 and some element has a positive Jacobian. Degenerate samples
/// are skipped and counted.
pub fn sense_preserving_check(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    samples: usize,
    seed: u64,
) -> SenseVerdict {
    let n = mesh.dim();
    let ne = mesh.num_elements();
    let grads = element_gradients(mesh, phi).unwrap_or_default();
    let has_positive = grads.iter().any(|g| g.f.determinant() > 0.0);
    let mut out = SenseVerdict {
        sense_preserving: has_positive,
        samples: Vec::new(),
        skipped: 0,
        has_positive_jacobian: has_positive,
    };
    if grads.is_empty() {
        out.sense_preserving = false;
        return out;
    }
    let neighbors = element_neighbors(mesh);
    for t in 0..samples {
        let mut rng = trial_rng(seed, t as u64);
        // subdomain: whole mesh on even samples, a grown patch on odd ones
        let subdomain: Vec<usize> = if t % 2 == 0 {
            (0..ne).collect()
        } else {
            let start = rng.random_range(0..ne);
            let target = rng.random_range(1..=ne);
            grow_patch(&neighbors, start, target)
        };
        // interior sample point: random barycentric point of a random element
        let e = subdomain[rng.random_range(0..subdomain.len())];
        if grads[e].f.determinant() == 0.0 {
            out.skipped += 1;
            continue;
        }
        let el = mesh.element(e);
        let mut weights = [0.0f64; 4];
        let mut sum = 0.0;
        for w in weights.iter_mut().take(n + 1) {
            *w = -(rng.random::<f64>().max(1e-12)).ln();
            sum += *w;
        }
        let mut y = vec![0.0; n];
        for (i, &v) in el.iter().enumerate() {
            let img = phi.image(n, v);
            for r in 0..n {
                y[r] += weights[i] / sum * img[r];
            }
        }
        match topological_degree(mesh, phi, &y, &subdomain) {
            Ok(degree) => {
                if degree < 1 {
                    out.sense_preserving = false;
                }
                out.samples.push(SenseSample {
                    point: y,
                    degree,
                    subdomain_size: subdomain.len(),
                });
            }
            Err(_) => out.skipped += 1,
        }
    }
    out
}

fn element_neighbors(mesh: &SimplicialMesh) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let mut by_facet: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        for skip in 0..el.len() {
            let mut facet: Vec<usize> = el
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, &v)| v)
                .collect();
            facet.sort_unstable();
            by_facet.entry(facet).or_default().push(e);
        }
    }
    let mut nb = vec![Vec::new(); mesh.num_elements()];
    for (_, elems) in by_facet {
        if elems.len() == 2 {
            nb[elems[0]].push(elems[1]);
            nb[elems[1]].push(elems[0]);
        }
    }
    for list in nb.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    nb
}

fn grow_patch(neighbors: &[Vec<usize>], start: usize, target: usize) -> Vec<usize> {
    let mut seen = vec![false; neighbors.len()];
    let mut queue = std::collections::VecDeque::new();
    let mut patch = Vec::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(e) = queue.pop_front() {
        patch.push(e);
        if patch.len() >= target {
            break;
        }
        for &nb in &neighbors[e] {
            if !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    patch.sort_unstable();
    patch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, MeshShape};

    fn all_elements(mesh: &SimplicialMesh) -> Vec<usize> {
        (0..mesh.num_elements()).collect()
    }

    #[test]
    fn indicatrix_identity_interior_point() {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let phi = Deformation::identity_of(&mesh);
        let region = all_elements(&mesh);
        let r = banach_indicatrix(&mesh, &phi, &[0.33, 0.57], &region);
        assert_eq!(r.count, 1);
        assert!(!r.nudged);
    }

    #[test]
    fn indicatrix_outside_image() {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let phi = Deformation::identity_of(&mesh);
        let region = all_elements(&mesh);
        let r = banach_indicatrix(&mesh, &phi, &[2.5, -0.7], &region);
        assert_eq!(r.count, 0);
    }

    #[test]
    fn indicatrix_on_facet_resolves_by_nudge() {
        let mesh = make_mesh(MeshShape::UnitSquare, 2);
        let phi = Deformation::identity_of(&mesh);
        let region = all_elements(&mesh);
        // (0.5, 0.25) lies exactly on a vertical mesh line
        let r = banach_indicatrix(&mesh, &phi, &[0.5, 0.25], &region);
        assert!(r.nudged);
        assert_eq!(r.count, 1);
    }

    /// Two-element mesh where the second element is reflected onto the image
    /// of the first.
    fn folded_pair() -> (SimplicialMesh, Deformation) {
        let mesh = make_mesh(MeshShape::UnitSquare, 1);
        let mut phi = Deformation::identity_of(&mesh);
        // elements: (v0 v1 v2) = ((0,0) (1,0) (0,1)) and (v1 v3 v2);
        // fold v3 = (1,1) onto (0,0) reflecting element 1 across the diagonal.
        phi.images[3 * 2] = 0.0;
        phi.images[3 * 2 + 1] = 0.0;
        (mesh, phi)
    }

    #[test]
    fn indicatrix_counts_fold_twice() {
        let (mesh, phi) = folded_pair();
        let region = all_elements(&mesh);
        let r = banach_indicatrix(&mesh, &phi, &[0.21, 0.17], &region);
        assert_eq!(r.count, 2, "folded image must be covered twice");
    }

    #[test]
    fn degree_identity_is_one() {
        let mesh = make_mesh(MeshShape::UnitSquare, 3);
        let phi = Deformation::identity_of(&mesh);
        let d = topological_degree(&mesh, &phi, &[0.4, 0.45], &all_elements(&mesh)).unwrap();
        assert_eq!(d, 1);
    }

    #[test]
    fn degree_reflection_is_minus_one() {
        let mesh = make_mesh(MeshShape::UnitSquare, 3);
        let refl = Mat::from_rows(2, &[1.0, 0.0, 0.0, -1.0]);
        let phi = Deformation::from_affine(&mesh, &refl, &[0.0; 2]);
        let d = topological_degree(&mesh, &phi, &[0.4, -0.45], &all_elements(&mesh)).unwrap();
        assert_eq!(d, -1);
    }

    #[test]
    fn degree_squaring_map_is_two() {
        // piecewise-affine sampling of z -> z^2 on the annulus
        let mesh = make_mesh(MeshShape::AnnulusApprox, 4);
        let mut images = Vec::with_capacity(mesh.num_vertices() * 2);
        for i in 0..mesh.num_vertices() {
            let x = mesh.vertex(i);
            // (x + iy)^2 = x^2 - y^2 + 2ixy
            images.push(x[0] * x[0] - x[1] * x[1]);
            images.push(2.0 * x[0] * x[1]);
        }
        let phi = Deformation { images };
        let region = all_elements(&mesh);
        // off the symmetry axis so no preimage sits on a mesh line
        let y = [0.45, 0.2];
        let d = topological_degree(&mesh, &phi, &y, &region).unwrap();
        assert_eq!(d, 2);
        let count = signed_preimage_count(&mesh, &phi, &y, &region).unwrap();
        assert_eq!(count, 2, "winding and signed preimage count must agree");
    }

    #[test]
    fn degree_rejects_points_near_boundary_image() {
        let mesh = make_mesh(MeshShape::UnitSquare, 2);
        let phi = Deformation::identity_of(&mesh);
        let err = topological_degree(&mesh, &phi, &[1.0, 0.5], &all_elements(&mesh));
        assert!(matches!(err, Err(AdmissibilityError::DegenerateSamplePoint { .. })));
    }

    #[test]
    fn degree_consistency_on_random_flip_free_maps() {
        let mesh = make_mesh(MeshShape::UnitSquare, 3);
        for trial in 0..20u64 {
            let mut rng = trial_rng(1234, trial);
            let mut phi = Deformation::identity_of(&mesh);
            for i in 0..mesh.num_vertices() {
                if mesh.is_boundary_node(i) {
                    continue;
                }
                phi.images[i * 2] += 0.08 * (rng.random::<f64>() - 0.5);
                phi.images[i * 2 + 1] += 0.08 * (rng.random::<f64>() - 0.5);
            }
            let region = all_elements(&mesh);
            let y = [
                0.15 + 0.7 * rng.random::<f64>(),
                0.15 + 0.7 * rng.random::<f64>(),
            ];
            let (Ok(w), Ok(c)) = (
                topological_degree(&mesh, &phi, &y, &region),
                signed_preimage_count(&mesh, &phi, &y, &region),
            ) else {
                continue;
            };
            assert_eq!(w, c, "winding vs signed count mismatch at {y:?}");
        }
    }

    #[test]
    fn sense_preserving_identity_and_reflection() {
        let mesh = make_mesh(MeshShape::UnitSquare, 3);
        let id = Deformation::identity_of(&mesh);
        let verdict = sense_preserving_check(&mesh, &id, 8, 7);
        assert!(verdict.sense_preserving);
        assert!(!verdict.samples.is_empty());

        let refl = Deformation::from_affine(&mesh, &Mat::from_rows(2, &[1.0, 0.0, 0.0, -1.0]), &[0.0; 2]);
        let verdict = sense_preserving_check(&mesh, &refl, 8, 7);
        assert!(!verdict.sense_preserving);
    }

    #[test]
    fn degree_three_dimensional_identity() {
        let mesh = make_mesh(MeshShape::UnitCube, 2);
        let phi = Deformation::identity_of(&mesh);
        let d = topological_degree(&mesh, &phi, &[0.3, 0.4, 0.6], &all_elements(&mesh)).unwrap();
        assert_eq!(d, 1);
    }
}
