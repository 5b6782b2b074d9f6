//! Change-of-variables identity check:
//! `int_D (u o f)(x) |J(x,f)| dx = int u(y) N_f(y, D) dy`
//! for piecewise-affine f and u piecewise-constant on a rectilinear
//! partition of a box containing the image.
//!
//! The two sides travel different routes. The left side clips each reference
//! element against the pullback of the partition cells; the right side clips
//! each element image against the cells in image space. In two dimensions
//! both routes are exact polygon clipping; in three dimensions the left side
//! clips convex polytopes exactly while the right side is a stratified
//! Monte Carlo estimate flagged as approximate.

use crate::mesh::{element_gradients, kahan_sum, Deformation, MeshError, SimplicialMesh};
use crate::sampling::trial_rng;
use rand::Rng;
use rayon::prelude::*;

/// Piecewise-constant function on a rectilinear partition of a box.
#[derive(Debug, Clone)]
pub struct RectilinearPartition {
    /// Strictly increasing breakpoints per axis (length dim).
    pub breaks: Vec<Vec<f64>>,
    /// Row-major cell values; axis 0 varies fastest.
    pub values: Vec<f64>,
}

impl RectilinearPartition {
    pub fn dim(&self) -> usize {
        self.breaks.len()
    }

    pub fn cells_per_axis(&self) -> Vec<usize> {
        self.breaks.iter().map(|b| b.len() - 1).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis().iter().product()
    }

    /// Uniform grid over `[lo, hi]` with the given cell counts.
    pub fn uniform(lo: &[f64], hi: &[f64], cells: &[usize], values: Vec<f64>) -> RectilinearPartition {
        let dim = lo.len();
        let mut breaks = Vec::with_capacity(dim);
        for a in 0..dim {
            let n = cells[a];
            breaks.push((0..=n).map(|i| lo[a] + (hi[a] - lo[a]) * i as f64 / n as f64).collect());
        }
        let p = RectilinearPartition { breaks, values };
        assert_eq!(p.values.len(), p.num_cells());
        p
    }

    /// u == 1 on the whole box.
    pub fn constant_one(lo: &[f64], hi: &[f64]) -> RectilinearPartition {
        RectilinearPartition::uniform(lo, hi, &vec![1; lo.len()], vec![1.0])
    }

    /// Indicator of the axis-aligned half-space `y_axis >= threshold`,
    /// restricted to the box.
    pub fn half_plane_indicator(lo: &[f64], hi: &[f64], axis: usize, threshold: f64) -> RectilinearPartition {
        let dim = lo.len();
        let mut breaks: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for a in 0..dim {
            if a == axis {
                breaks.push(vec![lo[a], threshold.clamp(lo[a], hi[a]), hi[a]]);
            } else {
                breaks.push(vec![lo[a], hi[a]]);
            }
        }
        let cells: Vec<usize> = breaks.iter().map(|b| b.len() - 1).collect();
        let total: usize = cells.iter().product();
        let mut values = vec![0.0; total];
        // axis 0 varies fastest
        for (idx, value) in values.iter_mut().enumerate() {
            let mut rem = idx;
            let mut cell_idx = vec![0usize; dim];
            for a in 0..dim {
                cell_idx[a] = rem % cells[a];
                rem /= cells[a];
            }
            if cell_idx[axis] == 1 {
                *value = 1.0;
            }
        }
        RectilinearPartition { breaks, values }
    }

    fn cell_bounds(&self, flat: usize) -> (Vec<f64>, Vec<f64>) {
        let cells = self.cells_per_axis();
        let mut rem = flat;
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let i = rem % cells[a];
            rem /= cells[a];
            lo.push(self.breaks[a][i]);
            hi.push(self.breaks[a][i + 1]);
        }
        (lo, hi)
    }

    pub fn value_at(&self, y: &[f64]) -> f64 {
        let cells = self.cells_per_axis();
        let mut flat = 0usize;
        let mut stride = 1usize;
        for a in 0..self.dim() {
            let b = &self.breaks[a];
            if y[a] < b[0] || y[a] > b[b.len() - 1] {
                return 0.0;
            }
            let mut i = match b.binary_search_by(|x| x.partial_cmp(&y[a]).unwrap()) {
                Ok(i) => i,
                Err(i) => i.saturating_sub(1),
            };
            if i >= cells[a] {
                i = cells[a] - 1;
            }
            flat += i * stride;
            stride *= cells[a];
        }
        self.values[flat]
    }
}

/// Result of the change-of-variables check.
#[derive(Debug, Clone)]
pub struct CovResult {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// True when the right side is a Monte Carlo estimate (n = 3).
    pub approximate: bool,
    /// Standard error of the right side when approximate.
    pub rhs_std_error: Option<f64>,
}

/// Runs the check over the whole mesh.
pub fn change_of_variable_check(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    u: &RectilinearPartition,
    seed: u64,
) -> Result<CovResult, MeshError> {
    assert_eq!(u.dim(), mesh.dim());
    match mesh.dim() {
        2 => cov_2d(mesh, phi, u),
        3 => cov_3d(mesh, phi, u, seed),
        _ => unreachable!(),
    }
}

fn cov_2d(mesh: &SimplicialMesh, phi: &Deformation, u: &RectilinearPartition) -> Result<CovResult, MeshError> {
    let grads = element_gradients(mesh, phi)?;
    let per_element: Vec<(f64, f64)> = grads
        .par_iter()
        .map(|g| {
            let e = g.element;
            let el = mesh.element(e);
            let j = g.f.determinant();
            let ref_tri: Vec<[f64; 2]> = el
                .iter()
                .map(|&v| {
                    let x = mesh.vertex(v);
                    [x[0], x[1]]
                })
                .collect();
            let img_tri: Vec<[f64; 2]> = el
                .iter()
                .map(|&v| {
                    let y = phi.image(2, v);
                    [y[0], y[1]]
                })
                .collect();
            let x0 = ref_tri[0];
            let y0 = img_tri[0];
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for c in 0..u.num_cells() {
                let uc = u.values[c];
                if uc == 0.0 {
                    continue;
                }
                let (lo, hi) = u.cell_bounds(c);
                // right side: clip the image triangle against the cell
                let mut poly = img_tri.clone();
                for a in 0..2 {
                    let mut na = [0.0; 2];
                    na[a] = -1.0;
                    poly = clip_polygon(&poly, na, -lo[a]);
                    let mut nb = [0.0; 2];
                    nb[a] = 1.0;
                    poly = clip_polygon(&poly, nb, hi[a]);
                    if poly.is_empty() {
                        break;
                    }
                }
                rhs += uc * polygon_area(&poly).abs();
                // left side: clip the reference triangle against the cell
                // pullback; y = y0 + F (x - x0), so y_a <= h becomes
                // (F x)_a <= h - y0_a + (F x0)_a.
                if j != 0.0 {
                    let mut fx0 = [0.0; 3];
                    g.f.apply(&x0, &mut fx0);
                    let mut poly = ref_tri.clone();
                    for a in 0..2 {
                        let row = [g.f.get(a, 0), g.f.get(a, 1)];
                        let shift = fx0[a] - y0[a];
                        poly = clip_polygon(&poly, [-row[0], -row[1]], -(lo[a] + shift));
                        if poly.is_empty() {
                            break;
                        }
                        poly = clip_polygon(&poly, row, hi[a] + shift);
                        if poly.is_empty() {
                            break;
                        }
                    }
                    lhs += uc * polygon_area(&poly).abs() * j.abs();
                }
            }
            (lhs, rhs)
        })
        .collect();
    let lhs = kahan_sum(per_element.iter().map(|t| t.0));
    let rhs = kahan_sum(per_element.iter().map(|t| t.1));
    Ok(CovResult {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        approximate: false,
        rhs_std_error: None,
    })
}

/// Sutherland-Hodgman clip of a convex polygon against `n . x <= c`.
fn clip_polygon(poly: &[[f64; 2]], n: [f64; 2], c: f64) -> Vec<[f64; 2]> {
    if poly.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(poly.len() + 2);
    let dist = |p: &[f64; 2]| n[0] * p[0] + n[1] * p[1] - c;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let da = dist(&a);
        let db = dist(&b);
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db <= 0.0) {
            let t = da / (da - db);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * acc
}

// --- three-dimensional route ------------------------------------------------

/// Convex polytope as vertices plus faces (each face an outward-ordered
/// vertex loop).
#[derive(Debug, Clone)]
struct Polytope {
    verts: Vec<[f64; 3]>,
    faces: Vec<Vec<usize>>,
}

impl Polytope {
    fn tetrahedron(vs: [[f64; 3]; 4]) -> Polytope {
        // orient faces outward for a positively oriented tet (v1-v0, v2-v0,
        // v3-v0 right-handed)
        Polytope {
            verts: vs.to_vec(),
            faces: vec![vec![0, 2, 1], vec![0, 1, 3], vec![1, 2, 3], vec![0, 3, 2]],
        }
    }

    fn volume(&self) -> f64 {
        // divergence theorem with fan triangulation of each face
        let mut acc = 0.0;
        for face in &self.faces {
            if face.len() < 3 {
                continue;
            }
            let v0 = self.verts[face[0]];
            for k in 1..face.len() - 1 {
                let v1 = self.verts[face[k]];
                let v2 = self.verts[face[k + 1]];
                acc += v0[0] * (v1[1] * v2[2] - v1[2] * v2[1])
                    - v0[1] * (v1[0] * v2[2] - v1[2] * v2[0])
                    + v0[2] * (v1[0] * v2[1] - v1[1] * v2[0]);
            }
        }
        acc / 6.0
    }

    /// Clip against the half-space `n . x <= c`.
    fn clip(&self, n: [f64; 3], c: f64) -> Option<Polytope> {
        let dist: Vec<f64> = self
            .verts
            .iter()
            .map(|v| n[0] * v[0] + n[1] * v[1] + n[2] * v[2] - c)
            .collect();
        if dist.iter().all(|&d| d <= 0.0) {
            return Some(self.clone());
        }
        if dist.iter().all(|&d| d > 0.0) {
            return None;
        }
        let mut verts = Vec::new();
        let mut vert_map: Vec<Option<usize>> = vec![None; self.verts.len()];
        let mut edge_cut: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut faces: Vec<Vec<usize>> = Vec::new();
        let mut cap_edges: Vec<(usize, usize)> = Vec::new();

        let keep = |i: usize, verts: &mut Vec<[f64; 3]>, map: &mut Vec<Option<usize>>| -> usize {
            if let Some(k) = map[i] {
                return k;
            }
            let k = verts.len();
            verts.push(self.verts[i]);
            map[i] = Some(k);
            k
        };

        for face in &self.faces {
            let mut new_face: Vec<usize> = Vec::new();
            let mut entry: Option<usize> = None;
            let mut exit: Option<usize> = None;
            for i in 0..face.len() {
                let a = face[i];
                let b = face[(i + 1) % face.len()];
                let (da, db) = (dist[a], dist[b]);
                if da <= 0.0 {
                    new_face.push(keep(a, &mut verts, &mut vert_map));
                }
                if (da <= 0.0) != (db <= 0.0) {
                    let key = (a.min(b), a.max(b));
                    let cut = *edge_cut.entry(key).or_insert_with(|| {
                        let t = da / (da - db);
                        let va = self.verts[a];
                        let vb = self.verts[b];
                        let p = [
                            va[0] + t * (vb[0] - va[0]),
                            va[1] + t * (vb[1] - va[1]),
                            va[2] + t * (vb[2] - va[2]),
                        ];
                        let k = verts.len();
                        verts.push(p);
                        k
                    });
                    new_face.push(cut);
                    if da <= 0.0 {
                        exit = Some(cut);
                    } else {
                        entry = Some(cut);
                    }
                }
            }
            if let (Some(en), Some(ex)) = (entry, exit) {
                // the cap polygon walks exit -> entry along each cut face
                cap_edges.push((ex, en));
            }
            if new_face.len() >= 3 {
                faces.push(new_face);
            }
        }

        // assemble the cap face from the cut edges
        if cap_edges.len() >= 3 {
            let mut next: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
            for &(a, b) in &cap_edges {
                next.insert(a, b);
            }
            let start = cap_edges[0].0;
            let mut loop_face = vec![start];
            let mut cur = cap_edges[0].1;
            let mut guard = 0;
            while cur != start && guard < cap_edges.len() + 2 {
                loop_face.push(cur);
                cur = match next.get(&cur) {
                    Some(&n) => n,
                    None => break,
                };
                guard += 1;
            }
            if loop_face.len() >= 3 {
                // cap normal must point along +n (outward): reverse so the
                // loop runs exit->entry which already orients it correctly
                loop_face.reverse();
                faces.push(loop_face);
            }
        }
        if verts.is_empty() || faces.is_empty() {
            return None;
        }
        Some(Polytope { verts, faces })
    }
}

fn cov_3d(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    u: &RectilinearPartition,
    seed: u64,
) -> Result<CovResult, MeshError> {
    let grads = element_gradients(mesh, phi)?;
    const MC_SAMPLES: usize = 4096;
    let per_element: Vec<(f64, f64, f64)> = grads
        .par_iter()
        .map(|g| {
            let e = g.element;
            let el = mesh.element(e);
            let j = g.f.determinant();
            let ref_tet: [[f64; 3]; 4] = std::array::from_fn(|i| {
                let x = mesh.vertex(el[i]);
                [x[0], x[1], x[2]]
            });
            let img_tet: [[f64; 3]; 4] = std::array::from_fn(|i| {
                let y = phi.image(3, el[i]);
                [y[0], y[1], y[2]]
            });
            // left side: exact clipping of the reference tet against the
            // pullback of each cell
            let mut lhs = 0.0;
            if j != 0.0 {
                let x0 = ref_tet[0];
                let y0 = img_tet[0];
                let mut fx0 = [0.0; 3];
                g.f.apply(&x0, &mut fx0);
                for c in 0..u.num_cells() {
                    let uc = u.values[c];
                    if uc == 0.0 {
                        continue;
                    }
                    let (lo, hi) = u.cell_bounds(c);
                    let mut poly = Some(Polytope::tetrahedron(ref_tet));
                    for a in 0..3 {
                        let row = [g.f.get(a, 0), g.f.get(a, 1), g.f.get(a, 2)];
                        let shift = fx0[a] - y0[a];
                        poly = poly.and_then(|p| p.clip([-row[0], -row[1], -row[2]], -(lo[a] + shift)));
                        if poly.is_none() {
                            break;
                        }
                        poly = poly.and_then(|p| p.clip(row, hi[a] + shift));
                        if poly.is_none() {
                            break;
                        }
                    }
                    if let Some(p) = poly {
                        lhs += uc * p.volume().abs() * j.abs();
                    }
                }
            }
            // right side: stratified Monte Carlo over the image tet
            let image_vol = g.ref_volume * j.abs();
            let mut mean = 0.0;
            let mut m2 = 0.0;
            if image_vol > 0.0 {
                let mut rng = trial_rng(seed, e as u64);
                for k in 0..MC_SAMPLES {
                    let mut w = [0.0f64; 4];
                    let mut sum = 0.0;
                    for wi in w.iter_mut() {
                        *wi = -(rng.random::<f64>().max(1e-300)).ln();
                        sum += *wi;
                    }
                    let mut y = [0.0; 3];
                    for (i, img) in img_tet.iter().enumerate() {
                        for r in 0..3 {
                            y[r] += w[i] / sum * img[r];
                        }
                    }
                    let v = u.value_at(&y);
                    let delta = v - mean;
                    mean += delta / (k + 1) as f64;
                    m2 += delta * (v - mean);
                }
            }
            let rhs = image_vol * mean;
            let var = if MC_SAMPLES > 1 { m2 / (MC_SAMPLES - 1) as f64 } else { 0.0 };
            let rhs_var = image_vol * image_vol * var / MC_SAMPLES as f64;
            (lhs, rhs, rhs_var)
        })
        .collect();
    let lhs = kahan_sum(per_element.iter().map(|t| t.0));
    let rhs = kahan_sum(per_element.iter().map(|t| t.1));
    let stderr = kahan_sum(per_element.iter().map(|t| t.2)).sqrt();
    Ok(CovResult {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        approximate: true,
        rhs_std_error: Some(stderr),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, MeshShape};
    use crate::tensor::Mat;

    #[test]
    fn polygon_clip_unit_square_half() {
        let square = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let clipped = clip_polygon(&square, [1.0, 0.0], 0.5);
        assert!((polygon_area(&clipped).abs() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cov_affine_injective_constant_u() {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let f0 = Mat::from_rows(2, &[1.5, 0.25, -0.1, 0.8]);
        let phi = Deformation::from_affine(&mesh, &f0, &[0.3, 0.1]);
        let u = RectilinearPartition::constant_one(&[-2.0, -2.0], &[3.0, 3.0]);
        let r = change_of_variable_check(&mesh, &phi, &u, 0).unwrap();
        let expect = f0.determinant().abs();
        assert!((r.lhs - expect).abs() < 1e-12, "lhs {}", r.lhs);
        assert!(r.residual < 1e-12, "residual {}", r.residual);
    }

    #[test]
    fn cov_fold_counts_doubled_region() {
        // second element reflected onto the image of the first
        let mesh = make_mesh(MeshShape::UnitSquare, 1);
        let mut phi = Deformation::identity_of(&mesh);
        phi.images[3 * 2] = 0.0;
        phi.images[3 * 2 + 1] = 0.0;
        let u = RectilinearPartition::constant_one(&[-1.0, -1.0], &[2.0, 2.0]);
        let r = change_of_variable_check(&mesh, &phi, &u, 0).unwrap();
        // both elements have |J| = 1, so lhs = 1; the rhs covers the folded
        // triangle twice: 0.5 + 0.5 = 1.
        assert!((r.lhs - 1.0).abs() < 1e-14);
        assert!(r.residual < 1e-12, "residual {}", r.residual);
    }

    #[test]
    fn cov_half_plane_indicator_identity() {
        let mesh = make_mesh(MeshShape::UnitSquare, 3);
        let phi = Deformation::identity_of(&mesh);
        let u = RectilinearPartition::half_plane_indicator(&[-1.0, -1.0], &[2.0, 2.0], 0, 0.4);
        let r = change_of_variable_check(&mesh, &phi, &u, 0).unwrap();
        // overlap of {x >= 0.4} with the unit square has area 0.6
        assert!((r.lhs - 0.6).abs() < 1e-13, "lhs {}", r.lhs);
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn cov_checkerboard_on_deformed_mesh() {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let mut phi = Deformation::identity_of(&mesh);
        for i in 0..mesh.num_vertices() {
            if mesh.is_boundary_node(i) {
                continue;
            }
            let x = mesh.vertex(i);
            phi.images[i * 2] += 0.03 * (7.0 * x[1]).sin();
            phi.images[i * 2 + 1] -= 0.04 * (5.0 * x[0]).cos();
        }
        let values: Vec<f64> = (0..16).map(|i| ((i % 4 + i / 4) % 2) as f64 + 0.5).collect();
        let u = RectilinearPartition::uniform(&[-0.5, -0.5], &[1.5, 1.5], &[4, 4], values);
        let r = change_of_variable_check(&mesh, &phi, &u, 0).unwrap();
        assert!(r.residual < 1e-12, "residual {}", r.residual);
    }

    #[test]
    fn polytope_volume_of_reference_tet() {
        let tet = Polytope::tetrahedron([
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]);
        assert!((tet.volume() - 1.0 / 6.0).abs() < 1e-15);
        // clip off the corner at x > 0.5: remaining volume 1/6 - (1/6)(1/2)^3
        let clipped = tet.clip([1.0, 0.0, 0.0], 0.5).unwrap();
        let expect = 1.0 / 6.0 - (1.0 / 6.0) * 0.125;
        assert!((clipped.volume() - expect).abs() < 1e-14, "vol {}", clipped.volume());
    }

    #[test]
    fn cov_3d_affine_consistency() {
        let mesh = make_mesh(MeshShape::UnitCube, 2);
        let f0 = Mat::from_rows(3, &[1.2, 0.1, 0.0, 0.0, 0.9, 0.2, 0.1, 0.0, 1.1]);
        let phi = Deformation::from_affine(&mesh, &f0, &[0.0; 3]);
        let u = RectilinearPartition::constant_one(&[-1.0, -1.0, -1.0], &[2.5, 2.5, 2.5]);
        let r = change_of_variable_check(&mesh, &phi, &u, 5).unwrap();
        let expect = f0.determinant().abs();
        assert!(r.approximate);
        assert!((r.lhs - expect).abs() < 1e-12, "exact lhs, got {}", r.lhs);
        // u = 1 everywhere on the image makes the MC estimate exact too
        assert!((r.rhs - expect).abs() < 1e-12, "rhs {}", r.rhs);
    }

    #[test]
    fn cov_3d_half_space_against_exact_lhs() {
        let mesh = make_mesh(MeshShape::UnitCube, 2);
        let phi = Deformation::identity_of(&mesh);
        let u = RectilinearPartition::half_plane_indicator(&[-0.5; 3], &[1.5; 3], 2, 0.3);
        let r = change_of_variable_check(&mesh, &phi, &u, 5).unwrap();
        assert!((r.lhs - 0.7).abs() < 1e-12, "exact clipped lhs, got {}", r.lhs);
        let stderr = r.rhs_std_error.unwrap();
        assert!(
            r.residual < 5.0 * stderr.max(1e-4),
            "MC rhs {} vs lhs {} (stderr {stderr})",
            r.rhs,
            r.lhs
        );
    }
}
