//! Simplicial meshes of the reference domain and piecewise-affine
//! deformations.
//!
//! P1 elements keep the deformation gradient constant per element, so every
//! energy integral, Jacobian field and distortion field is exact: there is
//! no quadrature error anywhere downstream.

use crate::energy::{EnergyDensity, EnergyError};
use crate::tensor::Mat;
use rayon::prelude::*;
use std::collections::HashMap;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("element {element} has nonpositive reference volume {volume:e}")]
    DegenerateElement { element: usize, volume: f64 },
    #[error("element {element} references vertex {vertex} out of range ({num_vertices} vertices)")]
    VertexOutOfRange {
        element: usize,
        vertex: usize,
        num_vertices: usize,
    },
    #[error("unsupported dimension {0} (must be 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("malformed mesh file: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("boundary data not evaluable at node {node}: {reason}")]
    NotEvaluable { node: usize, reason: String },
    #[error("affine boundary data has nonpositive determinant {det:e}")]
    NonpositiveAffineDeterminant { det: f64 },
    #[error("boundary data dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Energy-domain failure during integration, carrying the offending element.
#[derive(Debug, Error)]
#[error("energy domain error on element {element}: {source}")]
pub struct EnergyDomainError {
    pub element: usize,
    #[source]
    pub source: EnergyError,
}

/// Triangulated (or tetrahedralized) reference domain with positively
/// oriented elements.
#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    dim: usize,
    vertices: Vec<f64>,
    elements: Vec<usize>,
    boundary_nodes: Vec<usize>,
}

impl SimplicialMesh {
    /// Validates element indices and orientation and derives the boundary
    /// node set from facets incident to exactly one element.
    pub fn new(dim: usize, vertices: Vec<f64>, elements: Vec<usize>) -> Result<SimplicialMesh, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::UnsupportedDimension(dim));
        }
        let nv = vertices.len() / dim;
        if vertices.len() % dim != 0 {
            return Err(MeshError::Malformed("vertex array length not divisible by dim".into()));
        }
        let k = dim + 1;
        if elements.len() % k != 0 {
            return Err(MeshError::Malformed("element array length not divisible by dim + 1".into()));
        }
        let mut mesh = SimplicialMesh {
            dim,
            vertices,
            elements,
            boundary_nodes: Vec::new(),
        };
        for e in 0..mesh.num_elements() {
            for &v in mesh.element(e) {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange {
                        element: e,
                        vertex: v,
                        num_vertices: nv,
                    });
                }
            }
            let vol = mesh.signed_reference_volume(e);
            if vol <= 0.0 {
                return Err(MeshError::DegenerateElement { element: e, volume: vol });
            }
        }
        mesh.boundary_nodes = mesh.compute_boundary_nodes();
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.dim..(i + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.boundary_nodes.binary_search(&i).is_ok()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&i| !self.is_boundary_node(i)).collect()
    }

    fn signed_reference_volume(&self, e: usize) -> f64 {
        let el = self.element(e);
        let edge = self.edge_matrix(el);
        edge.determinant() / factorial(self.dim)
    }

    /// Matrix with columns x_i - x_0 over the element's vertices.
    fn edge_matrix(&self, el: &[usize]) -> Mat {
        let n = self.dim;
        let x0 = self.vertex(el[0]);
        let mut m = Mat::zeros(n);
        for c in 0..n {
            let xc = self.vertex(el[c + 1]);
            for r in 0..n {
                m.set(r, c, xc[r] - x0[r]);
            }
        }
        m
    }

    pub fn reference_volume(&self, e: usize) -> f64 {
        self.signed_reference_volume(e)
    }

    pub fn total_volume(&self) -> f64 {
        kahan_sum((0..self.num_elements()).map(|e| self.reference_volume(e)))
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let el = self.element(e);
        let mut c = [0.0; 3];
        for &v in el {
            let x = self.vertex(v);
            for r in 0..self.dim {
                c[r] += x[r];
            }
        }
        for v in c.iter_mut() {
            *v /= el.len() as f64;
        }
        c
    }

    /// Bounding-box diagonal of the reference domain.
    pub fn diameter(&self) -> f64 {
        let n = self.dim;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..self.num_vertices() {
            let x = self.vertex(i);
            for r in 0..n {
                lo[r] = lo[r].min(x[r]);
                hi[r] = hi[r].max(x[r]);
            }
        }
        (0..n).map(|r| (hi[r] - lo[r]).powi(2)).sum::<f64>().sqrt()
    }

    fn facets_of(el: &[usize]) -> Vec<Vec<usize>> {
        (0..el.len())
            .map(|skip| el.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect())
            .collect()
    }

    fn compute_boundary_nodes(&self) -> Vec<usize> {
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for e in 0..self.num_elements() {
            for mut facet in Self::facets_of(self.element(e)) {
                facet.sort_unstable();
                *counts.entry(facet).or_insert(0) += 1;
            }
        }
        let mut nodes: Vec<usize> = counts
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .flat_map(|(facet, _)| facet)
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Vertex-to-vertex adjacency via shared elements.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<Vec<usize>> = vec![Vec::new(); self.num_vertices()];
        for e in 0..self.num_elements() {
            let el = self.element(e);
            for &a in el {
                for &b in el {
                    if a != b {
                        nb[a].push(b);
                    }
                }
            }
        }
        for list in nb.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Plain-text format: line 1 `n V E`, then V coordinate lines, then E
    /// element lines of zero-based vertex indices. `#` starts a comment.
    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.dim, self.num_vertices(), self.num_elements())?;
        for i in 0..self.num_vertices() {
            let coords: Vec<String> = self.vertex(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        for e in 0..self.num_elements() {
            let idx: Vec<String> = self.element(e).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", idx.join(" "))?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl BufRead) -> Result<SimplicialMesh, MeshError> {
        let mut tokens = TokenReader::new(r);
        let dim = tokens.next_usize("dimension")?;
        let nv = tokens.next_usize("vertex count")?;
        let ne = tokens.next_usize("element count")?;
        if dim != 2 && dim != 3 {
            return Err(MeshError::UnsupportedDimension(dim));
        }
        let mut vertices = Vec::with_capacity(nv * dim);
        for i in 0..nv * dim {
            let v = tokens.next_f64(&format!("vertex coordinate {i}"))?;
            if !v.is_finite() {
                return Err(MeshError::Malformed(format!("non-finite vertex coordinate {v}")));
            }
            vertices.push(v);
        }
        let mut elements = Vec::with_capacity(ne * (dim + 1));
        for i in 0..ne * (dim + 1) {
            elements.push(tokens.next_usize(&format!("element index {i}"))?);
        }
        SimplicialMesh::new(dim, vertices, elements)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
}

/// Kahan compensated summation in a fixed order.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

struct TokenReader<'a, R: BufRead> {
    reader: &'a mut R,
    buffer: Vec<String>,
}

impl<'a, R: BufRead> TokenReader<'a, R> {
    fn new(reader: &'a mut R) -> Self {
        TokenReader { reader, buffer: Vec::new() }
    }

    fn refill(&mut self) -> Result<bool, MeshError> {
        let mut line = String::new();
        loop {
            line.clear();
            if self.reader.read_line(&mut line)? == 0 {
                return Ok(false);
            }
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                self.buffer = content.split_whitespace().rev().map(|s| s.to_string()).collect();
                return Ok(true);
            }
        }
    }

    fn next_token(&mut self, what: &str) -> Result<String, MeshError> {
        while self.buffer.is_empty() {
            if !self.refill()? {
                return Err(MeshError::Malformed(format!("unexpected end of file reading {what}")));
            }
        }
        Ok(self.buffer.pop().unwrap())
    }

    fn next_usize(&mut self, what: &str) -> Result<usize, MeshError> {
        let tok = self.next_token(what)?;
        tok.parse().map_err(|_| MeshError::Malformed(format!("expected integer for {what}, got '{tok}'")))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64, MeshError> {
        let tok = self.next_token(what)?;
        tok.parse().map_err(|_| MeshError::Malformed(format!("expected number for {what}, got '{tok}'")))
    }
}

/// Built-in reference domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshShape {
    UnitSquare,
    UnitCube,
    AnnulusApprox,
}

/// Structured triangulation/tetrahedralization with positively oriented
/// elements.
pub fn make_mesh(shape: MeshShape, resolution: usize) -> SimplicialMesh {
    assert!(resolution >= 1, "resolution must be at least 1");
    match shape {
        MeshShape::UnitSquare => unit_square(resolution),
        MeshShape::UnitCube => unit_cube(resolution),
        MeshShape::AnnulusApprox => annulus(resolution),
    }
}

fn unit_square(m: usize) -> SimplicialMesh {
    let nv = m + 1;
    let mut vertices = Vec::with_capacity(nv * nv * 2);
    for j in 0..nv {
        for i in 0..nv {
            vertices.push(i as f64 / m as f64);
            vertices.push(j as f64 / m as f64);
        }
    }
    let idx = |i: usize, j: usize| j * nv + i;
    let mut elements = Vec::with_capacity(m * m * 6);
    for j in 0..m {
        for i in 0..m {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            elements.extend_from_slice(&[v00, v10, v01]);
            elements.extend_from_slice(&[v10, v11, v01]);
        }
    }
    SimplicialMesh::new(2, vertices, elements).expect("structured unit square is valid")
}

fn unit_cube(m: usize) -> SimplicialMesh {
    let nv = m + 1;
    let mut vertices = Vec::with_capacity(nv * nv * nv * 3);
    for k in 0..nv {
        for j in 0..nv {
            for i in 0..nv {
                vertices.push(i as f64 / m as f64);
                vertices.push(j as f64 / m as f64);
                vertices.push(k as f64 / m as f64);
            }
        }
    }
    let idx = |i: usize, j: usize, k: usize| (k * nv + j) * nv + i;
    // Kuhn split: six tetrahedra per cell along vertex-order permutations of
    // the main diagonal.
    let perms: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut elements = Vec::with_capacity(m * m * m * 24);
    let mut scratch = [[0usize; 3]; 4];
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                for perm in &perms {
                    let mut corner = [i, j, k];
                    scratch[0] = corner;
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        scratch[step + 1] = corner;
                    }
                    let mut tet = [
                        idx(scratch[0][0], scratch[0][1], scratch[0][2]),
                        idx(scratch[1][0], scratch[1][1], scratch[1][2]),
                        idx(scratch[2][0], scratch[2][1], scratch[2][2]),
                        idx(scratch[3][0], scratch[3][1], scratch[3][2]),
                    ];
                    if tet_orientation(&vertices, &tet) < 0.0 {
                        tet.swap(1, 2);
                    }
                    elements.extend_from_slice(&tet);
                }
            }
        }
    }
    SimplicialMesh::new(3, vertices, elements).expect("structured unit cube is valid")
}

fn tet_orientation(vertices: &[f64], tet: &[usize; 4]) -> f64 {
    let p = |v: usize| &vertices[v * 3..v * 3 + 3];
    let x0 = p(tet[0]);
    let mut m = Mat::zeros(3);
    for c in 0..3 {
        let xc = p(tet[c + 1]);
        for r in 0..3 {
            m.set(r, c, xc[r] - x0[r]);
        }
    }
    m.determinant()
}

/// Polygonal approximation of the annulus 0.5 <= |x| <= 1 centered at the
/// origin: `8 * resolution` angular segments, `resolution` radial layers.
fn annulus(m: usize) -> SimplicialMesh {
    let na = 8 * m;
    let nr = m + 1;
    let mut vertices = Vec::with_capacity(na * nr * 2);
    for layer in 0..nr {
        let r = 0.5 + 0.5 * layer as f64 / m as f64;
        for seg in 0..na {
            let theta = std::f64::consts::TAU * seg as f64 / na as f64;
            vertices.push(r * theta.cos());
            vertices.push(r * theta.sin());
        }
    }
    let idx = |layer: usize, seg: usize| layer * na + seg % na;
    let mut elements = Vec::new();
    for layer in 0..m {
        for seg in 0..na {
            let (v00, v10, v01, v11) = (
                idx(layer, seg),
                idx(layer, seg + 1),
                idx(layer + 1, seg),
                idx(layer + 1, seg + 1),
            );
            // radial edge first keeps the orientation positive
            elements.extend_from_slice(&[v00, v01, v10]);
            elements.extend_from_slice(&[v10, v01, v11]);
        }
    }
    SimplicialMesh::new(2, vertices, elements).expect("structured annulus is valid")
}

/// Uniform subdivision: each triangle into 4 children, each tetrahedron into
/// 8 (corner cut plus octahedron split with a fixed diagonal).
pub fn refine(mesh: &SimplicialMesh) -> SimplicialMesh {
    let n = mesh.dim();
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<f64>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&v) = midpoint.get(&key) {
            return v;
        }
        let v = vertices.len() / n;
        for r in 0..n {
            let xm = 0.5 * (vertices[a * n + r] + vertices[b * n + r]);
            vertices.push(xm);
        }
        midpoint.insert(key, v);
        v
    };
    let mut elements = Vec::with_capacity(mesh.elements.len() * (1 << n));
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e).to_vec();
        match n {
            2 => {
                let (a, b, c) = (el[0], el[1], el[2]);
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                elements.extend_from_slice(&[a, ab, ca]);
                elements.extend_from_slice(&[ab, b, bc]);
                elements.extend_from_slice(&[ca, bc, c]);
                elements.extend_from_slice(&[ab, bc, ca]);
            }
            3 => {
                let (a, b, c, d) = (el[0], el[1], el[2], el[3]);
                let ab = mid(a, b, &mut vertices);
                let ac = mid(a, c, &mut vertices);
                let ad = mid(a, d, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let bd = mid(b, d, &mut vertices);
                let cd = mid(c, d, &mut vertices);
                // corner tets
                let mut children = vec![
                    [a, ab, ac, ad],
                    [ab, b, bc, bd],
                    [ac, bc, c, cd],
                    [ad, bd, cd, d],
                    // octahedron split along the (ac, bd) diagonal
                    [ab, ac, ad, bd],
                    [ab, ac, bc, bd],
                    [ac, ad, bd, cd],
                    [ac, bc, bd, cd],
                ];
                for tet in children.iter_mut() {
                    if tet_orientation(&vertices, tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    elements.extend_from_slice(tet);
                }
            }
            _ => unreachable!(),
        }
    }
    SimplicialMesh::new(n, vertices, elements).expect("uniform refinement preserves validity")
}

/// Nodal images of a piecewise-affine deformation, paired with its mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation {
    pub images: Vec<f64>,
}

impl Deformation {
    pub fn identity_of(mesh: &SimplicialMesh) -> Deformation {
        Deformation { images: mesh.vertices.clone() }
    }

    /// phi(x) = F0 x + b applied to every node.
    pub fn from_affine(mesh: &SimplicialMesh, f0: &Mat, b: &[f64]) -> Deformation {
        let n = mesh.dim();
        let mut images = vec![0.0; mesh.vertices.len()];
        let mut out = [0.0; 3];
        for i in 0..mesh.num_vertices() {
            f0.apply(mesh.vertex(i), &mut out);
            for r in 0..n {
                images[i * n + r] = out[r] + b.get(r).copied().unwrap_or(0.0);
            }
        }
        Deformation { images }
    }

    pub fn image(&self, dim: usize, i: usize) -> &[f64] {
        &self.images[i * dim..(i + 1) * dim]
    }

    pub fn is_finite(&self) -> bool {
        self.images.iter().all(|v| v.is_finite())
    }

    /// Deformation file: same `n V E` header as the mesh, then V image rows.
    pub fn write(&self, mesh: &SimplicialMesh, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", mesh.dim(), mesh.num_vertices(), mesh.num_elements())?;
        for i in 0..mesh.num_vertices() {
            let coords: Vec<String> = self
                .image(mesh.dim(), i)
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        Ok(())
    }

    pub fn read(mesh: &SimplicialMesh, r: &mut impl BufRead) -> Result<Deformation, MeshError> {
        let mut tokens = TokenReader::new(r);
        let dim = tokens.next_usize("dimension")?;
        let nv = tokens.next_usize("vertex count")?;
        let ne = tokens.next_usize("element count")?;
        if dim != mesh.dim() || nv != mesh.num_vertices() || ne != mesh.num_elements() {
            return Err(MeshError::Malformed(format!(
                "deformation header {dim} {nv} {ne} does not match mesh {} {} {}",
                mesh.dim(),
                mesh.num_vertices(),
                mesh.num_elements()
            )));
        }
        let mut images = Vec::with_capacity(nv * dim);
        for i in 0..nv * dim {
            let v = tokens.next_f64(&format!("image coordinate {i}"))?;
            if !v.is_finite() {
                return Err(MeshError::Malformed(format!("non-finite image coordinate {v}")));
            }
            images.push(v);
        }
        Ok(Deformation { images })
    }
}

/// Constant deformation gradient of one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementGradient {
    pub element: usize,
    pub f: Mat,
    pub ref_volume: f64,
}

/// Per-element deformation gradients: solves the n-by-n system mapping
/// reference edge vectors to image edge vectors. Exact for affine maps.
pub fn element_gradients(mesh: &SimplicialMesh, phi: &Deformation) -> Result<Vec<ElementGradient>, MeshError> {
    let n = mesh.dim();
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let el = mesh.element(e);
            let edge = mesh.edge_matrix(el);
            let det = edge.determinant();
            if det <= 0.0 {
                return Err(MeshError::DegenerateElement { element: e, volume: det / factorial(n) });
            }
            let inv = edge.adjugate().scale(1.0 / det);
            let x0 = phi.image(n, el[0]);
            let mut y = Mat::zeros(n);
            for c in 0..n {
                let xc = phi.image(n, el[c + 1]);
                for r in 0..n {
                    y.set(r, c, xc[r] - x0[r]);
                }
            }
            Ok(ElementGradient {
                element: e,
                f: y.matmul(&inv),
                ref_volume: det / factorial(n),
            })
        })
        .collect()
}

/// Optional body-force potential Theta(x, y) added to the stored energy.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyForce {
    /// weight * |y - (F0 x + b)|^2: a quadratic well pulling each material
    /// point toward an affine target.
    QuadraticWell { weight: f64, target: Mat, offset: Vec<f64> },
}

impl BodyForce {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            BodyForce::QuadraticWell { weight, target, offset } => {
                let n = x.len();
                let mut tx = [0.0; 3];
                target.apply(x, &mut tx);
                let mut acc = 0.0;
                for r in 0..n {
                    let d = y[r] - tx[r] - offset.get(r).copied().unwrap_or(0.0);
                    acc += d * d;
                }
                weight * acc
            }
        }
    }

    /// Gradient with respect to the image point y.
    pub fn grad_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            BodyForce::QuadraticWell { weight, target, offset } => {
                let n = x.len();
                let mut tx = [0.0; 3];
                target.apply(x, &mut tx);
                for r in 0..n {
                    out[r] = 2.0 * weight * (y[r] - tx[r] - offset.get(r).copied().unwrap_or(0.0));
                }
            }
        }
    }
}

/// Total stored energy: sum over elements of |T| W(x_T, F_T), exact for
/// homogeneous W since F is constant per element. The optional body-force
/// term uses the centroid rule.
pub fn total_energy(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    w: &EnergyDensity,
    theta: Option<&BodyForce>,
) -> Result<f64, EnergyDomainError> {
    let n = mesh.dim();
    let grads = element_gradients(mesh, phi).map_err(|e| match e {
        MeshError::DegenerateElement { element, .. } => EnergyDomainError {
            element,
            source: EnergyError::NonpositiveDeterminant { det: 0.0 },
        },
        _ => unreachable!("element_gradients only fails on degenerate elements"),
    })?;
    let terms: Vec<Result<f64, EnergyDomainError>> = grads
        .par_iter()
        .map(|g| {
            let xc = mesh.centroid(g.element);
            let mut val = w
                .eval(&xc[..n], &g.f)
                .map_err(|source| EnergyDomainError { element: g.element, source })?
                * g.ref_volume;
            if let Some(bf) = theta {
                let el = mesh.element(g.element);
                let mut yc = [0.0; 3];
                for &v in el {
                    let yi = phi.image(n, v);
                    for r in 0..n {
                        yc[r] += yi[r];
                    }
                }
                for y in yc.iter_mut() {
                    *y /= el.len() as f64;
                }
                val += bf.eval(&xc[..n], &yc[..n]) * g.ref_volume;
            }
            Ok(val)
        })
        .collect();
    // fixed-order compensated reduction keeps the sum bit-stable across
    // thread counts
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let y = t? - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(sum)
}

/// Dirichlet boundary data: a mapping rule evaluable at boundary vertices.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryData {
    Identity,
    /// phi(x) = matrix x + offset
    Affine { matrix: Mat, offset: Vec<f64> },
    /// Rotation by `angle` about the domain centroid (n = 3: about the z
    /// axis through the centroid).
    Twist { angle: f64, center: Vec<f64> },
    /// diag(factor, 1/factor[, 1]) about the origin.
    Squeeze { factor: f64 },
    /// Explicit per-node image table.
    Table(std::collections::BTreeMap<usize, Vec<f64>>),
}

impl BoundaryData {
    pub fn eval(&self, node: usize, x: &[f64]) -> Result<Vec<f64>, BoundaryError> {
        let n = x.len();
        match self {
            BoundaryData::Identity => Ok(x.to_vec()),
            BoundaryData::Affine { matrix, offset } => {
                if matrix.dim() != n {
                    return Err(BoundaryError::DimensionMismatch { expected: n, got: matrix.dim() });
                }
                let mut out = [0.0; 3];
                matrix.apply(x, &mut out);
                Ok((0..n).map(|r| out[r] + offset.get(r).copied().unwrap_or(0.0)).collect())
            }
            BoundaryData::Twist { angle, center } => {
                let (s, c) = angle.sin_cos();
                let cx = center.first().copied().unwrap_or(0.0);
                let cy = center.get(1).copied().unwrap_or(0.0);
                let dx = x[0] - cx;
                let dy = x[1] - cy;
                let mut out = x.to_vec();
                out[0] = cx + c * dx - s * dy;
                out[1] = cy + s * dx + c * dy;
                Ok(out)
            }
            BoundaryData::Squeeze { factor } => {
                if *factor <= 0.0 {
                    return Err(BoundaryError::NotEvaluable {
                        node,
                        reason: format!("squeeze factor {factor} must be positive"),
                    });
                }
                let mut out = x.to_vec();
                out[0] = factor * x[0];
                out[1] = x[1] / factor;
                Ok(out)
            }
            BoundaryData::Table(map) => map.get(&node).cloned().ok_or(BoundaryError::NotEvaluable {
                node,
                reason: "node missing from boundary table".into(),
            }),
        }
    }
}

/// Outcome details of boundary interpolation.
#[derive(Debug, Clone, Default)]
pub struct InitDiagnostics {
    /// True when the smoothed affine initializer produced a nonpositive
    /// element determinant and interior nodes fell back to their reference
    /// positions.
    pub used_reference_fallback: bool,
}

/// Sets boundary nodal images to the boundary data and initializes interior
/// images with an affine least-squares fit over the boundary nodes followed
/// by one Jacobi pass of Laplacian smoothing.
pub fn interpolate_boundary(
    mesh: &SimplicialMesh,
    data: &BoundaryData,
) -> Result<(Deformation, InitDiagnostics), BoundaryError> {
    let n = mesh.dim();
    let mut images = mesh.vertices.clone();
    for &b in mesh.boundary_nodes() {
        let y = data.eval(b, mesh.vertex(b))?;
        images[b * n..(b + 1) * n].copy_from_slice(&y);
    }

    // affine least-squares fit of the boundary images: minimize
    // sum |A x + b - y|^2 via normal equations on homogeneous coordinates
    let k = n + 1;
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k * n];
    for &bn in mesh.boundary_nodes() {
        let x = mesh.vertex(bn);
        let mut h = [0.0; 4];
        h[..n].copy_from_slice(x);
        h[n] = 1.0;
        let y = &images[bn * n..(bn + 1) * n];
        for i in 0..k {
            for j in 0..k {
                gram[i * k + j] += h[i] * h[j];
            }
            for r in 0..n {
                rhs[i * n + r] += h[i] * y[r];
            }
        }
    }
    let fit = solve_small(&mut gram, &mut rhs, k, n);

    let mut interior_images = images.clone();
    if let Some(sol) = fit {
        for i in 0..mesh.num_vertices() {
            if mesh.is_boundary_node(i) {
                continue;
            }
            let x = mesh.vertex(i);
            for r in 0..n {
                let mut v = sol[n * n + r]; // constant part
                for c in 0..n {
                    v += sol[c * n + r] * x[c];
                }
                interior_images[i * n + r] = v;
            }
        }
    }

    // one Jacobi pass of Laplacian smoothing on interior nodes
    let neighbors = mesh.vertex_neighbors();
    let mut smoothed = interior_images.clone();
    for i in 0..mesh.num_vertices() {
        if mesh.is_boundary_node(i) || neighbors[i].is_empty() {
            continue;
        }
        for r in 0..n {
            let sum: f64 = neighbors[i].iter().map(|&j| interior_images[j * n + r]).sum();
            smoothed[i * n + r] = sum / neighbors[i].len() as f64;
        }
    }

    let candidate = Deformation { images: smoothed };
    let feasible = element_gradients(mesh, &candidate)
        .map(|grads| grads.iter().all(|g| g.f.determinant() > 0.0))
        .unwrap_or(false);
    if feasible {
        return Ok((candidate, InitDiagnostics::default()));
    }
    // fall back to reference positions on the interior
    let mut fallback = mesh.vertices.clone();
    for &b in mesh.boundary_nodes() {
        for r in 0..n {
            fallback[b * n + r] = images[b * n + r];
        }
    }
    Ok((
        Deformation { images: fallback },
        InitDiagnostics { used_reference_fallback: true },
    ))
}

/// Gaussian elimination with partial pivoting for the tiny LSQ systems;
/// rhs holds `ncols` right-hand sides.
fn solve_small(a: &mut [f64], rhs: &mut [f64], k: usize, ncols: usize) -> Option<Vec<f64>> {
    for col in 0..k {
        let mut piv = col;
        for row in col + 1..k {
            if a[row * k + col].abs() > a[piv * k + col].abs() {
                piv = row;
            }
        }
        if a[piv * k + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..k {
                a.swap(col * k + j, piv * k + j);
            }
            for j in 0..ncols {
                rhs.swap(col * ncols + j, piv * ncols + j);
            }
        }
        let diag = a[col * k + col];
        for row in 0..k {
            if row == col {
                continue;
            }
            let factor = a[row * k + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in 0..k {
                a[row * k + j] -= factor * a[col * k + j];
            }
            for j in 0..ncols {
                rhs[row * ncols + j] -= factor * rhs[col * ncols + j];
            }
        }
    }
    let mut out = vec![0.0; k * ncols];
    for row in 0..k {
        let diag = a[row * k + row];
        for j in 0..ncols {
            out[row * ncols + j] = rhs[row * ncols + j] / diag;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::W2Params;

    #[test]
    fn unit_square_resolution_one() {
        let mesh = make_mesh(MeshShape::UnitSquare, 1);
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.num_elements(), 2);
        assert!((mesh.total_volume() - 1.0).abs() < 1e-15);
        assert_eq!(mesh.boundary_nodes().len(), 4);
    }

    #[test]
    fn unit_cube_resolution_one() {
        let mesh = make_mesh(MeshShape::UnitCube, 1);
        assert_eq!(mesh.num_elements(), 6);
        assert!((mesh.total_volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn refinement_preserves_volume() {
        for shape in [MeshShape::UnitSquare, MeshShape::UnitCube, MeshShape::AnnulusApprox] {
            let mut mesh = make_mesh(shape, 2);
            let vol = mesh.total_volume();
            for _ in 0..2 {
                mesh = refine(&mesh);
                assert!(
                    (mesh.total_volume() - vol).abs() <= 1e-14 * vol.max(1.0),
                    "volume drifted under refinement for {shape:?}"
                );
            }
        }
    }

    #[test]
    fn refine_counts() {
        let mesh = make_mesh(MeshShape::UnitSquare, 1);
        let fine = refine(&mesh);
        assert_eq!(fine.num_elements(), 8);
        let cube = make_mesh(MeshShape::UnitCube, 1);
        let fine3 = refine(&cube);
        assert_eq!(fine3.num_elements(), 48);
    }

    #[test]
    fn identity_deformation_gradients() {
        let mesh = make_mesh(MeshShape::UnitSquare, 3);
        let phi = Deformation::identity_of(&mesh);
        for g in element_gradients(&mesh, &phi).unwrap() {
            assert!(g.f.sub(&Mat::identity(2)).max_abs() < 1e-13);
        }
    }

    #[test]
    fn affine_reproduction() {
        let f0 = Mat::from_rows(2, &[1.3, 0.4, -0.2, 0.9]);
        let b = [0.7, -0.3];
        for shape in [MeshShape::UnitSquare, MeshShape::AnnulusApprox] {
            let mesh = make_mesh(shape, 3);
            let phi = Deformation::from_affine(&mesh, &f0, &b);
            for g in element_gradients(&mesh, &phi).unwrap() {
                assert!(
                    g.f.sub(&f0).max_abs() < 1e-13,
                    "affine gradient not reproduced on {shape:?}"
                );
            }
        }
        let f0 = Mat::from_rows(3, &[1.1, 0.2, 0.0, -0.1, 0.9, 0.3, 0.0, 0.1, 1.2]);
        let mesh = make_mesh(MeshShape::UnitCube, 2);
        let phi = Deformation::from_affine(&mesh, &f0, &[0.0, 0.0, 0.0]);
        for g in element_gradients(&mesh, &phi).unwrap() {
            assert!(g.f.sub(&f0).max_abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_converges_for_quadratic_map() {
        // phi(x) = (x1^2, x2): element gradients converge to the pointwise
        // derivative at rate O(h) in the max norm.
        let mut errors = Vec::new();
        for level in 0..4 {
            let mesh = make_mesh(MeshShape::UnitSquare, 4 << level);
            let mut images = Vec::with_capacity(mesh.num_vertices() * 2);
            for i in 0..mesh.num_vertices() {
                let x = mesh.vertex(i);
                images.push(x[0] * x[0]);
                images.push(x[1]);
            }
            let phi = Deformation { images };
            let mut max_err = 0.0f64;
            for g in element_gradients(&mesh, &phi).unwrap() {
                let c = mesh.centroid(g.element);
                let exact = Mat::from_rows(2, &[2.0 * c[0], 0.0, 0.0, 1.0]);
                max_err = max_err.max(g.f.sub(&exact).max_abs());
            }
            errors.push(max_err);
        }
        for w in errors.windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio < 0.7, "expected O(h) decay, ratios {errors:?}");
        }
    }

    #[test]
    fn total_energy_identity_unit_square_w2() {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let phi = Deformation::identity_of(&mesh);
        let w = EnergyDensity::W2(W2Params::standard());
        let val = total_energy(&mesh, &phi, &w, None).unwrap();
        assert!((val - 3.0).abs() < 1e-13);
    }

    #[test]
    fn total_energy_affine_invariant_under_refinement() {
        let f0 = Mat::from_rows(2, &[1.4, 0.3, 0.1, 0.8]);
        let w = EnergyDensity::W2(W2Params::standard());
        let mut mesh = make_mesh(MeshShape::UnitSquare, 2);
        let mut values = Vec::new();
        for _ in 0..4 {
            let phi = Deformation::from_affine(&mesh, &f0, &[0.0; 2]);
            values.push(total_energy(&mesh, &phi, &w, None).unwrap());
            mesh = refine(&mesh);
        }
        for v in &values[1..] {
            assert!((v - values[0]).abs() <= 1e-12 * values[0].abs());
        }
    }

    #[test]
    fn total_energy_det_only_measures_image_area() {
        let mesh = make_mesh(MeshShape::UnitSquare, 5);
        let phi = Deformation::from_affine(&mesh, &Mat::diag(&[2.0, 1.0]), &[0.0; 2]);
        let val = total_energy(&mesh, &phi, &EnergyDensity::DetOnly, None).unwrap();
        assert!((val - 2.0).abs() < 1e-13);
    }

    #[test]
    fn total_energy_names_offending_element() {
        let mesh = make_mesh(MeshShape::UnitSquare, 1);
        let mut phi = Deformation::identity_of(&mesh);
        // collapse vertex 3 onto vertex 0 to invert element 1
        phi.images[3 * 2] = -1.0;
        phi.images[3 * 2 + 1] = -1.0;
        let w = EnergyDensity::W1(crate::energy::W1Params::standard());
        let err = total_energy(&mesh, &phi, &w, None).unwrap_err();
        assert_eq!(err.element, 1);
    }

    #[test]
    fn boundary_interpolation_identity() {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let (phi, diag) = interpolate_boundary(&mesh, &BoundaryData::Identity).unwrap();
        assert!(!diag.used_reference_fallback);
        for i in 0..mesh.num_vertices() {
            let x = mesh.vertex(i);
            let y = phi.image(2, i);
            assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_interpolation_affine_extension() {
        let f0 = Mat::from_rows(2, &[2.0, 0.5, 0.0, 1.5]);
        let mesh = make_mesh(MeshShape::UnitSquare, 5);
        let data = BoundaryData::Affine { matrix: f0, offset: vec![0.1, 0.2] };
        let (phi, diag) = interpolate_boundary(&mesh, &data).unwrap();
        assert!(!diag.used_reference_fallback);
        let det0 = f0.determinant();
        for g in element_gradients(&mesh, &phi).unwrap() {
            assert!(
                (g.f.determinant() - det0).abs() < 1e-10,
                "affine extension should reproduce constant determinant"
            );
        }
    }

    #[test]
    fn boundary_interpolation_convex_quadrilateral_stays_flip_free() {
        // unit square boundary mapped to a convex quadrilateral
        let mesh = make_mesh(MeshShape::UnitSquare, 6);
        let mut table = std::collections::BTreeMap::new();
        for &b in mesh.boundary_nodes() {
            let x = mesh.vertex(b);
            // bilinear map onto the convex quad (0,0) (2,0.3) (2.4,2.2) (-0.3,1.8)
            let (u, v) = (x[0], x[1]);
            let corners = [[0.0, 0.0], [2.0, 0.3], [2.4, 2.2], [-0.3, 1.8]];
            let y = [
                (1.0 - u) * (1.0 - v) * corners[0][0]
                    + u * (1.0 - v) * corners[1][0]
                    + u * v * corners[2][0]
                    + (1.0 - u) * v * corners[3][0],
                (1.0 - u) * (1.0 - v) * corners[0][1]
                    + u * (1.0 - v) * corners[1][1]
                    + u * v * corners[2][1]
                    + (1.0 - u) * v * corners[3][1],
            ];
            table.insert(b, y.to_vec());
        }
        let (phi, diag) = interpolate_boundary(&mesh, &BoundaryData::Table(table)).unwrap();
        assert!(!diag.used_reference_fallback);
        for g in element_gradients(&mesh, &phi).unwrap() {
            assert!(g.f.determinant() > 0.0, "initializer flipped element {}", g.element);
        }
    }

    #[test]
    fn boundary_error_names_missing_node() {
        let mesh = make_mesh(MeshShape::UnitSquare, 2);
        let table = std::collections::BTreeMap::new();
        let err = interpolate_boundary(&mesh, &BoundaryData::Table(table)).unwrap_err();
        match err {
            BoundaryError::NotEvaluable { node, .. } => {
                assert!(mesh.is_boundary_node(node));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mesh_roundtrip_through_text_format() {
        let mesh = make_mesh(MeshShape::AnnulusApprox, 2);
        let mut buf = Vec::new();
        mesh.write(&mut buf).unwrap();
        let parsed = SimplicialMesh::read(&mut std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(parsed.num_vertices(), mesh.num_vertices());
        assert_eq!(parsed.num_elements(), mesh.num_elements());
        assert_eq!(parsed.vertices, mesh.vertices);
        assert_eq!(parsed.elements, mesh.elements);
    }

    #[test]
    fn deformation_roundtrip_and_comments() {
        let mesh = make_mesh(MeshShape::UnitSquare, 2);
        let phi = Deformation::from_affine(&mesh, &Mat::diag(&[1.5, 0.5]), &[0.25, 0.0]);
        let mut buf = Vec::new();
        phi.write(&mesh, &mut buf).unwrap();
        let mut text = String::from("# deformation file\n");
        text.push_str(std::str::from_utf8(&buf).unwrap());
        let parsed = Deformation::read(&mesh, &mut std::io::Cursor::new(text.as_bytes())).unwrap();
        assert_eq!(parsed.images, phi.images);
    }

    #[test]
    fn mesh_reader_rejects_flipped_elements() {
        let text = "2 3 1\n0 0\n1 0\n0 1\n0 2 1\n";
        let err = SimplicialMesh::read(&mut std::io::Cursor::new(text.as_bytes())).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateElement { .. }));
    }
}
