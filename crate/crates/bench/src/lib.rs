//! Shared fixtures for the criterion benchmarks.

use fdlab_core::mesh::{make_mesh, Deformation, MeshShape, SimplicialMesh};
use fdlab_core::sampling::trial_rng;
use rand::Rng as _;

/// Unit-square mesh with a deterministic flip-free interior perturbation.
pub fn perturbed_square(resolution: usize, seed: u64) -> (SimplicialMesh, Deformation) {
    let mesh = make_mesh(MeshShape::UnitSquare, resolution);
    let mut phi = Deformation::identity_of(&mesh);
    let mut rng = trial_rng(seed, 0);
    let amp = 0.2 / resolution as f64;
    for i in 0..mesh.num_vertices() {
        if mesh.is_boundary_node(i) {
            continue;
        }
        for r in 0..2 {
            phi.images[i * 2 + r] += amp * (rng.random::<f64>() - 0.5);
        }
    }
    (mesh, phi)
}
