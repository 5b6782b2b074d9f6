//! Composition-operator norm inequality for discrete homeomorphisms.
//!
//! For a flip-free piecewise-affine phi with distortion operator function
//! K_{phi,n} = |D phi| / J^{1/n} summable in L_{ns}, the inverse map psi
//! satisfies
//!   ||K_{psi,q'} | L_rho(Omega')|| <= ||K_{phi,n} | L_{ns}(Omega)||^{n-1},
//! with q' = ns / (s - n + 1) and 1/rho = (n - 1)/(ns). Both sides are exact
//! for piecewise-affine maps: the inverse gradient on the image element of
//! volume |T| J is F^{-1}.

use super::AdmissibilityError;
use crate::mesh::{element_gradients, kahan_sum, Deformation, SimplicialMesh};
use crate::tensor::NormKind;

#[derive(Debug, Clone)]
pub struct CompositionNormResult {
    /// `||K_{psi,q'} | L_rho(Omega')||`
    pub lhs: f64,
    /// `||K_{phi,n} | L_{ns}(Omega)||^{n-1}`
    pub rhs: f64,
    pub satisfied: bool,
    pub q_prime: f64,
    pub rho: f64,
    /// Integrability exponent of the forward distortion (kappa = ns).
    pub kappa: f64,
}

/// Relative slack on the inequality comparison.
pub const COMPOSITION_SLACK: f64 = 1e-10;

pub fn composition_norm_check(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    s: f64,
    norm: NormKind,
) -> Result<CompositionNormResult, AdmissibilityError> {
    let n = mesh.dim() as f64;
    if s <= n - 1.0 {
        return Err(AdmissibilityError::ExponentTooSmall { s, min: n - 1.0 });
    }
    let grads = element_gradients(mesh, phi)?;
    for g in &grads {
        let det = g.f.determinant();
        if det <= 0.0 {
            return Err(AdmissibilityError::NonInvertibleElement {
                element: g.element,
                det,
            });
        }
    }
    let kappa = n * s;
    let q_prime = n * s / (s - n + 1.0);
    let rho = n * s / (n - 1.0);

    // forward distortion K_{phi,n} = |F| / J^{1/n} on the reference element
    let forward = kahan_sum(grads.iter().map(|g| {
        let j = g.f.determinant();
        let k = g.f.norm(norm) / j.powf(1.0 / n);
        g.ref_volume * k.powf(kappa)
    }));
    let forward_norm = forward.powf(1.0 / kappa);

    // inverse distortion K_{psi,q'} = |F^{-1}| / (det F^{-1})^{1/q'} on the
    // image element of volume |T| J
    let inverse = kahan_sum(grads.iter().map(|g| {
        let j = g.f.determinant();
        let f_inv = g.f.inverse().expect("det > 0 checked above");
        let k_psi = f_inv.norm(norm) / (1.0 / j).powf(1.0 / q_prime);
        (g.ref_volume * j) * k_psi.powf(rho)
    }));
    let lhs = inverse.powf(1.0 / rho);
    let rhs = forward_norm.powf(n - 1.0);
    Ok(CompositionNormResult {
        lhs,
        rhs,
        satisfied: lhs <= rhs * (1.0 + COMPOSITION_SLACK),
        q_prime,
        rho,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, MeshShape};
    use crate::sampling::trial_rng;
    use crate::tensor::Mat;
    use rand::Rng;

    #[test]
    fn identity_attains_equality() {
        let mesh = make_mesh(MeshShape::UnitSquare, 3);
        let phi = Deformation::identity_of(&mesh);
        let r = composition_norm_check(&mesh, &phi, 2.0, NormKind::Operator).unwrap();
        assert!(r.satisfied);
        assert!((r.lhs - 1.0).abs() < 1e-13);
        assert!((r.rhs - 1.0).abs() < 1e-13);
    }

    #[test]
    fn diagonal_stretch_closed_form() {
        // phi = diag(2,1), s = 2, n = 2: q' = 4, rho = 4, kappa = 4.
        // K_phi = 2 / sqrt(2) = sqrt(2); ||K_phi||_{L_4} = sqrt(2) on the
        // unit square. Inverse: |F^{-1}| = 1, J_psi = 1/2, K_psi = 2^{1/4};
        // ||K_psi||_{L_4(Omega')} with |Omega'| = 2 is 2^{1/4} 2^{1/4} =
        // sqrt(2). Equality.
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let phi = Deformation::from_affine(&mesh, &Mat::diag(&[2.0, 1.0]), &[0.0; 2]);
        let r = composition_norm_check(&mesh, &phi, 2.0, NormKind::Operator).unwrap();
        assert!((r.q_prime - 4.0).abs() < 1e-15);
        assert!((r.rho - 4.0).abs() < 1e-15);
        let expect = 2f64.sqrt();
        assert!((r.lhs - expect).abs() < 1e-12, "lhs {}", r.lhs);
        assert!((r.rhs - expect).abs() < 1e-12, "rhs {}", r.rhs);
        assert!(r.satisfied);
    }

    #[test]
    fn random_flip_free_perturbations_satisfy_inequality() {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        for trial in 0..100u64 {
            let mut rng = trial_rng(97, trial);
            let mut phi = Deformation::identity_of(&mesh);
            for i in 0..mesh.num_vertices() {
                if mesh.is_boundary_node(i) {
                    continue;
                }
                for r in 0..2 {
                    phi.images[i * 2 + r] += 0.07 * (rng.random::<f64>() - 0.5);
                }
            }
            let grads = element_gradients(&mesh, &phi).unwrap();
            if grads.iter().any(|g| g.f.determinant() <= 0.0) {
                continue;
            }
            let r = composition_norm_check(&mesh, &phi, 2.0, NormKind::Operator).unwrap();
            assert!(
                r.satisfied,
                "trial {trial}: lhs {} > rhs {}",
                r.lhs, r.rhs
            );
        }
    }

    #[test]
    fn rejects_flipped_elements() {
        let mesh = make_mesh(MeshShape::UnitSquare, 1);
        let mut phi = Deformation::identity_of(&mesh);
        phi.images[3 * 2] = 0.0;
        phi.images[3 * 2 + 1] = 0.0;
        let err = composition_norm_check(&mesh, &phi, 2.0, NormKind::Operator);
        assert!(matches!(
            err,
            Err(AdmissibilityError::NonInvertibleElement { element: 1, .. })
        ));
    }

    #[test]
    fn three_dimensional_identity_equality() {
        let mesh = make_mesh(MeshShape::UnitCube, 2);
        let phi = Deformation::identity_of(&mesh);
        let r = composition_norm_check(&mesh, &phi, 2.5, NormKind::Operator).unwrap();
        assert!(r.satisfied);
        assert!((r.lhs - 1.0).abs() < 1e-13);
        assert!((r.rhs - 1.0).abs() < 1e-13);
    }

    #[test]
    fn three_dimensional_stretch_satisfied() {
        let mesh = make_mesh(MeshShape::UnitCube, 2);
        let phi = Deformation::from_affine(&mesh, &Mat::diag(&[2.0, 1.0, 0.8]), &[0.0; 3]);
        let r = composition_norm_check(&mesh, &phi, 2.5, NormKind::Operator).unwrap();
        assert!(r.satisfied, "lhs {} rhs {}", r.lhs, r.rhs);
    }
}
