//! Numerical laboratory for minimizing polyconvex stored-energy functionals
//! over piecewise-affine deformations under finite-distortion admissibility
//! constraints, together with the identities and convergence experiments the
//! underlying variational theory rests on.

pub mod admissibility;
pub mod energy;
pub mod jsonfmt;
pub mod mesh;
pub mod minimizer;
pub mod quadrature;
pub mod sampling;
pub mod tensor;

pub use admissibility::{
    AdmissibilityError, AdmissibilityReport, BoundField, ClassViolation, DistortionField,
};
pub use energy::{
    BarrierVerdict, CoercivityVerdict, EnergyDensity, EnergyError, OgdenParams, PolyconvexityVerdict,
    PowerTerm, SvkParams, Volumetric, W1Params, W2Params,
};
pub use mesh::{
    BodyForce, BoundaryData, Deformation, ElementGradient, MeshError, MeshShape, SimplicialMesh,
};
pub use minimizer::{MinimizationTrace, MinimizeError, MinimizerConfig, TerminationReason};
pub use tensor::{Mat, MinorSpec, NormKind};
