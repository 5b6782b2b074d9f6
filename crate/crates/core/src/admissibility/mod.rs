//! Admissibility analysis of discrete deformations: Jacobian and distortion
//! fields, L_s norms, membership in the distortion-bounded class and in the
//! classical positive-Jacobian class, injectivity evidence through the
//! Banach indicatrix and the topological degree, and the identity checks
//! (change of variables, divergence-free adjugate rows, weak continuity of
//! minors, composition-operator norm bounds).

pub mod composition;
pub mod cov;
pub mod location;
pub mod studies;

use crate::jsonfmt::{escape_str, f64_repr, opt_bool_repr};
use crate::mesh::{element_gradients, kahan_sum, Deformation, MeshError, SimplicialMesh};
use crate::tensor::NormKind;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdmissibilityError {
    #[error("element {element} is not invertible (det = {det:e})")]
    NonInvertibleElement { element: usize, det: f64 },
    #[error("exponent s = {s} must exceed n - 1 = {min}")]
    ExponentTooSmall { s: f64, min: f64 },
    #[error("sample point within {distance:e} of the boundary image (tolerance {tolerance:e})")]
    DegenerateSamplePoint { distance: f64, tolerance: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Per-element Jacobians J and distortion coefficients K.
///
/// K follows the case split of the distortion definition: K = |F|^n / J
/// where J > 0, K = 1 where J = 0 and F = 0, and K carries an infinite
/// marker where J = 0 but F != 0 (the finite-distortion surrogate fails
/// there). Elements with J < 0 also carry the infinite marker.
#[derive(Debug, Clone)]
pub struct DistortionField {
    pub jacobians: Vec<f64>,
    pub k: Vec<f64>,
    pub norm: NormKind,
    pub ref_volumes: Vec<f64>,
}

impl DistortionField {
    pub fn finite_everywhere(&self) -> bool {
        self.k.iter().all(|v| v.is_finite())
    }

    pub fn infinite_count(&self) -> usize {
        self.k.iter().filter(|v| !v.is_finite()).count()
    }

    pub fn max_distortion(&self) -> f64 {
        self.k.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-element Jacobians J = det F.
pub fn jacobian_field(mesh: &SimplicialMesh, phi: &Deformation) -> Result<Vec<f64>, MeshError> {
    Ok(element_gradients(mesh, phi)?
        .iter()
        .map(|g| g.f.determinant())
        .collect())
}

/// Per-element distortion field.
pub fn distortion_field(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    norm: NormKind,
) -> Result<DistortionField, MeshError> {
    let grads = element_gradients(mesh, phi)?;
    let n = mesh.dim() as i32;
    let (jacobians, k): (Vec<f64>, Vec<f64>) = grads
        .par_iter()
        .map(|g| {
            let j = g.f.determinant();
            let k = if j > 0.0 {
                g.f.norm(norm).powi(n) / j
            } else if j == 0.0 && g.f.max_abs() == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            (j, k)
        })
        .unzip();
    Ok(DistortionField {
        jacobians,
        k,
        norm,
        ref_volumes: grads.iter().map(|g| g.ref_volume).collect(),
    })
}

/// L_s norm of a piecewise-constant field: (sum_T |T| |v_T|^s)^{1/s}.
/// Returns infinity when any entry carries the infinite marker.
pub fn ls_norm(mesh: &SimplicialMesh, values: &[f64], s: f64) -> f64 {
    assert!(s >= 1.0, "L_s norm needs s >= 1");
    assert_eq!(values.len(), mesh.num_elements());
    if values.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let total = kahan_sum(
        (0..mesh.num_elements()).map(|e| mesh.reference_volume(e) * values[e].abs().powf(s)),
    );
    total.powf(1.0 / s)
}

/// Distortion majorant M with integrability exponent s > n - 1.
#[derive(Debug, Clone)]
pub struct BoundField {
    values: BoundValues,
    s: f64,
    /// Set when some bound value is below 1 (K >= 1 wherever finite, so such
    /// bounds are unsatisfiable on nondegenerate elements).
    pub below_one_warning: bool,
}

#[derive(Debug, Clone)]
enum BoundValues {
    Constant(f64),
    PerElement(Vec<f64>),
}

impl BoundField {
    pub fn constant(m: f64, s: f64, dim: usize) -> Result<BoundField, AdmissibilityError> {
        let min = dim as f64 - 1.0;
        if s <= min {
            return Err(AdmissibilityError::ExponentTooSmall { s, min });
        }
        Ok(BoundField {
            values: BoundValues::Constant(m),
            s,
            below_one_warning: m < 1.0,
        })
    }

    pub fn per_element(values: Vec<f64>, s: f64, dim: usize) -> Result<BoundField, AdmissibilityError> {
        let min = dim as f64 - 1.0;
        if s <= min {
            return Err(AdmissibilityError::ExponentTooSmall { s, min });
        }
        let below = values.iter().any(|&v| v < 1.0);
        Ok(BoundField {
            values: BoundValues::PerElement(values),
            s,
            below_one_warning: below,
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn value(&self, element: usize) -> f64 {
        match &self.values {
            BoundValues::Constant(m) => *m,
            BoundValues::PerElement(v) => v[element],
        }
    }

    pub fn ls_norm(&self, mesh: &SimplicialMesh) -> f64 {
        match &self.values {
            BoundValues::Constant(m) => {
                ls_norm(mesh, &vec![*m; mesh.num_elements()], self.s)
            }
            BoundValues::PerElement(v) => ls_norm(mesh, v, self.s),
        }
    }
}

/// Why a class check failed, pointing at the first offending element.
#[derive(Debug, Clone)]
pub struct ClassViolation {
    pub element: usize,
    pub reason: String,
}

/// One sampled degree evaluation.
#[derive(Debug, Clone)]
pub struct DegreeSample {
    pub point: Vec<f64>,
    pub degree: i64,
}

/// One sampled Banach-indicatrix evaluation.
#[derive(Debug, Clone)]
pub struct IndicatrixSample {
    pub point: Vec<f64>,
    pub count: usize,
    pub nudged: bool,
}

/// Everything the admissibility checks decide about one deformation.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub min_jacobian: f64,
    pub max_jacobian: f64,
    pub max_distortion: f64,
    pub infinite_distortion_elements: usize,
    /// L_s norm of the distortion field (s from the bound when provided,
    /// otherwise s = n).
    pub ls_norm_k: f64,
    pub s_used: Option<f64>,
    pub bound_ls_norm: Option<f64>,
    pub in_a: Option<bool>,
    pub in_ab: bool,
    pub first_violation: Option<ClassViolation>,
    pub degree_samples: Vec<DegreeSample>,
    pub indicatrix_samples: Vec<IndicatrixSample>,
    pub sense_preserving: Option<bool>,
    pub norm: NormKind,
}

/// Relative slack on the K <= M comparison.
pub const CLASS_A_SLACK: f64 = 1e-10;

fn base_report(
    mesh: &SimplicialMesh,
    field: &DistortionField,
    s_used: Option<f64>,
) -> AdmissibilityReport {
    let min_j = field.jacobians.iter().copied().fold(f64::INFINITY, f64::min);
    let max_j = field.jacobians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = s_used.unwrap_or(mesh.dim() as f64);
    AdmissibilityReport {
        min_jacobian: min_j,
        max_jacobian: max_j,
        max_distortion: field.max_distortion(),
        infinite_distortion_elements: field.infinite_count(),
        ls_norm_k: ls_norm(mesh, &field.k, s),
        s_used,
        bound_ls_norm: None,
        in_a: None,
        in_ab: field.jacobians.iter().all(|&j| j > 0.0),
        first_violation: None,
        degree_samples: Vec::new(),
        indicatrix_samples: Vec::new(),
        sense_preserving: None,
        norm: field.norm,
    }
}

/// Membership check for the classical class: J > 0 on every element.
pub fn check_class_ab(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    norm: NormKind,
) -> Result<AdmissibilityReport, MeshError> {
    let field = distortion_field(mesh, phi, norm)?;
    let mut report = base_report(mesh, &field, None);
    if !report.in_ab {
        let element = field.jacobians.iter().position(|&j| j <= 0.0).unwrap();
        report.first_violation = Some(ClassViolation {
            element,
            reason: format!("jacobian {:e} is not positive", field.jacobians[element]),
        });
    }
    Ok(report)
}

/// Membership check for the distortion-bounded class: J >= 0 everywhere,
/// the finite-distortion surrogate holds, K <= M element-wise (with relative
/// slack [`CLASS_A_SLACK`]), and the majorant has a finite L_s norm.
pub fn check_class_a(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    bound: &BoundField,
    norm: NormKind,
) -> Result<AdmissibilityReport, MeshError> {
    let field = distortion_field(mesh, phi, norm)?;
    let mut report = base_report(mesh, &field, Some(bound.s()));
    let bound_norm = bound.ls_norm(mesh);
    report.bound_ls_norm = Some(bound_norm);

    let mut violation: Option<ClassViolation> = None;
    for e in 0..mesh.num_elements() {
        let j = field.jacobians[e];
        let k = field.k[e];
        if j < 0.0 {
            violation = Some(ClassViolation {
                element: e,
                reason: format!("jacobian {j:e} is negative"),
            });
            break;
        }
        if !k.is_finite() {
            violation = Some(ClassViolation {
                element: e,
                reason: "infinite distortion (J = 0 with nonzero gradient)".to_string(),
            });
            break;
        }
        let m = bound.value(e);
        if k > m * (1.0 + CLASS_A_SLACK) {
            violation = Some(ClassViolation {
                element: e,
                reason: format!("distortion {k:e} exceeds bound {m:e}"),
            });
            break;
        }
    }
    report.in_a = Some(violation.is_none() && bound_norm.is_finite());
    if report.first_violation.is_none() {
        report.first_violation = violation.clone();
    }
    if !report.in_ab && report.first_violation.is_none() {
        let element = field.jacobians.iter().position(|&j| j <= 0.0).unwrap();
        report.first_violation = Some(ClassViolation {
            element,
            reason: format!("jacobian {:e} is not positive", field.jacobians[element]),
        });
    }
    Ok(report)
}

/// Attaches indicatrix/degree samples and the sense-preserving verdict to a
/// report.
pub fn attach_injectivity_evidence(
    report: &mut AdmissibilityReport,
    mesh: &SimplicialMesh,
    phi: &Deformation,
    samples: usize,
    seed: u64,
) {
    let verdict = location::sense_preserving_check(mesh, phi, samples, seed);
    report.sense_preserving = Some(verdict.sense_preserving);
    for sample in &verdict.samples {
        report.degree_samples.push(DegreeSample {
            point: sample.point.clone(),
            degree: sample.degree,
        });
        let region: Vec<usize> = (0..mesh.num_elements()).collect();
        let ind = location::banach_indicatrix(mesh, phi, &sample.point, &region);
        report.indicatrix_samples.push(IndicatrixSample {
            point: sample.point.clone(),
            count: ind.count,
            nudged: ind.nudged,
        });
    }
}

impl AdmissibilityReport {
    /// One JSON object with the documented keys.
    pub fn to_json(&self, indent: usize) -> String {
        let pad = " ".repeat(indent);
        let pad2 = " ".repeat(indent + 2);
        let mut out = String::new();
        out.push_str("{\n");
        let kv = |out: &mut String, key: &str, value: String, comma: bool| {
            out.push_str(&pad2);
            out.push_str(&escape_str(key));
            out.push_str(": ");
            out.push_str(&value);
            if comma {
                out.push(',');
            }
            out.push('\n');
        };
        kv(&mut out, "min_jacobian", f64_repr(self.min_jacobian), true);
        kv(&mut out, "max_jacobian", f64_repr(self.max_jacobian), true);
        kv(&mut out, "max_distortion", f64_repr(self.max_distortion), true);
        kv(
            &mut out,
            "infinite_distortion_elements",
            self.infinite_distortion_elements.to_string(),
            true,
        );
        kv(&mut out, "ls_norm_K", f64_repr(self.ls_norm_k), true);
        kv(
            &mut out,
            "s",
            self.s_used.map_or("null".to_string(), f64_repr),
            true,
        );
        kv(
            &mut out,
            "bound_ls_norm_M",
            self.bound_ls_norm.map_or("null".to_string(), f64_repr),
            true,
        );
        kv(&mut out, "in_A", opt_bool_repr(self.in_a).to_string(), true);
        kv(
            &mut out,
            "in_AB",
            crate::jsonfmt::bool_repr(self.in_ab).to_string(),
            true,
        );
        let violation = match &self.first_violation {
            None => "null".to_string(),
            Some(v) => format!(
                "{{\"element\": {}, \"reason\": {}}}",
                v.element,
                escape_str(&v.reason)
            ),
        };
        kv(&mut out, "first_violation", violation, true);
        let degrees = self
            .degree_samples
            .iter()
            .map(|d| {
                format!(
                    "{{\"point\": [{}], \"degree\": {}}}",
                    d.point.iter().map(|v| f64_repr(*v)).collect::<Vec<_>>().join(", "),
                    d.degree
                )
            })
            .collect::<Vec<_>>()
            .join(", ");
        kv(&mut out, "degree_samples", format!("[{degrees}]"), true);
        let indicatrix = self
            .indicatrix_samples
            .iter()
            .map(|d| {
                format!(
                    "{{\"point\": [{}], \"count\": {}, \"nudged\": {}}}",
                    d.point.iter().map(|v| f64_repr(*v)).collect::<Vec<_>>().join(", "),
                    d.count,
                    d.nudged
                )
            })
            .collect::<Vec<_>>()
            .join(", ");
        kv(&mut out, "indicatrix_samples", format!("[{indicatrix}]"), true);
        kv(
            &mut out,
            "sense_preserving",
            opt_bool_repr(self.sense_preserving).to_string(),
            false,
        );
        out.push_str(&pad);
        out.push('}');
        out
    }
}
