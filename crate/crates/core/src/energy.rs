//! Stored-energy densities W(x, F) with polyconvex representatives and
//! analytic gradients.
//!
//! Shipped kinds:
//! - `det-only`: W(F) = det F, the canonical polyconvex-but-not-convex
//!   integrand and a null Lagrangian;
//! - `ogden`: singular-value power sums plus a convex volumetric term;
//! - `w1`: a tr(F^T F)^{p/2} + b tr(Adj(F^T F))^{q/2} + c (det F)^r
//!   + d (det F)^{-s}, the Ogden material whose inverse-determinant term
//!   forces the energy to blow up as det F -> 0+;
//! - `w2`: a tr(F^T F)^{3/2} + c (det F)^r, which stays bounded as
//!   det F -> 0+ yet is still polyconvex and coercive;
//! - `svk`: the Saint-Venant--Kirchhoff density, polynomial in F and not
//!   polyconvex.
//!
//! All shipped densities are homogeneous; the evaluation point `x` is kept
//! in the signatures so heterogeneous densities are a parameter extension,
//! not an interface change.

use crate::sampling::{log_uniform, random_matrix_log_uniform, random_matrix_signed, trial_rng};
use crate::tensor::{sym_eigen, trace_power, Mat, NormKind};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("determinant {det:e} outside the energy domain (requires det F > 0)")]
    NonpositiveDeterminant { det: f64 },
    #[error("determinant {det:e} outside the energy domain (requires det F >= 0)")]
    NegativeDeterminant { det: f64 },
    #[error("invalid parameter {name} = {value}: requires {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: String,
    },
}

fn require(cond: bool, name: &'static str, value: f64, requirement: &str) -> Result<(), EnergyError> {
    if cond {
        Ok(())
    } else {
        Err(EnergyError::InvalidParameter {
            name,
            value,
            requirement: requirement.to_string(),
        })
    }
}

/// One `coeff * tr((.)^{exponent/2})` term of an Ogden-type energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub coeff: f64,
    pub exponent: f64,
}

/// Convex volumetric term Gamma(det F).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Volumetric {
    /// c * d^r with c > 0, r > 1. Bounded as d -> 0+.
    PowerLaw { c: f64, r: f64 },
    /// c * d^r + d_coef * d^{-s}; blows up as d -> 0+.
    PowerPlusInverse { c: f64, r: f64, d_coef: f64, s: f64 },
}

impl Volumetric {
    fn validate(&self) -> Result<(), EnergyError> {
        match *self {
            Volumetric::PowerLaw { c, r } => {
                require(c > 0.0, "c", c, "c > 0")?;
                require(r > 1.0, "r", r, "r > 1")
            }
            Volumetric::PowerPlusInverse { c, r, d_coef, s } => {
                require(c > 0.0, "c", c, "c > 0")?;
                require(r > 1.0, "r", r, "r > 1")?;
                require(d_coef > 0.0, "d", d_coef, "d > 0")?;
                require(s > 0.0, "s", s, "s > 0")
            }
        }
    }

    fn requires_positive_det(&self) -> bool {
        matches!(self, Volumetric::PowerPlusInverse { .. })
    }

    fn eval(&self, d: f64) -> Result<f64, EnergyError> {
        match *self {
            Volumetric::PowerLaw { c, r } => {
                if d < 0.0 {
                    return Err(EnergyError::NegativeDeterminant { det: d });
                }
                Ok(c * d.powf(r))
            }
            Volumetric::PowerPlusInverse { c, r, d_coef, s } => {
                if d <= 0.0 {
                    return Err(EnergyError::NonpositiveDeterminant { det: d });
                }
                Ok(c * d.powf(r) + d_coef * d.powf(-s))
            }
        }
    }

    fn derivative(&self, d: f64) -> Result<f64, EnergyError> {
        match *self {
            Volumetric::PowerLaw { c, r } => {
                if d < 0.0 {
                    return Err(EnergyError::NegativeDeterminant { det: d });
                }
                Ok(c * r * d.powf(r - 1.0))
            }
            Volumetric::PowerPlusInverse { c, r, d_coef, s } => {
                if d <= 0.0 {
                    return Err(EnergyError::NonpositiveDeterminant { det: d });
                }
                Ok(c * r * d.powf(r - 1.0) - d_coef * s * d.powf(-s - 1.0))
            }
        }
    }
}

/// General Ogden material parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OgdenParams {
    pub shear_terms: Vec<PowerTerm>,
    pub adjugate_terms: Vec<PowerTerm>,
    pub volumetric: Volumetric,
}

impl OgdenParams {
    pub fn new(
        shear_terms: Vec<PowerTerm>,
        adjugate_terms: Vec<PowerTerm>,
        volumetric: Volumetric,
    ) -> Result<OgdenParams, EnergyError> {
        for t in shear_terms.iter().chain(adjugate_terms.iter()) {
            require(t.coeff > 0.0, "coefficient", t.coeff, "> 0")?;
            require(t.exponent >= 1.0, "exponent", t.exponent, ">= 1")?;
        }
        volumetric.validate()?;
        Ok(OgdenParams {
            shear_terms,
            adjugate_terms,
            volumetric,
        })
    }
}

/// Parameters of the blow-up example energy
/// `a tr(F^T F)^{p/2} + b tr(Adj(F^T F))^{q/2} + c (det F)^r + d (det F)^{-s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W1Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
}

impl W1Params {
    pub fn new(a: f64, b: f64, c: f64, d: f64, p: f64, q: f64, r: f64, s: f64) -> Result<W1Params, EnergyError> {
        require(a > 0.0, "a", a, "a > 0")?;
        require(b > 0.0, "b", b, "b > 0")?;
        require(c > 0.0, "c", c, "c > 0")?;
        require(d > 0.0, "d", d, "d > 0")?;
        require(p > 3.0, "p", p, "p > 3")?;
        require(q > 3.0, "q", q, "q > 3")?;
        require(r > 1.0, "r", r, "r > 1")?;
        let s_min = 2.0 * q / (q - 3.0);
        require(s > s_min, "s", s, &format!("s > 2q/(q-3) = {s_min}"))?;
        Ok(W1Params { a, b, c, d, p, q, r, s })
    }

    /// a = b = c = d = 1, p = q = 4, r = 2, s = 9.
    pub fn standard() -> W1Params {
        W1Params::new(1.0, 1.0, 1.0, 1.0, 4.0, 4.0, 2.0, 9.0).expect("standard parameters are valid")
    }
}

/// Parameters of the bounded-near-collapse example energy
/// `a tr(F^T F)^{3/2} + c (det F)^r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Params {
    pub a: f64,
    pub c: f64,
    pub r: f64,
}

impl W2Params {
    pub fn new(a: f64, c: f64, r: f64) -> Result<W2Params, EnergyError> {
        require(a > 0.0, "a", a, "a > 0")?;
        require(c > 0.0, "c", c, "c > 0")?;
        require(r > 1.0, "r", r, "r > 1")?;
        Ok(W2Params { a, c, r })
    }

    /// a = c = 1, r = 2.
    pub fn standard() -> W2Params {
        W2Params::new(1.0, 1.0, 2.0).expect("standard parameters are valid")
    }
}

/// Saint-Venant--Kirchhoff Lame coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvkParams {
    pub lambda: f64,
    pub mu: f64,
}

impl SvkParams {
    pub fn new(lambda: f64, mu: f64) -> Result<SvkParams, EnergyError> {
        require(lambda >= 0.0, "lambda", lambda, "lambda >= 0")?;
        require(mu > 0.0, "mu", mu, "mu > 0")?;
        Ok(SvkParams { lambda, mu })
    }
}

/// A stored-energy density W(x, F).
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyDensity {
    DetOnly,
    Ogden(OgdenParams),
    W1(W1Params),
    W2(W2Params),
    Svk(SvkParams),
}

impl EnergyDensity {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EnergyDensity::DetOnly => "det-only",
            EnergyDensity::Ogden(_) => "ogden",
            EnergyDensity::W1(_) => "w1",
            EnergyDensity::W2(_) => "w2",
            EnergyDensity::Svk(_) => "svk",
        }
    }

    /// Whether the density carries an inverse-determinant term, i.e. is only
    /// defined for det F > 0.
    pub fn requires_positive_det(&self) -> bool {
        match self {
            EnergyDensity::W1(_) => true,
            EnergyDensity::Ogden(p) => p.volumetric.requires_positive_det(),
            _ => false,
        }
    }

    /// Whether a polyconvex representative G is available.
    pub fn has_g_form(&self) -> bool {
        !matches!(self, EnergyDensity::Svk(_))
    }

    /// Density value at deformation gradient `f`; `_x` is the material point
    /// (unused by the shipped homogeneous densities).
    pub fn eval(&self, _x: &[f64], f: &Mat) -> Result<f64, EnergyError> {
        match self {
            EnergyDensity::DetOnly => Ok(f.determinant()),
            EnergyDensity::Ogden(p) => {
                eval_iso_vol(f, &p.shear_terms, &p.adjugate_terms, Some(&p.volumetric))
            }
            EnergyDensity::W1(p) => eval_iso_vol(
                f,
                &[PowerTerm { coeff: p.a, exponent: p.p }],
                &[PowerTerm { coeff: p.b, exponent: p.q }],
                Some(&Volumetric::PowerPlusInverse {
                    c: p.c,
                    r: p.r,
                    d_coef: p.d,
                    s: p.s,
                }),
            ),
            EnergyDensity::W2(p) => eval_iso_vol(
                f,
                &[PowerTerm { coeff: p.a, exponent: 3.0 }],
                &[],
                Some(&Volumetric::PowerLaw { c: p.c, r: p.r }),
            ),
            EnergyDensity::Svk(p) => {
                let (tr_e, tr_e2) = svk_strain_invariants(f);
                Ok(0.5 * p.lambda * tr_e * tr_e + p.mu * tr_e2)
            }
        }
    }

    /// Analytic dW/dF.
    pub fn grad(&self, _x: &[f64], f: &Mat) -> Result<Mat, EnergyError> {
        match self {
            EnergyDensity::DetOnly => Ok(f.cofactor()),
            EnergyDensity::Ogden(p) => {
                grad_iso_vol(f, &p.shear_terms, &p.adjugate_terms, Some(&p.volumetric))
            }
            EnergyDensity::W1(p) => grad_iso_vol(
                f,
                &[PowerTerm { coeff: p.a, exponent: p.p }],
                &[PowerTerm { coeff: p.b, exponent: p.q }],
                Some(&Volumetric::PowerPlusInverse {
                    c: p.c,
                    r: p.r,
                    d_coef: p.d,
                    s: p.s,
                }),
            ),
            EnergyDensity::W2(p) => grad_iso_vol(
                f,
                &[PowerTerm { coeff: p.a, exponent: 3.0 }],
                &[],
                Some(&Volumetric::PowerLaw { c: p.c, r: p.r }),
            ),
            EnergyDensity::Svk(p) => {
                let n = f.dim();
                let c = f.gram();
                let mut e = Mat::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        e.set(i, j, 0.5 * (c.get(i, j) - if i == j { 1.0 } else { 0.0 }));
                    }
                }
                // dW/dF = F (lambda tr(E) I + 2 mu E)
                let mut s = e.scale(2.0 * p.mu);
                let lt = p.lambda * e.trace();
                for i in 0..n {
                    s.set(i, i, s.get(i, i) + lt);
                }
                Ok(f.matmul(&s))
            }
        }
    }

    /// Polyconvex representative G(x, F, A, d) evaluated on free arguments
    /// (A and d are not tied to Adj F and det F here). `None` when the kind
    /// has no polyconvex representative.
    pub fn g_form(&self, _x: &[f64], f: &Mat, a: &Mat, d: f64) -> Option<Result<f64, EnergyError>> {
        match self {
            EnergyDensity::DetOnly => Some(Ok(d)),
            EnergyDensity::Ogden(p) => Some(gform_iso_vol(
                f,
                a,
                d,
                &p.shear_terms,
                &p.adjugate_terms,
                Some(&p.volumetric),
            )),
            EnergyDensity::W1(p) => Some(gform_iso_vol(
                f,
                a,
                d,
                &[PowerTerm { coeff: p.a, exponent: p.p }],
                &[PowerTerm { coeff: p.b, exponent: p.q }],
                Some(&Volumetric::PowerPlusInverse {
                    c: p.c,
                    r: p.r,
                    d_coef: p.d,
                    s: p.s,
                }),
            )),
            EnergyDensity::W2(p) => Some(gform_iso_vol(
                f,
                a,
                d,
                &[PowerTerm { coeff: p.a, exponent: 3.0 }],
                &[],
                Some(&Volumetric::PowerLaw { c: p.c, r: p.r }),
            )),
            EnergyDensity::Svk(_) => None,
        }
    }
}

fn svk_strain_invariants(f: &Mat) -> (f64, f64) {
    let n = f.dim();
    let c = f.gram();
    let mut tr_e = 0.0;
    let mut tr_e2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e_ij = 0.5 * (c.get(i, j) - if i == j { 1.0 } else { 0.0 });
            tr_e2 += e_ij * e_ij;
            if i == j {
                tr_e += e_ij;
            }
        }
    }
    (tr_e, tr_e2)
}

/// Eigenvalues of F^T F, descending, clamped to be nonnegative.
fn gram_eigenvalues(f: &Mat) -> [f64; 3] {
    let mut ev = crate::tensor::sym_eigenvalues(&f.gram());
    for v in ev.iter_mut() {
        *v = v.max(0.0);
    }
    ev
}

/// Sum over i of (prod_{j != i} mu_j)^{delta/2}: the trace of the
/// adjugate of F^T F raised to the power delta/2, written through products
/// of the complementary eigenvalues for numerical robustness.
fn adjugate_trace_power(mu: &[f64], delta: f64) -> f64 {
    let n = mu.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut prod = 1.0;
        for (j, &m) in mu.iter().enumerate() {
            if j != i {
                prod *= m;
            }
        }
        acc += prod.powf(0.5 * delta);
    }
    acc
}

fn eval_iso_vol(
    f: &Mat,
    shear: &[PowerTerm],
    adj: &[PowerTerm],
    vol: Option<&Volumetric>,
) -> Result<f64, EnergyError> {
    let n = f.dim();
    let det = f.determinant();
    if let Some(v) = vol {
        if v.requires_positive_det() && det <= 0.0 {
            return Err(EnergyError::NonpositiveDeterminant { det });
        }
    }
    let mu = gram_eigenvalues(f);
    let mu = &mu[..n];
    let mut w = 0.0;
    for t in shear {
        let tp: f64 = mu.iter().map(|m| m.powf(0.5 * t.exponent)).sum();
        w += t.coeff * tp;
    }
    for t in adj {
        w += t.coeff * adjugate_trace_power(mu, t.exponent);
    }
    if let Some(v) = vol {
        w += v.eval(det)?;
    }
    Ok(w)
}

fn grad_iso_vol(
    f: &Mat,
    shear: &[PowerTerm],
    adj: &[PowerTerm],
    vol: Option<&Volumetric>,
) -> Result<Mat, EnergyError> {
    let n = f.dim();
    let det = f.determinant();
    if let Some(v) = vol {
        if v.requires_positive_det() && det <= 0.0 {
            return Err(EnergyError::NonpositiveDeterminant { det });
        }
    }
    let (mu_raw, vecs) = sym_eigen(&f.gram());
    let mut mu = [0.0; 3];
    for i in 0..n {
        mu[i] = mu_raw[i].max(0.0);
    }
    let mu = &mu[..n];

    // dW/dmu_i for the isochoric part
    let mut w_mu = [0.0f64; 3];
    for t in shear {
        for i in 0..n {
            w_mu[i] += t.coeff * 0.5 * t.exponent * mu[i].powf(0.5 * t.exponent - 1.0);
        }
    }
    for t in adj {
        for i in 0..n {
            // d/dmu_i of sum_k (prod_{j != k} mu_j)^{delta/2}: the k = i term
            // does not depend on mu_i; each k != i term contributes
            // (delta/2) (prod_{j != k} mu_j)^{delta/2} / mu_i.
            let mut sum_others = 0.0;
            for k in 0..n {
                if k == i {
                    continue;
                }
                let mut prod = 1.0;
                for (j, &m) in mu.iter().enumerate() {
                    if j != k {
                        prod *= m;
                    }
                }
                sum_others += prod.powf(0.5 * t.exponent);
            }
            w_mu[i] += t.coeff * 0.5 * t.exponent * sum_others / mu[i];
        }
    }

    // dW/dF = 2 F sum_i w_mu_i v_i v_i^T
    let mut sym = Mat::zeros(n);
    for i in 0..n {
        for a in 0..n {
            for b in 0..n {
                sym.set(a, b, sym.get(a, b) + w_mu[i] * vecs.get(a, i) * vecs.get(b, i));
            }
        }
    }
    let mut g = f.matmul(&sym).scale(2.0);

    if let Some(v) = vol {
        let dv = v.derivative(det)?;
        let cof = f.cofactor();
        g = g.add(&cof.scale(dv));
    }
    Ok(g)
}

fn gform_iso_vol(
    f: &Mat,
    a: &Mat,
    d: f64,
    shear: &[PowerTerm],
    adj: &[PowerTerm],
    vol: Option<&Volumetric>,
) -> Result<f64, EnergyError> {
    let mut w = 0.0;
    for t in shear {
        w += t.coeff * trace_power(f, t.exponent);
    }
    for t in adj {
        w += t.coeff * trace_power(a, t.exponent);
    }
    if let Some(v) = vol {
        w += v.eval(d)?;
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// Sampled verifiers
// ---------------------------------------------------------------------------

/// Sigma range used by the verifier samplers: wide enough to cover
/// extreme-strain regimes.
pub const SIGMA_RANGE: (f64, f64) = (1e-3, 1e3);

/// Additive slack on sampled inequalities.
fn slack(values: &[f64]) -> f64 {
    1e-10 * (1.0 + values.iter().map(|v| v.abs()).sum::<f64>())
}

/// A sampled point in (F, A, d) space together with the representative value.
#[derive(Debug, Clone)]
pub struct GPoint {
    pub f: Mat,
    pub a: Mat,
    pub d: f64,
    pub value: f64,
}

/// Witness of a midpoint-convexity violation of the representative G.
#[derive(Debug, Clone)]
pub struct ConvexityWitness {
    pub left: GPoint,
    pub right: GPoint,
    pub midpoint_value: f64,
    /// Positive amount by which the midpoint exceeds the chord.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub enum PolyconvexityVerdict {
    /// Midpoint convexity held on every sampled segment. A necessary
    /// condition, not a proof.
    Pass { trials: usize },
    /// The density has no polyconvex representative to check.
    NotApplicable,
    Violation(Box<ConvexityWitness>),
}

/// Samples random segments in (F, A, d)-space with d > 0 at both endpoints
/// and checks midpoint convexity of the representative G.
pub fn check_polyconvexity_sampled(
    energy: &EnergyDensity,
    dim: usize,
    trials: usize,
    seed: u64,
) -> PolyconvexityVerdict {
    if !energy.has_g_form() {
        return PolyconvexityVerdict::NotApplicable;
    }
    let (lo, hi) = SIGMA_RANGE;
    let results: Vec<Option<ConvexityWitness>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let sample = |rng: &mut rand_chacha::ChaCha8Rng| GPointSample {
                f: random_matrix_signed(rng, dim, lo, hi),
                a: random_matrix_signed(rng, dim, lo, hi),
                d: log_uniform(rng, lo, hi),
            };
            let u = sample(&mut rng);
            let v = sample(&mut rng);
            let eval = |f: &Mat, a: &Mat, d: f64| -> Option<f64> {
                energy.g_form(&[], f, a, d).and_then(|r| r.ok())
            };
            let gu = eval(&u.f, &u.a, u.d)?;
            let gv = eval(&v.f, &v.a, v.d)?;
            let f_mid = u.f.add(&v.f).scale(0.5);
            let a_mid = u.a.add(&v.a).scale(0.5);
            let d_mid = 0.5 * (u.d + v.d);
            let gm = eval(&f_mid, &a_mid, d_mid)?;
            let chord = 0.5 * (gu + gv);
            let gap = gm - chord - slack(&[gu, gv]);
            if gap > 0.0 {
                Some(ConvexityWitness {
                    left: GPoint { f: u.f, a: u.a, d: u.d, value: gu },
                    right: GPoint { f: v.f, a: v.a, d: v.d, value: gv },
                    midpoint_value: gm,
                    gap,
                })
            } else {
                None
            }
        })
        .collect();
    match results.into_iter().flatten().next() {
        Some(w) => PolyconvexityVerdict::Violation(Box::new(w)),
        None => PolyconvexityVerdict::Pass { trials },
    }
}

struct GPointSample {
    f: Mat,
    a: Mat,
    d: f64,
}

#[derive(Debug, Clone)]
pub struct CoercivityWitness {
    pub f: Mat,
    pub energy: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub enum CoercivityVerdict {
    NoViolation { trials: usize },
    Witness(Box<CoercivityWitness>),
}

/// Samples F with det F > 0 over a wide log-scale range and reports any F
/// violating `W(F) >= alpha (|F|^n + (det F)^r) + g_const`.
pub fn check_coercivity_sampled(
    energy: &EnergyDensity,
    dim: usize,
    alpha: f64,
    r: f64,
    g_const: f64,
    trials: usize,
    seed: u64,
    norm: NormKind,
) -> CoercivityVerdict {
    assert!(alpha > 0.0, "coercivity constant must be positive");
    assert!(r > 1.0, "coercivity exponent must exceed 1");
    let (lo, hi) = SIGMA_RANGE;
    let results: Vec<Option<CoercivityWitness>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let f = random_matrix_log_uniform(&mut rng, dim, lo, hi);
            let w = energy.eval(&[], &f).ok()?;
            let det = f.determinant();
            let bound = alpha * (f.norm(norm).powi(dim as i32) + det.powf(r)) + g_const;
            if w < bound - slack(&[w, bound]) {
                Some(CoercivityWitness { f, energy: w, bound })
            } else {
                None
            }
        })
        .collect();
    match results.into_iter().flatten().next() {
        Some(w) => CoercivityVerdict::Witness(Box::new(w)),
        None => CoercivityVerdict::NoViolation { trials },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierVerdict {
    Holds,
    Fails,
}

/// Evaluates W along F_k = diag(eps_k, 1, ..., 1) with eps_k decreasing over
/// decades and reports whether the values blow up monotonically. A sampled
/// diagnostic, not a proof.
pub fn check_barrier_condition(energy: &EnergyDensity, dim: usize, samples: usize) -> BarrierVerdict {
    let samples = samples.max(8);
    let eps_hi: f64 = 1e-1;
    let eps_lo: f64 = 1e-12;
    let mut values = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = k as f64 / (samples - 1) as f64;
        let eps = (eps_hi.ln() + t * (eps_lo.ln() - eps_hi.ln())).exp();
        let mut diag = [1.0; 3];
        diag[0] = eps;
        let f = Mat::diag(&diag[..dim]);
        match energy.eval(&[], &f) {
            Ok(w) => values.push(w),
            Err(_) => return BarrierVerdict::Fails,
        }
    }
    let cutoff = samples / 2;
    let monotone = values.windows(2).skip(cutoff).all(|w| w[1] > w[0]);
    let blew_up = values[samples - 1] > 1e6 * (1.0 + values[0].abs());
    if monotone && blew_up {
        BarrierVerdict::Holds
    } else {
        BarrierVerdict::Fails
    }
}
