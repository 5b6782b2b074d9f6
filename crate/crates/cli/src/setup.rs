//! Builders from config keys to domain objects, with parameter-range
//! validation mirroring the core constructors.

use crate::config::Config;
use crate::error::CliError;
use fdlab_core::admissibility::BoundField;
use fdlab_core::energy::{OgdenParams, PowerTerm, SvkParams, Volumetric, W1Params, W2Params};
use fdlab_core::mesh::{make_mesh, refine, BodyForce, BoundaryData, MeshShape, SimplicialMesh};
use fdlab_core::{EnergyDensity, Mat, NormKind};
use std::collections::BTreeMap;
use std::io::BufReader;

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::validation(e.to_string())
}

pub fn build_energy(cfg: &Config) -> Result<EnergyDensity, CliError> {
    let kind = cfg.get_str("energy.kind").unwrap_or("w2");
    match kind {
        "det-only" => Ok(EnergyDensity::DetOnly),
        "w1" => {
            let p = W1Params::standard();
            let params = W1Params::new(
                cfg.f64_or("energy.a", p.a)?,
                cfg.f64_or("energy.b", p.b)?,
                cfg.f64_or("energy.c", p.c)?,
                cfg.f64_or("energy.d", p.d)?,
                cfg.f64_or("energy.p", p.p)?,
                cfg.f64_or("energy.q", p.q)?,
                cfg.f64_or("energy.r", p.r)?,
                cfg.f64_or("energy.s", p.s)?,
            )
            .map_err(invalid)?;
            Ok(EnergyDensity::W1(params))
        }
        "w2" => {
            let p = W2Params::standard();
            let params = W2Params::new(
                cfg.f64_or("energy.a", p.a)?,
                cfg.f64_or("energy.c", p.c)?,
                cfg.f64_or("energy.r", p.r)?,
            )
            .map_err(invalid)?;
            Ok(EnergyDensity::W2(params))
        }
        "svk" => {
            let params = SvkParams::new(
                cfg.f64_or("energy.lambda", 1.0)?,
                cfg.f64_or("energy.mu", 1.0)?,
            )
            .map_err(invalid)?;
            Ok(EnergyDensity::Svk(params))
        }
        "ogden" => {
            let zip_terms = |ck: &str, ek: &str| -> Result<Vec<PowerTerm>, CliError> {
                let coeffs = cfg.get_floats(ck)?.unwrap_or_default();
                let exps = cfg.get_floats(ek)?.unwrap_or_default();
                if coeffs.len() != exps.len() {
                    return Err(CliError::validation(format!(
                        "'{ck}' and '{ek}' must list the same number of values"
                    )));
                }
                Ok(coeffs
                    .into_iter()
                    .zip(exps)
                    .map(|(coeff, exponent)| PowerTerm { coeff, exponent })
                    .collect())
            };
            let shear = zip_terms("energy.shear_coeffs", "energy.shear_exponents")?;
            let adj = zip_terms("energy.adj_coeffs", "energy.adj_exponents")?;
            let c = cfg.f64_or("energy.vol_c", 1.0)?;
            let r = cfg.f64_or("energy.vol_r", 2.0)?;
            let volumetric = match (cfg.get_f64("energy.vol_d")?, cfg.get_f64("energy.vol_s")?) {
                (Some(d_coef), Some(s)) => Volumetric::PowerPlusInverse { c, r, d_coef, s },
                (None, None) => Volumetric::PowerLaw { c, r },
                _ => {
                    return Err(CliError::validation(
                        "ogden volumetric inverse term needs both energy.vol_d and energy.vol_s",
                    ))
                }
            };
            let params = OgdenParams::new(shear, adj, volumetric).map_err(invalid)?;
            Ok(EnergyDensity::Ogden(params))
        }
        other => Err(CliError::validation(format!(
            "unknown energy.kind '{other}' (expected det-only, ogden, w1, w2, svk)"
        ))),
    }
}

pub fn build_mesh(cfg: &Config) -> Result<SimplicialMesh, CliError> {
    let mut mesh = if let Some(path) = cfg.get_str("mesh.file") {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::validation(format!("cannot open mesh file {path}: {e}")))?;
        SimplicialMesh::read(&mut BufReader::new(file)).map_err(invalid)?
    } else {
        let shape = match cfg.get_str("mesh.shape").unwrap_or("unit-square") {
            "unit-square" => MeshShape::UnitSquare,
            "unit-cube" => MeshShape::UnitCube,
            "annulus-approx" => MeshShape::AnnulusApprox,
            other => {
                return Err(CliError::validation(format!(
                    "unknown mesh.shape '{other}' (expected unit-square, unit-cube, annulus-approx)"
                )))
            }
        };
        let resolution = cfg.usize_or("mesh.resolution", 8)?;
        if resolution == 0 {
            return Err(CliError::validation("mesh.resolution must be at least 1"));
        }
        make_mesh(shape, resolution)
    };
    for _ in 0..cfg.usize_or("mesh.refine", 0)? {
        mesh = refine(&mesh);
    }
    Ok(mesh)
}

pub fn build_matrix(cfg: &Config, key: &str, dim: usize) -> Result<Option<Mat>, CliError> {
    match cfg.get_floats(key)? {
        None => Ok(None),
        Some(values) => {
            if values.len() != dim * dim {
                return Err(CliError::validation(format!(
                    "key '{key}': expected {} values for a {dim}x{dim} matrix, got {}",
                    dim * dim,
                    values.len()
                )));
            }
            Ok(Some(Mat::from_rows(dim, &values)))
        }
    }
}

pub fn build_boundary(cfg: &Config, mesh: &SimplicialMesh) -> Result<BoundaryData, CliError> {
    let n = mesh.dim();
    match cfg.get_str("boundary.kind").unwrap_or("identity") {
        "identity" => Ok(BoundaryData::Identity),
        "affine" => {
            let matrix = build_matrix(cfg, "boundary.matrix", n)?.ok_or_else(|| {
                CliError::validation("boundary.kind = affine requires boundary.matrix")
            })?;
            let offset = cfg.get_floats("boundary.offset")?.unwrap_or_else(|| vec![0.0; n]);
            if offset.len() != n {
                return Err(CliError::validation(format!(
                    "boundary.offset needs {n} values"
                )));
            }
            Ok(BoundaryData::Affine { matrix, offset })
        }
        "twist" => {
            let angle = cfg.require_f64("boundary.angle")?;
            // rotate about the domain centroid
            let mut center = vec![0.0; n];
            for i in 0..mesh.num_vertices() {
                let x = mesh.vertex(i);
                for r in 0..n {
                    center[r] += x[r];
                }
            }
            for c in center.iter_mut() {
                *c /= mesh.num_vertices() as f64;
            }
            Ok(BoundaryData::Twist { angle, center })
        }
        "squeeze" => {
            let factor = cfg.require_f64("boundary.factor")?;
            if factor <= 0.0 {
                return Err(CliError::validation("boundary.factor must be positive"));
            }
            Ok(BoundaryData::Squeeze { factor })
        }
        "file" => {
            let path = cfg.require_str("boundary.file")?;
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::validation(format!("cannot read boundary table {path}: {e}"))
            })?;
            let mut table = BTreeMap::new();
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != n + 1 {
                    return Err(CliError::validation(format!(
                        "boundary table line {}: expected node index and {n} coordinates",
                        lineno + 1
                    )));
                }
                let node: usize = toks[0].parse().map_err(|_| {
                    CliError::validation(format!("boundary table line {}: bad node index", lineno + 1))
                })?;
                let mut coords = Vec::with_capacity(n);
                for t in &toks[1..] {
                    coords.push(t.parse::<f64>().map_err(|_| {
                        CliError::validation(format!(
                            "boundary table line {}: bad coordinate '{t}'",
                            lineno + 1
                        ))
                    })?);
                }
                table.insert(node, coords);
            }
            Ok(BoundaryData::Table(table))
        }
        other => Err(CliError::validation(format!(
            "unknown boundary.kind '{other}' (expected identity, affine, twist, squeeze, file)"
        ))),
    }
}

pub fn build_bound(cfg: &Config, dim: usize) -> Result<Option<BoundField>, CliError> {
    match cfg.get_f64("bound.m")? {
        None => Ok(None),
        Some(m) => {
            let s = cfg.require_f64("bound.s")?;
            let field = BoundField::constant(m, s, dim).map_err(invalid)?;
            Ok(Some(field))
        }
    }
}

pub fn build_theta(cfg: &Config, dim: usize) -> Result<Option<BodyForce>, CliError> {
    match cfg.get_f64("theta.weight")? {
        None => Ok(None),
        Some(weight) => {
            let target = build_matrix(cfg, "theta.matrix", dim)?.unwrap_or_else(|| Mat::identity(dim));
            let offset = cfg.get_floats("theta.offset")?.unwrap_or_else(|| vec![0.0; dim]);
            if offset.len() != dim {
                return Err(CliError::validation(format!("theta.offset needs {dim} values")));
            }
            Ok(Some(BodyForce::QuadraticWell {
                weight,
                target,
                offset,
            }))
        }
    }
}

pub fn build_minimizer_config(cfg: &Config, seed: u64) -> Result<fdlab_core::MinimizerConfig, CliError> {
    let d = fdlab_core::MinimizerConfig::default();
    let config = fdlab_core::MinimizerConfig {
        eps_start: cfg.f64_or("minimizer.eps_start", d.eps_start)?,
        eps_min: cfg.f64_or("minimizer.eps_min", d.eps_min)?,
        eps_shrink: cfg.f64_or("minimizer.eps_shrink", d.eps_shrink)?,
        beta: cfg.f64_or("minimizer.beta", d.beta)?,
        tau: cfg.f64_or("minimizer.tau", d.tau)?,
        grad_tol: cfg.f64_or("minimizer.grad_tol", d.grad_tol)?,
        max_iterations: cfg.usize_or("minimizer.max_iterations", d.max_iterations)?,
        backtrack_shrink: cfg.f64_or("minimizer.backtrack_shrink", d.backtrack_shrink)?,
        armijo_c: cfg.f64_or("minimizer.armijo_c", d.armijo_c)?,
        max_backtracks: cfg.usize_or("minimizer.max_backtracks", d.max_backtracks)?,
        seed,
    };
    config.validate().map_err(invalid)?;
    Ok(config)
}

pub fn build_norm(cfg: &Config, key: &str, default: NormKind) -> Result<NormKind, CliError> {
    match cfg.get_str(key) {
        None => Ok(default),
        Some("operator") => Ok(NormKind::Operator),
        Some("frobenius") => Ok(NormKind::Frobenius),
        Some(other) => Err(CliError::validation(format!(
            "key '{key}': expected operator or frobenius, got '{other}'"
        ))),
    }
}
