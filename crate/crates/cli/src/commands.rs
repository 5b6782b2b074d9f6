//! Subcommand implementations.

use crate::config::Config;
use crate::error::CliError;
use crate::output::{
    f64_array, meta_object, termination_name, write_trace_csv, write_trace_jsonl, JsonObject, OutDir,
};
use crate::setup;
use fdlab_core::admissibility::composition::composition_norm_check;
use fdlab_core::admissibility::cov::{change_of_variable_check, RectilinearPartition};
use fdlab_core::admissibility::location::{banach_indicatrix, image_diameter};
use fdlab_core::admissibility::studies::{
    minor_weak_continuity_test, piola_identity_residual, SequenceFamily, SmoothMap,
};
use fdlab_core::admissibility::{attach_injectivity_evidence, check_class_a, check_class_ab};
use fdlab_core::energy::{
    check_barrier_condition, check_coercivity_sampled, check_polyconvexity_sampled, BarrierVerdict,
    CoercivityVerdict, PolyconvexityVerdict,
};
use fdlab_core::mesh::{interpolate_boundary, total_energy, Deformation, SimplicialMesh};
use fdlab_core::minimizer::{minimize, semicontinuity_experiment, MinimizeError};
use fdlab_core::tensor::MinorSpec;
use fdlab_core::{Mat, NormKind};
use std::io::Write;

pub struct RunContext {
    pub cfg: Config,
    pub out: OutDir,
    pub seed: u64,
}

fn map_minimize_error(e: MinimizeError) -> CliError {
    match e {
        MinimizeError::SetupRejected { .. } | MinimizeError::Boundary(_) => {
            CliError::validation(e.to_string())
        }
        other => CliError::runtime(other.to_string()),
    }
}

fn admissibility_json(
    cfg: &Config,
    mesh: &SimplicialMesh,
    phi: &Deformation,
    seed: u64,
) -> Result<String, CliError> {
    let norm = setup::build_norm(cfg, "admissibility.norm", NormKind::Operator)?;
    let samples = cfg.usize_or("admissibility.samples", 8)?;
    let bound = setup::build_bound(cfg, mesh.dim())?;
    let mut report = match &bound {
        Some(b) => check_class_a(mesh, phi, b, norm).map_err(|e| CliError::runtime(e.to_string()))?,
        None => check_class_ab(mesh, phi, norm).map_err(|e| CliError::runtime(e.to_string()))?,
    };
    attach_injectivity_evidence(&mut report, mesh, phi, samples, seed);
    Ok(report.to_json(2))
}

pub fn run_minimize(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let energy = setup::build_energy(cfg)?;
    let mesh = setup::build_mesh(cfg)?;
    let boundary = setup::build_boundary(cfg, &mesh)?;
    let bound = setup::build_bound(cfg, mesh.dim())?;
    let theta = setup::build_theta(cfg, mesh.dim())?;
    let min_config = setup::build_minimizer_config(cfg, ctx.seed)?;
    let norm = setup::build_norm(cfg, "admissibility.norm", NormKind::Operator)?;
    let samples = cfg.usize_or("admissibility.samples", 8)?;
    cfg.finish()?;

    let (phi, trace) = minimize(
        &mesh,
        &energy,
        &boundary,
        bound.as_ref(),
        theta.as_ref(),
        &min_config,
        norm,
        None,
    )
    .map_err(map_minimize_error)?;

    // persist mesh and deformation for re-ingestion under `check`
    let mut mesh_buf = Vec::new();
    mesh.write(&mut mesh_buf)?;
    ctx.out.write("mesh.txt", std::str::from_utf8(&mesh_buf).unwrap())?;
    let mut def_buf = Vec::new();
    phi.write(&mesh, &mut def_buf)?;
    ctx.out.write("deformation.txt", std::str::from_utf8(&def_buf).unwrap())?;
    write_trace_jsonl(&ctx.out, "trace.jsonl", &trace)?;
    write_trace_csv(&ctx.out, "curves.csv", &trace)?;

    let mut report = match &bound {
        Some(b) => check_class_a(&mesh, &phi, b, norm).map_err(|e| CliError::runtime(e.to_string()))?,
        None => check_class_ab(&mesh, &phi, norm).map_err(|e| CliError::runtime(e.to_string()))?,
    };
    attach_injectivity_evidence(&mut report, &mesh, &phi, samples, ctx.seed);

    let final_energy = total_energy(&mesh, &phi, &energy, theta.as_ref())
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let mut summary = JsonObject::new(0);
    summary
        .str("subcommand", "minimize")
        .str("energy_kind", energy.kind_name())
        .uint("seed", ctx.seed as usize)
        .f64("final_energy", final_energy)
        .uint("iterations", trace.records.last().map_or(0, |r| r.iteration))
        .str("termination", termination_name(&trace.termination))
        .f64("final_grad_inf", trace.final_grad_inf)
        .raw("admissibility", report.to_json(2))
        .raw("meta", meta_object());
    ctx.out.write("summary.json", &(summary.finish() + "\n"))?;
    Ok(())
}

pub fn run_check(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let mesh = setup::build_mesh(cfg)?;
    let path = cfg.require_str("deformation.file")?.to_string();
    let file = std::fs::File::open(&path)
        .map_err(|e| CliError::validation(format!("cannot open deformation file {path}: {e}")))?;
    let phi = Deformation::read(&mesh, &mut std::io::BufReader::new(file))
        .map_err(|e| CliError::validation(e.to_string()))?;
    let report_json = admissibility_json(cfg, &mesh, &phi, ctx.seed)?;
    // optional composition-operator norm check for flip-free deformations
    let composition = match cfg.get_f64("composition.s")? {
        Some(s) => {
            let norm = setup::build_norm(cfg, "composition.norm", NormKind::Operator)?;
            Some(composition_summary(&mesh, &phi, s, norm)?)
        }
        None => None,
    };
    cfg.finish()?;

    let mut summary = JsonObject::new(0);
    summary
        .str("subcommand", "check")
        .uint("seed", ctx.seed as usize)
        .raw("admissibility", report_json);
    if let Some(comp) = composition {
        summary.raw("composition_norm", comp);
    }
    summary.raw("meta", meta_object());
    ctx.out.write("summary.json", &(summary.finish() + "\n"))?;
    Ok(())
}

pub fn run_energy_scan(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let energy = setup::build_energy(cfg)?;
    let dim = cfg.usize_or("scan.dim", 3)?;
    if dim != 2 && dim != 3 {
        return Err(CliError::validation("scan.dim must be 2 or 3"));
    }
    let trials = cfg.usize_or("scan.trials", 1000)?;
    let alpha = cfg.f64_or("scan.alpha", 0.1)?;
    let r = cfg.f64_or("scan.r", 2.0)?;
    let g_const = cfg.f64_or("scan.g_const", 0.0)?;
    let norm = setup::build_norm(cfg, "scan.norm", NormKind::Frobenius)?;
    let barrier_samples = cfg.usize_or("scan.barrier_samples", 12)?;
    cfg.finish()?;
    if alpha <= 0.0 || r <= 1.0 {
        return Err(CliError::validation(
            "coercivity scan needs scan.alpha > 0 and scan.r > 1",
        ));
    }

    let poly = check_polyconvexity_sampled(&energy, dim, trials, ctx.seed);
    let coer = check_coercivity_sampled(&energy, dim, alpha, r, g_const, trials, ctx.seed, norm);
    let barrier = check_barrier_condition(&energy, dim, barrier_samples);

    // barrier profile for plotting: W along diag(eps, 1, ..., 1)
    {
        let mut w = ctx.out.writer("barrier.csv")?;
        writeln!(w, "eps,energy")?;
        for k in 0..barrier_samples.max(8) {
            let t = k as f64 / (barrier_samples.max(8) - 1) as f64;
            let eps = (0.1f64.ln() + t * (1e-12f64.ln() - 0.1f64.ln())).exp();
            let mut diag = [1.0; 3];
            diag[0] = eps;
            if let Ok(val) = energy.eval(&[], &Mat::diag(&diag[..dim])) {
                writeln!(w, "{eps:.16e},{val:.16e}")?;
            }
        }
        w.flush()?;
    }

    let mut summary = JsonObject::new(0);
    summary
        .str("subcommand", "energy-scan")
        .str("energy_kind", energy.kind_name())
        .uint("seed", ctx.seed as usize)
        .uint("trials", trials)
        .uint("dim", dim);
    match &poly {
        PolyconvexityVerdict::Pass { .. } => summary.str("polyconvexity", "pass"),
        PolyconvexityVerdict::NotApplicable => summary.str("polyconvexity", "not-applicable"),
        PolyconvexityVerdict::Violation(w) => {
            summary.str("polyconvexity", "violation");
            summary.f64("polyconvexity_gap", w.gap)
        }
    };
    summary.f64("coercivity_alpha", alpha).f64("coercivity_r", r);
    match &coer {
        CoercivityVerdict::NoViolation { .. } => summary.str("coercivity", "no-violation"),
        CoercivityVerdict::Witness(w) => {
            summary.str("coercivity", "witness-found");
            summary.f64("coercivity_witness_energy", w.energy);
            summary.f64("coercivity_witness_bound", w.bound)
        }
    };
    summary.str(
        "barrier",
        match barrier {
            BarrierVerdict::Holds => "holds",
            BarrierVerdict::Fails => "fails",
        },
    );
    summary.raw("meta", meta_object());
    ctx.out.write("summary.json", &(summary.finish() + "\n"))?;
    Ok(())
}

fn build_family(cfg: &Config) -> Result<SequenceFamily, CliError> {
    match cfg.get_str("semi.family").unwrap_or("oscillation") {
        "constant" => Ok(SequenceFamily::Constant {
            resolution: cfg.usize_or("semi.resolution", 6)?,
        }),
        "oscillation" => Ok(SequenceFamily::standard_oscillation(
            cfg.usize_or("semi.oversample", 8)?,
        )),
        "affine-limit" => {
            let f0 = setup::build_matrix(cfg, "semi.matrix", 2)?
                .unwrap_or_else(|| Mat::diag(&[1.5, 0.8]));
            Ok(SequenceFamily::AffineLimit {
                f0,
                resolution: cfg.usize_or("semi.resolution", 6)?,
                seed: 0,
            })
        }
        other => Err(CliError::validation(format!(
            "unknown semi.family '{other}' (expected constant, oscillation, affine-limit)"
        ))),
    }
}

pub fn run_semicontinuity(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let energy = setup::build_energy(cfg)?;
    let family = build_family(cfg)?;
    let levels = cfg.usize_or("semi.levels", 5)?;
    if levels < 1 {
        return Err(CliError::validation("semi.levels must be at least 1"));
    }
    cfg.finish()?;

    let table = semicontinuity_experiment(&family, &energy, levels)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    // weak continuity of minors along the same family
    let spec_first = MinorSpec::new(&[0], &[0], 2).expect("valid spec");
    let spec_full = MinorSpec::full(2);
    let minors_first = minor_weak_continuity_test(&family, &spec_first, levels);
    let minors_full = minor_weak_continuity_test(&family, &spec_full, levels);

    {
        let mut w = ctx.out.writer("semicontinuity.csv")?;
        writeln!(w, "k,energy,limit_energy")?;
        for row in &table.rows {
            writeln!(w, "{},{:.16e},{:.16e}", row.k, row.energy, table.limit_energy)?;
        }
        w.flush()?;
    }
    {
        let mut w = ctx.out.writer("minors.csv")?;
        writeln!(w, "k,theta,minor,pairing_k,pairing_limit")?;
        for (label, table) in [("m1", &minors_first), ("mn", &minors_full)] {
            for row in &table.rows {
                for (t, (l, r)) in row.lhs.iter().zip(row.rhs.iter()).enumerate() {
                    writeln!(w, "{},{t},{label},{l:.16e},{r:.16e}", row.k)?;
                }
            }
        }
        w.flush()?;
    }

    let mut summary = JsonObject::new(0);
    summary
        .str("subcommand", "semicontinuity")
        .str("energy_kind", energy.kind_name())
        .uint("levels", levels)
        .raw(
            "energies",
            f64_array(&table.rows.iter().map(|r| r.energy).collect::<Vec<_>>()),
        )
        .f64("limit_energy", table.limit_energy)
        .bool("semicontinuity_holds", table.holds)
        .bool("minors_m1_converged", minors_first.converged)
        .f64("minors_m1_final_discrepancy", minors_first.final_discrepancy)
        .bool("minors_mn_converged", minors_full.converged)
        .f64("minors_mn_final_discrepancy", minors_full.final_discrepancy)
        .raw("meta", meta_object());
    ctx.out.write("summary.json", &(summary.finish() + "\n"))?;

    if !table.holds {
        return Err(CliError::assertion(format!(
            "semicontinuity violated: limit energy {} exceeds the sequence tail",
            table.limit_energy
        )));
    }
    if !minors_first.converged || !minors_full.converged {
        return Err(CliError::assertion(format!(
            "minor pairings failed to converge (discrepancies {} and {})",
            minors_first.final_discrepancy, minors_full.final_discrepancy
        )));
    }
    Ok(())
}

pub fn run_piola(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let map_name = cfg.get_str("piola.map").unwrap_or("parabola").to_string();
    let map = match map_name.as_str() {
        "parabola" => SmoothMap::Parabola,
        "bump" => SmoothMap::Bump {
            amplitude: cfg.f64_or("piola.amplitude", 0.8)?,
        },
        "cross-quadratic" => SmoothMap::CrossQuadratic {
            a: cfg.f64_or("piola.a", 0.4)?,
            b: cfg.f64_or("piola.b", 0.3)?,
        },
        "affine" => {
            let matrix = setup::build_matrix(cfg, "piola.matrix", 2)?
                .unwrap_or_else(|| Mat::from_rows(2, &[1.2, 0.3, -0.4, 0.9]));
            SmoothMap::Affine {
                matrix,
                offset: cfg.get_floats("piola.offset")?.unwrap_or_else(|| vec![0.0, 0.0]),
            }
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown piola.map '{other}' (expected affine, parabola, bump, cross-quadratic)"
            )))
        }
    };
    let base = cfg.usize_or("piola.base_resolution", 4)?;
    let levels = cfg.usize_or("piola.levels", 5)?;
    if base < 1 || levels < 2 {
        return Err(CliError::validation(
            "piola needs piola.base_resolution >= 1 and piola.levels >= 2",
        ));
    }
    cfg.finish()?;

    let residuals = piola_identity_residual(&map, base, levels);
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[1] / w[0]).collect();
    {
        let mut w = ctx.out.writer("refinement.csv")?;
        writeln!(w, "level,resolution,residual,ratio")?;
        for (i, r) in residuals.iter().enumerate() {
            let ratio = if i == 0 { f64::NAN } else { ratios[i - 1] };
            writeln!(w, "{},{},{:.16e},{:.16e}", i, base << i, r, ratio)?;
        }
        w.flush()?;
    }

    let mut summary = JsonObject::new(0);
    summary
        .str("subcommand", "piola")
        .str("map", &map_name)
        .uint("base_resolution", base)
        .uint("levels", levels)
        .raw("residuals", f64_array(&residuals))
        .raw("ratios", f64_array(&ratios))
        .raw("meta", meta_object());
    ctx.out.write("summary.json", &(summary.finish() + "\n"))?;

    if matches!(map, SmoothMap::Affine { .. }) {
        if let Some(&worst) = residuals
            .iter()
            .max_by(|a, b| a.partial_cmp(b).unwrap())
        {
            if worst >= 1e-12 {
                return Err(CliError::assertion(format!(
                    "affine adjugate rows must pair to zero, residual {worst:e}"
                )));
            }
        }
    } else if ratios.iter().any(|r| *r >= 1.0) {
        return Err(CliError::assertion(format!(
            "pairing residuals failed to decay: ratios {ratios:?}"
        )));
    }
    Ok(())
}

pub fn run_cov(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let case = cfg.get_str("cov.case").unwrap_or("custom").to_string();
    let (mesh, phi) = match case.as_str() {
        "fold" => {
            // two-element unit square with the second element reflected onto
            // the image of the first
            let mesh = fdlab_core::mesh::make_mesh(fdlab_core::MeshShape::UnitSquare, 1);
            let mut phi = Deformation::identity_of(&mesh);
            phi.images[3 * 2] = 0.0;
            phi.images[3 * 2 + 1] = 0.0;
            (mesh, phi)
        }
        "custom" => {
            let mesh = setup::build_mesh(cfg)?;
            let boundary = setup::build_boundary(cfg, &mesh)?;
            let (phi, _) = interpolate_boundary(&mesh, &boundary)
                .map_err(|e| CliError::validation(e.to_string()))?;
            (mesh, phi)
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown cov.case '{other}' (expected custom, fold)"
            )))
        }
    };
    let n = mesh.dim();

    // box around the image, padded by 10% of the diameter
    let pad = 0.1 * image_diameter(&mesh, &phi).max(1.0);
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for i in 0..mesh.num_vertices() {
        let y = phi.image(n, i);
        for r in 0..n {
            lo[r] = lo[r].min(y[r] - pad);
            hi[r] = hi[r].max(y[r] + pad);
        }
    }
    let u = match cfg.get_str("cov.u").unwrap_or("ones") {
        "ones" => {
            let cells = cfg
                .get_floats("cov.cells")?
                .map(|v| v.iter().map(|x| *x as usize).collect::<Vec<_>>())
                .unwrap_or_else(|| vec![1; n]);
            if cells.len() != n || cells.iter().any(|&c| c == 0) {
                return Err(CliError::validation(format!("cov.cells needs {n} positive counts")));
            }
            let total: usize = cells.iter().product();
            RectilinearPartition::uniform(&lo, &hi, &cells, vec![1.0; total])
        }
        "half-plane" => {
            let axis = cfg.usize_or("cov.axis", 0)?;
            if axis >= n {
                return Err(CliError::validation(format!("cov.axis must be below {n}")));
            }
            let threshold = cfg.f64_or("cov.threshold", 0.5)?;
            RectilinearPartition::half_plane_indicator(&lo, &hi, axis, threshold)
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown cov.u '{other}' (expected ones, half-plane)"
            )))
        }
    };
    cfg.finish()?;

    let result = change_of_variable_check(&mesh, &phi, &u, ctx.seed)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let mut indicatrix_count: Option<usize> = None;
    if case == "fold" {
        let region: Vec<usize> = (0..mesh.num_elements()).collect();
        let r = banach_indicatrix(&mesh, &phi, &[0.2, 0.15], &region);
        indicatrix_count = Some(r.count);
    }

    {
        let mut w = ctx.out.writer("cov.csv")?;
        writeln!(w, "case,lhs,rhs,residual,approximate")?;
        writeln!(
            w,
            "{case},{:.16e},{:.16e},{:.16e},{}",
            result.lhs, result.rhs, result.residual, result.approximate
        )?;
        w.flush()?;
    }

    let mut summary = JsonObject::new(0);
    summary
        .str("subcommand", "cov")
        .str("case", &case)
        .f64("lhs", result.lhs)
        .f64("rhs", result.rhs)
        .f64("residual", result.residual)
        .bool("approximate", result.approximate);
    if let Some(se) = result.rhs_std_error {
        summary.f64("rhs_std_error", se);
    }
    if let Some(c) = indicatrix_count {
        summary.uint("fold_indicatrix", c);
    }
    summary.raw("meta", meta_object());
    ctx.out.write("summary.json", &(summary.finish() + "\n"))?;

    if !result.approximate && result.residual > 1e-10 * (1.0 + result.lhs.abs()) {
        return Err(CliError::assertion(format!(
            "change-of-variables residual {:e} exceeds tolerance",
            result.residual
        )));
    }
    if case == "fold" {
        if let Some(c) = indicatrix_count {
            if c != 2 {
                return Err(CliError::assertion(format!(
                    "fold indicatrix expected 2, got {c}"
                )));
            }
        }
    }
    Ok(())
}

/// Composition-norm spot check exposed through the `check` pipeline when
/// requested; kept here so the CLI surface stays with the commands.
pub fn composition_summary(
    mesh: &SimplicialMesh,
    phi: &Deformation,
    s: f64,
    norm: NormKind,
) -> Result<String, CliError> {
    let r = composition_norm_check(mesh, phi, s, norm).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut obj = JsonObject::new(2);
    obj.f64("lhs", r.lhs)
        .f64("rhs", r.rhs)
        .bool("satisfied", r.satisfied)
        .f64("q_prime", r.q_prime)
        .f64("rho", r.rho);
    Ok(obj.finish())
}
