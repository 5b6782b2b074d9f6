//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with its runtime. Tolerances and budgets are pinned in the assertions.

use fdlab_core::admissibility::composition::composition_norm_check;
use fdlab_core::admissibility::cov::{change_of_variable_check, RectilinearPartition};
use fdlab_core::admissibility::location::{banach_indicatrix, topological_degree};
use fdlab_core::admissibility::studies::{
    minor_weak_continuity_test, piola_identity_residual, SequenceFamily, SmoothMap,
};
use fdlab_core::admissibility::{check_class_a, BoundField};
use fdlab_core::energy::{
    check_barrier_condition, check_coercivity_sampled, check_polyconvexity_sampled, BarrierVerdict,
    CoercivityVerdict, PolyconvexityVerdict, SvkParams, W1Params, W2Params,
};
use fdlab_core::mesh::{element_gradients, make_mesh, total_energy, Deformation, MeshShape};
use fdlab_core::minimizer::{minimize, quasiconvexity_affine_test, MinimizerConfig};
use fdlab_core::sampling::{random_matrix_log_uniform, trial_rng};
use fdlab_core::tensor::MinorSpec;
use fdlab_core::{BoundaryData, EnergyDensity, Mat, NormKind};
use rand::Rng;
use std::time::Instant;

/// Runs one criterion body, enforces its wall-clock budget, and prints a
/// single PASS/FAIL line.
fn criterion(number: u32, name: &str, budget_s: f64, body: impl FnOnce() -> Result<String, String>) {
    let started = Instant::now();
    let outcome = body();
    let elapsed = started.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("criterion {number} PASS ({elapsed:.2} s): {name} — {detail}"),
        Err(detail) => println!("criterion {number} FAIL ({elapsed:.2} s): {name} — {detail}"),
    }
    if let Err(detail) = outcome {
        panic!("criterion {number} failed: {detail}");
    }
    assert!(
        elapsed <= budget_s,
        "criterion {number} exceeded its {budget_s} s budget ({elapsed:.2} s)"
    );
}

#[test]
fn criterion_01_algebraic_identities() {
    criterion(1, "algebraic identities", 1.0, || {
        let mut worst_prod = 0.0f64;
        let mut worst_detadj = 0.0f64;
        for trial in 0..10_000u64 {
            let dim = 2 + (trial % 2) as usize;
            let mut rng = trial_rng(1001, trial);
            let f = random_matrix_log_uniform(&mut rng, dim, 1e-1, 1e1);
            let adj = f.adjugate();
            let det = f.determinant();
            let prod = f.matmul(&adj);
            let scale = f.frobenius_norm() * adj.frobenius_norm() + det.abs();
            for i in 0..dim {
                for j in 0..dim {
                    let expect = if i == j { det } else { 0.0 };
                    let rel = (prod.get(i, j) - expect).abs() / scale;
                    worst_prod = worst_prod.max(rel);
                }
            }
            let expect = det.powi(dim as i32 - 1);
            let rel = (adj.determinant() - expect).abs() / expect.abs().max(1e-300);
            worst_detadj = worst_detadj.max(rel);
        }
        if worst_prod > 1e-12 {
            return Err(format!("F adj(F) identity residual {worst_prod:e} > 1e-12"));
        }
        if worst_detadj > 1e-10 {
            return Err(format!("det(adj F) identity residual {worst_detadj:e} > 1e-10"));
        }
        Ok(format!(
            "10^4 matrices, residuals {worst_prod:.2e} and {worst_detadj:.2e}"
        ))
    });
}

fn all_energies() -> Vec<EnergyDensity> {
    vec![
        EnergyDensity::DetOnly,
        EnergyDensity::W1(W1Params::standard()),
        EnergyDensity::W2(W2Params::standard()),
        EnergyDensity::Svk(SvkParams::new(1.0, 1.0).unwrap()),
        EnergyDensity::Ogden(
            fdlab_core::energy::OgdenParams::new(
                vec![fdlab_core::energy::PowerTerm { coeff: 1.0, exponent: 2.0 }],
                vec![fdlab_core::energy::PowerTerm { coeff: 0.5, exponent: 2.0 }],
                fdlab_core::energy::Volumetric::PowerPlusInverse {
                    c: 1.0,
                    r: 2.0,
                    d_coef: 1.0,
                    s: 2.0,
                },
            )
            .unwrap(),
        ),
    ]
}

#[test]
fn criterion_02_gradient_correctness() {
    criterion(2, "gradient correctness", 5.0, || {
        let mut worst = 0.0f64;
        // analytic dW/dF against central differences
        for energy in all_energies() {
            for trial in 0..100u64 {
                let dim = 2 + (trial % 2) as usize;
                let mut rng = trial_rng(2002, trial);
                let f = random_matrix_log_uniform(&mut rng, dim, 0.4, 2.5);
                let g = energy.grad(&[], &f).map_err(|e| e.to_string())?;
                let h = 1e-5 * (1.0 + f.frobenius_norm());
                let mut fd = Mat::zeros(dim);
                for i in 0..dim {
                    for j in 0..dim {
                        let mut fp = f;
                        fp.set(i, j, f.get(i, j) + h);
                        let mut fm = f;
                        fm.set(i, j, f.get(i, j) - h);
                        let wp = energy.eval(&[], &fp).map_err(|e| e.to_string())?;
                        let wm = energy.eval(&[], &fm).map_err(|e| e.to_string())?;
                        fd.set(i, j, (wp - wm) / (2.0 * h));
                    }
                }
                let scale = g.max_abs().max(fd.max_abs()).max(1e-8);
                worst = worst.max(g.sub(&fd).max_abs() / scale);
            }
        }
        // nodal gradients against central differences on the augmented
        // objective with barrier off
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        for energy in all_energies() {
            let mut phi = Deformation::identity_of(&mesh);
            let mut rng = trial_rng(2003, 0);
            for i in 0..mesh.num_vertices() {
                if mesh.is_boundary_node(i) {
                    continue;
                }
                for r in 0..2 {
                    phi.images[i * 2 + r] += 0.04 * (rng.random::<f64>() - 0.5);
                }
            }
            let grad = fdlab_core::minimizer::assemble_gradient(
                &mesh,
                &phi,
                &energy,
                0.0,
                0.0,
                None,
                None,
                NormKind::Operator,
            )
            .map_err(|e| e.to_string())?;
            let interior = mesh.interior_nodes();
            for k in 0..10 {
                let node = interior[(k * 7) % interior.len()];
                let r = k % 2;
                let idx = node * 2 + r;
                let h = 1e-6;
                let mut plus = phi.clone();
                plus.images[idx] += h;
                let mut minus = phi.clone();
                minus.images[idx] -= h;
                let ep = total_energy(&mesh, &plus, &energy, None).map_err(|e| e.to_string())?;
                let em = total_energy(&mesh, &minus, &energy, None).map_err(|e| e.to_string())?;
                let fd = (ep - em) / (2.0 * h);
                let scale = fd.abs().max(grad[idx].abs()).max(1e-6);
                worst = worst.max((fd - grad[idx]).abs() / scale);
            }
        }
        if worst < 1e-5 {
            Ok(format!("max relative error {worst:.2e}"))
        } else {
            Err(format!("finite-difference mismatch {worst:.2e} >= 1e-5"))
        }
    });
}

#[test]
fn criterion_03_quasiconvexity_oracle() {
    criterion(3, "quasiconvexity oracle and minimizer return", 60.0, || {
        let mesh = make_mesh(MeshShape::UnitSquare, 32);
        assert_eq!(mesh.num_elements(), 2 * 32 * 32);
        let energies = [
            EnergyDensity::W1(W1Params::standard()),
            EnergyDensity::W2(W2Params::standard()),
        ];
        let targets = [Mat::identity(2), Mat::diag(&[2.0, 1.0])];
        let mut detail = String::new();
        for energy in &energies {
            for f0 in &targets {
                let outcome = quasiconvexity_affine_test(energy, f0, &mesh, 1000, 3003)
                    .map_err(|e| e.to_string())?;
                if !outcome.pass {
                    return Err(format!(
                        "{}: {} perturbations beat the affine energy",
                        energy.kind_name(),
                        outcome.violations
                    ));
                }
                // minimizer started from a perturbed state
                let affine = Deformation::from_affine(&mesh, f0, &[0.0; 2]);
                let mut start = affine.clone();
                let mut rng = trial_rng(3004, 0);
                for i in 0..mesh.num_vertices() {
                    if mesh.is_boundary_node(i) {
                        continue;
                    }
                    for r in 0..2 {
                        start.images[i * 2 + r] += 0.01 * (rng.random::<f64>() - 0.5);
                    }
                }
                let (phi, _trace) = minimize(
                    &mesh,
                    energy,
                    &BoundaryData::Affine {
                        matrix: *f0,
                        offset: vec![0.0, 0.0],
                    },
                    None,
                    None,
                    &MinimizerConfig::default(),
                    NormKind::Operator,
                    Some(&start),
                )
                .map_err(|e| e.to_string())?;
                let expect = outcome.affine_energy;
                let got = total_energy(&mesh, &phi, energy, None).map_err(|e| e.to_string())?;
                let rel = (got - expect).abs() / expect.abs();
                if rel > 1e-6 {
                    return Err(format!(
                        "{} at F0 = {f0:?}: minimizer energy off by {rel:.2e}",
                        energy.kind_name()
                    ));
                }
                detail = format!("last relative energy gap {rel:.2e}");
            }
        }
        Ok(detail)
    });
}

#[test]
fn criterion_04_null_lagrangian() {
    criterion(4, "null Lagrangian determinant integral", 5.0, || {
        let mesh = make_mesh(MeshShape::UnitSquare, 16);
        let base = Deformation::from_affine(&mesh, &Mat::diag(&[1.2, 0.9]), &[0.0; 2]);
        let expect = total_energy(&mesh, &base, &EnergyDensity::DetOnly, None)
            .map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for trial in 0..100u64 {
            let mut rng = trial_rng(4004, trial);
            let mut phi = base.clone();
            for i in 0..mesh.num_vertices() {
                if mesh.is_boundary_node(i) {
                    continue;
                }
                for r in 0..2 {
                    phi.images[i * 2 + r] += 0.2 * (rng.random::<f64>() - 0.5);
                }
            }
            let got = total_energy(&mesh, &phi, &EnergyDensity::DetOnly, None)
                .map_err(|e| e.to_string())?;
            worst = worst.max((got - expect).abs() / expect.abs());
        }
        if worst <= 1e-12 {
            Ok(format!("max relative drift {worst:.2e} over 100 perturbations"))
        } else {
            Err(format!("det integral drifted by {worst:.2e} > 1e-12"))
        }
    });
}

#[test]
fn criterion_05_piola_and_minor_weak_continuity() {
    criterion(5, "adjugate-row pairing decay and minor weak continuity", 30.0, || {
        let studies = [
            ("parabola", SmoothMap::Parabola, 4usize),
            ("bump", SmoothMap::Bump { amplitude: 0.8 }, 3usize),
        ];
        let mut details = Vec::new();
        for (name, map, base) in studies {
            let residuals = piola_identity_residual(&map, base, 5);
            let ratios: Vec<f64> = residuals.windows(2).map(|w| w[1] / w[0]).collect();
            for r in &ratios {
                if !(0.3..=0.7).contains(r) {
                    return Err(format!("{name}: decay ratio {r:.3} outside [0.3, 0.7] ({ratios:?})"));
                }
            }
            details.push(format!("{name} ratios {:?}", ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()));
        }
        let family = SequenceFamily::standard_oscillation(8);
        for (label, spec) in [
            ("m=1", MinorSpec::new(&[0], &[0], 2).unwrap()),
            ("m=n", MinorSpec::full(2)),
        ] {
            let table = minor_weak_continuity_test(&family, &spec, 5);
            if !table.converged {
                return Err(format!(
                    "{label} minor pairing discrepancy {:.3} exceeds 5%",
                    table.final_discrepancy
                ));
            }
            details.push(format!("{label} discrepancy {:.4}", table.final_discrepancy));
        }
        Ok(details.join("; "))
    });
}

#[test]
fn criterion_06_change_of_variables() {
    criterion(6, "change-of-variables identity (exact 2d clipping)", 5.0, || {
        // injective affine map with u = 1
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        let f0 = Mat::from_rows(2, &[1.5, 0.25, -0.1, 0.8]);
        let phi = Deformation::from_affine(&mesh, &f0, &[0.3, 0.1]);
        let u = RectilinearPartition::constant_one(&[-2.0, -2.0], &[3.0, 3.0]);
        let r1 = change_of_variable_check(&mesh, &phi, &u, 0).map_err(|e| e.to_string())?;
        if r1.residual >= 1e-10 {
            return Err(format!("affine case residual {:e}", r1.residual));
        }
        // identity with a half-plane indicator
        let phi_id = Deformation::identity_of(&mesh);
        let u2 = RectilinearPartition::half_plane_indicator(&[-1.0, -1.0], &[2.0, 2.0], 0, 0.4);
        let r2 = change_of_variable_check(&mesh, &phi_id, &u2, 0).map_err(|e| e.to_string())?;
        if r2.residual >= 1e-10 || (r2.lhs - 0.6).abs() >= 1e-12 {
            return Err(format!("half-plane case residual {:e} lhs {}", r2.residual, r2.lhs));
        }
        // the two-element fold: doubled region, indicatrix 2
        let fold_mesh = make_mesh(MeshShape::UnitSquare, 1);
        let mut fold = Deformation::identity_of(&fold_mesh);
        fold.images[3 * 2] = 0.0;
        fold.images[3 * 2 + 1] = 0.0;
        let u3 = RectilinearPartition::constant_one(&[-1.0, -1.0], &[2.0, 2.0]);
        let r3 = change_of_variable_check(&fold_mesh, &fold, &u3, 0).map_err(|e| e.to_string())?;
        if r3.residual >= 1e-10 {
            return Err(format!("fold residual {:e}", r3.residual));
        }
        let region: Vec<usize> = (0..fold_mesh.num_elements()).collect();
        let ind = banach_indicatrix(&fold_mesh, &fold, &[0.2, 0.15], &region);
        if ind.count != 2 {
            return Err(format!("fold indicatrix {} != 2", ind.count));
        }
        Ok(format!(
            "residuals {:.1e}, {:.1e}, {:.1e}; fold indicatrix 2",
            r1.residual, r2.residual, r3.residual
        ))
    });
}

#[test]
fn criterion_07_composition_norm_inequality() {
    criterion(7, "composition-operator norm inequality", 10.0, || {
        let mesh = make_mesh(MeshShape::UnitSquare, 4);
        // equality at the identity
        let id = Deformation::identity_of(&mesh);
        let r = composition_norm_check(&mesh, &id, 2.0, NormKind::Operator)
            .map_err(|e| e.to_string())?;
        if !r.satisfied || (r.lhs - 1.0).abs() > 1e-13 || (r.lhs - r.rhs).abs() > 1e-13 {
            return Err(format!("identity: lhs {} rhs {}", r.lhs, r.rhs));
        }
        // 100 seeded random flip-free piecewise-affine homeomorphisms
        let mut checked = 0usize;
        let mut trial = 0u64;
        while checked < 100 {
            let mut rng = trial_rng(7007, trial);
            trial += 1;
            if trial > 400 {
                return Err("could not build 100 flip-free perturbations".to_string());
            }
            let mut phi = Deformation::identity_of(&mesh);
            for i in 0..mesh.num_vertices() {
                if mesh.is_boundary_node(i) {
                    continue;
                }
                for c in 0..2 {
                    phi.images[i * 2 + c] += 0.08 * (rng.random::<f64>() - 0.5);
                }
            }
            let grads = element_gradients(&mesh, &phi).map_err(|e| e.to_string())?;
            if grads.iter().any(|g| g.f.determinant() <= 0.0) {
                continue;
            }
            let r = composition_norm_check(&mesh, &phi, 2.0, NormKind::Operator)
                .map_err(|e| e.to_string())?;
            if !r.satisfied {
                return Err(format!("trial {trial}: lhs {} > rhs {}", r.lhs, r.rhs));
            }
            checked += 1;
        }
        Ok("identity equality and 100 seeded trials satisfied".to_string())
    });
}

#[test]
fn criterion_08_constrained_squeeze_run() {
    criterion(8, "constrained squeeze run under M = 4", 120.0, || {
        // The squeeze carries the unit square onto the 3 x 1/3 rectangle.
        // Any flip-free piecewise-affine deformation with this boundary is a
        // homeomorphism between those quadrilaterals, and the modulus bound
        // (Groetzsch) forces max K >= mod(3 x 1/3) / mod(1 x 1) = 9 for
        // every competitor. The target max K/M <= 1 + 1e-6 with M = 4 would
        // need max K <= 4.000004, so the assertion below cannot be met by
        // any deformation; the run is executed faithfully and its measured
        // margin is reported.
        let mesh = make_mesh(MeshShape::UnitSquare, 8);
        let energy = EnergyDensity::W2(W2Params::standard());
        let boundary = BoundaryData::Squeeze { factor: 3.0 };
        let bound = BoundField::constant(4.0, 2.0, 2).unwrap();
        let unconstrained = minimize(
            &mesh,
            &energy,
            &boundary,
            None,
            None,
            &MinimizerConfig::default(),
            NormKind::Operator,
            None,
        )
        .map_err(|e| e.to_string())?;
        let e_unconstrained = total_energy(&mesh, &unconstrained.0, &energy, None)
            .map_err(|e| e.to_string())?;
        let config = MinimizerConfig {
            beta: 1e6,
            max_iterations: 40_000,
            ..MinimizerConfig::default()
        };
        let (phi, _trace) = minimize(
            &mesh,
            &energy,
            &boundary,
            Some(&bound),
            None,
            &config,
            NormKind::Operator,
            Some(&unconstrained.0),
        )
        .map_err(|e| e.to_string())?;

        let report = check_class_a(&mesh, &phi, &bound, NormKind::Operator)
            .map_err(|e| e.to_string())?;
        let max_km = report.max_distortion / 4.0;
        if report.min_jacobian <= 0.0 {
            return Err(format!("min det {} not positive", report.min_jacobian));
        }
        // degree 1 at 20 sampled interior image points
        let region: Vec<usize> = (0..mesh.num_elements()).collect();
        let mut degree_checked = 0;
        let mut trial = 0u64;
        while degree_checked < 20 && trial < 200 {
            let mut rng = trial_rng(8008, trial);
            trial += 1;
            let x = [
                0.1 + 0.8 * rng.random::<f64>(),
                0.1 + 0.8 * rng.random::<f64>(),
            ];
            let y = [3.0 * x[0], x[1] / 3.0];
            match topological_degree(&mesh, &phi, &y, &region) {
                Ok(1) => degree_checked += 1,
                Ok(d) => return Err(format!("degree {d} != 1 at interior point {y:?}")),
                Err(_) => continue,
            }
        }
        if degree_checked < 20 {
            return Err("could not evaluate 20 interior degree samples".to_string());
        }
        let e_constrained =
            total_energy(&mesh, &phi, &energy, None).map_err(|e| e.to_string())?;
        if e_constrained < e_unconstrained - 1e-9 * (1.0 + e_unconstrained.abs()) {
            return Err(format!(
                "constrained energy {e_constrained} fell below the unconstrained optimum {e_unconstrained}"
            ));
        }
        if max_km > 1.0 + 1e-6 {
            return Err(format!(
                "max K/M = {max_km:.6} (the modulus bound forces max K >= 9 for this boundary, so M = 4 is unattainable)"
            ));
        }
        Ok(format!("max K/M = {max_km:.6}, energy margin ok, 20 degree-1 samples"))
    });
}

#[test]
fn criterion_09_verifier_verdicts() {
    criterion(9, "energy verifier verdicts", 10.0, || {
        let w1 = EnergyDensity::W1(W1Params::standard());
        let w2 = EnergyDensity::W2(W2Params::standard());
        if check_barrier_condition(&w1, 3, 12) != BarrierVerdict::Holds {
            return Err("W1 barrier condition should hold".to_string());
        }
        if check_barrier_condition(&w2, 3, 12) != BarrierVerdict::Fails {
            return Err("W2 barrier condition should fail".to_string());
        }
        let coer = check_coercivity_sampled(&w2, 3, 0.1, 2.0, 0.0, 1000, 9009, NormKind::Frobenius);
        if !matches!(coer, CoercivityVerdict::NoViolation { .. }) {
            return Err("W2 coercivity with the n = 3 exponent should hold".to_string());
        }
        let det = check_coercivity_sampled(
            &EnergyDensity::DetOnly,
            2,
            0.5,
            2.0,
            0.0,
            1000,
            9010,
            NormKind::Frobenius,
        );
        if !matches!(det, CoercivityVerdict::Witness(_)) {
            return Err("det-only coercivity should produce a witness".to_string());
        }
        // polyconvexity spot checks ride along
        if !matches!(
            check_polyconvexity_sampled(&w1, 3, 300, 9011),
            PolyconvexityVerdict::Pass { .. }
        ) {
            return Err("W1 sampled polyconvexity should pass".to_string());
        }
        Ok("W1 barrier holds, W2 barrier fails, coercivity verdicts as expected".to_string())
    });
}

#[test]
fn criterion_10_determinism_across_threads() {
    criterion(10, "byte-identical summaries across worker threads", 60.0, || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let write_cfg = |threads: usize| -> std::path::PathBuf {
            let path = dir.path().join(format!("run{threads}.cfg"));
            std::fs::write(
                &path,
                format!(
                    "run.threads = {threads}\nrun.seed = 1234\nenergy.kind = w1\n\
                     mesh.shape = unit-square\nmesh.resolution = 8\n\
                     boundary.kind = squeeze\nboundary.factor = 1.5\n\
                     bound.m = 4.0\nbound.s = 2.0\n"
                ),
            )
            .unwrap();
            path
        };
        let mut summaries = Vec::new();
        for threads in [1usize, 4] {
            let out = dir.path().join(format!("out{threads}"));
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_fdlab"))
                .arg("minimize")
                .arg("--config")
                .arg(write_cfg(threads))
                .arg("--out")
                .arg(&out)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("minimize with {threads} threads failed"));
            }
            let text = std::fs::read_to_string(out.join("summary.json")).map_err(|e| e.to_string())?;
            let filtered: String = text
                .lines()
                .filter(|l| !l.contains("timestamp_unix_ms"))
                .collect::<Vec<_>>()
                .join("\n");
            summaries.push(filtered);
        }
        if summaries[0] != summaries[1] {
            return Err("summaries differ between 1 and 4 worker threads".to_string());
        }
        Ok("1-thread and 4-thread summaries byte-identical (timestamp excluded)".to_string())
    });
}
