use cubesig_core::error::Result;
use cubesig_core::tensor::bd_act;
use cubesig_core::verify::{self, Hooks, SuiteSizes, Tolerances, VerifyConfig, REPORT_SCHEMA};
use cubesig_core::{GradedTensor, HyperoctahedralElement};

fn small() -> VerifyConfig {
    VerifyConfig {
        seed: 11,
        suite: SuiteSizes {
            n: 3,
            cells: 4,
            max_level: 3,
            cases: 6,
            bound_pairs: 6,
            perturbation: 0.05,
            convergence_cells: vec![4, 8],
            shuffle_cases: 3,
            gl_cases: 4,
            gl_level: 2,
            tree_like_cases: 1,
            moment_max_degree: 1,
            power_family: vec![1.0, 2.0],
            normalization_cases: 4,
            normalization_level: 2,
            normalization_cap: 4.0,
            mc_cases: 2,
            mc_samples: 2000,
        },
        tolerances: Tolerances {
            exact: 1e-12,
            closed_form: 1e-12,
            convergence_factor: 3.0,
            sum_of_paths: 1e-10,
            tree_like: 1e-8,
            gl_relative: 1e-9,
            shuffle_relative: 0.2,
            shuffle_ratio: 1.2,
            moment_relative: 0.1,
            moment_floor: 1e-12,
            parametrized_family: 1e-12,
            normalization: 1e-9,
            graded_scale: 1e-10,
            mc_constant: 1e-12,
            mc_band: 3.0,
        },
    }
}

fn negated_bd_act(g: &HyperoctahedralElement, a: &GradedTensor) -> Result<GradedTensor> {
    let mut out = bd_act(g, a)?;
    let moved: Vec<_> = out.iter().map(|(k, v)| (k.clone(), -v)).collect();
    for (k, v) in moved {
        out.insert(k, v)?;
    }
    Ok(out)
}

#[test]
fn small_suite_passes_and_reports_schema() {
    let report = verify::run(&small(), &Hooks::default()).unwrap();
    for e in &report.entries {
        assert!(e.pass, "{} failed: observed {}", e.name, e.observed);
    }
    let json = report.to_json();
    assert_eq!(json["schema"], REPORT_SCHEMA);
    assert_eq!(json["all_pass"], true);
    assert_eq!(json["entries"].as_array().unwrap().len(), report.entries.len());
    for name in ["bd_equivariance", "chen_identity", "shuffle_ratio_4_8", "moment_extraction"] {
        assert!(report.entry(name).is_some(), "missing {name}");
    }
}

#[test]
fn tampered_sign_fails_only_equivariance() {
    let cfg = small();
    let hooks = Hooks {
        bd_act: negated_bd_act,
    };
    let report = verify::run_suites(&cfg, &hooks, [verify::SUITES[0].1]).unwrap();
    let failed: Vec<&str> = report
        .entries
        .iter()
        .filter(|e| !e.pass)
        .map(|e| e.name.as_str())
        .collect();
    assert_eq!(failed, ["bd_equivariance"]);
    assert!(!report.all_pass());
}

#[test]
fn reports_are_reproducible() {
    let cfg = small();
    let suites = [verify::SUITES[3].1, verify::SUITES[8].1];
    let a = verify::run_suites(&cfg, &Hooks::default(), suites).unwrap();
    let b = verify::run_suites(&cfg, &Hooks::default(), suites).unwrap();
    assert_eq!(a.to_json().to_string(), b.to_json().to_string());
}

#[test]
fn degenerate_configs_are_rejected() {
    let mut cfg = small();
    cfg.suite.convergence_cells = vec![8];
    assert!(verify::run(&cfg, &Hooks::default()).is_err());
    let mut cfg = small();
    cfg.suite.n = 1;
    assert!(verify::run(&cfg, &Hooks::default()).is_err());
}
