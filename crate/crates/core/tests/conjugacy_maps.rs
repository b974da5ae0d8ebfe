//! End-to-end checks of the conjugacy construction on a weakly perturbed
//! block system and its linear reduction.

use depcag::conjugacy::{Conjugacy, ReportOptions};
use depcag::model::{load_config_str, NumericsConfig, SystemModel};
use depcag::odeint::vec_norm;
use nalgebra::DVector;

fn eps_system() -> (depcag::BlockSystem, depcag::DichotomySpec, NumericsConfig) {
    let cfg = r#"{
        "grid": {"uniform": {"step": 0.5, "anchor": 0.0, "window": [-20, 20]}},
        "system": {"kind": "block",
            "A": [["-1"]], "A0": [["0"]], "B": [["1"]], "B0": [["0"]],
            "f": ["0.01*sin(x1+w1)"], "g": ["0.01*sin(x1)"],
            "phi": ["0.01*cos(y1)"], "psi": ["0.01*sin(y1)"],
            "lambda": 0.01, "delta": 0.01, "omega": 0.01,
            "beta": 1.0, "beta0": 0.0},
        "dichotomy": {"K": 1.0, "alpha": 1.0},
        "numerics": {"ode_step": 0.01, "tail_tol": 1e-6, "picard_tol": 1e-8,
                     "crossing_tol": 1e-9, "fp_tol": 1e-12, "max_iters": 400}
    }"#;
    let loaded = load_config_str(cfg).unwrap();
    match loaded.system {
        SystemModel::Block(b) => (b, loaded.dichotomy.unwrap(), loaded.numerics),
        _ => unreachable!(),
    }
}

fn linear_system() -> (depcag::BlockSystem, depcag::DichotomySpec, NumericsConfig) {
    let cfg = r#"{
        "grid": {"uniform": {"step": 0.5, "anchor": 0.0, "window": [-20, 20]}},
        "system": {"kind": "block",
            "A": [["-1"]], "A0": [["0"]], "B": [["1"]], "B0": [["0"]],
            "f": ["0"], "g": ["0"], "phi": ["0"], "psi": ["0"],
            "lambda": 0.0, "delta": 0.0, "omega": 0.0,
            "beta": 1.0, "beta0": 0.0},
        "dichotomy": {"K": 1.0, "alpha": 1.0},
        "numerics": {"ode_step": 0.01, "tail_tol": 1e-6, "picard_tol": 1e-8,
                     "crossing_tol": 1e-9, "fp_tol": 1e-12, "max_iters": 400}
    }"#;
    let loaded = load_config_str(cfg).unwrap();
    match loaded.system {
        SystemModel::Block(b) => (b, loaded.dichotomy.unwrap(), loaded.numerics),
        _ => unreachable!(),
    }
}

#[test]
fn hypotheses_pass_on_eps_system() {
    let (sys, d, nums) = eps_system();
    let conj = Conjugacy::new(&sys, &d, &nums).unwrap();
    let rep = conj.hypotheses();
    assert!(rep.pass, "{:#?}", rep.entries);
    let alpha0 = rep.derived_value("alpha0").unwrap();
    assert!(alpha0 > 0.8 && alpha0 < 1.0, "alpha0 = {alpha0}");
}

#[test]
fn crossing_time_closed_form_when_linear() {
    let (sys, d, nums) = linear_system();
    let conj = Conjugacy::new(&sys, &d, &nums).unwrap();
    // x' = -x: |X(T, 0, e)| = 1 at T = 1
    let x0 = DVector::from_element(1, 1.0f64.exp());
    let ct = conj.crossing_time_t(0.0, &x0).unwrap();
    assert!((ct.value - 1.0).abs() < 1e-6, "T = {}", ct.value);
    assert!(ct.residual <= 1e-9);
    let ct = conj.crossing_time_s(0.0, &x0).unwrap();
    assert!((ct.value - 1.0).abs() < 1e-6, "S = {}", ct.value);
    // |x0| = 1 crosses immediately
    let unit = DVector::from_element(1, -1.0);
    assert_eq!(conj.crossing_time_t(0.0, &unit).unwrap().value, 0.0);
    // S(0, xi) decreases as xi -> 0
    let s_small = conj
        .crossing_time_s(0.0, &DVector::from_element(1, 1e-4))
        .unwrap()
        .value;
    let s_mid = conj
        .crossing_time_s(0.0, &DVector::from_element(1, 1e-2))
        .unwrap()
        .value;
    assert!(s_small < s_mid, "{s_small} !< {s_mid}");
    // zero state is rejected
    assert!(conj.crossing_time_t(0.0, &DVector::zeros(1)).is_err());
}

#[test]
fn linear_reduction_maps_are_identity() {
    let (sys, d, nums) = linear_system();
    let conj = Conjugacy::new(&sys, &d, &nums).unwrap();
    for (xv, yv) in [(1.5, -0.5), (0.0, 2.0), (-2.0, 0.0), (0.3, 0.3)] {
        let z = DVector::from_vec(vec![xv, yv]);
        for map in [
            conj.map_h(0.0, &z).unwrap(),
            conj.map_l(0.0, &z).unwrap(),
            conj.map_htilde(0.0, &z).unwrap(),
            conj.map_ltilde(0.0, &z).unwrap(),
            conj.toward_linear(0.0, &z).unwrap(),
            conj.toward_nonlinear(0.0, &z).unwrap(),
        ] {
            assert!(
                vec_norm(&(&map - &z)) < 1e-8,
                "state ({xv}, {yv}) mapped to {map:?}"
            );
        }
    }
}

#[test]
fn stage_roundtrips_on_eps_system() {
    let (sys, d, nums) = eps_system();
    let conj = Conjugacy::new(&sys, &d, &nums).unwrap();
    for (xv, yv) in [(1.5, -0.5), (-3.0, 3.0), (0.0, 1.0), (0.7, 0.0)] {
        let z = DVector::from_vec(vec![xv, yv]);
        let h = conj.map_h(0.0, &z).unwrap();
        let back = conj.map_l(0.0, &h).unwrap();
        assert!(
            vec_norm(&(&back - &z)) < 1e-4,
            "L(H(z)) defect {} at ({xv},{yv})",
            vec_norm(&(&back - &z))
        );
        let ht = conj.map_htilde(0.0, &z).unwrap();
        let back = conj.map_ltilde(0.0, &ht).unwrap();
        assert!(
            vec_norm(&(&back - &z)) < 1e-4,
            "L~(H~(z)) defect {} at ({xv},{yv})",
            vec_norm(&(&back - &z))
        );
    }
}

#[test]
fn full_report_passes_on_eps_system() {
    let (sys, d, nums) = eps_system();
    let conj = Conjugacy::new(&sys, &d, &nums).unwrap();
    let opts = ReportOptions {
        grid_n: 3,
        dynamics_states: 2,
        dynamics_samples: 3,
        ..ReportOptions::default()
    };
    let rep = conj.report(&opts).unwrap();
    assert!(rep.pass, "{rep:#?}");
}
