#[path = "support/gradient_cases.rs"]
mod cases;

use cases::{CASES, TOL};

fn run(name: &str) {
    let (_, case) = CASES.iter().find(|(n, _)| *n == name).unwrap();
    let results = case();
    assert_eq!(results.len() as u64, cases::CONFIGS);
    for (seed, r) in results.iter().enumerate() {
        assert!(
            r.passes(TOL),
            "{name} config {seed}: max relative error {:.3e} (abs {:.3e}) over {} entries",
            r.max_rel_error,
            r.max_abs_error,
            r.checked
        );
    }
}

#[test]
fn dense_layer() {
    run("dense");
}

#[test]
fn conv1d_layer() {
    run("conv1d");
}

#[test]
fn leaky_relu_activation() {
    run("leaky relu");
}

#[test]
fn contrastive_loss_gradient() {
    run("contrastive loss");
}

#[test]
fn mse_loss_gradient() {
    run("mse loss");
}

#[test]
fn sim_regularizer_gradient() {
    run("L_sim");
}

#[test]
fn joint_loss_gradient() {
    run("joint loss");
}
