//! Central finite differences against the analytic adapter gradient.

mod common;

use cream_core::trainer::LossSimilarity;

#[test]
fn cosine_loss_gradient_matches_finite_differences() {
    let (rel, loss) = common::gradient_errors(LossSimilarity::Cosine, 11, 20);
    assert!(loss < 1e-10, "loss differs from the reference by {loss}");
    assert!(rel < 1e-4, "worst relative gradient error {rel}");
}

#[test]
fn maxsim_loss_gradient_matches_finite_differences() {
    let (rel, loss) = common::gradient_errors(LossSimilarity::MaxSim, 12, 20);
    assert!(loss < 1e-10, "loss differs from the reference by {loss}");
    assert!(rel < 1e-4, "worst relative gradient error {rel}");
}
