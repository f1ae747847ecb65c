use daml_core::gradcheck::{finite_diff_check_scaled, full_objective_check, run_op_suite, OpReport};
use daml_core::tensor::Tensor;

use crate::CliError;

pub fn gradcheck(tolerance: f64, seed: u64, inject_grl_sign_bug: bool) -> Result<(), CliError> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(CliError::Usage(format!("--tolerance must be a positive number, got {tolerance}")));
    }
    let mut reports = run_op_suite(seed, tolerance)?;
    reports.push(full_objective_check(seed, tolerance)?);
    if inject_grl_sign_bug {
        reports.push(injected_sign_bug_check(tolerance)?);
    }
    let mut failed = 0usize;
    for report in &reports {
        println!("{}", report.summary());
        if !report.passed() {
            failed += 1;
        }
    }
    println!("{} checks, {failed} failed", reports.len());
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

/// Run the reversal-layer check with the sign fault switched on. The
/// analytic gradient then comes out with the wrong sign, so the check must
/// fail; a pass here would mean the suite cannot catch a broken reversal.
fn injected_sign_bug_check(tolerance: f64) -> Result<OpReport, CliError> {
    let eta = 0.005;
    let x = Tensor::vector(vec![0.4, -1.2, 0.8, 2.0, -0.5])?;
    let w = Tensor::vector(vec![0.7, -1.3, 0.4, 2.0, -0.6])?;
    let params = vec![("x".to_string(), x)];
    let report = finite_diff_check_scaled(
        "grad_reverse_with_injected_sign_bug",
        &params,
        tolerance,
        -eta,
        move |g, p| {
            g.inject_grl_sign_bug(true);
            let r = g.grad_reverse(p[0], eta)?;
            let w = g.constant(w.clone())?;
            g.dot(r, w)
        },
    )?;
    Ok(report)
}
