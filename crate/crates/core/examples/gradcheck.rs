//! Finite-difference gradient check of the small reference model in every
//! gate mode.

use g2lstm::analysis::{grad_check_case, GradCheckCase, GradCheckReport};
use g2lstm::cell::GateMode;

fn main() -> g2lstm::Result<()> {
    println!("{}", GradCheckReport::CSV_HEADER);
    let mut ok = true;
    for mode in [
        GateMode::Standard,
        GateMode::SharpenedSigmoid(0.2),
        GateMode::GumbelGate(0.9),
    ] {
        let case = GradCheckCase::small(mode, false, 1)?;
        let report = grad_check_case(&case, 1e-5, 1e-6)?;
        for row in report.csv_rows() {
            println!("{row}");
        }
        ok &= report.passed();
    }
    eprintln!(
        "{}",
        if ok {
            "all blocks within tolerance"
        } else {
            "gradient mismatch"
        }
    );
    Ok(())
}
