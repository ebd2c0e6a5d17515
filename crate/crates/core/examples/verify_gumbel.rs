//! Checks the tail bounds of the binary-concrete relaxation at a few points
//! and samples a relaxed gate vector.

use g2lstm::linalg::Vector;
use g2lstm::sampling::{binary_concrete, verify_prop1, Prop1Report, RngState};

fn main() -> g2lstm::Result<()> {
    let mut rng = RngState::new(7);
    println!("{}", Prop1Report::CSV_HEADER);
    for (alpha, tau, eps) in [(0.0, 0.1, 0.05), (2.0, 0.5, 0.1), (-1.0, 1.0, 0.2)] {
        let r = verify_prop1(alpha, tau, eps, 200_000, &mut rng)?;
        println!("{}", r.csv_row());
    }

    let logits = Vector::from(vec![-3.0, -0.5, 0.0, 0.5, 3.0]);
    for tau in [1.0, 0.5, 0.1] {
        let (gates, _noise) = binary_concrete(&logits, tau, &mut rng)?;
        let shown: Vec<String> = gates.as_slice().iter().map(|g| format!("{g:.3}")).collect();
        println!("tau={tau}: [{}]", shown.join(", "));
    }
    Ok(())
}
