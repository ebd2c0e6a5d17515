//! Singular value decomposition of a small matrix and the error of its best
//! rank-k approximations.

use g2lstm::linalg::{svd, truncate_rank, Matrix};

fn main() -> g2lstm::Result<()> {
    let m = Matrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * (i as f64));
    let d = svd(&m)?;
    println!("singular values: {:?}", d.s.as_slice());
    println!(
        "reconstruction error: {:.3e}",
        m.sub(&d.reconstruct())?.frobenius_norm()
    );
    println!("k,error,tail");
    for k in 1..=4 {
        let err = m.sub(&truncate_rank(&d, k)?)?.frobenius_norm();
        let tail = d.s.as_slice()[k..].iter().fold(0.0, |acc, s| acc + s * s).sqrt();
        println!("{k},{err:.6},{tail:.6}");
    }
    Ok(())
}
