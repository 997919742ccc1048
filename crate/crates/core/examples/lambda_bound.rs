//! Prints the safe-step estimate and the smallest separating penalty
//! multiplier for a range of unsafe trajectory lengths, and confirms the
//! separation by direct summation.
//!
//! `cargo run --example lambda_bound -- [gamma] [eta] [p0]`

use rpt::shaping::{estimate_safe_steps, lambda_lower_bound, verify_separation};

fn main() -> rpt::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("a number"));
    let gamma = args.next().unwrap_or(0.99);
    let eta = args.next().unwrap_or(0.9);
    let p0 = args.next().unwrap_or(0.0);
    let (r_min, r_max) = (-1.0, 100.0);

    println!("gamma {gamma}, eta {eta}, p0 {p0}, rewards in [{r_min}, {r_max}]");
    println!("{:>4} {:>4} {:>14} {:>10} {:>10}", "H", "T", "bound", "1.001x", "0.5x");
    for h in [1, 2, 5, 10, 20, 50, 100] {
        let t = estimate_safe_steps(eta, p0, h)?;
        let bound = lambda_lower_bound(gamma, h, eta, p0, r_min, r_max)?;
        let above = verify_separation(gamma, h, eta, p0, r_min, r_max, 1.001 * bound);
        let below = verify_separation(gamma, h, eta, p0, r_min, r_max, 0.5 * bound);
        println!("{h:>4} {t:>4} {bound:>14.4} {above:>10} {below:>10}");
    }
    Ok(())
}
