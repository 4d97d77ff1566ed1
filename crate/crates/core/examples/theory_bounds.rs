//! Sample-wise optima, smoothness and the training-loss bound on small
//! regression instances, plus the sign-agreement identity.

use gradsign::theory::*;

fn main() -> gradsign::Result<()> {
    let cfg = VerifyConfig::default();
    println!("{:>3} {:>2} {:>3} {:>10} {:>10} {:>10} {:>10} holds", "id", "n", "m", "psi", "H", "J", "bound");
    for planted in [false, true] {
        for r in run_sweep(0, 6, planted, &cfg)? {
            println!(
                "{:>3} {:>2} {:>3} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {}{}",
                r.instance_id, r.n, r.m, r.psi, r.h, r.j, r.bound_n3, r.holds_n3,
                if planted { " (planted)" } else { "" }
            );
        }
    }
    let id = agreement_identity_check(&[1, 1, -1, -1, 1])?;
    println!("agreement identity: {} = {} ({})", id.lhs, id.rhs, id.equal);
    Ok(())
}
