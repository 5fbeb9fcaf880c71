//! Minimax rate, its regime and the two cut-off rules over a few budgets.

use dpdensity::estimator::{theoretical_rate, CutoffRule, RateQuery};
use dpdensity::privacy::PrivacyBudget;

fn main() -> dpdensity::error::Result<()> {
    let (n, beta, d) = (1e4, 1.0, 1);
    println!("rho        rate       regime    M_thm  M_adaptive");
    for rho in [1e-4, 1e-2, 1.0, 100.0] {
        let budget = PrivacyBudget::new(rho)?;
        let r = theoretical_rate(&RateQuery::new(n, budget, beta, d)?);
        println!(
            "{rho:<10} {:<10.3e} {:<9} {:<6} {}",
            r.value,
            format!("{:?}", r.regime),
            CutoffRule::Theorem.cutoff(n, budget, beta, d)?,
            CutoffRule::AdaptiveForm.cutoff(n, budget, beta, d)?
        );
    }
    Ok(())
}
