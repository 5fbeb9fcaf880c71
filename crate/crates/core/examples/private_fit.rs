//! Fits the projection estimator with and without a zCDP budget.

use dpdensity::densities::{make_trig_density, rejection_sample, Fixture};
use dpdensity::estimator::fit_recorded;
use dpdensity::experiments::mise;
use dpdensity::privacy::{seeded_rng, BudgetLedger, PrivacyBudget};

fn main() -> dpdensity::error::Result<()> {
    let mut rng = seeded_rng(1);
    let truth = Fixture::Trig(make_trig_density(1.0, 2.0, 32, 1, &mut rng)?);
    let data = rejection_sample(&truth, 5000, &mut rng)?;

    let plain = dpdensity::estimator::fit(&data, 8, None, &mut rng)?;
    println!("non-private M=8: MISE {:.3e}", mise(&plain, &truth)?);

    for rho in [0.01, 0.1, 1.0] {
        let budget = PrivacyBudget::new(rho)?;
        let mut ledger = BudgetLedger::new(budget);
        let est = fit_recorded(&data, 8, budget, &mut ledger, &mut rng)?;
        println!("rho={rho}: sigma {:.3e}, MISE {:.3e}", est.sigma().sigma(), mise(&est, &truth)?);
        println!("{ledger}");
    }
    Ok(())
}
