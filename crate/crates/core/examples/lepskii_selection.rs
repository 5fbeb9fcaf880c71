//! Lepskii selection with theory and practical constants.

use dpdensity::adaptive::{Lepskii, PenaltyConfig};
use dpdensity::densities::{make_trig_density, rejection_sample, Fixture};
use dpdensity::experiments::mise;
use dpdensity::privacy::{seeded_rng, PrivacyBudget};

fn main() -> dpdensity::error::Result<()> {
    let mut rng = seeded_rng(3);
    let truth = Fixture::Trig(make_trig_density(2.0, 2.0, 32, 1, &mut rng)?);
    let data = rejection_sample(&truth, 16384, &mut rng)?;
    let rho = PrivacyBudget::new(1.0)?;

    for (label, cfg) in [("theory", PenaltyConfig::theory(1, 2.0)?), ("practical C=1", PenaltyConfig::practical(1.0, 1.0, 0.5)?)] {
        let sel = Lepskii::new(cfg).select(&data, rho, &mut rng)?;
        println!(
            "{label}: candidate {} of {}, M = {}, MISE {:.3e}",
            sel.trace.selected(),
            sel.candidates.len(),
            sel.estimate.cutoff(),
            mise(&sel.estimate, &truth)?
        );
        println!("  rho spent {:.4}, unspent {:.4}", sel.ledger.spent(), sel.ledger.remaining());
    }
    Ok(())
}
