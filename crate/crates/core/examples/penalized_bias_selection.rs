//! Penalized-bias selection over the dyadic model collection, with the trace.

use dpdensity::adaptive::{dyadic_cutoff_grid, PenalizedBias, SelectionTrace};
use dpdensity::densities::{make_trig_density, rejection_sample, Fixture};
use dpdensity::experiments::mise;
use dpdensity::privacy::{seeded_rng, PrivacyBudget};

fn main() -> dpdensity::error::Result<()> {
    let mut rng = seeded_rng(4);
    let truth = Fixture::Trig(make_trig_density(2.0, 2.0, 32, 1, &mut rng)?);
    let data = rejection_sample(&truth, 16384, &mut rng)?;
    let grid = dyadic_cutoff_grid(data.len(), 1);
    let sel = PenalizedBias::new(grid)?.select(&data, PrivacyBudget::new(1.0)?, &mut rng)?;
    if let SelectionTrace::PenalizedBias(t) = &sel.trace {
        for c in &t.candidates {
            println!("M={:<5} B2={:+.3e} criterion={:.3e}{}", c.cutoff, c.bias_sq, c.criterion, if c.accepted { "  <-" } else { "" });
        }
    }
    println!("MISE of selection {:.3e}", mise(&sel.estimate, &truth)?);
    Ok(())
}
