//! Builds each fixture kind and prints a few diagnostics.

use dpdensity::densities::{exact_bias, make_trig_density, random_theta, Density, PackingDensity, UniformDensity};
use dpdensity::privacy::seeded_rng;

fn main() -> dpdensity::error::Result<()> {
    let mut rng = seeded_rng(5);
    let u = UniformDensity { dim: 2 };
    println!("uniform: f(0.3,0.7) = {}", u.eval(&[0.3, 0.7]));

    let trig = make_trig_density(2.0, 2.0, 16, 1, &mut rng)?;
    println!("trig: certified lower bound {:.4}", trig.min_value());
    for m in [0, 2, 8] {
        println!("  exact bias at M={m}: {:.3e}", exact_bias(&trig, m));
    }

    let theta = random_theta(4, 1, &mut rng);
    let p = PackingDensity::new(theta, 4, 1.0, 1, 2.0, true)?;
    println!("packing: h {:.4}, amplitude {:.4}, mass {:.8}, lattice min {:.4}", p.h(), p.amplitude(), p.mass(4096), p.lattice_min(4096));
    Ok(())
}
