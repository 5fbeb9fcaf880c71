//! Empirical Fourier coefficients of a small sample and the Parseval norm.

use dpdensity::fourier::{empirical_coefficients, l2_distance_sq, CoefficientGrid, Point};

fn main() -> dpdensity::error::Result<()> {
    let data: Vec<Point> = [0.1, 0.15, 0.2, 0.55, 0.6, 0.9].iter().map(|&x| Point::new(vec![x])).collect::<Result<_, _>>()?;
    let grid = empirical_coefficients(&data, 3)?;
    for (k, v) in grid.multi_indices().zip(grid.values()) {
        println!("theta{k:?} = {:+.4} {:+.4}i", v.re, v.im);
    }
    println!("||f_M||^2 = {:.4}", grid.l2_norm_sq());
    println!("distance to uniform = {:.4}", l2_distance_sq(&grid, &CoefficientGrid::uniform(1, 0)?)?);
    println!("f_M(0.15) = {:.4}", grid.evaluate(&[0.15])?);
    Ok(())
}
