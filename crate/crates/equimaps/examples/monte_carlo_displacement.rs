//! Simulating the lifted walk and comparing the displacement histogram with the exact law.
use equimaps::data::sample_torus;
use equimaps::group::OrbitGrid;
use equimaps::oracle::{build_dense, exact_displacement, mc_displacement};

fn main() -> equimaps::Result<()> {
    let cloud = sample_torus(3, 2.0, 1.0, 0)?;
    let dense = build_dense(&cloud, 1.0, OrbitGrid::cyclic(4)?)?;
    let exact = exact_displacement(&dense, 0, 2)?;
    for samples in [10_000, 100_000, 1_000_000] {
        let h = mc_displacement(&dense, 0, 2, samples, 2024)?;
        println!("{samples:>8} samples: total variation {:.4e}", h.tv_distance(&exact));
    }
    Ok(())
}
