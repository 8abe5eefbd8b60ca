//! Fourier blocks of the orbit kernel and the bandlimit they imply.
use equimaps::data::sample_torus;
use equimaps::group::OrbitGrid;
use equimaps::kernel::{effective_bandlimit, fourier_blocks, median_bandwidth};

fn main() -> equimaps::Result<()> {
    let cloud = sample_torus(100, 2.0, 1.0, 1)?;
    let eps = median_bandwidth(&cloud, 1000, 0)?;
    println!("median bandwidth: {eps:.3}");
    for eps in [eps, 1.0, 0.25] {
        let blocks = fourier_blocks(&cloud, eps, 31, OrbitGrid::so2(64)?)?;
        let e = blocks.energies();
        println!(
            "eps {eps:.2}: energy l=0 {:.3e}, l=8 {:.3e}, bandlimit at 1e-10 = {}",
            e[0],
            e[8],
            effective_bandlimit(&blocks, 1e-10)
        );
    }
    Ok(())
}
