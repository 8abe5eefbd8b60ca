//! The equivariant embedding of a point and a rotated copy of it.
use equimaps::data::{inject_copy, sample_torus};
use equimaps::embed::{Embedder, Variant};
use equimaps::group::OrbitGrid;
use equimaps::kernel::fourier_blocks;
use equimaps::spectral::spectral_data_owned;

fn main() -> equimaps::Result<()> {
    let grid = OrbitGrid::so2(64)?;
    let beta = grid.angle(11);
    let cloud = inject_copy(&sample_torus(150, 2.0, 1.0, 5)?, 7, beta)?;
    let copy = cloud.len() - 1;
    let spec = spectral_data_owned(fourier_blocks(&cloud, 1.0, 20, grid.clone())?)?;
    let emb = Embedder::new(&spec, 1, 1e-3)?;
    println!("embedding dimension: {}", emb.retained().dimension());

    // Phi(copy, g) should equal Phi(source, beta * g).
    for k in [0, 5, 40] {
        let a = emb.equivariant(copy, &grid.element(k), Variant::Walk)?;
        let b = emb.equivariant(7, &grid.element((k + 11) % 64), Variant::Walk)?;
        println!("k={k:<2} |Phi(copy, g) - Phi(src, beta g)| = {:.2e}", a.distance(&b)?);
    }
    Ok(())
}
