//! Rotation-invariant embeddings: power-spectrum, mixed-time, bispectrum and first moment.
use equimaps::data::{inject_copy, sample_sphere};
use equimaps::embed::{first_moment_embedding, Embedder, Variant};
use equimaps::group::OrbitGrid;
use equimaps::kernel::fourier_blocks;
use equimaps::spectral::spectral_data_owned;

fn main() -> equimaps::Result<()> {
    let grid = OrbitGrid::cyclic(16)?;
    let cloud = inject_copy(&sample_sphere(120, 9)?, 3, grid.angle(5))?;
    let copy = cloud.len() - 1;
    let spec = spectral_data_owned(fourier_blocks(&cloud, 0.5, 8, grid)?)?;
    let emb = Embedder::new(&spec, 2, 1e-4)?;

    let a = emb.invariant(3, Variant::Walk)?;
    let b = emb.invariant(copy, Variant::Walk)?;
    let c = emb.invariant(50, Variant::Walk)?;
    println!("power spectrum: d(src, copy) = {:.2e}, d(src, other) = {:.3e}", a.distance(&b)?, a.distance(&c)?);

    let m = |i| emb.mixed_invariant(i, 1, 3);
    println!("mixed time 1,3: d(src, copy) = {:.2e}", m(3)?.distance(&m(copy)?)?);

    let (ba, stats) = emb.bispectrum(3, 2000)?;
    let (bb, _) = emb.bispectrum(copy, 2000)?;
    println!("bispectrum ({} coords, {} dropped): d(src, copy) = {:.2e}", ba.len(), stats.dropped, ba.distance(&bb)?);

    let fa = first_moment_embedding(&spec, 3, 2)?;
    let fb = first_moment_embedding(&spec, copy, 2)?;
    println!("first moment: d(src, copy) = {:.2e}", fa.distance(&fb)?);
    Ok(())
}
