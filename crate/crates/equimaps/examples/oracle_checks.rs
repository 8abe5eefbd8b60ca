//! Brute-force checks of the spectral path against the dense walk on the lifted graph.
use equimaps::data::sample_torus;
use equimaps::dist::hs_inner;
use equimaps::embed::{invariant_embed, Embedder, Variant};
use equimaps::group::OrbitGrid;
use equimaps::kernel::fourier_blocks;
use equimaps::oracle::{build_dense, dense_cross_correlation, dense_diffusion_distance, dense_hs_norm_sq, row_sum_error};
use equimaps::spectral::spectral_data;

fn main() -> equimaps::Result<()> {
    let cloud = sample_torus(12, 2.0, 1.0, 4)?;
    let grid = OrbitGrid::cyclic(8)?;
    let dense = build_dense(&cloud, 1.0, grid.clone())?;
    println!("dense walk {}x{}, row-sum error of P^3 {:.2e}", dense.size(), dense.size(), row_sum_error(&dense.power(3)));

    let spec = spectral_data(&fourier_blocks(&cloud, 1.0, grid.max_frequency(), grid.clone())?)?;
    let t = 2;
    let emb = Embedder::new(&spec, t, 0.0)?;

    let (i, a, j, b) = (1, 3, 5, 6);
    let d_dense = dense_diffusion_distance(&dense, (i, a), (j, b), t, Variant::Walk)?;
    let pa = emb.equivariant(i, &grid.element(a), Variant::Walk)?;
    let pb = emb.equivariant(j, &grid.element(b), Variant::Walk)?;
    println!("diffusion distance: dense {d_dense:.12}, spectral {:.12}", pa.distance(&pb)?);

    let cc = dense_cross_correlation(&dense, i, j, t, true)?;
    let d_inv = invariant_embed(&spec, i, t, 0.0, Variant::Walk)?.distance(&invariant_embed(&spec, j, t, 0.0, Variant::Walk)?)?;
    println!("cross-correlation distance: dense {:.12}, invariant embedding {d_inv:.12}", cc.distance());

    // The invariant inner product pairs with the operator at doubled time.
    let hs = hs_inner(&spec, i, j, t)?;
    println!("HS pairing: spectral {hs:.12}, dense at 2t {:.12}, dense at t {:.12}", dense_hs_norm_sq(&dense, i, j, 2 * t)?, dense_hs_norm_sq(&dense, i, j, t)?);
    Ok(())
}
