//! Equivariant and invariant distance heat maps from one source on the torus.
use equimaps::data::{inject_copy, sample_torus};
use equimaps::dist::{pairwise_matrix_with, DistanceKind};
use equimaps::embed::{Embedder, Variant};
use equimaps::group::OrbitGrid;
use equimaps::kernel::fourier_blocks;
use equimaps::spectral::spectral_data_owned;

fn main() -> equimaps::Result<()> {
    let grid = OrbitGrid::so2(64)?;
    let cloud = inject_copy(&sample_torus(300, 2.0, 1.0, 12)?, 0, grid.angle(32))?;
    let copy = cloud.len() - 1;
    let spec = spectral_data_owned(fourier_blocks(&cloud, 1.0, 18, grid)?)?;
    let emb = Embedder::new(&spec, 3, 1e-4)?;
    let eq = pairwise_matrix_with(&emb, DistanceKind::EquivariantWalk, Variant::Walk, 0)?;
    let inv = pairwise_matrix_with(&emb, DistanceKind::InvariantWalk, Variant::Walk, 0)?;
    println!("source 0 vs its half-turn copy: equivariant {:.4e}, invariant {:.2e}", eq.get(0, copy), inv.get(0, copy));
    let far = (0..copy).max_by(|&a, &b| inv.get(0, a).total_cmp(&inv.get(0, b))).unwrap();
    println!("farthest point {far}: equivariant {:.4e}, invariant {:.4e}", eq.get(0, far), inv.get(0, far));
    println!("first point coordinates {:?}", cloud.point(0));
    Ok(())
}
