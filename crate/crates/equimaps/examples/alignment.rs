//! Recovering an off-grid rotation between a point and its copy by aligning embeddings.
use equimaps::data::{inject_copy, sample_torus};
use equimaps::dist::{aligned_distance_with, pairwise_matrix_with, DistanceKind, ALIGN_GRID};
use equimaps::embed::{Embedder, Variant};
use equimaps::group::{angle_difference, OrbitGrid};
use equimaps::kernel::fourier_blocks;
use equimaps::spectral::spectral_data_owned;

fn main() -> equimaps::Result<()> {
    let beta = 1.0;
    let cloud = inject_copy(&sample_torus(120, 2.0, 1.0, 8)?, 10, beta)?;
    let copy = cloud.len() - 1;
    let spec = spectral_data_owned(fourier_blocks(&cloud, 1.0, 20, OrbitGrid::so2(64)?)?)?;
    let emb = Embedder::new(&spec, 1, 1e-3)?;

    let r = aligned_distance_with(&emb, 10, copy, Variant::Walk, ALIGN_GRID)?;
    let found = r.alignment.unwrap().angle();
    println!("aligned distance {:.2e}, angle {found:.6} (true {beta}), error {:.2e}", r.value, angle_difference(found, beta).abs());

    let m = pairwise_matrix_with(&emb, DistanceKind::Aligned, Variant::Walk, 256)?;
    let mut row: Vec<(usize, f64)> = m.row(10).iter().copied().enumerate().filter(|&(j, _)| j != 10).collect();
    row.sort_by(|a, b| a.1.total_cmp(&b.1));
    println!("nearest to point 10 under alignment: {:?}", &row[..3]);
    Ok(())
}
