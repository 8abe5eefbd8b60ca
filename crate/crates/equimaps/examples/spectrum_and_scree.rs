//! Per-frequency spectra, the merged scree plot and its elbow threshold.
use equimaps::data::sample_torus;
use equimaps::group::OrbitGrid;
use equimaps::kernel::fourier_blocks;
use equimaps::spectral::{elbow_threshold, scree, spectral_data_owned};

fn main() -> equimaps::Result<()> {
    let cloud = sample_torus(200, 2.0, 1.0, 3)?;
    let blocks = fourier_blocks(&cloud, 1.0, 12, OrbitGrid::so2(64)?)?;
    let spec = spectral_data_owned(blocks)?;
    let t = 3;
    let s = scree(&spec, t);
    for e in s.entries.iter().take(12) {
        println!("l={:<3} n={:<3} lambda={:.6} lambda^t={:.6}", e.freq, e.n, e.lambda, e.lambda_pow_t);
    }
    let delta = elbow_threshold(&s);
    let kept = s.entries.iter().filter(|e| e.lambda_pow_t > delta).count();
    println!("elbow delta = {delta:.4e}, modes kept = {kept}");
    Ok(())
}
