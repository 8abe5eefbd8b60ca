//! Gaussian orbit kernel and its per-frequency Fourier blocks.

use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{invalid, Error, Result};
use crate::group::{act, ActionSpec, Group, GroupElement, OrbitGrid};

/// Default tolerance below which a point is considered fixed by the action.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// A rotated copy appended to a cloud: `points[index] = act(angle, points[source])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectedCopy {
    pub source: usize,
    pub angle: f64,
    pub index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CloudMeta {
    pub source: String,
    pub seed: Option<u64>,
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub injected: Vec<InjectedCopy>,
}

/// N points in R^n together with the rotation plane of the action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    pub action: ActionSpec,
    pub meta: CloudMeta,
}

impl PointCloud {
    pub fn new(rows: Vec<Vec<f64>>, action: ActionSpec) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or_else(|| invalid("points", "cloud is empty"))?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("points", "rows have differing dimensions"));
        }
        Self::from_flat(dim, rows.into_iter().flatten().collect(), action)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, action: ActionSpec) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(invalid("points", "coordinate buffer does not hold whole points"));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(invalid("points", format!("non-finite coordinate in point {}", k / dim)));
        }
        action.validate(dim)?;
        Ok(PointCloud { dim, coords, action, meta: CloudMeta::default() })
    }

    pub fn with_meta(mut self, meta: CloudMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.coords.extend_from_slice(x);
    }

    /// Rejects points whose orbit on the grid collapses to a single point.
    pub fn check_free_action(&self, grid: &OrbitGrid, tol: f64) -> Result<()> {
        let trig = grid.trig_table();
        let mut y = vec![0.0; self.dim];
        for (i, x) in self.points().enumerate() {
            let mut radius = 0.0f64;
            for &(c, s) in &trig {
                self.action.rotate_into(c, s, x, &mut y);
                radius = radius.max(sq_dist(x, &y).sqrt());
            }
            if radius <= tol {
                return Err(Error::FixedPoint { index: i, radius, tol });
            }
        }
        Ok(())
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-‖x_i − act(θ_k, x_j)‖²/ε)` for every grid node `θ_k`.
pub fn orbit_kernel_samples(xi: &[f64], xj: &[f64], eps: f64, action: &ActionSpec, grid: &OrbitGrid) -> Result<Vec<f64>> {
    check_eps(eps)?;
    if xi.len() != xj.len() {
        return Err(invalid("points", "points have differing dimensions"));
    }
    (0..grid.nodes)
        .map(|k| {
            let y = act(&grid.element(k), xj, action)?;
            Ok((-sq_dist(xi, &y) / eps).exp())
        })
        .collect()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid("eps", format!("bandwidth must be positive and finite, got {eps}")));
    }
    Ok(())
}

/// Fourier blocks `Ŵ^(ℓ)` for `ℓ = 0..=l_max` and the degree vector.
///
/// Negative frequencies are the entrywise conjugates of the stored ones.
#[derive(Clone, Debug)]
pub struct FourierBlocks {
    pub eps: f64,
    pub grid: OrbitGrid,
    pub blocks: Vec<Mat<C64>>,
    pub degrees: Vec<f64>,
}

impl FourierBlocks {
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn l_max(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Entry `Ŵ^(ℓ)_{ij}` for a signed frequency.
    pub fn entry(&self, freq: i64, i: usize, j: usize) -> C64 {
        let w = self.blocks[freq.unsigned_abs() as usize][(i, j)];
        if freq < 0 {
            w.conj()
        } else {
            w
        }
    }

    /// Keeps frequencies `0..=l_max`.
    pub fn truncate(mut self, l_max: usize) -> Self {
        self.blocks.truncate(l_max + 1);
        self
    }

    /// `Σ_{signed ℓ ≡ freq} ‖Ŵ^(ℓ)‖²_F` for each stored frequency.
    pub fn energies(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let f: f64 = (0..b.ncols()).flat_map(|j| (0..b.nrows()).map(move |i| b[(i, j)].norm_sqr())).sum();
                self.grid.multiplicity(l) as f64 * f
            })
            .collect()
    }
}

/// Computes the Fourier blocks by FFT of the orbit kernel samples of every pair.
pub fn fourier_blocks(cloud: &PointCloud, eps: f64, l_max: usize, grid: OrbitGrid) -> Result<FourierBlocks> {
    check_eps(eps)?;
    if l_max > grid.max_frequency() {
        let required = match grid.group {
            Group::So2 => 2 * l_max + 2,
            Group::Cyclic { .. } => 2 * l_max,
        };
        return Err(Error::QuadratureTooCoarse { nodes: grid.nodes, l_max, required });
    }
    cloud.check_free_action(&grid, FIXED_POINT_TOL)?;

    let n = cloud.len();
    let m = grid.nodes;
    let nl = l_max + 1;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(m);
    let trig = grid.trig_table();
    let [pa, pb] = cloud.action.plane;
    let scale = 1.0 / m as f64;

    let mut blocks: Vec<Mat<C64>> = (0..nl).map(|_| Mat::zeros(n, n)).collect();
    const CHUNK: usize = 32;
    for start in (0..n).step_by(CHUNK) {
        let rows: Vec<Vec<C64>> = (start..(start + CHUNK).min(n))
            .into_par_iter()
            .map_init(
                || (vec![C64::default(); m], vec![C64::default(); fft.get_inplace_scratch_len()]),
                |(buf, scratch), i| {
                    let xi = cloud.point(i);
                    let mut out = Vec::with_capacity((n - i) * nl);
                    for j in i..n {
                        let xj = cloud.point(j);
                        let mut rest = 0.0;
                        for c in 0..xi.len() {
                            if c != pa && c != pb {
                                rest += (xi[c] - xj[c]) * (xi[c] - xj[c]);
                            }
                        }
                        for (k, &(co, si)) in trig.iter().enumerate() {
                            let u = xi[pa] - (co * xj[pa] - si * xj[pb]);
                            let v = xi[pb] - (si * xj[pa] + co * xj[pb]);
                            buf[k] = C64::new((-(rest + u * u + v * v) / eps).exp(), 0.0);
                        }
                        fft.process_with_scratch(buf, scratch);
                        out.extend(buf[..nl].iter().map(|z| z * scale));
                    }
                    out
                },
            )
            .collect();
        for (di, row) in rows.into_iter().enumerate() {
            let i = start + di;
            for (dj, coeffs) in row.chunks_exact(nl).enumerate() {
                let j = i + dj;
                for (l, &w) in coeffs.iter().enumerate() {
                    if i == j {
                        // Diagonal entries are real: the samples are even in θ.
                        blocks[l][(i, i)] = C64::new(w.re, 0.0);
                    } else {
                        blocks[l][(i, j)] = w;
                        blocks[l][(j, i)] = w.conj();
                    }
                }
            }
        }
    }

    let degrees: Vec<f64> = (0..n).map(|i| (0..n).map(|j| blocks[0][(i, j)].re).sum()).collect();
    if let Some((index, &value)) = degrees.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(Error::NonPositiveDegree { index, value });
    }
    Ok(FourierBlocks { eps, grid, blocks, degrees })
}

/// Smallest `L_eff` whose discarded tail holds less than `energy_tol` of the block energy.
pub fn effective_bandlimit(blocks: &FourierBlocks, energy_tol: f64) -> usize {
    let e = blocks.energies();
    let total: f64 = e.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut tail = total;
    for (l, el) in e.iter().enumerate() {
        tail -= el;
        if tail.max(0.0) / total < energy_tol {
            return l;
        }
    }
    blocks.l_max()
}

/// Median of squared distances `‖x_i − R(θ)x_j‖²` over random pairs `i ≠ j` and random angles.
pub fn median_bandwidth(cloud: &PointCloud, pairs: usize, seed: u64) -> Result<f64> {
    if pairs == 0 {
        return Err(invalid("pairs", "need at least one pair"));
    }
    let n = cloud.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d: Vec<f64> = (0..pairs)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n);
            while n > 1 && j == i {
                j = rng.random_range(0..n);
            }
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let y = act(&GroupElement::so2(theta), cloud.point(j), &cloud.action).expect("validated action");
            sq_dist(cloud.point(i), &y)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if !(med > 0.0) {
        return Err(invalid("eps", "median squared distance is zero; cannot pick a bandwidth"));
    }
    Ok(med)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_torus;
    use proptest::prelude::*;

    fn cloud(rows: Vec<Vec<f64>>) -> PointCloud {
        PointCloud::new(rows, ActionSpec::default()).unwrap()
    }

    /// Modified Bessel function I_0 by its power series.
    fn bessel_i0(x: f64) -> f64 {
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..60 {
            term *= (x / 2.0) * (x / 2.0) / (k as f64 * k as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn kernel_sample_examples() {
        let a = ActionSpec::default();
        let grid = OrbitGrid::so2(4).unwrap();
        let s = orbit_kernel_samples(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 2.0, &a, &grid).unwrap();
        assert!((s[2] - 0.135_335_283_236_612_7).abs() < 1e-12);
        assert_eq!(s[0], 1.0);
        let s = orbit_kernel_samples(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 1.0, &a, &grid).unwrap();
        assert!((s[1] - 0.018_315_638_888_734_18).abs() < 1e-12);
        assert!(orbit_kernel_samples(&[1.0, 0.0], &[1.0, 0.0], 0.0, &a, &grid).is_err());
        assert!(s.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn zeroth_block_matches_bessel_identity() {
        let c = cloud(vec![vec![1.0, 0.0, 0.0]]);
        let grid = OrbitGrid::so2(4096).unwrap();
        let b = fourier_blocks(&c, 2.0, 4, grid).unwrap();
        let oracle = (-1.0f64).exp() * bessel_i0(1.0);
        assert!((oracle - 0.465_759_607_593_640_6).abs() < 1e-12);
        assert!((b.blocks[0][(0, 0)].re - oracle).abs() < 1e-12);
        // Higher coefficients follow I_ℓ(1)e^{-1} and are real for a self pair.
        assert!(b.blocks[1][(0, 0)].im.abs() < 1e-15);
        assert!(b.degrees[0] == b.blocks[0][(0, 0)].re);
    }

    #[test]
    fn two_element_group() {
        let c = cloud(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = fourier_blocks(&c, 1.0, 1, OrbitGrid::cyclic(2).unwrap()).unwrap();
        let e2 = (-2.0f64).exp();
        assert!((b.blocks[0][(0, 1)].re - e2).abs() < 1e-15);
        assert!(b.blocks[1][(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn coefficients_decay_for_wide_kernels() {
        let c = cloud(vec![vec![1.0, 0.0, 0.0], vec![0.3, -0.8, 0.2]]);
        let b = fourier_blocks(&c, 200.0, 20, OrbitGrid::so2(64).unwrap()).unwrap();
        for l in 8..=20 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(b.blocks[l][(i, j)].norm() < 1e-12, "l={l}");
                }
            }
        }
    }

    #[test]
    fn cyclic_blocks_equal_direct_dft() {
        let c = sample_torus(6, 2.0, 1.0, 3).unwrap();
        let grid = OrbitGrid::cyclic(7).unwrap();
        let b = fourier_blocks(&c, 1.5, 3, grid).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let s = orbit_kernel_samples(c.point(i), c.point(j), 1.5, &c.action, &grid).unwrap();
                for l in 0..=3 {
                    let direct: C64 = s
                        .iter()
                        .enumerate()
                        .map(|(k, &w)| C64::from_polar(w / 7.0, -grid.angle(k * l)))
                        .sum();
                    assert!((b.blocks[l][(i, j)] - direct).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parseval_on_samples() {
        let c = sample_torus(5, 2.0, 1.0, 11).unwrap();
        for grid in [OrbitGrid::cyclic(8).unwrap(), OrbitGrid::cyclic(9).unwrap()] {
            let l = grid.max_frequency();
            let b = fourier_blocks(&c, 0.7, l, grid).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let s = orbit_kernel_samples(c.point(i), c.point(j), 0.7, &c.action, &grid).unwrap();
                    let lhs: f64 = (0..=l).map(|f| grid.multiplicity(f) as f64 * b.blocks[f][(i, j)].norm_sqr()).sum();
                    let rhs: f64 = s.iter().map(|w| w * w).sum::<f64>() / grid.nodes as f64;
                    assert!((lhs - rhs).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn blocks_are_hermitian_with_positive_degrees() {
        let c = sample_torus(20, 2.0, 1.0, 5).unwrap();
        let b = fourier_blocks(&c, 1.0, 7, OrbitGrid::so2(16).unwrap()).unwrap();
        for blk in &b.blocks {
            for i in 0..20 {
                for j in 0..20 {
                    assert!((blk[(i, j)] - blk[(j, i)].conj()).norm() < 1e-10);
                }
            }
        }
        assert!(b.degrees.iter().all(|&d| d > 0.0));
        assert_eq!(b.entry(-3, 2, 5), b.blocks[3][(2, 5)].conj());
    }

    #[test]
    fn rejects_coarse_grids_and_fixed_points() {
        let c = sample_torus(4, 2.0, 1.0, 1).unwrap();
        assert!(matches!(
            fourier_blocks(&c, 1.0, 8, OrbitGrid::so2(16).unwrap()),
            Err(Error::QuadratureTooCoarse { required: 18, .. })
        ));
        let fixed = cloud(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!(matches!(
            fourier_blocks(&fixed, 1.0, 2, OrbitGrid::so2(8).unwrap()),
            Err(Error::FixedPoint { index: 1, .. })
        ));
    }

    #[test]
    fn bandlimit_examples() {
        let c = cloud(vec![vec![1.0, 0.0, 0.0]]);
        let mut b = fourier_blocks(&c, 1.0, 3, OrbitGrid::so2(8).unwrap()).unwrap();
        assert_eq!(effective_bandlimit(&b, 1.0), 0);
        for l in 1..=3 {
            b.blocks[l] = Mat::zeros(1, 1);
        }
        assert_eq!(effective_bandlimit(&b, 1e-12), 0);
    }

    #[test]
    fn bandlimit_is_stable_under_grid_refinement() {
        let c = sample_torus(64, 2.0, 1.0, 8).unwrap();
        let eps = median_bandwidth(&c, 1000, 8).unwrap();
        let coarse = fourier_blocks(&c, eps, 31, OrbitGrid::so2(64).unwrap()).unwrap();
        let fine = fourier_blocks(&c, eps, 63, OrbitGrid::so2(128).unwrap()).unwrap();
        let a = effective_bandlimit(&coarse, 1e-10);
        let b = effective_bandlimit(&fine, 1e-10);
        assert_eq!(a, b);
        assert!(a < 31);
    }

    #[test]
    fn median_heuristic_is_deterministic() {
        let c = sample_torus(50, 2.0, 1.0, 2).unwrap();
        let a = median_bandwidth(&c, 1000, 4).unwrap();
        assert_eq!(a, median_bandwidth(&c, 1000, 4).unwrap());
        // The torus fits in a ball of radius 3, so squared distances stay below 36.
        assert!(a > 0.0 && a < 36.0);
    }

    proptest! {
        #[test]
        fn samples_positive_and_bounded(
            x in proptest::collection::vec(-3.0f64..3.0, 3),
            y in proptest::collection::vec(-3.0f64..3.0, 3),
            eps in 0.05f64..10.0,
        ) {
            let s = orbit_kernel_samples(&x, &y, eps, &ActionSpec::default(), &OrbitGrid::so2(12).unwrap()).unwrap();
            prop_assert!(s.iter().all(|&v| v >= 0.0 && v <= 1.0));
        }
    }
}
