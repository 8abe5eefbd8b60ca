//! Brute-force references on the discretized space `[N] x grid`.
//!
//! Everything here works with the full `N·M x N·M` kernel and never touches
//! the Fourier blocks, so agreement with the spectral path is a genuine
//! two-route check. Eigenvalues come from nalgebra's symmetric solver rather
//! than the Hermitian solver used by [`crate::spectral`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::Variant;
use crate::error::{invalid, Error, Result};
use crate::group::OrbitGrid;
use crate::kernel::PointCloud;

/// Largest `N·M` the dense oracle accepts.
pub const DENSE_GUARD: usize = 20_000;

/// Walkers are simulated in this many independent streams.
const MC_STREAMS: u64 = 64;

/// Dense kernel, degrees and transition matrix on the grid nodes `(i, θ_a)`,
/// indexed as `i * M + a`.
#[derive(Clone, Debug)]
pub struct DenseWalk {
    pub n: usize,
    pub m: usize,
    pub grid: OrbitGrid,
    pub eps: f64,
    pub w: DMatrix<f64>,
    /// Node degrees `(1/M) Σ W[node, ·]`.
    pub degrees: Vec<f64>,
    pub p: DMatrix<f64>,
}

pub fn build_dense(cloud: &PointCloud, eps: f64, grid: OrbitGrid) -> Result<DenseWalk> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid("eps", format!("bandwidth must be positive and finite, got {eps}")));
    }
    let (n, m) = (cloud.len(), grid.nodes);
    let size = n * m;
    if size > DENSE_GUARD {
        return Err(Error::SizeGuard { size, limit: DENSE_GUARD });
    }
    let dim = cloud.dim();
    let mut rotated = vec![0.0; size * dim];
    for (i, x) in cloud.points().enumerate() {
        for a in 0..m {
            let (s, c) = grid.angle(a).sin_cos();
            let node = i * m + a;
            cloud.action.rotate_into(c, s, x, &mut rotated[node * dim..(node + 1) * dim]);
        }
    }
    let pt = |k: usize| &rotated[k * dim..(k + 1) * dim];
    let w = DMatrix::from_fn(size, size, |r, c| {
        let d: f64 = pt(r).iter().zip(pt(c)).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d / eps).exp()
    });
    let degrees: Vec<f64> = (0..size).map(|r| w.row(r).sum() / m as f64).collect();
    let p = transition(&w, &degrees, m);
    Ok(DenseWalk { n, m, grid, eps, w, degrees, p })
}

fn transition(w: &DMatrix<f64>, degrees: &[f64], m: usize) -> DMatrix<f64> {
    let size = w.nrows();
    DMatrix::from_fn(size, size, |r, c| w[(r, c)] / (m as f64 * degrees[r]))
}

impl DenseWalk {
    pub fn size(&self) -> usize {
        self.n * self.m
    }

    pub fn node(&self, i: usize, a: usize) -> usize {
        i * self.m + a
    }

    /// Rebuilds `P` from `W` with externally supplied node degrees.
    pub fn with_degrees(mut self, degrees: Vec<f64>) -> Self {
        self.p = transition(&self.w, &degrees, self.m);
        self.degrees = degrees;
        self
    }

    /// Largest deviation of a row sum of `P` from 1.
    pub fn stochasticity_error(&self) -> f64 {
        row_sum_error(&self.p)
    }

    /// Row `node` of `P^t`, by repeated vector-matrix products.
    pub fn row_power(&self, node: usize, t: u32) -> Vec<f64> {
        let mut v = vec![0.0; self.size()];
        v[node] = 1.0;
        for _ in 0..t {
            let mut next = vec![0.0; self.size()];
            for (r, &vr) in v.iter().enumerate() {
                if vr != 0.0 {
                    for (c, x) in next.iter_mut().enumerate() {
                        *x += vr * self.p[(r, c)];
                    }
                }
            }
            v = next;
        }
        v
    }

    /// Row `node` of `S^t = D^{1/2} P^t D^{-1/2}`.
    pub fn sym_row_power(&self, node: usize, t: u32) -> Vec<f64> {
        let r = self.row_power(node, t);
        let sd = self.degrees[node].sqrt();
        r.iter().zip(&self.degrees).map(|(x, d)| x * sd / d.sqrt()).collect()
    }

    /// Full matrix power `P^t`.
    pub fn power(&self, t: u32) -> DMatrix<f64> {
        let mut out = DMatrix::identity(self.size(), self.size());
        for _ in 0..t {
            out = &out * &self.p;
        }
        out
    }

    /// `D^{-1/2} W D^{-1/2} / M`, similar to `P`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let s: Vec<f64> = self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let m = self.m as f64;
        DMatrix::from_fn(self.size(), self.size(), |r, c| self.w[(r, c)] * s[r] * s[c] / m)
    }

    /// Eigenvalues of the symmetrized walk, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.symmetrized()).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    /// Applies `P` to a complex function on the grid nodes.
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        (0..self.size())
            .map(|r| (0..self.size()).map(|c| f[c] * self.p[(r, c)]).sum())
            .collect()
    }

    /// t-step density of the walk from `(i, θ_a)` with respect to `1/M` counting measure.
    fn density(&self, node: usize, t: u32, variant: Variant) -> Vec<f64> {
        let row = match variant {
            Variant::Walk => self.row_power(node, t),
            Variant::Sym => self.sym_row_power(node, t),
        };
        row.into_iter().map(|x| x * self.m as f64).collect()
    }
}

pub fn row_sum_error(p: &DMatrix<f64>) -> f64 {
    (0..p.nrows()).map(|r| (p.row(r).sum() - 1.0).abs()).fold(0.0, f64::max)
}

fn check_node(dense: &DenseWalk, i: usize, a: usize) -> Result<()> {
    if i >= dense.n {
        return Err(Error::IndexOutOfRange { what: "points", index: i, len: dense.n });
    }
    if a >= dense.m {
        return Err(Error::IndexOutOfRange { what: "grid nodes", index: a, len: dense.m });
    }
    Ok(())
}

/// Weighted L² distance between t-step rows started at `(i, θ_a)` and `(j, θ_b)`.
///
/// The walk variant weights node `(k, c)` by `1/(M D_k)` and compares rows of
/// `P^t`; the sym variant compares rows of `S^t` with weight `1/M`.
pub fn dense_diffusion_distance(dense: &DenseWalk, (i, a): (usize, usize), (j, b): (usize, usize), t: u32, variant: Variant) -> Result<f64> {
    check_node(dense, i, a)?;
    check_node(dense, j, b)?;
    let p = dense.density(dense.node(i, a), t, variant);
    let q = dense.density(dense.node(j, b), t, variant);
    let m = dense.m as f64;
    let s: f64 = p
        .iter()
        .zip(&q)
        .zip(&dense.degrees)
        .map(|((x, y), d)| {
            let w = match variant {
                Variant::Walk => 1.0 / d,
                Variant::Sym => 1.0,
            };
            (x - y) * (x - y) * w / m
        })
        .sum();
    Ok(s.sqrt())
}

/// Cross-correlation `T(k, r, R) = (1/M) Σ_c p_k(θ_c) q_r(θ_c + θ_R)` of the
/// densities of two walks leaving `(i, I)` at times `t1` and `t2`, stored at
/// `(k * N + r) * M + R`.
pub fn cross_correlation_tensor(dense: &DenseWalk, i: usize, (t1, t2): (u32, u32), variant: Variant) -> Result<Vec<f64>> {
    check_node(dense, i, 0)?;
    let (n, m) = (dense.n, dense.m);
    let p = dense.density(dense.node(i, 0), t1, variant);
    let q = if t1 == t2 { p.clone() } else { dense.density(dense.node(i, 0), t2, variant) };
    let mut out = vec![0.0; n * n * m];
    for k in 0..n {
        for r in 0..n {
            for rr in 0..m {
                let mut s = 0.0;
                for c in 0..m {
                    s += p[k * m + c] * q[r * m + (c + rr) % m];
                }
                out[(k * n + r) * m + rr] = s / m as f64;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    /// Squared norm of the tensor difference.
    pub distance_sq: f64,
    /// Total mass `Σ_{k,r} (1/M) Σ_R T_i(k, r, R)`.
    pub mass_i: f64,
    pub mass_j: f64,
}

impl CrossCorrelation {
    pub fn distance(&self) -> f64 {
        self.distance_sq.sqrt()
    }
}

fn compare_tensors(dense: &DenseWalk, ti: &[f64], tj: &[f64], weighted: bool) -> CrossCorrelation {
    let (n, m) = (dense.n, dense.m);
    let deg = |k: usize| dense.degrees[dense.node(k, 0)];
    let (mut d2, mut mi, mut mj) = (0.0, 0.0, 0.0);
    for k in 0..n {
        for r in 0..n {
            let w = if weighted { 1.0 / (deg(k) * deg(r)) } else { 1.0 };
            for rr in 0..m {
                let idx = (k * n + r) * m + rr;
                d2 += w * (ti[idx] - tj[idx]).powi(2) / m as f64;
                mi += ti[idx] / m as f64;
                mj += tj[idx] / m as f64;
            }
        }
    }
    CrossCorrelation { distance_sq: d2, mass_i: mi, mass_j: mj }
}

/// Cross-correlation distance between orbits `i` and `j`.
///
/// `weighted = true` uses walk densities with weight `1/(D_k D_r)`;
/// `weighted = false` uses densities of the symmetric operator, unweighted.
pub fn dense_cross_correlation(dense: &DenseWalk, i: usize, j: usize, t: u32, weighted: bool) -> Result<CrossCorrelation> {
    let variant = if weighted { Variant::Walk } else { Variant::Sym };
    let ti = cross_correlation_tensor(dense, i, (t, t), variant)?;
    let tj = cross_correlation_tensor(dense, j, (t, t), variant)?;
    Ok(compare_tensors(dense, &ti, &tj, weighted))
}

/// Weighted walk cross-correlation distance with the two walkers run for `t1` and `t2` steps.
pub fn dense_cross_correlation_mixed(dense: &DenseWalk, i: usize, j: usize, t1: u32, t2: u32) -> Result<CrossCorrelation> {
    let ti = cross_correlation_tensor(dense, i, (t1, t2), Variant::Walk)?;
    let tj = cross_correlation_tensor(dense, j, (t1, t2), Variant::Walk)?;
    Ok(compare_tensors(dense, &ti, &tj, true))
}

/// Squared quadrature Hilbert-Schmidt norm `(1/M²) Σ_{a,b} |s^τ_{ij}(θ_a, θ_b)|²`
/// of the kernel slice of `S^τ` between orbits `i` and `j`.
pub fn dense_hs_norm_sq(dense: &DenseWalk, i: usize, j: usize, tau: u32) -> Result<f64> {
    check_node(dense, i, 0)?;
    check_node(dense, j, 0)?;
    let m = dense.m;
    let mut s = 0.0;
    for a in 0..m {
        let row = dense.sym_row_power(dense.node(i, a), tau);
        for b in 0..m {
            s += row[dense.node(j, b)].powi(2);
        }
    }
    Ok(s)
}

/// `m(k) = Σ_c P^t[(i, I), (k, θ_c)]`.
pub fn dense_first_moment(dense: &DenseWalk, i: usize, t: u32) -> Result<Vec<f64>> {
    check_node(dense, i, 0)?;
    let row = dense.row_power(dense.node(i, 0), t);
    Ok(row.chunks_exact(dense.m).map(|c| c.iter().sum()).collect())
}

/// Joint law of `(k, r, R)` for two independent walkers leaving `(i, I)`:
/// `Σ_c P^t[(i,I),(k,θ_c)] P^t[(i,I),(r,θ_{c+R})]`, indexed like the tensor.
pub fn exact_displacement(dense: &DenseWalk, i: usize, t: u32) -> Result<Vec<f64>> {
    let tensor = cross_correlation_tensor(dense, i, (t, t), Variant::Walk)?;
    Ok(tensor.into_iter().map(|x| x / dense.m as f64).collect())
}

/// Empirical `(k, r, R)` histogram of paired walks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementHistogram {
    pub n: usize,
    pub m: usize,
    pub t: u32,
    pub seed: u64,
    pub samples: u64,
    pub counts: Vec<u64>,
}

impl DisplacementHistogram {
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.samples as f64).collect()
    }

    /// `(1/2) Σ |p̂ − p|`.
    pub fn tv_distance(&self, exact: &[f64]) -> f64 {
        0.5 * self.probabilities().iter().zip(exact).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Counts of walker one's orbit index.
    pub fn first_marginal(&self) -> Vec<u64> {
        let block = self.n * self.m;
        self.counts.chunks_exact(block).map(|c| c.iter().sum()).collect()
    }
}

/// Simulates `samples` pairs of independent `t`-step walks from `(i, I)`.
///
/// Samples are split over fixed streams of a ChaCha generator seeded by
/// `seed`, so the histogram does not depend on the thread count.
pub fn mc_displacement(dense: &DenseWalk, i: usize, t: u32, samples: u64, seed: u64) -> Result<DisplacementHistogram> {
    check_node(dense, i, 0)?;
    if samples < 10_000 {
        return Err(invalid("samples", format!("need at least 10^4 samples, got {samples}")));
    }
    let size = dense.size();
    let (n, m) = (dense.n, dense.m);
    let cdf: Vec<Vec<f64>> = (0..size)
        .map(|r| {
            let mut acc = 0.0;
            let mut row: Vec<f64> = (0..size).map(|c| {
                acc += dense.p[(r, c)];
                acc
            })
            .collect();
            // Guard the last bin against round-off in the total.
            *row.last_mut().expect("non-empty") = f64::INFINITY;
            row
        })
        .collect();
    let start = dense.node(i, 0);
    let walk = |rng: &mut ChaCha8Rng| {
        let mut x = start;
        for _ in 0..t {
            let u: f64 = rng.random();
            x = cdf[x].partition_point(|&c| c <= u).min(size - 1);
        }
        x
    };
    let per = samples / MC_STREAMS;
    let extra = samples % MC_STREAMS;
    let parts: Vec<Vec<u64>> = (0..MC_STREAMS)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let mut counts = vec![0u64; n * n * m];
            let count = per + u64::from(s < extra);
            for _ in 0..count {
                let (x, y) = (walk(&mut rng), walk(&mut rng));
                let (k, a) = (x / m, x % m);
                let (r, b) = (y / m, y % m);
                counts[(k * n + r) * m + (b + m - a) % m] += 1;
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; n * n * m];
    for p in parts {
        for (c, x) in counts.iter_mut().zip(p) {
            *c += x;
        }
    }
    Ok(DisplacementHistogram { n, m, t, seed, samples, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{inject_copy, sample_torus};
    use crate::dist::{equivariant_distance_with, hs_inner};
    use crate::embed::{first_moment, Embedder, Retained};
    use crate::group::ActionSpec;
    use crate::kernel::fourier_blocks;
    use crate::spectral::{eigenfunction_eval, spectral_data, SpectralData};

    fn small(m: usize, n: usize, seed: u64) -> (PointCloud, OrbitGrid) {
        (sample_torus(n, 2.0, 1.0, seed).unwrap(), OrbitGrid::cyclic(m).unwrap())
    }

    fn full_spectrum(c: &PointCloud, grid: OrbitGrid, eps: f64) -> SpectralData {
        spectral_data(&fourier_blocks(c, eps, grid.max_frequency(), grid).unwrap()).unwrap()
    }

    #[test]
    fn two_node_closed_form() {
        let c = PointCloud::new(vec![vec![0.6, 0.8]], ActionSpec::default()).unwrap();
        let d = build_dense(&c, 1.5, OrbitGrid::cyclic(2).unwrap()).unwrap();
        let w = (-4.0f64 / 1.5).exp();
        assert!((d.w[(0, 1)] - w).abs() < 1e-15 && d.w[(0, 0)] == 1.0);
        assert!(d.stochasticity_error() < 1e-15);
        // P = [[1, w], [w, 1]] / (1 + w); rows differ by (1 - w)/(1 + w) per entry.
        let diff = (1.0 - w) / (1.0 + w);
        let deg = (1.0 + w) / 2.0;
        let expect = (2.0 * (2.0 * diff).powi(2) / (2.0 * deg)).sqrt();
        let got = dense_diffusion_distance(&d, (0, 0), (0, 1), 1, Variant::Walk).unwrap();
        assert!((got - expect).abs() < 1e-14);
        assert_eq!(dense_diffusion_distance(&d, (0, 1), (0, 1), 3, Variant::Walk).unwrap(), 0.0);
    }

    #[test]
    fn size_guard() {
        let c = sample_torus(200, 2.0, 1.0, 0).unwrap();
        assert!(matches!(build_dense(&c, 1.0, OrbitGrid::so2(128).unwrap()), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn powers_stay_stochastic_and_positive() {
        let (c, g) = small(8, 12, 3);
        let d = build_dense(&c, 1.0, g).unwrap();
        assert!(d.p.iter().all(|&x| x > 0.0));
        for t in 1..=3 {
            assert!(row_sum_error(&d.power(t)) < 1e-12);
        }
        let corrupt = {
            let mut deg = d.degrees.clone();
            deg[5] *= 1.5;
            d.clone().with_degrees(deg)
        };
        assert!(corrupt.stochasticity_error() > 0.1);
    }

    #[test]
    fn spectral_union() {
        let (c, g) = small(4, 3, 9);
        let d = build_dense(&c, 0.8, g).unwrap();
        let s = full_spectrum(&c, g, 0.8);
        let a = d.eigenvalues();
        let b = s.all_eigenvalues();
        assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
    }

    #[test]
    fn eigenfunctions_are_walk_eigenfunctions() {
        let (c, g) = small(6, 5, 4);
        let d = build_dense(&c, 1.1, g).unwrap();
        let s = full_spectrum(&c, g, 1.1);
        for (l, n) in [(0i64, 0usize), (1, 2), (-2, 1), (3, 4)] {
            let f: Vec<C64> = (0..5)
                .flat_map(|i| (0..6).map(move |a| (i, a)))
                .map(|(i, a)| eigenfunction_eval(&s, l, n, i, &g.element(a)).unwrap())
                .collect();
            let pf = d.apply(&f);
            let lam = s.eigenvalue(l.unsigned_abs() as usize, n);
            for (x, y) in pf.iter().zip(&f) {
                assert!((x - y * lam).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn distances_agree_with_spectral_path() {
        let (c, g) = small(4, 3, 12);
        let d = build_dense(&c, 0.9, g).unwrap();
        let s = full_spectrum(&c, g, 0.9);
        for t in [1u32, 2, 3] {
            let emb = Embedder::with_retained(&s, Retained::full(&s, t).unwrap());
            for v in [Variant::Walk, Variant::Sym] {
                for &((i, a), (j, b)) in &[((0, 0), (1, 0)), ((2, 1), (0, 3)), ((1, 2), (1, 0))] {
                    let dense = dense_diffusion_distance(&d, (i, a), (j, b), t, v).unwrap();
                    let spec = equivariant_distance_with(&emb, (i, &g.element(a)), (j, &g.element(b)), v).unwrap().value;
                    assert!((dense - spec).abs() < 1e-8, "t={t} {v:?} {dense} {spec}");
                }
            }
            for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                let w = dense_cross_correlation(&d, i, j, t, true).unwrap();
                let e = emb.invariant(i, Variant::Walk).unwrap().distance(&emb.invariant(j, Variant::Walk).unwrap()).unwrap();
                assert!((w.distance() - e).abs() < 1e-8);
                assert!((w.mass_i - 1.0).abs() < 1e-10 && (w.mass_j - 1.0).abs() < 1e-10);
                let u = dense_cross_correlation(&d, i, j, t, false).unwrap();
                let e = emb.invariant(i, Variant::Sym).unwrap().distance(&emb.invariant(j, Variant::Sym).unwrap()).unwrap();
                assert!((u.distance() - e).abs() < 1e-8);
                let m = dense_cross_correlation_mixed(&d, i, j, t, t + 1).unwrap();
                let x = emb.mixed_invariant(i, t, t + 1).unwrap().distance(&emb.mixed_invariant(j, t, t + 1).unwrap()).unwrap();
                assert!((m.distance() - x).abs() < 1e-8);
            }
            let fm = first_moment(&s, 1, t).unwrap();
            for (a, b) in fm.iter().zip(dense_first_moment(&d, 1, t).unwrap()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hs_inner_pairs_with_doubled_time() {
        let (c, g) = small(4, 3, 5);
        let d = build_dense(&c, 0.9, g).unwrap();
        let s = full_spectrum(&c, g, 0.9);
        for t in [1u32, 2] {
            for (i, j) in [(0, 0), (0, 2)] {
                let a = hs_inner(&s, i, j, t).unwrap();
                assert!((a - dense_hs_norm_sq(&d, i, j, 2 * t).unwrap()).abs() < 1e-8);
                // The time-t slice does not match the time-t embeddings.
                assert!((a - dense_hs_norm_sq(&d, i, j, t).unwrap()).abs() > 1e-4);
            }
        }
    }

    #[test]
    fn copies_have_identical_tensors() {
        let (c, g) = small(8, 4, 6);
        let c = inject_copy(&c, 2, g.angle(3)).unwrap();
        let d = build_dense(&c, 1.0, g).unwrap();
        let x = dense_cross_correlation(&d, 2, 4, 2, true).unwrap();
        assert!(x.distance() < 1e-10);
        let same = dense_cross_correlation(&d, 1, 1, 2, true).unwrap();
        assert_eq!(same.distance_sq, 0.0);
        assert!((same.mass_i - 1.0).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_marginals() {
        let (c, g) = small(4, 3, 8);
        let d = build_dense(&c, 1.0, g).unwrap();
        let h = mc_displacement(&d, 0, 2, 40_000, 1).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 40_000);
        let exact = dense_first_moment(&d, 0, 2).unwrap();
        for (k, &cnt) in h.first_marginal().iter().enumerate() {
            let p = exact[k];
            let sigma = (p * (1.0 - p) / 40_000.0).sqrt();
            assert!((cnt as f64 / 40_000.0 - p).abs() <= 3.0 * sigma, "{k}");
        }
        assert_eq!(h, mc_displacement(&d, 0, 2, 40_000, 1).unwrap());
        let z = mc_displacement(&d, 1, 0, 10_000, 2).unwrap();
        assert_eq!(z.counts[(1 * 3 + 1) * 4], 10_000);
        assert!(mc_displacement(&d, 0, 1, 100, 0).is_err());
    }
}
