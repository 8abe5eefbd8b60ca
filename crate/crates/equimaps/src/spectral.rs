//! Normalized per-frequency operators and their eigendecompositions.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupElement, IrrepIndex, OrbitGrid};
use crate::kernel::FourierBlocks;

/// Width of the window around 0 and 1 inside which eigenvalues are clipped.
pub const CLIP_WINDOW: f64 = 1e-8;

/// `S^(ℓ) = D^{-1/2} Ŵ^(ℓ) D^{-1/2}` for every stored frequency.
#[derive(Clone, Debug)]
pub struct NormalizedBlocks {
    pub eps: f64,
    pub grid: OrbitGrid,
    pub degrees: Vec<f64>,
    pub blocks: Vec<Mat<C64>>,
}

/// Entrywise `Ŵ_ij / sqrt(D_i D_j)`, made exactly Hermitian.
pub fn normalize_block(w: &Mat<C64>, degrees: &[f64]) -> Result<Mat<C64>> {
    let mut s = w.clone();
    normalize_in_place(&mut s, degrees)?;
    Ok(s)
}

fn normalize_in_place(s: &mut Mat<C64>, degrees: &[f64]) -> Result<()> {
    check_degrees(degrees)?;
    let n = degrees.len();
    let r: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    for j in 0..n {
        for i in 0..=j {
            let a = s[(i, j)] * (r[i] * r[j]);
            let b = s[(j, i)].conj() * (r[i] * r[j]);
            let v = (a + b) * 0.5;
            if i == j {
                s[(i, i)] = C64::new(v.re, 0.0);
            } else {
                s[(i, j)] = v;
                s[(j, i)] = v.conj();
            }
        }
    }
    Ok(())
}

fn check_degrees(degrees: &[f64]) -> Result<()> {
    match degrees.iter().enumerate().find(|(_, &d)| !(d > 0.0 && d.is_finite())) {
        Some((index, &value)) => Err(Error::NonPositiveDegree { index, value }),
        None => Ok(()),
    }
}

pub fn symmetric_normalize(blocks: &FourierBlocks) -> Result<NormalizedBlocks> {
    check_degrees(&blocks.degrees)?;
    let normalized = blocks
        .blocks
        .par_iter()
        .map(|w| normalize_block(w, &blocks.degrees))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedBlocks { eps: blocks.eps, grid: blocks.grid, degrees: blocks.degrees.clone(), blocks: normalized })
}

/// Like [`symmetric_normalize`], reusing the storage of `blocks`.
pub fn into_normalized(blocks: FourierBlocks) -> Result<NormalizedBlocks> {
    let FourierBlocks { eps, grid, mut blocks, degrees } = blocks;
    blocks.par_iter_mut().try_for_each(|w| normalize_in_place(w, &degrees))?;
    Ok(NormalizedBlocks { eps, grid, degrees, blocks })
}

/// Eigenpairs of one frequency block, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct FrequencySpectrum {
    pub freq: usize,
    /// Number of signed frequencies this block stands for (1 or 2).
    pub multiplicity: usize,
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors `v_{n,ℓ}` as columns.
    pub vectors: Mat<C64>,
}

/// Eigenvalues and paired eigenvector families for every stored frequency.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eps: f64,
    pub grid: OrbitGrid,
    pub degrees: Vec<f64>,
    pub spectra: Vec<FrequencySpectrum>,
    inv_sqrt_degrees: Vec<f64>,
}

impl SpectralData {
    pub fn from_parts(eps: f64, grid: OrbitGrid, degrees: Vec<f64>, spectra: Vec<FrequencySpectrum>) -> Result<Self> {
        check_degrees(&degrees)?;
        let n = degrees.len();
        for s in &spectra {
            if s.vectors.nrows() != n || s.vectors.ncols() != s.eigenvalues.len() {
                return Err(crate::error::invalid("spectra", format!("frequency {} has mismatched shapes", s.freq)));
            }
        }
        let inv_sqrt_degrees = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        Ok(SpectralData { eps, grid, degrees, spectra, inv_sqrt_degrees })
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn l_max(&self) -> usize {
        self.spectra.len() - 1
    }

    /// True when every signed frequency of the grid is represented.
    pub fn is_complete(&self) -> bool {
        self.grid.is_complete(self.l_max())
    }

    pub fn eigenvalue(&self, freq: usize, n: usize) -> f64 {
        self.spectra[freq].eigenvalues[n]
    }

    /// Symmetric eigenvector entry `v_{n,ℓ}(i)`.
    #[inline]
    pub fn sym(&self, freq: usize, n: usize, i: usize) -> C64 {
        self.spectra[freq].vectors[(i, n)]
    }

    /// Random-walk eigenvector entry `ṽ_{n,ℓ}(i) = v_{n,ℓ}(i)/sqrt(D_i)`.
    #[inline]
    pub fn walk(&self, freq: usize, n: usize, i: usize) -> C64 {
        self.spectra[freq].vectors[(i, n)] * self.inv_sqrt_degrees[i]
    }

    /// Multiset of all eigenvalues over signed frequencies.
    pub fn all_eigenvalues(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.spectra {
            for _ in 0..s.multiplicity {
                out.extend_from_slice(&s.eigenvalues);
            }
        }
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }
}

fn hermitian_deviation(s: &Mat<C64>) -> (f64, f64) {
    let n = s.nrows();
    let (mut dev, mut scale) = (0.0f64, 0.0f64);
    for j in 0..n {
        for i in 0..n {
            dev = dev.max((s[(i, j)] - s[(j, i)].conj()).norm());
            scale = scale.max(s[(i, j)].norm());
        }
    }
    (dev, scale)
}

fn decompose_one(freq: usize, multiplicity: usize, s: &Mat<C64>) -> Result<FrequencySpectrum> {
    let (dev, scale) = hermitian_deviation(s);
    if dev > 1e-10 * scale.max(1.0) {
        return Err(Error::NotHermitian { freq, deviation: dev });
    }
    let evd = s.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigensolver { freq })?;
    let n = s.nrows();
    let u = evd.U();
    let vals = evd.S().column_vector();
    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = Mat::<C64>::zeros(n, n);
    for (dst, src) in (0..n).rev().enumerate() {
        let mut lam = vals[src].re;
        if lam < 0.0 {
            if lam < -CLIP_WINDOW {
                return Err(Error::EigenvalueOutOfRange { freq, value: lam });
            }
            lam = 0.0;
        } else if lam > 1.0 {
            if lam > 1.0 + CLIP_WINDOW {
                return Err(Error::EigenvalueOutOfRange { freq, value: lam });
            }
            lam = 1.0;
        }
        eigenvalues.push(lam);
        for i in 0..n {
            vectors[(i, dst)] = u[(i, src)];
        }
    }
    Ok(FrequencySpectrum { freq, multiplicity, eigenvalues, vectors })
}

/// Hermitian eigendecomposition of every normalized block.
pub fn eigendecompose(normalized: NormalizedBlocks) -> Result<SpectralData> {
    let NormalizedBlocks { eps, grid, degrees, blocks } = normalized;
    let spectra = blocks
        .into_par_iter()
        .enumerate()
        .map(|(l, s)| decompose_one(l, grid.multiplicity(l), &s))
        .collect::<Result<Vec<_>>>()?;
    SpectralData::from_parts(eps, grid, degrees, spectra)
}

/// Blocks, normalization and eigendecomposition in one call.
pub fn spectral_data(blocks: &FourierBlocks) -> Result<SpectralData> {
    eigendecompose(symmetric_normalize(blocks)?)
}

/// [`spectral_data`] consuming the blocks, so only one set of `N x N` matrices
/// is alive besides the eigenvectors.
pub fn spectral_data_owned(blocks: FourierBlocks) -> Result<SpectralData> {
    eigendecompose(into_normalized(blocks)?)
}

/// `conj(U^ℓ(g)) · ṽ_{n,ℓ}(i)` for a signed frequency `ℓ`.
pub fn eigenfunction_eval(spec: &SpectralData, freq: i64, n: usize, i: usize, g: &GroupElement) -> Result<C64> {
    let group = spec.grid.group;
    if g.group() != group {
        return Err(Error::GroupMismatch { expected: group, found: g.group() });
    }
    let l = freq.unsigned_abs() as usize;
    if l > spec.l_max() {
        return Err(Error::IndexOutOfRange { what: "frequencies", index: l, len: spec.l_max() + 1 });
    }
    if n >= spec.n() {
        return Err(Error::IndexOutOfRange { what: "eigenvectors", index: n, len: spec.n() });
    }
    if i >= spec.n() {
        return Err(Error::IndexOutOfRange { what: "points", index: i, len: spec.n() });
    }
    let u = group.character(&IrrepIndex::new(group, freq)?, g)?;
    let v = spec.walk(l, n, i);
    let v = if freq < 0 { v.conj() } else { v };
    Ok(u.conj() * v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeEntry {
    pub rank: usize,
    pub freq: usize,
    pub n: usize,
    pub lambda: f64,
    pub lambda_pow_t: f64,
}

/// Stored eigenvalues sorted by descending `λ^t`, ties broken by `(ℓ, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scree {
    pub t: u32,
    pub entries: Vec<ScreeEntry>,
}

impl Scree {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda_pow_t).collect()
    }
}

pub fn scree(spec: &SpectralData, t: u32) -> Scree {
    let mut entries: Vec<ScreeEntry> = spec
        .spectra
        .iter()
        .flat_map(|s| {
            s.eigenvalues.iter().enumerate().map(move |(n, &lambda)| ScreeEntry {
                rank: 0,
                freq: s.freq,
                n,
                lambda,
                lambda_pow_t: lambda.powi(t as i32),
            })
        })
        .collect();
    entries.sort_by(|a, b| b.lambda_pow_t.total_cmp(&a.lambda_pow_t).then(a.freq.cmp(&b.freq)).then(a.n.cmp(&b.n)));
    for (r, e) in entries.iter_mut().enumerate() {
        e.rank = r;
    }
    Scree { t, entries }
}

/// Value at the largest discrete second difference of a descending sequence.
///
/// Returns 0 (keep everything) for fewer than three values or when the
/// sequence has no convex corner.
pub fn elbow(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let mut best = (0.0, 0usize);
    for k in 1..values.len() - 1 {
        let c = values[k - 1] - 2.0 * values[k] + values[k + 1];
        if c > best.0 {
            best = (c, k);
        }
    }
    if best.1 == 0 {
        0.0
    } else {
        values[best.1]
    }
}

pub fn elbow_threshold(scree: &Scree) -> f64 {
    elbow(&scree.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_torus;
    use crate::group::ActionSpec;
    use crate::kernel::{fourier_blocks, PointCloud};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn torus_spectrum(n: usize, m: usize, l: usize) -> (FourierBlocks, SpectralData) {
        let c = sample_torus(n, 2.0, 1.0, 17).unwrap();
        let b = fourier_blocks(&c, 1.0, l, OrbitGrid::so2(m).unwrap()).unwrap();
        let s = spectral_data(&b).unwrap();
        (b, s)
    }

    #[test]
    fn single_point() {
        let c = PointCloud::new(vec![vec![1.0, 0.5, 0.0]], ActionSpec::default()).unwrap();
        let b = fourier_blocks(&c, 1.0, 3, OrbitGrid::so2(8).unwrap()).unwrap();
        let n = symmetric_normalize(&b).unwrap();
        assert!((n.blocks[0][(0, 0)].re - 1.0).abs() < 1e-15);
        let s = eigendecompose(n).unwrap();
        assert!((s.eigenvalue(0, 0) - 1.0).abs() < 1e-15);
        assert!((s.sym(0, 0, 0).norm() - 1.0).abs() < 1e-15);
        for l in 1..=3 {
            let expect = b.blocks[l][(0, 0)].re / b.degrees[0];
            assert!((s.eigenvalue(l, 0) - expect).abs() < 1e-14);
            assert!(s.eigenvalue(l, 0) < 1.0);
        }
    }

    #[test]
    fn identity_block() {
        let w = Mat::<C64>::identity(4, 4);
        let s = normalize_block(&w, &[1.0; 4]).unwrap();
        assert_eq!(s, Mat::<C64>::identity(4, 4));
        assert!(matches!(normalize_block(&w, &[1.0, 0.0, 1.0, 1.0]), Err(Error::NonPositiveDegree { index: 1, .. })));
    }

    #[test]
    fn random_hermitian_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let mut w = Mat::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let z = C64::new(rng.random_range(-1.0..1.0), if i == j { 0.0 } else { rng.random_range(-1.0..1.0) });
                w[(i, j)] = z;
                w[(j, i)] = z.conj();
            }
        }
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        let s = normalize_block(&w, &d).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((s[(i, j)] - w[(i, j)] / (d[i] * d[j]).sqrt()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn owned_path_matches_borrowed() {
        let c = sample_torus(30, 2.0, 1.0, 2).unwrap();
        let b = fourier_blocks(&c, 1.0, 5, OrbitGrid::so2(16).unwrap()).unwrap();
        let x = spectral_data(&b).unwrap();
        let y = spectral_data_owned(b).unwrap();
        assert_eq!(x.all_eigenvalues(), y.all_eigenvalues());
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let mut s = Mat::<C64>::identity(3, 3);
        s[(0, 1)] = C64::new(0.5, 0.0);
        let nb = NormalizedBlocks { eps: 1.0, grid: OrbitGrid::so2(4).unwrap(), degrees: vec![1.0; 3], blocks: vec![s] };
        assert!(matches!(eigendecompose(nb), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn spectral_invariants() {
        let (b, s) = torus_spectrum(40, 32, 10);
        assert!((s.eigenvalue(0, 0) - 1.0).abs() < 1e-10);
        assert!(s.eigenvalue(0, 0) - s.eigenvalue(0, 1) > 1e-6);
        let norm = symmetric_normalize(&b).unwrap();
        for (l, spec) in s.spectra.iter().enumerate() {
            assert!(spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            assert!(spec.eigenvalues.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let v = &spec.vectors;
            let gram = v.adjoint() * v;
            for i in 0..40 {
                for j in 0..40 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - C64::new(e, 0.0)).norm() < 1e-10);
                }
            }
            let sl = &norm.blocks[l];
            let scale = (0..40).flat_map(|i| (0..40).map(move |j| (i, j))).map(|(i, j)| sl[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            let r = sl * v;
            for n in 0..40 {
                let res: f64 = (0..40).map(|i| (r[(i, n)] - v[(i, n)] * spec.eigenvalues[n]).norm_sqr()).sum::<f64>().sqrt();
                assert!(res <= 1e-10 * scale);
            }
        }
        // Random-walk pairing: D^{-1}Ŵ ṽ = λ ṽ.
        for l in [0usize, 3] {
            for n in [0usize, 5] {
                for i in 0..40 {
                    let kv: C64 = (0..40).map(|j| b.blocks[l][(i, j)] * s.walk(l, n, j)).sum::<C64>() / b.degrees[i];
                    assert!((kv - s.walk(l, n, i) * s.eigenvalue(l, n)).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn eigenfunction_examples() {
        let (_, s) = torus_spectrum(10, 16, 4);
        let g = GroupElement::so2(PI);
        let v = eigenfunction_eval(&s, 1, 2, 3, &g).unwrap();
        assert!((v + s.walk(1, 2, 3)).norm() < 1e-15);
        let v = eigenfunction_eval(&s, 0, 2, 3, &GroupElement::so2(1.3)).unwrap();
        assert_eq!(v, s.walk(0, 2, 3));
        let v = eigenfunction_eval(&s, -2, 1, 0, &GroupElement::so2(0.4)).unwrap();
        assert!((v - C64::from_polar(1.0, 0.8) * s.walk(2, 1, 0).conj()).norm() < 1e-15);
        assert!(eigenfunction_eval(&s, 5, 0, 0, &g).is_err());
        assert!(eigenfunction_eval(&s, 1, 0, 0, &GroupElement::cyclic(4, 1).unwrap()).is_err());
    }

    #[test]
    fn elbow_examples() {
        assert_eq!(elbow(&[1.0, 0.9, 0.1, 0.09]), 0.1);
        assert_eq!(elbow(&[0.5; 6]), 0.0);
        assert_eq!(elbow(&[1.0, 0.5]), 0.0);
        // Ties resolve to the smallest index.
        assert_eq!(elbow(&[1.0, 0.5, 0.5, 0.0, 0.0]), 0.5);
    }

    #[test]
    fn scree_is_ordered_and_elbow_is_order_independent() {
        let (_, s) = torus_spectrum(64, 32, 8);
        let sc = scree(&s, 3);
        assert!(sc.entries.windows(2).all(|w| w[0].lambda_pow_t >= w[1].lambda_pow_t));
        assert_eq!(sc.entries.len(), 64 * 9);
        let delta = elbow_threshold(&sc);
        let mut shuffled = s.clone();
        shuffled.spectra.reverse();
        for (k, sp) in shuffled.spectra.iter_mut().enumerate() {
            assert_eq!(sp.freq, 8 - k);
        }
        assert_eq!(elbow_threshold(&scree(&shuffled, 3)), delta);
    }

    proptest! {
        #[test]
        fn elbow_returns_a_member_or_zero(mut v in proptest::collection::vec(0.0f64..1.0, 0..30)) {
            v.sort_by(|a, b| b.total_cmp(a));
            let d = elbow(&v);
            prop_assert!(d == 0.0 || v.contains(&d));
        }
    }
}
