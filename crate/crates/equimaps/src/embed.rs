//! Equivariant and invariant diffusion embeddings.
//!
//! Only frequencies `ℓ >= 0` are stored. The coordinate of `-ℓ` is the
//! conjugate of the one at `ℓ`, so every coordinate carries a weight that
//! counts the signed copies it stands for and norms are `Σ w |c|²`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupElement, IrrepIndex};
use crate::spectral::SpectralData;

/// Default cap on the number of bispectrum triples.
pub const BISPECTRUM_BUDGET: usize = 100_000;

/// Which eigenvector family feeds the coordinates: `ṽ` (walk) or `v` (sym).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Walk,
    Sym,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    EquivariantWalk,
    EquivariantSym,
    InvariantWalk,
    InvariantSym,
    FirstMoment,
    Bispectrum,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 6] = [
        EmbeddingKind::EquivariantWalk,
        EmbeddingKind::EquivariantSym,
        EmbeddingKind::InvariantWalk,
        EmbeddingKind::InvariantSym,
        EmbeddingKind::FirstMoment,
        EmbeddingKind::Bispectrum,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EmbeddingKind::EquivariantWalk => "equivariant-walk",
            EmbeddingKind::EquivariantSym => "equivariant-sym",
            EmbeddingKind::InvariantWalk => "invariant-walk",
            EmbeddingKind::InvariantSym => "invariant-sym",
            EmbeddingKind::FirstMoment => "first-moment",
            EmbeddingKind::Bispectrum => "bispectrum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_invariant(&self) -> bool {
        !matches!(self, EmbeddingKind::EquivariantWalk | EmbeddingKind::EquivariantSym)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionTime {
    Single(u32),
    Mixed(u32, u32),
}

/// Identifies one coordinate. `n`, `m`, `k` index eigenvectors within a frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoordLabel {
    Mode { freq: usize, n: usize },
    Pair { freq: usize, n: usize, m: usize },
    Triple { l1: usize, l2: usize, n: usize, m: usize, k: usize },
    Orbit { k: usize },
}

impl CoordLabel {
    /// Column stem used in CSV headers.
    pub fn column(&self) -> String {
        match *self {
            CoordLabel::Mode { freq, n } => format!("l{freq}_n{n}"),
            CoordLabel::Pair { freq, n, m } => format!("l{freq}_n{n}_m{m}"),
            CoordLabel::Triple { l1, l2, n, m, k } => format!("a{l1}_b{l2}_n{n}_m{m}_k{k}"),
            CoordLabel::Orbit { k } => format!("k{k}"),
        }
    }
}

/// Truncated coordinates of one point with their labels and norm weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub kind: EmbeddingKind,
    pub time: DiffusionTime,
    pub delta: f64,
    pub labels: Vec<CoordLabel>,
    pub weights: Vec<f64>,
    pub coords: Vec<C64>,
}

/// `Σ w Re(a conj(b))`.
pub fn weighted_inner(weights: &[f64], a: &[C64], b: &[C64]) -> f64 {
    weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x * y.conj()).re).sum()
}

/// `sqrt(Σ w |a - b|²)`.
pub fn weighted_distance(weights: &[f64], a: &[C64], b: &[C64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

impl EmbeddingVector {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn norm(&self) -> f64 {
        weighted_inner(&self.weights, &self.coords, &self.coords).sqrt()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind || self.time != other.time || self.labels != other.labels {
            return Err(Error::LabelMismatch);
        }
        Ok(())
    }

    /// Real inner product over the full signed coordinate set.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(weighted_inner(&self.weights, &self.coords, &other.coords))
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(weighted_distance(&self.weights, &self.coords, &other.coords))
    }
}

/// One retained eigenpair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub freq: usize,
    pub n: usize,
    pub lambda: f64,
    pub lambda_t: f64,
}

/// The eigenpairs with `λ^t > δ`, shared by every embedding kind of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retained {
    pub t: u32,
    pub delta: f64,
    /// Descending `λ^t`, ties by `(ℓ, n)`.
    pub modes: Vec<Mode>,
    /// Number of retained eigenvectors per frequency; they form a prefix since
    /// eigenvalues are stored in descending order.
    pub counts: Vec<usize>,
}

impl Retained {
    pub fn new(spec: &SpectralData, t: u32, delta: f64) -> Result<Self> {
        let mut modes = Vec::new();
        let mut counts = Vec::with_capacity(spec.spectra.len());
        let mut largest = f64::NEG_INFINITY;
        for s in &spec.spectra {
            let mut c = 0;
            for (n, &lambda) in s.eigenvalues.iter().enumerate() {
                let lambda_t = lambda.powi(t as i32);
                largest = largest.max(lambda_t);
                if lambda_t > delta {
                    modes.push(Mode { freq: s.freq, n, lambda, lambda_t });
                    c = n + 1;
                }
            }
            counts.push(c);
        }
        if modes.is_empty() {
            return Err(Error::EmptyRetainedSet { delta, largest });
        }
        modes.sort_by(|a, b| b.lambda_t.total_cmp(&a.lambda_t).then(a.freq.cmp(&b.freq)).then(a.n.cmp(&b.n)));
        Ok(Retained { t, delta, modes, counts })
    }

    /// Keeps every eigenpair with `λ > 0`.
    pub fn full(spec: &SpectralData, t: u32) -> Result<Self> {
        Self::new(spec, t, 0.0)
    }

    pub fn dimension(&self) -> usize {
        self.modes.len()
    }
}

#[inline]
fn entry(spec: &SpectralData, variant: Variant, freq: usize, n: usize, i: usize) -> C64 {
    match variant {
        Variant::Walk => spec.walk(freq, n, i),
        Variant::Sym => spec.sym(freq, n, i),
    }
}

fn check_point(spec: &SpectralData, i: usize) -> Result<()> {
    if i >= spec.n() {
        return Err(Error::IndexOutOfRange { what: "points", index: i, len: spec.n() });
    }
    Ok(())
}

fn check_time(t: u32) -> Result<()> {
    if t == 0 {
        return Err(crate::error::invalid("t", "diffusion time must be at least 1"));
    }
    Ok(())
}

/// Diagnostics of a bispectrum enumeration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BispectrumStats {
    /// Frequency pairs `(ℓ1, ℓ2)` skipped because `ℓ1 + ℓ2` exceeds the stored range.
    pub overflow_pairs: usize,
    /// Triples dropped by the budget.
    pub dropped: usize,
}

/// Layout of the invariant and bispectrum coordinates for a retained set.
#[derive(Clone, Debug)]
struct PairLayout {
    labels: Vec<CoordLabel>,
    weights: Vec<f64>,
}

/// Builds embeddings of every kind from one spectrum and one retained set.
#[derive(Clone, Debug)]
pub struct Embedder<'a> {
    spec: &'a SpectralData,
    retained: Retained,
    pairs: PairLayout,
}

impl<'a> Embedder<'a> {
    pub fn new(spec: &'a SpectralData, t: u32, delta: f64) -> Result<Self> {
        check_time(t)?;
        Ok(Self::with_retained(spec, Retained::new(spec, t, delta)?))
    }

    pub fn with_retained(spec: &'a SpectralData, retained: Retained) -> Self {
        let pairs = pair_layout(spec, &retained);
        Embedder { spec, retained, pairs }
    }

    pub fn spectral(&self) -> &SpectralData {
        self.spec
    }

    pub fn retained(&self) -> &Retained {
        &self.retained
    }

    pub fn time(&self) -> DiffusionTime {
        DiffusionTime::Single(self.retained.t)
    }

    pub fn equivariant_labels(&self) -> (Vec<CoordLabel>, Vec<f64>) {
        let labels = self.retained.modes.iter().map(|m| CoordLabel::Mode { freq: m.freq, n: m.n }).collect();
        let weights = self.retained.modes.iter().map(|m| self.spec.grid.multiplicity(m.freq) as f64).collect();
        (labels, weights)
    }

    /// `λ^t conj(U^ℓ(g)) ṽ_{n,ℓ}(i)` (walk) or the same with `v` (sym).
    pub fn equivariant(&self, i: usize, g: &GroupElement, variant: Variant) -> Result<EmbeddingVector> {
        check_point(self.spec, i)?;
        let group = self.spec.grid.group;
        if g.group() != group {
            return Err(Error::GroupMismatch { expected: group, found: g.group() });
        }
        let phases = (0..=self.spec.l_max())
            .map(|l| Ok(group.character(&IrrepIndex::new(group, l as i64)?, g)?.conj()))
            .collect::<Result<Vec<C64>>>()?;
        let coords = self
            .retained
            .modes
            .iter()
            .map(|m| phases[m.freq] * entry(self.spec, variant, m.freq, m.n, i) * m.lambda_t)
            .collect();
        let (labels, weights) = self.equivariant_labels();
        let kind = match variant {
            Variant::Walk => EmbeddingKind::EquivariantWalk,
            Variant::Sym => EmbeddingKind::EquivariantSym,
        };
        Ok(EmbeddingVector { kind, time: self.time(), delta: self.retained.delta, labels, weights, coords })
    }

    /// `λ_n^t λ_m^t a_n(i) conj(a_m(i))` over retained pairs `n <= m` sharing a frequency.
    pub fn invariant(&self, i: usize, variant: Variant) -> Result<EmbeddingVector> {
        check_point(self.spec, i)?;
        let t = self.retained.t as i32;
        let coords = self
            .pairs
            .labels
            .iter()
            .map(|lab| match *lab {
                CoordLabel::Pair { freq, n, m } => {
                    let s = &self.spec.spectra[freq].eigenvalues;
                    let scale = s[n].powi(t) * s[m].powi(t);
                    entry(self.spec, variant, freq, n, i) * entry(self.spec, variant, freq, m, i).conj() * scale
                }
                _ => unreachable!("pair layout holds pairs only"),
            })
            .collect();
        let kind = match variant {
            Variant::Walk => EmbeddingKind::InvariantWalk,
            Variant::Sym => EmbeddingKind::InvariantSym,
        };
        Ok(EmbeddingVector {
            kind,
            time: self.time(),
            delta: self.retained.delta,
            labels: self.pairs.labels.clone(),
            weights: self.pairs.weights.clone(),
            coords,
        })
    }

    /// Mixed-time invariant coordinates `λ_n^{t1} λ_m^{t2} ṽ_n(i) conj(ṽ_m(i))`.
    ///
    /// All ordered pairs are kept since the coordinates are not conjugate
    /// symmetric in `(n, m)` when `t1 != t2`; equal times defer to
    /// [`Embedder::invariant`].
    pub fn mixed_invariant(&self, i: usize, t1: u32, t2: u32) -> Result<EmbeddingVector> {
        check_time(t1)?;
        check_time(t2)?;
        if t1 == t2 {
            let mut e = if t1 == self.retained.t {
                self.invariant(i, Variant::Walk)?
            } else {
                Embedder::with_retained(self.spec, Retained { t: t1, ..self.retained.clone() }).invariant(i, Variant::Walk)?
            };
            e.time = DiffusionTime::Mixed(t1, t2);
            return Ok(e);
        }
        check_point(self.spec, i)?;
        let (mut labels, mut weights, mut coords) = (Vec::new(), Vec::new(), Vec::new());
        for (freq, &count) in self.retained.counts.iter().enumerate() {
            let s = &self.spec.spectra[freq].eigenvalues;
            let w = self.spec.grid.multiplicity(freq) as f64;
            for n in 0..count {
                for m in 0..count {
                    labels.push(CoordLabel::Pair { freq, n, m });
                    weights.push(w);
                    let scale = s[n].powi(t1 as i32) * s[m].powi(t2 as i32);
                    coords.push(self.spec.walk(freq, n, i) * self.spec.walk(freq, m, i).conj() * scale);
                }
            }
        }
        Ok(EmbeddingVector {
            kind: EmbeddingKind::InvariantWalk,
            time: DiffusionTime::Mixed(t1, t2),
            delta: self.retained.delta,
            labels,
            weights,
            coords,
        })
    }

    /// Triple-product coordinates `(λλ'λ'')^t ṽ_{n,ℓ1}(i) ṽ_{m,ℓ2}(i) conj(ṽ_{k,ℓ1+ℓ2}(i))`.
    pub fn bispectrum(&self, i: usize, budget: usize) -> Result<(EmbeddingVector, BispectrumStats)> {
        check_point(self.spec, i)?;
        let (labels, weights, stats) = self.bispectrum_layout(budget);
        let t = self.retained.t as i32;
        let coords = labels
            .iter()
            .map(|lab| match *lab {
                CoordLabel::Triple { l1, l2, n, m, k } => {
                    let lam = |l: usize, j: usize| self.spec.spectra[l].eigenvalues[j];
                    let scale = (lam(l1, n) * lam(l2, m) * lam(l1 + l2, k)).powi(t);
                    self.spec.walk(l1, n, i) * self.spec.walk(l2, m, i) * self.spec.walk(l1 + l2, k, i).conj() * scale
                }
                _ => unreachable!("triple layout holds triples only"),
            })
            .collect();
        let e = EmbeddingVector {
            kind: EmbeddingKind::Bispectrum,
            time: self.time(),
            delta: self.retained.delta,
            labels,
            weights,
            coords,
        };
        Ok((e, stats))
    }

    /// Canonical triples `ℓ1 <= ℓ2`, `ℓ1 + ℓ2 <= L`, `n <= m` when `ℓ1 = ℓ2`,
    /// ordered by descending eigenvalue product and capped at `budget`.
    pub fn bispectrum_layout(&self, budget: usize) -> (Vec<CoordLabel>, Vec<f64>, BispectrumStats) {
        let spec = self.spec;
        let counts = &self.retained.counts;
        let l_max = spec.l_max();
        let mut stats = BispectrumStats::default();
        let mut cands: Vec<(f64, CoordLabel)> = Vec::new();
        for l1 in 0..=l_max {
            for l2 in l1..=l_max {
                if counts[l1] == 0 || counts[l2] == 0 {
                    continue;
                }
                let l3 = l1 + l2;
                if l3 > l_max {
                    stats.overflow_pairs += 1;
                    continue;
                }
                for n in 0..counts[l1] {
                    let m0 = if l1 == l2 { n } else { 0 };
                    for m in m0..counts[l2] {
                        for k in 0..counts[l3] {
                            let p = spec.eigenvalue(l1, n) * spec.eigenvalue(l2, m) * spec.eigenvalue(l3, k);
                            cands.push((p, CoordLabel::Triple { l1, l2, n, m, k }));
                        }
                    }
                }
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| triple_key(&a.1).cmp(&triple_key(&b.1))));
        if cands.len() > budget {
            stats.dropped = cands.len() - budget;
            cands.truncate(budget);
        }
        let weights = cands
            .iter()
            .map(|(_, lab)| match *lab {
                CoordLabel::Triple { l1, l2, n, m, .. } => {
                    let swap = if l1 == l2 && n < m { 2.0 } else { 1.0 };
                    let real = [l1, l2, l1 + l2].iter().all(|&l| spec.grid.multiplicity(l) == 1);
                    swap * if real { 1.0 } else { 2.0 }
                }
                _ => unreachable!(),
            })
            .collect();
        (cands.into_iter().map(|(_, l)| l).collect(), weights, stats)
    }

    /// Embeddings of every point for one kind.
    pub fn table(&self, kind: EmbeddingKind) -> Result<EmbeddingTable> {
        let n = self.spec.n();
        let identity = self.spec.grid.element(0);
        let rows: Vec<EmbeddingVector> = (0..n)
            .into_par_iter()
            .map(|i| match kind {
                EmbeddingKind::EquivariantWalk => self.equivariant(i, &identity, Variant::Walk),
                EmbeddingKind::EquivariantSym => self.equivariant(i, &identity, Variant::Sym),
                EmbeddingKind::InvariantWalk => self.invariant(i, Variant::Walk),
                EmbeddingKind::InvariantSym => self.invariant(i, Variant::Sym),
                EmbeddingKind::FirstMoment => first_moment_embedding(self.spec, i, self.retained.t),
                EmbeddingKind::Bispectrum => self.bispectrum(i, BISPECTRUM_BUDGET).map(|(e, _)| e),
            })
            .collect::<Result<_>>()?;
        EmbeddingTable::from_rows(rows)
    }
}

fn triple_key(l: &CoordLabel) -> (usize, usize, usize, usize, usize) {
    match *l {
        CoordLabel::Triple { l1, l2, n, m, k } => (l1, l2, n, m, k),
        _ => (0, 0, 0, 0, 0),
    }
}

fn pair_layout(spec: &SpectralData, retained: &Retained) -> PairLayout {
    let t = retained.t as i32;
    let mut cands: Vec<(f64, CoordLabel, f64)> = Vec::new();
    for (freq, &count) in retained.counts.iter().enumerate() {
        let s = &spec.spectra[freq].eigenvalues;
        let mult = spec.grid.multiplicity(freq) as f64;
        for n in 0..count {
            for m in n..count {
                let w = if n == m { mult } else { 2.0 * mult };
                cands.push((s[n].powi(t) * s[m].powi(t), CoordLabel::Pair { freq, n, m }, w));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| match (a.1, b.1) {
            (CoordLabel::Pair { freq: f1, n: n1, m: m1 }, CoordLabel::Pair { freq: f2, n: n2, m: m2 }) => {
                (f1, n1, m1).cmp(&(f2, n2, m2))
            }
            _ => std::cmp::Ordering::Equal,
        })
    });
    PairLayout { labels: cands.iter().map(|c| c.1).collect(), weights: cands.iter().map(|c| c.2).collect() }
}

/// Embeddings of all points sharing one label set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub kind: EmbeddingKind,
    pub time: DiffusionTime,
    pub delta: f64,
    pub labels: Vec<CoordLabel>,
    pub weights: Vec<f64>,
    pub rows: Vec<Vec<C64>>,
}

impl EmbeddingTable {
    pub fn from_rows(rows: Vec<EmbeddingVector>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| crate::error::invalid("rows", "no embeddings"))?;
        let (kind, time, delta, labels, weights) =
            (first.kind, first.time, first.delta, first.labels.clone(), first.weights.clone());
        let mut out = Vec::with_capacity(rows.len());
        for r in rows {
            if r.kind != kind || r.time != time || r.labels != labels {
                return Err(Error::LabelMismatch);
            }
            out.push(r.coords);
        }
        Ok(EmbeddingTable { kind, time, delta, labels, weights, rows: out })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        weighted_distance(&self.weights, &self.rows[i], &self.rows[j])
    }

    pub fn row(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector {
            kind: self.kind,
            time: self.time,
            delta: self.delta,
            labels: self.labels.clone(),
            weights: self.weights.clone(),
            coords: self.rows[i].clone(),
        }
    }
}

pub fn equivariant_embed(spec: &SpectralData, i: usize, g: &GroupElement, t: u32, delta: f64, variant: Variant) -> Result<EmbeddingVector> {
    Embedder::new(spec, t, delta)?.equivariant(i, g, variant)
}

pub fn invariant_embed(spec: &SpectralData, i: usize, t: u32, delta: f64, variant: Variant) -> Result<EmbeddingVector> {
    Embedder::new(spec, t, delta)?.invariant(i, variant)
}

/// Truncation uses `λ^{min(t1, t2)} > δ`.
pub fn mixed_time_invariant_embed(spec: &SpectralData, i: usize, t1: u32, t2: u32, delta: f64) -> Result<EmbeddingVector> {
    check_time(t1)?;
    check_time(t2)?;
    Embedder::new(spec, t1.min(t2), delta)?.mixed_invariant(i, t1, t2)
}

pub fn bispectrum_embed(spec: &SpectralData, i: usize, t: u32, delta: f64) -> Result<(EmbeddingVector, BispectrumStats)> {
    Embedder::new(spec, t, delta)?.bispectrum(i, BISPECTRUM_BUDGET)
}

/// Orbit marginal `m_{i,t}(k) = ∫ P^t_{ik}(I, C) dη(C)` from the full `ℓ = 0` spectrum.
pub fn first_moment(spec: &SpectralData, i: usize, t: u32) -> Result<Vec<f64>> {
    check_point(spec, i)?;
    check_time(t)?;
    let s0 = &spec.spectra[0];
    let coef: Vec<C64> = s0
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(n, &lam)| spec.walk(0, n, i) * lam.powi(t as i32))
        .collect();
    Ok((0..spec.n())
        .map(|k| {
            let s: C64 = coef.iter().enumerate().map(|(n, c)| c * spec.walk(0, n, k).conj()).sum();
            spec.degrees[k] * s.re
        })
        .collect())
}

pub fn first_moment_embedding(spec: &SpectralData, i: usize, t: u32) -> Result<EmbeddingVector> {
    let m = first_moment(spec, i, t)?;
    Ok(EmbeddingVector {
        kind: EmbeddingKind::FirstMoment,
        time: DiffusionTime::Single(t),
        delta: 0.0,
        labels: (0..m.len()).map(|k| CoordLabel::Orbit { k }).collect(),
        weights: vec![1.0; m.len()],
        coords: m.into_iter().map(|x| C64::new(x, 0.0)).collect(),
    })
}
