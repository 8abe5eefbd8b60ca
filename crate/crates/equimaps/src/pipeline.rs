//! End-to-end runs: data, Fourier blocks, spectra, embeddings, distances and exports.
//!
//! A run directory holds a `manifest.json` whose `config` has every default
//! resolved to a number, so feeding it back to [`rerun_manifest`] reproduces
//! the CSV outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate, DatasetSpec};
use crate::dist::{pairwise_matrix_with, AlignmentObjective, DistanceKind, DistanceMatrix, ALIGN_GRID};
use crate::embed::{EmbeddingKind, EmbeddingTable, Embedder, Variant};
use crate::error::{Error, Result};
use crate::group::{Group, OrbitGrid};
use crate::io::{self, Cache};
use crate::kernel::{effective_bandlimit, fourier_blocks, median_bandwidth, PointCloud};
use crate::spectral::{elbow_threshold, scree, spectral_data_owned, SpectralData};

/// Points used to estimate the bandlimit when `l_max` is not given.
pub const BANDLIMIT_SUBSAMPLE: usize = 256;

/// Number of random pairs behind the median bandwidth.
pub const MEDIAN_PAIRS: usize = 1000;

/// A number, or the keyword that asks for the default rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Value(f64),
    Rule(String),
}

impl Setting {
    fn value(&self) -> Option<f64> {
        match self {
            Setting::Value(v) => Some(*v),
            Setting::Rule(_) => None,
        }
    }
}

fn median() -> Setting {
    Setting::Rule("median".into())
}

fn elbow() -> Setting {
    Setting::Rule("elbow".into())
}

fn default_nodes() -> usize {
    64
}

fn default_t() -> u32 {
    3
}

fn default_tol() -> f64 {
    1e-10
}

fn default_kinds() -> Vec<EmbeddingKind> {
    vec![EmbeddingKind::EquivariantWalk, EmbeddingKind::InvariantWalk]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Synthetic data set; exclusive with `input`.
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    /// Point-cloud CSV; exclusive with `dataset`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub group: Group,
    /// Grid size `M`. Must equal the order for cyclic groups.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Largest stored frequency; `None` picks it from the block energies.
    #[serde(default)]
    pub l_max: Option<usize>,
    #[serde(default = "default_tol")]
    pub bandlimit_tol: f64,
    /// Kernel bandwidth, or `"median"`.
    #[serde(default = "median")]
    pub eps: Setting,
    #[serde(default = "default_t")]
    pub t: u32,
    /// Second time of the mixed-time invariant embedding.
    #[serde(default)]
    pub t2: Option<u32>,
    /// Truncation threshold on `λ^t`, or `"elbow"`.
    #[serde(default = "elbow")]
    pub delta: Setting,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<EmbeddingKind>,
    /// Pairwise matrices to export.
    #[serde(default)]
    pub distances: Vec<DistanceKind>,
    /// Heat-map sources; empty means the injected copies and their sources.
    #[serde(default)]
    pub heat_sources: Vec<usize>,
    pub out: PathBuf,
    /// Seed of the bandwidth heuristic.
    #[serde(default)]
    pub seed: u64,
    /// Store Fourier blocks in the cache as well as spectra.
    #[serde(default = "default_true")]
    pub cache_blocks: bool,
}

impl RunConfig {
    pub fn new(dataset: DatasetSpec, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            dataset: Some(dataset),
            input: None,
            group: Group::So2,
            nodes: default_nodes(),
            l_max: None,
            bandlimit_tol: default_tol(),
            eps: median(),
            t: default_t(),
            t2: None,
            delta: elbow(),
            kinds: default_kinds(),
            distances: Vec::new(),
            heat_sources: Vec::new(),
            out: out.into(),
            seed: 0,
            cache_blocks: true,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| config_err(&path.display().to_string(), e.to_string()))
    }

    /// Checks every field, naming the offending one.
    pub fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.input) {
            (Some(_), Some(_)) => return Err(config_err("input", "give either `dataset` or `input`, not both")),
            (None, None) => return Err(config_err("dataset", "need a `dataset` or an `input` file")),
            (Some(d), None) => validate_dataset(d)?,
            (None, Some(p)) => {
                if !p.exists() {
                    return Err(config_err("input", format!("{} does not exist", p.display())));
                }
            }
        }
        let grid = OrbitGrid::for_group(self.group, self.nodes).map_err(|e| config_err("nodes", e.to_string()))?;
        if let Some(l) = self.l_max {
            if l > grid.max_frequency() {
                return Err(config_err("l_max", format!("{l} exceeds {} for {} grid nodes", grid.max_frequency(), self.nodes)));
            }
        }
        if !(self.bandlimit_tol > 0.0 && self.bandlimit_tol < 1.0) {
            return Err(config_err("bandlimit_tol", "must lie in (0, 1)"));
        }
        match &self.eps {
            Setting::Value(v) if !(*v > 0.0 && v.is_finite()) => return Err(config_err("eps", format!("must be positive, got {v}"))),
            Setting::Rule(r) if r != "median" => return Err(config_err("eps", format!("expected a number or \"median\", got {r:?}"))),
            _ => {}
        }
        match &self.delta {
            Setting::Value(v) if !(*v >= 0.0 && v.is_finite()) => return Err(config_err("delta", format!("must be non-negative, got {v}"))),
            Setting::Rule(r) if r != "elbow" => return Err(config_err("delta", format!("expected a number or \"elbow\", got {r:?}"))),
            _ => {}
        }
        if self.t == 0 {
            return Err(config_err("t", "diffusion time must be at least 1"));
        }
        if self.t2 == Some(0) {
            return Err(config_err("t2", "diffusion time must be at least 1"));
        }
        if self.out.as_os_str().is_empty() {
            return Err(config_err("out", "output directory is empty"));
        }
        Ok(())
    }
}

fn config_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), reason: reason.into() }
}

fn validate_dataset(d: &DatasetSpec) -> Result<()> {
    d.validate().map_err(|e| {
        let path = match &e {
            Error::IndexOutOfRange { index, .. } => {
                let k = d.injected.iter().position(|c| c.source == *index).unwrap_or(0);
                format!("dataset.injected[{k}].source")
            }
            Error::InvalidArgument { name, .. } => format!("dataset.{name}"),
            _ => "dataset".into(),
        };
        config_err(&path, e.to_string())
    })
}

/// Parameters the run actually used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub n: usize,
    pub eps: f64,
    pub l_max: usize,
    pub delta: f64,
    pub retained_modes: usize,
    /// Retained modes other than the stationary one.
    pub retained_nontrivial: usize,
    pub cache_key: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub resolved: Resolved,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

/// Cloud, grid and spectra of one configuration.
pub struct Prepared {
    pub cloud: PointCloud,
    pub grid: OrbitGrid,
    pub eps: f64,
    pub l_max: usize,
    pub cache_key: String,
    pub spectral: SpectralData,
}

pub fn load_cloud(cfg: &RunConfig) -> Result<PointCloud> {
    match (&cfg.dataset, &cfg.input) {
        (Some(d), _) => generate(d),
        (None, Some(p)) => io::read_cloud(p),
        (None, None) => Err(config_err("dataset", "need a `dataset` or an `input` file")),
    }
}

/// Bandlimit estimated on the first [`BANDLIMIT_SUBSAMPLE`] points.
pub fn auto_bandlimit(cloud: &PointCloud, eps: f64, grid: OrbitGrid, tol: f64) -> Result<usize> {
    if matches!(grid.group, Group::Cyclic { .. }) {
        return Ok(grid.max_frequency());
    }
    let m = cloud.len().min(BANDLIMIT_SUBSAMPLE);
    let sub = PointCloud::from_flat(cloud.dim(), cloud.coords()[..m * cloud.dim()].to_vec(), cloud.action)?;
    Ok(effective_bandlimit(&fourier_blocks(&sub, eps, grid.max_frequency(), grid)?, tol))
}

/// Resolves `eps` and `l_max` and loads or computes the spectra.
pub fn prepare(cfg: &RunConfig, cache: Option<&Cache>) -> Result<Prepared> {
    cfg.validate()?;
    let cloud = load_cloud(cfg)?;
    let grid = OrbitGrid::for_group(cfg.group, cfg.nodes)?;
    let eps = match cfg.eps.value() {
        Some(v) => v,
        None => median_bandwidth(&cloud, MEDIAN_PAIRS, cfg.seed)?,
    };
    let l_max = match cfg.l_max {
        Some(l) => l,
        None => auto_bandlimit(&cloud, eps, grid, cfg.bandlimit_tol)?,
    };
    let key = io::content_hash(&cloud, eps, l_max, &grid);
    let spectral = match cache.map(|c| c.load_spectra(&key)).transpose()?.flatten() {
        Some(s) => s,
        None => {
            let blocks = match cache.map(|c| c.load_blocks(&key)).transpose()?.flatten() {
                Some(b) => b,
                None => {
                    let b = fourier_blocks(&cloud, eps, l_max, grid)?;
                    if let (Some(c), true) = (cache, cfg.cache_blocks) {
                        c.store_blocks(&key, &b)?;
                    }
                    b
                }
            };
            let s = spectral_data_owned(blocks)?;
            if let Some(c) = cache {
                c.store_spectra(&key, &s)?;
            }
            s
        }
    };
    Ok(Prepared { cloud, grid, eps, l_max, cache_key: key, spectral })
}

/// Which artifacts a run writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Scree,
    Embed,
    Dist,
    Align,
    All,
}

impl Stage {
    fn includes(self, other: Stage) -> bool {
        self == Stage::All || self == other
    }
}

/// Tracks files written so a failed run can remove them.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn with_sidecar(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.files.push(io::sidecar_path(&p));
        p
    }

    fn cleanup(&self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        let _ = fs::remove_dir_all(self.dir.join("cache.partial"));
        if self.created_dir {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned())).collect()
    }
}

/// Runs the full pipeline.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    run_stage(cfg, Stage::All)
}

/// Reruns the configuration stored in a manifest, writing into `out`.
pub fn rerun_manifest(manifest: &Path, out: Option<&Path>) -> Result<Manifest> {
    let m: Manifest = io::read_json(manifest)?;
    let mut cfg = m.config;
    if let Some(o) = out {
        cfg.out = o.to_path_buf();
    }
    run_pipeline(&cfg)
}

/// Runs the pipeline up to one stage. Files written by a failed run are removed.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<Manifest> {
    cfg.validate()?;
    // Bit-identical reruns need a fixed reduction order inside the eigensolver.
    faer::set_global_parallelism(faer::Par::Seq);
    let created_dir = !cfg.out.exists();
    fs::create_dir_all(&cfg.out)?;
    let mut outputs = Outputs { dir: cfg.out.clone(), created_dir, files: Vec::new() };
    match run_inner(cfg, stage, &mut outputs) {
        Ok(m) => Ok(m),
        Err(e) => {
            outputs.cleanup();
            Err(e)
        }
    }
}

fn run_inner(cfg: &RunConfig, stage: Stage, out: &mut Outputs) -> Result<Manifest> {
    let cache = Cache::from_env_or(cfg.out.join("cache"))?;
    let prep = prepare(cfg, Some(&cache))?;
    let spec = &prep.spectral;
    let sc = scree(spec, cfg.t);
    let delta = match cfg.delta.value() {
        Some(v) => v,
        None => elbow_threshold(&sc),
    };
    let emb = Embedder::new(spec, cfg.t, delta)?;
    let nontrivial = emb.retained().modes.iter().filter(|m| !(m.freq == 0 && m.n == 0)).count();
    let mut warnings = Vec::new();
    if nontrivial == 0 {
        warnings.push(format!(
            "delta = {delta} retains only the stationary mode; every distance is zero. Lower eps or pass an explicit delta."
        ));
    }

    if stage.includes(Stage::Scree) {
        let p = out.path("scree.csv");
        io::write_scree(&sc, &p)?;
    }

    let mut tables: Vec<EmbeddingTable> = Vec::new();
    if stage.includes(Stage::Embed) {
        for &k in &cfg.kinds {
            let table = emb.table(k)?;
            let p = out.with_sidecar(&format!("embedding_{}.csv", k.name()));
            io::write_embedding(&table, &p)?;
            tables.push(table);
        }
        if let Some(t2) = cfg.t2 {
            let rows = (0..spec.n()).map(|i| emb.mixed_invariant(i, cfg.t, t2)).collect::<Result<Vec<_>>>()?;
            let p = out.with_sidecar("embedding_mixed-invariant.csv");
            io::write_embedding(&EmbeddingTable::from_rows(rows)?, &p)?;
        }
    }

    if stage.includes(Stage::Dist) {
        for &k in &cfg.distances {
            let m = pairwise_matrix_with(&emb, k, Variant::Walk, ALIGN_GRID)?;
            let p = out.path(&format!("distances_{}.csv", k.name()));
            io::write_distance_matrix(&m, &p)?;
        }
        let sources = heat_sources(cfg, &prep.cloud)?;
        for (kind, ek) in [(DistanceKind::EquivariantWalk, EmbeddingKind::EquivariantWalk), (DistanceKind::InvariantWalk, EmbeddingKind::InvariantWalk)] {
            let owned;
            let table = match tables.iter().find(|t| t.kind == ek) {
                Some(t) => t,
                None => {
                    owned = emb.table(ek)?;
                    &owned
                }
            };
            for &s in &sources {
                let d: Vec<f64> = (0..table.len()).map(|j| table.distance(s, j)).collect();
                let p = out.path(&format!("heatmap_{}_{s}.csv", kind.name()));
                io::write_heatmap(&prep.cloud, &d, &p)?;
            }
        }
    }

    if stage.includes(Stage::Align) {
        let m = if cfg.distances.contains(&DistanceKind::Aligned) {
            pairwise_matrix_with(&emb, DistanceKind::Aligned, Variant::Walk, ALIGN_GRID)?
        } else {
            aligned_rows(&emb, &heat_sources(cfg, &prep.cloud)?)?
        };
        let p = out.path("aligned.csv");
        io::write_aligned(&m, &p)?;
    }

    let mut resolved_cfg = cfg.clone();
    resolved_cfg.eps = Setting::Value(prep.eps);
    resolved_cfg.l_max = Some(prep.l_max);
    resolved_cfg.delta = Setting::Value(delta);
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: resolved_cfg,
        resolved: Resolved {
            n: prep.cloud.len(),
            eps: prep.eps,
            l_max: prep.l_max,
            delta,
            retained_modes: emb.retained().dimension(),
            retained_nontrivial: nontrivial,
            cache_key: prep.cache_key.clone(),
        },
        outputs: {
            let mut o = out.names();
            o.push("manifest.json".into());
            o
        },
        warnings,
    };
    let p = out.path("manifest.json");
    io::write_json(&p, &manifest)?;
    Ok(manifest)
}

fn heat_sources(cfg: &RunConfig, cloud: &PointCloud) -> Result<Vec<usize>> {
    let mut s = cfg.heat_sources.clone();
    if s.is_empty() {
        for c in &cloud.meta.injected {
            s.push(c.source);
            s.push(c.index);
        }
    }
    if s.is_empty() {
        s.push(0);
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= cloud.len()) {
        return Err(config_err("heat_sources", format!("index {bad} out of range for {} points", cloud.len())));
    }
    s.dedup();
    Ok(s)
}

/// Aligned distances and angles from each source to every point; other entries are zero.
fn aligned_rows(emb: &Embedder, sources: &[usize]) -> Result<DistanceMatrix> {
    let n = emb.spectral().n();
    let mut values = vec![0.0; n * n];
    let mut angles = vec![0.0; n * n];
    for &s in sources {
        for j in 0..n {
            if j == s {
                continue;
            }
            let (v, g) = AlignmentObjective::new(emb, s, j, Variant::Walk)?.minimize(ALIGN_GRID)?;
            values[s * n + j] = v;
            values[j * n + s] = v;
            angles[s * n + j] = g.angle();
            angles[j * n + s] = crate::group::canonical_angle(-g.angle());
        }
    }
    Ok(DistanceMatrix { n, values, angles: Some(angles) })
}

/// One identity checked by [`run_verify`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, expected: f64, actual: f64, tol: f64) -> Self {
        let abs_err = (expected - actual).abs();
        let rel_err = abs_err / expected.abs().max(f64::MIN_POSITIVE);
        Check { name: name.into(), expected, actual, abs_err, rel_err, tol, pass: abs_err <= tol }
    }

    /// Passes when `actual <= bound`.
    pub fn at_most(name: impl Into<String>, bound: f64, actual: f64) -> Self {
        let abs_err = (actual - bound).max(0.0);
        Check { name: name.into(), expected: bound, actual, abs_err, rel_err: abs_err / bound.abs().max(f64::MIN_POSITIVE), tol: 0.0, pass: actual <= bound }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub dataset: DatasetSpec,
    pub group: Group,
    pub nodes: usize,
    pub eps: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub dataset: DatasetSpec,
    pub group: Group,
    pub nodes: usize,
    pub eps: f64,
    pub times: Vec<u32>,
    /// Tolerance of the exact identities on cyclic groups.
    pub tol: f64,
    /// Scale one node degree before building `P`, to exercise the stochasticity check.
    #[serde(default)]
    pub corrupt_degrees: bool,
    /// For SO(2): also compare distances on `nodes` and `2 * nodes` grids.
    #[serde(default)]
    pub convergence: bool,
    #[serde(default)]
    pub mc_samples: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            dataset: DatasetSpec::torus(3, 0),
            group: Group::Cyclic { order: 4 },
            nodes: 4,
            eps: 1.0,
            times: vec![1, 2, 3],
            tol: 1e-8,
            corrupt_degrees: false,
            convergence: false,
            mc_samples: 0,
            seed: 0,
        }
    }
}

/// Runs the dense-oracle identity suite.
pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    use crate::dist::{equivariant_distance_with, hs_inner};
    use crate::embed::{first_moment, Retained};
    use crate::oracle::*;
    use crate::spectral::{eigenfunction_eval, spectral_data};

    validate_dataset(&cfg.dataset)?;
    if cfg.times.is_empty() || cfg.times.contains(&0) {
        return Err(config_err("times", "need diffusion times of at least 1"));
    }
    let cloud = generate(&cfg.dataset)?;
    let grid = OrbitGrid::for_group(cfg.group, cfg.nodes).map_err(|e| config_err("nodes", e.to_string()))?;
    let exact = matches!(grid.group, Group::Cyclic { .. });
    let tol = if exact { cfg.tol } else { cfg.tol.max(1e-3) };
    let mut dense = build_dense(&cloud, cfg.eps, grid)?;
    if cfg.corrupt_degrees {
        let mut d = dense.degrees.clone();
        d[0] *= 1.5;
        dense = dense.with_degrees(d);
    }
    let spec = spectral_data(&fourier_blocks(&cloud, cfg.eps, grid.max_frequency(), grid)?)?;
    let n = cloud.len();
    let mut checks = Vec::new();

    checks.push(Check::new("stochasticity P", 0.0, dense.stochasticity_error(), 1e-12));
    let tmax = *cfg.times.iter().max().expect("non-empty");
    checks.push(Check::new(format!("stochasticity P^{tmax}"), 0.0, crate::oracle::row_sum_error(&dense.power(tmax)), 1e-12));
    checks.push(Check::at_most("P entries positive (-min)", 0.0, -dense.p.iter().copied().fold(f64::INFINITY, f64::min)));
    if exact {
        let a = dense.eigenvalues();
        let b = spec.all_eigenvalues();
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        checks.push(Check::new("spectral union", 0.0, worst, 1e-9_f64.max(tol * 0.1)));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).filter(|(i, j)| i != j || n == 1).take(6).collect();
    for &t in &cfg.times {
        let emb = Embedder::with_retained(&spec, Retained::full(&spec, t)?);
        for &(i, j) in &pairs {
            let (a, b) = (1 % grid.nodes, grid.nodes / 2);
            for v in [Variant::Walk, Variant::Sym] {
                let d = dense_diffusion_distance(&dense, (i, a), (j, b), t, v)?;
                let s = equivariant_distance_with(&emb, (i, &grid.element(a)), (j, &grid.element(b)), v)?.value;
                checks.push(Check::new(format!("diffusion distance {v:?} t={t} ({i},{a})-({j},{b})"), d, s, tol));
            }
            if exact {
                let w = dense_cross_correlation(&dense, i, j, t, true)?;
                let e = emb.invariant(i, Variant::Walk)?.distance(&emb.invariant(j, Variant::Walk)?)?;
                checks.push(Check::new(format!("cross-correlation walk t={t} {i}-{j}"), w.distance(), e, tol));
                checks.push(Check::new(format!("tensor mass t={t} {i}"), 1.0, w.mass_i, 1e-10));
                let u = dense_cross_correlation(&dense, i, j, t, false)?;
                let e = emb.invariant(i, Variant::Sym)?.distance(&emb.invariant(j, Variant::Sym)?)?;
                checks.push(Check::new(format!("cross-correlation sym t={t} {i}-{j}"), u.distance(), e, tol));
                let mx = dense_cross_correlation_mixed(&dense, i, j, t, t + 1)?;
                let e = emb.mixed_invariant(i, t, t + 1)?.distance(&emb.mixed_invariant(j, t, t + 1)?)?;
                checks.push(Check::new(format!("mixed cross-correlation t={t},{} {i}-{j}", t + 1), mx.distance(), e, tol));
                let hs = dense_hs_norm_sq(&dense, i, j, 2 * t)?;
                checks.push(Check::new(format!("HS norm of S^{} {i}-{j}", 2 * t), hs, hs_inner(&spec, i, j, t)?, tol));
            }
        }
        if exact {
            let fm = first_moment(&spec, 0, t)?;
            let dm = dense_first_moment(&dense, 0, t)?;
            let worst = fm.iter().zip(&dm).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            checks.push(Check::new(format!("first moment t={t}"), 0.0, worst, tol));
        }
    }
    if exact {
        let freq = (grid.max_frequency() as i64).min(1);
        let f: Vec<_> = (0..n)
            .flat_map(|i| (0..grid.nodes).map(move |a| (i, a)))
            .map(|(i, a)| eigenfunction_eval(&spec, freq, 0, i, &grid.element(a)))
            .collect::<Result<_>>()?;
        let pf = dense.apply(&f);
        let lam = spec.eigenvalue(freq as usize, 0);
        let worst = pf.iter().zip(&f).map(|(x, y)| (x - y * lam).norm()).fold(0.0, f64::max);
        checks.push(Check::new(format!("eigenfunction residual l={freq}"), 0.0, worst, tol));
    }
    if cfg.mc_samples > 0 {
        let t = cfg.times[0];
        let h = mc_displacement(&dense, 0, t, cfg.mc_samples, cfg.seed)?;
        let tv = h.tv_distance(&exact_displacement(&dense, 0, t)?);
        checks.push(Check::at_most(format!("Monte-Carlo TV t={t} samples={}", cfg.mc_samples), 0.01, tv));
    }
    if cfg.convergence && !exact {
        let errs = convergence_errors(&cloud, cfg.eps, cfg.nodes, cfg.times[0])?;
        checks.push(Check::at_most(format!("SO(2) error M={}", cfg.nodes), 1e-3, errs.0));
        checks.push(Check::at_most(format!("SO(2) error M={} halves", 2 * cfg.nodes), errs.0 / 2.0, errs.1));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport { dataset: cfg.dataset.clone(), group: cfg.group, nodes: cfg.nodes, eps: cfg.eps, checks, pass })
}

/// Grid size of the reference spectrum in SO(2) convergence checks.
pub const REFERENCE_NODES: usize = 1024;

/// Largest error of the dense walk distances on `m` and `2m` node grids
/// against the spectral distances at [`REFERENCE_NODES`], over grid pairs
/// shared by both grids.
pub fn convergence_errors(cloud: &PointCloud, eps: f64, m: usize, t: u32) -> Result<(f64, f64)> {
    use crate::dist::equivariant_distance_with;
    use crate::embed::Retained;
    use crate::oracle::{build_dense, dense_diffusion_distance};

    let fine = OrbitGrid::so2(REFERENCE_NODES)?;
    let l = effective_bandlimit(&fourier_blocks(cloud, eps, fine.max_frequency(), fine)?, 1e-15);
    let spec = spectral_data_owned(fourier_blocks(cloud, eps, l, fine)?)?;
    let emb = Embedder::with_retained(&spec, Retained::full(&spec, t)?);
    let mut out = [0.0f64; 2];
    for (slot, nodes) in [m, 2 * m].into_iter().enumerate() {
        let grid = OrbitGrid::so2(nodes)?;
        let dense = build_dense(cloud, eps, grid)?;
        let scale = nodes / m;
        for i in 0..cloud.len() {
            for j in 0..cloud.len() {
                let b = (m / 3) * scale;
                let d = dense_diffusion_distance(&dense, (i, 0), (j, b), t, Variant::Walk)?;
                let s = equivariant_distance_with(&emb, (i, &grid.element(0)), (j, &grid.element(b)), Variant::Walk)?.value;
                out[slot] = out[slot].max((d - s).abs());
            }
        }
    }
    Ok((out[0], out[1]))
}
