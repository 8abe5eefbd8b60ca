use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use equimaps::data::{generate, CopyRequest, DatasetSpec, Shape, TorusSampling};
use equimaps::dist::DistanceKind;
use equimaps::embed::EmbeddingKind;
use equimaps::group::{canonical_angle, Group};
use equimaps::io;
use equimaps::pipeline::{rerun_manifest, run_stage, run_verify, RunConfig, Setting, Stage, VerifyConfig};
use equimaps::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_GUARD: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "equimaps", version, about = "Rotation-equivariant and invariant diffusion maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a synthetic point cloud.
    Gen {
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV; a JSON sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage and write a run directory with a manifest.
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        /// Rerun the configuration recorded in a manifest.
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
    },
    /// Check the spectral path against the dense oracle.
    Verify(VerifyArgs),
    /// Write the scree table only.
    Scree(RunArgs),
    /// Write embedding tables only.
    Embed(RunArgs),
    /// Write distance matrices and heat maps only.
    Dist(RunArgs),
    /// Write aligned distances and angles only.
    Align(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Torus,
    Sphere,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    So2,
    Cyclic,
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, value_enum, default_value = "torus")]
    shape: ShapeArg,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Torus radii.
    #[arg(long, default_value_t = 2.0)]
    major: f64,
    #[arg(long, default_value_t = 1.0)]
    minor: f64,
    /// Sample the torus uniformly in area instead of in its angles.
    #[arg(long)]
    area_sampling: bool,
    /// Append a rotated copy, `SOURCE:ANGLE` with the angle in radians or suffixed `deg`.
    #[arg(long, value_parser = parse_copy)]
    copy: Vec<CopyRequest>,
}

impl DataArgs {
    fn spec(&self) -> DatasetSpec {
        let shape = match self.shape {
            ShapeArg::Torus => Shape::Torus {
                major: self.major,
                minor: self.minor,
                sampling: if self.area_sampling { TorusSampling::Area } else { TorusSampling::Parameter },
            },
            ShapeArg::Sphere => Shape::Sphere,
        };
        DatasetSpec { shape, n: self.n, seed: self.seed, injected: self.copy.clone() }
    }
}

fn parse_angle(s: &str) -> Result<f64, String> {
    let (num, scale) = match s.strip_suffix("deg") {
        Some(d) => (d, std::f64::consts::PI / 180.0),
        None => (s, 1.0),
    };
    num.trim().parse::<f64>().map(|v| v * scale).map_err(|e| format!("bad angle {s:?}: {e}"))
}

fn parse_copy(s: &str) -> Result<CopyRequest, String> {
    let (src, angle) = s.split_once(':').ok_or_else(|| format!("expected SOURCE:ANGLE, got {s:?}"))?;
    let source = src.parse().map_err(|e| format!("bad source index {src:?}: {e}"))?;
    Ok(CopyRequest { source, angle: canonical_angle(parse_angle(angle)?) })
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    match s.parse::<f64>() {
        Ok(v) => Ok(Setting::Value(v)),
        Err(_) => Ok(Setting::Rule(s.to_string())),
    }
}

fn parse_embedding(s: &str) -> Result<EmbeddingKind, String> {
    EmbeddingKind::parse(s).ok_or_else(|| format!("unknown embedding kind {s:?}; one of {}", EmbeddingKind::ALL.map(|k| k.name()).join(", ")))
}

fn parse_distance(s: &str) -> Result<DistanceKind, String> {
    DistanceKind::parse(s).ok_or_else(|| format!("unknown distance kind {s:?}; one of {}", DistanceKind::ALL.map(|k| k.name()).join(", ")))
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Point-cloud CSV instead of a synthetic data set.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    group: Option<GroupArg>,
    /// Grid size; the order for cyclic groups.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    l_max: Option<usize>,
    #[arg(long)]
    bandlimit_tol: Option<f64>,
    /// Bandwidth or `median`.
    #[arg(long, value_parser = parse_setting)]
    eps: Option<Setting>,
    #[arg(long)]
    t: Option<u32>,
    #[arg(long)]
    t2: Option<u32>,
    /// Truncation threshold or `elbow`.
    #[arg(long, value_parser = parse_setting)]
    delta: Option<Setting>,
    #[arg(long, value_delimiter = ',', value_parser = parse_embedding)]
    kinds: Option<Vec<EmbeddingKind>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_distance)]
    distances: Option<Vec<DistanceKind>>,
    #[arg(long, value_delimiter = ',')]
    heat_sources: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_cache_blocks: bool,
}

impl RunArgs {
    fn config(&self) -> equimaps::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => {
                let mut c = RunConfig::new(self.data.spec(), self.out.clone().unwrap_or_else(|| "run".into()));
                c.seed = self.data.seed;
                c
            }
        };
        if let Some(p) = &self.input {
            c.input = Some(p.clone());
            c.dataset = None;
        }
        if let Some(g) = self.group {
            c.group = match g {
                GroupArg::So2 => Group::So2,
                GroupArg::Cyclic => Group::Cyclic { order: self.nodes.unwrap_or(c.nodes) },
            };
        }
        if let Some(v) = self.nodes {
            c.nodes = v;
        }
        if self.l_max.is_some() {
            c.l_max = self.l_max;
        }
        if let Some(v) = self.bandlimit_tol {
            c.bandlimit_tol = v;
        }
        if let Some(v) = &self.eps {
            c.eps = v.clone();
        }
        if let Some(v) = self.t {
            c.t = v;
        }
        if self.t2.is_some() {
            c.t2 = self.t2;
        }
        if let Some(v) = &self.delta {
            c.delta = v.clone();
        }
        if let Some(v) = &self.kinds {
            c.kinds = v.clone();
        }
        if let Some(v) = &self.distances {
            c.distances = v.clone();
        }
        if let Some(v) = &self.heat_sources {
            c.heat_sources = v.clone();
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if self.no_cache_blocks {
            c.cache_blocks = false;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "torus")]
    shape: ShapeArg,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_copy)]
    copy: Vec<CopyRequest>,
    #[arg(long, value_enum, default_value = "cyclic")]
    group: GroupArg,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    times: Vec<u32>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Perturb one degree to check that the report catches it.
    #[arg(long)]
    corrupt_degrees: bool,
    /// Compare SO(2) grids of `nodes` and `2 * nodes` points.
    #[arg(long)]
    convergence: bool,
    #[arg(long, default_value_t = 0)]
    mc_samples: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidArgument { .. } | Error::QuadratureTooCoarse { .. } => EXIT_CONFIG,
        Error::SizeGuard { .. } => EXIT_GUARD,
        _ => EXIT_OTHER,
    }
}

fn run(cli: Cli) -> equimaps::Result<u8> {
    match cli.cmd {
        Cmd::Gen { data, out } => {
            let cloud = generate(&data.spec())?;
            io::write_cloud(&cloud, &out)?;
            eprintln!("wrote {} points to {}", cloud.len(), out.display());
        }
        Cmd::Pipeline { run, manifest } => {
            let m = match manifest {
                Some(p) => rerun_manifest(&p, run.out.as_deref())?,
                None => run_stage(&run.config()?, Stage::All)?,
            };
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "eps = {}, l_max = {}, delta = {}, {} retained modes; outputs in {}",
                m.resolved.eps,
                m.resolved.l_max,
                m.resolved.delta,
                m.resolved.retained_modes,
                m.config.out.display()
            );
        }
        Cmd::Verify(v) => {
            let group = match v.group {
                GroupArg::So2 => Group::So2,
                GroupArg::Cyclic => Group::Cyclic { order: v.nodes },
            };
            let data = DataArgs { shape: v.shape, n: v.n, seed: v.seed, major: 2.0, minor: 1.0, area_sampling: false, copy: v.copy.clone() };
            let dataset = data.spec();
            let cfg = VerifyConfig {
                dataset,
                group,
                nodes: v.nodes,
                eps: v.eps,
                times: v.times,
                tol: v.tol,
                corrupt_degrees: v.corrupt_degrees,
                convergence: v.convergence,
                mc_samples: v.mc_samples,
                seed: v.seed,
            };
            let report = run_verify(&cfg)?;
            match &v.report {
                Some(p) => io::write_json(p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!("FAIL {}: expected {}, got {} (tol {})", c.name, c.expected, c.actual, c.tol);
            }
            if !report.pass {
                return Ok(EXIT_VERIFY);
            }
        }
        Cmd::Scree(r) => stage(&r, Stage::Scree)?,
        Cmd::Embed(r) => stage(&r, Stage::Embed)?,
        Cmd::Dist(r) => stage(&r, Stage::Dist)?,
        Cmd::Align(r) => stage(&r, Stage::Align)?,
    }
    Ok(0)
}

fn stage(r: &RunArgs, s: Stage) -> equimaps::Result<()> {
    let m = run_stage(&r.config()?, s)?;
    eprintln!("wrote {} to {}", m.outputs.join(", "), m.config.out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> u8 {
        let cli = Cli::try_parse_from(std::iter::once("equimaps").chain(args.iter().copied())).unwrap();
        match run(cli) {
            Ok(c) => c,
            Err(e) => exit_code(&e),
        }
    }

    #[test]
    fn gen_writes_cloud_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("s.csv");
        assert_eq!(code(&["gen", "--shape", "sphere", "--n", "10", "--copy", "2:60deg", "--out", out.to_str().unwrap()]), 0);
        let c = io::read_cloud(&out).unwrap();
        assert_eq!(c.len(), 11);
        assert!((c.meta.injected[0].angle - PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pipeline_and_manifest_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let args = ["pipeline", "--n", "30", "--copy", "4:180deg", "--nodes", "16", "--eps", "1", "--t", "2", "--out", a.to_str().unwrap()];
        assert_eq!(code(&args), 0);
        let b = dir.path().join("b");
        let m = a.join("manifest.json");
        assert_eq!(code(&["pipeline", "--manifest", m.to_str().unwrap(), "--out", b.to_str().unwrap()]), 0);
        for f in ["scree.csv", "heatmap_equivariant-walk_30.csv", "aligned.csv"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
        let s = dir.path().join("scree-only");
        assert_eq!(code(&["scree", "--n", "20", "--nodes", "16", "--eps", "1", "--out", s.to_str().unwrap()]), 0);
        assert!(s.join("scree.csv").exists() && !s.join("aligned.csv").exists());
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x");
        assert_eq!(code(&["pipeline", "--n", "10", "--delta", "sometimes", "--out", out.to_str().unwrap()]), EXIT_CONFIG);
        assert_eq!(code(&["pipeline", "--n", "10", "--nodes", "16", "--l-max", "9", "--out", out.to_str().unwrap()]), EXIT_CONFIG);
        assert_eq!(code(&["verify"]), 0);
        assert_eq!(code(&["verify", "--corrupt-degrees"]), EXIT_VERIFY);
        assert_eq!(code(&["verify", "--group", "so2", "--nodes", "256", "--n", "100"]), EXIT_GUARD);
        assert!(!out.exists());
    }

    use std::f64::consts::PI;
}
