//! Synthetic point clouds on rotation-invariant surfaces.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::{act, canonical_angle, ActionSpec, GroupElement};
use crate::kernel::{CloudMeta, InjectedCopy, PointCloud};

/// How torus parameters are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorusSampling {
    /// Both angles uniform on `[0, 2π)`.
    #[default]
    Parameter,
    /// Uniform with respect to surface area.
    Area,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Torus {
        major: f64,
        minor: f64,
        #[serde(default)]
        sampling: TorusSampling,
    },
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopyRequest {
    pub source: usize,
    /// Rotation angle in radians.
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub shape: Shape,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub injected: Vec<CopyRequest>,
}

impl DatasetSpec {
    pub fn torus(n: usize, seed: u64) -> Self {
        DatasetSpec {
            shape: Shape::Torus { major: 2.0, minor: 1.0, sampling: TorusSampling::Parameter },
            n,
            seed,
            injected: Vec::new(),
        }
    }

    pub fn sphere(n: usize, seed: u64) -> Self {
        DatasetSpec { shape: Shape::Sphere, n, seed, injected: Vec::new() }
    }

    pub fn with_copy(mut self, source: usize, angle: f64) -> Self {
        self.injected.push(CopyRequest { source, angle: canonical_angle(angle) });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "need at least one point"));
        }
        if let Shape::Torus { major, minor, .. } = self.shape {
            if !(major > minor && minor > 0.0 && major.is_finite()) {
                return Err(invalid("shape", format!("torus needs R > r > 0, got R={major}, r={minor}")));
            }
        }
        let mut len = self.n;
        for c in &self.injected {
            if c.source >= len {
                return Err(Error::IndexOutOfRange { what: "cloud", index: c.source, len });
            }
            len += 1;
        }
        Ok(())
    }
}

/// Builds the cloud described by `spec`, including its injected copies.
pub fn generate(spec: &DatasetSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut cloud = match spec.shape {
        Shape::Torus { major, minor, sampling } => sample_torus_with(spec.n, major, minor, spec.seed, sampling)?,
        Shape::Sphere => sample_sphere(spec.n, spec.seed)?,
    };
    for c in &spec.injected {
        cloud = inject_copy(&cloud, c.source, c.angle)?;
    }
    cloud.meta.dataset = Some(spec.clone());
    Ok(cloud)
}

/// Torus point at azimuth `u` (about the z-axis) and tube angle `v`.
pub fn torus_point(major: f64, minor: f64, u: f64, v: f64) -> [f64; 3] {
    let rho = major + minor * v.cos();
    [rho * u.cos(), rho * u.sin(), minor * v.sin()]
}

pub fn sample_torus(n: usize, major: f64, minor: f64, seed: u64) -> Result<PointCloud> {
    sample_torus_with(n, major, minor, seed, TorusSampling::Parameter)
}

pub fn sample_torus_with(n: usize, major: f64, minor: f64, seed: u64, sampling: TorusSampling) -> Result<PointCloud> {
    if n == 0 {
        return Err(invalid("n", "need at least one point"));
    }
    if !(major > minor && minor > 0.0 && major.is_finite()) {
        return Err(invalid("shape", format!("torus needs R > r > 0, got R={major}, r={minor}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let u = rng.random_range(0.0..TAU);
        let v = loop {
            let v = rng.random_range(0.0..TAU);
            match sampling {
                TorusSampling::Parameter => break v,
                TorusSampling::Area => {
                    if rng.random::<f64>() * (major + minor) <= major + minor * v.cos() {
                        break v;
                    }
                }
            }
        };
        coords.extend(torus_point(major, minor, u, v));
    }
    let meta = CloudMeta { source: "torus".into(), seed: Some(seed), ..Default::default() };
    Ok(PointCloud::from_flat(3, coords, ActionSpec::default())?.with_meta(meta))
}

/// Uniform points on the unit sphere from normalized Gaussian vectors.
pub fn sample_sphere(n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(invalid("n", "need at least one point"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(3 * n);
    while coords.len() < 3 * n {
        let g: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if norm > 1e-12 {
            coords.extend(g.iter().map(|c| c / norm));
        }
    }
    let meta = CloudMeta { source: "sphere".into(), seed: Some(seed), ..Default::default() };
    Ok(PointCloud::from_flat(3, coords, ActionSpec::default())?.with_meta(meta))
}

/// Appends `act(β, x_i)` and records it in the copy registry.
pub fn inject_copy(cloud: &PointCloud, i: usize, beta: f64) -> Result<PointCloud> {
    if i >= cloud.len() {
        return Err(Error::IndexOutOfRange { what: "cloud", index: i, len: cloud.len() });
    }
    let angle = canonical_angle(beta);
    let y = act(&GroupElement::so2(angle), cloud.point(i), &cloud.action)?;
    let mut out = cloud.clone();
    out.push(&y);
    out.meta.injected.push(InjectedCopy { source: i, angle, index: cloud.len() });
    Ok(out)
}
