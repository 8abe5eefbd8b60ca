//! Compact groups acting on point clouds by planar rotation.
//!
//! Two instances are implemented: the circle group SO(2) and the finite
//! cyclic group C_M, viewed as the subgroup of SO(2) generated by a rotation
//! of 2π/M. Both are abelian, so every irreducible unitary representation is
//! a character `g -> e^{iℓθ}`; the interface still hands out matrices and a
//! dimension so that non-abelian groups fit behind the same trait.

use std::f64::consts::TAU;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Group instance tag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Group {
    #[default]
    So2,
    Cyclic { order: usize },
}

/// A point of a group instance.
///
/// SO(2) angles are kept in `[0, 2π)`; cyclic indices in `0..order`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupElement {
    So2 { angle: f64 },
    Cyclic { order: usize, index: usize },
}

/// Wraps an angle into `[0, 2π)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Signed distance between two angles, in `(-π, π]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = canonical_angle(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

impl GroupElement {
    pub fn so2(angle: f64) -> Self {
        GroupElement::So2 { angle: canonical_angle(angle) }
    }

    pub fn cyclic(order: usize, index: i64) -> Result<Self> {
        if order == 0 {
            return Err(invalid("order", "cyclic group order must be at least 1"));
        }
        let index = index.rem_euclid(order as i64) as usize;
        Ok(GroupElement::Cyclic { order, index })
    }

    pub fn group(&self) -> Group {
        match *self {
            GroupElement::So2 { .. } => Group::So2,
            GroupElement::Cyclic { order, .. } => Group::Cyclic { order },
        }
    }

    /// Rotation angle by which this element acts on the plane.
    pub fn angle(&self) -> f64 {
        match *self {
            GroupElement::So2 { angle } => angle,
            GroupElement::Cyclic { order, index } => TAU * index as f64 / order as f64,
        }
    }
}

/// Frequency label of an irreducible unitary representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IrrepIndex {
    pub group: Group,
    pub freq: i64,
}

impl IrrepIndex {
    /// Cyclic frequencies are reduced into `0..order`.
    pub fn new(group: Group, freq: i64) -> Result<Self> {
        let freq = match group {
            Group::So2 => freq,
            Group::Cyclic { order } => {
                if order == 0 {
                    return Err(invalid("order", "cyclic group order must be at least 1"));
                }
                freq.rem_euclid(order as i64)
            }
        };
        Ok(IrrepIndex { group, freq })
    }

    pub fn dim(&self) -> usize {
        1
    }
}

/// Nodes and nonnegative weights integrating against the normalized Haar measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<GroupElement>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(&GroupElement) -> C64>(&self, f: F) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(g, &w)| f(g) * w)
            .sum()
    }
}

/// Interface shared by compact groups with a finite quadrature.
pub trait CompactGroup {
    type Element: Copy;

    fn identity(&self) -> Self::Element;
    fn compose(&self, g: &Self::Element, h: &Self::Element) -> Result<Self::Element>;
    fn inverse(&self, g: &Self::Element) -> Result<Self::Element>;
    fn irrep_dim(&self, irrep: &IrrepIndex) -> usize;
    /// Matrix of the representation `irrep` at `g`, of size `dim x dim`.
    fn iur(&self, irrep: &IrrepIndex, g: &Self::Element) -> Result<Mat<C64>>;
    fn haar_quadrature(&self, nodes: usize) -> Result<QuadratureRule>;
}

impl Group {
    fn check(&self, g: &GroupElement) -> Result<()> {
        if g.group() != *self {
            return Err(Error::GroupMismatch { expected: *self, found: g.group() });
        }
        Ok(())
    }

    /// Scalar character `U^ℓ(g)` of the abelian instances.
    pub fn character(&self, irrep: &IrrepIndex, g: &GroupElement) -> Result<C64> {
        if irrep.group != *self {
            return Err(Error::GroupMismatch { expected: *self, found: irrep.group });
        }
        self.check(g)?;
        let phase = match *g {
            GroupElement::So2 { angle } => irrep.freq as f64 * angle,
            GroupElement::Cyclic { order, index } => {
                let k = (irrep.freq.rem_euclid(order as i64) as u128 * index as u128) % order as u128;
                TAU * k as f64 / order as f64
            }
        };
        Ok(C64::from_polar(1.0, phase))
    }
}

impl CompactGroup for Group {
    type Element = GroupElement;

    fn identity(&self) -> GroupElement {
        match *self {
            Group::So2 => GroupElement::So2 { angle: 0.0 },
            Group::Cyclic { order } => GroupElement::Cyclic { order, index: 0 },
        }
    }

    fn compose(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(match (*g, *h) {
            (GroupElement::So2 { angle: a }, GroupElement::So2 { angle: b }) => GroupElement::so2(a + b),
            (GroupElement::Cyclic { order, index: a }, GroupElement::Cyclic { index: b, .. }) => {
                GroupElement::Cyclic { order, index: (a + b) % order }
            }
            _ => unreachable!("instances checked above"),
        })
    }

    fn inverse(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(match *g {
            GroupElement::So2 { angle } => GroupElement::so2(-angle),
            GroupElement::Cyclic { order, index } => GroupElement::Cyclic { order, index: (order - index) % order },
        })
    }

    fn irrep_dim(&self, irrep: &IrrepIndex) -> usize {
        irrep.dim()
    }

    fn iur(&self, irrep: &IrrepIndex, g: &GroupElement) -> Result<Mat<C64>> {
        let c = self.character(irrep, g)?;
        Ok(Mat::from_fn(1, 1, |_, _| c))
    }

    fn haar_quadrature(&self, nodes: usize) -> Result<QuadratureRule> {
        if nodes == 0 {
            return Err(invalid("nodes", "quadrature needs at least one node"));
        }
        let nodes_vec = match *self {
            Group::So2 => (0..nodes).map(|k| GroupElement::so2(TAU * k as f64 / nodes as f64)).collect(),
            Group::Cyclic { order } => {
                if nodes != order {
                    return Err(invalid("nodes", format!("C_{order} quadrature uses its {order} elements, got {nodes}")));
                }
                (0..order).map(|index| GroupElement::Cyclic { order, index }).collect()
            }
        };
        Ok(QuadratureRule { nodes: nodes_vec, weights: vec![1.0 / nodes as f64; nodes] })
    }
}

pub fn identity(group: Group) -> GroupElement {
    group.identity()
}

pub fn compose(g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
    g.group().compose(g, h)
}

pub fn inverse(g: &GroupElement) -> Result<GroupElement> {
    g.group().inverse(g)
}

pub fn iur_eval(irrep: &IrrepIndex, g: &GroupElement) -> Result<Mat<C64>> {
    irrep.group.iur(irrep, g)
}

pub fn haar_quadrature(group: Group, nodes: usize) -> Result<QuadratureRule> {
    group.haar_quadrature(nodes)
}

/// The coordinate pair rotated by the group; other coordinates are fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub plane: [usize; 2],
}

impl Default for ActionSpec {
    fn default() -> Self {
        ActionSpec { plane: [0, 1] }
    }
}

impl ActionSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let [a, b] = self.plane;
        if a >= dim || b >= dim || a == b {
            return Err(invalid("action", format!("plane {:?} is not a valid coordinate pair in dimension {dim}", self.plane)));
        }
        Ok(())
    }

    /// Rotates `x` by the angle with the given cosine and sine, writing into `out`.
    #[inline]
    pub fn rotate_into(&self, cos: f64, sin: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        let [a, b] = self.plane;
        out[a] = cos * x[a] - sin * x[b];
        out[b] = sin * x[a] + cos * x[b];
    }

    pub fn radius(&self, x: &[f64]) -> f64 {
        x[self.plane[0]].hypot(x[self.plane[1]])
    }
}

/// Applies `g` to an ambient point.
pub fn act(g: &GroupElement, x: &[f64], spec: &ActionSpec) -> Result<Vec<f64>> {
    spec.validate(x.len())?;
    let (sin, cos) = g.angle().sin_cos();
    let mut out = vec![0.0; x.len()];
    spec.rotate_into(cos, sin, x, &mut out);
    Ok(out)
}

/// Uniform grid of `nodes` rotations used to discretize the orbit of every point.
///
/// For SO(2) this is the trapezoidal rule; for C_M the grid is the group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitGrid {
    pub group: Group,
    pub nodes: usize,
}

impl OrbitGrid {
    pub fn so2(nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(invalid("nodes", "an SO(2) grid needs at least two nodes"));
        }
        Ok(OrbitGrid { group: Group::So2, nodes })
    }

    pub fn cyclic(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(invalid("order", "cyclic group order must be at least 1"));
        }
        Ok(OrbitGrid { group: Group::Cyclic { order }, nodes: order })
    }

    pub fn for_group(group: Group, nodes: usize) -> Result<Self> {
        match group {
            Group::So2 => Self::so2(nodes),
            Group::Cyclic { order } => {
                if nodes != order {
                    return Err(invalid("nodes", format!("C_{order} grid must have {order} nodes, got {nodes}")));
                }
                Self::cyclic(order)
            }
        }
    }

    pub fn angle(&self, k: usize) -> f64 {
        TAU * (k % self.nodes) as f64 / self.nodes as f64
    }

    pub fn element(&self, k: usize) -> GroupElement {
        match self.group {
            Group::So2 => GroupElement::So2 { angle: self.angle(k) },
            Group::Cyclic { order } => GroupElement::Cyclic { order, index: k % order },
        }
    }

    /// Grid index of `g` when it sits on a node.
    pub fn node_of(&self, g: &GroupElement) -> Option<usize> {
        match (*g, self.group) {
            (GroupElement::Cyclic { order, index }, Group::Cyclic { order: o }) if order == o => Some(index),
            (GroupElement::So2 { angle }, Group::So2) => {
                let x = angle * self.nodes as f64 / TAU;
                let k = x.round();
                ((x - k).abs() < 1e-9).then_some(k as usize % self.nodes)
            }
            _ => None,
        }
    }

    /// `(cos θ_k, sin θ_k)` for every node.
    pub fn trig_table(&self) -> Vec<(f64, f64)> {
        (0..self.nodes)
            .map(|k| {
                let (s, c) = self.angle(k).sin_cos();
                (c, s)
            })
            .collect()
    }

    pub fn quadrature(&self) -> QuadratureRule {
        let nodes = (0..self.nodes).map(|k| self.element(k)).collect();
        QuadratureRule { nodes, weights: vec![1.0 / self.nodes as f64; self.nodes] }
    }

    /// Largest nonnegative frequency the grid resolves.
    ///
    /// SO(2) keeps the anti-aliasing margin `M >= 2L + 2`; C_M resolves
    /// every frequency up to `floor(M/2)`.
    pub fn max_frequency(&self) -> usize {
        match self.group {
            Group::So2 => (self.nodes - 2) / 2,
            Group::Cyclic { .. } => self.nodes / 2,
        }
    }

    /// Number of signed frequencies represented by the stored frequency `ℓ >= 0`.
    pub fn multiplicity(&self, freq: usize) -> usize {
        if freq == 0 || 2 * freq == self.nodes {
            1
        } else {
            2
        }
    }

    /// True when frequencies `0..=l_max` cover the whole dual of the grid.
    pub fn is_complete(&self, l_max: usize) -> bool {
        matches!(self.group, Group::Cyclic { .. }) && l_max == self.nodes / 2
    }
}
