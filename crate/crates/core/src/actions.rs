//! Catalog of benchmark manifolds with isometric circle or 2-torus actions.
//!
//! Points are handled in two forms. The *global* form is an ambient
//! representation (angles for tori, unit vectors in R^3 for S^2, unit
//! quaternions for S^3 and lens spaces) on which the group law is exact.
//! The *chart* form is what the public evaluators consume: flat angle
//! coordinates for tori and stereographic coordinates elsewhere.

use crate::error::{Error, Result};
use crate::numerics::{dist, fd_jacobian, wrap_angle};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldId {
    Torus(usize),
    Sphere2,
    Sphere3,
    LensSpace(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupId {
    Circle,
    Torus2,
}

impl GroupId {
    pub fn dim(self) -> usize {
        match self {
            GroupId::Circle => 1,
            GroupId::Torus2 => 2,
        }
    }
}

/// Group element as angle coordinates, one per circle factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupElement(pub Vec<f64>);

impl GroupElement {
    pub fn identity(group: GroupId) -> Self {
        GroupElement(vec![0.0; group.dim()])
    }

    pub fn circle(theta: f64) -> Self {
        GroupElement(vec![theta])
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|t| wrap_angle(*t).abs() < 1e-15)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChartKind {
    /// Angles lifted to R^n.
    Flat,
    /// Stereographic projection of S^n from the pole `pole * e_0`
    /// (`e_0` is the last ambient axis for S^2 and the real unit for S^3).
    Stereographic { pole: f64 },
    /// Fundamental domain of the left Z_p action on S^3, rotated by `shift`
    /// and projected stereographically from -1.
    LensSector { shift: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartMap {
    pub index: usize,
    pub kind: ChartKind,
    /// Coordinate box [-half_width, half_width]^n.
    pub half_width: f64,
}

impl ChartMap {
    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().all(|c| c.abs() <= self.half_width)
    }
}

/// Isotropy subgroup descriptor for the catalog groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Isotropy {
    /// Finite cyclic subgroup of the given order; order 1 is the trivial group.
    Cyclic(u32),
    /// The whole circle.
    Circle,
}

impl Isotropy {
    pub const TRIVIAL: Isotropy = Isotropy::Cyclic(1);

    pub fn is_trivial(self) -> bool {
        self == Isotropy::TRIVIAL
    }

    pub fn dim(self) -> usize {
        match self {
            Isotropy::Cyclic(_) => 0,
            Isotropy::Circle => 1,
        }
    }

    /// Subgroup relation up to conjugacy (the catalog groups are abelian).
    pub fn is_subgroup_of(self, other: Isotropy) -> bool {
        match (self, other) {
            (_, Isotropy::Circle) => true,
            (Isotropy::Circle, Isotropy::Cyclic(_)) => false,
            (Isotropy::Cyclic(a), Isotropy::Cyclic(b)) => b % a == 0,
        }
    }
}

impl fmt::Display for Isotropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Isotropy::Cyclic(1) => write!(f, "trivial"),
            Isotropy::Cyclic(q) => write!(f, "Z{q}"),
            Isotropy::Circle => write!(f, "U(1)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTypeInfo {
    pub kappa: usize,
    pub principal_isotropy: Isotropy,
    pub isotropy_types: Vec<Isotropy>,
    pub lambda: usize,
}

/// Character weights; circle characters use only the first component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Weight(pub i64, pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CharacterLabel {
    pub group: GroupId,
    pub weight: Weight,
}

impl CharacterLabel {
    pub fn circle(m: i64) -> Self {
        CharacterLabel { group: GroupId::Circle, weight: Weight(m, 0) }
    }

    pub fn torus2(a: i64, b: i64) -> Self {
        CharacterLabel { group: GroupId::Torus2, weight: Weight(a, b) }
    }

    pub fn d_chi(&self) -> u64 {
        1
    }
}

impl fmt::Display for CharacterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.group {
            GroupId::Circle => write!(f, "{}", self.weight.0),
            GroupId::Torus2 => write!(f, "({},{})", self.weight.0, self.weight.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupActionSpec {
    pub key: String,
    pub manifold: ManifoldId,
    pub group: GroupId,
    pub dim_m: usize,
    pub dim_g: usize,
    pub charts: Vec<ChartMap>,
    /// Central finite-difference step for action differentials.
    pub fd_step: f64,
}

pub const DEFAULT_ACTION_FD_STEP: f64 = 1e-5;

impl GroupActionSpec {
    /// Resolve a catalog key such as `torus2-rot1`, `torus3-rot1`, `s2-rot`,
    /// `s3-hopf`, `lens-p3-right` or `torus3-rot2`.
    pub fn from_key(key: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown action key '{key}'"));
        if let Some(rest) = key.strip_prefix("torus") {
            let (n, g) = rest.split_once('-').ok_or_else(bad)?;
            let n: usize = n.parse().map_err(|_| bad())?;
            let group = match g {
                "rot1" => GroupId::Circle,
                "rot2" => GroupId::Torus2,
                _ => return Err(bad()),
            };
            return Self::new(ManifoldId::Torus(n), group).map(|s| s.with_key(key));
        }
        match key {
            "s2-rot" => return Self::new(ManifoldId::Sphere2, GroupId::Circle).map(|s| s.with_key(key)),
            "s3-hopf" => return Self::new(ManifoldId::Sphere3, GroupId::Circle).map(|s| s.with_key(key)),
            _ => {}
        }
        if let Some(rest) = key.strip_prefix("lens-p") {
            let p = rest.strip_suffix("-right").ok_or_else(bad)?;
            let p: u32 = p.parse().map_err(|_| bad())?;
            return Self::new(ManifoldId::LensSpace(p), GroupId::Circle).map(|s| s.with_key(key));
        }
        Err(bad())
    }

    fn with_key(mut self, key: &str) -> Self {
        self.key = key.to_string();
        self
    }

    pub fn new(manifold: ManifoldId, group: GroupId) -> Result<Self> {
        let (dim_m, charts, key) = match (manifold, group) {
            (ManifoldId::Torus(n), GroupId::Circle) if n >= 2 => (
                n,
                vec![ChartMap { index: 0, kind: ChartKind::Flat, half_width: 4.0 * TAU }],
                format!("torus{n}-rot1"),
            ),
            (ManifoldId::Torus(n), GroupId::Torus2) if n >= 3 => (
                n,
                vec![ChartMap { index: 0, kind: ChartKind::Flat, half_width: 4.0 * TAU }],
                format!("torus{n}-rot2"),
            ),
            (ManifoldId::Sphere2, GroupId::Circle) => (2, stereo_charts(), "s2-rot".into()),
            (ManifoldId::Sphere3, GroupId::Circle) => (3, stereo_charts(), "s3-hopf".into()),
            (ManifoldId::LensSpace(p), GroupId::Circle) if p >= 1 => {
                if p == 1 {
                    (3, stereo_charts(), "lens-p1-right".into())
                } else {
                    let charts = (0..2)
                        .map(|c| ChartMap {
                            index: c,
                            kind: ChartKind::LensSector { shift: PI * c as f64 / p as f64 },
                            half_width: 4.0,
                        })
                        .collect();
                    (3, charts, format!("lens-p{p}-right"))
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "unsupported manifold/group combination {manifold:?} / {group:?}"
                )))
            }
        };
        Ok(GroupActionSpec {
            key,
            manifold,
            group,
            dim_m,
            dim_g: group.dim(),
            charts,
            fd_step: DEFAULT_ACTION_FD_STEP,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        match self.manifold {
            ManifoldId::Torus(n) => n,
            ManifoldId::Sphere2 => 3,
            ManifoldId::Sphere3 | ManifoldId::LensSpace(_) => 4,
        }
    }

    fn lens_order(&self) -> u32 {
        match self.manifold {
            ManifoldId::LensSpace(p) => p,
            _ => 1,
        }
    }

    /// Order of the subgroup acting trivially (the action is effective iff 1).
    pub fn kernel_order(&self) -> u32 {
        let p = self.lens_order();
        if p % 2 == 0 {
            2
        } else {
            1
        }
    }

    /// Group action on global points.
    pub fn act_global(&self, g: &GroupElement, p: &[f64]) -> Vec<f64> {
        match self.manifold {
            ManifoldId::Torus(_) => {
                let mut q = p.to_vec();
                for (i, t) in g.0.iter().enumerate() {
                    q[i] += wrap_angle(*t);
                }
                q
            }
            ManifoldId::Sphere2 => {
                let (s, c) = g.0[0].sin_cos();
                vec![c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
            }
            ManifoldId::Sphere3 | ManifoldId::LensSpace(_) => quat_mul(p, &[g.0[0].cos(), g.0[0].sin(), 0.0, 0.0]),
        }
    }

    /// Whether two global points represent the same point of M.
    pub fn global_distance(&self, p: &[f64], q: &[f64]) -> f64 {
        match self.manifold {
            ManifoldId::Torus(_) => p
                .iter()
                .zip(q)
                .map(|(a, b)| wrap_angle(a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldId::Sphere2 | ManifoldId::Sphere3 => dist(p, q),
            ManifoldId::LensSpace(n) => (0..n)
                .map(|k| dist(&left_rotate(q, TAU * k as f64 / n as f64), p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn chart(&self, c: usize) -> Result<&ChartMap> {
        self.charts
            .get(c)
            .ok_or_else(|| Error::Chart(format!("chart index {c} out of range")))
    }

    /// Chart coordinates of a global point.
    pub fn to_chart(&self, c: usize, p: &[f64]) -> Result<Vec<f64>> {
        let chart = self.chart(c)?;
        let y = match chart.kind {
            ChartKind::Flat => p.to_vec(),
            ChartKind::Stereographic { pole } => {
                let (head, last) = self.split_pole_axis(p);
                let den = 1.0 - pole * last;
                if den < 1e-12 {
                    return Err(Error::Chart(format!("point at the projection pole of chart {c}")));
                }
                head.iter().map(|h| h / den).collect()
            }
            ChartKind::LensSector { shift } => {
                let rep = lens_representative(p, self.lens_order(), shift);
                let r = left_rotate(&rep, -shift);
                let den = 1.0 + r[0];
                if den < 1e-12 {
                    return Err(Error::Chart(format!("point at the projection pole of chart {c}")));
                }
                vec![r[1] / den, r[2] / den, r[3] / den]
            }
        };
        if !chart.contains(&y) {
            return Err(Error::Chart(format!("point {y:?} outside the domain of chart {c}")));
        }
        Ok(y)
    }

    /// Global point for chart coordinates.
    pub fn from_chart(&self, c: usize, y: &[f64]) -> Result<Vec<f64>> {
        let chart = self.chart(c)?;
        Ok(match chart.kind {
            ChartKind::Flat => y.to_vec(),
            ChartKind::Stereographic { pole } => {
                let r2: f64 = y.iter().map(|v| v * v).sum();
                let den = 1.0 + r2;
                let head: Vec<f64> = y.iter().map(|v| 2.0 * v / den).collect();
                let last = pole * (r2 - 1.0) / den;
                self.join_pole_axis(&head, last)
            }
            ChartKind::LensSector { shift } => {
                let r2: f64 = y.iter().map(|v| v * v).sum();
                let den = 1.0 + r2;
                let q = [(1.0 - r2) / den, 2.0 * y[0] / den, 2.0 * y[1] / den, 2.0 * y[2] / den];
                left_rotate(&q, shift)
            }
        })
    }

    // S^2 projects along x_3, S^3 along the real quaternion axis.
    fn split_pole_axis(&self, p: &[f64]) -> (Vec<f64>, f64) {
        match self.manifold {
            ManifoldId::Sphere2 => (vec![p[0], p[1]], p[2]),
            _ => (vec![p[1], p[2], p[3]], p[0]),
        }
    }

    fn join_pole_axis(&self, head: &[f64], last: f64) -> Vec<f64> {
        match self.manifold {
            ManifoldId::Sphere2 => vec![head[0], head[1], last],
            _ => vec![last, head[0], head[1], head[2]],
        }
    }

    /// Chart choice: the chart whose projection pole (or sector boundary) is
    /// farthest from the point.
    pub fn select_chart(&self, p: &[f64]) -> usize {
        match self.charts[0].kind {
            ChartKind::Flat => 0,
            ChartKind::Stereographic { .. } => {
                let (_, last) = self.split_pole_axis(p);
                // chart 0 projects from -e_0 in the sign convention below
                if last >= 0.0 {
                    0
                } else {
                    1
                }
            }
            ChartKind::LensSector { .. } => {
                let n = self.lens_order();
                let margin = |shift: f64| {
                    let rep = lens_representative(p, n, shift);
                    let r = left_rotate(&rep, -shift);
                    let z1 = (r[0] * r[0] + r[1] * r[1]).sqrt();
                    if z1 < 1e-9 {
                        return 1.0;
                    }
                    PI / n as f64 - r[1].atan2(r[0]).abs()
                };
                let m: Vec<f64> = self
                    .charts
                    .iter()
                    .map(|c| match c.kind {
                        ChartKind::LensSector { shift } => margin(shift),
                        _ => 0.0,
                    })
                    .collect();
                if m[0] >= m[1] {
                    0
                } else {
                    1
                }
            }
        }
    }

    /// Action in chart coordinates: the image of `y` in chart `c`.
    pub fn act(&self, g: &GroupElement, c: usize, y: &[f64]) -> Result<Vec<f64>> {
        let p = self.from_chart(c, y)?;
        self.to_chart(c, &self.act_global(g, &p))
    }

    /// Riemannian metric in chart coordinates.
    pub fn metric(&self, c: usize, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim_m;
        match self.charts[c].kind {
            ChartKind::Flat => DMatrix::identity(n, n),
            _ => {
                let r2: f64 = y.iter().map(|v| v * v).sum();
                let f = 4.0 / ((1.0 + r2) * (1.0 + r2));
                DMatrix::identity(n, n) * f
            }
        }
    }

    /// Action followed by a change to the chart best suited to the image.
    pub fn act_selected(&self, g: &GroupElement, c: usize, y: &[f64]) -> Result<(usize, Vec<f64>)> {
        let q = self.act_global(g, &self.from_chart(c, y)?);
        let c2 = self.select_chart(&q);
        Ok((c2, self.to_chart(c2, &q)?))
    }

    /// Differential of `y -> g.y` from chart `c` into the chart selected for
    /// the image, by central differences. Returns the image chart too.
    pub fn action_differential(&self, g: &GroupElement, c: usize, y: &[f64]) -> Result<(usize, DMatrix<f64>)> {
        let (c2, _) = self.act_selected(g, c, y)?;
        let f = |z: &[f64]| {
            self.from_chart(c, z)
                .and_then(|p| self.to_chart(c2, &self.act_global(g, &p)))
                .unwrap_or_else(|_| vec![f64::NAN; z.len()])
        };
        let j = fd_jacobian(f, y, self.fd_step);
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::Chart(format!("action leaves chart {c2} near {y:?}")));
        }
        Ok((c2, j))
    }

    /// Jacobian of the transition from chart `a` to chart `b` at `y` (chart `a` coordinates).
    pub fn transition_jacobian(&self, a: usize, b: usize, y: &[f64]) -> Result<DMatrix<f64>> {
        let f = |z: &[f64]| {
            self.from_chart(a, z)
                .and_then(|p| self.to_chart(b, &p))
                .unwrap_or_else(|_| vec![f64::NAN; z.len()])
        };
        let j = fd_jacobian(f, y, self.fd_step);
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::Chart(format!("charts {a} and {b} do not overlap at {y:?}")));
        }
        Ok(j)
    }

    /// A point of M drawn from the normalized Riemannian volume.
    pub fn sample_point(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self.manifold {
            ManifoldId::Torus(n) => (0..n).map(|_| rng.gen::<f64>() * TAU).collect(),
            ManifoldId::Sphere2 => unit_gaussian(rng, 3),
            ManifoldId::Sphere3 | ManifoldId::LensSpace(_) => unit_gaussian(rng, 4),
        }
    }

    /// A sampled point in chart coordinates together with its chart.
    pub fn sample_chart_point(&self, rng: &mut impl Rng) -> (usize, Vec<f64>) {
        loop {
            let p = self.sample_point(rng);
            let c = self.select_chart(&p);
            if let Ok(y) = self.to_chart(c, &p) {
                return (c, y);
            }
        }
    }

    /// Number of group elements fixing `p`, found by scanning the circle and
    /// refining local minima of the displacement. Returns `Isotropy::Circle`
    /// when every scanned element fixes the point.
    pub fn sampled_stabilizer(&self, p: &[f64]) -> Isotropy {
        assert_eq!(self.group, GroupId::Circle, "stabilizer scan is for circle actions");
        let scan = 3600;
        let d = |t: f64| self.global_distance(&self.act_global(&GroupElement::circle(t), p), p);
        let vals: Vec<f64> = (0..scan).map(|k| d(TAU * k as f64 / scan as f64)).collect();
        if vals.iter().all(|v| *v < 1e-9) {
            return Isotropy::Circle;
        }
        let h = TAU / scan as f64;
        let mut count = 1u32;
        for k in 1..scan {
            let (l, m, r) = (vals[k - 1], vals[k], vals[(k + 1) % scan]);
            if m <= l && m < r && m < 1e-2 {
                let (mut a, mut b) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..80 {
                    let x1 = b - g * (b - a);
                    let x2 = a + g * (b - a);
                    if d(x1) < d(x2) {
                        b = x2;
                    } else {
                        a = x1;
                    }
                }
                if d(0.5 * (a + b)) < 1e-8 {
                    count += 1;
                }
            }
        }
        Isotropy::Cyclic(count)
    }
}

fn stereo_charts() -> Vec<ChartMap> {
    // chart 0 projects from -e_0 and covers the e_0 >= 0 hemisphere inside |y| <= 1
    vec![
        ChartMap { index: 0, kind: ChartKind::Stereographic { pole: -1.0 }, half_width: 4.0 },
        ChartMap { index: 1, kind: ChartKind::Stereographic { pole: 1.0 }, half_width: 4.0 },
    ]
}

fn unit_gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = crate::numerics::norm(&v);
        if r > 1e-8 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Hamilton product of quaternions stored as (real, i, j, k).
pub fn quat_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    vec![
        p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
        p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
        p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
        p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0],
    ]
}

/// Left multiplication by exp(i a).
pub fn left_rotate(q: &[f64], a: f64) -> Vec<f64> {
    quat_mul(&[a.cos(), a.sin(), 0.0, 0.0], q)
}

/// Representative of the left Z_p orbit of `q` whose first complex coordinate
/// has argument closest to `shift`; falls back to the second coordinate on the
/// circle where the first one vanishes.
pub fn lens_representative(q: &[f64], p: u32, shift: f64) -> Vec<f64> {
    let z1 = (q[0] * q[0] + q[1] * q[1]).sqrt();
    let score = |r: &[f64]| {
        let (re, im) = if z1 > 1e-9 { (r[0], r[1]) } else { (r[2], r[3]) };
        re * shift.cos() + im * shift.sin()
    };
    let mut best = q.to_vec();
    let mut best_score = score(q);
    for k in 1..p {
        let r = left_rotate(q, TAU * k as f64 / p as f64);
        let s = score(&r);
        if s > best_score + 1e-14 {
            best_score = s;
            best = r;
        }
    }
    best
}

/// Closed-form orbit-type data of the catalog actions.
pub fn orbit_type_info(spec: &GroupActionSpec) -> Result<OrbitTypeInfo> {
    let trivial = Isotropy::TRIVIAL;
    let (kappa, principal, types) = match (spec.manifold, spec.group) {
        (ManifoldId::Torus(_), GroupId::Circle) => (1, trivial, vec![trivial]),
        (ManifoldId::Torus(_), GroupId::Torus2) => (2, trivial, vec![trivial]),
        (ManifoldId::Sphere2, GroupId::Circle) => (1, trivial, vec![trivial, Isotropy::Circle]),
        (ManifoldId::Sphere3, GroupId::Circle) => (1, trivial, vec![trivial]),
        (ManifoldId::LensSpace(p), GroupId::Circle) => {
            // Right translation by -1 equals left translation by -1, which lies
            // in Z_p exactly when p is even. Orbits through the normalizer of
            // the maximal torus have isotropy Z_p.
            let h = Isotropy::Cyclic(spec.kernel_order());
            let mut types = vec![h];
            if p > 2 {
                types.push(Isotropy::Cyclic(p));
            }
            (1, h, types)
        }
        _ => {
            return Err(Error::Config(format!(
                "unsupported manifold/group combination {:?} / {:?}",
                spec.manifold, spec.group
            )))
        }
    };
    let lambda = longest_chain(&types);
    Ok(OrbitTypeInfo { kappa, principal_isotropy: principal, isotropy_types: types, lambda })
}

/// Length of the longest chain H_1 < H_2 < ... under the subgroup relation.
pub fn longest_chain(types: &[Isotropy]) -> usize {
    let mut sorted: Vec<Isotropy> = types.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut best = vec![1usize; sorted.len()];
    for i in 0..sorted.len() {
        for j in 0..i {
            if sorted[j] != sorted[i] && sorted[j].is_subgroup_of(sorted[i]) {
                best[i] = best[i].max(best[j] + 1);
            }
        }
    }
    best.into_iter().max().unwrap_or(0)
}

/// Isotropy types met by stabilizer scans over a deterministic grid of points,
/// including the special loci a generic random sample would miss.
pub fn sampled_isotropy_types(spec: &GroupActionSpec, grid: usize) -> Vec<Isotropy> {
    let mut types = Vec::new();
    let mut push = |h: Isotropy| {
        if !types.contains(&h) {
            types.push(h);
        }
    };
    let steps = grid.max(2);
    match spec.manifold {
        ManifoldId::Torus(n) => {
            for k in 0..steps {
                let p: Vec<f64> = (0..n).map(|i| TAU * ((k * (i + 1)) % steps) as f64 / steps as f64).collect();
                push(spec.sampled_stabilizer(&p));
            }
        }
        ManifoldId::Sphere2 => {
            for k in 0..=steps {
                let th = PI * k as f64 / steps as f64;
                push(spec.sampled_stabilizer(&[th.sin(), 0.0, th.cos()]));
            }
        }
        ManifoldId::Sphere3 | ManifoldId::LensSpace(_) => {
            for k in 0..=steps {
                let eta = 0.5 * PI * k as f64 / steps as f64;
                let a = 0.37 * k as f64;
                let b = 1.13 * k as f64;
                let q = [eta.cos() * a.cos(), eta.cos() * a.sin(), eta.sin() * b.cos(), eta.sin() * b.sin()];
                push(spec.sampled_stabilizer(&q));
            }
        }
    }
    types.sort();
    types
}

/// Multiplicity of the trivial representation in the restriction of the
/// character to the isotropy group.
pub fn restriction_multiplicity(chi: &CharacterLabel, h: Isotropy) -> u64 {
    match h {
        Isotropy::Cyclic(1) => chi.d_chi(),
        Isotropy::Cyclic(q) => match chi.group {
            GroupId::Circle => u64::from(chi.weight.0.rem_euclid(q as i64) == 0),
            // no catalog 2-torus action has a finite nontrivial isotropy
            GroupId::Torus2 => u64::from(chi.weight == Weight(0, 0)),
        },
        Isotropy::Circle => u64::from(chi.weight.0 == 0),
    }
}

/// Deterministic quasi-uniform group elements, identity first.
pub fn sample_group(spec: &GroupActionSpec, count: usize, seed: u64) -> Vec<GroupElement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<f64> = (0..spec.dim_g).map(|_| rng.gen()).collect();
    // additive recurrences with golden-ratio type generators
    let alphas: Vec<f64> = match spec.dim_g {
        1 => vec![0.5 * (5f64.sqrt() - 1.0)],
        _ => {
            let g = 1.324_717_957_244_746_f64; // plastic number
            vec![1.0 / g, 1.0 / (g * g)]
        }
    };
    let mut out = Vec::with_capacity(count);
    out.push(GroupElement::identity(spec.group));
    for k in 1..count {
        out.push(GroupElement(
            (0..spec.dim_g)
                .map(|i| TAU * (offsets[i] + k as f64 * alphas[i]).fract())
                .collect(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<GroupActionSpec> {
        ["torus2-rot1", "torus3-rot1", "s2-rot", "s3-hopf", "lens-p3-right", "lens-p4-right"]
            .iter()
            .map(|k| GroupActionSpec::from_key(k).unwrap())
            .collect()
    }

    #[test]
    fn keys_round_trip() {
        for s in catalog() {
            assert_eq!(GroupActionSpec::from_key(&s.key).unwrap(), s);
        }
        assert!(matches!(GroupActionSpec::from_key("klein-bottle"), Err(Error::Config(_))));
        assert!(matches!(GroupActionSpec::from_key("torus1-rot1"), Err(Error::Config(_))));
    }

    #[test]
    fn unsupported_combination_is_config_error() {
        assert!(matches!(GroupActionSpec::new(ManifoldId::Sphere2, GroupId::Torus2), Err(Error::Config(_))));
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in catalog() {
            for _ in 0..200 {
                let (c, y) = s.sample_chart_point(&mut rng);
                let p = s.from_chart(c, &y).unwrap();
                let y2 = s.to_chart(c, &p).unwrap();
                assert!(dist(&y, &y2) < 1e-12, "{} {:?} {:?}", s.key, y, y2);
            }
        }
    }

    #[test]
    fn torus_orbit_data() {
        let s = GroupActionSpec::from_key("torus2-rot1").unwrap();
        let o = orbit_type_info(&s).unwrap();
        assert_eq!((o.kappa, o.principal_isotropy, o.lambda), (1, Isotropy::TRIVIAL, 1));
    }

    #[test]
    fn sphere_orbit_data_matches_stabilizer_sampling() {
        let s = GroupActionSpec::from_key("s2-rot").unwrap();
        let o = orbit_type_info(&s).unwrap();
        assert_eq!((o.kappa, o.lambda), (1, 2));
        assert_eq!(sampled_isotropy_types(&s, 12), o.isotropy_types);
    }

    #[test]
    fn lens_chain_is_sampled_and_bounded_by_p() {
        for p in [2u32, 3, 4, 5] {
            let s = GroupActionSpec::new(ManifoldId::LensSpace(p), GroupId::Circle).unwrap();
            let o = orbit_type_info(&s).unwrap();
            let sampled = sampled_isotropy_types(&s, 16);
            assert_eq!(sampled, o.isotropy_types, "p = {p}");
            assert_eq!(longest_chain(&sampled), o.lambda);
            assert!(o.lambda <= p as usize);
        }
    }

    #[test]
    fn restriction_multiplicity_examples() {
        assert_eq!(restriction_multiplicity(&CharacterLabel::circle(7), Isotropy::TRIVIAL), 1);
        assert_eq!(restriction_multiplicity(&CharacterLabel::circle(4), Isotropy::Cyclic(2)), 1);
        assert_eq!(restriction_multiplicity(&CharacterLabel::circle(3), Isotropy::Cyclic(2)), 0);
        assert_eq!(restriction_multiplicity(&CharacterLabel::circle(0), Isotropy::Cyclic(5)), 1);
    }

    #[test]
    fn restriction_multiplicity_matches_character_average() {
        // (1/|H|) sum_h chi(h) for H = Z_q inside the circle
        for q in 1..7u32 {
            for m in -9..10i64 {
                let avg: f64 = (0..q)
                    .map(|k| (TAU * (m * k as i64) as f64 / q as f64).cos())
                    .sum::<f64>()
                    / q as f64;
                let r = restriction_multiplicity(&CharacterLabel::circle(m), Isotropy::Cyclic(q));
                assert!((avg - r as f64).abs() < 1e-9, "q={q} m={m}");
            }
        }
    }

    #[test]
    fn sample_group_contract() {
        let s = GroupActionSpec::from_key("s2-rot").unwrap();
        assert_eq!(sample_group(&s, 1, 3), vec![GroupElement::identity(GroupId::Circle)]);
        let g = sample_group(&s, 4, 0);
        assert_eq!(g.len(), 4);
        assert_eq!(g[0].0[0], 0.0);
        for i in 0..4 {
            for j in 0..i {
                assert!((g[i].0[0] - g[j].0[0]).abs() > 1e-3);
            }
        }
        assert_eq!(sample_group(&s, 16, 9), sample_group(&s, 16, 9));
    }

    #[test]
    fn action_is_a_group_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in catalog() {
            let gs = sample_group(&s, 8, 1);
            for _ in 0..100 {
                let p = s.sample_point(&mut rng);
                for g in &gs {
                    for h in &gs[..3] {
                        let lhs = s.act_global(g, &s.act_global(h, &p));
                        let rhs = s.act_global(&g.compose(h), &p);
                        assert!(s.global_distance(&lhs, &rhs) < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn action_is_isometric_in_charts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in catalog() {
            let gs = sample_group(&s, 6, 2);
            let mut checked = 0;
            while checked < 40 {
                let (c, y) = s.sample_chart_point(&mut rng);
                for g in &gs {
                    let Ok((c2, gy)) = s.act_selected(g, c, &y) else { continue };
                    let Ok((_, dg)) = s.action_differential(g, c, &y) else { continue };
                    let pulled = dg.transpose() * s.metric(c2, &gy) * &dg;
                    let err = (pulled - s.metric(c, &y)).norm();
                    assert!(err < 1e-8, "{} {err:e}", s.key);
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn action_is_effective_modulo_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in catalog() {
            let pts: Vec<Vec<f64>> = (0..20).map(|_| s.sample_point(&mut rng)).collect();
            for g in sample_group(&s, 12, 4).iter().skip(1) {
                let moved = pts
                    .iter()
                    .any(|p| s.global_distance(&s.act_global(g, p), p) > 1e-6);
                let in_kernel = s.kernel_order() == 2 && (wrap_angle(g.0[0]).abs() - PI).abs() < 1e-9;
                assert!(moved || in_kernel, "{} {:?}", s.key, g);
            }
        }
    }

    #[test]
    fn principal_isotropy_from_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for s in catalog() {
            let o = orbit_type_info(&s).unwrap();
            for _ in 0..200 {
                let p = s.sample_point(&mut rng);
                assert_eq!(s.sampled_stabilizer(&p), o.principal_isotropy, "{}", s.key);
            }
        }
    }
}
