//! Closed convex sets with Euclidean projection, membership and sampling.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};

/// Half-width of the sampling window used for unbounded directions.
pub const SAMPLE_SPAN: f64 = 10.0;

/// A user-provided convex set.
pub trait CustomSet: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn project(&self, u: &[f64]) -> Vec<f64>;
    fn sample(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConvexSet {
    Free { dim: usize },
    /// `null` bounds in JSON stand for infinite ones.
    Box {
        #[serde(with = "lower_bounds")]
        lower: Vec<f64>,
        #[serde(with = "upper_bounds")]
        upper: Vec<f64>,
    },
    Ball { center: Vec<f64>, radius: f64 },
    NonnegOrthant { dim: usize },
    /// `{x ≥ 0 : Σ x = total}`
    Simplex { dim: usize, total: f64 },
    ProductOfSets { parts: Vec<ConvexSet> },
    #[serde(skip)]
    Custom(Arc<dyn CustomSet>),
}

impl PartialEq for ConvexSet {
    fn eq(&self, other: &Self) -> bool {
        use ConvexSet::*;
        match (self, other) {
            (Free { dim: a }, Free { dim: b }) => a == b,
            (NonnegOrthant { dim: a }, NonnegOrthant { dim: b }) => a == b,
            (Box { lower: a, upper: b }, Box { lower: c, upper: d }) => a == c && b == d,
            (
                Ball {
                    center: a,
                    radius: r,
                },
                Ball {
                    center: b,
                    radius: s,
                },
            ) => a == b && r == s,
            (Simplex { dim: a, total: s }, Simplex { dim: b, total: t }) => a == b && s == t,
            (ProductOfSets { parts: a }, ProductOfSets { parts: b }) => a == b,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl ConvexSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let s = ConvexSet::Box { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::Free { dim } | ConvexSet::NonnegOrthant { dim } => {
                if *dim == 0 {
                    return Err(Error::Input("set dimension must be positive".into()));
                }
            }
            ConvexSet::Box { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(Error::Input(
                        "box bounds must be nonempty and of equal length".into(),
                    ));
                }
                if let Some(k) = (0..lower.len()).find(|&k| !(lower[k] <= upper[k])) {
                    return Err(Error::Input(format!(
                        "box coordinate {k}: lower bound exceeds upper bound"
                    )));
                }
            }
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() || !(*radius >= 0.0) {
                    return Err(Error::Input("ball needs a center and radius >= 0".into()));
                }
            }
            ConvexSet::Simplex { dim, total } => {
                if *dim == 0 || !(*total >= 0.0) {
                    return Err(Error::Input("simplex needs dim > 0 and total >= 0".into()));
                }
            }
            ConvexSet::ProductOfSets { parts } => {
                if parts.is_empty() {
                    return Err(Error::Input("product set needs at least one part".into()));
                }
                parts.iter().try_for_each(|p| p.validate())?;
            }
            ConvexSet::Custom(_) => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Free { dim } | ConvexSet::NonnegOrthant { dim } => *dim,
            ConvexSet::Simplex { dim, .. } => *dim,
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::ProductOfSets { parts } => parts.iter().map(|p| p.dim()).sum(),
            ConvexSet::Custom(c) => c.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConvexSet::Free { .. } => "free",
            ConvexSet::Box { .. } => "box",
            ConvexSet::Ball { .. } => "ball",
            ConvexSet::NonnegOrthant { .. } => "nonneg-orthant",
            ConvexSet::Simplex { .. } => "simplex",
            ConvexSet::ProductOfSets { .. } => "product-of-sets",
            ConvexSet::Custom(_) => "custom",
        }
    }

    /// Euclidean projection.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        match self {
            ConvexSet::Free { .. } => u.to_vec(),
            ConvexSet::Box { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, h))| v.max(*l).min(*h))
                .collect(),
            ConvexSet::Ball { center, radius } => {
                let r = dist(u, center);
                if r <= *radius {
                    u.to_vec()
                } else {
                    let s = radius / r;
                    u.iter()
                        .zip(center)
                        .map(|(v, c)| c + s * (v - c))
                        .collect()
                }
            }
            ConvexSet::NonnegOrthant { .. } => u.iter().map(|v| v.max(0.0)).collect(),
            ConvexSet::Simplex { total, .. } => project_simplex(u, *total),
            ConvexSet::ProductOfSets { parts } => {
                let mut out = Vec::with_capacity(u.len());
                let mut off = 0;
                for p in parts {
                    let d = p.dim();
                    out.extend(p.project(&u[off..off + d]));
                    off += d;
                }
                out
            }
            ConvexSet::Custom(c) => c.project(u),
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        dist(x, &self.project(x))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// A random point of the set; unbounded directions are sampled within
    /// `±SAMPLE_SPAN`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ConvexSet::Free { dim } => (0..*dim)
                .map(|_| rng.random_range(-SAMPLE_SPAN..=SAMPLE_SPAN))
                .collect(),
            ConvexSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &h)| {
                    let (a, b) = sampling_window(l, h);
                    if a == b {
                        a
                    } else {
                        rng.random_range(a..=b)
                    }
                })
                .collect(),
            ConvexSet::Ball { center, radius } => {
                let n = center.len();
                let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let len = norm(&dir).max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
                let x: Vec<f64> = center
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c + r * d / len)
                    .collect();
                self.project(&x)
            }
            ConvexSet::NonnegOrthant { dim } => (0..*dim)
                .map(|_| rng.random_range(0.0..=SAMPLE_SPAN))
                .collect(),
            ConvexSet::Simplex { dim, total } => {
                let e: Vec<f64> = (0..*dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| total * v / s).collect()
            }
            ConvexSet::ProductOfSets { parts } => {
                parts.iter().flat_map(|p| p.sample(rng)).collect()
            }
            ConvexSet::Custom(c) => c.sample(rng),
        }
    }

    /// Finite bounding box, if one exists.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            ConvexSet::Box { lower, upper } => {
                if lower.iter().chain(upper).all(|v| v.is_finite()) {
                    Some((lower.clone(), upper.clone()))
                } else {
                    None
                }
            }
            ConvexSet::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            ConvexSet::Simplex { dim, total } => Some((vec![0.0; *dim], vec![*total; *dim])),
            ConvexSet::ProductOfSets { parts } => {
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                for p in parts {
                    let (l, h) = p.bounding_box()?;
                    lo.extend(l);
                    hi.extend(h);
                }
                Some((lo, hi))
            }
            _ => None,
        }
    }

    /// Corner points of the bounding box (at most 2^8 of them), used to
    /// probe worst cases when estimating constants.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let Some((lo, hi)) = self.bounding_box() else {
            return Vec::new();
        };
        let n = lo.len();
        if n > 8 {
            return Vec::new();
        }
        (0..1usize << n)
            .map(|mask| {
                let c: Vec<f64> = (0..n)
                    .map(|k| if mask >> k & 1 == 1 { hi[k] } else { lo[k] })
                    .collect();
                self.project(&c)
            })
            .collect()
    }

    /// Split this set along coordinate blocks, when it has a compatible
    /// Cartesian structure.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<ConvexSet>> {
        if sizes.iter().sum::<usize>() != self.dim() {
            return Err(Error::Input(format!(
                "block sizes sum to {}, set has dimension {}",
                sizes.iter().sum::<usize>(),
                self.dim()
            )));
        }
        if sizes.len() == 1 {
            return Ok(vec![self.clone()]);
        }
        let ranges = ranges_from_sizes(sizes);
        match self {
            ConvexSet::Free { .. } => Ok(sizes.iter().map(|&d| ConvexSet::Free { dim: d }).collect()),
            ConvexSet::NonnegOrthant { .. } => Ok(sizes
                .iter()
                .map(|&d| ConvexSet::NonnegOrthant { dim: d })
                .collect()),
            ConvexSet::Box { lower, upper } => Ok(ranges
                .into_iter()
                .map(|r| ConvexSet::Box {
                    lower: lower[r.clone()].to_vec(),
                    upper: upper[r].to_vec(),
                })
                .collect()),
            ConvexSet::ProductOfSets { parts } => {
                let part_sizes: Vec<usize> = parts.iter().map(|p| p.dim()).collect();
                if part_sizes == sizes {
                    Ok(parts.clone())
                } else {
                    Err(Error::Config(format!(
                        "product set parts {part_sizes:?} do not match blocks {sizes:?}"
                    )))
                }
            }
            other => Err(Error::Config(format!(
                "a {} set has no Cartesian structure across {} blocks",
                other.kind(),
                sizes.len()
            ))),
        }
    }
}

macro_rules! bound_serde {
    ($name:ident, $inf:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
                s.collect_seq(v.iter().map(|b| b.is_finite().then_some(*b)))
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
                let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
                Ok(raw.into_iter().map(|b| b.unwrap_or($inf)).collect())
            }
        }
    };
}

bound_serde!(lower_bounds, f64::NEG_INFINITY);
bound_serde!(upper_bounds, f64::INFINITY);

fn sampling_window(l: f64, h: f64) -> (f64, f64) {
    match (l.is_finite(), h.is_finite()) {
        (true, true) => (l, h),
        (true, false) => (l, l + 2.0 * SAMPLE_SPAN),
        (false, true) => (h - 2.0 * SAMPLE_SPAN, h),
        (false, false) => (-SAMPLE_SPAN, SAMPLE_SPAN),
    }
}

/// Projection onto `{x ≥ 0 : Σx = total}` by the sort-and-threshold rule.
fn project_simplex(u: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = u.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - total) / (k as f64 + 1.0);
        if v - t > 0.0 {
            theta = t;
        }
    }
    u.iter().map(|v| (v - theta).max(0.0)).collect()
}

pub fn ranges_from_sizes(sizes: &[usize]) -> Vec<Range<usize>> {
    let mut off = 0;
    sizes
        .iter()
        .map(|&s| {
            let r = off..off + s;
            off += s;
            r
        })
        .collect()
}

/// Block structure of the variable: sizes and the factor sets of a
/// Cartesian `K = K_1 × … × K_I`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    sets: Vec<ConvexSet>,
}

impl BlockPartition {
    /// Partition `set` into blocks of the given sizes.
    pub fn new(sizes: Vec<usize>, set: &ConvexSet) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Input("block sizes must be positive".into()));
        }
        let sets = set.split(&sizes)?;
        Ok(Self { sizes, sets })
    }

    pub fn from_parts(sizes: Vec<usize>, sets: Vec<ConvexSet>) -> Result<Self> {
        if sizes.len() != sets.len() {
            return Err(Error::Input("one set per block required".into()));
        }
        for (s, k) in sizes.iter().zip(&sets) {
            if *s == 0 || k.dim() != *s {
                return Err(Error::dimension("block set", *s, k.dim()));
            }
        }
        Ok(Self { sizes, sets })
    }

    pub fn single(set: &ConvexSet) -> Self {
        Self {
            sizes: vec![set.dim()],
            sets: vec![set.clone()],
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn sets(&self) -> &[ConvexSet] {
        &self.sets
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn ranges(&self) -> Vec<Range<usize>> {
        ranges_from_sizes(&self.sizes)
    }

    /// Concatenation of per-block projections.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.ranges()
            .into_iter()
            .zip(&self.sets)
            .flat_map(|(r, s)| s.project(&u[r]))
            .collect()
    }

    /// Largest discrepancy between `set.project` and the blockwise
    /// projection over random probes.
    pub fn cartesian_mismatch<R: Rng + ?Sized>(
        &self,
        set: &ConvexSet,
        probes: usize,
        rng: &mut R,
    ) -> f64 {
        let n = self.dim();
        (0..probes)
            .map(|_| {
                let u: Vec<f64> = (0..n)
                    .map(|_| rng.random_range(-3.0 * SAMPLE_SPAN..3.0 * SAMPLE_SPAN))
                    .collect();
                dist(&set.project(&u), &self.project(&u))
            })
            .fold(0.0, f64::max)
    }
}
