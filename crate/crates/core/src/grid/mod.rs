//! Construction of the support grid from the per-observation MLE cloud.

mod hull;

pub use hull::ConvexHull;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelId, Observation};
use crate::model::{Atom, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundsMode {
    /// Per-dimension range of the MLE cloud.
    #[default]
    #[serde(rename = "box")]
    BoundingBox,
    /// Bounding-box lattice with atoms outside the cloud's convex hull
    /// removed (two-dimensional grids only).
    #[serde(rename = "hull")]
    ConvexHullFilter,
}

impl FromStr for BoundsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(BoundsMode::BoundingBox),
            "hull" => Ok(BoundsMode::ConvexHullFilter),
            other => Err(Error::InvalidConfig(format!("unknown bounds mode '{other}' (box|hull)"))),
        }
    }
}

impl fmt::Display for BoundsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundsMode::BoundingBox => "box",
            BoundsMode::ConvexHullFilter => "hull",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub per_dim_counts: Vec<usize>,
    #[serde(default)]
    pub bounds_mode: BoundsMode,
    /// Per-dimension `[lo, hi]` overrides; `None` entries use the cloud range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_bounds: Option<Vec<Option<[f64; 2]>>>,
}

impl GridSpec {
    pub fn new(per_dim_counts: Vec<usize>) -> Self {
        GridSpec {
            per_dim_counts,
            bounds_mode: BoundsMode::BoundingBox,
            explicit_bounds: None,
        }
    }

    pub fn with_mode(mut self, mode: BoundsMode) -> Self {
        self.bounds_mode = mode;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<Option<[f64; 2]>>) -> Self {
        self.explicit_bounds = Some(bounds);
        self
    }
}

/// Parses `30x30`, `300` or `30x30x30`.
pub fn parse_counts(s: &str) -> Result<Vec<usize>> {
    let counts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|part| part.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidConfig(format!("bad grid '{s}', expected e.g. 30x30")))?;
    if counts.is_empty() || counts.iter().any(|&q| q == 0) {
        return Err(Error::InvalidConfig(format!("bad grid '{s}': counts must be positive")));
    }
    Ok(counts)
}

/// The MLE cloud with the indices of observations whose MLE sits on the
/// boundary of the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct MleCloud {
    pub atoms: Vec<Atom>,
    pub boundary: Vec<usize>,
}

/// Per-observation MLEs, in input order.
pub fn mle_cloud(kernel: KernelId, data: &[Observation]) -> Result<MleCloud> {
    if data.is_empty() {
        return Err(Error::InvalidObservation("no observations".into()));
    }
    let estimates: Vec<_> = data
        .par_iter()
        .enumerate()
        .map(|(j, obs)| kernel.mle(obs).map_err(|e| Error::at(j, e)))
        .collect::<Result<_>>()?;
    let boundary: Vec<usize> = estimates
        .iter()
        .enumerate()
        .filter(|(_, e)| e.boundary)
        .map(|(j, _)| j)
        .collect();
    if !boundary.is_empty() {
        warn!("{} of {} observations have a boundary MLE", boundary.len(), data.len());
    }
    Ok(MleCloud {
        atoms: estimates.into_iter().map(|e| e.atom).collect(),
        boundary,
    })
}

/// Per-dimension `[min, max]` of the cloud.
pub fn cloud_bounds(cloud: &[Atom]) -> Vec<[f64; 2]> {
    let d = cloud[0].dim();
    (0..d)
        .map(|i| {
            cloud.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |b, a| {
                [b[0].min(a[i]), b[1].max(a[i])]
            })
        })
        .collect()
}

fn check_cloud(cloud: &[Atom]) -> Result<usize> {
    let d = cloud
        .first()
        .ok_or_else(|| Error::InvalidGrid("empty MLE cloud".into()))?
        .dim();
    if cloud.iter().any(|a| a.dim() != d) {
        return Err(Error::InvalidGrid("MLE cloud mixes dimensions".into()));
    }
    Ok(d)
}

fn resolve_bounds(cloud: &[Atom], spec: &GridSpec) -> Result<Vec<[f64; 2]>> {
    let d = check_cloud(cloud)?;
    if spec.per_dim_counts.len() != d {
        return Err(Error::InvalidGrid(format!(
            "{} grid counts for {d}-dimensional atoms",
            spec.per_dim_counts.len()
        )));
    }
    let mut bounds = cloud_bounds(cloud);
    if let Some(overrides) = &spec.explicit_bounds {
        if overrides.len() != d {
            return Err(Error::InvalidGrid("explicit bounds do not match dimension".into()));
        }
        for (b, o) in bounds.iter_mut().zip(overrides) {
            if let Some(o) = o {
                *b = *o;
            }
        }
    }
    Ok(bounds)
}

/// Regular lattice over the cloud's bounding box (or explicit bounds), both
/// endpoints included, optionally filtered to the cloud's convex hull.
pub fn regular_grid(cloud: &[Atom], spec: &GridSpec) -> Result<Grid> {
    let bounds = resolve_bounds(cloud, spec)?;
    lattice(cloud, spec, bounds)
}

/// [`regular_grid`] with the kernel's parameter-domain restrictions applied
/// to the bounds first.
pub fn build_grid(kernel: KernelId, cloud: &[Atom], spec: &GridSpec) -> Result<Grid> {
    let mut bounds = resolve_bounds(cloud, spec)?;
    kernel.restrict_bounds(&mut bounds, cloud)?;
    lattice(cloud, spec, bounds)
}

fn lattice(cloud: &[Atom], spec: &GridSpec, bounds: Vec<[f64; 2]>) -> Result<Grid> {
    let d = bounds.len();
    let mut counts = spec.per_dim_counts.clone();
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(d);
    for (i, (b, q)) in bounds.iter().zip(counts.iter_mut()).enumerate() {
        let [lo, hi] = *b;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidGrid(format!("bad bounds [{lo}, {hi}] in dimension {i}")));
        }
        if *q == 0 {
            return Err(Error::InvalidGrid(format!("zero grid count in dimension {i}")));
        }
        if lo == hi && *q > 1 {
            warn!("dimension {i} is degenerate at {lo}; collapsing {q} grid points to one");
            *q = 1;
        }
        let axis: Vec<f64> = if *q == 1 {
            vec![lo]
        } else {
            let step = (hi - lo) / (*q - 1) as f64;
            (0..*q)
                .map(|k| if k + 1 == *q { hi } else { lo + step * k as f64 })
                .collect()
        };
        axes.push(axis);
    }

    let total: usize = counts.iter().product();
    let mut atoms = Vec::with_capacity(total);
    let mut index = vec![0usize; d];
    for _ in 0..total {
        atoms.push(Atom::new(index.iter().zip(&axes).map(|(&k, axis)| axis[k]).collect())?);
        for i in (0..d).rev() {
            index[i] += 1;
            if index[i] < counts[i] {
                break;
            }
            index[i] = 0;
        }
    }

    if spec.bounds_mode == BoundsMode::ConvexHullFilter {
        if d == 2 {
            let pts: Vec<[f64; 2]> = cloud.iter().map(|a| [a[0], a[1]]).collect();
            let hull = ConvexHull::new(&pts);
            atoms.retain(|a| hull.contains([a[0], a[1]]));
            if atoms.is_empty() {
                return Err(Error::InvalidGrid("no lattice point lies inside the MLE hull".into()));
            }
        } else if d > 2 {
            warn!("hull filtering is only available for 2-d grids; using the bounding box");
        }
    }
    Grid::regular(atoms, counts, bounds)
}

/// Default lattice size for `d`-dimensional atoms and `p` observations:
/// 30 per dimension for d = 2, 3 and `clamp(ceil(0.3 p), 30, 300)` for d = 1.
pub fn default_counts(d: usize, p: usize) -> Result<Vec<usize>> {
    match d {
        1 => {
            let q = ((3 * p + 9) / 10).clamp(30, 300);
            Ok(vec![q])
        }
        2 | 3 => Ok(vec![30; d]),
        _ => Err(Error::UnsupportedDefault { dim: d }),
    }
}
