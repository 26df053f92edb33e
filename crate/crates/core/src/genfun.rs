//! Functional elements `⟨f_A, A⟩`, general functions built from finitely
//! many of them, direct prolongation and elementwise differentiation.
//!
//! Agreement on overlaps is checked on a deterministic grid, not proven.

use crate::calculus::{spatial_var, ScalarField};
use crate::error::{Error, Result};
use crate::expr::{Assignment, Expr};

/// Grid pitch is the smallest positive extent divided by this.
pub const GRID_DIVISIONS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Closed axis-aligned box.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Closed ball.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Points(Vec<Vec<f64>>),
}

impl Region {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid(
                "box corners must be nonempty and of equal length",
            ));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite())
            || lower.iter().zip(&upper).any(|(l, u)| l > u)
        {
            return Err(Error::invalid(
                "box needs finite corners with lower <= upper",
            ));
        }
        Ok(Region::Box { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(vec![lo], vec![hi])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "ball center must be a nonempty finite point",
            ));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Region::Ball { center, radius })
    }

    pub fn points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid(
                "point set must be nonempty with equal-length points",
            ));
        }
        Ok(Region::Points(points))
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Box { lower, .. } => lower.len(),
            Region::Ball { center, .. } => center.len(),
            Region::Points(p) => p[0].len(),
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        match self {
            Region::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(x, (l, u))| l <= x && x <= u),
            Region::Ball { center, radius } => {
                let d2: f64 = point.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                d2 <= radius * radius
            }
            Region::Points(pts) => pts.iter().any(|p| p.as_slice() == point),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Box { lower, upper } => (lower.clone(), upper.clone()),
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Region::Points(pts) => {
                let mut lo = pts[0].clone();
                let mut hi = pts[0].clone();
                for p in pts {
                    for k in 0..p.len() {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Deterministic sample of the region: grid points (boundaries
    /// included) for boxes and balls, the points themselves otherwise.
    pub fn samples(&self) -> Vec<Vec<f64>> {
        match self {
            Region::Points(pts) => pts.clone(),
            _ => {
                let (lo, hi) = self.bounding_box();
                grid(&lo, &hi)
                    .into_iter()
                    .filter(|p| self.contains(p))
                    .collect()
            }
        }
    }
}

fn grid(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let extents: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
    let min_extent = extents
        .iter()
        .copied()
        .filter(|e| *e > 0.0)
        .fold(f64::INFINITY, f64::min);
    let counts: Vec<usize> = extents
        .iter()
        .map(|&e| {
            if e > 0.0 {
                (e / (min_extent / GRID_DIVISIONS as f64)).round() as usize + 1
            } else {
                1
            }
        })
        .collect();
    let total: usize = counts.iter().product();
    (0..total)
        .map(|mut idx| {
            (0..lo.len())
                .map(|k| {
                    let i = idx % counts[k];
                    idx /= counts[k];
                    if counts[k] == 1 {
                        lo[k]
                    } else if i + 1 == counts[k] {
                        hi[k]
                    } else {
                        lo[k] + extents[k] * i as f64 / (counts[k] - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// `A ∩ B`: exact for two boxes, a sampled point set otherwise; `None`
/// when empty.
pub fn overlap(a: &Region, b: &Region) -> Result<Option<Region>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "region overlap",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let points = match (a, b) {
        (
            Region::Box {
                lower: l1,
                upper: u1,
            },
            Region::Box {
                lower: l2,
                upper: u2,
            },
        ) => {
            let lower: Vec<f64> = l1.iter().zip(l2).map(|(x, y)| x.max(*y)).collect();
            let upper: Vec<f64> = u1.iter().zip(u2).map(|(x, y)| x.min(*y)).collect();
            if lower.iter().zip(&upper).any(|(l, u)| l > u) {
                return Ok(None);
            }
            return Ok(Some(Region::Box { lower, upper }));
        }
        (Region::Points(pts), other) | (other, Region::Points(pts)) => pts
            .iter()
            .filter(|p| other.contains(p))
            .cloned()
            .collect::<Vec<_>>(),
        _ => {
            let (l1, u1) = a.bounding_box();
            let (l2, u2) = b.bounding_box();
            let lo: Vec<f64> = l1.iter().zip(&l2).map(|(x, y)| x.max(*y)).collect();
            let hi: Vec<f64> = u1.iter().zip(&u2).map(|(x, y)| x.min(*y)).collect();
            if lo.iter().zip(&hi).any(|(l, h)| l > h) {
                return Ok(None);
            }
            grid(&lo, &hi)
                .into_iter()
                .filter(|p| a.contains(p) && b.contains(p))
                .collect()
        }
    };
    Ok(if points.is_empty() {
        None
    } else {
        Some(Region::Points(points))
    })
}

/// An expression over named coordinates paired with the region it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalElement {
    expr: Expr,
    coords: Vec<String>,
    region: Region,
}

impl FunctionalElement {
    pub fn new(expr: Expr, coords: Vec<String>, region: Region) -> Result<Self> {
        if coords.len() != region.dim() {
            return Err(Error::DimensionMismatch {
                context: "element coordinates vs region",
                expected: region.dim(),
                found: coords.len(),
            });
        }
        if let Some(name) = expr.free_vars().into_iter().find(|v| !coords.contains(v)) {
            return Err(Error::ForeignVariable {
                context: "functional element",
                name,
            });
        }
        Ok(FunctionalElement {
            expr,
            coords,
            region,
        })
    }

    /// Coordinates default to `x1..x<d>` for a region in `R^d`.
    pub fn on(expr: Expr, region: Region) -> Result<Self> {
        let coords = (1..=region.dim()).map(spatial_var).collect();
        Self::new(expr, coords, region)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if !self.region.contains(point) {
            return Err(Error::OutOfRegion {
                point: point.to_vec(),
            });
        }
        let at: Assignment = self
            .coords
            .iter()
            .cloned()
            .zip(point.iter().copied())
            .collect();
        Ok(self.expr.evaluate(&at)?)
    }

    /// Narrows the region to its overlap with `region`.
    pub fn restrict_to(&self, region: &Region) -> Result<Self> {
        let narrowed = overlap(&self.region, region)?
            .ok_or_else(|| Error::invalid("restriction to a disjoint region is empty"))?;
        Ok(FunctionalElement {
            region: narrowed,
            ..self.clone()
        })
    }

    /// Symbolic derivative on the same region.
    pub fn derivative(&self, var: &str) -> Self {
        FunctionalElement {
            expr: self.expr.differentiate(var),
            ..self.clone()
        }
    }
}

/// `⟨E|_A, A⟩` over the field's coordinates `x1..x{n-1}, t`.
pub fn restrict(field: &ScalarField, region: Region) -> Result<FunctionalElement> {
    FunctionalElement::new(field.body().clone(), field.coordinates(), region)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    pub prolongs: bool,
    pub max_deviation: f64,
    pub samples: usize,
}

/// Two elements prolong each other when their regions overlap and they agree
/// there within `tol`. A sample where either side is undefined counts as an
/// infinite deviation.
pub fn direct_prolongation(
    e1: &FunctionalElement,
    e2: &FunctionalElement,
    tol: f64,
) -> Result<Prolongation> {
    if e1.coords != e2.coords {
        return Err(Error::invalid(format!(
            "elements over ({}) and ({}) do not share coordinates",
            e1.coords.join(", "),
            e2.coords.join(", ")
        )));
    }
    let Some(common) = overlap(&e1.region, &e2.region)? else {
        return Ok(Prolongation {
            prolongs: false,
            max_deviation: 0.0,
            samples: 0,
        });
    };
    let samples = common.samples();
    let max_deviation = samples
        .iter()
        .map(|p| {
            let at: Assignment = e1.coords.iter().cloned().zip(p.iter().copied()).collect();
            match (e1.expr.evaluate(&at), e2.expr.evaluate(&at)) {
                (Ok(a), Ok(b)) => (a - b).abs(),
                _ => f64::INFINITY,
            }
        })
        .fold(0.0, f64::max);
    Ok(Prolongation {
        prolongs: !samples.is_empty() && max_deviation <= tol,
        max_deviation,
        samples: samples.len(),
    })
}

/// Descriptive labels only; nothing reads them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    pub functor: String,
    pub source_category: String,
    pub target_category: String,
    pub topology: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralFunction {
    elements: Vec<FunctionalElement>,
    pub metadata: Metadata,
}

impl GeneralFunction {
    pub fn new(elements: Vec<FunctionalElement>, metadata: Metadata) -> Result<Self> {
        if let Some(first) = elements.first() {
            if let Some(bad) = elements.iter().find(|e| e.coords != first.coords) {
                return Err(Error::invalid(format!(
                    "element over ({}) does not share the ambient coordinates ({})",
                    bad.coords.join(", "),
                    first.coords.join(", ")
                )));
            }
        }
        Ok(GeneralFunction { elements, metadata })
    }

    pub fn elements(&self) -> &[FunctionalElement] {
        &self.elements
    }
}

/// Differentiates every element. Fails as a whole if any element's
/// derivative is undefined somewhere on its sampled region.
pub fn derivative_general_function(f: &GeneralFunction, var: &str) -> Result<GeneralFunction> {
    let mut elements = Vec::with_capacity(f.elements.len());
    for (index, element) in f.elements.iter().enumerate() {
        let d = element.derivative(var);
        for p in element.region.samples() {
            let at: Assignment = d.coords.iter().cloned().zip(p.iter().copied()).collect();
            if let Err(source) = d.expr.evaluate(&at) {
                return Err(Error::Nondifferentiable {
                    element: index,
                    point: p,
                    source,
                });
            }
        }
        elements.push(d);
    }
    Ok(GeneralFunction {
        elements,
        metadata: f.metadata.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub pairs_checked: usize,
    pub incoherent_pairs: Vec<(usize, usize)>,
    pub worst_deviation: f64,
}

impl CoherenceReport {
    pub fn coherent(&self) -> bool {
        self.incoherent_pairs.is_empty()
    }
}

/// Runs [`direct_prolongation`] on every overlapping pair of elements.
pub fn coherence_check(f: &GeneralFunction, tol: f64) -> Result<CoherenceReport> {
    let mut report = CoherenceReport {
        pairs_checked: 0,
        incoherent_pairs: vec![],
        worst_deviation: 0.0,
    };
    for i in 0..f.elements.len() {
        for j in i + 1..f.elements.len() {
            let result = direct_prolongation(&f.elements[i], &f.elements[j], tol)?;
            if result.samples == 0 {
                continue;
            }
            report.pairs_checked += 1;
            report.worst_deviation = report.worst_deviation.max(result.max_deviation);
            if !result.prolongs {
                report.incoherent_pairs.push((i, j));
            }
        }
    }
    Ok(report)
}
