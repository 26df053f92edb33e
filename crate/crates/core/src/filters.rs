//! Filters on finite sets: principal filters, the stronger-than order,
//! filter limits, image filters of block maps, and a numeric shrinking-ball
//! realization of the limit of the total-derivative bracket.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::calculus::{curve_point, Bracket, Curve, ScalarField, ToleranceConfig};
use crate::error::{Error, Result};

/// Largest carrier a [`Subset`] bitmask can address.
pub const MAX_LABELS: usize = 64;
/// Largest carrier for which member lists are enumerated.
pub const MAX_ENUMERABLE: usize = 16;

/// Subset of a [`FiniteSpace`], bit `k` standing for the `k`-th label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Subset(pub u64);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn singleton(index: usize) -> Subset {
        Subset(1 << index)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 >> index & 1 == 1
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    pub fn union(self, other: Subset) -> Subset {
        Subset(self.0 | other.0)
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |k| self.contains(*k))
    }
}

/// Nonempty finite set of distinct labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteSpace {
    labels: Arc<[String]>,
}

impl FiniteSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() || labels.len() > MAX_LABELS {
            return Err(Error::invalid(format!(
                "a finite space needs 1..={MAX_LABELS} labels, got {}",
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::invalid(format!("duplicate label `{dup}`")));
        }
        Ok(FiniteSpace {
            labels: labels.into(),
        })
    }

    /// Labels `1..=n`.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|k| k.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn full(&self) -> Subset {
        if self.len() == 64 {
            Subset(u64::MAX)
        } else {
            Subset((1 << self.len()) - 1)
        }
    }

    pub fn subset<S: AsRef<str>>(&self, labels: &[S]) -> Result<Subset> {
        labels.iter().try_fold(Subset::EMPTY, |acc, l| {
            let l = l.as_ref();
            self.index_of(l)
                .map(|k| acc.union(Subset::singleton(k)))
                .ok_or_else(|| Error::invalid(format!("label `{l}` is not in the space")))
        })
    }

    pub fn label_list(&self, s: Subset) -> Vec<&str> {
        s.indices()
            .take_while(|k| *k < self.len())
            .map(|k| self.labels[k].as_str())
            .collect()
    }

    pub fn show(&self, s: Subset) -> String {
        format!("{{{}}}", self.label_list(s).join(", "))
    }

    /// Every subset of the space, in bitmask order.
    pub fn power_set(&self) -> Result<impl Iterator<Item = Subset>> {
        self.check_enumerable()?;
        Ok((0..=self.full().0).map(Subset))
    }

    fn check_enumerable(&self) -> Result<()> {
        if self.len() > MAX_ENUMERABLE {
            return Err(Error::invalid(format!(
                "enumeration needs at most {MAX_ENUMERABLE} labels, the space has {}",
                self.len()
            )));
        }
        Ok(())
    }

    fn contains_subset(&self, s: Subset) -> bool {
        s.is_subset_of(self.full())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Family {
    Principal(Subset),
    Explicit(BTreeSet<Subset>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filter {
    space: FiniteSpace,
    family: Family,
}

impl Filter {
    /// Validates an explicit family against the filter axioms.
    pub fn from_family(space: &FiniteSpace, family: BTreeSet<Subset>) -> Result<Self> {
        match is_filter(&family, space) {
            FilterCheck::Valid => Ok(Filter {
                space: space.clone(),
                family: Family::Explicit(family),
            }),
            violation => Err(Error::invalid(violation.describe(space))),
        }
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn generator(&self) -> Option<Subset> {
        match self.family {
            Family::Principal(g) => Some(g),
            Family::Explicit(_) => None,
        }
    }

    pub fn contains(&self, a: Subset) -> bool {
        match &self.family {
            Family::Principal(g) => self.space.contains_subset(a) && g.is_subset_of(a),
            Family::Explicit(members) => members.contains(&a),
        }
    }

    pub fn members(&self) -> Result<BTreeSet<Subset>> {
        match &self.family {
            Family::Principal(g) => Ok(self
                .space
                .power_set()?
                .filter(|a| g.is_subset_of(*a))
                .collect()),
            Family::Explicit(members) => Ok(members.clone()),
        }
    }

    /// Whether some member is contained in `a`.
    fn has_member_within(&self, a: Subset) -> bool {
        match &self.family {
            Family::Principal(g) => g.is_subset_of(a),
            Family::Explicit(members) => members.iter().any(|b| b.is_subset_of(a)),
        }
    }
}

/// All supersets of the nonempty set `g`.
pub fn principal_filter(space: &FiniteSpace, g: Subset) -> Result<Filter> {
    if g.is_empty() {
        return Err(Error::invalid(
            "a principal filter needs a nonempty generator; the empty set would admit ∅",
        ));
    }
    if !space.contains_subset(g) {
        return Err(Error::invalid("generator is not a subset of the space"));
    }
    Ok(Filter {
        space: space.clone(),
        family: Family::Principal(g),
    })
}

/// Outcome of checking the three filter axioms, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterCheck {
    Valid,
    /// A member is not a subset of the carrier.
    OutsideCarrier(Subset),
    /// The empty set is a member.
    ContainsEmpty,
    /// `a ∩ b` is missing.
    NotClosedUnderIntersection {
        a: Subset,
        b: Subset,
    },
    /// `superset ⊇ member` is missing.
    NotUpwardClosed {
        member: Subset,
        superset: Subset,
    },
}

impl FilterCheck {
    pub fn is_valid(&self) -> bool {
        matches!(self, FilterCheck::Valid)
    }

    /// `a`, `b` or `c` for the violated axiom.
    pub fn axiom(&self) -> Option<char> {
        match self {
            FilterCheck::Valid | FilterCheck::OutsideCarrier(_) => None,
            FilterCheck::ContainsEmpty => Some('a'),
            FilterCheck::NotClosedUnderIntersection { .. } => Some('b'),
            FilterCheck::NotUpwardClosed { .. } => Some('c'),
        }
    }

    pub fn describe(&self, space: &FiniteSpace) -> String {
        match self {
            FilterCheck::Valid => "all filter axioms hold".into(),
            FilterCheck::OutsideCarrier(s) => {
                format!("member {:#x} is not a subset of the space", s.0)
            }
            FilterCheck::ContainsEmpty => "axiom (a) fails: the empty set is a member".into(),
            FilterCheck::NotClosedUnderIntersection { a, b } => format!(
                "axiom (b) fails: {} ∩ {} = {} is not a member",
                space.show(*a),
                space.show(*b),
                space.show(a.intersect(*b))
            ),
            FilterCheck::NotUpwardClosed { member, superset } => format!(
                "axiom (c) fails: {} contains member {} but is not a member",
                space.show(*superset),
                space.show(*member)
            ),
        }
    }
}

/// Checks (a) `∅ ∉ F`, (b) closure under pairwise intersection and (c)
/// upward closure, reporting the first failure with a witness. Upward
/// closure on a finite carrier reduces to adding one element at a time.
pub fn is_filter(family: &BTreeSet<Subset>, space: &FiniteSpace) -> FilterCheck {
    if let Some(s) = family.iter().find(|s| !space.contains_subset(**s)) {
        return FilterCheck::OutsideCarrier(*s);
    }
    if family.contains(&Subset::EMPTY) {
        return FilterCheck::ContainsEmpty;
    }
    for (k, a) in family.iter().enumerate() {
        for b in family.iter().skip(k + 1) {
            if !family.contains(&a.intersect(*b)) {
                return FilterCheck::NotClosedUnderIntersection { a: *a, b: *b };
            }
        }
    }
    for member in family {
        for k in 0..space.len() {
            let superset = member.union(Subset::singleton(k));
            if !family.contains(&superset) {
                return FilterCheck::NotUpwardClosed {
                    member: *member,
                    superset,
                };
            }
        }
    }
    FilterCheck::Valid
}

fn same_carrier(h: &Filter, b: &Filter) -> Result<()> {
    if h.space != b.space {
        return Err(Error::CarrierMismatch);
    }
    Ok(())
}

/// `H` is stronger than `B` when every member of `B` contains a member of
/// `H`. Against a principal `B` only its generator needs checking.
pub fn stronger_than(h: &Filter, b: &Filter) -> Result<bool> {
    same_carrier(h, b)?;
    match &b.family {
        Family::Principal(g) => Ok(h.has_member_within(*g)),
        Family::Explicit(members) => Ok(members.iter().all(|a| h.has_member_within(*a))),
    }
}

/// `G` is a limit of `H` when `H` is stronger than the principal filter of `G`.
pub fn filter_limit(h: &Filter, space: &FiniteSpace, g: Subset) -> Result<bool> {
    if &h.space != space {
        return Err(Error::CarrierMismatch);
    }
    stronger_than(h, &principal_filter(space, g)?)
}

/// Disjoint nonempty blocks covering the space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    space: FiniteSpace,
    blocks: Vec<Subset>,
}

impl Partition {
    pub fn new(space: &FiniteSpace, blocks: Vec<Subset>) -> Result<Self> {
        let mut covered = Subset::EMPTY;
        for (k, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::invalid(format!("block {} is empty", k + 1)));
            }
            if !space.contains_subset(*block) {
                return Err(Error::invalid(format!("block {} leaves the space", k + 1)));
            }
            if !block.intersect(covered).is_empty() {
                return Err(Error::invalid(format!(
                    "block {} overlaps an earlier block",
                    k + 1
                )));
            }
            covered = covered.union(*block);
        }
        if covered != space.full() {
            return Err(Error::invalid(format!(
                "blocks do not cover {}",
                space.show(Subset(space.full().0 & !covered.0))
            )));
        }
        Ok(Partition {
            space: space.clone(),
            blocks,
        })
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn blocks(&self) -> &[Subset] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> Result<Subset> {
        self.blocks.get(index).copied().ok_or_else(|| {
            Error::invalid(format!(
                "block index {index} out of range (have {})",
                self.blocks.len()
            ))
        })
    }
}

/// One map `f_i: G_i → K` per block of a partition of `D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementMap {
    partition: Partition,
    codomain: FiniteSpace,
    maps: Vec<BTreeMap<usize, usize>>,
}

impl ElementMap {
    /// `maps[i]` sends labels of block `i` to labels of `codomain`.
    pub fn new(
        partition: Partition,
        codomain: FiniteSpace,
        maps: Vec<BTreeMap<String, String>>,
    ) -> Result<Self> {
        if maps.len() != partition.blocks.len() {
            return Err(Error::DimensionMismatch {
                context: "block maps vs partition blocks",
                expected: partition.blocks.len(),
                found: maps.len(),
            });
        }
        let domain = &partition.space;
        let mut indexed = Vec::with_capacity(maps.len());
        for (block_index, (block, map)) in partition.blocks.iter().zip(&maps).enumerate() {
            let mut m = BTreeMap::new();
            for (from, to) in map {
                let i = domain
                    .index_of(from)
                    .filter(|i| block.contains(*i))
                    .ok_or_else(|| {
                        Error::invalid(format!("`{from}` is not in block {}", block_index + 1))
                    })?;
                let j = codomain
                    .index_of(to)
                    .ok_or_else(|| Error::invalid(format!("`{to}` is not in the target space")))?;
                m.insert(i, j);
            }
            if let Some(missing) = block.indices().find(|i| !m.contains_key(i)) {
                return Err(Error::MapNotTotal {
                    block: block_index + 1,
                    label: domain.labels()[missing].clone(),
                });
            }
            indexed.push(m);
        }
        Ok(ElementMap {
            partition,
            codomain,
            maps: indexed,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn codomain(&self) -> &FiniteSpace {
        &self.codomain
    }

    /// `f_i(G_i)`.
    pub fn image(&self, block: usize) -> Result<Subset> {
        self.partition.block(block)?;
        Ok(self.maps[block]
            .values()
            .fold(Subset::EMPTY, |acc, j| acc.union(Subset::singleton(*j))))
    }
}

/// `{A ⊆ K | f_i(G_i) ⊆ A}` for the principal filter of block `i`.
pub fn image_filter(
    map: &ElementMap,
    block: usize,
    block_filter: &Filter,
    target: &FiniteSpace,
) -> Result<Filter> {
    if block_filter.space != map.partition.space || target != &map.codomain {
        return Err(Error::CarrierMismatch);
    }
    let g = map.partition.block(block)?;
    if block_filter.generator() != Some(g)
        && block_filter.members()? != principal_filter(&map.partition.space, g)?.members()?
    {
        return Err(Error::invalid(format!(
            "filter is not the principal filter of block {}",
            block + 1
        )));
    }
    principal_filter(target, map.image(block)?)
}

/// `A` is the limit of the general function on block `i` when the image
/// filter is stronger than the principal filter of `A`.
pub fn general_function_limit(map: &ElementMap, block: usize, a: Subset) -> Result<bool> {
    let domain = &map.partition.space;
    let p = principal_filter(domain, map.partition.block(block)?)?;
    let image = image_filter(map, block, &p, &map.codomain)?;
    stronger_than(&image, &principal_filter(&map.codomain, a)?)
}

/// Balls per trace.
pub const BALL_COUNT: usize = 13;
/// Sample points per ball.
pub const BALL_SAMPLES: usize = 64;
/// Allowed relative growth between successive ball deviations.
pub const MONOTONE_SLACK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BallTrace {
    pub radius: f64,
    pub max_deviation: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallLimit {
    /// Richardson extrapolation of the ball means to radius zero.
    pub limit: f64,
    pub center_value: f64,
    pub trace: Vec<BallTrace>,
}

/// Samples `(V·∇)E + ∂E/∂t` on balls of radius `r0 · shrink^k` around
/// `(p(t), t)` and extrapolates the ball means to zero radius. Deviations
/// from the center value must not grow by more than [`MONOTONE_SLACK`] from
/// one ball to the next, and must shrink overall, up to a rounding floor
/// scaled to the center value.
pub fn ball_filter_limit(
    field: &ScalarField,
    curve: &Curve,
    time: f64,
    cfg: &ToleranceConfig,
) -> Result<BallLimit> {
    cfg.validate()?;
    let bracket = Bracket::new(field, curve)?;
    let center = curve_point(curve, time)?;
    let mut trace = Vec::with_capacity(BALL_COUNT);
    let mut radius = cfg.ball_radius0;
    let mut center_value = 0.0;
    for _ in 0..BALL_COUNT {
        let stats = bracket.ball_stats(&center, radius, BALL_SAMPLES)?;
        center_value = stats.center_value;
        trace.push(BallTrace {
            radius,
            max_deviation: stats.max_deviation,
            mean: stats.mean,
        });
        radius *= cfg.shrink;
    }
    let floor = 1e3 * f64::EPSILON * center_value.abs().max(1.0);
    for pair in trace.windows(2) {
        if pair[1].max_deviation > (1.0 + MONOTONE_SLACK) * pair[0].max_deviation + floor {
            return Err(Error::NonConvergence {
                radius: pair[1].radius,
                previous: pair[0].max_deviation,
                current: pair[1].max_deviation,
            });
        }
    }
    let (first, last) = (&trace[0], &trace[BALL_COUNT - 1]);
    if last.max_deviation > cfg.shrink * first.max_deviation + floor {
        return Err(Error::NonConvergence {
            radius: last.radius,
            previous: first.max_deviation,
            current: last.max_deviation,
        });
    }
    let s2 = cfg.shrink * cfg.shrink;
    let (prev, last) = (&trace[BALL_COUNT - 2], &trace[BALL_COUNT - 1]);
    Ok(BallLimit {
        limit: (last.mean - s2 * prev.mean) / (1.0 - s2),
        center_value,
        trace,
    })
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}
