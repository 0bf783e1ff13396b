//! Exhaustive enumeration of the join-tree and physical-plan space for
//! queries with few relations.
//!
//! Trees are produced lazily. For a relation set `S` every ordered split into
//! a non-empty outer set `L` and inner set `S \ L` is visited in ascending
//! bit-mask order of `L`, and for each split every outer subtree is paired
//! with every inner subtree. Splits that cannot produce a tree (because of the
//! join graph or a structural restriction) are pruned up front using per-subset
//! tree counts, so the stream never stalls on dead branches.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hintlang::{self, JoinMethod, JoinOrder, PlanTree, ScanMethod, TreeShape};
use crate::stats::{self, Alternative, Summary, TestResult};

/// Default cap on relations for exhaustive enumeration.
pub const DEFAULT_MAX_RELATIONS: usize = 6;
/// The enumerator refuses to go beyond this regardless of configuration.
pub const HARD_MAX_RELATIONS: usize = 16;
/// Default fraction of fastest plans compared in the left-tail test.
pub const DEFAULT_TAIL_QUANTILE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanSpaceError {
    #[error("{got} relations exceeds the enumeration cap of {cap}")]
    TooManyRelations { got: usize, cap: usize },
    #[error("invalid enumeration spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Scan methods are either varied over a set or held fixed per relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAssignment {
    Vary(Vec<ScanMethod>),
    Fixed(BTreeMap<String, ScanMethod>),
}

impl ScanAssignment {
    pub fn mode_name(&self) -> &'static str {
        match self {
            ScanAssignment::Vary(_) => "varied",
            ScanAssignment::Fixed(_) => "fixed_per_relation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumSpec {
    pub aliases: Vec<String>,
    pub join_methods: Vec<JoinMethod>,
    pub scans: ScanAssignment,
    pub shape_filter: Option<BTreeSet<TreeShape>>,
    /// Undirected join predicates. When present, every join must connect its
    /// two inputs through at least one edge.
    pub join_graph: Option<Vec<(String, String)>>,
    pub max_relations: usize,
}

impl EnumSpec {
    /// All join and scan methods, no filters.
    pub fn new<S: Into<String>>(aliases: impl IntoIterator<Item = S>) -> Self {
        Self {
            aliases: aliases.into_iter().map(Into::into).collect(),
            join_methods: JoinMethod::ALL.to_vec(),
            scans: ScanAssignment::Vary(ScanMethod::ALL.to_vec()),
            shape_filter: None,
            join_graph: None,
            max_relations: DEFAULT_MAX_RELATIONS,
        }
    }

    pub fn with_join_methods(mut self, methods: impl IntoIterator<Item = JoinMethod>) -> Self {
        self.join_methods = methods.into_iter().collect();
        self
    }

    pub fn with_scan_methods(mut self, methods: impl IntoIterator<Item = ScanMethod>) -> Self {
        self.scans = ScanAssignment::Vary(methods.into_iter().collect());
        self
    }

    pub fn with_fixed_scans(mut self, scans: BTreeMap<String, ScanMethod>) -> Self {
        self.scans = ScanAssignment::Fixed(scans);
        self
    }

    pub fn with_shapes(mut self, shapes: impl IntoIterator<Item = TreeShape>) -> Self {
        self.shape_filter = Some(shapes.into_iter().collect());
        self
    }

    pub fn with_join_graph<A: Into<String>, B: Into<String>>(mut self, edges: impl IntoIterator<Item = (A, B)>) -> Self {
        self.join_graph = Some(edges.into_iter().map(|(a, b)| (a.into(), b.into())).collect());
        self
    }

    pub fn with_max_relations(mut self, cap: usize) -> Self {
        self.max_relations = cap;
        self
    }

    fn validate(&self) -> Result<(), PlanSpaceError> {
        let n = self.aliases.len();
        let cap = self.max_relations.min(HARD_MAX_RELATIONS);
        if n > cap {
            return Err(PlanSpaceError::TooManyRelations { got: n, cap });
        }
        let invalid = |m: String| Err(PlanSpaceError::InvalidSpec(m));
        if n == 0 {
            return invalid("no relations".into());
        }
        let distinct: BTreeSet<&str> = self.aliases.iter().map(String::as_str).collect();
        if distinct.len() != n {
            return invalid("aliases must be distinct".into());
        }
        if let Some(bad) = self.aliases.iter().find(|a| !hintlang::is_valid_alias(a)) {
            return invalid(format!("alias `{bad}` is not a plain identifier"));
        }
        if self.join_methods.is_empty() {
            return invalid("join_methods is empty".into());
        }
        match &self.scans {
            ScanAssignment::Vary(methods) if methods.is_empty() => return invalid("scan_methods is empty".into()),
            ScanAssignment::Fixed(map) => {
                if let Some(a) = self.aliases.iter().find(|a| !map.contains_key(*a)) {
                    return invalid(format!("no fixed scan method for `{a}`"));
                }
            }
            ScanAssignment::Vary(_) => {}
        }
        if let Some(edges) = &self.join_graph {
            for (a, b) in edges {
                if !distinct.contains(a.as_str()) || !distinct.contains(b.as_str()) {
                    return invalid(format!("join graph edge {a}-{b} references an unknown alias"));
                }
            }
        }
        Ok(())
    }

    fn scan_choices(&self) -> usize {
        match &self.scans {
            ScanAssignment::Vary(m) => m.len(),
            ScanAssignment::Fixed(_) => 1,
        }
    }
}

/// Structural restriction applied while generating, before the shape filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Structure {
    Any,
    LeafInner,
    LeafOuter,
    SomeLeaf,
}

impl Structure {
    fn for_filter(filter: Option<&BTreeSet<TreeShape>>) -> Self {
        use TreeShape::*;
        let Some(f) = filter else { return Structure::Any };
        if f.iter().all(|s| *s == LeftDeep) {
            Structure::LeafInner
        } else if f.iter().all(|s| *s == RightDeep) {
            Structure::LeafOuter
        } else if !f.contains(&Bushy) {
            Structure::SomeLeaf
        } else {
            Structure::Any
        }
    }

    fn allows(self, outer: u32, inner: u32) -> bool {
        let single = |m: u32| m.count_ones() == 1;
        match self {
            Structure::Any => true,
            Structure::LeafInner => single(inner),
            Structure::LeafOuter => single(outer),
            Structure::SomeLeaf => single(outer) || single(inner),
        }
    }
}

/// Whether a tree passes a shape filter. Left- and right-deep use their
/// structural definitions, so a single join passes both; zigzag and bushy use
/// [`TreeShape`] classification. A lone relation passes every filter.
pub fn matches_shapes(order: &JoinOrder, filter: &BTreeSet<TreeShape>) -> bool {
    if order.is_leaf() {
        return true;
    }
    filter.iter().any(|shape| match shape {
        TreeShape::LeftDeep => hintlang::is_left_deep(order),
        TreeShape::RightDeep => hintlang::is_right_deep(order),
        other => order.shape() == Some(*other),
    })
}

struct Space {
    aliases: Vec<String>,
    /// valid `(outer, inner)` splits per subset mask
    splits: Vec<Vec<(u32, u32)>>,
    counts: Vec<u128>,
}

impl Space {
    fn build(spec: &EnumSpec, structure: Structure) -> Self {
        let n = spec.aliases.len();
        let full = 1usize << n;
        let index: HashMap<&str, usize> = spec.aliases.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let adjacency: Option<Vec<u32>> = spec.join_graph.as_ref().map(|edges| {
            let mut adj = vec![0u32; n];
            for (a, b) in edges {
                let (i, j) = (index[a.as_str()], index[b.as_str()]);
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
            adj
        });
        let connected = |l: u32, r: u32| match &adjacency {
            None => true,
            Some(adj) => (0..n).any(|i| l & (1 << i) != 0 && adj[i] & r != 0),
        };

        let mut counts = vec![0u128; full];
        let mut splits = vec![Vec::new(); full];
        for mask in 1..full as u32 {
            if mask.count_ones() == 1 {
                counts[mask as usize] = 1;
                continue;
            }
            let mut total = 0u128;
            // ascending submasks of `mask`
            let mut sub = (!mask).wrapping_add(1) & mask;
            while sub != 0 && sub != mask {
                let rest = mask & !sub;
                let c = counts[sub as usize] * counts[rest as usize];
                if c > 0 && structure.allows(sub, rest) && connected(sub, rest) {
                    total += c;
                    splits[mask as usize].push((sub, rest));
                }
                sub = (sub | !mask).wrapping_add(1) & mask;
            }
            counts[mask as usize] = total;
        }
        Space {
            aliases: spec.aliases.clone(),
            splits,
            counts,
        }
    }

    fn full_mask(&self) -> u32 {
        ((1u64 << self.aliases.len()) - 1) as u32
    }
}

enum NodeState {
    Leaf(bool),
    Join {
        split: usize,
        outer: Box<OrderIter>,
        current_outer: Option<JoinOrder>,
        inner: Box<OrderIter>,
    },
    Done,
}

struct OrderIter {
    space: Rc<Space>,
    mask: u32,
    state: NodeState,
}

impl OrderIter {
    fn new(space: Rc<Space>, mask: u32) -> Self {
        let state = if mask.count_ones() == 1 {
            NodeState::Leaf(false)
        } else {
            match space.splits[mask as usize].first() {
                Some(&(l, r)) => NodeState::Join {
                    split: 0,
                    outer: Box::new(OrderIter::new(space.clone(), l)),
                    current_outer: None,
                    inner: Box::new(OrderIter::new(space.clone(), r)),
                },
                None => NodeState::Done,
            }
        };
        OrderIter { space, mask, state }
    }
}

impl Iterator for OrderIter {
    type Item = JoinOrder;

    fn next(&mut self) -> Option<JoinOrder> {
        loop {
            match &mut self.state {
                NodeState::Done => return None,
                NodeState::Leaf(done) => {
                    if *done {
                        return None;
                    }
                    *done = true;
                    let idx = self.mask.trailing_zeros() as usize;
                    return Some(JoinOrder::Rel(self.space.aliases[idx].clone()));
                }
                NodeState::Join {
                    split,
                    outer,
                    current_outer,
                    inner,
                } => {
                    if current_outer.is_none() {
                        *current_outer = outer.next();
                        if current_outer.is_none() {
                            *split += 1;
                            match self.space.splits[self.mask as usize].get(*split) {
                                Some(&(l, r)) => {
                                    **outer = OrderIter::new(self.space.clone(), l);
                                    **inner = OrderIter::new(self.space.clone(), r);
                                }
                                None => self.state = NodeState::Done,
                            }
                            continue;
                        }
                    }
                    match inner.next() {
                        Some(right) => {
                            let left = current_outer.clone().expect("outer present");
                            return Some(JoinOrder::join(left, right));
                        }
                        None => {
                            *current_outer = None;
                            let (_, r) = self.space.splits[self.mask as usize][*split];
                            **inner = OrderIter::new(self.space.clone(), r);
                        }
                    }
                }
            }
        }
    }
}

/// Lazy stream of join orders; see [`enumerate_join_trees`].
pub struct JoinTrees {
    inner: OrderIter,
    filter: Option<BTreeSet<TreeShape>>,
}

impl Iterator for JoinTrees {
    type Item = JoinOrder;

    fn next(&mut self) -> Option<JoinOrder> {
        loop {
            let order = self.inner.next()?;
            match &self.filter {
                Some(f) if !matches_shapes(&order, f) => continue,
                _ => return Some(order),
            }
        }
    }
}

/// Every full binary join tree over the spec's aliases exactly once, with
/// outer/inner order significant, in a deterministic order.
pub fn enumerate_join_trees(spec: &EnumSpec) -> Result<JoinTrees, PlanSpaceError> {
    spec.validate()?;
    let structure = Structure::for_filter(spec.shape_filter.as_ref());
    let space = Rc::new(Space::build(spec, structure));
    let full = space.full_mask();
    Ok(JoinTrees {
        inner: OrderIter::new(space, full),
        filter: spec.shape_filter.clone(),
    })
}

/// Number of join trees the spec admits before the shape filter is applied
/// exactly (the structural pre-restriction is included).
pub fn candidate_tree_count(spec: &EnumSpec) -> Result<u128, PlanSpaceError> {
    spec.validate()?;
    let space = Space::build(spec, Structure::for_filter(spec.shape_filter.as_ref()));
    Ok(space.counts[space.full_mask() as usize])
}

/// Lazy stream of physical plans; see [`enumerate_physical`].
pub struct PhysicalPlans {
    trees: JoinTrees,
    join_methods: Vec<JoinMethod>,
    scans: ScanAssignment,
    current: Option<JoinOrder>,
    /// odometer: join digits (post-order) followed by scan digits (leaf order)
    digits: Vec<usize>,
    joins: usize,
}

impl PhysicalPlans {
    fn radix(&self, position: usize) -> usize {
        if position < self.joins {
            self.join_methods.len()
        } else {
            match &self.scans {
                ScanAssignment::Vary(m) => m.len(),
                ScanAssignment::Fixed(_) => 1,
            }
        }
    }

    fn build(&self, order: &JoinOrder, join_pos: &mut usize, leaf_pos: &mut usize) -> PlanTree {
        match order {
            JoinOrder::Rel(alias) => {
                let scan = match &self.scans {
                    ScanAssignment::Vary(m) => m[self.digits[self.joins + *leaf_pos]],
                    ScanAssignment::Fixed(map) => map[alias],
                };
                *leaf_pos += 1;
                PlanTree::leaf(alias.clone(), scan)
            }
            JoinOrder::Join(o, i) => {
                let outer = self.build(o, join_pos, leaf_pos);
                let inner = self.build(i, join_pos, leaf_pos);
                let method = self.join_methods[self.digits[*join_pos]];
                *join_pos += 1;
                PlanTree::join(method, outer, inner)
            }
        }
    }
}

impl Iterator for PhysicalPlans {
    type Item = PlanTree;

    fn next(&mut self) -> Option<PlanTree> {
        if self.current.is_none() {
            let order = self.trees.next()?;
            self.joins = order.join_count();
            self.digits = vec![0; self.joins + order.join_count() + 1];
            self.current = Some(order);
        }
        let order = self.current.as_ref().expect("tree present");
        let plan = self.build(order, &mut 0, &mut 0);

        // advance the odometer, last digit fastest
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.current = None;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.radix(pos) {
                break;
            }
            self.digits[pos] = 0;
        }
        Some(plan)
    }
}

/// Every assignment of join methods to joins and scan methods to relations,
/// for every tree of [`enumerate_join_trees`].
pub fn enumerate_physical(spec: &EnumSpec) -> Result<PhysicalPlans, PlanSpaceError> {
    let trees = enumerate_join_trees(spec)?;
    Ok(PhysicalPlans {
        trees,
        join_methods: spec.join_methods.clone(),
        scans: spec.scans.clone(),
        current: None,
        digits: Vec::new(),
        joins: 0,
    })
}

/// Physical plans per join tree for an `n`-relation spec.
pub fn physical_per_tree(spec: &EnumSpec) -> u128 {
    let n = spec.aliases.len() as u32;
    (spec.join_methods.len() as u128).pow(n.saturating_sub(1)) * (spec.scan_choices() as u128).pow(n)
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

fn catalan(n: u64) -> u64 {
    // C(k+1) = C(k) * 2(2k+1) / (k+2)
    (0..n).fold(1u64, |c, k| c * 2 * (2 * k + 1) / (k + 2))
}

/// Closed-form number of join trees over `n` relations (clique join graph),
/// optionally restricted to one shape. Defined for `1 ≤ n ≤ 12`.
///
/// * unrestricted: `n! · Catalan(n−1)`
/// * left-deep, right-deep: `n!` each (at `n = 2` both describe the same two trees)
/// * zigzag: `n! · (2^(n−2) − 2)` for `n ≥ 3`, otherwise 0
/// * bushy: `n! · (Catalan(n−1) − 2^(n−2))` for `n ≥ 2`
///
/// A single relation counts as one tree for every shape.
pub fn count_join_trees(n: usize, shape: Option<TreeShape>) -> Option<u64> {
    if !(1..=12).contains(&n) {
        return None;
    }
    let n = n as u64;
    let fact = factorial(n);
    if n == 1 {
        return Some(1);
    }
    let some_leaf = 1u64 << (n - 2);
    Some(match shape {
        None => fact * catalan(n - 1),
        Some(TreeShape::LeftDeep) | Some(TreeShape::RightDeep) => fact,
        Some(TreeShape::Zigzag) => fact * some_leaf.saturating_sub(2),
        Some(TreeShape::Bushy) => fact * (catalan(n - 1) - some_leaf),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailComparison {
    pub bushy_count: usize,
    pub linear_count: usize,
    pub two_sided: TestResult,
    /// Alternative: bushy plans are faster.
    pub bushy_faster: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeComparison {
    pub per_shape: BTreeMap<TreeShape, Summary>,
    /// Bushy vs. left- and right-deep plans pooled, two-sided.
    pub full: TestResult,
    pub tail_quantile: f64,
    pub tail_threshold_ms: f64,
    /// `None` when the left tail holds no plan of one of the two groups.
    pub tail: Option<TailComparison>,
}

/// Compares execution times of bushy plans against linear (left- or
/// right-deep) plans, on the whole population and among the fastest
/// `tail_quantile` fraction of all plans.
pub fn compare_shape_populations(
    timings: &[(PlanTree, f64)],
    tail_quantile: f64,
) -> Result<ShapeComparison, PlanSpaceError> {
    if !(tail_quantile > 0.0 && tail_quantile <= 1.0) {
        return Err(PlanSpaceError::InvalidSpec(format!("tail quantile {tail_quantile} outside (0, 1]")));
    }
    let mut by_shape: BTreeMap<TreeShape, Vec<f64>> = BTreeMap::new();
    let mut classified = Vec::with_capacity(timings.len());
    for (tree, ms) in timings {
        if let Some(shape) = hintlang::classify_shape(tree) {
            by_shape.entry(shape).or_default().push(*ms);
            classified.push((shape, *ms));
        }
    }
    let is_linear = |s: TreeShape| matches!(s, TreeShape::LeftDeep | TreeShape::RightDeep);
    let bushy: Vec<f64> = classified.iter().filter(|(s, _)| *s == TreeShape::Bushy).map(|p| p.1).collect();
    let linear: Vec<f64> = classified.iter().filter(|(s, _)| is_linear(*s)).map(|p| p.1).collect();
    if bushy.is_empty() || linear.is_empty() {
        return Err(PlanSpaceError::InsufficientData(format!(
            "need at least one bushy and one left-deep plan, got {} and {}",
            bushy.len(),
            linear.len()
        )));
    }
    let stat_err = |e: stats::StatsError| PlanSpaceError::InsufficientData(e.to_string());
    let full = stats::mann_whitney_u(&bushy, &linear, Alternative::TwoSided).map_err(stat_err)?;

    let mut all: Vec<f64> = classified.iter().map(|p| p.1).collect();
    all.sort_by(f64::total_cmp);
    let threshold = stats::quantile_sorted(&all, tail_quantile);
    let tail_of = |v: &[f64]| v.iter().copied().filter(|t| *t <= threshold).collect::<Vec<_>>();
    let (tb, tl) = (tail_of(&bushy), tail_of(&linear));
    let tail = if tb.is_empty() || tl.is_empty() {
        None
    } else {
        Some(TailComparison {
            bushy_count: tb.len(),
            linear_count: tl.len(),
            two_sided: stats::mann_whitney_u(&tb, &tl, Alternative::TwoSided).map_err(stat_err)?,
            bushy_faster: stats::mann_whitney_u(&tb, &tl, Alternative::Less).map_err(stat_err)?,
        })
    };

    Ok(ShapeComparison {
        per_shape: by_shape
            .into_iter()
            .filter_map(|(s, v)| Summary::of(&v).map(|sum| (s, sum)))
            .collect(),
        full,
        tail_quantile,
        tail_threshold_ms: threshold,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orders(spec: &EnumSpec) -> Vec<String> {
        enumerate_join_trees(spec).unwrap().map(|o| o.to_string()).collect()
    }

    #[test]
    fn two_relations() {
        assert_eq!(orders(&EnumSpec::new(["a", "b"])), ["(a b)", "(b a)"]);
    }

    #[test]
    fn three_relations_left_deep() {
        let spec = EnumSpec::new(["a", "b", "c"]).with_shapes([TreeShape::LeftDeep]);
        let got = orders(&spec);
        assert_eq!(got.len(), 6);
        assert!(got.iter().all(|s| s.starts_with("((")));
    }

    #[test]
    fn path_graph_excludes_cross_products() {
        let spec = EnumSpec::new(["a", "b", "c"]).with_join_graph([("a", "b"), ("b", "c")]);
        let got = orders(&spec);
        assert!(!got.contains(&"((a c) b)".to_string()));
        assert!(got.contains(&"((a b) c)".to_string()));
        // 12 trees minus the 4 that join a with c first
        assert_eq!(got.len(), 8);

        let clique = EnumSpec::new(["a", "b", "c"]).with_join_graph([("a", "b"), ("b", "c"), ("a", "c")]);
        assert_eq!(orders(&clique).len(), 12);
    }

    #[test]
    fn disconnected_graph_yields_nothing() {
        let spec = EnumSpec::new(["a", "b", "c"]).with_join_graph([("a", "b")]);
        assert_eq!(orders(&spec).len(), 0);
    }

    #[test]
    fn physical_counts() {
        let spec = EnumSpec::new(["a", "b"]).with_scan_methods([ScanMethod::SeqScan, ScanMethod::IndexScan]);
        assert_eq!(enumerate_physical(&spec).unwrap().count(), 24);
        let spec = EnumSpec::new(["a", "b"])
            .with_join_methods([JoinMethod::HashJoin])
            .with_scan_methods([ScanMethod::SeqScan]);
        assert_eq!(enumerate_physical(&spec).unwrap().count(), 2);
        let spec = EnumSpec::new(["a", "b", "c"])
            .with_join_methods([JoinMethod::HashJoin])
            .with_scan_methods([ScanMethod::SeqScan])
            .with_shapes([TreeShape::LeftDeep]);
        assert_eq!(enumerate_physical(&spec).unwrap().count(), 6);
    }

    #[test]
    fn fixed_scans() {
        let fixed: BTreeMap<String, ScanMethod> =
            [("a".to_string(), ScanMethod::IndexScan), ("b".to_string(), ScanMethod::TidScan)].into();
        let spec = EnumSpec::new(["a", "b"]).with_fixed_scans(fixed);
        let plans: Vec<_> = enumerate_physical(&spec).unwrap().collect();
        assert_eq!(plans.len(), 2 * 3);
        assert_eq!(physical_per_tree(&spec), 3);
    }

    #[test]
    fn single_relation() {
        let spec = EnumSpec::new(["a"]).with_shapes([TreeShape::Bushy]);
        assert_eq!(orders(&spec), ["a"]);
        assert_eq!(count_join_trees(1, Some(TreeShape::Bushy)), Some(1));
    }

    #[test]
    fn cap_enforced() {
        let spec = EnumSpec::new(["a", "b", "c", "d", "e", "f", "g"]);
        assert_eq!(
            enumerate_join_trees(&spec).err(),
            Some(PlanSpaceError::TooManyRelations { got: 7, cap: 6 })
        );
        assert!(enumerate_join_trees(&spec.clone().with_max_relations(7)).is_ok());
    }

    #[test]
    fn invalid_specs() {
        assert!(enumerate_join_trees(&EnumSpec::new(["a", "a"])).is_err());
        assert!(enumerate_join_trees(&EnumSpec::new(["a", "b"]).with_join_methods([])).is_err());
        assert!(enumerate_join_trees(&EnumSpec::new(["a", "b"]).with_join_graph([("a", "z")])).is_err());
        assert!(enumerate_join_trees(&EnumSpec::new(Vec::<String>::new())).is_err());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(count_join_trees(3, None), Some(12));
        assert_eq!(count_join_trees(4, None), Some(120));
        assert_eq!(count_join_trees(3, Some(TreeShape::LeftDeep)), Some(6));
        assert_eq!(count_join_trees(12, None), Some(479_001_600 * 58_786));
        assert_eq!(count_join_trees(0, None), None);
        assert_eq!(count_join_trees(13, None), None);
    }

    #[test]
    fn lazy_first_item() {
        let spec = EnumSpec::new(["a", "b", "c", "d", "e", "f"]);
        let first: Vec<_> = enumerate_physical(&spec).unwrap().take(3).collect();
        assert_eq!(first.len(), 3);
    }

    #[test]
    fn shape_comparison() {
        use JoinMethod::HashJoin;
        use ScanMethod::SeqScan;
        let l = |a: &str| PlanTree::leaf(a, SeqScan);
        let bushy = PlanTree::join(
            HashJoin,
            PlanTree::join(HashJoin, l("a"), l("b")),
            PlanTree::join(HashJoin, l("c"), l("d")),
        );
        let left = PlanTree::join(
            HashJoin,
            PlanTree::join(HashJoin, PlanTree::join(HashJoin, l("a"), l("b")), l("c")),
            l("d"),
        );
        let timings = vec![(bushy.clone(), 1.0), (bushy, 2.0), (left.clone(), 3.0), (left, 4.0)];
        let cmp = compare_shape_populations(&timings, 0.1).unwrap();
        assert_eq!(cmp.full.statistic, 0.0);
        assert!((cmp.full.p_value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cmp.per_shape[&TreeShape::Bushy].count, 2);
        // only the single fastest plan lies in the 10% tail
        assert!(cmp.tail.is_none());

        let only_left = vec![(PlanTree::join(HashJoin, l("a"), l("b")), 1.0)];
        assert!(matches!(
            compare_shape_populations(&only_left, 0.1),
            Err(PlanSpaceError::InsufficientData(_))
        ));
    }
}
