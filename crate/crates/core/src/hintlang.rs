//! Physical plans as binary join trees, and the hint-comment language used to
//! force them.
//!
//! A rendered hint looks like
//!
//! ```text
//! /*+ Leading(((a b) c)) HashJoin(a b) NestLoop(a b c) SeqScan(a) IndexScan(b) SeqScan(c) */
//! ```
//!
//! The `Leading` clause fixes the join order and the outer/inner side of every
//! join through nesting. Join atoms name the sorted alias set covered by each
//! join (post-order), scan atoms name one alias each (leaf order).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScanMethod {
    SeqScan,
    IndexScan,
    IndexOnlyScan,
    BitmapScan,
    TidScan,
}

impl ScanMethod {
    pub const ALL: [ScanMethod; 5] = [
        ScanMethod::SeqScan,
        ScanMethod::IndexScan,
        ScanMethod::IndexOnlyScan,
        ScanMethod::BitmapScan,
        ScanMethod::TidScan,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ScanMethod::SeqScan => "SeqScan",
            ScanMethod::IndexScan => "IndexScan",
            ScanMethod::IndexOnlyScan => "IndexOnlyScan",
            ScanMethod::BitmapScan => "BitmapScan",
            ScanMethod::TidScan => "TidScan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JoinMethod {
    NestLoop,
    HashJoin,
    MergeJoin,
}

impl JoinMethod {
    pub const ALL: [JoinMethod; 3] = [JoinMethod::NestLoop, JoinMethod::HashJoin, JoinMethod::MergeJoin];

    pub fn keyword(self) -> &'static str {
        match self {
            JoinMethod::NestLoop => "NestLoop",
            JoinMethod::HashJoin => "HashJoin",
            JoinMethod::MergeJoin => "MergeJoin",
        }
    }
}

impl fmt::Display for ScanMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl fmt::Display for JoinMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for ScanMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ScanMethod::ALL
            .into_iter()
            .find(|m| m.keyword().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scan method `{s}`"))
    }
}

impl FromStr for JoinMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        JoinMethod::ALL
            .into_iter()
            .find(|m| m.keyword().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown join method `{s}`"))
    }
}

/// A join order without physical methods: the content of a `Leading` clause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JoinOrder {
    Rel(String),
    Join(Box<JoinOrder>, Box<JoinOrder>),
}

impl JoinOrder {
    pub fn rel(alias: impl Into<String>) -> Self {
        JoinOrder::Rel(alias.into())
    }

    pub fn join(outer: JoinOrder, inner: JoinOrder) -> Self {
        JoinOrder::Join(Box::new(outer), Box::new(inner))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, JoinOrder::Rel(_))
    }

    /// Aliases in left-to-right leaf order.
    pub fn aliases(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_aliases(&mut out);
        out
    }

    fn collect_aliases<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            JoinOrder::Rel(a) => out.push(a),
            JoinOrder::Join(o, i) => {
                o.collect_aliases(out);
                i.collect_aliases(out);
            }
        }
    }

    pub fn join_count(&self) -> usize {
        match self {
            JoinOrder::Rel(_) => 0,
            JoinOrder::Join(o, i) => 1 + o.join_count() + i.join_count(),
        }
    }

    pub fn shape(&self) -> Option<TreeShape> {
        classify_order(self)
    }
}

/// Renders the nested group syntax, e.g. `((a b) c)`.
impl fmt::Display for JoinOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JoinOrder::Rel(a) => f.write_str(a),
            JoinOrder::Join(o, i) => write!(f, "({o} {i})"),
        }
    }
}

/// A physical plan: a full binary join tree with a scan method on every leaf
/// and a join method on every internal node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlanTree {
    Leaf {
        alias: String,
        scan: ScanMethod,
    },
    Join {
        method: JoinMethod,
        outer: Box<PlanTree>,
        inner: Box<PlanTree>,
    },
}

impl PlanTree {
    pub fn leaf(alias: impl Into<String>, scan: ScanMethod) -> Self {
        PlanTree::Leaf {
            alias: alias.into(),
            scan,
        }
    }

    pub fn join(method: JoinMethod, outer: PlanTree, inner: PlanTree) -> Self {
        PlanTree::Join {
            method,
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, PlanTree::Leaf { .. })
    }

    pub fn order(&self) -> JoinOrder {
        match self {
            PlanTree::Leaf { alias, .. } => JoinOrder::Rel(alias.clone()),
            PlanTree::Join { outer, inner, .. } => JoinOrder::join(outer.order(), inner.order()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            PlanTree::Leaf { .. } => 1,
            PlanTree::Join { outer, inner, .. } => outer.leaf_count() + inner.leaf_count(),
        }
    }

    fn check_aliases(&self) -> Result<(), HintError> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                PlanTree::Leaf { alias, .. } => {
                    if !seen.insert(alias.as_str()) {
                        return Err(HintError::DuplicateAlias(alias.clone()));
                    }
                    if !is_valid_alias(alias) {
                        return Err(HintError::BadAlias(alias.clone()));
                    }
                }
                PlanTree::Join { outer, inner, .. } => {
                    stack.push(inner);
                    stack.push(outer);
                }
            }
        }
        Ok(())
    }

    /// Post-order `(method, sorted alias set)` for every join, and leaf-order
    /// `(alias, scan)` for every leaf.
    fn atoms(&self, joins: &mut Vec<(JoinMethod, Vec<String>)>, scans: &mut Vec<(String, ScanMethod)>) -> Vec<String> {
        match self {
            PlanTree::Leaf { alias, scan } => {
                scans.push((alias.clone(), *scan));
                vec![alias.clone()]
            }
            PlanTree::Join { method, outer, inner } => {
                let mut set = outer.atoms(joins, scans);
                set.extend(inner.atoms(joins, scans));
                let mut sorted = set.clone();
                sorted.sort();
                joins.push((*method, sorted));
                set
            }
        }
    }
}

pub fn is_valid_alias(alias: &str) -> bool {
    !alias.is_empty()
        && alias
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HintError {
    #[error("alias `{0}` appears more than once in the plan")]
    DuplicateAlias(String),
    #[error("alias `{0}` is not a plain identifier")]
    BadAlias(String),
    #[error("syntax error at byte {position}: {message}")]
    SyntaxError { position: usize, message: String },
    #[error("unknown hint atom `{name}` at byte {position}")]
    UnknownAtom { position: usize, name: String },
    #[error("inconsistent hint: {0}")]
    Inconsistent(String),
}

impl HintError {
    /// Byte offset of the problem inside the hint text, when known.
    pub fn position(&self) -> Option<usize> {
        match self {
            HintError::SyntaxError { position, .. } | HintError::UnknownAtom { position, .. } => Some(*position),
            _ => None,
        }
    }
}

/// Renders a plan as a hint comment.
pub fn render_hints(tree: &PlanTree) -> Result<String, HintError> {
    tree.check_aliases()?;
    let mut joins = Vec::new();
    let mut scans = Vec::new();
    tree.atoms(&mut joins, &mut scans);
    let mut out = format!("/*+ Leading({})", tree.order());
    for (method, aliases) in &joins {
        out.push(' ');
        out.push_str(method.keyword());
        out.push('(');
        out.push_str(&aliases.join(" "));
        out.push(')');
    }
    for (alias, scan) in &scans {
        out.push_str(&format!(" {}({alias})", scan.keyword()));
    }
    out.push_str(" */");
    Ok(out)
}

/// One join or scan atom from a hint comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HintAtom {
    Join { method: JoinMethod, aliases: Vec<String> },
    Scan { method: ScanMethod, alias: String },
}

/// Parsed content of a hint comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintSet {
    pub leading: JoinOrder,
    pub atoms: Vec<HintAtom>,
}

impl HintSet {
    /// The leading clause text, e.g. `Leading(((a b) c))`.
    pub fn leading_clause(&self) -> String {
        format!("Leading({})", self.leading)
    }

    pub fn join_atoms(&self) -> impl Iterator<Item = (JoinMethod, &[String])> {
        self.atoms.iter().filter_map(|a| match a {
            HintAtom::Join { method, aliases } => Some((*method, aliases.as_slice())),
            HintAtom::Scan { .. } => None,
        })
    }

    pub fn scan_atoms(&self) -> impl Iterator<Item = (ScanMethod, &str)> {
        self.atoms.iter().filter_map(|a| match a {
            HintAtom::Scan { method, alias } => Some((*method, alias.as_str())),
            HintAtom::Join { .. } => None,
        })
    }

    /// Rebuilds the plan tree the hint forces.
    pub fn to_plan_tree(&self) -> Result<PlanTree, HintError> {
        let scans: BTreeMap<&str, ScanMethod> = self.scan_atoms().map(|(m, a)| (a, m)).collect();
        let joins: BTreeMap<&[String], JoinMethod> = self.join_atoms().map(|(m, a)| (a, m)).collect();
        build_tree(&self.leading, &scans, &joins).map(|(tree, _)| tree)
    }

    fn check(&self) -> Result<(), HintError> {
        let leaves = self.leading.aliases();
        let mut known = BTreeSet::new();
        for alias in &leaves {
            if !known.insert(*alias) {
                return Err(HintError::DuplicateAlias(alias.to_string()));
            }
        }
        let mut scanned = BTreeSet::new();
        for (_, alias) in self.scan_atoms() {
            if !known.contains(alias) {
                return Err(HintError::Inconsistent(format!("scan atom references `{alias}` which is not in Leading")));
            }
            if !scanned.insert(alias) {
                return Err(HintError::Inconsistent(format!("more than one scan atom for `{alias}`")));
            }
        }
        if scanned.len() != known.len() {
            let missing: Vec<_> = known.difference(&scanned).collect();
            return Err(HintError::Inconsistent(format!("no scan atom for {missing:?}")));
        }
        let mut join_sets = BTreeSet::new();
        for (_, aliases) in self.join_atoms() {
            if let Some(a) = aliases.iter().find(|a| !known.contains(a.as_str())) {
                return Err(HintError::Inconsistent(format!("join atom references `{a}` which is not in Leading")));
            }
            if !join_sets.insert(aliases) {
                return Err(HintError::Inconsistent(format!("more than one join atom for {aliases:?}")));
            }
        }
        self.to_plan_tree().map(|_| ())
    }
}

fn build_tree(
    order: &JoinOrder,
    scans: &BTreeMap<&str, ScanMethod>,
    joins: &BTreeMap<&[String], JoinMethod>,
) -> Result<(PlanTree, Vec<String>), HintError> {
    match order {
        JoinOrder::Rel(alias) => {
            let scan = scans
                .get(alias.as_str())
                .ok_or_else(|| HintError::Inconsistent(format!("no scan atom for `{alias}`")))?;
            Ok((PlanTree::leaf(alias.clone(), *scan), vec![alias.clone()]))
        }
        JoinOrder::Join(o, i) => {
            let (outer, mut set) = build_tree(o, scans, joins)?;
            let (inner, inner_set) = build_tree(i, scans, joins)?;
            set.extend(inner_set);
            set.sort();
            let method = joins
                .get(set.as_slice())
                .ok_or_else(|| HintError::Inconsistent(format!("no join atom for ({})", set.join(" "))))?;
            Ok((PlanTree::join(*method, outer, inner), set))
        }
    }
}

impl FromStr for HintSet {
    type Err = HintError;
    fn from_str(s: &str) -> Result<Self, HintError> {
        parse_hints(s)
    }
}

/// Parses a hint comment of the form produced by [`render_hints`].
///
/// Atoms may appear in any order and whitespace is free, but the comment must
/// contain exactly one `Leading` clause, one scan atom per alias and one join
/// atom per join of the leading structure.
pub fn parse_hints(text: &str) -> Result<HintSet, HintError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    p.expect("/*+")?;
    let mut leading = None;
    let mut atoms = Vec::new();
    loop {
        p.skip_ws();
        if p.rest().starts_with("*/") {
            p.pos += 2;
            break;
        }
        if p.rest().is_empty() {
            return Err(p.error("unterminated hint comment, expected `*/`"));
        }
        let start = p.pos;
        let name = p.ident()?;
        p.skip_ws();
        if name == "Leading" {
            p.expect("(")?;
            p.skip_ws();
            let group = p.group()?;
            p.skip_ws();
            p.expect(")")?;
            if leading.replace(group).is_some() {
                return Err(HintError::SyntaxError {
                    position: start,
                    message: "duplicate Leading clause".into(),
                });
            }
        } else if let Some(method) = JoinMethod::ALL.into_iter().find(|m| m.keyword() == name) {
            let mut aliases = p.alias_list()?;
            if aliases.len() < 2 {
                return Err(HintError::SyntaxError {
                    position: start,
                    message: format!("{name} needs at least two aliases"),
                });
            }
            aliases.sort();
            atoms.push(HintAtom::Join { method, aliases });
        } else if let Some(method) = ScanMethod::ALL.into_iter().find(|m| m.keyword() == name) {
            let aliases = p.alias_list()?;
            if aliases.len() != 1 {
                return Err(HintError::SyntaxError {
                    position: start,
                    message: format!("{name} takes exactly one alias"),
                });
            }
            atoms.push(HintAtom::Scan {
                method,
                alias: aliases.into_iter().next().unwrap(),
            });
        } else {
            return Err(HintError::UnknownAtom {
                position: start,
                name: name.to_string(),
            });
        }
    }
    p.skip_ws();
    if !p.rest().is_empty() {
        return Err(p.error("unexpected text after hint comment"));
    }
    let leading = leading.ok_or(HintError::SyntaxError {
        position: 0,
        message: "missing Leading clause".into(),
    })?;
    let set = HintSet { leading, atoms };
    set.check()?;
    Ok(set)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn error(&self, message: impl Into<String>) -> HintError {
        HintError::SyntaxError {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn expect(&mut self, token: &str) -> Result<(), HintError> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`")))
        }
    }

    fn ident(&mut self) -> Result<&'a str, HintError> {
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|&(_, c)| !(c.is_alphanumeric() || c == '_' || c == '$'))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(self.error("expected an identifier"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    /// `<group> ::= alias | (<group> <group>)`
    fn group(&mut self) -> Result<JoinOrder, HintError> {
        if self.rest().starts_with('(') {
            self.pos += 1;
            self.skip_ws();
            let outer = self.group()?;
            self.skip_ws();
            if self.rest().starts_with(')') {
                return Err(self.error("a join group needs exactly two members"));
            }
            let inner = self.group()?;
            self.skip_ws();
            self.expect(")")?;
            Ok(JoinOrder::join(outer, inner))
        } else {
            Ok(JoinOrder::Rel(self.ident()?.to_string()))
        }
    }

    fn alias_list(&mut self) -> Result<Vec<String>, HintError> {
        self.expect("(")?;
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.rest().starts_with(')') {
                self.pos += 1;
                return Ok(out);
            }
            out.push(self.ident()?.to_string());
        }
    }
}

/// Structural class of a join tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeShape {
    LeftDeep,
    RightDeep,
    Zigzag,
    Bushy,
}

impl TreeShape {
    pub const ALL: [TreeShape; 4] = [TreeShape::LeftDeep, TreeShape::RightDeep, TreeShape::Zigzag, TreeShape::Bushy];

    pub fn name(self) -> &'static str {
        match self {
            TreeShape::LeftDeep => "left_deep",
            TreeShape::RightDeep => "right_deep",
            TreeShape::Zigzag => "zigzag",
            TreeShape::Bushy => "bushy",
        }
    }
}

impl fmt::Display for TreeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TreeShape {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.replace('-', "_");
        TreeShape::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| format!("unknown tree shape `{s}`"))
    }
}

/// Per-join flags: (outer is a leaf, inner is a leaf).
fn join_leaf_flags(order: &JoinOrder, out: &mut Vec<(bool, bool)>) {
    if let JoinOrder::Join(o, i) = order {
        out.push((o.is_leaf(), i.is_leaf()));
        join_leaf_flags(o, out);
        join_leaf_flags(i, out);
    }
}

/// True when every join's inner child is a base relation.
pub fn is_left_deep(order: &JoinOrder) -> bool {
    let mut flags = Vec::new();
    join_leaf_flags(order, &mut flags);
    flags.iter().all(|&(_, inner)| inner)
}

/// True when every join's outer child is a base relation.
pub fn is_right_deep(order: &JoinOrder) -> bool {
    let mut flags = Vec::new();
    join_leaf_flags(order, &mut flags);
    flags.iter().all(|&(outer, _)| outer)
}

fn classify_order(order: &JoinOrder) -> Option<TreeShape> {
    let mut flags = Vec::new();
    join_leaf_flags(order, &mut flags);
    if flags.is_empty() {
        return None;
    }
    // single-join trees satisfy both deep predicates; they count as left-deep
    let shape = if flags.iter().all(|&(_, inner)| inner) {
        TreeShape::LeftDeep
    } else if flags.iter().all(|&(outer, _)| outer) {
        TreeShape::RightDeep
    } else if flags.iter().all(|&(outer, inner)| outer || inner) {
        TreeShape::Zigzag
    } else {
        TreeShape::Bushy
    };
    Some(shape)
}

/// Classifies a plan with at least one join. Returns `None` for a single
/// base relation.
pub fn classify_shape(tree: &PlanTree) -> Option<TreeShape> {
    classify_order(&tree.order())
}
