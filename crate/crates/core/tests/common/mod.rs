//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod pg;

use std::collections::BTreeSet;

use qobench::dbms::{ConfigProfile, ConnectOptions, ScriptedClient, Session};
use qobench::workload::{Query, QueryId, Workload};

/// Variants per family of the Join Order Benchmark, families 1 through 33.
pub const JOB_VARIANTS: [usize; 33] = [
    4, 4, 3, 3, 3, 6, 3, 4, 4, 3, 4, 3, 4, 3, 4, 4, 6, 3, 4, 3, 3, 4, 3, 2, 3, 3, 3, 3, 3, 3, 3, 2, 3,
];

/// A synthetic workload with the benchmark's 113 query ids.
pub fn job_workload() -> Workload {
    let mut queries = Vec::new();
    for (f, &count) in JOB_VARIANTS.iter().enumerate() {
        for v in 0..count {
            let variant = ((b'a' + v as u8) as char).to_string();
            let id = QueryId::new((f + 1).to_string(), variant).unwrap();
            let sql = format!("SELECT {} FROM t{};", f + 1, f + 1);
            queries.push(Query::new(id, sql, "synthetic").unwrap());
        }
    }
    Workload::new("job", queries).unwrap()
}

/// A small workload whose queries are named `<family><variant>`.
pub fn small_workload(ids: &[&str]) -> Workload {
    let queries = ids
        .iter()
        .map(|id| Query::new(id.parse().unwrap(), format!("SELECT '{id}'"), "synthetic").unwrap())
        .collect();
    Workload::new("small", queries).unwrap()
}

/// A session over a scripted client with no profile applied.
pub fn scripted_session(client: ScriptedClient) -> Session<ScriptedClient> {
    Session::open(client, &ConfigProfile::empty(), &ConnectOptions::default()).unwrap()
}

/// A scripted client whose server-scope values match the framework profile.
pub fn framework_client() -> ScriptedClient {
    ScriptedClient::new()
        .with_setting("shared_buffers", "32GB")
        .with_setting("max_worker_processes", "8")
        .with_setting("autovacuum", "off")
}

/// A join tree built independently of the library.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum OTree {
    Leaf(String),
    Node(Box<OTree>, Box<OTree>),
}

impl OTree {
    pub fn render(&self) -> String {
        match self {
            OTree::Leaf(a) => a.clone(),
            OTree::Node(o, i) => format!("({} {})", o.render(), i.render()),
        }
    }

    fn leaves(&self, out: &mut Vec<String>) {
        match self {
            OTree::Leaf(a) => out.push(a.clone()),
            OTree::Node(o, i) => {
                o.leaves(out);
                i.leaves(out);
            }
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, OTree::Leaf(_))
    }

    /// Shape by definition: left-deep when every inner child is a relation,
    /// right-deep when every outer child is, zigzag when every join has at
    /// least one relation child, bushy otherwise. One join counts as left-deep.
    pub fn shape(&self) -> Option<&'static str> {
        let mut joins = Vec::new();
        fn walk<'a>(t: &'a OTree, out: &mut Vec<(&'a OTree, &'a OTree)>) {
            if let OTree::Node(o, i) = t {
                out.push((o, i));
                walk(o, out);
                walk(i, out);
            }
        }
        walk(self, &mut joins);
        if joins.is_empty() {
            return None;
        }
        Some(if joins.iter().all(|(_, i)| i.is_leaf()) {
            "left_deep"
        } else if joins.iter().all(|(o, _)| o.is_leaf()) {
            "right_deep"
        } else if joins.iter().all(|(o, i)| o.is_leaf() || i.is_leaf()) {
            "zigzag"
        } else {
            "bushy"
        })
    }

    /// Every join connects its two inputs through an edge of `edges`.
    pub fn respects(&self, edges: &[(String, String)]) -> bool {
        match self {
            OTree::Leaf(_) => true,
            OTree::Node(o, i) => {
                let (mut l, mut r) = (Vec::new(), Vec::new());
                o.leaves(&mut l);
                i.leaves(&mut r);
                let linked = edges.iter().any(|(a, b)| {
                    (l.contains(a) && r.contains(b)) || (l.contains(b) && r.contains(a))
                });
                linked && o.respects(edges) && i.respects(edges)
            }
        }
    }
}

pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Every full binary bracketing of a fixed leaf sequence.
pub fn bracketings(leaves: &[String]) -> Vec<OTree> {
    if leaves.len() == 1 {
        return vec![OTree::Leaf(leaves[0].clone())];
    }
    let mut out = Vec::new();
    for cut in 1..leaves.len() {
        for l in bracketings(&leaves[..cut]) {
            for r in bracketings(&leaves[cut..]) {
                out.push(OTree::Node(Box::new(l.clone()), Box::new(r)));
            }
        }
    }
    out
}

/// All ordered join trees over `aliases`: every permutation of the leaves
/// under every bracketing. Each tree arises from exactly one such pair.
pub fn all_trees(aliases: &[String]) -> Vec<OTree> {
    permutations(aliases).iter().flat_map(|p| bracketings(p)).collect()
}

pub fn rendered(trees: &[OTree]) -> BTreeSet<String> {
    trees.iter().map(OTree::render).collect()
}

pub fn aliases(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
}

/// Mann-Whitney U by direct pair counting: pairs with x above y count 1,
/// ties count one half.
pub fn u_by_pairs(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for a in x {
        for b in y {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

/// Exact p-values from every way of choosing which pooled values form `x`:
/// (two-sided, less, greater).
pub fn mwu_permutation_oracle(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let n1 = x.len();
    let observed = u_by_pairs(x, y);
    let centre = (x.len() * y.len()) as f64 / 2.0;
    let (mut total, mut two, mut less, mut greater) = (0u64, 0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                a.push(*v);
            } else {
                b.push(*v);
            }
        }
        let u = u_by_pairs(&a, &b);
        total += 1;
        if (u - centre).abs() >= (observed - centre).abs() {
            two += 1;
        }
        if u <= observed {
            less += 1;
        }
        if u >= observed {
            greater += 1;
        }
    }
    let t = total as f64;
    (observed, two as f64 / t, less as f64 / t, greater as f64 / t)
}

use qobench::hintlang::{JoinMethod, PlanTree, ScanMethod};
use qobench::rng::SplitMix64;

/// A random plan over `n` leaves named from a wider alias pool, with random
/// outer/inner structure and random methods.
pub fn random_plan(rng: &mut SplitMix64, n: usize) -> PlanTree {
    let pool = ["a", "b", "c", "mi", "t", "ci", "kw", "n1", "x_2", "cn"];
    let mut names: Vec<&str> = pool.to_vec();
    rng.shuffle(&mut names);
    fn build(rng: &mut SplitMix64, names: &[&str]) -> PlanTree {
        if names.len() == 1 {
            let scan = ScanMethod::ALL[rng.below_usize(ScanMethod::ALL.len())];
            return PlanTree::leaf(names[0], scan);
        }
        let cut = 1 + rng.below_usize(names.len() - 1);
        let method = JoinMethod::ALL[rng.below_usize(JoinMethod::ALL.len())];
        PlanTree::join(method, build(rng, &names[..cut]), build(rng, &names[cut..]))
    }
    build(rng, &names[..n])
}
