mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use proptest::prelude::*;
use qobench::hintlang::{parse_hints, render_hints, JoinMethod, PlanTree, ScanMethod, TreeShape};
use qobench::planspace::{
    candidate_tree_count, compare_shape_populations, count_join_trees, enumerate_join_trees, enumerate_physical,
    physical_per_tree, EnumSpec, PlanSpaceError,
};

use common::{aliases, all_trees, rendered, OTree};

const SHAPES: [TreeShape; 4] = [TreeShape::LeftDeep, TreeShape::RightDeep, TreeShape::Zigzag, TreeShape::Bushy];

/// Filter semantics: the deep filters test their structural predicate, the
/// other two test the classification; a lone relation passes every filter.
fn passes(tree: &OTree, shape: TreeShape) -> bool {
    let mut joins = Vec::new();
    fn walk<'a>(t: &'a OTree, out: &mut Vec<(&'a OTree, &'a OTree)>) {
        if let OTree::Node(o, i) = t {
            out.push((o, i));
            walk(o, out);
            walk(i, out);
        }
    }
    walk(tree, &mut joins);
    let is_leaf = |t: &OTree| matches!(t, OTree::Leaf(_));
    match shape {
        TreeShape::LeftDeep => joins.iter().all(|(_, i)| is_leaf(i)),
        TreeShape::RightDeep => joins.iter().all(|(o, _)| is_leaf(o)),
        TreeShape::Zigzag => joins.is_empty() || tree.shape() == Some("zigzag"),
        TreeShape::Bushy => joins.is_empty() || tree.shape() == Some("bushy"),
    }
}

fn enumerated(spec: &EnumSpec) -> Vec<String> {
    enumerate_join_trees(spec).unwrap().map(|t| t.to_string()).collect()
}

#[test]
fn unfiltered_trees_match_oracle() {
    for n in 1..=6 {
        let names = aliases(n);
        let got = enumerated(&EnumSpec::new(names.clone()));
        let unique: BTreeSet<String> = got.iter().cloned().collect();
        assert_eq!(unique.len(), got.len(), "duplicates at n={n}");
        let oracle = rendered(&all_trees(&names));
        assert_eq!(unique, oracle, "n={n}");
        assert_eq!(got.len() as u64, count_join_trees(n, None).unwrap());
    }
    assert_eq!(count_join_trees(3, None), Some(12));
    assert_eq!(count_join_trees(4, None), Some(120));
    assert_eq!(enumerated(&EnumSpec::new(["a", "b"])), ["(a b)", "(b a)"]);
}

#[test]
fn shape_filters_match_oracle() {
    for n in 1..=5 {
        let names = aliases(n);
        let trees = all_trees(&names);
        for shape in SHAPES {
            let got = enumerated(&EnumSpec::new(names.clone()).with_shapes([shape]));
            let oracle: BTreeSet<String> = trees.iter().filter(|t| passes(t, shape)).map(OTree::render).collect();
            assert_eq!(got.iter().cloned().collect::<BTreeSet<_>>(), oracle, "n={n} {shape:?}");
            assert_eq!(got.len(), oracle.len());
            assert_eq!(got.len() as u64, count_join_trees(n, Some(shape)).unwrap(), "n={n} {shape:?}");
        }
        let got = enumerated(&EnumSpec::new(names.clone()).with_shapes([TreeShape::Zigzag, TreeShape::Bushy]));
        let oracle: BTreeSet<String> = trees
            .iter()
            .filter(|t| passes(t, TreeShape::Zigzag) || passes(t, TreeShape::Bushy))
            .map(OTree::render)
            .collect();
        assert_eq!(got.into_iter().collect::<BTreeSet<_>>(), oracle);
    }
    assert_eq!(count_join_trees(3, Some(TreeShape::LeftDeep)), Some(6));
    assert_eq!(count_join_trees(2, Some(TreeShape::RightDeep)), Some(2));
}

fn oracle_physical(tree: &OTree, joins: &[JoinMethod], scans: &[ScanMethod]) -> Vec<PlanTree> {
    match tree {
        OTree::Leaf(a) => scans.iter().map(|s| PlanTree::leaf(a.clone(), *s)).collect(),
        OTree::Node(o, i) => {
            let mut out = Vec::new();
            for outer in oracle_physical(o, joins, scans) {
                for inner in oracle_physical(i, joins, scans) {
                    for m in joins {
                        out.push(PlanTree::join(*m, outer.clone(), inner.clone()));
                    }
                }
            }
            out
        }
    }
}

#[test]
fn physical_plans_match_oracle() {
    use JoinMethod::*;
    use ScanMethod::*;
    let cases: [(usize, Vec<JoinMethod>, Vec<ScanMethod>); 4] = [
        (2, vec![NestLoop, HashJoin, MergeJoin], vec![SeqScan, IndexScan]),
        (2, vec![HashJoin], vec![SeqScan]),
        (3, JoinMethod::ALL.to_vec(), ScanMethod::ALL.to_vec()),
        (4, vec![HashJoin, NestLoop], vec![SeqScan, IndexScan]),
    ];
    for (n, joins, scans) in cases {
        let names = aliases(n);
        let spec = EnumSpec::new(names.clone()).with_join_methods(joins.clone()).with_scan_methods(scans.clone());
        let got: Vec<PlanTree> = enumerate_physical(&spec).unwrap().collect();
        let unique: BTreeSet<PlanTree> = got.iter().cloned().collect();
        assert_eq!(unique.len(), got.len());
        let oracle: BTreeSet<PlanTree> = all_trees(&names).iter().flat_map(|t| oracle_physical(t, &joins, &scans)).collect();
        assert_eq!(unique, oracle);
        let trees = count_join_trees(n, None).unwrap() as u128;
        assert_eq!(got.len() as u128, trees * physical_per_tree(&spec));
    }
    let spec = EnumSpec::new(["a", "b"]).with_join_methods([NestLoop, HashJoin, MergeJoin]).with_scan_methods([SeqScan, IndexScan]);
    assert_eq!(enumerate_physical(&spec).unwrap().count(), 24);
    let spec = EnumSpec::new(["a", "b", "c"])
        .with_join_methods([HashJoin])
        .with_scan_methods([SeqScan])
        .with_shapes([TreeShape::LeftDeep]);
    assert_eq!(enumerate_physical(&spec).unwrap().count(), 6);
}

#[test]
fn fixed_scans_hold() {
    let fixed: BTreeMap<String, ScanMethod> =
        [("a", ScanMethod::IndexScan), ("b", ScanMethod::SeqScan), ("c", ScanMethod::BitmapScan)]
            .into_iter()
            .map(|(a, s)| (a.to_string(), s))
            .collect();
    let spec = EnumSpec::new(["a", "b", "c"]).with_join_methods([JoinMethod::HashJoin]).with_fixed_scans(fixed.clone());
    let plans: Vec<PlanTree> = enumerate_physical(&spec).unwrap().collect();
    assert_eq!(plans.len(), 12);
    for plan in &plans {
        for (method, alias) in parse_hints(&render_hints(plan).unwrap()).unwrap().scan_atoms() {
            assert_eq!(fixed[alias], method);
        }
    }
}

#[test]
fn join_graph_excludes_cross_products() {
    let path = EnumSpec::new(["a", "b", "c"]).with_join_graph([("a", "b"), ("b", "c")]);
    let got: BTreeSet<String> = enumerated(&path).into_iter().collect();
    assert!(!got.contains("((a c) b)"));
    assert!(got.contains("((a b) c)"));
    let clique = EnumSpec::new(["a", "b", "c"]).with_join_graph([("a", "b"), ("b", "c"), ("a", "c")]);
    assert_eq!(enumerated(&clique).len(), 12);
}

#[test]
fn every_plan_renders_to_a_parseable_hint() {
    let spec = EnumSpec::new(aliases(4)).with_join_methods([JoinMethod::HashJoin, JoinMethod::MergeJoin]);
    for plan in enumerate_physical(&spec).unwrap().step_by(97) {
        let text = render_hints(&plan).unwrap();
        assert_eq!(parse_hints(&text).unwrap().to_plan_tree().unwrap(), plan);
    }
}

#[test]
fn stream_is_lazy() {
    let spec = EnumSpec::new(aliases(6));
    assert!(candidate_tree_count(&spec).unwrap() == 30240);
    let start = Instant::now();
    let first: Vec<PlanTree> = enumerate_physical(&spec).unwrap().take(1000).collect();
    assert_eq!(first.len(), 1000);
    assert!(start.elapsed().as_secs_f64() < 2.0, "{:?}", start.elapsed());
}

#[test]
fn relation_caps() {
    assert!(matches!(
        enumerate_join_trees(&EnumSpec::new(aliases(7))),
        Err(PlanSpaceError::TooManyRelations { got: 7, cap: 6 })
    ));
    assert!(enumerate_join_trees(&EnumSpec::new(aliases(7)).with_max_relations(7)).is_ok());
    let many: Vec<String> = (0..17).map(|i| format!("r{i}")).collect();
    assert!(matches!(
        enumerate_join_trees(&EnumSpec::new(many).with_max_relations(100)),
        Err(PlanSpaceError::TooManyRelations { cap: 16, .. })
    ));
}

fn bushy(ms: f64) -> (PlanTree, f64) {
    let l = |a: &str| PlanTree::leaf(a, ScanMethod::SeqScan);
    let j = |o, i| PlanTree::join(JoinMethod::HashJoin, o, i);
    (j(j(l("a"), l("b")), j(l("c"), l("d"))), ms)
}

fn left_deep(ms: f64) -> (PlanTree, f64) {
    let l = |a: &str| PlanTree::leaf(a, ScanMethod::SeqScan);
    let j = |o, i| PlanTree::join(JoinMethod::HashJoin, o, i);
    (j(j(j(l("a"), l("b")), l("c")), l("d")), ms)
}

#[test]
fn shape_population_comparison() {
    let timings = [bushy(1.0), bushy(2.0), left_deep(3.0), left_deep(4.0)];
    let cmp = compare_shape_populations(&timings, 0.1).unwrap();
    assert!((cmp.full.p_value - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(cmp.full.statistic, 0.0);

    let same = [bushy(5.0), bushy(7.0), left_deep(5.0), left_deep(7.0)];
    assert!((compare_shape_populations(&same, 0.1).unwrap().full.p_value - 1.0).abs() < 1e-12);

    assert!(matches!(
        compare_shape_populations(&[bushy(1.0), bushy(2.0)], 0.1),
        Err(PlanSpaceError::InsufficientData(_))
    ));
}

proptest! {
    #[test]
    fn join_graph_filter_matches_oracle(n in 2usize..=5, bits in any::<u16>()) {
        let names = aliases(n);
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if bits & (1 << k) != 0 {
                    edges.push((names[i].clone(), names[j].clone()));
                }
                k += 1;
            }
        }
        let spec = EnumSpec::new(names.clone()).with_join_graph(edges.clone());
        let oracle: BTreeSet<String> = all_trees(&names).iter().filter(|t| t.respects(&edges)).map(OTree::render).collect();
        match enumerate_join_trees(&spec) {
            Ok(trees) => {
                let got: Vec<String> = trees.map(|t| t.to_string()).collect();
                prop_assert_eq!(got.len(), oracle.len());
                prop_assert_eq!(got.into_iter().collect::<BTreeSet<_>>(), oracle);
            }
            Err(_) => prop_assert!(oracle.is_empty()),
        }
    }
}
