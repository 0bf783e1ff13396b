mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use proptest::prelude::*;
use qobench::splitter::{sample_split, validate_split, SplitMethod, SplitSpec, SplitViolation, SHIPPED_SEEDS};
use qobench::workload::{load_workload, parse_query_id, NamingConvention, QueryId, Workload};

use common::{job_workload, small_workload, JOB_VARIANTS};

fn family_of(id: &QueryId) -> String {
    id.family().to_string()
}

fn families(w: &Workload) -> BTreeMap<String, BTreeSet<QueryId>> {
    let mut out: BTreeMap<String, BTreeSet<QueryId>> = BTreeMap::new();
    for q in w.queries() {
        out.entry(family_of(&q.id)).or_default().insert(q.id.clone());
    }
    out
}

fn all_ids(w: &Workload) -> BTreeSet<QueryId> {
    w.queries().iter().map(|q| q.id.clone()).collect()
}

#[test]
fn fixture_mirrors_benchmark_counts() {
    let w = job_workload();
    assert_eq!(w.len(), 113);
    assert_eq!(families(&w).len(), 33);
    assert_eq!(JOB_VARIANTS.iter().sum::<usize>(), 113);
    assert_eq!(w.families().values().map(Vec::len).sum::<usize>(), w.len());
}

#[test]
fn query_id_examples() {
    let id = parse_query_id("1a.sql", NamingConvention::Job).unwrap();
    assert_eq!((id.family(), id.variant()), ("1", "a"));
    let id = parse_query_id("33c.sql", NamingConvention::Job).unwrap();
    assert_eq!((id.family(), id.variant()), ("33", "c"));
    let id = parse_query_id("q16/042.sql", NamingConvention::TemplateDir).unwrap();
    assert_eq!((id.family(), id.variant()), ("q16", "042"));
    assert!(parse_query_id("a1.sql", NamingConvention::Job).is_err());
}

#[test]
fn load_is_deterministic_and_numeric_aware() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["10a", "2a", "1b", "1a"] {
        fs::write(dir.path().join(format!("{name}.sql")), format!("SELECT '{name}';\n")).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let a = load_workload(dir.path(), "w", NamingConvention::Job).unwrap();
    let b = load_workload(dir.path(), "w", NamingConvention::Job).unwrap();
    assert_eq!(a, b);
    let order: Vec<String> = a.queries().iter().map(|q| q.id.to_string()).collect();
    assert_eq!(order, ["1a", "1b", "2a", "10a"]);
    assert_eq!(a.family_count(), 3);
    assert_eq!(a.queries()[0].sql_text, "SELECT '1a';\n");
}

#[test]
fn template_dir_layout() {
    let dir = tempfile::tempdir().unwrap();
    for (fam, var) in [("q16", "042"), ("q16", "007"), ("q2", "001")] {
        fs::create_dir_all(dir.path().join(fam)).unwrap();
        fs::write(dir.path().join(fam).join(format!("{var}.sql")), "SELECT 1").unwrap();
    }
    let w = load_workload(dir.path(), "stack", NamingConvention::TemplateDir).unwrap();
    let order: Vec<String> = w.queries().iter().map(|q| q.id.to_string()).collect();
    assert_eq!(order, ["q2/001", "q16/007", "q16/042"]);
}

#[test]
fn reported_split_sizes() {
    let w = job_workload();
    let loo = sample_split(&w, SplitMethod::LeaveOneOut, SHIPPED_SEEDS[0]).unwrap();
    assert_eq!((loo.train.len(), loo.test.len()), (80, 33));
    let random = sample_split(&w, SplitMethod::Random { ratio: 0.2 }, SHIPPED_SEEDS[0]).unwrap();
    assert_eq!(random.test.len(), 23);
    let base = sample_split(&w, SplitMethod::BaseQuery { ratio: 0.2 }, SHIPPED_SEEDS[0]).unwrap();
    let test_families: BTreeSet<String> = base.test.iter().map(family_of).collect();
    assert_eq!(test_families.len(), 7);
    for split in [&loo, &random, &base] {
        assert!(validate_split(&w, split).is_empty());
    }
}

#[test]
fn distinct_seeds_give_distinct_test_sets() {
    let w = job_workload();
    for method in [SplitMethod::LeaveOneOut, SplitMethod::Random { ratio: 0.2 }, SplitMethod::BaseQuery { ratio: 0.2 }] {
        let sets: BTreeSet<BTreeSet<QueryId>> = (0..10u64).map(|s| sample_split(&w, method, s).unwrap().test).collect();
        assert!(sets.len() >= 2, "{method}");
    }
}

#[test]
fn violations_are_listed() {
    let w = small_workload(&["1a", "1b", "2a", "2b", "5a", "5b"]);
    let mut split = sample_split(&w, SplitMethod::LeaveOneOut, 7).unwrap();
    let one_a: QueryId = "1a".parse().unwrap();
    split.train.insert(one_a.clone());
    split.test.insert(one_a.clone());
    assert!(validate_split(&w, &split).contains(&SplitViolation::InBothSets(one_a)));

    let mut split = sample_split(&w, SplitMethod::BaseQuery { ratio: 0.3 }, 7).unwrap();
    let five_a: QueryId = "5a".parse().unwrap();
    let five_b: QueryId = "5b".parse().unwrap();
    split.train.remove(&five_a);
    split.test.remove(&five_a);
    split.train.remove(&five_b);
    split.test.remove(&five_b);
    split.train.insert(five_a);
    split.test.insert(five_b);
    assert!(validate_split(&w, &split).contains(&SplitViolation::FamilyStraddles { family: "5".into() }));
}

#[test]
fn split_file_round_trip() {
    let w = job_workload();
    let split = sample_split(&w, SplitMethod::Random { ratio: 0.2 }, SHIPPED_SEEDS[1]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    split.save(&path).unwrap();
    let first = fs::read(&path).unwrap();
    let back = SplitSpec::load(&path).unwrap();
    assert_eq!(back, split);
    back.save(&path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);
}

fn method_strategy() -> impl Strategy<Value = SplitMethod> {
    prop_oneof![
        Just(SplitMethod::LeaveOneOut),
        (0.05f64..0.6).prop_map(|ratio| SplitMethod::Random { ratio }),
        (0.05f64..0.6).prop_map(|ratio| SplitMethod::BaseQuery { ratio }),
    ]
}

proptest! {
    #[test]
    fn splits_are_deterministic_partitions(method in method_strategy(), seed in any::<u64>()) {
        let w = job_workload();
        let a = sample_split(&w, method, seed).unwrap();
        let b = sample_split(&w, method, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.train.is_disjoint(&a.test));
        let union: BTreeSet<QueryId> = a.train.union(&a.test).cloned().collect();
        prop_assert_eq!(union, all_ids(&w));
        prop_assert!(validate_split(&w, &a).is_empty());
        for (_, members) in families(&w) {
            let held = members.iter().filter(|id| a.test.contains(*id)).count();
            match method {
                SplitMethod::LeaveOneOut => prop_assert_eq!(held, 1),
                SplitMethod::BaseQuery { .. } => prop_assert!(held == 0 || held == members.len()),
                SplitMethod::Random { .. } => {}
            }
        }
    }

    #[test]
    fn job_ids_round_trip(family in 1u32..1000, variant in "[a-z]{1,3}") {
        let text = format!("{family}{variant}");
        let id = parse_query_id(&format!("{text}.sql"), NamingConvention::Job).unwrap();
        prop_assert_eq!(id.to_string(), text.clone());
        prop_assert_eq!(text.parse::<QueryId>().unwrap(), id);
    }
}
