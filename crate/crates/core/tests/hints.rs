mod common;

use proptest::prelude::*;
use qobench::hintlang::{
    classify_shape, parse_hints, render_hints, HintError, JoinMethod::*, PlanTree, ScanMethod::*, TreeShape,
};
use qobench::rng::SplitMix64;

use common::random_plan;

fn leaf(a: &str, s: qobench::hintlang::ScanMethod) -> PlanTree {
    PlanTree::leaf(a, s)
}

#[test]
fn worked_examples_are_byte_exact() {
    let t = PlanTree::join(HashJoin, leaf("a", SeqScan), leaf("b", SeqScan));
    assert_eq!(render_hints(&t).unwrap(), "/*+ Leading((a b)) HashJoin(a b) SeqScan(a) SeqScan(b) */");

    let t = PlanTree::join(NestLoop, PlanTree::join(HashJoin, leaf("a", SeqScan), leaf("b", IndexScan)), leaf("c", SeqScan));
    assert_eq!(
        render_hints(&t).unwrap(),
        "/*+ Leading(((a b) c)) HashJoin(a b) NestLoop(a b c) SeqScan(a) IndexScan(b) SeqScan(c) */"
    );

    let t = PlanTree::join(
        MergeJoin,
        PlanTree::join(HashJoin, leaf("a", SeqScan), leaf("b", SeqScan)),
        PlanTree::join(NestLoop, leaf("c", SeqScan), leaf("d", TidScan)),
    );
    let text = render_hints(&t).unwrap();
    assert!(text.starts_with("/*+ Leading(((a b) (c d))) "), "{text}");
}

#[test]
fn parse_examples() {
    let set = parse_hints("/*+ Leading((a b)) HashJoin(a b) SeqScan(a) SeqScan(b) */").unwrap();
    assert_eq!(set.join_atoms().count(), 1);
    assert_eq!(set.scan_atoms().count(), 2);
    assert!(matches!(parse_hints("/*+ Leading((a b) */"), Err(HintError::SyntaxError { .. })));
    assert!(matches!(
        parse_hints("/*+ Leading((a b)) FooJoin(a b) SeqScan(a) SeqScan(b) */"),
        Err(HintError::UnknownAtom { .. })
    ));
}

#[test]
fn parser_tolerates_order_and_whitespace() {
    let canonical = "/*+ Leading(((a b) c)) HashJoin(a b) NestLoop(a b c) SeqScan(a) IndexScan(b) SeqScan(c) */";
    let shuffled = "/*+\n  SeqScan(c)  NestLoop(c b a)\tLeading( ( (a b) c ) )\n HashJoin(b a) IndexScan(b) SeqScan(a)*/";
    let a = parse_hints(canonical).unwrap().to_plan_tree().unwrap();
    let b = parse_hints(shuffled).unwrap().to_plan_tree().unwrap();
    assert_eq!(a, b);
    assert_eq!(render_hints(&b).unwrap(), canonical);
}

#[test]
fn shape_examples() {
    let j = |o, i| PlanTree::join(HashJoin, o, i);
    let l = |a: &str| leaf(a, SeqScan);
    assert_eq!(classify_shape(&j(j(l("a"), l("b")), l("c"))), Some(TreeShape::LeftDeep));
    assert_eq!(classify_shape(&j(l("a"), j(l("b"), l("c")))), Some(TreeShape::RightDeep));
    assert_eq!(classify_shape(&j(j(l("a"), l("b")), j(l("c"), l("d")))), Some(TreeShape::Bushy));
    assert_eq!(classify_shape(&j(l("a"), j(j(l("b"), l("c")), l("d")))), Some(TreeShape::Zigzag));
    assert_eq!(classify_shape(&j(l("a"), l("b"))), Some(TreeShape::LeftDeep));
    assert_eq!(classify_shape(&l("a")), None);
}

#[test]
fn thousand_seeded_round_trips() {
    let mut rng = SplitMix64::new(0x5EED_0001);
    for _ in 0..1000 {
        let n = 1 + rng.below_usize(6);
        let plan = random_plan(&mut rng, n);
        let text = render_hints(&plan).unwrap();
        assert_eq!(parse_hints(&text).unwrap().to_plan_tree().unwrap(), plan, "{text}");
    }
}

proptest! {
    #[test]
    fn round_trip_and_atom_counts(seed in any::<u64>(), n in 1usize..=8) {
        let plan = random_plan(&mut SplitMix64::new(seed), n);
        let text = render_hints(&plan).unwrap();
        prop_assert!(text.starts_with("/*+ Leading(") && text.ends_with(" */"));
        prop_assert!(!text.contains("  "));
        let set = parse_hints(&text).unwrap();
        prop_assert_eq!(set.scan_atoms().count(), n);
        prop_assert_eq!(set.join_atoms().count(), n - 1);
        for (_, aliases) in set.join_atoms() {
            prop_assert!(aliases.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert_eq!(&set.leading, &plan.order());
        prop_assert_eq!(set.to_plan_tree().unwrap(), plan);
    }

    #[test]
    fn shape_is_exclusive_and_total(seed in any::<u64>(), n in 2usize..=8) {
        let plan = random_plan(&mut SplitMix64::new(seed), n);
        let shape = classify_shape(&plan);
        prop_assert!(shape.is_some());
        let order = plan.order();
        let matches = [
            qobench::hintlang::is_left_deep(&order),
            !qobench::hintlang::is_left_deep(&order) && qobench::hintlang::is_right_deep(&order),
        ];
        match shape.unwrap() {
            TreeShape::LeftDeep => prop_assert!(matches[0]),
            TreeShape::RightDeep => prop_assert!(matches[1]),
            TreeShape::Zigzag | TreeShape::Bushy => prop_assert!(!matches[0] && !matches[1]),
        }
    }
}
