use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::{ColumnData, ColumnKind, ColumnSchema};

fn class_schema() -> ColumnSchema {
    ColumnSchema {
        name: "class".into(),
        kind: ColumnKind::Categorical,
        levels: vec!["large".into(), "small".into()],
    }
}

fn numeric_data(xs: &[f64], classes: &[u32]) -> Dataset {
    Dataset::from_columns(
        vec![
            class_schema(),
            ColumnSchema {
                name: "x".into(),
                kind: ColumnKind::Numeric,
                levels: vec![],
            },
        ],
        vec![
            ColumnData::Categorical(classes.to_vec()),
            ColumnData::Numeric(xs.to_vec()),
        ],
        "class",
    )
    .unwrap()
}

fn categorical_data(levels: &[&str], codes: &[u32], classes: &[u32]) -> Dataset {
    Dataset::from_columns(
        vec![
            class_schema(),
            ColumnSchema {
                name: "g".into(),
                kind: ColumnKind::Categorical,
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        ],
        vec![
            ColumnData::Categorical(classes.to_vec()),
            ColumnData::Categorical(codes.to_vec()),
        ],
        "class",
    )
    .unwrap()
}

/// Random mixed data: `cat` with 4 levels, `num` continuous, `noise`
/// numeric with heavy ties. `signal` scales the dependence of the class on
/// `cat` and `num`.
fn mixed_data(n: usize, signal: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = Vec::with_capacity(n);
    let mut cat = Vec::with_capacity(n);
    let mut num = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..n {
        let c: u32 = rng.random_range(0..4);
        let x: f64 = rng.random();
        let p = 0.3 + signal * (if c < 2 { 0.25 } else { -0.2 } + (x - 0.5) * 0.4);
        classes.push(u32::from(rng.random::<f64>() < p.clamp(0.01, 0.99)));
        cat.push(c);
        num.push((x * 1000.0).round() / 1000.0);
        noise.push(f64::from(rng.random_range(0..5u32)));
    }
    if !classes.contains(&0) {
        classes[0] = 0;
    }
    if !classes.contains(&1) {
        classes[0] = 1;
    }
    Dataset::from_columns(
        vec![
            class_schema(),
            ColumnSchema {
                name: "cat".into(),
                kind: ColumnKind::Categorical,
                levels: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            },
            ColumnSchema {
                name: "num".into(),
                kind: ColumnKind::Numeric,
                levels: vec![],
            },
            ColumnSchema {
                name: "noise".into(),
                kind: ColumnKind::Numeric,
                levels: vec![],
            },
        ],
        vec![
            ColumnData::Categorical(classes),
            ColumnData::Categorical(cat),
            ColumnData::Numeric(num),
            ColumnData::Numeric(noise),
        ],
        "class",
    )
    .unwrap()
}

fn params(alpha: f64) -> TreeParams {
    TreeParams {
        alpha,
        ..TreeParams::default()
    }
}

#[test]
fn categorical_split_picks_the_distinct_level() {
    // Rates of small: a 0.9, b 0.1, c 0.1.
    let mut codes = Vec::new();
    let mut classes = Vec::new();
    for (code, small) in [(0u32, 9), (1, 1), (2, 1)] {
        for k in 0..10 {
            codes.push(code);
            classes.push(u32::from(k < small));
        }
    }
    let d = categorical_data(&["a", "b", "c"], &codes, &classes);
    let rows: Vec<usize> = (0..30).collect();
    let split = find_split(&d, &rows, 1, 1).unwrap();
    match split.rule {
        SplitRule::Levels { left, right } => {
            assert_eq!(
                left.iter().map(|l| l.name.as_str()).collect::<Vec<_>>(),
                ["a"]
            );
            assert_eq!(right.len(), 2);
        }
        other => panic!("unexpected rule {other:?}"),
    }
}

/// Brute force over all proper non-empty subsets, compared against the
/// search's result for random small tables.
#[test]
fn categorical_split_matches_subset_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let l = rng.random_range(2..6usize);
        let n = rng.random_range(10..60usize);
        let codes: Vec<u32> = (0..n).map(|_| rng.random_range(0..l as u32)).collect();
        let mut classes: Vec<u32> = (0..n).map(|_| rng.random_range(0..2)).collect();
        classes[0] = 0;
        classes[1] = 1;
        let names: Vec<String> = (0..l).map(|i| format!("l{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let d = categorical_data(&refs, &codes, &classes);
        let rows: Vec<usize> = (0..n).collect();

        let observed: Vec<u32> = {
            let mut o = codes.clone();
            o.sort_unstable();
            o.dedup();
            o
        };
        let mut best = -1.0f64;
        for mask in 1u32..(1 << observed.len()) - 1 {
            let inside = |c: u32| mask >> observed.iter().position(|&o| o == c).unwrap() & 1 == 1;
            let mut left = [0usize; 2];
            let mut right = [0usize; 2];
            for i in 0..n {
                let side = if inside(codes[i]) {
                    &mut left
                } else {
                    &mut right
                };
                side[classes[i] as usize] += 1;
            }
            best = best.max(split::chi_square_2x2(left, right));
        }
        match find_split(&d, &rows, 1, 1) {
            Some(Split {
                rule: SplitRule::Levels { left, .. },
                ..
            }) => {
                let mut l = [0usize; 2];
                let mut r = [0usize; 2];
                for i in 0..n {
                    let side = if left.iter().any(|x| x.code == codes[i]) {
                        &mut l
                    } else {
                        &mut r
                    };
                    side[classes[i] as usize] += 1;
                }
                assert!((split::chi_square_2x2(l, r) - best).abs() < 1e-9);
            }
            None => assert_eq!(observed.len(), 1),
            Some(other) => panic!("unexpected split {other:?}"),
        }
    }
}

#[test]
fn select_prefers_smallest_adjusted_p() {
    let t = |v: &str, col, stat, p| VariableTest {
        variable: v.into(),
        column: col,
        statistic: stat,
        p_raw: p,
        p_adjusted: p,
        constant: false,
    };
    let tests = vec![t("a", 1, 5.0, 0.002), t("b", 2, 1.0, 0.5)];
    assert_eq!(select_split_variable(&tests, 0.01).unwrap().variable, "a");

    let tests = vec![t("a", 1, 5.0, 0.02), t("b", 2, 1.0, 0.5)];
    assert!(select_split_variable(&tests, 0.01).is_none());

    let tests = vec![t("a", 1, 3.2, 0.001), t("b", 2, 8.1, 0.001)];
    assert_eq!(select_split_variable(&tests, 0.01).unwrap().variable, "b");

    let tests = vec![t("b", 2, 8.1, 0.001), t("a", 1, 8.1, 0.001)];
    assert_eq!(select_split_variable(&tests, 0.01).unwrap().variable, "a");
}

#[test]
fn bonferroni_counts_only_non_constant_variables() {
    let d = mixed_data(200, 1.0, 3);
    let names = vec!["cat".to_string(), "num".to_string(), "noise".to_string()];
    let all = d.all_rows();
    let tests = test_variables(&d, &all, &names).unwrap();
    for t in &tests {
        assert!((t.p_adjusted - (3.0 * t.p_raw).min(1.0)).abs() < 1e-15);
        assert!(t.statistic >= 0.0);
    }
    // Within rows sharing one `cat` level that variable is constant.
    let rows: Vec<usize> = all.iter().filter(|&i| d.row(i).level(1) == 0).collect();
    let within = RowIndexSet::new(rows, d.n_rows()).unwrap();
    let tests = test_variables(&d, &within, &names).unwrap();
    assert!(tests[0].constant);
    assert_eq!(tests[0].p_raw, 1.0);
    assert!((tests[1].p_adjusted - (2.0 * tests[1].p_raw).min(1.0)).abs() < 1e-15);
}

#[test]
fn perfectly_predictive_numeric_gives_depth_one_tree() {
    let xs: Vec<f64> = (1..=60).map(f64::from).collect();
    let classes: Vec<u32> = xs.iter().map(|&x| u32::from(x > 30.0)).collect();
    let d = numeric_data(&xs, &classes);
    let tree = grow_tree(&d, &d.all_rows(), &TreeParams::default(), &["x".into()]).unwrap();
    assert_eq!(tree.nodes.len(), 3);
    assert_eq!(tree.depth(), 1);
    match &tree.root().kind {
        NodeKind::Split { split, .. } => {
            assert_eq!(split.rule, SplitRule::Threshold { threshold: 30.5 })
        }
        NodeKind::Leaf => panic!("expected a split"),
    }
    let p = tree.predict(d.row(40));
    assert_eq!(p.class, Class::Small);
    assert_eq!((p.p_large, p.p_small), (0.0, 1.0));
}

#[test]
fn leaf_prediction_and_tie_rule() {
    let mut classes = vec![0u32; 90];
    classes.extend(vec![1u32; 10]);
    let d = numeric_data(&vec![1.0; 100], &classes);
    let tree = grow_tree(&d, &d.all_rows(), &TreeParams::default(), &["x".into()]).unwrap();
    assert_eq!(tree.nodes.len(), 1);
    let p = tree.predict(d.row(0));
    assert_eq!(p.class, Class::Large);
    assert!((p.p_large - 0.9).abs() < 1e-15 && (p.p_small - 0.1).abs() < 1e-15);

    let d = numeric_data(&[1.0; 10], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    let tree = grow_tree(&d, &d.all_rows(), &TreeParams::default(), &["x".into()]).unwrap();
    assert_eq!(tree.predict(d.row(0)).class, Class::Small);
}

#[test]
fn unseen_level_follows_larger_child() {
    // Level c never appears in training rows.
    let mut codes = Vec::new();
    let mut classes = Vec::new();
    for k in 0..40 {
        codes.push(0);
        classes.push(u32::from(k < 2));
    }
    for k in 0..25 {
        codes.push(1);
        classes.push(u32::from(k < 23));
    }
    codes.push(2);
    classes.push(0);
    let d = categorical_data(&["a", "b", "c"], &codes, &classes);
    let train = RowIndexSet::new((0..65).collect(), d.n_rows()).unwrap();
    let tree = grow_tree(&d, &train, &TreeParams::default(), &["g".into()]).unwrap();
    assert_eq!(tree.nodes.len(), 3);
    let leaf = tree.leaf_of(d.row(65));
    assert_eq!(tree.nodes[leaf].counts.total(), 40);
}

#[test]
fn render_is_deterministic_and_formatted() {
    let mut classes = vec![0u32; 90];
    classes.extend(vec![1u32; 10]);
    let d = numeric_data(&vec![1.0; 100], &classes);
    let leaf = grow_tree(&d, &d.all_rows(), &TreeParams::default(), &["x".into()]).unwrap();
    let text = render_tree(&leaf);
    assert_eq!(text.lines().count(), 1);
    assert!(
        text.contains("n=100") && text.contains("small=0.100"),
        "{text}"
    );

    let xs: Vec<f64> = (1..=60).map(f64::from).collect();
    let classes: Vec<u32> = xs.iter().map(|&x| u32::from(x > 30.0)).collect();
    let d = numeric_data(&xs, &classes);
    let tree = grow_tree(&d, &d.all_rows(), &TreeParams::default(), &["x".into()]).unwrap();
    let text = render_tree(&tree);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("[1] root"));
    assert!(lines[1].starts_with("  [2] x <= 30.5"));
    assert!(lines[2].starts_with("  [3] x > 30.5"));
    assert_eq!(text, render_tree(&tree));
}

#[test]
fn tree_json_round_trip_preserves_predictions() {
    let d = mixed_data(400, 1.5, 11);
    let names = vec!["cat".to_string(), "num".to_string(), "noise".to_string()];
    let tree = grow_tree(&d, &d.all_rows(), &params(0.05), &names).unwrap();
    let json = serde_json::to_string(&tree).unwrap();
    let back: Tree = serde_json::from_str(&json).unwrap();
    assert_eq!(back, tree);
    assert_eq!(render_tree(&back), render_tree(&tree));
}

#[test]
fn pure_noise_rarely_splits() {
    let mut splits = 0;
    for seed in 0..100 {
        let d = mixed_data(300, 0.0, 1000 + seed);
        let names = vec!["cat".to_string(), "num".to_string(), "noise".to_string()];
        let tree = grow_tree(&d, &d.all_rows(), &params(0.01), &names).unwrap();
        splits += usize::from(tree.nodes.len() > 1);
    }
    // Bonferroni bounds the family-wise rate at alpha; allow binomial slack.
    assert!(splits <= 5, "{splits} of 100 noise trees split");
}

fn check_structure(d: &Dataset, tree: &Tree) {
    for node in &tree.nodes {
        if let NodeKind::Split {
            test, left, right, ..
        } = &node.kind
        {
            assert!(test.p_adjusted <= tree.params.alpha);
            let (l, r) = (&tree.nodes[*left], &tree.nodes[*right]);
            assert!(l.counts.total() > 0 && r.counts.total() > 0);
            assert!(l.counts.total() >= tree.params.min_leaf);
            assert!(r.counts.total() >= tree.params.min_leaf);
            assert_eq!(l.counts.large + r.counts.large, node.counts.large);
            assert_eq!(l.counts.small + r.counts.small, node.counts.small);
        }
    }
    let leaf_total: usize = tree
        .nodes
        .iter()
        .filter(|n| n.is_leaf())
        .map(|n| n.counts.total())
        .sum();
    assert_eq!(leaf_total, tree.root().counts.total());
    assert_eq!(tree.root().counts.total(), d.n_rows());
    for (i, node) in tree.nodes.iter().enumerate() {
        assert_eq!(node.id, i + 1);
    }
}

/// `small` is a pre-order walk where `small` splits only where `large` splits
/// identically.
fn is_subtree(small: &Tree, large: &Tree, a: usize, b: usize) -> bool {
    match (&small.nodes[a].kind, &large.nodes[b].kind) {
        (NodeKind::Leaf, _) => small.nodes[a].counts == large.nodes[b].counts,
        (
            NodeKind::Split {
                split: s1,
                left: l1,
                right: r1,
                ..
            },
            NodeKind::Split {
                split: s2,
                left: l2,
                right: r2,
                ..
            },
        ) => s1 == s2 && is_subtree(small, large, *l1, *l2) && is_subtree(small, large, *r1, *r2),
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn grown_trees_respect_gate_and_partition(seed in any::<u64>(), signal in 0.0f64..2.0) {
        let d = mixed_data(300, signal, seed);
        let names = vec!["cat".to_string(), "num".to_string(), "noise".to_string()];
        let tree = grow_tree(&d, &d.all_rows(), &params(0.05), &names).unwrap();
        check_structure(&d, &tree);
        for i in 0..d.n_rows() {
            let leaf = tree.leaf_of(d.row(i));
            prop_assert!(tree.nodes[leaf].is_leaf());
        }
    }

    #[test]
    fn smaller_alpha_grows_a_subtree(seed in any::<u64>(), signal in 0.5f64..2.0) {
        let d = mixed_data(300, signal, seed);
        let names = vec!["cat".to_string(), "num".to_string(), "noise".to_string()];
        let strict = grow_tree(&d, &d.all_rows(), &params(0.001), &names).unwrap();
        let loose = grow_tree(&d, &d.all_rows(), &params(0.05), &names).unwrap();
        prop_assert!(strict.nodes.len() <= loose.nodes.len());
        prop_assert!(is_subtree(&strict, &loose, 0, 0));
    }
}
