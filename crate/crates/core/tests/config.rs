mod common;

use common::configcases::{cases, check, random_tree, same};
use phasekit::confparse::{merge, parse_config, parse_overrides, render, ConfigTree};
use phasekit::tensor::RunRng;
use proptest::prelude::*;
use std::path::Path;

#[test]
fn conformance_cases_match_expected_trees() {
    let all = cases();
    assert!(all.len() >= 25);
    for case in &all {
        let dir = tempfile::tempdir().unwrap();
        if let Err(diff) = check(case, dir.path()) {
            panic!("{}: {diff}", case.name);
        }
    }
}

#[test]
fn merge_is_associative_with_identity_on_random_trees() {
    let mut rng = RunRng::seed(7);
    for _ in 0..1000 {
        let (a, b, c) = (random_tree(&mut rng), random_tree(&mut rng), random_tree(&mut rng));
        assert!(same(&merge(&merge(&a, &b), &c), &merge(&a, &merge(&b, &c))));
        assert!(same(&merge(&a, &ConfigTree::new()), &a));
        assert!(same(&merge(&ConfigTree::new(), &a), &a));
    }
}

proptest! {
    #[test]
    fn render_round_trips(seed in any::<u64>()) {
        let tree = random_tree(&mut RunRng::seed(seed));
        let text = render(&tree);
        let back = parse_config(&text, Path::new(".")).unwrap();
        prop_assert_eq!(back.root, tree.root, "{}", text);
    }

    #[test]
    fn overrides_equal_an_appended_assignment(seed in any::<u64>(), key in "[a-d]", v in -50i64..50) {
        let base = random_tree(&mut RunRng::seed(seed));
        let fragment = format!("{key} = {v}");
        let via_override = merge(&base, &parse_overrides(&fragment).unwrap());
        let appended = parse_config(&format!("{}\n{fragment}\n", render(&base)), Path::new(".")).unwrap();
        prop_assert_eq!(via_override.root, appended.root);
    }

    #[test]
    fn include_equals_inlined_text(seed in any::<u64>(), other in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let (inc, local) = (random_tree(&mut RunRng::seed(seed)), random_tree(&mut RunRng::seed(other)));
        std::fs::write(dir.path().join("inc.conf"), render(&inc)).unwrap();
        let included = parse_config(&format!("include \"inc.conf\"\n{}", render(&local)), dir.path()).unwrap();
        let inlined = parse_config(&format!("{}\n{}", render(&inc), render(&local)), dir.path()).unwrap();
        prop_assert_eq!(included.root, inlined.root);
    }
}
