mod common;

use common::checks;

#[test]
fn regions_satisfy_set_laws() {
    println!("{}", checks::region_suite(1000, 17).unwrap());
}

#[test]
fn two_tool_example() {
    println!("{}", checks::two_tool_example().unwrap());
}

mod overlap_props {
    use std::collections::BTreeSet;

    use bugloc::regions::overlap;
    use proptest::prelude::*;

    fn ids() -> impl Strategy<Value = BTreeSet<String>> {
        prop::collection::btree_set("[0-9]{1,2}", 0..30)
    }

    proptest! {
        #[test]
        fn parts_sum_to_hundred_and_swap(a in ids(), b in ids()) {
            match overlap(&a, &b) {
                Ok(o) => {
                    prop_assert!((o.both + o.only_a + o.only_b - 100.0).abs() < 1e-9);
                    let r = overlap(&b, &a).unwrap();
                    prop_assert_eq!(r.only_a, o.only_b);
                    prop_assert_eq!(r.both, o.both);
                }
                Err(_) => prop_assert!(a.is_empty() && b.is_empty()),
            }
        }
    }
}
