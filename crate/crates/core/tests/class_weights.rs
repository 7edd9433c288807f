mod common;

#[test]
fn class_weights_match_oracle() {
    println!("{}", common::checks::class_weight_suite(50, 5).unwrap());
}

#[test]
fn positives_balance_negatives_per_group() {
    let labels = [true, false, false, false, true, false];
    let groups: Vec<String> = ["A", "A", "A", "A", "B", "B"].map(String::from).into();
    let w = bugloc::learner::class_weights(&labels, &groups).unwrap();
    assert_eq!(w, vec![4.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
}
