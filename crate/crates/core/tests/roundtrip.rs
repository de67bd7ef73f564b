//! parse(serialize(g)) == g over fuzzed golds, for every supported (task, format) pair.

mod common;

#[test]
fn every_pair_round_trips() {
    let (checked, failures) = common::roundtrip_failures(10_000);
    assert!(checked >= 10_000);
    assert!(
        failures.is_empty(),
        "{} failures, first:\n{}",
        failures.len(),
        failures[..failures.len().min(5)].join("\n")
    );
}
