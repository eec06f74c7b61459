//! `fedrank verify`: the built-in property suite as a release gate. One
//! PASS/FAIL line per check, nonzero exit on any failure.

use crate::checks;

pub fn run() -> bool {
    let outcomes = checks::run_all();
    for outcome in &outcomes {
        outcome.print();
    }
    outcomes.iter().all(|o| o.pass)
}
