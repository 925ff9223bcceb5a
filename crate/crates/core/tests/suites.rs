use std::time::Instant;

use omdlab_core::suites::{run_suite, Suite};
use omdlab_core::Execution;

#[test]
fn property_battery_has_no_violations() {
    for suite in Suite::ALL {
        let start = Instant::now();
        let out = run_suite(suite, 250, 2024, Execution::Parallel);
        eprintln!("{:<22} {:>4} cases {:>8.2?}", suite.name(), out.cases, start.elapsed());
        assert!(out.violations.is_empty(), "{}: {:?}", suite.name(), &out.violations[..out.violations.len().min(5)]);
    }
}
