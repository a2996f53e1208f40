//! Runs every acceptance criterion and prints one line per criterion:
//!
//! ```text
//! criterion N: PASS|FAIL <measured values> [seconds]
//! ```
//!
//! Positional arguments select criteria by number (`cargo test --test acceptance -- 3 7`).
//! The process exits nonzero if any selected criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ladderwalk_validation::{Verdict, CRITERIA};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (n, _) in CRITERIA {
            println!("criterion {n}: test");
        }
        return;
    }
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, f) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            Verdict { pass: false, detail: format!("panicked: {msg}") }
        });
        println!("criterion {n}: {} {} [{:.1}s]", if v.pass { "PASS" } else { "FAIL" }, v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
