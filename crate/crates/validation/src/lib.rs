//! Runner for the acceptance checks in `tests/acceptance.rs`.

use std::panic::{self, UnwindSafe};
use std::time::{Duration, Instant};

pub type Outcome = Result<String, String>;

pub struct Criterion {
    pub id: &'static str,
    pub name: &'static str,
    pub budget: Duration,
    pub run: fn() -> Outcome,
}

pub fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn guarded<F: FnOnce() -> Outcome + UnwindSafe>(f: F) -> Outcome {
    panic::catch_unwind(f).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

/// Runs the criteria whose id is in `filter` (all when empty), printing one
/// PASS/FAIL line each. A criterion that passes but overruns its budget fails.
/// Returns the number of failures.
pub fn run(criteria: &[Criterion], filter: &[String]) -> usize {
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| filter.is_empty() || filter.iter().any(|f| f == c.id))
    {
        let start = Instant::now();
        let outcome = guarded(c.run);
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > c.budget => {
                Err(format!("{msg}; over budget ({took:.1?} > {:?})", c.budget))
            }
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {} ({}) [{took:.1?}]: {msg}", c.id, c.name),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({}) [{took:.1?}]: {msg}", c.id, c.name);
            }
        }
    }
    failed
}
