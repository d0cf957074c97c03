//! Shared helpers for the integration suites.

/// One visible line per criterion when run with `--nocapture`.
pub fn pass(criterion: usize, detail: &str) {
    println!("criterion {criterion:02}: PASS - {detail}");
}
