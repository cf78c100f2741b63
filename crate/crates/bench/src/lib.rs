//! Criterion benchmark package; see the benches/ directory.
