//! Criterion benchmarks for the models, estimators and calibration
//! components; run with `cargo bench -p diffabm-bench`.
