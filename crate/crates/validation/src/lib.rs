//! Holds the `acceptance` test target, which checks the solvers against
//! their accuracy and trend criteria. Run it with
//! `cargo test -p wpc-delay-validation --test acceptance`.
