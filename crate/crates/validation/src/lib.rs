//! Holds the `acceptance` test target. Run it with
//! `cargo test -p ara-validation --test acceptance`.
