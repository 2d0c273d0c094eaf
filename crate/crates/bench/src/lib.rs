//! Empty library crate; the interesting code lives in `benches/`.
