//! Fuzz target: the closed-form expression grammar. Parsing arbitrary text
//! must never panic; when it parses, evaluation and symbolic
//! differentiation must be total as well.

#![no_main]

use libfuzzer_sys::fuzz_target;
use vmulab::expr::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(expr) = Expr::parse(text) {
        let _ = expr.eval(&[0.5, -1.25, 3.0]);
        let _ = expr.diff(0).eval(&[0.5, -1.25, 3.0]);
    }
});
