//! Decimal formatting for files and reports.
//!
//! Data and model files use a 17-significant-digit scientific form that
//! round-trips every finite f64 bit-exactly. Reports use a trimmed fixed
//! form so round quantities print the way people write them (0.648, not
//! 0.648000000000).

/// Round-trip formatting: 17 significant digits, scientific notation.
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Human formatting: 12 decimal places with trailing zeros removed.
pub fn fmt_compact(x: f64) -> String {
    if !x.is_finite() {
        return format!("{}", x);
    }
    let mut s = format!("{:.12}", x);
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    // -0 collapses to 0 after trimming.
    if s == "-0" {
        s = "0".to_string();
    }
    s
}
