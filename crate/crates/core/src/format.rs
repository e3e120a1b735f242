//! Number formatting shared by every file writer.

/// Formats `x` like C's `%.17g`: 17 significant digits, trailing zeros
/// dropped, scientific notation outside `1e-4 <= |x| < 1e17`. Seventeen
/// digits are enough for any `f64` to survive a write/parse round trip.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Two-decimal rendering for human-facing tables.
pub fn fmt_display(x: f64) -> String {
    format!("{x:.2}")
}
