//! Numeric rendering for exported artifacts.

/// Renders `x` as a plain decimal with nine significant digits.
///
/// The output is a pure function of the bit pattern, so reruns produce
/// byte-identical files. Negative zero prints as zero.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    // Round to nine significant digits first so the decimal exponent is exact
    // even when rounding carries into a new digit (9.999999999 -> 10.0000000).
    let sci = format!("{:.8e}", x);
    let (_, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let decimals = (8 - exp).clamp(0, 40) as usize;
    let rounded: f64 = sci.parse().expect("scientific literal");
    let out = format!("{:.*}", decimals, rounded);
    if out.trim_start_matches('-').trim_start_matches(['0', '.']).is_empty() {
        format!("{:.*}", decimals, 0.0)
    } else {
        out
    }
}
