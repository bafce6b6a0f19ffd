//! Fixed numeric formatting shared by every export.
//!
//! Values are printed with three decimals. Rounding acts on the exact binary
//! value of the `f64`, and exact ties go to the even digit (`0.0625` prints as
//! `0.062`, `0.1875` as `0.188`). Negative zero prints as `0.000`.

/// Formats `x` with three decimals, round-half-even.
pub fn fixed3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_owned()
    } else {
        s
    }
}
