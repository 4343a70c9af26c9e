//! Deterministic number formatting for emitted reports.

/// Format a float with 9 significant digits in scientific notation.
///
/// Reports are byte-compared across runs, so every float that lands in a
/// CSV/JSON artifact goes through this one function.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        // Avoid "-0" leaking into reports.
        return "0.00000000e0".to_string();
    }
    format!("{:.8e}", x)
}

#[cfg(test)]
mod tests {
    use super::sig9;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.55), "5.50000000e-1");
        assert_eq!(sig9(0.05994), "5.99400000e-2");
        assert_eq!(sig9(1.0), "1.00000000e0");
        assert_eq!(sig9(-0.127), "-1.27000000e-1");
        assert_eq!(sig9(0.0), "0.00000000e0");
        assert_eq!(sig9(-0.0), "0.00000000e0");
    }

    #[test]
    fn roundtrips_through_parse() {
        for &x in &[0.34, 0.21, 1e-9, 123456.789, -0.0001] {
            let s = sig9(x);
            let back: f64 = s.parse().unwrap();
            assert!((back - x).abs() <= x.abs() * 1e-8);
        }
    }
}
