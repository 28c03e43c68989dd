//! Small helpers for the tabular text formats.

/// Seventeen significant digits, enough to round-trip any double.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0.0000000000000000e0"
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

pub fn csv_row(fields: &[f64]) -> String {
    fields.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        for x in [std::f64::consts::PI, -1.0 / 3.0, 1e-300, 6.02e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
    }
}
