//! Float formatting for text outputs.

/// Formats like C's `%.{precision}g`.
pub fn general(value: f64, precision: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".into()
        } else if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let precision = precision.max(1);
    let sci = format!("{:.*e}", precision - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= precision as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (precision as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{value:.decimals$}")).to_string()
    }
}

/// Nine significant digits, the precision used by every CSV output.
pub fn sig9(value: f64) -> String {
    general(value, 9)
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.5625e-5), "1.5625e-05");
        assert_eq!(sig9(45014.0), "45014");
        assert_eq!(sig9(-22248.5249228), "-22248.5249");
        assert_eq!(sig9(26.4164968363), "26.4164968");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456789012.0), "1.23456789e+11");
        assert_eq!(sig9(0.0001), "0.0001");
        assert_eq!(sig9(f64::NAN), "nan");
    }

    #[test]
    fn rounding_carries_into_exponent() {
        assert_eq!(sig9(999999999.6), "1e+09");
        assert_eq!(sig9(9.9999999999e-5), "0.0001");
    }
}
