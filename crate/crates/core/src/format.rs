//! Deterministic float formatting shared by every CSV and JSON emitter.

/// C `%.12e`: twelve fractional digits and an exponent of at least two
/// digits with explicit sign, e.g. `1.500000000000e+00`. Non-finite values
/// print as `nan`, `inf`, `-inf`.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// `sci` for an optional value; `None` prints as an empty field.
pub fn sci_opt(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_printf() {
        assert_eq!(sci(1.5), "1.500000000000e+00");
        assert_eq!(sci(-0.000123), "-1.230000000000e-04");
        assert_eq!(sci(6.02214076e23), "6.022140760000e+23");
        assert_eq!(sci(1e-300), "1.000000000000e-300");
        assert_eq!(sci(0.0), "0.000000000000e+00");
        assert_eq!(sci(f64::NAN), "nan");
        assert_eq!(sci(f64::NEG_INFINITY), "-inf");
        assert_eq!(sci_opt(None), "");
    }
}
