//! Minimal deterministic JSON formatting helpers.
//!
//! All floating-point output carries 17 significant digits so that values
//! round-trip exactly. Non-finite values (the infinite-distortion marker)
//! are serialized as strings.

pub fn f64_repr(v: f64) -> String {
    if v.is_nan() {
        "\"nan\"".to_string()
    } else if v.is_infinite() {
        if v > 0.0 {
            "\"infinite\"".to_string()
        } else {
            "\"-infinite\"".to_string()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn bool_repr(v: bool) -> &'static str {
    if v {
        "true"
    } else {
        "false"
    }
}

pub fn opt_bool_repr(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "null",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_repr_round_trips() {
        for v in [1.0, -0.1, 3.141592653589793, 1e-300, 2.2250738585072014e-308] {
            let s = f64_repr(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s} did not round-trip");
        }
        assert_eq!(f64_repr(f64::INFINITY), "\"infinite\"");
    }

    #[test]
    fn escapes_control_characters() {
        assert_eq!(escape_str("a\"b\\c\nd"), "\"a\\\"b\\\\c\\nd\"");
    }
}
