//! C99-style hexadecimal float text (`-0x1.8p+1`), exact for every finite `f64`.

use crate::error::{Error, Result};

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let dot = if digits.is_empty() { "" } else { "." };
    format!("{sign}0x{lead}{dot}{digits}p{e:+}")
}

fn scale(mut x: f64, mut e: i32) -> f64 {
    let up = 2f64.powi(1000);
    let down = 2f64.powi(-1000);
    while e > 1000 {
        x *= up;
        e -= 1000;
    }
    while e < -1000 {
        x *= down;
        e += 1000;
    }
    x * 2f64.powi(e)
}

pub fn parse(s: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("bad hex float '{s}'"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = match body {
        "nan" => f64::NAN,
        "inf" => f64::INFINITY,
        _ => {
            let body = body.strip_prefix("0x").ok_or_else(bad)?;
            let (mant, exp) = body.split_once('p').ok_or_else(bad)?;
            let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
            if int.is_empty() || int.len() + frac.len() > 15 {
                return Err(bad());
            }
            let m = u64::from_str_radix(&format!("{int}{frac}"), 16).map_err(|_| bad())?;
            let e: i32 = exp.parse().map_err(|_| bad())?;
            scale(m as f64, e - 4 * frac.len() as i32)
        }
    };
    Ok(if neg { -v } else { v })
}
