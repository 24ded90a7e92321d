//! Decimal rounding and Part-21 real formatting.
//!
//! Rounding works on the decimal digits of the literal as written, so the
//! result does not depend on binary floating-point representation error.

use crate::step::{EntityInstance, Real, StepFile};

pub const MIN_SIG_DIGITS: u32 = 3;
pub const MAX_SIG_DIGITS: u32 = 17;

/// A decimal number `d0.d1d2... x 10^exponent` with no leading or trailing
/// zero digits. `digits` is empty for zero.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Decimal {
    negative: bool,
    digits: Vec<u8>,
    exponent: i32,
}

impl Decimal {
    /// Parses `[+-]digits[.digits][E[+-]digits]` (Rust `{:e}` output included).
    fn parse(text: &str) -> Option<Decimal> {
        let (negative, body) = match text.as_bytes().first()? {
            b'-' => (true, &text[1..]),
            b'+' => (false, &text[1..]),
            _ => (false, text),
        };
        let (mantissa, exp_part) = match body.find(['E', 'e']) {
            Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
            None => (body, 0),
        };
        let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        let mut digits = Vec::with_capacity(int_part.len() + frac_part.len());
        for b in int_part.bytes().chain(frac_part.bytes()) {
            if !b.is_ascii_digit() {
                return None;
            }
            digits.push(b - b'0');
        }
        let leading = digits.iter().take_while(|&&d| d == 0).count();
        digits.drain(..leading);
        while digits.last() == Some(&0) {
            digits.pop();
        }
        let exponent = int_part.len() as i32 - leading as i32 - 1 + exp_part;
        Some(Decimal {
            negative,
            digits,
            exponent,
        })
    }

    fn from_f64(value: f64) -> Decimal {
        Decimal::parse(&format!("{value:e}")).expect("Rust scientific formatting is parseable")
    }

    fn significant_digits(&self) -> u32 {
        self.digits.len().max(1) as u32
    }

    /// Rounds to at most `sig` significant digits, ties to even.
    fn round(mut self, sig: u32) -> Decimal {
        let sig = sig as usize;
        if self.digits.len() <= sig {
            return self;
        }
        let first_dropped = self.digits[sig];
        let rest_nonzero = self.digits[sig + 1..].iter().any(|&d| d != 0);
        self.digits.truncate(sig);
        let round_up = match first_dropped {
            d if d > 5 => true,
            5 if rest_nonzero => true,
            5 => self.digits.last().is_some_and(|d| d % 2 == 1),
            _ => false,
        };
        if round_up {
            let mut i = self.digits.len();
            loop {
                if i == 0 {
                    self.digits.insert(0, 1);
                    self.digits.truncate(sig);
                    self.exponent += 1;
                    break;
                }
                i -= 1;
                if self.digits[i] == 9 {
                    self.digits[i] = 0;
                } else {
                    self.digits[i] += 1;
                    break;
                }
            }
        }
        while self.digits.last() == Some(&0) {
            self.digits.pop();
        }
        self
    }

    /// Shortest of plain and exponent notation; plain wins ties.
    fn format(&self) -> String {
        if self.digits.is_empty() {
            return "0.".to_string();
        }
        let digits: String = self.digits.iter().map(|d| char::from(b'0' + d)).collect();
        let e = self.exponent;
        let plain = if e >= 0 {
            let int_len = e as usize + 1;
            if digits.len() <= int_len {
                format!("{digits}{}.", "0".repeat(int_len - digits.len()))
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        } else {
            format!("0.{}{digits}", "0".repeat((-e - 1) as usize))
        };
        let sign = if e < 0 { "-" } else { "" };
        let scientific = format!("{}.{}E{sign}{:02}", &digits[..1], &digits[1..], e.unsigned_abs());
        let body = if scientific.len() < plain.len() { scientific } else { plain };
        if self.negative {
            format!("-{body}")
        } else {
            body
        }
    }
}

/// Formats a value as a Part-21 real with at most `sig_digits` significant
/// digits (shortest round-trip digits when `sig_digits >= 17`).
pub fn format_real(value: f64, sig_digits: u32) -> String {
    Decimal::from_f64(value).round(sig_digits).format()
}

/// Rounds a real literal to `sig_digits` significant digits and respells it.
pub fn normalize_real(real: &Real, sig_digits: u32) -> Real {
    let decimal = Decimal::parse(real.text()).unwrap_or_else(|| Decimal::from_f64(real.value()));
    let text = decimal.round(sig_digits).format();
    Real::from_token(text).expect("formatted reals re-parse")
}

/// Number of significant digits written in a real literal (at least 1).
pub fn real_precision(real: &Real) -> u32 {
    Decimal::parse(real.text())
        .unwrap_or_else(|| Decimal::from_f64(real.value()))
        .significant_digits()
}

/// Largest number of significant digits over all entity reals, or `None` when
/// the file has no reals.
pub fn file_precision(file: &StepFile) -> Option<u32> {
    let mut max = None;
    for entity in &file.entities {
        for p in entity.all_params() {
            p.for_each_real(&mut |r| {
                let digits = real_precision(r);
                max = Some(max.map_or(digits, |m: u32| m.max(digits)));
            });
        }
    }
    max
}

/// Rewrites every real of every entity with at most `sig_digits` significant
/// digits. Header records, references and entity order are untouched.
pub fn normalize_floats(file: &StepFile, sig_digits: u32) -> StepFile {
    StepFile {
        header: file.header.clone(),
        entities: file
            .entities
            .iter()
            .map(|e: &EntityInstance| e.map_reals(|r| normalize_real(r, sig_digits)))
            .collect(),
        trailing_complete: file.trailing_complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(text: &str, sig: u32) -> String {
        normalize_real(&Real::from_token(text.to_string()).unwrap(), sig).text().to_string()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(norm("0.30000000000000004", 6), "0.3");
        assert_eq!(norm("1.0", 6), "1.");
        assert_eq!(norm("-2.5000001E-07", 6), "-2.5E-07");
        assert_eq!(format_real(0.30000000000000004, 6), "0.3");
        assert_eq!(format_real(1.0, 6), "1.");
        assert_eq!(format_real(-2.5000001e-07, 6), "-2.5E-07");
    }

    #[test]
    fn ties_round_to_even() {
        assert_eq!(norm("0.1234565", 6), "0.123456");
        assert_eq!(norm("0.1234575", 6), "0.123458");
        assert_eq!(norm("0.12345650001", 6), "0.123457");
        assert_eq!(norm("2.5", 1), "2.");
        assert_eq!(norm("3.5", 1), "4.");
    }

    #[test]
    fn carry_propagates_into_exponent() {
        assert_eq!(norm("9.9999999", 6), "10.");
        assert_eq!(norm("999999.7", 6), "1.E06");
        assert_eq!(norm("-0.000099999996", 6), "-0.0001");
    }

    #[test]
    fn plain_vs_exponent_choice() {
        assert_eq!(norm("123456789.", 6), "123457000.");
        assert_eq!(norm("1234567890.", 6), "1.23457E09");
        assert_eq!(norm("100.", 6), "100.");
        assert_eq!(norm("0.001", 6), "0.001");
        assert_eq!(norm("0.00001", 6), "1.E-05");
        assert_eq!(norm("0.", 6), "0.");
        assert_eq!(norm("-0.0", 6), "0.");
        assert_eq!(norm("1.5E+3", 6), "1500.");
    }

    #[test]
    fn precision_counts_significant_digits() {
        let r = |t: &str| Real::from_token(t.to_string()).unwrap();
        assert_eq!(real_precision(&r("0.30000000000000004")), 17);
        assert_eq!(real_precision(&r("1.")), 1);
        assert_eq!(real_precision(&r("0.")), 1);
        assert_eq!(real_precision(&r("-2.5E-07")), 2);
        assert_eq!(real_precision(&r("120.50")), 4);
    }

    #[test]
    fn shortest_round_trip_at_full_precision() {
        for v in [0.1, 1.0 / 3.0, -123.456e-200, 6.02214076e23, 5e-324] {
            let text = format_real(v, 17);
            assert_eq!(text.parse::<f64>().unwrap(), v, "{text}");
        }
    }
}
