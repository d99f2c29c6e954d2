//! Strict scalar extraction from raw backend output.
//!
//! The backend is asked for a bare number but an external server may not
//! honor stopping criteria, so parsing is defensive: take the first maximal
//! token matching a signed decimal-number pattern and accept it only when it
//! lies in the task's answer domain.

use std::sync::OnceLock;

use regex::Regex;

use super::task::AnswerDomain;

/// Why a raw response produced no score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    /// No signed decimal token anywhere in the text.
    NoNumber,
    /// A number was found but is not an accepted answer for the task.
    OutOfDomain,
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[+-]?\d+(?:\.\d+)?").expect("static pattern"))
}

/// Extract the first numeric token of `raw` and validate it against the
/// domain. The raw text itself is kept by the caller either way.
pub fn parse_answer(raw: &str, domain: &AnswerDomain) -> Result<f64, ParseFailure> {
    let token = number_pattern()
        .find(raw)
        .ok_or(ParseFailure::NoNumber)?
        .as_str();
    let value: f64 = token.parse().map_err(|_| ParseFailure::NoNumber)?;
    if domain.contains(value) {
        Ok(value)
    } else {
        Err(ParseFailure::OutOfDomain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> AnswerDomain {
        AnswerDomain::Enumerated {
            values: vec![0.0, 1.0],
        }
    }

    fn counting() -> AnswerDomain {
        AnswerDomain::Enumerated {
            values: vec![0.0, 1.0, 2.0],
        }
    }

    #[test]
    fn parser_matches_hand_labeled_expectations() {
        let bin = binary();
        let cnt = counting();
        let half = AnswerDomain::HalfSteps;
        // (raw, domain, expected)
        let cases: Vec<(&str, &AnswerDomain, Result<f64, ParseFailure>)> = vec![
            // clean scalars
            ("0", &bin, Ok(0.0)),
            ("1", &bin, Ok(1.0)),
            ("2", &cnt, Ok(2.0)),
            ("1.5", &half, Ok(1.5)),
            ("0.5", &half, Ok(0.5)),
            ("+1", &bin, Ok(1.0)),
            ("1.0", &bin, Ok(1.0)),
            ("  1  ", &bin, Ok(1.0)),
            ("1\n", &bin, Ok(1.0)),
            // decorated scalars
            ("Score: 2.", &cnt, Ok(2.0)),
            ("1.5 meters", &half, Ok(1.5)),
            ("The answer is 1", &bin, Ok(1.0)),
            ("Answer: 0 (rural)", &bin, Ok(0.0)),
            ("score=2, confident", &cnt, Ok(2.0)),
            ("approximately 2.5 m wide", &half, Ok(2.5)),
            // refusals / no numeric content
            ("I cannot determine the width", &half, Err(ParseFailure::NoNumber)),
            ("unclear", &bin, Err(ParseFailure::NoNumber)),
            ("", &bin, Err(ParseFailure::NoNumber)),
            ("N/A", &half, Err(ParseFailure::NoNumber)),
            // out-of-domain values
            ("3", &cnt, Err(ParseFailure::OutOfDomain)),
            ("2", &bin, Err(ParseFailure::OutOfDomain)),
            ("0.75", &bin, Err(ParseFailure::OutOfDomain)),
            ("1.25", &half, Err(ParseFailure::OutOfDomain)),
            ("-1", &bin, Err(ParseFailure::OutOfDomain)),
            ("-0.5", &half, Err(ParseFailure::OutOfDomain)),
            // first maximal token wins
            ("0.75 or maybe 1", &bin, Err(ParseFailure::OutOfDomain)),
            ("between 1 and 2", &bin, Ok(1.0)),
        ];
        assert!(cases.len() >= 20);
        for (raw, domain, expected) in cases {
            assert_eq!(parse_answer(raw, domain), expected, "raw = {raw:?}");
        }
    }

    #[test]
    fn every_accepted_value_is_in_domain() {
        let domains = [binary(), counting(), AnswerDomain::HalfSteps];
        let raws = [
            "0", "1", "2", "3", "0.5", "1.5", "-1", "yes", "Score: 1", "width 2.5m",
        ];
        for domain in &domains {
            for raw in &raws {
                if let Ok(v) = parse_answer(raw, domain) {
                    assert!(domain.contains(v), "{raw} -> {v} escaped the domain");
                }
            }
        }
    }
}
