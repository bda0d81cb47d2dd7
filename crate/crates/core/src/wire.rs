//! Line-oriented message codec for bargaining sessions.
//!
//! One message per line, space-separated fields, reals printed as the
//! shortest decimal that parses back to the same bit pattern, so
//! `decode(encode(m)) == m` exactly.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy::CaseId;
use crate::{BundleId, Gain, Money, Round};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("line {line}: {what}")]
    Malformed { line: usize, what: String },
}

fn bad(line: usize, what: impl Into<String>) -> WireError {
    WireError::Malformed { line, what: what.into() }
}

/// Everything the two parties ever say to each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    QuoteOffer {
        round: Round,
        p: Money,
        #[serde(rename = "P0")]
        base: Money,
        #[serde(rename = "Ph")]
        cap: Money,
    },
    BundleOffer {
        round: Round,
        bundle_id: BundleId,
    },
    GainReport {
        round: Round,
        delta_g: Gain,
    },
    Accept {
        round: Round,
        payment: Money,
    },
    Breakdown {
        round: Round,
        case: CaseId,
        reason: String,
    },
}

impl Message {
    pub fn round(&self) -> Round {
        match *self {
            Message::QuoteOffer { round, .. }
            | Message::BundleOffer { round, .. }
            | Message::GainReport { round, .. }
            | Message::Accept { round, .. }
            | Message::Breakdown { round, .. } => round,
        }
    }

    /// A session ends on the first terminal message.
    pub fn is_terminal(&self) -> bool {
        matches!(self, Message::Accept { .. } | Message::Breakdown { .. })
    }
}

fn escape(reason: &str) -> String {
    let mut out = String::with_capacity(reason.len() + 2);
    for c in reason.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String, WireError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('"') => out.push('"'),
            Some('n') => out.push('\n'),
            other => return Err(bad(line, format!("bad escape {other:?} in reason"))),
        }
    }
    Ok(out)
}

/// Renders one message as a single line, without the trailing newline.
pub fn encode(msg: &Message) -> String {
    match msg {
        Message::QuoteOffer { round, p, base, cap } => {
            format!("QUOTE {round} p={p} P0={base} Ph={cap}")
        }
        Message::BundleOffer { round, bundle_id } => format!("BUNDLE {round} id={bundle_id}"),
        Message::GainReport { round, delta_g } => format!("GAIN {round} dg={delta_g}"),
        Message::Accept { round, payment } => format!("ACCEPT {round} payment={payment}"),
        Message::Breakdown { round, case, reason } => {
            format!("BREAKDOWN {round} case={case} reason=\"{}\"", escape(reason))
        }
    }
}

fn field<'a>(
    parts: &mut impl Iterator<Item = &'a str>,
    key: &str,
    line: usize,
) -> Result<&'a str, WireError> {
    let tok = parts.next().ok_or_else(|| bad(line, format!("missing field {key}")))?;
    tok.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| bad(line, format!("expected {key}=..., got {tok:?}")))
}

fn real(tok: &str, key: &str, line: usize) -> Result<f64, WireError> {
    let v: f64 =
        tok.parse().map_err(|_| bad(line, format!("{key} is not a number: {tok:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(line, format!("{key} must be finite, got {tok:?}")))
    }
}

fn done<'a>(mut parts: impl Iterator<Item = &'a str>, line: usize) -> Result<(), WireError> {
    match parts.next() {
        None => Ok(()),
        Some(extra) => Err(bad(line, format!("unexpected trailing field {extra:?}"))),
    }
}

/// Parses one line, reporting `line` in errors.
pub fn decode_line(s: &str, line: usize) -> Result<Message, WireError> {
    let s = s.strip_suffix('\n').unwrap_or(s);
    let s = s.strip_suffix('\r').unwrap_or(s);
    let mut parts = s.split(' ');
    let tag = parts.next().filter(|t| !t.is_empty()).ok_or_else(|| bad(line, "empty line"))?;
    let round_tok = parts.next().ok_or_else(|| bad(line, "missing round index"))?;
    let round: Round =
        round_tok.parse().map_err(|_| bad(line, format!("bad round index {round_tok:?}")))?;

    match tag {
        "QUOTE" => {
            let p = real(field(&mut parts, "p", line)?, "p", line)?;
            let base = real(field(&mut parts, "P0", line)?, "P0", line)?;
            let cap = real(field(&mut parts, "Ph", line)?, "Ph", line)?;
            done(parts, line)?;
            Ok(Message::QuoteOffer { round, p, base, cap })
        }
        "BUNDLE" => {
            let id = field(&mut parts, "id", line)?;
            if id.is_empty() {
                return Err(bad(line, "empty bundle id"));
            }
            done(parts, line)?;
            Ok(Message::BundleOffer { round, bundle_id: id.to_string() })
        }
        "GAIN" => {
            let dg = real(field(&mut parts, "dg", line)?, "dg", line)?;
            done(parts, line)?;
            Ok(Message::GainReport { round, delta_g: dg })
        }
        "ACCEPT" => {
            let payment = real(field(&mut parts, "payment", line)?, "payment", line)?;
            done(parts, line)?;
            Ok(Message::Accept { round, payment })
        }
        "BREAKDOWN" => {
            let case_tok = field(&mut parts, "case", line)?;
            let case = CaseId::from_str(case_tok).map_err(|e| bad(line, e))?;
            // the reason may contain spaces; rejoin the raw remainder
            let rest = parts.collect::<Vec<_>>().join(" ");
            let quoted = rest
                .strip_prefix("reason=\"")
                .ok_or_else(|| bad(line, "missing quoted reason"))?;
            let inner = quoted
                .strip_suffix('"')
                .filter(|body| !body.ends_with('\\') || body.ends_with("\\\\"))
                .ok_or_else(|| bad(line, "unterminated reason"))?;
            Ok(Message::Breakdown { round, case, reason: unescape(inner, line)? })
        }
        other => Err(bad(line, format!("unknown message tag {other:?}"))),
    }
}

/// Parses a single line numbered 1.
pub fn decode(s: &str) -> Result<Message, WireError> {
    decode_line(s, 1)
}

/// Parses a whole newline-separated log; blank lines are not allowed.
pub fn decode_log(text: &str) -> Result<Vec<Message>, WireError> {
    text.lines().enumerate().map(|(i, l)| decode_line(l, i + 1)).collect()
}

/// Renders a whole log, one message per line with trailing newline.
pub fn encode_log(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&encode(m));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn quote_renders_and_round_trips() {
        let m = Message::QuoteOffer { round: 1, p: 10.0, base: 1.2, cap: 2.2 };
        let line = encode(&m);
        assert_eq!(line, "QUOTE 1 p=10 P0=1.2 Ph=2.2");
        assert_eq!(decode(&line).unwrap(), m);
    }

    #[test]
    fn every_kind_round_trips_bitwise() {
        let msgs = vec![
            Message::QuoteOffer {
                round: 7,
                p: 0.1f64.next_up(),
                base: 1e-17,
                cap: 12345.678901234567,
            },
            Message::BundleOffer { round: 7, bundle_id: "F2".into() },
            Message::BundleOffer { round: 8, bundle_id: crate::NO_OFFER_ID.into() },
            Message::GainReport { round: 7, delta_g: -0.25 },
            Message::Accept { round: 9, payment: 2.2 },
            Message::Breakdown {
                round: 10,
                case: CaseId::TaskLoss,
                reason: "gain below breakeven".into(),
            },
        ];
        for m in msgs {
            assert_eq!(decode(&encode(&m)).unwrap(), m, "{m:?}");
        }
    }

    #[test]
    fn breakdown_reason_is_quoted_and_survives_nasty_characters() {
        let m = Message::Breakdown {
            round: 7,
            case: CaseId::NoAffordable,
            reason: "quote \"too low\" for F1\\F2,  twice".into(),
        };
        let line = encode(&m);
        assert!(line.starts_with("BREAKDOWN 7 case=1 reason=\""));
        assert!(line.ends_with('"'));
        assert_eq!(decode(&line).unwrap(), m);
    }

    #[test]
    fn truncated_and_malformed_lines_fail_with_line_numbers() {
        for s in [
            "QUOTE 1 p=10 P0=1.2",
            "QUOTE 1 p=10 P0=1.2 Ph=",
            "QUOTE x p=10 P0=1.2 Ph=2.2",
            "QUOTE 1 p=ten P0=1.2 Ph=2.2",
            "QUOTE 1 p=inf P0=1.2 Ph=2.2",
            "QUOTE 1 p=10 P0=1.2 Ph=2.2 extra=1",
            "PING 1",
            "BUNDLE 1 id=",
            "BREAKDOWN 1 case=99 reason=\"x\"",
            "BREAKDOWN 1 case=4 reason=\"unterminated",
            "BREAKDOWN 1 case=4 reason=\"bad escape \\q\"",
            "",
        ] {
            let err = decode_line(s, 12).unwrap_err();
            let WireError::Malformed { line, .. } = err;
            assert_eq!(line, 12, "input {s:?}");
        }
    }

    #[test]
    fn log_decode_reports_the_offending_line() {
        let text = "QUOTE 1 p=10 P0=1.2 Ph=2.2\nBUNDLE 1 id=F2\nGAIN 1 dg=oops\n";
        let err = decode_log(text).unwrap_err();
        assert!(matches!(err, WireError::Malformed { line: 3, .. }));

        let ok = decode_log("QUOTE 1 p=10 P0=1.2 Ph=2.2\nBUNDLE 1 id=F2\n").unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(encode_log(&ok), "QUOTE 1 p=10 P0=1.2 Ph=2.2\nBUNDLE 1 id=F2\n");
    }

    #[test]
    fn terminal_classification() {
        assert!(Message::Accept { round: 1, payment: 0.0 }.is_terminal());
        assert!(Message::Breakdown { round: 1, case: CaseId::MaxRounds, reason: String::new() }
            .is_terminal());
        assert!(!Message::GainReport { round: 1, delta_g: 0.1 }.is_terminal());
    }

    proptest! {
        #[test]
        fn any_finite_quote_round_trips(
            round in 1u32..=500,
            p in prop::num::f64::NORMAL.prop_map(f64::abs),
            base in prop::num::f64::NORMAL.prop_map(f64::abs),
            extra in prop::num::f64::NORMAL.prop_map(f64::abs),
        ) {
            let m = Message::QuoteOffer { round, p, base, cap: base + extra.min(1e100) };
            prop_assert_eq!(decode(&encode(&m)).unwrap(), m);
        }

        #[test]
        fn any_reason_round_trips(round in 1u32..=500, reason in ".{0,80}") {
            let m = Message::Breakdown { round, case: CaseId::Exhausted, reason };
            prop_assert_eq!(decode(&encode(&m)).unwrap(), m);
        }
    }
}
