use std::fmt::Write as _;

use crate::cmdp::Outcome;
use crate::trainer::EpisodeRecord;

pub const METRICS_HEADER: &str = "episode,env_steps,return,outcome,lambda,cumulative_violations,risk_truncations";

/// C-style `%.{sig}g`: `sig` significant digits, trailing zeros removed,
/// exponent form when the exponent is below -4 or at least `sig`.
pub fn format_g(v: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn g9(v: f64) -> String {
    format_g(v, 9)
}

pub fn render_metrics(records: &[EpisodeRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.episode,
            r.env_steps,
            g9(r.ret),
            r.outcome.as_str(),
            g9(r.lambda),
            r.cumulative_violations,
            r.risk_truncations
        )
        .unwrap();
    }
    out
}

/// Parses a metrics table. `Ok(None)` when the header is not the metrics
/// header, so other CSV files can be skipped.
pub fn parse_metrics(text: &str) -> Result<Option<Vec<EpisodeRecord>>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Ok(None);
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(format!("row {row}: expected 7 fields, found {}", f.len()));
        }
        let int = |s: &str, name: &str| s.parse::<u64>().map_err(|_| format!("row {row}: bad {name} {s:?}"));
        let real = |s: &str, name: &str| s.parse::<f64>().map_err(|_| format!("row {row}: bad {name} {s:?}"));
        records.push(EpisodeRecord {
            episode: int(f[0], "episode")? as usize,
            env_steps: int(f[1], "env_steps")?,
            ret: real(f[2], "return")?,
            outcome: Outcome::parse(f[3]).ok_or_else(|| format!("row {row}: bad outcome {:?}", f[3]))?,
            lambda: real(f[4], "lambda")?,
            cumulative_violations: int(f[5], "cumulative_violations")?,
            risk_truncations: int(f[6], "risk_truncations")?,
        });
    }
    Ok(Some(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_printf() {
        let cases = [
            (1.0, "1"),
            (-100.0, "-100"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (11.634_567_891_23, "11.6345679"),
            (123_456_789.0, "123456789"),
            (1_234_567_890.0, "1.23456789e+09"),
            (0.000_123_456_789_01, "0.000123456789"),
            (0.000_012_345, "1.2345e-05"),
            (1e-300, "1e-300"),
            (2.5, "2.5"),
            (9_999_999_995.0, "1e+10"),
            (0.0, "0"),
        ];
        for (v, want) in cases {
            assert_eq!(g9(v), want, "{v}");
        }
    }

    #[test]
    fn metrics_round_trip() {
        let records = vec![EpisodeRecord {
            episode: 0,
            env_steps: 13,
            ret: 88.0,
            outcome: Outcome::GoalTerminal,
            lambda: 11.634_567_891,
            cumulative_violations: 0,
            risk_truncations: 0,
        }];
        let text = render_metrics(&records);
        assert_eq!(text, format!("{METRICS_HEADER}\n0,13,88,goal_terminal,11.6345679,0,0\n"));
        let back = parse_metrics(&text).unwrap().unwrap();
        assert_eq!(back[0].outcome, Outcome::GoalTerminal);
        assert_eq!(back[0].ret, 88.0);
        assert!(parse_metrics("a,b\n").unwrap().is_none());
        assert!(parse_metrics(&format!("{METRICS_HEADER}\n1,2\n")).is_err());
    }
}
