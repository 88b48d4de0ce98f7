//! Trace records and the property checker used to verify runs.
//!
//! A record is one line: `t=<tick> layer=<layer> kind=<kind>` followed by its
//! detail fields in key order. Values escape space, `%`, tab and newline as
//! `%XX`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: u64,
    pub layer: String,
    pub kind: String,
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Percent-encodes `%`, whitespace and control characters (as UTF-8 bytes),
/// so that values survive splitting on spaces and line trimming.
fn escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for ch in v.chars() {
        if ch == '%' || ch.is_whitespace() || ch.is_control() {
            let mut buf = [0u8; 4];
            for b in ch.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        } else {
            out.push(ch);
        }
    }
    out
}

fn unescape(v: &str) -> Option<String> {
    let mut out = Vec::with_capacity(v.len());
    let bytes = v.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = v.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

impl TraceRecord {
    pub fn new(tick: u64, layer: &str, kind: &str) -> Self {
        Self {
            tick,
            layer: layer.to_string(),
            kind: kind.to_string(),
            fields: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        match key {
            "layer" => Some(&self.layer),
            "kind" => Some(&self.kind),
            _ => self.fields.get(key).map(String::as_str),
        }
    }

    /// The line without its tick, for projection comparisons.
    pub fn untimed(&self) -> String {
        let mut s = format!("layer={} kind={}", escape(&self.layer), escape(&self.kind));
        for (k, v) in &self.fields {
            s.push(' ');
            s.push_str(k);
            s.push('=');
            s.push_str(&escape(v));
        }
        s
    }

    pub fn parse(line: &str) -> Result<TraceRecord, String> {
        let mut tick = None;
        let mut layer = None;
        let mut kind = None;
        let mut fields = BTreeMap::new();
        for word in line.split(' ').filter(|w| !w.is_empty()) {
            let (k, v) = word
                .split_once('=')
                .ok_or_else(|| format!("field without `=`: {word}"))?;
            let v = unescape(v).ok_or_else(|| format!("bad escape in {word}"))?;
            match k {
                "t" => tick = Some(v.parse::<u64>().map_err(|_| "bad tick".to_string())?),
                "layer" => layer = Some(v),
                "kind" => kind = Some(v),
                _ => {
                    if fields.insert(k.to_string(), v).is_some() {
                        return Err(format!("duplicate key {k}"));
                    }
                }
            }
        }
        Ok(TraceRecord {
            tick: tick.ok_or("missing t")?,
            layer: layer.ok_or("missing layer")?,
            kind: kind.ok_or("missing kind")?,
            fields,
        })
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {}", self.tick, self.untimed())
    }
}

/// Parses a whole trace; blank lines and `#` comments are skipped. Returns
/// each record with its 1-based line number.
pub fn parse_trace(text: &str) -> Result<Vec<(usize, TraceRecord)>, TraceError> {
    let mut out = Vec::new();
    let mut last = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let r = TraceRecord::parse(line).map_err(|msg| TraceError::Parse { line: i + 1, msg })?;
        if r.tick < last {
            return Err(TraceError::Parse {
                line: i + 1,
                msg: "tick decreases".into(),
            });
        }
        last = r.tick;
        out.push((i + 1, r));
    }
    Ok(out)
}

pub fn render_trace(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
enum Cond {
    /// Alternatives, each a pattern of literals, `*` and `{var}` captures.
    Match(String, Vec<String>),
    Num(String, Cmp, f64),
}

/// Conjunction of field conditions, written `k=v,k2<3,k3=a|b*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Filter {
    conds: Vec<Cond>,
    text: String,
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

type Bindings = BTreeMap<String, String>;

/// Matches `value` against a pattern, extending `b`.
fn match_pattern(pat: &str, value: &str, b: &Bindings) -> Option<Bindings> {
    if pat.is_empty() {
        return value.is_empty().then(|| b.clone());
    }
    if let Some(rest) = pat.strip_prefix('*') {
        return (0..=value.len())
            .filter(|i| value.is_char_boundary(*i))
            .find_map(|i| match_pattern(rest, &value[i..], b));
    }
    if pat.starts_with('{') {
        if let Some(close) = pat.find('}') {
            let var = &pat[1..close];
            let rest = &pat[close + 1..];
            if let Some(bound) = b.get(var) {
                return value
                    .strip_prefix(bound.as_str())
                    .and_then(|v| match_pattern(rest, v, b));
            }
            return (1..=value.len()).filter(|i| value.is_char_boundary(*i)).find_map(|i| {
                let mut nb = b.clone();
                nb.insert(var.to_string(), value[..i].to_string());
                match_pattern(rest, &value[i..], &nb)
            });
        }
    }
    let ch = pat.chars().next().expect("nonempty");
    value
        .strip_prefix(ch)
        .and_then(|v| match_pattern(&pat[ch.len_utf8()..], v, b))
}

impl Filter {
    pub fn parse(text: &str) -> Result<Filter, String> {
        let mut conds = Vec::new();
        for part in text.split(',').filter(|p| !p.is_empty()) {
            let num = |k: &str, op: Cmp, v: &str| -> Result<Cond, String> {
                Ok(Cond::Num(
                    k.to_string(),
                    op,
                    v.parse().map_err(|_| format!("bad number in {part}"))?,
                ))
            };
            if let Some((k, v)) = part.split_once("<=") {
                conds.push(num(k, Cmp::Le, v)?);
            } else if let Some((k, v)) = part.split_once(">=") {
                conds.push(num(k, Cmp::Ge, v)?);
            } else if let Some((k, v)) = part.split_once('<') {
                conds.push(num(k, Cmp::Lt, v)?);
            } else if let Some((k, v)) = part.split_once('>') {
                conds.push(num(k, Cmp::Gt, v)?);
            } else if let Some((k, v)) = part.split_once('=') {
                conds.push(Cond::Match(k.to_string(), v.split('|').map(str::to_string).collect()));
            } else {
                return Err(format!("condition without operator: {part}"));
            }
        }
        if conds.is_empty() {
            return Err("empty filter".into());
        }
        Ok(Filter {
            conds,
            text: text.to_string(),
        })
    }

    fn matches_with(&self, r: &TraceRecord, b: &Bindings) -> Option<Bindings> {
        let mut b = b.clone();
        let tick = r.tick.to_string();
        for c in &self.conds {
            let key = match c {
                Cond::Match(k, _) | Cond::Num(k, _, _) => k,
            };
            let v = if key == "t" { Some(tick.as_str()) } else { r.get(key) };
            let v = v?;
            match c {
                Cond::Match(_, alts) => b = alts.iter().find_map(|p| match_pattern(p, v, &b))?,
                Cond::Num(_, op, n) => {
                    let x = v.parse::<f64>().ok()?;
                    let ok = match op {
                        Cmp::Lt => x < *n,
                        Cmp::Le => x <= *n,
                        Cmp::Gt => x > *n,
                        Cmp::Ge => x >= *n,
                    };
                    if !ok {
                        return None;
                    }
                }
            }
        }
        Some(b)
    }

    pub fn matches(&self, r: &TraceRecord) -> bool {
        self.matches_with(r, &Bindings::new()).is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Property {
    /// Every record matching the second filter has an earlier record
    /// matching the first, under the second's captures.
    Precedes(Filter, Filter),
    Never(Filter),
    Eventually(Filter),
    /// Records matching the filter, without ticks, equal those of another trace.
    ProjectionEqual(String, Filter),
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Precedes(a, b) => write!(f, "precedes {a} {b}"),
            Property::Never(a) => write!(f, "never {a}"),
            Property::Eventually(a) => write!(f, "eventually {a}"),
            Property::ProjectionEqual(p, a) => write!(f, "projection-equal {p} {a}"),
        }
    }
}

pub fn parse_properties(text: &str) -> Result<Vec<Property>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| TraceError::Parse { line: i + 1, msg };
        let w: Vec<&str> = line.split_whitespace().collect();
        let p = match (w[0], w.len()) {
            ("precedes", 3) => Property::Precedes(Filter::parse(w[1]).map_err(err)?, Filter::parse(w[2]).map_err(err)?),
            ("never", 2) => Property::Never(Filter::parse(w[1]).map_err(err)?),
            ("eventually", 2) => Property::Eventually(Filter::parse(w[1]).map_err(err)?),
            ("projection-equal", 3) => Property::ProjectionEqual(w[1].to_string(), Filter::parse(w[2]).map_err(err)?),
            _ => return Err(err(format!("unrecognised property: {line}"))),
        };
        out.push(p);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyResult {
    pub property: String,
    pub passed: bool,
    pub message: String,
}

/// Checks one property. `other` supplies the second trace for projection
/// properties.
pub fn check_property(
    p: &Property,
    trace: &[(usize, TraceRecord)],
    other: Option<&[(usize, TraceRecord)]>,
) -> PropertyResult {
    let (passed, message) = match p {
        Property::Precedes(a, b) => {
            let mut fail = None;
            for (j, (line, r)) in trace.iter().enumerate() {
                let Some(bind) = b.matches_with(r, &Bindings::new()) else {
                    continue;
                };
                if !trace[..j].iter().any(|(_, e)| a.matches_with(e, &bind).is_some()) {
                    fail = Some(format!("line {line}: `{r}` has no preceding `{a}`"));
                    break;
                }
            }
            (fail.is_none(), fail.unwrap_or_default())
        }
        Property::Never(a) => match trace.iter().find(|(_, r)| a.matches(r)) {
            Some((line, r)) => (false, format!("line {line}: `{r}`")),
            None => (true, String::new()),
        },
        Property::Eventually(a) => {
            let ok = trace.iter().any(|(_, r)| a.matches(r));
            (
                ok,
                if ok {
                    String::new()
                } else {
                    format!("no record matches `{a}`")
                },
            )
        }
        Property::ProjectionEqual(_, a) => match other {
            None => (false, "second trace unavailable".into()),
            Some(o) => {
                let left: Vec<(usize, String)> = trace
                    .iter()
                    .filter(|(_, r)| a.matches(r))
                    .map(|(l, r)| (*l, r.untimed()))
                    .collect();
                let right: Vec<(usize, String)> = o
                    .iter()
                    .filter(|(_, r)| a.matches(r))
                    .map(|(l, r)| (*l, r.untimed()))
                    .collect();
                let mismatch =
                    (0..left.len().max(right.len())).find(|&i| left.get(i).map(|x| &x.1) != right.get(i).map(|x| &x.1));
                match mismatch {
                    None => (true, format!("{} records equal", left.len())),
                    Some(i) => (
                        false,
                        format!(
                            "record {}: line {} `{}` vs line {} `{}`",
                            i + 1,
                            left.get(i).map(|x| x.0).unwrap_or(0),
                            left.get(i).map(|x| x.1.as_str()).unwrap_or("<end>"),
                            right.get(i).map(|x| x.0).unwrap_or(0),
                            right.get(i).map(|x| x.1.as_str()).unwrap_or("<end>"),
                        ),
                    ),
                }
            }
        },
    };
    PropertyResult {
        property: p.to_string(),
        passed,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(text: &str) -> Vec<(usize, TraceRecord)> {
        parse_trace(text).unwrap()
    }

    #[test]
    fn roundtrip_with_escapes() {
        let r = TraceRecord::new(3, "mgr", "negotiate")
            .with("reason", "no viable 100%")
            .with("a", "x=y");
        let line = r.to_string();
        assert_eq!(line, "t=3 layer=mgr kind=negotiate a=x=y reason=no%20viable%20100%25");
        assert_eq!(TraceRecord::parse(&line).unwrap(), r);
    }

    #[test]
    fn precedes_with_captures() {
        let tr = t("t=1 layer=enact_r kind=command cmd=cfg.passivate(gps)\n\
                    t=2 layer=enact_r kind=command cmd=cfg.remove(gps)\n\
                    t=3 layer=enact_r kind=command cmd=cfg.remove(wifi)\n");
        let p = Property::Precedes(
            Filter::parse("cmd=cfg.passivate({c})").unwrap(),
            Filter::parse("cmd=cfg.remove({c})").unwrap(),
        );
        let r = check_property(&p, &tr, None);
        assert!(!r.passed);
        assert!(r.message.starts_with("line 3"));
    }

    #[test]
    fn numeric_and_alternatives() {
        let tr = t("t=1 layer=target kind=event battery=40 event=battery_sample\nt=2 layer=target kind=event battery=19 event=battery_sample\n");
        let never = Property::Never(Filter::parse("event=battery_sample,battery<20").unwrap());
        assert!(!check_property(&never, &tr, None).passed);
        let ev = Property::Eventually(Filter::parse("event=arrived*|battery_sample").unwrap());
        assert!(check_property(&ev, &tr, None).passed);
    }

    #[test]
    fn projection() {
        let a = t("t=1 layer=enact_b kind=command cmd=goto_s0\nt=5 layer=enact_b kind=command cmd=pickup\n");
        let b = t("t=2 layer=enact_b kind=command cmd=goto_s0\nt=9 layer=enact_r kind=command cmd=x\nt=9 layer=enact_b kind=command cmd=pickup\n");
        let p = Property::ProjectionEqual("b".into(), Filter::parse("layer=enact_b,kind=command").unwrap());
        assert!(check_property(&p, &a, Some(&b)).passed);
        assert!(!check_property(&p, &a, Some(&b[..1])).passed);
    }
}
