//! Line-delimited event log.
//!
//! One record per line: a tag followed by space-separated fields. Floats are
//! written in their shortest round-trip form, so a parsed log is bit-identical
//! to the one that was written.
//!
//! | tag     | fields |
//! |---------|--------|
//! | `HDR`   | seed, false-target count, false-target ids |
//! | `PATH`  | t, path start, path end, `CIRCLE cx cy cz r` or `POLY closed n x y z …` |
//! | `TRUTH` | t, secondary x y z φ, primary x y z φ, true `L → V` tx ty tz θ, secondary visible (0/1) |
//! | `DET`   | stamp, track id, x y z, variance |
//! | `VIO`   | stamp, x y z φ, vx vy vz ω |
//! | `REF`   | t, point count, first stamp, first x y z φ (omitted when empty) |
//! | `EST`   | t, status, track id or `-`, x y z φ, `L → V` tx ty tz θ |
//! | `FAIL`  | t, reason |
//! | `END`   | t |

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Vector3;
use thiserror::Error;

use crate::evaluation::ReferencePath;
use crate::guider::GuiderStatus;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Header { seed: u64, false_target_ids: Vec<u32> },
    Path { t: f64, start: f64, end: f64, path: ReferencePath },
    Truth {
        t: f64,
        secondary: Vector3<f64>,
        secondary_heading: f64,
        primary: Vector3<f64>,
        primary_heading: f64,
        translation: Vector3<f64>,
        heading: f64,
        visible: bool,
    },
    Detection { stamp: f64, track_id: u32, position: Vector3<f64>, variance: f64 },
    Vio { stamp: f64, position: Vector3<f64>, heading: f64, velocity: Vector3<f64>, heading_rate: f64 },
    Reference { t: f64, count: usize, first: Option<(f64, Vector3<f64>, f64)> },
    Estimate {
        t: f64,
        status: GuiderStatus,
        track_id: Option<u32>,
        position: Vector3<f64>,
        heading: f64,
        translation: Vector3<f64>,
        transform_heading: f64,
    },
    Failure { t: f64, reason: String },
    End { t: f64 },
}

fn push_vec(out: &mut String, v: &Vector3<f64>) {
    let _ = write!(out, " {} {} {}", v.x, v.y, v.z);
}

impl Record {
    pub fn write_line(&self, out: &mut String) {
        match self {
            Record::Header { seed, false_target_ids } => {
                let _ = write!(out, "HDR {seed} {}", false_target_ids.len());
                for id in false_target_ids {
                    let _ = write!(out, " {id}");
                }
            }
            Record::Path { t, start, end, path } => {
                let _ = write!(out, "PATH {t} {start} {end}");
                match path {
                    ReferencePath::Circle { center, radius } => {
                        out.push_str(" CIRCLE");
                        push_vec(out, center);
                        let _ = write!(out, " {radius}");
                    }
                    ReferencePath::Polyline { points, closed } => {
                        let _ = write!(out, " POLY {} {}", u8::from(*closed), points.len());
                        for p in points {
                            push_vec(out, p);
                        }
                    }
                }
            }
            Record::Truth { t, secondary, secondary_heading, primary, primary_heading, translation, heading, visible } => {
                let _ = write!(out, "TRUTH {t}");
                push_vec(out, secondary);
                let _ = write!(out, " {secondary_heading}");
                push_vec(out, primary);
                let _ = write!(out, " {primary_heading}");
                push_vec(out, translation);
                let _ = write!(out, " {heading} {}", u8::from(*visible));
            }
            Record::Detection { stamp, track_id, position, variance } => {
                let _ = write!(out, "DET {stamp} {track_id}");
                push_vec(out, position);
                let _ = write!(out, " {variance}");
            }
            Record::Vio { stamp, position, heading, velocity, heading_rate } => {
                let _ = write!(out, "VIO {stamp}");
                push_vec(out, position);
                let _ = write!(out, " {heading}");
                push_vec(out, velocity);
                let _ = write!(out, " {heading_rate}");
            }
            Record::Reference { t, count, first } => {
                let _ = write!(out, "REF {t} {count}");
                if let Some((stamp, p, h)) = first {
                    let _ = write!(out, " {stamp}");
                    push_vec(out, p);
                    let _ = write!(out, " {h}");
                }
            }
            Record::Estimate { t, status, track_id, position, heading, translation, transform_heading } => {
                let _ = write!(out, "EST {t} {}", status.label());
                match track_id {
                    Some(id) => {
                        let _ = write!(out, " {id}");
                    }
                    None => out.push_str(" -"),
                }
                push_vec(out, position);
                let _ = write!(out, " {heading}");
                push_vec(out, translation);
                let _ = write!(out, " {transform_heading}");
            }
            Record::Failure { t, reason } => {
                let _ = write!(out, "FAIL {t} {reason}");
            }
            Record::End { t } => {
                let _ = write!(out, "END {t}");
            }
        }
        out.push('\n');
    }
}

struct Fields<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn err(&self, message: impl Into<String>) -> LogError {
        LogError { line: self.line, message: message.into() }
    }

    fn next_str(&mut self, what: &str) -> Result<&'a str, LogError> {
        self.tokens.next().ok_or_else(|| self.err(format!("missing field {what}")))
    }

    fn parse<T: FromStr>(&mut self, what: &str) -> Result<T, LogError> {
        let s = self.next_str(what)?;
        s.parse().map_err(|_| self.err(format!("invalid {what} '{s}'")))
    }

    fn f64(&mut self, what: &str) -> Result<f64, LogError> {
        self.parse(what)
    }

    fn vec3(&mut self, what: &str) -> Result<Vector3<f64>, LogError> {
        Ok(Vector3::new(self.f64(what)?, self.f64(what)?, self.f64(what)?))
    }

    fn flag(&mut self, what: &str) -> Result<bool, LogError> {
        match self.next_str(what)? {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(self.err(format!("invalid {what} '{s}'"))),
        }
    }

    fn finish(mut self) -> Result<(), LogError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(s) => Err(self.err(format!("unexpected trailing field '{s}'"))),
        }
    }
}

impl Record {
    /// Parses one line; `line` is reported in errors.
    pub fn parse(text: &str, line: usize) -> Result<Self, LogError> {
        let mut f = Fields { tokens: text.split_ascii_whitespace(), line };
        let tag = f.next_str("tag")?;
        let record = match tag {
            "HDR" => {
                let seed = f.parse("seed")?;
                let n: usize = f.parse("false-target count")?;
                let false_target_ids = (0..n).map(|_| f.parse("false-target id")).collect::<Result<_, _>>()?;
                Record::Header { seed, false_target_ids }
            }
            "PATH" => {
                let (t, start, end) = (f.f64("t")?, f.f64("start")?, f.f64("end")?);
                let path = match f.next_str("path kind")? {
                    "CIRCLE" => ReferencePath::Circle { center: f.vec3("center")?, radius: f.f64("radius")? },
                    "POLY" => {
                        let closed = f.flag("closed")?;
                        let n: usize = f.parse("point count")?;
                        let points = (0..n).map(|_| f.vec3("point")).collect::<Result<_, _>>()?;
                        ReferencePath::Polyline { points, closed }
                    }
                    other => return Err(f.err(format!("unknown path kind '{other}'"))),
                };
                Record::Path { t, start, end, path }
            }
            "TRUTH" => Record::Truth {
                t: f.f64("t")?,
                secondary: f.vec3("secondary position")?,
                secondary_heading: f.f64("secondary heading")?,
                primary: f.vec3("primary position")?,
                primary_heading: f.f64("primary heading")?,
                translation: f.vec3("translation")?,
                heading: f.f64("heading")?,
                visible: f.flag("visible")?,
            },
            "DET" => Record::Detection {
                stamp: f.f64("stamp")?,
                track_id: f.parse("track id")?,
                position: f.vec3("position")?,
                variance: f.f64("variance")?,
            },
            "VIO" => Record::Vio {
                stamp: f.f64("stamp")?,
                position: f.vec3("position")?,
                heading: f.f64("heading")?,
                velocity: f.vec3("velocity")?,
                heading_rate: f.f64("heading rate")?,
            },
            "REF" => {
                let t = f.f64("t")?;
                let count = f.parse("count")?;
                let first = if count > 0 {
                    Some((f.f64("first stamp")?, f.vec3("first position")?, f.f64("first heading")?))
                } else {
                    None
                };
                Record::Reference { t, count, first }
            }
            "EST" => {
                let t = f.f64("t")?;
                let label = f.next_str("status")?;
                let status = GuiderStatus::from_label(label).ok_or_else(|| f.err(format!("unknown status '{label}'")))?;
                let track_id = match f.next_str("track id")? {
                    "-" => None,
                    s => Some(s.parse().map_err(|_| f.err(format!("invalid track id '{s}'")))?),
                };
                Record::Estimate {
                    t,
                    status,
                    track_id,
                    position: f.vec3("position")?,
                    heading: f.f64("heading")?,
                    translation: f.vec3("translation")?,
                    transform_heading: f.f64("transform heading")?,
                }
            }
            "FAIL" => Record::Failure { t: f.f64("t")?, reason: f.next_str("reason")?.to_string() },
            "END" => Record::End { t: f.f64("t")? },
            other => return Err(f.err(format!("unknown record tag '{other}'"))),
        };
        f.finish()?;
        Ok(record)
    }
}

/// Chronological record of one scenario run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<Record>,
}

impl EventLog {
    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 96);
        for r in &self.records {
            r.write_line(&mut out);
        }
        out
    }

    /// Parses a log; a log without its closing `END` record is truncated.
    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut records = Vec::new();
        let mut last = 0;
        for (i, line) in text.lines().enumerate() {
            last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if matches!(records.last(), Some(Record::End { .. })) {
                return Err(LogError { line: last, message: "record after END".into() });
            }
            records.push(Record::parse(line, last)?);
        }
        if !matches!(records.last(), Some(Record::End { .. })) {
            return Err(LogError { line: last + 1, message: "log is truncated: missing END record".into() });
        }
        Ok(Self { records })
    }

    pub fn seed(&self) -> Option<u64> {
        self.records.iter().find_map(|r| match r {
            Record::Header { seed, .. } => Some(*seed),
            _ => None,
        })
    }

    pub fn false_target_ids(&self) -> Vec<u32> {
        self.records
            .iter()
            .find_map(|r| match r {
                Record::Header { false_target_ids, .. } => Some(false_target_ids.clone()),
                _ => None,
            })
            .unwrap_or_default()
    }

    pub fn failure(&self) -> Option<(f64, &str)> {
        self.records.iter().find_map(|r| match r {
            Record::Failure { t, reason } => Some((*t, reason.as_str())),
            _ => None,
        })
    }
}
