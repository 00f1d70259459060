use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::feedback::{validate_chain, FeedbackVector};
use crate::error::{Error, Result};

/// One logged recommendation outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEvent {
    pub user_id: String,
    /// Milliseconds since the Unix epoch.
    pub ts: i64,
    pub item_id: String,
    pub feedback: FeedbackVector,
    #[serde(default)]
    pub context: BTreeMap<String, f64>,
}

/// Raw line shape, so chain violations surface as validation errors rather
/// than parse errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    user_id: String,
    ts: i64,
    item_id: String,
    feedback: Vec<u8>,
    #[serde(default)]
    context: BTreeMap<String, f64>,
}

/// Streams validated events from line-delimited JSON, enforcing the
/// feedback chain and per-user timestamp order. Blank lines are skipped.
pub struct LogReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    last_ts: HashMap<String, i64>,
    n_tasks: Option<usize>,
    failed: bool,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(reader: R) -> Self {
        LogReader {
            lines: reader.lines(),
            line_no: 0,
            last_ts: HashMap::new(),
            n_tasks: None,
            failed: false,
        }
    }

    /// Requires every feedback array to have exactly `n` entries.
    pub fn expect_tasks(mut self, n: usize) -> Self {
        self.n_tasks = Some(n);
        self
    }

    fn parse(&mut self, line: &str) -> Result<LogEvent> {
        let line_no = self.line_no;
        let raw: RawEvent = serde_json::from_str(line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(n) = self.n_tasks {
            if raw.feedback.len() != n {
                return Err(Error::Validation {
                    line: line_no,
                    message: format!("feedback has {} entries, expected {n}", raw.feedback.len()),
                });
            }
        }
        validate_chain(&raw.feedback).map_err(|message| Error::Validation { line: line_no, message })?;
        if let Some((k, v)) = raw.context.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation {
                line: line_no,
                message: format!("context `{k}` is not finite: {v}"),
            });
        }
        if let Some(&prev) = self.last_ts.get(&raw.user_id) {
            if raw.ts < prev {
                return Err(Error::Ordering {
                    line: line_no,
                    user_id: raw.user_id,
                    ts: raw.ts,
                    prev,
                });
            }
        }
        self.last_ts.insert(raw.user_id.clone(), raw.ts);
        Ok(LogEvent {
            user_id: raw.user_id,
            ts: raw.ts,
            item_id: raw.item_id,
            feedback: FeedbackVector::new(raw.feedback)?,
            context: raw.context,
        })
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<LogEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let result = match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => self.parse(&l),
                Err(e) => Err(Error::Malformed {
                    line: self.line_no,
                    message: e.to_string(),
                }),
            };
            self.failed = result.is_err();
            return Some(result);
        }
    }
}

/// Opens `path` as a validated event stream. Iteration stops after the
/// first error.
pub fn ingest_log(path: &Path) -> Result<LogReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(LogReader::new(BufReader::new(file)))
}

pub fn read_log(path: &Path, n_tasks: usize) -> Result<Vec<LogEvent>> {
    ingest_log(path)?.expect_tasks(n_tasks).collect()
}

pub fn write_log(path: &Path, events: &[LogEvent]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in events {
        let line = serde_json::to_string(e).expect("log events serialize");
        writeln!(w, "{line}").map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Vec<Result<LogEvent>> {
        LogReader::new(text.as_bytes()).collect()
    }

    #[test]
    fn accepts_valid_and_empty() {
        assert!(read("").is_empty());
        let ok = read(r#"{"user_id":"u","ts":5,"item_id":"i","feedback":[1,0,0],"context":{"hour":0.5}}"#);
        assert_eq!(ok.len(), 1);
        let ev = ok[0].as_ref().unwrap();
        assert_eq!(ev.feedback.as_slice(), &[1, 0, 0]);
        assert_eq!(ev.context["hour"], 0.5);
    }

    #[test]
    fn chain_violation_names_fields() {
        let text = "\n{\"user_id\":\"u\",\"ts\":5,\"item_id\":\"i\",\"feedback\":[0,1,0],\"context\":{}}";
        let err = read(text).remove(0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Validation { line: 2, .. }), "{msg}");
        assert!(msg.contains("monotone feedback chain violated"));
        assert!(msg.contains("install=1 but click=0"));
    }

    #[test]
    fn malformed_and_ordering_errors_carry_lines() {
        let err = read("{not json").remove(0).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }));
        let text = concat!(
            r#"{"user_id":"a","ts":10,"item_id":"i","feedback":[0,0,0]}"#,
            "\n",
            r#"{"user_id":"b","ts":1,"item_id":"i","feedback":[0,0,0]}"#,
            "\n",
            r#"{"user_id":"a","ts":9,"item_id":"i","feedback":[0,0,0]}"#,
        );
        let out = read(text);
        assert_eq!(out.len(), 3);
        assert!(out[1].is_ok());
        assert!(matches!(out[2], Err(Error::Ordering { line: 3, ts: 9, prev: 10, .. })));
    }

    #[test]
    fn unknown_keys_and_task_count_rejected() {
        let extra = r#"{"user_id":"a","ts":1,"item_id":"i","feedback":[0],"bogus":1}"#;
        assert!(matches!(read(extra).remove(0), Err(Error::Malformed { .. })));
        let short = r#"{"user_id":"a","ts":1,"item_id":"i","feedback":[1,0]}"#;
        let err = LogReader::new(short.as_bytes()).expect_tasks(3).next().unwrap();
        assert!(matches!(err, Err(Error::Validation { .. })));
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let events = vec![LogEvent {
            user_id: "user-0001".into(),
            ts: 1_700_000_000_123,
            item_id: "item-0003".into(),
            feedback: FeedbackVector::new(vec![1, 1, 0]).unwrap(),
            context: BTreeMap::from([("region".to_string(), 0.25)]),
        }];
        write_log(&path, &events).unwrap();
        assert_eq!(read_log(&path, 3).unwrap(), events);
    }
}
