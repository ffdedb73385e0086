//! Client side of the optional COMET scoring sidecar.
//!
//! The sidecar is a separate process speaking line-delimited JSON on stdio:
//! one `{"id", "source", "hypothesis", "reference"}` request per line in,
//! one `{"id", "comet"}` (or `{"id", "error"}`) response per line out, in
//! request order. The pipeline runs without it; callers treat any
//! [`CometError`] as "no COMET score".

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CometError {
    #[error("could not start COMET bridge {cmd:?}: {source}")]
    Spawn {
        cmd: String,
        #[source]
        source: std::io::Error,
    },
    #[error("COMET bridge timed out after {0:?}")]
    Timeout(Duration),
    #[error("COMET bridge closed its output after {got} of {expected} responses")]
    Truncated { got: usize, expected: usize },
    #[error("COMET bridge response {index}: {msg}")]
    Protocol { index: usize, msg: String },
    #[error("COMET bridge failed on {id:?}: {msg}")]
    Segment { id: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub source: String,
    pub hypothesis: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comet: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CometBridge {
    pub program: String,
    pub args: Vec<String>,
    /// Overall deadline for one scoring call.
    pub timeout: Duration,
}

impl CometBridge {
    /// Splits a whitespace-separated command line.
    pub fn from_command_line(cmd: &str, timeout: Duration) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(CometBridge {
            program,
            args: parts.collect(),
            timeout,
        })
    }

    /// Scores every request; returns one score per request, in order.
    pub fn score(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, CometError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| CometError::Spawn {
                cmd: self.program.clone(),
                source,
            })?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        let payload: Vec<String> = requests
            .iter()
            .map(|r| serde_json::to_string(r).expect("request serializes"))
            .collect();
        let writer = std::thread::spawn(move || {
            for line in payload {
                if writeln!(stdin, "{line}").is_err() {
                    return;
                }
            }
        });
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    return;
                }
            }
        });

        let deadline = Instant::now() + self.timeout;
        let mut scores = Vec::with_capacity(requests.len());
        let result = (|| {
            for (index, req) in requests.iter().enumerate() {
                let remaining = deadline.saturating_duration_since(Instant::now());
                let line = match rx.recv_timeout(remaining) {
                    Ok(Ok(line)) => line,
                    Ok(Err(e)) => {
                        return Err(CometError::Protocol {
                            index,
                            msg: e.to_string(),
                        })
                    }
                    Err(mpsc::RecvTimeoutError::Timeout) => return Err(CometError::Timeout(self.timeout)),
                    Err(mpsc::RecvTimeoutError::Disconnected) => {
                        return Err(CometError::Truncated {
                            got: index,
                            expected: requests.len(),
                        })
                    }
                };
                let resp: ScoreResponse = serde_json::from_str(&line).map_err(|e| CometError::Protocol {
                    index,
                    msg: e.to_string(),
                })?;
                if resp.id != req.id {
                    return Err(CometError::Protocol {
                        index,
                        msg: format!("expected id {:?}, got {:?}", req.id, resp.id),
                    });
                }
                match (resp.comet, resp.error) {
                    (Some(v), None) if v.is_finite() => scores.push(v),
                    (_, Some(msg)) => return Err(CometError::Segment { id: resp.id, msg }),
                    _ => {
                        return Err(CometError::Protocol {
                            index,
                            msg: "response has neither a finite score nor an error".into(),
                        })
                    }
                }
            }
            Ok(())
        })();
        if result.is_err() {
            let _ = child.kill();
        }
        let _ = writer.join();
        let _ = child.wait();
        result.map(|_| scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(id: &str, h: &str, r: &str) -> ScoreRequest {
        ScoreRequest {
            id: id.into(),
            source: "s".into(),
            hypothesis: h.into(),
            reference: r.into(),
        }
    }

    fn script(dir: &std::path::Path, body: &str) -> CometBridge {
        let path = dir.join("bridge.py");
        std::fs::write(&path, body).unwrap();
        CometBridge {
            program: "python3".into(),
            args: vec![path.display().to_string()],
            timeout: Duration::from_secs(20),
        }
    }

    const FAKE: &str = r#"
import json, sys
for line in sys.stdin:
    try:
        r = json.loads(line)
    except Exception as e:
        print(json.dumps({"id": None, "error": str(e)}), flush=True)
        continue
    score = 0.95 if r["hypothesis"] == r["reference"] else 0.2
    print(json.dumps({"id": r["id"], "comet": score}), flush=True)
"#;

    #[test]
    fn scores_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let bridge = script(dir.path(), FAKE);
        let reqs: Vec<_> = (0..50)
            .map(|i| req(&format!("s{i}"), if i % 2 == 0 { "a" } else { "b" }, "a"))
            .collect();
        let scores = bridge.score(&reqs).unwrap();
        assert_eq!(scores.len(), 50);
        assert_eq!(scores[0], 0.95);
        assert_eq!(scores[1], 0.2);
    }

    #[test]
    fn empty_request_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(script(dir.path(), FAKE).score(&[]).unwrap().is_empty());
    }

    #[test]
    fn id_mismatch_is_protocol_error() {
        let dir = tempfile::tempdir().unwrap();
        let bridge = script(
            dir.path(),
            "import json,sys\nfor l in sys.stdin:\n    print(json.dumps({'id':'zz','comet':0.5}), flush=True)\n",
        );
        let err = bridge.score(&[req("a", "x", "y")]).unwrap_err();
        assert!(matches!(err, CometError::Protocol { index: 0, .. }), "{err}");
    }

    #[test]
    fn missing_program() {
        let bridge = CometBridge {
            program: "/definitely/not/here".into(),
            args: vec![],
            timeout: Duration::from_secs(1),
        };
        assert!(matches!(bridge.score(&[req("a", "x", "y")]), Err(CometError::Spawn { .. })));
    }

    #[test]
    fn silent_bridge_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let mut bridge = script(dir.path(), "import time\ntime.sleep(30)\n");
        bridge.timeout = Duration::from_millis(300);
        assert!(matches!(bridge.score(&[req("a", "x", "y")]), Err(CometError::Timeout(_))));
    }
}
