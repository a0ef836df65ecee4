//! Line-delimited JSON bridge to an external speaker-ID process. The
//! child prints a handshake naming its protocol and labels, then answers
//! each scoring request by id, in any order.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::Value;

use crate::asi::{Oracle, ScoreVector};
use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

pub const PROTOCOL: &str = "asi-adapter/1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Handshake {
    protocol: String,
    labels: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    id: u64,
    scores: BTreeMap<String, f64>,
}

/// External classifier spoken to over stdin/stdout. Requests are
/// serialized; responses may arrive out of order and are matched by id.
pub struct AdapterOracle {
    inner: Mutex<Inner>,
    labels: Vec<String>,
    timeout: Duration,
}

struct Inner {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::result::Result<Value, String>>,
    pending: HashMap<u64, Response>,
    next_id: u64,
}

impl AdapterOracle {
    /// Launch the adapter process and read its handshake. The command's
    /// stdin and stdout are claimed; stderr is inherited.
    pub fn spawn(mut command: Command, timeout: Duration) -> Result<Self> {
        command.stdin(Stdio::piped()).stdout(Stdio::piped());
        let mut child = command
            .spawn()
            .map_err(|e| Error::Adapter(format!("failed to launch adapter: {e}")))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");

        let (sender, lines) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                let line = match line {
                    Ok(line) => line,
                    // Read failure ends the stream like EOF does.
                    Err(_) => break,
                };
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                let parsed = serde_json::from_str::<Value>(trimmed)
                    .map_err(|e| format!("adapter wrote invalid JSON: {e}"));
                if sender.send(parsed).is_err() {
                    break;
                }
            }
        });

        let mut inner = Inner {
            child,
            stdin,
            lines,
            pending: HashMap::new(),
            next_id: 0,
        };
        match Self::read_handshake(&mut inner, timeout) {
            Ok(labels) => Ok(Self {
                inner: Mutex::new(inner),
                labels,
                timeout,
            }),
            Err(e) => {
                let _ = inner.child.kill();
                let _ = inner.child.wait();
                Err(e)
            }
        }
    }

    fn read_handshake(inner: &mut Inner, timeout: Duration) -> Result<Vec<String>> {
        let handshake = inner.recv_value(timeout)?;
        let handshake: Handshake = serde_json::from_value(handshake)
            .map_err(|e| Error::Adapter(format!("malformed handshake: {e}")))?;
        if handshake.protocol != PROTOCOL {
            return Err(Error::Adapter(format!(
                "unsupported protocol {:?}, expected {PROTOCOL:?}",
                handshake.protocol
            )));
        }
        if handshake.labels.is_empty() {
            return Err(Error::Adapter("handshake lists no labels".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &handshake.labels {
            if !seen.insert(label.clone()) {
                return Err(Error::Adapter(format!(
                    "handshake repeats label {label:?}"
                )));
            }
        }
        Ok(handshake.labels)
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }
}

impl Inner {
    fn recv_value(&mut self, timeout: Duration) -> Result<Value> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(value)) => Ok(value),
            Ok(Err(msg)) => Err(Error::Adapter(msg)),
            Err(RecvTimeoutError::Timeout) => Err(Error::AdapterTimeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(Error::AdapterClosed),
        }
    }

    /// Wait for the response with this id, stashing any others that
    /// arrive first. The deadline covers the whole wait.
    fn recv_response(&mut self, want_id: u64, timeout: Duration) -> Result<Response> {
        if let Some(response) = self.pending.remove(&want_id) {
            return Ok(response);
        }
        let deadline = Instant::now() + timeout;
        loop {
            let remaining = deadline
                .checked_duration_since(Instant::now())
                .ok_or(Error::AdapterTimeout(timeout))?;
            let value = self.recv_value(remaining)?;
            let response: Response = serde_json::from_value(value)
                .map_err(|e| Error::Adapter(format!("malformed response: {e}")))?;
            if response.id == want_id {
                return Ok(response);
            }
            self.pending.insert(response.id, response);
        }
    }
}

impl Oracle for AdapterOracle {
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn identify(&self, buf: &AudioBuffer) -> Result<(String, ScoreVector)> {
        buf.check_non_empty()?;
        if buf.sample_rate != 8000 && buf.sample_rate != 16000 {
            return Err(Error::InvalidArgument(format!(
                "classifier sample rate must be 8000 or 16000 Hz, got {}",
                buf.sample_rate
            )));
        }
        if buf.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "samples contain NaN or infinity".into(),
            ));
        }

        let mut inner = self.inner.lock().expect("adapter lock poisoned");
        let id = inner.next_id;
        inner.next_id += 1;
        let request = serde_json::json!({
            "id": id,
            "sample_rate": buf.sample_rate,
            "samples": buf.samples,
        });
        let mut line = serde_json::to_string(&request)?;
        line.push('\n');
        inner
            .stdin
            .write_all(line.as_bytes())
            .and_then(|()| inner.stdin.flush())
            .map_err(|_| Error::AdapterClosed)?;

        let response = inner.recv_response(id, self.timeout)?;
        drop(inner);

        let mut scores = BTreeMap::new();
        for label in &self.labels {
            scores.insert(label.clone(), 0.0);
        }
        for (label, score) in response.scores {
            if !scores.contains_key(&label) {
                return Err(Error::Adapter(format!(
                    "response names unknown label {label:?}"
                )));
            }
            if !score.is_finite() || score < 0.0 {
                return Err(Error::Adapter(format!(
                    "score for {label:?} is {score}, want finite and non-negative"
                )));
            }
            scores.insert(label, score);
        }
        let total: f64 = scores.values().sum();
        if total <= 0.0 {
            return Err(Error::Adapter("response scores sum to zero".into()));
        }
        for score in scores.values_mut() {
            *score /= total;
        }
        let scores = ScoreVector(scores);
        let label = scores.top().0.to_string();
        Ok((label, scores))
    }
}

impl Drop for AdapterOracle {
    fn drop(&mut self) {
        if let Ok(mut inner) = self.inner.lock() {
            let _ = inner.child.kill();
            let _ = inner.child.wait();
        }
    }
}
