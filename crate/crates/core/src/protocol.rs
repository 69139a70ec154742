//! Newline-delimited JSON request/response channel to a child process.
//!
//! Each request is one JSON object carrying an integer `id` and a `cmd`; the
//! peer answers with one JSON object per line carrying the same `id`, in
//! request order. A response with an `error` key is a remote failure. Only one
//! request is in flight at a time.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

/// A decoded response together with the raw line it came from.
#[derive(Debug, Clone)]
pub struct Response {
    pub body: Map<String, Value>,
    pub line: String,
}

impl Response {
    pub fn protocol_error(&self, message: impl Into<String>) -> Error {
        Error::Protocol {
            message: message.into(),
            line: self.line.clone(),
        }
    }

    pub fn f64_field(&self, key: &str) -> Result<f64> {
        self.body
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| self.protocol_error(format!("missing numeric field `{key}`")))
    }

    pub fn f64_array(&self, key: &str) -> Result<Vec<f64>> {
        let arr = self
            .body
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| self.protocol_error(format!("missing array field `{key}`")))?;
        arr.iter()
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.protocol_error(format!("non-numeric entry in `{key}`")))
            })
            .collect()
    }
}

pub struct NdjsonChannel {
    child: Option<Child>,
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    abandoned: HashSet<u64>,
    timeout: Duration,
}

impl std::fmt::Debug for NdjsonChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NdjsonChannel")
            .field("pid", &self.child.as_ref().map(Child::id))
            .field("next_id", &self.next_id)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl NdjsonChannel {
    /// Spawns `command_line` through `sh -c` and talks to it over stdio.
    pub fn spawn(command_line: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command_line)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut channel = Self::from_io(stdout, stdin, timeout);
        channel.child = Some(child);
        Ok(channel)
    }

    /// Wraps an arbitrary byte transport.
    pub fn from_io<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        NdjsonChannel {
            child: None,
            writer: Box::new(writer),
            lines: rx,
            next_id: 1,
            abandoned: HashSet::new(),
            timeout,
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    /// Sends `{"id":N,"cmd":cmd,...fields}` and waits for the matching reply.
    pub fn request(&mut self, cmd: &str, fields: Map<String, Value>) -> Result<Response> {
        let id = self.next_id;
        self.next_id += 1;
        let mut body = Map::new();
        body.insert("id".into(), Value::from(id));
        body.insert("cmd".into(), Value::from(cmd));
        body.extend(fields);
        let mut text = serde_json::to_string(&Value::Object(body))?;
        text.push('\n');
        if let Err(e) = self
            .writer
            .write_all(text.as_bytes())
            .and_then(|_| self.writer.flush())
        {
            return Err(Error::ChannelClosed(format!("write failed: {e}")));
        }

        loop {
            let line = match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(Error::ChannelClosed(format!("read failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    self.abandoned.insert(id);
                    return Err(Error::Timeout(self.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::ChannelClosed(self.exit_description()));
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let body = match serde_json::from_str::<Value>(&line) {
                Ok(Value::Object(map)) => map,
                Ok(_) => {
                    return Err(Error::Protocol {
                        message: "response is not a JSON object".into(),
                        line,
                    })
                }
                Err(e) => {
                    return Err(Error::Protocol {
                        message: format!("malformed JSON: {e}"),
                        line,
                    })
                }
            };
            let response = Response { body, line };
            let got = response
                .body
                .get("id")
                .and_then(Value::as_u64)
                .ok_or_else(|| response.protocol_error("missing integer `id`"))?;
            if got != id {
                // Late answer to a request that already timed out.
                if self.abandoned.remove(&got) {
                    continue;
                }
                return Err(response.protocol_error(format!("mismatched id: expected {id}, got {got}")));
            }
            if let Some(err) = response.body.get("error") {
                let message = err.as_str().map_or_else(|| err.to_string(), str::to_owned);
                return Err(Error::Remote(message));
            }
            return Ok(response);
        }
    }

    fn exit_description(&mut self) -> String {
        match self.child.as_mut().map(Child::try_wait) {
            Some(Ok(Some(status))) => format!("peer process exited ({status})"),
            _ => "peer closed its output".into(),
        }
    }
}

impl Drop for NdjsonChannel {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
