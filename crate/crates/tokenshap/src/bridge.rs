//! Client side of the NDJSON stdio bridge to an external classifier.
//!
//! The worker is a subprocess launched from a `bridge:<command line>` model
//! spec. Requests and responses are single-line JSON objects:
//!
//! ```text
//! → {"op":"handshake"}
//! ← {"op":"handshake","model":"…","classes":["AS1","AS2","AS3"],"output_mode":"probability"}
//! → {"op":"predict","id":0,"texts":["ask [MASK] now", …]}
//! ← {"op":"predict","id":0,"probs":[[0.1,0.7,0.2], …]}
//! ← {"op":"error","id":0,"message":"…"}
//! → {"op":"shutdown"}
//! ```
//!
//! Only one request is in flight at a time, and every response must arrive
//! within the request timeout; otherwise the worker is killed and the batch
//! fails as an adapter error.

use std::io::{BufRead, BufReader, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokenshap_core::corpus::Dimension;
use tokenshap_core::model::{
    EvalCounter, MaskedInput, MaskingStrategy, ModelAdapter, OutputMode, ScoreVector,
};
use tokenshap_core::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request<'a> {
    Handshake,
    Predict { id: u64, texts: &'a [String] },
    Shutdown,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Response {
    Handshake {
        model: String,
        classes: Vec<String>,
        output_mode: String,
    },
    Predict {
        id: u64,
        probs: Vec<Vec<f64>>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    next_id: u64,
    dead: Option<String>,
}

impl Worker {
    fn send(&mut self, request: &Request<'_>) -> Result<(), String> {
        let mut line = serde_json::to_string(request).map_err(|e| e.to_string())?;
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or("worker stdin is closed")?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| format!("writing to worker: {e}"))
    }

    /// Next parseable response, skipping malformed lines, until `deadline`.
    fn receive(&mut self, deadline: Instant) -> Result<Response, String> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => match serde_json::from_str::<Response>(&line) {
                    Ok(r) => return Ok(r),
                    Err(e) => log::warn!("bridge: ignoring malformed worker line ({e}): {line}"),
                },
                Err(RecvTimeoutError::Timeout) => return Err("worker timed out".into()),
                Err(RecvTimeoutError::Disconnected) => return Err("worker exited".into()),
            }
        }
    }

    fn kill(&mut self, reason: String) {
        kill_group(&mut self.child);
        let _ = self.child.wait();
        self.stdin = None;
        self.dead = Some(reason);
    }
}

/// Kills the worker's process group, so commands that `sh` runs as
/// children do not outlive it.
fn kill_group(child: &mut Child) {
    let _ = Command::new("kill")
        .args(["-KILL", "--", &format!("-{}", child.id())])
        .stderr(Stdio::null())
        .status();
    let _ = child.kill();
}

/// A [`ModelAdapter`] backed by a bridge worker process.
pub struct BridgeAdapter {
    name: String,
    dimension: Dimension,
    mode: OutputMode,
    masking: MaskingStrategy,
    timeout: Duration,
    counter: EvalCounter,
    worker: Mutex<Worker>,
}

impl BridgeAdapter {
    /// Starts `command` through `sh -c` in `cwd` and performs the handshake.
    pub fn spawn(
        command: &str,
        cwd: Option<&Path>,
        dimension_name: &str,
        masking: MaskingStrategy,
        timeout: Duration,
    ) -> Result<Self, String> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command).process_group(0);
        if let Some(dir) = cwd {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start bridge worker `{command}`: {e}"))?;
        let stdout = child.stdout.take().ok_or("worker has no stdout")?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut worker = Worker {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            next_id: 0,
            dead: None,
        };

        let handshake = worker
            .send(&Request::Handshake)
            .and_then(|_| worker.receive(Instant::now() + timeout));
        let (model, classes, output_mode) = match handshake {
            Ok(Response::Handshake {
                model,
                classes,
                output_mode,
            }) => (model, classes, output_mode),
            Ok(other) => {
                worker.kill("bad handshake".into());
                return Err(format!("expected a handshake response, got {other:?}"));
            }
            Err(e) => {
                worker.kill(e.clone());
                return Err(format!("bridge handshake failed: {e}"));
            }
        };
        let fail = |worker: &mut Worker, e: String| {
            worker.kill(e.clone());
            e
        };
        let dimension = match Dimension::new(dimension_name, classes) {
            Ok(d) => d,
            Err(e) => return Err(fail(&mut worker, e.to_string())),
        };
        let mode = match output_mode.parse::<OutputMode>() {
            Ok(m) => m,
            Err(e) => return Err(fail(&mut worker, e.to_string())),
        };
        Ok(BridgeAdapter {
            name: model,
            dimension,
            mode,
            masking,
            timeout,
            counter: EvalCounter::new(),
            worker: Mutex::new(worker),
        })
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, String> {
        let mut worker = self.worker.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(reason) = &worker.dead {
            return Err(format!("worker is not running ({reason})"));
        }
        let id = worker.next_id;
        worker.next_id += 1;
        let deadline = Instant::now() + self.timeout;
        let outcome = worker
            .send(&Request::Predict { id, texts })
            .and_then(|_| loop {
                match worker.receive(deadline)? {
                    Response::Predict { id: got, probs } if got == id => break Ok(probs),
                    Response::Error { id: Some(got), message } if got == id => break Err(message),
                    Response::Error { id: None, message } => break Err(message),
                    stale => log::warn!("bridge: ignoring unexpected response {stale:?}"),
                }
            });
        if let Err(e) = &outcome {
            if e == "worker timed out" || e == "worker exited" || e.starts_with("writing to worker") {
                worker.kill(e.clone());
            }
        }
        outcome
    }
}

impl ModelAdapter for BridgeAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> &Dimension {
        &self.dimension
    }

    fn output_mode(&self) -> OutputMode {
        self.mode
    }

    fn evaluate(&self, inputs: &[MaskedInput<'_>]) -> tokenshap_core::Result<Vec<ScoreVector>> {
        let texts: Vec<String> = inputs.iter().map(|x| x.render(self.masking)).collect();
        self.request(&texts)
            .map(|rows| rows.into_iter().map(ScoreVector).collect())
            .map_err(|message| Error::Adapter {
                indices: (0..inputs.len()).collect(),
                message,
            })
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn serialized(&self) -> bool {
        true
    }
}

impl Drop for BridgeAdapter {
    fn drop(&mut self) {
        let worker = self.worker.get_mut().unwrap_or_else(|p| p.into_inner());
        if worker.dead.is_some() {
            return;
        }
        let _ = worker.send(&Request::Shutdown);
        worker.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(1);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = worker.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        kill_group(&mut worker.child);
        let _ = worker.child.wait();
    }
}
