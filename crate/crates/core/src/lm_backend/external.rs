//! Adapter for an externally supplied pretrained model.
//!
//! The model runs as a child process speaking JSON lines on stdin/stdout.
//! Each request is `{"ids": [..], "mask_id": N}`; the reply is
//! `{"hidden": [[..], ..], "mask_probs": [[..], ..]}` with one hidden row per
//! id and one distribution per occurrence of `mask_id`, or `{"error": ".."}`.
//! Segmentation uses a WordPiece vocabulary file, one piece per line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ForwardOutput, MlmBackend, Vocab};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Request<'a> {
    ids: &'a [u32],
    mask_id: u32,
}

#[derive(Deserialize)]
struct Reply {
    #[serde(default)]
    hidden: Vec<Vec<f64>>,
    #[serde(default)]
    mask_probs: Vec<Vec<f64>>,
    #[serde(default)]
    error: Option<String>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ExternalBackend {
    vocab: Vocab,
    hidden_size: usize,
    max_len: usize,
    pipe: Mutex<Pipe>,
}

impl ExternalBackend {
    pub fn spawn(
        program: &str,
        args: &[String],
        vocab_path: &Path,
        hidden_size: usize,
        max_len: usize,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(vocab_path)?;
        let vocab = Vocab::new(
            text.lines()
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        );
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalBackend {
            vocab,
            hidden_size,
            max_len,
            pipe: Mutex::new(Pipe {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        if let Ok(p) = self.pipe.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

impl MlmBackend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn forward(&self, ids: &[u32]) -> Result<ForwardOutput> {
        let mut pipe = self
            .pipe
            .lock()
            .map_err(|_| Error::Backend("adapter lock poisoned".into()))?;
        let req = serde_json::to_string(&Request {
            ids,
            mask_id: self.vocab.mask_id(),
        })?;
        writeln!(pipe.stdin, "{req}")
            .map_err(|e| Error::Backend(format!("write to adapter: {e}")))?;
        pipe.stdin
            .flush()
            .map_err(|e| Error::Backend(format!("flush adapter: {e}")))?;
        let mut line = String::new();
        let n = pipe
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Backend(format!("read from adapter: {e}")))?;
        if n == 0 {
            return Err(Error::Backend("adapter closed its output".into()));
        }
        let reply: Reply = serde_json::from_str(&line)
            .map_err(|e| Error::Backend(format!("bad adapter reply: {e}")))?;
        if let Some(e) = reply.error {
            return Err(Error::Backend(e));
        }
        Ok(ForwardOutput {
            hidden: reply.hidden,
            mask_probs: reply.mask_probs,
        })
    }
}
