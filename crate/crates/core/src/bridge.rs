//! Client for an external model process speaking newline-delimited JSON over
//! its standard input and output.
//!
//! The process wraps a trained model and its subword tokenizer. One request
//! is in flight at a time per process; the client serializes callers behind a
//! mutex, so spawn several clients for parallelism.
//!
//! ```text
//! {"op":"handshake"}                                  -> {"ok":true,"version":1,"modes":[...]}
//! {"op":"encode","text":s}                            -> {"tokens":[ints]}
//! {"op":"decode","tokens":[ints]}                     -> {"text":s}
//! {"op":"special","which":"bos"|"eos"}                -> {"id":int}
//! {"op":"next_logprobs","context":s,"prefix":[..],"allowed":[..]} -> {"logprobs":[reals]}
//! {"op":"span_scores","query":s,"context":s}          -> {"spans":[[s,e],..],"start":[..],"end":[..]}
//! any failure                                         -> {"error":s}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::scoring::{ScorerError, SpanScorer, SpanScores, TokenScorer};
use crate::tokenizer::{TokenId, Tokenizer, TokenizerError};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("empty bridge command")]
    EmptyCommand,
    #[error("cannot parse bridge command: {0}")]
    BadCommand(String),
    #[error("cannot start bridge process: {0}")]
    Spawn(std::io::Error),
    #[error("bridge i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("bridge closed its output")]
    Closed,
    #[error("bridge reported: {0}")]
    Remote(String),
    #[error("unexpected bridge response: {0}")]
    Protocol(String),
    #[error("bridge speaks protocol version {0}, expected {PROTOCOL_VERSION}")]
    Version(u64),
    #[error("bridge does not offer mode {0:?}")]
    MissingMode(String),
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct BridgeClient {
    channel: Mutex<Channel>,
    modes: Vec<String>,
    bos: TokenId,
    eos: TokenId,
}

#[derive(Deserialize)]
struct Handshake {
    ok: bool,
    version: u64,
    #[serde(default)]
    modes: Vec<String>,
}

impl BridgeClient {
    /// Parses a shell-style command line (`"python3 serve.py --model x"`) and
    /// spawns it.
    pub fn from_command_line(cmd: &str) -> Result<Self, BridgeError> {
        let argv = shell_words::split(cmd).map_err(|e| BridgeError::BadCommand(e.to_string()))?;
        Self::spawn(&argv)
    }

    /// Starts the process and performs the handshake.
    pub fn spawn<S: AsRef<std::ffi::OsStr>>(argv: &[S]) -> Result<Self, BridgeError> {
        let (program, args) = argv.split_first().ok_or(BridgeError::EmptyCommand)?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(BridgeError::Spawn)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut client = Self {
            channel: Mutex::new(Channel { child, stdin, stdout }),
            modes: Vec::new(),
            bos: 0,
            eos: 0,
        };
        let hs: Handshake = client.call(json!({"op": "handshake"}))?;
        if !hs.ok {
            return Err(BridgeError::Protocol("handshake not ok".into()));
        }
        if hs.version != PROTOCOL_VERSION {
            return Err(BridgeError::Version(hs.version));
        }
        client.modes = hs.modes;
        client.bos = client.special("bos")?;
        client.eos = client.special("eos")?;
        Ok(client)
    }

    pub fn modes(&self) -> &[String] {
        &self.modes
    }

    /// Fails unless the bridge announced `mode` ("generative" or
    /// "extractive") in its handshake.
    pub fn require_mode(&self, mode: &str) -> Result<(), BridgeError> {
        if self.modes.iter().any(|m| m == mode || m == "both") {
            Ok(())
        } else {
            Err(BridgeError::MissingMode(mode.into()))
        }
    }

    fn special(&self, which: &str) -> Result<TokenId, BridgeError> {
        #[derive(Deserialize)]
        struct Id {
            id: TokenId,
        }
        Ok(self.call::<Id>(json!({"op": "special", "which": which}))?.id)
    }

    /// Sends one request and parses the reply.
    pub fn call<T: DeserializeOwned>(&self, request: Value) -> Result<T, BridgeError> {
        let mut ch = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        let mut line = serde_json::to_string(&request).expect("json value serializes");
        line.push('\n');
        ch.stdin.write_all(line.as_bytes())?;
        ch.stdin.flush()?;
        let mut reply = String::new();
        if ch.stdout.read_line(&mut reply)? == 0 {
            return Err(BridgeError::Closed);
        }
        let value: Value = serde_json::from_str(&reply).map_err(|e| BridgeError::Protocol(e.to_string()))?;
        if let Some(err) = value.get("error") {
            let msg = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
            return Err(BridgeError::Remote(msg));
        }
        serde_json::from_value(value).map_err(|e| BridgeError::Protocol(e.to_string()))
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        let ch = self.channel.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = ch.child.kill();
        let _ = ch.child.wait();
    }
}

impl Tokenizer for BridgeClient {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, TokenizerError> {
        #[derive(Deserialize)]
        struct Tokens {
            tokens: Vec<TokenId>,
        }
        self.call::<Tokens>(json!({"op": "encode", "text": text}))
            .map(|t| t.tokens)
            .map_err(|e| TokenizerError::Backend(e.to_string()))
    }

    fn decode(&self, tokens: &[TokenId]) -> Result<String, TokenizerError> {
        #[derive(Deserialize)]
        struct Text {
            text: String,
        }
        self.call::<Text>(json!({"op": "decode", "tokens": tokens}))
            .map(|t| t.text)
            .map_err(|e| TokenizerError::Backend(e.to_string()))
    }

    fn bos_id(&self) -> TokenId {
        self.bos
    }

    fn eos_id(&self) -> TokenId {
        self.eos
    }
}

impl TokenScorer for BridgeClient {
    fn next_logprobs(
        &self,
        marked_context: &str,
        prefix: &[TokenId],
        allowed: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, ScorerError> {
        #[derive(Deserialize)]
        struct Logprobs {
            logprobs: Vec<f64>,
        }
        let out: Logprobs = self
            .call(json!({"op": "next_logprobs", "context": marked_context, "prefix": prefix, "allowed": allowed}))
            .map_err(|e| ScorerError::Backend(e.to_string()))?;
        if out.logprobs.len() != allowed.len() {
            return Err(ScorerError::Backend(format!(
                "{} logprobs for {} allowed tokens",
                out.logprobs.len(),
                allowed.len()
            )));
        }
        Ok(allowed.iter().copied().zip(out.logprobs).collect())
    }
}

impl SpanScorer for BridgeClient {
    fn span_scores(&self, query: &str, context: &str) -> Result<SpanScores, ScorerError> {
        #[derive(Deserialize)]
        struct Spans {
            spans: Vec<(usize, usize)>,
            start: Vec<f64>,
            end: Vec<f64>,
        }
        let out: Spans = self
            .call(json!({"op": "span_scores", "query": query, "context": context}))
            .map_err(|e| ScorerError::Backend(e.to_string()))?;
        Ok(SpanScores {
            spans: out.spans,
            start: out.start,
            end: out.end,
        })
    }
}
