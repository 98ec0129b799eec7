//! Out-of-process backend for pretrained transformer checkpoints.
//!
//! Talks JSON lines to a helper process over stdin/stdout. The bundled
//! helper (`scripts/mlm_bridge.py`) wraps Hugging Face `transformers`; any
//! program speaking the same protocol works.
//!
//! Requests carry an `op` field: `info`, `predict`, `train`, `perplexity`,
//! `quit`. Every response is one JSON object; an `error` field means the
//! request failed.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::finetune::{TrainOutcome, TrainableMlm, TrainingConfig};
use crate::probe::{Casing, MaskedLm, TokenFilter, Vocabulary};

pub const PYTHON_ENV: &str = "STEREOPROBE_PYTHON";
pub const SCRIPT_ENV: &str = "STEREOPROBE_BRIDGE_SCRIPT";

const BUNDLED_SCRIPT: &str = include_str!("../../../scripts/mlm_bridge.py");

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

#[derive(Deserialize)]
struct Info {
    model_id: String,
    tokens: Vec<String>,
    mask_token: String,
    casing: Casing,
    #[serde(default)]
    special_tokens: Vec<String>,
    #[serde(default)]
    continuation_prefix: Option<String>,
    #[serde(default)]
    word_prefix: Option<String>,
}

pub struct BridgeBackend {
    command: Vec<String>,
    model_id: String,
    mask_token: String,
    casing: Casing,
    vocab: Vocabulary,
    filter: TokenFilter,
    channel: Mutex<Channel>,
}

/// The bundled helper, written once to the temp directory.
fn bundled_script() -> Result<PathBuf> {
    let path = std::env::temp_dir().join(format!(
        "stereoprobe_mlm_bridge_{}.py",
        &hex::encode(Sha256::digest(BUNDLED_SCRIPT))[..12]
    ));
    if !path.exists() {
        crate::artifact::write_atomic(&path, BUNDLED_SCRIPT.as_bytes())?;
    }
    Ok(path)
}

impl BridgeBackend {
    /// Start `command` followed by `--model <model>` and read its vocabulary.
    pub fn spawn(command: &[String], model: &str) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Validation("empty bridge command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .arg("--model")
            .arg(model)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let channel = Mutex::new(Channel { child, stdin, stdout });
        let info: Info = serde_json::from_value(call(&channel, &json!({"op": "info"}))?)
            .map_err(|e| Error::Backend(format!("bad info response: {e}")))?;
        let mut special: std::collections::BTreeSet<String> = info.special_tokens.into_iter().collect();
        special.insert(info.mask_token.clone());
        Ok(BridgeBackend {
            command: command.to_vec(),
            model_id: info.model_id,
            mask_token: info.mask_token,
            casing: info.casing,
            vocab: Vocabulary::new(info.tokens)?,
            filter: TokenFilter {
                special,
                continuation_prefix: info.continuation_prefix,
                word_prefix: info.word_prefix,
            },
            channel,
        })
    }

    /// The bundled helper under `$STEREOPROBE_PYTHON` (default `python3`),
    /// or the script named by `$STEREOPROBE_BRIDGE_SCRIPT`.
    pub fn open(model: &str) -> Result<Self> {
        let python = std::env::var(PYTHON_ENV).unwrap_or_else(|_| "python3".into());
        let script = match std::env::var_os(SCRIPT_ENV) {
            Some(p) => PathBuf::from(p),
            None => bundled_script()?,
        };
        Self::spawn(&[python, script.display().to_string()], model)
    }

    fn call(&self, req: &Value) -> Result<Value> {
        call(&self.channel, req)
    }
}

fn call(channel: &Mutex<Channel>, req: &Value) -> Result<Value> {
    let mut ch = channel.lock().map_err(|_| Error::Backend("bridge channel poisoned".into()))?;
    let line = serde_json::to_string(req)?;
    writeln!(ch.stdin, "{line}")
        .and_then(|_| ch.stdin.flush())
        .map_err(|e| Error::Backend(format!("bridge write failed: {e}")))?;
    let mut resp = String::new();
    let n = ch
        .stdout
        .read_line(&mut resp)
        .map_err(|e| Error::Backend(format!("bridge read failed: {e}")))?;
    if n == 0 {
        return Err(Error::Backend("bridge process exited".into()));
    }
    let v: Value = serde_json::from_str(&resp).map_err(|e| Error::Backend(format!("bridge sent invalid JSON: {e}")))?;
    if let Some(err) = v.get("error") {
        return Err(Error::Backend(format!("bridge: {}", err.as_str().unwrap_or(&err.to_string()))));
    }
    Ok(v)
}

impl Drop for BridgeBackend {
    fn drop(&mut self) {
        if let Ok(mut ch) = self.channel.lock() {
            let _ = writeln!(ch.stdin, "{}", json!({"op": "quit"}));
            let _ = ch.stdin.flush();
            let _ = ch.child.wait();
        }
    }
}

impl MaskedLm for BridgeBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn casing(&self) -> Casing {
        self.casing
    }

    fn token_filter(&self) -> &TokenFilter {
        &self.filter
    }

    fn mask_distribution(&self, text: &str, slot: usize) -> Result<Vec<f64>> {
        let v = self.call(&json!({"op": "predict", "text": text, "slot": slot}))?;
        serde_json::from_value(v.get("probs").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::Backend(format!("bad predict response: {e}")))
    }
}

impl TrainableMlm for BridgeBackend {
    fn train_mlm(&self, docs: &[String], cfg: &TrainingConfig, seed: u64, out_dir: &Path, model_id: &str) -> Result<TrainOutcome> {
        let v = self.call(&json!({
            "op": "train",
            "docs": docs,
            "config": cfg,
            "seed": seed,
            "out_dir": out_dir,
            "model_id": model_id,
        }))?;
        let losses: Vec<f64> = serde_json::from_value(v.get("losses").cloned().unwrap_or(json!([])))
            .map_err(|e| Error::Backend(format!("bad train response: {e}")))?;
        let steps = v.get("steps").and_then(Value::as_u64).unwrap_or(losses.len() as u64) as usize;
        log::debug!("bridge {:?} trained {model_id} in {steps} steps", self.command);
        Ok(TrainOutcome {
            model_spec: format!("bridge:{}", out_dir.display()),
            model_id: model_id.to_string(),
            steps,
            losses,
        })
    }

    fn pseudo_perplexity(&self, docs: &[String], max_len: usize) -> Result<f64> {
        let v = self.call(&json!({"op": "perplexity", "docs": docs, "max_len": max_len}))?;
        v.get("ppl")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Backend("bad perplexity response".into()))
    }
}
