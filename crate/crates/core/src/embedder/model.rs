use std::fmt;
use std::io::Write;
use std::process::{Command, Stdio};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmbedderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelId {
    MpnetLike,
    SecbertLike,
    FasttextLike,
    HashDefault,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [
        ModelId::MpnetLike,
        ModelId::SecbertLike,
        ModelId::FasttextLike,
        ModelId::HashDefault,
    ];

    pub fn native_dim(self) -> usize {
        match self {
            ModelId::FasttextLike => 300,
            _ => 768,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::MpnetLike => "MPNET_LIKE",
            ModelId::SecbertLike => "SECBERT_LIKE",
            ModelId::FasttextLike => "FASTTEXT_LIKE",
            ModelId::HashDefault => "HASH_DEFAULT",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = EmbedderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| EmbedderError::UnknownModel(s.to_string()))
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Token feature hashing into `d` buckets, L2-normalized. `salt` separates
/// the stand-ins for different models.
pub fn hash_embed(text: &str, d: usize, salt: &str) -> Result<Vec<f32>, EmbedderError> {
    if text.trim().is_empty() {
        return Err(EmbedderError::EmptyText);
    }
    let seed = fnv1a(0xcbf2_9ce4_8422_2325, salt.as_bytes());
    let mut counts = vec![0f64; d];
    for tok in tokens(text) {
        counts[(fnv1a(seed, tok.as_bytes()) % d as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbedderError::EmptyText);
    }
    Ok(counts.iter().map(|c| (c / norm) as f32).collect())
}

/// Embeds descriptions. HASH_DEFAULT is always local; other models go to the
/// provider command when one is configured and otherwise use a salted hash
/// stand-in at their native dimension.
#[derive(Debug, Clone, Default)]
pub struct Embedder {
    provider: Option<Vec<String>>,
}

impl Embedder {
    pub fn local() -> Self {
        Embedder { provider: None }
    }

    pub fn with_provider(command: Vec<String>) -> Self {
        Embedder {
            provider: Some(command).filter(|c| !c.is_empty()),
        }
    }

    pub fn embed(&self, text: &str, model: ModelId) -> Result<Vec<f32>, EmbedderError> {
        Ok(self.embed_batch(&[text], model)?.remove(0))
    }

    pub fn embed_batch(&self, texts: &[&str], model: ModelId) -> Result<Vec<Vec<f32>>, EmbedderError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedderError::EmptyText);
        }
        match (&self.provider, model) {
            (_, ModelId::HashDefault) => texts.iter().map(|t| hash_embed(t, 768, "")).collect(),
            (Some(cmd), m) => run_provider(cmd, texts, m),
            (None, m) => texts.iter().map(|t| hash_embed(t, m.native_dim(), m.as_str())).collect(),
        }
    }
}

/// Provider protocol: argv[1..] plus the model id; one JSON string per input
/// line on stdin, one JSON number array per output line on stdout.
fn run_provider(cmd: &[String], texts: &[&str], model: ModelId) -> Result<Vec<Vec<f32>>, EmbedderError> {
    let unavailable = |reason: String| EmbedderError::ProviderUnavailable(reason);
    let mut child = Command::new(&cmd[0])
        .args(&cmd[1..])
        .arg(model.as_str())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| unavailable(format!("{}: {e}", cmd[0])))?;
    let mut input = String::new();
    for t in texts {
        input.push_str(&serde_json::to_string(t).expect("string serializes"));
        input.push('\n');
    }
    let mut stdin = child.stdin.take().expect("piped");
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let out = child
        .wait_with_output()
        .map_err(|e| unavailable(e.to_string()))?;
    // a provider that exits early closes the pipe; its exit status says more
    let _ = writer.join();
    if !out.status.success() {
        let err = String::from_utf8_lossy(&out.stderr);
        return Err(unavailable(format!("exit {}: {}", out.status, err.trim())));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let vectors: Vec<Vec<f32>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l))
        .collect::<Result<_, _>>()
        .map_err(|e| EmbedderError::Provider(format!("bad output: {e}")))?;
    if vectors.len() != texts.len() {
        return Err(EmbedderError::Provider(format!(
            "{} vectors for {} inputs",
            vectors.len(),
            texts.len()
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != model.native_dim()) {
        return Err(EmbedderError::Provider(format!(
            "{model} vector of length {}, expected {}",
            v.len(),
            model.native_dim()
        )));
    }
    Ok(vectors)
}
