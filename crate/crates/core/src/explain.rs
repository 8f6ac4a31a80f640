//! Feature-wise comparisons between a target and its neighbors, and the
//! text that explains a prediction from them.
//!
//! Comparisons are computed here, independently of any language model. The
//! model only rewrites them as prose; when it is absent, slow or failing, a
//! deterministic template renders the same comparisons instead.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::{trim_float, FeatureSchema, FeatureValue, Property, HOUSE_AGE};
use crate::neighbors::NeighborResult;
use crate::stats::NormalizationStats;

/// Salience given to a categorical mismatch.
pub const CATEGORICAL_SALIENCE: f64 = 0.5;
/// Features mentioned per neighbor by the template renderer.
pub const TEMPLATE_TOP_FEATURES: usize = 3;
pub const UNIT_PRICE_UNITS: &str = "thousand NTD per square meter";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Higher,
    Lower,
    Equal,
    Differs,
    Incomparable,
}

impl Direction {
    /// The word the template renderer uses; `None` for directions it never
    /// mentions.
    pub fn word(self) -> Option<&'static str> {
        match self {
            Direction::Higher => Some("higher"),
            Direction::Lower => Some("lower"),
            Direction::Differs => Some("different"),
            Direction::Equal | Direction::Incomparable => None,
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        match word {
            "higher" => Some(Direction::Higher),
            "lower" => Some(Direction::Lower),
            "different" => Some(Direction::Differs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Delta {
    /// Neighbor minus target.
    Numeric(f64),
    Same,
    Different,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub feature: String,
    pub target: FeatureValue,
    pub neighbor: FeatureValue,
    pub delta: Delta,
    pub direction: Direction,
    /// |delta| over the corpus range for numeric features, clamped to [0, 1].
    pub salience: f64,
}

/// One comparison per schema feature, in schema order. A feature Missing on
/// either side is `Incomparable` with zero salience.
pub fn compare_pairwise(
    target: &Property,
    neighbor: &Property,
    schema: &FeatureSchema,
    stats: &NormalizationStats,
) -> Vec<PairwiseComparison> {
    schema
        .features()
        .iter()
        .map(|decl| {
            let t = target.feature(&decl.name);
            let n = neighbor.feature(&decl.name);
            let (delta, direction, salience) = match (t, n) {
                (FeatureValue::Categorical(a), FeatureValue::Categorical(b)) => {
                    if a == b {
                        (Delta::Same, Direction::Equal, 0.0)
                    } else {
                        (Delta::Different, Direction::Differs, CATEGORICAL_SALIENCE)
                    }
                }
                (a, b) if a.kind().is_some() && a.kind() == b.kind() => {
                    let (a, b) = (a.as_real().unwrap_or(0.0), b.as_real().unwrap_or(0.0));
                    let d = b - a;
                    let direction = if d > 0.0 {
                        Direction::Higher
                    } else if d < 0.0 {
                        Direction::Lower
                    } else {
                        Direction::Equal
                    };
                    let salience = if d == 0.0 {
                        0.0
                    } else {
                        match stats.get(&decl.name).and_then(|s| s.value_range()) {
                            Some(range) if range > 0.0 => (d.abs() / range).clamp(f64::MIN_POSITIVE, 1.0),
                            _ => 1.0,
                        }
                    };
                    (Delta::Numeric(d), direction, salience)
                }
                _ => (Delta::Unknown, Direction::Incomparable, 0.0),
            };
            PairwiseComparison {
                feature: decl.name.clone(),
                target: t.clone(),
                neighbor: n.clone(),
                delta,
                direction,
                salience,
            }
        })
        .collect()
}

/// Comparisons against one neighbor, with what the renderers need to
/// introduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborComparisons {
    pub neighbor_id: String,
    pub rank: usize,
    pub distance: f64,
    pub unit_price: Option<f64>,
    pub comparisons: Vec<PairwiseComparison>,
}

impl NeighborComparisons {
    pub fn new(
        target: &Property,
        neighbor: &NeighborResult,
        schema: &FeatureSchema,
        stats: &NormalizationStats,
    ) -> Self {
        Self {
            neighbor_id: neighbor.neighbor.id.clone(),
            rank: neighbor.rank,
            distance: neighbor.distance,
            unit_price: neighbor.neighbor.unit_price,
            comparisons: compare_pairwise(target, &neighbor.neighbor, schema, stats),
        }
    }

    /// Up to `n` comparisons with positive salience, most salient first;
    /// ties keep schema order.
    pub fn top(&self, n: usize) -> Vec<&PairwiseComparison> {
        let mut salient: Vec<&PairwiseComparison> =
            self.comparisons.iter().filter(|c| c.salience > 0.0).collect();
        salient.sort_by(|a, b| b.salience.total_cmp(&a.salience));
        salient.truncate(n);
        salient
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorSign {
    Positive,
    Negative,
}

/// A domain belief about how one feature moves unit price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePrior {
    pub feature: String,
    /// Short name used in annotation text.
    pub label: String,
    pub sign: PriorSign,
}

impl PricePrior {
    /// Older properties sell for less per square meter.
    pub fn house_age() -> Self {
        Self {
            feature: HOUSE_AGE.into(),
            label: "age".into(),
            sign: PriorSign::Negative,
        }
    }
}

pub fn default_priors() -> Vec<PricePrior> {
    vec![PricePrior::house_age()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyAnnotation {
    pub neighbor_id: String,
    pub feature: String,
    pub verdict: Verdict,
    pub note: String,
}

/// Checks each neighbor's (feature, price) pair against the priors, with
/// the prediction standing in for the target's price. Neighbors without a
/// price, or equal on the feature or price, get no annotation.
pub fn check_consistency(
    prediction: f64,
    neighbors: &[NeighborComparisons],
    priors: &[PricePrior],
) -> Vec<ConsistencyAnnotation> {
    let mut out = Vec::new();
    for n in neighbors {
        let Some(price) = n.unit_price else { continue };
        if price == prediction {
            continue;
        }
        let pricier = price > prediction;
        for prior in priors {
            let Some(c) = n.comparisons.iter().find(|c| c.feature == prior.feature) else {
                continue;
            };
            let more = match c.direction {
                Direction::Higher => true,
                Direction::Lower => false,
                _ => continue,
            };
            let consistent = match prior.sign {
                PriorSign::Positive => more == pricier,
                PriorSign::Negative => more != pricier,
            };
            let (more_word, price_word) = match (prior.feature.as_str(), more) {
                (HOUSE_AGE, true) => ("older".to_string(), if pricier { "pricier" } else { "cheaper" }),
                (HOUSE_AGE, false) => ("newer".to_string(), if pricier { "pricier" } else { "cheaper" }),
                (_, true) => (format!("higher in {}", prior.label), if pricier { "pricier" } else { "cheaper" }),
                (_, false) => (format!("lower in {}", prior.label), if pricier { "pricier" } else { "cheaper" }),
            };
            let sign = match prior.sign {
                PriorSign::Positive => "positive",
                PriorSign::Negative => "negative",
            };
            let verdict = if consistent {
                Verdict::Consistent
            } else {
                Verdict::Inconsistent
            };
            let relation = if consistent { "consistent with" } else { "at odds with" };
            out.push(ConsistencyAnnotation {
                neighbor_id: n.neighbor_id.clone(),
                feature: prior.feature.clone(),
                verdict,
                note: format!(
                    "neighbor {} is {more_word} and {price_word} than the target: {relation} {sign} {}-price prior",
                    n.rank, prior.label
                ),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Upper bound on the estimated token count of the prompt.
    pub max_tokens: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self { max_tokens: 6_000 }
    }
}

/// Rough token estimate: one token per four bytes.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    /// Neighbors left out to respect the token cap.
    pub omitted: usize,
}

fn comparison_line(c: &PairwiseComparison) -> Option<String> {
    Some(match (&c.delta, c.direction) {
        (Delta::Numeric(d), Direction::Higher | Direction::Lower) => format!(
            "{} {} by {} ({} vs {})",
            c.feature,
            c.direction.word()?,
            trim_float(d.abs()),
            c.neighbor,
            c.target
        ),
        (_, Direction::Differs) => format!("{} differs ({} vs {})", c.feature, c.neighbor, c.target),
        (_, Direction::Equal) => format!("{} equal", c.feature),
        _ => return None,
    })
}

fn render_prompt(
    target: &Property,
    neighbors: &[(&NeighborResult, &NeighborComparisons)],
    prediction: f64,
    omitted: usize,
) -> String {
    let mut out = String::new();
    out.push_str(
        "You are assisting a property appraiser. Explain the predicted unit price of the \
         target property by comparing it feature by feature with the comparable properties \
         listed below. Properties are given as JSON objects; a null feature is unknown.\n\n",
    );
    let _ = writeln!(
        out,
        "Predicted unit price of the target: {prediction:.2} {UNIT_PRICE_UNITS}.\n"
    );
    let _ = writeln!(out, "Target property:\n{}\n", target.to_canonical_json());
    out.push_str("Comparable properties, nearest first:\n");
    for (n, cmp) in neighbors {
        let _ = writeln!(out, "\nNeighbor {} (distance {:.4}):", n.rank, n.distance);
        let _ = writeln!(out, "{}", n.neighbor.to_canonical_json());
        let lines: Vec<String> = cmp.comparisons.iter().filter_map(comparison_line).collect();
        if !lines.is_empty() {
            let _ = writeln!(out, "Differences (neighbor vs target): {}.", lines.join("; "));
        }
    }
    if omitted > 0 {
        let _ = writeln!(
            out,
            "\n({omitted} lower-ranked neighbor(s) omitted to fit the context budget.)"
        );
    }
    out.push_str(
        "\nFor each neighbor, name the feature differences that most plausibly explain why \
         its price is above or below the prediction, in plain language and in the units \
         given. Point out any neighbor that contradicts the usual expectation that older \
         properties sell for less. Keep it to one short paragraph per neighbor.\n",
    );
    out
}

/// Builds the LLM prompt. Neighbors appear in rank order; when the estimate
/// exceeds the cap, the highest-ranked (farthest) neighbors are dropped
/// first, always keeping the nearest one.
pub fn build_prompt(
    target: &Property,
    neighbors: &[NeighborResult],
    prediction: f64,
    comparisons: &[NeighborComparisons],
    options: &PromptOptions,
) -> Prompt {
    let mut pairs: Vec<(&NeighborResult, &NeighborComparisons)> = neighbors
        .iter()
        .filter_map(|n| {
            comparisons
                .iter()
                .find(|c| c.neighbor_id == n.neighbor.id)
                .map(|c| (n, c))
        })
        .collect();
    pairs.sort_by_key(|(n, _)| n.rank);
    let total = pairs.len();
    loop {
        let omitted = total - pairs.len();
        let text = render_prompt(target, &pairs, prediction, omitted);
        if estimate_tokens(&text) <= options.max_tokens || pairs.len() <= 1 {
            return Prompt { text, omitted };
        }
        pairs.pop();
    }
}

/// Deterministic explanation: one sentence on the prediction, then one per
/// neighbor naming its most salient differences.
pub fn render_template_explanation(prediction: f64, neighbors: &[NeighborComparisons]) -> String {
    let mut out = format!("The predicted unit price is {prediction:.2} {UNIT_PRICE_UNITS}.");
    if neighbors.is_empty() {
        out.push_str(" No comparable neighbors matched the configuration.");
        return out;
    }
    for n in neighbors {
        let price = n
            .unit_price
            .map(|p| format!(", sold at {p:.2} {UNIT_PRICE_UNITS}"))
            .unwrap_or_default();
        let _ = write!(
            out,
            " Neighbor {} ({}, distance {:.3}{price})",
            n.rank, n.neighbor_id, n.distance
        );
        let top = n.top(TEMPLATE_TOP_FEATURES);
        if top.is_empty() {
            out.push_str(" is effectively identical to the target.");
            continue;
        }
        let parts: Vec<String> = top
            .iter()
            .map(|c| {
                format!(
                    "{} is {} ({} vs {})",
                    c.feature,
                    c.direction.word().unwrap_or("different"),
                    c.neighbor,
                    c.target
                )
            })
            .collect();
        let joined = match parts.len() {
            1 => parts[0].clone(),
            2 => format!("{} and {}", parts[0], parts[1]),
            _ => format!(
                "{}, and {}",
                parts[..parts.len() - 1].join(", "),
                parts[parts.len() - 1]
            ),
        };
        let _ = write!(out, ": {joined}.");
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("llm request timed out")]
    Timeout,
    #[error("llm transport error: {0}")]
    Transport(String),
    #[error("llm response malformed: {0}")]
    Malformed(String),
    #[error("llm credentials missing: environment variable {0} is unset")]
    MissingCredentials(String),
}

/// A text-completion backend.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, LlmError>;
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct StaticLlmClient(pub String);

impl LlmClient for StaticLlmClient {
    fn complete(&self, _prompt: &str, _timeout: Duration) -> Result<String, LlmError> {
        Ok(self.0.clone())
    }
}

/// Client for an OpenAI-compatible chat-completions endpoint. The bearer
/// token is read from an environment variable on every call.
#[derive(Debug, Clone)]
pub struct HttpLlmClient {
    pub endpoint: String,
    pub model: String,
    pub token_env: Option<String>,
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let mut request = client.post(&self.endpoint).json(&serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }));
        if let Some(var) = &self.token_env {
            let token = std::env::var(var).map_err(|_| LlmError::MissingCredentials(var.clone()))?;
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::Transport(format!("http status {status}")));
        }
        let body: serde_json::Value = response
            .json()
            .map_err(|e| LlmError::Malformed(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    #[serde(default = "default_llm_model")]
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_llm_timeout")]
    pub timeout_secs: f64,
    /// JSON-lines file receiving every prompt and response.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

fn default_llm_model() -> String {
    "gpt-4o-mini".into()
}

fn default_llm_timeout() -> f64 {
    20.0
}

/// A configured client plus its timeout and optional audit log.
#[derive(Clone)]
pub struct LlmBackend {
    client: Arc<dyn LlmClient>,
    timeout: Duration,
    audit: Option<Arc<Mutex<PathBuf>>>,
}

impl LlmBackend {
    pub fn new(client: Arc<dyn LlmClient>, timeout: Duration) -> Self {
        Self {
            client,
            timeout,
            audit: None,
        }
    }

    pub fn from_config(config: &LlmConfig) -> Self {
        let client = HttpLlmClient {
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            token_env: config.token_env.clone(),
        };
        let mut backend = Self::new(Arc::new(client), Duration::from_secs_f64(config.timeout_secs));
        if let Some(path) = &config.audit_log {
            backend = backend.with_audit_log(path.clone());
        }
        backend
    }

    pub fn with_audit_log(mut self, path: PathBuf) -> Self {
        self.audit = Some(Arc::new(Mutex::new(path)));
        self
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Runs the client on a worker thread and stops waiting at the timeout,
    /// whether or not the client honors it.
    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let (tx, rx) = mpsc::channel();
        let client = Arc::clone(&self.client);
        let owned = prompt.to_string();
        let timeout = self.timeout;
        thread::spawn(move || {
            let _ = tx.send(client.complete(&owned, timeout));
        });
        let result = match rx.recv_timeout(timeout) {
            Ok(r) => r,
            Err(mpsc::RecvTimeoutError::Timeout) => Err(LlmError::Timeout),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(LlmError::Transport("client thread panicked".into()))
            }
        };
        self.audit(prompt, &result);
        result
    }

    fn audit(&self, prompt: &str, result: &Result<String, LlmError>) {
        let Some(path) = &self.audit else { return };
        let entry = match result {
            Ok(text) => serde_json::json!({"prompt": prompt, "response": text}),
            Err(e) => serde_json::json!({"prompt": prompt, "error": e.to_string()}),
        };
        let path = path.lock().unwrap_or_else(|p| p.into_inner());
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&*path)
            .and_then(|mut f| writeln!(f, "{entry}"));
        if let Err(e) = written {
            tracing::warn!(path = %path.display(), error = %e, "could not write llm audit log");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Renderer {
    Llm,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub prediction: f64,
    pub neighbors: Vec<NeighborComparisons>,
    pub consistency: Vec<ConsistencyAnnotation>,
    pub text: String,
    pub renderer: Renderer,
    /// Why the template was used although an LLM was configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

pub struct ExplanationInputs<'a> {
    pub target: &'a Property,
    pub neighbors: &'a [NeighborResult],
    pub prediction: f64,
    pub schema: &'a FeatureSchema,
    pub stats: &'a NormalizationStats,
    pub priors: &'a [PricePrior],
    pub prompt: PromptOptions,
}

/// Compares, annotates and renders. Never fails: any LLM problem falls back
/// to the template text and is logged.
pub fn generate_explanation(inputs: &ExplanationInputs<'_>, llm: Option<&LlmBackend>) -> ExplanationBundle {
    let neighbors: Vec<NeighborComparisons> = inputs
        .neighbors
        .iter()
        .map(|n| NeighborComparisons::new(inputs.target, n, inputs.schema, inputs.stats))
        .collect();
    let consistency = check_consistency(inputs.prediction, &neighbors, inputs.priors);

    let mut fallback_reason = None;
    if let Some(backend) = llm {
        if neighbors.is_empty() {
            fallback_reason = Some("no neighbors to compare".to_string());
        } else {
            let prompt = build_prompt(
                inputs.target,
                inputs.neighbors,
                inputs.prediction,
                &neighbors,
                &inputs.prompt,
            );
            match backend.complete(&prompt.text) {
                Ok(text) if !text.trim().is_empty() => {
                    return ExplanationBundle {
                        prediction: inputs.prediction,
                        neighbors,
                        consistency,
                        text: text.trim().to_string(),
                        renderer: Renderer::Llm,
                        fallback_reason: None,
                    };
                }
                Ok(_) => fallback_reason = Some("llm returned an empty response".to_string()),
                Err(e) => {
                    tracing::warn!(error = %e, "llm explanation failed; using template");
                    fallback_reason = Some(e.to_string());
                }
            }
        }
    }
    ExplanationBundle {
        prediction: inputs.prediction,
        text: render_template_explanation(inputs.prediction, &neighbors),
        neighbors,
        consistency,
        renderer: Renderer::Template,
        fallback_reason,
    }
}
