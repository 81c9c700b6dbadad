//! Line protocol for metrics computed outside this crate (e.g. neural scorers).
//!
//! The adapter receives one JSON object `{"candidate": ..., "reference": ...}`
//! per line and must answer with one `{"score": <number>}` per line, in order.
//! It is either a subprocess speaking the protocol on stdin/stdout or an HTTP
//! endpoint that takes the request lines as a POST body and returns the
//! response lines as its body.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{GroundednessMetric, MetricError, MetricInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ExternalTransport {
    Command { program: String, args: Vec<String> },
    Http { url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetricSpec {
    pub name: String,
    #[serde(flatten)]
    pub transport: ExternalTransport,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    600
}

#[derive(Serialize)]
struct PairLine<'a> {
    candidate: &'a str,
    reference: &'a str,
}

#[derive(Deserialize)]
struct ScoreLine {
    score: f64,
}

/// Scores `(candidate, reference)` pairs through the adapter, preserving order.
pub fn external_metric(adapter: &ExternalMetricSpec, pairs: &[(&str, &str)]) -> Result<Vec<f64>, MetricError> {
    let mut request = String::new();
    for (candidate, reference) in pairs {
        request += &serde_json::to_string(&PairLine { candidate, reference }).expect("pair serializes");
        request.push('\n');
    }
    let output = match &adapter.transport {
        ExternalTransport::Command { program, args } => run_command(adapter, program, args, request)?,
        ExternalTransport::Http { url } => post(adapter, url, request)?,
    };
    let fail = |message: String| MetricError::Adapter {
        adapter: adapter.name.clone(),
        message,
    };
    let scores = output
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<ScoreLine>(l)
                .map(|s| s.score)
                .map_err(|e| fail(format!("output line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if scores.len() != pairs.len() {
        return Err(MetricError::Arity {
            adapter: adapter.name.clone(),
            expected: pairs.len(),
            got: scores.len(),
        });
    }
    Ok(scores)
}

fn run_command(
    adapter: &ExternalMetricSpec,
    program: &str,
    args: &[String],
    input: String,
) -> Result<String, MetricError> {
    let fail = |message: String| MetricError::Adapter {
        adapter: adapter.name.clone(),
        message,
    };
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| fail(format!("cannot start `{program}`: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = thread::spawn(move || {
        // A broken pipe here surfaces as an exit status or arity error instead.
        let _ = stdin.write_all(input.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let mut stderr = child.stderr.take().expect("piped stderr");
    let err_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    let deadline = Instant::now() + Duration::from_secs(adapter.timeout_secs);
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(MetricError::Timeout {
                adapter: adapter.name.clone(),
                secs: adapter.timeout_secs,
            });
        }
        thread::sleep(Duration::from_millis(10));
    };
    let _ = writer.join();
    let out = reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(fail(format!("{status}; stderr: {}", err.trim())));
    }
    Ok(out)
}

fn post(adapter: &ExternalMetricSpec, url: &str, body: String) -> Result<String, MetricError> {
    let fail = |message: String| MetricError::Adapter {
        adapter: adapter.name.clone(),
        message,
    };
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(adapter.timeout_secs))
        .build()
        .map_err(|e| fail(e.to_string()))?;
    let resp = client
        .post(url)
        .header("content-type", "application/x-ndjson")
        .body(body)
        .send()
        .map_err(|e| {
            if e.is_timeout() {
                MetricError::Timeout {
                    adapter: adapter.name.clone(),
                    secs: adapter.timeout_secs,
                }
            } else {
                fail(e.to_string())
            }
        })?;
    let status = resp.status();
    let text = resp.text().map_err(|e| fail(e.to_string()))?;
    if !status.is_success() {
        return Err(fail(format!(
            "HTTP {status}: {}",
            text.chars().take(200).collect::<String>()
        )));
    }
    Ok(text)
}

/// An adapter used as a groundedness metric: candidate = response,
/// reference = retrieved document.
#[derive(Debug, Clone)]
pub struct ExternalMetric {
    pub spec: ExternalMetricSpec,
}

impl GroundednessMetric for ExternalMetric {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn version(&self) -> String {
        format!("external/{}", self.spec.name)
    }

    fn score_batch(&self, items: &[MetricInput<'_>]) -> Result<Vec<f64>, MetricError> {
        let pairs: Vec<(&str, &str)> = items.iter().map(|i| (i.response, i.knowledge)).collect();
        external_metric(&self.spec, &pairs)
    }
}
