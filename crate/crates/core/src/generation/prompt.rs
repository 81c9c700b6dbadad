use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GenerationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidanceCondition {
    None,
    Low,
    High,
    Ir,
}

impl GuidanceCondition {
    pub const ALL: [GuidanceCondition; 4] = [Self::None, Self::Low, Self::High, Self::Ir];
    /// The three conditions shown to annotators.
    pub const RANKED: [GuidanceCondition; 3] = [Self::None, Self::Low, Self::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Low => "low",
            Self::High => "high",
            Self::Ir => "ir",
        }
    }

    pub fn uses_document(self) -> bool {
        self != Self::None
    }

    pub fn template(self) -> &'static str {
        match self {
            Self::None => NONE_TEMPLATE,
            Self::Low => LOW_TEMPLATE,
            Self::High => HIGH_TEMPLATE,
            Self::Ir => IR_TEMPLATE,
        }
    }
}

impl fmt::Display for GuidanceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuidanceCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "low" => Ok(Self::Low),
            "high" => Ok(Self::High),
            "ir" => Ok(Self::Ir),
            other => Err(format!(
                "unknown guidance condition `{other}` (expected none, low, high, ir)"
            )),
        }
    }
}

pub const DOCUMENT_PLACEHOLDER: &str = "{openstax_text}";
pub const QUERY_PLACEHOLDER: &str = "{query}";

pub const NONE_TEMPLATE: &str = "You are going to act as a mathematics tutor for a 13 year old student who is in grade 8 or 9 and lives in Ghana.

You will be encouraging and factual.

Prefer simple, short responses.

If the student says something inappropriate or off topic you will say you can only focus on mathematics and ask them if they have any math-related follow-up questions.";

pub const LOW_TEMPLATE: &str = "You are going to act as a mathematics tutor for a 13 year old student who is in grade 8 or 9 and lives in Ghana.

You will be encouraging and factual.

Only if it is relevant, examples and language from the section below may be helpful to format your response:

===

{openstax_text}

===

Prefer simple, short responses.

If the student says something inappropriate or off topic you will say you can only focus on mathematics and ask them if they have any math-related follow-up questions.";

pub const HIGH_TEMPLATE: &str = "You are going to act as a mathematics tutor for a 13 year old student who is in grade 8 or 9 and lives in Ghana.

You will be encouraging and factual.

Use examples and language from the section below to format your response:

===

{openstax_text}

===

Prefer simple, short responses.

If the student says something inappropriate or off topic you will say you can only focus on mathematics and ask them if they have any math-related follow-up questions.";

pub const IR_TEMPLATE: &str = "Given a middle-school math student's question, you will identify the most relevant section from a textbook.

Student question: {query}

Repeat the student's question and then repeat in full the most relevant paragraph from my math textbook. If none of them seem relevant, take a deep breath and output the most relevant. Don't say anything else.

Textbook paragraphs:

{openstax_text}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Single-pass placeholder substitution: text inserted for one placeholder is
/// never rescanned for another.
fn fill(template: &str, document: &str, query: &str) -> String {
    let mut out = String::with_capacity(template.len() + document.len() + query.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        if let Some(after) = tail.strip_prefix(DOCUMENT_PLACEHOLDER) {
            out.push_str(document);
            rest = after;
        } else if let Some(after) = tail.strip_prefix(QUERY_PLACEHOLDER) {
            out.push_str(query);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Renders the message list for one guidance condition. `none` takes no
/// document; every other condition requires one.
pub fn render_prompt(
    condition: GuidanceCondition,
    document: Option<&str>,
    query: &str,
) -> Result<Vec<Message>, GenerationError> {
    match (condition.uses_document(), document) {
        (true, None) => return Err(GenerationError::MissingDocument(condition)),
        (false, Some(_)) => return Err(GenerationError::UnexpectedDocument),
        _ => {}
    }
    let document = document.unwrap_or_default();
    Ok(match condition {
        GuidanceCondition::Ir => vec![Message::user(fill(IR_TEMPLATE, document, query))],
        other => vec![
            Message::system(fill(other.template(), document, "")),
            Message::user(query),
        ],
    })
}
