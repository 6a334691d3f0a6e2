use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use slime_core::metrics::{Relation, SceneLabel};

use crate::client::ChatClient;
use crate::error::{ClientError, Result};
use crate::prompts::{PromptTemplate, CAPTIONS_FROM_SCENE, CAPTIONS_FROM_TAGS, SYSTEM};
use crate::request::{ChatRequest, Message};

/// Which provider and model a request goes to. Temperature is always 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub provider: String,
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    1024
}

impl ModelSpec {
    pub fn new(provider: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            model: model.into(),
            max_tokens: default_max_tokens(),
        }
    }

    pub(crate) fn request(&self, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            provider: self.provider.clone(),
            model: self.model.clone(),
            messages,
            max_tokens: self.max_tokens,
            temperature: 0.0,
        }
    }
}

/// One model exchange kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt_id: String,
    pub request_hash: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSet {
    pub captions: Vec<String>,
    pub exchange: Exchange,
}

pub(crate) fn exchange(client: &ChatClient, template: PromptTemplate, request: &ChatRequest) -> Result<Exchange> {
    let raw = client.chat(request)?;
    Ok(Exchange {
        prompt_id: template.id.into(),
        request_hash: request.hash(),
        raw,
    })
}

/// Parses exactly `n` items of a `1.`/`1)` numbered list. Surrounding
/// quotes are stripped; unnumbered lines are ignored.
pub fn parse_numbered_list(raw: &str, n: usize) -> Result<Vec<String>> {
    let fail = |reason: String| ClientError::Parse {
        reason,
        raw: raw.into(),
    };
    let mut items = Vec::new();
    for line in raw.lines() {
        let line = line.trim().trim_start_matches(['*', '#', ' ']);
        let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits == 0 {
            continue;
        }
        let rest = &line[digits..];
        let Some(body) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) else {
            continue;
        };
        let number: usize = line[..digits].parse().map_err(|_| fail(format!("bad item number in {line:?}")))?;
        if number != items.len() + 1 {
            return Err(fail(format!("expected item {}, found {number}", items.len() + 1)));
        }
        let text = body.trim().trim_matches(|c| c == '"' || c == '\u{201c}' || c == '\u{201d}').trim();
        if text.is_empty() {
            return Err(fail(format!("item {number} is empty")));
        }
        items.push(text.to_owned());
    }
    if items.len() != n {
        return Err(fail(format!("expected {n} numbered items, found {}", items.len())));
    }
    Ok(items)
}

fn caption_request(client: &ChatClient, spec: &ModelSpec, template: PromptTemplate, prompt: String, n: usize) -> Result<CaptionSet> {
    let request = spec.request(vec![Message::system(SYSTEM.text.trim()), Message::user(prompt)]);
    let exchange = exchange(client, template, &request)?;
    let captions = parse_numbered_list(&exchange.raw, n)?;
    Ok(CaptionSet { captions, exchange })
}

/// Asks for `n` captions of an image described by `tags`, embedded verbatim
/// one per line.
pub fn generate_captions_from_tags<S: AsRef<str>>(client: &ChatClient, spec: &ModelSpec, tags: &[S], n: usize) -> Result<CaptionSet> {
    if tags.is_empty() {
        return Err(ClientError::Precondition("caption generation needs at least one tag".into()));
    }
    if n == 0 {
        return Err(ClientError::Precondition("n_captions must be at least 1".into()));
    }
    let list: Vec<String> = tags.iter().map(|t| format!("- {}", t.as_ref())).collect();
    let prompt = CAPTIONS_FROM_TAGS.render(&[("tags", &list.join("\n")), ("n", &n.to_string())])?;
    caption_request(client, spec, CAPTIONS_FROM_TAGS, prompt, n)
}

/// The subset of an inferred scene used to condition caption regeneration.
#[derive(Debug, Clone, Copy, Default)]
pub struct SceneParts<'a> {
    pub objects: Option<&'a BTreeSet<String>>,
    pub relations: Option<&'a BTreeSet<Relation>>,
    pub scenes: Option<&'a [SceneLabel]>,
}

impl SceneParts<'_> {
    pub fn is_empty(&self) -> bool {
        self.objects.is_none() && self.relations.is_none() && self.scenes.is_none()
    }

    /// Plain-text rendering, one section per present part.
    pub fn describe(&self) -> String {
        let mut sections = Vec::new();
        if let Some(objects) = self.objects {
            sections.push(format!("Objects: {}", objects.iter().cloned().collect::<Vec<_>>().join(", ")));
        }
        if let Some(relations) = self.relations {
            let lines: Vec<String> = relations
                .iter()
                .map(|r| format!("- {} {} {}", r.subject, r.predicate, r.object))
                .collect();
            sections.push(format!("Relations:\n{}", lines.join("\n")));
        }
        if let Some(scenes) = self.scenes {
            let labels: Vec<String> = scenes.iter().map(|s| format!("{} ({:.2})", s.label, s.confidence)).collect();
            sections.push(format!("Scene: {}", labels.join(", ")));
        }
        sections.join("\n\n")
    }
}

pub fn generate_captions_from_scene(client: &ChatClient, spec: &ModelSpec, parts: SceneParts<'_>, n: usize) -> Result<CaptionSet> {
    if parts.is_empty() {
        return Err(ClientError::NoInputs);
    }
    if n == 0 {
        return Err(ClientError::Precondition("n_captions must be at least 1".into()));
    }
    let prompt = CAPTIONS_FROM_SCENE.render(&[("scene", &parts.describe()), ("n", &n.to_string())])?;
    caption_request(client, spec, CAPTIONS_FROM_SCENE, prompt, n)
}
