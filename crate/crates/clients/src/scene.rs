//! Staged scene-graph inference: objects, then relations conditioned on
//! the objects, then scene labels conditioned on both.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use slime_core::metrics::{Predicate, Relation, StructuredScene};

use crate::captions::{exchange, Exchange, ModelSpec};
use crate::client::ChatClient;
use crate::error::{ClientError, Result};
use crate::prompts::{PromptTemplate, SCENE_LABELS, SCENE_OBJECTS, SCENE_RELATIONS, SYSTEM};
use crate::request::{ImagePayload, Message};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneInputs {
    pub tags: Option<Vec<String>>,
    pub captions: Option<Vec<String>>,
    pub image: Option<ImagePayload>,
}

impl SceneInputs {
    fn tags(&self) -> Option<&[String]> {
        self.tags.as_deref().filter(|t| !t.is_empty())
    }

    fn captions(&self) -> Option<&[String]> {
        self.captions.as_deref().filter(|c| !c.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        self.tags().is_none() && self.captions().is_none() && self.image.is_none()
    }

    /// Textual evidence shared by every stage.
    pub fn context(&self) -> String {
        let mut parts = vec!["You are given evidence about a single photograph.".to_owned()];
        if let Some(tags) = self.tags() {
            parts.push(format!("Tags:\n{}", bullets(tags)));
        }
        if let Some(captions) = self.captions() {
            parts.push(format!("Captions:\n{}", bullets(captions)));
        }
        if self.image.is_some() {
            parts.push("The photograph itself is attached.".to_owned());
        }
        parts.join("\n\n")
    }
}

fn bullets<S: AsRef<str>>(items: &[S]) -> String {
    items.iter().map(|s| format!("- {}", s.as_ref())).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneExtraction {
    pub scene: StructuredScene,
    /// Relations whose predicate fell outside the fixed vocabulary.
    pub dropped_predicates: usize,
    /// Items missing required fields or with unusable values.
    pub malformed_items: usize,
    pub exchanges: Vec<Exchange>,
}

/// Parses the JSON object in a model reply, tolerating code fences and
/// surrounding prose.
pub fn parse_json_block(raw: &str) -> Result<Value> {
    let fail = |reason: String| ClientError::Parse {
        reason,
        raw: raw.into(),
    };
    let start = raw.find('{').ok_or_else(|| fail("no JSON object in response".into()))?;
    let end = raw.rfind('}').filter(|&e| e > start).ok_or_else(|| fail("unterminated JSON object".into()))?;
    let v: Value = serde_json::from_str(&raw[start..=end]).map_err(|e| fail(e.to_string()))?;
    if !v.is_object() {
        return Err(fail("response JSON is not an object".into()));
    }
    Ok(v)
}

fn field_array<'a>(v: &'a Value, key: &str, raw: &str) -> Result<&'a Vec<Value>> {
    v.get(key).and_then(Value::as_array).ok_or_else(|| ClientError::Parse {
        reason: format!("missing array field {key:?}"),
        raw: raw.into(),
    })
}

#[derive(Debug, Default)]
struct Tally {
    dropped_predicates: usize,
    malformed: usize,
}

fn parse_objects(raw: &str, tally: &mut Tally) -> Result<Vec<String>> {
    let v = parse_json_block(raw)?;
    Ok(field_array(&v, "objects", raw)?
        .iter()
        .filter_map(|o| {
            let name = o.as_str().map(str::trim).filter(|s| !s.is_empty());
            if name.is_none() {
                tally.malformed += 1;
            }
            name.map(str::to_owned)
        })
        .collect())
}

fn parse_relations(raw: &str, tally: &mut Tally) -> Result<Vec<Relation>> {
    let v = parse_json_block(raw)?;
    let mut out = Vec::new();
    for item in field_array(&v, "relations", raw)? {
        let get = |k: &str| item.get(k).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());
        let (Some(s), Some(p), Some(o)) = (get("subject"), get("predicate"), get("object")) else {
            tally.malformed += 1;
            continue;
        };
        match p.parse::<Predicate>() {
            Ok(p) => {
                let r = Relation::new(s, p, o);
                if r.subject.is_empty() || r.object.is_empty() {
                    tally.malformed += 1;
                } else {
                    out.push(r);
                }
            }
            Err(_) => tally.dropped_predicates += 1,
        }
    }
    Ok(out)
}

fn parse_scenes(raw: &str, tally: &mut Tally) -> Result<Vec<(String, f64)>> {
    let v = parse_json_block(raw)?;
    let mut out = Vec::new();
    for item in field_array(&v, "scenes", raw)? {
        let label = item.get("label").and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());
        let confidence = match item.get("confidence") {
            Some(Value::Number(n)) => n.as_f64(),
            Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
            _ => None,
        };
        match (label, confidence) {
            (Some(l), Some(c)) => out.push((l.to_owned(), c)),
            _ => tally.malformed += 1,
        }
    }
    Ok(out)
}

fn stage(client: &ChatClient, spec: &ModelSpec, inputs: &SceneInputs, template: PromptTemplate, prompt: String) -> Result<Exchange> {
    let mut user = Message::user(prompt);
    if let Some(image) = &inputs.image {
        user = user.with_image(image.clone());
    }
    let request = spec.request(vec![Message::system(SYSTEM.text.trim()), user]);
    exchange(client, template, &request)
}

pub fn extract_scene(client: &ChatClient, spec: &ModelSpec, inputs: &SceneInputs) -> Result<SceneExtraction> {
    if inputs.is_empty() {
        return Err(ClientError::NoInputs);
    }
    let context = inputs.context();
    let mut tally = Tally::default();

    let objects_ex = stage(client, spec, inputs, SCENE_OBJECTS, SCENE_OBJECTS.render(&[("context", &context)])?)?;
    let objects = parse_objects(&objects_ex.raw, &mut tally)?;
    let object_list = StructuredScene::new(&objects, [], []).objects.into_iter().collect::<Vec<_>>();

    let predicates = Predicate::ALL.map(Predicate::as_str).join(", ");
    let relations_prompt = SCENE_RELATIONS.render(&[
        ("context", &context),
        ("objects", &bullets(&object_list)),
        ("predicates", &predicates),
    ])?;
    let relations_ex = stage(client, spec, inputs, SCENE_RELATIONS, relations_prompt)?;
    let relations = parse_relations(&relations_ex.raw, &mut tally)?;

    let relation_lines: Vec<String> = relations
        .iter()
        .map(|r| format!("{} {} {}", r.subject, r.predicate, r.object))
        .collect();
    let labels_prompt = SCENE_LABELS.render(&[
        ("context", &context),
        ("objects", &bullets(&object_list)),
        ("relations", &if relation_lines.is_empty() { "(none)".to_owned() } else { bullets(&relation_lines) }),
    ])?;
    let labels_ex = stage(client, spec, inputs, SCENE_LABELS, labels_prompt)?;
    let scenes = parse_scenes(&labels_ex.raw, &mut tally)?;

    Ok(SceneExtraction {
        scene: StructuredScene::new(object_list, relations, scenes),
        dropped_predicates: tally.dropped_predicates,
        malformed_items: tally.malformed,
        exchanges: vec![objects_ex, relations_ex, labels_ex],
    })
}
