//! Versioned prompt templates. Placeholders are written `{{name}}`.

use crate::error::{ClientError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub text: &'static str,
}

pub const SYSTEM: PromptTemplate = PromptTemplate {
    id: "system@v1",
    text: include_str!("../prompts/system.v1.txt"),
};

pub const CAPTIONS_FROM_TAGS: PromptTemplate = PromptTemplate {
    id: "captions_from_tags@v1",
    text: include_str!("../prompts/captions_from_tags.v1.txt"),
};

pub const CAPTIONS_FROM_SCENE: PromptTemplate = PromptTemplate {
    id: "captions_from_scene@v1",
    text: include_str!("../prompts/captions_from_scene.v1.txt"),
};

pub const SCENE_OBJECTS: PromptTemplate = PromptTemplate {
    id: "scene_objects@v1",
    text: include_str!("../prompts/scene_objects.v1.txt"),
};

pub const SCENE_RELATIONS: PromptTemplate = PromptTemplate {
    id: "scene_relations@v1",
    text: include_str!("../prompts/scene_relations.v1.txt"),
};

pub const SCENE_LABELS: PromptTemplate = PromptTemplate {
    id: "scene_labels@v1",
    text: include_str!("../prompts/scene_labels.v1.txt"),
};

pub const ALL: [PromptTemplate; 6] = [SYSTEM, CAPTIONS_FROM_TAGS, CAPTIONS_FROM_SCENE, SCENE_OBJECTS, SCENE_RELATIONS, SCENE_LABELS];

impl PromptTemplate {
    /// Substitutes every `{{name}}`; leftover or unknown placeholders are errors.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after
                .find("}}")
                .ok_or_else(|| ClientError::Precondition(format!("{}: unterminated placeholder", self.id)))?;
            let name = &after[..end];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| ClientError::Precondition(format!("{}: no value for {{{{{name}}}}}", self.id)))?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out.trim_end().to_owned())
    }
}
