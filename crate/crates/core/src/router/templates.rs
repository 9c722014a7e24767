use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InteractionState, RequestSpec, Suggestion};
use crate::StrategyClass;

const BUILTIN_TEMPLATES: &str = include_str!("../../data/templates.toml");

/// Placeholders a template body may reference.
pub const PLACEHOLDERS: [&str; 7] = [
    "name",
    "affiliation",
    "interest",
    "background",
    "venue",
    "cue",
    "channel",
];

const PERSONAL_FACTS: [&str; 4] = ["name", "affiliation", "interest", "background"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template library parse error: {0}")]
    Parse(String),
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("template `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("template `{id}` cannot bind `{{{placeholder}}}` from the current profile/context")]
    Unresolvable { id: String, placeholder: String },
    #[error("template `{id}` has class {found}, expected {expected}")]
    ClassMismatch {
        id: String,
        expected: StrategyClass,
        found: StrategyClass,
    },
    #[error("no template for {class} at venue `{venue}` resolves against the current profile")]
    NoTemplate { class: StrategyClass, venue: String },
    #[error("no exit move configured for venue `{0}`")]
    NoExitMove(String),
    #[error("suggestion violates output constraint: {0}")]
    Constraint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTemplate {
    pub id: String,
    pub class: StrategyClass,
    pub venue: String,
    pub goal: String,
    pub max_directness: f64,
    pub topics: Vec<String>,
    pub body: String,
}

impl StrategyTemplate {
    pub fn placeholders(&self) -> Vec<String> {
        placeholders_in(&self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitMove {
    pub venue: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLibrary {
    #[serde(rename = "template")]
    pub templates: Vec<StrategyTemplate>,
    #[serde(rename = "exit")]
    pub exit_moves: Vec<ExitMove>,
}

fn placeholders_in(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push(after[..close].to_string());
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Counts sentences by splitting on terminal punctuation (`.`, `!`, `?`).
pub fn count_sentences(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|s| s.chars().any(|c| c.is_alphanumeric()))
        .count()
}

impl TemplateLibrary {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_TEMPLATES).expect("bundled template library is valid")
    }

    pub fn from_toml(src: &str) -> Result<Self, TemplateError> {
        let lib: TemplateLibrary =
            toml::from_str(src).map_err(|e| TemplateError::Parse(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let src = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&src)
    }

    /// Load-time checks: known placeholders, request marker only on
    /// Commitment, sentence budgets that leave room for an exit move.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let invalid = |id: &str, reason: String| TemplateError::Invalid { id: id.to_string(), reason };
        let mut ids = BTreeSet::new();
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return Err(invalid(&t.id, "duplicate id".into()));
            }
            if !(0.0..=1.0).contains(&t.max_directness) {
                return Err(invalid(&t.id, "max_directness outside [0, 1]".into()));
            }
            if t.topics.is_empty() {
                return Err(invalid(&t.id, "no topic constraints".into()));
            }
            let ph = t.placeholders();
            if let Some(p) = ph.iter().find(|p| !PLACEHOLDERS.contains(&p.as_str())) {
                return Err(invalid(&t.id, format!("unknown placeholder `{{{p}}}`")));
            }
            let has_marker = ph.iter().any(|p| p == "channel");
            if has_marker != (t.class == StrategyClass::Commitment) {
                return Err(invalid(
                    &t.id,
                    "the {channel} request marker must appear in Commitment templates only".into(),
                ));
            }
            let budget = if t.class == StrategyClass::Rapport { 1 } else { 2 };
            let n = count_sentences(&t.body);
            if n == 0 || n > budget {
                return Err(invalid(&t.id, format!("{n} sentences, budget is {budget}")));
            }
        }
        for e in &self.exit_moves {
            if count_sentences(&e.body) != 1 {
                return Err(invalid(&format!("exit:{}", e.venue), "exit move must be one sentence".into()));
            }
            if let Some(p) = placeholders_in(&e.body)
                .into_iter()
                .find(|p| PERSONAL_FACTS.contains(&p.as_str()) || p == "channel")
            {
                return Err(invalid(&format!("exit:{}", e.venue), format!("exit move may not bind `{{{p}}}`")));
            }
        }
        Ok(())
    }

    pub fn venues(&self) -> BTreeSet<&str> {
        self.templates.iter().map(|t| t.venue.as_str()).collect()
    }

    pub fn candidates<'a, 'v>(
        &'a self,
        class: StrategyClass,
        venue: &'v str,
    ) -> impl Iterator<Item = &'a StrategyTemplate> + use<'a, 'v> {
        self.templates
            .iter()
            .filter(move |t| t.class == class && t.venue == venue)
    }

    pub fn get(&self, id: &str) -> Option<&StrategyTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn exit_move(&self, venue: &str) -> Option<&ExitMove> {
        self.exit_moves.iter().find(|e| e.venue == venue)
    }

    /// Exit move for the state's venue with context placeholders bound.
    pub fn render_exit(&self, state: &InteractionState) -> Result<String, TemplateError> {
        let e = self
            .exit_move(&state.context.venue)
            .ok_or_else(|| TemplateError::NoExitMove(state.context.venue.clone()))?;
        fill("exit", &e.body, state, None, &mut Vec::new())
    }

    /// Picks a template for `class` by rotating on `turn`, skipping templates
    /// whose placeholders cannot be bound, and realizes it.
    pub fn realize_for_turn(
        &self,
        class: StrategyClass,
        state: &InteractionState,
        exit_flag: bool,
        request: Option<RequestSpec>,
        turn: u32,
    ) -> Result<(Suggestion, &StrategyTemplate), TemplateError> {
        let pool: Vec<&StrategyTemplate> = self.candidates(class, &state.context.venue).collect();
        if pool.is_empty() {
            return Err(TemplateError::NoTemplate { class, venue: state.context.venue.clone() });
        }
        let exit = if exit_flag {
            Some(
                self.exit_move(&state.context.venue)
                    .ok_or_else(|| TemplateError::NoExitMove(state.context.venue.clone()))?,
            )
        } else {
            None
        };
        let start = turn as usize % pool.len();
        for k in 0..pool.len() {
            let t = pool[(start + k) % pool.len()];
            match realize_suggestion(class, state, t, exit, request) {
                Ok(s) => return Ok((s, t)),
                Err(TemplateError::Unresolvable { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(TemplateError::NoTemplate { class, venue: state.context.venue.clone() })
    }
}

fn bind(
    placeholder: &str,
    state: &InteractionState,
    request: Option<RequestSpec>,
) -> Option<(String, bool)> {
    let p = &state.profile;
    let non_empty = |s: &str| (!s.trim().is_empty()).then(|| s.to_string());
    match placeholder {
        "name" => non_empty(&p.name).map(|v| (v, true)),
        "affiliation" => non_empty(&p.affiliation).map(|v| (v, true)),
        "background" => non_empty(&p.background).map(|v| (v, true)),
        "interest" => p.interests.first().cloned().map(|v| (v, true)),
        "venue" => non_empty(&state.context.venue_phrase()).map(|v| (v, false)),
        "cue" => state.context.cues.first().cloned().map(|v| (v, false)),
        "channel" => request.map(|r| (r.channel.phrase().to_string(), false)),
        _ => None,
    }
}

fn fill(
    id: &str,
    body: &str,
    state: &InteractionState,
    request: Option<RequestSpec>,
    facts: &mut Vec<String>,
) -> Result<String, TemplateError> {
    let mut text = body.to_string();
    for ph in placeholders_in(body) {
        let (value, personal) = bind(&ph, state, request).ok_or_else(|| TemplateError::Unresolvable {
            id: id.to_string(),
            placeholder: ph.clone(),
        })?;
        if personal && !facts.contains(&value) {
            facts.push(value.clone());
        }
        text = text.replace(&format!("{{{ph}}}"), &value);
    }
    Ok(text)
}

/// Binds `template` against the state. Placeholders that cannot be bound are
/// a hard error; nothing is ever free-generated.
pub fn realize_suggestion(
    class: StrategyClass,
    state: &InteractionState,
    template: &StrategyTemplate,
    exit: Option<&ExitMove>,
    request: Option<RequestSpec>,
) -> Result<Suggestion, TemplateError> {
    if template.class != class {
        return Err(TemplateError::ClassMismatch {
            id: template.id.clone(),
            expected: class,
            found: template.class,
        });
    }
    if class != StrategyClass::Commitment && request.is_some() {
        return Err(TemplateError::Constraint("request attached to a non-Commitment suggestion".into()));
    }
    let mut facts = Vec::new();
    let mut text = fill(&template.id, &template.body, state, request, &mut facts)?;
    let exit_move = match exit {
        Some(e) => {
            let line = fill(&template.id, &e.body, state, None, &mut facts)?;
            text.push(' ');
            text.push_str(&line);
            Some(line)
        }
        None => None,
    };
    let s = Suggestion {
        text,
        class,
        exit_flag: exit.is_some(),
        request,
        template_id: template.id.clone(),
        topic: template.topics[0].clone(),
        facts,
        exit_move,
    };
    validate_suggestion(&s, state, template)?;
    Ok(s)
}

/// Checks brevity, context consistency, profile consistency, and the exit move.
pub fn validate_suggestion(
    s: &Suggestion,
    state: &InteractionState,
    template: &StrategyTemplate,
) -> Result<(), TemplateError> {
    let fail = |m: String| Err(TemplateError::Constraint(m));
    let n = count_sentences(&s.text);
    if n == 0 || n > 2 {
        return fail(format!("{n} sentences"));
    }
    if s.text.contains('{') || s.text.contains('}') {
        return fail("unbound placeholder in text".into());
    }
    if template.venue != state.context.venue || !template.topics.contains(&s.topic) {
        return fail(format!("topic `{}` not allowed at venue `{}`", s.topic, state.context.venue));
    }
    let profile_facts = state.profile.facts();
    if let Some(f) = s.facts.iter().find(|f| !profile_facts.contains(f)) {
        return fail(format!("fact `{f}` is not in the profile"));
    }
    if let Some(f) = s.facts.iter().find(|f| !s.text.contains(f.as_str())) {
        return fail(format!("bound fact `{f}` missing from text"));
    }
    if s.exit_flag {
        match &s.exit_move {
            Some(m) if s.text.contains(m.as_str()) => {}
            _ => return fail("exit flag set without an exit move".into()),
        }
    }
    if s.request.is_some() && s.class != StrategyClass::Commitment {
        return fail("request outside Commitment".into());
    }
    if let Some(r) = s.request {
        if !s.text.contains(r.channel.phrase()) {
            return fail("request marker missing from text".into());
        }
    }
    Ok(())
}
