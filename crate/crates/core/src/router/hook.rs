use tracing::warn;

use super::templates::{count_sentences, realize_suggestion, ExitMove, StrategyTemplate, TemplateError};
use super::{InteractionState, RequestSpec, Suggestion};
use crate::StrategyClass;

/// Everything a live generator sees when asked to phrase a move.
#[derive(Debug, Clone, Copy)]
pub struct PromptBundle<'a> {
    pub class: StrategyClass,
    pub exit_flag: bool,
    pub state: &'a InteractionState,
    pub template: &'a StrategyTemplate,
    pub request: Option<RequestSpec>,
    /// The template realization, for generators that paraphrase.
    pub fallback_text: &'a str,
}

/// Boundary for plugging a live language-model generator. Disabled by default.
///
/// Implementations must tolerate concurrent calls from different sessions.
pub trait SuggestionGenerator: Send + Sync {
    fn generate(&self, bundle: &PromptBundle<'_>) -> Option<String>;
}

impl<F> SuggestionGenerator for F
where
    F: Fn(&PromptBundle<'_>) -> Option<String> + Send + Sync,
{
    fn generate(&self, bundle: &PromptBundle<'_>) -> Option<String> {
        self(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HookOutcome {
    NoHook,
    Accepted,
    Declined,
    Rejected(String),
}

/// Realizes from the template, then offers the hook a chance to replace the
/// text. Hook output is re-validated; anything invalid falls back.
pub fn realize_with_hook(
    hook: Option<&dyn SuggestionGenerator>,
    class: StrategyClass,
    state: &InteractionState,
    template: &StrategyTemplate,
    exit: Option<&ExitMove>,
    request: Option<RequestSpec>,
) -> Result<(Suggestion, HookOutcome), TemplateError> {
    let base = realize_suggestion(class, state, template, exit, request)?;
    let Some(hook) = hook else {
        return Ok((base, HookOutcome::NoHook));
    };
    let bundle = PromptBundle {
        class,
        exit_flag: base.exit_flag,
        state,
        template,
        request,
        fallback_text: &base.text,
    };
    let Some(raw) = hook.generate(&bundle) else {
        return Ok((base, HookOutcome::Declined));
    };
    let mut text = raw.trim().to_string();
    if let Some(m) = &base.exit_move {
        if !text.contains(m.as_str()) {
            text.push(' ');
            text.push_str(m);
        }
    }
    match check_generated(&text, &base) {
        Ok(()) => {
            let candidate = Suggestion {
                text,
                facts: base
                    .facts
                    .iter()
                    .filter(|f| raw.contains(f.as_str()))
                    .cloned()
                    .collect(),
                ..base.clone()
            };
            Ok((candidate, HookOutcome::Accepted))
        }
        Err(reason) => {
            warn!(template = %template.id, %reason, "generator output rejected, using template");
            Ok((base, HookOutcome::Rejected(reason)))
        }
    }
}

fn check_generated(text: &str, base: &Suggestion) -> Result<(), String> {
    let n = count_sentences(text);
    if n == 0 || n > 2 {
        return Err(format!("{n} sentences"));
    }
    if text.contains('{') || text.contains('}') {
        return Err("unbound placeholder".into());
    }
    if let Some(r) = base.request {
        if !text.contains(r.channel.phrase()) {
            return Err("request marker missing".into());
        }
    }
    Ok(())
}
