//! Prompted model input: `<question> q… <title> t… <context> c…`.
//!
//! Tokens here are whitespace tokens; budgets count the three markers too.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const QUESTION_MARKER: &str = "<question>";
pub const TITLE_MARKER: &str = "<title>";
pub const CONTEXT_MARKER: &str = "<context>";

const MARKERS: [&str; 3] = [QUESTION_MARKER, TITLE_MARKER, CONTEXT_MARKER];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("{field} contains the reserved marker token {marker}")]
    ReservedMarker {
        field: &'static str,
        marker: &'static str,
    },
    #[error("token budget {budget} is below the {required} tokens needed for question, title and markers")]
    BudgetTooSmall { budget: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSequence {
    question: Vec<String>,
    title: Vec<String>,
    context: Vec<String>,
}

fn tokens(field: &'static str, text: &str) -> Result<Vec<String>, InputError> {
    text.split_whitespace()
        .map(|tok| match MARKERS.iter().find(|m| **m == tok) {
            Some(marker) => Err(InputError::ReservedMarker { field, marker }),
            None => Ok(tok.to_string()),
        })
        .collect()
}

/// Wraps question, title and context with the three prompt markers.
///
/// Marker strings may not appear as tokens inside a field, otherwise the
/// rendered sequence could not be split back into its parts.
pub fn assemble(question: &str, title: &str, context: &str) -> Result<InputSequence, InputError> {
    let question = tokens("question", question)?;
    if question.is_empty() {
        return Err(InputError::EmptyQuestion);
    }
    Ok(InputSequence {
        question,
        title: tokens("title", title)?,
        context: tokens("context", context)?,
    })
}

impl InputSequence {
    pub fn question_tokens(&self) -> &[String] {
        &self.question
    }

    pub fn title_tokens(&self) -> &[String] {
        &self.title
    }

    pub fn context_tokens(&self) -> &[String] {
        &self.context
    }

    /// Tokens that truncation never removes: markers, question and title.
    pub fn fixed_token_count(&self) -> usize {
        MARKERS.len() + self.question.len() + self.title.len()
    }

    pub fn token_count(&self) -> usize {
        self.fixed_token_count() + self.context.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        std::iter::once(QUESTION_MARKER)
            .chain(self.question.iter().map(String::as_str))
            .chain(std::iter::once(TITLE_MARKER))
            .chain(self.title.iter().map(String::as_str))
            .chain(std::iter::once(CONTEXT_MARKER))
            .chain(self.context.iter().map(String::as_str))
    }

    pub fn rendered(&self) -> String {
        self.tokens().collect::<Vec<_>>().join(" ")
    }

    /// Drops context tokens from the end until at most `max_tokens` remain.
    pub fn truncate(&self, max_tokens: usize) -> Result<InputSequence, InputError> {
        let required = self.fixed_token_count();
        if max_tokens < required {
            return Err(InputError::BudgetTooSmall {
                budget: max_tokens,
                required,
            });
        }
        let keep = self.context.len().min(max_tokens - required);
        Ok(InputSequence {
            question: self.question.clone(),
            title: self.title.clone(),
            context: self.context[..keep].to_vec(),
        })
    }
}

/// Splits a rendered sequence back into (question, title, context).
///
/// Returns `None` unless each marker occurs exactly once and in order.
pub fn split_rendered(rendered: &str) -> Option<(String, String, String)> {
    let toks: Vec<&str> = rendered.split_whitespace().collect();
    let pos = |m: &str| {
        let mut it = toks.iter().enumerate().filter(|(_, t)| **t == m);
        match (it.next(), it.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    };
    let (q, t, c) = (
        pos(QUESTION_MARKER)?,
        pos(TITLE_MARKER)?,
        pos(CONTEXT_MARKER)?,
    );
    if !(q == 0 && q < t && t < c) {
        return None;
    }
    Some((
        toks[q + 1..t].join(" "),
        toks[t + 1..c].join(" "),
        toks[c + 1..].join(" "),
    ))
}
