//! Agent actions and their canonical one-line rendering.
//!
//! Every subsystem that compares, caches, or prompts with actions goes
//! through [`render_action`]. The grammar is deliberately small:
//!
//! ```text
//! search{query="..."}
//! visit{url="...",instruction="..."}
//! finish{answer="..."}
//! other{tool="...",args={k1="v1",k2="v2"}}
//! ```
//!
//! Values are double-quoted with backslash escaping; `other` args are kept
//! in a sorted map so equal actions always render to equal strings. The
//! rendering is injective over valid actions, which is what makes it usable
//! as a cache key and as the equality surface for matching verifiers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// One agent action; the unit of speculation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Issue a query to a search engine.
    Search { query: String },
    /// Fetch a URL and extract content per an instruction.
    Visit { url: String, instruction: String },
    /// Emit the final answer and terminate the run.
    Finish { answer: String },
    /// Pass-through envelope for any other tool call.
    Other {
        tool: String,
        args: BTreeMap<String, String>,
    },
}

/// Variant tag of an [`Action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Search,
    Visit,
    Finish,
    Other,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Search => write!(f, "search"),
            ActionKind::Visit => write!(f, "visit"),
            ActionKind::Finish => write!(f, "finish"),
            ActionKind::Other => write!(f, "other"),
        }
    }
}

/// Error for actions that violate the field invariants.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidAction {
    #[error("field `{0}` must be non-empty")]
    EmptyField(&'static str),
    #[error("arg key `{0}` must match [A-Za-z0-9_.-]+")]
    BadArgKey(String),
}

impl Action {
    pub fn search(query: impl Into<String>) -> Result<Self, InvalidAction> {
        let a = Action::Search {
            query: query.into(),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn visit(
        url: impl Into<String>,
        instruction: impl Into<String>,
    ) -> Result<Self, InvalidAction> {
        let a = Action::Visit {
            url: url.into(),
            instruction: instruction.into(),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn finish(answer: impl Into<String>) -> Result<Self, InvalidAction> {
        let a = Action::Finish {
            answer: answer.into(),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn other(
        tool: impl Into<String>,
        args: BTreeMap<String, String>,
    ) -> Result<Self, InvalidAction> {
        let a = Action::Other {
            tool: tool.into(),
            args,
        };
        a.validate()?;
        Ok(a)
    }

    /// Checks the per-variant non-emptiness invariants.
    pub fn validate(&self) -> Result<(), InvalidAction> {
        match self {
            Action::Search { query } if query.is_empty() => Err(InvalidAction::EmptyField("query")),
            Action::Visit { url, .. } if url.is_empty() => Err(InvalidAction::EmptyField("url")),
            Action::Visit { instruction, .. } if instruction.is_empty() => {
                Err(InvalidAction::EmptyField("instruction"))
            }
            Action::Finish { answer } if answer.is_empty() => {
                Err(InvalidAction::EmptyField("answer"))
            }
            Action::Other { tool, .. } if tool.is_empty() => Err(InvalidAction::EmptyField("tool")),
            Action::Other { args, .. } => {
                // Keys appear unquoted in the rendering, so they are
                // limited to the charset the parser accepts.
                match args
                    .keys()
                    .find(|k| k.is_empty() || !k.chars().all(is_key_char))
                {
                    Some(bad) => Err(InvalidAction::BadArgKey(bad.clone())),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> ActionKind {
        action_kind(self)
    }
}

/// Returns the active variant tag.
pub fn action_kind(action: &Action) -> ActionKind {
    match action {
        Action::Search { .. } => ActionKind::Search,
        Action::Visit { .. } => ActionKind::Visit,
        Action::Finish { .. } => ActionKind::Finish,
        Action::Other { .. } => ActionKind::Other,
    }
}

/// Renders an action into the canonical one-line grammar.
///
/// Equal actions render equally, distinct actions render distinctly; the
/// tests enforce injectivity by brute-force enumeration.
pub fn render_action(action: &Action) -> String {
    match action {
        Action::Search { query } => format!("search{{query={}}}", quote(query)),
        Action::Visit { url, instruction } => {
            format!(
                "visit{{url={},instruction={}}}",
                quote(url),
                quote(instruction)
            )
        }
        Action::Finish { answer } => format!("finish{{answer={}}}", quote(answer)),
        Action::Other { tool, args } => {
            let rendered_args = args
                .iter()
                .map(|(k, v)| format!("{}={}", k, quote(v)))
                .collect::<Vec<_>>()
                .join(",");
            format!("other{{tool={},args={{{}}}}}", quote(tool), rendered_args)
        }
    }
}

fn is_key_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn quote(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

/// Error from [`parse_action`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionParseError {
    #[error("unknown action tag `{0}`")]
    UnknownTag(String),
    #[error("malformed action at byte {0}: expected {1}")]
    Malformed(usize, &'static str),
    #[error("unexpected field `{0}`")]
    UnexpectedField(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error(transparent)]
    Invalid(#[from] InvalidAction),
}

/// Parses one line of the canonical action grammar.
///
/// Inverse of [`render_action`]: `parse_action(&render_action(a)) == Ok(a)`
/// for every valid action.
pub fn parse_action(input: &str) -> Result<Action, ActionParseError> {
    let mut p = Parser::new(input.trim());
    let action = p.action()?;
    p.end()?;
    action.validate()?;
    Ok(action)
}

/// Extracts an action from a model completion.
///
/// Completions produced with reasoning carry the action on its own line
/// after the reasoning text, so this scans lines from the bottom and takes
/// the first one that parses. Returns the action, the text before the
/// action line (the reasoning prefix), and the byte offset of the action
/// line within `text`.
pub fn extract_action(text: &str) -> Option<(Action, &str, usize)> {
    let mut end = text.len();
    loop {
        let start = text[..end].rfind('\n').map(|i| i + 1).unwrap_or(0);
        let line = &text[start..end];
        if let Ok(action) = parse_action(line) {
            return Some((action, &text[..start], start));
        }
        if start == 0 {
            return None;
        }
        end = start - 1;
    }
}

struct Parser<'a> {
    input: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        Parser { input, pos: 0 }
    }

    fn action(&mut self) -> Result<Action, ActionParseError> {
        let tag = self.ident()?;
        self.expect('{')?;
        let action = match tag.as_str() {
            "search" => {
                let query = self.named_string("query")?;
                Action::Search { query }
            }
            "visit" => {
                let url = self.named_string("url")?;
                self.expect(',')?;
                let instruction = self.named_string("instruction")?;
                Action::Visit { url, instruction }
            }
            "finish" => {
                let answer = self.named_string("answer")?;
                Action::Finish { answer }
            }
            "other" => {
                let tool = self.named_string("tool")?;
                self.expect(',')?;
                self.keyword("args")?;
                self.expect('=')?;
                self.expect('{')?;
                let mut args = BTreeMap::new();
                if !self.peek_is('}') {
                    loop {
                        let key = self.ident()?;
                        self.expect('=')?;
                        let value = self.quoted()?;
                        args.insert(key, value);
                        if self.peek_is(',') {
                            self.expect(',')?;
                        } else {
                            break;
                        }
                    }
                }
                self.expect('}')?;
                Action::Other { tool, args }
            }
            other => return Err(ActionParseError::UnknownTag(other.to_string())),
        };
        self.expect('}')?;
        Ok(action)
    }

    fn named_string(&mut self, name: &'static str) -> Result<String, ActionParseError> {
        let key = self.ident()?;
        if key != name {
            return Err(ActionParseError::UnexpectedField(key));
        }
        self.expect('=')?;
        self.quoted()
    }

    fn keyword(&mut self, name: &'static str) -> Result<(), ActionParseError> {
        let key = self.ident()?;
        if key == name {
            Ok(())
        } else {
            Err(ActionParseError::UnexpectedField(key))
        }
    }

    fn ident(&mut self) -> Result<String, ActionParseError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if is_key_char(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(ActionParseError::Malformed(self.pos, "identifier"));
        }
        Ok(self.input[start..self.pos].to_string())
    }

    fn quoted(&mut self) -> Result<String, ActionParseError> {
        self.expect('"')?;
        let mut out = String::new();
        loop {
            let c = self
                .next()
                .ok_or(ActionParseError::Malformed(self.pos, "closing quote"))?;
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let esc = self
                        .next()
                        .ok_or(ActionParseError::Malformed(self.pos, "escape character"))?;
                    match esc {
                        '\\' => out.push('\\'),
                        '"' => out.push('"'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        _ => return Err(ActionParseError::Malformed(self.pos, "valid escape")),
                    }
                }
                other => out.push(other),
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.input[self.pos..].chars().next()
    }

    fn peek_is(&self, c: char) -> bool {
        self.peek() == Some(c)
    }

    fn next(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn expect(&mut self, c: char) -> Result<(), ActionParseError> {
        if self.peek_is(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(ActionParseError::Malformed(
                self.pos,
                match c {
                    '{' => "`{`",
                    '}' => "`}`",
                    ',' => "`,`",
                    '=' => "`=`",
                    '"' => "`\"`",
                    _ => "punctuation",
                },
            ))
        }
    }

    fn end(&mut self) -> Result<(), ActionParseError> {
        if self.pos == self.input.len() {
            Ok(())
        } else {
            Err(ActionParseError::Malformed(self.pos, "end of input"))
        }
    }
}
