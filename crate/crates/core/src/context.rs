//! Accumulated run context: the state each draft and audit prompt sees.

/// One completed step as it appears in prompts: reasoning (when retained),
/// the canonical rendered action, and a capped observation excerpt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextEntry {
    pub reasoning: Option<String>,
    pub action: String,
    pub observation: String,
}

/// The agent's accumulated context for one task.
#[derive(Debug, Clone)]
pub struct AgentContext {
    question: String,
    entries: Vec<ContextEntry>,
    observation_cap: usize,
}

impl AgentContext {
    pub fn new(question: impl Into<String>, observation_cap: usize) -> Self {
        AgentContext {
            question: question.into(),
            entries: Vec::new(),
            observation_cap,
        }
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends a completed step; the observation is capped to limit
    /// unnecessary context growth.
    pub fn push(&mut self, reasoning: Option<String>, action: String, observation: &str) {
        let capped = if observation.chars().count() > self.observation_cap {
            observation.chars().take(self.observation_cap).collect()
        } else {
            observation.to_string()
        };
        self.entries.push(ContextEntry {
            reasoning,
            action,
            observation: capped,
        });
    }

    /// Prompt for the next generation call. Never empty when the question
    /// is non-empty.
    pub fn render_generation_prompt(&self) -> String {
        let mut out = format!("Question: {}\n", self.question);
        for (i, entry) in self.entries.iter().enumerate() {
            out.push_str(&format!("\nStep {}:\n", i + 1));
            if let Some(reasoning) = &entry.reasoning {
                out.push_str(&format!("Reasoning: {reasoning}\n"));
            }
            out.push_str(&format!("Action: {}\n", entry.action));
            out.push_str(&format!("Observation: {}\n", entry.observation));
        }
        out.push_str("\nDecide the next action.\n");
        out
    }

    /// The last `window` steps rendered with one `Step N:` marker each,
    /// for the audit prompt's context section.
    pub fn render_recent_steps(&self, window: usize) -> String {
        let skip = self.entries.len().saturating_sub(window);
        let mut out = format!("User's Goal: {}\n", self.question);
        for (i, entry) in self.entries.iter().enumerate().skip(skip) {
            out.push_str(&format!("\nStep {}:\n", i + 1));
            out.push_str(&format!("Action: {}\n", entry.action));
            out.push_str(&format!("Observation: {}\n", entry.observation));
        }
        out
    }
}
