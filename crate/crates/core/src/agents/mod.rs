//! Agent runtime: prompt assembly, mock and chat-backed agents, tools and
//! the summarizer.

pub mod chat;
pub mod mock;
mod prompt;
pub mod summarizer;
pub mod tools;

pub use chat::{parse_chat_reply, ChatClient, ChatReply};
pub use mock::{mixture_entropy, mixture_epsilon_for_entropy, mock_execute, MockProfile, Skill, DEFAULT_TAG};
pub use prompt::{assemble_prompt, RESPONSES_HEADING, SYNTHESIS_INSTRUCTION};
pub use summarizer::{parse_decision, summarizer_decide, ChatSummarizer, Decision, MockSummarizer, Summarizer};
pub use tools::{calculator_tool, CalcError, ToolSpec};

use crate::error::{Error, Result};
use crate::trajectory::{AgentResponse, AgentSpec, Prompt};

/// What an agent knows about the call besides its prompt.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub step_index: usize,
    pub query: &'a str,
    pub task_tag: &'a str,
    /// Per-call seed; mock agents are pure in it.
    pub seed: u64,
}

pub trait Agent: Send + Sync {
    fn spec(&self) -> &AgentSpec;
    fn execute(&self, prompt: &Prompt, ctx: &CallContext<'_>) -> Result<AgentResponse>;
}

/// Task tag of a query written as `"[TAG] rest"`, else [`DEFAULT_TAG`].
pub fn task_tag(query: &str) -> &str {
    query
        .trim_start()
        .strip_prefix('[')
        .and_then(|rest| rest.split_once(']'))
        .map(|(tag, _)| tag.trim())
        .filter(|tag| !tag.is_empty())
        .unwrap_or(DEFAULT_TAG)
}

#[derive(Debug, Clone)]
pub struct MockAgent {
    pub spec: AgentSpec,
    pub profile: MockProfile,
}

impl MockAgent {
    pub fn new(spec: AgentSpec, profile: MockProfile) -> Result<Self> {
        if spec.agent_id != profile.agent_id {
            return Err(Error::Config(format!(
                "agent {} carries a mock profile for agent {}",
                spec.agent_id, profile.agent_id
            )));
        }
        profile.validate()?;
        Ok(Self { spec, profile })
    }
}

impl Agent for MockAgent {
    fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    fn execute(&self, _prompt: &Prompt, ctx: &CallContext<'_>) -> Result<AgentResponse> {
        mock_execute(&self.profile, ctx.query, ctx.task_tag, ctx.step_index, ctx.seed)
    }
}

#[derive(Debug, Clone)]
pub struct ChatAgent {
    pub spec: AgentSpec,
    pub client: ChatClient,
}

impl Agent for ChatAgent {
    fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    fn execute(&self, prompt: &Prompt, ctx: &CallContext<'_>) -> Result<AgentResponse> {
        let user = if prompt.context_part.is_empty() {
            "Answer the user query."
        } else {
            prompt.context_part.as_str()
        };
        let reply = self.client.complete(&prompt.system_part, user, true)?;
        let predictive_entropy = reply
            .token_entropies
            .as_ref()
            .map(|hs| hs.iter().sum::<f64>() / hs.len() as f64);
        Ok(AgentResponse {
            agent_id: self.spec.agent_id,
            step_index: ctx.step_index,
            text: reply.text,
            token_entropies: reply.token_entropies.unwrap_or_default(),
            token_count: reply.token_count,
            predictive_entropy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags() {
        assert_eq!(task_tag("[A] solve"), "A");
        assert_eq!(task_tag("  [ code ] write"), "code");
        assert_eq!(task_tag("no tag"), DEFAULT_TAG);
        assert_eq!(task_tag("[] empty"), DEFAULT_TAG);
        assert_eq!(task_tag("[unclosed"), DEFAULT_TAG);
    }
}
