//! The summarizer sits outside the routed pool. It reads the current step's
//! responses and either ends the run with an answer or asks for another step.

use crate::agents::chat::ChatClient;
use crate::error::{Error, Result};
use crate::trajectory::AgentResponse;

pub const FINAL_MARKER: &str = "[FINAL]";
pub const CONTINUE_MARKER: &str = "[CONTINUE]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Final(String),
    Continue,
}

/// Reads the leading marker of a reply. Anything unrecognized continues.
pub fn parse_decision(reply: &str) -> Decision {
    let trimmed = reply.trim_start();
    if let Some(rest) = trimmed.strip_prefix(FINAL_MARKER) {
        Decision::Final(rest.trim().to_owned())
    } else {
        Decision::Continue
    }
}

/// Reply text with any leading marker removed.
pub fn strip_marker(reply: &str) -> String {
    let trimmed = reply.trim();
    trimmed
        .strip_prefix(FINAL_MARKER)
        .or_else(|| trimmed.strip_prefix(CONTINUE_MARKER))
        .unwrap_or(trimmed)
        .trim()
        .to_owned()
}

pub fn summarizer_prompt(query: &str, responses: &[&AgentResponse], forced: bool) -> (String, String) {
    let mut system = String::from(
        "You write the final answer for a team of agents. Read the user query and the \
         candidate responses below.",
    );
    if forced {
        system.push_str(&format!(
            " The step budget is exhausted: reply with {FINAL_MARKER} and then your best answer."
        ));
    } else {
        system.push_str(&format!(
            " If the responses settle the query, reply with {FINAL_MARKER} and then the answer. \
             If more reasoning is needed, reply with {CONTINUE_MARKER} only."
        ));
    }
    let mut user = format!("User query:\n{query}\n\nCandidate responses:");
    for (i, r) in responses.iter().enumerate() {
        user.push_str(&format!("\n{}. {}", i + 1, r.text));
    }
    (system, user)
}

pub trait Summarizer: Send + Sync {
    /// Raw reply for the given step. `forced` asks for an answer regardless.
    fn reply(&self, query: &str, responses: &[&AgentResponse], step_index: usize, forced: bool) -> Result<String>;
}

pub fn summarizer_decide(
    summarizer: &dyn Summarizer,
    query: &str,
    responses: &[&AgentResponse],
    step_index: usize,
) -> Result<Decision> {
    if responses.is_empty() {
        return Err(Error::InvalidArgument("summarizer needs at least one response".into()));
    }
    Ok(parse_decision(&summarizer.reply(query, responses, step_index, false)?))
}

/// Scripted summarizer: continues until `final_at_step`, then answers with
/// the first response's text. `None` never finalizes voluntarily.
#[derive(Debug, Clone, Default)]
pub struct MockSummarizer {
    pub final_at_step: Option<usize>,
}

impl Summarizer for MockSummarizer {
    fn reply(&self, _query: &str, responses: &[&AgentResponse], step_index: usize, forced: bool) -> Result<String> {
        let done = forced || self.final_at_step.is_some_and(|s| step_index >= s);
        if !done {
            return Ok(CONTINUE_MARKER.to_owned());
        }
        let ids: Vec<String> = responses.iter().map(|r| r.agent_id.to_string()).collect();
        let lead = responses.first().map_or("", |r| r.text.as_str());
        Ok(format!("{FINAL_MARKER} [agents {}] {lead}", ids.join(",")))
    }
}

#[derive(Debug, Clone)]
pub struct ChatSummarizer {
    pub client: ChatClient,
}

impl Summarizer for ChatSummarizer {
    fn reply(&self, query: &str, responses: &[&AgentResponse], _step_index: usize, forced: bool) -> Result<String> {
        let (system, user) = summarizer_prompt(query, responses, forced);
        Ok(self.client.complete(&system, &user, false)?.text)
    }
}
