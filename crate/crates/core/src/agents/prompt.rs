use crate::agents::tools::find_tool;
use crate::trajectory::{AgentResponse, AgentSpec, Prompt};

pub const SYNTHESIS_INSTRUCTION: &str = "Other agents have already answered the query above. \
Merge their answers into one complete and internally consistent solution. \
Check every calculation before relying on it.";

pub const RESPONSES_HEADING: &str = "Responses from agents:";

/// Builds the two prompt parts for one agent at one step.
///
/// `prev_responses` are the previous step's routed responses in selection
/// order; at step 1 the slice is empty and so is the context part.
pub fn assemble_prompt(agent: &AgentSpec, user_query: &str, prev_responses: &[&AgentResponse]) -> Prompt {
    let mut system = agent.profile_text.trim_end().to_owned();
    if !agent.tool_names.is_empty() {
        system.push_str("\n\nTools you may call:");
        for name in &agent.tool_names {
            match find_tool(name) {
                Some(tool) => system.push_str(&format!("\n- [{}] {}", tool.name, tool.description)),
                None => system.push_str(&format!("\n- [{name}]")),
            }
        }
    }
    system.push_str("\n\nUser query:\n");
    system.push_str(user_query);

    let mut context = String::new();
    if !prev_responses.is_empty() {
        context.push_str(SYNTHESIS_INSTRUCTION);
        context.push_str("\n\n");
        context.push_str(RESPONSES_HEADING);
        for (i, r) in prev_responses.iter().enumerate() {
            context.push_str(&format!("\n{}. {}", i + 1, r.text));
        }
    }
    Prompt {
        system_part: system,
        context_part: context,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> AgentSpec {
        AgentSpec {
            agent_id: 0,
            model_ref: "mock".into(),
            profile_text: "You are a careful algebra tutor.".into(),
            tool_names: vec!["calculator".into(), "search".into()],
        }
    }

    fn resp(id: usize, text: &str) -> AgentResponse {
        AgentResponse {
            agent_id: id,
            step_index: 1,
            text: text.into(),
            token_entropies: vec![],
            token_count: 1,
            predictive_entropy: None,
        }
    }

    #[test]
    fn first_step_has_no_context() {
        let p = assemble_prompt(&spec(), "What is 17 * 3?", &[]);
        assert!(p.context_part.is_empty());
        assert!(p.system_part.contains("What is 17 * 3?"));
        assert!(p.system_part.starts_with("You are a careful algebra tutor."));
        assert!(p.system_part.contains("[calculator]"));
    }

    #[test]
    fn numbers_responses_in_selection_order() {
        let (a, b) = (resp(4, "fifty-one"), resp(1, "51"));
        let p = assemble_prompt(&spec(), "q", &[&a, &b]);
        assert!(p.context_part.contains(RESPONSES_HEADING));
        let one = p.context_part.find("\n1. fifty-one").unwrap();
        let two = p.context_part.find("\n2. 51").unwrap();
        assert!(one < two);
    }

    #[test]
    fn numbering_inside_texts_is_passed_through() {
        let a = resp(0, "1. first\n2. second");
        let p = assemble_prompt(&spec(), "q", &[&a]);
        assert!(p.context_part.ends_with("\n1. 1. first\n2. second"));
        assert!(!p.context_part.contains("\n2. 1."));
    }
}
