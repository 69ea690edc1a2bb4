//! Deterministic stand-ins for a vision model, driven by the prompt text.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::library::LibraryIndex;
use crate::mllm::HttpReply;

/// What a matcher prompt asks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptInfo {
    pub view_id: usize,
    pub label: u32,
    /// `major_type`, `subcategory` or `material`.
    pub level: String,
    pub options: Vec<String>,
}

fn first_user_text(req: &Value) -> String {
    req["messages"][1]["content"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|p| p["text"].as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

fn number_after(text: &str, prefix: &str) -> Option<u64> {
    let rest = &text[text.find(prefix)? + prefix.len()..];
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// Parses a prompt built by the hierarchical matcher.
pub fn parse_prompt(req: &Value) -> PromptInfo {
    let text = first_user_text(req);
    let level = if text.contains("major material type") {
        "major_type"
    } else if text.contains("Which subcategory") {
        "subcategory"
    } else {
        "material"
    };
    let options = text
        .lines()
        .find_map(|l| l.strip_prefix("Options: "))
        .map(|l| l.split(", ").map(str::to_owned).collect())
        .unwrap_or_default();
    PromptInfo {
        view_id: number_after(&text, "Image: view ").unwrap_or(0) as usize,
        label: number_after(&text, "Region ").unwrap_or(0) as u32,
        level: level.into(),
        options,
    }
}

fn choice_reply(choice: &str) -> HttpReply {
    HttpReply::ok_text(&serde_json::json!({ "choice": choice }).to_string())
}

/// Always answers the first listed option.
pub fn first_option_responder() -> impl Fn(&Value) -> HttpReply + Send + Sync + 'static {
    |req| {
        let p = parse_prompt(req);
        choice_reply(p.options.first().map_or("", String::as_str))
    }
}

/// Answers every level with the tree path of the planted material for the
/// prompted (view, label); unknown regions get the first option.
pub fn faithful_responder(
    index: &LibraryIndex,
    truth: &BTreeMap<(usize, u32), String>,
) -> impl Fn(&Value) -> HttpReply + Send + Sync + 'static {
    let paths: BTreeMap<(usize, u32), [String; 3]> = truth
        .iter()
        .map(|(k, id)| {
            let rec = index.get(id).expect("planted material is in the library");
            (*k, [rec.major_type.clone(), rec.subcategory.clone(), rec.id.clone()])
        })
        .collect();
    move |req| {
        let p = parse_prompt(req);
        let answer = match paths.get(&(p.view_id, p.label)) {
            Some(path) => {
                let k = match p.level.as_str() {
                    "major_type" => 0,
                    "subcategory" => 1,
                    _ => 2,
                };
                path[k].clone()
            }
            None => p.options.first().cloned().unwrap_or_default(),
        };
        choice_reply(&answer)
    }
}
