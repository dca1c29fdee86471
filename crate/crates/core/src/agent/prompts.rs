use std::path::Path;

use super::AgentError;

/// Prompt templates with `{placeholder}` slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSet {
    pub version: String,
    pub refine_news: String,
    pub analysis_open: String,
    pub analysis_continue: String,
    pub analysis_finish: String,
    pub analysis_single: String,
    pub note_section: String,
    pub reply_format: String,
    pub update_note: String,
    pub initial_macro: String,
}

const FILES: [&str; 9] = [
    "refine_news",
    "analysis_open",
    "analysis_continue",
    "analysis_finish",
    "analysis_single",
    "note_section",
    "reply_format",
    "update_note",
    "initial_macro",
];

impl PromptSet {
    /// Templates compiled into the binary.
    pub fn builtin() -> Self {
        Self {
            version: "v1".into(),
            refine_news: include_str!("../../prompts/v1/refine_news.txt").into(),
            analysis_open: include_str!("../../prompts/v1/analysis_open.txt").into(),
            analysis_continue: include_str!("../../prompts/v1/analysis_continue.txt").into(),
            analysis_finish: include_str!("../../prompts/v1/analysis_finish.txt").into(),
            analysis_single: include_str!("../../prompts/v1/analysis_single.txt").into(),
            note_section: include_str!("../../prompts/v1/note_section.txt").into(),
            reply_format: include_str!("../../prompts/v1/reply_format.txt").into(),
            update_note: include_str!("../../prompts/v1/update_note.txt").into(),
            initial_macro: include_str!("../../prompts/v1/initial_macro.txt").trim_end().into(),
        }
    }

    /// Load a prompt directory; files that are absent fall back to the builtin set.
    pub fn load_dir(dir: &Path, version: &str) -> Result<Self, AgentError> {
        let mut set = Self::builtin();
        set.version = version.to_string();
        for name in FILES {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let text =
                std::fs::read_to_string(&path).map_err(|e| AgentError::Prompt(format!("{}: {e}", path.display())))?;
            let slot = match name {
                "refine_news" => &mut set.refine_news,
                "analysis_open" => &mut set.analysis_open,
                "analysis_continue" => &mut set.analysis_continue,
                "analysis_finish" => &mut set.analysis_finish,
                "analysis_single" => &mut set.analysis_single,
                "note_section" => &mut set.note_section,
                "reply_format" => &mut set.reply_format,
                "update_note" => &mut set.update_note,
                _ => &mut set.initial_macro,
            };
            *slot = text;
        }
        Ok(set)
    }
}

/// Substitute `{key}` slots. Unknown slots are left untouched.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_known_slots_only() {
        let out = render("a {x} b {y} {\"action\": \"skip\"}", &[("x", "1")]);
        assert_eq!(out, "a 1 b {y} {\"action\": \"skip\"}");
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        assert_eq!(render("{x}", &[("x", "{x}")]), "{x}");
    }

    #[test]
    fn builtin_templates_have_slots() {
        let p = PromptSet::builtin();
        assert!(p.refine_news.contains("{input}"));
        assert!(p.analysis_open.contains("{inputs}"));
        assert!(p.analysis_continue.contains("{inputs}"));
        assert!(p.analysis_finish.contains("{inputs}"));
        assert!(p.analysis_single.contains("{news}"));
        assert!(p.note_section.contains("{macro}"));
        for slot in ["{date}", "{macro}", "{news}"] {
            assert!(p.update_note.contains(slot));
        }
        assert!(p.initial_macro.starts_with("By September 2021"));
    }
}
