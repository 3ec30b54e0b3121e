use std::path::Path;

use super::ProviderError;

/// Prompt texts with `{persona}`, `{news}`, `{memories}`, `{inbox}` and
/// `{topic}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    /// System prompt for generation.
    pub persona: String,
    /// User prompt for generation.
    pub generate: String,
    /// System prompt for scoring; the scored text is sent as the user turn.
    pub score: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            persona: include_str!("../../templates/persona.txt").to_string(),
            generate: include_str!("../../templates/generate.txt").to_string(),
            score: include_str!("../../templates/score.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Reads `persona.txt`, `generate.txt` and `score.txt` from `dir`; missing
    /// files keep the built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, ProviderError> {
        let mut t = PromptTemplates::default();
        for (name, slot) in [
            ("persona.txt", &mut t.persona),
            ("generate.txt", &mut t.generate),
            ("score.txt", &mut t.score),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path)
                    .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(t)
    }
}

/// Replaces every `{key}` in `template`. Unknown placeholders stay verbatim.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match values.iter().find(|(k, _)| *k == key) {
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
