//! Prompt skeletons and `{{placeholder}}` rendering.
//!
//! Skeletons are configuration, not code: each (variant, stage) pair has a
//! compiled-in default that can be overridden by a plain-text file in the
//! prompt directory (`<variant>.<stage>.txt`) or an entry in
//! `TransferConfig::prompt_templates` under the same key.

use std::collections::BTreeMap;
use std::path::Path;

use super::{PromptStage, Variant};

pub const DEFAULT_ABSTRACT: &str = "\
Extract the reusable sentence skeleton from the sentence below. Replace each \
content-bearing word with {SLOT} and keep function words and punctuation.
Sentence:
{{source}}
Respond with the skeleton only.";

const DEFAULT_GENERATE_STRUCTURED: &str = "\
Rewrite one sentence of a document so it matches a target style.
Style intensity: {{alpha}} on a 0-1 scale (0 = return the sentence unchanged, \
1 = imitate the template style as closely as the content allows).
Lexical pattern from the matched sentence template:
{{sentence_template}}
Structural constraints from the matched paragraph template: sentence-pattern \
sequence {{paragraph_structure}} (exemplar paragraph {{paragraph_exemplar}}).
Original sentence; preserve its semantic content exactly:
{{source}}
Respond with the rewritten sentence only.";

const DEFAULT_GENERATE_SENTENCE_PATTERN: &str = "\
Rewrite one sentence of a document so it matches a target style.
Style intensity: {{alpha}} on a 0-1 scale (0 = return the sentence unchanged, \
1 = imitate the template style as closely as the content allows).
Lexical pattern from the matched sentence template:
{{sentence_template}}
Original sentence; preserve its semantic content exactly:
{{source}}
Respond with the rewritten sentence only.";

const DEFAULT_GENERATE_TEMPLATE_ONLY: &str = "\
Rewrite one sentence of a document so it matches the style of the reference \
sentences below.
Style intensity: {{alpha}} on a 0-1 scale (0 = return the sentence unchanged, \
1 = imitate the reference style as closely as the content allows).
Reference sentences:
{{reference}}
Original sentence; preserve its semantic content exactly:
{{source}}
Respond with the rewritten sentence only.";

const DEFAULT_REFINE: &str = "\
The numbered sentences below were rewritten one at a time. Adjust \
inter-sentence transitions, discourse markers, and referential consistency so \
the paragraph reads as a coherent whole, following the structural template \
(sentence-pattern sequence {{paragraph_structure}}, exemplar paragraph \
{{paragraph_exemplar}}).
Style intensity: {{alpha}}.
Sentences:
{{drafts}}
Respond with the same number of sentences, one per line, in order.";

const DEFAULT_DIRECT: &str = "\
Rewrite the source text so it matches the style of the reference text while \
preserving the source content.
Style intensity: {{alpha}} on a 0-1 scale (0 = return the text unchanged, \
1 = imitate the reference style as closely as the content allows).
Reference text:
{{reference}}
Source text:
{{source}}
Respond with the rewritten text only.";

const DEFAULT_DESTYLIZE: &str = "\
Reduce each numbered sentence below to a plain, style-free form that keeps \
its meaning.
Sentences:
{{drafts}}
Respond with the same number of sentences, one per line, in order.";

const DEFAULT_RESTYLIZE: &str = "\
Rewrite each numbered style-free sentence below so it matches the style of \
the reference text.
Style intensity: {{alpha}} on a 0-1 scale.
Reference text:
{{reference}}
Sentences:
{{drafts}}
Respond with the same number of sentences, one per line, in order.";

/// Key for a (variant, stage) skeleton, e.g. `structured_rewritten.generate`.
pub fn prompt_key(variant: Variant, stage: PromptStage) -> String {
    format!("{}.{}", variant.as_str(), stage_str(stage))
}

fn stage_str(stage: PromptStage) -> &'static str {
    match stage {
        PromptStage::AbstractPattern => "abstract",
        PromptStage::Generate => "generate",
        PromptStage::Refine => "refine",
        PromptStage::DirectTransfer => "single",
        PromptStage::Destylize => "destylize",
        PromptStage::Restylize => "restylize",
    }
}

/// The compiled-in skeleton for a (variant, stage) pair.
pub fn default_skeleton(variant: Variant, stage: PromptStage) -> &'static str {
    match (variant, stage) {
        (_, PromptStage::AbstractPattern) => DEFAULT_ABSTRACT,
        (Variant::StructuredRewritten, PromptStage::Generate) => DEFAULT_GENERATE_STRUCTURED,
        (Variant::SentencePattern, PromptStage::Generate) => DEFAULT_GENERATE_SENTENCE_PATTERN,
        (Variant::TemplateOnly, PromptStage::Generate) => DEFAULT_GENERATE_TEMPLATE_ONLY,
        (_, PromptStage::Refine) => DEFAULT_REFINE,
        (_, PromptStage::DirectTransfer) => DEFAULT_DIRECT,
        (_, PromptStage::Destylize) => DEFAULT_DESTYLIZE,
        (_, PromptStage::Restylize) => DEFAULT_RESTYLIZE,
        // Remaining combinations have no stage of their own; fall back to
        // the structured generate skeleton.
        (_, PromptStage::Generate) => DEFAULT_GENERATE_STRUCTURED,
    }
}

/// Look up the skeleton for (variant, stage): config override first, then
/// the compiled-in default.
pub fn skeleton_for<'a>(
    overrides: &'a BTreeMap<String, String>,
    variant: Variant,
    stage: PromptStage,
) -> &'a str {
    overrides
        .get(&prompt_key(variant, stage))
        .map(String::as_str)
        .unwrap_or_else(|| default_skeleton(variant, stage))
}

/// Replace `{{name}}` placeholders. Unknown placeholders are left in place
/// and logged, never silently dropped.
pub fn render(skeleton: &str, vars: &[(&str, &str)]) -> String {
    let mut out = skeleton.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    if out.contains("{{") {
        log::warn!("prompt skeleton retains unresolved placeholders");
    }
    out
}

/// Render the pattern-abstraction prompt for a medoid sentence.
pub fn render_abstract_prompt(medoid: &str) -> String {
    render(DEFAULT_ABSTRACT, &[("source", medoid)])
}

/// Number drafts as `1. <text>` lines for line-oriented stages.
pub fn numbered_lines(lines: &[String]) -> String {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {}", i + 1, l))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Load `<variant>.<stage>.txt` overrides from a prompt directory. Missing
/// files simply fall back to defaults; only present files become overrides.
pub fn load_prompt_dir(dir: &Path) -> std::io::Result<BTreeMap<String, String>> {
    let mut overrides = BTreeMap::new();
    if !dir.exists() {
        return Ok(overrides);
    }
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            overrides.insert(stem.to_string(), std::fs::read_to_string(&path)?);
        }
    }
    Ok(overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_replaces_placeholders() {
        let out = render("Hello {{name}}, alpha={{alpha}}.", &[("name", "x"), ("alpha", "0.8")]);
        assert_eq!(out, "Hello x, alpha=0.8.");
    }

    #[test]
    fn unknown_placeholders_survive() {
        let out = render("{{known}} {{unknown}}", &[("known", "v")]);
        assert_eq!(out, "v {{unknown}}");
    }

    #[test]
    fn keys_are_variant_scoped() {
        assert_eq!(
            prompt_key(Variant::StructuredRewritten, PromptStage::Generate),
            "structured_rewritten.generate"
        );
        assert_eq!(
            prompt_key(Variant::DirectPrompt, PromptStage::DirectTransfer),
            "direct_prompt.single"
        );
    }

    #[test]
    fn overrides_take_precedence() {
        let mut m = BTreeMap::new();
        m.insert(
            "structured_rewritten.generate".to_string(),
            "custom {{source}}".to_string(),
        );
        assert_eq!(
            skeleton_for(&m, Variant::StructuredRewritten, PromptStage::Generate),
            "custom {{source}}"
        );
        assert_eq!(
            skeleton_for(&m, Variant::SentencePattern, PromptStage::Generate),
            DEFAULT_GENERATE_SENTENCE_PATTERN
        );
    }

    #[test]
    fn prompt_dir_loading() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("structured_rewritten.generate.txt"),
            "from file {{source}}",
        )
        .unwrap();
        std::fs::write(dir.path().join("ignored.md"), "nope").unwrap();
        let overrides = load_prompt_dir(dir.path()).unwrap();
        assert_eq!(overrides.len(), 1);
        assert_eq!(
            overrides["structured_rewritten.generate"],
            "from file {{source}}"
        );
        // Missing dir is fine.
        assert!(load_prompt_dir(&dir.path().join("missing")).unwrap().is_empty());
    }

    #[test]
    fn numbered_lines_format() {
        let lines = vec!["A.".to_string(), "B.".to_string()];
        assert_eq!(numbered_lines(&lines), "1. A.\n2. B.");
    }

    #[test]
    fn default_skeletons_name_all_conditioning_signals() {
        // The structured generate prompt must carry the three signals plus
        // the style-intensity instruction.
        let s = DEFAULT_GENERATE_STRUCTURED;
        for placeholder in ["{{alpha}}", "{{sentence_template}}", "{{paragraph_structure}}", "{{source}}"] {
            assert!(s.contains(placeholder), "missing {placeholder}");
        }
    }
}
