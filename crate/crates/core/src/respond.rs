//! Explanation-guided response prompts and response generation.
//!
//! Prompt layout, one line per part:
//!
//! ```text
//! <header>
//! <length clause>
//!
//! <review text>
//! ```
//!
//! The header is the bare instruction, optionally preceded by the prediction
//! prefix and the keyword clause. When a prefix precedes it, the
//! instruction's first letter is lowercased.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::WordExplanation;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTier {
    Bare,
    WithPrediction,
    WithExplanation,
}

impl PromptTier {
    pub const ALL: [PromptTier; 3] = [PromptTier::Bare, PromptTier::WithPrediction, PromptTier::WithExplanation];
}

impl std::str::FromStr for PromptTier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bare" => Ok(PromptTier::Bare),
            "with_prediction" => Ok(PromptTier::WithPrediction),
            "with_explanation" => Ok(PromptTier::WithExplanation),
            _ => Err(Error::invalid(format!(
                "unknown tier {s:?} (expected bare, with_prediction or with_explanation)"
            ))),
        }
    }
}

/// Localizable prompt fragments. `keyword_clause` uses `{keywords}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub instruction: String,
    pub influential_prefix: String,
    pub negative_prefix: String,
    pub keyword_clause: String,
    pub length_clause: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            instruction: "Generate a short management response to this review".into(),
            influential_prefix: "This is an influential negative review, ".into(),
            negative_prefix: "This is a negative review, ".into(),
            keyword_clause: "and the words {keywords} are the keywords, ".into(),
            length_clause: "Limit the response to a maximum of two sentences.".into(),
        }
    }
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Top-`k` distinct tokens with positive weight, strongest first; equal
/// weights keep token order.
pub fn select_keywords<T: Scalar>(explanation: &WordExplanation<T>, k: usize) -> Vec<String> {
    let mut positive: Vec<(usize, T)> = explanation
        .weights
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, w)| w > T::zero())
        .collect();
    positive.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut out: Vec<String> = Vec::new();
    for (i, _) in positive {
        let tok = &explanation.tokens[i];
        if !out.contains(tok) {
            out.push(tok.clone());
        }
        if out.len() == k {
            break;
        }
    }
    out
}

/// First line of the prompt for a tier.
pub fn prompt_header(
    tier: PromptTier,
    influential: Option<bool>,
    keywords: Option<&[String]>,
    templates: &PromptTemplates,
) -> Result<String> {
    let prefix = |flag: Option<bool>| -> Result<&str> {
        match flag {
            Some(true) => Ok(&templates.influential_prefix),
            Some(false) => Ok(&templates.negative_prefix),
            None => Err(Error::invalid("this prompt tier needs a prediction")),
        }
    };
    Ok(match tier {
        PromptTier::Bare => templates.instruction.clone(),
        PromptTier::WithPrediction => {
            format!("{}{}", prefix(influential)?, lowercase_first(&templates.instruction))
        }
        PromptTier::WithExplanation => {
            let p = prefix(influential)?;
            let words = keywords.ok_or_else(|| Error::invalid("with_explanation prompts need keywords"))?;
            let clause = templates.keyword_clause.replace("{keywords}", &words.join(", "));
            format!("{p}{clause}{}", lowercase_first(&templates.instruction))
        }
    })
}

pub fn build_prompt(
    review_text: &str,
    tier: PromptTier,
    influential: Option<bool>,
    keywords: Option<&[String]>,
    templates: &PromptTemplates,
) -> Result<String> {
    let header = prompt_header(tier, influential, keywords, templates)?;
    Ok(format!("{header}\n{}\n\n{review_text}", templates.length_clause))
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’' | '」' | '』' | '）')
}

/// Splits on terminal punctuation. `.`, `!` and `?` end a sentence when
/// followed by whitespace or the end of text; `。`, `！` and `？` always do.
/// Runs of terminal marks and closing quotes stay with their sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        let ascii = matches!(c, '.' | '!' | '?');
        let cjk = matches!(c, '。' | '！' | '？');
        if ascii || cjk {
            let mut j = i + 1;
            while j < chars.len() && (matches!(chars[j].1, '.' | '!' | '?' | '。' | '！' | '？') || is_closing(chars[j].1)) {
                j += 1;
            }
            let at_boundary = cjk || j == chars.len() || chars[j].1.is_whitespace();
            if at_boundary {
                let end = if j == chars.len() { text.len() } else { chars[j].0 };
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Keeps the first `max` sentences; reports whether anything was cut.
pub fn truncate_sentences(text: &str, max: usize) -> (String, bool) {
    let sentences = split_sentences(text);
    if sentences.len() <= max {
        return (text.trim().to_string(), false);
    }
    (sentences[..max].join(" "), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    External,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDraft {
    pub prompt: String,
    pub response: String,
    pub source: ResponseSource,
    pub sentence_count: usize,
    /// The generated text exceeded the limit and was cut.
    pub truncated: bool,
}

pub const DEFAULT_FALLBACK_TEMPLATE: &str = "We are sorry that your visit fell short, especially regarding {keywords}. \
     We will address this with our team right away and hope to welcome you back.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub endpoint: Option<String>,
    pub auth_token: Option<String>,
    pub timeout_secs: f64,
    pub max_sentences: usize,
    pub enforce_limit: bool,
    pub fallback_enabled: bool,
    pub fallback_template: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            endpoint: None,
            auth_token: None,
            timeout_secs: 10.0,
            max_sentences: 2,
            enforce_limit: true,
            fallback_enabled: true,
            fallback_template: DEFAULT_FALLBACK_TEMPLATE.into(),
        }
    }
}

fn join_keywords(words: &[String]) -> String {
    match words {
        [] => "the issues you raised".into(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Fills the `{keywords}` placeholder.
pub fn fill_template(template: &str, keywords: &[String]) -> String {
    template.replace("{keywords}", &join_keywords(keywords))
}

#[derive(Serialize)]
struct GenerationRequest<'a> {
    prompt: &'a str,
    max_sentences: usize,
}

/// POSTs `{prompt, max_sentences}` as JSON and returns the plain-text body.
pub fn call_endpoint(url: &str, prompt: &str, config: &GenerationConfig) -> Result<String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
        .http_status_as_error(false)
        .build()
        .into();
    let mut req = agent.post(url);
    if let Some(token) = &config.auth_token {
        req = req.header("Authorization", format!("Bearer {token}"));
    }
    let resp = req
        .send_json(GenerationRequest { prompt, max_sentences: config.max_sentences })
        .map_err(|e| Error::Endpoint { status: None, message: e.to_string() })?;
    let status = resp.status().as_u16();
    let body = resp
        .into_body()
        .read_to_string()
        .map_err(|e| Error::Endpoint { status: Some(status), message: e.to_string() })?;
    if !(200..300).contains(&status) {
        return Err(Error::Endpoint { status: Some(status), message: body });
    }
    Ok(body)
}

/// Asks the configured endpoint for a response, falling back to the
/// keyword template when the endpoint is missing or fails and fallback is on.
pub fn generate_response(prompt: &str, keywords: &[String], config: &GenerationConfig) -> Result<ResponseDraft> {
    let external = match &config.endpoint {
        Some(url) => match call_endpoint(url, prompt, config) {
            Ok(text) => Some(text),
            Err(e) if config.fallback_enabled => {
                log::warn!("generation endpoint unavailable, using template: {e}");
                None
            }
            Err(e) => return Err(e),
        },
        None if config.fallback_enabled => None,
        None => {
            return Err(Error::Endpoint { status: None, message: "no endpoint configured and fallback disabled".into() })
        }
    };
    let (text, source) = match external {
        Some(t) => (t, ResponseSource::External),
        None => (fill_template(&config.fallback_template, keywords), ResponseSource::Template),
    };
    let (response, truncated) =
        if config.enforce_limit { truncate_sentences(&text, config.max_sentences) } else { (text.trim().to_string(), false) };
    let sentence_count = split_sentences(&response).len();
    Ok(ResponseDraft { prompt: prompt.to_string(), response, source, sentence_count, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn explanation(pairs: &[(&str, f64)]) -> WordExplanation<f64> {
        WordExplanation {
            tokens: pairs.iter().map(|p| p.0.to_string()).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            intercept: 0.0,
            fidelity_r2: 1.0,
            top_k: vec![],
            constant_output: false,
        }
    }

    #[test]
    fn keywords_by_positive_weight() {
        let e = explanation(&[("waiter", 0.4), ("food", -0.2), ("service", 0.3)]);
        assert_eq!(select_keywords(&e, 2), vec!["waiter", "service"]);
        assert_eq!(select_keywords(&e, 10), vec!["waiter", "service"]);
        assert!(select_keywords(&explanation(&[("a", -1.0), ("b", 0.0)]), 3).is_empty());
        let dup = explanation(&[("service", 0.1), ("waiter", 0.2), ("service", 0.3)]);
        assert_eq!(select_keywords(&dup, 3), vec!["service", "waiter"]);
    }

    #[test]
    fn tier_headers() {
        let t = PromptTemplates::default();
        assert_eq!(
            prompt_header(PromptTier::Bare, None, None, &t).unwrap(),
            "Generate a short management response to this review"
        );
        assert_eq!(
            prompt_header(PromptTier::WithPrediction, Some(true), None, &t).unwrap(),
            "This is an influential negative review, generate a short management response to this review"
        );
        let kw = vec!["waiter".to_string(), "service".to_string()];
        let h = prompt_header(PromptTier::WithExplanation, Some(true), Some(&kw), &t).unwrap();
        assert!(h.contains("the words waiter, service are the keywords"));
        assert!(h.starts_with("This is an influential negative review, "));
        let plain = prompt_header(PromptTier::WithPrediction, Some(false), None, &t).unwrap();
        assert!(!plain.contains("influential"));
    }

    #[test]
    fn missing_inputs_are_errors() {
        let t = PromptTemplates::default();
        assert!(build_prompt("x", PromptTier::WithPrediction, None, None, &t).is_err());
        assert!(build_prompt("x", PromptTier::WithExplanation, Some(true), None, &t).is_err());
    }

    #[test]
    fn prompt_layout() {
        let t = PromptTemplates::default();
        let p = build_prompt("The waiter rushed us.", PromptTier::Bare, None, None, &t).unwrap();
        assert!(p.starts_with("Generate a short management response to this review\n"));
        assert!(p.contains("maximum of two sentences"));
        assert!(p.ends_with("\n\nThe waiter rushed us."));
    }

    #[test]
    fn sentence_rule() {
        assert_eq!(split_sentences("One. Two! Three?"), vec!["One.", "Two!", "Three?"]);
        assert_eq!(split_sentences("Price was 3.5 dollars. Ok"), vec!["Price was 3.5 dollars.", "Ok"]);
        assert_eq!(split_sentences("服务很差。不会再来！"), vec!["服务很差。", "不会再来！"]);
        assert_eq!(split_sentences("Really?! \"Yes.\" Fine"), vec!["Really?!", "\"Yes.\"", "Fine"]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn truncation() {
        let (t, cut) = truncate_sentences("A one. B two. C three.", 2);
        assert_eq!(t, "A one. B two.");
        assert!(cut);
        assert_eq!(truncate_sentences("Only one.", 2), ("Only one.".to_string(), false));
    }

    #[test]
    fn template_fallback() {
        let cfg = GenerationConfig::default();
        let d = generate_response("p", &["service".into()], &cfg).unwrap();
        assert_eq!(d.source, ResponseSource::Template);
        assert!(d.response.contains("service"));
        assert!(d.sentence_count <= 2);
        assert_eq!(d, generate_response("p", &["service".into()], &cfg).unwrap());
        assert_eq!(fill_template("{keywords}", &["a".into(), "b".into(), "c".into()]), "a, b and c");
    }

    #[test]
    fn no_endpoint_without_fallback_is_error() {
        let cfg = GenerationConfig { fallback_enabled: false, ..Default::default() };
        assert!(matches!(generate_response("p", &[], &cfg), Err(Error::Endpoint { .. })));
    }
}
