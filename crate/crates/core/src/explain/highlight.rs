//! Standalone HTML rendering of word weights.
//!
//! Positive weights use the orange family (`hl-pos`), negative ones the teal
//! family (`hl-neg`). Background alpha is `|w| / max|w|`, three decimals.
//! Zero-weight tokens are emitted as plain escaped text.

use std::fmt::Write;

use super::WordExplanation;
use crate::features::text::is_word_char;
use crate::scalar::Scalar;

pub const POSITIVE_RGB: (u8, u8, u8) = (255, 140, 0);
pub const NEGATIVE_RGB: (u8, u8, u8) = (0, 128, 128);

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn render_highlights<T: Scalar>(explanation: &WordExplanation<T>) -> String {
    let max = explanation.weights.iter().fold(0.0f64, |m, w| m.max(w.as_f64().abs()));
    let mut body = String::new();
    let mut prev_word = false;
    for (tok, w) in explanation.tokens.iter().zip(&explanation.weights) {
        let w = w.as_f64();
        let starts_word = tok.chars().next().is_some_and(is_word_char);
        if prev_word && starts_word {
            body.push(' ');
        }
        prev_word = tok.chars().last().is_some_and(is_word_char);
        if w == 0.0 || max == 0.0 {
            body.push_str(&escape(tok));
            continue;
        }
        let (class, (r, g, b)) = if w > 0.0 { ("hl-pos", POSITIVE_RGB) } else { ("hl-neg", NEGATIVE_RGB) };
        let alpha = w.abs() / max;
        let _ = write!(
            body,
            "<span class=\"{class}\" data-weight=\"{w:.6}\" style=\"background-color: rgba({r}, {g}, {b}, {alpha:.3})\">{}</span>",
            escape(tok)
        );
    }
    format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Word contributions</title>\n<style>\n\
         .hl-pos {{ color: #000; border-radius: 2px; }}\n\
         .hl-neg {{ color: #000; border-radius: 2px; }}\n\
         </style>\n</head>\n<body>\n<p class=\"review\">{body}</p>\n</body>\n</html>\n"
    )
}
