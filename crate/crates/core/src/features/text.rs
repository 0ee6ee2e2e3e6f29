//! Text segmentation and emoji counting shared by features and the encoder.
//!
//! A token is either a single CJK ideograph/kana character or a maximal run
//! of other word characters (alphanumeric or `_`). Everything else,
//! including punctuation, whitespace and emoji, separates tokens.

use std::sync::OnceLock;

/// Han ideographs (URO, extension A-I, compatibility) plus hiragana/katakana.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x31F0..=0x31FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F
        | 0x30000..=0x323AF)
}

fn is_word(c: char) -> bool {
    !is_cjk(c) && (c.is_alphanumeric() || c == '_')
}

/// Splits text into tokens, borrowing from the input.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word(c) {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = run_start.take() {
            tokens.push(&text[s..i]);
        }
        if is_cjk(c) {
            tokens.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = run_start {
        tokens.push(&text[s..]);
    }
    tokens
}

pub fn count_tokens(text: &str) -> usize {
    tokenize(text).len()
}

/// Joins tokens back into text that re-tokenizes to the same sequence.
///
/// Adjacent word-run tokens get a single space; CJK tokens are glued to
/// their neighbours.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev_word = false;
    for t in tokens {
        let t = t.as_ref();
        let starts_word = t.chars().next().is_some_and(is_word);
        if prev_word && starts_word {
            out.push(' ');
        }
        out.push_str(t);
        prev_word = t.chars().last().is_some_and(is_word);
    }
    out
}

static EMOJI_RANGES: OnceLock<Vec<(u32, u32)>> = OnceLock::new();

fn emoji_ranges() -> &'static [(u32, u32)] {
    EMOJI_RANGES.get_or_init(|| {
        include_str!("../../assets/emoji_ranges.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (a, b) = l.split_once("..").expect("emoji table line is a range");
                (
                    u32::from_str_radix(a, 16).expect("hex start"),
                    u32::from_str_radix(b, 16).expect("hex end"),
                )
            })
            .collect()
    })
}

/// True for code points carrying the Unicode `Emoji` property, ASCII excluded.
pub fn is_emoji(c: char) -> bool {
    let cp = c as u32;
    if cp < 0x80 {
        return false;
    }
    let ranges = emoji_ranges();
    match ranges.binary_search_by(|&(lo, _)| lo.cmp(&cp)) {
        Ok(_) => true,
        Err(0) => false,
        Err(i) => cp <= ranges[i - 1].1,
    }
}

pub fn count_emoji(text: &str) -> usize {
    text.chars().filter(|&c| is_emoji(c)).count()
}

/// Case and width folding used for lexicon matching: fullwidth ASCII forms
/// map to ASCII, the ideographic space to a space, then lowercase.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        let c = match c as u32 {
            0xFF01..=0xFF5E => char::from_u32(c as u32 - 0xFEE0).unwrap_or(c),
            0x3000 => ' ',
            _ => c,
        };
        out.extend(c.to_lowercase());
    }
    out
}

pub(crate) fn is_word_char(c: char) -> bool {
    is_word(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counts() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("good food"), 2);
        assert_eq!(count_tokens("服务很差 bad"), 5);
        assert_eq!(tokenize("很差"), vec!["很", "差"]);
        assert_eq!(tokenize("bad food"), vec!["bad", "food"]);
        assert_eq!(tokenize("wasn't  great!!"), vec!["wasn", "t", "great"]);
        assert_eq!(tokenize("很bad菜"), vec!["很", "bad", "菜"]);
    }

    #[test]
    fn emoji_counts() {
        assert_eq!(count_emoji(""), 0);
        assert_eq!(count_emoji("👍👍"), 2);
        assert_eq!(count_emoji("face:)"), 0);
        assert_eq!(count_emoji("table for 2 #1"), 0);
        assert_eq!(count_emoji("❤ ok"), 1);
    }

    #[test]
    fn emoji_are_not_tokens() {
        assert_eq!(tokenize("bad😡food"), vec!["bad", "food"]);
    }

    #[test]
    fn detokenize_round_trips() {
        let toks = vec!["很", "bad", "food", "菜", "x"];
        assert_eq!(detokenize(&toks), "很bad food菜x");
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }

    #[test]
    fn normalize_folds_width_and_case() {
        assert_eq!(normalize("ＫＦＣ Kfc"), "kfc kfc");
    }
}
