//! Sentiment and competitor lexicons plus the term matcher they share.
//!
//! Matching runs over normalized text, scans left to right and takes the
//! longest term at each position; matches never overlap. A term edge made
//! of a word character must sit on a word boundary in the text, so `bad`
//! does not fire inside `badge`, while CJK terms match anywhere.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::text::{is_word_char, normalize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
struct TermMatcher {
    terms: Vec<Vec<char>>,
    by_first: HashMap<char, Vec<usize>>,
}

impl TermMatcher {
    fn new<'a>(terms: impl IntoIterator<Item = &'a str>) -> Self {
        let terms: Vec<Vec<char>> = terms.into_iter().map(|t| t.chars().collect()).collect();
        let mut by_first: HashMap<char, Vec<usize>> = HashMap::new();
        for (i, t) in terms.iter().enumerate() {
            by_first.entry(t[0]).or_default().push(i);
        }
        for ids in by_first.values_mut() {
            ids.sort_by(|&a, &b| terms[b].len().cmp(&terms[a].len()).then(a.cmp(&b)));
        }
        TermMatcher { terms, by_first }
    }

    /// Calls `hit(term_index)` once per non-overlapping match.
    fn scan(&self, text: &str, mut hit: impl FnMut(usize)) {
        if self.terms.is_empty() {
            return;
        }
        let chars: Vec<char> = normalize(text).chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let matched = self.by_first.get(&chars[i]).and_then(|ids| {
                ids.iter().copied().find(|&id| {
                    let t = &self.terms[id];
                    let end = i + t.len();
                    end <= chars.len()
                        && chars[i..end] == t[..]
                        && !(is_word_char(t[0]) && i > 0 && is_word_char(chars[i - 1]))
                        && !(is_word_char(t[t.len() - 1]) && end < chars.len() && is_word_char(chars[end]))
                })
            });
            match matched {
                Some(id) => {
                    hit(id);
                    i += self.terms[id].len();
                }
                None => i += 1,
            }
        }
    }
}

/// Term to signed polarity; negative terms are below zero.
#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    entries: BTreeMap<String, f64>,
    matcher: TermMatcher,
    polarity: Vec<f64>,
}

impl SentimentLexicon {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (term, pol) in entries {
            let term = normalize(term.trim());
            if term.is_empty() {
                return Err(Error::invalid("sentiment term is empty"));
            }
            if pol == 0.0 || !pol.is_finite() {
                return Err(Error::invalid(format!("term {term:?} has invalid polarity {pol}")));
            }
            map.insert(term, pol);
        }
        Ok(Self::from_map(map))
    }

    fn from_map(entries: BTreeMap<String, f64>) -> Self {
        let matcher = TermMatcher::new(entries.keys().map(String::as_str));
        let polarity = entries.values().copied().collect();
        SentimentLexicon { entries, matcher, polarity }
    }

    /// Reads `term<TAB>polarity` lines; `#` starts a comment line.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let (term, pol) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected term<TAB>polarity".into(),
            })?;
            let pol: f64 = pol.trim().parse().map_err(|_| Error::Parse {
                line: n + 1,
                message: format!("polarity {pol:?} is not a number"),
            })?;
            if pol == 0.0 || !pol.is_finite() || term.trim().is_empty() {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "terms must be nonempty with nonzero finite polarity".into(),
                });
            }
            entries.push((term.to_string(), pol));
        }
        Self::new(entries)
    }

    pub fn to_tsv(&self) -> String {
        self.entries.iter().map(|(t, p)| format!("{t}\t{p}\n")).collect()
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns `(positive, negative)` magnitudes summed over occurrences.
    pub fn intensity(&self, text: &str) -> (f64, f64) {
        let (mut pos, mut neg) = (0.0, 0.0);
        self.matcher.scan(text, |id| {
            let p = self.polarity[id];
            if p > 0.0 {
                pos += p;
            } else {
                neg -= p;
            }
        });
        (pos, neg)
    }
}

impl Serialize for SentimentLexicon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SentimentLexicon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = BTreeMap::<String, f64>::deserialize(d)?;
        SentimentLexicon::new(entries).map_err(serde::de::Error::custom)
    }
}

/// Normalized, deduplicated competitor business names.
#[derive(Debug, Clone, Default)]
pub struct CompetitorLexicon {
    names: BTreeSet<String>,
    matcher: TermMatcher,
}

impl CompetitorLexicon {
    pub fn new<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for name in names {
            let n = normalize(name.as_ref().trim());
            if n.is_empty() {
                return Err(Error::invalid("competitor name is empty"));
            }
            set.insert(n);
        }
        let matcher = TermMatcher::new(set.iter().map(String::as_str));
        Ok(CompetitorLexicon { names: set, matcher })
    }

    /// One name per line; blank lines and `#` comment lines are skipped.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut names = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            names.push(t.to_string());
        }
        Self::new(names)
    }

    pub fn names(&self) -> &BTreeSet<String> {
        &self.names
    }

    pub fn count_mentions(&self, text: &str) -> usize {
        let mut n = 0;
        self.matcher.scan(text, |_| n += 1);
        n
    }
}

impl Serialize for CompetitorLexicon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.names.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CompetitorLexicon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        CompetitorLexicon::new(names).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Lexicons {
    pub sentiment: SentimentLexicon,
    pub competitor: CompetitorLexicon,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(pairs: &[(&str, f64)]) -> SentimentLexicon {
        SentimentLexicon::new(pairs.iter().map(|(t, p)| (t.to_string(), *p))).unwrap()
    }

    #[test]
    fn intensity_sums_occurrences() {
        let l = lex(&[("terrible", -2.0), ("great", 1.0)]);
        assert_eq!(l.intensity("terrible terrible great"), (1.0, 4.0));
        assert_eq!(l.intensity(""), (0.0, 0.0));
        assert_eq!(l.intensity("the soup was fine"), (0.0, 0.0));
    }

    #[test]
    fn latin_terms_respect_word_boundaries_but_cjk_do_not() {
        let l = lex(&[("bad", -1.0), ("差", -1.5)]);
        assert_eq!(l.intensity("badge bad"), (0.0, 1.0));
        assert_eq!(l.intensity("服务很差很差"), (0.0, 3.0));
    }

    #[test]
    fn competitor_mentions_count_occurrences() {
        let c = CompetitorLexicon::new(["KFC"]).unwrap();
        assert_eq!(c.count_mentions("KFC is better, KFC!"), 2);
        assert_eq!(c.count_mentions("ｋｆｃ and kfc"), 2);
        assert_eq!(c.count_mentions("nothing here"), 0);
        assert_eq!(CompetitorLexicon::default().count_mentions("KFC"), 0);
    }

    #[test]
    fn overlapping_names_are_not_double_counted() {
        let c = CompetitorLexicon::new(["海底捞", "海底捞火锅", "底捞"]).unwrap();
        assert_eq!(c.count_mentions("海底捞火锅比这里好"), 1);
        assert_eq!(c.count_mentions("海底捞海底捞"), 2);
    }

    #[test]
    fn parse_sentiment_file() {
        let src = "# sample\nterrible\t-2\n\ngreat\t1.5\n";
        let l = SentimentLexicon::parse(src.as_bytes()).unwrap();
        assert_eq!(l.entries().len(), 2);
        assert_eq!(l.entries()["great"], 1.5);
        let err = SentimentLexicon::parse("meh\t0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(SentimentLexicon::parse("nopolarity\n".as_bytes()).is_err());
    }

    #[test]
    fn competitor_names_are_normalized_and_deduplicated() {
        let c = CompetitorLexicon::parse("KFC\nkfc\nＫＦＣ\n# comment\n\nBurger Barn\n".as_bytes()).unwrap();
        assert_eq!(c.names().len(), 2);
    }
}
