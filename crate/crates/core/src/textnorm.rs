//! Text normalization and character error rate for ASR scoring.
//!
//! References and hypotheses both pass through the same pipeline: map
//! traditional characters to simplified through a swappable table, drop
//! punctuation and whitespace, lowercase Latin, remove erhua, and split into
//! tokens (one token per CJK character, one per Latin/digit run). CER is the
//! token-level edit distance divided by the reference length, micro-averaged
//! over a corpus.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Reference traditional-to-simplified table shipped with the crate. The
/// mapping has variant ambiguities, so real evaluations may swap in their
/// own file; reports surface which table produced the numbers.
pub const DEFAULT_TRAD2SIMP: &str = include_str!("../data/trad2simp.tsv");

const ERHUA_CHAR: char = '儿';

/// Words that legitimately end in 儿 and must never lose it. Matched as a
/// suffix of the normalized text up to and including the 儿.
pub const DEFAULT_ERHUA_EXCEPTIONS: &[&str] = &[
    "女儿", "婴儿", "幼儿", "少儿", "育儿", "孤儿", "胎儿", "男儿", "健儿", "宠儿", "托儿",
];

#[derive(Debug, Clone)]
pub struct NormalizationConfig {
    table: HashMap<char, char>,
    pub erhua_enabled: bool,
    pub exceptions: Vec<String>,
    /// Recorded in report headers so scores can be traced to a table.
    pub table_id: String,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            table: parse_table(DEFAULT_TRAD2SIMP, Path::new("<builtin>"))
                .expect("builtin table is valid"),
            erhua_enabled: true,
            exceptions: DEFAULT_ERHUA_EXCEPTIONS.iter().map(|s| s.to_string()).collect(),
            table_id: "builtin".to_string(),
        }
    }
}

impl NormalizationConfig {
    /// Load a table file: one `traditional<TAB>simplified` pair per line,
    /// `#` comments allowed. Each side must be a single codepoint; duplicate
    /// sources and one-to-many targets are rejected.
    pub fn with_table_file(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(NormalizationConfig {
            table: parse_table(&content, path)?,
            erhua_enabled: true,
            exceptions: DEFAULT_ERHUA_EXCEPTIONS.iter().map(|s| s.to_string()).collect(),
            table_id: path.display().to_string(),
        })
    }

    pub fn without_erhua(mut self) -> Self {
        self.erhua_enabled = false;
        self
    }

    pub fn map_char(&self, c: char) -> char {
        *self.table.get(&c).unwrap_or(&c)
    }
}

fn parse_table(content: &str, path: &Path) -> Result<HashMap<char, char>> {
    let mut table = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: String| Error::MappingTable {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let (trad, simp) = line
            .split_once('\t')
            .ok_or_else(|| fail("expected two tab-separated fields".to_string()))?;
        let mut trad_chars = trad.chars();
        let mut simp_chars = simp.chars();
        let (trad_c, simp_c) = match (trad_chars.next(), simp_chars.next()) {
            (Some(t), Some(s)) => (t, s),
            _ => return Err(fail("empty field".to_string())),
        };
        if trad_chars.next().is_some() || simp_chars.next().is_some() {
            return Err(fail(format!(
                "mappings must be single codepoint to single codepoint, got `{trad}` -> `{simp}`"
            )));
        }
        if table.insert(trad_c, simp_c).is_some() {
            return Err(fail(format!("duplicate source codepoint `{trad_c}`")));
        }
    }
    Ok(table)
}

/// Tokens are single CJK codepoints or maximal runs of ASCII letters/digits;
/// concatenating them (separators ignored) reconstructs the normalized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    /// The normalized string: tokens joined by single spaces. Feeding this
    /// back through `normalize_text` yields the same sequence.
    pub fn render(&self) -> String {
        self.tokens.join(" ")
    }

    /// Token concatenation with no separators.
    pub fn concat(&self) -> String {
        self.tokens.concat()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF        // CJK Unified Ideographs
        | 0x3400..=0x4DBF      // Extension A
        | 0xF900..=0xFAFF      // Compatibility Ideographs
        | 0x20000..=0x2A6DF    // Extension B
    )
}

enum Item {
    Keep(char),
    Boundary,
}

/// Normalize a string into a token sequence: trad->simp mapping, punctuation
/// and whitespace stripped, Latin lowercased, erhua removed, then tokenized.
///
/// Erhua removal looks at the previous kept character (separators do not
/// shield a 儿 from removal): it is dropped when that character is a CJK
/// ideograph, unless the kept text up to and including the 儿 ends with an
/// exception word. Dropped characters still split Latin/digit runs, so
/// "hello world" stays two tokens. Normalizing a rendered sequence returns
/// the same sequence.
pub fn normalize_text(s: &str, cfg: &NormalizationConfig) -> TokenSequence {
    // map + classify in one pass; dropped characters leave a run boundary
    let mut items: Vec<Item> = Vec::with_capacity(s.len());
    for raw in s.chars() {
        let c = cfg.map_char(raw);
        if is_cjk(c) {
            items.push(Item::Keep(c));
        } else if c.is_ascii_alphanumeric() {
            items.push(Item::Keep(c.to_ascii_lowercase()));
        } else {
            items.push(Item::Boundary);
        }
    }

    // erhua removal against the kept characters seen so far
    let mut kept: Vec<char> = Vec::with_capacity(items.len());
    let mut cleaned: Vec<Item> = Vec::with_capacity(items.len());
    for item in items {
        match item {
            Item::Boundary => cleaned.push(Item::Boundary),
            Item::Keep(c) => {
                if cfg.erhua_enabled && c == ERHUA_CHAR {
                    if let Some(&prev) = kept.last() {
                        if is_cjk(prev) {
                            let keeps = cfg.exceptions.iter().any(|word| {
                                let w: Vec<char> = word.chars().collect();
                                match w.split_last() {
                                    Some((&last, body)) if last == ERHUA_CHAR => {
                                        kept.ends_with(body)
                                    }
                                    _ => false,
                                }
                            });
                            if !keeps {
                                continue;
                            }
                        }
                    }
                }
                kept.push(c);
                cleaned.push(Item::Keep(c));
            }
        }
    }

    // tokenize: CJK singletons; ASCII alphanumeric runs end at boundaries
    let mut tokens = Vec::new();
    let mut run = String::new();
    for item in cleaned {
        match item {
            Item::Keep(c) if is_cjk(c) => {
                if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
                tokens.push(c.to_string());
            }
            Item::Keep(c) => run.push(c),
            Item::Boundary => {
                if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
            }
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    TokenSequence { tokens }
}

/// Token-level Levenshtein distance with unit costs.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut curr = vec![0usize; m + 1];
    for i in 1..=n {
        curr[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// Character error rate: edit distance over tokens divided by the reference
/// length. Exceeds 1.0 when the hypothesis is much longer than the
/// reference; undefined (an error) for an empty reference.
pub fn cer(reference: &TokenSequence, hypothesis: &TokenSequence) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(edit_distance(&reference.tokens, &hypothesis.tokens) as f64 / reference.len() as f64)
}

#[derive(Debug, Clone)]
pub struct UtteranceCer {
    pub index: usize,
    pub distance: usize,
    pub ref_tokens: usize,
    /// None when this reference normalizes to nothing.
    pub cer: Option<f64>,
}

/// Corpus-level CER: both sides normalized, pairing by index, overall score
/// is total edit distance over total reference tokens (micro-average).
pub fn corpus_cer(
    refs: &[String],
    hyps: &[String],
    cfg: &NormalizationConfig,
) -> Result<(f64, Vec<UtteranceCer>)> {
    if refs.len() != hyps.len() {
        return Err(Error::LengthMismatch {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    let mut total_distance = 0usize;
    let mut total_ref = 0usize;
    let mut per_utterance = Vec::with_capacity(refs.len());
    for (index, (r, h)) in refs.iter().zip(hyps).enumerate() {
        let r_tokens = normalize_text(r, cfg);
        let h_tokens = normalize_text(h, cfg);
        let distance = edit_distance(&r_tokens.tokens, &h_tokens.tokens);
        total_distance += distance;
        total_ref += r_tokens.len();
        per_utterance.push(UtteranceCer {
            index,
            distance,
            ref_tokens: r_tokens.len(),
            cer: (!r_tokens.is_empty()).then(|| distance as f64 / r_tokens.len() as f64),
        });
    }
    if total_ref == 0 {
        return Err(Error::EmptyReference);
    }
    Ok((total_distance as f64 / total_ref as f64, per_utterance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn norm(s: &str) -> TokenSequence {
        normalize_text(s, &NormalizationConfig::default())
    }

    #[test]
    fn traditional_thanks_becomes_simplified_tokens() {
        assert_eq!(norm("謝謝").tokens, toks(&["谢", "谢"]));
    }

    #[test]
    fn erhua_is_stripped_after_cjk() {
        assert_eq!(norm("花儿").tokens, toks(&["花"]));
        // traditional erhua maps to 儿 first, then strips
        assert_eq!(norm("花兒").tokens, toks(&["花"]));
        // sentence-initial 儿 is untouched
        assert_eq!(norm("儿子").tokens, toks(&["儿", "子"]));
    }

    #[test]
    fn erhua_exceptions_survive() {
        assert_eq!(norm("女儿").tokens, toks(&["女", "儿"]));
        assert_eq!(norm("婴儿").tokens, toks(&["婴", "儿"]));
        // and the exception applies mid-sentence
        assert_eq!(norm("我女儿好").tokens, toks(&["我", "女", "儿", "好"]));
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(norm("").tokens.is_empty());
        assert!(norm(" ，。！ ").tokens.is_empty());
    }

    #[test]
    fn punctuation_stripped_latin_lowercased_runs_joined() {
        assert_eq!(
            norm("他说：Hello World 123！").tokens,
            toks(&["他", "说", "hello", "world", "123"])
        );
        // a Latin/digit run is one token
        assert_eq!(norm("GPT4很好").tokens, toks(&["gpt4", "很", "好"]));
    }

    #[test]
    fn normalization_is_idempotent_on_its_own_output() {
        let cfg = NormalizationConfig::default();
        let cases = [
            "謝謝你",
            "花儿，和 flower33 一起",
            "我女儿的鸟儿",
            "ABC，，def。。9",
            "門口有兩隻鳥儿",
            "hello world 你好",
        ];
        for case in cases {
            let once = normalize_text(case, &cfg);
            let twice = normalize_text(&once.render(), &cfg);
            assert_eq!(once, twice, "case {case}");
        }
    }

    #[test]
    fn table_rejects_one_to_many() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "臺\t台湾\n").unwrap();
        let err = NormalizationConfig::with_table_file(&path).unwrap_err();
        assert!(matches!(err, Error::MappingTable { line: 1, .. }));
    }

    #[test]
    fn table_rejects_duplicate_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.tsv");
        std::fs::write(&path, "謝\t谢\n謝\t射\n").unwrap();
        let err = NormalizationConfig::with_table_file(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate source"));
    }

    #[test]
    fn cer_basics() {
        let a = TokenSequence { tokens: toks(&["a", "b", "c"]) };
        assert_eq!(cer(&a, &a).unwrap(), 0.0);
        let b = TokenSequence { tokens: toks(&["a", "b", "d"]) };
        assert!((cer(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // disjoint, longer hypothesis: 3 subs + 4 inserts over 3 refs
        let c = TokenSequence { tokens: toks(&["x", "y", "z", "w", "v", "u", "t"]) };
        assert!((cer(&a, &c).unwrap() - 7.0 / 3.0).abs() < 1e-15);
        let empty = TokenSequence { tokens: vec![] };
        assert!(matches!(cer(&empty, &a), Err(Error::EmptyReference)));
    }

    #[test]
    fn corpus_cer_micro_average() {
        let cfg = NormalizationConfig::default();
        // distances 1 and 2 against reference lengths 4 and 6 -> 3/10
        let refs = vec!["甲乙丙丁".to_string(), "一二三四五六".to_string()];
        let hyps = vec!["甲乙丙戊".to_string(), "一二三四九十".to_string()];
        let (overall, per) = corpus_cer(&refs, &hyps, &cfg).unwrap();
        assert!((overall - 0.30).abs() < 1e-12, "{overall}");
        assert_eq!(per[0].distance, 1);
        assert_eq!(per[1].distance, 2);

        let (zero, _) = corpus_cer(&refs, &refs.clone(), &cfg).unwrap();
        assert_eq!(zero, 0.0);

        let err = corpus_cer(&refs, &hyps[..1], &cfg).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { refs: 2, hyps: 1 }));
    }

    #[test]
    fn equal_normalizations_contribute_zero() {
        let cfg = NormalizationConfig::default();
        // traditional vs simplified spelling of the same sentence
        let refs = vec!["謝謝你".to_string()];
        let hyps = vec!["谢谢你！".to_string()];
        let (overall, _) = corpus_cer(&refs, &hyps, &cfg).unwrap();
        assert_eq!(overall, 0.0);
    }

    // brute-force reference for the DP, over tiny sequences
    fn edit_distance_recursive(a: &[String], b: &[String]) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let cost = usize::from(a[0] != b[0]);
        (edit_distance_recursive(&a[1..], b) + 1)
            .min(edit_distance_recursive(a, &b[1..]) + 1)
            .min(edit_distance_recursive(&a[1..], &b[1..]) + cost)
    }

    fn random_tokens(state: &mut u64, max_len: usize, alphabet: usize) -> Vec<String> {
        let mut next = || {
            *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (*state >> 33) as usize
        };
        let len = next() % (max_len + 1);
        (0..len)
            .map(|_| char::from(b'a' + (next() % alphabet) as u8).to_string())
            .collect()
    }

    #[test]
    fn dp_matches_exhaustive_recursion() {
        let mut state = 0xfeed_beefu64;
        for _ in 0..200 {
            let a = random_tokens(&mut state, 8, 3);
            let b = random_tokens(&mut state, 8, 3);
            assert_eq!(
                edit_distance(&a, &b),
                edit_distance_recursive(&a, &b),
                "a={a:?} b={b:?}"
            );
        }
    }

    #[test]
    fn edit_distance_is_a_metric() {
        let mut state = 0x1234_5678u64;
        for _ in 0..200 {
            let a = random_tokens(&mut state, 6, 2);
            let b = random_tokens(&mut state, 6, 2);
            let c = random_tokens(&mut state, 6, 2);
            assert_eq!(edit_distance(&a, &a), 0);
            assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }
    }
}
