//! Toy tokenizer, vocabulary and the two prompt formats.
//!
//! Text is lowercased and split into runs of alphanumeric characters, with
//! every other non-whitespace character as its own word. Frequent words are
//! whole tokens; rare words are cut into fixed-length character pieces, the
//! non-initial ones carrying a `##` prefix in the vocabulary.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::labels::EmotionSet;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

pub const CONTINUATION: &str = "##";

/// Literal prefix of a mask-prompt input.
pub const MEMO_PREFIX: &str = "emotion [MASK] in tweet ";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("a prompt needs at least 2 emotions, got {0}")]
    TooFewEmotions(usize),
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
}

pub type Result<T, E = TextError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VocabConfig {
    /// Characters per piece for words that are not whole tokens.
    pub max_piece_length: usize,
    /// Minimum corpus frequency for a word to become a whole token.
    pub min_word_count: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            max_piece_length: 4,
            min_word_count: 2,
        }
    }
}

/// Lowercases and splits into words and single punctuation characters.
pub fn split_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() || ch == '_' {
            current.push(ch);
            continue;
        }
        if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        if !ch.is_whitespace() {
            words.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Cuts a word into consecutive chunks of at most `max_len` characters.
pub fn split_pieces(word: &str, max_len: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .chunks(max_len.max(1))
        .map(|c| c.iter().collect())
        .collect()
}

/// `"e1, e2, ..., or en?"`.
pub fn build_demux_prompt(set: &EmotionSet) -> Result<String> {
    let names = set.names();
    if names.len() < 2 {
        return Err(TextError::TooFewEmotions(names.len()));
    }
    let (last, rest) = names.split_last().expect("non-empty");
    Ok(format!("{}, or {last}?", rest.join(", ")))
}

/// Prepends the mask prompt verbatim.
pub fn build_memo_prompt(text: &str) -> String {
    format!("{MEMO_PREFIX}{text}")
}

/// Token strings with implicit ids given by position.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_piece_length: usize,
}

impl Vocabulary {
    /// Builds with the default frequency threshold.
    pub fn build(corpus: &[&str], set: &EmotionSet, max_piece_length: usize) -> Self {
        Self::build_with(
            corpus,
            set,
            VocabConfig {
                max_piece_length,
                ..VocabConfig::default()
            },
        )
    }

    pub fn build_with(corpus: &[&str], set: &EmotionSet, config: VocabConfig) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            for w in split_words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
            max_piece_length: config.max_piece_length.max(1),
        };
        for s in SPECIALS {
            vocab.insert(s);
        }
        // prompt words and emotion names are always whole tokens
        let mut forced: Vec<String> = split_words(&build_demux_prompt(set).unwrap_or_default());
        forced.extend(split_words(&MEMO_PREFIX.replace(MASK, " ")));
        for name in set.names() {
            forced.extend(split_words(name));
        }
        for w in &forced {
            vocab.insert(w);
        }
        let mut frequent: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= config.min_word_count)
            .map(|(w, &c)| (w, c))
            .collect();
        frequent.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (w, _) in &frequent {
            vocab.insert(w);
        }
        let mut pieces = std::collections::BTreeSet::new();
        for w in counts.keys() {
            if vocab.index.contains_key(w) {
                continue;
            }
            for (k, p) in split_pieces(w, vocab.max_piece_length).into_iter().enumerate() {
                pieces.insert(if k == 0 { p } else { format!("{CONTINUATION}{p}") });
            }
        }
        for p in &pieces {
            vocab.insert(p);
        }
        vocab
    }

    fn insert(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len() as u32);
            self.tokens.push(token.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_piece_length(&self) -> usize {
        self.max_piece_length
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Id of a single-token emotion name, if it has one.
    pub fn whole_word_id(&self, name: &str) -> Option<u32> {
        match split_words(name).as_slice() {
            [w] if w == name => self.id(w),
            _ => None,
        }
    }

    /// Pieces a word maps to, as vocabulary strings.
    pub fn word_pieces(&self, word: &str) -> Vec<String> {
        if self.index.contains_key(word) {
            return vec![word.to_string()];
        }
        split_pieces(word, self.max_piece_length)
            .into_iter()
            .enumerate()
            .map(|(k, p)| if k == 0 { p } else { format!("{CONTINUATION}{p}") })
            .collect()
    }

    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        self.word_pieces(word)
            .iter()
            .map(|p| self.id(p).unwrap_or(UNK_ID))
            .collect()
    }

    /// Tokenizes free text. Special markers in the text are not recognised.
    pub fn tokenize_text(&self, text: &str) -> Vec<u32> {
        split_words(text)
            .iter()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }

    /// One token per line, id order implicit.
    pub fn to_text(&self) -> String {
        let mut out = format!("#max_piece_length={}\n", self.max_piece_length);
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| TextError::Vocabulary("empty vocabulary file".into()))?;
        let max_piece_length = header
            .strip_prefix("#max_piece_length=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| TextError::Vocabulary(format!("bad header {header:?}")))?;
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
            max_piece_length,
        };
        for line in lines {
            if vocab.index.contains_key(line) {
                return Err(TextError::Vocabulary(format!("duplicate token {line:?}")));
            }
            vocab.insert(line);
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if vocab.tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(TextError::Vocabulary(format!("reserved token {s} missing at id {i}")));
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TextError::Vocabulary(e.to_string()))?;
        Self::from_text(&text)
    }
}

/// Token ids plus the bookkeeping each formulation needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// `(start, len)` of each emotion's subtokens, Demux only.
    pub emotion_spans: Vec<(usize, usize)>,
    /// Index of the single mask marker, mask prompt only.
    pub mask_position: Option<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Pre-tokenized emotion prompt `[CLS] e1 , e2 , ... , or en ? [SEP]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemuxPrompt {
    ids: Vec<u32>,
    spans: Vec<(usize, usize)>,
}

impl DemuxPrompt {
    pub fn new(vocab: &Vocabulary, set: &EmotionSet) -> Result<Self> {
        let n = set.len();
        if n < 2 {
            return Err(TextError::TooFewEmotions(n));
        }
        let word = |w: &str| vocab.tokenize_word(w);
        let mut ids = vec![CLS_ID];
        let mut spans = Vec::with_capacity(n);
        for (i, name) in set.names().iter().enumerate() {
            let start = ids.len();
            for w in split_words(name) {
                ids.extend(word(&w));
            }
            spans.push((start, ids.len() - start));
            if i + 1 < n {
                ids.extend(word(","));
            }
            if i + 2 == n {
                ids.extend(word("or"));
            }
        }
        ids.extend(word("?"));
        ids.push(SEP_ID);
        Ok(Self { ids, spans })
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    /// `[CLS] prompt [SEP] text [SEP]`.
    pub fn encode(&self, vocab: &Vocabulary, text: &str) -> TokenSequence {
        let mut ids = self.ids.clone();
        ids.extend(vocab.tokenize_text(text));
        ids.push(SEP_ID);
        TokenSequence {
            ids,
            emotion_spans: self.spans.clone(),
            mask_position: None,
        }
    }
}

/// `[CLS] emotion [MASK] in tweet text [SEP]`.
pub fn encode_memo(vocab: &Vocabulary, text: &str) -> TokenSequence {
    let prompt = build_memo_prompt(text);
    let (head, tail) = prompt.split_at(MEMO_PREFIX.len());
    let mut ids = vec![CLS_ID];
    let mut mask_position = None;
    for (k, part) in head.split(MASK).enumerate() {
        if k > 0 {
            mask_position = Some(ids.len());
            ids.push(MASK_ID);
        }
        ids.extend(vocab.tokenize_text(part));
    }
    ids.extend(vocab.tokenize_text(tail));
    ids.push(SEP_ID);
    TokenSequence {
        ids,
        emotion_spans: Vec::new(),
        mask_position,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        let corpus = ["joy joy is here", "what a joy", "pure fear and joy"];
        Vocabulary::build(&corpus, &EmotionSet::semeval(), 4)
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = vocab();
        assert_eq!(v.id(PAD), Some(PAD_ID));
        assert_eq!(v.id(UNK), Some(UNK_ID));
        assert_eq!(v.id(CLS), Some(CLS_ID));
        assert_eq!(v.id(SEP), Some(SEP_ID));
        assert_eq!(v.id(MASK), Some(MASK_ID));
    }

    #[test]
    fn emotion_names_are_whole_tokens() {
        let v = vocab();
        assert_eq!(v.tokenize_text("joy").len(), 1);
        for name in EmotionSet::semeval().names() {
            let id = v.whole_word_id(name).expect("forced entry");
            assert_ne!(id, UNK_ID);
        }
    }

    #[test]
    fn rare_word_is_chunked() {
        assert_eq!(split_pieces("optimisms", 4), vec!["opti", "mism", "s"]);
        let v = Vocabulary::build(&["optimisms once"], &EmotionSet::semeval(), 4);
        assert_eq!(v.word_pieces("optimisms"), vec!["opti", "##mism", "##s"]);
        let ids = v.tokenize_text("optimisms");
        assert_eq!(ids.len(), 3);
        assert!(ids.iter().all(|&i| i != UNK_ID));
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(vocab().tokenize_text("").is_empty());
    }

    #[test]
    fn word_split_rules() {
        assert_eq!(
            split_words("I can't STOP smiling!!"),
            vec!["i", "can", "'", "t", "stop", "smiling", "!", "!"]
        );
    }

    #[test]
    fn demux_prompt_strings() {
        assert_eq!(
            build_demux_prompt(&EmotionSet::semeval()).unwrap(),
            "anger, anticipation, disgust, fear, joy, love, optimism, pessimism, sadness, surprise, or trust?"
        );
        let two = EmotionSet::new(["anger", "joy"]).unwrap();
        assert_eq!(build_demux_prompt(&two).unwrap(), "anger, or joy?");
    }

    #[test]
    fn memo_prompt_strings() {
        assert_eq!(
            build_memo_prompt("I can't stop smiling"),
            "emotion [MASK] in tweet I can't stop smiling"
        );
        assert_eq!(build_memo_prompt(""), "emotion [MASK] in tweet ");
        assert_eq!(
            build_memo_prompt("my tweet"),
            "emotion [MASK] in tweet my tweet"
        );
    }

    #[test]
    fn demux_prompt_tokens_match_prompt_text() {
        let v = vocab();
        let set = EmotionSet::semeval();
        let p = DemuxPrompt::new(&v, &set).unwrap();
        let seq = p.encode(&v, "so happy");
        let mut expected = vec![CLS_ID];
        expected.extend(v.tokenize_text(&build_demux_prompt(&set).unwrap()));
        expected.push(SEP_ID);
        expected.extend(v.tokenize_text("so happy"));
        expected.push(SEP_ID);
        assert_eq!(seq.ids, expected);
        assert_eq!(seq.ids[0], CLS_ID);
        assert_eq!(seq.ids.iter().filter(|&&i| i == SEP_ID).count(), 2);
        assert_eq!(seq.emotion_spans.len(), 11);
        for (i, &(s, l)) in seq.emotion_spans.iter().enumerate() {
            assert_eq!(l, 1);
            assert_eq!(v.token(seq.ids[s]), Some(set.name(i)));
        }
    }

    #[test]
    fn multiword_emotion_spans() {
        let set = EmotionSet::new(["deep sorrow", "joy", "mild fear"]).unwrap();
        let v = Vocabulary::build(&["text"], &set, 4);
        let p = DemuxPrompt::new(&v, &set).unwrap();
        assert_eq!(p.spans(), &[(1, 2), (4, 1), (7, 2)]);
        assert!(v.whole_word_id("deep sorrow").is_none());
        assert!(v.whole_word_id("joy").is_some());
    }

    #[test]
    fn memo_sequence_has_one_mask() {
        let v = vocab();
        let seq = encode_memo(&v, "what [MASK] a joy [mask]");
        assert_eq!(seq.ids.iter().filter(|&&i| i == MASK_ID).count(), 1);
        assert_eq!(seq.mask_position, Some(2));
        assert_eq!(seq.ids[seq.mask_position.unwrap()], MASK_ID);
        assert_eq!(seq.ids[0], CLS_ID);
        assert_eq!(*seq.ids.last().unwrap(), SEP_ID);
    }

    #[test]
    fn vocabulary_text_round_trip() {
        let v = vocab();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::from_text("#max_piece_length=4\n[PAD]\n").is_err());
    }
}
