//! Base text vocabulary plus the per-grid dynamic VRT token extension, and
//! the encoding of MM-CoT samples into token-id sequences with loss-region
//! masks for the textual and VRT objectives.
//!
//! Tokenization is deliberately word-level: tokens are whitespace-delimited
//! words, with two punctuation specials — a newline token and a trailing
//! comma token — so the serialized sample format survives a decode/encode
//! round trip byte-for-byte. Token id of `<vrt_i>` is `base_size + i`, a
//! fixed bijection between grid cells and dynamic ids.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::format::{self, MMCoTSample};
use crate::geometry::PatchGrid;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";
pub const NEWLINE_TOKEN: &str = "\n";
pub const COMMA_TOKEN: &str = ",";

/// Fixed specials: markers, joiners, and the six structural tags. They occupy
/// ids `0..SPECIAL_TOKENS.len()` in every vocabulary and are never split.
pub const SPECIAL_TOKENS: [&str; 11] = [
    BOS_TOKEN,
    EOS_TOKEN,
    UNK_TOKEN,
    NEWLINE_TOKEN,
    COMMA_TOKEN,
    "<loc>",
    "</loc>",
    "<think>",
    "</think>",
    "<answer>",
    "</answer>",
];

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const NEWLINE_ID: u32 = 3;
pub const COMMA_ID: u32 = 4;

/// Ids of the special tokens, for consumers that steer decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub bos: u32,
    pub eos: u32,
    pub unk: u32,
    pub newline: u32,
    pub comma: u32,
    pub loc_open: u32,
    pub loc_close: u32,
    pub think_open: u32,
    pub think_close: u32,
    pub answer_open: u32,
    pub answer_close: u32,
}

pub const SPECIAL_IDS: SpecialIds = SpecialIds {
    bos: 0,
    eos: 1,
    unk: 2,
    newline: 3,
    comma: 4,
    loc_open: 5,
    loc_close: 6,
    think_open: 7,
    think_close: 8,
    answer_open: 9,
    answer_close: 10,
};

/// Vocabulary errors.
#[derive(Debug, Clone, PartialEq)]
pub enum VocabError {
    EmptyCorpus,
    /// `<vrt_i>` with `i` at or beyond the grid capacity.
    VrtIndexOutOfRange { index: u32, capacity: u32 },
    /// Token id at or beyond `total_size`.
    IdOutOfRange { id: u32, total_size: u32 },
    /// Persisted token list does not start with the fixed specials.
    BadSpecials { position: usize },
    /// Persisted token list contains a duplicate.
    DuplicateToken { token: String },
}

impl core::fmt::Display for VocabError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            VocabError::EmptyCorpus => write!(f, "cannot build a vocabulary from an empty corpus"),
            VocabError::VrtIndexOutOfRange { index, capacity } => {
                write!(f, "VRT index {index} out of range for capacity {capacity}")
            }
            VocabError::IdOutOfRange { id, total_size } => {
                write!(f, "token id {id} out of range for vocabulary of {total_size}")
            }
            VocabError::BadSpecials { position } => {
                write!(f, "persisted vocabulary is missing special token at position {position}")
            }
            VocabError::DuplicateToken { token } => {
                write!(f, "persisted vocabulary repeats token '{token}'")
            }
        }
    }
}

impl core::error::Error for VocabError {}

/// Splits text into word-level tokens. Whitespace separates tokens; each
/// newline becomes its own token; trailing commas split off as comma tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            tokens.push(NEWLINE_TOKEN);
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let word = &text[start..i];
        let trimmed = word.trim_end_matches(',');
        let commas = word.len() - trimmed.len();
        if !trimmed.is_empty() {
            tokens.push(trimmed);
        }
        // One comma token per stripped trailing comma.
        tokens.extend(core::iter::repeat_n(COMMA_TOKEN, commas));
    }
    tokens
}

/// Joins tokens back into text: single spaces between words, commas glued to
/// the previous token, newlines glued on both sides. Inverse of [`tokenize`]
/// on whitespace-canonical text, which includes every serialized sample.
pub fn detokenize<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> String {
    let mut out = String::new();
    for token in tokens {
        match token {
            NEWLINE_TOKEN => out.push('\n'),
            COMMA_TOKEN => out.push(','),
            _ => {
                if !out.is_empty() && !out.ends_with('\n') {
                    out.push(' ');
                }
                out.push_str(token);
            }
        }
    }
    out
}

/// Base text vocabulary with stable ids plus the dynamic VRT id range.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    base_tokens: Vec<String>,
    lookup: BTreeMap<String, u32>,
    vrt_capacity: u32,
}

impl Vocabulary {
    /// Builds the vocabulary from corpus texts: specials first, then corpus
    /// words ordered by descending frequency with lexicographic tie-break.
    /// VRT-shaped tokens in the corpus map to the dynamic range and never
    /// enter the base list.
    pub fn build<'a, I>(corpus_texts: I, grid: &PatchGrid) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut any = false;
        for text in corpus_texts {
            any = true;
            for token in tokenize(text) {
                if SPECIAL_TOKENS.contains(&token) || format::parse_vrt_token(token).is_some() {
                    continue;
                }
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(VocabError::EmptyCorpus);
        }
        let mut words: Vec<(&str, u64)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut base_tokens: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        base_tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
        Self::from_parts(base_tokens, grid.num_patches())
    }

    /// Reconstructs a vocabulary from a persisted token list.
    pub fn from_parts(base_tokens: Vec<String>, vrt_capacity: u32) -> Result<Self, VocabError> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if base_tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(VocabError::BadSpecials { position: i });
            }
        }
        let mut lookup = BTreeMap::new();
        for (id, token) in base_tokens.iter().enumerate() {
            if lookup.insert(token.clone(), id as u32).is_some() {
                return Err(VocabError::DuplicateToken { token: token.clone() });
            }
        }
        Ok(Vocabulary {
            base_tokens,
            lookup,
            vrt_capacity,
        })
    }

    pub fn base_size(&self) -> u32 {
        self.base_tokens.len() as u32
    }

    pub fn vrt_capacity(&self) -> u32 {
        self.vrt_capacity
    }

    pub fn total_size(&self) -> u32 {
        self.base_size() + self.vrt_capacity
    }

    pub fn base_tokens(&self) -> &[String] {
        &self.base_tokens
    }

    pub fn special_ids(&self) -> SpecialIds {
        SPECIAL_IDS
    }

    /// Id for one token string: base lookup, then the VRT bijection, then the
    /// unknown id. VRT tokens beyond capacity are errors, not unknowns.
    pub fn id_of(&self, token: &str) -> Result<u32, VocabError> {
        if let Some(id) = self.lookup.get(token) {
            return Ok(*id);
        }
        if let Some(index) = format::parse_vrt_token(token) {
            if index >= self.vrt_capacity {
                return Err(VocabError::VrtIndexOutOfRange {
                    index,
                    capacity: self.vrt_capacity,
                });
            }
            return Ok(self.base_size() + index);
        }
        Ok(UNK_ID)
    }

    /// Surface form of one token id; VRT ids render as `<vrt_i>`.
    pub fn token_of(&self, id: u32) -> Result<String, VocabError> {
        if let Some(token) = self.base_tokens.get(id as usize) {
            return Ok(token.clone());
        }
        if id < self.total_size() {
            return Ok(format::vrt_token(id - self.base_size()));
        }
        Err(VocabError::IdOutOfRange {
            id,
            total_size: self.total_size(),
        })
    }

    pub fn is_vrt_id(&self, id: u32) -> bool {
        id >= self.base_size() && id < self.total_size()
    }
}

/// Token-id sequence for one sample plus the loss-region masks.
///
/// A `true` at position `p` marks the token at `p` as a supervision target
/// of that objective (predicted from the logits at `p - 1`). The masks are
/// disjoint; the conditioning prefix (begin marker plus `prompt_length`
/// query tokens) carries no loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub token_ids: Vec<u32>,
    pub text_loss_mask: Vec<bool>,
    pub vrt_loss_mask: Vec<bool>,
    /// Number of query tokens between the begin marker and the sample body.
    pub prompt_length: usize,
}

impl EncodedSample {
    /// The generation prompt: begin marker plus query tokens.
    pub fn prompt_ids(&self) -> &[u32] {
        &self.token_ids[..self.prompt_length + 1]
    }

    /// The supervised remainder: sample body plus end marker.
    pub fn target_ids(&self) -> &[u32] {
        &self.token_ids[self.prompt_length + 1..]
    }
}

/// Encodes a sample as `[<bos>, query tokens, body tokens, <eos>]` with the
/// two loss masks. `query_prefix` is prepended to the sample's own query to
/// form the conditioning text; unknown words map to the unknown id.
pub fn encode(
    sample: &MMCoTSample,
    vocab: &Vocabulary,
    query_prefix: &str,
) -> Result<EncodedSample, VocabError> {
    let prompt_text = if query_prefix.is_empty() {
        sample.query().to_string()
    } else {
        let mut t = query_prefix.to_string();
        t.push(' ');
        t.push_str(sample.query());
        t
    };
    encode_text(&prompt_text, &sample.serialize(), vocab)
}

/// Encodes the plain-CoT variant of a sample (no grounding block, so the VRT
/// mask is all false).
pub fn encode_plain_cot(
    sample: &MMCoTSample,
    vocab: &Vocabulary,
    query_prefix: &str,
) -> Result<EncodedSample, VocabError> {
    let prompt_text = if query_prefix.is_empty() {
        sample.query().to_string()
    } else {
        let mut t = query_prefix.to_string();
        t.push(' ');
        t.push_str(sample.query());
        t
    };
    encode_text(&prompt_text, &sample.strip_to_plain_cot(), vocab)
}

fn encode_text(
    prompt_text: &str,
    body_text: &str,
    vocab: &Vocabulary,
) -> Result<EncodedSample, VocabError> {
    let prompt_tokens = tokenize(prompt_text);
    let body_tokens = tokenize(body_text);
    let prompt_length = prompt_tokens.len();
    let total = prompt_length + body_tokens.len() + 2;

    let mut token_ids = Vec::with_capacity(total);
    token_ids.push(BOS_ID);
    for t in &prompt_tokens {
        token_ids.push(vocab.id_of(t)?);
    }
    for t in &body_tokens {
        token_ids.push(vocab.id_of(t)?);
    }
    token_ids.push(EOS_ID);

    let mut text_loss_mask = alloc::vec![false; total];
    let mut vrt_loss_mask = alloc::vec![false; total];
    for p in prompt_length + 1..total {
        if vocab.is_vrt_id(token_ids[p]) {
            vrt_loss_mask[p] = true;
        } else {
            text_loss_mask[p] = true;
        }
    }
    Ok(EncodedSample {
        token_ids,
        text_loss_mask,
        vrt_loss_mask,
        prompt_length,
    })
}

/// Renders token ids back to text. Fails on ids outside the vocabulary.
pub fn decode(token_ids: &[u32], vocab: &Vocabulary) -> Result<String, VocabError> {
    let mut tokens = Vec::with_capacity(token_ids.len());
    for id in token_ids {
        tokens.push(vocab.token_of(*id)?);
    }
    Ok(detokenize(tokens.iter().map(String::as_str)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{MMCoTSample, ObjectGrounding, TaskKind};
    use crate::geometry::OrderedVrtSequence;
    use alloc::vec;

    fn grid_8x8() -> PatchGrid {
        PatchGrid::new(224, 224, 28).unwrap()
    }

    fn seq(indices: &[u32]) -> OrderedVrtSequence {
        OrderedVrtSequence::from_ascending(indices.to_vec()).unwrap()
    }

    fn sample() -> MMCoTSample {
        MMCoTSample::new(
            "s1".into(),
            "img-001".into(),
            "where is the red car".into(),
            TaskKind::Pixel,
            vec![ObjectGrounding::new("the red car".into(), seq(&[0, 1, 8, 9])).unwrap()],
            "the car sits near the top left".into(),
            "(42, 42)".into(),
        )
        .unwrap()
    }

    fn vocab_for(samples: &[MMCoTSample]) -> Vocabulary {
        let mut texts = Vec::new();
        for s in samples {
            texts.push(s.query().to_string());
            texts.push(s.serialize());
        }
        Vocabulary::build(texts.iter().map(String::as_str), &grid_8x8()).unwrap()
    }

    #[test]
    fn tokenize_splits_words_newlines_and_commas() {
        assert_eq!(
            tokenize("a b,\ncc, d"),
            vec!["a", "b", ",", "\n", "cc", ",", "d"]
        );
        assert_eq!(tokenize("<vrt_0>, <vrt_1>"), vec!["<vrt_0>", ",", "<vrt_1>"]);
        assert_eq!(tokenize(""), Vec::<&str>::new());
        assert_eq!(tokenize("  \n "), vec!["\n"]);
    }

    #[test]
    fn detokenize_inverts_tokenize_on_canonical_text() {
        let s = sample().serialize();
        assert_eq!(detokenize(tokenize(&s)), s);
        let plain = "a b, c\nnext line";
        assert_eq!(detokenize(tokenize(plain)), plain);
    }

    #[test]
    fn frequency_then_lexicographic_ids() {
        let grid = grid_8x8();
        let v = Vocabulary::build(["a b", "b c"], &grid).unwrap();
        let n = SPECIAL_TOKENS.len() as u32;
        assert_eq!(v.id_of("b").unwrap(), n);
        assert_eq!(v.id_of("a").unwrap(), n + 1);
        assert_eq!(v.id_of("c").unwrap(), n + 2);
        assert_eq!(v.base_size(), n + 3);
    }

    #[test]
    fn vrt_ids_form_a_bijection_with_grid_cells() {
        let v = Vocabulary::build(["x"], &grid_8x8()).unwrap();
        assert_eq!(v.vrt_capacity(), 64);
        assert_eq!(v.id_of("<vrt_0>").unwrap(), v.base_size());
        for i in 0..64 {
            let id = v.id_of(&format::vrt_token(i)).unwrap();
            assert_eq!(id, v.base_size() + i);
            assert_eq!(v.token_of(id).unwrap(), format::vrt_token(i));
        }
        assert!(matches!(
            v.id_of("<vrt_64>"),
            Err(VocabError::VrtIndexOutOfRange { index: 64, capacity: 64 })
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let grid = grid_8x8();
        let a = Vocabulary::build(["the car the van", "a car"], &grid).unwrap();
        let b = Vocabulary::build(["the car the van", "a car"], &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let grid = grid_8x8();
        assert_eq!(
            Vocabulary::build(core::iter::empty(), &grid).unwrap_err(),
            VocabError::EmptyCorpus
        );
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = Vocabulary::build(["known words"], &grid_8x8()).unwrap();
        assert_eq!(v.id_of("unseen").unwrap(), UNK_ID);
    }

    #[test]
    fn encode_masks_are_disjoint_and_cover_the_body() {
        let s = sample();
        let v = vocab_for(core::slice::from_ref(&s));
        let enc = encode(&s, &v, "").unwrap();

        let k: usize = enc.vrt_loss_mask.iter().map(|b| *b as usize).sum();
        assert_eq!(k, 4, "one VRT-loss position per grounded VRT");

        for p in 0..enc.token_ids.len() {
            assert!(!(enc.text_loss_mask[p] && enc.vrt_loss_mask[p]));
            if p <= enc.prompt_length {
                assert!(!enc.text_loss_mask[p] && !enc.vrt_loss_mask[p]);
            } else {
                assert!(enc.text_loss_mask[p] ^ enc.vrt_loss_mask[p]);
                assert_eq!(enc.vrt_loss_mask[p], v.is_vrt_id(enc.token_ids[p]));
            }
        }
        // End marker is covered by the text mask.
        assert!(enc.text_loss_mask[enc.token_ids.len() - 1]);
    }

    #[test]
    fn encode_length_is_prompt_plus_body_plus_two() {
        let s = sample();
        let v = vocab_for(core::slice::from_ref(&s));
        let enc = encode(&s, &v, "").unwrap();
        let body_count = tokenize(&s.serialize()).len();
        assert_eq!(enc.token_ids.len(), enc.prompt_length + body_count + 2);
        assert_eq!(enc.prompt_length, tokenize(s.query()).len());
    }

    #[test]
    fn plain_cot_encoding_has_empty_vrt_mask() {
        let s = sample();
        let v = vocab_for(core::slice::from_ref(&s));
        let enc = encode_plain_cot(&s, &v, "").unwrap();
        assert!(enc.vrt_loss_mask.iter().all(|b| !b));
        assert!(enc.text_loss_mask[enc.prompt_length + 1..].iter().all(|b| *b));
    }

    #[test]
    fn decode_inverts_encode_on_the_body() {
        let s = sample();
        let v = vocab_for(core::slice::from_ref(&s));
        let enc = encode(&s, &v, "").unwrap();
        let body = &enc.target_ids()[..enc.target_ids().len() - 1];
        assert_eq!(decode(body, &v).unwrap(), s.serialize());
    }

    #[test]
    fn decode_rejects_out_of_range_ids() {
        let v = vocab_for(&[sample()]);
        let bad = v.total_size();
        assert!(matches!(
            decode(&[bad], &v),
            Err(VocabError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn query_prefix_extends_the_prompt() {
        let s = sample();
        let v = vocab_for(core::slice::from_ref(&s));
        let enc = encode(&s, &v, "answer the question").unwrap();
        assert_eq!(
            enc.prompt_length,
            tokenize("answer the question").len() + tokenize(s.query()).len()
        );
    }

    #[test]
    fn shuffled_vrt_targets_cannot_reach_the_encoder() {
        // Training targets are always the ascending sequence: a shuffled
        // grounding is rejected before a sample (and thus an encoding) can
        // exist, both at construction and at parse time.
        assert!(OrderedVrtSequence::from_ascending(vec![9, 1, 8]).is_err());
        let text = "<loc> a refer to <vrt_9>, <vrt_1> </loc>\n<think> t </think>\n<answer> x </answer>";
        assert!(crate::format::parse(text).is_err());
    }

    #[test]
    fn from_parts_validates_specials_prefix() {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.push("word".into());
        assert!(Vocabulary::from_parts(tokens.clone(), 64).is_ok());
        tokens.swap(0, 1);
        assert!(matches!(
            Vocabulary::from_parts(tokens, 64),
            Err(VocabError::BadSpecials { .. })
        ));
    }
}
