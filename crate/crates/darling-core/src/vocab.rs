//! Symbol tables for recognition targets and generation prompts.
//!
//! Two separate tables are maintained:
//!
//! * **Recognition classes** (`C = 98`): the 94 printable ASCII characters
//!   (`!` through `~`), plus `[P]` pad, `[B]` begin, `[E]` end, and one
//!   reserved slot. Recognition targets are laid out `c_1 .. c_k [E] [P] ...`
//!   over `T` positions.
//! * **Prompt vocabulary** (`96` embeddings): `[B]`, `[E]`, and the same 94
//!   characters. Prompts are `[B] c_1 .. c_k [E] ...`; trailing pad positions
//!   reuse the `[E]` embedding, so a removal prompt is `[B][E][E]...`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Number of recognition classes.
pub const NUM_CLASSES: usize = 98;
/// Number of prompt embedding rows.
pub const PROMPT_VOCAB: usize = 96;
/// Printable ASCII inventory size (`!`..=`~`).
pub const PRINTABLE_COUNT: usize = 94;

/// Recognition class ids.
pub const CLS_PAD: usize = 0;
pub const CLS_BEGIN: usize = 1;
pub const CLS_END: usize = 2;
const CLS_CHAR_BASE: usize = 3;
pub const CLS_RESERVED: usize = 97;

/// Prompt token ids. Padding reuses the end id.
pub const PROMPT_BEGIN: usize = 0;
pub const PROMPT_END: usize = 1;
const PROMPT_CHAR_BASE: usize = 2;

const FIRST_CHAR: u8 = b'!';
const LAST_CHAR: u8 = b'~';

/// Whether `c` belongs to the 94-character render inventory.
pub fn in_inventory(c: char) -> bool {
    c.is_ascii() && (FIRST_CHAR..=LAST_CHAR).contains(&(c as u8))
}

/// Validate a text against the inventory and a maximum character count.
pub fn validate_text(text: &str, max_chars: usize) -> Result<()> {
    if text.is_empty() {
        return Err(Error::validation("text must be non-empty"));
    }
    if let Some(c) = text.chars().find(|&c| !in_inventory(c)) {
        return Err(Error::validation(format!(
            "character {c:?} is outside the 94 printable-character inventory"
        )));
    }
    let n = text.chars().count();
    if n > max_chars {
        return Err(Error::validation(format!(
            "text has {n} characters, maximum is {max_chars}"
        )));
    }
    Ok(())
}

/// Recognition class id for a character.
pub fn char_to_class(c: char) -> Option<usize> {
    in_inventory(c).then(|| CLS_CHAR_BASE + (c as u8 - FIRST_CHAR) as usize)
}

/// Character for a recognition class id, if it is one of the 94 printables.
pub fn class_to_char(id: usize) -> Option<char> {
    if (CLS_CHAR_BASE..CLS_CHAR_BASE + PRINTABLE_COUNT).contains(&id) {
        Some((FIRST_CHAR + (id - CLS_CHAR_BASE) as u8) as char)
    } else {
        None
    }
}

/// Prompt token id for a character.
pub fn char_to_prompt(c: char) -> Option<usize> {
    in_inventory(c).then(|| PROMPT_CHAR_BASE + (c as u8 - FIRST_CHAR) as usize)
}

/// Recognition target over `t_len` positions: `c_1 .. c_k [E] [P] ...`.
/// Requires `k <= t_len - 2`, leaving room for the begin/end symbols that
/// share the sequence budget with prompts.
pub fn encode_target(text: &str, t_len: usize) -> Result<Vec<usize>> {
    validate_text(text, t_len - 2)?;
    let mut ids = Vec::with_capacity(t_len);
    for c in text.chars() {
        ids.push(char_to_class(c).expect("validated"));
    }
    ids.push(CLS_END);
    ids.resize(t_len, CLS_PAD);
    Ok(ids)
}

/// Prompt ids over `t_len` positions: `[B] c_1 .. c_k [E] ...` with trailing
/// positions padded by the `[E]` id.
pub fn encode_prompt(text: &str, t_len: usize) -> Result<Vec<usize>> {
    validate_text(text, t_len - 2)?;
    let mut ids = Vec::with_capacity(t_len);
    ids.push(PROMPT_BEGIN);
    for c in text.chars() {
        ids.push(char_to_prompt(c).expect("validated"));
    }
    ids.resize(t_len, PROMPT_END);
    Ok(ids)
}

/// The removal prompt `[B][E][E]...` (empty target text).
pub fn removal_prompt(t_len: usize) -> Vec<usize> {
    let mut ids = vec![PROMPT_END; t_len];
    ids[0] = PROMPT_BEGIN;
    ids
}

/// Decode a prompt back to its text (inverse of [`encode_prompt`]).
pub fn decode_prompt(ids: &[usize]) -> Result<String> {
    if ids.first() != Some(&PROMPT_BEGIN) {
        return Err(Error::validation("prompt must start with [B]"));
    }
    let mut text = String::new();
    for &id in &ids[1..] {
        if id == PROMPT_END {
            break;
        }
        match id.checked_sub(PROMPT_CHAR_BASE) {
            Some(k) if k < PRINTABLE_COUNT => text.push((FIRST_CHAR + k as u8) as char),
            _ => return Err(Error::validation(format!("invalid prompt id {id}"))),
        }
    }
    Ok(text)
}

/// Greedy per-position decode of `T x C` logits. Decoding stops at the first
/// `[E]`; the confidence is the geometric mean of the chosen-class softmax
/// probabilities up to and including the terminating `[E]`.
pub fn decode_greedy(logits: &Array2<f64>) -> (String, f64) {
    let (t_len, c) = logits.dim();
    assert_eq!(c, NUM_CLASSES);
    let mut text = String::new();
    let mut log_conf = 0.0;
    let mut count = 0usize;
    for t in 0..t_len {
        let row = logits.row(t);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp_sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let (best, best_v) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, &v)| (i, v))
            .unwrap();
        let prob = (best_v - max).exp() / exp_sum;
        log_conf += prob.max(f64::MIN_POSITIVE).ln();
        count += 1;
        if best == CLS_END {
            break;
        }
        if let Some(ch) = class_to_char(best) {
            text.push(ch);
        }
        // [P], [B], and the reserved class contribute no character.
    }
    let confidence = if count == 0 {
        0.0
    } else {
        (log_conf / count as f64).exp()
    };
    (text, confidence)
}
