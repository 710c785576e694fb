use super::vocab::{Token, TokenKind, Vocabulary, AD, BOS, EOS, ORG};
use crate::error::{Error, Result};
use crate::marketplace::{Interaction, Mode, Trajectory};
use crate::semantic_index::{SemanticId, SidTrie};

pub type TokenStream = Vec<Token>;

/// Tokens of one interaction: `[f, c_1..c_D, disamb]`.
pub fn segment(mode: Mode, sid: &SemanticId, vocab: &Vocabulary) -> Vec<Token> {
    let mut out = Vec::with_capacity(vocab.segment_len());
    out.push(match mode {
        Mode::Organic => ORG,
        Mode::Sponsored => AD,
    });
    out.extend(sid.codes.iter().enumerate().map(|(k, &c)| vocab.code(k + 1, c)));
    out.push(vocab.disamb(sid.disamb));
    out
}

/// `BOS ⊕ x_1 ⊕ .. ⊕ x_T ⊕ EOS`.
pub fn flatten(trajectory: &Trajectory, trie: &SidTrie, vocab: &Vocabulary) -> Result<TokenStream> {
    let mut out = Vec::with_capacity(2 + trajectory.events.len() * vocab.segment_len());
    out.push(BOS);
    for e in &trajectory.events {
        let sid = trie.sid_of(e.item_id).ok_or(Error::MissingId(e.item_id))?;
        out.extend(segment(e.mode, sid, vocab));
    }
    out.push(EOS);
    Ok(out)
}

/// Inverse of [`flatten`].
pub fn unflatten(user_id: u32, stream: &[Token], trie: &SidTrie, vocab: &Vocabulary) -> Result<Trajectory> {
    let seg = vocab.segment_len();
    let body = match stream {
        [BOS, body @ .., EOS] => body,
        _ => return Err(Error::Stream("stream must be framed by BOS and EOS".into())),
    };
    if body.len() % seg != 0 {
        return Err(Error::Stream(format!("body length {} is not a multiple of {seg}", body.len())));
    }
    let mut events = Vec::with_capacity(body.len() / seg);
    for chunk in body.chunks(seg) {
        let mode = match chunk[0] {
            ORG => Mode::Organic,
            AD => Mode::Sponsored,
            t => return Err(Error::Stream(format!("expected a flag token, got {t}"))),
        };
        let mut codes = Vec::with_capacity(vocab.depth);
        for (k, &t) in chunk[1..=vocab.depth].iter().enumerate() {
            match vocab.kind(t)? {
                TokenKind::Code { level, value } if level == k + 1 => codes.push(value),
                _ => return Err(Error::Stream(format!("token {t} is not a level-{} code", k + 1))),
            }
        }
        let disamb = match vocab.kind(chunk[seg - 1])? {
            TokenKind::Disamb(d) => d,
            _ => return Err(Error::Stream(format!("token {} is not a disambiguator", chunk[seg - 1]))),
        };
        let item_id = trie
            .resolve(&codes, disamb)
            .ok_or_else(|| Error::Stream(format!("codes {codes:?}/{disamb} name no item")))?;
        events.push(Interaction { mode, item_id });
    }
    Ok(Trajectory { user_id, events })
}
