use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Token = u32;

pub const BOS: Token = 0;
pub const EOS: Token = 1;
pub const ORG: Token = 2;
pub const AD: Token = 3;
const FIRST_CODE: Token = 4;

/// Which position of a segment `[f, c_1..c_D, disamb]` comes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotKind {
    Flag,
    /// Code level, 1-based.
    Code(usize),
    Disamb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Bos,
    Eos,
    Flag,
    Code { level: usize, value: u16 },
    Disamb(u16),
}

/// Dense token ids: BOS, EOS, ORG, AD, then `C` tokens per code level, then
/// the disambiguation tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub depth: usize,
    pub codebook_size: usize,
    pub disamb_size: usize,
}

impl Vocabulary {
    pub fn new(depth: usize, codebook_size: usize, disamb_size: usize) -> Result<Self> {
        if depth == 0 || codebook_size == 0 || disamb_size == 0 {
            return Err(Error::Config(format!(
                "vocabulary needs positive sizes, got D={depth}, C={codebook_size}, disamb={disamb_size}"
            )));
        }
        let v = Self { depth, codebook_size, disamb_size };
        if v.size() > u16::MAX as usize {
            return Err(Error::Config(format!("vocabulary of {} tokens is too large", v.size())));
        }
        Ok(v)
    }

    pub fn size(&self) -> usize {
        FIRST_CODE as usize + self.depth * self.codebook_size + self.disamb_size
    }

    /// Tokens per interaction segment.
    pub fn segment_len(&self) -> usize {
        self.depth + 2
    }

    pub fn code(&self, level: usize, value: u16) -> Token {
        debug_assert!((1..=self.depth).contains(&level) && (value as usize) < self.codebook_size);
        FIRST_CODE + ((level - 1) * self.codebook_size) as Token + value as Token
    }

    pub fn disamb(&self, value: u16) -> Token {
        debug_assert!((value as usize) < self.disamb_size);
        FIRST_CODE + (self.depth * self.codebook_size) as Token + value as Token
    }

    pub fn kind(&self, token: Token) -> Result<TokenKind> {
        let codes_end = FIRST_CODE as usize + self.depth * self.codebook_size;
        Ok(match token {
            BOS => TokenKind::Bos,
            EOS => TokenKind::Eos,
            ORG | AD => TokenKind::Flag,
            t if (t as usize) < codes_end => {
                let off = (t - FIRST_CODE) as usize;
                TokenKind::Code { level: off / self.codebook_size + 1, value: (off % self.codebook_size) as u16 }
            }
            t if (t as usize) < self.size() => TokenKind::Disamb((t as usize - codes_end) as u16),
            t => return Err(Error::Position(format!("token {t} is outside the vocabulary"))),
        })
    }

    /// Legal tokens of a slot, as a contiguous id range.
    pub fn legal(&self, slot: SlotKind) -> Range<Token> {
        match slot {
            SlotKind::Flag => ORG..AD + 1,
            SlotKind::Code(k) => {
                let start = self.code(k, 0);
                start..start + self.codebook_size as Token
            }
            SlotKind::Disamb => {
                let start = self.disamb(0);
                start..start + self.disamb_size as Token
            }
        }
    }

    pub fn legal_len(&self, slot: SlotKind) -> usize {
        let r = self.legal(slot);
        (r.end - r.start) as usize
    }

    /// Dense index of a slot, used to key count tables.
    pub fn slot_index(&self, slot: SlotKind) -> usize {
        match slot {
            SlotKind::Flag => 0,
            SlotKind::Code(k) => k,
            SlotKind::Disamb => self.depth + 1,
        }
    }

    /// The slot that follows `context`, read off its last token.
    pub fn slot_after(&self, context: &[Token]) -> Result<SlotKind> {
        let Some(&last) = context.last() else {
            return Err(Error::Position("empty context; streams start with BOS".into()));
        };
        Ok(match self.kind(last)? {
            TokenKind::Bos | TokenKind::Disamb(_) => SlotKind::Flag,
            TokenKind::Flag => SlotKind::Code(1),
            TokenKind::Code { level, .. } if level < self.depth => SlotKind::Code(level + 1),
            TokenKind::Code { .. } => SlotKind::Disamb,
            TokenKind::Eos => return Err(Error::Position("context ends after EOS".into())),
        })
    }
}
