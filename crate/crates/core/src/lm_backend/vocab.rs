use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::MASK_SYMBOL;

pub const UNK: &str = "[UNK]";
pub const CONTINUATION: &str = "##";

/// Subword vocabulary with greedy longest-match-first (WordPiece style)
/// segmentation. Ids of `[UNK]` and `[MASK]` are always present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    mask: u32,
}

impl From<Vec<String>> for Vocab {
    fn from(pieces: Vec<String>) -> Self {
        Vocab::new(pieces)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.pieces
    }
}

impl Vocab {
    /// Builds a vocabulary; missing special pieces are appended, duplicates
    /// keep their first id.
    pub fn new(pieces: Vec<String>) -> Self {
        let mut out: Vec<String> = Vec::with_capacity(pieces.len() + 2);
        let mut index = HashMap::new();
        for p in pieces
            .into_iter()
            .chain([UNK.to_string(), MASK_SYMBOL.to_string()])
        {
            if !index.contains_key(&p) {
                index.insert(p.clone(), out.len() as u32);
                out.push(p);
            }
        }
        let unk = index[UNK];
        let mask = index[MASK_SYMBOL];
        Vocab {
            pieces: out,
            index,
            unk,
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> &str {
        &self.pieces[id as usize]
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn mask_id(&self) -> u32 {
        self.mask
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.unk || id == self.mask
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// Segments one word. `[MASK]` maps to the single mask id; a word that
    /// cannot be covered by pieces becomes `[UNK]`.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        if word == MASK_SYMBOL {
            return vec![self.mask];
        }
        if let Some(id) = self.id(word) {
            return vec![id];
        }
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let from = chars[start].0;
                let to = chars.get(end).map_or(word.len(), |c| c.0);
                let sub = &word[from..to];
                let candidate = if start == 0 {
                    self.id(sub)
                } else {
                    self.id(&format!("{CONTINUATION}{sub}"))
                };
                if let Some(id) = candidate {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    out.push(id);
                    start = end;
                }
                None => return vec![self.unk],
            }
        }
        out
    }

    /// Surface form of a predicted piece, with any continuation prefix removed.
    pub fn surface(&self, id: u32) -> String {
        let p = self.piece(id);
        p.strip_prefix(CONTINUATION).unwrap_or(p).to_string()
    }
}
