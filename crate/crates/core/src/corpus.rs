//! Predicate-argument annotated sentences and the `.zar.tsv` corpus format.
//!
//! A corpus file is UTF-8 text. Each sentence is a block of lines:
//!
//! ```text
//! # doc_id = D1
//! # sent_id = 1
//! 1	犬	NOUN	_	_
//! 2	が	PARTICLE	_	_
//! 3	走る	VERB	PRED	NOM=1:DEP
//! ```
//!
//! followed by a blank line. The fourth column marks predicates, the fifth
//! lists the arguments of a predicate as `CASE=TARGET:TYPE` joined by `;`,
//! where `TARGET` is a 1-based token index or `OUT`.
//!
//! Token positions are 1-based everywhere in this module, matching the file.
//! Predicate ordinals (`j`) are 0-based offsets into [`Sentence::predicates`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Surface form reserved for masked positions.
pub const MASK_SYMBOL: &str = "[MASK]";

/// Canonical coarse POS tags. The tagset is open; these are the values the
/// synthetic generator and the named masking sets use.
pub mod pos {
    pub const NOUN: &str = "NOUN";
    pub const VERB: &str = "VERB";
    pub const PARTICLE: &str = "PARTICLE";
    pub const SYMBOL: &str = "SYMBOL";
    pub const ADJ: &str = "ADJ";
    pub const ADV: &str = "ADV";
    pub const OTHER: &str = "OTHER";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Case {
    Nom,
    Acc,
    Dat,
}

impl Case {
    /// In priority order.
    pub const ALL: [Case; 3] = [Case::Nom, Case::Acc, Case::Dat];

    pub fn as_str(self) -> &'static str {
        match self {
            Case::Nom => "NOM",
            Case::Acc => "ACC",
            Case::Dat => "DAT",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> ArgLabel {
        match self {
            Case::Nom => ArgLabel::Nom,
            Case::Acc => ArgLabel::Acc,
            Case::Dat => ArgLabel::Dat,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NOM" => Ok(Case::Nom),
            "ACC" => Ok(Case::Acc),
            "DAT" => Ok(Case::Dat),
            other => Err(format!("unknown case {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnaphoraType {
    Dep,
    Zar,
}

impl AnaphoraType {
    pub const ALL: [AnaphoraType; 2] = [AnaphoraType::Dep, AnaphoraType::Zar];

    pub fn as_str(self) -> &'static str {
        match self {
            AnaphoraType::Dep => "DEP",
            AnaphoraType::Zar => "ZAR",
        }
    }
}

impl fmt::Display for AnaphoraType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnaphoraType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DEP" => Ok(AnaphoraType::Dep),
            "ZAR" => Ok(AnaphoraType::Zar),
            other => Err(format!("unknown anaphora type {other:?}")),
        }
    }
}

/// Four-way label of a (token, predicate) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArgLabel {
    Nom = 0,
    Acc = 1,
    Dat = 2,
    None = 3,
}

impl ArgLabel {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> ArgLabel {
        match i {
            0 => ArgLabel::Nom,
            1 => ArgLabel::Acc,
            2 => ArgLabel::Dat,
            _ => ArgLabel::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position.
    pub index: usize,
    pub surface: String,
    pub pos: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    /// 1-based position of the predicate head.
    pub token_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArgTarget {
    /// 1-based position within the sentence.
    Token(usize),
    /// Inter-sentential or exophoric antecedent.
    Outside,
}

impl ArgTarget {
    pub fn position(self) -> Option<usize> {
        match self {
            ArgTarget::Token(i) => Some(i),
            ArgTarget::Outside => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentAnnotation {
    /// 0-based predicate ordinal.
    pub predicate: usize,
    pub case: Case,
    pub target: ArgTarget,
    pub anaphora_type: AnaphoraType,
}

/// An annotated sentence. Construction validates every invariant; the value
/// is immutable afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    doc_id: String,
    sent_id: String,
    tokens: Vec<Token>,
    predicates: Vec<Predicate>,
    annotations: Vec<ArgumentAnnotation>,
}

fn valid_id(id: &str) -> bool {
    !id.contains(['\n', '\r']) && id.trim() == id
}

fn valid_field(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', '\n', '\r'])
}

impl Sentence {
    /// Builds a sentence, sorting predicates by position and annotations by
    /// (predicate, case).
    pub fn new(
        doc_id: impl Into<String>,
        sent_id: impl Into<String>,
        tokens: Vec<Token>,
        mut predicates: Vec<Predicate>,
        mut annotations: Vec<ArgumentAnnotation>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let sent_id = sent_id.into();
        let order: Vec<usize> = {
            let mut idx: Vec<usize> = (0..predicates.len()).collect();
            idx.sort_by_key(|&j| predicates[j].token_index);
            idx
        };
        if order.iter().enumerate().any(|(n, &j)| n != j) {
            let mut remap = vec![0; predicates.len()];
            for (new, &old) in order.iter().enumerate() {
                remap[old] = new;
            }
            predicates = order.iter().map(|&j| predicates[j]).collect();
            for a in &mut annotations {
                if a.predicate < remap.len() {
                    a.predicate = remap[a.predicate];
                }
            }
        }
        annotations.sort_by_key(|a| (a.predicate, a.case));
        let s = Sentence {
            doc_id,
            sent_id,
            tokens,
            predicates,
            annotations,
        };
        s.validate()?;
        Ok(s)
    }

    fn invalid(&self, message: impl Into<String>) -> Error {
        Error::Invariant {
            sent_id: self.sent_id.clone(),
            message: message.into(),
        }
    }

    /// Checks every type invariant.
    pub fn validate(&self) -> Result<()> {
        if !valid_id(&self.doc_id) || !valid_id(&self.sent_id) {
            return Err(self.invalid("identifiers must be single-line and trimmed"));
        }
        if self.tokens.is_empty() {
            return Err(self.invalid("sentence has no tokens"));
        }
        for (n, t) in self.tokens.iter().enumerate() {
            if t.index != n + 1 {
                return Err(self.invalid(format!(
                    "token indices must be contiguous from 1; found {} at position {}",
                    t.index,
                    n + 1
                )));
            }
            if !valid_field(&t.surface) || !valid_field(&t.pos) {
                return Err(
                    self.invalid(format!("token {} has an empty or malformed field", n + 1))
                );
            }
        }
        let len = self.tokens.len();
        for w in self.predicates.windows(2) {
            if w[0].token_index == w[1].token_index {
                return Err(self.invalid(format!("duplicate predicate at {}", w[0].token_index)));
            }
        }
        for p in &self.predicates {
            if p.token_index == 0 || p.token_index > len {
                return Err(
                    self.invalid(format!("predicate position {} out of range", p.token_index))
                );
            }
        }
        for w in self.annotations.windows(2) {
            if w[0].predicate == w[1].predicate && w[0].case == w[1].case {
                return Err(self.invalid(format!(
                    "two {} annotations for predicate {}",
                    w[0].case, w[0].predicate
                )));
            }
        }
        for a in &self.annotations {
            if a.predicate >= self.predicates.len() {
                return Err(
                    self.invalid(format!("annotation for missing predicate {}", a.predicate))
                );
            }
            if let ArgTarget::Token(i) = a.target {
                if i == 0 || i > len {
                    return Err(self.invalid(format!("argument target {i} out of range")));
                }
            }
        }
        Ok(())
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn sent_id(&self) -> &str {
        &self.sent_id
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn annotations(&self) -> &[ArgumentAnnotation] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.surface.clone()).collect()
    }

    /// 1-based position of predicate `j`.
    pub fn predicate_position(&self, j: usize) -> Option<usize> {
        self.predicates.get(j).map(|p| p.token_index)
    }

    pub fn is_predicate(&self, position: usize) -> bool {
        self.predicates.iter().any(|p| p.token_index == position)
    }

    pub fn annotation(&self, j: usize, case: Case) -> Option<&ArgumentAnnotation> {
        self.annotations
            .iter()
            .find(|a| a.predicate == j && a.case == case)
    }

    pub fn into_parts(
        self,
    ) -> (
        String,
        String,
        Vec<Token>,
        Vec<Predicate>,
        Vec<ArgumentAnnotation>,
    ) {
        (
            self.doc_id,
            self.sent_id,
            self.tokens,
            self.predicates,
            self.annotations,
        )
    }
}

/// POS tag of the token at 1-based `position`.
pub fn pos_of(sentence: &Sentence, position: usize) -> Result<&str> {
    if position == 0 || position > sentence.len() {
        return Err(Error::OutOfRange {
            index: position,
            len: sentence.len(),
        });
    }
    Ok(&sentence.tokens[position - 1].pos)
}

fn parse_args(field: &str, line: usize, predicate: usize) -> Result<Vec<ArgumentAnnotation>> {
    let mut out = Vec::new();
    for item in field.split(';') {
        let bad = |m: &str| Error::Parse {
            line,
            message: format!("bad argument {item:?}: {m}"),
        };
        let (case, rest) = item
            .split_once('=')
            .ok_or_else(|| bad("expected CASE=TARGET:TYPE"))?;
        let (target, ty) = rest
            .split_once(':')
            .ok_or_else(|| bad("expected TARGET:TYPE"))?;
        let case: Case = case.parse().map_err(|e: String| bad(&e))?;
        let anaphora_type: AnaphoraType = ty.parse().map_err(|e: String| bad(&e))?;
        let target = if target == "OUT" {
            ArgTarget::Outside
        } else {
            let i: usize = target
                .parse()
                .map_err(|_| bad("target is not an index or OUT"))?;
            ArgTarget::Token(i)
        };
        out.push(ArgumentAnnotation {
            predicate,
            case,
            target,
            anaphora_type,
        });
    }
    Ok(out)
}

#[derive(Default)]
struct Pending {
    doc_id: Option<String>,
    sent_id: Option<String>,
    tokens: Vec<Token>,
    predicates: Vec<Predicate>,
    annotations: Vec<(usize, ArgumentAnnotation)>,
    start_line: usize,
}

impl Pending {
    fn has_content(&self) -> bool {
        !self.tokens.is_empty() || self.doc_id.is_some() || self.sent_id.is_some()
    }
}

fn finish(p: Pending, last_doc: &mut String, ordinal: usize, end_line: usize) -> Result<Sentence> {
    if p.tokens.is_empty() {
        return Err(Error::Parse {
            line: end_line,
            message: "sentence has no tokens".into(),
        });
    }
    let len = p.tokens.len();
    let mut seen = std::collections::HashSet::new();
    for (line, a) in &p.annotations {
        if let ArgTarget::Token(i) = a.target {
            if i == 0 || i > len {
                return Err(Error::Reference {
                    line: *line,
                    message: format!("target {i} outside sentence of {len} tokens"),
                });
            }
        }
        if !seen.insert((a.predicate, a.case)) {
            return Err(Error::Annotation {
                line: *line,
                message: format!("{} given twice for one predicate", a.case),
            });
        }
    }
    let doc_id = p.doc_id.unwrap_or_else(|| last_doc.clone());
    *last_doc = doc_id.clone();
    let sent_id = p.sent_id.unwrap_or_else(|| ordinal.to_string());
    Sentence::new(
        doc_id,
        sent_id,
        p.tokens,
        p.predicates,
        p.annotations.into_iter().map(|(_, a)| a).collect(),
    )
    .map_err(|e| Error::Parse {
        line: p.start_line,
        message: e.to_string(),
    })
}

/// Parses a corpus. Sentences without a `doc_id` comment inherit the previous
/// one (or `-`); sentences without a `sent_id` get their 1-based ordinal.
pub fn parse_corpus(text: &str) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut cur = Pending::default();
    let mut last_doc = String::from("-");
    let mut line_no = 0;
    for (n, raw) in text.lines().enumerate() {
        line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if cur.has_content() {
                let p = std::mem::take(&mut cur);
                out.push(finish(p, &mut last_doc, out.len() + 1, line_no)?);
            }
            continue;
        }
        if !cur.has_content() {
            cur.start_line = line_no;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if !cur.tokens.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "comment inside a sentence".into(),
                });
            }
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "doc_id" => cur.doc_id = Some(value.trim().to_string()),
                    "sent_id" => cur.sent_id = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 5 tab-separated columns, found {}", cols.len()),
            });
        }
        let index: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad token index {:?}", cols[0]),
        })?;
        let expected = cur.tokens.len() + 1;
        if index != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("token index {index}, expected {expected}"),
            });
        }
        if cols[1].is_empty() || cols[2].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty surface or POS".into(),
            });
        }
        let is_pred = match cols[3] {
            "PRED" => true,
            "_" => false,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("predicate column must be PRED or _, found {other:?}"),
                })
            }
        };
        if cols[4] != "_" {
            if !is_pred {
                return Err(Error::Parse {
                    line: line_no,
                    message: "arguments given on a non-predicate line".into(),
                });
            }
            let j = cur.predicates.len();
            for a in parse_args(cols[4], line_no, j)? {
                cur.annotations.push((line_no, a));
            }
        }
        if is_pred {
            cur.predicates.push(Predicate { token_index: index });
        }
        cur.tokens.push(Token {
            index,
            surface: cols[1].to_string(),
            pos: cols[2].to_string(),
        });
    }
    if cur.has_content() {
        out.push(finish(cur, &mut last_doc, out.len() + 1, line_no)?);
    }
    Ok(out)
}

/// Serializes sentences in canonical form. Byte-deterministic.
pub fn serialize_corpus(sentences: &[Sentence]) -> Result<String> {
    use std::fmt::Write;
    let mut out = String::new();
    for s in sentences {
        s.validate()?;
        writeln!(out, "# doc_id = {}", s.doc_id).unwrap();
        writeln!(out, "# sent_id = {}", s.sent_id).unwrap();
        let mut pred_of = vec![None; s.len() + 1];
        for (j, p) in s.predicates.iter().enumerate() {
            pred_of[p.token_index] = Some(j);
        }
        for t in &s.tokens {
            let (pred, args) = match pred_of[t.index] {
                Some(j) => {
                    let items: Vec<String> = s
                        .annotations
                        .iter()
                        .filter(|a| a.predicate == j)
                        .map(|a| {
                            let target = match a.target {
                                ArgTarget::Token(i) => i.to_string(),
                                ArgTarget::Outside => "OUT".to_string(),
                            };
                            format!("{}={}:{}", a.case, target, a.anaphora_type)
                        })
                        .collect();
                    let args = if items.is_empty() {
                        "_".to_string()
                    } else {
                        items.join(";")
                    };
                    ("PRED", args)
                }
                None => ("_", "_".to_string()),
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                t.index, t.surface, t.pos, pred, args
            )
            .unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Gold I × J label matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    rows: usize,
    cols: usize,
    labels: Vec<ArgLabel>,
}

impl LabelGrid {
    pub fn filled(rows: usize, cols: usize, label: ArgLabel) -> Self {
        LabelGrid {
            rows,
            cols,
            labels: vec![label; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Cell at 0-based token row `i`, predicate `j`.
    pub fn get(&self, i: usize, j: usize) -> ArgLabel {
        self.labels[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, label: ArgLabel) {
        self.labels[i * self.cols + j] = label;
    }

    /// Labels of predicate `j` for every token, top to bottom.
    pub fn column(&self, j: usize) -> Vec<ArgLabel> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Gold grid. Outside targets are NONE everywhere; when two cases of one
/// predicate claim the same token the higher-priority case (NOM > ACC > DAT)
/// wins and a warning is logged.
pub fn build_label_grid(sentence: &Sentence) -> LabelGrid {
    let mut grid = LabelGrid::filled(sentence.len(), sentence.predicates.len(), ArgLabel::None);
    for j in 0..sentence.predicates.len() {
        for case in Case::ALL {
            let Some(a) = sentence.annotation(j, case) else {
                continue;
            };
            let ArgTarget::Token(pos) = a.target else {
                continue;
            };
            let i = pos - 1;
            match grid.get(i, j) {
                ArgLabel::None => grid.set(i, j, case.label()),
                kept => log::warn!(
                    "sentence {}: token {} is both {:?} and {} of predicate {}; keeping {:?}",
                    sentence.sent_id,
                    pos,
                    kept,
                    case,
                    j,
                    kept
                ),
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosCount {
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    /// Keyed by `"NOM/DEP"` style strings; all six combinations are present.
    pub counts: BTreeMap<String, usize>,
    /// Arguments whose antecedent lies outside the sentence, by case.
    pub outside: BTreeMap<String, usize>,
    pub pos_histogram: BTreeMap<String, PosCount>,
    pub sentences: usize,
    pub tokens: usize,
    pub predicates: usize,
}

impl SplitStats {
    pub fn count(&self, case: Case, ty: AnaphoraType) -> usize {
        self.counts[&format!("{case}/{ty}")]
    }
}

pub fn corpus_stats(sentences: &[Sentence]) -> SplitStats {
    let mut counts = BTreeMap::new();
    let mut outside = BTreeMap::new();
    for case in Case::ALL {
        for ty in AnaphoraType::ALL {
            counts.insert(format!("{case}/{ty}"), 0);
        }
        outside.insert(case.to_string(), 0);
    }
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    let mut tokens = 0;
    let mut predicates = 0;
    for s in sentences {
        tokens += s.len();
        predicates += s.predicates.len();
        for t in &s.tokens {
            *hist.entry(t.pos.clone()).or_default() += 1;
        }
        for a in &s.annotations {
            *counts
                .get_mut(&format!("{}/{}", a.case, a.anaphora_type))
                .unwrap() += 1;
            if a.target == ArgTarget::Outside {
                *outside.get_mut(a.case.as_str()).unwrap() += 1;
            }
        }
    }
    let pos_histogram = hist
        .into_iter()
        .map(|(tag, count)| {
            let ratio = count as f64 / tokens as f64;
            (tag, PosCount { count, ratio })
        })
        .collect();
    SplitStats {
        counts,
        outside,
        pos_histogram,
        sentences: sentences.len(),
        tokens,
        predicates,
    }
}
