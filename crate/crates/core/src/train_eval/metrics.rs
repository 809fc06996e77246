use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::corpus::{AnaphoraType, ArgTarget, ArgumentAnnotation, Case, Sentence};
use crate::error::{Error, Result};
use crate::zar_model::SlotPrediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Counts per anaphora type and case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub zar: [Counts; 3],
    pub dep: [Counts; 3],
}

impl EvalCounts {
    pub fn bucket(&self, ty: AnaphoraType, case: Case) -> Counts {
        match ty {
            AnaphoraType::Zar => self.zar[case.index()],
            AnaphoraType::Dep => self.dep[case.index()],
        }
    }

    fn bucket_mut(&mut self, ty: AnaphoraType, case: Case) -> &mut Counts {
        match ty {
            AnaphoraType::Zar => &mut self.zar[case.index()],
            AnaphoraType::Dep => &mut self.dep[case.index()],
        }
    }

    pub fn total(&self, ty: AnaphoraType) -> Counts {
        let mut c = Counts::default();
        for case in Case::ALL {
            c += self.bucket(ty, case);
        }
        c
    }

    pub fn all(&self) -> Counts {
        let mut c = self.total(AnaphoraType::Zar);
        c += self.total(AnaphoraType::Dep);
        c
    }

    /// Counts of the case restricted to both types together.
    pub fn case(&self, case: Case) -> Counts {
        let mut c = self.zar[case.index()];
        c += self.dep[case.index()];
        c
    }

    pub fn merge(&mut self, other: &EvalCounts) {
        for i in 0..3 {
            self.zar[i] += other.zar[i];
            self.dep[i] += other.dep[i];
        }
    }

    /// Adds one (predicate, case) slot. Gold pointing outside the sentence is
    /// not scored. A filled slot without gold counts against DEP.
    pub fn add_slot(
        &mut self,
        case: Case,
        gold: Option<&ArgumentAnnotation>,
        predicted: Option<usize>,
    ) {
        let gold_pos = match gold.map(|a| a.target) {
            Some(ArgTarget::Outside) => return,
            Some(ArgTarget::Token(p)) => Some(p),
            None => None,
        };
        let ty = gold.map_or(AnaphoraType::Dep, |a| a.anaphora_type);
        let c = self.bucket_mut(ty, case);
        match (gold_pos, predicted) {
            (Some(g), Some(p)) if g == p => c.tp += 1,
            (Some(_), Some(_)) => {
                c.fp += 1;
                c.fn_ += 1;
            }
            (Some(_), None) => c.fn_ += 1,
            (None, Some(_)) => c.fp += 1,
            (None, None) => {}
        }
    }
}

/// Counts slots of `sentences` given one prediction per predicate each.
pub fn count_predictions(
    sentences: &[Sentence],
    predictions: &[Vec<SlotPrediction>],
) -> Result<EvalCounts> {
    if sentences.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} prediction sets for {} sentences",
            predictions.len(),
            sentences.len()
        )));
    }
    let mut counts = EvalCounts::default();
    for (s, preds) in sentences.iter().zip(predictions) {
        counts.merge(&sentence_counts(s, preds)?);
    }
    Ok(counts)
}

pub fn sentence_counts(s: &Sentence, preds: &[SlotPrediction]) -> Result<EvalCounts> {
    if preds.len() != s.predicates().len() {
        return Err(Error::Shape(format!(
            "sentence {} has {} predicates but {} predictions",
            s.sent_id(),
            s.predicates().len(),
            preds.len()
        )));
    }
    let mut c = EvalCounts::default();
    for (j, pred) in preds.iter().enumerate() {
        for case in Case::ALL {
            c.add_slot(case, s.annotation(j, case), pred.get(case));
        }
    }
    Ok(c)
}

/// Precision, recall and F1 of every bucket, derived from raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: EvalCounts,
}

const BUCKET_CASES: [(&str, Option<Case>); 4] = [
    ("all", None),
    ("nom", Some(Case::Nom)),
    ("acc", Some(Case::Acc)),
    ("dat", Some(Case::Dat)),
];

impl EvalReport {
    pub fn new(counts: EvalCounts) -> Self {
        EvalReport { counts }
    }

    pub fn zar_f1(&self) -> f64 {
        self.counts.total(AnaphoraType::Zar).f1()
    }

    pub fn dep_f1(&self) -> f64 {
        self.counts.total(AnaphoraType::Dep).f1()
    }

    pub fn all_f1(&self) -> f64 {
        self.counts.all().f1()
    }

    /// Every bucket as `(key prefix, counts)`, e.g. `("zar.nom", ..)`.
    pub fn buckets(&self) -> Vec<(String, Counts)> {
        let mut out = Vec::new();
        for (ty, tname) in [(AnaphoraType::Zar, "zar"), (AnaphoraType::Dep, "dep")] {
            for (cname, case) in BUCKET_CASES {
                let c = match case {
                    None => self.counts.total(ty),
                    Some(case) => self.counts.bucket(ty, case),
                };
                out.push((format!("{tname}.{cname}"), c));
            }
        }
        out.push(("all".into(), self.counts.all()));
        out
    }

    /// Flat metric map: `<bucket>.p`, `<bucket>.r`, `<bucket>.f1`.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (k, c) in self.buckets() {
            m.insert(format!("{k}.p"), c.precision());
            m.insert(format!("{k}.r"), c.recall());
            m.insert(format!("{k}.f1"), c.f1());
        }
        m
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        for (k, v) in self.metrics() {
            obj.insert(k, json!(v));
        }
        for (k, c) in self.buckets() {
            obj.insert(format!("counts.{k}.tp"), json!(c.tp));
            obj.insert(format!("counts.{k}.fp"), json!(c.fp));
            obj.insert(format!("counts.{k}.fn"), json!(c.fn_));
        }
        Value::Object(obj)
    }

    /// Rebuilds a report from the `counts.*` keys of [`EvalReport::to_json`].
    pub fn from_json(v: &Value) -> Result<Self> {
        let get = |k: String| -> Result<u64> {
            v.get(&k)
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Config(format!("report is missing {k}")))
        };
        let mut counts = EvalCounts::default();
        for (ty, tname) in [(AnaphoraType::Zar, "zar"), (AnaphoraType::Dep, "dep")] {
            for case in Case::ALL {
                let k = format!("counts.{tname}.{}", case.as_str().to_lowercase());
                *counts.bucket_mut(ty, case) = Counts {
                    tp: get(format!("{k}.tp"))?,
                    fp: get(format!("{k}.fp"))?,
                    fn_: get(format!("{k}.fn"))?,
                };
            }
        }
        Ok(EvalReport { counts })
    }
}

/// Per-seed reports with their means and sample standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeedReport {
    pub runs: Vec<EvalReport>,
}

impl MultiSeedReport {
    pub fn new(runs: Vec<EvalReport>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Empty("no runs to aggregate".into()));
        }
        Ok(MultiSeedReport { runs })
    }

    pub fn mean(&self, key: &str) -> f64 {
        let v = self.values(key);
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Sample standard deviation (0 for a single run).
    pub fn sd(&self, key: &str) -> f64 {
        let v = self.values(key);
        if v.len() < 2 {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    fn values(&self, key: &str) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| r.metrics().get(key).copied().unwrap_or(0.0))
            .collect()
    }

    /// Mean metrics, `<bucket>.sd` for every F1 and the per-seed reports.
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        let keys: Vec<String> = self.runs[0].metrics().into_keys().collect();
        for k in keys {
            obj.insert(k.clone(), json!(self.mean(&k)));
            if let Some(bucket) = k.strip_suffix(".f1") {
                obj.insert(format!("{bucket}.sd"), json!(self.sd(&k)));
            }
        }
        obj.insert("seeds".into(), json!(self.runs.len()));
        obj.insert(
            "runs".into(),
            Value::Array(self.runs.iter().map(EvalReport::to_json).collect()),
        );
        Value::Object(obj)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let runs = v
            .get("runs")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Config("report has no runs".into()))?
            .iter()
            .map(EvalReport::from_json)
            .collect::<Result<Vec<_>>>()?;
        MultiSeedReport::new(runs)
    }
}

/// Aligned text table with columns ZAR (ALL NOM ACC DAT), DEP ALL, ALL, SD;
/// scores are percentages.
pub fn render_table(rows: &[(String, MultiSeedReport)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_w$} | {:^31} | {:>6} | {:>6} {:>6}",
        "", "ZAR", "DEP", "", ""
    );
    let _ = writeln!(
        out,
        "{:<name_w$} | {:>7} {:>7} {:>7} {:>7} | {:>6} | {:>6} {:>6}",
        "Method", "ALL", "NOM", "ACC", "DAT", "ALL", "ALL", "SD"
    );
    let _ = writeln!(out, "{}", "-".repeat(name_w + 58));
    for (name, rep) in rows {
        let pct = |k: &str| 100.0 * rep.mean(k);
        let sd = if rep.runs.len() > 1 {
            format!("±{:.2}", 100.0 * rep.sd("all.f1"))
        } else {
            "-".into()
        };
        let _ = writeln!(
            out,
            "{:<name_w$} | {:>7.2} {:>7.2} {:>7.2} {:>7.2} | {:>6.2} | {:>6.2} {:>6}",
            name,
            pct("zar.all.f1"),
            pct("zar.nom.f1"),
            pct("zar.acc.f1"),
            pct("zar.dat.f1"),
            pct("dep.all.f1"),
            pct("all.f1"),
            sd
        );
    }
    out
}
