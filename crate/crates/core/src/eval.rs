//! Labeled-span scoring with a relaxed error taxonomy.
//!
//! Gold and predicted spans of a sentence are pooled across relations and
//! matched one-to-one. Each matched pair falls into one category:
//!
//! | range   | role      | category |
//! |---------|-----------|----------|
//! | equal   | equal     | TP       |
//! | equal   | different | LE       |
//! | overlap | equal     | BE       |
//! | overlap | different | LBE      |
//!
//! Unmatched gold spans are FN and unmatched predictions FP. Fair scoring
//! gives boundary errors half credit and label errors none, each error
//! counted once; strict scoring accepts only TP.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CausalRelation, Corpus, Role};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction id `{0}` not present in gold corpus")]
    UnknownPredictionId(String),
}

/// Role plus token range `[start, end)`; orders by role, start, end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PooledSpan {
    pub role: Role,
    pub start: usize,
    pub end: usize,
}

impl PooledSpan {
    pub fn new(role: Role, start: usize, end: usize) -> Self {
        PooledSpan { role, start, end }
    }

    fn overlaps(&self, other: &PooledSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Flattens relations into a deduplicated, sorted span set.
pub fn pool_spans(relations: &[CausalRelation]) -> Vec<PooledSpan> {
    relations
        .iter()
        .flat_map(|r| r.spans())
        .map(|s| PooledSpan::new(s.role, s.start_tok, s.end_tok))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchCategory {
    Tp,
    Le,
    Be,
    Lbe,
    NoMatch,
}

pub fn classify_match(gold: &PooledSpan, pred: &PooledSpan) -> MatchCategory {
    let same_range = gold.start == pred.start && gold.end == pred.end;
    let same_role = gold.role == pred.role;
    match (same_range, same_role, gold.overlaps(pred)) {
        (true, true, _) => MatchCategory::Tp,
        (true, false, _) => MatchCategory::Le,
        (false, true, true) => MatchCategory::Be,
        (false, false, true) => MatchCategory::Lbe,
        (false, _, false) => MatchCategory::NoMatch,
    }
}

/// Category counts of a matching, compared lexicographically (TP first).
pub type MatchScore = [usize; 4];

fn category_slot(c: MatchCategory) -> Option<usize> {
    match c {
        MatchCategory::Tp => Some(0),
        MatchCategory::Le => Some(1),
        MatchCategory::Be => Some(2),
        MatchCategory::Lbe => Some(3),
        MatchCategory::NoMatch => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceMatch {
    /// (gold index, pred index, category)
    pub pairs: Vec<(usize, usize, MatchCategory)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

impl SentenceMatch {
    pub fn score(&self) -> MatchScore {
        let mut s = [0; 4];
        for (_, _, c) in &self.pairs {
            if let Some(i) = category_slot(*c) {
                s[i] += 1;
            }
        }
        s
    }
}

/// Largest `|gold| * |pred|` solved exactly.
pub const EXACT_MATCH_LIMIT: usize = 64;

/// One-to-one matching maximizing (TP, LE, BE, LBE) lexicographically.
///
/// Small instances are solved exactly by search over pred subsets; larger
/// ones greedily, category by category, leftmost pair first.
pub fn match_sentence(gold: &[PooledSpan], pred: &[PooledSpan]) -> SentenceMatch {
    let cats: Vec<Vec<MatchCategory>> = gold
        .iter()
        .map(|g| pred.iter().map(|p| classify_match(g, p)).collect())
        .collect();
    let assignment = if gold.len() * pred.len() <= EXACT_MATCH_LIMIT {
        exact_assignment(&cats, pred.len())
    } else {
        greedy_assignment(&cats, pred.len())
    };
    let mut m = SentenceMatch::default();
    let mut used = vec![false; pred.len()];
    for (g, a) in assignment.iter().enumerate() {
        match a {
            Some(p) => {
                used[*p] = true;
                m.pairs.push((g, *p, cats[g][*p]));
            }
            None => m.unmatched_gold.push(g),
        }
    }
    m.unmatched_pred = (0..pred.len()).filter(|&p| !used[p]).collect();
    m
}

fn add(a: MatchScore, b: MatchScore) -> MatchScore {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn exact_assignment(cats: &[Vec<MatchCategory>], n_pred: usize) -> Vec<Option<usize>> {
    // Best achievable score for gold[i..] given used-pred mask; at most 64 preds.
    fn best(
        i: usize,
        used: u64,
        cats: &[Vec<MatchCategory>],
        n_pred: usize,
        memo: &mut HashMap<(usize, u64), MatchScore>,
    ) -> MatchScore {
        if i == cats.len() {
            return [0; 4];
        }
        if let Some(&s) = memo.get(&(i, used)) {
            return s;
        }
        let mut top = best(i + 1, used, cats, n_pred, memo);
        for p in 0..n_pred {
            if used & (1 << p) != 0 {
                continue;
            }
            if let Some(slot) = category_slot(cats[i][p]) {
                let mut s = best(i + 1, used | (1 << p), cats, n_pred, memo);
                s[slot] += 1;
                if s > top {
                    top = s;
                }
            }
        }
        memo.insert((i, used), top);
        top
    }

    let mut memo = HashMap::new();
    let mut out = Vec::with_capacity(cats.len());
    let mut used = 0u64;
    for i in 0..cats.len() {
        let target = best(i, used, cats, n_pred, &mut memo);
        // Lowest pred index reaching the optimum; unmatched only if nothing does.
        let mut choice = None;
        for p in 0..n_pred {
            if used & (1 << p) != 0 {
                continue;
            }
            if let Some(slot) = category_slot(cats[i][p]) {
                let mut unit = [0; 4];
                unit[slot] = 1;
                if add(unit, best(i + 1, used | (1 << p), cats, n_pred, &mut memo)) == target {
                    choice = Some(p);
                    break;
                }
            }
        }
        if let Some(p) = choice {
            used |= 1 << p;
        }
        out.push(choice);
    }
    out
}

fn greedy_assignment(cats: &[Vec<MatchCategory>], n_pred: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; cats.len()];
    let mut used = vec![false; n_pred];
    for want in [
        MatchCategory::Tp,
        MatchCategory::Le,
        MatchCategory::Be,
        MatchCategory::Lbe,
    ] {
        for (g, row) in cats.iter().enumerate() {
            if out[g].is_some() {
                continue;
            }
            if let Some(p) = (0..n_pred).find(|&p| !used[p] && row[p] == want) {
                used[p] = true;
                out[g] = Some(p);
            }
        }
    }
    out
}

/// Error taxonomy counts for one role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub be: usize,
    pub le_pred: usize,
    pub le_gold: usize,
    pub lbe_pred: usize,
    pub lbe_gold: usize,
}

impl RoleCounts {
    pub fn gold_total(&self) -> usize {
        self.tp + self.be + self.le_gold + self.lbe_gold + self.fn_
    }

    pub fn pred_total(&self) -> usize {
        self.tp + self.be + self.le_pred + self.lbe_pred + self.fp
    }

    fn merge(&mut self, o: &RoleCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.be += o.be;
        self.le_pred += o.le_pred;
        self.le_gold += o.le_gold;
        self.lbe_pred += o.lbe_pred;
        self.lbe_gold += o.lbe_gold;
    }
}

/// Counts per role, indexed by [`Role::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub cause: RoleCounts,
    pub effect: RoleCounts,
    pub signal: RoleCounts,
}

impl ErrorCounts {
    pub fn role(&self, role: Role) -> &RoleCounts {
        match role {
            Role::Cause => &self.cause,
            Role::Effect => &self.effect,
            Role::Signal => &self.signal,
        }
    }

    pub fn role_mut(&mut self, role: Role) -> &mut RoleCounts {
        match role {
            Role::Cause => &mut self.cause,
            Role::Effect => &mut self.effect,
            Role::Signal => &mut self.signal,
        }
    }

    pub fn merge(&mut self, other: &ErrorCounts) {
        for role in Role::ALL {
            self.role_mut(role).merge(other.role(role));
        }
    }

    pub fn is_empty(&self) -> bool {
        Role::ALL
            .iter()
            .all(|&r| self.role(r).gold_total() == 0 && self.role(r).pred_total() == 0)
    }
}

/// Counts for one sentence's pooled spans.
pub fn count_errors(gold: &[PooledSpan], pred: &[PooledSpan]) -> ErrorCounts {
    let m = match_sentence(gold, pred);
    let mut c = ErrorCounts::default();
    for &(g, p, cat) in &m.pairs {
        let (gr, pr) = (gold[g].role, pred[p].role);
        match cat {
            MatchCategory::Tp => c.role_mut(gr).tp += 1,
            MatchCategory::Be => c.role_mut(gr).be += 1,
            MatchCategory::Le => {
                c.role_mut(gr).le_gold += 1;
                c.role_mut(pr).le_pred += 1;
            }
            MatchCategory::Lbe => {
                c.role_mut(gr).lbe_gold += 1;
                c.role_mut(pr).lbe_pred += 1;
            }
            MatchCategory::NoMatch => unreachable!("matched pairs always overlap"),
        }
    }
    for &g in &m.unmatched_gold {
        c.role_mut(gold[g].role).fn_ += 1;
    }
    for &p in &m.unmatched_pred {
        c.role_mut(pred[p].role).fp += 1;
    }
    c
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_ratios(tp_p: f64, denom_p: f64, tp_r: f64, denom_r: f64) -> Prf {
        let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let precision = div(tp_p, denom_p);
        let recall = div(tp_r, denom_r);
        Prf {
            precision,
            recall,
            f1: div(2.0 * precision * recall, precision + recall),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Fair,
    Strict,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fair" => Ok(EvalMode::Fair),
            "strict" => Ok(EvalMode::Strict),
            other => Err(format!("unknown evaluation mode `{other}`")),
        }
    }
}

pub fn fair_role_scores(c: &RoleCounts) -> Prf {
    let credit = c.tp as f64 + 0.5 * c.be as f64;
    Prf::from_ratios(
        credit,
        (c.tp + c.be + c.fp + c.le_pred + c.lbe_pred) as f64,
        credit,
        (c.tp + c.be + c.fn_ + c.le_gold + c.lbe_gold) as f64,
    )
}

pub fn strict_role_scores(c: &RoleCounts) -> Prf {
    let tp = c.tp as f64;
    Prf::from_ratios(tp, c.pred_total() as f64, tp, c.gold_total() as f64)
}

/// Per-role scores indexed by [`Role::index`].
pub fn fair_scores(counts: &ErrorCounts) -> [Prf; 3] {
    Role::ALL.map(|r| fair_role_scores(counts.role(r)))
}

pub fn strict_scores(counts: &ErrorCounts) -> [Prf; 3] {
    Role::ALL.map(|r| strict_role_scores(counts.role(r)))
}

pub fn scores(counts: &ErrorCounts, mode: EvalMode) -> [Prf; 3] {
    match mode {
        EvalMode::Fair => fair_scores(counts),
        EvalMode::Strict => strict_scores(counts),
    }
}

/// Mean P, R, F1 over the roles that occur in gold or prediction.
pub fn macro_average(counts: &ErrorCounts, per_role: &[Prf; 3]) -> Prf {
    let present: Vec<&Prf> = Role::ALL
        .iter()
        .filter(|&&r| counts.role(r).gold_total() + counts.role(r).pred_total() > 0)
        .map(|r| &per_role[r.index()])
        .collect();
    if present.is_empty() {
        return Prf::default();
    }
    let n = present.len() as f64;
    Prf {
        precision: present.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: present.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: present.iter().map(|p| p.f1).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBlock {
    pub sentences: usize,
    pub cause: Prf,
    pub effect: Prf,
    pub signal: Prf,
    pub macro_avg: Prf,
    pub counts: ErrorCounts,
}

impl ScoreBlock {
    fn new(counts: ErrorCounts, sentences: usize, mode: EvalMode) -> Self {
        let per_role = scores(&counts, mode);
        ScoreBlock {
            sentences,
            cause: per_role[0],
            effect: per_role[1],
            signal: per_role[2],
            macro_avg: macro_average(&counts, &per_role),
            counts,
        }
    }

    pub fn role(&self, role: Role) -> &Prf {
        match role {
            Role::Cause => &self.cause,
            Role::Effect => &self.effect,
            Role::Signal => &self.signal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub overall: ScoreBlock,
    /// Keyed "1", "2", "3+" by gold relation count.
    pub by_relation_count: Vec<(String, ScoreBlock)>,
    pub evaluated: usize,
    pub skipped: usize,
    /// Gold-causal sentences without a prediction record; scored as all FN.
    pub missing_predictions: Vec<String>,
}

fn bucket(n: usize) -> usize {
    n.min(3) - 1
}

const BUCKETS: [&str; 3] = ["1", "2", "3+"];

/// Scores predictions against gold on gold-causal sentences only.
pub fn evaluate(gold: &Corpus, pred: &Corpus, mode: EvalMode) -> Result<EvalReport, EvalError> {
    let gold_ids: HashMap<&str, ()> = gold.sentences.iter().map(|s| (s.id.as_str(), ())).collect();
    if let Some(bad) = pred
        .sentences
        .iter()
        .find(|s| !gold_ids.contains_key(s.id.as_str()))
    {
        return Err(EvalError::UnknownPredictionId(bad.id.clone()));
    }
    let pred_by_id: HashMap<&str, &[CausalRelation]> = pred
        .sentences
        .iter()
        .map(|s| (s.id.as_str(), s.relations.as_slice()))
        .collect();

    let mut overall = ErrorCounts::default();
    let mut buckets = [ErrorCounts::default(); 3];
    let mut bucket_sizes = [0usize; 3];
    let mut evaluated = 0;
    let mut skipped = 0;
    let mut missing = Vec::new();
    for s in &gold.sentences {
        if s.relations.is_empty() {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        let predicted = match pred_by_id.get(s.id.as_str()) {
            Some(r) => *r,
            None => {
                missing.push(s.id.clone());
                &[]
            }
        };
        let c = count_errors(&pool_spans(&s.relations), &pool_spans(predicted));
        overall.merge(&c);
        let b = bucket(s.relations.len());
        buckets[b].merge(&c);
        bucket_sizes[b] += 1;
    }
    for id in &missing {
        log::warn!("no prediction for gold-causal sentence {id}; spans counted as FN");
    }
    Ok(EvalReport {
        mode,
        overall: ScoreBlock::new(overall, evaluated, mode),
        by_relation_count: (0..3)
            .map(|b| {
                (
                    BUCKETS[b].to_string(),
                    ScoreBlock::new(buckets[b], bucket_sizes[b], mode),
                )
            })
            .collect(),
        evaluated,
        skipped,
        missing_predictions: missing,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            EvalMode::Fair => "fair",
            EvalMode::Strict => "strict",
        };
        writeln!(
            f,
            "mode: {mode}  evaluated: {}  skipped (non-causal): {}  missing predictions: {}",
            self.evaluated,
            self.skipped,
            self.missing_predictions.len()
        )?;
        writeln!(f, "{:<8} {:>7} {:>7} {:>7}", "role", "P", "R", "F1")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, p: &Prf| {
            writeln!(
                f,
                "{:<8} {:>7.1} {:>7.1} {:>7.1}",
                name,
                100.0 * p.precision,
                100.0 * p.recall,
                100.0 * p.f1
            )
        };
        for role in Role::ALL {
            row(f, &role.to_string(), self.overall.role(role))?;
        }
        row(f, "avg", &self.overall.macro_avg)?;
        writeln!(f)?;
        writeln!(f, "F1 by gold relations per sentence")?;
        writeln!(
            f,
            "{:<6} {:>5} {:>7} {:>7} {:>7}",
            "rels", "n", "Cause", "Effect", "Signal"
        )?;
        for (name, block) in &self.by_relation_count {
            writeln!(
                f,
                "{:<6} {:>5} {:>7.1} {:>7.1} {:>7.1}",
                name,
                block.sentences,
                100.0 * block.cause.f1,
                100.0 * block.effect.f1,
                100.0 * block.signal.f1
            )?;
        }
        Ok(())
    }
}
