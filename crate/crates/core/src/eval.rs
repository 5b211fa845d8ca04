//! Confusion matrices, F1, exact Mann–Whitney U and error-cell z statistics.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::blm::{Dataset, Split};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::pattern::VoiceLabel;
use crate::solver::{predict, SolverModel};

pub const CHANCE_LEVEL: f64 = 0.25;
pub const MAX_EXACT_SAMPLE: usize = 12;

/// Counts indexed by (gold target voice, predicted answer voice).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; 4]; 4]);

impl Index<(VoiceLabel, VoiceLabel)> for ConfusionMatrix {
    type Output = u64;
    fn index(&self, (g, p): (VoiceLabel, VoiceLabel)) -> &u64 {
        &self.0[g.index()][p.index()]
    }
}

impl IndexMut<(VoiceLabel, VoiceLabel)> for ConfusionMatrix {
    fn index_mut(&mut self, (g, p): (VoiceLabel, VoiceLabel)) -> &mut u64 {
        &mut self.0[g.index()][p.index()]
    }
}

impl ConfusionMatrix {
    pub fn row_sum(&self, gold: VoiceLabel) -> u64 {
        self.0[gold.index()].iter().sum()
    }

    pub fn col_sum(&self, pred: VoiceLabel) -> u64 {
        self.0.iter().map(|r| r[pred.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..4).map(|i| self.0[i][i]).sum();
        diag as f64 / total as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("gold");
        for v in VoiceLabel::ALL {
            s.push(',');
            s.push_str(v.as_str());
        }
        s.push('\n');
        for g in VoiceLabel::ALL {
            s.push_str(g.as_str());
            for p in VoiceLabel::ALL {
                let _ = write!(s, ",{}", self[(g, p)]);
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(golds: &[VoiceLabel], preds: &[VoiceLabel]) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::Argument(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (&g, &p) in golds.iter().zip(preds) {
        m[(g, p)] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub per_voice: [ClassScore; 4],
    pub macro_f1: f64,
}

impl F1Scores {
    pub fn f1(&self, v: VoiceLabel) -> f64 {
        self.per_voice[v.index()].f1
    }
}

fn ratio(num: u64, den: u64, what: &str, v: VoiceLabel) -> f64 {
    if den == 0 {
        log::info!("{what} of {v} is undefined (0/0); using 0");
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_scores(m: &ConfusionMatrix) -> F1Scores {
    let per_voice = VoiceLabel::ALL.map(|v| {
        let tp = m[(v, v)];
        let precision = ratio(tp, m.col_sum(v), "precision", v);
        let recall = ratio(tp, m.row_sum(v), "recall", v);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScore {
            precision,
            recall,
            f1,
        }
    });
    let macro_f1 = per_voice.iter().map(|c| c.f1).sum::<f64>() / 4.0;
    F1Scores {
        per_voice,
        macro_f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u: f64,
    pub p_two_sided: f64,
    pub r: f64,
    pub n1: usize,
    pub n2: usize,
}

fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided Mann–Whitney U test by enumerating every assignment of the
/// pooled midranks to the first sample.
pub fn mann_whitney_u(xs: &[f64], ys: &[f64]) -> Result<MannWhitney> {
    let (n1, n2) = (xs.len(), ys.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Argument("Mann-Whitney U needs two non-empty samples".into()));
    }
    if n1 > MAX_EXACT_SAMPLE || n2 > MAX_EXACT_SAMPLE {
        return Err(Error::Argument(format!(
            "exact Mann-Whitney U supports at most {MAX_EXACT_SAMPLE} values per sample, got {n1} and {n2}"
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Argument("Mann-Whitney U needs finite values".into()));
    }

    let mut u = 0.0;
    for x in xs {
        for y in ys {
            u += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }

    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;
    let observed = (u - mean).abs();
    let tol = 1e-9;

    let n = n1 + n2;
    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut chosen: Vec<usize> = (0..n1).collect();
    loop {
        let rank_sum: f64 = chosen.iter().map(|&i| ranks[i]).sum();
        if ((rank_sum - offset) - mean).abs() >= observed - tol {
            extreme += 1;
        }
        total += 1;
        // Next n1-combination of 0..n in lexicographic order.
        let Some(i) = (0..n1).rev().find(|&i| chosen[i] != i + n - n1) else {
            break;
        };
        chosen[i] += 1;
        for j in i + 1..n1 {
            chosen[j] = chosen[j - 1] + 1;
        }
    }

    Ok(MannWhitney {
        u,
        p_two_sided: extreme as f64 / total as f64,
        r: (2.0 * u / (n1 * n2) as f64 - 1.0).abs(),
        n1,
        n2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCellZ {
    pub gold: VoiceLabel,
    pub predicted: VoiceLabel,
    pub count: u64,
    pub n_errors: u64,
    pub share: f64,
    pub z: f64,
    pub p_two_sided: f64,
}

/// One-proportion z-test of a cell's share among its row's errors against
/// the uniform share 1/3.
pub fn error_cell_z(
    m: &ConfusionMatrix,
    gold: VoiceLabel,
    predicted: VoiceLabel,
) -> Result<ErrorCellZ> {
    if gold == predicted {
        return Err(Error::Argument(format!(
            "error cell needs two different voices, got {gold} twice"
        )));
    }
    let n_errors = m.row_sum(gold) - m[(gold, gold)];
    if n_errors == 0 {
        return Err(Error::UndefinedStatistic(format!(
            "row {gold} has no errors"
        )));
    }
    let count = m[(gold, predicted)];
    let share = count as f64 / n_errors as f64;
    let p0 = 1.0 / 3.0;
    let z = (share - p0) / (p0 * (1.0 - p0) / n_errors as f64).sqrt();
    let p_two_sided = statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok(ErrorCellZ {
        gold,
        predicted,
        count,
        n_errors,
        share,
        z,
        p_two_sided,
    })
}

/// Every defined off-diagonal cell statistic, row by row.
pub fn error_cells(m: &ConfusionMatrix) -> Vec<ErrorCellZ> {
    let mut out = Vec::new();
    for g in VoiceLabel::ALL {
        for p in VoiceLabel::ALL {
            if g != p {
                if let Ok(z) = error_cell_z(m, g, p) {
                    out.push(z);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dataset: String,
    pub model: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: F1Scores,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub chance_level: f64,
    pub error_cells: Vec<ErrorCellZ>,
    pub metadata: RunMetadata,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix, metadata: RunMetadata) -> Self {
        EvalReport {
            f1: f1_scores(&confusion),
            accuracy: confusion.accuracy(),
            error_cells: error_cells(&confusion),
            confusion,
            chance_level: CHANCE_LEVEL,
            metadata,
        }
    }

    pub fn f1_csv(&self) -> String {
        let mut s = String::from("voice,precision,recall,f1\n");
        for v in VoiceLabel::ALL {
            let c = self.f1.per_voice[v.index()];
            let _ = writeln!(s, "{v},{:.6},{:.6},{:.6}", c.precision, c.recall, c.f1);
        }
        let _ = writeln!(s, "macro,,,{:.6}", self.f1.macro_f1);
        s
    }

    pub fn stats_csv(&self) -> String {
        let mut s = String::from("statistic,gold,predicted,count,n,value,p_two_sided,method\n");
        let _ = writeln!(s, "accuracy,,,,{},{:.6},,", self.confusion.total(), self.accuracy);
        let _ = writeln!(s, "chance,,,,,{:.2},,", self.chance_level);
        for c in &self.error_cells {
            let _ = writeln!(
                s,
                "error_cell_z,{},{},{},{},{:.6},{:.6},reconstruction",
                c.gold, c.predicted, c.count, c.n_errors, c.z, c.p_two_sided
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let m = &self.metadata;
        let _ = writeln!(s, "# Evaluation\n");
        let _ = writeln!(s, "- dataset: `{}`", m.dataset);
        let _ = writeln!(s, "- model: `{}`", m.model);
        let seeds: Vec<String> = m.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "- seeds: {}", seeds.join(", "));
        let _ = writeln!(s, "- test instances: {}", self.confusion.total());
        let _ = writeln!(s, "- accuracy: {:.4}", self.accuracy);
        let _ = writeln!(s, "- macro F1: {:.4}", self.f1.macro_f1);
        let _ = writeln!(s, "- chance level: {:.2}\n", self.chance_level);

        let _ = writeln!(s, "## F1 per voice\n");
        let _ = writeln!(s, "| voice | precision | recall | F1 |");
        let _ = writeln!(s, "|---|---|---|---|");
        for v in VoiceLabel::ALL {
            let c = self.f1.per_voice[v.index()];
            let _ = writeln!(s, "| {v} | {:.4} | {:.4} | {:.4} |", c.precision, c.recall, c.f1);
        }

        let _ = writeln!(s, "\n## Confusion matrix (rows gold, columns predicted)\n");
        let head: Vec<&str> = VoiceLabel::ALL.iter().map(|v| v.as_str()).collect();
        let _ = writeln!(s, "| gold | {} |", head.join(" | "));
        let _ = writeln!(s, "|---{}|", "|---".repeat(4));
        for g in VoiceLabel::ALL {
            let row: Vec<String> = VoiceLabel::ALL
                .iter()
                .map(|&p| self.confusion[(g, p)].to_string())
                .collect();
            let _ = writeln!(s, "| {g} | {} |", row.join(" | "));
        }

        if !self.error_cells.is_empty() {
            let _ = writeln!(
                s,
                "\n## Error cells (one-proportion z against 1/3, reconstruction)\n"
            );
            let _ = writeln!(s, "| gold | predicted | count | errors | z | p |");
            let _ = writeln!(s, "|---|---|---|---|---|---|");
            for c in &self.error_cells {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {:.3} | {:.4} |",
                    c.gold, c.predicted, c.count, c.n_errors, c.z, c.p_two_sided
                );
            }
        }
        s
    }
}

/// Gold target voices and predicted answer voices over the test split.
pub fn predictions(
    model: &SolverModel,
    dataset: &Dataset,
    store: &EmbeddingStore,
) -> Result<(Vec<VoiceLabel>, Vec<VoiceLabel>)> {
    let mut golds = Vec::new();
    let mut preds = Vec::new();
    for inst in dataset.in_split(Split::Test) {
        let j = predict(model, inst, dataset.variant, store)?;
        golds.push(inst.target_voice);
        preds.push(inst.answers[j].voice);
    }
    Ok((golds, preds))
}

pub fn evaluate(
    model: &SolverModel,
    dataset: &Dataset,
    store: &EmbeddingStore,
    metadata: RunMetadata,
) -> Result<EvalReport> {
    let (golds, preds) = predictions(model, dataset, store)?;
    if golds.is_empty() {
        return Err(Error::Config(format!(
            "dataset {} has no test instances",
            dataset.name
        )));
    }
    Ok(EvalReport::from_confusion(confusion(&golds, &preds)?, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use VoiceLabel::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let golds: Vec<VoiceLabel> = VoiceLabel::ALL
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, 200))
            .collect();
        let m = confusion(&golds, &golds).unwrap();
        assert_eq!(m.0, [[200, 0, 0, 0], [0, 200, 0, 0], [0, 0, 200, 0], [0, 0, 0, 200]]);
        let f = f1_scores(&m);
        assert!(f.per_voice.iter().all(|c| c.f1 == 1.0));
        assert_eq!(f.macro_f1, 1.0);
    }

    #[test]
    fn all_pass_fills_one_column() {
        let golds = vec![Act, Pass, Caus, CausPass, Act];
        let preds = vec![Pass; 5];
        let m = confusion(&golds, &preds).unwrap();
        assert_eq!(m.col_sum(Pass), 5);
        assert_eq!(m.total(), 5);
        let f = f1_scores(&m);
        assert_eq!(f.f1(Act), 0.0);
        assert!((f.f1(Pass) - 2.0 * 0.2 / 1.2).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(confusion(&[Act], &[]).is_err());
    }

    #[test]
    fn hand_computed_f1() {
        let m = ConfusionMatrix([[50, 150, 0, 0], [0, 200, 0, 0], [0, 0, 200, 0], [0, 0, 0, 200]]);
        let f = f1_scores(&m);
        assert!((f.f1(Act) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn separated_groups_of_four() {
        let r = mann_whitney_u(&[0.9, 0.8, 0.85, 0.7], &[0.3, 0.35, 0.2, 0.33]).unwrap();
        assert_eq!(r.u, 16.0);
        assert!((r.p_two_sided - 2.0 / 70.0).abs() < 1e-12);
        assert_eq!(r.r, 1.0);
    }

    #[test]
    fn single_tie() {
        let r = mann_whitney_u(&[0.5], &[0.5]).unwrap();
        assert_eq!(r.u, 0.5);
        assert_eq!(r.r, 0.0);
        assert_eq!(r.p_two_sided, 1.0);
    }

    #[test]
    fn mann_whitney_bounds() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
        assert!(mann_whitney_u(&[1.0; 13], &[1.0]).is_err());
        assert!(mann_whitney_u(&[f64::NAN], &[1.0]).is_err());
        assert!(mann_whitney_u(&[1.0; 12], &[2.0; 12]).is_ok());
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn row_with(errors: [u64; 3]) -> ConfusionMatrix {
        ConfusionMatrix([
            [100, errors[0], errors[1], errors[2]],
            [0, 1, 0, 0],
            [0, 0, 1, 0],
            [0, 0, 0, 1],
        ])
    }

    #[test]
    fn error_cell_examples() {
        let z = error_cell_z(&row_with([20, 20, 20]), Act, Pass).unwrap();
        assert!(z.z.abs() < 1e-12);
        assert!((z.p_two_sided - 1.0).abs() < 1e-12);

        let z = error_cell_z(&row_with([40, 10, 10]), Act, Pass).unwrap();
        assert!((z.z - 5.477225575051661).abs() < 1e-9);

        let z = error_cell_z(&row_with([0, 15, 15]), Act, Pass).unwrap();
        assert!((z.z + 3.872983346207417).abs() < 1e-9);
        assert!(z.p_two_sided < 0.001);
    }

    #[test]
    fn error_cell_without_errors_is_undefined() {
        let e = error_cell_z(&row_with([0, 0, 0]), Act, Pass).unwrap_err();
        assert_eq!(e.code(), "eval.undefined");
        assert!(error_cell_z(&row_with([1, 0, 0]), Act, Act).is_err());
    }

    #[test]
    fn report_outputs() {
        let m = row_with([40, 10, 10]);
        let r = EvalReport::from_confusion(m, RunMetadata::default());
        assert_eq!(r.chance_level, 0.25);
        assert_eq!(r.f1_csv().lines().count(), 6);
        assert!(r.stats_csv().contains("error_cell_z,Act,Pass,40,60"));
        assert!(r.to_markdown().contains("reconstruction"));
        assert_eq!(m.to_csv().lines().next(), Some("gold,Act,Pass,Caus,CausPass"));
    }
}
