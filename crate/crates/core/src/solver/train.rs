use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::SolverModel;
use crate::blm::{BlmInstance, Dataset, Split, Variant, ANSWER_COUNT};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::pattern::VoiceLabel;

/// How the per-distractor hinge terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossAgg {
    #[default]
    Sum,
    Max,
}

/// Which train instances a run sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TrainScope {
    #[default]
    All,
    TargetVoice(VoiceLabel),
}

impl TrainScope {
    pub fn admits(self, instance: &BlmInstance) -> bool {
        match self {
            TrainScope::All => true,
            TrainScope::TargetVoice(v) => instance.target_voice == v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub loss_agg: LossAgg,
    pub scope: TrainScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            margin: 0.5,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
            shuffle: true,
            loss_agg: LossAgg::Sum,
            scope: TrainScope::All,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("cosine of a zero-norm vector".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Cosine and its gradient with respect to `p`.
fn cosine_grad(p: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (np, na) = (norm(p), norm(a));
    if np == 0.0 || na == 0.0 {
        return Err(Error::Numeric("cosine of a zero-norm vector".into()));
    }
    let c = p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() / (np * na);
    let g = p
        .iter()
        .zip(a)
        .map(|(pi, ai)| ai / (np * na) - c * pi / (np * np))
        .collect();
    Ok((c, g))
}

fn check_answers<A: AsRef<[f64]>>(pred: &[f64], answers: &[A], correct: usize) -> Result<()> {
    if answers.len() != ANSWER_COUNT {
        return Err(Error::Argument(format!(
            "expected {ANSWER_COUNT} answers, got {}",
            answers.len()
        )));
    }
    if correct >= ANSWER_COUNT {
        return Err(Error::Argument(format!("correct index {correct} out of range")));
    }
    if let Some(a) = answers.iter().find(|a| a.as_ref().len() != pred.len()) {
        return Err(Error::Argument(format!(
            "answer dim {} differs from prediction dim {}",
            a.as_ref().len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Max-margin loss over the three distractors:
/// `Σ_{j≠c} max(0, margin − cos(p, a_c) + cos(p, a_j))` (or the max of the
/// terms with [`LossAgg::Max`]).
pub fn loss<A: AsRef<[f64]>>(
    pred: &[f64],
    answers: &[A],
    correct: usize,
    margin: f64,
    agg: LossAgg,
) -> Result<f64> {
    check_answers(pred, answers, correct)?;
    let cos: Vec<f64> = answers
        .iter()
        .map(|a| cosine(pred, a.as_ref()))
        .collect::<Result<_>>()?;
    let terms = (0..ANSWER_COUNT)
        .filter(|&j| j != correct)
        .map(|j| (margin - cos[correct] + cos[j]).max(0.0));
    Ok(match agg {
        LossAgg::Sum => terms.sum(),
        LossAgg::Max => terms.fold(0.0, f64::max),
    })
}

/// Loss and its gradient with respect to the prediction.
pub fn loss_grad<A: AsRef<[f64]>>(
    pred: &[f64],
    answers: &[A],
    correct: usize,
    margin: f64,
    agg: LossAgg,
) -> Result<(f64, Vec<f64>)> {
    check_answers(pred, answers, correct)?;
    let mut cos = Vec::with_capacity(ANSWER_COUNT);
    let mut grads = Vec::with_capacity(ANSWER_COUNT);
    for a in answers {
        let (c, g) = cosine_grad(pred, a.as_ref())?;
        cos.push(c);
        grads.push(g);
    }
    let hinge = |j: usize| margin - cos[correct] + cos[j];
    let active: Vec<usize> = match agg {
        LossAgg::Sum => (0..ANSWER_COUNT)
            .filter(|&j| j != correct && hinge(j) > 0.0)
            .collect(),
        LossAgg::Max => {
            let mut best: Option<usize> = None;
            for j in (0..ANSWER_COUNT).filter(|&j| j != correct) {
                if hinge(j) > 0.0 && best.is_none_or(|b| hinge(j) > hinge(b)) {
                    best = Some(j);
                }
            }
            best.into_iter().collect()
        }
    };
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for &j in &active {
        value += hinge(j);
        for ((g, gj), gc) in grad.iter_mut().zip(&grads[j]).zip(&grads[correct]) {
            *g += gj - gc;
        }
    }
    Ok((value, grad))
}

/// Parameter gradient of an instance's loss, flattened like
/// [`SolverModel::params`].
pub fn param_grad<A: AsRef<[f64]>>(
    model: &SolverModel,
    input: &[f64],
    answers: &[A],
    correct: usize,
    margin: f64,
    agg: LossAgg,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.n_params()];
    let value = accumulate_grad(model, input, answers, correct, margin, agg, &mut grad)?;
    Ok((value, grad))
}

fn accumulate_grad<A: AsRef<[f64]>>(
    model: &SolverModel,
    input: &[f64],
    answers: &[A],
    correct: usize,
    margin: f64,
    agg: LossAgg,
    grad: &mut [f64],
) -> Result<f64> {
    let acts = model.activations(input);
    let out = acts.last().expect("output");
    let (value, mut delta) = loss_grad(out, answers, correct, margin, agg)?;
    if value == 0.0 {
        return Ok(0.0);
    }

    let offsets: Vec<usize> = model
        .layers
        .iter()
        .scan(0, |acc, l| {
            let o = *acc;
            *acc += l.weights.len() + l.bias.len();
            Some(o)
        })
        .collect();
    for (li, layer) in model.layers.iter().enumerate().rev() {
        let x = &acts[li];
        let off = offsets[li];
        let (gw, gb) = grad[off..off + layer.weights.len() + layer.bias.len()]
            .split_at_mut(layer.weights.len());
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            gb[o] += d;
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if li == 0 {
            break;
        }
        // Back through this layer's weights, then the tanh of the layer below.
        let mut below = vec![0.0; layer.inputs];
        for (o, d) in delta.iter().enumerate() {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (b, w) in below.iter_mut().zip(row) {
                *b += d * w;
            }
        }
        for (b, a) in below.iter_mut().zip(x) {
            *b *= 1.0 - a * a;
        }
        delta = below;
    }
    Ok(value)
}

/// Inputs and answer vectors of one instance, resolved from the store.
pub struct Prepared {
    pub input: Vec<f64>,
    pub answers: Vec<Vec<f64>>,
    pub correct: usize,
}

fn lookup<'s>(store: &'s EmbeddingStore, inst: &BlmInstance, key: &str) -> Result<&'s [f32]> {
    store.get(key).ok_or_else(|| Error::MissingEmbedding {
        instance: inst.instance_id.clone(),
        key: key.to_string(),
    })
}

pub fn prepare(
    model: &SolverModel,
    inst: &BlmInstance,
    variant: Variant,
    store: &EmbeddingStore,
) -> Result<Prepared> {
    if store.dim() != model.dim {
        return Err(Error::Argument(format!(
            "embedding dim {} differs from model dim {}",
            store.dim(),
            model.dim
        )));
    }
    let context = inst
        .context
        .iter()
        .map(|s| lookup(store, inst, &s.embedding_key(variant)))
        .collect::<Result<Vec<_>>>()?;
    let answers = inst
        .answers
        .iter()
        .map(|s| {
            lookup(store, inst, &s.embedding_key(variant))
                .map(|v| v.iter().map(|&x| f64::from(x)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        input: model.stack(&context)?,
        answers,
        correct: inst.correct_index,
    })
}

/// Mini-batch gradient descent on the train split of `dataset`.
///
/// Returns the trained model and the mean loss of every epoch.
pub fn train(
    model: SolverModel,
    dataset: &Dataset,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> Result<(SolverModel, Vec<f64>)> {
    let instances: Vec<&BlmInstance> = dataset
        .in_split(Split::Train)
        .filter(|i| cfg.scope.admits(i))
        .collect();
    train_on(model, &instances, dataset.variant, store, cfg)
}

pub fn train_on(
    mut model: SolverModel,
    instances: &[&BlmInstance],
    variant: Variant,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> Result<(SolverModel, Vec<f64>)> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(Error::Config("no training instances".into()));
    }
    let data = instances
        .iter()
        .map(|i| prepare(&model, i, variant, store))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = model.params();
    let mut grad = vec![0.0; params.len()];
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let d = &data[i];
                total += accumulate_grad(
                    &model,
                    &d.input,
                    &d.answers,
                    d.correct,
                    cfg.margin,
                    cfg.loss_agg,
                    &mut grad,
                )?;
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
            model.set_params(&params)?;
        }
        if !model.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in epoch {}", epoch + 1)));
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {}: mean loss {mean:.6}", epoch + 1);
        history.push(mean);
    }
    Ok((model, history))
}

/// Index of the answer with the highest cosine to the model output; ties go
/// to the lowest index.
pub fn select_answer<A: AsRef<[f64]>>(pred: &[f64], answers: &[A]) -> Result<usize> {
    let mut best = 0;
    let mut best_cos = f64::NEG_INFINITY;
    for (j, a) in answers.iter().enumerate() {
        let c = cosine(pred, a.as_ref())?;
        if c > best_cos {
            best = j;
            best_cos = c;
        }
    }
    Ok(best)
}

pub fn predict(
    model: &SolverModel,
    instance: &BlmInstance,
    variant: Variant,
    store: &EmbeddingStore,
) -> Result<usize> {
    let p = prepare(model, instance, variant, store)?;
    let out = model.forward_stacked(&p.input);
    select_answer(&out, &p.answers)
}

/// Loss history as `epoch,mean_loss` CSV.
pub fn history_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{l:.12}\n", i + 1));
    }
    s
}
