//! Plaintext federated-learning machinery: model vectors, the FedAvg
//! oracle, a synthetic logistic-regression task and its local trainer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::crypto::DEFAULT_MAX_WEIGHT;
use crate::error::{Error, Result};
use crate::seed::derive_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVector {
    pub owner: usize,
    pub sample_count: u64,
    pub weights: Vec<f64>,
}

impl ModelVector {
    pub fn new(owner: usize, sample_count: u64, weights: Vec<f64>) -> Self {
        Self {
            owner,
            sample_count,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `Σ (N_i/N)·W_i`.
pub fn fedavg_oracle(models: &[ModelVector]) -> Result<ModelVector> {
    let first = models.first().ok_or_else(|| Error::Config("no models to average".into()))?;
    let m = first.len();
    if let Some(bad) = models.iter().find(|w| w.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    let total: u64 = models.iter().map(|w| w.sample_count).sum();
    if total == 0 {
        return Err(Error::Config("total sample count is zero".into()));
    }
    let mut out = vec![0.0; m];
    for w in models {
        let frac = w.sample_count as f64 / total as f64;
        for (o, x) in out.iter_mut().zip(&w.weights) {
            *o += frac * x;
        }
    }
    Ok(ModelVector::new(0, total, out))
}

pub fn dump_csv(models: &[ModelVector]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for model in models {
        let mut row = vec![model.owner.to_string(), model.sample_count.to_string()];
        row.extend(model.weights.iter().map(|x| x.to_string()));
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

// ---------------------------------------------------------------------------
// Synthetic task

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&y| y == 1).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub clients: usize,
    pub dim: usize,
    pub samples_per_client: usize,
    pub test_samples: usize,
    /// 1 is IID; towards 0 each client sees mostly one class.
    pub alpha: f64,
    /// Points closer than this to the true hyperplane are rejected.
    pub margin: f64,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            clients: 3,
            dim: 10,
            samples_per_client: 200,
            test_samples: 1000,
            alpha: 1.0,
            margin: 0.1,
            seed: 0,
        }
    }
}

/// Linearly separable two-class data split across clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub true_weights: Vec<f64>,
    pub clients: Vec<Dataset>,
    pub test: Dataset,
}

impl SyntheticTask {
    pub fn generate(spec: TaskSpec) -> Result<Self> {
        if spec.clients == 0 || spec.dim == 0 || spec.samples_per_client == 0 {
            return Err(Error::Config("task needs clients, dimensions and samples".into()));
        }
        if !(0.0..=1.0).contains(&spec.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", spec.alpha)));
        }
        let mut rng = derive_rng(spec.seed, "task", &[]);
        let mut w: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= norm);

        let mut clients = Vec::with_capacity(spec.clients);
        for i in 1..=spec.clients {
            let skew = if i % 2 == 0 { 1.0 } else { 0.0 };
            let p = spec.alpha * 0.5 + (1.0 - spec.alpha) * skew;
            let pos = (spec.samples_per_client as f64 * p).round() as usize;
            let mut r = derive_rng(spec.seed, "task-client", &[i as u64]);
            clients.push(sample_points(&w, spec.margin, pos, spec.samples_per_client - pos, &mut r));
        }
        let half = spec.test_samples / 2;
        let mut r = derive_rng(spec.seed, "task-test", &[]);
        let test = sample_points(&w, spec.margin, half, spec.test_samples - half, &mut r);
        Ok(Self {
            spec,
            true_weights: w,
            clients,
            test,
        })
    }

    /// Weights plus one bias term.
    pub fn model_len(&self) -> usize {
        self.spec.dim + 1
    }

    pub fn sample_counts(&self) -> Vec<u64> {
        self.clients.iter().map(|d| d.len() as u64).collect()
    }
}

fn sample_points(w: &[f64], margin: f64, pos: usize, neg: usize, rng: &mut impl Rng) -> Dataset {
    let (mut need_pos, mut need_neg) = (pos, neg);
    let mut data = Dataset::default();
    while need_pos + need_neg > 0 {
        let x: Vec<f64> = (0..w.len()).map(|_| rng.sample(StandardNormal)).collect();
        let s: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        if s.abs() < margin {
            continue;
        }
        let y = u8::from(s > 0.0);
        let need = if y == 1 { &mut need_pos } else { &mut need_neg };
        if *need == 0 {
            continue;
        }
        *need -= 1;
        data.x.push(x);
        data.y.push(y);
    }
    data
}

// ---------------------------------------------------------------------------
// Local training

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub max_weight: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.05,
            momentum: 0.8,
            batch: 50,
            max_weight: DEFAULT_MAX_WEIGHT,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(w: &[f64], x: &[f64]) -> f64 {
    let (bias, coef) = w.split_last().expect("model has a bias term");
    coef.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// Mini-batch SGD with momentum on the logistic loss, starting from `init`.
/// The result is clipped to `±max_weight`.
pub fn local_train(init: &[f64], data: &Dataset, params: &TrainParams, rng: &mut impl Rng) -> Vec<f64> {
    let mut w = init.to_vec();
    let mut v = vec![0.0; w.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = params.batch.max(1);
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let mut g = vec![0.0; w.len()];
            for &k in chunk {
                let err = sigmoid(logit(&w, &data.x[k])) - data.y[k] as f64;
                let (gb, gc) = g.split_last_mut().expect("bias");
                for (gj, xj) in gc.iter_mut().zip(&data.x[k]) {
                    *gj += err * xj;
                }
                *gb += err;
            }
            for ((wj, vj), gj) in w.iter_mut().zip(v.iter_mut()).zip(&g) {
                *vj = params.momentum * *vj + gj / chunk.len() as f64;
                *wj -= params.lr * *vj;
            }
        }
    }
    for x in w.iter_mut() {
        *x = x.clamp(-params.max_weight, params.max_weight);
    }
    w
}

pub fn accuracy(w: &[f64], data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .x
        .iter()
        .zip(&data.y)
        .filter(|(x, &y)| u8::from(logit(w, x) > 0.0) == y)
        .count();
    hits as f64 / data.len() as f64
}

/// One global model per round, plus held-out accuracy after each round.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub models: Vec<Vec<f64>>,
    pub accuracy: Vec<f64>,
}

/// Federated training loop with a pluggable aggregation step. Every round
/// each client trains from the current global model with its own seeded
/// stream; `aggregate` turns the local models into the next global model.
pub fn run_federated<F>(task: &SyntheticTask, rounds: usize, params: &TrainParams, seed: u64, mut aggregate: F) -> Result<Trajectory>
where
    F: FnMut(u64, &[ModelVector]) -> Result<Vec<f64>>,
{
    let mut global = vec![0.0; task.model_len()];
    let mut out = Trajectory::default();
    for round in 0..rounds as u64 {
        let locals: Vec<ModelVector> = task
            .clients
            .iter()
            .enumerate()
            .map(|(k, data)| {
                let mut rng = derive_rng(seed, "train", &[round, k as u64 + 1]);
                ModelVector::new(k + 1, data.len() as u64, local_train(&global, data, params, &mut rng))
            })
            .collect();
        global = aggregate(round, &locals)?;
        out.accuracy.push(accuracy(&global, &task.test));
        out.models.push(global.clone());
    }
    Ok(out)
}

/// [`run_federated`] with exact plaintext averaging.
pub fn run_plaintext(task: &SyntheticTask, rounds: usize, params: &TrainParams, seed: u64) -> Result<Trajectory> {
    run_federated(task, rounds, params, seed, |_, locals| Ok(fedavg_oracle(locals)?.weights))
}
