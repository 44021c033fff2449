use super::{gram_lambda_max, Classifier, DataPartition, Dataset, Objective};
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Shard {
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Shard {
    fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Linear classifier with mean cross-entropy loss per shard plus
/// `(l2/2)‖x‖²`. Two classes use a single weight vector and the sigmoid;
/// more classes use a `C × p` row-major weight matrix and the softmax.
#[derive(Debug, Clone)]
pub struct Logistic {
    shards: Vec<Shard>,
    p: usize,
    classes: usize,
    l2: f64,
    l: f64,
}

pub fn logistic_regression(data: &Dataset, partition: &DataPartition, l2: f64) -> Result<Logistic> {
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::InvalidObjective(format!("l2 must be finite and non-negative, got {l2}")));
    }
    if !partition.is_exact(data.len()) {
        return Err(Error::InvalidObjective("partition does not cover the dataset exactly".into()));
    }
    let p = data.dim();
    let curvature = if data.classes() == 2 { 0.25 } else { 0.5 };
    let mut shards = Vec::with_capacity(partition.num_agents());
    let mut l: f64 = 0.0;
    for (i, idx) in partition.shards.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::InvalidObjective(format!("agent {i} has an empty shard")));
        }
        let sub = data.select(idx);
        let mut features = Vec::with_capacity(idx.len() * p);
        for j in 0..sub.len() {
            features.extend_from_slice(sub.sample(j));
        }
        let lam = gram_lambda_max(&features, idx.len(), p);
        l = l.max(curvature * lam / idx.len() as f64);
        shards.push(Shard {
            features,
            labels: sub.labels().to_vec(),
        });
    }
    Ok(Logistic {
        shards,
        p,
        classes: data.classes(),
        l2,
        l: l + l2,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Logistic {
    fn binary(&self) -> bool {
        self.classes == 2
    }

    /// Softmax probabilities into `probs`; returns `logsumexp(z)`.
    fn softmax(&self, x: &[f64], phi: &[f64], probs: &mut [f64]) -> f64 {
        for (c, pc) in probs.iter_mut().enumerate() {
            *pc = dot(&x[c * self.p..(c + 1) * self.p], phi);
        }
        let zmax = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for pc in probs.iter_mut() {
            *pc = (*pc - zmax).exp();
            sum += *pc;
        }
        for pc in probs.iter_mut() {
            *pc /= sum;
        }
        zmax + sum.ln()
    }
}

impl Objective for Logistic {
    fn num_agents(&self) -> usize {
        self.shards.len()
    }

    fn dim(&self) -> usize {
        if self.binary() {
            self.p
        } else {
            self.classes * self.p
        }
    }

    fn local_loss(&self, agent: usize, x: &[f64]) -> f64 {
        let s = &self.shards[agent];
        let mut total = 0.0;
        let mut probs = vec![0.0; self.classes];
        for (j, &y) in s.labels.iter().enumerate() {
            let phi = &s.features[j * self.p..(j + 1) * self.p];
            total += if self.binary() {
                let z = dot(x, phi);
                softplus(z) - if y == 1 { z } else { 0.0 }
            } else {
                let lse = self.softmax(x, phi, &mut probs);
                lse - dot(&x[y * self.p..(y + 1) * self.p], phi)
            };
        }
        total / s.len() as f64 + 0.5 * self.l2 * dot(x, x)
    }

    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        let s = &self.shards[agent];
        let m = s.len() as f64;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut probs = vec![0.0; self.classes];
        for (j, &y) in s.labels.iter().enumerate() {
            let phi = &s.features[j * self.p..(j + 1) * self.p];
            if self.binary() {
                let r = sigmoid(dot(x, phi)) - if y == 1 { 1.0 } else { 0.0 };
                for (o, f) in out.iter_mut().zip(phi) {
                    *o += r * f;
                }
            } else {
                self.softmax(x, phi, &mut probs);
                probs[y] -= 1.0;
                for (c, r) in probs.iter().enumerate() {
                    for (o, f) in out[c * self.p..(c + 1) * self.p].iter_mut().zip(phi) {
                        *o += r * f;
                    }
                }
            }
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = *o / m + self.l2 * xi;
        }
    }

    fn smoothness(&self) -> f64 {
        self.l
    }

    fn as_classifier(&self) -> Option<&dyn Classifier> {
        Some(self)
    }
}

impl Classifier for Logistic {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict(&self, params: &[f64], features: &[f64]) -> usize {
        if self.binary() {
            usize::from(dot(params, features) > 0.0)
        } else {
            (0..self.classes)
                .map(|c| dot(&params[c * self.p..(c + 1) * self.p], features))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, z)| if z > best.1 { (c, z) } else { best })
                .0
        }
    }
}
