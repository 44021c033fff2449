use super::{Classifier, DataPartition, Dataset, Objective};
use crate::{Error, Result};

/// Smoothness constant assumed for the network when none is configured.
pub const DEFAULT_MLP_SMOOTHNESS: f64 = 10.0;

#[derive(Debug, Clone)]
struct Shard {
    features: Vec<f64>,
    labels: Vec<usize>,
}

/// One sigmoid hidden layer followed by a softmax cross-entropy output.
///
/// Parameters are laid out as `[W1 (h×p row-major), b1 (h), W2 (C×h row-major), b2 (C)]`.
#[derive(Debug, Clone)]
pub struct Mlp {
    shards: Vec<Shard>,
    p: usize,
    h: usize,
    c: usize,
    l: f64,
    l_configured: bool,
}

pub fn two_layer_mlp(
    widths: (usize, usize, usize),
    data: &Dataset,
    partition: &DataPartition,
    smoothness: Option<f64>,
) -> Result<Mlp> {
    let (p, h, c) = widths;
    if p != data.dim() {
        return Err(Error::Dimension {
            expected: data.dim(),
            got: p,
        });
    }
    if h == 0 || c < 2 || c < data.classes() {
        return Err(Error::InvalidObjective(format!(
            "widths ({p}, {h}, {c}) do not fit {} classes",
            data.classes()
        )));
    }
    if !partition.is_exact(data.len()) {
        return Err(Error::InvalidObjective("partition does not cover the dataset exactly".into()));
    }
    let l = match smoothness {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::InvalidObjective(format!("smoothness must be positive, got {l}"))),
        None => {
            log::warn!("no smoothness constant configured for the MLP; assuming L = {DEFAULT_MLP_SMOOTHNESS} (unverified)");
            DEFAULT_MLP_SMOOTHNESS
        }
    };
    let mut shards = Vec::with_capacity(partition.num_agents());
    for (i, idx) in partition.shards.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::InvalidObjective(format!("agent {i} has an empty shard")));
        }
        let sub = data.select(idx);
        shards.push(Shard {
            features: (0..sub.len()).flat_map(|j| sub.sample(j).to_vec()).collect(),
            labels: sub.labels().to_vec(),
        });
    }
    Ok(Mlp {
        shards,
        p,
        h,
        c,
        l,
        l_configured: smoothness.is_some(),
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

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl Mlp {
    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = self.h * self.p;
        let w2 = b1 + self.h;
        let b2 = w2 + self.c * self.h;
        Layout {
            w1,
            b1,
            w2,
            b2,
            end: b2 + self.c,
        }
    }

    pub fn widths(&self) -> (usize, usize, usize) {
        (self.p, self.h, self.c)
    }

    /// Hidden-layer activations `σ(W1 φ + b1)`.
    pub fn hidden(&self, params: &[f64], phi: &[f64]) -> Vec<f64> {
        let lay = self.layout();
        (0..self.h)
            .map(|r| {
                let row = &params[lay.w1 + r * self.p..lay.w1 + (r + 1) * self.p];
                let a: f64 = row.iter().zip(phi).map(|(w, f)| w * f).sum();
                sigmoid(a + params[lay.b1 + r])
            })
            .collect()
    }

    /// Output logits and the hidden activations.
    fn forward(&self, params: &[f64], phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lay = self.layout();
        let hid = self.hidden(params, phi);
        let z = (0..self.c)
            .map(|k| {
                let row = &params[lay.w2 + k * self.h..lay.w2 + (k + 1) * self.h];
                row.iter().zip(&hid).map(|(w, a)| w * a).sum::<f64>() + params[lay.b2 + k]
            })
            .collect();
        (z, hid)
    }
}

/// Turns logits into probabilities in place; returns `logsumexp`.
fn softmax(z: &mut [f64]) -> f64 {
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - zmax).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    zmax + sum.ln()
}

impl Objective for Mlp {
    fn num_agents(&self) -> usize {
        self.shards.len()
    }

    fn dim(&self) -> usize {
        self.layout().end
    }

    fn local_loss(&self, agent: usize, x: &[f64]) -> f64 {
        let s = &self.shards[agent];
        let mut total = 0.0;
        for (j, &y) in s.labels.iter().enumerate() {
            let (mut z, _) = self.forward(x, &s.features[j * self.p..(j + 1) * self.p]);
            let zy = z[y];
            total += softmax(&mut z) - zy;
        }
        total / s.labels.len() as f64
    }

    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        let lay = self.layout();
        let s = &self.shards[agent];
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut dh = vec![0.0; self.h];
        for (j, &y) in s.labels.iter().enumerate() {
            let phi = &s.features[j * self.p..(j + 1) * self.p];
            let (mut dz, hid) = self.forward(x, phi);
            softmax(&mut dz);
            dz[y] -= 1.0;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (k, &g) in dz.iter().enumerate() {
                let w2 = lay.w2 + k * self.h;
                for r in 0..self.h {
                    out[w2 + r] += g * hid[r];
                    dh[r] += g * x[w2 + r];
                }
                out[lay.b2 + k] += g;
            }
            for r in 0..self.h {
                let da = dh[r] * hid[r] * (1.0 - hid[r]);
                let w1 = lay.w1 + r * self.p;
                for (o, f) in out[w1..w1 + self.p].iter_mut().zip(phi) {
                    *o += da * f;
                }
                out[lay.b1 + r] += da;
            }
        }
        let m = s.labels.len() as f64;
        out.iter_mut().for_each(|v| *v /= m);
    }

    fn smoothness(&self) -> f64 {
        self.l
    }

    fn smoothness_verified(&self) -> bool {
        false
    }

    fn as_classifier(&self) -> Option<&dyn Classifier> {
        Some(self)
    }
}

impl Classifier for Mlp {
    fn num_classes(&self) -> usize {
        self.c
    }

    fn predict(&self, params: &[f64], features: &[f64]) -> usize {
        let (z, _) = self.forward(params, features);
        z.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0
    }
}

impl Mlp {
    /// True when `L` came from configuration rather than the default.
    pub fn smoothness_configured(&self) -> bool {
        self.l_configured
    }
}
