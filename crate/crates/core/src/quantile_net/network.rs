//! Parameter layout, forward pass and hand-written backpropagation for the
//! two quantile architectures. Parameters live in one flat vector; every
//! layer knows its offset into it.

use std::cmp::Ordering;

use rand::Rng;

use super::Architecture;

#[derive(Debug, Clone)]
pub(crate) struct Dense {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
    bias: bool,
}

impl Dense {
    fn new(offset: &mut usize, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let layer = Self {
            offset: *offset,
            fan_in,
            fan_out,
            bias,
        };
        *offset += fan_in * fan_out + if bias { fan_out } else { 0 };
        layer
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.fan_in * self.fan_out]
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }

    fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        let bound = 1.0 / (self.fan_in as f64).sqrt();
        let end = self.bias_offset() + if self.bias { self.fan_out } else { 0 };
        for v in &mut p[self.offset..end] {
            *v = rng.random_range(-bound..=bound);
        }
    }

    fn apply(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.fan_in);
        let w = self.weights(p);
        (0..self.fan_out)
            .map(|o| {
                let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
                let mut acc = if self.bias { p[self.bias_offset() + o] } else { 0.0 };
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                acc
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns `d loss / d x`.
    fn backward(&self, p: &[f64], x: &[f64], dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let w = self.weights(p);
        let mut dx = vec![0.0; self.fan_in];
        for (o, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let base = self.offset + o * self.fan_in;
            for i in 0..self.fan_in {
                grad[base + i] += d * x[i];
                dx[i] += d * w[o * self.fan_in + i];
            }
            if self.bias {
                grad[self.bias_offset() + o] += d;
            }
        }
        dx
    }
}

/// Fully connected stack, rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone)]
pub(crate) struct Mlp {
    layers: Vec<Dense>,
}

pub(crate) struct MlpTrace {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub(crate) fn output(&self) -> &[f64] {
        self.pre.last().expect("mlp has at least one layer")
    }
}

impl Mlp {
    fn new(offset: &mut usize, d_in: usize, widths: &[usize]) -> Self {
        let mut fan_in = d_in;
        let layers = widths
            .iter()
            .map(|&w| {
                let l = Dense::new(offset, fan_in, w, true);
                fan_in = w;
                l
            })
            .collect();
        Self { layers }
    }

    fn forward(&self, p: &[f64], x: &[f64]) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(p, &a);
            let next = if l < last {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        MlpTrace { inputs, pre }
    }

    fn backward(&self, p: &[f64], trace: &MlpTrace, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut d = dout.to_vec();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                for (dv, &z) in d.iter_mut().zip(&trace.pre[l]) {
                    if z <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            d = self.layers[l].backward(p, &trace.inputs[l], &d, grad);
        }
        d
    }
}

/// Single-head dot-product self-attention without biases.
#[derive(Debug, Clone)]
pub(crate) struct Attention {
    query: Dense,
    key: Dense,
    value: Dense,
    scale: f64,
}

pub(crate) struct AttentionTrace {
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `probs[j][i]`: weight of key `i` for query `j`.
    probs: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

impl Attention {
    fn new(offset: &mut usize, d_in: usize, d_h: usize, d_o: usize) -> Self {
        Self {
            query: Dense::new(offset, d_in, d_h, false),
            key: Dense::new(offset, d_in, d_h, false),
            value: Dense::new(offset, d_in, d_o, false),
            scale: 1.0 / (d_h as f64).sqrt(),
        }
    }

    /// `order` fixes the summation order over keys. It is derived from token
    /// contents, so permuting the tokens permutes the output bit-for-bit.
    fn forward(&self, p: &[f64], tokens: &[Vec<f64>], order: &[usize]) -> AttentionTrace {
        let q: Vec<_> = tokens.iter().map(|t| self.query.apply(p, t)).collect();
        let k: Vec<_> = tokens.iter().map(|t| self.key.apply(p, t)).collect();
        let v: Vec<_> = tokens.iter().map(|t| self.value.apply(p, t)).collect();
        let n = tokens.len();
        let d_o = self.value.fan_out;
        let mut probs = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for qj in &q {
            let logits: Vec<f64> = k.iter().map(|ki| dot(qj, ki) * self.scale).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let denom = order.iter().fold(0.0, |acc, &i| acc + exps[i]);
            let pj: Vec<f64> = exps.iter().map(|e| e / denom).collect();
            let mut oj = vec![0.0; d_o];
            for &i in order {
                for (o, vi) in oj.iter_mut().zip(&v[i]) {
                    *o += pj[i] * vi;
                }
            }
            probs.push(pj);
            out.push(oj);
        }
        AttentionTrace { q, k, v, probs, out }
    }

    fn backward(
        &self,
        p: &[f64],
        tokens: &[Vec<f64>],
        trace: &AttentionTrace,
        dout: &[Vec<f64>],
        grad: &mut [f64],
    ) -> Vec<Vec<f64>> {
        let n = tokens.len();
        let d_h = self.query.fan_out;
        let mut dq = vec![vec![0.0; d_h]; n];
        let mut dk = vec![vec![0.0; d_h]; n];
        let mut dv = vec![vec![0.0; self.value.fan_out]; n];
        for j in 0..n {
            let pj = &trace.probs[j];
            let dp: Vec<f64> = (0..n).map(|i| dot(&dout[j], &trace.v[i])).collect();
            let mean: f64 = pj.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for (d, g) in dv[i].iter_mut().zip(&dout[j]) {
                    *d += pj[i] * g;
                }
                let ds = pj[i] * (dp[i] - mean) * self.scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..d_h {
                    dq[j][c] += ds * trace.k[i][c];
                    dk[i][c] += ds * trace.q[j][c];
                }
            }
        }
        (0..n)
            .map(|t| {
                let a = self.query.backward(p, &tokens[t], &dq[t], grad);
                let b = self.key.backward(p, &tokens[t], &dk[t], grad);
                let c = self.value.backward(p, &tokens[t], &dv[t], grad);
                a.iter().zip(&b).zip(&c).map(|((x, y), z)| x + y + z).collect()
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub(crate) enum Network {
    FeedForward(Mlp),
    Attention {
        token_dim: usize,
        first: Attention,
        mlp1: Mlp,
        second: Attention,
        mlp2: Mlp,
    },
}

impl Network {
    pub(crate) fn build(arch: &Architecture) -> (Self, usize) {
        let mut offset = 0;
        let net = match arch {
            Architecture::FeedForward { widths } => {
                Network::FeedForward(Mlp::new(&mut offset, widths[0], &widths[1..]))
            }
            Architecture::Attention(spec) => {
                let first = Attention::new(&mut offset, spec.token_dim, spec.d_h, spec.d_o);
                let mlp1 = Mlp::new(&mut offset, spec.d_o, &spec.mlp1);
                let second = Attention::new(&mut offset, spec.d_e, spec.d_h, spec.d_o);
                let mlp2 = Mlp::new(&mut offset, spec.d_o, &spec.mlp2);
                Network::Attention {
                    token_dim: spec.token_dim,
                    first,
                    mlp1,
                    second,
                    mlp2,
                }
            }
        };
        (net, offset)
    }

    pub(crate) fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        match self {
            Network::FeedForward(mlp) => mlp.layers.iter().for_each(|l| l.init(p, rng)),
            Network::Attention {
                first,
                mlp1,
                second,
                mlp2,
                ..
            } => {
                for att in [first, second] {
                    att.query.init(p, rng);
                    att.key.init(p, rng);
                    att.value.init(p, rng);
                }
                mlp1.layers.iter().for_each(|l| l.init(p, rng));
                mlp2.layers.iter().for_each(|l| l.init(p, rng));
            }
        }
    }

    /// Per-token `(lo, hi)` outputs in normalized units.
    pub(crate) fn forward(&self, p: &[f64], x: &[f64]) -> Vec<[f64; 2]> {
        match self {
            Network::FeedForward(mlp) => {
                let t = mlp.forward(p, x);
                let out = t.output();
                vec![[out[0], out[1]]]
            }
            Network::Attention { .. } => self
                .attention_forward(p, x)
                .head
                .iter()
                .map(|t| {
                    let o = t.output();
                    [o[0], o[1]]
                })
                .collect(),
        }
    }

    fn attention_forward(&self, p: &[f64], x: &[f64]) -> AttentionPass {
        let Network::Attention {
            token_dim,
            first,
            mlp1,
            second,
            mlp2,
        } = self
        else {
            unreachable!("attention pass on a feedforward network")
        };
        let tokens: Vec<Vec<f64>> = x.chunks(*token_dim).map(<[f64]>::to_vec).collect();
        let order = canonical_order(&tokens);
        let att1 = first.forward(p, &tokens, &order);
        let body: Vec<MlpTrace> = att1.out.iter().map(|t| mlp1.forward(p, t)).collect();
        let embedded: Vec<Vec<f64>> = body.iter().map(|t| t.output().to_vec()).collect();
        let att2 = second.forward(p, &embedded, &order);
        let head: Vec<MlpTrace> = att2.out.iter().map(|t| mlp2.forward(p, t)).collect();
        AttentionPass {
            tokens,
            att1,
            body,
            embedded,
            att2,
            head,
        }
    }

    /// Summed pinball loss over tokens for one sample; accumulates the
    /// gradient into `grad` when given.
    pub(crate) fn sample_loss(
        &self,
        p: &[f64],
        x: &[f64],
        y: &[f64],
        alpha: f64,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let (tau_lo, tau_hi) = (alpha / 2.0, 1.0 - alpha / 2.0);
        let head_loss = |out: &[f64], y: f64| -> (f64, [f64; 2]) {
            let l = pinball(y, out[0], tau_lo) + pinball(y, out[1], tau_hi);
            (l, [pinball_slope(y, out[0], tau_lo), pinball_slope(y, out[1], tau_hi)])
        };
        match self {
            Network::FeedForward(mlp) => {
                let t = mlp.forward(p, x);
                let (loss, d) = head_loss(t.output(), y[0]);
                if let Some(grad) = grad {
                    mlp.backward(p, &t, &d, grad);
                }
                loss
            }
            Network::Attention {
                first,
                mlp1,
                second,
                mlp2,
                ..
            } => {
                let pass = self.attention_forward(p, x);
                let mut loss = 0.0;
                let mut dheads = Vec::with_capacity(y.len());
                for (t, &yk) in pass.head.iter().zip(y) {
                    let (l, d) = head_loss(t.output(), yk);
                    loss += l;
                    dheads.push(d);
                }
                if let Some(grad) = grad {
                    let d_att2: Vec<Vec<f64>> = pass
                        .head
                        .iter()
                        .zip(&dheads)
                        .map(|(t, d)| mlp2.backward(p, t, d, grad))
                        .collect();
                    let d_embedded = second.backward(p, &pass.embedded, &pass.att2, &d_att2, grad);
                    let d_att1: Vec<Vec<f64>> = pass
                        .body
                        .iter()
                        .zip(&d_embedded)
                        .map(|(t, d)| mlp1.backward(p, t, d, grad))
                        .collect();
                    first.backward(p, &pass.tokens, &pass.att1, &d_att1, grad);
                }
                loss
            }
        }
    }
}

struct AttentionPass {
    tokens: Vec<Vec<f64>>,
    att1: AttentionTrace,
    body: Vec<MlpTrace>,
    embedded: Vec<Vec<f64>>,
    att2: AttentionTrace,
    head: Vec<MlpTrace>,
}

/// Token indices sorted by content (lexicographic, total order on floats).
fn canonical_order(tokens: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    order.sort_by(|&a, &b| {
        tokens[a]
            .iter()
            .zip(&tokens[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    order
}

pub(crate) fn pinball(y: f64, q: f64, tau: f64) -> f64 {
    let r = y - q;
    (tau * r).max(-(1.0 - tau) * r)
}

/// `d pinball / d q`, taking the `tau` side at the kink `y == q`.
pub(crate) fn pinball_slope(y: f64, q: f64, tau: f64) -> f64 {
    if y >= q {
        -tau
    } else {
        1.0 - tau
    }
}
