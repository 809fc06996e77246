use rand::Rng;

use super::{softmax4, FeatureSequence, ModelConfig};
use crate::corpus::ArgLabel;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, KeyPart};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors laid out in one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl ParamLayout {
    fn new(shapes: Vec<(String, usize, usize)>) -> Self {
        let mut offset = 0;
        let tensors = shapes
            .into_iter()
            .map(|(name, rows, cols)| {
                let t = TensorSpec {
                    name,
                    rows,
                    cols,
                    offset,
                };
                offset += rows * cols;
                t
            })
            .collect();
        ParamLayout {
            tensors,
            total: offset,
        }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    input: usize,
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    backward: bool,
}

#[derive(Debug, Clone)]
struct LayerCache<F> {
    r: Vec<F>,
    z: Vec<F>,
    n: Vec<F>,
    /// Hidden-side candidate pre-activation `W_hn h + b_hn`.
    ghn: Vec<F>,
    /// Cell outputs, one row per token.
    state: Vec<F>,
}

/// Activations of one forward pass, kept for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    /// `inputs[k]` is the input sequence of layer `k` (0-based).
    inputs: Vec<Vec<F>>,
    layers: Vec<LayerCache<F>>,
    final_states: Vec<F>,
    pub probs: Vec<[F; 4]>,
}

impl<F: Scalar> ForwardCache<F> {
    pub fn final_states(&self) -> &[F] {
        &self.final_states
    }
}

/// Residual alternating-direction GRU stack with a 4-way softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct ZarModel<F> {
    config: ModelConfig,
    input_dim: usize,
    layout: ParamLayout,
    params: Vec<F>,
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn matvec_acc<F: Scalar>(w: &[F], rows: usize, cols: usize, x: &[F], out: &mut [F]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = F::zero();
        for c in 0..cols {
            acc = acc + row[c] * x[c];
        }
        out[r] = out[r] + acc;
    }
}

impl<F: Scalar> ZarModel<F> {
    fn layout_for(config: &ModelConfig, input_dim: usize) -> ParamLayout {
        let m = config.hidden;
        let mut shapes = Vec::new();
        for k in 1..=config.layers {
            let input = if k == 1 { input_dim + 2 } else { m };
            shapes.push((format!("gru{k}.w_ih"), 3 * m, input));
            shapes.push((format!("gru{k}.w_hh"), 3 * m, m));
            shapes.push((format!("gru{k}.b_ih"), 3 * m, 1));
            shapes.push((format!("gru{k}.b_hh"), 3 * m, 1));
        }
        shapes.push(("out.w".into(), 4, m));
        shapes.push(("out.b".into(), 4, 1));
        ParamLayout::new(shapes)
    }

    /// Fresh model for encoder states of width `input_dim`. Weight matrices
    /// are uniform in ±√(1/fan_in), biases zero.
    pub fn new(config: ModelConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let layout = Self::layout_for(&config, input_dim);
        let mut params = vec![F::zero(); layout.total()];
        let mut rng = keyed_rng(config.seed, &[KeyPart::Str("zar-init")]);
        for t in layout.tensors() {
            if t.cols == 1 {
                continue;
            }
            let bound = (1.0 / t.cols as f64).sqrt();
            for p in &mut params[t.range()] {
                *p = F::of(rng.gen_range(-bound..=bound));
            }
        }
        Ok(ZarModel {
            config,
            input_dim,
            layout,
            params,
        })
    }

    pub fn from_params(config: ModelConfig, input_dim: usize, params: Vec<F>) -> Result<Self> {
        config.validate()?;
        let layout = Self::layout_for(&config, input_dim);
        if params.len() != layout.total() {
            return Err(Error::Shape(format!(
                "{} parameters for a model of {}",
                params.len(),
                layout.total()
            )));
        }
        Ok(ZarModel {
            config,
            input_dim,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut ModelConfig {
        &mut self.config
    }

    /// Encoder width D (features are D + 2 wide).
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[F]> {
        self.layout.find(name).map(|t| &self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [F]> {
        let range = self.layout.find(name)?.range();
        Some(&mut self.params[range])
    }

    fn offsets(&self, k: usize) -> LayerOffsets {
        let find = |suffix: &str| {
            self.layout
                .find(&format!("gru{}.{suffix}", k + 1))
                .expect("layer tensor")
                .offset
        };
        LayerOffsets {
            input: if k == 0 {
                self.input_dim + 2
            } else {
                self.config.hidden
            },
            w_ih: find("w_ih"),
            w_hh: find("w_hh"),
            b_ih: find("b_ih"),
            b_hh: find("b_hh"),
            backward: k % 2 == 1,
        }
    }

    fn check_features(&self, features: &FeatureSequence<F>) -> Result<()> {
        if features.width() != self.input_dim + 2 {
            return Err(Error::Shape(format!(
                "features of width {}, model expects {}",
                features.width(),
                self.input_dim + 2
            )));
        }
        if features.rows() == 0 {
            return Err(Error::Shape("empty feature sequence".into()));
        }
        Ok(())
    }

    fn run_layer(&self, k: usize, input: &[F], len: usize) -> LayerCache<F> {
        let m = self.config.hidden;
        let o = self.offsets(k);
        let p = &self.params;
        let mut cache = LayerCache {
            r: vec![F::zero(); len * m],
            z: vec![F::zero(); len * m],
            n: vec![F::zero(); len * m],
            ghn: vec![F::zero(); len * m],
            state: vec![F::zero(); len * m],
        };
        let zeros = vec![F::zero(); m];
        let mut gi = vec![F::zero(); 3 * m];
        let mut gh = vec![F::zero(); 3 * m];
        let mut prev: Option<usize> = None;
        for step in 0..len {
            let t = if o.backward { len - 1 - step } else { step };
            let x = &input[t * o.input..(t + 1) * o.input];
            gi.copy_from_slice(&p[o.b_ih..o.b_ih + 3 * m]);
            gh.copy_from_slice(&p[o.b_hh..o.b_hh + 3 * m]);
            matvec_acc(
                &p[o.w_ih..o.w_ih + 3 * m * o.input],
                3 * m,
                o.input,
                x,
                &mut gi,
            );
            let hp: Vec<F> = match prev {
                Some(tp) => cache.state[tp * m..(tp + 1) * m].to_vec(),
                None => zeros.clone(),
            };
            matvec_acc(&p[o.w_hh..o.w_hh + 3 * m * m], 3 * m, m, &hp, &mut gh);
            for u in 0..m {
                let r = sigmoid(gi[u] + gh[u]);
                let z = sigmoid(gi[m + u] + gh[m + u]);
                let n = (gi[2 * m + u] + r * gh[2 * m + u]).tanh();
                let idx = t * m + u;
                cache.r[idx] = r;
                cache.z[idx] = z;
                cache.n[idx] = n;
                cache.ghn[idx] = gh[2 * m + u];
                cache.state[idx] = (F::one() - z) * n + z * hp[u];
            }
            prev = Some(t);
        }
        cache
    }

    /// Full forward pass for one (sentence, predicate) instance.
    pub fn forward(&self, features: &FeatureSequence<F>) -> Result<ForwardCache<F>> {
        self.check_features(features)?;
        let len = features.rows();
        let m = self.config.hidden;
        let mut inputs = Vec::with_capacity(self.config.layers);
        let mut layers = Vec::with_capacity(self.config.layers);
        let mut current: Vec<F> = features.data().to_vec();
        for k in 0..self.config.layers {
            let cache = self.run_layer(k, &current, len);
            let next: Vec<F> = if k == 0 {
                cache.state.clone()
            } else {
                current
                    .iter()
                    .zip(&cache.state)
                    .map(|(&a, &b)| a + b)
                    .collect()
            };
            inputs.push(std::mem::replace(&mut current, next));
            layers.push(cache);
        }
        let probs = self.score_states(&current, len)?;
        debug_assert_eq!(current.len(), len * m);
        Ok(ForwardCache {
            inputs,
            layers,
            final_states: current,
            probs,
        })
    }

    /// Final states h^K, one row of width M per token.
    pub fn encode_birnn(&self, features: &FeatureSequence<F>) -> Result<Vec<F>> {
        Ok(self.forward(features)?.final_states)
    }

    /// Softmax distributions over the four labels for each state row.
    pub fn score_states(&self, states: &[F], len: usize) -> Result<Vec<[F; 4]>> {
        let m = self.config.hidden;
        if states.len() != len * m {
            return Err(Error::Shape(format!(
                "{} state values for {len} rows of width {m}",
                states.len()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("recurrent state".into()));
        }
        let w = self.tensor("out.w").expect("output weights");
        let b = self.tensor("out.b").expect("output bias");
        Ok((0..len)
            .map(|t| {
                let h = &states[t * m..(t + 1) * m];
                let mut logits = [F::zero(); 4];
                for (l, logit) in logits.iter_mut().enumerate() {
                    *logit = b[l]
                        + w[l * m..(l + 1) * m]
                            .iter()
                            .zip(h)
                            .map(|(&a, &c)| a * c)
                            .sum::<F>();
                }
                softmax4(logits)
            })
            .collect())
    }

    /// Label distributions of one instance.
    pub fn predict(&self, features: &FeatureSequence<F>) -> Result<Vec<[F; 4]>> {
        Ok(self.forward(features)?.probs)
    }

    /// Accumulates `scale ·` ∂(Σ_cells −log p_gold) into `grad` and returns
    /// the unscaled negative log-likelihood sum.
    pub fn accumulate_gradient(
        &self,
        features: &FeatureSequence<F>,
        labels: &[ArgLabel],
        scale: F,
        grad: &mut [F],
    ) -> Result<F> {
        if labels.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} tokens",
                labels.len(),
                features.rows()
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape(
                "gradient buffer does not match parameters".into(),
            ));
        }
        let cache = self.forward(features)?;
        let len = features.rows();
        let mut nll = F::zero();
        let dlogits: Vec<[F; 4]> = cache
            .probs
            .iter()
            .zip(labels)
            .map(|(p, &y)| {
                nll = nll - p[y.index()].max(F::min_positive_value()).ln();
                let mut d = p.map(|v| v * scale);
                d[y.index()] = d[y.index()] - scale;
                d
            })
            .collect();
        self.backward(&cache, &dlogits, len, grad);
        Ok(nll)
    }

    fn backward(&self, cache: &ForwardCache<F>, dlogits: &[[F; 4]], len: usize, grad: &mut [F]) {
        let m = self.config.hidden;
        let w_out = self.layout.find("out.w").expect("output weights").clone();
        let b_out = self.layout.find("out.b").expect("output bias").clone();
        let mut dh = vec![F::zero(); len * m];
        for t in 0..len {
            let h = &cache.final_states[t * m..(t + 1) * m];
            for l in 0..4 {
                let g = dlogits[t][l];
                grad[b_out.offset + l] = grad[b_out.offset + l] + g;
                for u in 0..m {
                    let wi = w_out.offset + l * m + u;
                    grad[wi] = grad[wi] + g * h[u];
                    dh[t * m + u] = dh[t * m + u] + g * self.params[wi];
                }
            }
        }
        for k in (0..self.config.layers).rev() {
            let need_input = k > 0;
            let dx = self.layer_backward(
                k,
                &cache.inputs[k],
                &cache.layers[k],
                &dh,
                len,
                grad,
                need_input,
            );
            if k > 0 {
                // Residual: h^k = h^{k-1} + s^k.
                for (d, x) in dh.iter_mut().zip(dx) {
                    *d = *d + x;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_backward(
        &self,
        k: usize,
        input: &[F],
        cache: &LayerCache<F>,
        ds: &[F],
        len: usize,
        grad: &mut [F],
        need_input: bool,
    ) -> Vec<F> {
        let m = self.config.hidden;
        let o = self.offsets(k);
        let p = &self.params;
        let mut dx = vec![F::zero(); if need_input { len * o.input } else { 0 }];
        let mut carry = vec![F::zero(); m];
        let mut gi = vec![F::zero(); 3 * m];
        let mut gh = vec![F::zero(); 3 * m];
        let zeros = vec![F::zero(); m];
        for step in (0..len).rev() {
            let t = if o.backward { len - 1 - step } else { step };
            let prev = if step == 0 {
                None
            } else if o.backward {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let hp: &[F] = match prev {
                Some(tp) => &cache.state[tp * m..(tp + 1) * m],
                None => &zeros,
            };
            let mut next_carry = vec![F::zero(); m];
            for u in 0..m {
                let idx = t * m + u;
                let d = ds[idx] + carry[u];
                let (r, z, n, ghn) = (cache.r[idx], cache.z[idx], cache.n[idx], cache.ghn[idx]);
                let dn = d * (F::one() - z);
                let dz = d * (hp[u] - n);
                next_carry[u] = d * z;
                let dan = dn * (F::one() - n * n);
                let dr = dan * ghn;
                let dar = dr * r * (F::one() - r);
                let daz = dz * z * (F::one() - z);
                gi[u] = dar;
                gi[m + u] = daz;
                gi[2 * m + u] = dan;
                gh[u] = dar;
                gh[m + u] = daz;
                gh[2 * m + u] = dan * r;
            }
            let x = &input[t * o.input..(t + 1) * o.input];
            for g in 0..3 * m {
                let gv = gi[g];
                grad[o.b_ih + g] = grad[o.b_ih + g] + gv;
                let base = o.w_ih + g * o.input;
                for c in 0..o.input {
                    grad[base + c] = grad[base + c] + gv * x[c];
                }
                if need_input {
                    for c in 0..o.input {
                        dx[t * o.input + c] = dx[t * o.input + c] + gv * p[base + c];
                    }
                }
                let hv = gh[g];
                grad[o.b_hh + g] = grad[o.b_hh + g] + hv;
                let base = o.w_hh + g * m;
                for c in 0..m {
                    grad[base + c] = grad[base + c] + hv * hp[c];
                    next_carry[c] = next_carry[c] + hv * p[base + c];
                }
            }
            carry = next_carry;
        }
        dx
    }

    /// Mean cross-entropy over the cells of `instances`.
    pub fn mean_loss(&self, instances: &[(FeatureSequence<F>, Vec<ArgLabel>)]) -> Result<F> {
        let mut total = F::zero();
        let mut cells = 0usize;
        for (f, labels) in instances {
            let probs = self.predict(f)?;
            for (p, y) in probs.iter().zip(labels) {
                total = total - p[y.index()].ln();
            }
            cells += labels.len();
        }
        Ok(total / F::of(cells.max(1) as f64))
    }

    /// Same architecture in another precision.
    pub fn cast<G: Scalar>(&self) -> ZarModel<G> {
        ZarModel {
            config: self.config.clone(),
            input_dim: self.input_dim,
            layout: self.layout.clone(),
            params: self.params.iter().map(|&v| G::of(v.as_f64())).collect(),
        }
    }
}
