use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, RnMode, Variant};
use crate::nn::{
    l2_penalty, Checkpoint, LayerSpec, Matrix, MlpBlock, Mode, ParamRecord, ParamTensor, RunningStatRecord,
};

/// One training example: the main object, its related objects and both targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalSample {
    pub x: Vec<f64>,
    pub related: Vec<Vec<f64>>,
    pub y: f64,
    pub y_aux: f64,
}

impl RelationalSample {
    /// The flat concatenation `(x, x₁, …, xₙ)`.
    pub fn concatenated(&self) -> Vec<f64> {
        let mut out = self.x.clone();
        for r in &self.related {
            out.extend_from_slice(r);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y_hat: f64,
    /// Absent for the `dnn` variant.
    pub y_aux_hat: Option<f64>,
    /// The vector both heads read: `r` with relations, `e(x)` without.
    pub relation_vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub main: f64,
    /// Unweighted auxiliary squared error; zero when the variant has no aux head.
    pub aux: f64,
    pub reg: f64,
}

/// Upstream gradients of one training-mode loss evaluation.
#[derive(Debug, Clone)]
pub struct LossContext {
    generation: u64,
    grad_main: Matrix,
    grad_aux: Option<Matrix>,
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Encoder,
    Relation,
    Aggregator,
    HeadMain,
    HeadAux,
}

/// Block indices double as ChaCha stream ids for initialization.
const ENCODER_STREAM: u64 = 1;
const RELATION_STREAM: u64 = 2;
const AGGREGATOR_STREAM: u64 = 3;
const HEAD_MAIN_STREAM: u64 = 4;
const HEAD_AUX_STREAM: u64 = 5;

/// How encoded objects are paired before `g`.
#[derive(Debug, Clone)]
struct PairLayout {
    /// `(first, second)` object indices, object 0 being the main object.
    terms: Vec<(usize, usize)>,
    weight: f64,
}

impl PairLayout {
    fn new(mode: RnMode, objects: usize) -> Self {
        match mode {
            RnMode::Anchored => Self {
                terms: (1..objects).map(|i| (0, i)).collect(),
                weight: 1.0,
            },
            RnMode::AllPairs => {
                let mut terms = Vec::new();
                for i in 0..objects {
                    for j in i + 1..objects {
                        terms.push((i, j));
                        terms.push((j, i));
                    }
                }
                Self { terms, weight: 0.5 }
            }
        }
    }

    /// Rows `t·B + b` hold `[o_first, o_second]` of term `t`, sample `b`.
    fn pair_inputs(&self, encoded: &Matrix, batch: usize) -> Matrix {
        let w = encoded.cols();
        let mut out = Matrix::zeros(self.terms.len() * batch, 2 * w);
        for (t, &(a, c)) in self.terms.iter().enumerate() {
            for b in 0..batch {
                let row = out.row_mut(t * batch + b);
                row[..w].copy_from_slice(encoded.row(a * batch + b));
                row[w..].copy_from_slice(encoded.row(c * batch + b));
            }
        }
        out
    }

    /// `S[b] = Σ_t weight · G[t·B + b]`, summed in term order.
    fn sum_terms(&self, relations: &Matrix, batch: usize) -> Matrix {
        let mut out = Matrix::zeros(batch, relations.cols());
        for t in 0..self.terms.len() {
            for b in 0..batch {
                let src = relations.row(t * batch + b);
                for (d, &s) in out.row_mut(b).iter_mut().zip(src) {
                    *d += self.weight * s;
                }
            }
        }
        out
    }

    fn spread_grad(&self, grad_sum: &Matrix, batch: usize) -> Matrix {
        let mut out = Matrix::zeros(self.terms.len() * batch, grad_sum.cols());
        for t in 0..self.terms.len() {
            for b in 0..batch {
                for (d, &g) in out.row_mut(t * batch + b).iter_mut().zip(grad_sum.row(b)) {
                    *d = self.weight * g;
                }
            }
        }
        out
    }

    fn scatter_pair_grad(&self, grad_pairs: &Matrix, batch: usize, objects: usize) -> Matrix {
        let w = grad_pairs.cols() / 2;
        let mut out = Matrix::zeros(objects * batch, w);
        for (t, &(a, c)) in self.terms.iter().enumerate() {
            for b in 0..batch {
                let src = grad_pairs.row(t * batch + b);
                for (d, &g) in out.row_mut(a * batch + b).iter_mut().zip(&src[..w]) {
                    *d += g;
                }
                for (d, &g) in out.row_mut(c * batch + b).iter_mut().zip(&src[w..]) {
                    *d += g;
                }
            }
        }
        out
    }
}

struct Outputs {
    main: Matrix,
    aux: Option<Matrix>,
    rep: Matrix,
}

#[derive(Debug, Clone)]
struct PassCache {
    generation: u64,
    batch: usize,
    objects: usize,
}

/// Shared encoder `e`, relation block `g`, aggregator `f`, heads `h` / `h'`.
///
/// Both training and inference stack the main object and its related objects
/// into one `[(n+1)·B, input_dim]` matrix before the encoder, so a single set
/// of encoder parameters (and one backward pass) serves every use.
#[derive(Debug, Clone)]
pub struct RelNetModel {
    config: ModelConfig,
    encoder: MlpBlock,
    relation: Option<MlpBlock>,
    aggregator: Option<MlpBlock>,
    head_main: MlpBlock,
    head_aux: Option<MlpBlock>,
    pairs: Option<PairLayout>,
    pass: Option<PassCache>,
    generation: u64,
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; decorrelates per-block dropout seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RelNetModel {
    /// Builds the parameter store for `config.variant`.
    ///
    /// Each block draws from its own ChaCha stream of `init_seed`, so variants
    /// built from the same seed share identical encoder and main-head weights.
    pub fn build(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let c = &config;
        let seed = c.init_seed;
        let keep = (c.dropout_keep < 1.0).then_some(c.dropout_keep);

        let encoder_specs: Vec<LayerSpec> = (0..c.encoder_depth)
            .map(|k| {
                let last = k + 1 == c.encoder_depth;
                LayerSpec {
                    out_dim: if last { c.repr_dim } else { c.encoder_width },
                    batch_norm: c.encoder_batch_norm,
                    relu: true,
                    keep_prob: if last { None } else { keep },
                }
            })
            .collect();
        let encoder = MlpBlock::build(
            "encoder",
            c.input_dim,
            &encoder_specs,
            &mut block_rng(seed, ENCODER_STREAM),
            mix(seed ^ ENCODER_STREAM),
        )?;

        let hidden = |width: usize, depth: usize| -> Vec<LayerSpec> {
            (0..depth)
                .map(|_| LayerSpec {
                    out_dim: width,
                    batch_norm: c.rn_batch_norm,
                    relu: true,
                    keep_prob: None,
                })
                .collect()
        };

        let (relation, aggregator, pairs) = if c.variant.has_relations() {
            let relation = MlpBlock::build(
                "relation",
                2 * c.repr_dim,
                &hidden(c.relation_width, c.relation_depth),
                &mut block_rng(seed, RELATION_STREAM),
                mix(seed ^ RELATION_STREAM),
            )?;
            let aggregator = MlpBlock::build(
                "aggregator",
                c.relation_width,
                &hidden(c.aggregate_width, c.aggregate_depth),
                &mut block_rng(seed, AGGREGATOR_STREAM),
                mix(seed ^ AGGREGATOR_STREAM),
            )?;
            (
                Some(relation),
                Some(aggregator),
                Some(PairLayout::new(c.rn_mode, c.n_related + 1)),
            )
        } else {
            (None, None, None)
        };

        let mut head_specs = hidden(c.head_width, c.head_depth - 1);
        head_specs.push(LayerSpec::linear(1));
        let head_in = c.head_input_dim();
        let head_main = MlpBlock::build(
            "head_main",
            head_in,
            &head_specs,
            &mut block_rng(seed, HEAD_MAIN_STREAM),
            mix(seed ^ HEAD_MAIN_STREAM),
        )?;
        let head_aux = if c.variant.has_aux() {
            Some(MlpBlock::build(
                "head_aux",
                head_in,
                &head_specs,
                &mut block_rng(seed, HEAD_AUX_STREAM),
                mix(seed ^ HEAD_AUX_STREAM),
            )?)
        } else {
            None
        };

        Ok(Self {
            config,
            encoder,
            relation,
            aggregator,
            head_main,
            head_aux,
            pairs,
            pass: None,
            generation: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn encoder(&self) -> &MlpBlock {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut MlpBlock {
        &mut self.encoder
    }

    pub fn relation(&self) -> Option<&MlpBlock> {
        self.relation.as_ref()
    }

    pub fn relation_mut(&mut self) -> Option<&mut MlpBlock> {
        self.relation.as_mut()
    }

    pub fn aggregator(&self) -> Option<&MlpBlock> {
        self.aggregator.as_ref()
    }

    pub fn aggregator_mut(&mut self) -> Option<&mut MlpBlock> {
        self.aggregator.as_mut()
    }

    pub fn head_main(&self) -> &MlpBlock {
        &self.head_main
    }

    pub fn head_main_mut(&mut self) -> &mut MlpBlock {
        &mut self.head_main
    }

    pub fn head_aux(&self) -> Option<&MlpBlock> {
        self.head_aux.as_ref()
    }

    pub fn head_aux_mut(&mut self) -> Option<&mut MlpBlock> {
        self.head_aux.as_mut()
    }

    /// Drops the auxiliary head so the loss loses its λ term. The config still
    /// names the original variant; checkpoints of such a model do not reload.
    pub fn remove_aux_head(&mut self) {
        self.head_aux = None;
        self.clear_caches();
    }

    /// Number of objects the encoder sees per sample.
    fn objects(&self) -> usize {
        if self.config.variant.has_relations() {
            self.config.n_related + 1
        } else {
            1
        }
    }

    fn stack_inputs(&self, batch: &[RelationalSample]) -> Result<Matrix, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Batch("empty batch".into()));
        }
        let dim = self.config.input_dim;
        let objects = self.objects();
        let bsz = batch.len();
        let mut x = Matrix::zeros(objects * bsz, dim);
        for (b, s) in batch.iter().enumerate() {
            if s.x.len() != dim {
                return Err(ModelError::Batch(format!(
                    "sample {b}: feature width {} does not match input_dim {dim}",
                    s.x.len()
                )));
            }
            x.row_mut(b).copy_from_slice(&s.x);
            if objects > 1 {
                if s.related.len() != self.config.n_related {
                    return Err(ModelError::Batch(format!(
                        "sample {b}: {} related objects, model expects {}",
                        s.related.len(),
                        self.config.n_related
                    )));
                }
                for (i, r) in s.related.iter().enumerate() {
                    if r.len() != dim {
                        return Err(ModelError::Batch(format!(
                            "sample {b}, related {i}: feature width {} does not match input_dim {dim}",
                            r.len()
                        )));
                    }
                    x.row_mut((i + 1) * bsz + b).copy_from_slice(r);
                }
            }
        }
        Ok(x)
    }

    /// Runs the composition with `run` evaluating each block.
    fn compose(
        pairs: Option<&PairLayout>,
        has_aux: bool,
        stacked: &Matrix,
        batch: usize,
        mut run: impl FnMut(Stage, &Matrix) -> Result<Matrix, ModelError>,
    ) -> Result<Outputs, ModelError> {
        let encoded = run(Stage::Encoder, stacked)?;
        let rep = match pairs {
            Some(layout) => {
                let relations = run(Stage::Relation, &layout.pair_inputs(&encoded, batch))?;
                run(Stage::Aggregator, &layout.sum_terms(&relations, batch))?
            }
            None => encoded,
        };
        let main = run(Stage::HeadMain, &rep)?;
        let aux = if has_aux { Some(run(Stage::HeadAux, &rep)?) } else { None };
        Ok(Outputs { main, aux, rep })
    }

    fn run_infer(&self, batch: &[RelationalSample]) -> Result<Outputs, ModelError> {
        let stacked = self.stack_inputs(batch)?;
        Self::compose(
            self.pairs.as_ref(),
            self.head_aux.is_some(),
            &stacked,
            batch.len(),
            |stage, input| {
                let block = match stage {
                    Stage::Encoder => &self.encoder,
                    Stage::Relation => self.relation.as_ref().expect("relation block"),
                    Stage::Aggregator => self.aggregator.as_ref().expect("aggregator block"),
                    Stage::HeadMain => &self.head_main,
                    Stage::HeadAux => self.head_aux.as_ref().expect("aux head"),
                };
                Ok(block.infer(input)?)
            },
        )
    }

    fn run_train(&mut self, batch: &[RelationalSample]) -> Result<Outputs, ModelError> {
        let stacked = self.stack_inputs(batch)?;
        self.clear_caches();
        let objects = self.objects();
        let encoder = &mut self.encoder;
        let relation = &mut self.relation;
        let aggregator = &mut self.aggregator;
        let head_main = &mut self.head_main;
        let head_aux = &mut self.head_aux;
        let out = Self::compose(self.pairs.as_ref(), head_aux.is_some(), &stacked, batch.len(), |stage, input| {
            let block = match stage {
                Stage::Encoder => &mut *encoder,
                Stage::Relation => relation.as_mut().expect("relation block"),
                Stage::Aggregator => aggregator.as_mut().expect("aggregator block"),
                Stage::HeadMain => &mut *head_main,
                Stage::HeadAux => head_aux.as_mut().expect("aux head"),
            };
            Ok(block.forward(input, Mode::Train)?)
        });
        match out {
            Ok(out) => {
                self.generation += 1;
                self.pass = Some(PassCache {
                    generation: self.generation,
                    batch: batch.len(),
                    objects,
                });
                Ok(out)
            }
            Err(e) => {
                self.clear_caches();
                Err(e)
            }
        }
    }

    fn predictions(out: &Outputs) -> Vec<Prediction> {
        (0..out.main.rows())
            .map(|b| Prediction {
                y_hat: out.main.get(b, 0),
                y_aux_hat: out.aux.as_ref().map(|a| a.get(b, 0)),
                relation_vector: out.rep.row(b).to_vec(),
            })
            .collect()
    }

    /// Pure inference-mode predictions. Safe to call concurrently.
    pub fn predict(&self, batch: &[RelationalSample]) -> Result<Vec<Prediction>, ModelError> {
        Ok(Self::predictions(&self.run_infer(batch)?))
    }

    /// Training mode caches everything [`RelNetModel::backward`] needs.
    pub fn forward(&mut self, batch: &[RelationalSample], mode: Mode) -> Result<Vec<Prediction>, ModelError> {
        match mode {
            Mode::Infer => self.predict(batch),
            Mode::Train => Ok(Self::predictions(&self.run_train(batch)?)),
        }
    }

    pub fn l2_penalty(&self) -> f64 {
        l2_penalty(self.params(), self.config.gamma_l2)
    }

    /// Batch-summed joint loss: `Σ(ŷ−y)² + λ·Σ(ŷ′−y′)² + γ‖W‖²`.
    pub fn loss(&mut self, batch: &[RelationalSample], mode: Mode) -> Result<(LossParts, LossContext), ModelError> {
        let out = match mode {
            Mode::Train => self.run_train(batch)?,
            Mode::Infer => self.run_infer(batch)?,
        };
        let lambda = self.config.lambda_aux;
        let bsz = batch.len();
        let mut main = 0.0;
        let mut grad_main = Matrix::zeros(bsz, 1);
        for (b, s) in batch.iter().enumerate() {
            let d = out.main.get(b, 0) - s.y;
            main += d * d;
            grad_main.data_mut()[b] = 2.0 * d;
        }
        let mut aux = 0.0;
        let grad_aux = out.aux.as_ref().map(|pred| {
            let mut g = Matrix::zeros(bsz, 1);
            for (b, s) in batch.iter().enumerate() {
                let d = pred.get(b, 0) - s.y_aux;
                aux += d * d;
                g.data_mut()[b] = 2.0 * lambda * d;
            }
            g
        });
        let reg = self.l2_penalty();
        let total = if grad_aux.is_some() { main + lambda * aux + reg } else { main + reg };
        if !total.is_finite() {
            self.clear_caches();
            return Err(ModelError::Divergence(format!(
                "non-finite loss (main {main}, aux {aux}, reg {reg})"
            )));
        }
        let generation = match mode {
            Mode::Train => self.generation,
            Mode::Infer => 0,
        };
        Ok((
            LossParts { total, main, aux, reg },
            LossContext {
                generation,
                grad_main,
                grad_aux,
            },
        ))
    }

    /// Accumulates data-loss gradients into every parameter. The ℓ2 gradient is
    /// left to the optimizer.
    pub fn backward(&mut self, ctx: &LossContext) -> Result<(), ModelError> {
        let pass = match &self.pass {
            Some(p) if p.generation == ctx.generation && ctx.generation != 0 => p.clone(),
            _ => return Err(ModelError::StaleCache),
        };
        self.pass = None;
        let PassCache { batch, objects, .. } = pass;

        let mut grad_rep = self.head_main.backward(&ctx.grad_main)?;
        if let (Some(head), Some(g)) = (self.head_aux.as_mut(), ctx.grad_aux.as_ref()) {
            let aux_rep = head.backward(g)?;
            for (d, s) in grad_rep.data_mut().iter_mut().zip(aux_rep.data()) {
                *d += s;
            }
        }
        let grad_encoded = match (&self.pairs, self.relation.as_mut(), self.aggregator.as_mut()) {
            (Some(layout), Some(relation), Some(aggregator)) => {
                let grad_sum = aggregator.backward(&grad_rep)?;
                let grad_pairs = relation.backward(&layout.spread_grad(&grad_sum, batch))?;
                layout.scatter_pair_grad(&grad_pairs, batch, objects)
            }
            _ => grad_rep,
        };
        self.encoder.backward(&grad_encoded)?;
        Ok(())
    }

    fn blocks(&self) -> impl Iterator<Item = &MlpBlock> {
        std::iter::once(&self.encoder)
            .chain(self.relation.as_ref())
            .chain(self.aggregator.as_ref())
            .chain(std::iter::once(&self.head_main))
            .chain(self.head_aux.as_ref())
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut MlpBlock> {
        std::iter::once(&mut self.encoder)
            .chain(self.relation.as_mut())
            .chain(self.aggregator.as_mut())
            .chain(std::iter::once(&mut self.head_main))
            .chain(self.head_aux.as_mut())
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        self.blocks().flat_map(MlpBlock::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.blocks_mut().flat_map(MlpBlock::params_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(ParamTensor::zero_grad);
    }

    pub fn clear_caches(&mut self) {
        self.pass = None;
        self.blocks_mut().for_each(MlpBlock::clear_cache);
    }

    /// Restarts every dropout mask stream, making the next training forward
    /// replayable.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.blocks_mut().for_each(|b| b.reseed_dropout(seed));
    }

    // Single-example views of the composition, all in inference mode.

    /// `o = e(x)` and `oᵢ = e(xᵢ)` for every sample, through the one encoder.
    pub fn encode_objects(&self, batch: &[RelationalSample]) -> Result<(Matrix, Vec<Matrix>), ModelError> {
        let stacked = self.stack_inputs(batch)?;
        let encoded = self.encoder.infer(&stacked)?;
        let bsz = batch.len();
        let w = encoded.cols();
        let slice = |k: usize| {
            Matrix::from_vec(bsz, w, encoded.data()[k * bsz * w..(k + 1) * bsz * w].to_vec()).expect("block shape")
        };
        let o = slice(0);
        let others = (1..self.objects()).map(slice).collect();
        Ok((o, others))
    }

    fn relation_block(&self) -> Result<&MlpBlock, ModelError> {
        self.relation
            .as_ref()
            .ok_or_else(|| ModelError::Config(format!("variant {} has no relation block", self.config.variant)))
    }

    fn aggregator_block(&self) -> Result<&MlpBlock, ModelError> {
        self.aggregator
            .as_ref()
            .ok_or_else(|| ModelError::Config(format!("variant {} has no aggregator", self.config.variant)))
    }

    /// `rᵢ = g([o, oᵢ])`.
    pub fn relation_pair(&self, o: &[f64], o_i: &[f64]) -> Result<Vec<f64>, ModelError> {
        let g = self.relation_block()?;
        let mut pair = o.to_vec();
        pair.extend_from_slice(o_i);
        Ok(g.infer(&Matrix::from_vec(1, pair.len(), pair)?)?.into_data())
    }

    /// `r = f(Σᵢ rᵢ)`, summing in index order.
    pub fn aggregate_relations(&self, relations: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        let f = self.aggregator_block()?;
        let first = relations
            .first()
            .ok_or_else(|| ModelError::Batch("no relation vectors to aggregate".into()))?;
        let mut sum = vec![0.0; first.len()];
        for r in relations {
            if r.len() != sum.len() {
                return Err(ModelError::Batch("relation vectors differ in width".into()));
            }
            for (s, v) in sum.iter_mut().zip(r) {
                *s += v;
            }
        }
        Ok(f.infer(&Matrix::from_vec(1, sum.len(), sum)?)?.into_data())
    }

    /// `f(Σ_{i<j} ½(g([oᵢ,oⱼ]) + g([oⱼ,oᵢ])))` over the given objects.
    pub fn aggregate_all_pairs(&self, objects: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        if objects.len() < 2 {
            return Err(ModelError::Batch(format!(
                "all-pairs aggregation needs at least 2 objects, got {}",
                objects.len()
            )));
        }
        let layout = PairLayout::new(RnMode::AllPairs, objects.len());
        let encoded = Matrix::from_rows(objects);
        // One "sample" whose objects are the rows of `encoded`.
        let relations = self.relation_block()?.infer(&layout.pair_inputs(&encoded, 1))?;
        let sum = layout.sum_terms(&relations, 1);
        Ok(self.aggregator_block()?.infer(&sum)?.into_data())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: serde_json::to_value(&self.config).expect("config serializes"),
            params: self
                .params()
                .into_iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: p.values.clone(),
                })
                .collect(),
            running_stats: self
                .blocks()
                .flat_map(MlpBlock::batch_norms)
                .map(|bn| RunningStatRecord {
                    name: bn.name().to_string(),
                    mean: bn.running_mean.clone(),
                    var: bn.running_var.clone(),
                })
                .collect(),
            extras: Default::default(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let config: ModelConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        let mut model = Self::build(config)?;
        {
            let mut params = model.params_mut();
            if params.len() != ckpt.params.len() {
                return Err(ModelError::Checkpoint(format!(
                    "checkpoint holds {} tensors, model expects {}",
                    ckpt.params.len(),
                    params.len()
                )));
            }
            for (p, rec) in params.iter_mut().zip(&ckpt.params) {
                if p.name != rec.name || p.shape != rec.shape {
                    return Err(ModelError::Checkpoint(format!(
                        "tensor `{}` {:?} does not match model tensor `{}` {:?}",
                        rec.name, rec.shape, p.name, p.shape
                    )));
                }
                p.assign(&rec.values)?;
            }
        }
        let mut stats = ckpt.running_stats.iter();
        for bn in model.blocks_mut().flat_map(MlpBlock::batch_norms_mut) {
            let rec = stats
                .next()
                .ok_or_else(|| ModelError::Checkpoint(format!("missing running stats for `{}`", bn.name())))?;
            if rec.name != bn.name() || rec.mean.len() != bn.dim() || rec.var.len() != bn.dim() {
                return Err(ModelError::Checkpoint(format!(
                    "running stats `{}` do not match layer `{}`",
                    rec.name,
                    bn.name()
                )));
            }
            bn.running_mean.copy_from_slice(&rec.mean);
            bn.running_var.copy_from_slice(&rec.var);
        }
        if stats.next().is_some() {
            return Err(ModelError::Checkpoint("unexpected extra running stats".into()));
        }
        Ok(model)
    }
}
