//! The two-stage network: query-centric encoders, a stage-1 proposer
//! (classified marginal queries or free joint queries) and the stage-2
//! keypoint-guided joint decoder.

mod config;
mod input;
mod output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{ModelConfig, Proposer, Variant};
pub use input::{element_frame, pair_targets, SceneInputs, HIST_FEATURES, INPUT_SCALE, MAP_FEATURES};
pub use output::{
    globalize_keypoints, keypoints, GaussianTrajectory, JointMode, JointPrediction, Prediction, Proposal, QueryTag,
};

use crate::scene::{AgentType, SceneSample};
use crate::tensor::nn::{key_mask, AttentionBlock, Embedding, Linear, LstmCell, Mlp};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

/// Spread bounds of every Gaussian output, metres.
pub const SIGMA_MIN: f64 = 1e-3;
pub const SIGMA_MAX: f64 = 1e3;
/// Initial spread of every Gaussian, metres.
pub const SIGMA_INIT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("scene does not match the model: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Encoder output for one scene.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// Agent tokens before the context layers, `[n_agents, D]`.
    pub agent_tokens: Var,
    /// Map tokens per pair slot before the context layers, `[n_map, D]`.
    pub map_tokens: [Var; 2],
    /// Context set per pair slot after the encoder: agents then map.
    pub ctx: [Var; 2],
    pub ctx_mask: [Vec<bool>; 2],
    /// Post-encoder token of each pair member, `[1, D]`.
    pub hist: [Var; 2],
}

/// A mode set on the tape. Joint sets share one logit row across slots.
#[derive(Clone, Copy, Debug)]
pub struct ModeSet {
    /// Local-frame means per slot, `[modes, 2T]` interleaved x, y.
    pub mu: [Var; 2],
    pub sigma: [Var; 2],
    /// Score logits per slot, `[1, modes]`.
    pub logits: [Var; 2],
    /// Decoder query states per slot, `[modes, D]`.
    pub content: [Var; 2],
    pub joint: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub stage1: ModeSet,
    pub stage2: Option<ModeSet>,
}

#[derive(Clone, Debug)]
struct Encoder {
    lstm: LstmCell,
    null_token: ParamId,
    agent_pe: Linear,
    agent_type: Embedding,
    map_mlp: Mlp,
    map_pe: Linear,
    layers: Vec<AttentionBlock>,
}

fn onehot_types(types: &[AgentType]) -> Tensor {
    let mut d = vec![0.0; types.len() * 3];
    for (i, t) in types.iter().enumerate() {
        d[i * 3 + t.index()] = 1.0;
    }
    Tensor::matrix(types.len(), 3, d)
}

fn row_mask(rows: &[bool], dim: usize) -> Tensor {
    let mut d = Vec::with_capacity(rows.len() * dim);
    for &r in rows {
        d.extend(std::iter::repeat(f64::from(r)).take(dim));
    }
    Tensor::matrix(rows.len(), dim, d)
}

fn broadcast(t: &mut Tape, row: Var, n: usize) -> Var {
    let dim = t.value(row).cols();
    let z = t.constant(Tensor::zeros(&[n, dim]));
    t.add_row(z, row)
}

impl Encoder {
    fn new(store: &mut ParamStore, c: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = c.d_dim;
        Encoder {
            lstm: LstmCell::new(store, "enc.lstm", HIST_FEATURES, d, rng),
            null_token: store.add_xavier("enc.null_token", 1, d, rng),
            agent_pe: Linear::new(store, "enc.agent_pe", c.pe_dim, d, rng),
            agent_type: Embedding::new(store, "enc.agent_type", 3, d, rng),
            map_mlp: Mlp::new(store, "enc.map_mlp", MAP_FEATURES, d, d, rng),
            map_pe: Linear::new(store, "enc.map_pe", c.pe_dim, d, rng),
            layers: (0..c.e)
                .map(|l| AttentionBlock::new(store, &format!("enc.layer{l}"), d, c.heads, c.ff_dim, rng))
                .collect(),
        }
    }

    /// LSTM state after the last valid step, origin encoding and type
    /// embedding added; agents with no valid step get the null token.
    fn history_tokens(&self, t: &mut Tape, inp: &SceneInputs, d: usize) -> Var {
        let na = inp.n_agents();
        let mut h = t.constant(Tensor::zeros(&[na, d]));
        let mut c = t.constant(Tensor::zeros(&[na, d]));
        for (x, valid) in inp.history.iter().zip(&inp.step_valid) {
            if !valid.iter().any(|v| *v) {
                continue;
            }
            let xv = t.constant(x.clone());
            let (h2, c2) = self.lstm.step(t, xv, h, c);
            if valid.iter().all(|v| *v) {
                h = h2;
                c = c2;
            } else {
                let m = t.constant(row_mask(valid, d));
                let dh = t.sub(h2, h);
                let dh = t.mul(m, dh);
                h = t.add(h, dh);
                let dc = t.sub(c2, c);
                let dc = t.mul(m, dc);
                c = t.add(c, dc);
            }
        }
        let pe = t.constant(inp.agent_pe.clone());
        let pe = self.agent_pe.forward(t, pe);
        let oh = t.constant(onehot_types(&inp.types));
        let table = self.agent_type.all(t);
        let ty = t.matmul(oh, table);
        let tok = t.add(h, pe);
        let tok = t.add(tok, ty);
        let absent = inp.present.iter().filter(|p| !**p).count();
        if absent == 0 {
            return tok;
        }
        log::trace!("{absent} agents without history take the null token");
        let keep = t.constant(row_mask(&inp.present, d));
        let drop: Vec<bool> = inp.present.iter().map(|p| !p).collect();
        let drop = t.constant(row_mask(&drop, d));
        let null = t.param(self.null_token);
        let null = broadcast(t, null, na);
        let a = t.mul(keep, tok);
        let b = t.mul(drop, null);
        t.add(a, b)
    }

    /// Point MLP, max-pooled per element, origin encoding added.
    fn map_tokens(&self, t: &mut Tape, inp: &SceneInputs, slot: usize, n_points: usize) -> Var {
        let pts = t.constant(inp.map_points[slot].clone());
        let h = self.map_mlp.forward(t, pts);
        let pooled = t.group_max(h, n_points);
        let pe = t.constant(inp.map_pe[slot].clone());
        let pe = self.map_pe.forward(t, pe);
        t.add(pooled, pe)
    }

    fn context(&self, t: &mut Tape, tokens: Var, mask: &[bool]) -> Var {
        let n = mask.len();
        let m = key_mask(n, mask);
        let mut x = tokens;
        for layer in &self.layers {
            x = layer.self_attend(t, x, Some(&m));
        }
        x
    }

    fn encode(&self, t: &mut Tape, inp: &SceneInputs, c: &ModelConfig) -> Encoded {
        let agent_tokens = self.history_tokens(t, inp, c.d_dim);
        let map_tokens = [0, 1].map(|s| self.map_tokens(t, inp, s, c.dims.n_points));
        let mut ctx_mask = [inp.present.clone(), inp.present.clone()];
        let mut ctx = [agent_tokens; 2];
        for s in 0..2 {
            ctx_mask[s].extend_from_slice(&inp.map_valid[s]);
            let set = t.concat_rows(&[agent_tokens, map_tokens[s]]);
            ctx[s] = self.context(t, set, &ctx_mask[s]);
        }
        let hist = [0, 1].map(|s| t.slice_rows(ctx[s], inp.pair[s], 1));
        Encoded {
            agent_tokens,
            map_tokens,
            ctx,
            ctx_mask,
            hist,
        }
    }
}

/// Output layers of the trajectory heads start this much smaller than
/// Xavier, so initial means sit near the agent.
const HEAD_INIT_GAIN: f64 = 0.1;

/// Head emitting `agents` blocks of `T x 4` Gaussian parameters and one
/// logit. Initial spreads are `spread` metres.
fn gmm_head(store: &mut ParamStore, name: &str, d: usize, agents: usize, steps: usize, spread: f64, rng: &mut ChaCha8Rng) -> Mlp {
    let head = Mlp::new(store, name, d, d, agents * 4 * steps + 1, rng);
    for w in store.get_mut(head.out.weight).data_mut() {
        *w *= HEAD_INIT_GAIN;
    }
    let bias = store.get_mut(head.out.bias.expect("head bias")).data_mut();
    for a in 0..agents {
        let o = a * 4 * steps + 2 * steps;
        bias[o..o + 2 * steps].fill(spread.ln());
    }
    head
}

/// Splits a `[modes, 4T]` head block into means and clamped spreads. The
/// mean columns are per-step displacements in units of `scale` metres.
fn gaussians(t: &mut Tape, out: Var, start: usize, steps: usize, scale: f64) -> (Var, Var) {
    let mu = t.slice_cols(out, start, 2 * steps);
    // running sum of per-step displacements, x and y separately
    let n = 2 * steps;
    let mut cum = vec![0.0; n * n];
    for j in 0..n {
        for i in (j..n).step_by(2) {
            cum[j * n + i] = scale;
        }
    }
    let cum = t.constant(Tensor::matrix(n, n, cum));
    let mu = t.matmul(mu, cum);
    let raw = t.slice_cols(out, start + 2 * steps, 2 * steps);
    (mu, t.clamp_exp(raw, SIGMA_MIN, SIGMA_MAX))
}

fn logit_row(t: &mut Tape, out: Var, col: usize) -> Var {
    let rows = t.value(out).rows();
    let l = t.slice_cols(out, col, 1);
    t.reshape(l, &[1, rows])
}

/// Classified per-agent queries: Mode2Scene, AfterMode2Mode, GMM head.
#[derive(Clone, Debug)]
struct MarginalDecoder {
    modes: Embedding,
    agent: Embedding,
    mode2scene: AttentionBlock,
    after_mode2mode: AttentionBlock,
    head: Mlp,
}

impl MarginalDecoder {
    fn new(store: &mut ParamStore, c: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = c.d_dim;
        MarginalDecoder {
            modes: Embedding::new(store, "s1.mode", c.y_m * c.k_m, d, rng),
            agent: Embedding::new(store, "s1.agent", 2, d, rng),
            mode2scene: AttentionBlock::new(store, "s1.mode2scene", d, c.heads, c.ff_dim, rng),
            after_mode2mode: AttentionBlock::new(store, "s1.after_mode2mode", d, c.heads, c.ff_dim, rng),
            head: gmm_head(store, "s1.head", d, 1, c.dims.t_future, SIGMA_INIT, rng),
        }
    }

    fn decode(&self, t: &mut Tape, enc: &Encoded, c: &ModelConfig) -> ModeSet {
        let steps = c.dims.t_future;
        let m = c.y_m * c.k_m;
        let mut parts = Vec::with_capacity(2);
        for s in 0..2 {
            let ag = self.agent.row(t, s);
            let base = t.add(ag, enc.hist[s]);
            let q = self.modes.all(t);
            let q = t.add_row(q, base);
            let mask = key_mask(m, &enc.ctx_mask[s]);
            let q = self.mode2scene.cross_attend(t, q, enc.ctx[s], Some(&mask));
            let q = self.after_mode2mode.self_attend(t, q, None);
            let out = self.head.forward(t, q);
            let (mu, sigma) = gaussians(t, out, 0, steps, c.output_scale);
            let logits = logit_row(t, out, 4 * steps);
            parts.push((mu, sigma, logits, q));
        }
        ModeSet {
            mu: [parts[0].0, parts[1].0],
            sigma: [parts[0].1, parts[1].1],
            logits: [parts[0].2, parts[1].2],
            content: [parts[0].3, parts[1].3],
            joint: false,
        }
    }
}

/// Free joint queries over both pair contexts; each query emits both
/// agents' trajectories and one score.
#[derive(Clone, Debug)]
struct JointDecoder {
    modes: Embedding,
    agent: Embedding,
    mode2scene: AttentionBlock,
    after_mode2mode: AttentionBlock,
    head: Mlp,
}

impl JointDecoder {
    fn new(store: &mut ParamStore, name: &str, c: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = c.d_dim;
        JointDecoder {
            modes: Embedding::new(store, &format!("{name}.mode"), c.k_j, d, rng),
            agent: Embedding::new(store, &format!("{name}.agent"), 2, d, rng),
            mode2scene: AttentionBlock::new(store, &format!("{name}.mode2scene"), d, c.heads, c.ff_dim, rng),
            after_mode2mode: AttentionBlock::new(store, &format!("{name}.after_mode2mode"), d, c.heads, c.ff_dim, rng),
            head: gmm_head(store, &format!("{name}.head"), d, 2, c.dims.t_future, SIGMA_INIT, rng),
        }
    }

    /// `extra` adds a row to every query and extra always-visible keys.
    fn decode(&self, t: &mut Tape, enc: &Encoded, extra: Option<(Var, Var)>, c: &ModelConfig) -> ModeSet {
        let steps = c.dims.t_future;
        let k = c.k_j;
        let a0 = self.agent.row(t, 0);
        let a1 = self.agent.row(t, 1);
        let s0 = t.add(a0, enc.hist[0]);
        let s1 = t.add(a1, enc.hist[1]);
        let mut base = t.add(s0, s1);
        let mut kv = vec![enc.ctx[0], enc.ctx[1]];
        let mut keys: Vec<bool> = enc.ctx_mask[0].iter().chain(&enc.ctx_mask[1]).copied().collect();
        if let Some((add, extra_kv)) = extra {
            base = t.add(base, add);
            keys.extend(std::iter::repeat(true).take(t.value(extra_kv).rows()));
            kv.push(extra_kv);
        }
        let kv = t.concat_rows(&kv);
        let q = self.modes.all(t);
        let q = t.add_row(q, base);
        let mask = key_mask(k, &keys);
        let q = self.mode2scene.cross_attend(t, q, kv, Some(&mask));
        let q = self.after_mode2mode.self_attend(t, q, None);
        let out = self.head.forward(t, q);
        let (mu0, sg0) = gaussians(t, out, 0, steps, c.output_scale);
        let (mu1, sg1) = gaussians(t, out, 4 * steps, steps, c.output_scale);
        let logits = logit_row(t, out, 8 * steps);
        ModeSet {
            mu: [mu0, mu1],
            sigma: [sg0, sg1],
            logits: [logits, logits],
            content: [q, q],
            joint: true,
        }
    }
}

/// Stage 2: proposal encodings, BeforeMode2Mode, per-agent mean,
/// Agent2Agent, then the joint decoder with the result as extra keys.
#[derive(Clone, Debug)]
struct Refiner {
    future_mlp: Mlp,
    future_type: Embedding,
    keypoint_mlp: Mlp,
    keypoint_type: Embedding,
    before_mode2mode: AttentionBlock,
    agent2agent: AttentionBlock,
    joint: JointDecoder,
}

impl Refiner {
    fn new(store: &mut ParamStore, c: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = c.d_dim;
        Refiner {
            future_mlp: Mlp::new(store, "s2.future_mlp", 2, d, d, rng),
            future_type: Embedding::new(store, "s2.future_type", 3, d, rng),
            keypoint_mlp: Mlp::new(store, "s2.keypoint_mlp", 4, d, d, rng),
            keypoint_type: Embedding::new(store, "s2.keypoint_type", 3, d, rng),
            before_mode2mode: AttentionBlock::new(store, "s2.before_mode2mode", d, c.heads, c.ff_dim, rng),
            agent2agent: AttentionBlock::new(store, "s2.agent2agent", d, c.heads, c.ff_dim, rng),
            joint: JointDecoder::new(store, "s2.joint", c, rng),
        }
    }

    /// Per-step MLP on the means, max over time, type embedding added.
    fn encode_future(&self, t: &mut Tape, mu: Var, ty: AgentType, steps: usize) -> Var {
        let m = t.value(mu).rows();
        let x = t.scale(mu, 1.0 / INPUT_SCALE);
        let x = t.reshape(x, &[m * steps, 2]);
        let h = self.future_mlp.forward(t, x);
        let pooled = t.group_max(h, steps);
        let e = self.future_type.row(t, ty.index());
        t.add_row(pooled, e)
    }

    /// Per-keypoint MLP, mean over the three keypoints, type embedding added.
    fn encode_keypoints(&self, t: &mut Tape, mu: Var, ty: AgentType, c: &ModelConfig) -> Var {
        let m = t.value(mu).rows();
        let feats: Vec<Var> = c
            .keypoint_steps()
            .into_iter()
            .map(|k| {
                let p = t.slice_cols(mu, 2 * k, 2);
                let prev = if k == 0 {
                    t.constant(Tensor::zeros(&[m, 2]))
                } else {
                    t.slice_cols(mu, 2 * (k - 1), 2)
                };
                let v = t.sub(p, prev);
                let v = t.scale(v, c.dims.hz / INPUT_SCALE);
                let p = t.scale(p, 1.0 / INPUT_SCALE);
                t.concat_cols(&[p, v])
            })
            .collect();
        let x = t.concat_rows(&feats);
        let h = self.keypoint_mlp.forward(t, x);
        let parts: Vec<Var> = (0..3).map(|i| t.slice_rows(h, i * m, m)).collect();
        let sum = t.add(parts[0], parts[1]);
        let sum = t.add(sum, parts[2]);
        let mean = t.scale(sum, 1.0 / 3.0);
        let e = self.keypoint_type.row(t, ty.index());
        t.add_row(mean, e)
    }

    fn refine(&self, t: &mut Tape, enc: &Encoded, s1: &ModeSet, types: [AgentType; 2], c: &ModelConfig) -> ModeSet {
        if !c.use_proposals {
            return self.joint.decode(t, enc, None, c);
        }
        let m = t.value(s1.mu[0]).rows();
        let mut toks = Vec::with_capacity(2);
        for s in 0..2 {
            let mut tok = self.encode_future(t, s1.mu[s], types[s], c.dims.t_future);
            if c.use_keypoints {
                let kp = self.encode_keypoints(t, s1.mu[s], types[s], c);
                tok = t.add(tok, kp);
            }
            toks.push(t.add(tok, s1.content[s]));
        }
        let all = t.concat_rows(&toks);
        let all = self.before_mode2mode.self_attend(t, all, None);
        let agents = t.group_mean(all, m);
        let agents = self.agent2agent.self_attend(t, agents, None);
        let r0 = t.slice_rows(agents, 0, 1);
        let r1 = t.slice_rows(agents, 1, 1);
        let add = t.add(r0, r1);
        let kv = t.concat_rows(&[agents, all]);
        self.joint.decode(t, enc, Some((add, kv)), c)
    }
}

/// Layer structure of a model; parameters live in a separate store so the
/// two can be borrowed independently.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    encoder: Encoder,
    marginal: Option<MarginalDecoder>,
    proposer: Option<JointDecoder>,
    refiner: Option<Refiner>,
}

impl Network {
    pub fn check_scene(&self, scene: &SceneSample) -> Result<(), ModelError> {
        if scene.dims != self.config.dims {
            return Err(ModelError::Shape(format!(
                "scene dims {:?} vs model dims {:?}",
                scene.dims, self.config.dims
            )));
        }
        Ok(())
    }

    pub fn encode(&self, t: &mut Tape, inp: &SceneInputs) -> Encoded {
        self.encoder.encode(t, inp, &self.config)
    }

    pub fn forward(&self, t: &mut Tape, inp: &SceneInputs) -> ForwardVars {
        let c = &self.config;
        let enc = self.encode(t, inp);
        let stage1 = match (&self.marginal, &self.proposer) {
            (Some(m), _) => m.decode(t, &enc, c),
            (None, Some(p)) => p.decode(t, &enc, None, c),
            (None, None) => unreachable!("network without a proposer"),
        };
        let types = [inp.pair_type(0), inp.pair_type(1)];
        let stage2 = self.refiner.as_ref().map(|r| r.refine(t, &enc, &stage1, types, c));
        ForwardVars { stage1, stage2 }
    }

    /// Decodes a mode set into per-slot trajectories (global frame).
    fn read_modes(&self, t: &Tape, set: &ModeSet, inp: &SceneInputs) -> [Vec<GaussianTrajectory>; 2] {
        let steps = self.config.dims.t_future;
        [0, 1].map(|s| {
            let mu = t.value(set.mu[s]);
            let sg = t.value(set.sigma[s]);
            let scores = softmax(t.value(set.logits[s]).data());
            let origin = inp.pair_origin(s);
            (0..mu.rows())
                .map(|i| {
                    let mr = mu.row_slice(i);
                    let sr = sg.row_slice(i);
                    GaussianTrajectory {
                        means: (0..steps).map(|k| [mr[2 * k], mr[2 * k + 1]]).collect(),
                        sigmas: (0..steps).map(|k| [sr[2 * k], sr[2 * k + 1]]).collect(),
                        score: scores[i],
                    }
                    .globalized(&origin)
                })
                .collect()
        })
    }

    pub fn predict_inputs(&self, params: &ParamStore, inp: &SceneInputs) -> Prediction {
        let c = &self.config;
        let mut t = Tape::new(params);
        let out = self.forward(&mut t, inp);
        let s1 = self.read_modes(&t, &out.stage1, inp);
        let steps = c.keypoint_steps();
        let proposals = [0, 1].map(|s| {
            let mu = t.value(out.stage1.mu[s]);
            let content = t.value(out.stage1.content[s]);
            let origin = inp.pair_origin(s);
            s1[s]
                .iter()
                .enumerate()
                .map(|(i, traj)| {
                    let local: Vec<[f64; 2]> =
                        mu.row_slice(i).chunks_exact(2).map(|p| [p[0], p[1]]).collect();
                    let tag = if out.stage1.joint {
                        QueryTag {
                            category: 0,
                            mode: i,
                            agent: s,
                        }
                    } else {
                        QueryTag {
                            category: i / c.k_m,
                            mode: i % c.k_m,
                            agent: s,
                        }
                    };
                    Proposal {
                        trajectory: traj.clone(),
                        keypoints: globalize_keypoints(keypoints(&local, steps, c.dims.hz), &origin),
                        content: content.row_slice(i).to_vec(),
                        tag,
                    }
                })
                .collect()
        });
        let refined = out.stage2.map(|set| {
            let [a, b] = self.read_modes(&t, &set, inp);
            JointPrediction {
                modes: a
                    .into_iter()
                    .zip(b)
                    .map(|(x, y)| JointMode {
                        score: x.score,
                        agents: [x, y],
                    })
                    .collect(),
            }
        });
        let joint = match &refined {
            Some(j) => j.clone(),
            None if out.stage1.joint => JointPrediction {
                modes: s1[0]
                    .iter()
                    .zip(&s1[1])
                    .map(|(x, y)| JointMode {
                        score: x.score,
                        agents: [x.clone(), y.clone()],
                    })
                    .collect(),
            },
            None => JointPrediction::from_marginals(&s1[0], &s1[1], c.k_j),
        };
        Prediction {
            proposals,
            joint_proposals: out.stage1.joint,
            refined,
            joint,
        }
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// A network with its parameters.
#[derive(Clone, Debug)]
pub struct JamModel {
    pub net: Network,
    pub params: ParamStore,
}

impl JamModel {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, &config, &mut rng);
        let (marginal, proposer) = match config.proposer() {
            Proposer::Marginal => (Some(MarginalDecoder::new(&mut store, &config, &mut rng)), None),
            Proposer::Joint => (None, Some(JointDecoder::new(&mut store, "s1.joint", &config, &mut rng))),
        };
        let refiner = config.has_stage2().then(|| Refiner::new(&mut store, &config, &mut rng));
        Ok(JamModel {
            net: Network {
                config,
                encoder,
                marginal,
                proposer,
                refiner,
            },
            params: store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn inputs(&self, scene: &SceneSample) -> Result<SceneInputs, ModelError> {
        self.net.check_scene(scene)?;
        Ok(SceneInputs::new(scene, self.config().pe_dim))
    }

    pub fn predict(&self, scene: &SceneSample) -> Result<Prediction, ModelError> {
        let inp = self.inputs(scene)?;
        Ok(self.net.predict_inputs(&self.params, &inp))
    }
}
