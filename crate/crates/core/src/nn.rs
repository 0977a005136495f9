//! The actor-critic network with hand-written reverse-mode gradients.
//!
//! Position columns `(x, y)` and velocity columns `(vx, vy)` of an observation
//! pass through separate ReLU encoders, are concatenated, fused by a ReLU layer
//! and read out by a 5-way policy head and a scalar value head. In
//! [`TrunkMode::Shared`] both heads read the same trunk; in
//! [`TrunkMode::Separate`] the critic owns a second trunk of identical shape.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Observation, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrunkMode {
    Shared,
    Separate,
}

impl fmt::Display for TrunkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrunkMode::Shared => "shared",
            TrunkMode::Separate => "separate",
        })
    }
}

impl FromStr for TrunkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shared" => Ok(TrunkMode::Shared),
            "separate" => Ok(TrunkMode::Separate),
            other => Err(Error::InvalidConfig(format!("unknown trunk mode '{other}' (expected shared or separate)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub n_obs: usize,
    pub encoder_width: usize,
    pub fusion_width: usize,
    pub trunk: TrunkMode,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { n_obs: 5, encoder_width: 64, fusion_width: 128, trunk: TrunkMode::Shared }
    }
}

impl Architecture {
    pub fn with_n_obs(n_obs: usize) -> Self {
        Self { n_obs, ..Self::default() }
    }
}

/// Affine layer `y = W x + b` with `W` stored row-major (`n_out x n_in`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weight: vec![T::zero(); n_in * n_out], bias: vec![T::zero(); n_out] }
    }

    fn init(n_in: usize, n_out: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let bound = scale / (n_in as f64).sqrt();
        let weight = (0..n_in * n_out).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect();
        Self { n_in, n_out, weight, bias: vec![T::zero(); n_out] }
    }

    fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.n_in);
        self.weight
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx` when asked.
    fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>, want_dx: bool) -> Option<Vec<T>> {
        for (o, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.n_in..(o + 1) * self.n_in];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); self.n_in];
            for (o, &g) in dy.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
            dx
        })
    }
}

fn relu<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    for x in &mut v {
        *x = x.max(T::zero());
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trunk<T> {
    pub pos_encoder: Dense<T>,
    pub vel_encoder: Dense<T>,
    pub fusion: Dense<T>,
}

struct TrunkCache<T> {
    pos_in: Vec<T>,
    vel_in: Vec<T>,
    hidden: Vec<T>,
    features: Vec<T>,
}

impl<T: Scalar> Trunk<T> {
    fn zeros(arch: &Architecture) -> Self {
        let n = 2 * arch.n_obs;
        Self {
            pos_encoder: Dense::zeros(n, arch.encoder_width),
            vel_encoder: Dense::zeros(n, arch.encoder_width),
            fusion: Dense::zeros(2 * arch.encoder_width, arch.fusion_width),
        }
    }

    fn init(arch: &Architecture, rng: &mut ChaCha8Rng) -> Self {
        let n = 2 * arch.n_obs;
        let he = 6f64.sqrt();
        Self {
            pos_encoder: Dense::init(n, arch.encoder_width, he, rng),
            vel_encoder: Dense::init(n, arch.encoder_width, he, rng),
            fusion: Dense::init(2 * arch.encoder_width, arch.fusion_width, he, rng),
        }
    }

    fn slices(&self) -> [&[T]; 6] {
        [
            &self.pos_encoder.weight,
            &self.pos_encoder.bias,
            &self.vel_encoder.weight,
            &self.vel_encoder.bias,
            &self.fusion.weight,
            &self.fusion.bias,
        ]
    }

    fn slices_mut(&mut self) -> [&mut [T]; 6] {
        [
            &mut self.pos_encoder.weight,
            &mut self.pos_encoder.bias,
            &mut self.vel_encoder.weight,
            &mut self.vel_encoder.bias,
            &mut self.fusion.weight,
            &mut self.fusion.bias,
        ]
    }

    fn forward(&self, obs: &Observation<T>) -> TrunkCache<T> {
        let pos_in = obs.columns(0, 1);
        let vel_in = obs.columns(2, 3);
        let mut hidden = relu(self.pos_encoder.forward(&pos_in));
        hidden.extend(relu(self.vel_encoder.forward(&vel_in)));
        let features = relu(self.fusion.forward(&hidden));
        TrunkCache { pos_in, vel_in, hidden, features }
    }

    fn backward(&self, cache: &TrunkCache<T>, d_features: &[T], grad: &mut Trunk<T>) {
        let dz: Vec<T> =
            d_features.iter().zip(&cache.features).map(|(&g, &f)| if f > T::zero() { g } else { T::zero() }).collect();
        let dh = self.fusion.backward(&cache.hidden, &dz, &mut grad.fusion, true).expect("dx requested");
        let masked: Vec<T> =
            dh.iter().zip(&cache.hidden).map(|(&g, &h)| if h > T::zero() { g } else { T::zero() }).collect();
        let (d_pos, d_vel) = masked.split_at(self.pos_encoder.n_out);
        self.pos_encoder.backward(&cache.pos_in, d_pos, &mut grad.pos_encoder, false);
        self.vel_encoder.backward(&cache.vel_in, d_vel, &mut grad.vel_encoder, false);
    }
}

/// All network weights. The same type doubles as a gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: Architecture,
    pub actor_trunk: Trunk<T>,
    /// Present only in [`TrunkMode::Separate`].
    pub critic_trunk: Option<Trunk<T>>,
    pub actor_head: Dense<T>,
    pub critic_head: Dense<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutput<T> {
    pub logits: [T; NUM_ACTIONS],
    pub probs: [T; NUM_ACTIONS],
    pub log_probs: [T; NUM_ACTIONS],
    pub value: T,
}

/// One training sample. `advantage` and `ret` are constants of the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub obs: Observation<T>,
    pub action: usize,
    pub advantage: T,
    pub ret: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossCoefficients<T> {
    pub value: T,
    pub entropy: T,
}

impl<T: Scalar> Default for LossCoefficients<T> {
    fn default() -> Self {
        Self { value: T::lit(0.5), entropy: T::lit(0.01) }
    }
}

/// Batch means of the individual loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats<T> {
    pub total: T,
    pub policy: T,
    pub value: T,
    pub entropy: T,
}

/// Numerically stable softmax returning `(probs, log_probs)`.
pub fn softmax<T: Scalar>(logits: &[T; NUM_ACTIONS]) -> ([T; NUM_ACTIONS], [T; NUM_ACTIONS]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    let log_probs = logits.map(|z| z - log_norm);
    (log_probs.map(T::exp), log_probs)
}

struct ForwardCache<T> {
    actor: TrunkCache<T>,
    critic: Option<TrunkCache<T>>,
    out: NetworkOutput<T>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            actor_trunk: Trunk::zeros(&arch),
            critic_trunk: (arch.trunk == TrunkMode::Separate).then(|| Trunk::zeros(&arch)),
            actor_head: Dense::zeros(arch.fusion_width, NUM_ACTIONS),
            critic_head: Dense::zeros(arch.fusion_width, 1),
        }
    }

    /// Random initialization: He-uniform trunk, near-uniform initial policy.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor_trunk = Trunk::init(&arch, &mut rng);
        let critic_trunk = (arch.trunk == TrunkMode::Separate).then(|| Trunk::init(&arch, &mut rng));
        Self {
            arch,
            actor_trunk,
            critic_trunk,
            actor_head: Dense::init(arch.fusion_width, NUM_ACTIONS, 0.01, &mut rng),
            critic_head: Dense::init(arch.fusion_width, 1, 1.0, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    /// Parameter slices in checkpoint declaration order.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = self.actor_trunk.slices().to_vec();
        if let Some(c) = &self.critic_trunk {
            out.extend(c.slices());
        }
        out.extend([
            &self.actor_head.weight[..],
            &self.actor_head.bias[..],
            &self.critic_head.weight[..],
            &self.critic_head.bias[..],
        ]);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(16);
        out.extend(self.actor_trunk.slices_mut());
        if let Some(c) = &mut self.critic_trunk {
            out.extend(c.slices_mut());
        }
        out.push(&mut self.actor_head.weight);
        out.push(&mut self.actor_head.bias);
        out.push(&mut self.critic_head.weight);
        out.push(&mut self.critic_head.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn copy_from_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape {
                expected: format!("{} parameters", self.num_params()),
                actual: format!("{}", flat.len()),
            });
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    fn check_shape(&self, obs: &Observation<T>) -> Result<()> {
        if obs.n_obs() != self.arch.n_obs {
            return Err(Error::Shape {
                expected: format!("{} observation rows", self.arch.n_obs),
                actual: format!("{} rows", obs.n_obs()),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, obs: &Observation<T>) -> ForwardCache<T> {
        let actor = self.actor_trunk.forward(obs);
        let critic = self.critic_trunk.as_ref().map(|t| t.forward(obs));
        let value_features = critic.as_ref().map_or(&actor.features, |c| &c.features);
        let value = self.critic_head.forward(value_features)[0];
        let raw = self.actor_head.forward(&actor.features);
        let logits: [T; NUM_ACTIONS] = std::array::from_fn(|i| raw[i]);
        let (probs, log_probs) = softmax(&logits);
        ForwardCache { actor, critic, out: NetworkOutput { logits, probs, log_probs, value } }
    }

    pub fn forward(&self, obs: &Observation<T>) -> Result<NetworkOutput<T>> {
        self.check_shape(obs)?;
        Ok(self.forward_cached(obs).out)
    }

    /// Mean loss `-log pi(a) A + c_v (R - V)^2 - c_e H(pi)` over `batch`.
    pub fn loss(&self, batch: &[Sample<T>], coef: &LossCoefficients<T>) -> Result<LossStats<T>> {
        let mut stats = LossStats::default();
        for s in batch {
            self.check_shape(&s.obs)?;
            let out = self.forward_cached(&s.obs).out;
            accumulate(&mut stats, s, &out, coef);
        }
        finish(stats, batch.len())
    }

    /// Exact gradient of [`NetworkParams::loss`] with respect to every parameter.
    pub fn backward(
        &self,
        batch: &[Sample<T>],
        coef: &LossCoefficients<T>,
    ) -> Result<(NetworkParams<T>, LossStats<T>)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty training batch".into()));
        }
        let scale = T::one() / T::from_usize_lossy(batch.len());
        let mut grad = self.zeros_like();
        let mut stats = LossStats::default();

        for s in batch {
            self.check_shape(&s.obs)?;
            if s.action >= NUM_ACTIONS {
                return Err(Error::Contract(format!("action index {} out of range", s.action)));
            }
            let cache = self.forward_cached(&s.obs);
            let out = &cache.out;
            accumulate(&mut stats, s, out, coef);

            let entropy: T = -out.probs.iter().zip(&out.log_probs).map(|(&p, &lp)| p * lp).sum::<T>();
            let d_logits: Vec<T> = (0..NUM_ACTIONS)
                .map(|k| {
                    let p = out.probs[k];
                    let onehot = if k == s.action { T::one() } else { T::zero() };
                    let policy = -s.advantage * (onehot - p);
                    let ent = coef.entropy * p * (out.log_probs[k] + entropy);
                    (policy + ent) * scale
                })
                .collect();
            let d_value = [-T::lit(2.0) * coef.value * (s.ret - out.value) * scale];

            let d_actor = self
                .actor_head
                .backward(&cache.actor.features, &d_logits, &mut grad.actor_head, true)
                .expect("dx requested");
            match (&self.critic_trunk, &cache.critic) {
                (Some(trunk), Some(cc)) => {
                    let d_critic = self
                        .critic_head
                        .backward(&cc.features, &d_value, &mut grad.critic_head, true)
                        .expect("dx requested");
                    let g = grad.critic_trunk.as_mut().expect("separate gradient trunk");
                    trunk.backward(cc, &d_critic, g);
                    self.actor_trunk.backward(&cache.actor, &d_actor, &mut grad.actor_trunk);
                }
                _ => {
                    let d_critic = self
                        .critic_head
                        .backward(&cache.actor.features, &d_value, &mut grad.critic_head, true)
                        .expect("dx requested");
                    let d_feat: Vec<T> = d_actor.iter().zip(&d_critic).map(|(&a, &c)| a + c).collect();
                    self.actor_trunk.backward(&cache.actor, &d_feat, &mut grad.actor_trunk);
                }
            }
        }
        let stats = finish(stats, batch.len())?;
        Ok((grad, stats))
    }
}

fn accumulate<T: Scalar>(stats: &mut LossStats<T>, s: &Sample<T>, out: &NetworkOutput<T>, coef: &LossCoefficients<T>) {
    let entropy: T = -out.probs.iter().zip(&out.log_probs).map(|(&p, &lp)| p * lp).sum::<T>();
    let policy = -out.log_probs[s.action.min(NUM_ACTIONS - 1)] * s.advantage;
    let err = s.ret - out.value;
    stats.policy += policy;
    stats.value += err * err;
    stats.entropy += entropy;
    stats.total += policy + coef.value * err * err - coef.entropy * entropy;
}

fn finish<T: Scalar>(mut stats: LossStats<T>, n: usize) -> Result<LossStats<T>> {
    if n > 0 {
        let n = T::from_usize_lossy(n);
        stats.total /= n;
        stats.policy /= n;
        stats.value /= n;
        stats.entropy /= n;
    }
    if !stats.total.is_finite() {
        return Err(Error::TrainingFault(format!("non-finite loss {}", stats.total)));
    }
    Ok(stats)
}

/// Draws an action index from `probs`.
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(probs: &[T; NUM_ACTIONS], rng: &mut R) -> usize {
    let u = T::lit(rng.gen::<f64>());
    let mut cumulative = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > T::zero()).unwrap_or(NUM_ACTIONS - 1)
}

/// Most probable action, lowest index on ties.
pub fn greedy_action<T: Scalar>(probs: &[T; NUM_ACTIONS]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Global gradient-norm clip applied before the step.
    pub max_grad_norm: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self { beta1: T::lit(0.9), beta2: T::lit(0.999), eps: T::lit(1e-8), max_grad_norm: T::lit(0.5) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(num_params: usize) -> Self {
        Self { m: vec![T::zero(); num_params], v: vec![T::zero(); num_params], step: 0 }
    }
}

/// Euclidean norm over every gradient component.
pub fn global_norm<T: Scalar>(grads: &NetworkParams<T>) -> T {
    grads.slices().iter().flat_map(|s| s.iter()).map(|&g| g * g).sum::<T>().sqrt()
}

/// Scales `grads` in place so that its global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut NetworkParams<T>, max_norm: T) -> T {
    let norm = global_norm(grads);
    if norm > max_norm && norm > T::zero() {
        let factor = max_norm / norm;
        for s in grads.slices_mut() {
            for g in s.iter_mut() {
                *g *= factor;
            }
        }
    }
    norm
}

/// One clipped Adam step descending the loss. Returns the pre-clip gradient norm.
pub fn apply_update<T: Scalar>(
    params: &mut NetworkParams<T>,
    grads: &NetworkParams<T>,
    state: &mut AdamState<T>,
    learning_rate: T,
    cfg: &AdamConfig<T>,
) -> Result<T> {
    if grads.arch != params.arch {
        return Err(Error::Shape { expected: format!("{:?}", params.arch), actual: format!("{:?}", grads.arch) });
    }
    let n = params.num_params();
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape {
            expected: format!("optimizer state for {n} parameters"),
            actual: format!("{}", state.m.len()),
        });
    }
    let mut grads = grads.clone();
    let norm = clip_global_norm(&mut grads, cfg.max_grad_norm);

    state.step += 1;
    let t = state.step as i32;
    let bias1 = T::one() - cfg.beta1.powi(t);
    let bias2 = T::one() - cfg.beta2.powi(t);
    let mut idx = 0;
    for (p_slice, g_slice) in params.slices_mut().into_iter().zip(grads.slices()) {
        for (p, &g) in p_slice.iter_mut().zip(g_slice) {
            let m = &mut state.m[idx];
            let v = &mut state.v[idx];
            *m = cfg.beta1 * *m + (T::one() - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (T::one() - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            idx += 1;
        }
    }
    Ok(norm)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HWMA2C\0\0";
const OPTIMIZER_MAGIC: &[u8; 8] = b"HWADAM\0\0";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 5 + 4 + 8;

/// Checkpoint bytes: magic, version, `n_obs`, encoder width, fusion width,
/// action count, trunk flag (u32), parameter count (u64), then every parameter
/// as a little-endian `f64` in declaration order.
pub fn serialize<T: Scalar>(params: &NetworkParams<T>) -> Vec<u8> {
    let arch = params.arch;
    let n = params.num_params();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for field in [
        FORMAT_VERSION,
        arch.n_obs as u32,
        arch.encoder_width as u32,
        arch.fusion_width as u32,
        NUM_ACTIONS as u32,
        match arch.trunk {
            TrunkMode::Shared => 0,
            TrunkMode::Separate => 1,
        },
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for s in params.slices() {
        for x in s {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

fn read_f64s<T: Scalar>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect()
}

pub fn deserialize<T: Scalar>(bytes: &[u8]) -> Result<NetworkParams<T>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a network checkpoint (bad magic)".into()));
    }
    let version = read_u32(bytes, 8);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let actions = read_u32(bytes, 24) as usize;
    if actions != NUM_ACTIONS {
        return Err(Error::Checkpoint(format!("checkpoint has {actions} actions, expected {NUM_ACTIONS}")));
    }
    let trunk = match read_u32(bytes, 28) {
        0 => TrunkMode::Shared,
        1 => TrunkMode::Separate,
        other => return Err(Error::Checkpoint(format!("unknown trunk flag {other}"))),
    };
    let arch = Architecture {
        n_obs: read_u32(bytes, 12) as usize,
        encoder_width: read_u32(bytes, 16) as usize,
        fusion_width: read_u32(bytes, 20) as usize,
        trunk,
    };
    let mut params = NetworkParams::zeros(arch);
    let count = read_u64(bytes, 32) as usize;
    if count != params.num_params() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match architecture ({})",
            params.num_params()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * count {
        return Err(Error::Checkpoint(format!("expected {} parameter bytes, found {}", 8 * count, body.len())));
    }
    params.copy_from_flat(&read_f64s(body))?;
    Ok(params)
}

/// Optimizer bytes: magic, version, parameter count, step, then `m` and `v`.
pub fn serialize_optimizer<T: Scalar>(state: &AdamState<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 16 * state.m.len());
    out.extend_from_slice(OPTIMIZER_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(state.m.len() as u64).to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());
    for x in state.m.iter().chain(&state.v) {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    out
}

pub fn deserialize_optimizer<T: Scalar>(bytes: &[u8]) -> Result<AdamState<T>> {
    if bytes.len() < 28 || &bytes[..8] != OPTIMIZER_MAGIC {
        return Err(Error::Checkpoint("not an optimizer state file".into()));
    }
    if read_u32(bytes, 8) != FORMAT_VERSION {
        return Err(Error::Checkpoint("unsupported optimizer state version".into()));
    }
    let n = read_u64(bytes, 12) as usize;
    let step = read_u64(bytes, 20);
    let body = &bytes[28..];
    if body.len() != 16 * n {
        return Err(Error::Checkpoint("optimizer state length mismatch".into()));
    }
    let all: Vec<T> = read_f64s(body);
    let (m, v) = all.split_at(n);
    Ok(AdamState { m: m.to_vec(), v: v.to_vec(), step })
}
