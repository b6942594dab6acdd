"""Conditional GAN mapping pseudo-RGB renders to depth images, at toy scale.

The generator is a three-level encoder-decoder with skip connections; dropout
inside it is the only noise source, so evaluation is deterministic.  The
discriminator scores an (image, depth) pair with a small patch classifier whose
averaged logit goes through a sigmoid.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import tensor as T
from .agent import Adam
from .env import EnvConfig, NavEnv, get_world
from .env.sim import DroneState
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .nn import read_records, write_records
from .tensor import Tape, Tensor

PROB_CLAMP = 1e-7
HISTORY_FIELDS = ["epoch", "train_L1", "train_cGAN", "heldout_L1", "heldout_cGAN"]


@dataclass
class AugmentConfig:
    flip_prob: float = 0.5
    jitter_prob: float = 0.5
    jitter_std: float = 0.02
    brightness_prob: float = 0.5
    brightness_delta: float = 0.1
    contrast_prob: float = 0.5
    contrast_range: tuple = (0.8, 1.2)
    saturation_prob: float = 0.5
    saturation_range: tuple = (0.7, 1.3)
    sharpness_prob: float = 0.5
    sharpness_range: tuple = (0.0, 2.0)

    def __post_init__(self):
        for name in ("contrast_range", "saturation_range", "sharpness_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if lo > hi:
                raise ConfigError(f"augmentation.{name} must be [low, high], got [{lo}, {hi}]")
            setattr(self, name, (lo, hi))
        for name, value in vars(self).items():
            if name.endswith("_prob") and not 0.0 <= value <= 1.0:
                raise ConfigError(f"augmentation.{name} must lie in [0, 1], got {value}")

    @classmethod
    def off(cls):
        return cls(flip_prob=0, jitter_prob=0, brightness_prob=0, contrast_prob=0,
                   saturation_prob=0, sharpness_prob=0)


@dataclass
class GanConfig:
    lambda_l1: float = 100.0
    epochs: int = 20
    batch_size: int = 4
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    dropout: float = 0.5
    image_size: int = 32
    gen_channels: tuple = (16, 32, 32)
    disc_channels: tuple = (16, 32)
    n_pairs: int = 1000
    heldout_fraction: float = 0.1
    augment: bool = True
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            self.augmentation = AugmentConfig(**self.augmentation)
        self.gen_channels = tuple(self.gen_channels)
        self.disc_channels = tuple(self.disc_channels)
        if self.lambda_l1 < 0:
            raise ConfigError("lambda_l1 must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.image_size % 8:
            raise ConfigError("image_size must be a multiple of 8")
        if len(self.gen_channels) != 3:
            raise ConfigError("gen_channels needs one entry per encoder level (3)")
        if not 0 <= self.heldout_fraction < 1:
            raise ConfigError("heldout_fraction must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class PairSample:
    x: np.ndarray   # [3, H, W] pseudo-RGB
    y: np.ndarray   # [1, H, W] depth / d_max

    def __post_init__(self):
        if self.x.shape[1:] != self.y.shape[1:]:
            raise DimensionError(f"pair spatial shapes differ: {self.x.shape} vs {self.y.shape}")


# ---------------------------------------------------------------- parameters


def _conv_param(rng, c_out, c_in, k):
    fan_in, fan_out = c_in * k * k, c_out * k * k
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return (Tensor(rng.uniform(-bound, bound, (c_out, c_in, k, k)), requires_grad=True),
            Tensor(np.zeros((c_out, 1, 1)), requires_grad=True))


def init_generator(config: GanConfig, seed):
    rng = np.random.default_rng(seed)
    c1, c2, c3 = config.gen_channels
    p = {}
    layers = [("enc1", c1, 3), ("enc2", c2, c1), ("enc3", c3, c2),
              ("dec3", c2, c3), ("dec2", c1, 2 * c2), ("dec1", c1, 2 * c1), ("out", 1, c1 + 3)]
    for name, c_out, c_in in layers:
        p[name + ".w"], p[name + ".b"] = _conv_param(rng, c_out, c_in, 3)
    return p


def init_discriminator(config: GanConfig, seed):
    rng = np.random.default_rng(seed)
    d1, d2 = config.disc_channels
    p = {}
    for name, c_out, c_in, k in [("d1", d1, 4, 4), ("d2", d2, d1, 4), ("d3", 1, d2, 3)]:
        p[name + ".w"], p[name + ".b"] = _conv_param(rng, c_out, c_in, k)
    return p


def frozen(params):
    """Same arrays, no gradient tracking: used to hold one player fixed."""
    return {k: Tensor(v.data) for k, v in params.items()}


def _conv(x, params, name, stride=1, pad=1):
    return T.add(T.conv2d(T.pad2d(x, pad), params[name + ".w"], stride), params[name + ".b"])


# ---------------------------------------------------------------- forward passes


def _batched(x, channels, size, what):
    x = T.as_tensor(x)
    if x.ndim == 3:
        x = T.reshape(x, (1,) + x.shape)
    if x.ndim != 4 or x.shape[1] != channels or x.shape[2:] != (size, size):
        raise DimensionError(f"{what}: expected [B, {channels}, {size}, {size}], got {x.shape}")
    return x


def generator_forward(x, params, config: GanConfig, training=False, rng=None):
    """Predicted depth in [0, 1], shape ``[B, 1, H, W]``."""
    x = _batched(x, 3, config.image_size, "generator input")
    drop = config.dropout if training else 0.0
    if drop and rng is None:
        raise ContractError("training mode needs an rng for dropout")
    e1 = T.relu(_conv(x, params, "enc1", stride=2))                # H/2
    e2 = T.relu(_conv(e1, params, "enc2", stride=2))               # H/4
    e3 = T.relu(_conv(e2, params, "enc3", stride=2))               # H/8
    e3 = T.dropout(e3, drop, rng)
    d3 = T.relu(_conv(T.upsample2d(e3), params, "dec3"))           # H/4
    d3 = T.dropout(d3, drop, rng)
    d2 = T.relu(_conv(T.upsample2d(T.concat([d3, e2], axis=1)), params, "dec2"))   # H/2
    d1 = T.relu(_conv(T.upsample2d(T.concat([d2, e1], axis=1)), params, "dec1"))   # H
    return T.sigmoid(_conv(T.concat([d1, x], axis=1), params, "out"))


def discriminator_forward(x, y, params, config: GanConfig):
    """Probability ``[B]`` that each (x, y) pair is real."""
    x = _batched(x, 3, config.image_size, "discriminator image")
    y = _batched(y, 1, config.image_size, "discriminator depth")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"batch sizes differ: {x.shape[0]} vs {y.shape[0]}")
    h = T.relu(_conv(T.concat([x, y], axis=1), params, "d1", stride=2))
    h = T.relu(_conv(h, params, "d2", stride=2))
    logits = _conv(h, params, "d3")                                 # [B, 1, H/4, W/4]
    return T.sigmoid(T.mean(logits, axis=(1, 2, 3)))


# ---------------------------------------------------------------- losses


def _safe_log(p):
    return T.log(T.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP))


def d_loss_from_probs(p_real, p_fake):
    """Negated conditional-GAN objective, averaged over the batch."""
    one = Tensor(1.0)
    return T.neg(T.add(T.mean(_safe_log(p_real)), T.mean(_safe_log(T.sub(one, p_fake)))))


def d_loss(x, y, disc, gen, config: GanConfig, rng=None, training=True):
    """Discriminator step loss; the generator output enters as a constant."""
    fake = generator_forward(x, frozen(gen), config, training, rng)
    fake = Tensor(fake.data)
    p_real = discriminator_forward(x, y, disc, config)
    p_fake = discriminator_forward(x, fake, disc, config)
    return d_loss_from_probs(p_real, p_fake)


def l1_loss(pred, target):
    return T.mean(T.absolute(T.sub(pred, target)))


def g_loss(x, y, disc, gen, config: GanConfig, rng=None, training=True, lambda_l1=None, parts=False):
    """Non-saturating adversarial term plus ``lambda * L1``; the discriminator is held fixed."""
    lam = config.lambda_l1 if lambda_l1 is None else lambda_l1
    if lam < 0:
        raise ConfigError("lambda_l1 must be non-negative")
    y = _batched(y, 1, config.image_size, "target depth")
    fake = generator_forward(x, gen, config, training, rng)
    adv = T.neg(T.mean(_safe_log(discriminator_forward(x, fake, frozen(disc), config))))
    l1 = l1_loss(fake, y)
    total = T.add(adv, T.scale(l1, lam))
    return (total, adv, l1) if parts else total


# ---------------------------------------------------------------- augmentation


def _gray(x):
    return (0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2])[None]


def augment(pair: PairSample, rng, config: AugmentConfig | None = None) -> PairSample:
    """Random flip applied jointly; photometric changes touch only the image."""
    cfg = config or AugmentConfig()
    x, y = pair.x.copy(), pair.y.copy()
    if rng.random() < cfg.flip_prob:
        x, y = x[..., ::-1].copy(), y[..., ::-1].copy()
    if rng.random() < cfg.jitter_prob:
        x = x + rng.normal(0.0, cfg.jitter_std, x.shape)
    if rng.random() < cfg.brightness_prob:
        x = x + rng.uniform(-cfg.brightness_delta, cfg.brightness_delta)
    if rng.random() < cfg.contrast_prob:
        m = x.mean()
        x = (x - m) * rng.uniform(*cfg.contrast_range) + m
    if rng.random() < cfg.saturation_prob:
        g = _gray(x)
        x = g + (x - g) * rng.uniform(*cfg.saturation_range)
    if rng.random() < cfg.sharpness_prob:
        blurred = gaussian_filter(x, sigma=(0, 1.0, 1.0))
        x = blurred + (x - blurred) * rng.uniform(*cfg.sharpness_range)
    return PairSample(np.clip(x, 0.0, 1.0), y)


# ---------------------------------------------------------------- data


def _random_pose(env, rng, clearance):
    x0, y0, x1, y1 = env.world.bounds
    for _ in range(10000):
        x, y = rng.uniform(x0, x1), rng.uniform(y0, y1)
        if env.world.inside(x, y) and env.nearest_distance(x, y) > clearance:
            return DroneState(x, y, rng.uniform(0, 2 * math.pi))
    raise ConfigError(f"world {env.world.name!r}: no free pose found")


def generate_pairs(count, seed, worlds=("room-scattered", "cafe-movers", "maze-narrow", "hallway-2-turns-45"),
                   size=32, d_max=10.0):
    """Render ``count`` pairs from random free poses, cycling through ``worlds``."""
    if count < 1:
        raise ConfigError("count must be at least 1")
    cfg = EnvConfig(n_rays=size, image_height=size, d_max=d_max, obs_mode="image")
    envs = []
    for i, name in enumerate(worlds):
        env = NavEnv(get_world(name), cfg)
        env.reset(np.random.SeedSequence([seed, i]))
        envs.append(env)
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(worlds)]))
    pairs = []
    for k in range(count):
        env = envs[k % len(envs)]
        env.state = _random_pose(env, rng, cfg.reward.r_drone)
        x, y = env.render_pseudo_rgb()
        pairs.append(PairSample(x, y))
    return pairs


def save_pairs(path, pairs, meta=None):
    if not pairs:
        raise ConfigError("refusing to write an empty dataset")
    xs = np.stack([p.x for p in pairs])
    ys = np.stack([p.y for p in pairs])
    write_records(path, [("x", xs), ("y", ys)], {"kind": "pairs", "count": len(pairs), **(meta or {})})


def load_pairs(path):
    records, meta = read_records(path)
    if meta.get("kind") != "pairs":
        raise ConfigError(f"{path}: not a pair dataset")
    data = dict(records)
    pairs = [PairSample(x, y) for x, y in zip(data["x"], data["y"])]
    if not pairs:
        raise ConfigError(f"{path}: dataset is empty")
    return pairs


def split_pairs(pairs, heldout_fraction, seed):
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_held = int(round(len(pairs) * heldout_fraction))
    return [pairs[i] for i in order[n_held:]], [pairs[i] for i in order[:n_held]]


def _stack(pairs):
    return np.stack([p.x for p in pairs]), np.stack([p.y for p in pairs])


# ---------------------------------------------------------------- training


@dataclass
class GanResult:
    generator: dict
    discriminator: dict
    history: list


def evaluate_gan(pairs, gen, disc, config: GanConfig, batch=50):
    """Mean L1 and mean adversarial generator loss in evaluation mode."""
    if not pairs:
        return float("nan"), float("nan")
    l1 = adv = 0.0
    for i in range(0, len(pairs), batch):
        x, y = _stack(pairs[i:i + batch])
        fake = generator_forward(x, gen, config)
        p = discriminator_forward(x, fake, disc, config).data
        n = len(x)
        l1 += float(np.abs(fake.data - y).mean()) * n
        adv += float(-np.log(np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)).mean()) * n
    return l1 / len(pairs), adv / len(pairs)


def _step(loss, params, opt):
    grads = {}
    with Tape() as tape:
        value = loss()
    gm = tape.backward(value)
    for name, p in params.items():
        grads[name] = gm.get_grad(p)
        p.grad = None
    opt.update(params, grads)
    return value


def train_gan(train_pairs, heldout_pairs, config: GanConfig, seed, progress=None) -> GanResult:
    """Alternate one discriminator and one generator update per batch.

    ``history`` has one row per epoch (row 0 is before any update) with the
    columns of ``HISTORY_FIELDS``.
    """
    if not train_pairs:
        raise ConfigError("training set is empty")
    init_ss, aug_ss, order_ss, drop_ss = np.random.SeedSequence(seed).spawn(4)
    gseed, dseed = init_ss.spawn(2)
    gen = init_generator(config, gseed)
    disc = init_discriminator(config, dseed)
    if config.augment:
        aug_rng = np.random.default_rng(aug_ss)
        train_pairs = [augment(p, aug_rng, config.augmentation) for p in train_pairs]
    order_rng = np.random.default_rng(order_ss)
    drop_rng = np.random.default_rng(drop_ss)
    opt_g = Adam(config.learning_rate, config.adam_beta1)
    opt_d = Adam(config.learning_rate, config.adam_beta1)

    tr_l1, tr_adv = evaluate_gan(train_pairs, gen, disc, config)
    ho_l1, ho_adv = evaluate_gan(heldout_pairs, gen, disc, config)
    history = [dict(epoch=0, train_L1=tr_l1, train_cGAN=tr_adv, heldout_L1=ho_l1, heldout_cGAN=ho_adv)]
    xs, ys = _stack(train_pairs)
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(len(train_pairs))
        sum_l1 = sum_adv = 0.0
        n_batches = 0
        n_seen = 0
        for i in range(0, len(order), bs):
            idx = order[i:i + bs]
            x, y = xs[idx], ys[idx]
            _step(lambda: d_loss(x, y, disc, gen, config, drop_rng), disc, opt_d)
            parts = {}

            def gl():
                total, adv, l1 = g_loss(x, y, disc, gen, config, drop_rng, parts=True)
                parts["adv"], parts["l1"] = float(adv.data), float(l1.data)
                return total
            total = _step(gl, gen, opt_g)
            if not np.isfinite(total.data):
                raise NumericError(f"generator loss became non-finite in epoch {epoch}, batch {n_batches + 1}")
            sum_l1 += parts["l1"] * len(idx)
            sum_adv += parts["adv"] * len(idx)
            n_batches += 1
            n_seen += len(idx)
        ho_l1, ho_adv = evaluate_gan(heldout_pairs, gen, disc, config)
        row = dict(epoch=epoch, train_L1=sum_l1 / n_seen, train_cGAN=sum_adv / n_seen,
                   heldout_L1=ho_l1, heldout_cGAN=ho_adv)
        history.append(row)
        if progress:
            progress(row)
    return GanResult(gen, disc, history)


def save_gan(path, result: GanResult, config: GanConfig):
    records = [("G." + k, v.data) for k, v in sorted(result.generator.items())]
    records += [("D." + k, v.data) for k, v in sorted(result.discriminator.items())]
    write_records(path, records, {"kind": "gan", "config": config.to_dict()})


def load_gan(path):
    records, meta = read_records(path)
    if meta.get("kind") != "gan":
        raise ConfigError(f"{path}: not a GAN checkpoint")
    cfg = GanConfig(**meta["config"])
    gen = {k[2:]: Tensor(v, requires_grad=True) for k, v in records if k.startswith("G.")}
    disc = {k[2:]: Tensor(v, requires_grad=True) for k, v in records if k.startswith("D.")}
    return gen, disc, cfg
