"""Semi-supervised GAN with a K-class discriminator and a feature-matching
generator.

The fake class is implicit: with class logits ``l``, ``Z = sum(exp(l))`` and
``P(real) = Z / (1 + Z)`` (equivalently ``sigmoid(logsumexp(l))``).
Discriminator loss = supervised CE on labelled reals + ``-log P(real)`` on
unlabelled reals + ``-log P(fake)`` on generated samples. Generator loss is
the squared L2 distance between batch-mean intermediate features of real and
generated inputs.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import EmptyBatch, EmptySignal, InvalidParams, NonFinite, ShapeMismatch, UntrainedModel
from .nn import Adam, L, LayerSpec, Sequential, Tensor, build_sequential, no_grad
from .nn import functional as F
from .nn.checkpoint import network_from_dict, network_to_dict
from .signal_io import PHYSIONET_RATE, AudioRecord, decimate, pad_to, prune_to

log = logging.getLogger(__name__)

GAN_INPUT_LENGTH = 4987
NOISE_DIM = 100
N_CLASSES = 2

D_FILTERS = (64, 64, 128, 256, 256, 256, 256, 256)
D_STRIDES = (1, 2, 2, 2, 2, 2, 2, 2)
G_BLOCKS = (  # (filters, padding), kernel 8 stride 2
    (256, 0), (256, 0), (256, 0), (256, 0), (256, 0), (128, 1), (64, 1),
)
G_BASE = (256, 33)


def _scale(n: int, width: float) -> int:
    return max(1, int(round(n * width)))


def discriminator_specs(width: float = 1.0, kernel: int = 8, slope: float = 0.2) -> tuple[list, list]:
    """(trunk, head). The trunk ends in the flattened pooled features M(x)."""
    trunk = []
    for f, s in zip(D_FILTERS, D_STRIDES):
        trunk += [L("conv1d", filters=_scale(f, width), kernel=kernel, stride=s, padding="valid"),
                  L("leaky_relu", slope=slope)]
    trunk += [L("adaptive_avg_pool1d", output_size=1), L("flatten")]
    head = [L("dense", nodes=N_CLASSES)]
    return trunk, head


def generator_specs(width: float = 1.0, base_length: int = G_BASE[1], kernel: int = 8) -> list:
    c0 = _scale(G_BASE[0], width)
    specs = [L("dense", nodes=c0 * base_length), L("batchnorm1d"), L("relu"),
             L("reshape", shape=(c0, base_length))]
    for f, p in G_BLOCKS:
        specs += [L("conv_transpose1d", filters=_scale(f, width), kernel=kernel, stride=2, padding=p),
                  L("batchnorm1d"), L("relu")]
    specs += [L("conv_transpose1d", filters=1, kernel=kernel, stride=1, padding=0), L("tanh")]
    return specs


def generator_output_length(base_length: int = G_BASE[1], kernel: int = 8) -> int:
    n = base_length
    for _, p in G_BLOCKS:
        n = F.conv_transpose1d_length(n, kernel, 2, p)
    return F.conv_transpose1d_length(n, kernel, 1, 0)


def discriminator_length_chain(input_length: int = GAN_INPUT_LENGTH, kernel: int = 8) -> list[int]:
    """Sequence length after each discriminator convolution."""
    out, n = [], input_length
    for s in D_STRIDES:
        n = F.conv1d_length(n, kernel, s)
        out.append(n)
    return out


@dataclass
class GanArch:
    """Architecture knobs. Defaults give the full-size networks;
    ``width`` scales every channel count and ``base_length`` the generator's
    seed length (input length follows from it)."""

    width: float = 1.0
    base_length: int = G_BASE[1]
    noise_dim: int = NOISE_DIM

    @property
    def input_length(self) -> int:
        return generator_output_length(self.base_length)


class Discriminator:
    def __init__(self, arch: GanArch, rng: np.random.Generator):
        self.arch = arch
        trunk, head = discriminator_specs(arch.width)
        self.trunk = build_sequential(trunk, (1, arch.input_length), rng)
        self.head = build_sequential(head, self.trunk.output_shape, rng)

    def parameters(self):
        return self.trunk.parameters() + self.head.parameters()

    def named_params(self):
        out = {f"trunk.{k}": v for k, v in self.trunk.named_params().items()}
        out.update({f"head.{k}": v for k, v in self.head.named_params().items()})
        return out

    def forward(self, x) -> tuple[Tensor, Tensor]:
        """Returns (class logits, intermediate features M(x))."""
        m = self.trunk(x)
        return self.head(m), m

    __call__ = forward

    def to_dict(self) -> dict:
        return {"arch": asdict(self.arch), "trunk": network_to_dict(self.trunk),
                "head": network_to_dict(self.head)}

    @classmethod
    def from_dict(cls, doc: dict) -> "Discriminator":
        obj = cls.__new__(cls)
        obj.arch = GanArch(**doc["arch"])
        obj.trunk = network_from_dict(doc["trunk"])
        obj.head = network_from_dict(doc["head"])
        return obj


def build_generator(arch: GanArch, rng: np.random.Generator) -> Sequential:
    return build_sequential(generator_specs(arch.width, arch.base_length), (arch.noise_dim,), rng)


# ---------------------------------------------------------------------------
# input preparation

def prepare_gan_input(record: AudioRecord, length: int = GAN_INPUT_LENGTH) -> np.ndarray:
    """First 5 s at 2 kHz -> block-mean to 1 kHz -> first ``length`` samples.

    Returns a (1, length) array. Shorter recordings are zero-padded first.
    """
    x = np.asarray(record.samples, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal(f"record {record.id!r} is empty")
    if record.sample_rate != PHYSIONET_RATE:
        raise InvalidParams(f"expected {PHYSIONET_RATE} Hz audio, got {record.sample_rate}")
    window = 5 * PHYSIONET_RATE
    if x.size < window:
        x = pad_to(x, window)
    x = decimate(prune_to(x, window), 2)
    if length > x.size:
        raise InvalidParams(f"length {length} exceeds the {x.size} available samples")
    return np.clip(x[:length], -1.0, 1.0)[None, :]


# ---------------------------------------------------------------------------
# losses

def discriminator_real_prob(logits) -> np.ndarray:
    """P(real) = Z / (1 + Z), Z = sum exp(logits), evaluated stably."""
    l = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if not np.all(np.isfinite(l)):
        raise NonFinite("logits must be finite")
    lse = np.logaddexp.reduce(l, axis=-1)
    out = expit(lse)
    return out if np.ndim(logits) > 1 else out[0]


def discriminator_fake_prob(logits) -> np.ndarray:
    l = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    lse = np.logaddexp.reduce(l, axis=-1)
    out = expit(-lse)
    return out if np.ndim(logits) > 1 else out[0]


@dataclass
class GanLosses:
    supervised: float = 0.0
    unsup_real: float = 0.0
    unsup_fake: float = 0.0
    generator_fm: float = 0.0

    @property
    def total_d(self) -> float:
        return self.supervised + self.unsup_real + self.unsup_fake


def _neg_log_real(logits: Tensor) -> Tensor:
    # -log(Z/(1+Z)) = softplus(lse) - lse
    lse = F.logsumexp(logits, axis=1)
    return (F.softplus(lse) - lse).mean()


def _neg_log_fake(logits: Tensor) -> Tensor:
    # -log(1/(1+Z)) = softplus(lse)
    return F.softplus(F.logsumexp(logits, axis=1)).mean()


def discriminator_loss_terms(lab_logits: Tensor | None, labels, unl_logits: Tensor | None,
                             fake_logits: Tensor | None) -> dict[str, Tensor]:
    """Differentiable loss terms; a missing/empty batch contributes 0."""
    zero = Tensor(0.0)
    terms = {"supervised": zero, "unsup_real": zero, "unsup_fake": zero}
    if lab_logits is not None and lab_logits.shape[0] > 0:
        terms["supervised"] = F.softmax_cross_entropy(lab_logits, labels)
    if unl_logits is not None and unl_logits.shape[0] > 0:
        terms["unsup_real"] = _neg_log_real(unl_logits)
    if fake_logits is not None and fake_logits.shape[0] > 0:
        terms["unsup_fake"] = _neg_log_fake(fake_logits)
    for k, t in terms.items():
        if not np.isfinite(t.item()):
            raise NonFinite(f"{k} loss is not finite")
    return terms


def discriminator_loss(lab_logits, labels, unl_logits, fake_logits) -> GanLosses:
    """Numeric decomposition of the discriminator objective."""
    wrap = lambda a: None if a is None else Tensor(np.atleast_2d(np.asarray(a, dtype=np.float64)))
    with no_grad():
        t = discriminator_loss_terms(wrap(lab_logits), labels, wrap(unl_logits), wrap(fake_logits))
    return GanLosses(t["supervised"].item(), t["unsup_real"].item(), t["unsup_fake"].item())


def feature_matching_term(m_real, m_fake: Tensor) -> Tensor:
    if m_real.shape[0] == 0 or m_fake.shape[0] == 0:
        raise EmptyBatch("feature matching needs non-empty real and fake batches")
    real_mean = np.asarray(m_real.data if isinstance(m_real, Tensor) else m_real).mean(axis=0)
    d = m_fake.mean(axis=0) - real_mean
    return (d * d).sum()


def generator_feature_matching_loss(m_real, m_fake) -> float:
    m_real = np.atleast_2d(np.asarray(m_real, dtype=np.float64))
    m_fake = np.atleast_2d(np.asarray(m_fake, dtype=np.float64))
    if m_real.shape[-1] != m_fake.shape[-1]:
        raise ShapeMismatch("feature dimensions differ")
    with no_grad():
        return feature_matching_term(m_real, Tensor(m_fake)).item()


# ---------------------------------------------------------------------------
# training

@dataclass
class GanConfig:
    epochs: int = 10
    batch: int = 32
    lr_d: float = 2e-4
    lr_g: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    steps_per_epoch: int | None = None  # default: ceil(n_unlabelled / batch)
    unsupervised: bool = True  # False: ablation, D trained on CE only
    arch: GanArch = field(default_factory=GanArch)


@dataclass
class GanResult:
    discriminator: Discriminator
    generator: Sequential | None
    history: list[dict]
    config: GanConfig


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    init_d, init_g, lab, unl, noise = ss.spawn(5)
    return tuple(np.random.default_rng(s) for s in (init_d, init_g, lab, unl, noise))


def _as_batch(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X[:, None, :] if X.ndim == 2 else X


def _sample_labelled(rng, n, batch):
    # with replacement once the pool is smaller than a batch
    return rng.choice(n, size=batch, replace=n < batch)


def train_ssl_gan(X_lab, y_lab, X_unl, config: GanConfig, X_val=None, y_val=None) -> GanResult:
    """Alternate one discriminator step (full objective) and one generator
    step (feature matching on unlabelled reals) per iteration.

    With ``config.unsupervised=False`` only the supervised term drives the
    discriminator and no generator is trained; the labelled batches drawn are
    identical either way, so this is the supervised-only baseline.
    """
    X_lab, X_unl = _as_batch(X_lab), _as_batch(X_unl)
    y_lab = np.asarray(y_lab, dtype=np.int64)
    arch = config.arch
    if X_lab.shape[2] != arch.input_length or X_unl.shape[2] != arch.input_length:
        raise ShapeMismatch(f"inputs must have length {arch.input_length}")
    if len(X_lab) == 0:
        raise EmptyBatch("labelled set is empty")
    if config.unsupervised and len(X_unl) == 0:
        raise EmptyBatch("unlabelled set is empty")

    rng_d, rng_g, rng_lab, rng_unl, rng_z = _streams(config.seed)
    D = Discriminator(arch, rng_d)
    G = build_generator(arch, rng_g) if config.unsupervised else None
    opt_d = Adam(D.parameters(), config.lr_d, (config.beta1, config.beta2))
    opt_g = Adam(G.parameters(), config.lr_g, (config.beta1, config.beta2)) if G else None

    bs = config.batch
    steps = config.steps_per_epoch or max(1, -(-len(X_unl) // bs))
    history = []
    for epoch in range(config.epochs):
        acc = GanLosses()
        for _ in range(steps):
            li = _sample_labelled(rng_lab, len(X_lab), bs)
            lab_logits, _ = D(X_lab[li])
            unl_logits = fake_logits = None
            xu = None
            if config.unsupervised:
                xu = X_unl[rng_unl.choice(len(X_unl), size=bs, replace=len(X_unl) < bs)]
                z = rng_z.standard_normal((bs, arch.noise_dim))
                with no_grad():
                    fake = G(z, training=True)
                unl_logits, _ = D(xu)
                fake_logits, _ = D(fake)
            terms = discriminator_loss_terms(lab_logits, y_lab[li], unl_logits, fake_logits)
            opt_d.zero_grad()
            (terms["supervised"] + terms["unsup_real"] + terms["unsup_fake"]).backward()
            opt_d.step()
            acc.supervised += terms["supervised"].item()
            acc.unsup_real += terms["unsup_real"].item()
            acc.unsup_fake += terms["unsup_fake"].item()

            if config.unsupervised:
                with no_grad():
                    _, m_real = D(xu)
                z = rng_z.standard_normal((bs, arch.noise_dim))
                _, m_fake = D(G(z, training=True))
                g_loss = feature_matching_term(m_real, m_fake)
                if not np.isfinite(g_loss.item()):
                    raise NonFinite("generator loss diverged")
                opt_g.zero_grad()
                g_loss.backward()
                opt_g.step()
                acc.generator_fm += g_loss.item()
        row = {"epoch": epoch, "supervised": acc.supervised / steps,
               "unsup_real": acc.unsup_real / steps, "unsup_fake": acc.unsup_fake / steps,
               "generator_fm": acc.generator_fm / steps}
        if X_val is not None and y_val is not None and len(np.unique(y_val)) == 2:
            from .evaluation import auroc
            row["val_auroc"] = auroc(classify(D, X_val), y_val)
        history.append(row)
        log.info("gan epoch %d %s", epoch, row)
    return GanResult(D, G, history, config)


def classify(D: Discriminator | None, X, batch: int = 64) -> np.ndarray:
    """P(Abnormal) from the softmax over the class logits."""
    if D is None:
        raise UntrainedModel("no discriminator")
    X = _as_batch(X)
    out = []
    with no_grad():
        for s in range(0, len(X), batch):
            logits, _ = D(X[s:s + batch])
            out.append(F.softmax(logits.data, axis=1)[:, 1])
    return np.concatenate(out) if out else np.zeros(0)


def class_prob_from_logits(logits) -> np.ndarray:
    return F.softmax(np.atleast_2d(np.asarray(logits, dtype=np.float64)), axis=1)[:, 1]


def gan_arm(X_train, config: GanConfig, unsupervised: bool = True):
    """Sweep trainer: labelled rows are ``X_train[idx]``; every training row
    doubles as unlabelled data for the semi-supervised arm."""
    X_train = _as_batch(X_train)

    def trainer(idx, y_lab, seed):
        cfg = replace(config, seed=int(seed), unsupervised=unsupervised)
        D = train_ssl_gan(X_train[idx], y_lab, X_train, cfg).discriminator
        return lambda X: classify(D, X)

    return trainer


# small enough that a 40-run sweep fits in minutes on one CPU core
DESK_ARCH = GanArch(width=0.0625, base_length=4)


def desk_config(seed: int = 0, **overrides) -> GanConfig:
    kw = dict(epochs=4, batch=16, steps_per_epoch=80, seed=seed, arch=DESK_ARCH)
    kw.update(overrides)
    return GanConfig(**kw)
