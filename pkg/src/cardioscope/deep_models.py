"""Dense NN, 1-d CNN classifier and 1-d CNN autoencoder on the 193-feature
vectors, plus their training loops."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, NonFinite, ShapeMismatch
from .evaluation import confusion_metrics
from .features import N_FEATURES
from .nn import Adam, L, Sequential, Tensor, build_sequential, no_grad
from .nn import functional as F

log = logging.getLogger(__name__)

LATENT_DIM = 96


def dense_nn_specs(hidden: int = 128, depth: int = 4) -> list:
    specs = []
    for _ in range(depth):
        specs += [L("dense", nodes=hidden), L("relu")]
    return specs + [L("dense", nodes=1), L("sigmoid")]


def cnn1d_specs() -> list:
    specs = []
    for filters in (128, 256):
        specs += [L("conv1d", filters=filters, kernel=3), L("relu"),
                  L("conv1d", filters=filters, kernel=3), L("relu"),
                  L("maxpool1d", kernel=3, stride=3)]
    specs += [L("conv1d", filters=512, kernel=3), L("relu"),
              L("conv1d", filters=512, kernel=3), L("relu"),
              L("flatten"),
              L("dense", nodes=256), L("relu"),
              L("dense", nodes=128), L("relu"),
              L("dense", nodes=1), L("sigmoid")]
    return specs


def autoencoder_specs() -> tuple[list, list]:
    """(encoder, decoder). Four pools take 193 to 12 so the 8-channel
    bottleneck flattens to exactly 96 values."""
    enc = []
    for filters in (64, 64, 32, 16):
        enc += [L("conv1d", filters=filters, kernel=3, padding="same"), L("relu"),
                L("maxpool1d", kernel=2, stride=2)]
    enc += [L("conv1d", filters=8, kernel=3, padding="same"), L("relu"), L("flatten")]
    dec = [L("reshape", shape=(8, 12))]
    for filters in (8, 16, 32, 64):
        dec += [L("conv1d", filters=filters, kernel=3, padding="same"), L("relu"),
                L("upsample1d", size=2)]
    dec += [L("zero_pad1d", left=0, right=1),
            L("conv1d", filters=1, kernel=3, padding="same")]
    return enc, dec


def build_dense_nn(rng: np.random.Generator | None = None) -> Sequential:
    rng = rng if rng is not None else np.random.default_rng(0)
    return build_sequential(dense_nn_specs(), (N_FEATURES,), rng)


def build_cnn1d(rng: np.random.Generator | None = None) -> Sequential:
    rng = rng if rng is not None else np.random.default_rng(0)
    return build_sequential(cnn1d_specs(), (1, N_FEATURES), rng)


@dataclass
class Autoencoder:
    encoder: Sequential
    decoder: Sequential

    def encode(self, x, training: bool = False) -> Tensor:
        x = as_sequence_batch(x)
        return self.encoder(x, training)

    def forward(self, x, training: bool = False) -> Tensor:
        return self.decoder(self.encode(x, training), training)

    __call__ = forward

    def parameters(self) -> list:
        return self.encoder.parameters() + self.decoder.parameters()

    def named_params(self) -> dict:
        out = {f"encoder.{k}": v for k, v in self.encoder.named_params().items()}
        out.update({f"decoder.{k}": v for k, v in self.decoder.named_params().items()})
        return out

    def n_params(self) -> int:
        return self.encoder.n_params() + self.decoder.n_params()


def build_autoencoder(rng: np.random.Generator | None = None) -> Autoencoder:
    rng = rng if rng is not None else np.random.default_rng(0)
    enc, dec = autoencoder_specs()
    encoder = build_sequential(enc, (1, N_FEATURES), rng)
    decoder = build_sequential(dec, encoder.output_shape, rng)
    return Autoencoder(encoder, decoder)


def as_sequence_batch(x) -> Tensor:
    """(n, 193) or (n, 1, 193) -> Tensor of shape (n, 1, 193)."""
    if isinstance(x, Tensor):
        return x if x.ndim == 3 else x.reshape(x.shape[0], 1, x.shape[-1])
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim == 2:
        a = a[:, None, :]
    if a.ndim != 3 or a.shape[1] != 1:
        raise ShapeMismatch(f"expected (n, {N_FEATURES}) input, got {a.shape}")
    return Tensor(a)


def encode(ae: Autoencoder, X, batch: int = 256) -> np.ndarray:
    """Bottleneck vectors, shape (n, 96)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[-1] != N_FEATURES:
        raise ShapeMismatch(f"expected {N_FEATURES} features, got {X.shape[-1]}")
    with no_grad():
        parts = [ae.encode(X[s:s + batch]).data for s in range(0, len(X), batch)]
    return np.concatenate(parts) if parts else np.zeros((0, LATENT_DIM))


def reconstruct(ae: Autoencoder, X, batch: int = 256) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    with no_grad():
        parts = [ae(X[s:s + batch]).data[:, 0, :] for s in range(0, len(X), batch)]
    return np.concatenate(parts) if parts else np.zeros((0, N_FEATURES))


def reconstruction_loss(x, x_rec) -> np.ndarray | float:
    """Mean squared difference over the last axis (one value per row)."""
    x = np.asarray(x, dtype=np.float64)
    x_rec = np.asarray(x_rec, dtype=np.float64)
    if x.shape != x_rec.shape:
        raise ShapeMismatch(f"reconstruction_loss: {x.shape} vs {x_rec.shape}")
    out = np.mean((x - x_rec) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def reconstruction_errors(ae: Autoencoder, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return reconstruction_loss(X, reconstruct(ae, X))


# ---------------------------------------------------------------------------
# standardisation

@dataclass
class Standardizer:
    """Per-dimension z-score with statistics frozen from training data."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        # constant dimensions pass through centred
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    epochs: int = 100
    batch: int = 32
    lr: float = 1e-3
    seed: int = 0
    patience: int | None = None  # epochs without val improvement before stopping


@dataclass
class TrainResult:
    network: object
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_macc")


def write_history(path, history: list[dict], columns=HISTORY_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in history:
            w.writerow(["" if row.get(c) is None else row[c] for c in columns])


def _network_input(net: Sequential, X: np.ndarray) -> np.ndarray:
    return X.reshape((len(X),) + net.input_shape)


def predict_proba(net: Sequential, X, batch: int = 256) -> np.ndarray:
    X = _network_input(net, np.asarray(X, dtype=np.float64))
    with no_grad():
        parts = [net(X[s:s + batch]).data.reshape(-1) for s in range(0, len(X), batch)]
    return np.concatenate(parts) if parts else np.zeros(0)


def _snapshot(params) -> list[np.ndarray]:
    return [p.data.copy() for p in params]


def _restore(params, snap) -> None:
    for p, s in zip(params, snap):
        p.data[...] = s


def train_supervised(net: Sequential, X_train, y_train, X_val=None, y_val=None,
                     config: TrainConfig | None = None) -> TrainResult:
    """BCE + Adam; keeps the parameters of the epoch with the best
    validation MAcc (ties go to the earlier epoch)."""
    cfg = config or TrainConfig()
    X = _network_input(net, np.asarray(X_train, dtype=np.float64))
    y = np.asarray(y_train, dtype=np.float64)
    if len(X) != len(y) or len(X) == 0:
        raise InvalidParams("training features and labels must be non-empty and aligned")
    rng = np.random.default_rng(cfg.seed)
    net.set_rng(np.random.default_rng([cfg.seed, 1]))
    params = net.parameters()
    opt = Adam(params, cfg.lr)
    history = []
    best, best_epoch, snap = -np.inf, 0, _snapshot(params)
    stale = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for s in range(0, len(X), cfg.batch):
            bi = order[s:s + cfg.batch]
            # batchnorm needs two samples; fold a trailing singleton into the previous batch
            if len(bi) < 2 and s > 0:
                continue
            loss = F.bce(net(X[bi], training=True).reshape(-1), y[bi])
            if not np.isfinite(loss.item()):
                raise NonFinite(f"training loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(bi)
        row = {"epoch": epoch, "train_loss": total / len(X), "val_loss": None, "val_macc": None}
        if X_val is not None and y_val is not None and len(y_val):
            p = predict_proba(net, X_val)
            yv = np.asarray(y_val, dtype=np.float64)
            pc = np.clip(p, 1e-12, 1 - 1e-12)
            row["val_loss"] = float(-np.mean(yv * np.log(pc) + (1 - yv) * np.log(1 - pc)))
            rep = confusion_metrics(p, yv.astype(np.int64))
            row["val_macc"] = rep.macc
            score = rep.macc if rep.macc is not None else rep.accuracy
            if score > best:
                best, best_epoch, snap, stale = score, epoch, _snapshot(params), 0
            else:
                stale += 1
        else:
            best_epoch, snap = epoch, _snapshot(params)
        history.append(row)
        log.info("epoch %d %s", epoch, row)
        if cfg.patience is not None and stale > cfg.patience:
            break
    _restore(params, snap)
    return TrainResult(net, history, best_epoch)


def train_autoencoder(ae: Autoencoder, X_train, config: TrainConfig | None = None,
                      X_val=None) -> TrainResult:
    """Minimise mean reconstruction loss on standardised features."""
    cfg = config or TrainConfig()
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES or len(X) == 0:
        raise ShapeMismatch(f"expected (n, {N_FEATURES}) training features")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(ae.parameters(), cfg.lr)
    history = [{"epoch": -1, "train_loss": float(reconstruction_errors(ae, X).mean()),
                "val_loss": None}]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for s in range(0, len(X), cfg.batch):
            bi = order[s:s + cfg.batch]
            xb = X[bi][:, None, :]
            loss = F.mse(ae(xb, training=True), xb)
            if not np.isfinite(loss.item()):
                raise NonFinite(f"autoencoder loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(bi)
        row = {"epoch": epoch, "train_loss": total / len(X), "val_loss": None}
        if X_val is not None and len(X_val):
            row["val_loss"] = float(reconstruction_errors(ae, X_val).mean())
        history.append(row)
        log.info("autoencoder epoch %d %s", epoch, row)
    return TrainResult(ae, history, len(history) - 1)


def autoencoder_to_dict(ae: Autoencoder, norm_stats: dict | None = None) -> dict:
    from .nn import network_to_dict
    return {"encoder": network_to_dict(ae.encoder), "decoder": network_to_dict(ae.decoder),
            "norm_stats": norm_stats}


def autoencoder_from_dict(d: dict) -> Autoencoder:
    from .nn import network_from_dict
    return Autoencoder(network_from_dict(d["encoder"]), network_from_dict(d["decoder"]))
