"""The two convolutional autoencoders (mask binarization and wavefront
completion), their dice-loss training loop, and weight persistence.

Networks are fully convolutional: encoder stages of 3x3 conv + ReLU
(+ batch norm for the binarization net) + 2x max-pool, a bottleneck conv,
and mirrored nearest-upsample decoder stages with skip concatenations,
closed by a 1x1 conv + sigmoid head.  Parameters live as plain numpy
arrays keyed by layer id; torch supplies the tensor ops and exact
gradients underneath.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigurationError, DataError, DimensionError, NumericError, ParameterError

WEIGHTS_MAGIC = b"LIMBNN1\x00"

# total dice smoothing; defines the loss when both masks are empty
DICE_SMOOTHING = 1.0


@dataclass(frozen=True)
class NetworkSpec:
    """Channel widths (encoder stages plus trailing bottleneck width) and
    whether batch normalization is used."""

    widths: tuple = (64, 128, 256, 256)
    use_batchnorm: bool = True
    in_channels: int = 6
    out_channels: int = 6

    @property
    def encoder_widths(self):
        return self.widths[:-1]

    @property
    def bottleneck_width(self):
        return self.widths[-1]

    @property
    def n_stages(self):
        return len(self.widths) - 1

    def min_divisor(self):
        return 1 << self.n_stages

    def to_json(self):
        return {"widths": list(self.widths), "use_batchnorm": self.use_batchnorm,
                "in_channels": self.in_channels, "out_channels": self.out_channels}

    @staticmethod
    def from_json(doc):
        return NetworkSpec(widths=tuple(doc["widths"]),
                           use_batchnorm=bool(doc["use_batchnorm"]),
                           in_channels=int(doc["in_channels"]),
                           out_channels=int(doc["out_channels"]))


def mask_net_spec(desk_scale=False):
    """Preset for the coefficient-binarization network (batch norm on)."""
    widths = (32, 64, 128, 128) if desk_scale else (64, 128, 256, 256)
    return NetworkSpec(widths=widths, use_batchnorm=True)


def completion_net_spec(desk_scale=False):
    """Preset for the wavefront-completion network (no batch norm)."""
    widths = (32, 64, 128, 128) if desk_scale else (64, 128, 256, 256)
    return NetworkSpec(widths=widths, use_batchnorm=False)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    validation_fraction: float = 0.1
    patience: int = 10

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.patience) < 1:
            raise ConfigurationError("epochs, batch_size and patience must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be >= 0")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ConfigurationError("validation_fraction must be in (0, 1)")


class _Autoencoder(torch.nn.Module):
    def __init__(self, spec, dtype=torch.float32):
        super().__init__()
        self.spec = spec
        kw = {"dtype": dtype}
        enc = spec.encoder_widths
        self.enc_convs = torch.nn.ModuleList()
        self.enc_bns = torch.nn.ModuleList()
        prev = spec.in_channels
        for w in enc:
            self.enc_convs.append(torch.nn.Conv2d(prev, w, 3, padding=1, **kw))
            self.enc_bns.append(torch.nn.BatchNorm2d(w, **kw) if spec.use_batchnorm
                                else torch.nn.Identity())
            prev = w
        self.bottleneck = torch.nn.Conv2d(prev, spec.bottleneck_width, 3, padding=1, **kw)
        self.bottleneck_bn = (torch.nn.BatchNorm2d(spec.bottleneck_width, **kw)
                              if spec.use_batchnorm else torch.nn.Identity())
        self.dec_convs = torch.nn.ModuleList()
        self.dec_bns = torch.nn.ModuleList()
        prev = spec.bottleneck_width
        for i in reversed(range(len(enc))):
            out = enc[i - 1] if i > 0 else enc[0]
            self.dec_convs.append(torch.nn.Conv2d(prev + enc[i], out, 3, padding=1, **kw))
            self.dec_bns.append(torch.nn.BatchNorm2d(out, **kw) if spec.use_batchnorm
                                else torch.nn.Identity())
            prev = out
        self.head = torch.nn.Conv2d(prev, spec.out_channels, 1, **kw)
        self.pool = torch.nn.MaxPool2d(2)

    def forward(self, x):
        skips = []
        for conv, bn in zip(self.enc_convs, self.enc_bns):
            x = bn(torch.relu(conv(x)))
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck_bn(torch.relu(self.bottleneck(x)))
        for conv, bn, skip in zip(self.dec_convs, self.dec_bns, reversed(skips)):
            x = torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest")
            x = torch.cat([x, skip], dim=1)
            x = bn(torch.relu(conv(x)))
        return torch.sigmoid(self.head(x))


def _param_entries(model):
    """Stable (name, tensor) list covering weights and batch-norm state."""
    entries = list(model.named_parameters())
    entries += [(name, buf) for name, buf in model.named_buffers()
                if "num_batches_tracked" not in name]
    return entries


@dataclass
class NetworkParams:
    """Ordered layer-id -> array mapping plus the seed that produced it."""

    tensors: dict
    seed: int = 0

    def copy(self):
        return NetworkParams({k: v.copy() for k, v in self.tensors.items()}, self.seed)


def init_params(spec, seed):
    """He-uniform fan-in initialization, reproducible from the seed."""
    rng = np.random.default_rng(seed)
    model = _Autoencoder(spec)
    tensors = {}
    for name, t in _param_entries(model):
        shape = tuple(t.shape)
        if name.endswith(".weight") and t.dim() == 4:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, shape).astype(np.float32)
        elif "running_var" in name or (name.endswith(".weight") and t.dim() == 1):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return NetworkParams(tensors=tensors, seed=seed)


def _build_model(params, spec, dtype=torch.float32):
    model = _Autoencoder(spec, dtype=dtype)
    entries = dict(_param_entries(model))
    missing = set(entries) - set(params.tensors)
    extra = set(params.tensors) - set(entries)
    if missing or extra:
        raise ConfigurationError(
            f"parameter set does not match the network spec "
            f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
    with torch.no_grad():
        for name, t in entries.items():
            arr = params.tensors[name]
            if tuple(t.shape) != arr.shape:
                raise DimensionError(f"layer {name}: shape {arr.shape} != {tuple(t.shape)}")
            t.copy_(torch.from_numpy(np.ascontiguousarray(arr)).to(dtype))
    return model


def _stack_to_tensor(x, spec, dtype=torch.float32):
    arr = np.asarray(getattr(x, "data", x), dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] != spec.in_channels:
        raise DimensionError(f"expected (N,)H,W,{spec.in_channels} input, got {arr.shape}")
    if arr.shape[1] % spec.min_divisor() or arr.shape[2] % spec.min_divisor():
        raise DimensionError(
            f"spatial size {arr.shape[1:3]} not divisible by {spec.min_divisor()}")
    return torch.from_numpy(arr.transpose(0, 3, 1, 2)).to(dtype)


def forward(params, spec, x):
    """Deterministic inference pass; returns per-pixel sigmoid outputs as an
    H x W x 6 (or N x H x W x 6) array in (0, 1).  Batch-norm layers use
    their stored statistics."""
    single = np.asarray(getattr(x, "data", x)).ndim == 3
    model = _build_model(params, spec)
    model.eval()
    with torch.no_grad():
        out = model(_stack_to_tensor(x, spec)).numpy().transpose(0, 2, 3, 1)
    if not np.isfinite(out).all():
        raise NumericError("non-finite activations in forward pass")
    return out[0].astype(float) if single else out.astype(float)


def dice_loss(pred, truth):
    """Smoothed dice loss over all six subbands jointly: value in [0, 1],
    zero exactly when prediction matches a binary truth."""
    p = np.asarray(getattr(pred, "data", pred), dtype=float)
    q = np.asarray(getattr(truth, "data", truth), dtype=float)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch {p.shape} vs {q.shape}")
    inter = float((p * q).sum())
    total = float(p.sum() + q.sum())
    return 1.0 - (2.0 * inter + DICE_SMOOTHING) / (total + DICE_SMOOTHING)


def _dice_loss_torch(pred, truth):
    """Batch mean of per-sample smoothed dice losses (NCHW tensors)."""
    dims = (1, 2, 3)
    inter = (pred * truth).sum(dim=dims)
    total = pred.sum(dim=dims) + truth.sum(dim=dims)
    return (1.0 - (2.0 * inter + DICE_SMOOTHING) / (total + DICE_SMOOTHING)).mean()


def backward(params, spec, x, truth):
    """Exact gradients of dice_loss(forward(x), truth) for every parameter,
    as a layer-id -> array mapping (float64).  Batch statistics are used for
    any batch-norm layers, matching training."""
    model = _build_model(params, spec, dtype=torch.float64)
    model.train()
    xt = _stack_to_tensor(x, spec, dtype=torch.float64)
    tt = _stack_to_tensor(truth, spec, dtype=torch.float64)
    loss = _dice_loss_torch(model(xt), tt)
    loss.backward()
    grads = {}
    for name, t in model.named_parameters():
        g = t.grad.detach().numpy().copy() if t.grad is not None else np.zeros(t.shape)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in layer {name}")
        grads[name] = g
    return grads, float(loss.detach())


def train(spec, dataset, cfg, seed=0):
    """Mini-batch Adam on the dice loss; deterministic for a fixed seed.

    Returns (params_at_best_validation, log) where log rows are
    (epoch, train_loss, val_loss).  With fewer than one validation sample
    the training loss drives model selection."""
    inputs, truths = dataset
    inputs = np.asarray(inputs, dtype=np.float32)
    truths = np.asarray(truths, dtype=np.float32)
    if inputs.ndim != 4 or inputs.shape != truths.shape:
        raise ParameterError(f"dataset arrays must match as N,H,W,C; got "
                             f"{inputs.shape} and {truths.shape}")
    n = inputs.shape[0]
    if n == 0:
        raise ParameterError("empty dataset")

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = int(round(cfg.validation_fraction * n))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        raise ParameterError("validation split leaves no training samples")

    torch.manual_seed(seed)
    model = _build_model(init_params(spec, seed), spec)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                           betas=(cfg.beta1, cfg.beta2))

    def to_nchw(idx):
        return (torch.from_numpy(inputs[idx].transpose(0, 3, 1, 2)),
                torch.from_numpy(truths[idx].transpose(0, 3, 1, 2)))

    def mean_loss(idx, batch=32):
        model.eval()
        losses = []
        with torch.no_grad():
            for k in range(0, len(idx), batch):
                xb, tb = to_nchw(idx[k:k + batch])
                pred = model(xb)
                dims = (1, 2, 3)
                inter = (pred * tb).sum(dim=dims)
                total = pred.sum(dim=dims) + tb.sum(dim=dims)
                losses.append(1.0 - (2 * inter + DICE_SMOOTHING) / (total + DICE_SMOOTHING))
        return float(torch.cat(losses).mean())

    def snapshot():
        return NetworkParams({name: t.detach().numpy().copy()
                              for name, t in _param_entries(model)}, seed)

    best_loss, best_params, since_best = np.inf, snapshot(), 0
    log = []
    for epoch in range(cfg.epochs):
        model.train()
        perm = rng.permutation(train_idx)
        epoch_losses = []
        for k in range(0, len(perm), cfg.batch_size):
            xb, tb = to_nchw(perm[k:k + cfg.batch_size])
            opt.zero_grad()
            loss = _dice_loss_torch(model(xb), tb)
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        train_loss = float(np.mean(epoch_losses))
        val_loss = mean_loss(val_idx) if n_val else train_loss
        log.append((epoch, train_loss, val_loss))
        if val_loss < best_loss:
            best_loss, best_params, since_best = val_loss, snapshot(), 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best_params, log


def sgd_steps(params, spec, x, truth, steps, learning_rate):
    """Adam steps on one sample; used by the overfit smoke checks.  A zero
    learning rate leaves the parameters bit-identical."""
    model = _build_model(params, spec)
    opt = torch.optim.Adam(model.parameters(), lr=learning_rate)
    xt = _stack_to_tensor(x, spec)
    tt = _stack_to_tensor(truth, spec)
    loss_val = None
    for _ in range(steps):
        model.train()
        opt.zero_grad()
        loss = _dice_loss_torch(model(xt), tt)
        loss.backward()
        opt.step()
        loss_val = float(loss.detach())
    out = NetworkParams({name: t.detach().numpy().copy()
                         for name, t in _param_entries(model)}, params.seed)
    return out, loss_val


def binarize(pred, threshold=0.5):
    """Elementwise >= threshold as a {0,1} float array (ties go to 1)."""
    arr = np.asarray(getattr(pred, "data", pred), dtype=float)
    return (arr >= threshold).astype(float)


def training_log_to_csv(log, path):
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, train_loss, val_loss in log:
            fh.write(f"{epoch},{train_loss!r},{val_loss!r}\n")


def save_params(path, params, spec):
    """Weights file: magic, JSON header (spec, seed, manifest), then raw
    little-endian float32 tensors in manifest order."""
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in params.tensors.items()]
    header = json.dumps({"spec": spec.to_json(), "seed": params.seed,
                         "manifest": manifest}).encode()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for k in params.tensors:
            fh.write(np.ascontiguousarray(params.tensors[k], dtype="<f4").tobytes())


def load_params(path):
    """Inverse of :func:`save_params`; returns (params, spec)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(WEIGHTS_MAGIC))
        if magic != WEIGHTS_MAGIC:
            raise DataError(f"{path}: not a network weights file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        tensors = {}
        for entry in header["manifest"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise DataError(f"{path}: truncated tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise DataError(f"{path}: trailing bytes after manifest tensors")
    return (NetworkParams(tensors=tensors, seed=int(header["seed"])),
            NetworkSpec.from_json(header["spec"]))
