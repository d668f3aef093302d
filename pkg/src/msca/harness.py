"""Desk-scale experiments: synthetic data, a tiny CNN, and the protocols.

The synthetic task is frequency-band classification: every class is a
disjoint set of 2D frequency components, a sample is a random-amplitude
(sign-symmetric) combination of its class's orthonormal basis planes plus
white noise.  Band energies read straight off the spectrum separate the
classes perfectly at zero noise, which is the sanity gate every training
claim sits behind.  Channel means alone cannot separate all classes, so
spectral channel descriptors genuinely carry extra information here.

Model: 3 conv stages (16 -> 32 -> 64 channels), attention after each
stage, global pooling, linear classifier.  Components for the spectral
strategies are selected on the smallest attention map (the base grid) and
their indices are scaled multiplicatively for the earlier, larger maps.
Spectral fc inputs are pre-scaled by 1/(H*W) per site so that a (0, 0)
assignment reproduces the mean-pooled baseline exactly.
"""

import csv
import json
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .attention import (
    FrequencyAssignment,
    Gap,
    LearnableTensor,
    MultiSpectral,
    NasMixture,
    init_attention_params,
    param_count,
)
from .dct import orthonormal_basis_2d
from .nn import ConvNet, SGD, accuracy, softmax_cross_entropy
from .selection import (
    ComponentScore,
    FrequencyGrid,
    NasState,
    lf_order,
    nas_derive,
)

_AMP_LO, _AMP_HI = 0.8, 1.6

_CURATED_BANDS = [
    [(0, 1), (1, 0)],
    [(2, 2), (1, 3)],
    [(0, 3), (3, 0)],
    [(1, 5), (5, 1)],
    [(4, 4), (2, 5)],
    [(0, 5), (6, 1)],
    [(3, 4), (6, 0)],
    [(2, 6), (5, 3)],
]


def default_class_bands(num_classes):
    if not 2 <= num_classes <= len(_CURATED_BANDS):
        raise ValueError(f"no default bands for {num_classes} classes")
    return [list(b) for b in _CURATED_BANDS[:num_classes]]


@dataclass
class SyntheticSpec:
    height: int = 16
    width: int = 16
    num_classes: int = 4
    samples_per_class: int = 50
    noise_sigma: float = 0.3
    class_bands: list = None
    seed: int = 7

    def __post_init__(self):
        if self.class_bands is None:
            self.class_bands = default_class_bands(self.num_classes)
        if len(self.class_bands) != self.num_classes:
            raise ValueError("one band set per class required")
        seen = set()
        for band in self.class_bands:
            if not band:
                raise ValueError("empty class band")
            for u, v in band:
                if not (0 <= u < self.height and 0 <= v < self.width):
                    raise ValueError(f"component ({u}, {v}) out of grid range")
                if (u, v) in seen:
                    raise ValueError(f"component ({u}, {v}) appears in two classes")
                seen.add((u, v))
        if not any(all(u + v >= 2 for u, v in band) for band in self.class_bands):
            raise ValueError(
                "need at least one class whose components all have u+v >= 2"
            )

    def to_json(self):
        return {
            "height": self.height,
            "width": self.width,
            "num_classes": self.num_classes,
            "samples_per_class": self.samples_per_class,
            "noise_sigma": self.noise_sigma,
            "class_bands": [[list(c) for c in b] for b in self.class_bands],
            "seed": self.seed,
        }


def gen_synthetic(spec):
    """Build the dataset: (inputs N x 1 x H x W, labels N).

    Samples are class-ordered and bit-reproducible for a given seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    H, W = spec.height, spec.width
    planes = {
        comp: orthonormal_basis_2d(H, W, *comp)
        for band in spec.class_bands
        for comp in band
    }
    n = spec.num_classes * spec.samples_per_class
    X = np.zeros((n, 1, H, W))
    y = np.zeros(n, dtype=np.int64)
    i = 0
    for c, band in enumerate(spec.class_bands):
        for _ in range(spec.samples_per_class):
            img = np.zeros((H, W))
            for comp in band:
                amp = rng.uniform(_AMP_LO, _AMP_HI)
                if rng.random() < 0.5:
                    amp = -amp
                img += amp * planes[comp]
            if spec.noise_sigma > 0:
                img += spec.noise_sigma * rng.standard_normal((H, W))
            X[i, 0] = img
            y[i] = c
            i += 1
    return X, y


def band_energy_oracle(X, class_bands):
    """Classify by projecting onto each class's orthonormal planes.

    Independent of the training stack; used to certify the generator.
    """
    H, W = X.shape[2], X.shape[3]
    preds = np.zeros(X.shape[0], dtype=np.int64)
    planes = [
        [orthonormal_basis_2d(H, W, *comp) for comp in band] for band in class_bands
    ]
    for i in range(X.shape[0]):
        img = X[i, 0]
        energies = [
            np.mean([(img * p).sum() ** 2 for p in ps]) for ps in planes
        ]
        preds[i] = int(np.argmax(energies))
    return preds


def stratified_split(X, y, train_frac=0.8, seed=0):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    tr_idx, va_idx = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        ntr = int(train_frac * len(idx))
        tr_idx.extend(idx[:ntr])
        va_idx.extend(idx[ntr:])
    tr_idx = np.array(sorted(tr_idx))
    va_idx = np.array(sorted(va_idx))
    return (X[tr_idx], y[tr_idx]), (X[va_idx], y[va_idx])


# ---------------------------------------------------------------------------
# model configuration


STRATEGIES = ("none", "gap", "ms", "learnable", "nas")


@dataclass
class ModelConfig:
    stage_channels: tuple = (16, 32, 64)
    strides: tuple = (2, 2, 1)
    reduction: int = 4
    num_classes: int = 4
    strategy: str = "gap"
    components: tuple = None        # on the base grid, for ms / learnable
    base_grid: tuple = (4, 4)
    learnable_init: str = "dct"
    learnable_trainable: bool = True
    nas_parts: int = 4
    nas_temperature: float = 1.0
    nas_lr_mult: float = 10.0
    attention_b2_init: float = 2.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy in ("ms", "learnable") and not self.components:
            raise ValueError(f"strategy {self.strategy!r} needs components")
        if self.components is not None:
            self.components = tuple((int(u), int(v)) for u, v in self.components)

    def to_json(self):
        doc = {
            "stage_channels": list(self.stage_channels),
            "strides": list(self.strides),
            "reduction": self.reduction,
            "num_classes": self.num_classes,
            "strategy": self.strategy,
            "base_grid": list(self.base_grid),
        }
        if self.components is not None:
            doc["components"] = [list(c) for c in self.components]
        if self.strategy == "learnable":
            doc["learnable_init"] = self.learnable_init
            doc["learnable_trainable"] = self.learnable_trainable
        if self.strategy == "nas":
            doc["nas_parts"] = self.nas_parts
            doc["nas_temperature"] = self.nas_temperature
            doc["nas_lr_mult"] = self.nas_lr_mult
        return doc


@dataclass
class Hyper:
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 30
    batch: int = 32
    seed: int = 0

    def to_json(self):
        return {
            "lr": self.lr,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "batch": self.batch,
            "seed": self.seed,
        }


def scale_components(components, base_grid, site_hw):
    """Map base-grid indices onto a larger site map multiplicatively."""
    bh, bw = base_grid
    h, w = site_hw
    if h % bh or w % bw:
        raise ValueError(
            f"site map {h}x{w} is not a multiple of the base grid {bh}x{bw}"
        )
    fh, fw = h // bh, w // bw
    return tuple((u * fh, v * fw) for u, v in components)


def _site_attention(cfg, C, H, W, rng):
    if cfg.strategy == "none":
        return None
    if cfg.strategy == "gap":
        strategy, scale = Gap(), 1.0
    elif cfg.strategy == "ms":
        comps = scale_components(cfg.components, cfg.base_grid, (H, W))
        strategy = MultiSpectral(FrequencyAssignment(C, H, W, comps))
        scale = 1.0 / (H * W)
    elif cfg.strategy == "learnable":
        comps = scale_components(cfg.components, cfg.base_grid, (H, W))
        strategy = LearnableTensor(
            FrequencyAssignment(C, H, W, comps),
            init=cfg.learnable_init,
            trainable=cfg.learnable_trainable,
            rng=rng,
        )
        scale = 1.0 / (H * W)
    elif cfg.strategy == "nas":
        if C % cfg.nas_parts:
            raise ValueError(f"{cfg.nas_parts} parts do not divide {C} channels")
        strategy = NasMixture(
            np.zeros((cfg.nas_parts, H, W)), cfg.nas_temperature
        )
        scale = 1.0 / (H * W)
    return init_attention_params(
        C,
        cfg.reduction,
        strategy=strategy,
        rng=rng,
        freq_scale=scale,
        w2_zero=True,
        b2_init=cfg.attention_b2_init,
    )


def build_model(cfg, in_shape, seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    factory = (lambda C, H, W: _site_attention(cfg, C, H, W, rng))
    model = ConvNet(
        cfg.stage_channels,
        cfg.strides,
        cfg.num_classes,
        in_shape,
        factory if cfg.strategy != "none" else None,
        rng,
    )
    bh, bw = cfg.base_grid
    min_h = min(h for _, h, _ in model.site_shapes)
    min_w = min(w for _, _, w in model.site_shapes)
    if cfg.strategy != "none" and cfg.strategy != "gap":
        if bh > min_h or bw > min_w:
            raise ValueError(
                f"base grid {bh}x{bw} exceeds the smallest attention map "
                f"{min_h}x{min_w}"
            )
    return model


def attention_param_total(cfg, in_shape):
    """Trainable attention parameters summed over the model's sites."""
    model = build_model(cfg, in_shape, seed=0)
    total = 0
    for s, (C, _, _) in enumerate(model.site_shapes, start=1):
        att = model.stages[s - 1]["att"]
        if att is not None:
            total += param_count(C, cfg.reduction, att.strategy)
    return total


# ---------------------------------------------------------------------------
# training


class TrainingDiverged(RuntimeError):
    def __init__(self, message, diagnostic):
        super().__init__(message)
        self.diagnostic = diagnostic


@dataclass
class RunRecord:
    config: dict
    seed: int
    train_loss: list
    val_acc: list
    final_val_acc: float
    wall_clock: float
    derived_assignment: dict = None

    def to_json(self):
        doc = {
            "schema_version": 1,
            "config": self.config,
            "seed": self.seed,
            "train_loss": self.train_loss,
            "val_acc": self.val_acc,
            "final_val_acc": self.final_val_acc,
        }
        if self.derived_assignment is not None:
            doc["derived_assignment"] = self.derived_assignment
        return doc


def train(cfg, data, hyper):
    """Minibatch SGD with momentum on cross-entropy; fully seeded.

    Raises TrainingDiverged (with a diagnostic dict attached) if the loss
    leaves the finite range.
    """
    X, y = data
    if len(X) == 0:
        raise ValueError("empty dataset")
    t0 = time.perf_counter()
    (Xtr, ytr), (Xva, yva) = stratified_split(X, y, 0.8, hyper.seed)
    model = build_model(cfg, X.shape[1:], hyper.seed)
    return _fit(model, cfg, (Xtr, ytr), (Xva, yva), hyper, t0)


def _fit(model, cfg, train_set, val_set, hyper, t0):
    Xtr, ytr = train_set
    Xva, yva = val_set
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([hyper.seed, 2]))
    lr_mult = {
        k: cfg.nas_lr_mult for k in model.params if k.endswith(".alpha")
    }
    opt = SGD(model.params, hyper.lr, hyper.momentum, lr_mult)
    ntr = len(Xtr)
    train_loss, val_acc = [], []
    for epoch in range(hyper.epochs):
        perm = shuffle_rng.permutation(ntr)
        total = 0.0
        for start in range(0, ntr, hyper.batch):
            idx = perm[start : start + hyper.batch]
            loss, grads = model.loss_and_grads(Xtr[idx], ytr[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch}",
                    {
                        "epoch": epoch,
                        "batch_start": int(start),
                        "loss": float(loss),
                        "lr": hyper.lr,
                    },
                )
            opt.step(grads)
            total += loss * len(idx)
        train_loss.append(total / ntr)
        val_acc.append(accuracy(model, Xva, yva))
    final = val_acc[-1] if hyper.epochs > 0 else accuracy(model, Xva, yva)
    record = RunRecord(
        config={"model": cfg.to_json(), "hyper": hyper.to_json()},
        seed=hyper.seed,
        train_loss=train_loss,
        val_acc=val_acc,
        final_val_acc=final,
        wall_clock=time.perf_counter() - t0,
        derived_assignment=_derive_assignments(model, cfg),
    )
    record._model = model
    return record


def _derive_assignments(model, cfg):
    if cfg.strategy != "nas":
        return None
    sites = []
    for s, stage in enumerate(model.stages, start=1):
        att = stage["att"]
        state = NasState(att.strategy.alpha, att.strategy.temperature)
        derived = nas_derive(state, model.site_shapes[s - 1][0])
        sites.append({"stage": s, **derived.to_json()})
    return {"sites": sites}


# ---------------------------------------------------------------------------
# per-component evaluation (single-frequency attention fine-tunes)


@dataclass
class TrainedModel:
    cfg: ModelConfig
    hyper: Hyper
    state: dict
    record: RunRecord


def pretrain_base(data, hyper, cfg=None):
    """Train the attention-free base once; fine-tunes start from it."""
    if cfg is None:
        cfg = ModelConfig(strategy="none")
    record = train(cfg, data, hyper)
    return TrainedModel(cfg=cfg, hyper=hyper, state=record._model.state(), record=record)


def _finetune(base, data, cfg_aug, budget, lr):
    X, y = data
    t0 = time.perf_counter()
    hyper = replace(base.hyper, epochs=budget, lr=lr)
    (Xtr, ytr), (Xva, yva) = stratified_split(X, y, 0.8, hyper.seed)
    model = build_model(cfg_aug, X.shape[1:], hyper.seed)
    model.load_state(base.state, strict=False)
    return _fit(model, cfg_aug, (Xtr, ytr), (Xva, yva), hyper, t0)


def evaluate_component(base, component, data, budget=5, finetune_lr=0.02):
    """Score one frequency pair: fine-tune the base net with a
    single-component attention block at every site, return held-out
    accuracy.  With budget 0 the block is an exact pass-through for the
    argmax, so the score equals the base model's accuracy."""
    cfg_aug = replace(base.cfg, strategy="ms", components=(tuple(component),))
    record = _finetune(base, data, cfg_aug, budget, finetune_lr)
    return ComponentScore(tuple(component), record.final_val_acc)


def gap_reference_score(base, data, budget=5, finetune_lr=0.02):
    """The mean-pooled attention fine-tune under the identical protocol."""
    cfg_aug = replace(base.cfg, strategy="gap", components=None)
    record = _finetune(base, data, cfg_aug, budget, finetune_lr)
    return record.final_val_acc


def evaluate_grid(base, grid, data, budget=5, finetune_lr=0.02):
    """One ComponentScore per component of the grid, in lf order."""
    return [
        evaluate_component(base, comp, data, budget, finetune_lr)
        for comp in lf_order(grid)
    ]


# ---------------------------------------------------------------------------
# sweeps and comparisons


def select_components(criterion, k, grid, scores=None):
    """The k components a criterion picks on a grid (k capped at |grid|)."""
    keff = min(k, grid.size)
    if criterion == "lf":
        return tuple(lf_order(grid)[:keff])
    if criterion == "ts":
        if not scores:
            raise ValueError("ts selection needs component scores")
        comps = [s.component for s in scores]
        if len(set(comps)) != len(comps):
            raise ValueError("duplicate components in scores")
        rank = {c: i for i, c in enumerate(lf_order(grid))}
        ordered = sorted(scores, key=lambda s: (-s.score, rank[s.component]))
        return tuple(s.component for s in ordered[:keff])
    raise ValueError(f"unknown criterion {criterion!r}")


def sweep_k(criterion, ks, data, seeds, cfg=None, hyper=None, scores=None):
    """Train the spectral model per (k, seed); aggregate mean/std accuracy.

    Requested k larger than the grid is capped at the grid size and the
    effective value is reported alongside.
    """
    cfg = cfg or ModelConfig(strategy="gap")
    hyper = hyper or Hyper()
    grid = FrequencyGrid(*cfg.base_grid)
    rows = []
    for k in ks:
        comps = select_components(criterion, k, grid, scores)
        accs = []
        for seed in seeds:
            cfg_k = replace(cfg, strategy="ms", components=comps)
            rec = train(cfg_k, data, replace(hyper, seed=seed))
            accs.append(rec.final_val_acc)
        rows.append(
            {
                "k": int(k),
                "effective_k": len(comps),
                "mean_acc": float(np.mean(accs)),
                "std_acc": float(np.std(accs)),
            }
        )
    return rows


LEARNABLE_MODES = ("FR", "LR", "LD", "FD")


def compare_learnable(modes, data, seeds, cfg=None, hyper=None, n_components=4):
    """Fixed/learned x random/spectral-initialized compression tensors.

    FR: frozen random maps.  LR: trained random maps.  LD: trained maps
    started at the basis planes.  FD: the fixed-basis spectral method.
    All modes share seeds and budgets.
    """
    cfg = cfg or ModelConfig(strategy="gap")
    hyper = hyper or Hyper()
    grid = FrequencyGrid(*cfg.base_grid)
    comps = tuple(lf_order(grid)[:n_components])
    rows = []
    for mode in modes:
        if mode == "FD":
            cfg_m = replace(cfg, strategy="ms", components=comps)
        else:
            cfg_m = replace(
                cfg,
                strategy="learnable",
                components=comps,
                learnable_init="dct" if mode in ("LD", "FD") else "random",
                learnable_trainable=mode in ("LR", "LD"),
            )
        accs = []
        for seed in seeds:
            rec = train(cfg_m, data, replace(hyper, seed=seed))
            accs.append(rec.final_val_acc)
        rows.append(
            {
                "mode": mode,
                "mean_acc": float(np.mean(accs)),
                "std_acc": float(np.std(accs)),
                "attention_params": attention_param_total(cfg_m, data[0].shape[1:]),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# record / table serialization


def write_history_csv(path, record):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_acc"])
        for e, (tl, va) in enumerate(zip(record.train_loss, record.val_acc)):
            writer.writerow([e, repr(float(tl)), repr(float(va))])


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table_csv(path, rows):
    if not rows:
        raise ValueError("empty table")
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow(
                [
                    repr(float(row[c])) if isinstance(row[c], float) else row[c]
                    for c in cols
                ]
            )


def export_dataset(prefix, X, y):
    """inputs to the binary tensor form, labels to CSV."""
    T.save_tensor(f"{prefix}_inputs.bin", X)
    with open(f"{prefix}_labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for i, label in enumerate(y):
            writer.writerow([i, int(label)])
