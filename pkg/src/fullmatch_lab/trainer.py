"""The training loop: SGD with momentum, cosine learning-rate decay,
per-step selection states, loss assembly, and the ablation switches.

Configuration is one flat record (``ExperimentConfig``) readable from a
``key = value`` text file with '#' comments and dotted keys for the nested
augmentation/data blocks.  All randomness flows from the single seed through
named substreams (data, init, augment, batching, eval), so switching a
method on or off never shifts another component's random sequence; that is
what makes the alpha = beta = 0 run of the full method bitwise identical to
the baseline.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses, metrics
from ._kernels import selection_kernel, strong_objective_kernel
from .augment import AugmentPolicy, strong_augment, weak_augment
from .data import Dataset, batch_iterator, generate, split_dataset
from .labeling import SelectionState, build_selection_state
from .mathutils import softmax, softmax_grad_from_prob_grad
from .model import (
    ModelGradients,
    ModelParameters,
    backward,
    forward,
    init_model,
    save_checkpoint,
)

METHODS = ("fixmatch", "fixmatch+eml", "fixmatch+anl", "fullmatch")
ANL_SCOPES = ("all", "with_pl", "without_pl")

# Fixed order of the named seed substreams.
_STREAMS = ("data", "init", "augment", "batching", "eval")


class ConfigError(ValueError):
    """A configuration key is unknown, malformed, or out of its domain."""


class TrainingDivergenceError(RuntimeError):
    """A loss or gradient went non-finite; carries a diagnostic dump."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass
class DataConfig:
    kind: str = "gaussian_blobs"
    num_classes: int = 4
    num_samples: int = 2400
    noise: float = 0.85
    dim: int = 8
    labels_per_class: int = 4
    test_fraction: float = 1.0 / 6.0


@dataclass
class ExperimentConfig:
    """Every experiment knob in one validated record."""

    seed: int = 1
    method: str = "fullmatch"
    tau: float = 0.95
    alpha: float = 1.0
    beta: float = 1.0
    eml_variant: str = "bce"
    anl_scope: str = "all"
    lr0: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    total_iters: int = 20000
    batch_labeled: int = 16
    unlabeled_ratio: int = 7
    hidden_dims: tuple[int, ...] = (64, 64)
    eval_interval: int = 250
    checkpoint_interval: int = 0
    eval_topk: tuple[int, ...] | None = None
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    data: DataConfig = field(default_factory=DataConfig)

    @property
    def batch_unlabeled(self) -> int:
        return self.unlabeled_ratio * self.batch_labeled

    @property
    def uses_eml(self) -> bool:
        return self.method in ("fixmatch+eml", "fullmatch")

    @property
    def uses_anl(self) -> bool:
        return self.method in ("fixmatch+anl", "fullmatch")

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (0.5 < self.tau < 1.0):
            raise ConfigError(f"tau must lie in (0.5, 1), got {self.tau}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.eml_variant not in losses.EML_VARIANTS:
            raise ConfigError(f"eml_variant must be one of {losses.EML_VARIANTS}")
        if self.anl_scope not in ANL_SCOPES:
            raise ConfigError(f"anl_scope must be one of {ANL_SCOPES}")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.total_iters < 0:
            raise ConfigError("total_iters must be non-negative")
        if self.batch_labeled < 1 or self.unlabeled_ratio < 1:
            raise ConfigError("batch_labeled and unlabeled_ratio must be >= 1")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval must be >= 1")
        if self.checkpoint_interval < 0:
            raise ConfigError("checkpoint_interval must be non-negative")
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise ConfigError("hidden_dims must be a non-empty tuple of positive ints")
        if self.eval_topk is not None:
            for k in self.eval_topk:
                if not (1 <= k <= self.data.num_classes):
                    raise ConfigError(f"eval_topk entry {k} outside [1, C]")
        self.augment.validate()
        dc = self.data
        if dc.kind not in ("gaussian_blobs", "two_moons", "concentric_rings"):
            raise ConfigError(f"data.kind {dc.kind!r} unknown")
        if dc.num_classes < 2 or dc.num_samples < 10 * dc.num_classes:
            raise ConfigError("data block: need C >= 2 and N >= 10*C")
        if dc.noise < 0 or dc.labels_per_class < 1 or not (0 < dc.test_fraction < 1):
            raise ConfigError("data block: bad noise/labels_per_class/test_fraction")

    def topk_list(self) -> list[int]:
        if self.eval_topk is not None:
            return sorted(set(self.eval_topk))
        return metrics.default_topk_list(self.data.num_classes)


# --- flat key = value config file handling -------------------------------

_TOP_FIELDS = {
    "seed": int,
    "method": str,
    "tau": float,
    "alpha": float,
    "beta": float,
    "eml_variant": str,
    "anl_scope": str,
    "lr0": float,
    "momentum": float,
    "weight_decay": float,
    "total_iters": int,
    "batch_labeled": int,
    "unlabeled_ratio": int,
    "eval_interval": int,
    "checkpoint_interval": int,
}
_AUGMENT_FIELDS = {
    "weak_noise_sigma": float,
    "strong_noise_sigma": float,
    "strong_dropout_fraction": float,
    "strong_scale_min": float,
    "strong_scale_max": float,
}
_DATA_FIELDS = {
    "kind": str,
    "num_classes": int,
    "num_samples": int,
    "noise": float,
    "dim": int,
    "labels_per_class": int,
    "test_fraction": float,
}


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat key = value format; unknown keys are an error."""
    config = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _TOP_FIELDS:
                setattr(config, key, _TOP_FIELDS[key](value))
            elif key == "hidden_dims":
                config.hidden_dims = _parse_int_tuple(value)
            elif key == "eval_topk":
                config.eval_topk = _parse_int_tuple(value)
            elif key.startswith("augment."):
                sub = key.split(".", 1)[1]
                if sub not in _AUGMENT_FIELDS:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                setattr(config.augment, sub, _AUGMENT_FIELDS[sub](value))
            elif key.startswith("data."):
                sub = key.split(".", 1)[1]
                if sub not in _DATA_FIELDS:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                setattr(config.data, sub, _DATA_FIELDS[sub](value))
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize a config back to the flat format (a diffable snapshot)."""
    lines = []
    for key in _TOP_FIELDS:
        lines.append(f"{key} = {getattr(config, key)}")
    lines.append("hidden_dims = " + ",".join(str(d) for d in config.hidden_dims))
    if config.eval_topk is not None:
        lines.append("eval_topk = " + ",".join(str(k) for k in config.eval_topk))
    for key in _AUGMENT_FIELDS:
        lines.append(f"augment.{key} = {getattr(config.augment, key)!r}")
    for key in _DATA_FIELDS:
        value = getattr(config.data, key)
        lines.append(f"data.{key} = {value!r}" if isinstance(value, float) else f"data.{key} = {value}")
    return "\n".join(lines) + "\n"


# --- optimizer primitives -------------------------------------------------


def cosine_lr(t: int, total: int, lr0: float) -> float:
    """lr0 * cos(7 pi t / (16 total)); lr0 at t = 0, positive throughout."""
    if not (0 <= t <= max(total, 1)):
        raise ValueError(f"cosine_lr: t={t} outside [0, {total}]")
    return lr0 * float(np.cos(7.0 * np.pi * t / (16.0 * max(total, 1))))


def sgd_momentum_step(
    params: ModelParameters,
    grads: ModelGradients,
    velocity: ModelGradients,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> tuple[ModelParameters, ModelGradients]:
    """v <- momentum*v + g + wd*p ; p <- p - lr*v.  Returns fresh arrays."""
    new_w, new_b, vel_w, vel_b = [], [], [], []
    for p, g, v in zip(params.weights, grads.weights, velocity.weights):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(
                "non-finite weight gradient", {"grad_max": float(np.nanmax(np.abs(g)))}
            )
        nv = momentum * v + g + weight_decay * p
        vel_w.append(nv)
        new_w.append(p - lr * nv)
    for p, g, v in zip(params.biases, grads.biases, velocity.biases):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(
                "non-finite bias gradient", {"grad_max": float(np.nanmax(np.abs(g)))}
            )
        nv = momentum * v + g + weight_decay * p
        vel_b.append(nv)
        new_b.append(p - lr * nv)
    return ModelParameters(weights=new_w, biases=new_b), ModelGradients(weights=vel_w, biases=vel_b)


def zero_velocity(params: ModelParameters) -> ModelGradients:
    return ModelGradients(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
    )


def filter_negative_scope(state: SelectionState, scope: str) -> SelectionState:
    """Restrict negative labels to samples with / without a pseudo-label."""
    if scope == "all":
        return state
    keep = state.has_pseudo_label if scope == "with_pl" else ~state.has_pseudo_label
    negative = state.negative_mask & keep[:, None]
    cols = np.arange(state.num_classes)
    positive = state.has_pseudo_label[:, None] & (cols[None, :] == state.target_class[:, None])
    return dataclasses.replace(state, negative_mask=negative, selected_mask=negative | positive)


@dataclass
class StepSummary:
    """What a single step decided, for logging."""

    iteration: int
    num_pseudo_labeled: int
    k: int
    lr: float


@dataclass
class TrainResult:
    params: ModelParameters
    metrics: list[metrics.MetricsRecord]
    step_seconds: np.ndarray
    config: ExperimentConfig


ThresholdProvider = Callable[[int, int], float]
StepCallback = Callable[[int, ModelParameters, losses.LossBreakdown, StepSummary], None]


def build_dataset(config: ExperimentConfig) -> Dataset:
    """Generate and split the configured dataset from the seed's data stream."""
    streams = dict(zip(_STREAMS, np.random.SeedSequence(config.seed).spawn(len(_STREAMS))))
    gen_seed, split_seed = streams["data"].spawn(2)
    dataset = generate(
        config.data.kind,
        config.data.num_classes,
        config.data.num_samples,
        config.data.noise,
        gen_seed,
        dim=config.data.dim,
    )
    return split_dataset(
        dataset, config.data.labels_per_class, config.data.test_fraction, split_seed
    )


class Trainer:
    """Owns the mutable training state for one experiment."""

    def __init__(
        self,
        config: ExperimentConfig,
        dataset: Dataset | None = None,
        threshold_provider: ThresholdProvider | None = None,
        checkpoint_dir=None,
    ):
        config.validate()
        self.config = config
        streams = dict(zip(_STREAMS, np.random.SeedSequence(config.seed).spawn(len(_STREAMS))))
        self._eval_seed = streams["eval"]
        if dataset is None:
            dataset = build_dataset(config)
        self.dataset = dataset
        dims = [dataset.dim, *config.hidden_dims, dataset.num_classes]
        self.params = init_model(dims, streams["init"])
        self.velocity = zero_velocity(self.params)
        self.aug_rng = np.random.default_rng(streams["augment"])
        self.batches = batch_iterator(
            dataset, config.batch_labeled, config.batch_unlabeled, streams["batching"]
        )
        self.threshold_provider = threshold_provider or (lambda t, c: config.tau)
        self.checkpoint_dir = checkpoint_dir
        self.iteration = 0
        self._last_state: SelectionState | None = None
        self._last_unlabeled: np.ndarray | None = None

    # -- single step -------------------------------------------------------

    def step(self) -> tuple[losses.LossBreakdown, StepSummary]:
        cfg = self.config
        t = self.iteration
        num_classes = self.dataset.num_classes
        lab_idx, unlab_idx = next(self.batches)
        x_l = self.dataset.features[lab_idx]
        y_l = self.dataset.true_labels[lab_idx]
        x_u = self.dataset.features[unlab_idx]

        xw_l = weak_augment(x_l, cfg.augment, self.aug_rng)
        xw_u = weak_augment(x_u, cfg.augment, self.aug_rng)
        xs_u = strong_augment(x_u, cfg.augment, self.aug_rng)

        n_l, n_u = x_l.shape[0], x_u.shape[0]
        stacked = np.concatenate([xw_l, xw_u, xs_u], axis=0)
        logits, cache = forward(self.params, stacked)
        probs = softmax(logits)
        probs_labeled = probs[:n_l]
        weak_probs = probs[n_l : n_l + n_u]
        strong_probs = probs[n_l + n_u :]

        tau = self.threshold_provider(t, num_classes)
        k_override = 0 if cfg.uses_anl else num_classes
        has_pl, target, selected, nontarget, negative, k = selection_kernel(
            weak_probs, strong_probs, tau, k_override
        )
        state = SelectionState(
            has_pseudo_label=has_pl,
            target_class=target,
            selected_mask=selected,
            nontarget_mask=nontarget,
            negative_mask=negative,
            k=k,
        )
        if cfg.uses_anl and cfg.anl_scope != "all":
            state = filter_negative_scope(state, cfg.anl_scope)
        self._last_state = state
        self._last_unlabeled = unlab_idx

        l_s, grad_labeled = losses.supervised_value_and_grad(probs_labeled, y_l)
        l_us, l_eml, l_anl, grad_strong = strong_objective_kernel(
            strong_probs,
            state.has_pseudo_label,
            state.target_class,
            state.nontarget_mask,
            state.negative_mask,
            state.k,
            cfg.uses_eml,
            cfg.eml_variant == "bce",
            cfg.uses_anl,
            cfg.alpha,
            cfg.beta,
        )
        try:
            breakdown = losses.total_loss(l_s, l_us, l_anl, l_eml, cfg.alpha, cfg.beta)
        except ValueError as exc:
            raise TrainingDivergenceError(
                f"non-finite loss at iteration {t}",
                {"iteration": t, "l_s": l_s, "l_us": l_us, "l_eml": l_eml, "l_anl": l_anl},
            ) from exc

        grad_probs = np.zeros_like(probs)
        grad_probs[:n_l] = grad_labeled
        grad_probs[n_l + n_u :] = grad_strong

        grads = backward(self.params, cache, softmax_grad_from_prob_grad(probs, grad_probs))
        lr = cosine_lr(t, cfg.total_iters, cfg.lr0)
        try:
            self.params, self.velocity = sgd_momentum_step(
                self.params, grads, self.velocity, lr, cfg.momentum, cfg.weight_decay
            )
        except TrainingDivergenceError as exc:
            exc.dump.update({"iteration": t, "l_sum": breakdown.l_sum})
            raise
        self.iteration = t + 1
        summary = StepSummary(
            iteration=t,
            num_pseudo_labeled=int(state.has_pseudo_label.sum()),
            k=state.k,
            lr=lr,
        )
        return breakdown, summary

    # -- evaluation --------------------------------------------------------

    def evaluate(
        self,
        mean_step_seconds: float = 0.0,
        npl_window: tuple[float, float, int] | None = None,
    ) -> metrics.MetricsRecord:
        """Metrics snapshot of the current parameters.

        Pool weak views use a fixed evaluation stream recreated identically
        every call, so the ratio curve reflects the model, not augmentation
        noise.  Negative-label statistics describe training batches, so they
        arrive as ``npl_window = (mean count, accuracy, last k)`` from the
        loop; a standalone snapshot reports the vacuous (0, 1.0, C).
        """
        cfg = self.config
        ds = self.dataset
        num_classes = ds.num_classes
        tau = self.threshold_provider(self.iteration, num_classes)

        test_idx = ds.indices_of("test")
        test_logits, _ = forward(self.params, ds.features[test_idx])
        test_probs = softmax(test_logits)
        test_labels = ds.true_labels[test_idx]
        test_acc = metrics.topk_accuracy(test_probs, test_labels, 1)
        topk = {k: metrics.topk_accuracy(test_probs, test_labels, k) for k in cfg.topk_list()}
        hist = metrics.entropy_histogram(test_probs, metrics.default_entropy_bin_edges(num_classes))

        pool_idx = ds.indices_of("unlabeled")
        if pool_idx.size:
            eval_rng = np.random.default_rng(self._eval_seed)
            pool_x = ds.features[pool_idx]
            weak_logits, _ = forward(self.params, weak_augment(pool_x, cfg.augment, eval_rng))
            ratio = metrics.pseudo_label_ratio(softmax(weak_logits), tau)
        else:
            ratio = 0.0
        mean_npl, npl_acc, k_value = npl_window or (0.0, 1.0, num_classes)

        return metrics.MetricsRecord(
            iteration=self.iteration,
            test_accuracy=test_acc,
            pseudo_label_ratio=ratio,
            mean_npl_per_sample=mean_npl,
            npl_accuracy=npl_acc,
            k_value=k_value,
            topk_accuracy=topk,
            entropy_histogram=hist,
            step_time=mean_step_seconds,
        )

    # -- full run ----------------------------------------------------------

    def run(self, step_callback: StepCallback | None = None) -> TrainResult:
        cfg = self.config
        records: list[metrics.MetricsRecord] = []
        seconds = np.zeros(cfg.total_iters)
        window_start = 0
        npl_count_sum = 0.0
        npl_pairs = 0
        npl_wrong = 0
        k_last = self.dataset.num_classes
        for t in range(cfg.total_iters):
            tic = time.perf_counter()
            breakdown, summary = self.step()
            seconds[t] = time.perf_counter() - tic
            if step_callback is not None:
                step_callback(t, self.params, breakdown, summary)

            # Diagnostics over the logging window: negative-label volume and,
            # against true labels (metrics-only read), their accuracy.
            state = self._last_state
            neg = state.negative_mask
            total = int(neg.sum())
            if neg.shape[0]:
                npl_count_sum += total / neg.shape[0]
            if total:
                npl_pairs += total
                truth = self.dataset.true_labels[self._last_unlabeled]
                npl_wrong += int(neg[np.arange(neg.shape[0]), truth].sum())
            k_last = state.k

            done = t + 1
            if done % cfg.eval_interval == 0 or done == cfg.total_iters:
                window = done - window_start
                npl_window = (
                    npl_count_sum / window,
                    1.0 - npl_wrong / npl_pairs if npl_pairs else 1.0,
                    k_last,
                )
                records.append(
                    self.evaluate(metrics.step_timer(seconds[window_start:done]), npl_window)
                )
                window_start = done
                npl_count_sum = 0.0
                npl_pairs = 0
                npl_wrong = 0
            if (
                self.checkpoint_dir is not None
                and cfg.checkpoint_interval > 0
                and done % cfg.checkpoint_interval == 0
            ):
                save_checkpoint(self.params, f"{self.checkpoint_dir}/ckpt_{done}.txt")
        return TrainResult(
            params=self.params, metrics=records, step_seconds=seconds, config=cfg
        )


def train(
    config: ExperimentConfig,
    dataset: Dataset | None = None,
    threshold_provider: ThresholdProvider | None = None,
    step_callback: StepCallback | None = None,
    checkpoint_dir=None,
) -> TrainResult:
    """Run the configured experiment end to end."""
    trainer = Trainer(config, dataset, threshold_provider, checkpoint_dir)
    return trainer.run(step_callback)
