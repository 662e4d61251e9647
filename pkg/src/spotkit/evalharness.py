"""Training/evaluation procedures: hold-out, k-fold CV, early stopping.

The epoch loop tracks the best validation loss with a patience counter but
reports the LAST epoch's loss, not the best one. Training shuffles, testing
never does. A failed evaluation comes back as a non-finite EvalResult
rather than an exception so callers can map it to a penalty value.
"""
from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass

import numpy as np

from .optim import OptimizerConfig, OptimizerState, init_state, optimizer_handler, step
from .toynet import HyperConfig, SyntheticDataset, ToyNet, accuracy, generate_dataset

EVAL_SETTINGS = ("train_hold_out", "test_hold_out", "train_cv", "test_cv")

GRAD_CLIP_NORM = 1.0
HOLD_OUT_TRAIN_FRACTION = 0.6


@dataclass(frozen=True)
class EvalResult:
    loss: float
    metric: float
    epochs_run: int = 0
    stopped_early: bool = False

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.loss)


def failure_result() -> EvalResult:
    return EvalResult(loss=math.nan, metric=math.nan)


# -- splitting ---------------------------------------------------------------

def create_train_val_split(dataset: SyntheticDataset, seed: int = 0
                           ) -> tuple[SyntheticDataset, SyntheticDataset]:
    """Random 60/40 partition: floor(0.6 n) training rows, the rest validation."""
    n = len(dataset)
    if n < 5:
        raise ValueError("dataset too small to split")
    n_train = int(n * HOLD_OUT_TRAIN_FRACTION)
    order = np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


def kfold_indices(n: int, k: int, seed: int = 0, shuffle: bool = True):
    """Contiguous folds after an optional seeded permutation.

    Yields (train_idx, val_idx) pairs; every index is validated exactly
    once and fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("need k >= 2 folds")
    if k > n:
        raise ValueError("more folds than samples")
    order = (np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
             if shuffle else np.arange(n))
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    pos = 0
    for size in sizes:
        val = order[pos:pos + size]
        train = np.concatenate([order[:pos], order[pos + size:]])
        yield train, val
        pos += size


def make_batches(dataset: SyntheticDataset, batch_size: int,
                 rng: np.random.Generator | None = None):
    """Batch index plan; a trailing short batch is kept. ``rng`` shuffles."""
    n = len(dataset)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [
        (dataset.features[order[i:i + batch_size]],
         dataset.labels[order[i:i + batch_size]])
        for i in range(0, n, batch_size)
    ]


# -- single-epoch passes ------------------------------------------------------

def clip_gradient(grad: np.ndarray, max_norm: float = GRAD_CLIP_NORM) -> np.ndarray:
    """Global-norm clip; an over-norm gradient comes back at exactly max_norm."""
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def train_one_epoch(net: ToyNet, batches, opt_config: OptimizerConfig,
                    opt_state: OptimizerState, clip: float = GRAD_CLIP_NORM,
                    loss_and_grad=None) -> float:
    """One pass: per batch forward, loss, clip to ``clip``, optimizer step.

    Returns the final batch's loss. ``loss_and_grad(Xb, yb)`` defaults to
    the net's own cross-entropy and is injectable for testing.
    """
    loss_and_grad = loss_and_grad or net.loss_and_grad
    loss = math.nan
    for Xb, yb in batches:
        loss, grad = loss_and_grad(Xb, yb)
        if not math.isfinite(loss):
            return loss
        grad = clip_gradient(grad, clip)
        net.set_params(step(opt_config, opt_state, net.get_params(), grad))
    return loss


def validate_one_epoch(net: ToyNet, batches) -> tuple[float, float]:
    """Mean of per-batch losses plus the accuracy accumulated over all batches."""
    if not batches:
        raise ValueError("empty validation loader")
    total_loss = 0.0
    correct = 0
    seen = 0
    for Xb, yb in batches:
        logits = net.forward(Xb)
        loss, _ = _batch_loss(logits, yb)
        total_loss += loss
        correct += int(np.sum(np.argmax(logits, axis=1) == yb))
        seen += yb.size
    return correct / seen, total_loss / len(batches)


def _batch_loss(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -float(log_probs[np.arange(labels.size), labels].mean()), log_probs


# -- early-stopping epoch loop ------------------------------------------------

def run_training_loop(epochs: int, patience: int, train_epoch, validate_epoch,
                      on_best=None) -> EvalResult:
    """Drive train/validate callables with best-loss patience stopping.

    ``train_epoch(epoch) -> loss`` and ``validate_epoch(epoch) ->
    (metric, loss)`` are injectable so the control flow is testable with
    scripted sequences. Returns the last epoch's metric and loss.
    """
    best = math.inf
    counter = 0
    stopped = False
    loss = math.nan
    metric = math.nan
    epoch = 0
    for epoch in range(1, epochs + 1):
        train_loss = train_epoch(epoch)
        if train_loss is not None and not math.isfinite(train_loss):
            return failure_result()
        metric, loss = validate_epoch(epoch)
        if not math.isfinite(loss):
            return failure_result()
        if loss < best:
            best = loss
            counter = 0
            if on_best is not None:
                on_best()
        else:
            counter += 1
            if counter >= patience:
                stopped = True
                break
    return EvalResult(loss=loss, metric=metric, epochs_run=epoch, stopped_early=stopped)


# -- evaluation settings --------------------------------------------------------

def evaluate_hold_out(hp: HyperConfig, train_dataset: SyntheticDataset,
                      setting: str = "train_hold_out", shuffle: bool = True,
                      seed: int = 0, test_dataset: SyntheticDataset | None = None,
                      save_path: str | None = None,
                      net: ToyNet | None = None) -> EvalResult:
    """Train with epoch-level early stopping; report the last epoch's loss.

    ``train_hold_out`` splits the training data 60/40 internally;
    ``test_hold_out`` trains on all of it and validates on the explicit
    test set.
    """
    if setting not in ("train_hold_out", "test_hold_out"):
        raise ValueError(f"unsupported hold-out setting {setting!r}")
    if setting == "test_hold_out" and test_dataset is None:
        raise ValueError("test_hold_out needs an explicit test dataset")
    root = np.random.SeedSequence(seed)
    split_seed, weight_seed, shuffle_seed = (int(s.generate_state(1)[0])
                                             for s in root.spawn(3))
    if setting == "train_hold_out":
        tr, val = create_train_val_split(train_dataset, split_seed)
    else:
        tr, val = train_dataset, test_dataset
    if net is None:
        net = ToyNet(tr.input_dim, hp.l1, hp.l2, seed=weight_seed)
    try:
        opt_config = optimizer_handler(hp.optimizer, hp.lr_mult, hp.sgd_momentum)
    except ValueError:
        return failure_result()
    opt_state = init_state(opt_config, net.n_params)
    rng = np.random.default_rng(np.random.SeedSequence(shuffle_seed))

    def train_epoch(_):
        batches = make_batches(tr, hp.batch_size, rng if shuffle else None)
        return train_one_epoch(net, batches, opt_config, opt_state)

    def validate_epoch(_):
        return validate_one_epoch(net, make_batches(val, hp.batch_size))

    on_best = (lambda: save_weights(net, save_path)) if save_path else None
    return run_training_loop(hp.epochs, hp.patience, train_epoch, validate_epoch, on_best)


def evaluate_cv(hp: HyperConfig, dataset: SyntheticDataset,
                k_folds: int | None = None, shuffle: bool = True,
                seed: int = 0) -> EvalResult:
    """k-fold cross validation; per-fold last-epoch losses averaged.

    Every fold restarts from the same seeded weight initialization and a
    fresh optimizer state. A failing fold fails the whole evaluation.
    """
    k = hp.k_folds if k_folds is None else k_folds
    if k < 2:
        raise ValueError("cross validation needs k_folds >= 2")
    root = np.random.SeedSequence(seed)
    fold_seed, weight_seed, shuffle_seed = (int(s.generate_state(1)[0])
                                            for s in root.spawn(3))
    try:
        opt_template = optimizer_handler(hp.optimizer, hp.lr_mult, hp.sgd_momentum)
    except ValueError:
        return failure_result()
    losses = []
    metrics = []
    epochs_total = 0
    any_stop = False
    net = ToyNet(dataset.input_dim, hp.l1, hp.l2, seed=weight_seed)
    rng = np.random.default_rng(np.random.SeedSequence(shuffle_seed))
    for train_idx, val_idx in kfold_indices(len(dataset), k, fold_seed, shuffle):
        net.reset_weights(weight_seed)
        opt_state = init_state(opt_template, net.n_params)
        tr = dataset.subset(train_idx)
        val = dataset.subset(val_idx)

        def train_epoch(_):
            batches = make_batches(tr, hp.batch_size, rng if shuffle else None)
            return train_one_epoch(net, batches, opt_template, opt_state)

        def validate_epoch(_):
            return validate_one_epoch(net, make_batches(val, hp.batch_size))

        res = run_training_loop(hp.epochs, hp.patience, train_epoch, validate_epoch)
        if res.failed:
            return failure_result()
        losses.append(res.loss)
        metrics.append(res.metric)
        epochs_total += res.epochs_run
        any_stop = any_stop or res.stopped_early
    return EvalResult(
        loss=float(np.mean(losses)), metric=float(np.mean(metrics)),
        epochs_run=epochs_total, stopped_early=any_stop,
    )


def evaluate(hp: HyperConfig, setting: str, train_dataset: SyntheticDataset,
             test_dataset: SyntheticDataset | None = None, shuffle: bool = True,
             seed: int = 0) -> EvalResult:
    """Dispatch one configuration to the requested evaluation setting."""
    if setting in ("train_hold_out", "test_hold_out"):
        return evaluate_hold_out(hp, train_dataset, setting, shuffle, seed, test_dataset)
    if setting == "train_cv":
        return evaluate_cv(hp, train_dataset, shuffle=shuffle, seed=seed)
    if setting == "test_cv":
        if test_dataset is None:
            raise ValueError("test_cv needs a test dataset")
        return evaluate_cv(hp, test_dataset, shuffle=shuffle, seed=seed)
    raise ValueError(f"unknown evaluation setting {setting!r}")


# -- final train/test of a tuned configuration ---------------------------------

def train_tuned(hp: HyperConfig, train_dataset: SyntheticDataset, seed: int = 0,
                save_path: str | None = None, net: ToyNet | None = None) -> EvalResult:
    """Hold-out training of the tuned architecture, checkpointing each new best."""
    return evaluate_hold_out(
        hp, train_dataset, "train_hold_out", shuffle=True, seed=seed,
        save_path=save_path, net=net,
    )


def test_tuned(hp: HyperConfig, test_dataset: SyntheticDataset,
               weights_path: str | None = None,
               net: ToyNet | None = None) -> EvalResult:
    """Single unshuffled validation pass over the full test set."""
    if net is None:
        if weights_path is None:
            raise ValueError("test_tuned needs trained weights (path or net)")
        net = load_weights(weights_path)
    metric, loss = validate_one_epoch(net, make_batches(test_dataset, hp.batch_size))
    return EvalResult(loss=loss, metric=metric, epochs_run=0, stopped_early=False)


# -- weight checkpoints ----------------------------------------------------------

def save_weights(net: ToyNet, path: str) -> None:
    doc = {
        "input_dim": net.input_dim,
        "l1": net.l1,
        "l2": net.l2,
        "weights": net.get_params().tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_weights(path: str) -> ToyNet:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        net = ToyNet(doc["input_dim"], doc["l1"], doc["l2"])
        net.set_params(np.asarray(doc["weights"], dtype=float))
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as err:
        raise ValueError(f"unreadable weights file {path!r}: {err}") from err
    return net


# -- out-of-process evaluators -----------------------------------------------------

def external_evaluate(command: str, config: dict, timeout: float = 60.0) -> EvalResult:
    """Run ``command`` as an evaluator child process.

    Wire protocol: one JSON request line ``{"config": {...}}`` on stdin,
    one JSON reply line ``{"loss": r, "metric": r}`` on stdout. Timeouts,
    malformed replies and nonzero exits all map to a failure result.
    """
    request = json.dumps({"config": config}) + "\n"
    try:
        proc = subprocess.run(
            shlex.split(command), input=request, capture_output=True,
            text=True, timeout=timeout,
        )
    except (OSError, ValueError, subprocess.TimeoutExpired):
        return failure_result()
    if proc.returncode != 0:
        return failure_result()
    line = proc.stdout.strip().splitlines()
    if not line:
        return failure_result()
    try:
        reply = json.loads(line[0])
        loss = float(reply["loss"])
        metric = float(reply.get("metric", math.nan))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        return failure_result()
    return EvalResult(loss=loss, metric=metric)


# -- built-in objective over the toy classifier -------------------------------------

def make_toy_objective(eval_setting: str = "train_hold_out", data_seed: int = 7,
                       eval_seed: int = 0, n: int = 1000, input_dim: int = 20,
                       shuffle: bool = True):
    """Objective closure mapping a configuration dict to an EvalResult."""
    if eval_setting not in EVAL_SETTINGS:
        raise ValueError(f"unknown evaluation setting {eval_setting!r}")
    train, test = generate_dataset(n, input_dim, data_seed)

    def objective(config: dict) -> EvalResult:
        hp = HyperConfig.from_config(config)
        return evaluate(hp, eval_setting, train, test, shuffle, eval_seed)

    return objective
