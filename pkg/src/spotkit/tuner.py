"""Sequential surrogate-guided tuning loop.

Evaluate an optional start point and the full initial design, then
alternate: fit the Kriging surrogate on everything seen, propose the
points minimizing its predicted mean, de-duplicate, evaluate, append.
Stops on the evaluation budget or the wall-time budget (checked between
evaluations; the initial design always runs to completion).
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import surrogate as sg
from .design import DesignControl, latin_hypercube
from .searchspace import SearchSpace

DEFAULT_TOLERANCE_X = float(np.sqrt(np.spacing(1.0)))


@dataclass(frozen=True)
class TunerConfig:
    fun_evals: float = math.inf      # total evaluation budget (inf allowed)
    fun_repeats: int = 1
    max_time: float = math.inf       # minutes
    noise: bool = False
    tolerance_x: float = DEFAULT_TOLERANCE_X
    infill_criterion: str = "y"
    n_points: int = 1
    seed: int = 123

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.fun_repeats < 1:
            raise ValueError("fun_repeats must be >= 1")
        if self.tolerance_x < 0:
            raise ValueError("tolerance_x must be >= 0")
        if self.infill_criterion != "y":
            raise ValueError("only the predicted-mean criterion 'y' is supported")
        if not (self.fun_evals >= 1):
            raise ValueError("fun_evals must be >= 1")
        if math.isinf(self.fun_evals) and math.isinf(self.max_time):
            raise ValueError("need a finite fun_evals or max_time budget")


@dataclass
class RunState:
    """Everything observed so far; JSON round-trippable for crash recovery."""

    X: list = field(default_factory=list)          # full internal vectors
    y: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    phases: list = field(default_factory=list)     # "initial" | "sequential"
    elapsed: list = field(default_factory=list)    # wall seconds per evaluation
    elapsed_total: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def best_index(self) -> int:
        if not self.y:
            raise ValueError("empty run state")
        return int(np.argmin(self.y))

    @property
    def best_y(self) -> float:
        return float(self.y[self.best_index])

    @property
    def n_initial(self) -> int:
        return sum(1 for p in self.phases if p == "initial")

    def append(self, vec: np.ndarray, loss: float, metric: float, phase: str,
               seconds: float) -> None:
        self.X.append(np.asarray(vec, dtype=float))
        self.y.append(float(loss))
        self.metrics.append(float(metric))
        self.phases.append(phase)
        self.elapsed.append(float(seconds))
        self.elapsed_total += float(seconds)

    def history(self) -> list[dict]:
        return [
            {"iteration": i + 1, "phase": self.phases[i], "y": self.y[i],
             "metric": self.metrics[i], "elapsed_s": self.elapsed[i]}
            for i in range(len(self.y))
        ]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "meta": self.meta,
            "X": [list(map(float, row)) for row in self.X],
            "y": list(self.y),
            "metrics": list(self.metrics),
            "phases": list(self.phases),
            "elapsed": list(self.elapsed),
            "elapsed_total": self.elapsed_total,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunState":
        try:
            state = cls(
                X=[np.asarray(row, dtype=float) for row in doc["X"]],
                y=[float(v) for v in doc["y"]],
                metrics=[float(v) for v in doc["metrics"]],
                phases=list(doc["phases"]),
                elapsed=[float(v) for v in doc["elapsed"]],
                elapsed_total=float(doc["elapsed_total"]),
                meta=dict(doc.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ValueError(f"corrupt run state: {err}") from err
        if not (len(state.X) == len(state.y) == len(state.phases)
                == len(state.metrics) == len(state.elapsed)):
            raise ValueError("corrupt run state: column lengths differ")
        return state


def best(state: RunState, space: SearchSpace) -> tuple[dict, float]:
    """Natural-unit configuration of the argmin loss (earliest on ties)."""
    idx = state.best_index
    return space.from_internal(state.X[idx]), float(state.y[idx])


def worst_sentinel(ys) -> float:
    """Finite stand-in for a failed evaluation, clearly worse than anything seen."""
    finite = [v for v in ys if math.isfinite(v)]
    if not finite:
        return 1e12
    m = max(finite)
    span = abs(m) if m != 0.0 else 1.0
    return m + 9.0 * span


def _child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
               .generate_state(1)[0])


def _embed_active(space: SearchSpace, v_active: np.ndarray) -> np.ndarray:
    full = space.default_internal()
    full[space.active_mask] = v_active
    return space.clip_internal(full)


def _max_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if len(a) else math.inf


def _random_full_point(space: SearchSpace, rng: np.random.Generator) -> np.ndarray:
    unit = rng.random((1, space.n_active))
    return space.embed_unit(unit)[0]


def suggest_next(state: RunState, model: sg.KrigingModel, space: SearchSpace,
                 n_points: int = 1, budget: int = 1000, seed: int = 0,
                 tolerance_x: float = 0.0) -> np.ndarray:
    """Candidates minimizing the surrogate mean over the active box.

    Random multistart probes take half the budget, local simplex
    refinement on the continuous relaxation the rest; integer and factor
    coordinates snap to their lattice before returning. Candidates are
    mutually distinct beyond ``tolerance_x`` in max-norm where possible.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    active = space.active
    lo = np.array([p.lower for p in active])
    hi = np.array([p.upper for p in active])
    d = len(active)

    n_probe = max(2 * n_points, budget // 2)
    probes = rng.uniform(lo, hi, size=(n_probe, d))
    mu = model.predict_batch(probes)[0]
    order = np.argsort(mu, kind="stable")

    pool: list[tuple[float, np.ndarray]] = []
    remaining = budget - n_probe
    min_fev = 3 * (d + 1)
    n_starts = max(n_points, 3)
    if remaining >= min_fev:
        per_start = max(min_fev, remaining // n_starts)
        for i in order[:n_starts]:
            fev = min(per_start, remaining)
            if fev < min_fev:
                break
            res = minimize(
                lambda v: float(model.predict_batch(v[None, :])[0][0]),
                probes[i], method="Nelder-Mead",
                bounds=list(zip(lo, hi)),
                options={"maxfev": fev, "xatol": 1e-8, "fatol": 1e-12},
            )
            remaining -= res.nfev
            pool.append((float(res.fun), np.clip(res.x, lo, hi)))
            if remaining < min_fev:
                break
    pool.extend((float(mu[i]), probes[i]) for i in order)
    pool.sort(key=lambda t: t[0])

    chosen: list[np.ndarray] = []
    for _, v in pool:
        cand = _embed_active(space, v)
        if all(_max_norm(cand, c) > tolerance_x for c in chosen):
            chosen.append(cand)
        if len(chosen) == n_points:
            break
    tries = 0
    while len(chosen) < n_points and tries < 200:
        cand = _random_full_point(space, rng)
        if all(_max_norm(cand, c) > tolerance_x for c in chosen):
            chosen.append(cand)
        tries += 1
    while len(chosen) < n_points:      # tiny lattices may admit no more
        chosen.append(_random_full_point(space, rng))
    return np.asarray(chosen)


def _replace_duplicates(cands: np.ndarray, state: RunState, space: SearchSpace,
                        tolerance_x: float, rng: np.random.Generator) -> np.ndarray:
    """Swap any proposal within tolerance of history (or siblings) for a fresh
    random point."""
    if tolerance_x <= 0:
        return cands
    out: list[np.ndarray] = []
    for cand in cands:
        ok = (all(_max_norm(cand, row) > tolerance_x for row in state.X)
              and all(_max_norm(cand, c) > tolerance_x for c in out))
        tries = 0
        while not ok and tries < 200:
            cand = _random_full_point(space, rng)
            ok = (all(_max_norm(cand, row) > tolerance_x for row in state.X)
                  and all(_max_norm(cand, c) > tolerance_x for c in out))
            tries += 1
        out.append(cand)
    return np.asarray(out)


def run(objective, space: SearchSpace, tuner: TunerConfig | None = None,
        design: DesignControl | None = None,
        surrogate_control: sg.SurrogateControl | None = None,
        X_start: dict | None = None, out_dir: str | None = None,
        state: RunState | None = None, meta: dict | None = None,
        infill_budget: int | None = None) -> RunState:
    """Execute (or resume) the tuning loop; returns the final run state.

    A failed evaluation is recorded at a finite worst-case penalty and the
    loop continues. With ``out_dir`` set, ``run_state.json`` and
    ``events.csv`` are rewritten atomically after every evaluation.
    """
    tuner = tuner or TunerConfig()
    design = design or DesignControl()
    surrogate_control = surrogate_control or sg.SurrogateControl()
    if space.n_active < 1:
        raise ValueError("search space has no active dimensions")
    if infill_budget is None:
        infill_budget = 200 + 100 * space.n_active

    state = state if state is not None else RunState()
    if meta:
        state.meta = dict(meta)
    writer = _RunWriter(out_dir, space) if out_dir else None
    started = time.monotonic()
    budget_consumed = state.elapsed_total

    def elapsed_minutes() -> float:
        return (budget_consumed + (time.monotonic() - started)) / 60.0

    def evaluate(vec: np.ndarray, phase: str) -> None:
        t0 = time.monotonic()
        config = space.from_internal(vec)
        try:
            result = objective(config)
            loss = float(result.loss)
            metric = float(result.metric)
        except Exception:
            loss, metric = math.nan, math.nan
        if not math.isfinite(loss):
            loss = worst_sentinel(state.y)
        state.append(vec, loss, metric, phase, time.monotonic() - t0)
        if writer:
            writer.write(state)

    # -- initial phase: start point plus the whole design, no time checks
    n_initial_target = (1 if X_start is not None else 0) + design.init_size * design.repeats
    if state.n_initial < n_initial_target:
        done = state.n_initial
        if X_start is not None and done == 0:
            evaluate(space.to_internal(X_start), "initial")
            done += 1
        design_done = done - (1 if X_start is not None else 0)
        unit = latin_hypercube(design, space.n_active)
        for row in space.embed_unit(unit)[design_done:]:
            evaluate(row, "initial")

    # -- sequential phase
    while len(state) < tuner.fun_evals and elapsed_minutes() < tuner.max_time:
        k = len(state) - state.n_initial      # stable across resumes
        X_all = np.asarray(state.X)
        X_active = X_all[:, space.active_mask]
        model = None
        if len(state) >= 2:
            try:
                model = sg.fit(X_active, np.asarray(state.y), surrogate_control,
                               seed=_child_seed(tuner.seed, 1, k))
            except (ValueError, sg.FitError):
                model = None
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=tuner.seed, spawn_key=(3, k)))
        if model is not None:
            cands = suggest_next(
                state, model, space, tuner.n_points, infill_budget,
                seed=_child_seed(tuner.seed, 2, k), tolerance_x=tuner.tolerance_x,
            )
        else:
            cands = np.asarray([_random_full_point(space, rng)
                                for _ in range(tuner.n_points)])
        cands = _replace_duplicates(cands, state, space, tuner.tolerance_x, rng)
        for cand in cands:
            for _ in range(tuner.fun_repeats):
                if len(state) >= tuner.fun_evals or elapsed_minutes() >= tuner.max_time:
                    return state
                evaluate(cand, "sequential")
    return state


def random_search(objective, space: SearchSpace, n_evals: int, seed: int = 0) -> RunState:
    """Uniform-sampling baseline with the same decoding as the tuner."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    state = RunState()
    for _ in range(n_evals):
        vec = _random_full_point(space, rng)
        t0 = time.monotonic()
        config = space.from_internal(vec)
        try:
            result = objective(config)
            loss = float(result.loss)
            metric = float(result.metric)
        except Exception:
            loss, metric = math.nan, math.nan
        if not math.isfinite(loss):
            loss = worst_sentinel(state.y)
        state.append(vec, loss, metric, "random", time.monotonic() - t0)
    return state


# -- persistence ---------------------------------------------------------------

def atomic_write(path: str, data: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def events_csv(state: RunState, space: SearchSpace) -> str:
    """Deterministic per-evaluation event log.

    Columns are a pure function of the run content (no wall-clock values),
    so identical seeds yield byte-identical logs; timings live in
    ``run_state.json``.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "phase", "loss", "metric", "config"])
    for i in range(len(state)):
        config = space.from_internal(state.X[i])
        writer.writerow([
            i + 1, state.phases[i], repr(state.y[i]), repr(state.metrics[i]),
            json.dumps(config, separators=(",", ":")),
        ])
    return buf.getvalue()


class _RunWriter:
    def __init__(self, out_dir: str, space: SearchSpace):
        self.out_dir = out_dir
        self.space = space
        os.makedirs(out_dir, exist_ok=True)

    def write(self, state: RunState) -> None:
        atomic_write(os.path.join(self.out_dir, "run_state.json"),
                     json.dumps(state.to_dict()))
        atomic_write(os.path.join(self.out_dir, "events.csv"),
                     events_csv(state, self.space))


def load_run_state(out_dir: str) -> RunState:
    path = os.path.join(out_dir, "run_state.json")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise FileNotFoundError(f"no run state at {path}") from err
    except json.JSONDecodeError as err:
        raise ValueError(f"corrupt run state at {path}: {err}") from err
    return RunState.from_dict(doc)
