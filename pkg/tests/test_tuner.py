import math

import numpy as np
import pytest

from spotkit.design import DesignControl
from spotkit.evalharness import EvalResult
from spotkit.searchspace import ParamSpec, SearchSpace
from spotkit.surrogate import SurrogateControl, fit
from spotkit.tuner import (
    RunState, TunerConfig, best, events_csv, load_run_state, random_search,
    run, suggest_next, worst_sentinel,
)


def float_space(dims, lo=-1.0, hi=1.0):
    return SearchSpace(tuple(
        ParamSpec(name=f"x{i}", kind="float", default=0.0, lower=lo, upper=hi)
        for i in range(dims)
    ))


def sphere(config):
    return EvalResult(loss=sum(v * v for v in config.values()), metric=math.nan)


FAST_SURROGATE = SurrogateControl(model_fun_evals=300)


class TestRunBudgets:
    def test_budget_boundary_no_sequential(self):
        state = run(sphere, float_space(2),
                    TunerConfig(fun_evals=10, seed=0),
                    DesignControl(init_size=10, seed=1), FAST_SURROGATE)
        assert len(state) == 10
        assert state.phases == ["initial"] * 10

    def test_initial_design_runs_even_when_time_exhausted(self):
        state = run(sphere, float_space(2),
                    TunerConfig(fun_evals=30, max_time=0.0, seed=0),
                    DesignControl(init_size=10, seed=1), FAST_SURROGATE)
        assert len(state) == 10          # design always completes; loop never starts
        assert all(p == "initial" for p in state.phases)

    def test_x_start_evaluated_first(self):
        space = float_space(2)
        start = {"x0": 0.25, "x1": -0.5}
        state = run(sphere, space, TunerConfig(fun_evals=11, seed=0),
                    DesignControl(init_size=10, seed=1), FAST_SURROGATE,
                    X_start=start)
        assert len(state) == 11
        np.testing.assert_allclose(state.X[0], [0.25, -0.5])
        assert state.y[0] == pytest.approx(0.25 ** 2 + 0.5 ** 2)

    def test_sequential_phase_tagged(self):
        state = run(sphere, float_space(2), TunerConfig(fun_evals=14, seed=0),
                    DesignControl(init_size=10, seed=1), FAST_SURROGATE)
        assert state.phases[:10] == ["initial"] * 10
        assert state.phases[10:] == ["sequential"] * 4


class TestRunBehaviour:
    def test_best_so_far_non_increasing(self):
        state = run(sphere, float_space(3), TunerConfig(fun_evals=25, seed=3),
                    DesignControl(init_size=8, seed=2), FAST_SURROGATE)
        best_so_far = np.minimum.accumulate(state.y)
        assert np.all(np.diff(best_so_far) <= 0)

    def test_all_rows_in_bounds_fixed_dims_pinned(self):
        space = SearchSpace((
            ParamSpec(name="a", kind="float", default=0.0, lower=-1.0, upper=1.0),
            ParamSpec(name="b", kind="float", default=0.5, lower=0.5, upper=0.5),
            ParamSpec(name="n", kind="int", default=2, lower=1.0, upper=4.0),
        ))
        state = run(sphere, space, TunerConfig(fun_evals=18, seed=1),
                    DesignControl(init_size=6, seed=3), FAST_SURROGATE)
        X = np.asarray(state.X)
        assert np.all(X[:, 0] >= -1.0) and np.all(X[:, 0] <= 1.0)
        assert np.all(X[:, 1] == 0.5)
        assert np.all((X[:, 2] >= 1) & (X[:, 2] <= 4))
        assert np.all(X[:, 2] == np.round(X[:, 2]))

    def test_reproducible_history(self):
        kw = dict(tuner=TunerConfig(fun_evals=16, seed=11),
                  design=DesignControl(init_size=6, seed=4),
                  surrogate_control=FAST_SURROGATE)
        a = run(sphere, float_space(2), **kw)
        b = run(sphere, float_space(2), **kw)
        assert a.y == b.y
        assert all(np.array_equal(p, q) for p, q in zip(a.X, b.X))

    def test_pairwise_distinct_rows(self):
        tol = 1e-8
        state = run(sphere, float_space(2),
                    TunerConfig(fun_evals=20, seed=5, tolerance_x=tol),
                    DesignControl(init_size=8, seed=6), FAST_SURROGATE)
        X = np.asarray(state.X)
        for i in range(len(X)):
            for j in range(i + 1, len(X)):
                assert np.max(np.abs(X[i] - X[j])) > tol

    def test_objective_exception_maps_to_sentinel(self):
        calls = {"n": 0}

        def flaky(config):
            calls["n"] += 1
            if calls["n"] == 3:
                raise RuntimeError("boom")
            return sphere(config)

        state = run(flaky, float_space(2), TunerConfig(fun_evals=12, seed=2),
                    DesignControl(init_size=8, seed=7), FAST_SURROGATE)
        assert len(state) == 12
        assert all(math.isfinite(v) for v in state.y)
        assert state.y[2] == pytest.approx(worst_sentinel(state.y[:2]))

    def test_nan_loss_maps_to_sentinel(self):
        def sometimes_nan(config):
            if config["x0"] > 0:
                return EvalResult(loss=math.nan, metric=math.nan)
            return sphere(config)

        state = run(sometimes_nan, float_space(1),
                    TunerConfig(fun_evals=12, seed=2),
                    DesignControl(init_size=8, seed=7), FAST_SURROGATE)
        assert all(math.isfinite(v) for v in state.y)

    def test_beats_random_search_on_sphere(self):
        state = run(sphere, float_space(2), TunerConfig(fun_evals=50, seed=21),
                    DesignControl(init_size=10, seed=8), FAST_SURROGATE)
        assert state.best_y <= 1e-2
        # independent oracle: median of 20 seeded random searches, same budget
        medians = [random_search(sphere, float_space(2), 50, seed=s).best_y
                   for s in range(20)]
        assert state.best_y <= float(np.median(medians))


class TestFunRepeats:
    def test_repeats_stored_as_separate_rows(self):
        # noisy-objective workflow: repeated proposals need a nugget model
        state = run(sphere, float_space(2),
                    TunerConfig(fun_evals=14, fun_repeats=2, seed=4),
                    DesignControl(init_size=8, seed=3),
                    SurrogateControl(noise=True, model_fun_evals=300))
        assert len(state) == 14
        seq = np.asarray(state.X[8:])
        assert np.array_equal(seq[0], seq[1])     # one proposal, two rows
        assert state.y[8] == state.y[9]           # deterministic objective

    def test_design_repeats_duplicate_rows(self):
        state = run(sphere, float_space(2),
                    TunerConfig(fun_evals=8, seed=4),
                    DesignControl(init_size=4, repeats=2, seed=3),
                    SurrogateControl(noise=True, model_fun_evals=200))
        X = np.asarray(state.X)
        assert len(X) == 8
        assert np.array_equal(X[0], X[1])


class TestDuplicateReplacement:
    def test_duplicate_proposal_replaced_with_distant_point(self):
        from spotkit.tuner import _replace_duplicates

        space = float_space(2)
        tol = 1e-8
        state = RunState()
        rng = np.random.default_rng(0)
        for _ in range(5):
            state.append(rng.uniform(-1, 1, 2), 0.0, math.nan, "initial", 0.0)
        dup = np.asarray([state.X[2].copy()])     # proposal collides exactly
        out = _replace_duplicates(dup, state, space, tol, np.random.default_rng(1))
        assert out.shape == (1, 2)
        for row in state.X:
            assert np.max(np.abs(out[0] - row)) > tol

    def test_distinct_proposal_kept_verbatim(self):
        from spotkit.tuner import _replace_duplicates

        space = float_space(2)
        state = RunState()
        state.append(np.array([0.9, 0.9]), 0.0, math.nan, "initial", 0.0)
        cand = np.asarray([[0.1, -0.2]])
        out = _replace_duplicates(cand, state, space, 1e-8, np.random.default_rng(1))
        np.testing.assert_array_equal(out, cand)


class TestWorstSentinel:
    def test_empty_history(self):
        assert worst_sentinel([]) == 1e12

    def test_positive_history_times_ten(self):
        assert worst_sentinel([0.5, 2.0]) == pytest.approx(20.0)

    def test_negative_history_still_worse(self):
        s = worst_sentinel([-5.0, -2.0])
        assert s > -2.0


class TestSuggestNext:
    def test_finds_parabola_minimum(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 1, size=(15, 1))
        y = (X[:, 0] - 0.7) ** 2
        model = fit(X, y, FAST_SURROGATE, seed=0)
        space = float_space(1, 0.0, 1.0)
        state = RunState()
        cands = suggest_next(state, model, space, n_points=1, budget=600, seed=1)
        # dense-grid oracle on the surrogate mean itself
        grid = np.linspace(0, 1, 2001)[:, None]
        oracle = grid[int(np.argmin(model.predict_batch(grid)[0])), 0]
        assert abs(cands[0][0] - oracle) <= 0.05
        assert abs(cands[0][0] - 0.7) <= 0.05

    def test_three_mutually_distinct(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, size=(12, 2))
        y = X[:, 0] ** 2 + X[:, 1] ** 2
        model = fit(X, y, FAST_SURROGATE, seed=0)
        cands = suggest_next(RunState(), model, float_space(2), n_points=3,
                             budget=500, seed=2, tolerance_x=1e-8)
        assert len(cands) == 3
        for i in range(3):
            for j in range(i + 1, 3):
                assert np.max(np.abs(cands[i] - cands[j])) > 1e-8

    def test_only_active_dim_varies(self):
        space = SearchSpace((
            ParamSpec(name="a", kind="float", default=0.3, lower=0.3, upper=0.3),
            ParamSpec(name="x", kind="float", default=0.0, lower=-1.0, upper=1.0),
            ParamSpec(name="c", kind="float", default=-2.0, lower=-2.0, upper=-2.0),
        ))
        rng = np.random.default_rng(2)
        Xa = rng.uniform(-1, 1, size=(10, 1))
        model = fit(Xa, Xa[:, 0] ** 2, FAST_SURROGATE, seed=0)
        cands = suggest_next(RunState(), model, space, n_points=4, budget=400,
                             seed=3, tolerance_x=1e-9)
        arr = np.asarray(cands)
        assert np.all(arr[:, 0] == 0.3)
        assert np.all(arr[:, 2] == -2.0)
        assert len(np.unique(arr[:, 1])) == 4


class TestBest:
    def test_argmin(self):
        state = RunState()
        space = float_space(1)
        for v, y in [(0.1, 3.0), (0.2, 1.0), (0.3, 2.0)]:
            state.append(np.array([v]), y, math.nan, "initial", 0.0)
        config, loss = best(state, space)
        assert loss == 1.0
        assert config == {"x0": 0.2}

    def test_tie_earliest_wins(self):
        state = RunState()
        space = float_space(1)
        state.append(np.array([0.5]), 1.0, math.nan, "initial", 0.0)
        state.append(np.array([-0.5]), 1.0, math.nan, "initial", 0.0)
        config, _ = best(state, space)
        assert config == {"x0": 0.5}

    def test_empty_state_rejected(self):
        with pytest.raises(ValueError):
            best(RunState(), float_space(1))


class TestPersistence:
    def test_run_state_round_trip(self, tmp_path):
        state = run(sphere, float_space(2), TunerConfig(fun_evals=12, seed=0),
                    DesignControl(init_size=8, seed=1), FAST_SURROGATE,
                    out_dir=str(tmp_path), meta={"tag": "t"})
        loaded = load_run_state(str(tmp_path))
        assert loaded.y == state.y
        assert loaded.meta == {"tag": "t"}
        assert loaded.phases == state.phases

    def test_events_csv_deterministic_columns(self, tmp_path):
        space = float_space(2)
        state = run(sphere, space, TunerConfig(fun_evals=12, seed=0),
                    DesignControl(init_size=8, seed=1), FAST_SURROGATE)
        text = events_csv(state, space)
        header = text.splitlines()[0]
        assert header == "iteration,phase,loss,metric,config"
        assert len(text.splitlines()) == 13
        row = text.splitlines()[1].split(",", 3)
        assert row[0] == "1"
        assert row[1] == "initial"

    def test_corrupt_state_rejected(self, tmp_path):
        (tmp_path / "run_state.json").write_text("{not json")
        with pytest.raises(ValueError, match="corrupt"):
            load_run_state(str(tmp_path))

    def test_missing_state_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_state(str(tmp_path / "void"))

    def test_resume_extends_history(self):
        kw = dict(tuner=TunerConfig(fun_evals=14, seed=9),
                  design=DesignControl(init_size=6, seed=2),
                  surrogate_control=FAST_SURROGATE)
        full = run(sphere, float_space(2), **kw)
        part = run(sphere, float_space(2),
                   tuner=TunerConfig(fun_evals=9, seed=9),
                   design=DesignControl(init_size=6, seed=2),
                   surrogate_control=FAST_SURROGATE)
        resumed = run(sphere, float_space(2), state=part, **kw)
        assert len(resumed) == 14
        assert resumed.y == full.y

    def test_resume_mid_design_finishes_it(self):
        kw = dict(tuner=TunerConfig(fun_evals=12, seed=9),
                  design=DesignControl(init_size=8, seed=2),
                  surrogate_control=FAST_SURROGATE)
        full = run(sphere, float_space(2), **kw)
        cut = RunState()
        for i in range(3):          # crash three rows into the design
            cut.append(full.X[i], full.y[i], full.metrics[i], "initial", 0.0)
        resumed = run(sphere, float_space(2), state=cut, **kw)
        assert resumed.y == full.y
        assert resumed.phases == full.phases

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TunerConfig(n_points=0)
        with pytest.raises(ValueError):
            TunerConfig(infill_criterion="ei")
        with pytest.raises(ValueError):
            TunerConfig(fun_evals=math.inf, max_time=math.inf)
        with pytest.raises(ValueError):
            TunerConfig(tolerance_x=-1.0)


def test_random_search_budget_and_bounds():
    space = float_space(3)
    state = random_search(sphere, space, 25, seed=4)
    assert len(state) == 25
    X = np.asarray(state.X)
    assert np.all((X >= -1.0) & (X <= 1.0))


def test_atomic_write_replaces_without_leftovers(tmp_path):
    from spotkit.tuner import atomic_write

    target = tmp_path / "state.json"
    atomic_write(str(target), "first")
    atomic_write(str(target), "second")
    assert target.read_text() == "second"
    assert [p.name for p in tmp_path.iterdir()] == ["state.json"]
