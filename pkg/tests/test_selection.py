import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import make_library
from pdekd.baselines import BaselineConfig, fit_pointwise
from pdekd.errors import ConfigError, ValidationError
from pdekd.kernel_model import KernelConfig, build_kernel_graph
from pdekd.selection import DiscoveredPDE, SelectionConfig, aic_score, discover, eliminate_one


def pointwise(lib, active):
    return fit_pointwise(lib, BaselineConfig(ridge=0.0), active)


def _problem(seed=0, n_blocks=20, per_block=10, k=4, true=(0, 2), noise=0.01):
    rng = np.random.default_rng(seed)
    coords = np.column_stack([np.arange(n_blocks, dtype=float), np.zeros(n_blocks)])
    bi = np.repeat(np.arange(n_blocks), per_block)
    X = rng.normal(size=(bi.size, k))
    coef = np.zeros(k)
    coef[list(true)] = [1.5, -0.8][: len(true)]
    y = X @ coef + noise * rng.normal(size=bi.size)
    return make_library(X, y, bi, coords)


class TestScore:
    def test_literal_example(self):
        assert aic_score(2, 1.0, 10, "literal") == pytest.approx(4.0)

    def test_standard_example(self):
        assert aic_score(2, 10.0, 10) == pytest.approx(4.0)

    @given(st.integers(1, 20), st.floats(1e-6, 1e6), st.floats(1.001, 10.0))
    def test_monotone_in_residual(self, k, rss, factor):
        assert aic_score(k, rss * factor, 100) > aic_score(k, rss, 100)
        assert aic_score(k + 1, rss, 100) > aic_score(k, rss, 100)

    def test_zero_residual_is_clamped_and_counted(self):
        diag = {}
        s = aic_score(1, 0.0, 5, diagnostics=diag)
        assert math.isfinite(s)
        assert diag["aic_clamps"] == 1

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            aic_score(1, 1.0, 1, "bic")


class TestConfig:
    def test_L_below_priors(self):
        with pytest.raises(ConfigError):
            SelectionConfig(L=1, priors=("u_x", "u_y"))

    def test_L_above_library(self):
        with pytest.raises(ConfigError) as info:
            discover(_problem(), None, SelectionConfig(L=5), fitter=pointwise)
        assert info.value.key == "L"

    def test_unknown_prior(self):
        with pytest.raises(ConfigError):
            discover(_problem(), None, SelectionConfig(L=2, priors=("u_t",)), fitter=pointwise)


class TestElimination:
    def test_noise_column_removed_first(self):
        lib = _problem()
        removed, coef, _ = eliminate_one(lib, pointwise, range(4), ())
        assert removed in (1, 3)
        assert len(coef.active) == 3

    def test_recovers_true_terms(self):
        res = discover(_problem(), None, SelectionConfig(L=2), fitter=pointwise)
        assert res.terms == ("u_x", "u_xx")

    def test_kernel_estimator_recovers_true_terms(self):
        lib = _problem()
        cfg = KernelConfig(radius=2.0)
        res = discover(lib, build_kernel_graph(lib, cfg), SelectionConfig(L=2), cfg)
        assert res.terms == ("u_x", "u_xx")
        assert res.config["kernel"]["radius"] == 2.0

    def test_exact_tie_removes_later_term(self):
        rng = np.random.default_rng(1)
        bi = np.repeat(np.arange(5), 8)
        a = rng.normal(size=bi.size)
        X = np.column_stack([a, a, rng.normal(size=bi.size)])
        lib = make_library(X, 2 * a, bi, np.arange(5.0)[:, None])
        removed, _, _ = eliminate_one(lib, lambda l, act: fit_pointwise(l, BaselineConfig(ridge=1e-6), act),
                                      (0, 1), ())
        assert removed == 1

    def test_priors_are_kept(self):
        res = discover(_problem(), None, SelectionConfig(L=2, priors=("u_y",)), fitter=pointwise)
        assert "u_y" in res.terms
        assert len(res.terms) == 2

    def test_all_priors_cannot_eliminate(self):
        lib = _problem()
        with pytest.raises(ValidationError):
            eliminate_one(lib, pointwise, (0, 1), (0, 1))

    def test_L_equal_to_library_size(self):
        res = discover(_problem(), None, SelectionConfig(L=4), fitter=pointwise)
        assert len(res.terms) == 4 and res.trace == ()

    def test_trace_length(self):
        res = discover(_problem(k=6), None, SelectionConfig(L=2), fitter=pointwise)
        assert len(res.trace) == 4
        assert [len(s.active) for s in res.trace] == [5, 4, 3, 2]

    def test_deterministic(self):
        a = discover(_problem(k=5), None, SelectionConfig(L=2), fitter=pointwise)
        b = discover(_problem(k=5), None, SelectionConfig(L=2), fitter=pointwise)
        assert a.terms == b.terms
        assert [s.aic for s in a.trace] == [s.aic for s in b.trace]

    def test_auto_stop_picks_best_dev_iterate(self):
        lib, dev = _problem(seed=0, k=5), _problem(seed=1, k=5)
        res = discover(lib, None, SelectionConfig(L=1, auto_stop=True), dev_lib=dev, fitter=pointwise)
        assert set(res.terms) >= {"u_x", "u_xx"}
        assert len(res.trace) == 5 - len(res.terms)

    def test_auto_stop_needs_dev(self):
        with pytest.raises(ConfigError):
            discover(_problem(), None, SelectionConfig(auto_stop=True), fitter=pointwise)


def test_json_round_trip(tmp_path):
    res = discover(_problem(), None, SelectionConfig(L=2), fitter=pointwise)
    path = res.to_json(tmp_path, "u_t")
    back = DiscoveredPDE.from_json(path)
    assert back.terms == res.terms
    assert back.active == res.active
    assert np.array_equal(back.coefficients.xi, res.coefficients.xi)
    assert [s.removed for s in back.trace] == [s.removed for s in res.trace]
    assert back.equation() == res.equation()


def test_from_json_rejects_other_documents(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    with pytest.raises(ValidationError):
        DiscoveredPDE.from_json(p)
