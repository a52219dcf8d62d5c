import numpy as np
import pytest

from pdekd.generators import (
    Bundle,
    dataset_config,
    gen_burgers2d,
    gen_chafee_infante,
    gen_kdv,
    gen_kle_field,
    gen_noisy_benchmark,
    gen_seepage,
    generate_raw,
)
from pdekd.generators.truth import equation_residual
from pdekd.errors import ConfigError


@pytest.fixture(scope="module")
def kdv():
    return gen_kdv()


class TestResiduals:
    """The stored truth equation holds on the generated data up to discretisation error."""

    def test_kdv(self, kdv):
        assert equation_residual(*kdv) <= 0.05

    def test_chafee_infante(self):
        assert equation_residual(*gen_chafee_infante()) <= 0.05

    def test_burgers(self):
        s, truth = gen_burgers2d(nx=64, ny=64, nt=80)
        assert equation_residual(s, truth, "u_t") <= 0.05
        assert equation_residual(s, truth, "v_t") <= 0.05

    def test_seepage_after_start_up(self):
        # the first slices carry the step from the initial head to the boundary value
        s, truth = gen_seepage(gen_kle_field(seed=1))
        assert equation_residual(s, truth, time_slices=slice(5, None)) <= 0.05


class TestKdV:
    def test_mass_conserved(self, kdv):
        s, _ = kdv
        mass = s.values["u"].reshape(s.grid.shape).sum(axis=1)
        assert np.max(np.abs(mass / mass[0] - 1)) <= 1e-3

    def test_first_slice_is_initial_condition(self):
        u0 = 0.3 * np.exp(-20 * np.linspace(-1, 1, 128, endpoint=False) ** 2)
        s, _ = gen_kdv(nx=128, nt=20, initial=u0)
        assert np.allclose(s.values["u"].reshape(s.grid.shape)[0], u0, atol=1e-12)

    def test_zero_stays_zero(self):
        s, _ = gen_kdv(nx=64, nt=20, initial=np.zeros(64))
        assert np.all(s.values["u"] == 0)

    def test_truth(self, kdv):
        _, truth = kdv
        assert truth.equations["u_t"] == {"u*u_x": -1.0, "u_xxx": -0.0025}

    def test_size_guard(self):
        with pytest.raises(ValueError):
            gen_kdv(nx=8)


class TestOtherSolvers:
    def test_chafee_zero_stays_zero(self):
        s, _ = gen_chafee_infante(nx=40, nt=20, initial=np.zeros(40))
        assert np.all(s.values["u"] == 0)

    def test_chafee_dirichlet_ends(self):
        s, _ = gen_chafee_infante(nx=61, nt=20)
        u = s.values["u"].reshape(s.grid.shape)
        assert np.all(np.abs(u[:, [0, -1]]) <= 1e-12)

    def test_burgers_shapes_and_truth(self):
        s, truth = gen_burgers2d(nx=32, ny=24, nt=20)
        assert s.grid.shape == (20, 24, 32)
        assert set(truth.targets) == {"u_t", "v_t"}


class TestConductivity:
    def test_zero_variance_is_constant(self):
        f = gen_kle_field(variance=0.0)
        assert np.all(f.log_k == 0.0)

    def test_deterministic(self):
        assert np.array_equal(gen_kle_field(seed=3).log_k, gen_kle_field(seed=3).log_k)
        assert not np.array_equal(gen_kle_field(seed=3).log_k, gen_kle_field(seed=4).log_k)

    def test_ensemble_statistics(self):
        fields = np.array([gen_kle_field(nx=21, ny=21, seed=s).log_k for s in range(200)])
        expected = gen_kle_field(nx=21, ny=21).expected_variance()
        assert abs(fields.mean()) < 0.1
        assert abs(fields.var(axis=0).mean() / expected - 1) < 0.15

    def test_gradient_matches_finite_difference(self):
        f = gen_kle_field(seed=5)
        h = f.x[1] - f.x[0]
        fd = np.gradient(f.log_k, h, axis=1)
        assert np.allclose(fd[:, 2:-2], f.grad_x[:, 2:-2], atol=2e-2 * np.abs(f.grad_x).max())


class TestSeepage:
    def test_maximum_principle(self):
        s, _ = gen_seepage(gen_kle_field(seed=2))
        u = s.values["u"]
        assert u.min() >= 200 - 1e-9 and u.max() <= 202 + 1e-9

    def test_homogeneous_steady_state_is_linear(self):
        s, _ = gen_seepage(gen_kle_field(variance=0.0), t_end=1e4)
        last = s.values["u"].reshape(s.grid.shape)[-1]
        expected = np.linspace(202.0, 200.0, last.shape[1])
        assert np.allclose(last, expected[None, :], atol=1e-6)

    def test_deterministic(self):
        a, _ = gen_seepage(gen_kle_field(seed=1))
        b, _ = gen_seepage(gen_kle_field(seed=1))
        assert a.equals(b)


class TestBundle:
    @pytest.fixture
    def small(self):
        return dict(generator_overrides={"nx": 128, "nt": 40}, sample_count=600)

    def test_noiseless_values_are_solver_output(self, small):
        b = gen_noisy_benchmark("kdv", noise=0.0, **small)
        raw, _ = generate_raw("kdv", 0, nx=128, nt=40)
        g = raw.grid
        lookup = raw.values["u"].reshape(g.shape)
        for part in (b.train, b.test):
            i = np.rint((part.x - g.x0) / g.dx).astype(int)
            k = np.rint(part.t / g.dt).astype(int)
            assert np.array_equal(part.values["u"], lookup[k, i])

    def test_split_sizes(self, small):
        b = gen_noisy_benchmark("kdv", noise=0.1, **small)
        assert b.train.n + b.dev.n + b.test.n == 600
        assert b.train.t.max() < b.dev.t.min() and b.dev.t.max() < b.test.t.min()

    def test_save_is_byte_identical(self, tmp_path, small):
        for d in ("a", "b"):
            gen_noisy_benchmark("kdv", noise=0.1, **small).save(tmp_path / d)
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert "config.toml" in files and "truth.json" in files
        for name in files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_save_load_round_trip(self, tmp_path, small):
        b = gen_noisy_benchmark("kdv", noise=0.1, **small)
        back = Bundle.load(b.save(tmp_path / "k"))
        assert back.train.equals(b.train) and back.test.equals(b.test)
        assert back.config == b.config
        assert back.truth.equations == b.truth.equations
        la, _ = b.libraries()
        lb, _ = back.libraries()
        assert np.array_equal(la["train"].design, lb["train"].design)

    def test_too_many_samples(self, small):
        with pytest.raises(ConfigError):
            gen_noisy_benchmark("kdv", generator_overrides=small["generator_overrides"], sample_count=10**7)

    def test_unknown_dataset(self):
        with pytest.raises(ConfigError):
            dataset_config("navier-stokes")
