import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdekd.errors import ConfigError, FormatError, ValidationError
from pdekd.field_data import (
    GridMeta,
    NoiseSpec,
    SampleSet,
    SplitSpec,
    add_noise,
    from_grid,
    keyed_normals,
    load_samples,
    save_samples,
    split_temporal,
    subsample_irregular,
)
from pdekd.generators import gen_kle_field, gen_seepage


def _grid_set(nx=6, nt=10, ny=None, seed=0):
    g = GridMeta(nx=nx, nt=nt, dx=0.5, dt=0.1, ny=ny, dy=None if ny is None else 0.25)
    rng = np.random.default_rng(seed)
    return from_grid(g, {"u": rng.normal(size=g.shape)})


class TestSampleSet:
    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            SampleSet(x=[0.0, 1.0], t=[0.0, 0.0], values={"u": [1.0, np.nan]})

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValidationError):
            SampleSet(x=[0.0, 1.0], t=[0.0], values={"u": [1.0, 2.0]})

    def test_grid_requires_lattice_coordinates(self):
        g = GridMeta(nx=2, nt=1, dx=1.0, dt=1.0)
        with pytest.raises(ValidationError):
            SampleSet(x=[0.0, 1.5], t=[0.0, 0.0], values={"u": [1.0, 2.0]}, grid=g)

    def test_values_are_read_only(self):
        s = _grid_set()
        with pytest.raises(ValueError):
            s.values["u"][0] = 1.0


class TestCsv:
    def test_two_row_csv(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("x,y,t,u\n0,0,0,1.0\n1,0,0,2.0\n")
        s = load_samples(p)
        assert s.n == 2
        assert s.field_names == ["u"]
        assert np.array_equal(s.values["u"], [1.0, 2.0])

    def test_empty_file_is_format_error(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(FormatError):
            load_samples(p)

    def test_parse_error_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,t,u\n0,0,1\n# comment\n1,0,abc\n")
        with pytest.raises(FormatError) as info:
            load_samples(p)
        assert info.value.line == 4

    def test_non_finite_is_validation_error(self, tmp_path):
        p = tmp_path / "nan.csv"
        p.write_text("x,t,u\n0,0,1\n1,0,nan\n")
        with pytest.raises(ValidationError):
            load_samples(p)

    def test_duplicate_coordinates(self, tmp_path):
        p = tmp_path / "dup.csv"
        p.write_text("x,t,u\n0,0,1\n0,0,2\n")
        with pytest.raises(ValidationError):
            load_samples(p)

    def test_comments_are_skipped(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("# produced by hand\nx,t,u\n# mid comment\n0,0,1\n")
        assert load_samples(p).n == 1

    def test_round_trip_two_samples(self, tmp_path):
        s = SampleSet(x=[0.1, 1.0 / 3.0], t=[0.0, 0.2], values={"u": [np.pi, -1e-300]})
        save_samples(s, tmp_path / "s.csv")
        back = load_samples(tmp_path / "s.csv")
        assert np.array_equal(back.values["u"], s.values["u"])
        assert np.array_equal(back.x, s.x)

    def test_round_trip_preserves_grid(self, tmp_path):
        s = _grid_set(ny=4)
        save_samples(s, tmp_path / "g.csv")
        back = load_samples(tmp_path / "g.csv")
        assert back.grid == s.grid
        assert back.equals(s)

    def test_round_trip_scattered_keeps_order(self, tmp_path):
        rng = np.random.default_rng(3)
        n = 10000
        s = SampleSet(x=rng.uniform(size=n), y=rng.uniform(size=n), t=rng.uniform(size=n),
                      values={"u": rng.normal(size=n)})
        save_samples(s, tmp_path / "s.csv")
        back = load_samples(tmp_path / "s.csv")
        assert back.grid is None
        assert back.equals(s)

    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
    def test_round_trip_exact_values(self, tmp_path_factory, vals):
        n = len(vals)
        s = SampleSet(x=np.arange(n) * 0.3 + 0.1, t=np.zeros(n) + 0.7, values={"u": vals})
        p = tmp_path_factory.mktemp("rt") / "v.csv"
        save_samples(s, p)
        assert np.array_equal(load_samples(p).values["u"], s.values["u"])


class TestBinary:
    def test_seepage_export_round_trip(self, tmp_path):
        samples, _ = gen_seepage(gen_kle_field(seed=1))
        assert samples.grid.shape == (51, 51, 51)
        save_samples(samples, tmp_path / "seep.bin")
        back = load_samples(tmp_path / "seep.bin")
        assert back.equals(samples)

    def test_magic_detected(self, tmp_path):
        s = _grid_set()
        save_samples(s, tmp_path / "g.dat", format="grid-binary")
        assert (tmp_path / "g.dat").read_bytes().startswith(b"PDEKD1")
        assert load_samples(tmp_path / "g.dat").equals(s)


class TestNoise:
    def test_zero_noise_is_identity(self):
        s = _grid_set()
        assert add_noise(s, NoiseSpec(0.0, 5)).equals(s)

    def test_noise_std_matches_level(self):
        g = GridMeta(nx=1000, nt=100, dx=1.0, dt=1.0)
        s = from_grid(g, {"u": np.sin(np.arange(g.size) * 0.01).reshape(g.shape)})
        noisy = add_noise(s, NoiseSpec(0.1, 11))
        diff = noisy.values["u"] - s.values["u"]
        target = 0.1 * np.std(s.values["u"])
        assert abs(np.std(diff) / target - 1.0) < 0.02

    def test_deterministic(self):
        s = _grid_set()
        a = add_noise(s, NoiseSpec(0.2, 3))
        b = add_noise(s, NoiseSpec(0.2, 3))
        assert a.equals(b)
        assert not add_noise(s, NoiseSpec(0.2, 4)).equals(a)

    def test_noise_is_keyed_by_coordinates(self):
        s = _grid_set(ny=3)
        spec = NoiseSpec(0.1, 9)
        scale = {"u": float(np.std(s.values["u"]))}
        whole = add_noise(s, spec, scale)
        perm = np.random.default_rng(0).permutation(s.n)
        shuffled = add_noise(s.subset(perm), spec, scale)
        assert np.array_equal(shuffled.values["u"], whole.values["u"][perm])

    def test_noise_then_split_commutes(self):
        s = _grid_set(nt=10)
        spec = NoiseSpec(0.1, 2)
        scale = {"u": float(np.std(s.values["u"]))}
        a = split_temporal(add_noise(s, spec, scale), SplitSpec())
        b = [add_noise(part, spec, scale) for part in split_temporal(s, SplitSpec())]
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.values["u"], pb.values["u"])

    def test_keyed_normals_moments(self):
        x = np.arange(200000, dtype=np.float64)
        g = keyed_normals(1, "u", [x, np.zeros_like(x)])
        assert abs(g.mean()) < 0.01
        assert abs(g.std() - 1.0) < 0.01


class TestSplit:
    def test_30_30_40(self):
        s = _grid_set(nx=3, nt=100)
        train, dev, test = split_temporal(s, SplitSpec(0.3, 0.3, 0.4))
        assert [np.unique(p.t).size for p in (train, dev, test)] == [30, 30, 40]

    def test_three_slices(self):
        s = _grid_set(nx=3, nt=3)
        parts = split_temporal(s, SplitSpec(0.34, 0.33, 0.33))
        assert [np.unique(p.t).size for p in parts] == [1, 1, 1]

    def test_empty_part_is_config_error(self):
        s = _grid_set(nx=3, nt=3)
        with pytest.raises(ConfigError):
            split_temporal(s, SplitSpec(0.8, 0.1, 0.1))

    def test_fraction_validation(self):
        with pytest.raises(ConfigError):
            SplitSpec(0.5, 0.5, 0.5)

    @given(st.integers(3, 60), st.integers(0, 10_000))
    def test_partition_and_order(self, nt, seed):
        s = _grid_set(nx=2, nt=nt, seed=seed)
        rng = np.random.default_rng(seed)
        s = s.subset(rng.permutation(s.n))
        train, dev, test = split_temporal(s, SplitSpec())
        assert train.n + dev.n + test.n == s.n
        assert train.t.max() < dev.t.min() and dev.t.max() < test.t.min()


class TestSubsample:
    def test_full_count_is_permutation(self):
        s = _grid_set()
        sub = subsample_irregular(s, s.n, 1)
        assert sub.grid is None
        assert sorted(sub.values["u"]) == sorted(s.values["u"])

    def test_single(self):
        s = _grid_set()
        assert subsample_irregular(s, 1, 1).n == 1

    def test_unique_coordinates_from_seepage_sized_grid(self):
        g = GridMeta(nx=50, ny=50, nt=51, dx=1.0, dy=1.0, dt=1.0)
        s = from_grid(g, {"u": np.zeros(g.shape)})
        sub = subsample_irregular(s, 10000, 4)
        keys = np.column_stack([sub.x, sub.y, sub.t])
        assert np.unique(keys, axis=0).shape[0] == 10000

    def test_too_many(self):
        s = _grid_set()
        with pytest.raises(ValueError):
            subsample_irregular(s, s.n + 1, 0)

    def test_deterministic(self):
        s = _grid_set()
        assert subsample_irregular(s, 20, 8).equals(subsample_irregular(s, 20, 8))
