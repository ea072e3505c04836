import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsedispatch.errors import ConfigurationError, FeatureRangeError, InputDomainError
from sparsedispatch.oracle import (
    FEATURES,
    CycleFeatures,
    Dataset,
    Normalization,
    SamplingPlan,
    cycle_degradation,
    cycle_degradation_batch,
    denormalize,
    generate_dataset,
    normalize,
    sidecar_path,
)

# Hand-evaluated values of the closed form, frozen once.
FROZEN = [
    ((1.0, 1.0, 25.0, 1.0, 1.0), 2.5e-05),
    ((0.8, 0.5, 35.0, 1.5, 0.9), 1.9104043221943737e-05),
    ((0.5, 0.2, 10.0, 0.5, 0.95), 8.289196574506232e-07),
    ((0.3, 0.3, 45.0, 2.0, 0.8), 2.348450141042568e-05),
]


def feats(soc=0.6, dod=0.3, temp=25.0, crate=1.0, soh=0.9):
    return CycleFeatures(soc, dod, temp, crate, soh)


class TestCycleDegradation:
    @pytest.mark.parametrize("x, expected", FROZEN)
    def test_frozen_values(self, x, expected):
        assert cycle_degradation(CycleFeatures(*x)) == pytest.approx(expected, rel=1e-13)

    def test_unit_factors(self):
        assert cycle_degradation(feats(1.0, 1.0, 25.0, 1.0, 1.0)) == 2.5e-5

    def test_low_crate_soc_factor(self):
        expected = 2.5e-5 * 0.4**1.6 * (1 + 2.0 * (0.2 - 0.5) ** 2)
        assert cycle_degradation(feats(0.4, 0.4, 25.0, 0.4, 1.0)) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("bad", [
        dict(dod=0.0), dict(dod=1.2), dict(soc=0.2, dod=0.5), dict(crate=0.0), dict(soh=0.0),
        dict(soh=1.1), dict(soc=-0.1), dict(temp=math.nan),
    ])
    def test_domain_errors(self, bad):
        with pytest.raises(InputDomainError):
            cycle_degradation(feats(**bad))

    def test_batch_matches_scalar(self, small_data):
        X = small_data.X[:50]
        scalar = [cycle_degradation(CycleFeatures.from_array(x)) for x in X]
        np.testing.assert_allclose(cycle_degradation_batch(X), scalar, rtol=1e-14)


unit = st.floats(0.05, 1.0)


class TestMonotonicity:
    @given(dod=unit, d2=unit, temp=st.floats(0, 45), crate=st.floats(0.01, 2), soh=st.floats(0.81, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_nondecreasing_in_dod(self, dod, d2, temp, crate, soh):
        lo, hi = sorted((dod, d2))
        # soc_mid moves with dod; hold it fixed to isolate the dod effect
        a = cycle_degradation(feats(0.5 + lo / 2, lo, temp, crate, soh))
        b = cycle_degradation(feats(0.5 + hi / 2, hi, temp, crate, soh))
        assert a <= b

    @given(t1=st.floats(0, 45), t2=st.floats(0, 45), crate=st.floats(0.01, 2))
    @settings(max_examples=200, deadline=None)
    def test_nondecreasing_in_temperature(self, t1, t2, crate):
        lo, hi = sorted((t1, t2))
        assert cycle_degradation(feats(temp=lo, crate=crate)) <= cycle_degradation(feats(temp=hi, crate=crate))

    @given(c1=st.floats(1.0, 2.0), c2=st.floats(1.0, 2.0), temp=st.floats(0, 45))
    @settings(max_examples=200, deadline=None)
    def test_nondecreasing_in_crate_above_one(self, c1, c2, temp):
        lo, hi = sorted((c1, c2))
        assert cycle_degradation(feats(temp=temp, crate=lo)) <= cycle_degradation(feats(temp=temp, crate=hi))

    @given(c1=st.floats(0.01, 1.0), c2=st.floats(0.01, 1.0))
    def test_flat_below_one_c(self, c1, c2):
        assert cycle_degradation(feats(crate=c1)) == cycle_degradation(feats(crate=c2))


class TestNormalization:
    norm = Normalization((0, 0, 0, 0, 0.8), (1, 1, 45, 2, 1.0), 1e-5)

    def test_endpoints_and_midpoint(self):
        lo = CycleFeatures(0.0, 0.0, 0.0, 0.0, 0.8)
        np.testing.assert_array_equal(self.norm.transform(lo.as_array()[None])[0], np.zeros(5))
        hi = np.array([1, 1, 45, 2, 1.0])
        np.testing.assert_allclose(self.norm.transform(hi[None])[0], np.ones(5), atol=1e-15)
        mid = np.array([0.5, 0.5, 22.5, 1.0, 0.9])
        np.testing.assert_allclose(self.norm.transform(mid[None])[0], np.full(5, 0.5), atol=1e-15)

    @given(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 45), st.floats(0, 2), st.floats(0.8, 1)))
    def test_round_trip(self, x):
        f = CycleFeatures(*x)
        back = denormalize(normalize(f, self.norm), self.norm)
        np.testing.assert_allclose(back.as_array(), f.as_array(), atol=1e-12)

    def test_out_of_range_names_feature(self):
        with pytest.raises(FeatureRangeError) as exc:
            normalize(CycleFeatures(0.5, 0.2, 50.0, 1.0, 0.9), self.norm)
        assert exc.value.feature == "temp_c"

    def test_no_clamping_below(self):
        with pytest.raises(FeatureRangeError, match="soh"):
            self.norm.transform(np.array([[0.5, 0.2, 20.0, 1.0, 0.5]]))

    def test_degenerate_range(self):
        with pytest.raises(ConfigurationError):
            Normalization((0, 0, 0, 0, 1), (1, 1, 45, 2, 1), 1.0)

    def test_dict_round_trip(self):
        assert Normalization.from_dict(self.norm.to_dict()) == self.norm


class TestDataset:
    def test_labels_match_oracle(self):
        data = generate_dataset(SamplingPlan(n_samples=2000), seed=3)
        assert len(data) == 2000
        for s in data.samples[::37]:
            assert cycle_degradation(s.features) == s.delta_soh
        np.testing.assert_allclose(cycle_degradation_batch(data.X), data.y, rtol=1e-14)

    def test_feasible_cycles(self, small_data):
        X = small_data.X
        assert np.all(X[:, 0] - X[:, 1] >= 0)
        assert np.all(X[:, 1] > 0) and np.all(X[:, 3] > 0)
        box = SamplingPlan().box()
        assert np.all(X >= box[:, 0]) and np.all(X <= box[:, 1])

    def test_split_disjoint_and_covering(self, small_data):
        tr, te = set(small_data.train_idx), set(small_data.test_idx)
        assert not tr & te
        assert tr | te == set(range(len(small_data)))

    def test_deterministic_bytes(self, tmp_path):
        a = generate_dataset(SamplingPlan(n_samples=1000), 42)
        b = generate_dataset(SamplingPlan(n_samples=1000), 42)
        a.save(tmp_path / "a.csv")
        b.save(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert sidecar_path(tmp_path / "a.csv").read_bytes() == sidecar_path(tmp_path / "b.csv").read_bytes()

    def test_seed_changes_data(self):
        a = generate_dataset(SamplingPlan(n_samples=1000), 1)
        b = generate_dataset(SamplingPlan(n_samples=1000), 2)
        assert not np.array_equal(a.X, b.X)

    def test_save_load_round_trip(self, small_data, tmp_path):
        path = tmp_path / "d.csv"
        small_data.save(path)
        back = Dataset.load(path)
        np.testing.assert_array_equal(back.X, small_data.X)
        np.testing.assert_array_equal(back.y, small_data.y)
        np.testing.assert_array_equal(back.test_idx, small_data.test_idx)
        assert back.normalization == small_data.normalization
        assert path.read_text().splitlines()[0] == ",".join(FEATURES) + ",delta_soh"
        assert len(path.read_text().splitlines()) == len(small_data) + 1

    def test_target_scale_is_std(self, small_data):
        assert small_data.normalization.target_scale == pytest.approx(small_data.y.std())

    @pytest.mark.parametrize("plan", [
        SamplingPlan(n_samples=999),
        SamplingPlan(soc_start=(0.0, 0.3), dod=(0.5, 1.0)),
        SamplingPlan(temp_c=(10.0, 10.0)),
        SamplingPlan(soh=(0.8, 1.2)),
    ])
    def test_bad_plans(self, plan):
        with pytest.raises(ConfigurationError):
            generate_dataset(plan, 0)
