"""Panel construction, deseasonalization, splitting, and serialization."""

from datetime import datetime, timezone

import numpy as np
import pytest
from numpy.testing import assert_allclose

from styleflow.datamodel import AttributeRecord, CityMetadata, Corpus, DataError
from styleflow.synth import SyntheticSpec, synthesize_panel
from styleflow.trajectories import (
    TrajectoryPanel,
    build_panel,
    deseasonalize,
    global_trajectory,
    interpolate_missing,
    load_panel_csv,
    load_panel_json,
    save_panel_csv,
    save_panel_json,
    smooth_panel,
    split,
)


def record(city, day, attrs=(0.5, 0.5)):
    return AttributeRecord(
        city_id=city,
        timestamp=datetime(2014, 1, day, 12, 0, tzinfo=timezone.utc),
        attributes=np.array(attrs),
    )


def corpus_of(records):
    cities = {r.city_id: CityMetadata(city_id=r.city_id) for r in records}
    return Corpus(records=list(records), cities=cities, attribute_names=["a1", "a2"])


def constant_panel(values):
    """(K, C, T) array -> panel with full bins."""
    values = np.asarray(values, dtype=float)
    k, c, t = values.shape
    return TrajectoryPanel(
        week_starts=[f"2014-{1 + w // 28:02d}-{1 + (w * 7) % 28:02d}" for w in range(t)],
        city_ids=[f"c{j}" for j in range(c)],
        values=values,
        bin_counts=np.ones((c, t), dtype=int),
    )


class TestBuildPanel:
    def test_single_bin_mean(self):
        # two records in one (city, week) with posteriors [1,0] and [0,1]
        corpus = corpus_of([record("a", 6), record("a", 7)])
        posteriors = np.array([[1.0, 0.0], [0.0, 1.0]])
        panel = build_panel(corpus, posteriors)
        assert panel.n_weeks == 1
        assert_allclose(panel.values[:, 0, 0], [0.5, 0.5])
        assert panel.bin_counts[0, 0] == 2

    def test_style_sum_is_one_where_data(self):
        rng = np.random.default_rng(0)
        records = [record("a", 1 + i % 27) for i in range(40)] + [
            record("b", 1 + i % 27) for i in range(40)
        ]
        corpus = corpus_of(records)
        post = rng.dirichlet(np.ones(3), size=len(records))
        panel = build_panel(corpus, post)
        sums = panel.values.sum(axis=0)
        observed = panel.bin_counts > 0
        assert_allclose(sums[observed], 1.0, atol=1e-9)
        assert np.isnan(panel.values[:, :, :][np.broadcast_to(~observed, panel.values.shape)]).all()

    def test_record_order_invariance(self):
        records = [record("a", d, (0.1 * d % 1, 1 - 0.1 * d % 1)) for d in range(1, 28)]
        post = np.random.default_rng(1).dirichlet(np.ones(2), size=len(records))
        panel1 = build_panel(corpus_of(records), post)
        order = np.random.default_rng(2).permutation(len(records))
        panel2 = build_panel(corpus_of([records[i] for i in order]), post[order])
        assert_allclose(panel1.values, panel2.values, atol=1e-12, equal_nan=True)

    def test_city_without_records_dropped_with_warning(self):
        corpus = corpus_of([record("a", 6)])
        corpus.cities["ghost"] = CityMetadata(city_id="ghost")
        with pytest.warns(UserWarning, match="ghost"):
            panel = build_panel(corpus, np.array([[1.0, 0.0]]))
        assert panel.city_ids == ["a"]

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            build_panel(Corpus(records=[], cities={}, attribute_names=["a"]), np.zeros((0, 1)))

    def test_simulator_panel_matches_ground_truth_within_sampling_noise(self, tmp_path):
        from styleflow.datamodel import load_records
        from styleflow.styles import assign_style_posteriors, fit_gmm
        from styleflow.synth import generate_synthetic

        spec = SyntheticSpec(n_cities=3, n_styles=2, n_weeks=30, records_per_bin=60,
                             seed=3, noise_sigma=0.0, idio_sigma=0.04)
        paths = generate_synthetic(spec, tmp_path)
        corpus = load_records(paths["records"])
        model = fit_gmm(corpus, k=2, seed=0)
        post = assign_style_posteriors(model, corpus)
        panel = build_panel(corpus, post)
        import json

        truth = json.loads((tmp_path / "ground_truth.json").read_text())
        probs = np.asarray(truth["bin_probabilities"])  # (K, C, T)
        # undo arbitrary component order from the GMM fit
        perm = [int(np.argmax([np.corrcoef(panel.values[k].ravel(), probs[m].ravel())[0, 1]
                               for m in range(2)])) for k in range(2)]
        assert sorted(perm) == [0, 1]
        n = spec.records_per_bin
        bound = 3.0 * np.sqrt(probs * (1 - probs)) / np.sqrt(n) + 1e-6
        assert np.all(np.abs(panel.values - probs[perm]) <= bound[perm])


class TestDeseasonalize:
    def test_periodic_signal_cancels(self):
        t = 120
        base = np.sin(2 * np.pi * np.arange(t) / 52.0)
        panel = constant_panel(base[None, None, :] * np.ones((2, 3, 1)))
        out = deseasonalize(panel, season=52)
        assert out.n_weeks == t - 52
        assert_allclose(out.values, 0.0, atol=1e-12)

    def test_linear_series_becomes_constant(self):
        c = 0.01
        t = 80
        series = c * np.arange(t)
        panel = constant_panel(series[None, None, :])
        out = deseasonalize(panel, season=52)
        assert_allclose(out.values, 52 * c, atol=1e-12)

    def test_length_arithmetic(self):
        panel = constant_panel(np.zeros((1, 1, 60)))
        assert deseasonalize(panel, season=52).n_weeks == 8

    def test_too_short(self):
        with pytest.raises(DataError):
            deseasonalize(constant_panel(np.zeros((1, 1, 52))), season=52)

    def test_double_deseasonalize_of_periodic_is_zero(self):
        t = 180
        base = np.cos(2 * np.pi * np.arange(t) / 52.0)
        panel = constant_panel(base[None, None, :])
        out = deseasonalize(deseasonalize(panel))
        assert_allclose(out.values, 0.0, atol=1e-12)


class TestSplit:
    def test_arithmetic(self):
        panel = constant_panel(np.zeros((1, 1, 150)))
        s = split(panel, horizon=26, val_len=26)
        assert s.train == (0, 98)
        assert s.validation == (98, 124)
        assert s.test == (124, 150)

    def test_too_short(self):
        with pytest.raises(DataError):
            split(constant_panel(np.zeros((1, 1, 40))), horizon=26, val_len=26)

    def test_ranges_cover_everything(self):
        panel = constant_panel(np.zeros((1, 1, 100)))
        s = split(panel, horizon=20, val_len=10)
        assert s.train[0] == 0
        assert s.train[1] == s.validation[0]
        assert s.validation[1] == s.test[0]
        assert s.test[1] == 100
        assert s.horizon == 20


class TestGlobalTrajectory:
    def test_mean_of_two_cities(self):
        values = np.stack([np.full((2, 10), 0.2), np.full((2, 10), 0.4)], axis=1)
        panel = constant_panel(values)
        assert_allclose(global_trajectory(panel, 0), 0.3)

    def test_single_city(self):
        values = np.linspace(0, 1, 10)[None, None, :]
        panel = constant_panel(values)
        assert_allclose(global_trajectory(panel, 0), values[0, 0])

    def test_matches_brute_force_on_generator_panel(self):
        panel, _ = synthesize_panel(SyntheticSpec(n_cities=44, n_styles=2, n_weeks=30, seed=9))
        g = global_trajectory(panel, 1)
        brute = np.array([panel.values[1, :, t].mean() for t in range(panel.n_weeks)])
        assert_allclose(g, brute, atol=1e-12)


class TestMissingBins:
    def test_interpolation_fills_interior_gap(self):
        values = np.array([[[0.2, np.nan, 0.4, np.nan, np.nan, 0.7]]])
        panel = constant_panel(values)
        panel.bin_counts[0] = [1, 0, 1, 0, 0, 1]
        filled = interpolate_missing(panel)
        assert_allclose(filled.values[0, 0], [0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
        assert filled.filled.tolist() == [[False, True, False, True, True, False]]

    def test_edges_extend_nearest(self):
        values = np.array([[[np.nan, 0.4, np.nan]]])
        panel = constant_panel(values)
        panel.bin_counts[0] = [0, 1, 0]
        filled = interpolate_missing(panel)
        assert_allclose(filled.values[0, 0], [0.4, 0.4, 0.4])


class TestSmoothing:
    def test_window_one_is_identity(self):
        panel = constant_panel(np.random.default_rng(1).uniform(size=(2, 2, 20)))
        assert smooth_panel(panel, 1) is panel

    def test_window_three_averages(self):
        panel = constant_panel(np.arange(6, dtype=float)[None, None, :])
        out = smooth_panel(panel, 3)
        assert_allclose(out.values[0, 0], [0.5, 1.0, 2.0, 3.0, 4.0, 4.5])

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            smooth_panel(constant_panel(np.zeros((1, 1, 4))), 2)


class TestSerialization:
    def test_csv_roundtrip(self, tmp_path):
        panel, _ = synthesize_panel(SyntheticSpec(n_cities=3, n_styles=2, n_weeks=12, seed=1))
        save_panel_csv(panel, tmp_path / "p.csv")
        again = load_panel_csv(tmp_path / "p.csv")
        assert again.week_starts == panel.week_starts
        assert again.city_ids == panel.city_ids
        assert_allclose(again.values, panel.values, equal_nan=True)
        assert np.array_equal(again.bin_counts, panel.bin_counts)

    def test_csv_roundtrip_with_missing(self, tmp_path):
        values = np.array([[[0.2, np.nan, 0.4]]])
        panel = constant_panel(values)
        panel.bin_counts[0] = [1, 0, 1]
        save_panel_csv(panel, tmp_path / "p.csv")
        again = load_panel_csv(tmp_path / "p.csv")
        assert_allclose(again.values, values, equal_nan=True)

    def test_json_roundtrip_keeps_filled_mask(self, tmp_path):
        values = np.array([[[0.2, np.nan, 0.4]]])
        panel = constant_panel(values)
        panel.bin_counts[0] = [1, 0, 1]
        filled = interpolate_missing(panel)
        save_panel_json(filled, tmp_path / "p.json")
        again = load_panel_json(tmp_path / "p.json")
        assert_allclose(again.values, filled.values)
        assert np.array_equal(again.filled, filled.filled)
