from itertools import combinations

import numpy as np
import pytest
from scipy import integrate, stats

from derc import data
from derc.errors import ValidationError
from derc.prescreen import (
    PrescreenConfig,
    class_test,
    correlation_prune,
    discriminative_filter,
    normality_gate,
    pearson_correlation_test,
    wilcoxon_rank_sum,
)


def make_dataset(columns, labels=None):
    values = np.column_stack(columns)
    return data.Dataset(
        values=np.clip(values, 0, 1),
        feature_ids=[f"f{i}" for i in range(values.shape[1])],
        sample_ids=[f"s{i}" for i in range(values.shape[0])],
        labels=None if labels is None else np.asarray(labels),
    )


class TestPearson:
    def test_self_correlation(self):
        rho, p = pearson_correlation_test([1, 2, 3, 4], [1, 2, 3, 4])
        assert rho == 1.0 and p == 0.0

    def test_anticorrelation(self):
        rho, _ = pearson_correlation_test([1, 2, 3, 4], [4, 3, 2, 1])
        assert rho == -1.0

    def test_hand_computed_case(self):
        # rho by hand: centered products sum 8, sqrt(10*10) = 10 -> 0.8
        rho, p = pearson_correlation_test([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
        assert rho == pytest.approx(0.8)
        # independent oracle for p: quadrature of the t density, df = 3
        t = 0.8 * np.sqrt(3 / (1 - 0.64))
        tail, _ = integrate.quad(lambda u: stats.t.pdf(u, df=3), t, np.inf)
        assert p == pytest.approx(2 * tail, rel=1e-6)

    def test_constant_vector_convention(self):
        rho, p = pearson_correlation_test([1, 1, 1, 1], [1, 2, 3, 4])
        assert (rho, p) == (0.0, 1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            pearson_correlation_test([1, 2, 3], [1, 2])


class TestCorrelationPrune:
    def test_duplicate_columns(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(size=20)
        kept, removed = correlation_prune(make_dataset([a, a]), PrescreenConfig())
        assert kept.tolist() == [0] and removed.tolist() == [1]

    def test_orthogonal_noise_untouched(self):
        rng = np.random.default_rng(1)
        cols = [rng.uniform(size=40) for _ in range(6)]
        kept, removed = correlation_prune(make_dataset(cols), PrescreenConfig())
        assert len(removed) == 0 and len(kept) == 6

    def test_aba_pattern(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=25)
        b = rng.uniform(size=25)
        kept, removed = correlation_prune(make_dataset([a, b, a]), PrescreenConfig())
        assert kept.tolist() == [0, 1] and removed.tolist() == [2]

    def test_matches_bruteforce_greedy(self):
        # oracle: same greedy using the scalar pearson test pair by pair
        rng = np.random.default_rng(3)
        base = rng.uniform(size=(30, 4))
        mix = base @ rng.uniform(size=(4, 12)) + 0.05 * rng.normal(size=(30, 12))
        mix = (mix - mix.min()) / (mix.max() - mix.min())
        ds = make_dataset(list(mix.T))
        cfg = PrescreenConfig()

        d = ds.n_features
        removed = set()
        for i in range(d):
            if i in removed:
                continue
            for j in range(i + 1, d):
                if j in removed:
                    continue
                rho, p = pearson_correlation_test(ds.values[:, i], ds.values[:, j])
                if abs(rho) >= cfg.rho_threshold and p <= cfg.alpha:
                    removed.add(j)
        kept, rem = correlation_prune(ds, cfg)
        assert set(rem.tolist()) == removed

    def test_permutation_consistency(self):
        # shuffling columns changes which duplicate survives but not the count
        rng = np.random.default_rng(4)
        a, b, c = (rng.uniform(size=30) for _ in range(3))
        ds1 = make_dataset([a, a, b, c])
        ds2 = make_dataset([b, a, c, a])
        cfg = PrescreenConfig()
        assert len(correlation_prune(ds1, cfg)[0]) == len(correlation_prune(ds2, cfg)[0])


class TestNormalityGate:
    def test_normal_samples_pass(self):
        hits = sum(
            normality_gate(np.random.default_rng(s).normal(size=500), 0.05)
            for s in range(100)
        )
        assert hits >= 95

    def test_bernoulli_fails(self):
        x = np.random.default_rng(0).integers(0, 2, size=500).astype(float)
        assert normality_gate(x, 0.05) is False
        # oracle: the omnibus statistic is astronomically significant
        assert stats.normaltest(x).pvalue < 1e-30

    def test_short_sample_rule(self):
        assert normality_gate([1.0, 2.0, 0.5, 1.5, 1.2], 0.05) is False


class TestClassTest:
    cfg = PrescreenConfig()

    def test_identical_multisets(self):
        x = np.array([1, 2, 3, 1, 2, 3], dtype=float)
        y = np.array([0, 0, 0, 1, 1, 1])
        assert class_test(x, y, self.cfg) == 1.0

    def test_exact_wilcoxon_3v3(self):
        p = wilcoxon_rank_sum([1, 2, 3], [10, 11, 12])
        assert p == pytest.approx(0.1)

    def test_exact_wilcoxon_matches_enumeration(self):
        # oracle: enumerate all C(6,3) = 20 rank splits
        a = np.array([0.11, 0.35, 0.52])
        b = np.array([0.6, 0.72, 0.9])
        pooled = np.concatenate([a, b])
        ranks = stats.rankdata(pooled)
        w_obs = ranks[:3].sum()
        mean = 3 * 7 / 2.0
        count = sum(
            1
            for idx in combinations(range(6), 3)
            if abs(ranks[list(idx)].sum() - mean) >= abs(w_obs - mean) - 1e-12
        )
        x = np.concatenate([a, b])
        y = np.array([0, 0, 0, 1, 1, 1])
        assert class_test(x, y, self.cfg) == pytest.approx(count / 20)

    def test_large_sample_tie_correction(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 5, size=40).astype(float)
        b = rng.integers(2, 7, size=40).astype(float)
        p = wilcoxon_rank_sum(a, b)
        ref = stats.ranksums(a, b).pvalue
        # scipy's ranksums has no tie correction; ours shifts p slightly down
        assert 0 < p <= ref + 1e-12

    def test_welch_strong_separation(self):
        rng = np.random.default_rng(7)
        x = np.concatenate([rng.normal(0, 1, 50), rng.normal(3, 1, 50)])
        y = np.repeat([0, 1], 50)
        assert class_test(x, y, self.cfg) < 1e-10

    def test_empty_class_error(self):
        with pytest.raises(ValidationError):
            class_test(np.ones(4), np.zeros(4, dtype=int), self.cfg)

    def test_shift_invariance(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(size=30)
        y = rng.integers(0, 2, size=30)
        y[:2] = [0, 1]
        assert class_test(x, y, self.cfg) == pytest.approx(
            class_test(x + 5.0, y, self.cfg))

    def test_monotone_invariance_on_wilcoxon_path(self):
        rng = np.random.default_rng(9)
        x = rng.integers(0, 2, size=30).astype(float)  # forces non-normal path
        y = rng.integers(0, 2, size=30)
        y[:2] = [0, 1]
        assert class_test(x, y, self.cfg) == pytest.approx(
            class_test(np.exp(3 * x), y, self.cfg))


class TestDiscriminativeFilter:
    def test_constant_feature_removed(self):
        rng = np.random.default_rng(0)
        labels = np.repeat([0, 1], 10)
        ds = make_dataset([np.full(20, 0.5), rng.uniform(size=20)], labels)
        report = discriminative_filter(ds, PrescreenConfig())
        assert "f0" in report.removed_by_class_test
        assert report.per_feature_pvalues["f0"] == 1.0

    def test_label_tracking_feature_kept(self):
        rng = np.random.default_rng(1)
        labels = np.repeat([0, 1], 20)
        strong = np.clip(labels * 0.5 + 0.25 + rng.normal(0, 0.01, 40), 0, 1)
        ds = make_dataset([strong, rng.uniform(size=40)], labels)
        report = discriminative_filter(ds, PrescreenConfig())
        assert "f0" in report.kept_feature_ids
        assert report.per_feature_pvalues["f0"] < 1e-4

    def test_partition_and_order(self):
        ds = data.generate_synthetic(
            data.SynthSpec(n_samples=50, n_features=30, n_informative=8, seed=2))
        report = discriminative_filter(ds, PrescreenConfig())
        all_ids = (set(report.kept_feature_ids)
                   | set(report.removed_by_correlation)
                   | set(report.removed_by_class_test))
        assert all_ids == set(ds.feature_ids)
        total = (len(report.kept_feature_ids) + len(report.removed_by_correlation)
                 + len(report.removed_by_class_test))
        assert total == ds.n_features
        order = {fid: i for i, fid in enumerate(ds.feature_ids)}
        kept_pos = [order[f] for f in report.kept_feature_ids]
        assert kept_pos == sorted(kept_pos)

    def test_alpha_extremes(self):
        ds = data.generate_synthetic(
            data.SynthSpec(n_samples=40, n_features=20, n_informative=5, seed=3))
        tiny = discriminative_filter(ds, PrescreenConfig(alpha=1e-12))
        assert len(tiny.kept_feature_ids) <= 5
        loose = discriminative_filter(ds, PrescreenConfig(alpha=0.999999))
        assert (len(loose.kept_feature_ids)
                == ds.n_features - len(loose.removed_by_correlation))

    def test_pvalues_in_unit_interval(self):
        ds = data.generate_synthetic(
            data.SynthSpec(n_samples=45, n_features=25, n_informative=6, seed=4))
        report = discriminative_filter(ds, PrescreenConfig())
        ps = np.array(list(report.per_feature_pvalues.values()))
        assert np.all((ps >= 0) & (ps <= 1))

    def test_requires_labels(self):
        ds = data.generate_synthetic(data.SynthSpec(n_samples=20, n_features=10,
                                                    n_informative=2, seed=5))
        ds.labels = None
        with pytest.raises(ValidationError):
            discriminative_filter(ds, PrescreenConfig())
