from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from _helpers import (
    fwl_cre_oracle,
    hc_oracle,
    plugin_stratified_oracle,
    random_cre,
    random_stratified,
    random_survey,
    survey_closed_form,
    wls_oracle,
)
from tomadjust.errors import BadConfig, EmptyArm, MissingPopulationMean, RankDeficient, StrataTooSmall
from tomadjust.estimators import (
    DESIGN_ESTIMATORS,
    Dataset,
    collapse_clusters,
    diff_in_means,
    diff_in_means_stratified,
    fisher_cre,
    lin_cluster,
    lin_cre,
    plugin_cre,
    plugin_stratified,
    plugin_survey,
    tom_cluster,
    tom_cre,
    tom_stratified,
    tom_survey,
    wald_ci,
)
from tomadjust.estimators.stratified import ANTI_CONSERVATIVE_NOTE, stratified_weights, strata_layout
from tomadjust.numkit import HC_FLAVORS

TOY = Dataset(y=np.array([3.0, 5.0, 1.0, 1.0]), z=np.array([1, 1, 0, 0]))


class TestDiffInMeans:
    def test_toy(self):
        r = diff_in_means(TOY)
        assert r.point == 3.0
        assert r.variances["neyman"] == pytest.approx(2.0 / 2 + 0.0)

    def test_constant_outcome(self):
        r = diff_in_means(Dataset(y=np.full(6, 2.5), z=[1, 0, 1, 0, 1, 0]))
        assert r.point == 0.0 and r.variances["neyman"] == 0.0
        assert r.ci["neyman"] == (0.0, 0.0)

    def test_empty_arm(self):
        with pytest.raises(EmptyArm):
            diff_in_means(Dataset(y=np.ones(3), z=np.ones(3, dtype=int)))

    def test_singleton_arm_has_undefined_variance(self):
        r = diff_in_means(Dataset(y=np.arange(4.0), z=[1, 0, 0, 0]))
        assert r.point == pytest.approx(0.0 - 2.0)
        assert np.isnan(r.variances["neyman"])
        assert r.notes


class TestTomCre:
    def test_toy_without_covariates(self):
        assert tom_cre(TOY).point == pytest.approx(3.0, abs=1e-12)

    def test_k0_equals_diff_in_means(self, rng):
        ds = random_cre(rng, 15, 1).replace(x=None)
        assert tom_cre(ds).point == pytest.approx(diff_in_means(ds).point, abs=1e-12)

    def test_closed_form_n12_k2(self, rng):
        ds = random_cre(rng, 12, 2, n1=5)
        assert tom_cre(ds).point == pytest.approx(fwl_cre_oracle(ds), abs=1e-10)

    @pytest.mark.parametrize("flavor", HC_FLAVORS)
    def test_variances_match_explicit_sandwich(self, rng, flavor):
        ds = random_cre(rng, 20, 2, n1=7)
        p1 = ds.n1 / ds.n
        w = np.where(ds.z == 1, 1 / p1**2, 1 / (1 - p1) ** 2)
        X = np.column_stack([np.ones(ds.n), ds.z, ds.x])
        r = tom_cre(ds)
        assert r.point == pytest.approx(wls_oracle(ds.y, X, w)[1], abs=1e-10)
        assert r.variances[flavor] == pytest.approx(hc_oracle(ds.y, X, w, np.eye(4)[1], flavor, 4), rel=1e-9)
        assert r.df_columns == 4

    def test_pooled_residual(self, rng):
        ds = random_cre(rng, 20, 1, n1=8)
        r = tom_cre(ds)
        e = ds.y - np.column_stack([np.ones(ds.n), ds.z, ds.x]) @ r.extras["coefficients"]
        s1 = np.sum(e[ds.z == 1] ** 2) / 7
        s0 = np.sum(e[ds.z == 0] ** 2) / 11
        assert r.variances["pooled-residual"] == pytest.approx((s1 / 0.4 + s0 / 0.6) / 20, rel=1e-10)

    def test_hc_ordering(self, rng):
        for _ in range(20):
            v = tom_cre(random_cre(rng, 30, 3)).variances
            assert v["HC2"] <= v["HC3"] + 1e-15

    def test_errors(self, rng):
        ds = random_cre(rng, 10, 1)
        with pytest.raises(RankDeficient):
            tom_cre(ds.replace(x=np.ones((10, 1))))
        with pytest.raises(RankDeficient):
            tom_cre(ds.replace(x=np.column_stack([ds.x, 2 * ds.x])))
        with pytest.raises(EmptyArm):
            tom_cre(ds.replace(z=np.r_[1, np.zeros(9, dtype=int)]))


class TestLinFisher:
    def test_k0(self, rng):
        ds = random_cre(rng, 14, 1).replace(x=None)
        for fn in (lin_cre, fisher_cre):
            assert fn(ds).point == pytest.approx(diff_in_means(ds).point, abs=1e-12)

    def test_zero_imbalance(self):
        x = np.array([[1.0], [2.0], [3.0], [1.0], [2.0], [3.0]])
        ds = Dataset(y=np.array([2.0, 5, 1, 0, 4, 2]), z=[1, 1, 1, 0, 0, 0], x=x)
        dim = diff_in_means(ds).point
        for fn in (lin_cre, fisher_cre, tom_cre):
            assert fn(ds).point == pytest.approx(dim, abs=1e-12)

    def test_fisher_normal_equations(self, rng):
        ds = random_cre(rng, 25, 3)
        X = np.column_stack([np.ones(ds.n), ds.z, ds.x])
        assert fisher_cre(ds).point == pytest.approx(wls_oracle(ds.y, X)[1], abs=1e-10)

    def test_lin_is_interacted_ols(self, rng):
        ds = random_cre(rng, 25, 2)
        xc = ds.x - ds.x.mean(axis=0)
        X = np.column_stack([np.ones(ds.n), ds.z, xc, ds.z[:, None] * xc])
        r = lin_cre(ds)
        assert r.point == pytest.approx(wls_oracle(ds.y, X)[1], abs=1e-10)
        assert r.df_columns == 6
        assert r.variances["HC1"] == pytest.approx(hc_oracle(ds.y, X, None, np.eye(6)[1], "HC1", 6), rel=1e-9)

    def test_lin_and_tom_agree_at_large_n(self):
        gen = np.random.default_rng(7)
        n = 2000
        x = gen.multivariate_normal(np.zeros(3), 0.6 * np.eye(3) + 0.4, size=n)
        y1 = 1 + x @ gen.standard_t(3, 3) + gen.standard_normal(n)
        y0 = x @ gen.standard_t(3, 3) + gen.standard_normal(n)
        z = np.zeros(n, dtype=int)
        z[gen.permutation(n)[:600]] = 1
        ds = Dataset(y=np.where(z == 1, y1, y0), z=z, x=x)
        tom = tom_cre(ds)
        assert abs(lin_cre(ds).point - tom.point) < 0.05 * tom.se("HC0")


class TestPluginCre:
    def test_k0(self, rng):
        ds = random_cre(rng, 14, 1).replace(x=None)
        r = plugin_cre(ds)
        assert r.point == pytest.approx(diff_in_means(ds).point, abs=1e-12)
        p1 = ds.n1 / ds.n
        ney = np.var(ds.y[ds.z == 1], ddof=1) / p1 + np.var(ds.y[ds.z == 0], ddof=1) / (1 - p1)
        assert r.variances["plugin"] == pytest.approx(ney / ds.n)

    def test_moment_oracle(self, rng):
        ds = random_cre(rng, 30, 2, n1=12)
        point, var = plugin_stratified_oracle(ds.replace(strata=np.zeros(ds.n, dtype=int)))
        r = plugin_cre(ds)
        assert r.point == pytest.approx(point, abs=1e-10)
        assert r.variances["plugin"] == pytest.approx(max(var, 0.0), abs=1e-12)


class TestStratified:
    @pytest.fixture
    def fixture_h2(self):
        # two strata of six units, three treated in the first and two in the second
        y = np.array([3.1, 2.4, 4.0, 1.2, 0.5, 1.9, 5.5, 4.1, 2.2, 2.8, 3.0, 1.7])
        z = np.array([1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0])
        x = np.array([0.3, -0.2, 1.1, 0.4, -0.9, 0.0, 1.5, 0.7, -0.3, 0.2, 0.9, -1.2])[:, None]
        return Dataset(y=y, z=z, x=x, strata=np.repeat(["a", "b"], 6))

    def test_dual_forms_on_fixture(self, fixture_h2):
        a = tom_stratified(fixture_h2, form="centered")
        b = tom_stratified(fixture_h2, form="onehot")
        assert a.point == pytest.approx(b.point, abs=1e-10)
        for fl in HC_FLAVORS:
            assert a.variances[fl] == pytest.approx(b.variances[fl], abs=1e-10)
        assert a.df_columns == b.df_columns == 2 * 2 + 1

    def test_dual_forms_random(self, rng):
        for _ in range(20):
            H = int(rng.integers(1, 5))
            ds = random_stratified(rng, rng.integers(5, 12, H), int(rng.integers(1, 3)))
            a, b = tom_stratified(ds), tom_stratified(ds, form="onehot")
            assert a.point == pytest.approx(b.point, abs=1e-10)
            for fl in HC_FLAVORS:
                assert_allclose(a.variances[fl], b.variances[fl], rtol=1e-8, atol=1e-12)

    def test_single_stratum_is_corrected_tom_cre(self, rng):
        ds = random_cre(rng, 15, 2, n1=6).replace(strata=np.zeros(15, dtype=int))
        w = stratified_weights(ds.z, strata_layout(ds))
        a, b = tom_stratified(ds), tom_cre(ds, weights=w)
        assert a.point == pytest.approx(b.point, abs=1e-12)
        for fl in HC_FLAVORS:
            assert a.variances[fl] == pytest.approx(b.variances[fl], rel=1e-10)

    def test_k0_equals_weighted_stratum_effects(self, rng):
        ds = random_stratified(rng, [6, 9, 7], 1).replace(x=None)
        target = diff_in_means_stratified(ds).point
        assert tom_stratified(ds).point == pytest.approx(target, abs=1e-12)
        assert plugin_stratified(ds).point == pytest.approx(target, abs=1e-12)
        manual = sum(
            np.mean(ds.strata == h) * (ds.y[(ds.strata == h) & (ds.z == 1)].mean() - ds.y[(ds.strata == h) & (ds.z == 0)].mean())
            for h in range(3)
        )
        assert target == pytest.approx(manual, abs=1e-12)

    def test_plugin_matches_moment_oracle(self, fixture_h2):
        point, var = plugin_stratified_oracle(fixture_h2)
        r = plugin_stratified(fixture_h2)
        assert r.point == pytest.approx(point, abs=1e-10)
        assert r.variances["plugin"] == pytest.approx(max(var, 0.0), abs=1e-10)

    def test_plugin_single_stratum_is_cre_plugin(self, rng):
        ds = random_cre(rng, 20, 2, n1=9)
        a = plugin_stratified(ds.replace(strata=np.full(20, "s")))
        b = plugin_cre(ds)
        assert a.point == pytest.approx(b.point, abs=1e-12)
        assert a.variances["plugin"] == pytest.approx(b.variances["plugin"], rel=1e-10)

    def test_notes_warn_about_hc0(self, fixture_h2):
        assert tom_stratified(fixture_h2).notes == ANTI_CONSERVATIVE_NOTE

    def test_small_arm_is_an_error(self, fixture_h2):
        z = fixture_h2.z.copy()
        z[6] = 0
        with pytest.raises(StrataTooSmall, match="stratum 'b'"):
            tom_stratified(fixture_h2.replace(z=z))
        with pytest.raises(StrataTooSmall):
            tom_stratified(fixture_h2.replace(strata=None))

    def test_pooled_residual_single_stratum(self, rng):
        ds = random_cre(rng, 18, 1, n1=7).replace(strata=np.zeros(18, dtype=int))
        r = tom_stratified(ds)
        X = np.column_stack([np.ones(18), ds.z, ds.x])
        e = ds.y - X @ wls_oracle(ds.y, X, stratified_weights(ds.z, strata_layout(ds)))
        s1 = np.sum(e[ds.z == 1] ** 2) / 6
        s0 = np.sum(e[ds.z == 0] ** 2) / 10
        assert r.variances["pooled-residual"] == pytest.approx((s1 * 18 / 7 + s0 * 18 / 11) / 18, rel=1e-10)


class TestSurvey:
    def test_no_v_is_tom_cre(self, rng):
        ds = random_survey(rng, 200, 30, 10, 2, 0)
        a, b = tom_survey(ds), tom_cre(ds)
        assert a.point == b.point
        for fl in HC_FLAVORS:
            assert a.variances[fl] == b.variances[fl]

    def test_full_sample_with_v_at_its_mean(self, rng):
        ds = random_cre(rng, 16, 2, n1=6)
        v = np.tile([0.7, -1.0], (16, 1))
        sv = ds.replace(v=v, v_bar=np.array([0.7, -1.0]), f=1.0)
        r = tom_survey(sv)
        assert r.point == pytest.approx(tom_cre(ds).point, abs=1e-12)
        assert "omitted" in r.notes

    def test_closed_form(self, rng):
        ds = random_survey(rng, 40, 10, 4, 2, 1)
        r = tom_survey(ds)
        assert r.point == pytest.approx(survey_closed_form(ds), abs=1e-10)
        assert r.df_columns == 2 + 2 + 1

    def test_closed_form_random(self, rng):
        for _ in range(25):
            ds = random_survey(rng, 300, int(rng.integers(15, 40)), int(rng.integers(5, 10)), 2, 2)
            assert tom_survey(ds).point == pytest.approx(survey_closed_form(ds), abs=1e-10)

    def test_v_is_centred_at_population_mean(self, rng):
        ds = random_survey(rng, 100, 20, 8, 1, 1)
        shifted = ds.replace(v=ds.v + 3.0, v_bar=ds.v_bar + 3.0)
        assert tom_survey(shifted).point == pytest.approx(tom_survey(ds).point, abs=1e-10)
        assert tom_survey(ds.replace(v_bar=ds.v_bar + 1.0)).point != pytest.approx(tom_survey(ds).point)

    def test_missing_population_mean(self, rng):
        ds = random_survey(rng, 100, 20, 8, 1, 1)
        with pytest.raises(MissingPopulationMean):
            ds.replace(v_bar=None)
        with pytest.raises(BadConfig):
            tom_survey(ds.replace(f=None))

    def test_plugin_k0_is_diff_in_means(self, rng):
        ds = random_survey(rng, 100, 20, 8, 1, 0).replace(x=None)
        assert plugin_survey(ds).point == pytest.approx(diff_in_means(ds).point, abs=1e-12)

    def test_plugin_moment_oracle(self, rng):
        ds = random_survey(rng, 60, 16, 7, 2, 1)
        t = ds.z == 1
        p1 = t.mean()
        p0 = 1 - p1

        def slope(a, arm):
            S = np.atleast_2d(np.cov(a[arm].T))
            s = np.array([np.cov(a[arm, j], ds.y[arm])[0, 1] for j in range(a.shape[1])])
            return np.linalg.solve(S, s)

        vc = ds.v - ds.v_bar
        beta = p0 * slope(ds.x, t) + p1 * slope(ds.x, ~t)
        gamma = slope(vc, t) - slope(vc, ~t)
        adj = ds.y - ds.x @ beta - (ds.z - p0) * (vc @ gamma)
        point = adj[t].mean() - adj[~t].mean()
        var = (np.var(adj[t], ddof=1) / p1 + np.var(adj[~t], ddof=1) / p0) / ds.n
        r = plugin_survey(ds)
        assert r.point == pytest.approx(point, abs=1e-10)
        assert r.variances["plugin"] == pytest.approx(var, abs=1e-10)
        assert_allclose(r.extras["gamma"], gamma, atol=1e-10)

    def test_plugin_null_effect_tracks_diff_in_means(self):
        gen = np.random.default_rng(3)
        N, n, n1 = 2000, 100, 30
        V = gen.standard_normal((N, 1))
        X = gen.standard_normal((N, 2))
        Y = gen.standard_normal(N)
        gaps = []
        for _ in range(500):
            idx = gen.choice(N, n, replace=False)
            z = np.zeros(n, dtype=int)
            z[gen.permutation(n)[:n1]] = 1
            ds = Dataset(y=Y[idx] + z, z=z, x=X[idx], v=V[idx], v_bar=V.mean(axis=0), f=n / N)
            dim = diff_in_means(ds)
            gaps.append(abs(plugin_survey(ds).point - dim.point) / dim.se("neyman"))
        assert np.mean(np.array(gaps) < 2) > 0.99


class TestCluster:
    @staticmethod
    def _fixture():
        sizes = np.array([2, 3, 2, 3, 3, 2, 2, 3])
        cluster = np.repeat(np.arange(8), sizes)
        zc = np.array([1, 0, 1, 0, 1, 0, 0, 1])
        gen = np.random.default_rng(12)
        n = sizes.sum()
        x = gen.standard_normal((n, 1))
        c = np.repeat(gen.standard_normal(8), sizes)[:, None]
        y = 1 + x[:, 0] + 2 * c[:, 0] + zc[cluster] + gen.standard_normal(n)
        return Dataset(y=y, z=zc[cluster], x=x, cluster=cluster, c=c), sizes

    def test_manual_collapse(self):
        ds, sizes = self._fixture()
        nbar = ds.n / 8
        Y = np.array([ds.y[ds.cluster == i].sum() for i in range(8)]) / nbar
        X = np.array([ds.x[ds.cluster == i, 0].sum() for i in range(8)]) / nbar
        C = np.array([ds.c[ds.cluster == i, 0][0] for i in range(8)])
        manual = Dataset(y=Y, z=[1, 0, 1, 0, 1, 0, 0, 1], x=np.column_stack([C, X, sizes]))
        a, b = tom_cluster(ds), tom_cre(manual)
        assert a.point == b.point
        assert a.variances == b.variances
        assert a.estimator == "tom_cluster"

    def test_singletons_equal_unit_level(self, rng):
        ds = random_cre(rng, 14, 2)
        c = rng.standard_normal((14, 1))
        a = tom_cluster(ds.replace(cluster=np.arange(14), c=c))
        b = tom_cre(ds.replace(x=np.column_stack([c, ds.x])))
        assert a.point == b.point
        assert a.variances == b.variances

    def test_equal_sizes_k0(self):
        cluster = np.repeat(np.arange(6), 3)
        zc = np.array([1, 1, 1, 0, 0, 0])
        y = np.arange(18.0) ** 1.5
        ds = Dataset(y=y, z=zc[cluster], cluster=cluster)
        col = collapse_clusters(ds)
        assert col.k == 0
        totals = y.reshape(6, 3).sum(axis=1) / 3
        assert tom_cluster(ds).point == pytest.approx(totals[:3].mean() - totals[3:].mean(), abs=1e-12)
        assert DESIGN_ESTIMATORS["Cluster"]["diff_in_means"](ds).point == pytest.approx(tom_cluster(ds).point)

    def test_size_column_only_when_sizes_vary(self):
        ds, _ = self._fixture()
        assert collapse_clusters(ds).k == 3
        assert lin_cluster(ds).df_columns == 2 + 2 * 3

    def test_treatment_must_be_constant_within_cluster(self):
        ds, _ = self._fixture()
        z = ds.z.copy()
        z[0] = 1 - z[0]
        with pytest.raises(BadConfig, match="cluster '0'"):
            tom_cluster(ds.replace(z=z))
        with pytest.raises(BadConfig):
            tom_cluster(ds.replace(cluster=None))


class TestWald:
    def test_degenerate(self):
        assert wald_ci(1.5, 0.0) == (1.5, 1.5)

    def test_standard_normal(self):
        lo, hi = wald_ci(0.0, 1.0, 0.05)
        assert lo == pytest.approx(-1.959963984540054, abs=1e-6)
        assert hi == pytest.approx(1.959963984540054, abs=1e-6)

    @given(point=st.floats(-1e6, 1e6), var=st.floats(0, 1e6), alpha=st.floats(0.001, 0.999))
    def test_contains_point_and_is_symmetric(self, point, var, alpha):
        lo, hi = wald_ci(point, var, alpha)
        assert lo <= point <= hi
        assert (hi - point) == pytest.approx(point - lo, rel=1e-9, abs=1e-6)
        assert (hi - lo) == pytest.approx(2 * np.sqrt(var) * stats.norm.ppf(1 - alpha / 2), rel=1e-9, abs=1e-9)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            wald_ci(0, -1)
        with pytest.raises(ValueError):
            wald_ci(0, 1, 1.0)

    def test_reports_use_wald(self, rng):
        r = tom_cre(random_cre(rng, 20, 1), alpha=0.1)
        for fl, v in r.variances.items():
            assert r.ci[fl] == wald_ci(r.point, v, 0.1)


def _all_estimates(ds_by_design):
    out = {}
    for design, ds in ds_by_design.items():
        for name, fn in DESIGN_ESTIMATORS[design].items():
            out[(design, name)] = fn(ds)
    return out


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), shift=st.floats(-100, 100), scale=st.floats(0.05, 20))
def test_affine_equivariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    cre = random_cre(rng, 20, 2, n1=8)
    pairs = np.empty(20, dtype=int)
    pairs[cre.z == 1] = np.arange(8) // 2
    pairs[cre.z == 0] = 100 + np.arange(12) // 2
    data = {
        "CRE": cre,
        "Stratified": random_stratified(rng, [6, 8], 1),
        "Survey": random_survey(rng, 200, 24, 9, 1, 1),
        "Cluster": cre.replace(cluster=pairs),
    }
    base = _all_estimates(data)
    moved = _all_estimates({d: ds.replace(y=ds.y * scale + shift) for d, ds in data.items()})
    for key, r in base.items():
        m = moved[key]
        assert m.point == pytest.approx(scale * r.point, rel=1e-8, abs=1e-8 * scale), key
        for fl, v in r.variances.items():
            assert m.variances[fl] == pytest.approx(scale**2 * v, rel=1e-7, abs=1e-9 * scale**2), (key, fl)
