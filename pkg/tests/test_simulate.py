import numpy as np
import pytest

from covsel.dictionary import BasisFamily
from covsel.simulate import (
    ExperimentConfig,
    KernelSpec,
    kernel_to_sigma,
    psd_factor,
    run_experiment,
    sample_paths,
    uniform_grid,
)

FOURIER = BasisFamily("fourier", 0.0, 1.0, 8)


class TestKernelToSigma:
    def test_brownian_entries(self):
        sigma = kernel_to_sigma(KernelSpec("brownian"), np.array([1.0, 2.0]))
        np.testing.assert_array_equal(sigma, [[1.0, 1.0], [1.0, 2.0]])

    def test_ou_diagonal_is_one(self):
        grid = uniform_grid(5)
        sigma = kernel_to_sigma(KernelSpec("ornstein_uhlenbeck", length_scale=0.3), grid)
        np.testing.assert_allclose(np.diag(sigma), 1.0)
        np.testing.assert_allclose(sigma, sigma.T)

    def test_ou_requires_positive_length_scale(self):
        with pytest.raises(ValueError, match="length_scale"):
            KernelSpec("ornstein_uhlenbeck", length_scale=0.0)

    def test_finite_rank_truth_has_zero_bias_at_its_model(self):
        from covsel.dictionary import make_model
        from covsel.linalg import frob_norm_sq

        grid = uniform_grid(8)
        kernel = KernelSpec("finite_rank", family=FOURIER, indices=(0, 1, 2))
        sigma = kernel_to_sigma(kernel, grid)
        model = make_model(FOURIER, (0, 1, 2), grid)
        proj = model.projector
        assert frob_norm_sq(sigma - proj @ sigma @ proj) < 1e-20

    def test_finite_rank_psi_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            KernelSpec(
                "finite_rank",
                family=FOURIER,
                indices=(0, 1),
                psi=np.array([[1.0, 0.5], [0.0, 1.0]]),
            )

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kernel kind"):
            KernelSpec("matern")


class TestSamplePaths:
    def test_zero_sigma_gives_zero_paths(self):
        samples = sample_paths(np.zeros((3, 3)), n=4, seed=0, grid=uniform_grid(3))
        np.testing.assert_array_equal(samples.data, np.zeros((4, 3)))

    def test_same_seed_bit_identical(self):
        sigma = kernel_to_sigma(KernelSpec("ornstein_uhlenbeck"), uniform_grid(4))
        a = sample_paths(sigma, n=6, seed=42, grid=uniform_grid(4))
        b = sample_paths(sigma, n=6, seed=42, grid=uniform_grid(4))
        assert np.array_equal(a.data, b.data)
        c = sample_paths(sigma, n=6, seed=43, grid=uniform_grid(4))
        assert not np.array_equal(a.data, c.data)

    def test_sample_covariance_matches_sigma(self):
        n = 100_000
        samples = sample_paths(np.eye(2), n=n, seed=7, grid=uniform_grid(2))
        s = samples.data.T @ samples.data / n
        # entrywise 3 SE bands: var of s_jj is 2/n, of s_12 is 1/n
        assert abs(s[0, 0] - 1.0) < 3 * np.sqrt(2 / n)
        assert abs(s[1, 1] - 1.0) < 3 * np.sqrt(2 / n)
        assert abs(s[0, 1]) < 3 * np.sqrt(1 / n)

    def test_rank_deficient_sigma_sampled_exactly(self):
        grid = uniform_grid(8)
        kernel = KernelSpec("finite_rank", family=FOURIER, indices=(0, 1))
        sigma = kernel_to_sigma(kernel, grid)
        samples = sample_paths(sigma, n=5, seed=1, grid=grid)
        assert np.all(np.isfinite(samples.data))

    def test_duplicate_grid_points_rejected(self):
        sigma = np.eye(2)
        with pytest.raises(ValueError, match="strictly increasing"):
            sample_paths(sigma, n=3, seed=0, grid=np.array([0.0, 0.0]))

    def test_psd_factor_rejects_indefinite(self):
        with pytest.raises(np.linalg.LinAlgError):
            psd_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def small_config(**overrides):
    base = dict(
        kernel=KernelSpec("ornstein_uhlenbeck", length_scale=0.5),
        family=FOURIER,
        grid=uniform_grid(4),
        n=30,
        theta=1.0,
        scheme="nested",
        d_max=3,
        reps=40,
        seed=9,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_single_model_single_rep(self):
        cfg = small_config(reps=1, d_max=1)
        report = run_experiment(cfg)
        run = report["runs"][0]
        assert run["data_driven"]["selection_freq"] == {"0": 1.0}
        assert run["data_driven"]["risk_se"] == 0.0
        assert run["data_driven"]["risk_mean"] > 0.0

    def test_identical_configs_identical_reports(self):
        r1 = run_experiment(small_config())
        r2 = run_experiment(small_config())
        assert r1 == r2

    def test_risk_ratio_reported_finite(self):
        report = run_experiment(small_config())
        run = report["runs"][0]
        assert np.isfinite(run["data_driven"]["risk_ratio"])
        assert run["data_driven"]["risk_ratio"] > 0.0
        assert run["data_driven"]["risk_se"] >= 0.0

    def test_risk_ratio_one_sided_bound(self):
        # selection cannot systematically beat the best fixed-model risk
        cfg = small_config(
            kernel=KernelSpec("ornstein_uhlenbeck", length_scale=0.5),
            grid=uniform_grid(8),
            n=50,
            d_max=5,
            reps=400,
            seed=62,
        )
        run = run_experiment(cfg)["runs"][0]
        for mode in ("data_driven", "known_penalty"):
            ratio = run[mode]["risk_ratio"]
            se = run[mode]["risk_ratio_se"]
            assert ratio >= 1.0 - 3.0 * se

    def test_n_grid_rows_and_oracle_monotone(self):
        cfg = small_config(n_grid=(20, 50, 100), reps=10)
        report = run_experiment(cfg)
        assert [run["n"] for run in report["runs"]] == [20, 50, 100]
        oracle_risks = [run["oracle"]["risk"] for run in report["runs"]]
        assert all(b <= a + 1e-15 for a, b in zip(oracle_risks, oracle_risks[1:]))

    def test_threads_do_not_change_results(self, monkeypatch):
        # force several small chunks so the thread pool actually matters
        import covsel.simulate as sim

        original = sim.iter_chunks
        monkeypatch.setattr(
            sim, "iter_chunks", lambda reps, n, p: original(reps, n, p, target_floats=2_000)
        )
        r1 = run_experiment(small_config(reps=64))
        r2 = run_experiment(small_config(reps=64, threads=4))
        assert r1["runs"] == r2["runs"]
        assert r1["config"]["threads"] != r2["config"]["threads"]  # only the echo differs

    def test_diagnostics_block_present_when_requested(self):
        cfg = small_config(diagnostics=True, diagnostics_reps=200, reps=5)
        report = run_experiment(cfg)
        diag = report["runs"][0]["diagnostics"]
        assert "variance_factor_mean" in diag
        assert "underestimation_prob" in diag
        assert 0.0 <= diag["underestimation_prob"]["estimate"] <= 1.0

    def test_per_replication_records_when_requested(self):
        report = run_experiment(small_config(reps=12, keep_replications=True))
        recs = report["runs"][0]["replications"]
        assert len(recs) == 12
        assert [r["rep"] for r in recs] == list(range(12))
        freq = report["runs"][0]["data_driven"]["selection_freq"]
        recomputed = {}
        for rec in recs:
            key = ";".join(str(i) for i in rec["selected"])
            recomputed[key] = recomputed.get(key, 0) + 1 / 12
        assert {k: pytest.approx(v) for k, v in recomputed.items()} == freq

    def test_modal_selection_hits_true_model(self):
        # representable truth: the most frequently selected model has zero bias
        grid = uniform_grid(8)
        kernel = KernelSpec("finite_rank", family=FOURIER, indices=(0, 1, 2))
        cfg = ExperimentConfig(
            kernel=kernel,
            family=FOURIER,
            grid=grid,
            n=300,
            theta=1.0,
            scheme="nested",
            d_max=4,
            reps=60,
            seed=13,
        )
        report = run_experiment(cfg)
        run = report["runs"][0]
        freq = run["data_driven"]["selection_freq"]
        modal = max(freq, key=freq.get)
        biases = {
            ";".join(str(i) for i in rec["indices"]): rec["bias_sq"]
            for rec in run["risk_table"]
        }
        assert biases[modal] < 1e-10

    def test_config_validation(self):
        with pytest.raises(ValueError, match="reps"):
            small_config(reps=0)
        with pytest.raises(ValueError, match="theta"):
            small_config(theta=0.0)
        with pytest.raises(ValueError, match="n_grid"):
            small_config(n_grid=(1, 50))
