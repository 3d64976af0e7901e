import numpy as np
import pytest

from freqforensics.diffusion import (
    NoiseSchedule,
    expected_noised_power_spectrum,
    forward_sample,
    linear_schedule,
    list_timestep_sample_dirs,
    load_timestep_pairs,
    loss_weights,
    mse_by_timestep,
    relative_importance,
    to_diffusion_domain,
    write_mse_csv,
    write_schedule_csv,
)
from freqforensics.errors import DataError, DimensionError, ParameterError
from freqforensics.serialize import write_matrix
from freqforensics.transforms import ReducedSpectrum, dft2, reduce_spectrum


class TestSchedule:
    def test_single_step(self):
        sched = linear_schedule(1, 0.01, 0.01)
        assert sched.T == 1
        assert sched.betas[0] == 0.01
        assert sched.alpha_bars[0] == pytest.approx(0.99, abs=1e-15)

    def test_hand_two_step(self):
        sched = NoiseSchedule(np.array([0.1, 0.2]))
        assert np.allclose(sched.alpha_bars, [0.9, 0.72], atol=1e-15)
        assert sched.beta_tildes[0] == 0.0
        assert sched.beta_tildes[1] == pytest.approx((1 - 0.9) / (1 - 0.72) * 0.2, abs=1e-15)

    def test_default_schedule_ends_near_pure_noise(self):
        sched = linear_schedule()
        assert sched.T == 1000
        assert sched.alpha_bars[-1] < 1e-4

    def test_invariants(self):
        sched = linear_schedule(100)
        assert np.all(np.diff(sched.alpha_bars) < 0)
        assert np.all(sched.beta_tildes <= sched.betas)
        assert np.all(sched.beta_tildes >= 0)
        assert sched.beta_tildes[0] == 0.0
        assert np.all((sched.alphas > 0) & (sched.alphas < 1))

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            linear_schedule(0)
        with pytest.raises(ParameterError):
            linear_schedule(10, 0.0, 0.02)
        with pytest.raises(ParameterError):
            linear_schedule(10, 0.02, 0.01)
        with pytest.raises(ParameterError):
            NoiseSchedule(np.array([1.0]))


class TestForwardSample:
    def test_near_zero_beta_is_identity(self):
        sched = NoiseSchedule(np.array([1e-15]))
        x0 = np.linspace(-1, 1, 16).reshape(4, 4)
        xt = forward_sample(x0, 1, np.zeros((4, 4)), sched)
        assert np.allclose(xt, x0, atol=1e-12)

    def test_zero_noise_gives_deterministic_part(self):
        sched = linear_schedule(10)
        x0 = np.full((3, 3), 0.5)
        xt = forward_sample(x0, 7, np.zeros((3, 3)), sched)
        assert np.allclose(xt, np.sqrt(sched.alpha_bar(7)) * 0.5, atol=1e-15)

    def test_moment_contract(self):
        sched = linear_schedule(100)
        t = 60
        rng = np.random.default_rng(0)
        x0 = np.full(100_000, 0.3)
        eps = rng.standard_normal(100_000)
        xt = forward_sample(x0, t, eps, sched)
        residual = xt - np.sqrt(sched.alpha_bar(t)) * x0
        assert abs(residual.var() - (1 - sched.alpha_bar(t))) / (1 - sched.alpha_bar(t)) < 0.02
        assert abs(residual.mean()) < 0.02

    def test_domain_mapping(self):
        img = np.array([[0.0, 0.5, 1.0]])
        assert np.array_equal(to_diffusion_domain(img), [[-1.0, 0.0, 1.0]])

    def test_dimension_mismatch(self):
        sched = linear_schedule(10)
        with pytest.raises(DimensionError):
            forward_sample(np.zeros((2, 2)), 1, np.zeros((3, 3)), sched)

    def test_step_out_of_range(self):
        sched = linear_schedule(10)
        with pytest.raises(ParameterError):
            forward_sample(np.zeros((2, 2)), 11, np.zeros((2, 2)), sched)


class TestLossWeights:
    def test_simple_is_all_ones(self):
        sched = linear_schedule(50)
        ws = loss_weights(sched, "simple")
        assert np.all(ws.weights == 1.0)

    def test_vlb_upper_t1_closed_form(self):
        # sigma^2 = beta_1 and 1 - alpha_bar_1 = beta_1 give w(1) = 1/(2 alpha_1)
        sched = linear_schedule(1000, 1e-4, 0.02)
        ws = loss_weights(sched, "vlb_upper")
        assert ws.weights[0] == pytest.approx(1.0 / (2.0 * (1.0 - 1e-4)), rel=1e-12)
        assert ws.weights[0] == pytest.approx(0.50005, abs=1e-6)

    def test_vlb_upper_spikes_at_t1(self):
        sched = linear_schedule()
        w = loss_weights(sched, "vlb_upper").weights
        assert w.argmax() == 0  # t = 1
        assert w[0] > 10.0 * w[99]  # w(1) > 10 w(100)
        assert np.all(w[0] > w[9:])  # strictly above every t >= 10

    def test_vlb_lower_excludes_t1(self):
        sched = linear_schedule(100)
        ws = loss_weights(sched, "vlb_lower")
        assert ws.excluded_steps == (1,)
        assert ws.weights[0] == 0.0
        assert np.all(ws.weights[1:] > 0)

    def test_hybrid_is_one_plus_lambda_vlb(self):
        sched = linear_schedule(100)
        vlb = loss_weights(sched, "vlb_upper").weights
        hybrid = loss_weights(sched, "hybrid", lam=0.001).weights
        assert np.allclose(hybrid, 1.0 + 0.001 * vlb, rtol=1e-14)

    def test_hybrid_lower_bound_variant(self):
        sched = linear_schedule(100)
        vlb = loss_weights(sched, "vlb_lower").weights
        hybrid = loss_weights(sched, "hybrid", lam=0.001, variance_bound="lower").weights
        assert hybrid[0] == 1.0  # t=1 keeps only the simple part
        assert np.allclose(hybrid[1:], 1.0 + 0.001 * vlb[1:], rtol=1e-14)

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            loss_weights(linear_schedule(10), "nope")


class TestRelativeImportance:
    def test_simple_uniform(self):
        sched = linear_schedule(1000)
        tilde = relative_importance(loss_weights(sched, "simple"))
        assert np.allclose(tilde, 1.0 / 1000.0, atol=1e-15)

    @pytest.mark.parametrize("kind", ["simple", "vlb_lower", "vlb_upper", "hybrid"])
    def test_sums_to_one(self, kind):
        sched = linear_schedule(500)
        tilde = relative_importance(loss_weights(sched, kind))
        assert abs(tilde.sum() - 1.0) < 1e-12

    def test_scale_invariance(self):
        sched = linear_schedule(100)
        ws = loss_weights(sched, "vlb_upper")
        scaled = type(ws)(kind=ws.kind, weights=ws.weights * 37.0, lam=ws.lam,
                          excluded_steps=ws.excluded_steps)
        assert np.allclose(relative_importance(ws), relative_importance(scaled), rtol=1e-12)

    def test_all_zero_rejected(self):
        ws = loss_weights(linear_schedule(10), "simple")
        zero = type(ws)(kind="simple", weights=np.zeros(10))
        with pytest.raises(DataError):
            relative_importance(zero)


class TestExpectedNoisedSpectrum:
    def test_no_noise_limit_returns_s0(self):
        sched = NoiseSchedule(np.array([1e-12]))
        s0 = ReducedSpectrum(np.array([100.0, 10.0, 1.0]))
        out = expected_noised_power_spectrum(s0, 1, sched, 64, 64)
        assert np.allclose(out.bins, s0.bins, rtol=1e-9)

    def test_pure_noise_limit_is_flat(self):
        sched = NoiseSchedule(np.full(40, 0.999))
        s0 = ReducedSpectrum(np.array([100.0, 10.0, 1.0]))
        out = expected_noised_power_spectrum(s0, 40, sched, 64, 64)
        assert np.allclose(out.bins, 64 * 64, rtol=1e-12)

    def test_linear_interpolation_in_alpha_bar(self):
        sched = linear_schedule(100)
        s0 = ReducedSpectrum(np.array([50.0, 5.0]))
        t = 30
        ab = sched.alpha_bar(t)
        out = expected_noised_power_spectrum(s0, t, sched, 8, 8)
        assert np.allclose(out.bins, ab * s0.bins + (1 - ab) * 64.0, rtol=1e-14)

    def test_convention_mismatch_flagged(self):
        s0 = ReducedSpectrum(np.array([1.0, 2.0]), normalization="something-else")
        with pytest.raises(ParameterError):
            expected_noised_power_spectrum(s0, 1, linear_schedule(10), 8, 8)

    def test_monte_carlo_small(self):
        # light version of the forward-diffusion law check (full in acceptance)
        rng = np.random.default_rng(42)
        h = w = 16
        n = 256
        images = [np.clip(0.6 + 0.15 * rng.standard_normal((h, w)), 0, 1) for _ in range(n)]
        mapped = [to_diffusion_domain(img) for img in images]
        s0_bins = np.mean([reduce_spectrum(dft2(m)).bins for m in mapped], axis=0)
        s0 = ReducedSpectrum(s0_bins)
        sched = linear_schedule(100)
        t = 60
        predicted = expected_noised_power_spectrum(s0, t, sched, h, w)
        noised_bins = np.mean(
            [
                reduce_spectrum(dft2(forward_sample(m, t, rng.standard_normal((h, w)), sched))).bins
                for m in mapped
            ],
            axis=0,
        )
        rel = np.abs(noised_bins - predicted.bins) / predicted.bins
        assert rel.max() < 0.15


class TestMseByTimestep:
    def test_perfect_predictor(self):
        grids = np.random.default_rng(0).random((5, 12))
        rows = mse_by_timestep({3: (grids, grids.copy())})
        assert rows == [{"t": 3, "count": 5, "mean": 0.0, "std": 0.0, "single_pair": False}]

    def test_zero_predictor_on_unit_noise(self):
        rng = np.random.default_rng(1)
        d = 256
        true = rng.standard_normal((2000, d))
        rows = mse_by_timestep({1: (true, np.zeros_like(true))})
        assert abs(rows[0]["mean"] - d) / d < 0.05

    def test_single_pair_flagged(self):
        rows = mse_by_timestep({2: (np.ones((1, 4)), np.zeros((1, 4)))})
        assert rows[0]["single_pair"] is True
        assert rows[0]["std"] == 0.0
        assert rows[0]["mean"] == 4.0

    def test_dimension_mismatch_names_timestep(self):
        with pytest.raises(DimensionError, match="t=9"):
            mse_by_timestep({9: (np.ones((2, 4)), np.ones((2, 5)))})

    def test_file_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        for t in (1, 10):
            write_matrix(tmp_path / f"t={t}.true.bin", rng.random((3, 8)))
            write_matrix(tmp_path / f"t={t}.pred.bin", rng.random((3, 8)))
        pairs = load_timestep_pairs(tmp_path)
        assert sorted(pairs) == [1, 10]
        rows = mse_by_timestep(pairs)
        out = tmp_path / "mse.csv"
        write_mse_csv(out, rows)
        lines = out.read_text().splitlines()
        assert lines[1] == "t,count,mean,std,single_pair"
        assert len(lines) == 4

    def test_missing_pred_file(self, tmp_path):
        write_matrix(tmp_path / "t=5.true.bin", np.ones((2, 2)))
        with pytest.raises(DataError, match="t=5"):
            load_timestep_pairs(tmp_path)


class TestTimestepSampleDirs:
    def test_enumeration_sorted(self, tmp_path):
        for t in (0, 10, 300):
            d = tmp_path / f"t={t}"
            d.mkdir()
            (d / "b.png").write_bytes(b"x")
            (d / "a.png").write_bytes(b"x")
        (tmp_path / "notes").mkdir()  # ignored
        dirs = list_timestep_sample_dirs(tmp_path)
        assert sorted(dirs) == [0, 10, 300]
        assert [p.name for p in dirs[10]] == ["a.png", "b.png"]

    def test_empty_root_rejected(self, tmp_path):
        with pytest.raises(DataError):
            list_timestep_sample_dirs(tmp_path)


def test_schedule_csv_export(tmp_path):
    sched = NoiseSchedule(np.array([0.1, 0.2]))
    path = tmp_path / "sched.csv"
    write_schedule_csv(path, sched)
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    assert header[:4] == ["t", "beta", "alpha_bar", "beta_tilde"]
    assert "w_simple" in header and "w_tilde_hybrid" in header
    row1 = dict(zip(header, lines[1].split(",")))
    row2 = dict(zip(header, lines[2].split(",")))
    assert float(row1["alpha_bar"]) == pytest.approx(0.9)
    assert float(row2["beta_tilde"]) == pytest.approx((1 - 0.9) / (1 - 0.72) * 0.2)
    assert float(row1["w_simple"]) == 1.0
    # relative importance columns sum to 1
    for name in ("w_tilde_simple", "w_tilde_vlb_lower", "w_tilde_vlb_upper", "w_tilde_hybrid"):
        total = float(row1[name]) + float(row2[name])
        assert total == pytest.approx(1.0, abs=1e-9)
