"""Diffusion-process analytics: noise schedules, forward sampling, loss
weights, and analytic spectra of noised images.

Steps are 1-based: t runs from 1 to T, and array index t-1 holds step t.
Forward sampling operates on the [-1, 1] pixel domain; use
``to_diffusion_domain`` to map a [0, 1] image before sampling. Everything in
this module that consumes spectra assumes the unnormalized-DFT power
convention of the transforms module.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, ParameterError
from .serialize import read_matrix, write_csv
from .transforms import REDUCED_NORMALIZATION, ReducedSpectrum

WEIGHT_KINDS = ("simple", "vlb_lower", "vlb_upper", "hybrid")
DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_HYBRID_LAMBDA = 0.001


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise levels and the quantities derived from them.

    alpha_bars[t-1] is the cumulative product of (1 - beta) up to step t;
    beta_tildes[t-1] is the posterior variance
    (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t, with alpha_bar_0 = 1
    (so beta_tilde_1 = 0).
    """

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ParameterError("betas must be a nonempty 1D array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ParameterError("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)

    @property
    def T(self) -> int:
        return self.betas.size

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    @property
    def beta_tildes(self) -> np.ndarray:
        alpha_bars = self.alpha_bars
        prev = np.concatenate(([1.0], alpha_bars[:-1]))
        return (1.0 - prev) / (1.0 - alpha_bars) * self.betas

    def alpha_bar(self, t: int) -> float:
        self._check_step(t)
        return float(self.alpha_bars[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ParameterError(f"step t={t} outside 1..{self.T}")


def linear_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Betas linearly spaced from beta_start to beta_end inclusive."""
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def to_diffusion_domain(img: np.ndarray) -> np.ndarray:
    """Map a [0, 1] image to the [-1, 1] domain used by forward sampling."""
    return 2.0 * np.asarray(img, dtype=np.float64) - 1.0


def forward_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps (unclamped)."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise DimensionError(f"x0 shape {x0.shape} does not match eps shape {eps.shape}")
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


@dataclass(frozen=True)
class WeightScheme:
    """Per-step loss weights w(t), t = 1..T at index t-1.

    ``excluded_steps`` lists steps whose weight is undefined and stored as 0
    (only t=1 for the beta_tilde variance choice, where beta_tilde_1 = 0).
    """

    kind: str
    weights: np.ndarray
    lam: float = 0.0
    excluded_steps: tuple[int, ...] = ()

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size < 1:
            raise ParameterError("weights must be a nonempty 1D array")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ParameterError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "excluded_steps", tuple(self.excluded_steps))


def _vlb_weights(sched: NoiseSchedule, variance_bound: str) -> tuple[np.ndarray, tuple[int, ...]]:
    """w(t) = beta_t^2 / (2 sigma_t^2 alpha_t (1 - alpha_bar_t)).

    The denoising variance sigma_t^2 is beta_tilde_t for the lower bound and
    beta_t for the upper bound. beta_tilde_1 = 0 makes the lower-bound weight
    undefined at t=1 (that term is a discrete decoder likelihood, not an MSE
    weight); it is stored as 0 and reported as excluded.
    """
    if variance_bound == "upper":
        sigma_sq = sched.betas
        excluded: tuple[int, ...] = ()
    elif variance_bound == "lower":
        sigma_sq = sched.beta_tildes
        excluded = (1,)
    else:
        raise ParameterError(f"variance_bound must be 'lower' or 'upper', got {variance_bound!r}")
    denom = 2.0 * sigma_sq * sched.alphas * (1.0 - sched.alpha_bars)
    w = np.zeros(sched.T)
    defined = denom > 0.0
    w[defined] = sched.betas[defined] ** 2 / denom[defined]
    return w, excluded


def loss_weights(
    sched: NoiseSchedule,
    kind: str,
    lam: float = DEFAULT_HYBRID_LAMBDA,
    variance_bound: str = "upper",
) -> WeightScheme:
    """Loss weights for one objective.

    * simple:    w(t) = 1
    * vlb_lower: variational-bound weights with sigma_t^2 = beta_tilde_t
    * vlb_upper: variational-bound weights with sigma_t^2 = beta_t
    * hybrid:    1 + lam * w_vlb(t) with the chosen variance bound
    """
    if kind == "simple":
        return WeightScheme(kind="simple", weights=np.ones(sched.T))
    if kind == "vlb_lower":
        w, excluded = _vlb_weights(sched, "lower")
        return WeightScheme(kind="vlb_lower", weights=w, excluded_steps=excluded)
    if kind == "vlb_upper":
        w, _ = _vlb_weights(sched, "upper")
        return WeightScheme(kind="vlb_upper", weights=w)
    if kind == "hybrid":
        if lam < 0:
            raise ParameterError(f"hybrid lambda must be >= 0, got {lam}")
        w_vlb, _ = _vlb_weights(sched, variance_bound)
        return WeightScheme(kind="hybrid", weights=1.0 + lam * w_vlb, lam=lam)
    raise ParameterError(f"unknown weight kind {kind!r}; expected one of {WEIGHT_KINDS}")


def relative_importance(ws: WeightScheme) -> np.ndarray:
    """Weights normalized to sum 1 (excluded steps contribute 0)."""
    total = ws.weights.sum()
    if total <= 0.0:
        raise DataError("cannot normalize an all-zero weight scheme")
    return ws.weights / total


def expected_noised_power_spectrum(
    s0: ReducedSpectrum, t: int, sched: NoiseSchedule, height: int, width: int
) -> ReducedSpectrum:
    """Expected reduced power spectrum after forward diffusion to step t.

    For x_t = sqrt(ab) x0 + sqrt(1-ab) eps with unit white noise, every DFT
    coefficient satisfies E|X_t|^2 = ab * E|X_0|^2 + (1-ab) * H * W (the
    cross term has zero mean and E|DFT(eps)|^2 = H*W everywhere, DC
    included), so radial bin means interpolate between s0 and the flat H*W
    noise floor. s0 must be measured on the [-1, 1] domain with the
    unnormalized-DFT power convention.
    """
    if s0.normalization != REDUCED_NORMALIZATION:
        raise ParameterError(
            f"reduced spectrum uses convention {s0.normalization!r}; "
            f"expected {REDUCED_NORMALIZATION!r}"
        )
    ab = sched.alpha_bar(t)
    bins = ab * s0.bins + (1.0 - ab) * float(height * width)
    if s0.empty_bins:
        bins = bins.copy()
        bins[list(s0.empty_bins)] = 0.0
    return ReducedSpectrum(bins, normalization=s0.normalization, empty_bins=s0.empty_bins)


def mse_by_timestep(pairs: dict[int, tuple[np.ndarray, np.ndarray]]) -> list[dict]:
    """Per-timestep mean and sample std of ||eps - eps_hat||^2 over pairs.

    Each entry of ``pairs`` maps t to two (n, d) matrices whose rows are
    flattened noise grids (true and predicted, row i paired with row i).
    """
    out = []
    for t in sorted(pairs):
        true, pred = pairs[t]
        true = np.asarray(true, dtype=np.float64)
        pred = np.asarray(pred, dtype=np.float64)
        if true.shape != pred.shape:
            raise DimensionError(
                f"t={t}: true grids {true.shape} do not match predicted grids {pred.shape}"
            )
        if true.ndim != 2 or true.shape[0] < 1:
            raise DataError(f"t={t}: need at least one (true, predicted) pair")
        sq_err = ((true - pred) ** 2).sum(axis=1)
        n = sq_err.size
        row = {
            "t": int(t),
            "count": int(n),
            "mean": float(sq_err.mean()),
            "std": float(sq_err.std(ddof=1)) if n > 1 else 0.0,
            "single_pair": n == 1,
        }
        out.append(row)
    return out


def load_timestep_pairs(directory) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Load ``t=<int>.true.bin`` / ``t=<int>.pred.bin`` matrix file pairs."""
    directory = Path(directory)
    pairs: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for true_path in sorted(directory.glob("t=*.true.bin")):
        stem = true_path.name[len("t=") : -len(".true.bin")]
        try:
            t = int(stem)
        except ValueError as exc:
            raise DataError(f"{true_path}: cannot parse timestep from filename") from exc
        pred_path = directory / f"t={stem}.pred.bin"
        if not pred_path.exists():
            raise DataError(f"{pred_path}: missing predicted-noise file for t={t}")
        pairs[t] = (read_matrix(true_path), read_matrix(pred_path))
    if not pairs:
        raise DataError(f"{directory}: no t=<int>.true.bin files found")
    return pairs


def list_timestep_sample_dirs(root) -> dict[int, list[Path]]:
    """Enumerate per-timestep sample directories ``t=<int>/`` under root.

    Each directory holds externally generated image files for that step;
    file lists come back sorted so downstream spectrum averaging is
    deterministic. Use with the transforms module to compare per-step mean
    reduced spectra against a clean reference.
    """
    root = Path(root)
    out: dict[int, list[Path]] = {}
    for entry in sorted(root.iterdir() if root.is_dir() else []):
        if not entry.is_dir() or not entry.name.startswith("t="):
            continue
        try:
            t = int(entry.name[2:])
        except ValueError:
            continue
        out[t] = sorted((p for p in entry.iterdir() if p.is_file()), key=lambda p: p.name)
    if not out:
        raise DataError(f"{root}: no t=<int> sample directories found")
    return out


def write_mse_csv(path, rows: list[dict]) -> None:
    write_csv(
        path,
        ["t", "count", "mean", "std", "single_pair"],
        (
            (r["t"], r["count"], repr(r["mean"]), repr(r["std"]), int(r["single_pair"]))
            for r in rows
        ),
        comments={"metric": "squared_error=||eps-eps_hat||^2; std=sample (ddof=1)"},
    )


def write_schedule_csv(path, sched: NoiseSchedule, lam: float = DEFAULT_HYBRID_LAMBDA,
                       hybrid_bound: str = "upper") -> None:
    """Full schedule + weight table, one row per step t."""
    schemes = {
        "simple": loss_weights(sched, "simple"),
        "vlb_lower": loss_weights(sched, "vlb_lower"),
        "vlb_upper": loss_weights(sched, "vlb_upper"),
        "hybrid": loss_weights(sched, "hybrid", lam=lam, variance_bound=hybrid_bound),
    }
    tilde = {name: relative_importance(ws) for name, ws in schemes.items()}
    alpha_bars = sched.alpha_bars
    beta_tildes = sched.beta_tildes
    header = ["t", "beta", "alpha_bar", "beta_tilde"]
    header += [f"w_{name}" for name in schemes]
    header += [f"w_tilde_{name}" for name in schemes]
    rows = []
    for i in range(sched.T):
        row = [i + 1, repr(float(sched.betas[i])), repr(float(alpha_bars[i])),
               repr(float(beta_tildes[i]))]
        row += [repr(float(schemes[name].weights[i])) for name in schemes]
        row += [repr(float(tilde[name][i])) for name in schemes]
        rows.append(row)
    write_csv(
        path,
        header,
        rows,
        comments={
            "hybrid": f"1 + lambda*w_vlb, lambda={lam}, variance_bound={hybrid_bound}",
            "vlb_lower": "sigma_t^2=beta_tilde_t; t=1 excluded (stored as 0)",
        },
    )
