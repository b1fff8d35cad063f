"""Statistical tests on (weighted) field ensembles.

Reports answer two questions: does an ensemble look like white noise, and do
two ensembles agree in law. Every statistic is a nonnegative discrepancy that
passes when it does not exceed its threshold. Thresholds within a report are
Bonferroni-corrected so that the overall verdict is a test at level ``alpha``;
``nominal`` thresholds (uncorrected, per statistic) are kept alongside for
calibration studies.

Weighted ensembles are handled by self-normalized weights, with the
effective sample size standing in for the sample count.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogi, ndtr, ndtri

from .errors import DegenerateWeights, GridMismatch, TooFewSamples
from .field import GridField, basis_coefficients, basis_labels
from .samplers import WeightedEnsemble, effective_sample_size

KS_CRIT_1PCT = 1.63
DEFAULT_ALPHA = 0.01


# ---------------------------------------------------------------- reports


@dataclass
class Statistic:
    label: str
    value: float
    threshold: float | None = None
    nominal_threshold: float | None = None
    kind: str = "max"  # "max": value <= threshold passes; "min": value >= threshold passes

    def _check(self, bound):
        if bound is None:
            return None
        return bool(self.value <= bound) if self.kind == "max" else bool(self.value >= bound)

    @property
    def verdict(self) -> bool | None:
        return self._check(self.threshold)

    @property
    def nominal_verdict(self) -> bool | None:
        return self._check(self.nominal_threshold)


@dataclass
class TestReport:
    name: str
    sample_count: float
    statistics: list[Statistic] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    __test__ = False  # not a pytest class

    def add(self, label, value, threshold=None, nominal=None, kind="max") -> Statistic:
        if kind not in ("max", "min"):
            raise ValueError("kind must be 'max' or 'min'")
        stat = Statistic(label, float(value), None if threshold is None else float(threshold),
                         None if nominal is None else float(nominal), kind)
        self.statistics.append(stat)
        return stat

    def __getitem__(self, label: str) -> Statistic:
        for s in self.statistics:
            if s.label == label:
                return s
        raise KeyError(label)

    @property
    def passed(self) -> bool:
        return all(s.verdict is not False for s in self.statistics)

    def failures(self, prefix: str = "") -> list[Statistic]:
        return [s for s in self.statistics if s.verdict is False and s.label.startswith(prefix)]

    def nominal_failure_fraction(self, prefix: str = "") -> float:
        tested = [s for s in self.statistics if s.nominal_threshold is not None and s.label.startswith(prefix)]
        if not tested:
            return 0.0
        return sum(not s.nominal_verdict for s in tested) / len(tested)

    def to_text(self) -> str:
        lines = [f"report: {self.name}", f"samples: {_fmt(self.sample_count)}",
                 f"verdict: {'PASS' if self.passed else 'FAIL'}"]
        for note in self.notes:
            lines.append(f"note: {note}")
        for s in self.statistics:
            verdict = {True: "pass", False: "FAIL", None: "info"}[s.verdict]
            thr = "-" if s.threshold is None else ("<=" if s.kind == "max" else ">=") + _fmt(s.threshold)
            lines.append(f"stat {s.label} value={_fmt(s.value)} threshold={thr} verdict={verdict}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["report", "statistic", "value", "threshold", "bound", "verdict"])
        for s in self.statistics:
            verdict = {True: "pass", False: "fail", None: ""}[s.verdict]
            thr = "" if s.threshold is None else _fmt(s.threshold)
            bound = "" if s.threshold is None else ("upper" if s.kind == "max" else "lower")
            writer.writerow([self.name, s.label, _fmt(s.value), thr, bound, verdict])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.10g}"


# ---------------------------------------------------------------- primitives


def _normalize(weights, count: int) -> np.ndarray:
    if weights is None:
        return np.full(count, 1.0 / count)
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


def weighted_ecdf_distance_to(samples, cdf, weights=None) -> float:
    """Sup distance between the weighted empirical CDF and ``cdf``."""
    x = np.asarray(samples, dtype=float)
    w = _normalize(weights, x.size)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    # collapse ties so the ECDF jumps once per distinct value
    uniq, start = np.unique(x, return_index=True)
    cum = np.cumsum(w)
    upper = cum[np.r_[start[1:] - 1, x.size - 1]]
    lower = np.r_[0.0, upper[:-1]]
    f = cdf(uniq)
    return float(max(np.max(upper - f), np.max(f - lower), 0.0))


def ks_normal(samples, weights=None) -> tuple[float, bool]:
    """One-sample KS distance to the standard normal.

    Returns ``(statistic, critical_flag)``; the flag is set when the statistic
    exceeds ``1.63/sqrt(m)`` (1% level), where ``m`` is the sample count or,
    for weighted samples, the effective sample size.

    Raises:
        TooFewSamples: with fewer than 50 samples.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 50:
        raise TooFewSamples(f"ks_normal needs at least 50 samples, got {x.size}")
    stat = weighted_ecdf_distance_to(x, ndtr, weights)
    m = x.size if weights is None else _ess_from_weights(weights)
    return stat, bool(stat > KS_CRIT_1PCT / np.sqrt(m))


def _ess_from_weights(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w**2))


def weighted_ks_2samp(x, y, wx=None, wy=None) -> float:
    """Sup distance between two weighted empirical CDFs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    wx = _normalize(wx, x.size)
    wy = _normalize(wy, y.size)
    grid = np.unique(np.concatenate([x, y]))
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    cx = np.r_[0.0, np.cumsum(wx[ox])]
    cy = np.r_[0.0, np.cumsum(wy[oy])]
    fx = cx[np.searchsorted(x[ox], grid, side="right")]
    fy = cy[np.searchsorted(y[oy], grid, side="right")]
    return float(np.max(np.abs(fx - fy)))


def ks_threshold(alpha: float, m_eff: float) -> float:
    """Asymptotic one-sample KS critical value at level ``alpha``."""
    return float(kolmogi(alpha) / np.sqrt(m_eff))


def ks2_threshold(alpha: float, m0: float, m1: float) -> float:
    return float(kolmogi(alpha) * np.sqrt((m0 + m1) / (m0 * m1)))


def normal_quantile_two_sided(alpha: float) -> float:
    return float(ndtri(1.0 - alpha / 2.0))


def weighted_moments(coeffs: np.ndarray, w: np.ndarray):
    """Weighted mean vector and covariance matrix (self-normalized)."""
    mean = w @ coeffs
    centered = coeffs - mean
    cov = (centered * w[:, None]).T @ centered
    return mean, cov


def energy_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Unweighted energy distance between point clouds (rows are points)."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    pooled = np.vstack([x, y])
    dist = _pairwise(pooled)
    return _energy_from_dist(dist, x.shape[0])


def _pairwise(p: np.ndarray) -> np.ndarray:
    sq = np.sum(p**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * p @ p.T
    return np.sqrt(np.maximum(d2, 0.0))


def _energy_from_dist(dist: np.ndarray, nx: int, perm: np.ndarray | None = None) -> float:
    if perm is not None:
        dist = dist[np.ix_(perm, perm)]
    dxy = dist[:nx, nx:].mean()
    dxx = dist[:nx, :nx].mean()
    dyy = dist[nx:, nx:].mean()
    return float(2.0 * dxy - dxx - dyy)


def resample_indices(weights: np.ndarray, size: int, seed: int) -> np.ndarray:
    """Systematic resampling of ``size`` indices according to ``weights``."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    u0 = np.random.default_rng(seed).random()
    positions = (u0 + np.arange(size)) / size
    return np.minimum(np.searchsorted(np.cumsum(w), positions), w.size - 1)


def _subsample(e: WeightedEnsemble, size: int, seed: int) -> np.ndarray:
    count = len(e)
    if e.is_uniform:
        if count <= size:
            return np.arange(count)
        return np.sort(np.random.default_rng(seed).choice(count, size, replace=False))
    return resample_indices(e.normalized_weights(), size, seed)


# ---------------------------------------------------------------- probes


@dataclass(frozen=True)
class Probe:
    """Test function ``lambda`` expressed in basis coordinates (``cos1, sin1, ...``)."""

    label: str
    direction: np.ndarray

    @property
    def norm2(self) -> float:
        return float(self.direction @ self.direction)


def default_probes(k_max: int) -> list[Probe]:
    """Zero probe, single modes ``sqrt2 cos/sin 2 pi k x`` for ``k <= min(4, k_max)``,
    and normalized mixtures of neighbouring basis functions."""
    dim = 2 * k_max
    probes = [Probe("zero", np.zeros(dim))]
    labels = basis_labels(k_max)
    top = 2 * min(4, k_max)
    for j in range(top):
        d = np.zeros(dim)
        d[j] = 1.0
        probes.append(Probe(labels[j], d))
    for j in range(top - 1):
        d = np.zeros(dim)
        d[j] = d[j + 1] = 1.0 / np.sqrt(2.0)
        probes.append(Probe(f"({labels[j]}+{labels[j + 1]})/sqrt2", d))
    return probes


# ---------------------------------------------------------------- reports


def _ensemble_weights(e: WeightedEnsemble, min_ess: float = 1.0):
    if len(e) == 0:
        raise ValueError("ensemble is empty")
    w = e.normalized_weights()
    ess = e.ess()
    if ess < min_ess:
        raise DegenerateWeights(f"effective sample size {ess:.2f} too small")
    return w, ess


def whiteness_report(
    e: WeightedEnsemble,
    k_max: int,
    alpha: float = DEFAULT_ALPHA,
    probes: list[Probe] | None = None,
    name: str = "whiteness",
) -> TestReport:
    """Compare an ensemble's low-mode coordinates with iid standard normals.

    Per basis coordinate up to ``k_max``: weighted mean, variance and KS
    distance to ``N(0,1)``; the largest off-diagonal covariance; and for each
    probe ``lambda`` the error of the empirical characteristic functional
    against ``exp(-|lambda|^2/2)``.

    Raises:
        DegenerateWeights: if the effective sample size is below 2.
    """
    if k_max > e.n // 3:
        raise ValueError(f"k_max={k_max} exceeds the band limit n/3={e.n // 3}")
    w, ess = _ensemble_weights(e, min_ess=2.0)
    coeffs = basis_coefficients(e.members, k_max)
    labels = basis_labels(k_max)
    dim = coeffs.shape[1]
    probes = default_probes(k_max) if probes is None else probes
    n_tests = 3 * dim + 1 + len(probes)
    a_adj = alpha / n_tests
    z = normal_quantile_two_sided(a_adj)
    z_nom = normal_quantile_two_sided(alpha)
    se_mean = 1.0 / np.sqrt(ess)
    se_var = np.sqrt(2.0 / ess)

    report = TestReport(name, ess)
    report.notes.append(f"members={len(e)} ess={_fmt(ess)} k_max={k_max} alpha={alpha} "
                        f"bonferroni_tests={n_tests}")
    mean, cov = weighted_moments(coeffs, w)
    second = w @ coeffs**2
    for j, lab in enumerate(labels):
        report.add(f"mean:{lab}", abs(mean[j]), z * se_mean, z_nom * se_mean)
    for j, lab in enumerate(labels):
        report.add(f"var:{lab}", abs(second[j] - 1.0), z * se_var, z_nom * se_var)
    for j, lab in enumerate(labels):
        stat = weighted_ecdf_distance_to(coeffs[:, j], ndtr, w)
        report.add(f"ks:{lab}", stat, ks_threshold(a_adj, ess), ks_threshold(alpha, ess))
    if dim > 1:
        off = np.abs(cov - np.diag(np.diag(cov)))
        n_pairs = dim * (dim - 1) // 2
        z_pairs = normal_quantile_two_sided(a_adj / n_pairs)
        report.add("max_offdiag_cov", off.max(), z_pairs * se_mean,
                   normal_quantile_two_sided(alpha / n_pairs) * se_mean)
    # P(|err| > r*se) <= exp(-r^2/2) however the variance splits between cos and sin parts
    r = np.sqrt(-2.0 * np.log(a_adj))
    r_nom = np.sqrt(-2.0 * np.log(alpha))
    for p in probes:
        proj = coeffs @ p.direction
        cos_m, sin_m = w @ np.cos(proj), w @ np.sin(proj)
        target = np.exp(-0.5 * p.norm2)
        err = np.hypot(cos_m - target, sin_m)
        var = w @ (np.cos(proj) - cos_m) ** 2 + w @ (np.sin(proj) - sin_m) ** 2
        se = np.sqrt(var / ess)
        # round-off floor: the zero probe compares 1 with 1
        report.add(f"charfun:{p.label}", err, max(r * se, 1e-12), max(r_nom * se, 1e-12))
    return report


def two_sample_report(
    e0: WeightedEnsemble,
    e1: WeightedEnsemble,
    k_max: int,
    alpha: float = DEFAULT_ALPHA,
    coordinates: str = "modes",
    energy_modes: int = 2,
    energy_subsample: int = 500,
    permutations: int = 199,
    seed: int = 0,
    name: str = "two_sample",
) -> TestReport:
    """Equality-in-law test: per-coordinate two-sample KS plus a permutation
    energy-distance test on the joint coordinates of modes ``k <= energy_modes``.

    ``coordinates="modes"`` tests basis coordinates up to ``k_max``;
    ``coordinates="sites"`` tests raw lattice site values (``k_max`` unused)
    and runs the energy test on the first ``2*energy_modes`` sites.

    Raises:
        GridMismatch: if the ensembles live on different grids.
    """
    if e0.n != e1.n:
        raise GridMismatch(f"grid sizes differ: {e0.n} vs {e1.n}")
    w0, ess0 = _ensemble_weights(e0)
    w1, ess1 = _ensemble_weights(e1)
    if coordinates == "modes":
        c0 = basis_coefficients(e0.members, k_max)
        c1 = basis_coefficients(e1.members, k_max)
        labels = basis_labels(k_max)
    elif coordinates == "sites":
        c0, c1 = e0.values, e1.values
        labels = [f"site{i}" for i in range(e0.n)]
        k_max = e0.n // 2
    else:
        raise ValueError("coordinates must be 'modes' or 'sites'")
    use_energy = energy_modes > 0 and permutations > 0
    n_tests = len(labels) + (1 if use_energy else 0)
    a_adj = alpha / n_tests
    report = TestReport(name, min(ess0, ess1))
    report.notes.append(f"members=({len(e0)},{len(e1)}) ess=({_fmt(ess0)},{_fmt(ess1)}) "
                        f"k_max={k_max} alpha={alpha} bonferroni_tests={n_tests}")
    thr = ks2_threshold(a_adj, ess0, ess1)
    nom = ks2_threshold(alpha, ess0, ess1)
    for j, lab in enumerate(labels):
        stat = weighted_ks_2samp(c0[:, j], c1[:, j], w0, w1)
        report.add(f"ks2:{lab}", stat, thr, nom)
    if use_energy:
        dims = 2 * min(energy_modes, k_max)
        x = c0[_subsample(e0, energy_subsample, seed), :dims]
        y = c1[_subsample(e1, energy_subsample, seed), :dims]
        dist = _pairwise(np.vstack([x, y]))
        observed = _energy_from_dist(dist, x.shape[0])
        rng = np.random.default_rng(seed + 1)
        null = np.array([
            _energy_from_dist(dist, x.shape[0], rng.permutation(dist.shape[0]))
            for _ in range(permutations)
        ])
        crit = float(np.quantile(null, 1.0 - a_adj))
        report.add(f"energy_distance:{labels[0]}..{labels[dims - 1]}", observed, crit, float(np.quantile(null, 1.0 - alpha)))
        report.notes.append(f"energy permutation p-value={_fmt((1 + np.sum(null >= observed)) / (1 + permutations))}")
    return report


# ---------------------------------------------------------------- correlation


@dataclass
class CorrelationTable:
    t: float
    x: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    count: int

    def rows(self):
        for xi, v, s in zip(self.x, self.value, self.stderr):
            yield (self.t, float(xi), float(v), float(s))


def correlation_function(initial: GridField, evolved: GridField, probe_idx, t: float = 0.0,
                         weights=None) -> CorrelationTable:
    """Estimate ``S(x, t) = E[f(0) (S_t f)(x)]`` at grid indices ``probe_idx``.

    Raises:
        TooFewSamples: with fewer than 100 pairs.
    """
    f0 = np.asarray(initial.values)
    ft = np.asarray(evolved.values)
    if f0.ndim != 2 or f0.shape != ft.shape:
        raise ValueError("initial and evolved must be matching ensembles of shape (count, n)")
    count = f0.shape[0]
    if count < 100:
        raise TooFewSamples(f"correlation_function needs at least 100 pairs, got {count}")
    idx = np.asarray(probe_idx, dtype=int)
    prod = f0[:, :1] * ft[:, idx]
    w = _normalize(weights, count)
    mean = w @ prod
    ess = count if weights is None else _ess_from_weights(weights)
    var = w @ (prod - mean) ** 2
    return CorrelationTable(float(t), idx / f0.shape[1], mean, np.sqrt(var / ess), count)


def white_noise_covariance(x, m_modes: int, mean_zero: bool = True) -> np.ndarray:
    """Covariance ``E[u(0) u(x)] = sum_k e_k(0) e_k(x)`` of band-limited white noise."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, m_modes + 1)
    out = 2.0 * np.cos(2.0 * np.pi * np.multiply.outer(x, k)).sum(axis=-1)
    return out if mean_zero else out + 1.0


# ---------------------------------------------------------------- MCMC helpers


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor for an array of shape ``(chains, draws)``."""
    x = np.asarray(chains, dtype=float)
    m, n = x.shape
    means = x.mean(axis=1)
    within = x.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))


def batch_means_se(x, n_batches: int = 20) -> float:
    """Standard error of the mean of a correlated series via batch means."""
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    if size < 1:
        raise TooFewSamples("series shorter than the number of batches")
    batches = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(batches.std(ddof=1) / np.sqrt(n_batches))


def weighted_mean_se(values, log_weights) -> tuple[float, float]:
    """Self-normalized importance estimate and its delta-method standard error."""
    v = np.asarray(values, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    mean = float(w @ v)
    se = float(np.sqrt(np.sum(w**2 * (v - mean) ** 2)))
    return mean, se


__all__ = [
    "TestReport", "Statistic", "ks_normal", "weighted_ks_2samp", "whiteness_report",
    "two_sample_report", "correlation_function", "white_noise_covariance", "gelman_rubin",
    "batch_means_se", "weighted_mean_se", "energy_distance", "effective_sample_size",
]
