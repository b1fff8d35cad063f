"""Random fields: white noise, circular Brownian bridge and the weighted Gibbs measure.

All ensemble generators draw member ``i`` from its own substream
``RngStream(master_seed, i)``, so output is bit-reproducible and does not
depend on how members are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import BadModeCount, DegenerateWeights
from .field import GridField, TorusGrid, from_basis_coefficients
from .functionals import hamiltonian_mkdv, log_j_weight

MIN_ESS = 10.0


@dataclass(frozen=True)
class RngStream:
    """Deterministic substream ``stream_id`` of a master seed."""

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))


RngLike = Union[RngStream, np.random.Generator]


def _as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()


def effective_sample_size(log_weights) -> float:
    """``(sum w)^2 / sum w^2`` from unnormalized log-weights."""
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - lw.max()
    w = np.exp(lw)
    return float(w.sum() ** 2 / np.sum(w**2))


@dataclass
class WeightedEnsemble:
    """A batch of fields with importance log-weights (all zeros when uniform)."""

    members: GridField
    log_weights: np.ndarray
    measure: str = "unknown"
    master_seed: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.members.values.ndim != 2:
            raise ValueError("ensemble members must have shape (count, n)")
        if self.log_weights.shape != (self.members.values.shape[0],):
            raise ValueError("one log-weight per member is required")
        if not np.all(np.isfinite(self.log_weights)):
            raise ValueError("log-weights must be finite")

    @classmethod
    def uniform(cls, members: GridField, measure: str = "unknown", master_seed: int = 0, **info):
        return cls(members, np.zeros(members.values.shape[0]), measure, master_seed, dict(info))

    def __len__(self) -> int:
        return self.members.values.shape[0]

    @property
    def n(self) -> int:
        return self.members.n

    @property
    def values(self) -> np.ndarray:
        return self.members.values

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.log_weights == 0.0))

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights - self.log_weights.max()
        w = np.exp(lw)
        return w / w.sum()

    def ess(self) -> float:
        return effective_sample_size(self.log_weights)

    def map(self, func, measure: str | None = None) -> "WeightedEnsemble":
        """Apply a field map to every member, keeping weights and provenance."""
        return WeightedEnsemble(
            func(self.members),
            self.log_weights.copy(),
            measure or self.measure,
            self.master_seed,
            dict(self.info),
        )


def _check_modes(n: int, m_modes: int) -> None:
    if not 1 <= m_modes <= n // 3:
        raise BadModeCount(f"m_modes must lie in [1, n/3] = [1, {n // 3}], got {m_modes}")


def sample_white_noise(n: int, m_modes: int, mean_zero: bool, rng: RngLike) -> GridField:
    """Band-limited white noise ``sum x_k e_k`` over modes ``k <= m_modes``.

    Coefficients ``x_k`` are iid standard normal in the real orthonormal trig
    basis; with ``mean_zero`` the constant mode is omitted.
    """
    TorusGrid(n)
    _check_modes(n, m_modes)
    gen = _as_generator(rng)
    coeffs = gen.standard_normal(2 * m_modes + (0 if mean_zero else 1))
    return from_basis_coefficients(n, coeffs, include_mean=not mean_zero)


def bridge_mode_std(n: int) -> np.ndarray:
    """Per-coefficient standard deviation ``1/(2 pi k)``, ``k = 1..n//3``."""
    k = np.arange(1, n // 3 + 1)
    return np.repeat(1.0 / (2.0 * np.pi * k), 2)


def sample_circular_bridge(n: int, rng: RngLike) -> GridField:
    """Mean-zero circular Brownian motion, truncated at ``k = n//3``.

    Density ``exp(-1/2 int phi_x^2)`` on mean-zero fields makes the cosine
    and sine coefficients of mode ``k`` independent ``N(0, (2 pi k)^-2)``.
    """
    TorusGrid(n)
    gen = _as_generator(rng)
    std = bridge_mode_std(n)
    return from_basis_coefficients(n, std * gen.standard_normal(std.size))


def _ensemble(count: int, master_seed: int, draw) -> np.ndarray:
    return np.stack([draw(RngStream(master_seed, i)).values for i in range(count)])


def white_noise_ensemble(
    count: int, n: int, m_modes: int, master_seed: int, mean_zero: bool = True
) -> WeightedEnsemble:
    values = _ensemble(count, master_seed, lambda s: sample_white_noise(n, m_modes, mean_zero, s))
    name = "white_noise_mean_zero" if mean_zero else "white_noise"
    return WeightedEnsemble.uniform(GridField(TorusGrid(n), values), name, master_seed, m_modes=m_modes)


def bridge_ensemble(count: int, n: int, master_seed: int) -> WeightedEnsemble:
    values = _ensemble(count, master_seed, lambda s: sample_circular_bridge(n, s))
    return WeightedEnsemble.uniform(GridField(TorusGrid(n), values), "circular_bridge", master_seed)


def lattice_gaussian_ensemble(count: int, n: int, master_seed: int, sigma: float = 1.0) -> WeightedEnsemble:
    """Discrete white noise on a lattice: iid ``N(0, sigma^2)`` per site."""
    values = np.stack(
        [sigma * RngStream(master_seed, i).generator().standard_normal(n) for i in range(count)]
    )
    return WeightedEnsemble.uniform(
        GridField(TorusGrid(n), values), "lattice_gaussian", master_seed, sigma=sigma
    )


def p04_log_density(phi: GridField):
    """Log-density of the weighted Gibbs measure relative to ``P0``, up to a constant."""
    return np.asarray(log_j_weight(phi)) - 0.5 * np.mean(phi.values**4, axis=-1)


def sample_p04_importance(m: int, n: int, rng: RngLike | int) -> WeightedEnsemble:
    """Bridge proposals weighted by ``J(phi) exp(-1/2 int phi^4)``.

    ``rng`` may be a master seed (members use substreams ``0..m-1``) or an
    :class:`RngStream`, whose ``stream_id`` is ignored in favour of per-member
    substreams of its master seed.

    Raises:
        DegenerateWeights: if the effective sample size falls below 10.
    """
    if m < 100:
        raise ValueError(f"importance sampling needs m >= 100 proposals, got {m}")
    seed = rng.master_seed if isinstance(rng, RngStream) else int(rng)
    proposals = bridge_ensemble(m, n, seed).members
    log_w = np.asarray(p04_log_density(proposals))
    ess = effective_sample_size(log_w)
    if ess < MIN_ESS:
        raise DegenerateWeights(f"effective sample size {ess:.2f} < {MIN_ESS}")
    return WeightedEnsemble(proposals, log_w, "p04_importance", seed, {"ess": ess})


def sample_p04_pcn(
    m: int,
    n: int,
    burn_in: int,
    beta: float,
    rng: RngLike | int,
    chains: int = 1,
    thin: int = 1,
    start: np.ndarray | None = None,
) -> WeightedEnsemble:
    """Preconditioned Crank-Nicolson chains targeting the weighted Gibbs measure.

    Proposals ``sqrt(1-beta^2) phi + beta xi`` with ``xi`` a fresh bridge draw
    leave ``P0`` invariant, so the acceptance ratio involves only the
    log-density relative to ``P0``. Chains run in lockstep, chain ``c`` using
    substream ``c``; the returned ensemble holds ``m`` states taken round-robin
    from the post-burn-in, thinned chains (chain-major order).

    ``info`` records the overall acceptance rate and the per-chain trace of
    ``H(phi)`` used for convergence diagnostics.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if burn_in < 0 or thin < 1 or chains < 1:
        raise ValueError("burn_in >= 0, thin >= 1 and chains >= 1 are required")
    seed = rng.master_seed if isinstance(rng, RngStream) else int(rng)
    gens = [RngStream(seed, c).generator() for c in range(chains)]
    grid = TorusGrid(n)
    std = bridge_mode_std(n)

    def draw_bridge():
        return np.stack([std * g.standard_normal(std.size) for g in gens])

    if start is None:
        coeffs = np.zeros((chains, std.size))
    else:
        coeffs = np.broadcast_to(np.asarray(start, dtype=float), (chains, std.size)).copy()
    state = from_basis_coefficients(n, coeffs)
    loglik = np.asarray(p04_log_density(state))
    per_chain = -(-m // chains)
    total = burn_in + per_chain * thin
    kept = np.empty((per_chain, chains, n))
    h_trace = np.empty((total, chains))
    accepted = 0
    shrink = np.sqrt(1.0 - beta**2)

    for step in range(total):
        prop_coeffs = shrink * coeffs + beta * draw_bridge()
        prop = from_basis_coefficients(n, prop_coeffs)
        prop_ll = np.asarray(p04_log_density(prop))
        u = np.stack([g.random() for g in gens])
        accept = np.log(u) < prop_ll - loglik
        coeffs[accept] = prop_coeffs[accept]
        loglik[accept] = prop_ll[accept]
        accepted += int(accept.sum())
        state = from_basis_coefficients(n, coeffs)
        h_trace[step] = hamiltonian_mkdv(state)
        if step >= burn_in and (step - burn_in) % thin == thin - 1:
            kept[(step - burn_in) // thin] = state.values

    values = kept.transpose(1, 0, 2).reshape(-1, n)[:m]
    info = {
        "acceptance_rate": accepted / (total * chains),
        "h_trace": h_trace,
        "chains": chains,
        "beta": beta,
        "burn_in": burn_in,
        "thin": thin,
    }
    return WeightedEnsemble.uniform(GridField(grid, values), "p04_pcn", seed, **info)
