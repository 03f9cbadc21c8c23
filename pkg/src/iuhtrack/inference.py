"""Metropolis-Hastings posterior simulation of IUH parameters.

A fit runs a coarse grid search for the starting point, a random-walk
Metropolis-Hastings chain with a componentwise uniform proposal and a uniform
prior on a :class:`ParamBox`, and a fixed-point update of the Gaussian noise
variance from the posterior mean.

Chains for several episodes can be advanced in lockstep (one numpy operation
per iteration for the whole batch). Every chain draws from its own generator
in fixed-size blocks, so a chain's sample path depends only on its episode
and seed, never on which other episodes share the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from iuhtrack.ingest import EpisodeData
from iuhtrack.iuh_model import (
    DEFAULT_HORIZON,
    DailySeries,
    IuhParams,
    convolve,
    gamma_kernel,
    kernel_weights,
    lag_matrix,
)

_DRAW_BLOCK = 1024
_BATCH = 64
# relative floor keeping sigma2 > 0 when the fit is exact
_SIGMA2_FLOOR = 1e-14


@dataclass(frozen=True)
class ParamBox:
    lower: tuple[float, float, float] = (0.0, 0.0, 0.0)
    upper: tuple[float, float, float] = (0.6, 6.0, 10.0)

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box bounds must be triples")
        if not np.all(lo < hi):
            raise ValueError(f"box lower {self.lower} must be below upper {self.upper}")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, params) -> np.ndarray | bool:
        x = params.as_array() if isinstance(params, IuhParams) else np.asarray(params, float)
        inside = np.all((x >= self.lo) & (x <= self.hi), axis=-1)
        return bool(inside) if np.ndim(inside) == 0 else inside

    def grid_centers(self, per_dim: int) -> np.ndarray:
        """Cell centers of a ``per_dim``-per-axis grid, lexicographic in (lam, k, theta)."""
        axes = [
            lo + (np.arange(per_dim) + 0.5) * (hi - lo) / per_dim
            for lo, hi in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        shape = (3,) if size is None else (size, 3)
        return rng.uniform(self.lo, self.hi, size=shape)


DEFAULT_BOX = ParamBox()


@dataclass(frozen=True)
class ChainConfig:
    n_samples: int = 20_000
    burn_in: int = 5_000
    step_fraction: float = 0.01
    grid_per_dim: int = 10
    sigma2_iterations: int = 1
    rng_seed: int = 0
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_samples:
            raise ValueError("burn_in must be in [0, n_samples)")
        if not 0 < self.step_fraction <= 1:
            raise ValueError("step_fraction must be in (0, 1]")
        if self.grid_per_dim < 2:
            raise ValueError("grid_per_dim must be at least 2")
        if self.sigma2_iterations < 0:
            raise ValueError("sigma2_iterations must be non-negative")


@dataclass(frozen=True)
class PosteriorSummary:
    """Retained chain samples and the quantities derived from them.

    ``sigma2`` is the noise variance used by the final chain;
    ``sigma2_history`` lists every value in the fixed-point sequence, starting
    with the grid-search estimate.
    """

    samples: np.ndarray
    mean: IuhParams
    sigma2: float
    acceptance_rate: float
    init: IuhParams
    sigma2_history: tuple[float, ...] = field(default=())

    @property
    def std(self) -> np.ndarray:
        return self.samples.std(axis=0, ddof=1)

    def interval(self, level: float = 0.95) -> tuple[IuhParams, IuhParams]:
        tail = 100 * (1 - level) / 2
        lo, hi = np.percentile(self.samples, [tail, 100 - tail], axis=0)
        return IuhParams.from_array(lo), IuhParams.from_array(hi)


def sse(rain: DailySeries, runoff_obs: DailySeries, params: IuhParams,
        horizon: int = DEFAULT_HORIZON) -> float:
    """Sum of squared differences between observed and simulated runoff."""
    if len(rain) != len(runoff_obs):
        raise ValueError(f"length mismatch: rain {len(rain)} vs runoff {len(runoff_obs)}")
    sim = convolve(rain, gamma_kernel(params, horizon)).values
    return float(np.sum((runoff_obs.values - sim) ** 2))


def acceptance_prob(sse_current: float, sse_proposal: float, sigma2: float,
                    proposal_in_box: bool) -> float:
    """Metropolis acceptance probability for a symmetric proposal and a flat prior."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if not proposal_in_box:
        return 0.0
    log_ratio = (sse_current - sse_proposal) / (2.0 * sigma2)
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)


def _acceptance_prob_batch(sse_current, sse_proposal, sigma2, in_box) -> np.ndarray:
    log_ratio = np.minimum((sse_current - sse_proposal) / (2.0 * sigma2), 0.0)
    return np.where(in_box, np.exp(log_ratio), 0.0)


class _Batch:
    """Lag matrices and observations of several episodes, zero-padded to a common length."""

    def __init__(self, episodes: Sequence[EpisodeData], horizon: int):
        self.horizon = horizon
        self.n = np.array([ep.n_days for ep in episodes])
        n_max = int(self.n.max())
        self.lags = np.zeros((len(episodes), n_max, horizon + 1))
        self.obs = np.zeros((len(episodes), n_max))
        for i, ep in enumerate(episodes):
            # padded rows have zero rain and zero runoff, so they add nothing to the sse
            self.lags[i, : ep.n_days] = lag_matrix(ep.rain.values, horizon)
            self.obs[i, : ep.n_days] = ep.runoff.values

    def __len__(self) -> int:
        return len(self.n)

    def sse(self, params: np.ndarray) -> np.ndarray:
        weights = kernel_weights(params, self.horizon)
        sim = np.einsum("mtl,ml->mt", self.lags, weights)
        return np.sum((self.obs - sim) ** 2, axis=1)

    def sigma2_from(self, params: np.ndarray) -> np.ndarray:
        raw = self.sse(params) / self.n
        scale = np.sum(self.obs**2, axis=1) / self.n
        return np.maximum(raw, _SIGMA2_FLOOR * np.maximum(scale, 1e-300))

    def grid_init(self, box: ParamBox, per_dim: int) -> np.ndarray:
        centers = box.grid_centers(per_dim)
        weights = kernel_weights(centers, self.horizon)
        out = np.empty((len(self), 3))
        for i in range(len(self)):
            n = self.n[i]
            sim = self.lags[i, :n] @ weights.T
            err = np.sum((self.obs[i, :n, None] - sim) ** 2, axis=0)
            # argmin returns the first minimum: lexicographic tie-breaking
            out[i] = centers[int(np.argmin(err))]
        return out


def as_seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _valid(params: np.ndarray, box: ParamBox) -> np.ndarray:
    # the Gamma density is undefined at k = 0 or theta = 0, both of which are box edges
    return box.contains(params) & (params[..., 1] > 0) & (params[..., 2] > 0)


def _run_chains(batch: _Batch, box: ParamBox, cfg: ChainConfig, inits: np.ndarray,
                sigma2: np.ndarray, seeds: Sequence, free=(True, True, True)):
    m = len(batch)
    half_width = cfg.step_fraction * box.width * np.asarray(free, dtype=float)
    gens = [np.random.default_rng(s) for s in seeds]
    n_keep = cfg.n_samples - cfg.burn_in
    samples = np.empty((m, n_keep, 3))
    current = np.array(inits, dtype=float)
    sse_current = batch.sse(current)
    accepted = np.zeros(m, dtype=np.int64)

    for block_start in range(0, cfg.n_samples, _DRAW_BLOCK):
        steps = np.stack([g.uniform(-1.0, 1.0, size=(_DRAW_BLOCK, 3)) for g in gens], axis=1)
        uniforms = np.stack([g.random(_DRAW_BLOCK) for g in gens], axis=1)
        steps *= half_width
        for j in range(min(_DRAW_BLOCK, cfg.n_samples - block_start)):
            it = block_start + j
            proposal = current + steps[j]
            in_box = _valid(proposal, box)
            safe = np.where(in_box[:, None], proposal, current)
            sse_proposal = batch.sse(safe)
            alpha = _acceptance_prob_batch(sse_current, sse_proposal, sigma2, in_box)
            take = uniforms[j] < alpha
            current = np.where(take[:, None], proposal, current)
            sse_current = np.where(take, sse_proposal, sse_current)
            accepted += take
            if it >= cfg.burn_in:
                samples[:, it - cfg.burn_in] = current
    return samples, accepted / cfg.n_samples


def grid_init(episode: EpisodeData, box: ParamBox = DEFAULT_BOX, grid_per_dim: int = 10,
              horizon: int = DEFAULT_HORIZON) -> IuhParams:
    """Grid cell center with the smallest sse over ``grid_per_dim ** 3`` cells."""
    batch = _Batch([episode], horizon)
    return IuhParams.from_array(batch.grid_init(box, grid_per_dim)[0])


def mh_chain(episode: EpisodeData, box: ParamBox, cfg: ChainConfig, init: IuhParams,
             sigma2: float, free: tuple[bool, bool, bool] = (True, True, True)) -> PosteriorSummary:
    """Run one Metropolis-Hastings chain at fixed noise variance.

    Args:
        episode: Paired rainfall and runoff.
        box: Support of the uniform prior; proposals outside it are rejected.
        cfg: Chain length, burn-in, step size and seed.
        init: Starting point, must lie inside ``box``.
        sigma2: Gaussian noise variance, (mm/day)^2.
        free: Components to sample; frozen components stay at ``init``.

    Raises:
        ValueError: If ``init`` is outside the box or ``sigma2`` is not positive.
    """
    if not _valid(init.as_array(), box):
        raise ValueError(f"init {init} lies outside the parameter box")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    batch = _Batch([episode], cfg.horizon)
    samples, rate = _run_chains(batch, box, cfg, init.as_array()[None], np.array([sigma2]),
                                [cfg.rng_seed], free)
    return PosteriorSummary(
        samples=samples[0],
        mean=IuhParams.from_array(samples[0].mean(axis=0)),
        sigma2=float(sigma2),
        acceptance_rate=float(rate[0]),
        init=init,
        sigma2_history=(float(sigma2),),
    )


def _fit_batch(episodes: Sequence[EpisodeData], box: ParamBox, cfg: ChainConfig,
               seeds: Sequence[int]) -> list[PosteriorSummary]:
    batch = _Batch(episodes, cfg.horizon)
    inits = batch.grid_init(box, cfg.grid_per_dim)
    sigma2 = batch.sigma2_from(inits)
    history = [sigma2]
    chain_seeds = [as_seed_sequence(s).spawn(cfg.sigma2_iterations + 1) for s in seeds]

    samples, rate = _run_chains(batch, box, cfg, inits, sigma2, [cs[0] for cs in chain_seeds])
    for it in range(1, cfg.sigma2_iterations + 1):
        means = samples.mean(axis=1)
        sigma2 = batch.sigma2_from(means)
        history.append(sigma2)
        samples, rate = _run_chains(batch, box, cfg, means, sigma2, [cs[it] for cs in chain_seeds])

    out = []
    for i in range(len(episodes)):
        out.append(
            PosteriorSummary(
                samples=samples[i],
                mean=IuhParams.from_array(samples[i].mean(axis=0)),
                sigma2=float(sigma2[i]),
                acceptance_rate=float(rate[i]),
                init=IuhParams.from_array(inits[i]),
                sigma2_history=tuple(float(h[i]) for h in history),
            )
        )
    return out


def fit_episodes(episodes: Sequence[EpisodeData], box: ParamBox = DEFAULT_BOX,
                 cfg: ChainConfig = ChainConfig(), seeds: Optional[Sequence[int]] = None,
                 batch_size: int = _BATCH) -> list[PosteriorSummary]:
    """Fit several episodes, advancing their chains in lockstep.

    Results are identical to calling :func:`fit_episode` on each episode with
    ``rng_seed`` set to the matching entry of ``seeds``.
    """
    episodes = list(episodes)
    if seeds is None:
        seeds = [cfg.rng_seed] * len(episodes)
    if len(seeds) != len(episodes):
        raise ValueError("one seed per episode is required")
    # Batch only equal-length episodes: zero padding would change the floating-point
    # summation order of the sse and make results depend on batch composition.
    out: list[Optional[PosteriorSummary]] = [None] * len(episodes)
    by_length: dict[int, list[int]] = {}
    for i, ep in enumerate(episodes):
        by_length.setdefault(ep.n_days, []).append(i)
    for idx in by_length.values():
        for start in range(0, len(idx), batch_size):
            chunk = idx[start:start + batch_size]
            fitted = _fit_batch([episodes[i] for i in chunk], box, cfg, [seeds[i] for i in chunk])
            for i, post in zip(chunk, fitted):
                out[i] = post
    return out


def fit_episode(episode: EpisodeData, box: ParamBox = DEFAULT_BOX,
                cfg: ChainConfig = ChainConfig()) -> PosteriorSummary:
    """Grid initialization, then MH chains alternating with noise-variance updates.

    The first chain runs at the grid-search mean squared error. After each
    chain the variance is reset to the mean squared error of the posterior
    mean and the chain is rerun from that mean, ``cfg.sigma2_iterations``
    times.
    """
    return _fit_batch([episode], box, cfg, [cfg.rng_seed])[0]


def mle_random_search(episode: EpisodeData, box: ParamBox = DEFAULT_BOX, n_draws: int = 100_000,
                      rng_seed: int = 0, horizon: int = DEFAULT_HORIZON,
                      chunk: int = 4096) -> IuhParams:
    """Best of ``n_draws`` uniform draws from the box by sum of squared errors."""
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    rng = np.random.default_rng(rng_seed)
    lags = lag_matrix(episode.rain.values, horizon)
    obs = episode.runoff.values
    best, best_err = None, np.inf
    remaining = n_draws
    while remaining > 0:
        size = min(chunk, remaining)
        remaining -= size
        draws = box.sample(rng, size)
        weights = kernel_weights(draws, horizon)
        err = np.sum((obs[:, None] - lags @ weights.T) ** 2, axis=0)
        err[~_valid(draws, box)] = np.inf
        i = int(np.argmin(err))
        if best is None or err[i] < best_err:
            best, best_err = draws[i], err[i]
    return IuhParams.from_array(best)
