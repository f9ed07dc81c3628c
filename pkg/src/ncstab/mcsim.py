"""Monte Carlo simulation of the loop over random-delay channels.

Trials are vectorized; each trial owns an independent random stream spawned
from the master seed, and draws are made in fixed-size blocks in trial
order, so results do not depend on how the trials are grouped.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelStatistics, DelayChannelSpec
from .config import DEFAULT, Tolerances
from .errors import DomainError, StabilityError
from .msstab import LoopDescription, ms_stability_test

BLOCK = 4096


@dataclass(frozen=True)
class SimConfig:
    steps: int = 100_000
    trials: int = 20
    burn_in: int | None = None
    seed: int = 0
    record_xcorr: bool = False
    max_lag: int = 5
    windows: int = 10
    allow_unstable: bool = False
    trajectory_path: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.steps:
            raise DomainError("need 0 <= burn_in < steps")
        if self.jobs < 1:
            raise DomainError("jobs must be >= 1")


@dataclass(frozen=True)
class SimReport:
    empirical_powers: np.ndarray
    power_se: np.ndarray
    diverged: bool
    diverged_trials: int
    burn_in: int
    window_powers: np.ndarray
    cross_corr: np.ndarray | None = field(default=None, repr=False)
    cross_corr_se: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"empirical_powers": self.empirical_powers.tolist(),
               "power_standard_errors": self.power_se.tolist(),
               "diverged": self.diverged, "diverged_trials": self.diverged_trials,
               "burn_in": self.burn_in,
               "window_powers": [[None if np.isnan(v) else float(v) for v in row]
                                 for row in self.window_powers]}
        if self.cross_corr is not None:
            out["cross_correlation"] = self.cross_corr.tolist()
            out["cross_correlation_se"] = self.cross_corr_se.tolist()
        return out


def trial_generators(seed: int, trials: int, indices: Sequence[int] | None = None) -> list:
    """One PCG64 stream per trial; trial ``i`` gets the ``i``-th spawned child of ``seed``."""
    children = np.random.SeedSequence(seed).spawn(trials)
    indices = range(trials) if indices is None else indices
    return [np.random.Generator(np.random.PCG64(children[i])) for i in indices]


def sample_delays(spec: DelayChannelSpec, uniform: np.ndarray) -> np.ndarray:
    """Map uniforms to delays; ``-1`` marks a lost packet."""
    cdf = np.cumsum(spec.pmf)
    idx = np.searchsorted(cdf, uniform, side="right")
    return np.where(idx >= len(spec.pmf), -1, idx)


def default_burn_in(radius: float, steps: int) -> int:
    if radius <= 0:
        return min(100, steps // 10)
    tc = -1.0 / math.log(radius) if radius < 1 else float(steps)
    return int(min(max(100, math.ceil(10 * tc)), steps // 2))


def window_edges(steps: int, windows: int) -> np.ndarray:
    # log-spaced windows over the whole run so early growth stays visible
    edges = np.unique(np.geomspace(1, steps, windows + 1).astype(int))
    edges[0] = 0
    return edges


class _Streams:
    """Per-trial uniform and Gaussian draws, produced block by block."""

    def __init__(self, gens: list, m: int):
        self.gens = gens
        self.m = m
        self.pos = BLOCK

    def next(self):
        if self.pos == BLOCK:
            self.uni = np.stack([g.random((BLOCK, self.m)) for g in self.gens], axis=1)
            self.gau = np.stack([g.standard_normal((BLOCK, self.m)) for g in self.gens], axis=1)
            self.pos = 0
        k = self.pos
        self.pos += 1
        return self.uni[k], self.gau[k]


@dataclass
class _Partial:
    """Per-trial accumulators of one group of trials; groups reduce by concatenation."""

    indices: np.ndarray
    mean: np.ndarray          # (trials, m) post-burn-in mean of u_i^2 per trial
    alive: np.ndarray         # (trials,)
    win_sum: np.ndarray       # (trials, windows, m) sum of u_i^2 over live steps
    win_cnt: np.ndarray       # (trials, windows) number of live steps
    xcorr: np.ndarray | None  # (trials, lags, m, m) per-trial correlations
    trajectory: np.ndarray | None


def _rows(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``x @ a.T`` row by row in a fixed summation order, independent of the batch size."""
    return np.einsum("tj,ij->ti", x, a, optimize=False)


def _run_trials(loop: LoopDescription, specs: list, cfg: SimConfig, burn: int,
                indices: np.ndarray, tol: Tolerances) -> _Partial:
    p, k = loop.plant, loop.controller
    m = loop.m
    trials = len(indices)
    depth = max(s.max_delay for s in specs) + 1
    alphas = np.zeros((m, depth))
    mus = np.zeros((m, depth))
    for i, s in enumerate(specs):
        alphas[i, :len(s.weights)] = s.weights
        mus[i, :len(s.pmf)] = np.asarray(s.weights) * np.asarray(s.pmf)
    sigma = np.sqrt(loop.noise_variance)

    xp = np.zeros((trials, p.n))
    xk = np.zeros((trials, k.n))
    u_hist = np.zeros((depth, trials, m))      # u_hist[j] = u(k - j)
    chi_hist = np.full((depth, trials, m), -2)  # chi_hist[j] = chi(k - j)
    alive = np.ones(trials, dtype=bool)
    guard = tol.overflow_guard

    n_win = cfg.steps - burn
    mean = np.zeros((trials, m))
    count = 0
    edges = window_edges(cfg.steps, cfg.windows)
    n_windows = edges.size - 1
    win_sum = np.zeros((trials, n_windows, m))
    win_cnt = np.zeros((trials, n_windows))
    d_store = np.zeros((trials, n_win, m)) if cfg.record_xcorr else None
    keep_traj = cfg.trajectory_path is not None and trials > 0 and indices[0] == 0
    traj = [] if keep_traj else None
    streams = _Streams(trial_generators(cfg.seed, cfg.trials, indices), m)
    lag_j = np.arange(depth)[:, None, None]

    for step in range(cfg.steps):
        uni, gau = streams.next()
        y = _rows(xp, p.c)
        u = _rows(xk, k.c) - _rows(y, k.d)
        u_hist = np.roll(u_hist, 1, axis=0)
        chi_hist = np.roll(chi_hist, 1, axis=0)
        u_hist[0] = u
        chi_hist[0] = np.stack([sample_delays(s, uni[:, i]) for i, s in enumerate(specs)], axis=1)
        arrived = chi_hist == lag_j
        ud = np.sum(alphas.T[:, None, :] * arrived * u_hist, axis=0)
        d = ud - np.sum(mus.T[:, None, :] * u_hist, axis=0)
        w = ud + sigma * gau
        xp = _rows(xp, p.a) + _rows(w, p.b)
        xk = _rows(xk, k.a) - _rows(y, k.b)
        big = (np.max(np.abs(xp), axis=1, initial=0) > guard) | \
              (np.max(np.abs(u), axis=1, initial=0) > guard)
        alive &= ~big
        if not alive.all():
            xp[~alive] = 0.0
            xk[~alive] = 0.0
            u_hist[:, ~alive] = 0.0
        if traj is not None:
            traj.append(np.concatenate([[step], u[0], y[0], chi_hist[0, 0], [float(not alive[0])]]))
        sq = u * u
        wi = min(np.searchsorted(edges, step, side="right") - 1, n_windows - 1)
        win_sum[:, wi] += sq * alive[:, None]
        win_cnt[:, wi] += alive
        if step >= burn:
            count += 1
            mean += (sq - mean) / count
            if d_store is not None:
                d_store[:, step - burn] = d

    xcorr = None
    if d_store is not None:
        xcorr = _xcorr_per_trial(d_store, cfg.max_lag)
    return _Partial(np.asarray(indices), mean, alive, win_sum, win_cnt, xcorr,
                    np.array(traj) if traj is not None else None)


def _reduce(parts: list) -> _Partial:
    parts = sorted(parts, key=lambda q: q.indices[0])
    xcorr = None
    if all(q.xcorr is not None for q in parts):
        xcorr = np.concatenate([q.xcorr for q in parts])
    traj = next((q.trajectory for q in parts if q.trajectory is not None), None)
    return _Partial(np.concatenate([q.indices for q in parts]),
                    np.concatenate([q.mean for q in parts]),
                    np.concatenate([q.alive for q in parts]),
                    np.concatenate([q.win_sum for q in parts]),
                    np.concatenate([q.win_cnt for q in parts]), xcorr, traj)


def simulate_loop(loop: LoopDescription, specs: Sequence[DelayChannelSpec], cfg: SimConfig,
                  tol: Tolerances = DEFAULT) -> SimReport:
    """Run ``cfg.trials`` independent realizations of the stochastic loop.

    With ``cfg.jobs > 1`` the trials are split into groups run in separate
    processes; the reduction is identical to the serial one.
    """
    specs = list(specs)
    m = loop.m
    if len(specs) != m:
        raise DomainError("one channel spec per plant input is required")
    radius = ms_stability_test(loop, tol).closed_loop_radius
    if radius >= 1 and not cfg.allow_unstable:
        raise StabilityError("controller does not stabilize the nominal loop")
    burn = cfg.burn_in if cfg.burn_in is not None else default_burn_in(radius, cfg.steps)
    groups = [g for g in np.array_split(np.arange(cfg.trials), max(1, cfg.jobs)) if g.size]
    if len(groups) == 1:
        parts = [_run_trials(loop, specs, cfg, burn, groups[0], tol)]
    else:
        with ProcessPoolExecutor(max_workers=len(groups)) as pool:
            futures = [pool.submit(_run_trials, loop, specs, cfg, burn, g, tol) for g in groups]
            parts = [f.result() for f in futures]
    res = _reduce(parts)

    if res.trajectory is not None:
        write_trajectory(cfg.trajectory_path, res.trajectory, m, loop.plant.n_out)
    n_alive = int(res.alive.sum())
    if n_alive:
        tm = res.mean[res.alive]
        powers = tm.mean(axis=0)
        se = tm.std(axis=0, ddof=1) / math.sqrt(n_alive) if n_alive > 1 else np.full(m, np.inf)
    else:
        powers = np.full(m, np.inf)
        se = np.full(m, np.inf)
    with np.errstate(invalid="ignore"):
        cnt = res.win_cnt.sum(axis=0)
        window_powers = res.win_sum.sum(axis=0) / np.where(cnt > 0, cnt, np.nan)[:, None]
    xc = xse = None
    if res.xcorr is not None and n_alive == cfg.trials:
        xc, xse = _xcorr_reduce(res.xcorr, cfg.steps - burn)
    return SimReport(powers, se, n_alive < cfg.trials, cfg.trials - n_alive, burn,
                     window_powers, xc, xse)


def _xcorr_per_trial(d: np.ndarray, max_lag: int) -> np.ndarray:
    trials, steps, m = d.shape
    sd = np.sqrt(np.mean(d * d, axis=1))  # (trials, m)
    sd = np.where(sd > 0, sd, 1.0)
    lags = range(-max_lag, max_lag + 1)
    per = np.zeros((trials, len(lags), m, m))
    for li, lag in enumerate(lags):
        if lag >= 0:
            a, b = d[:, :steps - lag], d[:, lag:]
        else:
            a, b = d[:, -lag:], d[:, :steps + lag]
        per[:, li] = np.einsum("tki,tkj->tij", a, b) / a.shape[1]
    return per / (sd[:, None, :, None] * sd[:, None, None, :])


def _xcorr_reduce(per: np.ndarray, steps: int) -> tuple:
    trials = per.shape[0]
    corr = per.mean(axis=0)
    if trials > 1:
        se = per.std(axis=0, ddof=1) / math.sqrt(trials)
    else:
        se = np.full_like(corr, 1.0 / math.sqrt(steps))
    return corr, se


def estimate_cross_correlation(d: np.ndarray, max_lag: int = 5) -> tuple:
    """Normalized ``E[d_i1(k) d_i2(k+l)]`` for ``|l| <= max_lag``.

    ``d`` has shape (trials, steps, m).  Returns ``(corr, se)`` of shape
    (2*max_lag+1, m, m); the standard error is the spread of per-trial
    estimates over the square root of the trial count.
    """
    return _xcorr_reduce(_xcorr_per_trial(d, max_lag), d.shape[1])


def write_trajectory(path: str, rows: np.ndarray, m: int, q: int) -> None:
    cols = ["k"] + [f"u_{i + 1}" for i in range(m)] + [f"y_{i + 1}" for i in range(q)] + \
        [f"chi_{i + 1}" for i in range(m)] + ["diverged"]
    fmt = ["%d"] + ["%.12g"] * (m + q) + ["%d"] * (m + 1)
    np.savetxt(path, rows, fmt=fmt, header=" ".join(cols), comments="# ")


@dataclass(frozen=True)
class PsdEstimate:
    theta: np.ndarray
    psd: np.ndarray
    se: np.ndarray
    exact: np.ndarray


def channel_psd_bridge(stats: ChannelStatistics, segments: int = 400, seg_len: int = 256,
                       points: int = 16, seed: int = 0) -> PsdEstimate:
    """Averaged-periodogram PSD of ``d = u_d - H u`` for unit white ``u``."""
    spec = stats.spec
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    depth = spec.max_delay + 1
    total = segments * seg_len + depth
    u = rng.standard_normal(total)
    chi = sample_delays(spec, rng.random(total))
    alphas, mus = np.asarray(spec.weights), stats.mu
    d = np.zeros(total)
    for j in range(depth):
        shifted_u = np.concatenate([np.zeros(j), u[:total - j]])
        shifted_chi = np.concatenate([np.full(j, -2), chi[:total - j]])
        d += (alphas[j] * (shifted_chi == j) - mus[j]) * shifted_u
    d = d[depth:].reshape(segments, seg_len)
    per = np.abs(np.fft.rfft(d, axis=1)) ** 2 / seg_len
    bins = np.linspace(1, seg_len // 2 - 1, points).astype(int)
    theta = 2 * np.pi * bins / seg_len
    est = per[:, bins].mean(axis=0)
    se = per[:, bins].std(axis=0, ddof=1) / math.sqrt(segments)
    exact = np.real(stats.esd(np.exp(1j * theta)))
    return PsdEstimate(theta, est, se, exact)
