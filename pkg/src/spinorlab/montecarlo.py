"""Wolff single-cluster sampling of critical Ising correlations.

Works on the same site/bond/field representation as :mod:`exact_ising`. The
plus boundary is a frozen ghost layer: a cluster that reaches a ghost spin is
rejected and the configuration is left unchanged, which keeps detailed balance
on the fixed-spin ensemble.

With ``ghost_move="complement"`` the ghost is treated as an ordinary spin: a
ghost-linked cluster flips together with the ghost, followed by a global flip
that restores the ghost to +. The net effect is flipping every spin outside
the cluster. Both moves are exact; the complement move mixes far faster in
large plus-boundary domains.

Under the reject move, measurements average the post-step product over the
ghost-bond coins of the cluster just built (a conditional expectation, so still
unbiased). This removes most of the accept/reject noise near a plus boundary.

Random numbers come from a counter-based SplitMix64 stream keyed by
(seed, chain, step), so a run is reproducible bit-for-bit regardless of how
chains are scheduled over threads.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np
from numba import njit, prange

from .errors import NotThermalized
from .exact_ising import ALPHA_C, Estimate, _site_indices, build_model
from .lattice import DiscreteDomain

BOND_P = 1.0 - ALPHA_C  # 1 - exp(-2 beta_c)
GHOST_MOVES = ("reject", "complement")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _uniform(step_key, j):
    return float(_mix(step_key + np.uint64(j) * _GOLDEN) >> _S11) * _INV53


def _mix_py(x: int) -> int:
    mask = 0xFFFFFFFFFFFFFFFF
    z = (x + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


def chain_key(seed: int, chain: int) -> int:
    """64-bit stream key for one chain; same mixer as the compiled kernel."""
    return _mix_py(_mix_py(seed & 0xFFFFFFFFFFFFFFFF) ^ _mix_py(chain + 0x5851F42D4C957F2D))


@njit(cache=True)
def _extend(sk, j, spins, nbr_ptr, nbr_idx, field, p, s0, tag, stamp, queue, head, size):
    """Breadth-first growth of queue[head:size]; returns (size, ghost bonds seen, draws used)."""
    ghost = 0
    while head < size:
        x = queue[head]
        head += 1
        ghost += field[x]
        for t in range(nbr_ptr[x], nbr_ptr[x + 1]):
            y = nbr_idx[t]
            if stamp[y] != tag and spins[y] == s0:
                u = _uniform(sk, j)
                j += 1
                if u < p:
                    stamp[y] = tag
                    queue[size] = y
                    size += 1
    return size, ghost, j


@njit(cache=True)
def _run_chain(key, nbr_ptr, nbr_idx, field, border, p, complement, n_therm, n_batches, batch,
               obs_idx, obs_len, out, stats):
    n = field.shape[0]
    spins = np.ones(n, dtype=np.int8)
    stamp = np.zeros(n, dtype=np.int64)
    # queue doubles as the member list: queue[0:size] is the cluster
    queue = np.empty(n, dtype=np.int64)
    n_obs = obs_len.shape[0]
    acc = np.zeros(n_obs)
    accepted = 0
    total_size = 0.0
    n_steps = n_therm + n_batches * batch
    for step in range(n_steps):
        sk = _mix(key ^ _mix(np.uint64(step)))
        tag = step + 1
        seed = min(int(_uniform(sk, 0) * n), n - 1)
        s0 = spins[seed]
        stamp[seed] = tag
        queue[0] = seed
        size, ghost, j = _extend(sk, 1, spins, nbr_ptr, nbr_idx, field, p, s0, tag, stamp, queue, 0, 1)
        # probability that one of the ghost bonds (to + spins) is open
        keep = 1.0 - (1.0 - p) ** ghost if s0 > 0 else 0.0
        linked = _uniform(sk, j) < keep
        j += 1
        m = step - n_therm
        if m >= 0 and not complement:
            # average the next-state product over the ghost-bond coins
            for k in range(n_obs):
                prod = 1
                par = 1
                for t in range(obs_len[k]):
                    i = obs_idx[k, t]
                    prod *= spins[i]
                    if stamp[i] == tag:
                        par = -par
                acc[k] += prod * (keep + (1.0 - keep) * par)
        if not linked:
            for i in range(size):
                spins[queue[i]] = -s0
            if m >= 0:
                accepted += 1
                total_size += size
        elif complement:
            # the ghost joins: every other + border site links to it with its own coins
            start = size
            for t in range(border.shape[0]):
                x = border[t]
                if stamp[x] != tag and spins[x] > 0:
                    if _uniform(sk, j) < 1.0 - (1.0 - p) ** field[x]:
                        stamp[x] = tag
                        queue[size] = x
                        size += 1
                    j += 1
            size, ghost, j = _extend(sk, j, spins, nbr_ptr, nbr_idx, field, p, s0, tag, stamp, queue, start, size)
            for i in range(n):
                if stamp[i] != tag:
                    spins[i] = -spins[i]
            if m >= 0:
                accepted += 1
                total_size += n - size
        if m >= 0:
            if complement:
                for k in range(n_obs):
                    prod = 1
                    for t in range(obs_len[k]):
                        prod *= spins[obs_idx[k, t]]
                    acc[k] += prod
            if (m + 1) % batch == 0:
                b = m // batch
                for k in range(n_obs):
                    out[k, b] = acc[k] / batch
                    acc[k] = 0.0
    stats[0] = accepted
    stats[1] = total_size


@njit(cache=True, parallel=True)
def _run_chains(keys, nbr_ptr, nbr_idx, field, border, p, complement, n_therm, n_batches, batch, obs_idx, obs_len, out, stats):
    for c in prange(keys.shape[0]):
        _run_chain(keys[c], nbr_ptr, nbr_idx, field, border, p, complement, n_therm, n_batches, batch, obs_idx, obs_len, out[c], stats[c])


@dataclass(frozen=True)
class McRun:
    seed: int = 0
    n_therm: int = 1000
    n_clusters: int = 100_000  # measured cluster attempts per chain
    batch: int = 1000
    chains: int = 1
    ghost_move: str = "complement"

    def __post_init__(self):
        if self.ghost_move not in GHOST_MOVES:
            raise ValueError(f"ghost_move must be one of {GHOST_MOVES}")
        if self.batch <= 0 or self.n_clusters < self.batch:
            raise ValueError("need n_clusters >= batch > 0")
        if self.n_clusters // self.batch < 8:
            raise ValueError("need at least 8 batches for error estimates")
        if self.chains < 1 or self.n_therm < 0:
            raise ValueError("chains >= 1 and n_therm >= 0 required")

    @property
    def n_batches(self) -> int:
        return self.n_clusters // self.batch


@dataclass
class McResult:
    """Batch means of every requested product, shape (n_obs, chains * n_batches)."""

    batch_means: np.ndarray
    acceptance: float
    mean_cluster: float
    run: McRun
    estimates: list = field(default_factory=list)

    def ratio(self, i: int, j: int) -> Estimate:
        """Jackknife estimate of E[obs_i] / E[obs_j] over batches."""
        return jackknife_ratio(self.batch_means[i], self.batch_means[j])


def jackknife_ratio(num: np.ndarray, den: np.ndarray) -> Estimate:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    nb = num.size
    r = num.mean() / den.mean()
    loo = (num.sum() - num) / (den.sum() - den)
    err = math.sqrt((nb - 1) / nb * np.sum((loo - loo.mean()) ** 2))
    return Estimate(float(r), float(err), "wolff")


def _batch_estimate(bm: np.ndarray) -> Estimate:
    nb = bm.size
    return Estimate(float(bm.mean()), float(bm.std(ddof=1) / math.sqrt(nb)), "wolff")


def _check_thermalized(bm: np.ndarray, label: str, max_lag1: float = 0.5, z_max: float = 5.0) -> None:
    nb = bm.size
    if nb < 16:
        return
    sd = bm.std(ddof=1)
    if sd == 0.0:
        return
    c = bm - bm.mean()
    lag1 = float(np.dot(c[:-1], c[1:]) / np.dot(c, c))
    if lag1 > max_lag1:
        raise NotThermalized(f"{label}: batch means autocorrelated (lag-1 {lag1:.2f}); increase batch")
    half = nb // 2
    a, b = bm[:half], bm[half:]
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    if se > 0 and abs(a.mean() - b.mean()) > z_max * se:
        raise NotThermalized(f"{label}: first and second half disagree; increase n_therm")


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("SPINORLAB_THREADS")
        threads = int(env) if env else numba.config.NUMBA_NUM_THREADS
    return max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))


def wolff_run(dom: DiscreteDomain, bc: str, marked_sets: Sequence[Iterable[Sequence[int]]], run: McRun,
              threads: int | None = None, check: bool = True) -> McResult:
    """Sample several spin products in one run; chains share nothing but the seed."""
    model = build_model(dom, bc)
    if model.n == 0:
        raise ValueError("domain has no spin sites")
    ids = [_site_indices(model, m) for m in marked_sets]
    width = max([1] + [len(i) for i in ids])
    obs_idx = np.zeros((len(ids), width), dtype=np.int64)
    obs_len = np.zeros(len(ids), dtype=np.int64)
    for k, row in enumerate(ids):
        obs_idx[k, : len(row)] = row
        obs_len[k] = len(row)

    nbrs = model.neighbours()
    nbr_ptr = np.zeros(model.n + 1, dtype=np.int64)
    nbr_ptr[1:] = np.cumsum([len(x) for x in nbrs])
    nbr_idx = np.array([y for x in nbrs for y in x], dtype=np.int64)
    fld = model.field.astype(np.int64) if bc == "plus_faces" else np.zeros(model.n, dtype=np.int64)

    keys = np.array([chain_key(run.seed, c) for c in range(run.chains)], dtype=np.uint64)
    out = np.zeros((run.chains, len(ids), run.n_batches))
    stats = np.zeros((run.chains, 2))
    prev = numba.get_num_threads()
    numba.set_num_threads(resolve_threads(threads))
    try:
        _run_chains(keys, nbr_ptr, nbr_idx, fld, np.flatnonzero(fld).astype(np.int64), BOND_P, run.ghost_move == "complement", run.n_therm, run.n_batches, run.batch,
                    obs_idx, obs_len, out, stats)
    finally:
        numba.set_num_threads(prev)

    # fixed chain order: chain 0 batches first
    bm = np.concatenate([out[c] for c in range(run.chains)], axis=1)
    if check:
        for k in range(len(ids)):
            _check_thermalized(bm[k], f"observable {k}")
    n_att = run.chains * run.n_batches * run.batch
    accepted = stats[:, 0].sum()
    res = McResult(bm, float(accepted / n_att), float(stats[:, 1].sum() / max(accepted, 1)), run)
    res.estimates = [_batch_estimate(bm[k]) for k in range(len(ids))]
    return res


def wolff_estimate(dom: DiscreteDomain, bc: str, marked: Iterable[Sequence[int]], run: McRun,
                   threads: int | None = None) -> Estimate:
    """Batch-means estimate of E[prod sigma] at criticality."""
    return wolff_run(dom, bc, [list(marked)], run, threads).estimates[0]


def write_trace(result: McResult, fh) -> None:
    """CSV of batch means, one row per batch in chain order."""
    n_obs, nb = result.batch_means.shape
    fh.write("# schema=spinorlab.mc_trace/1\n")
    fh.write("batch," + ",".join(f"obs{k}" for k in range(n_obs)) + "\n")
    for b in range(nb):
        fh.write(f"{b}," + ",".join(repr(float(result.batch_means[k, b])) for k in range(n_obs)) + "\n")
