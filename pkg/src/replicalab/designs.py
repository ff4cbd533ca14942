"""Moment-operator distances, frame potentials, and concentration probes.

Closeness to the Haar ensemble is quantified by a declared-probe proxy: the
Hilbert-Schmidt distance between the empirical t-fold twirl of each probe and
the exact Haar twirl, maximized over probes. Error bars come from a jackknife
over sample blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .linalg import check_allocation, random_pure_state
from .perms import Permutation, _digit_table, enumerate_sym, trace_perm_bipartite
from .weingarten import haar_frame_potential_exact, weingarten_table

JACKKNIFE_BLOCK = 100


def _tensor_pow_unitary(u: np.ndarray, t: int) -> np.ndarray:
    out = u
    for _ in range(t - 1):
        out = np.kron(out, u)
    return out


def empirical_moment_apply(ensemble, t: int, probe: np.ndarray, n_samples: int, rng,
                           return_stderr: bool = False):
    """Sample mean of U^{t} probe U+^{t}; optionally per-entry standard errors."""
    d = ensemble.dim if hasattr(ensemble, "dim") else probe.shape[0]
    dim = d**t
    if probe.shape != (dim, dim):
        raise ValueError(f"probe must live on (C^{d})^{t}, got shape {probe.shape}")
    check_allocation(dim * dim * 3)
    acc = np.zeros((dim, dim), dtype=complex)
    acc2 = np.zeros((dim, dim), dtype=float)
    for _ in range(n_samples):
        u = ensemble.sample(rng)
        ut = _tensor_pow_unitary(u, t)
        m = ut @ probe @ ut.conj().T
        acc += m
        acc2 += np.abs(m) ** 2
    mean = acc / n_samples
    if not return_stderr:
        return mean
    var = acc2 / n_samples - np.abs(mean) ** 2
    stderr = np.sqrt(np.maximum(var, 0.0) / n_samples)
    return mean, stderr


def exact_haar_moment_apply(t: int, probe: np.ndarray, d: int) -> np.ndarray:
    """Exact Haar t-fold twirl: sum_{sigma,tau} w(sigma tau) tr(P_tau probe) P_sigma.

    The output is the projection of the probe onto the span of the slot
    permutation operators, so permutation operators are fixed points.
    """
    dim = d**t
    if probe.shape != (dim, dim):
        raise ValueError(f"probe must be {dim} x {dim}")
    table = weingarten_table(t, d)
    perms = enumerate_sym(t)
    traces = {}
    eye1 = np.eye(1, dtype=complex)
    for p in perms:
        traces[p.images] = trace_perm_bipartite(p, probe, eye1, d)
    out = np.zeros((dim, dim), dtype=complex)
    digits = _digit_table(t, d)
    weights_vec = d ** np.arange(t - 1, -1, -1)
    cols = np.arange(dim)
    for sigma in perms:
        coeff = 0.0 + 0.0j
        for tau in perms:
            coeff += float(table.weight(sigma.compose(tau))) * traces[tau.images]
        if abs(coeff) < 1e-300:
            continue
        inv = sigma.inverse().images
        rows = digits[:, list(inv)] @ weights_vec
        out[rows, cols] += coeff
    return out


DEFAULT_PROBE_NAMES = ("z_tensor", "random_projector", "elementary")


def default_probes(t: int, d: int, rng, normalized: bool = False) -> dict:
    """Declared probe set: Z^{t}, a seeded random pure-state projector, and an
    elementary matrix unit. Pass normalized=True for unit Hilbert-Schmidt norm."""
    from .circuits import pauli_z_n

    n = int(np.log2(d))
    z = pauli_z_n(n).matrix
    zt = _tensor_pow_unitary(z, t)
    psi = random_pure_state(d**t, rng)
    proj = psi.projector()
    elem = np.zeros((d**t, d**t), dtype=complex)
    elem[0, min(1, d**t - 1)] = 1.0
    probes = {"z_tensor": zt, "random_projector": proj, "elementary": elem}
    if normalized:
        probes = {k: v / np.linalg.norm(v) for k, v in probes.items()}
    return probes


@dataclass(frozen=True)
class MomentReport:
    t: int
    ensemble_json: str
    n_samples: int
    distance_hs: float
    distance_stderr: float
    per_probe: dict
    frame_potential: float | None = None
    frame_potential_stderr: float | None = None
    haar_frame_potential: float | None = None

    def to_json_row(self, **extra) -> str:
        row = {
            "ensemble": json.loads(self.ensemble_json),
            "t": self.t,
            "distance": round(self.distance_hs, 10),
            "stderr": round(self.distance_stderr, 10),
            "n_samples": self.n_samples,
        }
        if self.frame_potential is not None:
            row["frame_potential"] = round(self.frame_potential, 10)
            row["frame_potential_stderr"] = round(self.frame_potential_stderr, 10)
            row["haar_frame_potential"] = self.haar_frame_potential
        row.update(extra)
        return json.dumps(row, sort_keys=True)


def design_distance(ensemble, t: int, probes: dict, n_samples: int, rng) -> MomentReport:
    """Max over probes of HS distance between empirical and exact Haar twirls,
    with jackknife standard errors over blocks of 100 samples.

    Each sampled circuit is applied to every probe, so the probe maximum is
    taken over a shared sample set.
    """
    d = ensemble.dim
    n_blocks = max(1, n_samples // JACKKNIFE_BLOCK)
    n_samples = n_blocks * JACKKNIFE_BLOCK
    names = list(probes)
    exact = {name: exact_haar_moment_apply(t, probes[name], d) for name in names}
    shape = next(iter(probes.values())).shape
    block_means = {name: np.zeros((n_blocks,) + shape, dtype=complex) for name in names}
    for bl in range(n_blocks):
        for _ in range(JACKKNIFE_BLOCK):
            u = ensemble.sample(rng)
            ut = _tensor_pow_unitary(u, t)
            ut_dag = ut.conj().T
            for name in names:
                block_means[name][bl] += ut @ probes[name] @ ut_dag
    per_probe = {}
    best_dist, best_se = -1.0, 0.0
    for name in names:
        means = block_means[name] / JACKKNIFE_BLOCK
        full_mean = means.mean(axis=0)
        dist = float(np.linalg.norm(full_mean - exact[name]))
        if n_blocks > 1:
            loo = (means.sum(axis=0)[None] - means) / (n_blocks - 1)
            loo_dists = np.linalg.norm(loo - exact[name][None], axis=(1, 2))
            se = float(np.sqrt((n_blocks - 1) / n_blocks * ((loo_dists - loo_dists.mean()) ** 2).sum()))
        else:
            se = float("nan")
        per_probe[name] = (dist, se)
        if dist > best_dist:
            best_dist, best_se = dist, se
    return MomentReport(
        t=t,
        ensemble_json=ensemble.to_json(),
        n_samples=n_samples,
        distance_hs=best_dist,
        distance_stderr=best_se,
        per_probe=per_probe,
    )


def frame_potential(ensemble, t: int, n_pairs: int, rng):
    """Sample mean of |tr(U+ V)|^{2t} over independent pairs, with stderr and
    the exact Haar reference value."""
    vals = np.empty(n_pairs)
    for i in range(n_pairs):
        u = ensemble.sample(rng)
        v = ensemble.sample(rng)
        vals[i] = np.abs(np.trace(u.conj().T @ v)) ** (2 * t)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_pairs))
    haar_ref = float(haar_frame_potential_exact(t, ensemble.dim)) if ensemble.dim >= t else None
    return mean, se, haar_ref


def clifford_frame_potential(n: int, t: int, n_draws: int, rng):
    """Frame potential of the uniform Clifford group with the Pauli byproduct
    layer averaged exactly.

    A uniform Clifford factors as (uniform Pauli) x (symplectic part), and
    |tr(P W)| over all Pauli offsets P of a fixed W is computable exactly via
    Walsh-Hadamard transforms, so each draw contributes a 4^n-term exact
    average. This removes the dominant heavy-tail variance of the plain
    pair estimator.
    """
    from .circuits import sample_clifford

    d = 2**n
    vals = np.empty(n_draws)
    idx = np.arange(d)
    for i in range(n_draws):
        w = sample_clifford(n, rng).matrix
        total = 0.0
        for x in range(d):
            v = w[idx ^ x, idx].copy()
            h = 1
            while h < d:
                for base in range(0, d, 2 * h):
                    a = v[base:base + h].copy()
                    b = v[base + h:base + 2 * h].copy()
                    v[base:base + h] = a + b
                    v[base + h:base + 2 * h] = a - b
                h *= 2
            total += (np.abs(v) ** (2 * t)).sum()
        vals[i] = total / d**2
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_draws))
    haar_ref = float(haar_frame_potential_exact(t, d)) if d >= t else None
    return mean, se, haar_ref


@dataclass(frozen=True)
class TailReport:
    sigma_hat: float
    n_samples: int
    exceedance_3sigma: float
    lipschitz: float | None
    levy_ratio: float | None  # sigma_hat * sqrt(d) / L


def fit_subgaussian_sigma(samples: np.ndarray) -> float:
    """Sigma via least-squares regression of empirical quantiles of the
    centered data against normal quantiles, through the origin."""
    centered = samples - samples.mean()
    levels = np.linspace(0.55, 0.995, 24)
    nd = NormalDist()
    zq = np.array([nd.inv_cdf(q) for q in levels])
    eq_hi = np.quantile(centered, levels)
    eq_lo = -np.quantile(centered, 1 - levels)
    eq = (eq_hi + eq_lo) / 2
    denom = float(zq @ zq)
    return float(max(0.0, (zq @ eq) / denom))


def concentration_probe(d: int, fn, n_samples: int, rng, lipschitz: float | None = None) -> TailReport:
    """Sample fn over Haar unitaries, fit a sub-Gaussian sigma, and report the
    dimension-normalized ratio sigma_hat sqrt(d)/L when L is known."""
    from .weingarten import haar_sample

    vals = np.empty(n_samples)
    for i in range(n_samples):
        vals[i] = fn(haar_sample(d, rng))
    sigma = fit_subgaussian_sigma(vals)
    centered = np.abs(vals - vals.mean())
    exceed = float((centered > 3 * sigma).mean()) if sigma > 0 else 0.0
    ratio = sigma * np.sqrt(d) / lipschitz if lipschitz else None
    return TailReport(
        sigma_hat=sigma,
        n_samples=n_samples,
        exceedance_3sigma=exceed,
        lipschitz=lipschitz,
        levy_ratio=ratio,
    )


def fit_log_slope(xs, ys):
    """Least-squares slope of log(y) on log(x) with its standard error."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    n = lx.size
    if n < 2:
        raise ValueError("need at least two points")
    dx = lx - lx.mean()
    slope = float((dx @ (ly - ly.mean())) / (dx @ dx))
    resid = ly - (ly.mean() + slope * dx)
    if n > 2:
        se = float(np.sqrt((resid @ resid) / (n - 2) / (dx @ dx)))
    else:
        se = 0.0
    return slope, se
