"""Correlation spectra of inventory panels and their null thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, NumericalError, ZeroVarianceError
from .market_data import (FirmId, InventoryPanel, IntervalGrid, TradeRecord, TradeTable, accumulate_panel,
                          as_table, firm_columns)

RECONSTRUCTION_TOL = 1e-8


@dataclass(eq=False)
class CorrelationMatrix:
    firms: list[FirmId]
    entries: np.ndarray

    @property
    def n(self) -> int:
        return len(self.firms)


@dataclass(eq=False)
class EigenSpectrum:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns matched to eigenvalues
    method: str = "lapack"
    iterations: int | None = None

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else float("nan")


@dataclass(eq=False)
class NullThresholds:
    rmt_lambda_min: float
    rmt_lambda_max: float
    shuffle_lambda_max: float
    shuffle_density: np.ndarray  # density per bin
    bin_edges: np.ndarray
    n_shuffles: int
    seed: int
    shuffle_lambda1: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        return {
            "rmt_lambda_min": self.rmt_lambda_min,
            "rmt_lambda_max": self.rmt_lambda_max,
            "shuffle_lambda_max": self.shuffle_lambda_max,
            "shuffle_lambda1": self.shuffle_lambda1.tolist(),
            "shuffle_density": self.shuffle_density.tolist(),
            "bin_edges": self.bin_edges.tolist(),
            "n_shuffles": self.n_shuffles,
            "seed": self.seed,
        }


@dataclass(eq=False)
class FactorSeries:
    values: np.ndarray
    index: int = 1  # 1 = largest eigenvalue


@dataclass(eq=False)
class SortedMatrix:
    matrix: CorrelationMatrix
    order: np.ndarray  # permutation applied to the original firm order
    rho_sorted: np.ndarray
    boundaries: tuple[int, int]  # first index above -2 sigma, first index above +2 sigma
    sigma: float


def _standardize(values: np.ndarray, names: Sequence[str]) -> np.ndarray:
    centered = values - values.mean(axis=0)
    std = np.sqrt((centered ** 2).mean(axis=0))
    scale = np.abs(values).max(axis=0) if len(values) else np.zeros(values.shape[1])
    for j, s in enumerate(std):
        if not s > 1e-14 * max(scale[j], 1e-300):
            raise ZeroVarianceError(names[j], "zero-variance column for firm")
    return centered / std


def correlation_matrix(panel: InventoryPanel) -> CorrelationMatrix:
    """Pearson correlation over all T rows; inactive intervals enter as zeros."""
    T = panel.values.shape[0]
    if T < 2:
        raise DataError(f"need at least 2 intervals, got {T}")
    z = _standardize(panel.values, panel.firms)
    c = z.T @ z / T
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    np.clip(c, -1.0, 1.0, out=c)
    return CorrelationMatrix(list(panel.firms), c)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray, int]:
    """Cyclic Jacobi rotations for a real symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` unsorted. Raises
    :class:`NumericalError` when the off-diagonal norm has not fallen below
    ``tol * ||a||_F`` after ``max_sweeps`` sweeps.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    fro = np.linalg.norm(a)
    if n < 2 or fro == 0:
        return np.diag(a).copy(), v, 0
    off = math.inf
    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(a[~np.eye(n, dtype=bool)]))
        if off <= tol * fro:
            return np.diag(a).copy(), v, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    raise NumericalError("Jacobi eigensolver did not converge", iterations=max_sweeps, residual=off)


def eigendecompose(c: CorrelationMatrix | np.ndarray, method: str = "lapack") -> EigenSpectrum:
    """Full spectrum, eigenvalues descending, eigenvectors sign-normalised.

    ``method`` is ``"lapack"`` (numpy ``eigh``) or ``"jacobi"``. The largest
    magnitude component of every eigenvector is made positive.
    """
    m = c.entries if isinstance(c, CorrelationMatrix) else np.asarray(c, dtype=float)
    iterations = None
    if method == "lapack":
        try:
            w, u = np.linalg.eigh(m)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"LAPACK eigensolver failed: {exc}") from exc
    elif method == "jacobi":
        w, u, iterations = jacobi_eigh(m)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = np.argsort(-w, kind="stable")
    w, u = w[order], _fix_signs(u[:, order])
    residual = float(np.max(np.abs(m - (u * w) @ u.T))) if m.size else 0.0
    if residual > RECONSTRUCTION_TOL * max(1.0, float(np.max(np.abs(m)))):
        raise NumericalError("eigendecomposition fails reconstruction check", iterations, residual)
    return EigenSpectrum(w, u, method, iterations)


def rmt_bounds(n: int, t: int) -> tuple[float, float]:
    """Support edges of the eigenvalue density for N uncorrelated unit-variance series of length T."""
    if n < 1 or t <= n:
        raise DataError(f"RMT bounds need T > N >= 1 (got N={n}, T={t})")
    inv_q = n / t
    root = 2.0 * math.sqrt(inv_q)
    return 1.0 + inv_q - root, 1.0 + inv_q + root


def _label_permutations(n: int, seed_seq: np.random.SeedSequence) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed_seq)
    return rng.permutation(n), rng.permutation(n)


def shuffle_trade_labels(trades: Sequence[TradeRecord] | TradeTable, seed_seq) -> TradeTable:
    """One shuffle replicate: buyer and seller columns independently permuted."""
    table = as_table(trades)
    if not isinstance(seed_seq, np.random.SeedSequence):
        seed_seq = np.random.SeedSequence(seed_seq)
    pb, ps = _label_permutations(len(table), seed_seq)
    return table.with_labels(table.buyer[pb], table.seller[ps])


def shuffle_null_spectrum(trades: Sequence[TradeRecord] | TradeTable, firms: Sequence[FirmId],
                          grid: IntervalGrid, n_shuffles: int = 100, seed: int = 0,
                          bins: int = 60) -> NullThresholds:
    """Eigenvalue null from independently permuting buyer and seller labels.

    Each replicate permutes the buyer column and, independently, the seller
    column across all trades; every firm keeps its number of purchases and
    sales. Replicate ``k`` draws from the ``k``-th child of ``SeedSequence(seed)``.
    """
    if n_shuffles < 1:
        raise ValueError("n_shuffles must be >= 1")
    table = as_table(trades)
    firms = list(firms)
    col = firm_columns(table, firms)
    idx = grid.locate(table.timestamps)
    value = table.value
    bcol, scol = col[table.buyer], col[table.seller]
    seqs = np.random.SeedSequence(seed).spawn(n_shuffles)
    eigs = np.empty((n_shuffles, len(firms)))
    for k, ss in enumerate(seqs):
        pb, ps = _label_permutations(len(table), ss)
        vals, active = accumulate_panel(idx, value, bcol[pb], scol[ps], len(grid), len(firms))
        panel = InventoryPanel(grid, firms, vals, active)
        eigs[k] = np.linalg.eigvalsh(correlation_matrix(panel).entries)[::-1]
    lo, hi = rmt_bounds(len(firms), len(grid)) if len(grid) > len(firms) else (float("nan"), float("nan"))
    top = max(float(eigs.max()), hi if math.isfinite(hi) else 0.0)
    edges = np.linspace(0.0, top * 1.05, bins + 1)
    density, _ = np.histogram(eigs.ravel(), bins=edges, density=True)
    return NullThresholds(lo, hi, float(eigs[:, 0].max()), density, edges, n_shuffles, seed, eigs[:, 0].copy())


def first_factor_series(panel: InventoryPanel, spectrum: EigenSpectrum) -> FactorSeries:
    """Projection of the column-standardised panel onto the first eigenvector."""
    z = _standardize(panel.values, panel.firms)
    u = spectrum.eigenvectors[:, 0]
    if len(u) != z.shape[1]:
        raise DataError("spectrum does not match panel width")
    return FactorSeries(z @ u, 1)


def sort_matrix_by_rho(c: CorrelationMatrix, rho_list: Sequence[float], sigma: float) -> SortedMatrix:
    """Permute rows/columns by ascending return correlation and mark the +-2 sigma group edges."""
    rho = np.asarray(rho_list, dtype=float)
    if len(rho) != c.n:
        raise DataError("rho_list is not aligned with the matrix")
    order = np.argsort(rho, kind="stable")
    m = c.entries[np.ix_(order, order)]
    rs = rho[order]
    b_lo = int(np.sum(rs < -2 * sigma))
    b_hi = int(np.sum(rs <= 2 * sigma))
    return SortedMatrix(CorrelationMatrix([c.firms[i] for i in order], m), order, rs, (b_lo, b_hi), sigma)
