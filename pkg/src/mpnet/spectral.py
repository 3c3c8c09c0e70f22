"""Spectral diagonality test between friendships and family ties.

The friendship adjacency ``A_p`` is decomposed as ``U Lambda U^T`` (rank
``k``, largest magnitudes) and the family matrix ``F = R R^T`` is expressed
in the same basis, ``Delta = U^T F U``.  The diagonality coefficient is the
share of ``Delta``'s squared Frobenius mass on its diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core_graph import MultiProfileNetwork
from .errors import ConvergenceError, DegenerateError, ValidationError

DEFAULT_K = 250
HEATMAP_SIZE = 50


@dataclass
class EigenBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    norm_estimate: float
    restarts: int = 0
    matvecs: int = 0

    @property
    def k(self) -> int:
        return len(self.eigenvalues)


def _orthogonalise(w, V, passes=2):
    # classical Gram-Schmidt, repeated ("twice is enough")
    coeff = np.zeros(V.shape[1])
    for _ in range(passes):
        c = V.T @ w
        w = w - V @ c
        coeff += c
    return w, coeff


def top_k_eigs(apply_operator: Callable[[np.ndarray], np.ndarray], n: int, k: int,
               tol: float = 1e-10, max_iter: int = 300, seed: int = 0,
               basis_size: Optional[int] = None) -> EigenBasis:
    """Largest-magnitude eigenpairs of a symmetric operator.

    Thick-restart Lanczos with full reorthogonalisation.  The search space
    holds up to ``basis_size`` vectors (default ``max(2k + 20, 40)``); after
    each sweep the ``k`` wanted Ritz vectors plus a few extra are kept and
    the Krylov sequence is continued from the last residual direction.  A
    pair is converged when its Ritz residual is at most ``tol`` times the
    estimated operator norm.  ``max_iter`` bounds the number of restarts.

    Eigenpairs are returned ordered by descending absolute eigenvalue; the
    sign of each eigenvector is fixed so that its largest-magnitude entry is
    positive.
    """
    if not 0 < k < n:
        raise ValidationError(f"need 0 < k < n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    m_max = min(n, basis_size or max(2 * k + 20, 40))
    keep_extra = max(0, min((m_max - k) // 2, k))

    V = np.zeros((n, m_max))
    H = np.zeros((m_max, m_max))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    j = 0               # current number of basis vectors
    matvecs = 0
    norm_est = 0.0
    converged = np.zeros(0, dtype=bool)
    for restart in range(max_iter + 1):
        while j < m_max:
            V[:, j] = v
            w = np.asarray(apply_operator(v), dtype=float).reshape(n)
            matvecs += 1
            w, h = _orthogonalise(w, V[:, :j + 1])
            H[:j + 1, j] = h[:j + 1]
            H[j, :j + 1] = h[:j + 1]
            j += 1
            beta = np.linalg.norm(w)
            norm_est = max(norm_est, abs(h[j - 1]) + beta)
            if j == m_max:
                break
            if beta <= 1e-13 * max(norm_est, 1.0):
                # invariant subspace: continue with a fresh random direction
                w = rng.standard_normal(n)
                w, _ = _orthogonalise(w, V[:, :j])
                beta = np.linalg.norm(w)
                if beta == 0:
                    break
                v = w / beta
                continue
            v = w / beta
        theta, Y = np.linalg.eigh(H[:j, :j])
        order = np.lexsort((-theta, -np.abs(theta)))
        theta, Y = theta[order], Y[:, order]
        norm_est = max(norm_est, float(np.abs(theta).max()))
        # Ritz residuals: only the newest basis vector leaks out of span(V)
        r_vec, r_norm = w, float(beta)
        res = r_norm * np.abs(Y[j - 1, :])
        if j == n:
            res = np.zeros_like(theta)
        converged = res[:k] <= tol * max(norm_est, 1e-300)
        if converged.all():
            U = V[:, :j] @ Y[:, :k]
            U, res_true = _finalise(apply_operator, U, theta[:k])
            return EigenBasis(theta[:k].copy(), U, res_true, norm_est, restart, matvecs + k)
        if j < m_max and j < n:
            break
        # thick restart: keep wanted Ritz vectors and continue from the residual
        keep = min(k + keep_extra, j - 1)
        Vk = V[:, :j] @ Y[:, :keep]
        V[:, :keep] = Vk
        H[:] = 0.0
        H[np.arange(keep), np.arange(keep)] = theta[:keep]
        j = keep
        if r_norm <= 1e-13 * max(norm_est, 1.0):
            r_vec = rng.standard_normal(n)
            r_vec, _ = _orthogonalise(r_vec, V[:, :j])
            r_norm = np.linalg.norm(r_vec)
        v = r_vec / r_norm
        # the coupling column H[:keep, keep] is recomputed when v is expanded
    raise ConvergenceError(
        f"eigensolver did not converge: {int(converged.sum())} of {k} pairs converged",
        int(converged.sum()))


def _finalise(apply_operator, U, lam):
    U, _ = np.linalg.qr(U)
    AU = np.column_stack([apply_operator(U[:, i]) for i in range(U.shape[1])])
    # Rayleigh-Ritz on the final basis tidies up nearly degenerate pairs
    T = U.T @ AU
    T = (T + T.T) / 2
    mu, Z = np.linalg.eigh(T)
    order = np.lexsort((-mu, -np.abs(mu)))
    Z = Z[:, order]
    U = U @ Z
    AU = AU @ Z
    mu = mu[order]
    lam[:] = mu
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    AU = AU * signs
    res = np.linalg.norm(AU - U * mu, axis=0)
    return U, res


@dataclass
class DiagonalityResult:
    delta_matrix: np.ndarray
    delta_coefficient: float
    eigenvalues: np.ndarray
    diagonal_pairs: list
    zero_diagonal: bool = False
    info: dict = field(default_factory=dict)


def diagonality_coefficient(delta: np.ndarray) -> float:
    total = float(np.sum(delta * delta))
    if total == 0:
        raise DegenerateError("Delta is the zero matrix")
    return float(np.sum(np.diag(delta) ** 2) / total)


def diagonality_test(basis: EigenBasis, net: MultiProfileNetwork,
                     zero_diagonal: bool = False) -> DiagonalityResult:
    """``Delta = U^T F U`` computed as ``(R^T U)^T (R^T U)``.

    ``F`` keeps its unit diagonal unless ``zero_diagonal`` is set, in which
    case ``U^T U`` is subtracted.
    """
    U = basis.eigenvectors
    if U.shape[0] != net.n_profiles:
        raise ValidationError(f"basis has {U.shape[0]} rows, network has {net.n_profiles} profiles")
    S = np.zeros((net.n_accounts, U.shape[1]))
    np.add.at(S, net.account_of, U)
    delta = S.T @ S
    if zero_diagonal:
        delta = delta - U.T @ U
    delta = (delta + delta.T) / 2
    lam = basis.eigenvalues
    order = np.argsort(lam, kind="stable")
    pairs = [(float(lam[i]), float(delta[i, i])) for i in order]
    return DiagonalityResult(delta, diagonality_coefficient(delta), lam.copy(), pairs, zero_diagonal)


def even_symmetry_score(pairs, rel_tol: float = 0.05) -> Optional[float]:
    """Correlation of ``Delta_ii`` at ``lambda`` and at the closest ``-lambda``.

    Positive eigenvalues are matched greedily to the unused negative
    eigenvalue of nearest magnitude, accepting matches within ``rel_tol``
    relative difference.  Returns ``None`` with fewer than three matches.
    """
    pos = sorted([p for p in pairs if p[0] > 0], key=lambda p: -p[0])
    neg = sorted([p for p in pairs if p[0] < 0], key=lambda p: p[0])
    used = set()
    xs, ys = [], []
    for lam, d in pos:
        best, bi = None, None
        for i, (ln, dn) in enumerate(neg):
            if i in used:
                continue
            gap = abs(abs(ln) - lam)
            if gap <= rel_tol * lam and (best is None or gap < best):
                best, bi = gap, i
        if bi is not None:
            used.add(bi)
            xs.append(d)
            ys.append(neg[bi][1])
    if len(xs) < 3 or np.std(xs) == 0 or np.std(ys) == 0:
        return None
    return float(np.corrcoef(xs, ys)[0, 1])


def spectral_report(net: MultiProfileNetwork, k: int = DEFAULT_K, seed: int = 0,
                    tol: float = 1e-10, max_iter: int = 300,
                    zero_diagonal: bool = False) -> DiagonalityResult:
    """Run the diagonality test on ``net`` and attach plotting series.

    ``k`` is reduced to ``|V| - 1`` on small networks.  ``info`` carries the
    top-left 50x50 block of ``Delta`` as ``(i, j, value)`` triples, the
    ``(lambda_i, Delta_ii)`` scatter series, an even-symmetry score and
    convergence statistics.
    """
    n = net.n_profiles
    if net.edge_count == 0:
        raise DegenerateError("operator has no spectrum: the friendship graph has no edges")
    k_eff = min(k, n - 1)
    A = net.graph.adjacency()
    basis = top_k_eigs(lambda x: A @ x, n, k_eff, tol=tol, max_iter=max_iter, seed=seed)
    result = diagonality_test(basis, net, zero_diagonal)
    top = min(HEATMAP_SIZE, k_eff)
    heat = [(i, j, float(result.delta_matrix[i, j])) for i in range(top) for j in range(top)]
    result.info = {
        "k_requested": k,
        "k": k_eff,
        "seed": seed,
        "tolerance": tol,
        "selection": "largest absolute eigenvalue",
        "f_diagonal": "zeroed" if zero_diagonal else "unit",
        "restarts": basis.restarts,
        "matvecs": basis.matvecs,
        "max_residual": float(basis.residuals.max()),
        "norm_estimate": basis.norm_estimate,
        "trace": float(np.trace(result.delta_matrix)),
        "even_symmetry": even_symmetry_score(result.diagonal_pairs),
        "heatmap": heat,
    }
    return result
