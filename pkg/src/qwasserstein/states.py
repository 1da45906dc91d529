"""Density matrices: validation, projection, spectral decomposition and sampling.

A state is stored as a complex ``numpy`` array wrapped in :class:`DensityMatrix`.
The wrapped array is read-only so instances can be shared freely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadRank, NotHermitian, NotPSD, NotSquare, TraceMismatch, ZeroMatrix

DEFAULT_TOL = 1e-10
DEFAULT_DROP_TOL = 1e-12


def _as_square(raw) -> np.ndarray:
    mat = np.array(raw, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
        raise NotSquare(f"expected a non-empty square matrix, got shape {mat.shape}")
    return mat


def _frozen(mat: np.ndarray) -> np.ndarray:
    out = np.array(mat, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace complex matrix.

    Construct through :func:`validate_state` or :func:`project_to_state`;
    the constructor itself does not check anything.
    """

    mat: np.ndarray
    validation_tol: float = DEFAULT_TOL

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    @property
    def re(self) -> np.ndarray:
        return self.mat.real

    @property
    def im(self) -> np.ndarray:
        return self.mat.imag

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.mat)

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self.mat.shape == other.mat.shape and np.array_equal(self.mat, other.mat)

    def __hash__(self):
        return hash(self.mat.tobytes())


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigen-pairs ``(weight, unit vector)`` with weights summing to one."""

    weights: np.ndarray
    vectors: np.ndarray  # shape (k, n); row l is the l-th eigenvector
    pairs: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(zip(self.weights.tolist(), list(self.vectors))))

    def __len__(self):
        return len(self.weights)

    def reconstruct(self) -> np.ndarray:
        v = self.vectors
        return (v.T * self.weights) @ v.conj()


def validate_state(raw, tol: float = DEFAULT_TOL) -> DensityMatrix:
    """Check that ``raw`` is a density matrix within ``tol`` and wrap it.

    Raises
    ------
    NotSquare, NotHermitian, NotPSD, TraceMismatch
        On the first violated property, in that order.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    mat = _as_square(raw)
    asym = float(np.max(np.abs(mat - mat.conj().T)))
    if asym > tol:
        raise NotHermitian(asym)
    # eigenvalues of the Hermitian part; the anti-Hermitian remainder is below tol
    herm = (mat + mat.conj().T) / 2
    lam_min = float(np.linalg.eigvalsh(herm)[0])
    if lam_min < -tol:
        raise NotPSD(lam_min)
    trace = complex(np.trace(mat))
    if abs(trace - 1) > tol:
        raise TraceMismatch(trace.real if abs(trace.imag) <= tol else trace)
    return DensityMatrix(_frozen(mat), tol)


def project_to_state(raw) -> DensityMatrix:
    """Nearest density matrix obtained by Hermitizing, clipping and renormalizing.

    Negative eigenvalues of the Hermitian part are set to zero and the trace
    is rescaled to one.
    """
    mat = _as_square(raw)
    herm = (mat + mat.conj().T) / 2
    lam, vec = np.linalg.eigh(herm)
    lam = np.clip(lam, 0.0, None)
    total = float(lam.sum())
    if total <= 1e-14:
        raise ZeroMatrix("projected matrix has (numerically) zero trace")
    out = (vec * (lam / total)) @ vec.conj().T
    out = (out + out.conj().T) / 2
    return DensityMatrix(_frozen(out), DEFAULT_TOL)


def spectral_decomposition(rho: DensityMatrix, drop_tol: float = DEFAULT_DROP_TOL) -> SpectralDecomposition:
    if not 0 <= drop_tol <= 1e-6:
        raise ValueError("drop_tol must lie in [0, 1e-6]")
    lam, vec = np.linalg.eigh(rho.mat)
    # descending order keeps the dominant eigenvector first
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    keep = lam > drop_tol
    weights = lam[keep] / lam[keep].sum()
    vectors = vec[:, keep].T.copy()
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return SpectralDecomposition(weights, vectors)


def random_density(n: int, rank: int, seed: int) -> DensityMatrix:
    """Random state ``G G* / Tr(G G*)`` with ``G`` an ``n x rank`` complex Gaussian matrix."""
    if not 1 <= rank <= n:
        raise BadRank(f"rank must satisfy 1 <= rank <= n, got rank={rank}, n={n}")
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))) / np.sqrt(2)
    mat = g @ g.conj().T
    mat = mat / np.trace(mat).real
    mat = (mat + mat.conj().T) / 2
    return DensityMatrix(_frozen(mat), DEFAULT_TOL)


def haar_vectors(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` unit vectors in ``C^n`` drawn uniformly (normalized complex Gaussians)."""
    g = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def pure_state(vector) -> DensityMatrix:
    """Projector onto the normalized ``vector``."""
    v = np.asarray(vector, dtype=complex)
    v = v / np.linalg.norm(v)
    return DensityMatrix(_frozen(np.outer(v, v.conj())), DEFAULT_TOL)


# -- state files -------------------------------------------------------------

def state_to_dict(rho: DensityMatrix) -> dict:
    return {"n": rho.n, "re": rho.re.tolist(), "im": rho.im.tolist()}


def matrix_from_dict(doc: dict) -> np.ndarray:
    """Raw complex matrix from a ``{"n", "re", "im"}`` document (``im`` optional)."""
    try:
        n = int(doc["n"])
        re = np.array(doc["re"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise NotSquare(f"state document needs integer 'n' and numeric 're': {exc}") from exc
    im = np.array(doc["im"], dtype=float) if doc.get("im") is not None else np.zeros_like(re)
    if re.shape != (n, n) or im.shape != (n, n):
        raise NotSquare(f"'re'/'im' must be {n}x{n}, got {re.shape} and {im.shape}")
    return re + 1j * im


def load_state(path, tol: float = DEFAULT_TOL, project: bool = False) -> DensityMatrix:
    doc = json.loads(Path(path).read_text())
    raw = matrix_from_dict(doc)
    return project_to_state(raw) if project else validate_state(raw, tol)


def save_state(rho: DensityMatrix, path) -> None:
    Path(path).write_text(json.dumps(state_to_dict(rho), indent=2) + "\n")
