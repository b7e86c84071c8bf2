"""Diagonalized operator families, their semigroups, and spectral projections.

Three self-adjoint families are supported on the truncated box:

* fractional Laplacian  |xi|^s - c, realized as a Fourier multiplier on a
  periodic grid (the zero frequency is on the lattice, so the semigroup
  norm identity ||e^{-tH}|| = e^{ct} is exact);
* shifted harmonic oscillator  -Lap + |x|^2 - c on a wall-bounded grid;
* Schrodinger  -Lap + V(x) with a confining or form-small potential.

The wall-bounded Laplacian is discretized by sine collocation: the functions
sin(p pi (x + R) / (2R)), p = 1..m, sampled at cell midpoints form an
orthogonal family that diagonalizes the Dirichlet Laplacian with symbol
(p pi / 2R)^2.  Spectral accuracy here matters: the certificate machinery
downstream consumes eigenvalue gaps directly, and a second-order stencil
would pollute the tenth harmonic-oscillator level at the 1e-2 scale.

All semigroup and projection algebra happens in the eigenbasis, so
idempotence, commutation and Pythagoras identities hold to roundoff.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .domain import (
    GridDomain,
    GridFunction,
    content_hash,
    grid_function_to_json,
    grid_function_from_json,
    norm as _norm,
)

__all__ = [
    "FractionalLaplacian",
    "ShiftedHermite",
    "Schrodinger",
    "OperatorSpec",
    "SpectralDecomposition",
    "Projection",
    "DissipativeReport",
    "HermiteBasis",
    "diagonalize",
    "semigroup_apply",
    "semigroup_norm",
    "project",
    "dissipative_margin",
    "hermite_basis",
    "spec_to_json",
    "spec_from_json",
    "to_coefficients",
    "from_coefficients",
    "basis_block",
    "eigenfunction",
    "dense_matrix",
]

_DENSE_CELL_LIMIT = 4096
_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class FractionalLaplacian:
    """Symbol |xi|^s - c on a periodic grid."""

    s: float
    c: float = 0.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError(f"fractional order s must be positive, got {self.s}")


@dataclass(frozen=True)
class ShiftedHermite:
    """-Lap + |x|^2 - c; spectrum 2k + n - c on the full space."""

    c: float = 0.0


@dataclass(frozen=True)
class Schrodinger:
    """-Lap + V with V either form-small below (condition I) or confining (II).

    Condition I carries the relative bound delta of the negative part; the
    form inequality itself is the caller's responsibility and is not checked
    on the grid.  Condition II is checked at diagonalization time: the
    potential must attain its minimum away from the boundary shell.
    """

    potential: GridFunction
    condition: str = "II"
    delta: Optional[float] = None

    def __post_init__(self):
        if self.condition not in ("I", "II"):
            raise ValueError(f"condition must be 'I' or 'II', got {self.condition!r}")
        if self.condition == "I":
            if self.delta is None or not (0.0 < self.delta < 1.0):
                raise ValueError("condition I requires delta in (0, 1)")


OperatorSpec = Union[FractionalLaplacian, ShiftedHermite, Schrodinger]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Operator spectrum plus an orthonormal eigenbasis on the grid.

    For the Fourier kind the basis is the explicit family
    w_k(x_j) = exp(2 pi i j.k / m) / (2R)^{n/2} in FFT layout, reindexed so
    that ``eigenvalues`` ascends; ``order`` is that permutation and
    ``symbol`` keeps the multiplier in FFT layout for fast application.
    For dense kinds ``vectors`` holds the eigenvectors columnwise,
    normalized in the discrete inner product.
    """

    spec: OperatorSpec
    domain: GridDomain
    basis_kind: str  # "Fourier" | "Dense"
    eigenvalues: np.ndarray
    symbol: Optional[np.ndarray] = None
    order: Optional[np.ndarray] = None
    vectors: Optional[np.ndarray] = None
    max_residual: float = 0.0

    def __post_init__(self):
        for name in ("eigenvalues", "symbol", "order", "vectors"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Projection:
    """Spectral projection onto the eigenspaces with eigenvalue <= threshold."""

    decomposition: SpectralDecomposition
    threshold: float

    def apply(self, f: GridFunction) -> GridFunction:
        return project(self.decomposition, self.threshold, f)


@dataclass(frozen=True)
class DissipativeReport:
    k: float
    t_samples: tuple
    trials: int
    seed: int
    max_ratio: float
    worst_t: float


@dataclass(frozen=True)
class HermiteBasis:
    """Tensor Hermite functions Phi_alpha for all |alpha| <= max_degree."""

    dim: int
    max_degree: int
    domain: GridDomain
    functions: dict = field(repr=False)


# ---------------------------------------------------------------------------
# diagonalization


def _fractional_symbol(spec: FractionalLaplacian, domain: GridDomain) -> np.ndarray:
    xi = domain.frequency_axis()
    if domain.dim == 1:
        mag = np.abs(xi)
    else:
        mag = np.sqrt(xi[:, None] ** 2 + xi[None, :] ** 2)
    return mag**spec.s - spec.c


def _sine_laplacian(domain: GridDomain) -> np.ndarray:
    """Dense Dirichlet Laplacian on one axis via sine collocation."""
    m = domain.points_per_axis
    p = np.arange(1, m + 1)
    S = np.sin(np.pi * np.outer(np.arange(m) + 0.5, p) / m)
    col_norm = np.full(m, np.sqrt(m / 2.0))
    col_norm[-1] = np.sqrt(m)  # the p = m column alternates +-1 at midpoints
    Q = S / col_norm
    kappa = (np.pi * p / (2.0 * domain.half_width)) ** 2
    K = (Q * kappa) @ Q.T
    return 0.5 * (K + K.T)


def _check_confining(potential: np.ndarray):
    shell = np.zeros(potential.shape, dtype=bool)
    for axis in range(potential.ndim):
        idx = [slice(None)] * potential.ndim
        idx[axis] = 0
        shell[tuple(idx)] = True
        idx[axis] = -1
        shell[tuple(idx)] = True
    if potential[shell].min() <= potential[~shell].min():
        raise ValueError(
            "condition II requires the potential to grow toward the box boundary "
            "(boundary-shell minimum must exceed the interior minimum)"
        )


def _dense_eigh(H: np.ndarray):
    return scipy.linalg.eigh(H)


def _diagonalize_dense(spec, domain: GridDomain) -> SpectralDecomposition:
    if domain.periodic:
        raise ValueError("Schrodinger and Hermite operators require a non-periodic grid")
    if domain.cell_count > _DENSE_CELL_LIMIT:
        raise ValueError(
            f"dense diagonalization is limited to {_DENSE_CELL_LIMIT} cells, "
            f"got {domain.cell_count}"
        )
    if isinstance(spec, ShiftedHermite):
        r2 = sum(x**2 for x in domain.meshgrid())
        potential = r2 - spec.c
    else:
        if spec.potential.domain != domain:
            raise ValueError("potential lives on a different domain")
        potential = spec.potential.values
        if spec.condition == "II":
            _check_confining(potential)

    K1 = _sine_laplacian(domain)
    if domain.dim == 1:
        H = K1 + np.diag(potential)
    else:
        m = domain.points_per_axis
        eye = np.eye(m)
        H = np.kron(K1, eye) + np.kron(eye, K1) + np.diag(potential.ravel())
    w, U = _dense_eigh(H)
    vectors = U / np.sqrt(domain.cell_volume)

    resid = H @ U - U * w
    scale = np.maximum(1.0, np.abs(w))
    max_residual = float((np.linalg.norm(resid, axis=0) / scale).max())
    if max_residual > _RESIDUAL_TOL:
        raise RuntimeError(f"eigen residual {max_residual:.3e} exceeds {_RESIDUAL_TOL}")
    return SpectralDecomposition(
        spec=spec,
        domain=domain,
        basis_kind="Dense",
        eigenvalues=w,
        vectors=vectors,
        max_residual=max_residual,
    )


def diagonalize(spec: OperatorSpec, domain: GridDomain, cache_dir=None) -> SpectralDecomposition:
    """Build the spectral decomposition of the operator on the grid.

    Fourier multipliers are assembled directly from the symbol; dense kinds
    go through a symmetric eigensolve.  When ``cache_dir`` is given (or via
    the STABCERT_CACHE_DIR handling in the CLI), dense decompositions are
    stored on disk keyed by a content hash of (spec, domain) and reloaded on
    repeat calls.
    """
    if isinstance(spec, FractionalLaplacian):
        if not domain.periodic:
            raise ValueError("the fractional Laplacian requires a periodic grid")
        symbol = _fractional_symbol(spec, domain)
        order = np.argsort(symbol.ravel(), kind="stable")
        return SpectralDecomposition(
            spec=spec,
            domain=domain,
            basis_kind="Fourier",
            eigenvalues=symbol.ravel()[order],
            symbol=symbol,
            order=order,
        )
    if not isinstance(spec, (ShiftedHermite, Schrodinger)):
        raise TypeError(f"unknown operator spec: {spec!r}")

    key = None
    if cache_dir is not None:
        key = content_hash(spec_to_json(spec), domain)
        path = os.path.join(str(cache_dir), f"decomposition-{key}.npz")
        if os.path.exists(path):
            data = np.load(path)
            return SpectralDecomposition(
                spec=spec,
                domain=domain,
                basis_kind="Dense",
                eigenvalues=data["eigenvalues"],
                vectors=data["vectors"],
                max_residual=float(data["max_residual"]),
            )
    dec = _diagonalize_dense(spec, domain)
    if key is not None:
        os.makedirs(str(cache_dir), exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=str(cache_dir), suffix=".npz.tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(
                    fh,
                    eigenvalues=dec.eigenvalues,
                    vectors=dec.vectors,
                    max_residual=dec.max_residual,
                )
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    return dec


# ---------------------------------------------------------------------------
# coefficient transforms


def _fft_coeff_scale(domain: GridDomain) -> float:
    return domain.cell_volume / (2.0 * domain.half_width) ** (domain.dim / 2.0)


def to_coefficients(dec: SpectralDecomposition, f: GridFunction) -> np.ndarray:
    """Coefficients of ``f`` in the eigenbasis, aligned with ``eigenvalues``."""
    if dec.basis_kind == "Fourier":
        u = np.fft.fftn(f.values).ravel() * _fft_coeff_scale(dec.domain)
        return u[dec.order]
    return (dec.vectors.T @ f.values.ravel()) * dec.domain.cell_volume


def from_coefficients(dec: SpectralDecomposition, coeffs: np.ndarray) -> GridFunction:
    if dec.basis_kind == "Fourier":
        u = np.empty(dec.domain.cell_count, dtype=complex)
        u[dec.order] = coeffs
        vals = np.fft.ifftn(u.reshape(dec.domain.shape)) / _fft_coeff_scale(dec.domain)
        return GridFunction(dec.domain, vals)
    vals = (dec.vectors @ coeffs).reshape(dec.domain.shape)
    return GridFunction(dec.domain, vals)


def basis_block(dec: SpectralDecomposition, indices) -> np.ndarray:
    """Columns (cells x len(indices)) of the selected eigenfunctions.

    ``indices`` refer to the ascending-eigenvalue ordering.
    """
    indices = np.asarray(indices, dtype=int)
    if dec.basis_kind == "Dense":
        return dec.vectors[:, indices]
    m = dec.domain.points_per_axis
    flat = dec.order[indices]
    rows = np.arange(m)
    scale = (2.0 * dec.domain.half_width) ** (dec.domain.dim / 2.0)
    if dec.domain.dim == 1:
        return np.exp(2j * np.pi * np.outer(rows, flat) / m) / scale
    k1, k2 = np.divmod(flat, m)
    A1 = np.exp(2j * np.pi * np.outer(rows, k1) / m)
    A2 = np.exp(2j * np.pi * np.outer(rows, k2) / m)
    return (A1[:, None, :] * A2[None, :, :]).reshape(m * m, len(flat)) / scale


def eigenfunction(dec: SpectralDecomposition, j: int) -> GridFunction:
    col = basis_block(dec, [int(j)])[:, 0]
    return GridFunction(dec.domain, col.reshape(dec.domain.shape))


def dense_matrix(dec: SpectralDecomposition) -> np.ndarray:
    """Materialize the operator as a dense (cells x cells) matrix."""
    if dec.domain.cell_count > _DENSE_CELL_LIMIT:
        raise ValueError("refusing to materialize a dense matrix this large")
    if dec.basis_kind == "Dense":
        return (dec.vectors * dec.eigenvalues) @ dec.vectors.T * dec.domain.cell_volume
    if dec.domain.dim == 1:
        col = np.fft.ifft(dec.symbol)
        H = scipy.linalg.circulant(col)
    else:
        m = dec.domain.points_per_axis
        cells = dec.domain.cell_count
        eye = np.eye(cells).reshape(cells, m, m)
        H = np.fft.ifftn(dec.symbol[None, :, :] * np.fft.fftn(eye, axes=(1, 2)), axes=(1, 2))
        H = H.reshape(cells, cells).T
    if np.abs(H.imag).max() > 1e-10 * max(1.0, np.abs(H.real).max()):
        raise RuntimeError("multiplier matrix has a non-real residue; symbol not even?")
    return H.real


# ---------------------------------------------------------------------------
# semigroup and projections


def semigroup_apply(dec: SpectralDecomposition, t: float, f: GridFunction) -> GridFunction:
    """Apply e^{-tH} by damping each spectral coefficient with e^{-t lambda}."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    if dec.basis_kind == "Fourier":
        fhat = np.fft.fftn(f.values)
        out = np.fft.ifftn(np.exp(-t * dec.symbol) * fhat)
        if np.isrealobj(f.values):
            out = out.real
        return GridFunction(dec.domain, out)
    c = to_coefficients(dec, f)
    return from_coefficients(dec, np.exp(-t * dec.eigenvalues) * c)


def semigroup_norm(dec: SpectralDecomposition, t: float) -> float:
    """Operator norm of e^{-tH}: the largest modal damping factor."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    return float(np.exp(-t * dec.eigenvalues[0]))


def project(dec: SpectralDecomposition, k: float, f: GridFunction) -> GridFunction:
    """Component of ``f`` in span of the eigenfunctions with eigenvalue <= k.

    When no eigenvalue qualifies this is the zero function, which also
    covers the degenerate low-threshold branches of both operator families.
    """
    if dec.basis_kind == "Fourier":
        keep = dec.symbol <= k
        fhat = np.fft.fftn(f.values)
        out = np.fft.ifftn(np.where(keep, fhat, 0.0))
        if np.isrealobj(f.values):
            out = out.real
        return GridFunction(dec.domain, out)
    c = to_coefficients(dec, f)
    c = np.where(dec.eigenvalues <= k, c, 0.0)
    return from_coefficients(dec, c)


def dissipative_margin(dec, k, t_samples, trials, seed: int = 0) -> DissipativeReport:
    """Sampled check of the high-frequency decay bound.

    For random unit-norm f reports the maximum of
    ||(1 - pi_k) e^{-tH} f|| * e^{tk} over the given times; the contract for
    the fractional and harmonic families (with unit rate constants) is that
    this never exceeds 1, because every mode above the threshold k decays at
    least as fast as e^{-tk}.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    max_ratio = -np.inf
    worst_t = float(t_samples[0])
    for _ in range(trials):
        values = rng.standard_normal(dec.domain.shape)
        f = GridFunction(dec.domain, values)
        f = GridFunction(dec.domain, f.values / _norm(f))
        for t in t_samples:
            yt = semigroup_apply(dec, t, f)
            high = GridFunction(dec.domain, yt.values - project(dec, k, yt).values)
            ratio = _norm(high) * np.exp(t * k)
            if ratio > max_ratio:
                max_ratio = ratio
                worst_t = float(t)
    return DissipativeReport(
        k=float(k),
        t_samples=tuple(float(t) for t in t_samples),
        trials=int(trials),
        seed=int(seed),
        max_ratio=float(max_ratio),
        worst_t=worst_t,
    )


# ---------------------------------------------------------------------------
# Hermite functions


def _hermite_axis_values(max_degree: int, x: np.ndarray) -> np.ndarray:
    """Normalized Hermite functions phi_0..phi_K on a coordinate axis.

    Uses the stable normalized three-term recurrence
    phi_{k+1} = sqrt(2/(k+1)) x phi_k - sqrt(k/(k+1)) phi_{k-1};
    the raw polynomial route overflows long before degree 200.
    """
    vals = np.empty((max_degree + 1, x.size))
    vals[0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if max_degree >= 1:
        vals[1] = np.sqrt(2.0) * x * vals[0]
    for k in range(1, max_degree):
        vals[k + 1] = np.sqrt(2.0 / (k + 1)) * x * vals[k] - np.sqrt(k / (k + 1.0)) * vals[k - 1]
    return vals


def hermite_basis(dim: int, max_degree: int, domain: GridDomain) -> HermiteBasis:
    """Tensor-product Hermite functions for all multi-indices |alpha| <= max_degree."""
    if domain.periodic:
        raise ValueError("Hermite functions are sampled on non-periodic grids")
    if dim != domain.dim:
        raise ValueError(f"dim {dim} does not match domain dim {domain.dim}")
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    if max_degree > 200:
        raise ValueError("max_degree > 200 refused (recurrence accuracy not validated there)")
    axis_vals = _hermite_axis_values(max_degree, domain.axis_coords())
    functions = {}
    if dim == 1:
        for k in range(max_degree + 1):
            functions[(k,)] = GridFunction(domain, axis_vals[k])
    else:
        for a in range(max_degree + 1):
            for b in range(max_degree + 1 - a):
                functions[(a, b)] = GridFunction(domain, np.outer(axis_vals[a], axis_vals[b]))
    return HermiteBasis(dim=dim, max_degree=max_degree, domain=domain, functions=functions)


# ---------------------------------------------------------------------------
# spec (de)serialization, shared with the CLI and the cache key


def spec_to_json(spec: OperatorSpec) -> dict:
    if isinstance(spec, FractionalLaplacian):
        return {"kind": "fractional", "s": spec.s, "c": spec.c}
    if isinstance(spec, ShiftedHermite):
        return {"kind": "hermite", "c": spec.c}
    if isinstance(spec, Schrodinger):
        doc = {"kind": "schrodinger", "condition": spec.condition,
               "potential": grid_function_to_json(spec.potential)}
        if spec.delta is not None:
            doc["delta"] = spec.delta
        return doc
    raise TypeError(f"unknown operator spec: {spec!r}")


def spec_from_json(doc: dict) -> OperatorSpec:
    kind = doc.get("kind")
    if kind == "fractional":
        return FractionalLaplacian(s=float(doc["s"]), c=float(doc.get("c", 0.0)))
    if kind == "hermite":
        return ShiftedHermite(c=float(doc.get("c", 0.0)))
    if kind == "schrodinger":
        return Schrodinger(
            potential=grid_function_from_json(doc["potential"]),
            condition=doc.get("condition", "II"),
            delta=doc.get("delta"),
        )
    raise ValueError(f"unknown operator kind {kind!r}")
