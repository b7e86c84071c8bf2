"""Uniform grids on a truncated box and the shared discrete L2 structure.

Every computation in this package lives on the box [-R, R]^n (n = 1 or 2)
split into m cells per axis.  Cell centers sit at the midpoints

    x_j = -R + (j + 1/2) h,        h = 2R / m,

for both periodic and wall-bounded grids, and all inner products are
midpoint-rule sums weighted by the cell volume h^n.  With this convention
the discrete Fourier transform on periodic grids is an exact isometry
(Parseval holds to roundoff), which keeps projection algebra and semigroup
evaluation exact downstream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainMismatchError",
    "GridDomain",
    "GridFunction",
    "make_grid",
    "grid_function",
    "from_callable",
    "inner_product",
    "norm",
    "restrict_norm",
    "domain_header",
    "domain_from_header",
    "grid_function_to_json",
    "grid_function_from_json",
    "save_grid_function",
    "load_grid_function",
    "content_hash",
]


class DomainMismatchError(ValueError):
    """Two grid objects that must share a domain do not."""


@dataclass(frozen=True)
class GridDomain:
    """Uniform grid on [-R, R]^dim with midpoint cell centers."""

    dim: int
    half_width: float
    points_per_axis: int
    periodic: bool

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_count(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    def axis_coords(self) -> np.ndarray:
        """Midpoint coordinates along one axis."""
        m = self.points_per_axis
        return -self.half_width + (np.arange(m) + 0.5) * self.spacing

    def meshgrid(self) -> tuple:
        """Coordinate arrays of the full grid, one per axis, ij indexed."""
        axes = (self.axis_coords(),) * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def radius_grid(self, center=None) -> np.ndarray:
        """Euclidean distance of each cell center from ``center`` (default origin).

        On periodic grids distances use the minimal image convention.
        """
        if center is None:
            center = (0.0,) * self.dim
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if center.shape != (self.dim,):
            raise ValueError(f"center must have {self.dim} components")
        sq = 0.0
        for axis, mesh in enumerate(self.meshgrid()):
            d = mesh - center[axis]
            if self.periodic:
                width = 2.0 * self.half_width
                d = (d + self.half_width) % width - self.half_width
            sq = sq + d * d
        return np.sqrt(sq)

    def frequency_axis(self) -> np.ndarray:
        """Fourier frequencies (pi/R) * {-m/2, ..., m/2 - 1} in FFT layout."""
        if not self.periodic:
            raise ValueError("frequency lattice is defined for periodic grids only")
        m = self.points_per_axis
        return (np.pi / self.half_width) * np.fft.fftfreq(m, d=1.0 / m)


@dataclass(frozen=True)
class GridFunction:
    """Scalar values, one per grid cell, attached to their domain."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.domain.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid shape {self.domain.shape}"
            )
        if not np.issubdtype(values.dtype, np.floating) and not np.issubdtype(
            values.dtype, np.complexfloating
        ):
            values = values.astype(float)
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def make_grid(dim: int, half_width: float, points_per_axis: int, periodic: bool = True) -> GridDomain:
    """Validate parameters and build a GridDomain.

    Parameters
    ----------
    dim : 1 or 2.  Higher dimensions are refused; the dense eigensolvers
        downstream would not be affordable.
    half_width : box half width R > 0.
    points_per_axis : even integer >= 8.
    periodic : periodic wrap (Fourier operators) or walls at +-R.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if half_width <= 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    m = int(points_per_axis)
    if m != points_per_axis or m % 2 != 0 or m < 8:
        raise ValueError(f"points_per_axis must be an even integer >= 8, got {points_per_axis}")
    return GridDomain(dim=dim, half_width=float(half_width), points_per_axis=m, periodic=bool(periodic))


def grid_function(domain: GridDomain, values) -> GridFunction:
    return GridFunction(domain, np.asarray(values))


def from_callable(domain: GridDomain, fn) -> GridFunction:
    """Sample ``fn`` at the cell centers; fn receives one array per axis."""
    return GridFunction(domain, np.asarray(fn(*domain.meshgrid())))


def _check_same_domain(a, b):
    if a.domain != b.domain:
        raise DomainMismatchError(f"domains differ: {a.domain} vs {b.domain}")


def inner_product(f: GridFunction, g: GridFunction):
    """Discrete L2 inner product, linear in ``f`` and conjugate-linear in ``g``."""
    _check_same_domain(f, g)
    val = np.vdot(g.values.ravel(), f.values.ravel()) * f.domain.cell_volume
    if np.isrealobj(f.values) and np.isrealobj(g.values):
        return float(val.real)
    return complex(val)


def norm(f: GridFunction) -> float:
    return float(np.sqrt(f.domain.cell_volume) * np.linalg.norm(f.values.ravel()))


def restrict_norm(f: GridFunction, e) -> float:
    """Discrete L2 norm of ``f`` over the cells where the indicator ``e`` is true.

    ``e`` is any object with a matching ``domain`` and a boolean ``cells``
    array (see geometry.SetIndicator).  Always <= norm(f).
    """
    if f.domain != e.domain:
        raise DomainMismatchError("grid function and set live on different domains")
    sq = np.abs(f.values[e.cells]) ** 2
    return float(np.sqrt(f.domain.cell_volume * sq.sum()))


# ---------------------------------------------------------------------------
# serialization

_HEADER_KEYS = ("dim", "half_width", "points_per_axis", "periodic")


def domain_header(domain: GridDomain) -> dict:
    return {
        "dim": domain.dim,
        "half_width": domain.half_width,
        "points_per_axis": domain.points_per_axis,
        "periodic": domain.periodic,
    }


def domain_from_header(header: dict) -> GridDomain:
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"domain header is missing keys: {missing}")
    return make_grid(
        header["dim"], header["half_width"], header["points_per_axis"], header["periodic"]
    )


def grid_function_to_json(f: GridFunction) -> dict:
    """Flat row-major JSON representation with the domain header attached."""
    flat = f.values.ravel(order="C")
    doc = {"header": domain_header(f.domain)}
    if np.iscomplexobj(flat):
        doc["dtype"] = "complex"
        doc["values"] = [[float(v.real), float(v.imag)] for v in flat]
    else:
        doc["dtype"] = "real"
        doc["values"] = [float(v) for v in flat]
    return doc


def grid_function_from_json(doc: dict) -> GridFunction:
    domain = domain_from_header(doc["header"])
    if doc.get("dtype") == "complex":
        vals = np.array([complex(re, im) for re, im in doc["values"]])
    else:
        vals = np.asarray(doc["values"], dtype=float)
    return GridFunction(domain, vals.reshape(domain.shape))


def save_grid_function(f: GridFunction, path) -> None:
    """Write ``f`` to ``path``; JSON when the suffix is .json, raw binary otherwise.

    The binary layout is one UTF-8 header line (JSON: domain header plus
    dtype) followed by the row-major values buffer.
    """
    path = str(path)
    if path.endswith(".json"):
        with open(path, "w") as fh:
            json.dump(grid_function_to_json(f), fh)
        return
    flat = np.ascontiguousarray(f.values.ravel(order="C"))
    dtype = "complex128" if np.iscomplexobj(flat) else "float64"
    flat = flat.astype(dtype)
    header = dict(domain_header(f.domain), dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(flat.tobytes())


def load_grid_function(path) -> GridFunction:
    path = str(path)
    if path.endswith(".json"):
        with open(path) as fh:
            return grid_function_from_json(json.load(fh))
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        buf = fh.read()
    domain = domain_from_header(header)
    vals = np.frombuffer(buf, dtype=header["dtype"]).reshape(domain.shape)
    return GridFunction(domain, vals)


# ---------------------------------------------------------------------------
# content hashing (drives the decomposition cache and result provenance)


def _hash_update(h, obj):
    if isinstance(obj, np.ndarray):
        h.update(str(obj.dtype).encode())
        h.update(str(obj.shape).encode())
        h.update(np.ascontiguousarray(obj).tobytes())
    elif isinstance(obj, GridFunction):
        _hash_update(h, domain_header(obj.domain))
        _hash_update(h, obj.values)
    elif isinstance(obj, GridDomain):
        _hash_update(h, domain_header(obj))
    elif isinstance(obj, (list, tuple)):
        h.update(b"[")
        for item in obj:
            _hash_update(h, item)
        h.update(b"]")
    elif isinstance(obj, dict):
        h.update(b"{")
        for key in sorted(obj):
            h.update(str(key).encode())
            _hash_update(h, obj[key])
        h.update(b"}")
    else:
        h.update(repr(obj).encode())


def content_hash(*parts) -> str:
    """Stable SHA-256 over nested scalars, dicts, arrays and grid objects."""
    h = hashlib.sha256()
    for part in parts:
        _hash_update(h, part)
    return h.hexdigest()
