"""Grid-sampled scalar fields, coefficient data and circle traces.

Conventions used throughout the package:

* a field lives on a uniform N x N grid centered at ``center`` with spacing
  ``h``; ``values[i, j]`` is the sample at ``center + ((i - (N-1)/2) h,
  (j - (N-1)/2) h)``, i.e. axis 0 is x and axis 1 is y;
* interpolation is bilinear everywhere;
* cut cells of a disk are weighted by the fraction of the cell inside the
  disk, estimated with a 4 x 4 subcell sample.

All objects are immutable after construction and every operation is a pure
function of its inputs.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainOverflow, RejectedInput

TOL_ALG = 1e-10          # pure-algebra identities
TOL_LIP = 1e-6           # slack on the Lipschitz annotation check
POSITIVITY_FLOOR = 1e-12  # relative floor defining {u > 0} on the grid

# 4x4 subcell offsets (cell centered at a node, side h), in units of h
_SUB = (np.arange(4) + 0.5) / 4.0 - 0.5
_SUB_X, _SUB_Y = np.meshgrid(_SUB, _SUB, indexing="ij")
_SUB_X = _SUB_X.ravel()
_SUB_Y = _SUB_Y.ravel()


def _as_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(2)
    return p


@dataclass(frozen=True)
class ScalarField2D:
    """Real function sampled on a uniform square grid.

    ``sign_mode`` is "nonnegative" or "signed"; ``lipschitz_bound`` is an
    optional annotation checked against adjacent-sample differences.
    """

    values: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    spacing: float = 1.0
    lipschitz_bound: float | None = None
    sign_mode: str = "signed"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise RejectedInput("field values must be a square matrix")
        if vals.shape[0] < 3:
            raise RejectedInput("grid needs N >= 3")
        if not np.all(np.isfinite(vals)):
            raise RejectedInput("field contains non-finite samples")
        if not self.spacing > 0:
            raise RejectedInput("spacing h must be positive")
        if self.sign_mode not in ("nonnegative", "signed"):
            raise RejectedInput(f"unknown sign_mode {self.sign_mode!r}")
        if self.sign_mode == "nonnegative" and vals.min() < 0.0:
            raise RejectedInput("nonnegative field has negative samples")
        if self.lipschitz_bound is not None:
            L = float(self.lipschitz_bound)
            if L < 0:
                raise RejectedInput("lipschitz_bound must be >= 0")
            step = max(
                np.abs(np.diff(vals, axis=0)).max(initial=0.0),
                np.abs(np.diff(vals, axis=1)).max(initial=0.0),
            )
            if step > L * self.spacing * (1.0 + TOL_LIP) + 1e-300:
                raise RejectedInput(
                    f"adjacent-sample difference {step:.3e} exceeds "
                    f"L*h = {L * self.spacing:.3e}"
                )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "center", _as_point(self.center))
        self.center.setflags(write=False)

    # -- geometry ----------------------------------------------------------
    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def half_width(self) -> float:
        return 0.5 * (self.n - 1) * self.spacing

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.n
        return self.center[axis] + (np.arange(n) - 0.5 * (n - 1)) * self.spacing

    def meshgrid(self):
        x = self.axis_coords(0)
        y = self.axis_coords(1)
        return np.meshgrid(x, y, indexing="ij")

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        d = np.abs(pts - self.center)
        return np.all(d <= self.half_width - margin + 1e-12, axis=-1)

    # -- sampling ----------------------------------------------------------
    def sample(self, points, mode: str = "strict") -> np.ndarray:
        """Bilinear interpolation at an (..., 2) array of points.

        mode "strict" raises DomainOverflow outside the grid, "clamp"
        clamps coordinates to the boundary.
        """
        pts = np.asarray(points, dtype=float)
        tx = (pts[..., 0] - self.center[0]) / self.spacing + 0.5 * (self.n - 1)
        ty = (pts[..., 1] - self.center[1]) / self.spacing + 0.5 * (self.n - 1)
        if mode == "strict":
            eps = 1e-9
            if (tx.min() < -eps or tx.max() > self.n - 1 + eps
                    or ty.min() < -eps or ty.max() > self.n - 1 + eps):
                raise DomainOverflow("sample point outside field domain")
        tx = np.clip(tx, 0.0, self.n - 1 - 1e-12)
        ty = np.clip(ty, 0.0, self.n - 1 - 1e-12)
        i0 = tx.astype(int)
        j0 = ty.astype(int)
        fx = tx - i0
        fy = ty - j0
        v = self.values
        return ((1 - fx) * (1 - fy) * v[i0, j0]
                + fx * (1 - fy) * v[i0 + 1, j0]
                + (1 - fx) * fy * v[i0, j0 + 1]
                + fx * fy * v[i0 + 1, j0 + 1])

    def gradient(self):
        """Central differences in the interior, one-sided on the grid edge."""
        gx, gy = np.gradient(self.values, self.spacing, edge_order=1)
        return gx, gy

    def positivity_floor(self) -> float:
        m = np.abs(self.values).max()
        return POSITIVITY_FLOOR * m

    # -- quadrature weights --------------------------------------------------
    def disk_weights(self, x0, r: float) -> np.ndarray:
        """Fraction of each grid cell inside the disk B_r(x0), by 4x4 subsampling."""
        x0 = _as_point(x0)
        X, Y = self.meshgrid()
        h = self.spacing
        frac = np.zeros_like(self.values)
        for sx, sy in zip(_SUB_X, _SUB_Y):
            dx = X + sx * h - x0[0]
            dy = Y + sy * h - x0[1]
            frac += (dx * dx + dy * dy <= r * r)
        return frac / _SUB_X.size

    def sign_region_weights(self, x0, r: float, sign: int, floor: float | None = None):
        """Fraction of each cell where (sign * u > floor) and the point is in B_r(x0).

        The indicator is evaluated on the bilinear interpolant at the 4x4
        subcell points, which keeps the measure of a half-plane O(h^2)
        accurate instead of the half-cell bias of a cell-center indicator.
        """
        x0 = _as_point(x0)
        if floor is None:
            floor = self.positivity_floor()
        X, Y = self.meshgrid()
        h = self.spacing
        frac = np.zeros_like(self.values)
        for sx, sy in zip(_SUB_X, _SUB_Y):
            px = X + sx * h
            py = Y + sy * h
            dx = px - x0[0]
            dy = py - x0[1]
            inside = dx * dx + dy * dy <= r * r
            vals = self.sample(np.stack([px, py], axis=-1), mode="clamp")
            frac += inside & (sign * vals > floor)
        return frac / _SUB_X.size

    # -- serialization -------------------------------------------------------
    def to_csv(self, path) -> None:
        n = self.n
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        X, Y = self.meshgrid()
        data = np.column_stack([
            ii.ravel(), jj.ravel(), X.ravel(), Y.ravel(), self.values.ravel()
        ])
        with open(path, "w") as fh:
            fh.write("i,j,x,y,value\n")
            for row in data:
                fh.write("%d,%d,%.17g,%.17g,%.17g\n"
                         % (int(row[0]), int(row[1]), row[2], row[3], row[4]))

    @classmethod
    def from_csv(cls, path, sign_mode="signed", lipschitz_bound=None):
        raw = np.genfromtxt(path, delimiter=",", names=True)
        n = int(raw["i"].max()) + 1
        if raw.size != n * n or int(raw["j"].max()) + 1 != n:
            raise RejectedInput("CSV does not describe a square grid")
        vals = np.zeros((n, n))
        vals[raw["i"].astype(int), raw["j"].astype(int)] = raw["value"]
        xs = np.sort(np.unique(np.round(raw["x"], 12)))
        h = float(np.mean(np.diff(xs)))
        cx = 0.5 * (raw["x"].min() + raw["x"].max())
        cy = 0.5 * (raw["y"].min() + raw["y"].max())
        return cls(vals, np.array([cx, cy]), h,
                   lipschitz_bound=lipschitz_bound, sign_mode=sign_mode)

    def to_binary(self, path) -> None:
        """Compact binary format: magic 'FBL1', little-endian doubles, row-major."""
        with open(path, "wb") as fh:
            fh.write(b"FBL1")
            lip = np.nan if self.lipschitz_bound is None else float(self.lipschitz_bound)
            fh.write(struct.pack(
                "<IdddB", self.n, self.center[0], self.center[1], self.spacing,
                1 if self.sign_mode == "nonnegative" else 0))
            fh.write(struct.pack("<d", lip))
            fh.write(self.values.astype("<f8").tobytes(order="C"))

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as fh:
            buf = fh.read()
        if buf[:4] != b"FBL1":
            raise RejectedInput("bad magic bytes, not an FBL1 field")
        n, cx, cy, h, nonneg = struct.unpack_from("<IdddB", buf, 4)
        off = 4 + struct.calcsize("<IdddB")
        (lip,) = struct.unpack_from("<d", buf, off)
        off += 8
        vals = np.frombuffer(buf, dtype="<f8", count=n * n, offset=off)
        vals = vals.reshape(n, n).copy()
        return cls(vals, np.array([cx, cy]), h,
                   lipschitz_bound=None if np.isnan(lip) else lip,
                   sign_mode="nonnegative" if nonneg else "signed")

    # -- constructors --------------------------------------------------------
    @classmethod
    def from_function(cls, f, n: int, half_width: float = 1.0, center=(0.0, 0.0),
                      sign_mode="signed", lipschitz_bound=None):
        h = 2.0 * half_width / (n - 1)
        c = _as_point(center)
        coords = (np.arange(n) - 0.5 * (n - 1)) * h
        X, Y = np.meshgrid(coords + c[0], coords + c[1], indexing="ij")
        return cls(f(X, Y), c, h, sign_mode=sign_mode,
                   lipschitz_bound=lipschitz_bound)

    def measured_lipschitz(self) -> float:
        """Lipschitz constant measured from the adjacent-sample differences."""
        step = max(np.abs(np.diff(self.values, axis=0)).max(initial=0.0),
                   np.abs(np.diff(self.values, axis=1)).max(initial=0.0))
        return step / self.spacing

    def with_lipschitz(self, L: float | None = None) -> "ScalarField2D":
        if L is None:
            L = self.measured_lipschitz()
        return ScalarField2D(self.values.copy(), self.center.copy(), self.spacing,
                             lipschitz_bound=L, sign_mode=self.sign_mode)


@dataclass(frozen=True)
class CircleTrace:
    """Function on the unit circle as uniform angular samples.

    samples[k] is the value at theta_k = 2 pi k / N; ``radius_of_origin``
    records the radius of the circle the trace was read from.
    """

    samples: np.ndarray
    radius_of_origin: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size < 16 or s.size % 2 != 0:
            raise RejectedInput("trace needs N_theta >= 16 and even")
        if not np.all(np.isfinite(s)):
            raise RejectedInput("trace contains non-finite samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n_theta(self) -> int:
        return self.samples.size

    def thetas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    def integral(self, f=None) -> float:
        vals = self.samples if f is None else f(self.samples)
        return float(vals.sum() * 2.0 * np.pi / self.n_theta)

    def l2_distance_sq(self, other: "CircleTrace") -> float:
        if other.n_theta != self.n_theta:
            raise RejectedInput("traces have different angular resolutions")
        d = self.samples - other.samples
        return float((d * d).sum() * 2.0 * np.pi / self.n_theta)

    def derivative(self) -> np.ndarray:
        """Spectral angular derivative."""
        k = np.fft.rfftfreq(self.n_theta, d=1.0 / self.n_theta)
        return np.fft.irfft(1j * k * np.fft.rfft(self.samples), n=self.n_theta)

    def h1_norm_sq(self) -> float:
        """Integral over the circle of c^2 + c'^2 (spectral)."""
        c = np.fft.rfft(self.samples)
        k = np.fft.rfftfreq(self.n_theta, d=1.0 / self.n_theta)
        w = np.full_like(k, 2.0)
        w[0] = 1.0
        if self.n_theta % 2 == 0:
            w[-1] = 1.0
        scale = 2.0 * np.pi / self.n_theta ** 2
        return float(np.sum(w * (1.0 + k * k) * np.abs(c) ** 2) * scale)

    def value_at(self, theta) -> np.ndarray:
        """Periodic linear interpolation of the samples."""
        t = np.asarray(theta, dtype=float) * self.n_theta / (2.0 * np.pi)
        t = np.mod(t, self.n_theta)
        k0 = t.astype(int) % self.n_theta
        frac = t - np.floor(t)
        k1 = (k0 + 1) % self.n_theta
        return (1 - frac) * self.samples[k0] + frac * self.samples[k1]

    @classmethod
    def from_function(cls, f, n_theta: int = 256, radius_of_origin: float = 1.0):
        th = 2.0 * np.pi * np.arange(n_theta) / n_theta
        return cls(f(th), radius_of_origin)


@dataclass(frozen=True)
class HalfPlaneModel:
    """Half-plane (or two-plane) profile mu+ max(0, s) + mu- min(0, s), s = (x-offset).nu."""

    mu_plus: float
    nu: np.ndarray
    mu_minus: float = 0.0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        nu = _as_point(self.nu)
        if abs(np.hypot(nu[0], nu[1]) - 1.0) > 1e-8:
            raise RejectedInput("nu must be a unit vector")
        if self.mu_plus < 0 or self.mu_minus < 0:
            raise RejectedInput("mu_plus and mu_minus must be >= 0")
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "offset", _as_point(self.offset))
        self.offset.setflags(write=False)

    def __call__(self, X, Y):
        s = (X - self.offset[0]) * self.nu[0] + (Y - self.offset[1]) * self.nu[1]
        return self.mu_plus * np.maximum(s, 0.0) + self.mu_minus * np.minimum(s, 0.0)

    def as_field(self, n: int, half_width: float = 1.0, center=(0.0, 0.0)) -> ScalarField2D:
        return ScalarField2D.from_function(self, n, half_width, center)


class CoeffData:
    """Matrix field A(x), measure weights Q, and right-hand sides f +/-.

    Constants: ellipticity M_A, Hoelder data (C_A, delta_A), Q bounds C_Q
    and Hoelder exponent delta_Q.
    """

    def __init__(self, a11, a12, a22, q_op, q_tp_plus, q_tp_minus,
                 f_plus, f_minus, center, spacing,
                 C_A=1.0, M_A=1.0, delta_A=1.0, C_Q=1.0, delta_Q=1.0,
                 validate=True):
        arrays = [np.asarray(a, dtype=float) for a in
                  (a11, a12, a22, q_op, q_tp_plus, q_tp_minus, f_plus, f_minus)]
        shape = arrays[0].shape
        for a in arrays:
            if a.shape != shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise RejectedInput("coefficient fields must share a square grid")
            a.setflags(write=False)
        (self.a11, self.a12, self.a22, self.q_op, self.q_tp_plus,
         self.q_tp_minus, self.f_plus, self.f_minus) = arrays
        self.center = _as_point(center)
        self.spacing = float(spacing)
        self.C_A = float(C_A)
        self.M_A = float(M_A)
        self.delta_A = float(delta_A)
        self.C_Q = float(C_Q)
        self.delta_Q = float(delta_Q)
        for name in ("C_A", "M_A", "delta_A", "C_Q", "delta_Q"):
            if getattr(self, name) <= 0:
                raise RejectedInput(f"{name} must be positive")
        self._grid = ScalarField2D(np.zeros(shape), self.center, self.spacing)
        if validate:
            self._validate()

    # 2x2 symmetric eigenvalues in closed form
    def _eigrange(self):
        tr = 0.5 * (self.a11 + self.a22)
        disc = np.sqrt((0.5 * (self.a11 - self.a22)) ** 2 + self.a12 ** 2)
        return tr - disc, tr + disc

    def _validate(self):
        lo, hi = self._eigrange()
        if lo.min() < 1.0 / self.M_A - 1e-9 or hi.max() > self.M_A + 1e-9:
            raise RejectedInput("eigenvalues of A leave [1/M_A, M_A]")
        for q in (self.q_op, self.q_tp_plus, self.q_tp_minus):
            if q.min() < 1.0 / self.C_Q - 1e-9 or q.max() > self.C_Q + 1e-9:
                raise RejectedInput("a Q field leaves [1/C_Q, C_Q]")
        # Hoelder quotient on a fixed random pair sample
        rng = np.random.default_rng(0)
        n = self.a11.shape[0]
        idx = rng.integers(0, n, size=(64, 4))
        h = self.spacing
        for a in (self.a11, self.a12, self.a22):
            d_val = np.abs(a[idx[:, 0], idx[:, 1]] - a[idx[:, 2], idx[:, 3]])
            d_pos = h * np.hypot(idx[:, 0] - idx[:, 2], idx[:, 1] - idx[:, 3])
            ok = d_pos > 0
            quot = d_val[ok] / d_pos[ok] ** self.delta_A
            if quot.size and quot.max() > self.C_A * (1.0 + 1e-6):
                raise RejectedInput("sampled Hoelder quotient of A exceeds C_A")

    def _field(self, arr):
        return ScalarField2D(arr, self.center, self.spacing)

    def A_at(self, point) -> np.ndarray:
        p = _as_point(point)
        a11 = float(self._field(self.a11).sample(p))
        a12 = float(self._field(self.a12).sample(p))
        a22 = float(self._field(self.a22).sample(p))
        return np.array([[a11, a12], [a12, a22]])

    def q_at(self, point, which: str) -> float:
        arr = {"op": self.q_op, "tp_plus": self.q_tp_plus,
               "tp_minus": self.q_tp_minus}[which]
        return float(self._field(arr).sample(_as_point(point)))

    def f_at(self, point, which: str) -> float:
        arr = {"plus": self.f_plus, "minus": self.f_minus}[which]
        return float(self._field(arr).sample(_as_point(point)))

    def a_fields_on(self, fieldgrid: ScalarField2D):
        """Sample a11, a12, a22 on another field's nodes (clamped bilinear)."""
        X, Y = fieldgrid.meshgrid()
        pts = np.stack([X, Y], axis=-1)
        return (self._field(self.a11).sample(pts, mode="clamp"),
                self._field(self.a12).sample(pts, mode="clamp"),
                self._field(self.a22).sample(pts, mode="clamp"))

    def q_field_on(self, fieldgrid: ScalarField2D, which: str):
        arr = {"op": self.q_op, "tp_plus": self.q_tp_plus,
               "tp_minus": self.q_tp_minus}[which]
        X, Y = fieldgrid.meshgrid()
        return self._field(arr).sample(np.stack([X, Y], axis=-1), mode="clamp")

    def delta_min(self, delta1: float) -> float:
        """Combined Hoelder exponent min(delta_A, delta_Q, delta1)."""
        return min(self.delta_A, self.delta_Q, float(delta1))

    @classmethod
    def constant(cls, A=None, q_op=1.0, q_tp_plus=1.0, q_tp_minus=1.0,
                 f_plus=0.0, f_minus=0.0, n=9, half_width=2.0, center=(0.0, 0.0),
                 C_A=1.0, M_A=None, delta_A=1.0, C_Q=None, delta_Q=1.0):
        if A is None:
            A = np.eye(2)
        A = np.asarray(A, dtype=float)
        ones = np.ones((n, n))
        eigs = np.linalg.eigvalsh(A)
        if M_A is None:
            M_A = max(eigs.max(), 1.0 / eigs.min()) * (1.0 + 1e-9)
        if C_Q is None:
            qs = [q_op, q_tp_plus, q_tp_minus]
            C_Q = max(max(qs), 1.0 / min(qs)) * (1.0 + 1e-9)
        h = 2.0 * half_width / (n - 1)
        return cls(A[0, 0] * ones, A[0, 1] * ones, A[1, 1] * ones,
                   q_op * ones, q_tp_plus * ones, q_tp_minus * ones,
                   f_plus * ones, f_minus * ones, center, h,
                   C_A=C_A, M_A=M_A, delta_A=delta_A, C_Q=C_Q, delta_Q=delta_Q)

    @classmethod
    def from_functions(cls, A_func, q_op, q_tp_plus, q_tp_minus,
                       f_plus=None, f_minus=None, n=65, half_width=2.0,
                       center=(0.0, 0.0), **consts):
        h = 2.0 * half_width / (n - 1)
        c = _as_point(center)
        coords = (np.arange(n) - 0.5 * (n - 1)) * h
        X, Y = np.meshgrid(coords + c[0], coords + c[1], indexing="ij")
        a = A_func(X, Y)
        zero = np.zeros_like(X)
        return cls(a[0], a[1], a[2],
                   q_op(X, Y), q_tp_plus(X, Y), q_tp_minus(X, Y),
                   zero if f_plus is None else f_plus(X, Y),
                   zero if f_minus is None else f_minus(X, Y),
                   c, h, **consts)


def unit_field(values_or_func, n: int | None = None, **kw) -> ScalarField2D:
    """Field on the standard square [-1, 1]^2."""
    if callable(values_or_func):
        return ScalarField2D.from_function(values_or_func, n, 1.0, **kw)
    values = np.asarray(values_or_func, dtype=float)
    h = 2.0 / (values.shape[0] - 1)
    return ScalarField2D(values, np.zeros(2), h, **kw)
