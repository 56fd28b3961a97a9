"""Product manifold for the joint (W, V, phi, u_raw) variable.

The space is the Cartesian product of

* a complex Euclidean space for the beamformer ``W`` (M x (K_c+M)),
* the complex oblique manifold for the receive filters ``V`` (unit-norm columns),
* the complex circle manifold for the reflection coefficients ``phi`` (|phi_n| = 1),
* a real Euclidean space for the pre-sigmoid positions ``u_raw``.

The metric is the sum of the real parts of the Euclidean inner products of the
factors. Tangent projection doubles as vector transport, and the retraction is
the normalisation map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FACTORS = ("W", "V", "phi", "u")

MANIFOLD_TOL = 1e-10


class DegenerateRetractionError(ArithmeticError):
    """A column of V or an entry of phi collapsed to zero during retraction."""


def _check_shapes(a, b, what="tangent vectors"):
    for name in FACTORS:
        sa, sb = getattr(a, name).shape, getattr(b, name).shape
        if sa != sb:
            raise ValueError(f"{what}: shape mismatch in factor {name}: {sa} vs {sb}")


@dataclass(frozen=True)
class ProductPoint:
    """A point ``X = (W, V, phi, u)`` on the product manifold.

    ``u`` holds the raw (pre-sigmoid) array-center coordinates laid out as
    ``[x_1, y_1, x_2, y_2, ...]``.
    """

    W: np.ndarray
    V: np.ndarray
    phi: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=complex))
        object.__setattr__(self, "V", np.asarray(self.V, dtype=complex))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=complex))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))

    def replace(self, **factors) -> "ProductPoint":
        fields = {name: getattr(self, name) for name in FACTORS}
        fields.update(factors)
        return ProductPoint(**fields)

    def is_valid(self, tol: float = MANIFOLD_TOL) -> bool:
        col_norms = np.linalg.norm(self.V, axis=0)
        return bool(
            np.all(np.abs(col_norms - 1.0) <= tol)
            and np.all(np.abs(np.abs(self.phi) - 1.0) <= tol)
            and np.all(np.isfinite(self.u))
            and np.all(np.isfinite(self.W))
        )

    def distance(self, other: "ProductPoint") -> float:
        """Ambient product norm of ``self - other``, factor by factor."""
        _check_shapes(self, other, "points")
        return float(
            np.sqrt(
                np.sum(np.abs(self.W - other.W) ** 2)
                + np.sum(np.abs(self.V - other.V) ** 2)
                + np.sum(np.abs(self.phi - other.phi) ** 2)
                + np.sum((self.u - other.u) ** 2)
            )
        )


@dataclass(frozen=True)
class TangentVector:
    """An element ``(zeta_W, zeta_V, zeta_phi, zeta_u)`` of the product ambient space.

    Supports the vector-space operations needed by the quasi-Newton recursion.
    Whether it is actually tangent depends on the point it is attached to; see
    :func:`is_tangent`.
    """

    W: np.ndarray
    V: np.ndarray
    phi: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=complex))
        object.__setattr__(self, "V", np.asarray(self.V, dtype=complex))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=complex))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))

    @classmethod
    def zeros_like(cls, X) -> "TangentVector":
        return cls(
            np.zeros_like(X.W), np.zeros_like(X.V), np.zeros_like(X.phi), np.zeros_like(X.u)
        )

    def _combine(self, other, op):
        _check_shapes(self, other)
        return type(self)(*(op(getattr(self, n), getattr(other, n)) for n in FACTORS))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return type(self)(self.W * scalar, self.V * scalar, self.phi * scalar, self.u * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __neg__(self):
        return self * -1.0

    def masked(self, frozen) -> "TangentVector":
        """Copy with the named factors zeroed (used to freeze blocks)."""
        if not frozen:
            return self
        parts = {n: getattr(self, n) for n in FACTORS}
        for name in frozen:
            parts[name] = np.zeros_like(parts[name])
        return type(self)(**parts)


def inner_product(zeta: TangentVector, other: TangentVector) -> float:
    """Real product metric ``Re tr(a^H b)`` summed over the four factors."""
    _check_shapes(zeta, other)
    return float(
        np.real(np.vdot(zeta.W, other.W))
        + np.real(np.vdot(zeta.V, other.V))
        + np.real(np.vdot(zeta.phi, other.phi))
        + np.dot(zeta.u, other.u)
    )


def norm(zeta: TangentVector) -> float:
    return float(np.sqrt(max(inner_product(zeta, zeta), 0.0)))


def project_tangent(X: ProductPoint, E: TangentVector) -> TangentVector:
    """Orthogonal projection of an ambient element onto the tangent space at ``X``."""
    _check_shapes(X, E, "point and ambient element")
    radial_v = np.real(np.sum(np.conj(X.V) * E.V, axis=0))
    zeta_v = E.V - X.V * radial_v
    zeta_phi = E.phi - np.real(E.phi * np.conj(X.phi)) * X.phi
    return TangentVector(E.W, zeta_v, zeta_phi, E.u)


def transport(X_target: ProductPoint, d: TangentVector) -> TangentVector:
    """Projection-based vector transport onto the tangent space at ``X_target``."""
    return project_tangent(X_target, d)


def retract(X: ProductPoint, d: TangentVector, alpha: float = 1.0) -> ProductPoint:
    """Normalisation retraction ``R_X(alpha d)``.

    Raises
    ------
    DegenerateRetractionError
        If a filter column or a reflection coefficient becomes exactly zero.
    """
    if alpha < 0:
        raise ValueError("step size must be non-negative")
    _check_shapes(X, d, "point and direction")
    V = X.V + alpha * d.V
    col_norms = np.linalg.norm(V, axis=0)
    phi = X.phi + alpha * d.phi
    mags = np.abs(phi)
    if np.any(col_norms == 0.0) or np.any(mags == 0.0):
        raise DegenerateRetractionError("zero denominator in retraction; shrink the step")
    # entries with no motion keep their value exactly, so frozen factors never drift
    V = np.where(np.any(d.V != 0, axis=0), V / col_norms, X.V)
    phi = np.where(d.phi != 0, phi / mags, X.phi)
    return ProductPoint(X.W + alpha * d.W, V, phi, X.u + alpha * d.u)


def is_tangent(X: ProductPoint, zeta: TangentVector, tol: float = MANIFOLD_TOL) -> bool:
    v_res = np.real(np.sum(np.conj(X.V) * zeta.V, axis=0))
    phi_res = np.real(np.conj(zeta.phi) * X.phi)
    return bool(np.all(np.abs(v_res) <= tol) and np.all(np.abs(phi_res) <= tol))


@dataclass(frozen=True)
class Layout:
    """Packing of tangent vectors at points of one shape into flat real arrays.

    Complex factors are stored as interleaved (real, imag) pairs, so the
    product metric becomes the ordinary dot product of the flat arrays.
    """

    shapes: tuple  # (name, shape, is_complex) per factor
    offsets: tuple

    @classmethod
    def from_point(cls, X) -> "Layout":
        shapes, offsets, pos = [], [0], 0
        for name in FACTORS:
            arr = getattr(X, name)
            is_complex = np.iscomplexobj(arr)
            shapes.append((name, arr.shape, is_complex))
            pos += arr.size * (2 if is_complex else 1)
            offsets.append(pos)
        return cls(tuple(shapes), tuple(offsets))

    @property
    def size(self) -> int:
        return self.offsets[-1]

    def flatten(self, zeta) -> np.ndarray:
        return np.concatenate([
            np.ascontiguousarray(getattr(zeta, name)).view(float).ravel() for name, _, _ in self.shapes
        ])

    def _part(self, flat, i):
        name, shape, is_complex = self.shapes[i]
        chunk = flat[..., self.offsets[i]:self.offsets[i + 1]]
        lead = flat.shape[:-1]
        if is_complex:
            return np.ascontiguousarray(chunk).view(complex).reshape(lead + shape)
        return chunk.reshape(lead + shape)

    def unflatten(self, flat, cls=TangentVector):
        return cls(*(self._part(flat, i).copy() for i in range(len(FACTORS))))

    def project(self, X: ProductPoint, flat: np.ndarray) -> np.ndarray:
        """:func:`project_tangent` applied to one flat vector or to each row of a stack."""
        flat = np.array(flat, dtype=float, copy=True)
        lead = flat.shape[:-1]
        V = self._part(flat, 1)
        radial = np.real(np.sum(np.conj(X.V) * V, axis=-2))
        V = V - X.V * radial[..., None, :]
        phi = self._part(flat, 2)
        phi = phi - np.real(phi * np.conj(X.phi)) * X.phi
        flat[..., self.offsets[1]:self.offsets[2]] = V.view(float).reshape(lead + (-1,))
        flat[..., self.offsets[2]:self.offsets[3]] = phi.view(float).reshape(lead + (-1,))
        return flat
