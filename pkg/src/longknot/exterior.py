"""Pointwise exterior algebra on a fixed tangent space.

Forms are stored sparsely as a map from strictly increasing index tuples
(0-based) to coefficients. A coefficient may be a float or a numpy array;
arrays broadcast, so one ``AltForm`` can carry a whole batch of tangent
spaces sharing the same basis.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Sequence, Tuple, Union

import numpy as np

Coeff = Union[float, np.ndarray]
Key = Tuple[int, ...]

UNIT_TOL = 1e-9


def sphere_volume(n: int) -> float:
    """Volume of the unit sphere S^{n-1} in R^n."""
    if n < 1:
        raise ValueError(f"sphere dimension requires n >= 1, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _mask(key: Key) -> int:
    m = 0
    for i in key:
        m |= 1 << i
    return m


def _merge_sign(a: int, b: int) -> int:
    """Sign of the shuffle putting the union of bit sets a, b in order."""
    inversions = 0
    while b:
        low = b & -b
        # elements of a above this element of b must jump over it
        inversions += bin(a & ~((low << 1) - 1)).count("1")
        b ^= low
    return -1 if inversions & 1 else 1


def _is_zero(c: Coeff) -> bool:
    if isinstance(c, np.ndarray):
        return not np.any(c)
    return c == 0


@dataclass(frozen=True)
class AltForm:
    dim: int
    degree: int
    coeffs: Dict[Key, Coeff] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not 0 <= self.degree:
            raise ValueError("degree must be non-negative")
        for key in self.coeffs:
            if len(key) != self.degree:
                raise ValueError(f"key {key} has wrong length for degree {self.degree}")
            if any(b <= a for a, b in zip(key, key[1:])):
                raise ValueError(f"key {key} is not strictly increasing")
            if key and not (0 <= key[0] and key[-1] < self.dim):
                raise ValueError(f"key {key} out of range for dim {self.dim}")

    @classmethod
    def zero(cls, dim: int, degree: int) -> "AltForm":
        return cls(dim, degree, {})

    @classmethod
    def constant(cls, dim: int, value: Coeff = 1.0) -> "AltForm":
        return cls(dim, 0, {(): value})

    @classmethod
    def basis(cls, dim: int, *indices: int) -> "AltForm":
        """dz_{i1} ^ ... ^ dz_{ik}, indices in any order (sign applied)."""
        if len(set(indices)) != len(indices):
            return cls.zero(dim, len(indices))
        order = sorted(range(len(indices)), key=lambda k: indices[k])
        sign = _perm_sign(order)
        return cls(dim, len(indices), {tuple(sorted(indices)): float(sign)})

    @classmethod
    def one_form(cls, vector) -> "AltForm":
        """The 1-form sum_i v_i dz_i. ``vector`` has the tangent index last."""
        v = np.asarray(vector, dtype=float)
        dim = v.shape[-1]
        coeffs = {}
        for i in range(dim):
            c = v[..., i]
            c = float(c) if c.ndim == 0 else c
            if not _is_zero(c):
                coeffs[(i,)] = c
        return cls(dim, 1, coeffs)

    def __getitem__(self, key: Key) -> Coeff:
        return self.coeffs.get(tuple(key), 0.0)

    def __add__(self, other: "AltForm") -> "AltForm":
        _check_compatible(self, other)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out[k] + c if k in out else c
        return AltForm(self.dim, self.degree, out)

    def __neg__(self) -> "AltForm":
        return self.scale(-1.0)

    def __sub__(self, other: "AltForm") -> "AltForm":
        return self + (-other)

    def __xor__(self, other: "AltForm") -> "AltForm":
        return wedge(self, other)

    def scale(self, factor: Coeff) -> "AltForm":
        return AltForm(self.dim, self.degree, {k: c * factor for k, c in self.coeffs.items()})

    def top_coefficient(self) -> Coeff:
        """Coefficient on dz_0 ^ ... ^ dz_{dim-1}; zero unless degree == dim."""
        if self.degree != self.dim:
            raise ValueError(f"degree {self.degree} is not top degree {self.dim}")
        return self.coeffs.get(tuple(range(self.dim)), 0.0)

    def evaluate(self, vectors) -> Coeff:
        """Value on ``degree`` tangent vectors (rows of ``vectors``)."""
        if self.degree == 0:
            return self.coeffs.get((), 0.0)
        vecs = np.asarray(vectors, dtype=float)
        if vecs.shape[-2] != self.degree or vecs.shape[-1] != self.dim:
            raise ValueError("need `degree` vectors of length `dim`")
        total = 0.0
        for key, c in self.coeffs.items():
            total = total + c * np.linalg.det(vecs[..., :, list(key)])
        return total

    def max_abs(self) -> float:
        if not self.coeffs:
            return 0.0
        return max(float(np.max(np.abs(c))) for c in self.coeffs.values())

    def allclose(self, other: "AltForm", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        _check_compatible(self, other)
        scale = max(self.max_abs(), other.max_abs(), 1e-300)
        for k in set(self.coeffs) | set(other.coeffs):
            diff = np.abs(np.asarray(self[k]) - np.asarray(other[k]))
            if np.any(diff > atol + rtol * scale):
                return False
        return True


def _perm_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _check_compatible(a: AltForm, b: AltForm) -> None:
    if a.dim != b.dim or a.degree != b.degree:
        raise ValueError(f"incompatible forms: ({a.dim},{a.degree}) vs ({b.dim},{b.degree})")


def wedge(a: AltForm, b: AltForm) -> AltForm:
    """Exterior product a ^ b."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} != {b.dim}")
    degree = a.degree + b.degree
    if degree > a.dim:
        return AltForm.zero(a.dim, degree)
    b_items = [(_mask(k), k, c) for k, c in b.coeffs.items()]
    out: Dict[Key, Coeff] = {}
    for ka, ca in a.coeffs.items():
        ma = _mask(ka)
        for mb, kb, cb in b_items:
            if ma & mb:
                continue
            key = tuple(sorted(ka + kb))
            term = ca * cb if _merge_sign(ma, mb) > 0 else -(ca * cb)
            out[key] = out[key] + term if key in out else term
    return AltForm(a.dim, degree, out)


def wedge_all(forms: Iterable[AltForm]) -> AltForm:
    forms = list(forms)
    if not forms:
        raise ValueError("empty product")
    out = forms[0]
    for f in forms[1:]:
        out = wedge(out, f)
    return out


def sphere_volume_form(u, tangents, tol: float = UNIT_TOL):
    """Normalized round volume form of S^{n-1} at ``u`` on ``n-1`` tangent vectors.

    Returns det(u, t_1, ..., t_{n-1}) / Vol(S^{n-1}). ``u`` has shape (..., n),
    ``tangents`` shape (..., n-1, n). Tangents are not projected: the
    component along ``u`` drops out of the determinant.
    """
    u = np.asarray(u, dtype=float)
    t = np.asarray(tangents, dtype=float)
    n = u.shape[-1]
    if n < 1:
        raise ValueError("n must be >= 1")
    if t.shape[-2:] != (n - 1, n):
        raise ValueError(f"expected {n - 1} tangent vectors of length {n}, got {t.shape}")
    if np.any(np.abs(np.linalg.norm(u, axis=-1) - 1.0) > tol):
        raise ValueError("u is not a unit vector")
    mat = np.concatenate([u[..., None, :], np.broadcast_to(t, u.shape[:-1] + t.shape[-2:])], axis=-2)
    return np.linalg.det(mat) / sphere_volume(n)


def sphere_form(u) -> AltForm:
    """The normalized sphere volume form at ``u`` as an (n-1)-form on R^n.

    This is the interior product of ``u`` with dz_1 ^ ... ^ dz_n, divided by
    Vol(S^{n-1}); restricted to T_u S^{n-1} it is the round volume form.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    vol = sphere_volume(n)
    coeffs = {}
    for k in range(n):
        key = tuple(i for i in range(n) if i != k)
        c = u[..., k] * ((-1) ** k / vol)
        coeffs[key] = float(c) if np.ndim(c) == 0 else c
    return AltForm(n, n - 1, coeffs)


def _minor(jac: np.ndarray, rows: Key, cols: Key):
    sub = jac[..., list(rows), :][..., list(cols)]
    p = len(rows)
    if p == 1:
        return sub[..., 0, 0]
    if p == 2:
        return sub[..., 0, 0] * sub[..., 1, 1] - sub[..., 0, 1] * sub[..., 1, 0]
    return np.linalg.det(sub)


def pullback(jacobian, omega: AltForm) -> AltForm:
    """Pull ``omega`` (a form on R^k) back along a linear map R^d -> R^k.

    ``jacobian`` has shape (..., k, d). Only columns where the map is not
    identically zero are enumerated.
    """
    jac = np.asarray(jacobian, dtype=float)
    k, d = jac.shape[-2:]
    if omega.dim != k:
        raise ValueError(f"jacobian has {k} rows but form lives on R^{omega.dim}")
    p = omega.degree
    if p > k:
        raise ValueError("degree exceeds target dimension")
    if p == 0:
        return AltForm(d, 0, dict(omega.coeffs))
    flat = jac.reshape(-1, k, d)
    live = [j for j in range(d) if np.any(flat[:, :, j] != 0)]
    out: Dict[Key, Coeff] = {}
    for cols in itertools.combinations(live, p):
        total = 0.0
        for rows, c in omega.coeffs.items():
            total = total + c * _minor(jac, rows, cols)
        if not _is_zero(total):
            out[cols] = float(total) if np.ndim(total) == 0 else total
    return AltForm(d, p, out)
