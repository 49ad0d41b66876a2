"""Functionals ``g`` of the spot covariance with first and second derivatives.

For ``dim == 1`` every evaluator works elementwise on arrays of scalars. For
``dim > 1`` arguments are arrays of shape ``(..., d, d)``; ``grad`` returns
``(..., d, d)`` and ``hess`` returns ``(..., d, d, d, d)`` with
``hess[..., p, q, u, v] = d^2 g / (dx^{pq} dx^{uv})``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ivfunc.errors import ConfigError, DomainError

LOG_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FunctionalSpec:
    name: str
    dim: int
    g: Callable
    grad: Callable
    hess: Callable
    growth_order: int = 4  # declarative only, not enforced

    def __call__(self, x):
        return self.g(x)


def _first_bad(mask) -> int | None:
    bad = np.flatnonzero(np.ravel(mask))
    return int(bad[0]) if bad.size else None


def _guard_log(x, c_min):
    x = np.asarray(x, dtype=float)
    bad = ~(x > c_min)
    if np.any(bad):
        idx = _first_bad(bad)
        raise DomainError(
            f"log functional evaluated at {np.ravel(x)[idx]!r} <= {c_min:g} (position {idx})",
            index=idx,
        )
    return x


def square() -> FunctionalSpec:
    return FunctionalSpec(
        "square", 1,
        g=lambda x: np.asarray(x, dtype=float) ** 2,
        grad=lambda x: 2.0 * np.asarray(x, dtype=float),
        hess=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
    )


def identity() -> FunctionalSpec:
    return FunctionalSpec(
        "identity", 1,
        g=lambda x: np.asarray(x, dtype=float) * 1.0,
        grad=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        hess=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )


def log(c_min: float = LOG_FLOOR) -> FunctionalSpec:
    return FunctionalSpec(
        "log", 1,
        g=lambda x: np.log(_guard_log(x, c_min)),
        grad=lambda x: 1.0 / _guard_log(x, c_min),
        hess=lambda x: -1.0 / _guard_log(x, c_min) ** 2,
        growth_order=4,
    )


def power(r: float) -> FunctionalSpec:
    r = float(r)

    def check(x):
        x = np.asarray(x, dtype=float)
        if r != int(r) and np.any(x < 0):
            idx = _first_bad(x < 0)
            raise DomainError(f"power:{r:g} at negative argument (position {idx})", index=idx)
        return x

    return FunctionalSpec(
        f"power:{r:g}", 1,
        g=lambda x: check(x) ** r,
        grad=lambda x: r * check(x) ** (r - 1.0),
        hess=lambda x: r * (r - 1.0) * check(x) ** (r - 2.0),
        growth_order=max(4, int(np.ceil(r))),
    )


def get_functional(name: str | FunctionalSpec) -> FunctionalSpec:
    """Resolve ``"square" | "log" | "identity" | "power:<r>"``."""
    if isinstance(name, FunctionalSpec):
        return name
    if name == "square":
        return square()
    if name == "log":
        return log()
    if name == "identity":
        return identity()
    if isinstance(name, str) and name.startswith("power:"):
        try:
            r = float(name.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad power functional {name!r}") from exc
        return power(r)
    raise ConfigError(f"unknown functional {name!r}")


# ---------------------------------------------------------------------------


def _check_cov(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise ConfigError(f"expected (..., d, d) matrices, got shape {x.shape}")
    return x


def h_general(hess: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``sum_{pquv} H[pq,uv] (x^{pu} x^{qv} + x^{pv} x^{qu})`` for batched matrices."""
    return np.einsum("...pquv,...pu,...qv->...", hess, x, x) + np.einsum(
        "...pquv,...pv,...qu->...", hess, x, x
    )


def variance_general(grad: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``sum_{jklm} G[jk] G[lm] (c^{jl} c^{km} + c^{jm} c^{kl})`` for batched matrices."""
    return np.einsum("...jk,...lm,...jl,...km->...", grad, grad, c, c) + np.einsum(
        "...jk,...lm,...jm,...kl->...", grad, grad, c, c
    )


def hess_contract(hess: np.ndarray, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """``sum_{jklm} H[jk,lm] a^{jk} b^{lm}`` (``b`` defaults to ``a``)."""
    b = a if b is None else b
    return np.einsum("...jklm,...jk,...lm->...", hess, a, b)


def h_transform(fdef: FunctionalSpec, x):
    """Nonlinearity weight ``h``; in one dimension ``h(x) = 2 g''(x) x^2``."""
    if fdef.dim == 1:
        x = np.asarray(x, dtype=float)
        return 2.0 * fdef.hess(x) * x * x
    x = _check_cov(x)
    return h_general(fdef.hess(x), x)


def variance_integrand(fdef: FunctionalSpec, c):
    """Conditional-variance density; in one dimension ``2 (g'(c) c)^2``."""
    if fdef.dim == 1:
        c = np.asarray(c, dtype=float)
        gp = fdef.grad(c)
        return 2.0 * (gp * c) ** 2
    c = _check_cov(c)
    return variance_general(fdef.grad(c), c)


def hessian_quadratic(fdef: FunctionalSpec, x, diff):
    """``sum H[jk,lm](x) diff^{jk} diff^{lm}``; ``g''(x) diff^2`` in one dimension."""
    if fdef.dim == 1:
        diff = np.asarray(diff, dtype=float)
        return fdef.hess(x) * diff * diff
    return hess_contract(fdef.hess(_check_cov(x)), np.asarray(diff, dtype=float))


def as_matrix_functional(fdef: FunctionalSpec) -> FunctionalSpec:
    """View a scalar functional as a functional of 1x1 matrices."""
    if fdef.dim != 1:
        return fdef

    def g(x):
        return fdef.g(np.asarray(x)[..., 0, 0])

    def grad(x):
        return np.asarray(fdef.grad(np.asarray(x)[..., 0, 0]))[..., None, None]

    def hess(x):
        return np.asarray(fdef.hess(np.asarray(x)[..., 0, 0]))[..., None, None, None, None]

    return FunctionalSpec(fdef.name + "[1x1]", 1, g, grad, hess, fdef.growth_order)


@dataclass(frozen=True)
class DerivativeReport:
    max_grad_error: float
    max_hess_error: float
    flagged: tuple[int, ...]
    threshold: float

    @property
    def ok(self) -> bool:
        return not self.flagged


def validate_derivatives(
    fdef: FunctionalSpec,
    test_points,
    step: float = 1e-4,
    threshold: float = 1e-5,
) -> DerivativeReport:
    """Compare ``grad``/``hess`` against central finite differences.

    Errors are relative, ``|analytic - fd| / max(1, |analytic|)``; the step is
    ``step * max(|x|, 1e-3)``. Points whose error exceeds ``threshold``, or
    whose stencil leaves the domain of ``g``, are listed in ``flagged``.
    Never raises on a mismatch.
    """
    max_g = 0.0
    max_h = 0.0
    flagged = []
    for idx, point in enumerate(test_points):
        x = np.asarray(point, dtype=float)
        scalar = fdef.dim == 1 and x.ndim == 0
        h = step * max(1e-3, float(np.max(np.abs(x))))
        try:
            err_g, err_h = _fd_errors(fdef, x, h, scalar)
        except (DomainError, FloatingPointError):
            err_g = err_h = float("inf")
        max_g = max(max_g, err_g)
        max_h = max(max_h, err_h)
        if max(err_g, err_h) > threshold:
            flagged.append(idx)
    return DerivativeReport(max_g, max_h, tuple(flagged), threshold)


def _fd_errors(fdef, x, h, scalar):
    with np.errstate(all="raise"):
        if scalar:
            fd_g = (fdef.g(x + h) - fdef.g(x - h)) / (2 * h)
            fd_h = (fdef.grad(x + h) - fdef.grad(x - h)) / (2 * h)
            ag, ah = np.asarray(fdef.grad(x)), np.asarray(fdef.hess(x))
        else:
            x = _check_cov(x)
            d = x.shape[-1]
            fd_g = np.zeros((d, d))
            fd_h = np.zeros((d, d, d, d))
            for p in range(d):
                for q in range(d):
                    e = np.zeros((d, d))
                    e[p, q] = h
                    fd_g[p, q] = (fdef.g(x + e) - fdef.g(x - e)) / (2 * h)
                    fd_h[:, :, p, q] = (fdef.grad(x + e) - fdef.grad(x - e)) / (2 * h)
            ag, ah = np.asarray(fdef.grad(x)), np.asarray(fdef.hess(x))
        err_g = float(np.max(np.abs(ag - fd_g) / np.maximum(1.0, np.abs(ag))))
        err_h = float(np.max(np.abs(ah - fd_h) / np.maximum(1.0, np.abs(ah))))
    if not (np.isfinite(err_g) and np.isfinite(err_h)):
        return float("inf"), float("inf")
    return err_g, err_h
