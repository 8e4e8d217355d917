# ehgcn/poincare.py

"""
Module: poincare.py

Poincare ball of curvature -c: the open ball of radius 1/sqrt(c) with metric
lambda_c(x)^2 * g_E, where lambda_c(x) = 2 / (1 - c|x|^2).

The functional kernel works on float64 torch tensors whose last axis holds the
coordinates, so gradients flow through every operation, including into ``c``
when it is a tensor parameter. Every operation that returns a point projects
it back inside the ball of radius (1 - boundary_eps) / sqrt(c).

ManifoldPoint and TangentVector wrap single points with curvature bookkeeping
for callers that do not batch.
"""

import math
from dataclasses import dataclass
from typing import List, Union

import torch

from ehgcn.exceptions import CurvatureMismatchError, ManifoldDomainError, ParameterError

MIN_NORM = 1e-15
BOUNDARY_EPS = 1e-5
# keeps artanh finite at the projected boundary
ARTANH_CLAMP = 1 - 1e-15

CurvatureLike = Union[float, torch.Tensor]


def _sqrt_c(c: CurvatureLike, like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(c, dtype=like.dtype, device=like.device).sqrt()


def artanh(x: torch.Tensor) -> torch.Tensor:
    return torch.atanh(x.clamp(-ARTANH_CLAMP, ARTANH_CLAMP))


def _norm(x: torch.Tensor) -> torch.Tensor:
    return x.norm(dim=-1, keepdim=True).clamp_min(MIN_NORM)


def project_to_ball(x: torch.Tensor, c: CurvatureLike, boundary_eps: float = BOUNDARY_EPS) -> torch.Tensor:
    """Rescale points with |x| >= (1 - boundary_eps) / sqrt(c) onto that radius."""
    if not 0 < boundary_eps < 1:
        raise ParameterError(f"boundary_eps must lie in (0, 1), got {boundary_eps}")
    norm = _norm(x)
    max_norm = (1 - boundary_eps) / _sqrt_c(c, x)
    return torch.where(norm >= max_norm, x / norm * max_norm, x)


def _check_inside(x: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    sq = torch.as_tensor(c, dtype=x.dtype) * (x * x).sum(dim=-1)
    if bool((sq >= 1).any()):
        raise ManifoldDomainError("point lies on or outside the Poincare ball")
    return sq


def conformal_factor(x: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    return 2.0 / (1.0 - _check_inside(x, c))


def mobius_add(x: torch.Tensor, y: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    c_t = torch.as_tensor(c, dtype=x.dtype, device=x.device)
    x2 = (x * x).sum(dim=-1, keepdim=True)
    y2 = (y * y).sum(dim=-1, keepdim=True)
    xy = (x * y).sum(dim=-1, keepdim=True)
    num = (1 + 2 * c_t * xy + c_t * y2) * x + (1 - c_t * x2) * y
    denom = 1 + 2 * c_t * xy + c_t ** 2 * x2 * y2
    return project_to_ball(num / denom.clamp_min(MIN_NORM), c)


def mobius_matvec(w: torch.Tensor, x: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    """W (d_out, d_in) applied to points x (..., d_in); zero images map to the origin."""
    if w.shape[-1] != x.shape[-1]:
        raise ParameterError(f"matrix of width {w.shape[-1]} applied to points of dim {x.shape[-1]}")
    sqrt_c = _sqrt_c(c, x)
    x_norm = _norm(x)
    mx = x @ w.transpose(-1, -2)
    mx_norm = _norm(mx)
    res = torch.tanh(mx_norm / x_norm * artanh(sqrt_c * x_norm)) * mx / (mx_norm * sqrt_c)
    is_zero = (mx == 0).all(dim=-1, keepdim=True)
    return project_to_ball(torch.where(is_zero, torch.zeros_like(res), res), c)


def mobius_scalar_mul(r: float, x: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    sqrt_c = _sqrt_c(c, x)
    x_norm = _norm(x)
    return project_to_ball(torch.tanh(r * artanh(sqrt_c * x_norm)) * x / (x_norm * sqrt_c), c)


def exp_map_origin(v: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    """tanh(sqrt(c)|v| / 2) * v / (sqrt(c)|v|)."""
    sqrt_c = _sqrt_c(c, v)
    v_norm = _norm(v)
    return project_to_ball(torch.tanh(sqrt_c * v_norm / 2) * v / (sqrt_c * v_norm), c)


def log_map_origin(y: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    """(2 / sqrt(c)) * artanh(sqrt(c)|y|) * y / |y|; inverse of exp_map_origin."""
    _check_inside(y, c)
    sqrt_c = _sqrt_c(c, y)
    y_norm = _norm(y)
    return 2.0 / sqrt_c * artanh(sqrt_c * y_norm) * y / y_norm


def distance(x: torch.Tensor, y: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    sqrt_c = _sqrt_c(c, x)
    diff_norm = mobius_add(-x, y, c).norm(dim=-1)
    return 2.0 / sqrt_c * artanh(sqrt_c * diff_norm)


def inner_product(u: torch.Tensor, v: torch.Tensor, at: torch.Tensor, c: CurvatureLike) -> torch.Tensor:
    return conformal_factor(at, c) ** 2 * (u * v).sum(dim=-1)


def gyro_midpoint(x: torch.Tensor, index: torch.Tensor, num_groups: int, c: CurvatureLike) -> torch.Tensor:
    """
    Gyromidpoint of the points of every group, ``index`` giving each row's group:

        m = 1/2 (x) ( sum lambda_i x_i / sum (lambda_i - 1) )

    with lambda the conformal factor. A single point is its own midpoint and
    a group symmetric about the origin has the origin as midpoint. Empty
    groups map to the origin.
    """
    lam = conformal_factor(x, c).unsqueeze(-1)
    num = torch.zeros(num_groups, x.shape[-1], dtype=x.dtype, device=x.device).index_add(0, index, lam * x)
    den = torch.zeros(num_groups, 1, dtype=x.dtype, device=x.device).index_add(0, index, lam - 1)
    return mobius_scalar_mul(0.5, num / den.clamp_min(MIN_NORM), c)


# ---------------------------------------------
# Single-point wrappers
# ---------------------------------------------

@dataclass(frozen=True)
class Curvature:
    c: float

    def __post_init__(self):
        if not math.isfinite(self.c) or self.c <= 0:
            raise ParameterError(f"curvature must be positive and finite, got {self.c}")


def _as_tensor(coords) -> torch.Tensor:
    return torch.as_tensor(coords, dtype=torch.float64).reshape(-1)


@dataclass(frozen=True)
class ManifoldPoint:
    coords: torch.Tensor
    c: Curvature

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_tensor(self.coords))
        _check_inside(self.coords, self.c.c)

    @classmethod
    def origin(cls, dim: int, c: Curvature) -> "ManifoldPoint":
        return cls(torch.zeros(dim, dtype=torch.float64), c)

    def _same_ball(self, other: "ManifoldPoint") -> None:
        if self.c != other.c:
            raise CurvatureMismatchError(f"curvatures differ: {self.c.c} vs {other.c.c}")
        if self.coords.shape != other.coords.shape:
            raise ParameterError("points have different dimensions")

    def mobius_add(self, other: "ManifoldPoint") -> "ManifoldPoint":
        self._same_ball(other)
        return ManifoldPoint(mobius_add(self.coords, other.coords, self.c.c), self.c)

    def distance(self, other: "ManifoldPoint") -> float:
        self._same_ball(other)
        return float(distance(self.coords, other.coords, self.c.c))

    def conformal_factor(self) -> float:
        return float(conformal_factor(self.coords, self.c.c))

    def log(self) -> "TangentVector":
        return TangentVector(log_map_origin(self.coords, self.c.c), ManifoldPoint.origin(len(self.coords), self.c))

    def tolist(self) -> List[float]:
        return self.coords.tolist()


@dataclass(frozen=True)
class TangentVector:
    """A vector of the tangent space at ``base`` (the origin for maps)."""

    coords: torch.Tensor
    base: ManifoldPoint

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_tensor(self.coords))
        if not bool(torch.isfinite(self.coords).all()):
            raise ParameterError("tangent vector has non-finite components")

    def exp(self) -> ManifoldPoint:
        if bool(self.base.coords.any()):
            raise ParameterError("exponential map is only defined at the origin")
        return ManifoldPoint(exp_map_origin(self.coords, self.base.c.c), self.base.c)

    def inner(self, other: "TangentVector") -> float:
        if self.base.c != other.base.c or not torch.equal(self.base.coords, other.base.coords):
            raise ParameterError("tangent vectors live at different base points")
        return float(inner_product(self.coords, other.coords, self.base.coords, self.base.c.c))
