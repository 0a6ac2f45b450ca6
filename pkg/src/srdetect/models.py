"""Pre/post-change observation models.

A model is a pair of densities ``f0`` (pre-change) and ``f1`` (post-change)
from one of three families.  Everything downstream only needs the likelihood
ratio ``f1(x) / f0(x)`` and a way to draw observations, so that pair is the
whole interface.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnsupportedModelError

__all__ = [
    "FAMILIES",
    "ENUMERATION_CAP",
    "ObservationModel",
    "ChangeSpec",
    "ModelDomainError",
    "UnsupportedModelError",
    "likelihood_ratio",
    "log_likelihood_ratio",
    "sample_path",
    "enumerate_paths",
]

FAMILIES = ("gaussian_mean_shift", "bernoulli", "exponential_rate")
FAMILY_CODES = {name: i for i, name in enumerate(FAMILIES)}
ENUMERATION_CAP = 20


ModelDomainError = DomainError


@dataclass(frozen=True)
class ObservationModel:
    """Simple-vs-simple change model.

    Parameters by family:

    - ``gaussian_mean_shift``: ``pre=(mu0[, sigma])``, ``post=(mu1[, sigma])``;
      sigma defaults to 1 and must agree before and after the change.
    - ``bernoulli``: ``pre=(p0,)``, ``post=(p1,)`` with probabilities in (0, 1).
    - ``exponential_rate``: ``pre=(lam0,)``, ``post=(lam1,)``, rates > 0.
    """

    family: str
    pre: tuple[float, ...]
    post: tuple[float, ...]
    _packed: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.family not in FAMILY_CODES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        pre = tuple(float(v) for v in np.atleast_1d(self.pre))
        post = tuple(float(v) for v in np.atleast_1d(self.post))
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", post)
        if not all(math.isfinite(v) for v in pre + post):
            raise ValueError("model parameters must be finite")

        if self.family == "gaussian_mean_shift":
            if len(pre) not in (1, 2) or len(post) not in (1, 2):
                raise ValueError("gaussian parameters are (mean[, sd])")
            sd0 = pre[1] if len(pre) == 2 else 1.0
            sd1 = post[1] if len(post) == 2 else sd0
            if sd0 <= 0 or sd1 != sd0:
                raise ValueError("gaussian mean shift needs one common positive sd")
            packed = (pre[0], sd0, post[0], sd1)
            changed = pre[0] != post[0]
        elif self.family == "bernoulli":
            if len(pre) != 1 or len(post) != 1:
                raise ValueError("bernoulli parameters are (p,)")
            if not (0.0 < pre[0] < 1.0 and 0.0 < post[0] < 1.0):
                raise ValueError("bernoulli probabilities must lie in (0, 1)")
            packed = (pre[0], 0.0, post[0], 0.0)
            changed = pre[0] != post[0]
        else:
            if len(pre) != 1 or len(post) != 1:
                raise ValueError("exponential parameters are (rate,)")
            if pre[0] <= 0 or post[0] <= 0:
                raise ValueError("exponential rates must be positive")
            packed = (pre[0], 0.0, post[0], 0.0)
            changed = pre[0] != post[0]
        if not changed:
            raise ValueError("pre- and post-change parameters coincide; no change to detect")
        arr = np.array(packed, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "_packed", arr)

    @property
    def code(self) -> int:
        return FAMILY_CODES[self.family]

    @property
    def params(self) -> np.ndarray:
        """``(a0, b0, a1, b1)`` float64 vector consumed by the compiled kernels."""
        return self._packed

    @property
    def finite_support(self) -> bool:
        return self.family == "bernoulli"

    def lr_bounds(self) -> tuple[float, float]:
        """Infimum and supremum of the likelihood ratio over the support of f0."""
        a0, b0, a1, b1 = self._packed
        if self.family == "bernoulli":
            vals = (a1 / a0, (1 - a1) / (1 - a0))
            return min(vals), max(vals)
        if self.family == "exponential_rate":
            return (0.0, a1 / a0) if a1 > a0 else (a1 / a0, math.inf)
        return 0.0, math.inf

    def to_dict(self) -> dict:
        return {"family": self.family, "pre": list(self.pre), "post": list(self.post)}


@dataclass(frozen=True)
class ChangeSpec:
    """Serial number ``nu`` of the first post-change observation (``math.inf``: never)."""

    nu: float = math.inf

    def __post_init__(self) -> None:
        nu = self.nu
        if nu != math.inf:
            if int(nu) != nu:
                raise ValueError(f"nu must be an integer or inf, got {nu!r}")
            nu = int(nu)
        if nu < 1:
            raise ValueError(f"nu must be >= 1, got {nu!r}")
        object.__setattr__(self, "nu", nu)

    @property
    def never(self) -> bool:
        return self.nu == math.inf

    def is_post(self, n: int) -> bool:
        return n >= self.nu


def _check_support(model: ObservationModel, x: float) -> None:
    if model.family == "bernoulli" and x not in (0, 1):
        raise ModelDomainError(f"bernoulli observation must be 0 or 1, got {x!r}")
    if model.family == "exponential_rate" and x < 0:
        raise ModelDomainError(f"exponential observation must be >= 0, got {x!r}")
    if not math.isfinite(x):
        raise ModelDomainError(f"observation must be finite, got {x!r}")


def log_likelihood_ratio(model: ObservationModel, x: float) -> float:
    """log f1(x)/f0(x)."""
    _check_support(model, x)
    a0, b0, a1, b1 = model.params
    if model.family == "gaussian_mean_shift":
        return float((a1 - a0) * (x - 0.5 * (a0 + a1)) / (b0 * b0))
    if model.family == "bernoulli":
        return math.log(a1 / a0) if x == 1 else math.log((1 - a1) / (1 - a0))
    return math.log(a1 / a0) - (a1 - a0) * x


def likelihood_ratio(model: ObservationModel, x: float) -> float:
    """f1(x)/f0(x); exact ratios for bernoulli, ``exp`` of the log ratio otherwise."""
    _check_support(model, x)
    a0, _, a1, _ = model.params
    if model.family == "bernoulli":
        return a1 / a0 if x == 1 else (1 - a1) / (1 - a0)
    return math.exp(log_likelihood_ratio(model, x))


def sample_path(model: ObservationModel, change: ChangeSpec, length: int, rng) -> np.ndarray:
    """Draw ``X_1..X_length``; ``X_i ~ f0`` for ``i < nu`` and ``f1`` from ``nu`` on.

    ``rng`` is either a :class:`srdetect.streams.Substream` (reproduces the
    compiled simulators draw for draw) or a :class:`numpy.random.Generator`.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if isinstance(rng, np.random.Generator):
        return _sample_numpy(model, change, length, rng)
    return np.array([rng.draw(model, change.is_post(n)) for n in range(1, length + 1)])


def _sample_numpy(model, change, length, rng):
    a0, b0, a1, b1 = model.params
    post = np.arange(1, length + 1) >= change.nu
    if model.family == "gaussian_mean_shift":
        return np.where(post, a1, a0) + b0 * rng.standard_normal(length)
    if model.family == "bernoulli":
        return (rng.random(length) < np.where(post, a1, a0)).astype(np.float64)
    return rng.exponential(1.0 / np.where(post, a1, a0))


def enumerate_paths(
    model: ObservationModel, change: ChangeSpec, n: int, cap: int = ENUMERATION_CAP
) -> list[tuple[tuple[int, ...], float]]:
    """Every binary path of length ``n`` with its exact probability under ``P_nu``."""
    if not model.finite_support:
        raise UnsupportedModelError(f"{model.family} has no finite support to enumerate")
    if not 1 <= n <= cap:
        raise ValueError(f"n must lie in [1, {cap}], got {n}")
    p0, p1 = model.params[0], model.params[2]
    out = []
    for path in itertools.product((0, 1), repeat=n):
        prob = 1.0
        for i, x in enumerate(path, start=1):
            p = p1 if change.is_post(i) else p0
            prob *= p if x else 1.0 - p
        out.append((path, prob))
    return out


def path_table(
    model: ObservationModel, change: ChangeSpec, n: int, cap: int = ENUMERATION_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`enumerate_paths`: ``(paths[2**n, n], probs[2**n])``."""
    if not model.finite_support:
        raise UnsupportedModelError(f"{model.family} has no finite support to enumerate")
    if not 1 <= n <= cap:
        raise ValueError(f"n must lie in [1, {cap}], got {n}")
    idx = np.arange(2**n)
    paths = ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)
    p = np.array([model.params[2] if change.is_post(i) else model.params[0] for i in range(1, n + 1)])
    probs = np.prod(np.where(paths == 1, p, 1.0 - p), axis=1)
    return paths, probs
