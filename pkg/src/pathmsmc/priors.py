"""Prior distributions over the natural parameter."""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PriorSpec:
    """Product prior on theta.

    kind is one of ``"uniform"`` (box ``[low, high]``), ``"normal"``
    (independent Gaussians with ``mean`` and ``sd``) or ``"point"`` (a point
    mass at ``mean``, for testing).
    """

    kind: str
    low: tuple = ()
    high: tuple = ()
    mean: tuple = ()
    sd: tuple = ()
    dim: int = field(init=False)

    def __post_init__(self):
        if self.kind == "uniform":
            if len(self.low) != len(self.high) or not self.low:
                raise ValueError("uniform prior needs matching low/high")
            if any(lo >= hi for lo, hi in zip(self.low, self.high)):
                raise ValueError("uniform prior needs low < high")
            d = len(self.low)
        elif self.kind == "normal":
            if len(self.mean) != len(self.sd) or not self.mean:
                raise ValueError("normal prior needs matching mean/sd")
            if any(s <= 0 for s in self.sd):
                raise ValueError("normal prior needs positive sd")
            d = len(self.mean)
        elif self.kind == "point":
            if not self.mean:
                raise ValueError("point prior needs mean")
            d = len(self.mean)
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        object.__setattr__(self, "dim", d)

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", low=tuple(map(float, np.atleast_1d(low))),
                   high=tuple(map(float, np.atleast_1d(high))))

    @classmethod
    def normal(cls, mean, sd):
        return cls("normal", mean=tuple(map(float, np.atleast_1d(mean))),
                   sd=tuple(map(float, np.atleast_1d(sd))))

    @classmethod
    def point(cls, mean):
        return cls("point", mean=tuple(map(float, np.atleast_1d(mean))))

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        if kind == "uniform":
            return cls.uniform(d["low"], d["high"])
        if kind == "normal":
            return cls.normal(d["mean"], d["sd"])
        if kind == "point":
            return cls.point(d["mean"])
        raise ValueError(f"unknown prior kind {kind!r}")

    def to_dict(self):
        if self.kind == "uniform":
            return {"kind": "uniform", "low": list(self.low), "high": list(self.high)}
        if self.kind == "normal":
            return {"kind": "normal", "mean": list(self.mean), "sd": list(self.sd)}
        return {"kind": "point", "mean": list(self.mean)}

    def sample(self, rng, size):
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=(size, self.dim))
        if self.kind == "normal":
            return rng.normal(self.mean, self.sd, size=(size, self.dim))
        return np.tile(np.asarray(self.mean, dtype=float), (size, 1))

    def log_density(self, theta):
        """Log prior density; accepts a single point (d,) or a batch (n, d).

        The point-mass prior returns 0 at its atom (density w.r.t. counting
        measure) and -inf elsewhere.
        """
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        th = np.atleast_2d(theta)
        if self.kind == "uniform":
            lo, hi = np.asarray(self.low), np.asarray(self.high)
            inside = np.all((th >= lo) & (th <= hi), axis=1)
            val = np.where(inside, -np.sum(np.log(hi - lo)), -np.inf)
        elif self.kind == "normal":
            mu, sd = np.asarray(self.mean), np.asarray(self.sd)
            z = (th - mu) / sd
            val = -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(sd)) - 0.5 * self.dim * np.log(2 * np.pi)
        else:
            val = np.where(np.all(th == np.asarray(self.mean), axis=1), 0.0, -np.inf)
        return float(val[0]) if single else val

    @property
    def mean_vector(self):
        if self.kind == "uniform":
            return 0.5 * (np.asarray(self.low) + np.asarray(self.high))
        return np.asarray(self.mean, dtype=float)

    @property
    def variance_vector(self):
        if self.kind == "uniform":
            return (np.asarray(self.high) - np.asarray(self.low)) ** 2 / 12.0
        if self.kind == "normal":
            return np.asarray(self.sd, dtype=float) ** 2
        return np.zeros(self.dim)
