"""Symmetric stable laws with atomic spectral measures."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

TAIL_LEVEL = 1e-12


class GridWarning(UserWarning):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class StableLaw:
    """Symmetric p-stable law on R^kappa with exponent c(y) = sum_i w_i |<y, s_i>|^p."""

    p: float
    directions: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not (0 < self.p <= 2):
            raise ValueError("p must lie in (0, 2]")
        S = np.asarray(self.directions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if S.ndim != 2 or len(S) != len(w) or len(w) == 0:
            raise ValueError("need one weight per direction")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if np.max(np.abs(np.linalg.norm(S, axis=1) - 1)) > 1e-12:
            raise ValueError("directions must be unit vectors")
        for s, ws in zip(S, w):
            match = np.all(np.abs(S + s) < 1e-12, axis=1)
            if not np.any(match & (np.abs(w - ws) < 1e-12)):
                raise ValueError("spectral measure must be symmetric")

    @property
    def kappa(self) -> int:
        return len(self.directions[0])

    @property
    def globally_supported(self) -> bool:
        return np.linalg.matrix_rank(np.asarray(self.directions)) == self.kappa

    @classmethod
    def symmetric(cls, p: float, directions: Sequence[Sequence[float]], weights: Sequence[float]) -> "StableLaw":
        """Add antipodes, splitting each weight in half."""
        dirs, ws = [], []
        for s, w in zip(directions, weights):
            s = np.asarray(s, dtype=float)
            s = s / np.linalg.norm(s)
            dirs += [tuple(s), tuple(-s)]
            ws += [w / 2, w / 2]
        return cls(float(p), tuple(dirs), tuple(ws))

    @classmethod
    def gaussian(cls, a: float, kappa: int = 1) -> "StableLaw":
        """Characteristic function exp(-a |y|^2)."""
        return cls.symmetric(2.0, np.eye(kappa), [a] * kappa)

    @classmethod
    def cauchy(cls, scale: float = 1.0) -> "StableLaw":
        return cls.symmetric(1.0, [[1.0]], [scale])

    def scaled(self, lam: float) -> "StableLaw":
        """Law of lam * S."""
        return StableLaw(self.p, self.directions, tuple(w * lam ** self.p for w in self.weights))

    def gaussian_parameter(self) -> float | None:
        if self.p != 2 or self.kappa != 1:
            return None
        return float(sum(self.weights))


def c_exponent(law: StableLaw, y) -> float:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    S = np.asarray(law.directions)
    w = np.asarray(law.weights)
    return float(np.sum(w * np.abs(S @ y) ** law.p))


def _c_vec(law: StableLaw, Y: np.ndarray) -> np.ndarray:
    S = np.asarray(law.directions)
    w = np.asarray(law.weights)
    return (np.abs(Y @ S.T) ** law.p) @ w


@dataclass(frozen=True)
class FourierGrid:
    extent: float
    spacing: float
    points: int


def fourier_grid(law: StableLaw, points: int | None = None) -> FourierGrid:
    """Extent L with exp(-c) < 1e-12 on the boundary, and the trapezoid spacing."""
    if law.kappa == 1:
        cmin = float(sum(law.weights))
    else:
        ang = np.linspace(0, 2 * np.pi, 721)[:-1]
        U = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        if law.kappa > 2:
            raise NotImplementedError("densities implemented for kappa <= 2")
        cmin = float(np.min(_c_vec(law, U)))
    L = (-math.log(TAIL_LEVEL) / cmin) ** (1.0 / law.p)
    if points is None:
        points = 2 ** 16 if law.kappa == 1 else 1024
    return FourierGrid(L, L / points, points)


def density(law: StableLaw, z, grid: FourierGrid | None = None) -> float:
    """f_S(z) by trapezoid Fourier inversion on a truncated grid."""
    if not law.globally_supported:
        raise ValueError("density requires a globally supported law")
    grid = grid or fourier_grid(law)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if law.kappa == 1:
        y = np.linspace(0.0, grid.extent, grid.points + 1)
        tail = math.exp(-c_exponent(law, [grid.extent]))
        if tail > 1e-10:
            warnings.warn(f"Fourier grid under-resolved: boundary value {tail:.2e}", GridWarning)
        g = np.cos(y * z[0]) * np.exp(-_c_vec(law, y[:, None]))
        val = integrate.trapezoid(g, y) / math.pi
        return float(val)
    if law.kappa == 2:
        L, n = grid.extent, grid.points
        y = np.linspace(-L, L, n + 1)
        Y1, Y2 = np.meshgrid(y, y, indexing="ij")
        Y = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
        g = np.cos(Y @ z) * np.exp(-_c_vec(law, Y))
        g = g.reshape(Y1.shape)
        val = integrate.trapezoid(integrate.trapezoid(g, y, axis=1), y)
        return float(val / (2 * math.pi) ** 2)
    raise NotImplementedError("densities implemented for kappa <= 2")


def gaussian_density(a: float, x: float) -> float:
    """Density of the centered normal with characteristic function exp(-a x^2)."""
    var = 2.0 * a
    return math.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var)


@dataclass(frozen=True)
class JointLawZ:
    a: float
    stable: StableLaw
    independent: bool = True

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("Gaussian parameter must be positive")


def joint_density(jz: JointLawZ, rho: float, zeta) -> float:
    return gaussian_density(jz.a, rho) * density(jz.stable, zeta)


@dataclass(frozen=True)
class ScalingSequence:
    p: float
    sigma_b: float

    def __post_init__(self):
        if self.sigma_b <= 0:
            raise ValueError("scale must be positive")

    def __call__(self, n: float) -> float:
        return self.sigma_b * float(n) ** (1.0 / self.p)


def b_of(seq: ScalingSequence, n: float) -> float:
    if n <= 0:
        raise ValueError("n must be positive")
    return seq(n)


def median_abs(law: StableLaw) -> float:
    """Median of |S| for a one-dimensional law."""
    if law.kappa != 1:
        raise NotImplementedError("median of |S| implemented for kappa = 1")
    a = law.gaussian_parameter()
    if a is not None:
        return math.sqrt(2 * a) * 0.6744897501960817
    grid = fourier_grid(law)
    y = np.linspace(0.0, grid.extent, grid.points + 1)
    decay = np.exp(-_c_vec(law, y[:, None]))

    def prob(m):
        # P(|S| <= m) = (2/pi) int_0^inf sin(m y)/y exp(-c(y)) dy
        kern = m * np.sinc(m * y / np.pi)
        return 2 * integrate.trapezoid(kern * decay, y) / math.pi - 0.5

    return float(optimize.brentq(prob, 1e-6, 1e3))


def calibrate_b(samples, n: int, law: StableLaw, lattice_spacing: float | None = None,
                rng: np.random.Generator | None = None) -> ScalingSequence:
    """Fit sigma_b by matching median |phi_n| / b(n) to median |S|.

    Lattice samples are dequantized by a uniform jitter of one spacing width.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if lattice_spacing:
        rng = rng or np.random.default_rng(0)
        s = s + lattice_spacing * (rng.random(s.size) - 0.5)
    med = float(np.median(np.abs(s - np.median(s))))
    if not med > 0 or not np.isfinite(med):
        raise CalibrationError("sample spread degenerates")
    sigma = med / median_abs(law) / n ** (1.0 / law.p)
    return ScalingSequence(law.p, sigma)


def write_density_csv(path: str | Path, law: StableLaw, zs: Sequence[float]) -> Path:
    path = Path(path)
    grid = fourier_grid(law)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "f", "grid_extent", "grid_spacing"])
        for z in zs:
            w.writerow([repr(float(z)), repr(density(law, z, grid)), repr(grid.extent), repr(grid.spacing)])
    return path
