"""Collocation discretization, scans along Re s = 1/2, refinement, and the
Gauss-map determinant used as an independent reference.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import minimize_scalar

from .transfer import (
    Chart,
    FunctionVector,
    TransferOperator,
    charts_for,
    chebyshev_nodes,
    residual,
    term_kernels,
)

WORKERS_ENV = "MAASSDYN_WORKERS"


class RefinementError(RuntimeError):
    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer") from exc
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer")
    return n


# ---------------------------------------------------------------------------
# collocation


@dataclass
class Discretization:
    """``matrix`` acts on chart-scale values at first-kind Chebyshev nodes."""

    N: int
    s: complex
    charts: list[Chart]
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return len(self.charts)

    def nodes(self) -> np.ndarray:
        return chebyshev_nodes(self.N)

    def values_of(self, f: FunctionVector) -> np.ndarray:
        return np.concatenate([f.node_values(a, self.N) for a in range(1, self.size + 1)])

    def to_function_vector(self, values: np.ndarray) -> FunctionVector:
        blocks = [values[i * self.N : (i + 1) * self.N] for i in range(self.size)]
        return FunctionVector.from_values(self.charts, blocks, self.s)

    def fredholm(self) -> np.ndarray:
        return np.eye(self.matrix.shape[0]) - self.matrix


class OperatorFamily:
    """s-independent sampling data of an operator; ``matrix(s)`` is cheap."""

    def __init__(self, op: TransferOperator, N: int, kappa: float | None = None):
        if N < 1:
            raise ValueError("N must be positive")
        self.op = op
        self.N = N
        self.charts = charts_for(op.system, kappa)
        self.kappa = self.charts[0].kappa
        nodes = chebyshev_nodes(N)
        vinv = np.linalg.inv(C.chebvander(nodes, N - 1))
        self.blocks = []
        for k in term_kernels(op, N, kappa):
            E = C.chebvander(k.t, N - 1) @ vinv
            self.blocks.append((k.alpha - 1, k.beta - 1, k.log_A, E))

    @property
    def dim(self) -> int:
        return len(self.charts) * self.N

    def matrix(self, s: complex) -> np.ndarray:
        N = self.N
        M = np.zeros((self.dim, self.dim), dtype=complex)
        for a, b, log_A, E in self.blocks:
            M[a * N : (a + 1) * N, b * N : (b + 1) * N] += np.exp(-2 * s * log_A)[:, None] * E
        return M

    def discretize(self, s: complex) -> Discretization:
        return Discretization(self.N, complex(s), self.charts, self.matrix(s))

    def to_function_vector(self, values: np.ndarray, s: complex) -> FunctionVector:
        return Discretization(self.N, complex(s), self.charts, np.empty((0, 0))).to_function_vector(values)


def discretize(op: TransferOperator, s: complex, N: int, kappa: float | None = None) -> Discretization:
    return OperatorFamily(op, N, kappa).discretize(s)


def _sigma_and_logdet(family, s: complex) -> tuple[float, float]:
    K = np.eye(family.dim) - family.matrix(s)
    sv = np.linalg.svd(K, compute_uv=False)
    return float(sv[-1]), float(np.sum(np.log(sv)))


@dataclass
class ScanResult:
    t: np.ndarray
    sigma_min: np.ndarray
    log_abs_det: np.ndarray
    candidates: list[float] = field(default_factory=list)
    threshold: float = 0.0

    def to_csv(self) -> str:
        cand = set(self.candidates)
        lines = ["t,log_abs_det,sigma_min,candidate"]
        for t, ld, sm in zip(self.t, self.log_abs_det, self.sigma_min):
            lines.append(f"{t:.10f},{ld:.12e},{sm:.12e},{int(float(t) in cand)}")
        return "\n".join(lines) + "\n"


def find_candidates(t: np.ndarray, sigma: np.ndarray, dip: float = 0.5) -> tuple[list[float], float]:
    """Interior local minima of ``sigma`` that dip below ``dip`` times the
    mean of their two neighbours.

    A simple zero crossed between grid points gives a V-shaped profile whose
    sampled minimum is at most a quarter of the neighbour sum; smooth
    non-zero minima stay close to their neighbours.
    """
    if len(t) < 3:
        return [], dip
    out = []
    for i in range(1, len(t) - 1):
        if sigma[i] < sigma[i - 1] and sigma[i] <= sigma[i + 1]:
            if sigma[i] < dip * 0.5 * (sigma[i - 1] + sigma[i + 1]):
                out.append(float(t[i]))
    return out, dip


def scan(
    op: TransferOperator | OperatorFamily,
    t0: float,
    t1: float,
    step: float,
    N: int = 32,
    kappa: float | None = None,
    workers: int | None = None,
    dip: float = 0.5,
) -> ScanResult:
    """Smallest singular value and ``log|det(I - M)|`` on ``s = 1/2 + i t``."""
    if step <= 0:
        raise ValueError("step must be positive")
    if t1 < t0:
        return ScanResult(np.array([]), np.array([]), np.array([]))
    family = op if isinstance(op, OperatorFamily) else OperatorFamily(op, N, kappa)
    count = int(np.floor((t1 - t0) / step + 1e-9)) + 1
    ts = t0 + step * np.arange(count)
    workers = workers or worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(lambda t: _sigma_and_logdet(family, 0.5 + 1j * t), ts))
    else:
        res = [_sigma_and_logdet(family, 0.5 + 1j * t) for t in ts]
    sig = np.array([r[0] for r in res])
    ld = np.array([r[1] for r in res])
    cands, thr = find_candidates(ts, sig, dip)
    return ScanResult(ts, sig, ld, cands, thr)


@dataclass
class Refinement:
    s: complex
    f: FunctionVector
    sigma_min: float
    residual: float
    iterations: int

    @property
    def t(self) -> float:
        return self.s.imag


def _null_vector(family, s: complex) -> tuple[float, np.ndarray]:
    K = np.eye(family.dim) - family.matrix(s)
    _, sv, vh = np.linalg.svd(K)
    return float(sv[-1]), vh[-1].conj()


def refine(
    op: TransferOperator | OperatorFamily,
    t_guess: float,
    N: int = 32,
    kappa: float | None = None,
    width: float = 0.01,
    xatol: float = 1e-12,
    max_iter: int = 500,
    max_residual: float = 1e-6,
) -> Refinement:
    """Minimize the smallest singular value of ``I - M(1/2 + i t)`` near ``t_guess``.

    The eigenvector is the matching right singular vector, normalized so
    that its largest node value is 1.
    """
    family = op if isinstance(op, OperatorFamily) else OperatorFamily(op, N, kappa)
    trace: list = []

    # offset variable: Brent's tolerance scales with |x|
    def obj(u):
        v = _sigma_and_logdet(family, 0.5 + 1j * (t_guess + u))[0]
        trace.append((float(t_guess + u), v))
        return v

    res = minimize_scalar(obj, bounds=(-width, width), method="bounded", options={"xatol": xatol, "maxiter": max_iter})
    if not res.success:
        raise RefinementError(f"minimization did not converge: {res.message}", trace)
    u = float(res.x)
    t_star = t_guess + u
    if width - abs(u) < 1e-3 * width:
        raise RefinementError("minimum sits on the search boundary; no candidate here", trace)
    s = 0.5 + 1j * t_star
    sigma, vec = _null_vector(family, s)
    vec = vec / vec[np.argmax(np.abs(vec))]
    f = family.to_function_vector(vec, s)
    r = residual(family.op, s, f) if isinstance(family, OperatorFamily) else sigma
    if r > max_residual:
        raise RefinementError(f"residual {r:.3e} above {max_residual:.1e} at t = {t_star:.10f}", trace)
    return Refinement(s, f, sigma, r, int(res.nfev))


# ---------------------------------------------------------------------------
# Gauss map reference: L_s f(z) = sum_{n>=1} (z+n)^(-2s) f(1/(z+n))


def hurwitz_tail(sigma, a: int, direct: int = 30, bernoulli_terms: int = 20):
    """``sum_{n >= a} n^(-sigma)`` by direct summation plus an Euler-Maclaurin
    tail; returns ``(value, bound)`` with a rigorous bound on the remainder
    for ``Re sigma > 1 - 2*bernoulli_terms``.
    """
    sigma = mpmath.mpmathify(sigma)
    Nn = a + direct
    total = mpmath.fsum(mpmath.power(n, -sigma) for n in range(a, Nn))
    # sum_{n >= Nn} f(n) = int_Nn^oo f + f(Nn)/2 - sum_k B_2k/(2k)! f^(2k-1)(Nn) + R
    f_N = mpmath.power(Nn, -sigma)
    total += mpmath.power(Nn, 1 - sigma) / (sigma - 1) + f_N / 2
    p = bernoulli_terms
    for k in range(1, p):
        # f^(2k-1)(x) = -(sigma)_(2k-1) x^(-sigma-2k+1)
        deriv = -mpmath.rf(sigma, 2 * k - 1) * mpmath.power(Nn, -sigma - 2 * k + 1)
        total -= mpmath.bernoulli(2 * k) / mpmath.factorial(2 * k) * deriv
    sr = mpmath.re(sigma)
    if sr + 2 * p - 1 <= 0:
        raise ValueError("too few Euler-Maclaurin terms for this sigma")
    bound = (
        abs(mpmath.bernoulli(2 * p))
        / mpmath.factorial(2 * p)
        * abs(mpmath.rf(sigma, 2 * p))
        * mpmath.power(Nn, 1 - sr - 2 * p)
        / (sr + 2 * p - 1)
    )
    return total, bound


@dataclass
class MayerResult:
    s: complex
    order: int
    det_minus: complex  # det(1 - L_s)
    det_plus: complex  # det(1 + L_s)
    det_square: complex  # det(1 - L_s^2), computed directly
    tail_bound: float

    @property
    def product(self) -> complex:
        return self.det_minus * self.det_plus


def mayer_matrix(s, order: int = 40, dps: int = 40, tol: float = 1e-25, direct: int = 30, bernoulli_terms: int = 20):
    """Taylor matrix at ``z = 1`` of the Gauss-map operator, truncated at ``order``.

    Entry ``[j, k]`` is the coefficient of ``(z-1)^j`` in ``L_s (z-1)^k``.
    Returns ``(matrix, worst tail bound)``.
    """
    with mpmath.workdps(dps):
        s = mpmath.mpmathify(s)
        K = order + 1
        H, worst = [], mpmath.mpf(0)
        for m in range(2 * K):
            val, bnd = hurwitz_tail(2 * s + m, 2, direct, bernoulli_terms)
            H.append(val)
            worst = max(worst, bnd)
        if worst > tol:
            raise ValueError(f"Hurwitz tail bound {mpmath.nstr(worst, 3)} exceeds {tol}")
        # P[l][j] = (2s+l)_j ; A[j][l] = P[l][j] * zeta(2s+l+j, 2)
        P = []
        for l in range(K):
            row = [mpmath.mpf(1)]
            for j in range(1, K):
                row.append(row[-1] * (2 * s + l + j - 1))
            P.append(row)
        M = mpmath.matrix(K, K)
        fact = mpmath.mpf(1)
        for j in range(K):
            if j:
                fact *= j
            A = [P[l][j] * H[l + j] for l in range(K)]
            scale = (-1 if j % 2 else 1) / fact
            for k in range(K):
                acc = mpmath.mpc(0)
                for l in range(k + 1):
                    term = mpmath.binomial(k, l) * A[l]
                    acc += -term if (k - l) % 2 else term
                M[j, k] = scale * acc
        return M, float(worst)


def _mayer_dets(s, order: int, dps: int, tol: float):
    with mpmath.workdps(dps):
        M, bound = mayer_matrix(s, order, dps, tol)
        one = mpmath.eye(order + 1)
        return mpmath.det(one - M), mpmath.det(one + M), mpmath.det(one - M * M), bound


def mayer_det_square(s, order: int = 40, dps: int = 40, tol: float = 1e-25):
    """``det(1 - L_s^2)`` as an mpmath number."""
    with mpmath.workdps(dps):
        M, _ = mayer_matrix(s, order, dps, tol)
        return mpmath.det(mpmath.eye(order + 1) - M * M)


def mayer_oracle(s, order: int = 40, dps: int = 40, tol: float = 1e-25) -> MayerResult:
    """``det(1 - L_s)``, ``det(1 + L_s)`` and ``det(1 - L_s^2)`` from the truncated Taylor matrix."""
    dm, dp, dsq, bound = _mayer_dets(s, order, dps, tol)
    return MayerResult(complex(s), order, complex(dm), complex(dp), complex(dsq), bound)


def mayer_zeros(
    t0: float, t1: float, step: float = 0.05, order: int = 40, dps: int = 40, tol: float = 1e-25
) -> list[float]:
    """Zeros of ``det(1 - L_s^2)`` on ``s = 1/2 + i t`` located by a coarse
    scan of ``|det|`` and polished by a complex secant solve in ``s``.

    Returns the imaginary parts of roots whose real part is 1/2 within 1e-8.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    ts = np.arange(t0, t1 + 1e-12, step)
    vals = [abs(mayer_det_square(mpmath.mpc(0.5, t), order, dps, tol)) for t in ts]
    zeros = []
    for i in range(1, len(ts) - 1):
        if not (vals[i] < vals[i - 1] and vals[i] <= vals[i + 1]):
            continue
        with mpmath.workdps(dps):
            fn = lambda z: mayer_det_square(z, order, dps, tol)
            x0, x1 = mpmath.mpc(0.5, ts[i]), mpmath.mpc(0.5, ts[i] + step / 4)
            try:
                root = mpmath.findroot(fn, (x0, x1), solver="secant", tol=mpmath.mpf(10) ** (-2 * dps // 3), maxsteps=50, verify=False)
            except (ValueError, ZeroDivisionError):
                continue
        root = complex(root)
        if abs(root.real - 0.5) < 1e-8 and t0 <= root.imag <= t1:
            zeros.append(root.imag)
    return zeros
