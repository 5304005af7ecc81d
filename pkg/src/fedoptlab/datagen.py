"""Deterministic, seeded generators for the synthetic problem ensembles.

Randomness comes from the Philox 4x64 counter-based generator, keyed by
(seed, stream).  Stream 0 carries global draws (the planted parameter);
stream j holds everything belonging to client j-1, so per-client data does
not depend on the total client count m.

Gaussians use the Box-Muller pairing on raw 64-bit words:

  u1 = ((w >> 11) + 1) * 2^-53   in (0, 1]   (log-safe, no rejection)
  u2 = (w >> 11) * 2^-53          in [0, 1)
  z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)

Pair i consumes words 2i and 2i+1; outputs interleave (z0, z1, z0, z1, ...)
and, for an odd request, the final sine variate is discarded, never carried
over to the next call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import FederatedProblem, LogisticLoss, QuadraticLoss

_GLOBAL_STREAM = 0


class PhiloxStream:
    """One Philox-backed draw stream identified by (seed, stream)."""

    def __init__(self, seed: int, stream: int):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def raw64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words (little-endian byte order)."""
        return np.frombuffer(self._gen.bytes(8 * n), dtype="<u8")

    def uniforms(self, shape) -> np.ndarray:
        """Doubles in [0, 1), one word each: (w >> 11) * 2^-53."""
        n = int(np.prod(shape))
        w = self.raw64(n)
        return ((w >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(shape)

    def normals(self, shape) -> np.ndarray:
        """Standard normals via the Box-Muller pairing described above."""
        n = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
        pairs = (n + 1) // 2
        w = self.raw64(2 * pairs)
        u1 = ((w[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n].reshape(shape)


def client_stream(seed: int, client_index: int) -> PhiloxStream:
    """Stream for client j (0-based); occupies Philox stream j+1."""
    return PhiloxStream(seed, client_index + 1)


def global_stream(seed: int) -> PhiloxStream:
    return PhiloxStream(seed, _GLOBAL_STREAM)


# ---------------------------------------------------------------------------
# ensemble specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsotropicLsqSpec:
    """Least squares with i.i.d. standard Gaussian design entries."""

    m: int
    d: int
    n: int
    sigma2: float = 0.25
    seed: int = 0
    kind = "isotropic_lsq"

    def __post_init__(self):
        _check_common(self.m, self.d, self.n, self.sigma2)


@dataclass(frozen=True)
class ConditionedLsqSpec:
    """Least squares with per-client singular values (sqrt(kappa), 1, ..., 1)."""

    m: int
    d: int
    n: int
    kappa: float
    sigma2: float = 1.0
    seed: int = 0
    kind = "conditioned_lsq"

    def __post_init__(self):
        _check_common(self.m, self.d, self.n, self.sigma2)
        if self.kappa < 1:
            raise ValueError(f"need kappa >= 1, got {self.kappa}")
        if self.n < self.d:
            raise ValueError(f"padded diagonal design needs n >= d, got n={self.n}, d={self.d}")


@dataclass(frozen=True)
class LogisticGaussSpec:
    """Binary labels from the logistic model over Gaussian features."""

    m: int
    d: int
    n: int
    seed: int = 0
    kind = "logistic_gauss"

    def __post_init__(self):
        _check_common(self.m, self.d, self.n, 0.0)


def _check_common(m, d, n, sigma2):
    if m < 1 or d < 1 or n < 1:
        raise ValueError(f"need m, d, n >= 1, got m={m}, d={d}, n={n}")
    if sigma2 < 0:
        raise ValueError(f"need sigma2 >= 0, got {sigma2}")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def sample_haar_orthogonal(l: int, stream: PhiloxStream) -> np.ndarray:
    """Haar-distributed l x l orthogonal matrix.

    QR of an l x l standard Gaussian matrix with the sign fix R_ii > 0
    (columns of Q rescaled by sign(diag(R))); without the fix the QR output
    is not Haar.  Exactly rank-deficient draws (probability zero) are
    redrawn.
    """
    if l < 1:
        raise ValueError(f"need l >= 1, got {l}")
    while True:
        g = stream.normals((l, l))
        q, r = np.linalg.qr(g)
        diag = np.diag(r)
        if np.all(diag != 0.0):
            return q * np.sign(diag)[None, :]


def gen_isotropic_lsq(spec: IsotropicLsqSpec) -> FederatedProblem:
    """b_j = A_j x_true + v_j with (A_j)_kl ~ N(0,1) and v_j ~ N(0, sigma2 I)."""
    x_true = global_stream(spec.seed).normals(spec.d)
    sigma = math.sqrt(spec.sigma2)
    clients = []
    for j in range(spec.m):
        st = client_stream(spec.seed, j)
        A = st.normals((spec.n, spec.d))
        v = sigma * st.normals(spec.n)
        clients.append(QuadraticLoss(A, A @ x_true + v))
    return FederatedProblem(clients, x_true=x_true, seed=spec.seed)


def gen_conditioned_lsq(spec: ConditionedLsqSpec) -> FederatedProblem:
    """A_j = U_j Lambda V_j with fresh Haar factors per client.

    Lambda is the n x d padded diagonal with diagonal
    (sqrt(kappa), 1, ..., 1), so every A_j has exactly those singular
    values and each client loss has ell = 1 and L = kappa.
    """
    x_true = global_stream(spec.seed).normals(spec.d)
    sigma = math.sqrt(spec.sigma2)
    lam = np.zeros((spec.n, spec.d))
    diag = np.ones(spec.d)
    diag[0] = math.sqrt(spec.kappa)
    lam[: spec.d, : spec.d] = np.diag(diag)
    clients = []
    for j in range(spec.m):
        st = client_stream(spec.seed, j)
        U = sample_haar_orthogonal(spec.n, st)
        V = sample_haar_orthogonal(spec.d, st)
        A = U @ lam @ V
        v = sigma * st.normals(spec.n)
        clients.append(QuadraticLoss(A, A @ x_true + v))
    return FederatedProblem(clients, x_true=x_true, seed=spec.seed)


def logistic_labels(margins, stream: PhiloxStream) -> np.ndarray:
    """Labels in {-1, +1}, +1 with probability e^t / (1 + e^t) per margin t."""
    margins = np.asarray(margins, dtype=float)
    u = stream.uniforms(margins.shape)
    p_pos = np.where(
        margins >= 0,
        1.0 / (1.0 + np.exp(-margins)),
        np.exp(margins) / (1.0 + np.exp(margins)),
    )
    return np.where(u < p_pos, 1.0, -1.0)


def gen_logistic(spec: LogisticGaussSpec) -> FederatedProblem:
    """Features a_ij ~ N(0, I_d), x_true ~ N(0, I_d), Bernoulli logistic labels."""
    x_true = global_stream(spec.seed).normals(spec.d)
    clients = []
    for j in range(spec.m):
        st = client_stream(spec.seed, j)
        A = st.normals((spec.n, spec.d))
        b = logistic_labels(A @ x_true, st)
        clients.append(LogisticLoss(A, b))
    return FederatedProblem(clients, x_true=x_true, seed=spec.seed)


_GENERATORS = {
    "isotropic_lsq": (IsotropicLsqSpec, gen_isotropic_lsq),
    "conditioned_lsq": (ConditionedLsqSpec, gen_conditioned_lsq),
    "logistic_gauss": (LogisticGaussSpec, gen_logistic),
}


def generate_problem(spec) -> FederatedProblem:
    """Dispatch on the ensemble spec type."""
    for cls, fn in _GENERATORS.values():
        if isinstance(spec, cls):
            return fn(spec)
    raise TypeError(f"unknown ensemble spec {type(spec)!r}")


def ensemble_from_dict(doc: dict):
    """Build an ensemble spec from a config mapping with a 'kind' key."""
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in _GENERATORS:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    cls = _GENERATORS[kind][0]
    try:
        return cls(**doc)
    except TypeError as err:
        raise ValueError(f"bad ensemble config for kind {kind!r}: {err}") from err
