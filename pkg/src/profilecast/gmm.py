"""Gaussian mixture models fitted by EM, with BIC model selection.

Covariances come in the mclust-style families ``spherical``, ``diagonal``
and ``full``, each either per-component or ``tied`` (shared). All densities
are evaluated through Cholesky factors; no covariance is ever inverted.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .data import ProfileMatrix
from .errors import AllFitsFailed, DegenerateComponent, MalformedRow, NotPositiveDefinite, NumericalError

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
FORMAT_VERSION = 1


class Shape(str, enum.Enum):
    SPHERICAL = "spherical"
    DIAGONAL = "diagonal"
    FULL = "full"


@dataclass(frozen=True)
class CovarianceStructure:
    shape: Shape = Shape.DIAGONAL
    tied: bool = False

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))

    @property
    def name(self) -> str:
        return f"tied-{self.shape.value}" if self.tied else self.shape.value

    @classmethod
    def parse(cls, text: str) -> "CovarianceStructure":
        text = text.strip().lower()
        tied = text.startswith("tied-")
        try:
            return cls(Shape(text[5:] if tied else text), tied)
        except ValueError:
            raise ValueError(f"unknown covariance structure {text!r}") from None

    def cov_params(self, n_components: int, n_features: int) -> int:
        d = n_features
        per = {Shape.SPHERICAL: 1, Shape.DIAGONAL: d, Shape.FULL: d * (d + 1) // 2}[self.shape]
        return per if self.tied else n_components * per

    def check_mass(self, mass: np.ndarray, n_features: int) -> None:
        """Reject fits whose covariance estimate would be rank deficient.

        A per-component full covariance needs D + 1 points of mass, a
        per-component diagonal or spherical one needs 2. Tied estimates pool
        the scatter of all components, so the pooled mass less one per mean
        must reach D (full) or 1 (diagonal, spherical); each component then
        needs mass >= 1 for its mean.
        """
        d = n_features
        if self.tied:
            need_total = d if self.shape is Shape.FULL else 1
            k = int(np.argmin(mass))
            if mass[k] < 1.0:
                raise DegenerateComponent(k, float(mass[k]), 1.0)
            if mass.sum() - mass.size < need_total:
                raise DegenerateComponent(k, float(mass.sum() - mass.size), need_total)
            return
        need = float(d + 1) if self.shape is Shape.FULL else 2.0
        for k, m in enumerate(mass):
            if m < need:
                raise DegenerateComponent(k, float(m), need)

    def __str__(self):
        return self.name


ALL_STRUCTURES = tuple(
    CovarianceStructure(shape, tied) for tied in (False, True) for shape in Shape
)


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        d = mu.size
        if sigma.shape != (d, d):
            raise ValueError(f"covariance shape {sigma.shape} does not match mean of length {d}")
        if not np.all(np.isfinite(sigma)) or np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-10:
            raise NotPositiveDefinite("covariance is not a finite symmetric matrix")
        chol = self.chol
        if chol is None:
            try:
                chol = linalg.cholesky(sigma, lower=True)
            except linalg.LinAlgError:
                raise NotPositiveDefinite("covariance is not positive definite") from None
        if not np.all(np.diag(chol) > 0):
            raise NotPositiveDefinite("covariance is not positive definite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mu.size

    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def logpdf(self, X: np.ndarray) -> np.ndarray:
        """Row-wise log density of ``X`` (shape ``(n, D)``)."""
        diff = np.atleast_2d(X) - self.mu
        if _is_diagonal(self.chol):
            z = diff / np.diag(self.chol)
        else:
            z = linalg.solve_triangular(self.chol, diff.T, lower=True, check_finite=False).T
        return -0.5 * (self.dim * LOG_2PI + self.log_det() + np.einsum("ij,ij->i", z, z))


def _is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m[~np.eye(m.shape[0], dtype=bool)])


@dataclass(eq=False)
class GmmModel:
    weights: np.ndarray
    components: tuple[GaussianComponent, ...]
    structure: CovarianceStructure
    loglik: float
    n_obs: int
    seed: int | None = None
    loglik_history: tuple[float, ...] = ()
    bic: float = field(default=float("nan"))

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.components = tuple(self.components)
        if self.weights.shape != (len(self.components),) or not self.components:
            raise ValueError("need one weight per component and at least one component")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if not math.isfinite(self.loglik):
            raise NumericalError("log-likelihood is not finite")
        if math.isnan(self.bic):
            self.bic = bic(self, self.n_obs)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def n_features(self) -> int:
        return self.components[0].dim

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mu for c in self.components])

    @property
    def covariances(self) -> np.ndarray:
        return np.array([c.sigma for c in self.components])

    def n_params(self) -> int:
        return n_free_params(self.n_components, self.n_features, self.structure)

    def log_weighted(self, X: np.ndarray) -> np.ndarray:
        """``log w_i + log N(x | mu_i, Sigma_i)`` for every row and component."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"data has {X.shape[1]} features, model expects {self.n_features}")
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return np.column_stack([c.logpdf(X) for c in self.components]) + logw


# ---------------------------------------------------------------------------
# Densities


def gaussian_logpdf(x, comp: GaussianComponent) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != comp.dim:
        raise ValueError(f"point has {x.size} dimensions, component has {comp.dim}")
    return float(comp.logpdf(x[None, :])[0])


def mixture_logpdf(x, model: GmmModel) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(logsumexp(model.log_weighted(x), axis=1)[0])


# ---------------------------------------------------------------------------
# BIC


def n_free_params(n_components: int, n_features: int, structure: CovarianceStructure) -> int:
    return (n_components - 1) + n_components * n_features + structure.cov_params(n_components, n_features)


def bic(model: GmmModel, n: int | None = None) -> float:
    """``-2 loglik + p log n``; smaller is better."""
    n = model.n_obs if n is None else n
    if n < 1:
        raise ValueError("n must be >= 1")
    return -2.0 * model.loglik + model.n_params() * math.log(n)


# ---------------------------------------------------------------------------
# EM


def kmeanspp_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding: each new center is the best of a few D^2-weighted draws."""
    n = X.shape[0]
    trials = 2 + int(math.log(k))
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = np.sum((X - X[first]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            candidates = rng.integers(n, size=trials)
        else:
            cum = np.cumsum(closest)
            candidates = np.searchsorted(cum, rng.random(trials) * total, side="right")
            candidates = np.minimum(candidates, n - 1)
        dist = np.stack([np.sum((X - X[j]) ** 2, axis=1) for j in candidates])
        pot = np.minimum(closest, dist).sum(axis=1)
        best = int(np.argmin(pot))
        centers[c] = X[candidates[best]]
        closest = np.minimum(closest, dist[best])
    return centers


def _nearest(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * X @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def _m_step(
    X: np.ndarray,
    resp: np.ndarray,
    structure: CovarianceStructure,
    reg: float,
    floor: float,
) -> tuple[np.ndarray, list[GaussianComponent]]:
    n, d = X.shape
    mass = resp.sum(axis=0)
    structure.check_mass(mass, d)
    weights = mass / n
    weights /= weights.sum()
    means = (resp.T @ X) / mass[:, None]

    if structure.shape is Shape.FULL:
        covs = []
        for k in range(resp.shape[1]):
            diff = X - means[k]
            covs.append((resp[:, k, None] * diff).T @ diff / mass[k])
        covs = np.array(covs)
    else:
        sq = np.stack([resp[:, k] @ (X - means[k]) ** 2 for k in range(resp.shape[1])]) / mass[:, None]
        if structure.shape is Shape.SPHERICAL:
            sq = np.repeat(sq.mean(axis=1, keepdims=True), d, axis=1)
        covs = np.array([np.diag(v) for v in sq])

    if structure.tied:
        shared = np.tensordot(weights, covs, axes=1)
        covs = np.repeat(shared[None], len(covs), axis=0)

    comps = []
    for k, cov in enumerate(covs):
        cov = 0.5 * (cov + cov.T)
        if reg > 0:
            cov = cov + reg * max(np.trace(cov) / d, floor) * np.eye(d)
        comps.append(GaussianComponent(means[k], cov))
    return weights, comps


def _data_scale(X: np.ndarray) -> float:
    var = float(np.mean(np.var(X, axis=0)))
    return 1e-6 * var if var > 0 else 1e-6


def em_fit(
    data,
    n_components: int,
    structure: CovarianceStructure | str = CovarianceStructure(),
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 500,
    reg: float = 1e-6,
) -> GmmModel:
    """Fit a mixture by EM from a k-means++ seeded hard assignment.

    The log-likelihood of every parameter set visited is kept in
    ``loglik_history``; iteration stops once an EM step improves it by less
    than ``tol`` (absolute) or after ``max_iter`` EM steps. ``tol=inf``
    returns the initial model. ``reg`` scales the diagonal ridge
    ``reg * trace(Sigma) / D`` added after each M-step.
    """
    X = _as_array(data)
    n, d = X.shape
    if isinstance(structure, str):
        structure = CovarianceStructure.parse(structure)
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n <= n_components:
        raise ValueError(f"need more rows ({n}) than components ({n_components})")
    if not tol > 0:
        raise ValueError("tol must be positive")

    rng = np.random.default_rng(seed)
    floor = _data_scale(X)
    centers = kmeanspp_centers(X, n_components, rng)
    resp = np.zeros((n, n_components))
    resp[np.arange(n), _nearest(X, centers)] = 1.0
    weights, comps = _m_step(X, resp, structure, reg, floor)

    history = []
    for it in range(max_iter + 1):
        model = GmmModel(weights, comps, structure, 1.0, n)  # placeholder loglik
        log_prob = model.log_weighted(X)
        norm = logsumexp(log_prob, axis=1)
        ll = float(norm.sum())
        if not math.isfinite(ll):
            raise NumericalError("log-likelihood diverged")
        history.append(ll)
        if it == max_iter or math.isinf(tol) or (it > 0 and history[-1] - history[-2] < tol):
            break
        resp = np.exp(log_prob - norm[:, None])
        weights, comps = _m_step(X, resp, structure, reg, floor)

    return GmmModel(weights, comps, structure, history[-1], n, seed, tuple(history))


def _as_array(data) -> np.ndarray:
    X = data.features if isinstance(data, ProfileMatrix) else np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("data must be an (n, D) matrix with D >= 1")
    return X


@dataclass
class Candidate:
    n_components: int
    structure: CovarianceStructure
    model: GmmModel | None
    error: str = ""

    @property
    def bic(self) -> float:
        return self.model.bic if self.model is not None else math.inf


def fit_candidates(
    data,
    h_range: Iterable[int],
    structures: Sequence[CovarianceStructure | str] = ALL_STRUCTURES,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 500,
    reg: float = 1e-6,
) -> list[Candidate]:
    """Fit every (H, structure) pair; failures are kept with their reason."""
    X = _as_array(data)
    structures = [CovarianceStructure.parse(s) if isinstance(s, str) else s for s in structures]
    out = []
    for h in h_range:
        for s in structures:
            try:
                model = em_fit(X, h, s, seed=seed, tol=tol, max_iter=max_iter, reg=reg)
            except (NumericalError, ValueError) as exc:
                log.info("skipping H=%d %s: %s", h, s.name, exc)
                out.append(Candidate(h, s, None, f"{type(exc).__name__}: {exc}"))
                continue
            log.debug("H=%d %s: loglik=%.6g bic=%.6g iters=%d", h, s.name, model.loglik, model.bic,
                      len(model.loglik_history) - 1)
            out.append(Candidate(h, s, model))
    return out


def select_model(
    data,
    h_range: Iterable[int] = range(2, 16),
    structures: Sequence[CovarianceStructure | str] = ALL_STRUCTURES,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 500,
    reg: float = 1e-6,
    candidates: list | None = None,
) -> GmmModel:
    """Minimum-BIC model over all (H, structure) pairs.

    Ties go to the earlier pair (smaller H, then the order of ``structures``).
    Pass a list as ``candidates`` to receive every fit attempted.
    """
    h_range = list(h_range)
    if not h_range:
        raise ValueError("h_range is empty")
    if not structures:
        raise ValueError("no covariance structures given")
    fits = fit_candidates(data, h_range, structures, seed, tol, max_iter, reg)
    if candidates is not None:
        candidates.extend(fits)
    ok = [c for c in fits if c.model is not None]
    if not ok:
        raise AllFitsFailed(f"all {len(fits)} mixture fits failed")
    best = ok[0]
    for c in ok[1:]:
        if c.bic < best.bic:
            best = c
    return best.model


def assign(model: GmmModel, data) -> tuple[np.ndarray, np.ndarray]:
    """Hard labels (argmax posterior, lowest index on ties) and responsibilities."""
    X = _as_array(data)
    log_prob = model.log_weighted(X)
    resp = np.exp(log_prob - log_prob.max(axis=1, keepdims=True))
    resp /= resp.sum(axis=1, keepdims=True)
    return np.argmax(resp, axis=1), resp


# ---------------------------------------------------------------------------
# Serialization


def save_model(model: GmmModel, path) -> None:
    g = lambda v: format(float(v), ".17g")  # noqa: E731
    lines = [
        f"profilecast-gmm {FORMAT_VERSION}",
        f"structure {model.structure.name}",
        f"n_components {model.n_components}",
        f"n_features {model.n_features}",
        f"n_obs {model.n_obs}",
        f"seed {'' if model.seed is None else model.seed}".rstrip(),
        f"loglik {g(model.loglik)}",
        f"bic {g(model.bic)}",
        "weights " + " ".join(g(w) for w in model.weights),
    ]
    for k, c in enumerate(model.components):
        lines.append(f"mean {k} " + " ".join(g(v) for v in c.mu))
        lines.append(f"cov {k} " + " ".join(g(v) for v in c.sigma.ravel()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> GmmModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("profilecast-gmm "):
        raise MalformedRow(1, "not a profilecast mixture model file")
    if int(lines[0].split()[1]) != FORMAT_VERSION:
        raise MalformedRow(1, f"unsupported model version {lines[0].split()[1]}")
    head, means, covs = {}, {}, {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        if key == "mean":
            k, _, vals = rest.partition(" ")
            means[int(k)] = np.array(vals.split(), dtype=np.float64)
        elif key == "cov":
            k, _, vals = rest.partition(" ")
            covs[int(k)] = np.array(vals.split(), dtype=np.float64)
        else:
            head[key] = rest
    h, d = int(head["n_components"]), int(head["n_features"])
    comps = [GaussianComponent(means[k], covs[k].reshape(d, d)) for k in range(h)]
    return GmmModel(
        np.array(head["weights"].split(), dtype=np.float64),
        comps,
        CovarianceStructure.parse(head["structure"]),
        float(head["loglik"]),
        int(head["n_obs"]),
        int(head["seed"]) if head.get("seed") else None,
        bic=float(head["bic"]),
    )
