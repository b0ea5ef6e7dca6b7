"""KL-divergence alignment trainer for the streaming hash model.

Each stage sees one batch only. The batch's label-side target distribution
P stays fixed while SGD on the projection matrix moves the code-side
distribution Q toward it. Two gradient modes exist:

* "exact" - the true analytic gradient of the clamped KL loss, including
  the per-pair 1/eta factor from differentiating dist/eta and the coupling
  through Q's normalizer. This is the default and is verified against a
  finite-difference oracle.
* "paper" - the closed form X (Lhat - Lmat) (B o TanhDeriv)^T with
  Lmat = (P - Q) o kernel. Kept for ablation; it omits the 1/eta factor
  and attaches the tanh derivative to the partner sample, so it is an
  approximation of the true gradient.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import distribution as dist
from . import model as hashmodel
from .data import StreamingBatch
from .distribution import GaussianParams, ScalingParams
from .errors import DimensionError, DomainError, NumericError
from .model import HashModel

log = logging.getLogger(__name__)

GRAD_MODES = ("paper", "exact")
P_VARIANTS = ("raw", "gaussian")
Q_VARIANTS = ("plain", "scaled")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    gaussian: GaussianParams = field(default_factory=GaussianParams)
    scaling: ScalingParams | None = None  # None resolves to p = k/2, n = 1
    batch_size: int = 50
    inner_iters: int = 5
    grad_mode: str = "exact"
    p_variant: str = "gaussian"
    q_variant: str = "scaled"
    epsilon: float = 1e-12
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        if self.batch_size < 2:
            raise DomainError("batch_size must be at least 2")
        if self.inner_iters < 1:
            raise DomainError("inner_iters must be at least 1")
        if not 0.0 < self.epsilon <= 1e-6:
            raise DomainError("epsilon must lie in (0, 1e-6]")
        if self.grad_mode not in GRAD_MODES:
            raise DomainError(f"grad_mode must be one of {GRAD_MODES}")
        if self.p_variant not in P_VARIANTS:
            raise DomainError(f"p_variant must be one of {P_VARIANTS}")
        if self.q_variant not in Q_VARIANTS:
            raise DomainError(f"q_variant must be one of {Q_VARIANTS}")

    def resolve_scaling(self, k: int) -> ScalingParams:
        if self.scaling is not None:
            return self.scaling
        return ScalingParams(p=k / 2.0, n=1.0)


@dataclass
class StageReport:
    stage_index: int
    loss_before: float
    loss_after: float
    grad_norm: float
    wall_time: float


@dataclass
class GradWorkspace:
    """Intermediates of one gradient evaluation, exposed for testing."""

    B: np.ndarray          # (k, n) relaxed codes
    D: np.ndarray          # (n, n) dist/eta, zero diagonal
    T: np.ndarray          # (n, n) 1 + D
    Q: np.ndarray          # (n, n) code-side distribution
    Lmat: np.ndarray       # (n, n) (P - Q) o kernel, zero diagonal
    Lhat: np.ndarray       # (n, n) diag of Lmat row sums
    TanhDeriv: np.ndarray  # (k, n) 1 - B o B
    eta: np.ndarray        # (n, n) per-pair divisors


def kl_loss(P: np.ndarray, Q: np.ndarray, epsilon: float = 1e-12) -> float:
    """Sum of P_ij log(P_ij / Q_ij) over off-diagonal pairs.

    Q is clamped below by epsilon inside the log; terms with P_ij = 0
    contribute 0 (the x log x limit convention).
    """
    if P.shape != Q.shape:
        raise DimensionError(f"shape mismatch: {P.shape} vs {Q.shape}")
    mask = P > 0
    q = np.maximum(Q[mask], epsilon)
    p = P[mask]
    return float(np.sum(p * np.log(p / q)))


def build_workspace(X, model: HashModel, P, S, cfg: TrainConfig) -> GradWorkspace:
    """Evaluate codes, distances and gradient intermediates at the current W."""
    B = hashmodel.encode_relaxed(model, X)
    if cfg.q_variant == "scaled":
        eta = dist.scaling_matrix(S, cfg.resolve_scaling(model.k))
    else:
        eta = np.ones_like(S)
    D = dist.pairwise_hamming_sq(B) / eta
    np.fill_diagonal(D, 0.0)
    T = 1.0 + D
    kernel = 1.0 / T
    np.fill_diagonal(kernel, 0.0)
    Q = kernel / kernel.sum()
    Lmat = (P - Q) * kernel
    np.fill_diagonal(Lmat, 0.0)
    Lhat = np.diag(Lmat.sum(axis=1))
    return GradWorkspace(
        B=B, D=D, T=T, Q=Q, Lmat=Lmat, Lhat=Lhat, TanhDeriv=1.0 - B * B, eta=eta
    )


def grad_loss(X, model: HashModel, P, S, cfg: TrainConfig) -> np.ndarray:
    """Gradient of the stage loss with respect to W, per cfg.grad_mode."""
    if P.shape[0] != X.shape[1]:
        raise DimensionError(
            f"P is {P.shape} but X has {X.shape[1]} columns"
        )
    ws = build_workspace(X, model, P, S, cfg)
    return _grad_from_workspace(X, ws, cfg.grad_mode)


def _grad_from_workspace(X, ws: GradWorkspace, grad_mode: str) -> np.ndarray:
    if grad_mode == "paper":
        return X @ (ws.Lhat - ws.Lmat) @ (ws.B * ws.TanhDeriv).T
    # exact: per-pair coefficient gains the 1/eta factor, and the tanh
    # derivative applies to the differentiated sample via the chain rule
    Le = ws.Lmat / ws.eta
    Lehat = np.diag(Le.sum(axis=1))
    G = ws.B @ (Lehat - Le)
    return X @ (G * ws.TanhDeriv).T


def _stage_loss(P, ws: GradWorkspace, epsilon: float) -> float:
    return kl_loss(P, ws.Q, epsilon)


def fd_oracle(X, model: HashModel, P, S, cfg: TrainConfig, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the stage loss over every W entry."""
    if step <= 0:
        raise DomainError("step must be positive")

    def loss_at(W):
        ws = build_workspace(X, HashModel(W=W), P, S, cfg)
        return _stage_loss(P, ws, cfg.epsilon)

    grad = np.empty_like(model.W)
    for a in range(model.d):
        for b in range(model.k):
            Wp = model.W.copy()
            Wp[a, b] += step
            Wm = model.W.copy()
            Wm[a, b] -= step
            grad[a, b] = (loss_at(Wp) - loss_at(Wm)) / (2.0 * step)
    return grad


def sgd_step(model: HashModel, gradient: np.ndarray, learning_rate: float) -> HashModel:
    """One descent update W <- W - lr * gradient, returning a new model."""
    if gradient.shape != model.W.shape:
        raise DimensionError(
            f"gradient shape {gradient.shape} does not match W {model.W.shape}"
        )
    if not np.all(np.isfinite(gradient)):
        raise NumericError("gradient contains non-finite entries; stage aborted")
    return HashModel(W=model.W - learning_rate * gradient)


def build_target(labels, cfg: TrainConfig):
    """Similarity matrix and label-side target P for one batch."""
    S = dist.build_similarity(labels)
    if cfg.p_variant == "raw":
        P = dist.p_raw(S)
    else:
        P = dist.p_gaussian(S, cfg.gaussian)
    return S, P


def train_stage(model: HashModel, batch: StreamingBatch, cfg: TrainConfig):
    """Update the model on one batch: inner_iters SGD steps against the
    batch's fixed target distribution. Returns (model, StageReport).
    """
    cfg.validate()
    if batch.size < 2:
        raise DomainError("a stage needs at least 2 instances")
    start = time.perf_counter()
    X = batch.features
    S, P = build_target(batch.labels, cfg)
    loss_before = None
    grad_norm = 0.0
    for _ in range(cfg.inner_iters):
        ws = build_workspace(X, model, P, S, cfg)
        if loss_before is None:
            loss_before = _stage_loss(P, ws, cfg.epsilon)
        grad = _grad_from_workspace(X, ws, cfg.grad_mode)
        grad_norm = float(np.linalg.norm(grad))
        model = sgd_step(model, grad, cfg.learning_rate)
    ws = build_workspace(X, model, P, S, cfg)
    loss_after = _stage_loss(P, ws, cfg.epsilon)
    report = StageReport(
        stage_index=batch.stage_index,
        loss_before=loss_before,
        loss_after=loss_after,
        grad_norm=grad_norm,
        wall_time=time.perf_counter() - start,
    )
    return model, report


def train_stream(model: HashModel, batches, cfg: TrainConfig, eval_hook=None):
    """Fold train_stage over a batch sequence in order.

    eval_hook(model, report), when given, runs synchronously after each
    stage. A NumericError aborts the stream and returns progress so far;
    other errors propagate.
    """
    reports: list[StageReport] = []
    for batch in batches:
        try:
            model, report = train_stage(model, batch, cfg)
        except NumericError as e:
            log.warning("stage %d aborted: %s", batch.stage_index, e)
            return model, reports
        reports.append(report)
        if eval_hook is not None:
            eval_hook(model, report)
    return model, reports


def with_stage_indices(batches, start: int = 1) -> list[StreamingBatch]:
    """Renumber stage indices sequentially (used when chaining epochs)."""
    return [replace(b, stage_index=start + i) for i, b in enumerate(batches)]
