"""Overlap losses with analytic per-voxel gradients.

All losses return a LossEval holding the scalar value and the gradient with
respect to every predicted voxel.  Sums are accumulated in float64; the
gradient volume is float64 as well so finite-difference checks stay
meaningful.  Losses ignore physical spacing by design.
"""

from dataclasses import dataclass, field

import numpy as np

from .volgrid import DimsMismatchError

CLAMP_EPS = 1e-7  # probability clamp for logarithms in cross entropy


@dataclass(frozen=True)
class LossEval:
    """Scalar loss plus dL/dpred per voxel (same shape as the inputs)."""

    value: float
    grad: np.ndarray
    degenerate: bool = False  # both inputs empty; value fixed by convention


@dataclass(frozen=True)
class SupervisionWeights:
    """Mixing weights for the main and two auxiliary supervision heads."""

    alpha: float = 0.8
    beta: float = 0.15
    gamma: float = 0.05

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("supervision weights must be non-negative")
        s = self.alpha + self.beta + self.gamma
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"supervision weights must sum to 1, got {s}")


def _as_f64_pair(pred, gt):
    p = np.asarray(getattr(pred, "data", pred), dtype=np.float64)
    g = np.asarray(getattr(gt, "data", gt), dtype=np.float64)
    if p.shape != g.shape:
        raise DimsMismatchError(f"dims mismatch: {p.shape} vs {g.shape}")
    return p, g


def dsc_loss(pred, gt):
    """Soft Dice loss 1 - 2K/U with squared-norm denominator.

    K = sum(pred*gt), U = sum(pred^2) + sum(gt^2).
    grad_i = -2 * (gt_i*U - 2K*pred_i) / U^2.
    Both inputs all-zero is degenerate: value 1, zero gradient.
    """
    p, g = _as_f64_pair(pred, gt)
    k = float(np.sum(p * g))
    u = float(np.sum(p * p) + np.sum(g * g))
    if u == 0.0:
        return LossEval(1.0, np.zeros_like(p), degenerate=True)
    value = 1.0 - 2.0 * k / u
    grad = -2.0 * (g * u - 2.0 * k * p) / (u * u)
    return LossEval(value, grad)


def jaccard_loss(pred, gt):
    """Soft Jaccard loss 1 - K/(U - K).

    grad_i = -[gt_i*(U-K) - K*(2*pred_i - gt_i)] / (U-K)^2.
    U - K = 0 can only happen with U = 0 for inputs in range (U >= 2K),
    so the degenerate branch is the same empty-inputs case as dsc_loss.
    """
    p, g = _as_f64_pair(pred, gt)
    k = float(np.sum(p * g))
    u = float(np.sum(p * p) + np.sum(g * g))
    denom = u - k
    if denom == 0.0:
        return LossEval(1.0, np.zeros_like(p), degenerate=True)
    value = 1.0 - k / denom
    grad = -(g * denom - k * (2.0 * p - g)) / (denom * denom)
    return LossEval(value, grad)


def dsc_loss_nosquare(pred, gt, textbook_gradient=False):
    """Deliberately defective Dice variant 1 - 2K/L with L = sum(p) + sum(g).

    The default gradient is -2*(gt_i*L - 2K)/L^2, which is constant within
    each ground-truth class (the defect under test).  textbook_gradient=True
    switches to the exact derivative -2*(gt_i*L - K)/L^2 of the same value;
    it shares the per-class-constant defect.
    """
    p, g = _as_f64_pair(pred, gt)
    k = float(np.sum(p * g))
    ell = float(np.sum(p) + np.sum(g))
    if ell == 0.0:
        return LossEval(1.0, np.zeros_like(p), degenerate=True)
    value = 1.0 - 2.0 * k / ell
    k_term = k if textbook_gradient else 2.0 * k
    grad = -2.0 * (g * ell - k_term) / (ell * ell)
    return LossEval(value, grad)


def class_weights(gt):
    """Inverse-frequency class weights (w_fg, w_bg) normalized to mean 1.

    Falls back to (1, 1) when either class is absent.
    """
    g = np.asarray(getattr(gt, "data", gt), dtype=np.float64)
    n = g.size
    n_fg = float(np.sum(g))
    n_bg = n - n_fg
    if n_fg == 0.0 or n_bg == 0.0:
        return 1.0, 1.0
    return n / (2.0 * n_fg), n / (2.0 * n_bg)


def reweighted_ce_loss(pred, gt, weights=None):
    """Per-voxel binary cross entropy with per-class weights.

    value = -(1/N) * sum[w_fg*gt*ln(p) + w_bg*(1-gt)*ln(1-p)] with p clamped
    to [eps, 1-eps].  weights=None uses inverse class frequency from gt;
    weights=(1, 1) gives plain unweighted cross entropy.
    """
    p, g = _as_f64_pair(pred, gt)
    if weights is None:
        w_fg, w_bg = class_weights(g)
    else:
        w_fg, w_bg = float(weights[0]), float(weights[1])
    pc = np.clip(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    n = p.size
    value = -float(np.sum(w_fg * g * np.log(pc)
                          + w_bg * (1.0 - g) * np.log1p(-pc))) / n
    grad = -(w_fg * g / pc - w_bg * (1.0 - g) / (1.0 - pc)) / n
    return LossEval(value, grad)


def composite_loss(main, stage2, stage3, w):
    """Weighted sum of three head losses: alpha*main + beta*s2 + gamma*s3."""
    value = w.alpha * main.value + w.beta * stage2.value + w.gamma * stage3.value
    grad = (w.alpha * main.grad + w.beta * stage2.grad + w.gamma * stage3.grad)
    return LossEval(value, grad,
                    degenerate=main.degenerate and stage2.degenerate
                    and stage3.degenerate)


LOSS_FUNCTIONS = {
    "dsc": dsc_loss,
    "jaccard": jaccard_loss,
    "dsc-nosquare": dsc_loss_nosquare,
    "wce": reweighted_ce_loss,
    "ce": lambda pred, gt: reweighted_ce_loss(pred, gt, weights=(1.0, 1.0)),
}


# -- finite-difference verification ---------------------------------------

def finite_difference_grad(fn, pred, gt, h=1e-3):
    """Central-difference gradient of fn(pred, gt).value, float64."""
    p = np.asarray(pred, dtype=np.float64)
    grad = np.zeros_like(p)
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        hi = p.copy()
        lo = p.copy()
        hi[idx] += h
        lo[idx] -= h
        grad[idx] = (fn(hi, gt).value - fn(lo, gt).value) / (2.0 * h)
    return grad


@dataclass
class GradCheckReport:
    loss: str
    trials: int
    failures: int = 0
    worst_rel_err: float = 0.0
    worst_witness: dict = field(default_factory=dict)
    defect_constant_per_class: bool | None = None


def gradcheck(loss_name, trials=100, seed=0, dims=(4, 4, 4),
              rel_tol=1e-4, h=1e-3):
    """Compare analytic gradients against central differences.

    Random pred in [0.1, 0.9] (away from the CE clamp), random binary gt.
    For dsc-nosquare the analytic formula is the printed one, which is not
    the derivative of the value; the check instead verifies the textbook
    variant and reports the per-class-constant-gradient defect of both.
    """
    rng = np.random.default_rng(seed)
    defect = None
    if loss_name == "dsc-nosquare":
        fn = lambda p, g: dsc_loss_nosquare(p, g, textbook_gradient=True)
    else:
        fn = LOSS_FUNCTIONS[loss_name]
    report = GradCheckReport(loss=loss_name, trials=trials)
    for t in range(trials):
        p = rng.uniform(0.1, 0.9, dims)
        g = (rng.random(dims) < 0.3).astype(np.float64)
        analytic = fn(p, g).grad
        numeric = finite_difference_grad(fn, p, g, h=h)
        denom = np.maximum(np.abs(numeric), 1e-8)
        rel = float(np.max(np.abs(analytic - numeric) / denom))
        if rel > report.worst_rel_err:
            report.worst_rel_err = rel
            report.worst_witness = {"trial": t, "rel_err": rel}
        if rel > rel_tol:
            report.failures += 1
        if loss_name == "dsc-nosquare" and defect is None:
            ev = dsc_loss_nosquare(p, g)
            fg = ev.grad[g == 1]
            bg = ev.grad[g == 0]
            defect = bool(fg.size == 0 or np.all(fg == fg.flat[0])) and \
                     bool(bg.size == 0 or np.all(bg == bg.flat[0]))
    report.defect_constant_per_class = defect
    return report
