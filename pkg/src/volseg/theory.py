"""Divergences and executable property checks for the loss-function theory.

The checks sample random inputs and assert the *conclusions* of the claims
(infinite KL on disjoint supports, continuity/differentiability of the
overlap losses in network parameters, the loss ordering chain, Pinsker's
bound).  Nothing here is a proof; failures are recorded with witnesses.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .losses import dsc_loss, jaccard_loss


@dataclass(frozen=True)
class DistributionPair:
    """Two equal-length non-negative vectors, optionally both normalized."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        q = np.asarray(self.q, dtype=np.float64)
        if p.shape != q.shape or p.ndim != 1:
            raise ValueError("p and q must be equal-length 1D vectors")
        if np.any(p < 0) or np.any(q < 0):
            raise ValueError("entries must be non-negative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def normalized(self):
        return (abs(self.p.sum() - 1.0) <= 1e-9
                and abs(self.q.sum() - 1.0) <= 1e-9)


@dataclass
class TheoremReport:
    theorem: str
    trials: int
    failures: int = 0
    worst_witness: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.failures == 0

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "trials": self.trials,
            "failures": self.failures,
            "worst_witness": self.worst_witness,
            "passed": self.passed,
        }


def kl_divergence(pair):
    """sum p_i ln(p_i/q_i), with 0*ln(0/q)=0 and +inf when supp(p) !<= supp(q)."""
    p, q = pair.p, pair.q
    pos = p > 0
    if np.any(q[pos] == 0):
        return math.inf
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def tv_distance(pair):
    """Componentwise supremum distance max_i |p_i - q_i|."""
    if pair.p.size == 0:
        return 0.0
    return float(np.max(np.abs(pair.p - pair.q)))


def check_theorem1(trials=1000, seed=0):
    """Disjoint supports force infinite KL; KL is asymmetric.

    Each trial builds a binary p with at least one 1 and a q that is zero
    exactly where p is 1 (positive elsewhere), the strong form of the
    non-intersecting hypothesis, and asserts the +inf sentinel.
    """
    rng = np.random.default_rng(seed)
    report = TheoremReport("theorem1", trials)
    for t in range(trials):
        n = int(rng.integers(2, 33))
        p = (rng.random(n) < 0.5).astype(np.float64)
        if not p.any():
            p[rng.integers(n)] = 1.0
        q = rng.uniform(0.1, 1.0, n)
        q[p == 1.0] = 0.0
        kl = kl_divergence(DistributionPair(p, q))
        if not math.isinf(kl):
            report.failures += 1
            report.worst_witness = {"trial": t, "p": p.tolist(),
                                    "q": q.tolist(), "kl": kl}
    # Asymmetry witness: a normalized pair with KL(p||q) != KL(q||p).
    wp = DistributionPair(np.array([0.8, 0.2]), np.array([0.5, 0.5]))
    wq = DistributionPair(np.array([0.5, 0.5]), np.array([0.8, 0.2]))
    fwd, rev = kl_divergence(wp), kl_divergence(wq)
    if abs(fwd - rev) <= 1e-12:
        report.failures += 1
        report.worst_witness = {"asymmetry": "not found", "fwd": fwd,
                                "rev": rev}
    else:
        report.worst_witness.setdefault("asymmetry_witness", {
            "p": [0.8, 0.2], "q": [0.5, 0.5],
            "kl_pq": fwd, "kl_qp": rev,
        })
    return report


class SigmoidGenerator:
    """Tiny differentiable parameter-to-probability-map generator.

    Maps theta = (W, b) to sigmoid(W z + b) for a fixed input z: an affine
    transform followed by a smooth pointwise nonlinearity, the setting the
    continuity and differentiability claims quantify over.
    """

    def __init__(self, n_out, n_in, seed=0):
        rng = np.random.default_rng(seed)
        self.z = rng.normal(size=n_in)
        self.n_out = n_out
        self.n_in = n_in

    def theta_size(self):
        return self.n_out * (self.n_in + 1)

    def forward(self, theta):
        w = theta[: self.n_out * self.n_in].reshape(self.n_out, self.n_in)
        b = theta[self.n_out * self.n_in:]
        a = w @ self.z + b
        return 1.0 / (1.0 + np.exp(-a))

    def jacobian_vector(self, theta, dtheta):
        """Directional derivative d(forward)/dtheta . dtheta."""
        w = theta[: self.n_out * self.n_in].reshape(self.n_out, self.n_in)
        b = theta[self.n_out * self.n_in:]
        dw = dtheta[: self.n_out * self.n_in].reshape(self.n_out, self.n_in)
        db = dtheta[self.n_out * self.n_in:]
        a = w @ self.z + b
        s = 1.0 / (1.0 + np.exp(-a))
        return s * (1.0 - s) * (dw @ self.z + db)


def check_theorem2_continuity(trials=100, seed=0, n_vox=8, loss=dsc_loss,
                              halvings=8, rel_tol=1e-3):
    """Empirical continuity/differentiability probe through a generator.

    For random theta and a random direction, the loss change under
    perturbations of halving norm must shrink to zero (within noise), and
    the finite-difference quotient must converge to the analytic
    directional derivative at the finest scale.
    """
    rng = np.random.default_rng(seed)
    gen = SigmoidGenerator(n_vox, n_in=4, seed=seed)
    report = TheoremReport("theorem2", trials)
    for t in range(trials):
        theta = rng.normal(scale=0.5, size=gen.theta_size())
        gt = (rng.random(n_vox) < 0.5).astype(np.float64)
        if not gt.any():
            gt[rng.integers(n_vox)] = 1.0
        direction = rng.normal(size=gen.theta_size())
        direction /= np.linalg.norm(direction)
        base = loss(gen.forward(theta), gt)
        analytic_dd = float(np.dot(base.grad,
                                   gen.jacobian_vector(theta, direction)))
        eps = 1e-2
        changes = []
        quotient = None
        for _ in range(halvings):
            hi = loss(gen.forward(theta + eps * direction), gt).value
            lo = loss(gen.forward(theta - eps * direction), gt).value
            changes.append(abs(hi - base.value))
            quotient = (hi - lo) / (2.0 * eps)
            eps *= 0.5
        # Continuity: change at the finest scale far below the coarsest.
        shrunk = changes[-1] <= max(changes[0], 1e-12) * 0.25 + 1e-12
        denom = max(abs(analytic_dd), 1e-8)
        converged = abs(quotient - analytic_dd) / denom <= rel_tol
        if not (shrunk and converged):
            report.failures += 1
            report.worst_witness = {
                "trial": t, "changes": changes,
                "fd_quotient": quotient, "analytic": analytic_dd,
            }
    return report


def check_theorem3_ordering(trials=10000, seed=0, seq_len=1024):
    """Loss ordering, sequence convergence, and Pinsker's bound.

    (a) L_DSC <= L_Jaccard <= 2*L_DSC on random pairs in [0,1]^N.
    (b) For P_n = P + noise/n the dyadic-block envelope of L_DSC(P_n, P)
        decreases monotonically (the machine-checkable form of convergence).
    (c) On normalized pairs, sup-norm TV <= sqrt(KL/2) + 1e-12 (the sup
        norm is bounded by the standard total variation, so Pinsker applies).
    """
    rng = np.random.default_rng(seed)
    report = TheoremReport("theorem3", trials)
    for t in range(trials):
        n = int(rng.integers(2, 65))
        p = rng.random(n)
        q = rng.random(n)
        # (a) ordering over the full continuous cube, not just binary targets
        d = dsc_loss(p, q).value
        j = jaccard_loss(p, q).value
        if not (d - 1e-12 <= j <= 2.0 * d + 1e-12):
            report.failures += 1
            report.worst_witness = {"check": "ordering", "trial": t,
                                    "dsc": d, "jaccard": j}
        # (c) Pinsker on a normalized pair
        pn = p / p.sum()
        qn = q / q.sum()
        pair = DistributionPair(pn, qn)
        kl = kl_divergence(pair)
        tv = tv_distance(pair)
        if tv > math.sqrt(kl / 2.0) + 1e-12:
            report.failures += 1
            report.worst_witness = {"check": "pinsker", "trial": t,
                                    "tv": tv, "kl": kl}
    # (b) sequence convergence with a dyadic-block maximum envelope
    n_vox = 32
    base = rng.random(n_vox)
    base[0] = max(base[0], 0.5)  # nonempty target
    noise = rng.uniform(-1.0, 1.0, n_vox)
    values = []
    for n in range(1, seq_len + 1):
        pn = np.clip(base + noise / n, 0.0, 1.0)
        values.append(dsc_loss(pn, base).value)
    env = []
    k = 1
    while k <= seq_len:
        env.append(max(values[k - 1:min(2 * k, seq_len)]))
        k *= 2
    for i in range(1, len(env)):
        if env[i] > env[i - 1] + 1e-15:
            report.failures += 1
            report.worst_witness = {"check": "sequence", "block": i,
                                    "envelope": env}
            break
    report.worst_witness.setdefault("sequence_envelope", env)
    return report
