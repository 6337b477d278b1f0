"""
QoE Model

Logistic scores of semantic rate and semantic accuracy, group QoE as
their weighted sum over the group's users, and the minimum-score check.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import expit

KSUTS = 1000.0


@dataclass(frozen=True)
class QoEParams:
    """Per-user QoE preferences.

    phi_req is in ksuts/s and beta applies to rates in ksuts/s;
    lam applies to accuracy on its raw [0, 1] scale.
    """
    w: float
    beta: float
    lam: float
    phi_req: float
    xi_req: float
    g_th: float = 0.5

    def violations(self) -> Dict[str, str]:
        """Field name -> problem, empty when the parameters are admissible."""
        problems = {}
        if not 0.0 <= self.w <= 1.0:
            problems['w'] = f"w={self.w} outside [0, 1]"
        if not self.beta > 0.0:
            problems['beta'] = f"beta={self.beta} must be positive"
        if not self.lam > 0.0:
            problems['lam'] = f"lambda={self.lam} must be positive"
        if not self.phi_req > 0.0:
            problems['phi_req'] = f"phi_req={self.phi_req} must be positive"
        if not 0.0 < self.xi_req < 1.0:
            problems['xi_req'] = f"xi_req={self.xi_req} outside (0, 1)"
        if not 0.0 <= self.g_th <= 1.0:
            problems['g_th'] = f"g_th={self.g_th} outside [0, 1]"
        return problems

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def rate_score(params: QoEParams, phi: ArrayLike) -> np.ndarray:
    """Rate score G^R for semantic rate(s) phi given in suts/s."""
    return expit(params.beta * (np.asarray(phi, dtype=float) / KSUTS - params.phi_req))


def accuracy_score(params: QoEParams, xi: ArrayLike) -> np.ndarray:
    """Accuracy score G^A for task accuracy (or accuracies) xi in [0, 1]."""
    return expit(params.lam * (np.asarray(xi, dtype=float) - params.xi_req))


def user_qoe(params: QoEParams, g_rate: float, g_acc: float) -> float:
    return params.w * g_rate + (1.0 - params.w) * g_acc


def group_qoe(params: Sequence[QoEParams], phis: Sequence[float], xi: float) -> float:
    """Group QoE: sum over users of w*G^R + (1-w)*G^A with the shared group accuracy."""
    return float(sum(user_qoe(p, rate_score(p, phi), accuracy_score(p, xi))
                     for p, phi in zip(params, phis)))


def meets_threshold(params: QoEParams, g_rate: float, g_acc: float) -> bool:
    """Both scores must reach the threshold (inclusive)."""
    return bool(g_rate >= params.g_th and g_acc >= params.g_th)
