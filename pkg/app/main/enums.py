from enum import Enum


class NormKind(Enum):
    QUADRATIC = "quadratic"
    RANDERS = "randers"


class ProfileKind(Enum):
    CONSTANT = "constant"
    COS_THETA = "cos_theta"
    COS_PHI = "cos_phi"
    SIN_PRODUCT = "sin_product"


class MeasureKind(Enum):
    BUSEMANN_HAUSDORFF = "busemann-hausdorff"
    HOLMES_THOMPSON = "holmes-thompson"


class CoMetric(Enum):
    EUCLIDEAN = "euclidean"


class FieldKind(Enum):
    REAL_SCALAR = 0
    COMPLEX_SCALAR = 1
    ONE_FORM = 2


class SectorKind(Enum):
    THETA_WINDING = "theta_winding"
    PHI_WINDING = "phi_winding"
    VORTEX_PAIR = "vortex_pair"


class StepRule(Enum):
    FIXED = "fixed"
    ARMIJO = "armijo"
    BB = "bb"


class Termination(Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STALL = "stall"


class TraceKind(Enum):
    INITIAL = "initial"
    DESCENT = "descent"
    GAUGE = "gauge"


def choices(enum_class):
    """(value, label) pairs for django.forms.ChoiceField."""
    return [(member.value, member.value) for member in enum_class]
