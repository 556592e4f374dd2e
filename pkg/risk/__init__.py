# Risk tensors, PKDE transform, windows and synthetic fixtures
from risk.pkde import PkdeParams, apply_pkde, fit_pkde
from risk.scores import RiskTensor, compute_risk_scores, sparsity_summary
from risk.synthetic import SyntheticCity, generate_synthetic_city
from risk.windows import SampleWindow, WindowSplits, make_windows

__all__ = [
    "PkdeParams",
    "apply_pkde",
    "fit_pkde",
    "RiskTensor",
    "compute_risk_scores",
    "sparsity_summary",
    "SyntheticCity",
    "generate_synthetic_city",
    "SampleWindow",
    "WindowSplits",
    "make_windows",
]
