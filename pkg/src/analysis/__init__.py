"""
Excess-risk analysis of gradient descent paths.

- decomposition: averaging identity, one-step risk and distance inequalities,
  averaged and last-iterate decompositions
- bounds: path radius, sample-size condition, γT schedule, excess-risk bounds
"""

from .bounds import (
    BoundReport,
    build_bound_report,
    check_bounded_path,
    excess_risk_bounds,
    log_term,
    path_radius,
    sample_size_condition,
    schedule_gamma_T,
    scheduled_bounds,
    step_size_condition,
)
from .decomposition import (
    DecompositionReport,
    averaging_identity,
    check_path_recursion,
    check_risk_step,
    correction_weights,
    decompose,
    export_step_terms_csv,
    path_recursion_residuals,
    save_report_json,
)

__all__ = [
    'BoundReport',
    'DecompositionReport',
    'averaging_identity',
    'build_bound_report',
    'check_bounded_path',
    'check_path_recursion',
    'check_risk_step',
    'correction_weights',
    'decompose',
    'excess_risk_bounds',
    'export_step_terms_csv',
    'log_term',
    'path_radius',
    'path_recursion_residuals',
    'sample_size_condition',
    'save_report_json',
    'schedule_gamma_T',
    'scheduled_bounds',
    'step_size_condition',
]
