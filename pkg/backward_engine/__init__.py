from .engine_types import NodeMoments, PIMI_MODE, QuadCoeffs, TREE_MODE, YField
from .recursion import (
    compute_Y, compute_Y_pimi, compute_Z_closed_form, compute_Z_constant_gamma,
    homogeneous_map, node_moments, pimi_step, two_period_closed_form,
)
from .value_function import (
    expected_future_impacts, export_y_field, quad_coeffs, value_function, y_upper_bound,
)
