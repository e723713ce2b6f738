"""Total-resistance ship hull optimization on a rectangular parameter domain.

Minimizes the sum of the Michell wave resistance and a linearized viscous
drag over nonnegative, fixed-volume Q1 hulls, via a Uzawa saddle-point
iteration on the discrete quadratic program.
"""

from .geometry import (GridSpec, FlowParams, HullCoefficients, build_grid, eval_hull,
                       hull_volume, wigley_hull, normalize_volume, write_hull_csv,
                       read_hull_csv)
from .wave import (LambdaQuadrature, WaveMatrix, build_quadrature, assemble_Mw,
                   j_vector, wave_resistance, wave_resistance_direct, SmoothBump,
                   null_space_residual)
from .viscous import DragMatrix, assemble_Md, viscous_resistance
from .solver import (QpProblem, SolveReport, KktResiduals, UzawaStepError,
                     combine_objective, uzawa_solve, kkt_residuals,
                     reference_qp_oracle, project_volume_simplex)
from .analysis import (HullStudy, SpectrumReport, SweepRecord, spectrum,
                       half_hull_centroid, boundary_layer_sweep, froude_sweep,
                       wigley_compare, bulbous_bow)
from .config import RunConfig, parse_config, default_config

__version__ = "0.1.0"
