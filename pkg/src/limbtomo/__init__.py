"""Limited-angle tomography toolkit: PDFP reconstruction with complex
wavelet sparsity, learned wavefront-set extraction and completion, and
morphological boundary estimates."""

__version__ = "0.1.0"

from .dtcwt import (CoeffPyramid, FilterBank, Subband, SubbandStack,
                    default_filter_bank, dtcwt_adjoint, dtcwt_analysis,
                    dtcwt_synthesis, finest_magnitudes)
from .errors import (ConfigurationError, DataError, DimensionError,
                     LimbtomoError, NumericError, ParameterError)
from .geometry import (ProjectionGeometry, Sinogram, add_noise,
                       limited_angle_geometry, radon_adjoint, radon_forward,
                       tomosynthesis)
from .morphology import (StructuringElement, dilate_binary, dilate_gray,
                         directional_element, erode_binary, erode_gray,
                         line_element, open_binary, open_gray, skeleton)
from .neural import NetworkParams, NetworkSpec, TrainConfig, binarize, dice_loss
from .phantom import EllipseSpec, LpBallSpec, render_ellipses, render_lp_volume
from .pipeline import BoundaryEstimate, PipelineConfig, desk_config, run_slice, run_volume
from .solver import (SolverParams, SolverState, estimate_operator_norms,
                     pdfp_solve, project_nonnegative, soft_threshold_complex)
from .evaluate import MetricsReport, dsc, segment_from_boundary
