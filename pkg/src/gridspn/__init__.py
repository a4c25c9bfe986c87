"""Convolutional sum-product networks on image grids.

Declarative layer stacks are scope-checked for completeness and
decomposability, compiled to flat execution plans, and run in log space for
exact marginal/MPE inference, hard-EM or Adam training, inpainting and
classification.
"""

from .graph import (ExecutionPlan, InvalidNetworkError, Scope, ScopeMap,
                    ValidityReport, check_validity, compile_network,
                    propagate_scopes)
from .inference import (backward_root_derivatives, forward_marginal,
                        forward_mpe, inpaint, leaf_posterior,
                        partition_function)
from .leaves import (GaussianLeafParams, equidistant_init, gaussian_log_prob,
                     indicator_log_prob, quantile_init)
from .params import ModelParams, init_em_params, init_gradient_params
from .structure import (ClassSums, GaussianLeaf, GCLProduct, IndicatorLeaf,
                        NetworkSpec, RootSum, SpatialSum, parse_structure,
                        render_structure)
from .tensor import ConvGeometry, gclp_forward, spatial_sum_forward, weighted_logsumexp
from .training import (AdamState, TrainConfig, adam_step, hard_em_step,
                       input_dropout, product_dropout, smooth_normalize, train)

__version__ = "0.1.0"
