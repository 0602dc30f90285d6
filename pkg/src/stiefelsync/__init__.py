"""Orthogonal/unitary group synchronization on graphs via low-rank relaxation
over products of Stiefel manifolds, with certified optimality checks,
closed-form landscape bounds, and Kuramoto gradient-flow simulation."""

from .certificate import (CertificateReport, TheoryBounds, certify, correlation,
                          numerical_rank, residual_decomposition, s_matrix,
                          theory_bounds)
from .errors import NumericalError, ParameterError, ParseError
from .graphs import (Graph, LaplacianSummary, build_graph, connectivity,
                     laplacian, laplacian_summary)
from .instance import (BlockSymmetricMatrix, SyncInstance, connection_laplacian,
                       make_measurements, noise_operator_norm, parse_instance,
                       random_instance, sample_ground_truth, write_instance)
from .kuramoto import (FlowReport, flow_rhs, integrate_flow, sync_error,
                       twisted_state)
from .solver import (SolveOptions, SolveReport, gradient, hess_quadratic,
                     hess_vec, min_hessian_eig, objective, solve, spectral_init)
from .stiefel import (StiefelProductPoint, project_tangent, random_point,
                      random_tangent, retract, sbd, tangent_second_moment)

__version__ = "0.1.0"
