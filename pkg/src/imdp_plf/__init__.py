"""Lyapunov-guided policy synthesis for multi-objective interval MDPs."""
from .errors import *  # noqa: F401,F403
from .kernels import BACKEND
from .model import (MoimdpModel, NominalModel, PolicySet, build_nominal, enumerate_policies,
                    make_model, mixture, project_box_simplex, project_to_feasible,
                    steady_state, validate_model)
from .plf import IsoaReport, Plf, check_isoa_grid, evaluate, switching_law
from .uncertainty import ErrorBox, VertexSet, build_vertex_set, default_error_box, offsets

__version__ = "0.1.0"
