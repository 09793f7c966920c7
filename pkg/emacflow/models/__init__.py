"""
Domain models: meshes, Taylor-Hood spaces and solution levels
"""
from emacflow.models.mesh import Mesh
from emacflow.models.space import QuadratureRule, TaylorHoodSpace
from emacflow.models.state import History, State

__all__ = [
    "Mesh",
    "QuadratureRule",
    "TaylorHoodSpace",
    "State",
    "History",
]
