"""Fresh-symbol margin-transfer certificates for template classification."""

__version__ = "0.1.0"

from . import (cases, certificates, edgewedge, graph, kernels, klbounds, klr,
               pipeline, prompting, tasks, transformer)

__all__ = [
    "cases",
    "pipeline",
    "certificates",
    "edgewedge",
    "graph",
    "kernels",
    "klbounds",
    "klr",
    "prompting",
    "tasks",
    "transformer",
]
