"""Max-pooling inpainting of occluded background features, with the tooling around it."""
from .mpi import MpiError, MpiOptions, Provenance, mpi_backward, mpi_forward, mpi_oracle, nn_inpaint_labels
from .tensor import PoolMode, maxpool_same

__version__ = "0.1.0"
__all__ = ["MpiError", "MpiOptions", "Provenance", "mpi_backward", "mpi_forward", "mpi_oracle",
           "nn_inpaint_labels", "PoolMode", "maxpool_same"]
