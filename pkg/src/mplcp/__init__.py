"""Distance distributions for the Manhattan Poisson line Cox process.

Exact distribution of the path (L1) distance from the typical intersection to
the k-th nearest facility, with Monte Carlo and road-network validation.
"""

__version__ = "0.1.0"

from .analytic import (  # noqa: E402
    DistanceCdf,
    ModelParams,
    cdf_path_distance,
    cdf_table,
    nlos_pk,
    pk_faa_di_bruno,
    pk_partition,
    pk_table,
    pk_via_lt_quadrature,
)
from .numerics import Partition, integer_partitions  # noqa: E402

__all__ = [
    "__version__",
    "DistanceCdf",
    "ModelParams",
    "Partition",
    "cdf_path_distance",
    "cdf_table",
    "integer_partitions",
    "nlos_pk",
    "pk_faa_di_bruno",
    "pk_partition",
    "pk_table",
    "pk_via_lt_quadrature",
]
