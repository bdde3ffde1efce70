"""Direct-summation N-body engine with block-step Hermite integration.

Also ships an analytic host/accelerator performance model for block-step
codes.
"""

from .core import (
    Backend,
    ParticleSystem,
    SimConfig,
    SingularityError,
    TimestepUnderflowError,
    new_system,
    read_snapshot,
    total_mass,
    write_snapshot,
)
from .diagnostics import RunStatistics, fit_power_law, measure_run, total_energy
from .integrator import initialize, run, step
from .kernel import BlockRequest, ForceResult, TransferPolicy, eval_block, eval_block_sorted, transfer_ledger
from .plummer import PlummerParams, generate_plummer, scale_to_standard

__version__ = "0.1.0"
