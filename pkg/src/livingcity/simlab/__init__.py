from .bots import POLICIES, Bot, BotPolicy, PolicyId, policy
from .figures import emit_figures, write_distributions
from .harness import SimResult, run_simulation
from .metrics import METRICS, SimReport, metrics_from_log

__all__ = [
    "POLICIES",
    "Bot",
    "BotPolicy",
    "PolicyId",
    "policy",
    "emit_figures",
    "write_distributions",
    "SimResult",
    "run_simulation",
    "METRICS",
    "SimReport",
    "metrics_from_log",
]
