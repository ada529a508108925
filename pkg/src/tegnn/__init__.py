"""Traffic-engineering LPs, a trajectory-recording interior-point solver, and a
double-looped message-passing model trained to imitate the solver."""

__version__ = "0.1.0"
