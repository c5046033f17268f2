"""Non-concave network utility maximization through a moment relaxation,
solved by a distributed primal-dual method simulated with message passing."""

__version__ = "0.1.0"
