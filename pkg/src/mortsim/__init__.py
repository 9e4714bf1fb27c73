"""Neural mortality forecasting and pension-age microsimulation."""

__version__ = "0.1.0"
