"""Edge-gateway intrusion detection with budgeted remote reasoning."""

__version__ = "0.1.0"
