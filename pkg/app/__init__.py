"""UAV cooperative perception simulator."""
