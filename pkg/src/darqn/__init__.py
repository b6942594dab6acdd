"""Deep recurrent Q-network with temporal attention for obstacle avoidance."""
__version__ = "0.1.0"
