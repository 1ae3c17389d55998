"""Desk-scale kinematic simulator and control stack for a legged-wheeled centaur robot."""

__version__ = "0.1.0"
