"""gridgate: a desk-scale grid job portal.

Register compute resources, group them into active sets, submit
parameterized jobsets dispatched proportionally to site computing power,
monitor and cancel jobs through GRAM-style status reporting, and browse
staged results through a replica catalog — all against a built-in simulated
multi-site fabric.
"""

__version__ = "0.1.0"
