"""Two-level temporal task planning over logic knowledge bases.

The pipeline parses a knowledge base, finds a total-order plan, expands
it through the action mappings, lifts it to a partial order, allocates
resources while minimizing makespan, and emits an STN and a behaviour tree.
"""

from __future__ import annotations

__version__ = "0.1.0"
