"""Semantic environment atlas navigation stack.

Builds topological semantic maps from observation streams, aggregates
place reachability and place-object statistics across environments, and
navigates procedural grid-world houses to named object categories.
"""

__version__ = "0.1.0"
