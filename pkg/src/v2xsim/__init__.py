"""City-scale V2X network twin.

Builds a simplified 2.5D city from map data, pre-computes every potential
tile-to-site link (distance, LOS class, pathloss), replays mobility
traces, and answers sequential step/act queries from external agents.
"""

__version__ = "0.1.0"
