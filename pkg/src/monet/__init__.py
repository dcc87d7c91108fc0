"""Behavior-graph malware variant detection toolkit.

Pipeline: package IR -> reaching-definitions dataflow -> static behavior
graph -> runtime completion from trace logs -> graph decoupling ->
edit-distance signature matching over an indexed store, exposed as a
library, a CLI (``monet``) and an HTTP detection service.
"""

__version__ = "0.1.0"
