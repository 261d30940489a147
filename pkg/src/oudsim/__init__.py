"""Individual-level simulator of opioid-use trajectories and diversion policies.

Subpackages: ``rng`` (keyed random streams and samplers), ``estimation``
(parameter fitting), ``scenario`` (configuration), ``engine`` (the
discrete-event core), ``tally`` (derived outputs and costs), ``stats``
(replication statistics), ``sensitivity`` (design-of-experiments analysis),
``cli`` (command-line entry points).
"""

__version__ = "0.1.0"
