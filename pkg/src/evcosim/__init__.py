"""Co-simulation testbed for EV charging infrastructure and grid frequency stability.

The package couples three layers behind explicit message interfaces:

* ``powergrid``  -- WSCC 9-bus transient simulator (power flow, classical
  machine dynamics, governors, frequency relays, telemetry).
* ``ocpp``/``cms``/``evcs`` -- charge-point protocol stack: a central
  management service, aggregate charge-point emulators, and the JSON codec
  plus session state machines that connect them.
* ``fleet``/``attack``/``harness`` -- data-driven EV fleet model, the
  oscillatory load-attack orchestrator, and the scenario runner that wires
  everything together (deterministic accelerated mode or wall-clock realtime
  mode).
"""

__version__ = "0.1.0"
