"""Gym-style multi-agent wrapper over the plumetrace environment.

One handle owns one native episode stream. The per-agent dict API follows the
parallel multi-agent convention of common RL trainer stacks: reset() returns
a dict of flat observation vectors keyed by agent id, step() consumes a dict
of actions and returns (observations, rewards, done, info). All episode state
lives in the wrapped native environment; the wrapper holds no hidden state.

Actions are normalized [-1, 1] pairs mapped affinely onto the actuation
limits by default; pass raw_actions=True to supply (v, omega) in native
units. A single handle must not be stepped from two threads concurrently.
"""

from .env import (LAYOUT_VERSION, PlumeTraceEnv, agent_id, layout_doc,
                  layout_fields, layout_size, make_env)

__version__ = "0.1.0"
__all__ = ["PlumeTraceEnv", "make_env", "layout_size", "layout_fields",
           "layout_doc", "agent_id", "LAYOUT_VERSION"]
