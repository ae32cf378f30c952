"""torchbridge: out-of-process PyTorch executor and trace recorder.

Serves line-delimited JSON requests over stdin/stdout (see protocol.py) so a
differential harness can run operator graphs on real CPU/GPU devices, and can
capture runtime input features from model scripts (tracer.py).
"""

from .protocol import PROTOCOL_VERSION, decode_tensor, encode_tensor
from .server import OPS, handle, run_op, serve
from .tracer import emit_trace

__version__ = "0.1.0"
