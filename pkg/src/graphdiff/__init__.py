"""graphdiff: differential testing of DL-library operators on frequent
computation subgraphs.

Pipeline: mine frequent operator subgraphs from model graphs, generate valid
inputs from recorded runtime features, execute each subgraph on two backends,
and report per-node precision/NaN/crash differences with ancestor-based
implication.
"""

from .backends import (BackendUnavailable, BridgeBackend, CrashOutcome,
                       PerturbBackend, RefBackend, parse_backend, run_case)
from .generate import (NoCompatibleRecord, TestCase, classify_params,
                       generate_case, sample_tensor)
from .graphs import (ComputationGraph, GraphCorpus, GraphError, ancestors,
                     entry_nodes, load_corpus, make_graph, topo_order)
from .harness import (CaseReport, NodeDiff, compare, run_campaign,
                      run_differential, single_node_case)
from .metrics import campaign_metrics, valid_ratio
from .mining import (FrequentSubgraph, MiningConfig, canonical_code,
                     contains_embedding, mine)
from .ops import ACTIVE_CORE, ValidityError, execute_node, infer_output, validate
from .signatures import API_NAMES, REGISTRY, ApiSignature
from .tensors import TensorValue, decode_payload, encode_payload, from_numpy
from .traces import InputRecord, TensorFeature, TraceStore, ingest

__version__ = "0.1.0"
