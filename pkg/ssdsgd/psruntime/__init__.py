__all__ = [
    "Message", "MessageKind", "encode_message", "decode_message", "frame", "unframe",
    "ParamShard", "ParameterServer", "server_handle",
    "Stage", "TransportKind", "MessageLog", "Transport", "InProcessTransport", "LoopbackSocketTransport", "make_transport",
    "Strategy", "WorkerReplica", "worker_delay_step",
    "MetricRecord",
    "RuntimeOptions", "TrainingConfig", "Cluster", "run_warmup", "run_training", "run_asgd", "train_to_completion",
]

from .message import Message, MessageKind, encode_message, decode_message, frame, unframe
from .server import ParamShard, ParameterServer, server_handle
from .transport import Stage, TransportKind, MessageLog, Transport, InProcessTransport, LoopbackSocketTransport, make_transport
from .worker import Strategy, WorkerReplica, worker_delay_step
from .metrics import MetricRecord
from .cluster import RuntimeOptions, TrainingConfig, Cluster, run_warmup, run_training, run_asgd, train_to_completion
