"""Target propagation training rules with Jacobian diagnostics."""

from .algorithms import Hyperparams, Kind, RngStreams, train_step
from .network import Activation, Layer, Network, build_network, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
