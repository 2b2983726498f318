"""Transferable semantic augmentation on small synthetic domain-adaptation
tasks, with Monte-Carlo and finite-difference checks of the loss."""
from .dataset import DomainDataset, load_csv, make_moons, rotate, save_csv, two_moons_task
from .loss import augmented_logits, l_inf, lambda_schedule, mi_loss, total_loss, tsa_loss
from .network import ModelParams, backward, forward, init_params, sgd_step, softmax
from .runner import TrainConfig, bias_experiment, evaluate, rho_sweep, train
from .stats import ClassStats, MemoryModule, estimate_class_stats, estimation_bias

__version__ = "0.1.0"
