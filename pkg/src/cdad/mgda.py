"""Two-task multi-gradient descent: closed-form task weighting, the
Pareto-descent update of the shared parameters, and the training loop.

Per batch, each domain loss is backpropagated separately. The two shared-
parameter gradients g1, g2 are combined as d = a*g1 + (1-a)*g2 where a
minimizes ||d||^2 over [0, 1]; each domain's own parameters use that
domain's gradient at its own learning rate.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SGDMomentum
from .ingest import WindowedDataset
from .model import CrossDomainModel, domain_loss

DEGENERATE_EPS = 1e-12


@dataclass
class MgdaSolution:
    alpha: float  # weight on task 1; task 2 gets 1 - alpha
    direction: np.ndarray
    objective: float  # K = ||direction||^2

    @property
    def weights(self) -> tuple[float, float]:
        return self.alpha, 1.0 - self.alpha


def solve_two_task(g1: np.ndarray, g2: np.ndarray) -> MgdaSolution:
    """Minimize ||a*g1 + (1-a)*g2||^2 over a in [0, 1] in closed form.

    The quadratic's vertex is ((g2-g1).g2) / ||g1-g2||^2, clamped to [0, 1];
    when g1 and g2 (nearly) coincide the objective is flat and a = 0.5.
    """
    g1 = np.asarray(g1, dtype=np.float64).ravel()
    g2 = np.asarray(g2, dtype=np.float64).ravel()
    if g1.shape != g2.shape:
        raise ValueError(f"gradient length mismatch: {g1.shape} vs {g2.shape}")
    diff = g1 - g2
    denom = float(diff @ diff)
    if denom < DEGENERATE_EPS:
        alpha = 0.5
    else:
        alpha = float(np.clip((g2 - g1) @ g2 / denom, 0.0, 1.0))
    d = alpha * g1 + (1.0 - alpha) * g2
    return MgdaSolution(alpha=alpha, direction=d, objective=float(d @ d))


def flatten_grads(params, grads: dict[str, np.ndarray]) -> np.ndarray:
    """Concatenate per-parameter gradients in the order of `params` (a fixed,
    named order), so dot products are reproducible."""
    return np.concatenate([grads[p.name].ravel() for p in params])


@dataclass
class TrainConfig:
    lr_physical: float = 0.1  # LR1
    lr_network: float = 0.001  # LR2
    lr_shared: float = 0.001  # LR3
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    static_weights: tuple[float, float] | None = None  # fixed (a, 1-a) instead of the solver


@dataclass
class TraceRow:
    epoch: int
    batch: int
    loss_physical: float
    loss_network: float
    alpha: float
    objective: float


@dataclass
class TrainResult:
    trace: list[TraceRow]
    val_losses: list[dict]  # per epoch, per domain
    best_epoch: int


class NonFiniteLossError(RuntimeError):
    def __init__(self, epoch, batch, losses):
        self.snapshot = {"epoch": epoch, "batch": batch, "losses": losses}
        super().__init__(f"non-finite loss at epoch {epoch} batch {batch}: {losses}")


def _domain_lr(cfg: TrainConfig, domain: str) -> float:
    return {"physical": cfg.lr_physical, "network": cfg.lr_network}[domain]


def apply_updates(
    shared_params,
    task_domain_grads: dict[str, dict[str, np.ndarray]],
    sol: MgdaSolution,
    shared_opt: SGDMomentum,
    domain_opts: dict[str, SGDMomentum],
) -> None:
    """Shared parameters move along the combined direction at the shared
    learning rate; each domain's parameters use their own task gradient."""
    offset = 0
    combined = {}
    for p in shared_params:
        n = p.data.size
        combined[p.name] = sol.direction[offset : offset + n].reshape(p.data.shape)
        offset += n
    shared_opt.step_with(combined)
    for d, opt in domain_opts.items():
        opt.step_with(task_domain_grads[d])


def train(
    model: CrossDomainModel,
    train_sets: dict[str, WindowedDataset],
    val_sets: dict[str, WindowedDataset],
    adjacencies: dict[str, np.ndarray],
    union_adjacency: np.ndarray,
    cfg: TrainConfig,
) -> TrainResult:
    """Train to convergence on summed validation loss (patience early stop),
    restoring the best-epoch parameters and batch-norm statistics."""
    domains = model.cfg.domains
    counts = {train_sets[d].count for d in domains}
    if len(counts) != 1:
        raise ValueError("domains disagree on training window count")
    n_windows = counts.pop()

    shared_params = model.shared_params()
    shared_opt = SGDMomentum(shared_params, cfg.lr_shared, cfg.momentum)
    domain_opts = {
        d: SGDMomentum(model.domain_params(d), _domain_lr(cfg, d), cfg.momentum) for d in domains
    }

    trace: list[TraceRow] = []
    val_losses: list[dict] = []
    best = np.inf
    best_epoch = -1
    best_state = None
    bad_epochs = 0

    for epoch in range(cfg.max_epochs):
        for batch_idx, start in enumerate(range(0, n_windows, cfg.batch_size)):
            sl = slice(start, min(start + cfg.batch_size, n_windows))
            inputs = {d: train_sets[d].inputs[sl] for d in domains}
            targets = {d: train_sets[d].targets[sl] for d in domains}

            preds = model.forward(inputs, adjacencies, union_adjacency, train=True)
            losses = {d: domain_loss(preds[d], targets[d]) for d in domains}
            loss_vals = {d: float(losses[d].data) for d in domains}
            if not all(np.isfinite(v) for v in loss_vals.values()):
                raise NonFiniteLossError(epoch, batch_idx, loss_vals)

            # one backward per task; shared gradients are captured separately
            task_shared = {}
            task_domain = {}
            for d in domains:
                ad.zero_gradients(model.all_params())
                ad.backward(losses[d])
                task_shared[d] = flatten_grads(
                    shared_params, {p.name: p.grad for p in shared_params}
                )
                task_domain[d] = {p.name: p.grad.copy() for p in model.domain_params(d)}
            ad.zero_gradients(model.all_params())

            if len(domains) == 2:
                d1, d2 = domains
                if cfg.static_weights is not None:
                    a = float(cfg.static_weights[0])
                    direction = a * task_shared[d1] + (1 - a) * task_shared[d2]
                    sol = MgdaSolution(a, direction, float(direction @ direction))
                else:
                    sol = solve_two_task(task_shared[d1], task_shared[d2])
            else:
                g = task_shared[domains[0]]
                sol = MgdaSolution(1.0, g, float(g @ g))

            apply_updates(shared_params, task_domain, sol, shared_opt, domain_opts)

            loss_phys = loss_vals.get("physical", 0.0)
            loss_net = loss_vals.get("network", 0.0)
            trace.append(TraceRow(epoch, batch_idx, loss_phys, loss_net, sol.alpha, sol.objective))

        epoch_val = validation_losses(model, val_sets, adjacencies, union_adjacency, cfg.batch_size)
        val_losses.append(epoch_val)
        total = sum(epoch_val.values())
        if total < best - 1e-12:
            best = total
            best_epoch = epoch
            best_state = snapshot_state(model)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    if best_state is not None:
        restore_state(model, best_state)
    return TrainResult(trace=trace, val_losses=val_losses, best_epoch=best_epoch)


def validation_losses(model, val_sets, adjacencies, union_adjacency, batch_size) -> dict:
    domains = model.cfg.domains
    out = {d: 0.0 for d in domains}
    n = val_sets[domains[0]].count
    total = 0
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        inputs = {d: val_sets[d].inputs[sl] for d in domains}
        preds = model.forward(inputs, adjacencies, union_adjacency, train=False)
        size = sl.stop - sl.start
        for d in domains:
            err = float(np.abs(preds[d].data - val_sets[d].targets[sl]).mean())
            out[d] += err * size
        total += size
    return {d: v / total for d, v in out.items()}


def predict(model, datasets: dict[str, WindowedDataset], adjacencies, union_adjacency, batch_size=256):
    """Eval-mode predictions per domain, stacked over all windows."""
    domains = model.cfg.domains
    n = datasets[domains[0]].count
    chunks = {d: [] for d in domains}
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        inputs = {d: datasets[d].inputs[sl] for d in domains}
        preds = model.forward(inputs, adjacencies, union_adjacency, train=False)
        for d in domains:
            chunks[d].append(preds[d].data)
    return {d: np.concatenate(chunks[d], axis=0) for d in domains}


def snapshot_state(model) -> dict:
    state = {p.name: p.data.copy() for p in model.all_params()}
    state["__bn__"] = [
        (bn.running_mean.copy(), bn.running_var.copy()) for bn in model.batch_norms()
    ]
    return state


def restore_state(model, state: dict) -> None:
    for p in model.all_params():
        p.data[...] = state[p.name]
    for bn, (rm, rv) in zip(model.batch_norms(), state["__bn__"]):
        bn.running_mean[...] = rm
        bn.running_var[...] = rv


def write_trace(path, trace: list[TraceRow]) -> None:
    with open(path, "w") as f:
        f.write("epoch,batch,L_phys,L_net,alpha,K\n")
        for r in trace:
            f.write(
                f"{r.epoch},{r.batch},{r.loss_physical:.17g},{r.loss_network:.17g},"
                f"{r.alpha:.17g},{r.objective:.17g}\n"
            )
