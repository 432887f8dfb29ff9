"""Self-supervised denoising pretraining for the invariant encoders.

Clean coordinates get per-node Gaussian noise with a batch-shared sigma drawn
uniformly from [0.1, 0.5]; a small SiLU decoder predicts the noise residual
from the encoder latents.  The objective is the residual MSE plus 0.01 times
a latent smoothness penalty averaged over graph edges.  Training uses Adam
with cosine annealing and gradient clipping at norm 1; the decoder is thrown
away and the best-validation encoder is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import DecoderHead, InvariantEncoder
from .features import atom_encoder_inputs, surface_encoder_inputs
from .optim import Adam, CosineSchedule, clip_grad_norm
from .surface import SparseAdjacency, face_geometry, knn_graph
from .synthetic import gen_synthetic

SIGMA_RANGE = (0.1, 0.5)
SMOOTH_WEIGHT = 0.01


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class DenoiseBatch:
    clean_coords: np.ndarray
    noisy_coords: np.ndarray
    sigma: float
    graph: SparseAdjacency
    node_inputs: np.ndarray


@dataclass
class PretrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    clip_norm: float = 1.0
    seed: int = 0
    hidden: int = 128
    depth: int = 3
    out_dim: int = 128
    sigma_range: tuple[float, float] = SIGMA_RANGE
    val_fraction: float = 0.1


@dataclass
class PretrainResult:
    encoder: InvariantEncoder
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")


def make_denoise_batch(coords: np.ndarray, node_inputs: np.ndarray,
                       graph: SparseAdjacency, sigma: float,
                       rng: np.random.Generator) -> DenoiseBatch:
    noise = rng.normal(scale=sigma, size=coords.shape)
    return DenoiseBatch(clean_coords=np.asarray(coords, dtype=float),
                        noisy_coords=coords + noise, sigma=float(sigma),
                        graph=graph, node_inputs=node_inputs)


def denoise_loss(encoder: InvariantEncoder, decoder: DecoderHead,
                 batch: DenoiseBatch) -> tuple[Tensor, Tensor, Tensor]:
    """(total, denoise, smooth) loss tensors for one batch instance."""
    if batch.noisy_coords.shape != batch.clean_coords.shape:
        raise ad.ShapeMismatch(
            f"noisy {batch.noisy_coords.shape} vs clean {batch.clean_coords.shape}")
    z = encoder.forward(batch.noisy_coords, batch.node_inputs, batch.graph)
    pred = decoder.forward(z)
    residual = Tensor(batch.clean_coords - batch.noisy_coords)
    err = pred - residual
    denoise = ad.tmean(err * err)
    if batch.graph.nnz:
        zdiff = ad.row_select(z, batch.graph.rows) - ad.row_select(z, batch.graph.cols)
        smooth = ad.tsum(zdiff * zdiff) * Tensor(1.0 / batch.graph.nnz)
    else:
        smooth = Tensor(0.0)
    total = denoise + smooth * Tensor(SMOOTH_WEIGHT)
    return total, denoise, smooth


def synthetic_pretrain_data(count: int, seed: int, kind: str = "atom",
                            residue_range: tuple[int, int] = (6, 14),
                            k: int = 8) -> list[tuple[np.ndarray, np.ndarray, SparseAdjacency]]:
    """(coords, node_inputs, graph) triples from seeded synthetic proteins."""
    if kind not in ("atom", "surface"):
        raise ValueError(f"kind must be 'atom' or 'surface', got {kind!r}")
    rng = np.random.default_rng(seed)
    data = []
    for i in range(count):
        residues = int(rng.integers(residue_range[0], residue_range[1] + 1))
        structure, mesh = gen_synthetic(seed * 100003 + i, residues)
        if kind == "atom":
            coords = structure.coords()
            inputs = atom_encoder_inputs(structure)
        else:
            geo = face_geometry(mesh)
            coords = np.array([g.centroid for g in geo])
            inputs = surface_encoder_inputs(geo)
        data.append((coords, inputs, knn_graph(coords, k=k)))
    return data


def pretrain_encoder(config: PretrainConfig,
                     data: list[tuple[np.ndarray, np.ndarray, SparseAdjacency]]
                     ) -> PretrainResult:
    """Train an encoder on denoising; returns the lowest-validation checkpoint.

    The validation split (10 percent, at least one protein) keeps a fixed
    noise draw across epochs so per-epoch losses are directly comparable.
    """
    if len(data) < 2:
        raise ValueError("need at least 2 proteins to split train/validation")
    input_dim = data[0][1].shape[1]
    encoder = InvariantEncoder(input_dim, hidden=config.hidden, depth=config.depth,
                               out_dim=config.out_dim, seed=config.seed)
    decoder = DecoderHead(in_dim=config.out_dim, seed=config.seed + 1)

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(data))
    n_val = max(1, round(config.val_fraction * len(data)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise ValueError("validation split consumed every protein")

    val_batches = []
    for i in val_idx:
        coords, inputs, graph = data[i]
        sigma = rng.uniform(*config.sigma_range)
        val_batches.append(make_denoise_batch(coords, inputs, graph, sigma, rng))

    def validation_loss() -> float:
        losses = [denoise_loss(encoder, decoder, b)[0].item() for b in val_batches]
        return float(np.mean(losses))

    params = {f"enc/{k}": v for k, v in encoder.params.items()}
    params.update({f"dec/{k}": v for k, v in decoder.params.items()})
    opt = Adam(params, lr=config.lr)
    sched = CosineSchedule(config.lr, config.epochs)

    result = PretrainResult(encoder=encoder)
    best_state: dict[str, np.ndarray] | None = None
    for epoch in range(config.epochs):
        opt.lr = sched.step(epoch)
        epoch_rng = np.random.default_rng((config.seed, epoch))
        order = epoch_rng.permutation(train_idx)
        train_losses = []
        for start in range(0, order.size, config.batch_size):
            batch_ids = order[start:start + config.batch_size]
            sigma = epoch_rng.uniform(*config.sigma_range)  # shared per batch
            opt.zero_grad()
            terms = []
            for i in batch_ids:
                coords, inputs, graph = data[i]
                batch = make_denoise_batch(coords, inputs, graph, sigma, epoch_rng)
                terms.append(denoise_loss(encoder, decoder, batch)[0])
            loss = terms[0]
            for t in terms[1:]:
                loss = loss + t
            loss = loss * Tensor(1.0 / len(terms))
            if not np.isfinite(loss.values):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            clip_grad_norm(params, config.clip_norm)
            opt.step()
            train_losses.append(loss.item())
        val_loss = validation_loss()
        result.history.append({"epoch": epoch, "lr": opt.lr,
                               "train_loss": float(np.mean(train_losses)),
                               "val_loss": val_loss})
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_state = encoder.state_arrays()
    if best_state is not None:
        encoder.load_state(best_state)
    return result
