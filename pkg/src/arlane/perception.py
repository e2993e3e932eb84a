"""Small convolutional regressor from lane rasters to cubic centerline coefficients."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import Adam, Conv2d, Dense, Flatten, ReLU, Sequential
from .nn import checkpoint as ckpt
from .snow import NO_OCCLUSION, OcclusionConfig, OcclusionSpec, ViewConfig, read_pgm, render, sample_occlusion
from .track import CenterlineCoeffs, FitError, GraphSpec, generate_graph, label_coeffs, route_pool, sample_route
from .vehicle import start_state

log = logging.getLogger(__name__)

COEFF_SCALE = np.array([3.5, 0.5, 0.05, 0.005])


class PerceptionError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Dataset
# --------------------------------------------------------------------------


@dataclass
class LabeledFrame:
    image: np.ndarray  # (C, H, W)
    label: CenterlineCoeffs
    meta: dict = field(default_factory=dict)
    route: object = field(default=None, repr=False)  # kept for re-rendering; not serialized


@dataclass
class DatasetSpec:
    graph: GraphSpec = field(default_factory=GraphSpec)
    view: ViewConfig = field(default_factory=ViewConfig)
    occlusion: OcclusionSpec = field(default_factory=OcclusionSpec)
    n_graphs: int = 4
    max_offset: float = 1.2  # m
    max_heading: float = 0.15  # rad


def _pose(route, rng, spec: DatasetSpec):
    s0 = rng.uniform(0.0, max(route.s_total - 1.5 * spec.view.depth, 0.0))
    d = rng.uniform(-spec.max_offset, spec.max_offset)
    phi = rng.uniform(-spec.max_heading, spec.max_heading)
    return s0, d, phi


def render_labeled(route, s0: float, d: float, phi: float, occ: OcclusionConfig, view: ViewConfig,
                   frame: int = 0) -> LabeledFrame:
    st = start_state(route, 0.0, d, phi, s0)
    img = render(st, route, occ, frame=frame, s_hint=s0, view=view)
    label = label_coeffs(route, st.x, st.y, st.yaw, s0, view.depth)
    meta = {"s": s0, "d": d, "phi": phi, "occlusion": occ.to_dict()}
    return LabeledFrame(img, label, meta, route)


def build_dataset(n_sunny: int, n_snowy: int, seed: int = 0, spec: DatasetSpec | None = None
                  ) -> list[LabeledFrame]:
    """Render frames at random poses on random routes; the snowy part uses sampled occlusion."""
    if n_sunny < 0 or n_snowy < 0 or n_sunny + n_snowy == 0:
        raise ValueError("dataset needs at least one frame")
    spec = spec or DatasetSpec()
    rng = np.random.default_rng([seed, 8191])
    graphs = [generate_graph(int(seed) * 1000 + k, spec.graph) for k in range(spec.n_graphs)]
    pools = [route_pool(g, 3, 2.0 * spec.view.depth) for g in graphs]
    frames = []
    kinds = ["sunny"] * n_sunny + ["snowy"] * n_snowy
    for i, kind in enumerate(kinds):
        while True:
            gi = int(rng.integers(len(graphs)))
            route = sample_route(graphs[gi], rng, pool=pools[gi])
            s0, d, phi = _pose(route, rng, spec)
            occ = NO_OCCLUSION
            if kind == "snowy":
                occ = sample_occlusion(int(rng.integers(2**31)),
                                       OcclusionSpec(**{**vars(spec.occlusion), "route_length": route.s_total}))
            try:
                fr = render_labeled(route, s0, d, phi, occ, spec.view, frame=i)
            except FitError:
                continue
            fr.meta.update({"kind": kind, "graph": gi, "index": i})
            frames.append(fr)
            break
    return frames


def split_dataset(frames: list, val_fraction: float = 0.2, seed: int = 0) -> tuple[list, list]:
    idx = np.random.default_rng([seed, 5]).permutation(len(frames))
    n_val = int(round(val_fraction * len(frames)))
    return [frames[i] for i in idx[n_val:]], [frames[i] for i in idx[:n_val]]


def load_dataset(directory: str | Path) -> list[LabeledFrame]:
    """Read ``frame_*.pgm`` images with their JSON sidecars."""
    out = []
    for pgm in sorted(Path(directory).glob("frame_*.pgm")):
        label = json.loads(pgm.with_suffix(".json").read_text())
        c = label["coeffs"]
        out.append(LabeledFrame(read_pgm(pgm)[None], CenterlineCoeffs(*c), label))
    return out


def frame_label_json(fr: LabeledFrame) -> dict:
    return {"coeffs": list(map(float, fr.label.as_array())), **fr.meta}


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


@dataclass
class RegressorConfig:
    image_size: int = 64
    channels: tuple[int, int] = (8, 16)
    hidden: int = 64
    zero_init: bool = False


class CoeffRegressor(Sequential):
    def __init__(self, config: RegressorConfig | None = None, seed: int = 0):
        config = config or RegressorConfig()
        rng = np.random.default_rng([seed, 3301])
        c1, c2 = config.channels
        conv1 = Conv2d(1, c1, 5, stride=2, rng=rng)
        conv2 = Conv2d(c1, c2, 3, stride=2, rng=rng)
        h = conv2.output_hw(*conv1.output_hw(config.image_size, config.image_size))
        super().__init__(conv1, ReLU(), conv2, ReLU(), Flatten(),
                         Dense(c2 * h[0] * h[1], config.hidden, rng), ReLU(), Dense(config.hidden, 4, rng))
        self._config = config
        if config.zero_init:
            for p in self.params():
                p.value[...] = 0.0

    @property
    def config(self) -> RegressorConfig:
        return self._config


def _stack(frames) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([f.image for f in frames])
    y = np.stack([f.label.as_array() for f in frames]) / COEFF_SCALE
    return x, y


def predict_normalized(model: CoeffRegressor, images: np.ndarray) -> np.ndarray:
    size = model.config.image_size
    if images.ndim != 4 or images.shape[1:] != (1, size, size):
        raise ValueError(f"expected images of shape (N, 1, {size}, {size}), got {images.shape}")
    return model.forward(images)


def predict_coeffs(model: CoeffRegressor, image: np.ndarray) -> CenterlineCoeffs:
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[None]
    out = predict_normalized(model, img[None])[0] * COEFF_SCALE
    return CenterlineCoeffs(*map(float, out))


class LateralEstimator:
    """Image -> estimated lateral deviation ``d = -c0`` for the environment's observation path."""

    def __init__(self, model: CoeffRegressor):
        self.model = model

    def __call__(self, img: np.ndarray) -> float:
        return -predict_coeffs(self.model, img).c0


@dataclass
class RegressorReport:
    loss_curve: list[float]
    val_mse: np.ndarray | None  # per normalized coefficient
    epochs: int


def train_regressor(train: list[LabeledFrame], val: list[LabeledFrame] | None = None, epochs: int = 60,
                    lr: float = 1e-3, batch_size: int = 32, seed: int = 0,
                    config: RegressorConfig | None = None, model: CoeffRegressor | None = None,
                    mirror: bool = False, weight_decay: float = 0.0
                    ) -> tuple[CoeffRegressor, RegressorReport]:
    """Minimize mean squared error on normalized coefficients with Adam.

    ``mirror`` adds left-right flipped copies with negated coefficients; the
    rasterizer is exactly symmetric under this flip. ``weight_decay`` is an
    L2 penalty added to the gradient.
    """
    if not train:
        raise ValueError("empty training set")
    model = model or CoeffRegressor(config, seed)
    opt = Adam(model.params(), lr)
    rng = np.random.default_rng([seed, 17])
    x, y = _stack(train)
    if mirror:
        x = np.concatenate([x, x[..., ::-1]])
        y = np.concatenate([y, -y])
    curve = []
    initial = None
    for ep in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            opt.zero_grad()
            pred = model.forward(x[idx])
            diff = pred - y[idx]
            loss = float(np.mean(diff * diff))
            model.backward(2.0 * diff / diff.size)
            if weight_decay > 0.0:
                for p in model.params():
                    p.grad += weight_decay * p.value
            opt.step()
            total += loss * len(idx)
        epoch_loss = total / len(x)
        if initial is None:
            initial = epoch_loss
        if not np.isfinite(epoch_loss) or epoch_loss > 10.0 * initial:
            raise PerceptionError(f"regressor diverged at epoch {ep}: loss {epoch_loss:.4g} (initial {initial:.4g})")
        curve.append(epoch_loss)
    val_mse = None
    if val:
        xv, yv = _stack(val)
        val_mse = np.mean((predict_normalized(model, xv) - yv) ** 2, axis=0)
    return model, RegressorReport(curve, val_mse, epochs)


def normalized_mse(model: CoeffRegressor, frames: list[LabeledFrame]) -> float:
    x, y = _stack(frames)
    return float(np.mean((predict_normalized(model, x) - y) ** 2))


def c0_sign_accuracy(model: CoeffRegressor, frames: list[LabeledFrame]) -> float:
    x, y = _stack(frames)
    pred = predict_normalized(model, x)
    return float(np.mean(np.sign(pred[:, 0]) == np.sign(y[:, 0])))


def rerender(frames: list[LabeledFrame], occ_fn, view: ViewConfig | None = None) -> list[LabeledFrame]:
    """Same poses under a different occlusion (``occ_fn(i) -> OcclusionConfig``)."""
    view = view or ViewConfig()
    return [render_labeled(f.route, f.meta["s"], f.meta["d"], f.meta["phi"], occ_fn(i), view)
            for i, f in enumerate(frames)]


def save_model(model: CoeffRegressor, path: str | Path) -> None:
    cfg = model.config
    meta = {"image_size": cfg.image_size, "channels": list(cfg.channels), "hidden": cfg.hidden}
    ckpt.save(path, ckpt.module_state(model), {"regressor": meta})


def load_model(path: str | Path) -> CoeffRegressor:
    tensors, meta = ckpt.load(path)
    m = meta["regressor"]
    model = CoeffRegressor(RegressorConfig(m["image_size"], tuple(m["channels"]), m["hidden"]))
    ckpt.load_module_state(model, tensors)
    return model
