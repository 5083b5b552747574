"""Dynamic proposal generation: expert mixing driven by pyramid features.

A staircase of stride-2 depthwise convolutions folds P2..P5 into one map,
which is resized to S x S, summed over channels and fed through two dense
layers. A temperature softmax turns the output into per-proposal expert
weights used to blend the expert boxes (cxcywh) and features.
"""
import json
from dataclasses import dataclass

import numpy as np

from .geometry import cxcywh_to_xyxy

WEIGHT_MODES = ("per_proposal", "per_expert")
_TENSORS = ("dw2", "dw3", "dw4", "fc1", "fc2")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class FeaturePyramid:
    p2: np.ndarray
    p3: np.ndarray
    p4: np.ndarray
    p5: np.ndarray

    def __post_init__(self):
        levels = self.levels
        c = levels[0].shape[0]
        for name, lvl in zip(("P2", "P3", "P4", "P5"), levels):
            if lvl.ndim != 3 or lvl.shape[0] != c:
                raise ShapeError(f"{name} must be ({c}, H, W), got {lvl.shape}")
        for (na, a), (nb, b) in zip(
            zip(("P2", "P3", "P4"), levels[:-1]), zip(("P3", "P4", "P5"), levels[1:])
        ):
            if a.shape[1] != 2 * b.shape[1] or a.shape[2] != 2 * b.shape[2]:
                raise ShapeError(f"{nb} {b.shape[1:]} must be half of {na} {a.shape[1:]}")

    @property
    def levels(self):
        return (self.p2, self.p3, self.p4, self.p5)

    @property
    def channels(self):
        return self.p2.shape[0]

    @classmethod
    def random(cls, channels, h2, w2=None, seed=0):
        w2 = h2 if w2 is None else w2
        if h2 % 8 or w2 % 8:
            raise ShapeError("P2 height and width must be divisible by 8")
        rng = np.random.default_rng(seed)
        return cls(*(rng.standard_normal((channels, h2 >> s, w2 >> s)) for s in range(4)))

    @classmethod
    def constant(cls, channels, h2, value, w2=None):
        w2 = h2 if w2 is None else w2
        return cls(*(np.full((channels, h2 >> s, w2 >> s), float(value)) for s in range(4)))


@dataclass(frozen=True)
class ExpertBank:
    boxes: np.ndarray  # (N_e, N_p, 4) cxcywh
    features: np.ndarray  # (N_e, N_p, C)

    def __post_init__(self):
        if self.boxes.ndim != 3 or self.boxes.shape[2] != 4:
            raise ShapeError(f"expert boxes must be (N_e, N_p, 4), got {self.boxes.shape}")
        if self.features.ndim != 3 or self.features.shape[:2] != self.boxes.shape[:2]:
            raise ShapeError(
                f"expert features {self.features.shape} do not match boxes {self.boxes.shape}"
            )
        if np.any(self.boxes[..., 2:] < 0):
            raise ValueError("expert boxes need non-negative width and height")

    @property
    def num_experts(self):
        return self.boxes.shape[0]

    @property
    def num_proposals(self):
        return self.boxes.shape[1]

    @classmethod
    def random(cls, num_experts=4, num_proposals=300, channels=256, seed=0):
        rng = np.random.default_rng(seed)
        wh = rng.uniform(0.05, 0.5, size=(num_experts, num_proposals, 2))
        centre = rng.uniform(wh / 2, 1.0 - wh / 2)
        boxes = np.concatenate([centre, wh], axis=-1)
        feats = rng.standard_normal((num_experts, num_proposals, channels))
        return cls(boxes, feats)


@dataclass(frozen=True)
class StaircaseParams:
    dw2: np.ndarray  # (C, 3, 3)
    dw3: np.ndarray  # (2C, 3, 3)
    dw4: np.ndarray  # (3C, 3, 3)
    fc1: np.ndarray  # (S*S, D_h)
    fc2: np.ndarray  # (D_h, N_e * N_p)
    num_experts: int
    tau: float = 1.0
    weight_mode: str = "per_proposal"

    def __post_init__(self):
        c = self.dw2.shape[0]
        for name, mult in (("dw2", 1), ("dw3", 2), ("dw4", 3)):
            arr = getattr(self, name)
            if arr.shape != (mult * c, 3, 3):
                raise ShapeError(f"{name} must be ({mult * c}, 3, 3), got {arr.shape}")
        s2 = self.fc1.shape[0]
        s = int(round(np.sqrt(s2)))
        if self.fc1.ndim != 2 or s * s != s2:
            raise ShapeError(f"fc1 must be (S*S, D_h), got {self.fc1.shape}")
        if self.fc2.ndim != 2 or self.fc2.shape[0] != self.fc1.shape[1]:
            raise ShapeError(f"fc2 must be ({self.fc1.shape[1]}, N_e*N_p), got {self.fc2.shape}")
        if self.num_experts < 1 or self.fc2.shape[1] % self.num_experts:
            raise ShapeError(f"fc2 width {self.fc2.shape[1]} is not a multiple of N_e={self.num_experts}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")

    @property
    def channels(self):
        return self.dw2.shape[0]

    @property
    def size(self):
        return int(round(np.sqrt(self.fc1.shape[0])))

    @property
    def num_proposals(self):
        return self.fc2.shape[1] // self.num_experts

    @classmethod
    def random(cls, channels=256, num_experts=4, num_proposals=300, size=30, hidden=1500,
               tau=1.0, seed=0, weight_mode="per_proposal"):
        """Xavier-uniform dense layers and depthwise kernels."""
        rng = np.random.default_rng(seed)

        def xavier(shape, fan_in, fan_out):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape)

        c = channels
        return cls(
            dw2=xavier((c, 3, 3), 9, 9),
            dw3=xavier((2 * c, 3, 3), 9, 9),
            dw4=xavier((3 * c, 3, 3), 9, 9),
            fc1=xavier((size * size, hidden), size * size, hidden),
            fc2=xavier((hidden, num_experts * num_proposals), hidden, num_experts * num_proposals),
            num_experts=num_experts,
            tau=tau,
            weight_mode=weight_mode,
        )

    def with_tau(self, tau):
        return StaircaseParams(self.dw2, self.dw3, self.dw4, self.fc1, self.fc2,
                               self.num_experts, tau, self.weight_mode)


def depthwise_conv3x3_s2(x, kernel):
    """Per-channel 3x3 convolution, stride 2, edge-replicated border of one pixel."""
    c, h, w = x.shape
    if kernel.shape != (c, 3, 3):
        raise ShapeError(f"kernel {kernel.shape} does not fit input with {c} channels")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="edge")
    ho, wo = (h + 1) // 2, (w + 1) // 2
    out = np.zeros((c, ho, wo))
    for di in range(3):
        for dj in range(3):
            out += kernel[:, di, dj, None, None] * xp[:, di:di + 2 * ho:2, dj:dj + 2 * wo:2]
    return out


def _bilinear_matrix(n_in, n_out):
    """Half-pixel-centre linear interpolation weights, shape (n_out, n_in)."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    mat = np.zeros((n_out, n_in))
    mat[np.arange(n_out), lo] += 1.0 - frac
    mat[np.arange(n_out), hi] += frac
    return mat


def resize_bilinear(x, size):
    """Resize a (C, H, W) map to (C, size, size)."""
    _, h, w = x.shape
    rh = _bilinear_matrix(h, size)
    rw = _bilinear_matrix(w, size)
    return np.einsum("sh,chw,tw->cst", rh, x, rw)


def staircase_maps(pyr: FeaturePyramid, p: StaircaseParams):
    """The three concatenated stair maps: 2C at P3, 3C at P4, 4C at P5 resolution."""
    if pyr.channels != p.channels:
        raise ShapeError(f"pyramid has {pyr.channels} channels, params expect {p.channels}")
    maps = []
    out = pyr.p2
    for name, level, kernel in (("P3", pyr.p3, p.dw2), ("P4", pyr.p4, p.dw3), ("P5", pyr.p5, p.dw4)):
        out = depthwise_conv3x3_s2(out, kernel)
        if out.shape[1:] != level.shape[1:]:
            raise ShapeError(f"stair output {out.shape[1:]} does not match {name} {level.shape[1:]}")
        out = np.concatenate([level, out], axis=0)
        maps.append(out)
    return maps


def staircase_forward(pyr: FeaturePyramid, p: StaircaseParams):
    """Fold the pyramid into a flat S*S vector."""
    top = staircase_maps(pyr, p)[-1]
    return resize_bilinear(top, p.size).sum(axis=0).reshape(-1)


def softmax(logits, tau=1.0, axis=-1):
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def weight_head_forward(flat, p: StaircaseParams):
    """Expert weights of shape (N_p, N_e); each row is on the simplex."""
    flat = np.asarray(flat, dtype=np.float64).reshape(-1)
    if flat.shape[0] != p.fc1.shape[0]:
        raise ShapeError(f"flat input has {flat.shape[0]} entries, fc1 expects {p.fc1.shape[0]}")
    hidden = np.maximum(flat @ p.fc1, 0.0)
    logits = (hidden @ p.fc2).reshape(p.num_proposals, p.num_experts)
    if p.weight_mode == "per_expert":
        w = softmax(logits.mean(axis=0), p.tau)
        return np.broadcast_to(w, logits.shape).copy()
    return softmax(logits, p.tau, axis=1)


def mix_proposals(bank: ExpertBank, weights):
    """Convex combination of experts per proposal: boxes (N_p, 4), features (N_p, C)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (bank.num_proposals, bank.num_experts):
        raise ShapeError(
            f"weights {weights.shape} do not match bank ({bank.num_proposals}, {bank.num_experts})"
        )
    boxes = np.einsum("pe,epd->pd", weights, bank.boxes)
    feats = np.einsum("pe,epc->pc", weights, bank.features)
    return boxes, feats


def generate_dynamic_proposals(pyr: FeaturePyramid, bank: ExpertBank, p: StaircaseParams):
    """Returns ``(boxes_cxcywh, features, weights)``."""
    weights = weight_head_forward(staircase_forward(pyr, p), p)
    boxes, feats = mix_proposals(bank, weights)
    return boxes, feats, weights


def proposals_xyxy(boxes_cxcywh):
    return cxcywh_to_xyxy(boxes_cxcywh)


def weight_stats(weights):
    """Per-row entropy and max weight, summarised."""
    w = np.asarray(weights)
    ent = -np.sum(np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0), axis=1)
    mx = w.max(axis=1)
    return {
        "mean_entropy": float(ent.mean()),
        "mean_max_weight": float(mx.mean()),
        "min_max_weight": float(mx.min()),
        "max_max_weight": float(mx.max()),
    }


def _pack(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}


def _unpack(obj, name, expected=None):
    try:
        shape = tuple(int(v) for v in obj["shape"])
        data = np.asarray(obj["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeError(f"tensor {name!r} is malformed: {exc}") from exc
    if int(np.prod(shape)) != data.size:
        raise ShapeError(f"tensor {name!r}: header {shape} but {data.size} values")
    if expected is not None and shape != tuple(expected):
        raise ShapeError(f"tensor {name!r}: expected shape {tuple(expected)}, got {shape}")
    return data.reshape(shape)


def save_params(path, p: StaircaseParams, bank: ExpertBank):
    doc = {name: _pack(getattr(p, name)) for name in _TENSORS}
    doc["boxes"] = _pack(bank.boxes)
    doc["features"] = _pack(bank.features)
    doc["tau"] = p.tau
    doc["num_experts"] = p.num_experts
    doc["weight_mode"] = p.weight_mode
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path, channels=None, num_experts=None, num_proposals=None, size=None, hidden=None):
    """Read a parameter file, checking every tensor shape before use.

    Dimensions passed as keywords are enforced; the rest are inferred from
    the file and checked for mutual consistency.
    """
    with open(path) as fh:
        doc = json.load(fh)
    missing = [k for k in _TENSORS + ("boxes", "features") if k not in doc]
    if missing:
        raise ShapeError(f"parameter file lacks tensors {missing}")
    boxes = _unpack(doc["boxes"], "boxes")
    if boxes.ndim != 3 or boxes.shape[2] != 4:
        raise ShapeError(f"tensor 'boxes': expected (N_e, N_p, 4), got {boxes.shape}")
    n_e, n_p = boxes.shape[:2]
    if num_experts is not None and n_e != num_experts:
        raise ShapeError(f"tensor 'boxes': expected {num_experts} experts, got {n_e}")
    if num_proposals is not None and n_p != num_proposals:
        raise ShapeError(f"tensor 'boxes': expected {num_proposals} proposals, got {n_p}")
    dw2 = _unpack(doc["dw2"], "dw2")
    c = dw2.shape[0] if channels is None else channels
    dw2 = _unpack(doc["dw2"], "dw2", (c, 3, 3))
    dw3 = _unpack(doc["dw3"], "dw3", (2 * c, 3, 3))
    dw4 = _unpack(doc["dw4"], "dw4", (3 * c, 3, 3))
    fc1 = _unpack(doc["fc1"], "fc1")
    if fc1.ndim != 2:
        raise ShapeError(f"tensor 'fc1': expected 2-D, got {fc1.shape}")
    s2, d_h = fc1.shape
    if size is not None and s2 != size * size:
        raise ShapeError(f"tensor 'fc1': expected ({size * size}, D_h), got {fc1.shape}")
    if hidden is not None and d_h != hidden:
        raise ShapeError(f"tensor 'fc1': expected (S*S, {hidden}), got {fc1.shape}")
    fc2 = _unpack(doc["fc2"], "fc2", (d_h, n_e * n_p))
    features = _unpack(doc["features"], "features")
    if features.ndim != 3 or features.shape[:2] != (n_e, n_p):
        raise ShapeError(f"tensor 'features': expected ({n_e}, {n_p}, C), got {features.shape}")
    params = StaircaseParams(dw2, dw3, dw4, fc1, fc2, n_e,
                             float(doc.get("tau", 1.0)), doc.get("weight_mode", "per_proposal"))
    return params, ExpertBank(boxes, features)
