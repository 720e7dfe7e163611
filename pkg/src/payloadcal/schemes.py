"""The four calibration strategies and their shared protocol.

Base model (load-free current prediction), online fine-tuning of it,
payload-specific model bank with MSE selection, and the payload-adaptive
model conditioned on a payload-indicator vector measured from the 4-second
calibration trajectory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import mlp
from .mlp import MlpModel, TrainConfig
from .robot import N_JOINTS, PayloadSpec
from .signals import FEATURE_DIM, Dataset

PI_DIM = 2 * N_JOINTS
PI_NOISE_VARIANCE = 0.25     # augmentation noise on the PI during training
CALIB_FRAMES = 400           # frames in one processed calibration log


class SchemeError(ValueError):
    pass


@dataclass
class PiVector:
    """Payload indicator: per-joint mean residuals over the two halves of
    the calibration trajectory."""

    x: np.ndarray
    payload_id: str = "unknown"
    noise_variance: float = PI_NOISE_VARIANCE

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.shape != (PI_DIM,):
            raise SchemeError(f"PI vector must have {PI_DIM} entries")
        if not np.all(np.isfinite(x)):
            raise SchemeError("PI vector must be finite")
        self.x = x


@dataclass
class ModelBank:
    """Payload-specific residual models keyed by their payload."""

    payloads: list              # list[PayloadSpec]
    models: list                # list[MlpModel]
    payload_ids: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.payloads) != len(self.models):
            raise SchemeError("bank payloads and models must align")
        if not self.payload_ids:
            self.payload_ids = [f"payload_{i:02d}" for i in range(len(self.models))]
        tags = {m.tag for m in self.models}
        widths = {m.sizes[0] for m in self.models}
        if len(self.models) and (len(tags) != 1 or len(widths) != 1):
            raise SchemeError("bank models must share architecture and input width")

    def __len__(self):
        return len(self.models)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for pid, payload, model in zip(self.payload_ids, self.payloads, self.models):
            fname = f"pspm_{pid}.mlp"
            mlp.save_model(model, directory / fname)
            entries.append(
                {"payload_id": pid, "model_file": fname, "payload": payload.p.tolist()}
            )
        with open(directory / "bank.yaml", "w") as f:
            yaml.safe_dump({"schema_version": 1, "models": entries}, f, sort_keys=False)

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        with open(directory / "bank.yaml") as f:
            doc = yaml.safe_load(f)
        payloads, models, ids = [], [], []
        for entry in doc["models"]:
            payloads.append(PayloadSpec(np.asarray(entry["payload"])))
            models.append(mlp.load_model(directory / entry["model_file"], expect_tag=mlp.TAG_CALIB))
            ids.append(entry["payload_id"])
        return cls(payloads, models, ids)


@dataclass
class CalibrationOutcome:
    scheme: str                      # model-based | olm | pspm | papm
    wall_time_s: float
    calib_mse: np.ndarray            # per-joint MSE on the calibration data
    payload: PayloadSpec | None = None
    model: MlpModel | None = None
    selected_index: int | None = None
    pi: PiVector | None = None

    def __post_init__(self):
        artifacts = {
            "model-based": self.payload,
            "olm": self.model,
            "pspm": self.selected_index,
            "papm": self.pi,
        }
        if self.scheme not in artifacts:
            raise SchemeError(f"unknown scheme {self.scheme!r}")
        if artifacts[self.scheme] is None:
            raise SchemeError(f"scheme {self.scheme!r} is missing its artifact")

    def summary(self):
        lines = [
            f"scheme: {self.scheme}",
            f"wall_time_s: {self.wall_time_s:.6f}",
            "calib_mse: [" + ", ".join(f"{v:.6f}" for v in self.calib_mse) + "]",
        ]
        if self.scheme == "model-based":
            lines.append("payload: [" + ", ".join(f"{v:.9g}" for v in self.payload.p) + "]")
        if self.scheme == "pspm":
            lines.append(f"selected_index: {self.selected_index}")
        if self.scheme == "papm":
            lines.append("pi: [" + ", ".join(f"{v:.9g}" for v in self.pi.x) + "]")
        return "\n".join(lines) + "\n"


# ---- base model and OLM ------------------------------------------------


def train_base(dataset: Dataset, cfg: TrainConfig, width=128):
    """Load-free base model: features -> joint currents."""
    if dataset.residual_targets:
        raise SchemeError("base model trains on raw current targets")
    model = mlp.base_architecture(dataset.x.shape[1], width=width, seed=cfg.seed)
    mlp.train(model, dataset.x, dataset.y, cfg)
    return model


def olm_finetune(base: MlpModel, calib_dataset: Dataset, cfg: TrainConfig):
    """Full-batch fine-tuning of a copy of the base model on one
    calibration log; returns (model, wall_time_s)."""
    model = base.copy()
    t0 = time.perf_counter()
    full_batch = TrainConfig(
        lr=cfg.lr,
        batch_size=max(len(calib_dataset), 1),
        dropout=cfg.dropout,
        epochs=cfg.epochs,
        seed=cfg.seed,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        adam_eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )
    if cfg.epochs > 0:
        # keep the base model's normalization so the fine-tune stays a
        # perturbation of the pre-trained weights
        xn = (calib_dataset.x - model.x_mean) / model.x_std
        yn = (calib_dataset.y - model.y_mean) / model.y_std
        trainer = mlp.Trainer(model, full_batch)
        for _ in range(cfg.epochs):
            trainer.run_epoch(xn, yn)
    return model, time.perf_counter() - t0


# ---- PsPM --------------------------------------------------------------


def train_pspm(dataset: Dataset, cfg: TrainConfig, width=128):
    """Payload-specific residual model on one payload's dataset."""
    if not dataset.residual_targets:
        raise SchemeError("PsPM trains on residual targets")
    model = mlp.calib_architecture(dataset.x.shape[1], width=width, seed=cfg.seed)
    mlp.train(model, dataset.x, dataset.y, cfg)
    return model


def residual_mse(r_mea, r_est):
    """Scalar selection error: mean over frames of the per-frame squared
    residual-error norm."""
    d = np.asarray(r_mea) - np.asarray(r_est)
    return float(np.mean(np.sum(d * d, axis=1)))


def pspm_select(bank: ModelBank, calib_x, r_mea):
    """Pick the bank model with minimal MSE on the calibration frames.

    Ties break toward the lowest model index; evaluation order is fixed so
    the selection is deterministic.
    """
    if len(bank) == 0:
        raise SchemeError("empty model bank")
    t0 = time.perf_counter()
    scores = np.empty(len(bank))
    for i, model in enumerate(bank.models):
        scores[i] = residual_mse(r_mea, model.predict(calib_x))
    selected = int(np.argmin(scores))
    wall = time.perf_counter() - t0
    r_sel = bank.models[selected].predict(calib_x)
    per_joint = np.mean((np.asarray(r_mea) - r_sel) ** 2, axis=0)
    return CalibrationOutcome(
        scheme="pspm",
        wall_time_s=wall,
        calib_mse=per_joint,
        selected_index=selected,
    ), scores


# ---- PaPM --------------------------------------------------------------


def compute_pi(r_mea, payload_id="unknown"):
    """Payload indicator from the residuals of one 400-frame calibration
    log: per-joint means over the first and second halves."""
    r = np.asarray(r_mea, dtype=float)
    if r.shape != (CALIB_FRAMES, N_JOINTS):
        raise SchemeError(
            f"calibration residuals must be ({CALIB_FRAMES}, {N_JOINTS}), got {r.shape}"
        )
    half = CALIB_FRAMES // 2
    x = np.concatenate([r[:half].mean(axis=0), r[half:].mean(axis=0)])
    return PiVector(x, payload_id=payload_id)


def papm_training_set(datasets, pis):
    """Stack per-payload datasets, recording which rows belong to which PI."""
    if len(datasets) < 2:
        raise SchemeError("PaPM needs at least 2 payload datasets")
    if len(datasets) != len(pis):
        raise SchemeError("one PI per payload dataset required")
    xs, ys, spans = [], [], []
    offset = 0
    for ds, pi in zip(datasets, pis):
        if not ds.residual_targets:
            raise SchemeError("PaPM trains on residual targets")
        xs.append(ds.x)
        ys.append(ds.y)
        spans.append((offset, offset + len(ds), pi.x))
        offset += len(ds)
    return np.vstack(xs), np.vstack(ys), spans


def train_papm(datasets, pis, cfg: TrainConfig, width=128, noise_variance=PI_NOISE_VARIANCE):
    """Single residual model on [features || PI + noise] inputs.

    The PI columns are re-noised every epoch for every sample, which keeps
    the model tolerant of measurement scatter in online PI evaluations.
    """
    x_feat, y, spans = papm_training_set(datasets, pis)
    n, d = x_feat.shape
    x = np.hstack([x_feat, np.zeros((n, PI_DIM))])
    for lo, hi, pix in spans:
        x[lo:hi, d:] = pix
    model = mlp.calib_architecture(d + PI_DIM, width=width, seed=cfg.seed)
    # normalization stats from the clean PI values
    x_mean, x_std, y_mean, y_std = mlp.normalization_stats(x, y)
    model.set_normalization(x_mean, x_std, y_mean, y_std)
    yn = (y - y_mean) / y_std
    trainer = mlp.Trainer(model, cfg)
    noise_rng = np.random.default_rng(cfg.seed + 1)
    sigma = float(np.sqrt(noise_variance))
    for _ in range(cfg.epochs):
        for lo, hi, pix in spans:
            x[lo:hi, d:] = pix + noise_rng.normal(0.0, sigma, (hi - lo, PI_DIM))
        xn = (x - x_mean) / x_std
        trainer.run_epoch(xn, yn)
    return model


def papm_infer(model: MlpModel, x_feat, pi: PiVector):
    """Residual estimate for feature frames under a fixed payload indicator."""
    x_feat = np.atleast_2d(np.asarray(x_feat, dtype=float))
    if x_feat.shape[1] + PI_DIM != model.sizes[0]:
        raise SchemeError(
            f"feature width {x_feat.shape[1]} incompatible with model input "
            f"{model.sizes[0]}"
        )
    x = np.hstack([x_feat, np.tile(pi.x, (len(x_feat), 1))])
    return model.predict(x)


# ---- shared estimator facade ------------------------------------------


@dataclass
class CalibratedEstimator:
    """Current estimate y_est + r_est for any scheme, on feature frames."""

    base: MlpModel
    scheme: str = "base"
    residual_model: MlpModel | None = None   # pspm or olm replacement
    pi: PiVector | None = None               # papm
    papm_model: MlpModel | None = None
    current_offset_fn: object = None         # model-based torque delta, in %use

    def predict(self, x_feat):
        x_feat = np.atleast_2d(x_feat)
        if self.scheme == "olm" and self.residual_model is not None:
            return self.residual_model.predict(x_feat)
        y = self.base.predict(x_feat)
        if self.scheme == "pspm" and self.residual_model is not None:
            y = y + self.residual_model.predict(x_feat)
        elif self.scheme == "papm":
            y = y + papm_infer(self.papm_model, x_feat, self.pi)
        elif self.scheme == "model-based" and self.current_offset_fn is not None:
            y = y + self.current_offset_fn(x_feat)
        return y
