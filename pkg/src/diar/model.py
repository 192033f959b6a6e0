"""Full diarization model: encoder plus one attractor module, with the
training forward pass (including the existence-gradient cut) and inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .autodiff import Tensor, no_grad
from .eda import AttractorSet, EdaAttractors
from .encoder import ConformerEncoder, EncoderConfig
from .errors import ConfigError, InputError
from .nn import Dropout, Module
from .ta import TaConfig, TransformerAttractors, combine
from .ta import infer_count as ta_infer_count

ATTRACTOR_KINDS = ("eda", "eda_csv", "ta")


@dataclass
class TrainStepOutput:
    posteriors: Tensor  # T x S'
    existence: Tensor  # (S'+1) x 1, gradient-cut at the attractor input
    diar_loss: Tensor
    exist_loss: Tensor
    total: Tensor
    best_permutation: tuple[int, ...]


class DiarizationModel(Module):
    """Encoder + attractor module behind a single train/infer interface."""

    def __init__(
        self,
        attractor: str,
        encoder_cfg: EncoderConfig,
        ta_cfg: TaConfig | None = None,
        seed: int = 0,
        eda_hard_cap: int = 20,
    ):
        super().__init__()
        if attractor not in ATTRACTOR_KINDS:
            raise ConfigError(f"unknown attractor {attractor!r}; expected one of {ATTRACTOR_KINDS}")
        if attractor == "eda_csv" and not encoder_cfg.use_csv_token:
            raise ConfigError("attractor 'eda_csv' requires encoder.use_csv_token = true")
        if attractor == "ta":
            ta_cfg = ta_cfg or TaConfig()
            if ta_cfg.combiner.needs_csv and not encoder_cfg.use_csv_token:
                raise ConfigError(
                    f"combiner {ta_cfg.combiner.variant!r} requires encoder.use_csv_token = true"
                )
        self.kind = attractor
        rng = np.random.default_rng(seed)
        self.encoder = ConformerEncoder(encoder_cfg, rng)
        if attractor == "ta":
            self.ta_cfg = ta_cfg
            self.attractor_module = TransformerAttractors(encoder_cfg.model_dim, ta_cfg, rng)
        else:
            self.ta_cfg = None
            self.attractor_module = EdaAttractors(encoder_cfg.model_dim, rng, hard_cap=eda_hard_cap)
        self._rng = np.random.default_rng(seed + 1)

    # -- helpers ---------------------------------------------------------------

    @property
    def uses_csv(self) -> bool:
        return self.encoder.cfg.use_csv_token

    @property
    def max_speakers(self) -> int | None:
        return self.ta_cfg.max_speakers if self.kind == "ta" else None

    def decoder_csv(self, emb):
        if self.kind == "eda_csv" or (
            self.kind == "ta" and self.ta_cfg.combiner.needs_csv
        ):
            return emb.csv
        return None

    def _reseed_attractor_dropout(self, seed: int) -> None:
        for module in self.attractor_module.modules():
            if isinstance(module, Dropout):
                module.reseed(seed)

    def _attractors_for_training(
        self, embeddings: Tensor, csv: Tensor | None, num_speakers: int, perm: np.ndarray
    ) -> AttractorSet:
        if self.kind == "ta":
            return self.attractor_module.decode(
                combine(csv, self.attractor_module.global_embeddings, self.ta_cfg.combiner),
                embeddings,
            )
        state = self.attractor_module.encode(embeddings, permutation=perm)
        return self.attractor_module.decode(state, num_speakers + 1, csv=csv)

    # -- training forward --------------------------------------------------------

    def forward_train(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        lambda_exist: float = 1.0,
        frame_mask: np.ndarray | None = None,
        cut_exist_grad: bool = True,
        pit_method: str = "exhaustive",
    ) -> TrainStepOutput:
        """One training forward pass returning losses ready for backward().

        The existence loss is computed from a second attractor pass whose
        embedding input is detached, so its gradient reaches the attractor
        module and existence head but never the encoder ("gradient cut").
        Identical dropout seeds keep the two passes numerically equal.
        Set ``cut_exist_grad=False`` to get the plain joint gradient
        (used by finite-difference verification).
        """
        labels = np.asarray(labels)
        num_speakers = labels.shape[1]
        if self.kind == "ta" and num_speakers > self.ta_cfg.max_speakers:
            raise InputError(
                f"{num_speakers} speakers exceeds the model cap {self.ta_cfg.max_speakers}"
            )
        emb = self.encoder(Tensor(features))
        if labels.shape[0] != emb.embeddings.shape[1]:
            raise InputError(
                f"labels cover {labels.shape[0]} frames but encoder produced "
                f"{emb.embeddings.shape[1]}"
            )
        csv = self.decoder_csv(emb)
        perm = None
        if self.kind != "ta":
            perm = self._rng.permutation(emb.embeddings.shape[1])

        dropout_seed = int(self._rng.integers(2**31))
        self._reseed_attractor_dropout(dropout_seed)
        full = self._attractors_for_training(emb.embeddings, csv, num_speakers, perm)

        if cut_exist_grad:
            self._reseed_attractor_dropout(dropout_seed)
            detached = self._attractors_for_training(
                emb.embeddings.detach(),
                csv.detach() if csv is not None else None,
                num_speakers,
                perm,
            )
            existence = detached.existence[: num_speakers + 1, :]
        else:
            existence = full.existence[: num_speakers + 1, :]

        p = losses.posteriors(full.attractors[:, :num_speakers], emb.embeddings)
        diar, best_perm = losses.pit_loss(p, labels, frame_mask=frame_mask, method=pit_method)
        exist = losses.exist_loss(existence, num_speakers)
        total = losses.total_loss(diar, exist, lambda_exist)
        return TrainStepOutput(
            posteriors=p,
            existence=existence,
            diar_loss=diar,
            exist_loss=exist,
            total=total,
            best_permutation=best_perm,
        )

    # -- inference -----------------------------------------------------------------

    def infer(
        self,
        features: np.ndarray,
        diar_threshold: float = 0.5,
        exist_threshold: float = 0.5,
    ) -> tuple[np.ndarray, int, np.ndarray]:
        """Binary activity labels (T x S_hat), speaker count, and posteriors."""
        from .scoring import binarize_array

        with no_grad():
            was_training = self.training
            self.eval()
            emb = self.encoder(Tensor(features))
            csv = self.decoder_csv(emb)
            if self.kind == "ta":
                attractor_set = self.attractor_module.forward(emb.embeddings, csv)
                count, kept = ta_infer_count(attractor_set, exist_threshold)
            else:
                state = self.attractor_module.encode(emb.embeddings, shuffle=False)
                kept = self.attractor_module.infer_count(state, csv=csv, q_threshold=exist_threshold)
                count = kept.count
            if count == 0:
                num_frames = emb.embeddings.shape[1]
                posterior = np.zeros((num_frames, 0))
            else:
                posterior = losses.posteriors(kept.attractors, emb.embeddings).data
            if was_training:
                self.train()
        return binarize_array(posterior, diar_threshold), count, posterior

    # -- reporting -------------------------------------------------------------------

    def params_report(self) -> dict[str, int]:
        report = {
            "encoder": self.encoder.num_params(),
            "attractor_module": self.attractor_module.num_params(),
        }
        report["total"] = sum(report.values())
        return report
