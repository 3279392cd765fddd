"""TOML configuration: candidate sets, encoder settings, endpoints, seeds.

Every CLI entry point accepts ``--config path.toml``; anything omitted
falls back to the desk-scale defaults baked into the dataclasses, so a
config file is only needed to deviate. ``lambda`` (the MSE weight in the
joint loss) defaults to 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from sdcc.bridge import BridgeClientConfig
from sdcc.drs import LengthCandidates, RatioCandidates
from sdcc.encoder import EncoderConfig
from sdcc.pipeline import PipelineConfig
from sdcc.synthesis import TeacherEndpoint


@dataclass
class ToolkitConfig:
    raw: dict = field(default_factory=dict)

    def encoder_config(self) -> EncoderConfig:
        section = self.raw.get("encoder", {})
        return EncoderConfig(
            d=section.get("d", 32),
            layers=section.get("layers", 2),
            attention_mode=section.get("attention_mode", "causal"),
            mix_window=section.get("mix_window", 4),
            seed=section.get("seed", 0),
        )

    def ratio_candidates(self) -> RatioCandidates:
        factors = self.raw.get("drs", {}).get("ratio_candidates")
        if factors is None:
            return RatioCandidates.default()
        return RatioCandidates(tuple(sorted(float(f) for f in factors)))

    def length_candidates(self) -> LengthCandidates:
        counts = self.raw.get("drs", {}).get("length_candidates")
        if counts is None:
            return LengthCandidates.default()
        return LengthCandidates(tuple(sorted(int(c) for c in counts)))

    def loss_weight(self) -> float:
        return float(self.raw.get("density", {}).get("lambda", 1.0))

    def pipeline_config(self, backbone: str | None = None, mode: str | None = None) -> PipelineConfig:
        section = self.raw.get("pipeline", {})
        chosen_backbone = backbone or section.get("backbone", "mean_pooling")
        default_mode = "ratio" if chosen_backbone == "mean_pooling" else "length"
        return PipelineConfig(
            encoder=self.encoder_config(),
            backbone=chosen_backbone,
            mode=mode or section.get("mode", default_mode),
            ratio_candidates=self.ratio_candidates(),
            length_candidates=self.length_candidates(),
            projector_hidden=section.get("projector_hidden", 64),
            d_dec=section.get("d_dec", 48),
            seed=section.get("seed", 0),
            ratio_randomization=section.get("ratio_randomization", False),
            randomization_seed=section.get("randomization_seed", 0),
        )

    def endpoint(self, name: str = "default") -> TeacherEndpoint:
        endpoints = self.raw.get("endpoint", {})
        if name not in endpoints:
            raise KeyError(f"no [endpoint.{name}] section in the config file")
        section = endpoints[name]
        return TeacherEndpoint(
            base_url=section["base_url"],
            model_name=section["model_name"],
            auth_token_env_var=section.get("auth_token_env_var", "SDCC_TEACHER_TOKEN"),
            max_retries=section.get("max_retries", 2),
            request_timeout=section.get("request_timeout", 30.0),
            max_concurrent=section.get("max_concurrent", 4),
        )

    def bridge_config(self) -> BridgeClientConfig:
        section = self.raw.get("bridge", {})
        return BridgeClientConfig(
            base_url=section.get("base_url", "http://127.0.0.1:8631"),
            timeout=section.get("timeout", 30.0),
        )

    def sweep_scales(self) -> str:
        return self.raw.get("sweep", {}).get("scales", "-2..4:0.5")

    def seed(self) -> int:
        return int(self.raw.get("seed", 0))


def load_config(path: str | Path | None) -> ToolkitConfig:
    if path is None:
        return ToolkitConfig()
    with Path(path).open("rb") as fh:
        return ToolkitConfig(tomllib.load(fh))
