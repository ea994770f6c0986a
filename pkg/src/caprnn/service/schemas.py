"""Pydantic models validating the service's request and response bodies."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

Architecture = Literal["inject", "merge"]


class HealthResponse(BaseModel):
    status: str
    version: str


class PrepRequest(BaseModel):
    dataset_dir: str = Field(..., description="Directory with captions.json and features.bin")
    out_dir: str = Field(..., description="Directory to write the prepared dataset into")
    thresholds: list[int] = [3, 4, 5]


class PrepResponse(BaseModel):
    out_dir: str
    vocab_sizes: dict[int, int]
    splits: dict[str, int]


class SynthRequest(BaseModel):
    out_dir: str
    images: int = 8
    vocab_size: int = 20
    seed: int = 0
    feature_dim: int = 8


class SynthResponse(BaseModel):
    out_dir: str
    images: int
    captions: int
    feature_dim: int


class TrainRequest(BaseModel):
    dataset_dir: str
    out_dir: str
    arch: Architecture = "merge"
    layer: int = 256
    min_freq: int = 3
    seeds: list[int] = [1, 2, 3]
    precision: Literal[32, 64] = 32
    max_epochs: int = 100
    batch_size: int = 50
    learning_rate: float = 0.001
    early_stopping: bool = True


class RunRow(BaseModel):
    seed: int
    best_val_loss: float
    epochs: int
    checkpoint_path: str


class TrainResponse(BaseModel):
    manifest_path: str
    runs: list[RunRow]


class GenerateRequest(BaseModel):
    checkpoint: str
    dataset_dir: str
    out_path: str
    split: str = "test"
    beam: int = 3
    max_len: int = 20


class GenerateResponse(BaseModel):
    out_path: str
    count: int


class MetricsModel(BaseModel):
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    cider: float
    vocab_usage_percent: float


class EvaluateRequest(BaseModel):
    hyp_path: str
    dataset_dir: str
    split: str = "test"
    min_freq: int = 3
    out_path: Optional[str] = None


class EvaluateResponse(BaseModel):
    report: MetricsModel
    out_path: Optional[str] = None


class GridRequest(BaseModel):
    dataset_dir: str
    out_dir: str
    archs: list[Architecture] = ["merge", "inject"]
    layers: list[int] = [128, 256, 512]
    min_freqs: list[int] = [3, 4, 5]
    seeds: list[int] = [1, 2, 3]
    beam: int = 3
    max_len: int = 20
    precision: Literal[32, 64] = 32
    max_epochs: int = 100
    batch_size: int = 50
    learning_rate: float = 0.001
    early_stopping: bool = True


class GridCell(BaseModel):
    arch: str
    layer: int
    min_freq: int
    vocab_size: int
    seeds: list[int]
    metric_files: list[str]


class GridResponse(BaseModel):
    out_dir: str
    cells: list[GridCell]


class ReportRequest(BaseModel):
    grid_dir: str
    out_dir: str


class ReportResponse(BaseModel):
    text_path: str
    csv_path: str
    text: str


class CountParamsRequest(BaseModel):
    arch: Architecture
    layer: int
    vocab_size: int
    image_dim: int = 4096


class CountParamsResponse(BaseModel):
    embedding: int
    image_proj: int
    lstm: int
    output: int
    total: int


class CaptionRequest(BaseModel):
    checkpoint: str
    feature: Optional[list[float]] = Field(None, description="Raw image feature vector")
    dataset_dir: Optional[str] = Field(None, description="Dataset holding the feature/vocab")
    image_id: Optional[str] = Field(None, description="Image whose stored feature to caption")
    beam: int = 3
    max_len: int = 20


class CaptionResponse(BaseModel):
    tokens: list[int]
    words: Optional[list[str]] = None
    logprob: float
