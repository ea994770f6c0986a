"""FastAPI application exposing the caption-generator pipeline.

Endpoints are synchronous wrappers over :mod:`caprnn.pipeline`; training a
full-scale grid through HTTP is possible but meant for desk-scale corpora.
Checkpoints requested via /caption are cached per (path, mtime).
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline, report
from ..captioner import CaptionModel, ModelConfig, count_params, load_checkpoint
from ..errors import CaprnnError, UsageError
from ..training import manifest_path, read_manifest
from . import schemas


class _CheckpointCache:
    def __init__(self, capacity: int = 4):
        self.capacity = capacity
        self._cache: dict = {}

    def get(self, path) -> CaptionModel:
        path = Path(path)
        key = (str(path), path.stat().st_mtime_ns)
        if key not in self._cache:
            if len(self._cache) >= self.capacity:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = load_checkpoint(path)
        return self._cache[key]


def create_app() -> FastAPI:
    app = FastAPI(
        title="caprnn",
        version=__version__,
        description="Train, decode, and evaluate inject/merge LSTM caption generators.",
    )
    checkpoints = _CheckpointCache()

    @app.exception_handler(CaprnnError)
    async def caprnn_error(request: Request, exc: CaprnnError):
        return JSONResponse(status_code=400,
                            content={"detail": str(exc), "kind": type(exc).__name__})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/prep", response_model=schemas.PrepResponse)
    def prep(req: schemas.PrepRequest):
        return pipeline.prep(req.dataset_dir, req.out_dir, tuple(req.thresholds))

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        return pipeline.synth_dataset(req.out_dir, n_images=req.images,
                                      vocab_size=req.vocab_size, seed=req.seed,
                                      feature_dim=req.feature_dim)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        results = pipeline.train_runs(
            req.dataset_dir, req.out_dir, req.arch, req.layer, req.min_freq, req.seeds,
            precision=req.precision, max_epochs=req.max_epochs, batch_size=req.batch_size,
            learning_rate=req.learning_rate, early_stopping=req.early_stopping)
        rows = [schemas.RunRow(seed=r.seed, best_val_loss=r.best_val_loss, epochs=r.epochs,
                               checkpoint_path=str(r.checkpoint_path)) for r in results]
        return schemas.TrainResponse(manifest_path=str(manifest_path(req.out_dir)), runs=rows)

    @app.post("/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest):
        return pipeline.generate(req.checkpoint, req.dataset_dir, req.out_path,
                                 split=req.split, width=req.beam, max_len=req.max_len)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        result = pipeline.evaluate_hypotheses(req.hyp_path, req.dataset_dir,
                                              min_freq=req.min_freq, split=req.split,
                                              out_path=req.out_path)
        return schemas.EvaluateResponse(report=schemas.MetricsModel(**result.as_dict()),
                                        out_path=req.out_path)

    @app.post("/grid", response_model=schemas.GridResponse)
    def grid(req: schemas.GridRequest):
        cells = pipeline.run_grid(
            req.dataset_dir, req.out_dir, archs=tuple(req.archs), layers=tuple(req.layers),
            min_freqs=tuple(req.min_freqs), seeds=tuple(req.seeds), width=req.beam,
            max_len=req.max_len, precision=req.precision, max_epochs=req.max_epochs,
            batch_size=req.batch_size, learning_rate=req.learning_rate,
            early_stopping=req.early_stopping)
        return schemas.GridResponse(out_dir=req.out_dir, cells=cells)

    @app.post("/report", response_model=schemas.ReportResponse)
    def render_report(req: schemas.ReportRequest):
        return report.write_report(req.grid_dir, req.out_dir)

    @app.post("/count-params", response_model=schemas.CountParamsResponse)
    def params(req: schemas.CountParamsRequest):
        config = ModelConfig(architecture=req.arch, layer_size=req.layer,
                             vocab_size=req.vocab_size, image_dim=req.image_dim)
        return count_params(config)

    @app.post("/caption", response_model=schemas.CaptionResponse)
    def caption(req: schemas.CaptionRequest):
        model = checkpoints.get(req.checkpoint)
        vocab = None
        if req.dataset_dir is not None:
            vocab = pipeline.load_vocab(req.dataset_dir, model.config.min_freq)
        if req.feature is not None:
            feature = req.feature
        elif req.dataset_dir is not None and req.image_id is not None:
            split = pipeline.load_split(req.dataset_dir)
            entries = {e.image_id: e for part in (split.train, split.val, split.test)
                       for e in part}
            if req.image_id not in entries:
                raise UsageError(f"image {req.image_id} not found in {req.dataset_dir}")
            feature = entries[req.image_id].feature
        else:
            raise UsageError("caption needs either a feature vector or dataset_dir + image_id")
        result = pipeline.caption_feature(req.checkpoint, feature, width=req.beam,
                                          max_len=req.max_len, vocab=vocab, model=model)
        return schemas.CaptionResponse(**result)

    return app
