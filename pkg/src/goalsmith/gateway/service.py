"""JSON-over-HTTP service backing the studio UI.

Binary artifacts (scene renders, goal images, attention heatmaps) are
content-addressed and fetched by id; request bodies are parsed strictly, so
unknown fields are rejected with a 400.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, Response, StreamingResponse
from pydantic import BaseModel, ConfigDict, ValidationError

from .. import scene
from ..diffusion.model import DiffusionModel
from ..editing import (
    GoalDataset,
    edit_from_dict,
    export_attention_grid,
    generate_goal,
)
from ..inversion import InversionConfig, invert, save_inversion, source_hash
from ..rl.train import evaluate_agent, rl_train, save_agent
from ..scene.spec import InputError
from ..scene.trajectory_io import image_to_png, png_to_image
from .config import ProjectConfig, default_config, preset
from .jobs import JobQueue, QueueFull, file_sha256


class EditSpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: str
    source_prompt: str | None = None
    target_prompt: str | None = None
    cross_steps: int | None = None
    self_steps: int | None = None
    prompt: str | None = None
    box: list[float] | None = None
    tokens: list[int] | None = None
    steps: int | None = None
    gain: float | None = None
    strength: float | None = None
    weaken: float | None = None

    def to_edit(self):
        d = {k: v for k, v in self.model_dump().items() if v is not None}
        return edit_from_dict(d)


class InvertRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    image_id: str
    prompt: str


class EditRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    image_id: str
    edit_spec: EditSpecModel


class CommitRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    job_ids: list[str]


class RLRunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dataset: str
    preset: str
    total_steps: int | None = None
    seed: int = 0


class GatewayState:
    def __init__(self, config: ProjectConfig | None = None,
                 model: DiffusionModel | None = None):
        self.config = config or default_config()
        self.root = Path(self.config.data_root)
        (self.root / "store" / "images").mkdir(parents=True, exist_ok=True)
        (self.root / "store" / "attention").mkdir(parents=True, exist_ok=True)
        (self.root / "datasets").mkdir(parents=True, exist_ok=True)
        (self.root / "runs").mkdir(parents=True, exist_ok=True)
        self.jobs = JobQueue(max_pending=self.config.queue_size)
        self._model = model
        self.inversions = {}  # source_hash -> InversionResult
        self.edit_records = {}  # job id -> (goal image id, attention records)
        self.rl_runs = {}  # run id -> job id / metrics path

    @property
    def model(self) -> DiffusionModel:
        if self._model is None:
            base = self.config.checkpoints.get("base")
            if base and Path(base).exists():
                self._model = DiffusionModel.load(base)
            else:
                from ..pipeline import base_checkpoint_path

                path = base_checkpoint_path()
                if path.exists():
                    self._model = DiffusionModel.load(path)
                else:
                    raise HTTPException(503, "no trained checkpoint available")
        return self._model

    def sampler_steps(self) -> int:
        return int(self.config.sampler["steps"])

    def guidance(self) -> float:
        return float(self.config.sampler["guidance"])

    # image store -----------------------------------------------------------
    def put_image(self, image: np.ndarray) -> str:
        tmp = self.root / "store" / "images" / "_tmp.png"
        image_to_png(image, tmp)
        digest = file_sha256(tmp)
        final = self.root / "store" / "images" / f"{digest}.png"
        tmp.replace(final)
        return digest

    def image_path(self, image_id: str) -> Path:
        path = self.root / "store" / "images" / f"{image_id}.png"
        if not path.exists():
            raise HTTPException(404, f"unknown image {image_id}")
        return path

    def get_image(self, image_id: str) -> np.ndarray:
        return png_to_image(self.image_path(image_id))


def create_app(state: GatewayState | None = None) -> FastAPI:
    app = FastAPI(title="goalsmith gateway")
    state = state or GatewayState()
    app.state.gateway = state

    @app.exception_handler(ValidationError)
    def _validation(_, exc):
        return Response(json.dumps({"error": str(exc)}), status_code=400,
                        media_type="application/json")

    @app.exception_handler(InputError)
    def _input(_, exc):
        return Response(json.dumps({"error": str(exc)}), status_code=400,
                        media_type="application/json")

    @app.get("/scenes")
    def scenes(env: str = Query("push"), seed: int = 0, count: int = 4):
        if env not in scene.ENV_IDS:
            raise HTTPException(400, f"unknown env {env}")
        out = []
        for s in range(seed, seed + count):
            spec, obs = scene.reset(env, s)
            image_id = state.put_image(obs.image)
            out.append({"env_id": env, "seed": s, "image_id": image_id,
                        "caption": scene.caption(spec)})
        return {"scenes": out}

    @app.get("/images/{image_id}")
    def image(image_id: str):
        return FileResponse(state.image_path(image_id), media_type="image/png")

    @app.get("/schema/edit-spec")
    def edit_schema():
        return EditSpecModel.model_json_schema()

    @app.get("/presets")
    def presets():
        out = {}
        for name in ("wipe_sim", "led_sim", "push_sim"):
            p = preset(name)
            out[name] = {"env_id": p["env_id"], "edit": p["edit"].to_dict(),
                         "dreambooth": p["dreambooth"]}
        return out

    def _ensure_inversion(job, image, prompt):
        key = source_hash(image, prompt, state.model)
        if key not in state.inversions:
            cfg = InversionConfig(steps=state.sampler_steps(),
                                  guidance=state.guidance())
            inv = invert(state.model, image, prompt, cfg)
            state.inversions[key] = inv
            save_inversion(inv, state.root / "store" / f"inv_{key[:24]}.ckpt")
        return state.inversions[key]

    @app.post("/invert")
    def post_invert(req: InvertRequest):
        image = state.get_image(req.image_id)

        def run(job):
            inv = _ensure_inversion(job, image, req.prompt)
            recon_id = state.put_image(np.clip(inv.reconstruction[0], 0, 1))
            job.result = {
                "reconstruction_image_id": recon_id,
                "recon_mae": float(inv.recon_mae[0]),
                "naive_mae": float(inv.naive_mae[0]),
                "used_fallback": bool(inv.used_fallback[0]),
            }
            state.jobs.attach(job, "reconstruction", state.image_path(recon_id))

        return _submit("invert", run)

    @app.post("/edit")
    def post_edit(req: EditRequest):
        image = state.get_image(req.image_id)
        edit = req.edit_spec.to_edit()

        def run(job):
            inv = _ensure_inversion(job, image, edit.source_prompt)
            result = generate_goal(state.model, image, edit, inv,
                                   record_attention=True)
            goal_id = state.put_image(result.images[0])
            state.edit_records[job.id] = (goal_id, result)
            job.result = {"goal_image_id": goal_id,
                          "source_image_id": req.image_id,
                          "edit": edit.to_dict()}
            state.jobs.attach(job, "goal", state.image_path(goal_id))

        return _submit("edit", run)

    def _submit(kind, fn):
        try:
            job = state.jobs.submit(kind, fn)
        except QueueFull:
            raise HTTPException(503, "job queue full")
        return {"job_id": job.id, "status": "queued"}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        return job.to_dict()

    @app.get("/jobs/{job_id}/attention")
    def job_attention(job_id: str, t: int = Query(...), token: int = Query(...),
                      process: str = Query("target")):
        job = state.jobs.get(job_id)
        if job is None or job_id not in state.edit_records:
            raise HTTPException(404, "unknown or artifact-less job")
        if job.status != "done":
            raise HTTPException(409, f"job is {job.status}")
        _, result = state.edit_records[job_id]
        record = (result.target_attention if process == "target"
                  else result.source_attention)
        out_dir = state.root / "store" / "attention"
        try:
            paths = export_attention_grid(record, timesteps=(t,), token=token,
                                          out_dir=out_dir, prefix=f"{job_id}_{process}")
        except InputError as exc:
            raise HTTPException(400, str(exc))
        return FileResponse(paths[0], media_type="image/png")

    @app.post("/datasets/{name}/commit")
    def commit_dataset(name: str, req: CommitRequest):
        entries = []
        for jid in req.job_ids:
            job = state.jobs.get(jid)
            if job is None:
                raise HTTPException(404, f"unknown job {jid}")
            if job.status != "done" or jid not in state.edit_records:
                raise HTTPException(409, f"job {jid} is not a finished edit")
        ds_dir = state.root / "datasets" / name
        (ds_dir / "images").mkdir(parents=True, exist_ok=True)
        for i, jid in enumerate(req.job_ids):
            job = state.jobs.get(jid)
            goal_id, _ = state.edit_records[jid]
            src = state.image_path(goal_id)
            dst = ds_dir / "images" / f"{i:05d}.png"
            dst.write_bytes(src.read_bytes())
            entries.append({
                "index": i, "file": f"images/{i:05d}.png", "job_id": jid,
                "env_id": job.result.get("env_id"),
                "edit": job.result.get("edit"), "image_sha256": goal_id,
                "failed": False,
            })
        with open(ds_dir / "manifest.jsonl", "w") as fh:
            for e in entries:
                fh.write(json.dumps(e) + "\n")
        return {"dataset": name, "count": len(entries), "path": str(ds_dir)}

    @app.post("/rl/runs")
    def start_rl(req: RLRunRequest):
        ds_dir = state.root / "datasets" / req.dataset
        if not (ds_dir / "manifest.jsonl").exists():
            raise HTTPException(404, f"unknown dataset {req.dataset}")
        p = preset(req.preset)
        goal_ds = GoalDataset.load(ds_dir)
        overrides = {}
        if req.total_steps is not None:
            overrides["total_steps"] = req.total_steps
        rl_cfg = state.config.rl_config(seed=req.seed, **overrides)

        def run(job):
            metrics = state.root / "runs" / f"{job.id}.jsonl"
            state.rl_runs[job.id] = {"metrics": metrics}
            result = rl_train(p["env_id"], goal_ds, rl_cfg,
                              metrics_path=metrics, seed=req.seed)
            ckpt = state.root / "runs" / f"{job.id}_agent.ckpt"
            save_agent(result.agent, result.ensemble, ckpt)
            state.jobs.attach(job, "agent", ckpt)
            state.jobs.attach(job, "metrics", metrics)
            job.result = {"eval": evaluate_agent(result.agent, p["env_id"],
                                                 episodes=10)}

        out = _submit("rl", run)
        state.rl_runs[out["job_id"]] = {
            "metrics": state.root / "runs" / f"{out['job_id']}.jsonl"}
        return out

    @app.get("/rl/runs/{run_id}/metrics")
    def rl_metrics(run_id: str):
        job = state.jobs.get(run_id)
        if job is None or run_id not in state.rl_runs:
            raise HTTPException(404, f"unknown run {run_id}")
        path = state.rl_runs[run_id]["metrics"]

        def stream():
            pos = 0
            while True:
                if Path(path).exists():
                    with open(path) as fh:
                        fh.seek(pos)
                        chunk = fh.read()
                        pos = fh.tell()
                    if chunk:
                        yield chunk
                status = state.jobs.get(run_id).status
                if status in ("done", "failed"):
                    if Path(path).exists():
                        with open(path) as fh:
                            fh.seek(pos)
                            rest = fh.read()
                        if rest:
                            yield rest
                    return
                time.sleep(0.2)

        return StreamingResponse(stream(), media_type="application/jsonl")

    return app
