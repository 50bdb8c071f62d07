"""Pipeline stages. Each stage reads validated config, consumes upstream
artifacts from the run directory, writes its outputs plus a RunManifest
with content hashes, and is deterministic given (config, seed)."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import tailor.nn as nn
from ..cleaner import clean, train_filters
from ..diagnosis import (
    Classifier,
    EnsembleModel,
    save_predictions_jsonl,
    train_base,
    train_baseline_real,
    fine_tune_expert,
)
from ..diffusion import (
    ConditionVector,
    DenoiserModel,
    attach_lora,
    default_schedule,
    fine_tune_tail,
    generate_balanced,
    make_schedule,
    merge_lora,
    row_condition,
    train_denoiser,
)
from ..manifest import DatasetManifest, merge_manifests
from ..stats import (
    ScoredSet,
    auc_from_arrays,
    bootstrap_ci,
    delong_test,
    paired_delta_ci,
    permutation_test,
    roc_auc,
    save_roc_csv,
    save_roc_svg,
    sens_spec,
    spec_at_fixed_sens,
    subtype_breakdown,
)
from ..world import WorldConfig, build_dataset, build_tail_testset, derive_seed
from .config import ExperimentConfig

TAIL_KINDS = ("ncm", "cal", "dcis")


class MissingArtifactError(FileNotFoundError):
    def __init__(self, stage: str, path: Path):
        super().__init__(f"stage {stage}: missing upstream artifact {path}")
        self.stage = stage


# ---------------------------------------------------------------------------
# run manifests
# ---------------------------------------------------------------------------

def hash_path(path: Path) -> str:
    """sha256 of a file, or of the sorted (relpath, filehash) list for a dir."""
    path = Path(path)
    if path.is_file():
        return hashlib.sha256(path.read_bytes()).hexdigest()
    entries = []
    for p in sorted(path.rglob("*")):
        if p.is_file():
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            entries.append(f"{p.relative_to(path)}:{digest}")
    return hashlib.sha256("\n".join(entries).encode()).hexdigest()


@dataclass
class RunManifest:
    stage: str
    seed: int
    config_hash: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    started_at: str = ""

    def save(self, out_root: Path) -> Path:
        path = out_root / "manifests" / f"{self.stage}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.__dict__, sort_keys=True, indent=2))
        return path


class StageRunner:
    def __init__(self, cfg: ExperimentConfig, stage: str):
        self.cfg = cfg
        self.stage = stage
        self.manifest = RunManifest(
            stage=stage, seed=cfg.seed,
            config_hash=hashlib.sha256(cfg.to_json().encode()).hexdigest(),
            started_at=time.strftime("%Y-%m-%dT%H:%M:%S"))
        self._t0 = time.time()

    def need(self, path: Path) -> Path:
        if not Path(path).exists():
            raise MissingArtifactError(self.stage, path)
        self.manifest.inputs[str(path)] = hash_path(path)
        return Path(path)

    def done(self, **outputs: Path) -> dict:
        for name, path in outputs.items():
            self.manifest.outputs[name] = hash_path(path)
        self.manifest.wall_clock_s = round(time.time() - self._t0, 3)
        self.manifest.save(self.cfg.out)
        return {name: str(p) for name, p in outputs.items()}


def world_config_from(cfg: ExperimentConfig) -> WorldConfig:
    overrides = dict(cfg.world.overrides)
    if "benign_brightness" in overrides:
        overrides["benign_brightness"] = tuple(overrides["benign_brightness"])
    if "malignant_brightness" in overrides:
        overrides["malignant_brightness"] = tuple(overrides["malignant_brightness"])
    return WorldConfig(image_size=cfg.world.image_size, **overrides)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_world_gen(cfg: ExperimentConfig) -> dict:
    runner = StageRunner(cfg, "world-gen")
    world = world_config_from(cfg)
    out = cfg.out / "world"
    train_rng = derive_seed(cfg.seed, 1)
    build_dataset(world, cfg.world.n_train, out / "real_train", rng=train_rng,
                  train_fraction=1.0, silver_fraction=cfg.world.silver_fraction,
                  silver_flip_rate=cfg.world.silver_flip_rate)
    build_dataset(world, cfg.world.n_test, out / "real_test", rng=derive_seed(cfg.seed, 2),
                  train_fraction=0.0)
    tails = {}
    for i, kind in enumerate(TAIL_KINDS):
        build_tail_testset(world, kind, cfg.world.tail_test_per_class,
                           out / f"tail_{kind}", rng=derive_seed(cfg.seed, 10 + i))
        tails[f"test_{kind}"] = out / f"tail_{kind}"
    return runner.done(real_train=out / "real_train", real_test=out / "real_test",
                       **tails)


def _schedule_for(cfg: ExperimentConfig):
    if cfg.generator.T == 200:
        return default_schedule(200)
    scale = min(1000.0 / cfg.generator.T, 5000.0)
    return make_schedule(cfg.generator.T, min(1e-4 * scale, 0.01),
                         min(0.02 * scale, 0.5))


def _save_model(model, path: Path, extra: dict | None = None) -> None:
    config = model.config()
    if extra:
        config = {**config, **extra}
    nn.save_checkpoint(path, config, model.state_dict())


def _load_denoiser(path: Path) -> DenoiserModel:
    config, params = nn.load_checkpoint(path)
    model = DenoiserModel.from_config(config)
    model.load_state_dict(params)
    return model


def _load_classifier(path: Path) -> Classifier:
    config, params = nn.load_checkpoint(path)
    model = Classifier.from_config(config)
    model.load_state_dict(params)
    return model


def stage_train_gen(cfg: ExperimentConfig) -> dict:
    runner = StageRunner(cfg, "train-gen")
    train_dir = runner.need(cfg.out / "world" / "real_train")
    manifest = DatasetManifest.load(train_dir / "manifest.csv")
    schedule = _schedule_for(cfg)
    gen_dir = cfg.out / "gen"
    gcfg = cfg.generator

    model = DenoiserModel(image_size=cfg.world.image_size, base_channels=gcfg.base_channels,
                          emb_dim=gcfg.emb_dim, seed=derive_seed(cfg.seed, 20) % (2 ** 31))
    images = manifest.load_images()
    # pathology plus basic knowledge (device, lesion box): without the box
    # condition a desk-scale model mode-averages lesions away entirely
    basic_conds = [row_condition(r, mode="basic") for r in manifest.rows]
    rng = np.random.default_rng(derive_seed(cfg.seed, 21))
    pre = train_denoiser(model, images, basic_conds, schedule,
                         steps=gcfg.pretrain_steps, batch_size=gcfg.batch_size,
                         lr=gcfg.lr, rng=rng, cond_dropout_p=gcfg.cond_dropout)
    _save_model(model, gen_dir / "gen_pretrained.ckpt", {"T": gcfg.T})

    # adapter fine-tune on the full condition set, tail rows oversampled
    attach_lora(model, rank=gcfg.lora_rank, seed=derive_seed(cfg.seed, 22) % (2 ** 31))
    tail_rows = [r for r in manifest.rows if r.ncm or r.cal or r.dcis]
    rows = list(manifest.rows) + tail_rows * max(0, gcfg.tail_oversample - 1)
    ft_manifest = DatasetManifest(rows[:0], root=manifest.root)  # reuse root
    ft_manifest.rows = rows
    ft_rng = np.random.default_rng(derive_seed(cfg.seed, 23))
    epochs = gcfg.fine_tune_steps * gcfg.batch_size / max(1, len(rows))
    ft = fine_tune_tail(model, ft_manifest, schedule, epochs=epochs, rng=ft_rng,
                        batch_size=gcfg.batch_size, lr=gcfg.fine_tune_lr,
                        cond_dropout_p=gcfg.cond_dropout,
                        jitter=tuple(gcfg.fine_tune_jitter))
    merge_lora(model)
    _save_model(model, gen_dir / "gen_adapted.ckpt", {"T": gcfg.T})
    losses_path = gen_dir / "losses.json"
    losses_path.write_text(json.dumps({"pretrain": pre.losses, "fine_tune": ft.losses}))
    return runner.done(gen_pretrained=gen_dir / "gen_pretrained.ckpt",
                       gen_adapted=gen_dir / "gen_adapted.ckpt",
                       losses=losses_path)


def default_recipe(cfg: ExperimentConfig) -> list[dict]:
    s = cfg.sampling
    half_base = s.base_count // 2
    half_tail = s.tail_count // 2
    entry = {"guidance_w": s.guidance_w, "sampler": s.sampler, "steps": s.steps}
    return [
        {"count": half_base, "pathology": "benign", **entry},
        {"count": s.base_count - half_base, "pathology": "malignant", **entry},
        {"count": half_tail, "pathology": "benign", "tail_category": "ncm", **entry},
        {"count": s.tail_count - half_tail, "pathology": "malignant",
         "tail_category": "ncm", **entry},
        {"count": half_tail, "pathology": "benign", "tail_category": "cal", **entry},
        {"count": s.tail_count - half_tail, "pathology": "malignant",
         "tail_category": "cal", **entry},
        {"count": half_tail, "pathology": "benign", **entry},
        {"count": s.tail_count - half_tail, "pathology": "malignant",
         "tail_category": "dcis", **entry},
    ]


#: recipe entry index ranges per output set
_RECIPE_SETS = {"base": (0, 2), "tail_ncm": (2, 4), "tail_cal": (4, 6), "tail_dcis": (6, 8)}


def stage_sample(cfg: ExperimentConfig) -> dict:
    """Base set from the basic-knowledge checkpoint; tail sets from the
    adapter-tuned one (mirrors the staged sampling narrative)."""
    runner = StageRunner(cfg, "sample")
    base_model = _load_denoiser(runner.need(cfg.out / "gen" / "gen_pretrained.ckpt"))
    tail_model = _load_denoiser(runner.need(cfg.out / "gen" / "gen_adapted.ckpt"))
    schedule = _schedule_for(cfg)
    synth_dir = cfg.out / "synth"
    recipe = default_recipe(cfg)
    outputs = {}
    for name, (lo, hi) in _RECIPE_SETS.items():
        model = base_model if name == "base" else tail_model
        rng = np.random.default_rng(derive_seed(cfg.seed, 30 + lo))
        generate_balanced(model, schedule, recipe[lo:hi], synth_dir, rng=rng,
                          image_size=cfg.world.image_size,
                          batch_size=cfg.sampling.batch_size,
                          default_w=cfg.sampling.guidance_w, name=name)
        outputs[name] = synth_dir / f"{name}.csv"
        runner.manifest.inputs[f"recipe:{name}"] = hashlib.sha256(
            json.dumps(recipe[lo:hi], sort_keys=True).encode()).hexdigest()
    (synth_dir / "recipe.json").write_text(json.dumps({"entries": recipe}, indent=2))
    return runner.done(**outputs, recipe=synth_dir / "recipe.json")


def stage_clean(cfg: ExperimentConfig) -> dict:
    runner = StageRunner(cfg, "clean")
    real_train = DatasetManifest.load(
        runner.need(cfg.out / "world" / "real_train" / "manifest.csv"))
    filters = train_filters(real_train, k=cfg.cleaning.k,
                            epochs=cfg.cleaning.filter_epochs,
                            seed=derive_seed(cfg.seed, 40) % (2 ** 31))
    clean_dir = cfg.out / "clean"
    clean_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for name in _RECIPE_SETS:
        manifest = DatasetManifest.load(runner.need(cfg.out / "synth" / f"{name}.csv"))
        kept, removed, report = clean(manifest, filters, mode=cfg.cleaning.mode,
                                      fraction=cfg.cleaning.fraction,
                                      threshold=cfg.cleaning.threshold)
        kept.save(clean_dir / f"{name}_kept.csv")
        removed.save(clean_dir / f"{name}_removed.csv")
        report.save(clean_dir / f"{name}_report.json")
        outputs[f"{name}_kept"] = clean_dir / f"{name}_kept.csv"
        outputs[f"{name}_report"] = clean_dir / f"{name}_report.json"
    return runner.done(**outputs)


def _load_clean_set(cfg: ExperimentConfig, runner: StageRunner, name: str) -> DatasetManifest:
    path = runner.need(cfg.out / "clean" / f"{name}_kept.csv")
    manifest = DatasetManifest.load(path)
    manifest.root = cfg.out / "synth"  # kept rows point into the synth image tree
    return manifest


def stage_train_diag(cfg: ExperimentConfig) -> dict:
    runner = StageRunner(cfg, "train-diag")
    dcfg = cfg.diagnosis
    channels = tuple(dcfg.channels)
    diag_dir = cfg.out / "diag"
    base_set = _load_clean_set(cfg, runner, "base")
    base_model, base_losses = train_base(
        base_set, epochs=dcfg.base_epochs, seed=derive_seed(cfg.seed, 50) % (2 ** 31),
        channels=channels, batch_size=dcfg.batch_size, lr=dcfg.lr)
    _save_model(base_model, diag_dir / "base.ckpt")

    losses = {"base": base_losses}
    outputs = {"base": diag_dir / "base.ckpt"}
    neg_rng = np.random.default_rng(derive_seed(cfg.seed, 51))
    for kind in TAIL_KINDS:
        tail_set = _load_clean_set(cfg, runner, f"tail_{kind}")
        neg_pool = base_set.rows
        n_neg = min(dcfg.negatives_per_tail, len(neg_pool))
        neg_idx = neg_rng.choice(len(neg_pool), size=n_neg, replace=False)
        negatives = DatasetManifest([neg_pool[i] for i in sorted(neg_idx)],
                                    root=base_set.root)
        combined = merge_manifests(tail_set, negatives)
        expert, expert_losses = fine_tune_expert(
            base_model, combined, kind, epochs=dcfg.expert_epochs,
            seed=derive_seed(cfg.seed, 52 + hash(kind) % 100) % (2 ** 31),
            batch_size=dcfg.batch_size, lr=dcfg.expert_lr)
        _save_model(expert, diag_dir / f"expert_{kind}.ckpt")
        outputs[f"expert_{kind}"] = diag_dir / f"expert_{kind}.ckpt"
        losses[f"expert_{kind}"] = expert_losses

    real_train = DatasetManifest.load(
        runner.need(cfg.out / "world" / "real_train" / "manifest.csv"))
    baseline, baseline_losses = train_baseline_real(
        real_train, epochs=dcfg.baseline_epochs,
        seed=derive_seed(cfg.seed, 53) % (2 ** 31), channels=channels,
        batch_size=dcfg.batch_size, lr=dcfg.lr)
    _save_model(baseline, diag_dir / "baseline.ckpt")
    losses["baseline"] = baseline_losses

    ensemble_path = diag_dir / "ensemble.json"
    ensemble_path.write_text(json.dumps(
        {"thresholds": cfg.ensemble.thresholds, "weights": cfg.ensemble.weights,
         "source": "config"}, sort_keys=True, indent=2))
    losses_path = diag_dir / "losses.json"
    losses_path.write_text(json.dumps(losses))
    return runner.done(**outputs, baseline=diag_dir / "baseline.ckpt",
                       ensemble=ensemble_path, losses=losses_path)


def load_ensemble(cfg: ExperimentConfig) -> EnsembleModel:
    diag_dir = cfg.out / "diag"
    base = _load_classifier(diag_dir / "base.ckpt")
    experts = {kind: _load_classifier(diag_dir / f"expert_{kind}.ckpt")
               for kind in TAIL_KINDS}
    params = json.loads((diag_dir / "ensemble.json").read_text())
    return EnsembleModel(base, experts, thresholds=params["thresholds"],
                         weights=params["weights"])


def stage_crossval(cfg: ExperimentConfig) -> dict:
    from .crossval import crossval_select

    runner = StageRunner(cfg, "crossval")
    runner.need(cfg.out / "diag" / "base.ckpt")
    real_train = DatasetManifest.load(
        runner.need(cfg.out / "world" / "real_train" / "manifest.csv"))
    ensemble = load_ensemble(cfg)
    selected, table = crossval_select(ensemble, real_train, cfg.ensemble.crossval_grid,
                                      k=5, seed=derive_seed(cfg.seed, 60) % (2 ** 31))
    sel_path = cfg.out / "crossval" / "selected.json"
    sel_path.parent.mkdir(parents=True, exist_ok=True)
    sel_path.write_text(json.dumps({"selected": selected, "table": table},
                                   sort_keys=True, indent=2))
    ensemble_path = cfg.out / "diag" / "ensemble.json"
    ensemble_path.write_text(json.dumps(
        {"thresholds": selected["thresholds"], "weights": selected["weights"],
         "source": "crossval"}, sort_keys=True, indent=2))
    return runner.done(selected=sel_path, ensemble=ensemble_path)


EVAL_SETS = {"overall": ("world", "real_test", "manifest.csv"),
             "dcis": ("world", "tail_dcis", "test_dcis.csv"),
             "ncm": ("world", "tail_ncm", "test_ncm.csv"),
             "cal": ("world", "tail_cal", "test_cal.csv")}


def _scored_set(preds, manifest: DatasetManifest) -> ScoredSet:
    by_id = {p.lesion_id: p.p_hat for p in preds}
    return ScoredSet(scores=np.array([by_id[r.id] for r in manifest.rows]),
                     labels=manifest.labels(),
                     subtypes=[r.subtype for r in manifest.rows],
                     lesion_ids=[r.id for r in manifest.rows])


def stage_eval(cfg: ExperimentConfig) -> dict:
    runner = StageRunner(cfg, "eval")
    ensemble = load_ensemble(cfg)
    baseline = EnsembleModel(_load_classifier(runner.need(cfg.out / "diag" / "baseline.ckpt")),
                             experts={})
    eval_dir = cfg.out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    ecfg = cfg.evaluation
    metrics: dict = {"sets": {}}
    outputs = {}
    for set_name, parts in EVAL_SETS.items():
        manifest_path = runner.need(cfg.out.joinpath(*parts))
        manifest = DatasetManifest.load(manifest_path)
        entry: dict = {}
        scored = {}
        for model_name, model in (("tailor", ensemble), ("baseline", baseline)):
            preds = model.predict_manifest(manifest)
            pred_path = eval_dir / f"predictions_{set_name}_{model_name}.jsonl"
            save_predictions_jsonl(preds, pred_path)
            outputs[f"pred_{set_name}_{model_name}"] = pred_path
            s = _scored_set(preds, manifest)
            scored[model_name] = s
            auc, curve = roc_auc(s)
            ci = bootstrap_ci(auc_from_arrays, s, replications=ecfg.bootstrap,
                              level=ecfg.ci_level, seed=derive_seed(cfg.seed, 70))
            entry[model_name] = {"auc": auc, "ci": [ci.low, ci.high],
                                 "n": len(s), "redrawn": ci.redrawn}
            save_roc_csv(curve, eval_dir / f"roc_{set_name}_{model_name}.csv")
            entry.setdefault("curves", {})[model_name] = curve
        save_roc_svg({name: entry["curves"][name] for name in ("tailor", "baseline")},
                     eval_dir / f"roc_{set_name}.svg", title=f"ROC: {set_name}")
        outputs[f"roc_{set_name}"] = eval_dir / f"roc_{set_name}.svg"
        del entry["curves"]

        a, b = scored["tailor"], scored["baseline"]
        dl = delong_test(a.scores, b.scores, a.labels)
        pt = permutation_test(a.scores, b.scores, a.labels,
                              permutations=ecfg.permutations,
                              seed=derive_seed(cfg.seed, 71),
                              lesion_ids_a=a.lesion_ids, lesion_ids_b=b.lesion_ids)
        delta_ci = paired_delta_ci(a.scores, b.scores, a.labels,
                                   replications=ecfg.bootstrap, level=ecfg.ci_level,
                                   seed=derive_seed(cfg.seed, 72))
        entry["delta"] = {"auc_delta": dl.auc_a - dl.auc_b,
                          "delong_p": dl.p, "delong_degenerate": dl.degenerate,
                          "permutation_p": pt.p,
                          "ci": [delta_ci.low, delta_ci.high]}
        try:
            thr, spec = spec_at_fixed_sens(a, ecfg.fixed_sensitivity)
            sens_b, spec_b = sens_spec(b, spec_at_fixed_sens(b, ecfg.fixed_sensitivity)[0])
            entry["fixed_sens"] = {"target": ecfg.fixed_sensitivity,
                                   "tailor": {"threshold": thr, "specificity": spec},
                                   "baseline": {"specificity": spec_b}}
            if set_name == "overall":
                entry["subtypes"] = {
                    "tailor": subtype_breakdown(a, thr),
                    "baseline": subtype_breakdown(
                        b, spec_at_fixed_sens(b, ecfg.fixed_sensitivity)[0])}
        except ValueError:
            entry["fixed_sens"] = {"target": ecfg.fixed_sensitivity, "unattainable": True}
        metrics["sets"][set_name] = entry
    metrics_path = eval_dir / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, sort_keys=True, indent=2))
    return runner.done(metrics=metrics_path, **outputs)


def stage_report(cfg: ExperimentConfig) -> dict:
    from .report import render_report

    runner = StageRunner(cfg, "report")
    metrics_path = runner.need(cfg.out / "eval" / "metrics.json")
    report_dir = cfg.out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    metrics = json.loads(metrics_path.read_text())
    html = render_report(cfg, metrics)
    (report_dir / "report.html").write_text(html)
    summary = {"config": cfg.to_dict(), "metrics": metrics}
    (report_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    return runner.done(report=report_dir / "report.html",
                       summary=report_dir / "summary.json")


STAGES = {"world-gen": stage_world_gen, "train-gen": stage_train_gen,
          "sample": stage_sample, "clean": stage_clean,
          "train-diag": stage_train_diag, "crossval": stage_crossval,
          "eval": stage_eval, "report": stage_report}

PIPELINE_ORDER = ["world-gen", "train-gen", "sample", "clean", "train-diag",
                  "crossval", "eval", "report"]


def run_stage(cfg: ExperimentConfig, stage: str) -> dict:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    return STAGES[stage](cfg)


def run_all(cfg: ExperimentConfig, stages: list[str] | None = None) -> dict:
    results = {}
    for stage in stages or PIPELINE_ORDER:
        results[stage] = run_stage(cfg, stage)
    return results
