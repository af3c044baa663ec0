"""Config-driven experiment orchestration.

A single JSON document describes the dataset, the extractors (checkpoint
paths or training stanzas), the attack battery, the degradations and the
metrics.  ``run_experiment`` crafts every attack on every source extractor
and scores the result on every target extractor after every degradation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .alignment import align_face
from .attacks import AttackConfig, run_attack
from .datasets import DatasetHandle, load_annotated_dataset, split_dataset, synthetic_dataset
from .evaluation.degrade import CodecError, dct_video_proxy, jpeg_roundtrip, video_roundtrip, video_tool_available
from .evaluation.metrics import landmark_roi, mask_ssim
from .extractors.core import Checkpoint, ExtractorSpec, predict_landmarks
from .extractors.training import TrainConfig, dataset_nme, train_extractor
from .faces import LandmarkSet
from .synthesis import SynthCheckpoint, ssim_w_pipeline, train_synthesizer

log = logging.getLogger(__name__)

CLEAN = "None"
NO_SOURCE = "-"
RECORD_FIELDS = ("image_id", "extractor", "attack", "degradation", "nme", "ssim_i", "ssim_w", "source")
METRICS = ("nme", "ssim_i", "ssim_w")
SWEEP_AXES = ("alpha", "max_iters")
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ExtractorEntry:
    name: str
    arch: str
    checkpoint: str | None = None
    train: dict | None = None


@dataclass(frozen=True)
class AttackEntry:
    name: str
    config: AttackConfig


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    extractors: tuple[ExtractorEntry, ...]
    attacks: tuple[AttackEntry, ...]
    degradations: tuple[str, ...] = ("none",)
    metrics: dict = field(default_factory=lambda: {m: True for m in METRICS})
    output_dir: str = "runs/default"
    jobs: int = 1
    seed: int = 0
    n_test: int = 50
    include_clean: bool = True
    roi_margin: float = 0.25
    synthesizer: dict = field(default_factory=dict)
    video: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def wants(self, metric: str) -> bool:
        return bool(self.metrics.get(metric, True))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attacks"] = [{"name": a.name, "config": a.config.to_dict()} for a in self.attacks]
        return d

    def with_overrides(self, output_dir=None, seed=None, jobs=None) -> "ExperimentConfig":
        kw = {}
        if output_dir is not None:
            kw["output_dir"] = str(output_dir)
        if seed is not None:
            kw["seed"] = int(seed)
        if jobs is not None:
            kw["jobs"] = int(jobs)
        return replace(self, **kw) if kw else self


def _parse_attack(item) -> AttackEntry:
    if isinstance(item, str):
        return AttackEntry(item, AttackConfig(variant=item))
    cfg = dict(item.get("config", {}))
    name = item.get("name") or cfg.get("variant", "LB")
    return AttackEntry(str(name), AttackConfig.from_dict(cfg))


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document (already parsed from JSON)."""
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "extractors" not in doc or not doc["extractors"]:
        raise ConfigError("config needs a non-empty 'extractors' list")
    extractors = []
    for item in doc["extractors"]:
        if isinstance(item, str):
            item = {"name": item, "arch": item}
        e = ExtractorEntry(str(item.get("name", item.get("arch"))), item["arch"], item.get("checkpoint"), item.get("train"))
        if e.checkpoint is None and e.train is None:
            raise ConfigError(f"extractor {e.name!r} has neither a checkpoint nor a training stanza")
        if e.checkpoint is not None and not Path(e.checkpoint).exists() and e.train is None:
            raise ConfigError(f"checkpoint {e.checkpoint} for extractor {e.name!r} does not exist")
        extractors.append(e)
    names = [e.name for e in extractors]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate extractor names: {names}")
    attacks = tuple(_parse_attack(a) for a in doc.get("attacks", ()))
    anames = [a.name for a in attacks]
    if len(set(anames)) != len(anames) or CLEAN in anames:
        raise ConfigError(f"attack names must be unique and differ from {CLEAN!r}: {anames}")
    degradations = tuple(doc.get("degradations", ("none",)))
    for d in degradations:
        parse_degradation(d)
    kw = {k: doc[k] for k in known & set(doc) if k not in ("extractors", "attacks", "degradations")}
    kw.setdefault("dataset", {})
    cfg = ExperimentConfig(extractors=tuple(extractors), attacks=attacks, degradations=degradations, **kw)
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.n_test < 1:
        raise ConfigError("n_test must be >= 1")
    return cfg


def load_config(source) -> ExperimentConfig:
    """Parse a config from a dict, a JSON string or a path to a JSON file."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        return parse_config(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        text = Path(source).read_text()
    return parse_config(json.loads(text))


def _check_writable(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc


# ---------------------------------------------------------------- degradations


@dataclass(frozen=True)
class Degradation:
    name: str
    kind: str  # none | jpeg | video
    param: int | str | None = None


def parse_degradation(name: str) -> Degradation:
    key = name.lower()
    if key == "none":
        return Degradation(name, "none")
    m = re.fullmatch(r"jpeg(\d+)", key)
    if m:
        q = int(m.group(1))
        if not 1 <= q <= 100:
            raise ConfigError(f"JPEG quality out of range in {name!r}")
        return Degradation(name, "jpeg", q)
    if key in ("video_c", "video_c2"):
        return Degradation(name, "video", "C" if key == "video_c" else "C2")
    raise ConfigError(f"unknown degradation {name!r}; use none, jpeg<Q>, video_c or video_c2")


def apply_degradation(deg: Degradation, images: np.ndarray, video: dict | None = None) -> tuple[np.ndarray, str]:
    """Degrade a stack of images.  Returns the stack and the tag to record.

    Video chains compress the whole stack as one clip.  Without an encoder
    the DCT proxy is used when ``video["fallback"] == "proxy"`` and the tag
    says so; otherwise a ``CodecError`` is raised.
    """
    video = video or {}
    if deg.kind == "none":
        return images, deg.name
    if deg.kind == "jpeg":
        return np.stack([jpeg_roundtrip(im, deg.param) for im in images]), deg.name
    commands = video.get("commands")
    if video_tool_available(commands):
        return np.stack(video_roundtrip(list(images), deg.param, commands)), deg.name
    if video.get("fallback", "proxy") == "proxy":
        log.warning("no video encoder found; using the DCT proxy for %s", deg.name)
        return np.stack(dct_video_proxy(list(images), deg.param)), f"{deg.name}+proxy"
    raise CodecError(f"no video encoder available for {deg.name}")


# ---------------------------------------------------------------- workspace


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:12]


@dataclass
class Workspace:
    """Data splits and model handles shared by the harness stages."""

    config: ExperimentConfig
    train: DatasetHandle
    val: DatasetHandle
    test: DatasetHandle
    extractors: dict[str, Checkpoint] = field(default_factory=dict)
    synth: SynthCheckpoint | None = None

    @property
    def test_images(self) -> np.ndarray:
        return self.test.image_array().astype(np.float64)


def prepare_data(cfg: ExperimentConfig):
    d = cfg.dataset
    if d.get("path"):
        handle = load_annotated_dataset(d["path"], strict=bool(d.get("strict", False)))
    else:
        handle = synthetic_dataset(int(d.get("n", 2500)), seed=int(d.get("seed", cfg.seed)), size=tuple(d.get("size", (128, 128))))
    train, val, test = split_dataset(handle, d.get("ratios", (0.8, 0.1, 0.1)), seed=int(d.get("split_seed", cfg.seed)))
    return train, val, test.subset(range(min(cfg.n_test, len(test))), "test")


def _train_config(entry: ExtractorEntry, cfg: ExperimentConfig) -> TrainConfig:
    # each extractor is an independent training run: default seed is master seed + list position
    stanza = dict(entry.train or {})
    stanza.setdefault("seed", cfg.seed + cfg.extractors.index(entry))
    return TrainConfig(**stanza)


def _checkpoint_matches(ckpt: Checkpoint, entry: ExtractorEntry, tcfg: TrainConfig, data_key: str) -> bool:
    meta = ckpt.metadata
    return ckpt.spec.arch == entry.arch and meta.get("train_config") == asdict(tcfg) and meta.get("data_key") == data_key


def prepare_extractors(cfg: ExperimentConfig, train: DatasetHandle, val: DatasetHandle, retrain: bool = False) -> dict[str, Checkpoint]:
    """Load or train every configured extractor.

    Trained checkpoints are written to ``<out>/checkpoints/<name>.ckpt`` and
    reused on later runs when their training stanza and dataset spec match.
    """
    out = {}
    data_key = _digest(cfg.dataset)
    ck_dir = cfg.out / "checkpoints"
    for e in cfg.extractors:
        if e.checkpoint is not None and Path(e.checkpoint).exists():
            out[e.name] = Checkpoint.load(e.checkpoint)
            continue
        tcfg = _train_config(e, cfg)
        path = ck_dir / f"{e.name}.ckpt"
        if path.exists() and not retrain:
            ckpt = Checkpoint.load(path)
            if _checkpoint_matches(ckpt, e, tcfg, data_key):
                out[e.name] = ckpt
                continue
        log.info("training %s (%s) for %d epochs", e.name, e.arch, tcfg.epochs)
        ckpt = train_extractor(ExtractorSpec(e.arch), train, val, tcfg, name=e.name)
        ckpt.metadata["data_key"] = data_key
        ck_dir.mkdir(parents=True, exist_ok=True)
        ckpt.save(path)
        out[e.name] = ckpt
    return out


def _aligned_crops(data: DatasetHandle, n: int, crop: int) -> np.ndarray:
    imgs = data.image_array()
    return np.stack([align_face(imgs[i].astype(np.float64), data.records[i].landmarks, crop) for i in range(min(n, len(data)))])


def prepare_synthesizer(cfg: ExperimentConfig, train: DatasetHandle, val: DatasetHandle, retrain: bool = False) -> SynthCheckpoint:
    s = dict(cfg.synthesizer)
    if s.get("checkpoint") and Path(s["checkpoint"]).exists():
        return SynthCheckpoint.load(s["checkpoint"])
    stanza = {"n_crops": 1000, "n_val": 100, "crop_size": 64, "epochs": 20, "seed": cfg.seed, **s.get("train", {})}
    key = _digest({"train": stanza, "data": cfg.dataset})
    path = cfg.out / "checkpoints" / "synthesizer.ckpt"
    if path.exists() and not retrain:
        synth = SynthCheckpoint.load(path)
        if synth.metadata.get("key") == key:
            return synth
    crops = _aligned_crops(train, stanza["n_crops"], stanza["crop_size"])
    val_crops = _aligned_crops(val, stanza["n_val"], stanza["crop_size"])
    synth = train_synthesizer(crops, val_crops, epochs=stanza["epochs"], seed=stanza["seed"])
    synth.metadata["key"] = key
    path.parent.mkdir(parents=True, exist_ok=True)
    synth.save(path)
    return synth


def prepare_workspace(config, retrain: bool = False, train_models: bool = True) -> Workspace:
    cfg = load_config(config)
    _check_writable(cfg.out)
    train, val, test = prepare_data(cfg)
    ws = Workspace(cfg, train, val, test)
    if train_models:
        ws.extractors = prepare_extractors(cfg, train, val, retrain)
        if cfg.wants("ssim_w"):
            ws.synth = prepare_synthesizer(cfg, train, val, retrain)
    return ws


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class EvaluationRecord:
    image_id: str
    extractor: str
    attack: str
    degradation: str
    nme: float
    ssim_i: float
    ssim_w: float
    source: str = NO_SOURCE

    @property
    def key(self) -> tuple:
        return (self.image_id, self.source, self.extractor, self.attack, self.degradation)


class ResultTable:
    """Evaluation records with per-cell aggregation.

    Rows are keyed by (image, source, target extractor, attack, degradation);
    adding a duplicate key is an error.
    """

    def __init__(self, records=(), failures=()):
        self.records: list[EvaluationRecord] = []
        self.failures: list[dict] = list(failures)
        self._keys: set = set()
        for r in records:
            self.add(r)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def add(self, record: EvaluationRecord):
        if record.key in self._keys:
            raise ValueError(f"duplicate result cell {record.key}")
        self._keys.add(record.key)
        self.records.append(record)

    def fail(self, stage: str, error: Exception, **where):
        log.error("%s failed (%s): %s", stage, where, error)
        self.failures.append({"stage": stage, **where, "error": f"{type(error).__name__}: {error}"})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=list(RECORD_FIELDS))

    def cell_means(self) -> pd.DataFrame:
        """Mean metrics per (attack, source, extractor, degradation) cell."""
        df = self.to_frame()
        keys = ["attack", "source", "extractor", "degradation"]
        g = df.groupby(keys, sort=False)
        means = g[list(METRICS)].mean()
        means["n"] = g.size()
        return means.reset_index()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(RECORD_FIELDS)
            for r in self.records:
                w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, k) for k in RECORD_FIELDS)])
        return path

    @classmethod
    def read_csv(cls, path) -> "ResultTable":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        recs = [
            EvaluationRecord(
                r["image_id"], r["extractor"], r["attack"], r["degradation"],
                float(r["nme"]), float(r["ssim_i"]), float(r["ssim_w"]), r.get("source", NO_SOURCE),
            )
            for r in rows
        ]
        return cls(recs)


# ---------------------------------------------------------------- experiment


def _map(jobs: int, fn, items):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def craft_attack(ckpt: Checkpoint, images: np.ndarray, config: AttackConfig, jobs: int = 1) -> np.ndarray:
    """Attack every image; image ``i`` uses seed ``config.seed + i``."""

    def one(i):
        return run_attack(ckpt, images[i], replace(config, seed=config.seed + i)).image

    return np.stack(_map(jobs, one, range(len(images))))


def _adv_path(ws: Workspace, attack: AttackEntry, source: str) -> Path:
    ckpt = ws.extractors[source]
    key = _digest(
        {
            "attack": attack.config.to_dict(),
            "weights": hashlib.sha256(ckpt.to_bytes()).hexdigest(),
            "images": [r.image_id for r in ws.test.records],
        }
    )
    return ws.config.out / "adversarial" / f"{attack.name}__{source}__{key}.npz"


def save_adversarial(path: Path, image_ids, images: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, image_ids=np.array(image_ids), images=images.astype(np.float64))
    return path


def load_adversarial(path) -> tuple[list[str], np.ndarray]:
    with np.load(path) as z:
        return [str(s) for s in z["image_ids"]], z["images"]


def craft_all(ws: Workspace, reuse: bool = True, table: ResultTable | None = None) -> dict[tuple[str, str], np.ndarray]:
    """Adversarial stacks keyed by (attack name, source extractor); saved under ``<out>/adversarial``."""
    cfg = ws.config
    images = ws.test_images
    ids = [r.image_id for r in ws.test.records]
    out = {}
    for attack in cfg.attacks:
        for source, ckpt in ws.extractors.items():
            path = _adv_path(ws, attack, source)
            try:
                if reuse and path.exists():
                    _, adv = load_adversarial(path)
                else:
                    log.info("crafting %s on %s (%d images)", attack.name, source, len(images))
                    adv = craft_attack(ckpt, images, attack.config, cfg.jobs)
                    save_adversarial(path, ids, adv)
                out[(attack.name, source)] = adv
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                if table is None:
                    raise
                table.fail("attack", exc, attack=attack.name, source=source)
    return out


def score_images(
    ws: Workspace,
    target: str,
    original: np.ndarray,
    perturbed: np.ndarray,
    clean_pred: np.ndarray | None = None,
) -> list[tuple[float, float, float]]:
    """(NME, SSIM_I, SSIM_W) for each image of a perturbed stack on one target extractor."""
    cfg = ws.config
    ckpt = ws.extractors[target]
    names = ws.test.names
    gt = ws.test.landmark_array()
    pred = predict_landmarks(ckpt, perturbed)
    errs = dataset_nme(pred, gt, names)
    if clean_pred is None and cfg.wants("ssim_w"):
        clean_pred = predict_landmarks(ckpt, original)

    def one(i):
        n = float(errs[i]) if cfg.wants("nme") else math.nan
        gt_i = ws.test.records[i].landmarks
        s_i = mask_ssim(perturbed[i], original[i], landmark_roi(gt_i, cfg.roi_margin, original.shape[1:3])) if cfg.wants("ssim_i") else math.nan
        s_w = math.nan
        if cfg.wants("ssim_w"):
            s_w = ssim_w_pipeline(
                original[i], LandmarkSet(clean_pred[i], names), LandmarkSet(pred[i], names), ws.synth, attacked_image=perturbed[i]
            )
        return n, s_i, s_w

    return _map(cfg.jobs, one, range(len(perturbed)))


def run_experiment(config, workspace: Workspace | None = None, reuse: bool = True) -> ResultTable:
    """Full protocol: craft on each source, score on each target after each degradation.

    Clean rows (attack ``"None"``, source ``"-"``) are added per target and
    degradation when ``include_clean`` is set.  Stage failures are recorded in
    ``table.failures`` and the remaining cells still run.
    """
    ws = workspace or prepare_workspace(config)
    cfg = ws.config
    table = ResultTable()
    original = ws.test_images
    ids = [r.image_id for r in ws.test.records]
    stacks = {}
    if cfg.include_clean:
        stacks[(CLEAN, NO_SOURCE)] = original
    stacks.update(craft_all(ws, reuse, table))
    clean_pred = {t: predict_landmarks(ck, original) for t, ck in ws.extractors.items()}
    for deg_name in cfg.degradations:
        deg = parse_degradation(deg_name)
        for (attack, source), adv in stacks.items():
            try:
                degraded, tag = apply_degradation(deg, adv, cfg.video)
            except Exception as exc:  # noqa: BLE001
                table.fail("degrade", exc, attack=attack, source=source, degradation=deg_name)
                continue
            for target in ws.extractors:
                try:
                    scores = score_images(ws, target, original, degraded, clean_pred[target])
                except Exception as exc:  # noqa: BLE001
                    table.fail("evaluate", exc, attack=attack, source=source, extractor=target, degradation=deg_name)
                    continue
                for image_id, (n, si, sw) in zip(ids, scores):
                    table.add(EvaluationRecord(image_id, target, attack, tag, n, si, sw, source))
    return table


# ---------------------------------------------------------------- views


def transfer_matrix(table: ResultTable, attack: str = "LB", metric: str = "nme", degradation: str = "none") -> pd.DataFrame:
    """Mean ``metric`` with rows = perturbation source and columns = attacked extractor.

    A ``"None"`` row holds the clean means when clean rows are present.
    """
    df = table.to_frame()
    df = df[df["degradation"] == degradation]
    sub = df[df["attack"] == attack]
    if sub.empty:
        raise ValueError(f"no records for attack {attack!r} under degradation {degradation!r}")
    models = list(dict.fromkeys([*sub["extractor"], *sub["source"]]))
    have = set(zip(sub["source"], sub["extractor"]))
    missing = [(s, t) for s in models for t in models if (s, t) not in have]
    if missing:
        raise ValueError("transfer matrix is incomplete; missing (source, target) cells: " + ", ".join(f"{s}->{t}" for s, t in missing))
    mat = sub.pivot_table(index="source", columns="extractor", values=metric, aggfunc="mean").loc[models, models]
    clean = df[df["attack"] == CLEAN]
    if not clean.empty:
        row = clean.groupby("extractor")[metric].mean().reindex(models)
        mat.loc[CLEAN] = row
    mat.index.name, mat.columns.name = "source", "target"
    return mat


def _plot_lines(path: Path, xs, series: dict, xlabel: str, ylabel: str, title: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, ys in series.items():
        ax.plot(range(len(xs)), ys, marker="o", label=label)
    ax.set_xticks(range(len(xs)))
    ax.set_xticklabels([str(x) for x in xs])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def ablation_sweep(config, axis: str, values, workspace: Workspace | None = None, budget_mode: str | None = None, attack: dict | None = None) -> pd.DataFrame:
    """White-box curves of mean NME / SSIM_I / SSIM_W per extractor across ``values``.

    For ``axis="max_iters"`` one run of the longest schedule is made per image
    and shorter schedules are read off its trajectory; iterates of a shorter
    run are exactly the prefix of a longer one.  Writes ``sweep_<axis>.csv``
    and ``sweep_<axis>.png`` under the output directory.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    if len(values) < 2:
        raise ValueError("a sweep needs at least two values")
    ws = workspace or prepare_workspace(config)
    cfg = ws.config
    base = AttackConfig.from_dict(attack or cfg.sweep.get("attack", {}))
    if budget_mode is not None:
        base = replace(base, budget_mode=budget_mode)
    original = ws.test_images
    rows = []
    for name, ckpt in ws.extractors.items():
        if axis == "max_iters":
            top = replace(base, max_iters=int(max(values)))

            def one(i, top=top, ckpt=ckpt):
                res = run_attack_with_trajectory(ckpt, original[i], replace(top, seed=top.seed + i))
                return [original[i]] + res

            paths = _map(cfg.jobs, one, range(len(original)))
            stacks = {v: np.stack([p[min(int(v), len(p) - 1)] for p in paths]) for v in values}
        else:
            stacks = {v: craft_attack(ckpt, original, replace(base, alpha=float(v)), cfg.jobs) for v in values}
        clean_pred = predict_landmarks(ckpt, original)
        for v in values:
            scores = np.array(score_images(ws, name, original, stacks[v], clean_pred))
            # per-column means, summed the same way as a column of the result table
            means = {m: float(np.mean(np.ascontiguousarray(scores[:, j]))) for j, m in enumerate(METRICS)}
            rows.append({"extractor": name, "axis": axis, "value": v, **means})
    df = pd.DataFrame(rows)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    df.to_csv(out / f"sweep_{axis}.csv", index=False, float_format="%.10g")
    series = {n: df[df["extractor"] == n]["nme"].tolist() for n in ws.extractors}
    _plot_lines(out / f"sweep_{axis}.png", values, series, axis, "mean NME", f"white-box NME vs {axis}")
    return df


def run_attack_with_trajectory(ckpt: Checkpoint, image, config: AttackConfig) -> list[np.ndarray]:
    """Iterates ``x_1 .. x_t`` of one attack run (the run may stop early)."""
    return run_attack(ckpt, image, config, keep_trajectory=True).trajectory


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def emit_report(table: ResultTable, out_dir, panels=METRICS) -> list[Path]:
    """Write ``records.csv``, ``summary.json``, transfer matrices and one plot per panel."""
    if len(table) == 0:
        raise ValueError("cannot report an empty table")
    out = Path(out_dir)
    _check_writable(out)
    written = [table.write_csv(out / "records.csv")]
    df = table.to_frame()
    cells = table.cell_means()
    summary = {
        "n_records": len(table),
        "column_means": {m: _nan_to_none(float(df[m].mean())) for m in METRICS},
        "cells": [{k: _nan_to_none(v) for k, v in row.items()} for row in cells.to_dict("records")],
        "failures": table.failures,
    }
    p = out / "summary.json"
    p.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    written.append(p)

    for attack in sorted(set(df["attack"]) - {CLEAN}):
        for metric in ("nme", "ssim_w"):
            try:
                mat = transfer_matrix(table, attack, metric, "none")
            except ValueError:
                continue
            p = out / f"transfer_{attack}_{metric}.csv"
            mat.to_csv(p, float_format="%.6f")
            written.append(p)

    # white-box view: rows whose source is the target, plus clean rows
    wb = cells[(cells["source"] == cells["extractor"]) | (cells["attack"] == CLEAN)]
    degs = list(dict.fromkeys(df["degradation"]))
    for metric in panels:
        series = {}
        for (attack, target), g in wb.groupby(["attack", "extractor"], sort=False):
            g = g.set_index("degradation").reindex(degs)
            series[f"{attack} / {target}"] = g[metric].tolist()
        written.append(_plot_lines(out / f"report_{metric}.png", degs, series, "degradation", metric, f"{metric} vs degradation"))
    return written


def write_manifest(out_dir) -> Path:
    """Hash every file under ``out_dir`` (except the manifest) into ``manifest.json``."""
    out = Path(out_dir)
    entries = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            entries[p.relative_to(out).as_posix()] = {
                "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
                "bytes": p.stat().st_size,
            }
    path = out / MANIFEST
    path.write_text(json.dumps({"artifacts": entries}, indent=1, sort_keys=True) + "\n")
    return path
