"""Benchmark pipeline: dataset generation, training sweeps, evaluation and reporting.

Layout of an output directory::

    config.json                      resolved configuration
    datasets/<kind>_r<rep>.json      one file per replicate dataset
    datasets/manifest.json           sha256 of every dataset file
    runs/<dataset>__<method>__<gridpoint>__s<restart>.json
    eval/<dataset>__<method>__<gridpoint>.json
    report/                          table.csv, figure CSV/SVG files, summary.json

Every run seed is ``derive_seed(master, world, replicate, method, gridpoint, restart)``:
the first 8 bytes of sha256 over the JSON list of those parts, shifted to 63 bits.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .baselines import (BETA_ANNEAL_GRID, BETA_GRID, DESK_EPOCHS, LAGGING_GRID, METHODS, PAPER_EPOCHS,
                        TrainConfig, fit_posterior_network, select_model, train)
from .libi import HZ_GRID, MU_GRID, R_GRID, SIGMA_GRID, LibiConfig
from .metrics import aggregated_posterior, evaluate, linear_posterior
from .models import KINDS, MLP, PointEncoder
from .numgrad import DivergenceError, Tensor
from .objectives import default_grid, pm_grid
from .records import RunRecord, digest, dumps
from .svg import heatmap, scatter
from .worlds import Dataset, WorldSpec, sample_dataset

log = logging.getLogger(__name__)

HASH_EXCLUDE = ("out", "jobs")
LL_UNRELIABLE = ("CubicJTEx",)
GROUND_TRUTH = "ground-truth"


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    """Missing inputs or empty results; maps to exit code 2."""


_EVAL_DESK = {"S": 5000, "inflation": 2.0, "k": 1, "subsample": 100, "repetitions": 2000, "aggregated": 2000}

PRESETS = {
    "desk": {
        "scale": "desk", "kinds": ["LinearJTEx", "Gaussian"], "replicates": 2, "restarts": 3,
        "methods": ["vae", "libi"], "grids": None, "epochs": DESK_EPOCHS, "lr": 0.01,
        "sizes": [500, 500, 500], "eval": dict(_EVAL_DESK), "seed": 0, "out": "results", "jobs": 1,
    },
    "paper": {
        "scale": "paper", "kinds": list(KINDS), "replicates": 5, "restarts": 10,
        "methods": list(METHODS), "grids": None, "epochs": PAPER_EPOCHS, "lr": 0.01,
        "sizes": [500, 500, 500], "eval": dict(_EVAL_DESK, repetitions=20000), "seed": 0,
        "out": "results", "jobs": 1,
    },
}


def schema() -> dict:
    return json.loads(resources.files("libivae").joinpath("experiment.schema.json").read_text())


def derive_seed(master: int, *parts) -> int:
    h = hashlib.sha256(json.dumps([int(master), *parts], sort_keys=True).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def default_grid_points(method: str, kind: str, scale: str) -> list[dict]:
    """Hyperparameter points searched per world; the desk preset keeps one LiBI point."""
    if method == "vae":
        return [{}]
    if method == "beta-vae":
        return [{"beta": b} for b in BETA_GRID]
    if method == "beta-anneal":
        return [{"beta": b} for b in BETA_ANNEAL_GRID]
    if method == "lagging":
        return [{"lagging_segments": r} for r in LAGGING_GRID[kind]]
    if method == "libi":
        if scale == "desk":
            return [{"eps_hz": 1.0, "eps_sigma": 0.2, "eps_mu": 0.2, "repetitions": 1}]
        hz = [v for v in HZ_GRID if not (kind == "Mobius" and v < 1.0)]
        return [{"eps_hz": a, "eps_sigma": b, "eps_mu": c, "repetitions": r}
                for a, b, c, r in itertools.product(hz, SIGMA_GRID, MU_GRID, R_GRID)]
    raise ConfigError(f"unknown method {method!r}")


def gridpoint_id(point: dict) -> str:
    if not point:
        return "default"
    return ",".join(f"{k}={point[k]}" for k in sorted(point))


def method_config(method: str, point: dict, epochs: int, lr: float):
    if method == "libi":
        return LibiConfig(epochs=epochs, lr=lr, **point)
    return TrainConfig(method=method, epochs=epochs, lr=lr, **point)


@dataclass
class ExperimentConfig:
    scale: str = "paper"
    kinds: list = field(default_factory=lambda: list(KINDS))
    replicates: int = 5
    restarts: int = 10
    methods: list = field(default_factory=lambda: list(METHODS))
    grids: dict | None = None
    epochs: int = PAPER_EPOCHS
    lr: float = 0.01
    sizes: list = field(default_factory=lambda: [500, 500, 500])
    eval: dict = field(default_factory=lambda: dict(PRESETS["paper"]["eval"]))
    seed: int = 0
    out: str = "results"
    jobs: int = 1

    @classmethod
    def resolve(cls, scale: str | None = None, file_values: dict | None = None,
                overrides: dict | None = None) -> "ExperimentConfig":
        """Preset, then config-file values, then command-line overrides."""
        file_values = dict(file_values or {})
        scale = scale or file_values.get("scale") or "paper"
        if scale not in PRESETS:
            raise ConfigError(f"unknown scale {scale!r}")
        merged = copy.deepcopy(PRESETS[scale])
        for src in (file_values, {k: v for k, v in (overrides or {}).items() if v is not None}):
            for k, v in src.items():
                if k == "eval":
                    merged["eval"].update(v)
                else:
                    merged[k] = v
        merged["scale"] = scale
        try:
            jsonschema.validate(merged, schema())
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from None
        return cls(**merged)

    @classmethod
    def load(cls, path, scale: str | None = None, overrides: dict | None = None) -> "ExperimentConfig":
        values = json.loads(Path(path).read_text())
        values.pop("meta", None)
        return cls.resolve(scale, values, overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        return digest({k: v for k, v in self.to_dict().items() if k not in HASH_EXCLUDE})

    def meta(self) -> dict:
        return {"version": __version__, "config_hash": self.hash}

    def stamp(self) -> str:
        return f"libivae {__version__} config {self.hash}"

    def grid(self, method: str, kind: str) -> list[dict]:
        if self.grids and method in self.grids:
            return [dict(p) for p in self.grids[method]]
        return default_grid_points(method, kind, self.scale)

    def dataset_names(self) -> list[tuple[str, int, str]]:
        return [(k, r, f"{k}_r{r}") for k in self.kinds for r in range(self.replicates)]


# -- paths ------------------------------------------------------------------------------

def _dirs(out) -> dict[str, Path]:
    out = Path(out)
    return {"root": out, "datasets": out / "datasets", "runs": out / "runs", "eval": out / "eval",
            "report": out / "report"}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_config(cfg: ExperimentConfig) -> Path:
    path = _dirs(cfg.out)["root"] / "config.json"
    _write_json(path, {**cfg.to_dict(), "meta": cfg.meta()})
    return path


def load_dataset(cfg: ExperimentConfig, name: str) -> Dataset:
    path = _dirs(cfg.out)["datasets"] / f"{name}.json"
    if not path.exists():
        raise PipelineError(f"missing dataset {path}; run `libivae gen` first")
    return Dataset.from_dict(json.loads(path.read_text()))


# -- gen ----------------------------------------------------------------------------------

def cmd_gen(cfg: ExperimentConfig) -> list[Path]:
    d = _dirs(cfg.out)
    d["datasets"].mkdir(parents=True, exist_ok=True)
    save_config(cfg)
    paths = []
    for kind, rep, name in cfg.dataset_names():
        seed = derive_seed(cfg.seed, kind, rep, "data")
        ds = sample_dataset(WorldSpec.default(kind, seed=seed), sizes=tuple(cfg.sizes))
        path = d["datasets"] / f"{name}.json"
        _write_json(path, {**ds.to_dict(), "meta": {**cfg.meta(), "name": name, "replicate": rep}})
        paths.append(path)
        log.info("wrote %s", path)
    manifest = {"meta": cfg.meta(), "files": {p.name: _sha256(p) for p in paths}}
    _write_json(d["datasets"] / "manifest.json", manifest)
    return paths


# -- train --------------------------------------------------------------------------------

def _run_path(cfg, name, method, gp, restart) -> Path:
    return _dirs(cfg.out)["runs"] / f"{name}__{method}__{gp}__s{restart}.json"


def train_jobs(cfg: ExperimentConfig) -> list[dict]:
    jobs = []
    for kind, rep, name in cfg.dataset_names():
        for method in cfg.methods:
            for point in cfg.grid(method, kind):
                gp = gridpoint_id(point)
                for restart in range(cfg.restarts):
                    jobs.append({"kind": kind, "replicate": rep, "dataset": name, "method": method,
                                 "point": point, "gridpoint": gp, "restart": restart,
                                 "seed": derive_seed(cfg.seed, kind, rep, method, gp, restart),
                                 "path": str(_run_path(cfg, name, method, gp, restart))})
    return jobs


def _run_job(cfg_dict: dict, job: dict) -> str:
    cfg = ExperimentConfig(**cfg_dict)
    ds = load_dataset(cfg, job["dataset"])
    mcfg = method_config(job["method"], job["point"], cfg.epochs, cfg.lr)
    try:
        _, _, record = train(mcfg, ds, np.random.default_rng(job["seed"]), seed=job["seed"])
    except DivergenceError as exc:
        record = RunRecord(method=job["method"], dataset=ds.name, seed=job["seed"], config=mcfg.to_dict(),
                           val_objective=float("inf"), status="failed", extra={"error": str(exc)})
    record.extra.update({"meta": cfg.meta(), "dataset_file": job["dataset"], "gridpoint": job["gridpoint"],
                         "restart": job["restart"]})
    record.save(job["path"])
    return job["path"]


def _done(path: str) -> bool:
    try:
        RunRecord.load(path)
        return True
    except (OSError, ValueError, TypeError, KeyError):
        return False


def cmd_train(cfg: ExperimentConfig, resume: bool = False) -> list[str]:
    for _, _, name in cfg.dataset_names():
        load_dataset(cfg, name)
    _dirs(cfg.out)["runs"].mkdir(parents=True, exist_ok=True)
    jobs = train_jobs(cfg)
    todo = [j for j in jobs if not (resume and _done(j["path"]))]
    log.info("%d training jobs (%d skipped)", len(todo), len(jobs) - len(todo))
    cfg_dict = cfg.to_dict()
    if cfg.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            list(pool.map(_run_job, itertools.repeat(cfg_dict), todo))
    else:
        for j in todo:
            _run_job(cfg_dict, j)
    return [j["path"] for j in jobs]


# -- eval ---------------------------------------------------------------------------------

def _eval_path(cfg, name, method, gp) -> Path:
    return _dirs(cfg.out)["eval"] / f"{name}__{method}__{gp}.json"


def _eval_settings(cfg: ExperimentConfig) -> dict:
    e = cfg.eval
    return {"S": e["S"], "inflation": e["inflation"], "k": e["k"], "subsample": e["subsample"],
            "repetitions": e["repetitions"]}


def ground_truth_proposal(ds: Dataset, seed: int):
    dec = ds.decoder()
    if dec.linear_gaussian() is not None:
        return dec, linear_posterior(dec)
    return dec, fit_posterior_network(dec, ds, np.random.default_rng(seed))


def cmd_eval(cfg: ExperimentConfig) -> list[Path]:
    written = []
    for kind, rep, name in cfg.dataset_names():
        ds = load_dataset(cfg, name)
        seed = derive_seed(cfg.seed, kind, rep, GROUND_TRUTH, "eval")
        dec, prop = ground_truth_proposal(ds, seed)
        res = evaluate(dec, prop, ds.test, ds.test, seed, **_eval_settings(cfg))
        path = _eval_path(cfg, name, GROUND_TRUTH, "default")
        _write_json(path, {"meta": cfg.meta(), "dataset": name, "world": kind, "replicate": rep,
                           "method": GROUND_TRUTH, "gridpoint": "default", "status": "ok", **res})
        written.append(path)
        for method in cfg.methods:
            for point in cfg.grid(method, kind):
                gp = gridpoint_id(point)
                paths = [_run_path(cfg, name, method, gp, r) for r in range(cfg.restarts)]
                missing = [p for p in paths if not p.exists()]
                if missing:
                    raise PipelineError(f"missing run records, e.g. {missing[0]}; run `libivae train`")
                records = [RunRecord.load(p) for p in paths]
                best = select_model(records)
                entry = {"meta": cfg.meta(), "dataset": name, "world": kind, "replicate": rep, "method": method,
                         "gridpoint": gp, "point": point, "record": paths[records.index(best)].name,
                         "status": best.status}
                if best.status == "ok":
                    dec, enc = best.model()
                    seed = derive_seed(cfg.seed, kind, rep, method, gp, "eval")
                    entry.update(evaluate(dec, enc, ds.test, ds.test, seed, **_eval_settings(cfg)))
                path = _eval_path(cfg, name, method, gp)
                _write_json(path, entry)
                written.append(path)
    return written


# -- report -------------------------------------------------------------------------------

def _load_evals(cfg: ExperimentConfig) -> list[dict]:
    d = _dirs(cfg.out)["eval"]
    files = sorted(d.glob("*.json")) if d.exists() else []
    if not files:
        raise PipelineError(f"no evaluation results under {d}; run `libivae eval`")
    return [json.loads(p.read_text()) for p in files]


def _finite_mean(v):
    v = [x for x in v if x is not None and np.isfinite(x)]
    return (float(np.mean(v)), float(np.std(v))) if v else (float("nan"), float("nan"))


def choose_gridpoints(cfg: ExperimentConfig, evals: list[dict]) -> dict:
    """Per (world, method): the grid point with the highest average test log-likelihood."""
    chosen = {}
    for kind in cfg.kinds:
        for method in cfg.methods:
            best = None
            for point in cfg.grid(method, kind):
                gp = gridpoint_id(point)
                rows = [e for e in evals if e["world"] == kind and e["method"] == method and e["gridpoint"] == gp]
                lls = [e.get("test_ll") if e["status"] == "ok" else None for e in rows]
                ok = all(v is not None and np.isfinite(v) for v in lls) and len(rows) == cfg.replicates
                score = float(np.mean(lls)) if ok else -np.inf
                if best is None or score > best[0]:
                    best = (score, gp, sorted(rows, key=lambda e: e["replicate"]))
            chosen[(kind, method)] = best
    return chosen


TABLE_COLUMNS = ["world", "method", "gridpoint", "test_ll_mean", "test_ll_std", "two_sample_mean",
                 "two_sample_std", "replicates", "failed", "ll_reliable"]


def _fmt(v) -> str:
    return "nan" if v is None or not np.isfinite(v) else f"{v:.6f}"


def write_table(cfg: ExperimentConfig, chosen: dict, path: Path) -> list[list[str]]:
    rows = []
    for kind in cfg.kinds:
        for method in cfg.methods:
            _, gp, evs = chosen[(kind, method)]
            ok = [e for e in evs if e["status"] == "ok"]
            ll = _finite_mean([e["test_ll"] for e in ok])
            ts = _finite_mean([e["two_sample"] for e in ok])
            rows.append([kind, method, gp, _fmt(ll[0]), _fmt(ll[1]), _fmt(ts[0]), _fmt(ts[1]), str(len(ok)),
                         str(len(evs) - len(ok)), str(kind not in LL_UNRELIABLE).lower()])
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {cfg.stamp()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        w.writerows(rows)
    return rows


def _write_points(path: Path, stamp: str, header: list[str], rows) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in r])
            n += 1
    return n


def write_fig1_grids(out_dir: Path, stamp: str, n: int = 20) -> dict:
    """Fig. 1 A/B: best-fit posterior matching and I(X;Z) over diagonal B on LinearJTEx."""
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = WorldSpec.default("LinearJTEx")
    g = default_grid(spec, n)
    grid = pm_grid(spec, g, g)
    for name, values, title in (("fig1a_pm_grid", grid.pm, "posterior matching objective"),
                                ("fig1b_mi_grid", grid.mi, "mutual information I(X;Z)")):
        rows = [(b1, b2, values[i, j]) for i, b1 in enumerate(grid.b11) for j, b2 in enumerate(grid.b22)]
        _write_points(out_dir / f"{name}.csv", stamp, ["B11", "B22", "value"], rows)
        heatmap(out_dir / f"{name}.svg", grid.b11, grid.b22, values, title, stamp, xlabel="B22", ylabel="B11")
    i, j = grid.argmin()
    return {"argmin": {"i": i, "j": j, "B11": float(grid.b11[i]), "B22": float(grid.b22[j])},
            "expected_argmin": {"i": n - 1, "j": 0},
            "mi_at_argmin": float(grid.mi[i, j]), "mi_min": float(grid.mi.min()), "mi_max": float(grid.mi.max()),
            "pm_min": float(grid.pm.min()), "n": n}


def _selected_models(cfg: ExperimentConfig, chosen: dict, kind: str, replicate: int = 0) -> dict:
    models = {}
    for method in cfg.methods:
        _, gp, evs = chosen[(kind, method)]
        e = next((e for e in evs if e["replicate"] == replicate and e["status"] == "ok"), None)
        if e is None:
            continue
        rec = RunRecord.load(_dirs(cfg.out)["runs"] / e["record"])
        models[method] = rec
    return models


def write_figure_data(cfg: ExperimentConfig, chosen: dict, out_dir: Path) -> dict:
    stamp = cfg.stamp()
    info = {}
    kind = "LinearJTEx" if "LinearJTEx" in cfg.kinds else cfg.kinds[0]
    name = f"{kind}_r0"
    ds = load_dataset(cfg, name)
    models = _selected_models(cfg, chosen, kind)
    m = cfg.eval["aggregated"]
    rng = np.random.default_rng(derive_seed(cfg.seed, kind, 0, "figures"))
    gt = ds.decoder()

    # C/D: data and model samples
    groups = {"data": ds.test, GROUND_TRUTH: gt.sample(rng, len(ds.test))}
    for method, rec in models.items():
        dec, _ = rec.model()
        groups[method] = dec.sample(rng, len(ds.test))
    header = ["source"] + [f"x{i + 1}" for i in range(ds.spec.data_dim)]
    rows = [(src, *row) for src, pts in groups.items() for row in pts]
    info["fig1cd_points"] = _write_points(out_dir / "fig1cd_data.csv", stamp, header, rows)
    info["fig1cd_world"] = kind
    scatter(out_dir / "fig1cd_data.svg", {k: v[:, :2] for k, v in groups.items()}, f"{kind}: data and model samples",
            stamp)

    # E/F: prior and aggregated posteriors
    d = ds.spec.latent_dim
    agg = {"prior": rng.standard_normal((m, d))}
    if gt.linear_gaussian() is not None:
        agg[GROUND_TRUTH] = aggregated_posterior(linear_posterior(gt), ds.train, rng, m)
    for method, rec in models.items():
        _, enc = rec.model()
        agg[method] = aggregated_posterior(enc, ds.train, rng, m)
    rows = [(src, *row) for src, pts in agg.items() for row in pts]
    info["fig1ef_points"] = _write_points(out_dir / "fig1ef_aggposterior.csv", stamp,
                                          ["source"] + [f"z{i + 1}" for i in range(d)], rows)
    scatter(out_dir / "fig1ef_aggposterior.svg", agg, f"{kind}: prior and aggregated posteriors", stamp)

    # posterior means against the generating latents, one file per world
    for kind in cfg.kinds:
        ds = load_dataset(cfg, f"{kind}_r0")
        models = _selected_models(cfg, chosen, kind)
        d = ds.spec.latent_dim
        sources = {}
        gt = ds.decoder()
        if gt.linear_gaussian() is not None:
            sources[GROUND_TRUTH] = linear_posterior(gt)(ds.test)[0]
        for method, rec in models.items():
            _, enc = rec.model()
            sources[method] = enc.moments(ds.test)[0]
        rows = [(src, str(i), *ds.z_test[i], *mu[i]) for src, mu in sources.items() for i in range(len(ds.test))]
        header = ["source", "index"] + [f"z{i + 1}" for i in range(d)] + [f"mean{i + 1}" for i in range(d)]
        info[f"posterior_means_{kind}"] = _write_points(out_dir / f"posterior_means_{kind}.csv", stamp, header, rows)
    return info


def run_checks(cfg: ExperimentConfig, evals: list[dict], chosen: dict, fig: dict) -> list[tuple[str, bool, str]]:
    checks = []
    am, ex = fig["argmin"], fig["expected_argmin"]
    checks.append(("fig1a argmin at (max B11, min B22)", (am["i"], am["j"]) == (ex["i"], ex["j"]),
                   f"argmin=({am['i']},{am['j']}) expected=({ex['i']},{ex['j']})"))
    checks.append(("fig1b MI at argmin strictly inside grid range",
                   fig["mi_min"] < fig["mi_at_argmin"] < fig["mi_max"],
                   f"{fig['mi_min']:.4f} < {fig['mi_at_argmin']:.4f} < {fig['mi_max']:.4f}"))
    if "libi" in cfg.methods and "vae" in cfg.methods:
        for kind in cfg.kinds:
            libi = {e["replicate"]: e for e in chosen[(kind, "libi")][2]}
            vae = {e["replicate"]: e for e in chosen[(kind, "vae")][2]}
            for rep in range(cfg.replicates):
                a, b = libi.get(rep), vae.get(rep)
                if a is None or b is None or a["status"] != "ok" or b["status"] != "ok":
                    checks.append((f"{kind} r{rep} libi vs vae", False, "missing or failed run"))
                    continue
                checks.append((f"{kind} r{rep} two-sample libi < vae", a["two_sample"] < b["two_sample"],
                               f"{a['two_sample']:.4f} vs {b['two_sample']:.4f}"))
                if kind not in LL_UNRELIABLE:
                    checks.append((f"{kind} r{rep} test-LL libi >= vae - 0.05", a["test_ll"] >= b["test_ll"] - 0.05,
                                   f"{a['test_ll']:.4f} vs {b['test_ll']:.4f}"))
    return checks


def cmd_report(cfg: ExperimentConfig, check: bool = False) -> tuple[Path, list]:
    evals = _load_evals(cfg)
    out_dir = _dirs(cfg.out)["report"]
    out_dir.mkdir(parents=True, exist_ok=True)
    chosen = choose_gridpoints(cfg, evals)
    table = out_dir / "table.csv"
    write_table(cfg, chosen, table)
    fig = write_fig1_grids(out_dir, cfg.stamp())
    info = write_figure_data(cfg, chosen, out_dir)
    checks = run_checks(cfg, evals, chosen, fig)
    gt = {}
    for e in evals:
        if e["method"] == GROUND_TRUTH:
            gt.setdefault(e["world"], {})[e["dataset"]] = {"test_ll": e["test_ll"], "two_sample": e["two_sample"]}
    summary = {"meta": cfg.meta(), "fig1": fig, "figure_points": info, "ground_truth": gt,
               "gridpoints": {f"{k}/{m}": v[1] for (k, m), v in chosen.items()},
               "checks": [{"name": n, "passed": bool(p), "detail": d} for n, p, d in checks] if check else []}
    _write_json(out_dir / "summary.json", summary)
    return table, checks


def cmd_sweep_fig1(cfg: ExperimentConfig, n: int = 20) -> dict:
    out_dir = _dirs(cfg.out)["report"]
    fig = write_fig1_grids(out_dir, cfg.stamp(), n)
    _write_json(out_dir / "fig1_summary.json", {"meta": cfg.meta(), "fig1": fig})
    return fig


def codes_of(record: RunRecord, X: np.ndarray) -> np.ndarray:
    """Step-1 codes h(X) of a LiBI run record."""
    if not record.point_encoder:
        raise ValueError("record has no point encoder")
    return PointEncoder(MLP.from_dict(record.point_encoder["net"]))(Tensor(X)).data

