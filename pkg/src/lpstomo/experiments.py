"""Config-driven tomography sweeps and their CSV/JSON/SVG outputs.

Config files are YAML.  Schema (``version: 1``)::

    version: 1
    kind: nbeta-sweep | nm-scaling | noise-sweep | ghz-study | single-fit
    n_qubits: 4
    chi: 4
    n_beta: [0, 2, 4]        # ghz-study ignores this and trains N_beta = 0 and N
    n_m: [10, 20, 40, 80]
    n_shots: 8192            # 0 means exact probabilities
    eps: [0.0]               # depolarizing strengths applied to every target
    target:
      type: random           # random | ghz | file
      purities: [1.0, 0.6]   # random only
      beta: 0.0              # ghz only
      gammas: null           # ghz only; null draws phases from master_seed
      path: rho.json         # file only
    trainer: {learning_rate: 0.02, tol: 1.0e-5, patience: 50}
    seeds: 5
    master_seed: 0
    baseline: false          # also report the linear-inversion estimate
    workers: 1
    out_dir: results
    tag: null

CSV columns, one row per (cell, seed):

``cell``            grid cell index
``target``          target label (``purity=0.6``, ``ghz``, file stem)
``purity``          purity of the ideal target
``entropy``         von Neumann entropy of the ideal target (nats)
``n_qubits, chi, n_beta, n_m, n_shots, eps, seed``  cell coordinates
``f_in``            infidelity of the trained model against the ideal target
``mse``             dataset loss of the returned model
``epochs``          training epochs
``f_in_ls``         linear-inversion infidelity (empty unless ``baseline``)
``status``          ``ok`` or ``failed``
``error``           diagnostic for failed cells

Wall times live in the JSON output only, so that CSV bytes are a pure
function of the config.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .baseline import ls_reconstruct
from .lps import LpsHyperparams, product_probabilities, to_dense
from .metrics import DegenerateFitError, infidelity, linear_fit
from .povm import sample_bases, sample_dataset
from .states import depolarize, ghz, ghz_local_kets, load_density_matrix, purity, random_mixed, von_neumann_entropy
from .trainer import TrainConfig, fit

__all__ = [
    "CONFIG_VERSION",
    "KINDS",
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "SweepResult",
    "load_config",
    "run",
    "ghz_study",
    "emit",
    "load_result",
]

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
KINDS = ("nbeta-sweep", "nm-scaling", "noise-sweep", "ghz-study", "single-fit")
CSV_COLUMNS = (
    "cell",
    "target",
    "purity",
    "entropy",
    "n_qubits",
    "chi",
    "n_beta",
    "n_m",
    "n_shots",
    "eps",
    "seed",
    "f_in",
    "mse",
    "epochs",
    "f_in_ls",
    "status",
    "error",
)
# tuned on N=4 desk runs; the library default of 5e-3 converges to the same
# losses but takes about four times as many epochs
DEFAULT_TRAINER = {"learning_rate": 2e-2, "tol": 1e-5, "patience": 50}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    n_qubits: int = 4
    chi: int = 4
    n_beta: list = field(default_factory=lambda: [0])
    n_m: list = field(default_factory=lambda: [81])
    n_shots: int = 8192
    eps: list = field(default_factory=lambda: [0.0])
    target: dict = field(default_factory=lambda: {"type": "random", "purities": [1.0]})
    trainer: dict = field(default_factory=lambda: dict(DEFAULT_TRAINER))
    seeds: int = 5
    master_seed: int = 0
    baseline: bool = False
    workers: int = 1
    out_dir: str = "results"
    tag: str | None = None
    version: int = CONFIG_VERSION

    def __post_init__(self):
        self.n_beta = [int(b) for b in _as_list(self.n_beta)]
        self.n_m = [int(m) for m in _as_list(self.n_m)]
        self.eps = [float(e) for e in _as_list(self.eps)]
        self.validate()

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.n_qubits < 1:
            raise ConfigError("n_qubits must be >= 1")
        if self.chi < 1:
            raise ConfigError("chi must be >= 1")
        for name in ("n_beta", "n_m", "eps"):
            if not getattr(self, name):
                raise ConfigError(f"grid {name} is empty")
        if any(not 0 <= b <= self.n_qubits for b in self.n_beta):
            raise ConfigError(f"n_beta values must lie in [0, {self.n_qubits}]")
        if any(not 0 < m <= 3**self.n_qubits for m in self.n_m):
            raise ConfigError(f"n_m values must lie in [1, {3**self.n_qubits}] for {self.n_qubits} qubits")
        if any(not 0 <= e <= 1 for e in self.eps):
            raise ConfigError("eps values must lie in [0, 1]")
        if self.n_shots < 0:
            raise ConfigError("n_shots must be >= 0")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.kind in ("nm-scaling", "noise-sweep") and len(self.n_m) < 3:
            raise ConfigError(f"{self.kind} needs at least 3 n_m values for a line fit")
        self._validate_target()
        try:
            TrainConfig(**self.trainer)
        except TypeError as exc:
            raise ConfigError(f"bad trainer section: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def _validate_target(self):
        t = self.target
        kind = t.get("type")
        if kind == "random":
            ps = _as_list(t.get("purities", []))
            if not ps:
                raise ConfigError("random target needs a non-empty purities list")
            lo = 2.0**-self.n_qubits
            if any(not lo <= float(p) <= 1 for p in ps):
                raise ConfigError(f"purities must lie in [{lo}, 1]")
        elif kind == "ghz":
            g = t.get("gammas")
            if g is not None and len(g) != self.n_qubits:
                raise ConfigError(f"ghz target needs {self.n_qubits} gammas")
        elif kind == "file":
            path = t.get("path")
            if not path or not Path(path).is_file():
                raise ConfigError(f"target file {path!r} does not exist")
        else:
            raise ConfigError(f"unknown target type {kind!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "kind" not in d:
            raise ConfigError("config is missing 'kind'")
        d = dict(d)
        trainer = dict(DEFAULT_TRAINER)
        trainer.update(d.get("trainer") or {})
        d["trainer"] = trainer
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    def trainer_config(self, seed: int) -> TrainConfig:
        return TrainConfig(**{**self.trainer, "seed": seed})


def _as_list(x):
    if x is None:
        return []
    if isinstance(x, (list, tuple)):
        return list(x)
    return [x]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


@dataclass
class SweepResult:
    config: dict
    rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.config["kind"]

    @property
    def failed(self) -> list:
        return [r for r in self.rows if r["status"] != "ok"]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d) -> "SweepResult":
        return cls(**d)

    def select(self, **where) -> list:
        return [r for r in self.rows if all(r.get(k) == v for k, v in where.items())]


# -- targets and random streams ---------------------------------------------


def _targets(cfg: ExperimentConfig):
    """``[(label, kind, payload)]`` for every ideal target in the config."""
    t = cfg.target
    if t["type"] == "random":
        return [(f"purity={float(p):g}", "random", float(p)) for p in t["purities"]]
    if t["type"] == "ghz":
        return [("ghz", "ghz", None)]
    return [(Path(t["path"]).stem, "file", t["path"])]


def ghz_phases(cfg: ExperimentConfig) -> np.ndarray:
    g = cfg.target.get("gammas")
    if g is not None:
        return np.asarray(g, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0x6A2]))
    return rng.uniform(0.0, 2 * np.pi, cfg.n_qubits)


def stream_seeds(master_seed: int, target_index: int, rep: int) -> dict:
    """Independent seeds for one (target, replicate) pair.

    Every grid point of the pair reuses them, so curves along N_m, N_beta and
    eps see the same target, nested basis sets and the same shot stream.
    """
    words = np.random.SeedSequence([master_seed, target_index, rep]).generate_state(4, dtype=np.uint32)
    return dict(zip(("target", "bases", "shots", "init"), (int(w) for w in words)))


def _ideal_target(cfg: ExperimentConfig, target, seeds) -> np.ndarray:
    _, kind, payload = target
    if kind == "random":
        return random_mixed(cfg.n_qubits, payload, seed=seeds["target"])
    if kind == "ghz":
        return ghz(cfg.n_qubits, float(cfg.target.get("beta", 0.0)), ghz_phases(cfg))
    rho = load_density_matrix(payload)
    if rho.shape[0] != 2**cfg.n_qubits:
        raise ValueError(f"target file holds a {rho.shape[0]}-dim state, config says {cfg.n_qubits} qubits")
    return rho


# -- cells --------------------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    cell: int
    target_index: int
    rep: int
    n_betas: tuple
    n_m: int
    eps: float


def _jobs(cfg: ExperimentConfig) -> list:
    jobs = []
    n_targets = len(_targets(cfg))
    if cfg.kind == "ghz-study":
        beta_groups = [(0, cfg.n_qubits)]
    else:
        beta_groups = [(b,) for b in cfg.n_beta]
    grid = itertools.product(range(n_targets), beta_groups, cfg.n_m, cfg.eps)
    for cell, (ti, betas, nm, eps) in enumerate(grid):
        for rep in range(cfg.seeds):
            jobs.append(_Job(cell, ti, rep, betas, nm, eps))
    return jobs


def _pm_choices(n: int) -> np.ndarray:
    # local state 2n + s is |+_n> (s=0) or |-_n> (s=1)
    bits = np.array(list(itertools.product((0, 1), repeat=n)))
    return bits + 2 * np.arange(n)[None, :]


def _run_job(cfg_dict: dict, job: _Job) -> list:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    target = _targets(cfg)[job.target_index]
    seeds = stream_seeds(cfg.master_seed, job.target_index, job.rep)
    base = {
        "cell": job.cell,
        "target": target[0],
        "purity": None,
        "entropy": None,
        "n_qubits": cfg.n_qubits,
        "chi": cfg.chi,
        "n_m": job.n_m,
        "n_shots": cfg.n_shots,
        "eps": job.eps,
        "seed": job.rep,
        "f_in": None,
        "mse": None,
        "epochs": None,
        "f_in_ls": None,
        "status": "ok",
        "error": "",
        "wall_time": 0.0,
    }
    try:
        ideal = _ideal_target(cfg, target, seeds)
        base["purity"] = purity(ideal)
        base["entropy"] = von_neumann_entropy(ideal)
        noisy = depolarize(ideal, job.eps)
        # nested basis sets: every N_m takes a prefix of one random permutation
        order = sample_bases(cfg.n_qubits, 3**cfg.n_qubits, seed=seeds["bases"])
        data = sample_dataset(
            noisy,
            order[: job.n_m],
            cfg.n_shots,
            seed=seeds["shots"],
            metadata={"target": target[0], "eps": job.eps, "seed": job.rep},
        )
        if cfg.baseline:
            base["f_in_ls"] = infidelity(ls_reconstruct(data).rho, ideal)
    except Exception as exc:  # noqa: BLE001 - recorded per cell
        return [_failed(base, b, exc) for b in job.n_betas]

    rows = []
    for nb in job.n_betas:
        row = dict(base, n_beta=nb)
        t0 = time.perf_counter()
        try:
            h = LpsHyperparams(cfg.n_qubits, chi=cfg.chi, n_beta=nb, seed=seeds["init"])
            model, report = fit(h, data, cfg.trainer_config(seeds["init"]))
            dense = to_dense(model)
            dense = dense / np.trace(dense).real
            row.update(f_in=infidelity(dense, ideal), mse=report.best_loss, epochs=report.epochs)
            if target[1] == "ghz":
                kets = ghz_local_kets(cfg.n_qubits, ghz_phases(cfg)).reshape(-1, 2)
                row["pm_probs"] = product_probabilities(model, _pm_choices(cfg.n_qubits), kets).tolist()
        except Exception as exc:  # noqa: BLE001
            row = _failed(row, nb, exc)
        row["wall_time"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def _failed(row, nb, exc) -> dict:
    log.warning("cell %s (n_beta=%s, seed=%s) failed: %s", row["cell"], nb, row["seed"], exc)
    return dict(row, n_beta=nb, status="failed", error=f"{type(exc).__name__}: {exc}")


# -- aggregation --------------------------------------------------------------


def _median(xs):
    xs = [x for x in xs if x is not None]
    return float(np.median(xs)) if xs else None


def _curve_key(row, fields):
    return tuple((f, row[f]) for f in fields)


def _aggregate(cfg: ExperimentConfig, rows: list):
    ok = [r for r in rows if r["status"] == "ok"]
    fits, summary, extras = [], [], {}

    point_fields = ("target", "n_beta", "n_m", "eps")
    groups = {}
    for r in ok:
        groups.setdefault(_curve_key(r, point_fields), []).append(r)
    for key, rs in groups.items():
        summary.append(
            dict(
                key,
                median_f_in=_median([r["f_in"] for r in rs]),
                median_mse=_median([r["mse"] for r in rs]),
                median_f_in_ls=_median([r["f_in_ls"] for r in rs]),
                n_ok=len(rs),
            )
        )

    if cfg.kind in ("nm-scaling", "noise-sweep"):
        curves = {}
        for r in ok:
            curves.setdefault(_curve_key(r, ("target", "n_beta", "eps")), {}).setdefault(r["seed"], []).append(r)
        for key, by_seed in curves.items():
            per_seed = []
            for seed, rs in sorted(by_seed.items()):
                pts = [(1 / np.sqrt(r["n_m"]), r["f_in"]) for r in sorted(rs, key=lambda r: r["n_m"])]
                try:
                    f = linear_fit(pts)
                except (ValueError, DegenerateFitError) as exc:
                    fits.append(dict(key, seed=seed, slope=None, intercept=None, r_squared=None, error=str(exc)))
                    continue
                fits.append(dict(key, seed=seed, slope=f.slope, intercept=f.intercept, r_squared=f.r_squared, error=""))
                per_seed.append(f)
            fits.append(
                dict(
                    key,
                    seed="median",
                    slope=_median([f.slope for f in per_seed]),
                    intercept=_median([f.intercept for f in per_seed]),
                    r_squared=_median([f.r_squared for f in per_seed]),
                    error="" if per_seed else "no fittable seeds",
                )
            )
        if cfg.kind == "nm-scaling":
            extras["entropy_power_law"] = _entropy_power_law(ok, fits)
    return fits, summary, extras


def _entropy_power_law(rows, fits) -> dict:
    """Fit ln k against ln S_VN across targets, using each curve's median slope."""
    entropy = {r["target"]: r["entropy"] for r in rows}
    pts = []
    for f in fits:
        if f["seed"] != "median" or f["slope"] is None:
            continue
        s = entropy.get(f["target"])
        if s is not None and s > 1e-9 and f["slope"] > 0:
            pts.append((float(np.log(s)), float(np.log(f["slope"]))))
    if len(pts) < 3:
        return {"status": "skipped", "reason": f"need 3 curves with positive slope and entropy, have {len(pts)}"}
    try:
        f = linear_fit(pts)
    except DegenerateFitError as exc:
        return {"status": "skipped", "reason": str(exc)}
    return {"status": "ok", "exponent": f.slope, "log_prefactor": f.intercept, "r_squared": f.r_squared, "points": pts}


# -- entry points -------------------------------------------------------------


def run(cfg: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """Run every (cell, seed) of ``cfg``; failures are recorded, not raised."""
    workers = workers or cfg.workers
    cfg_dict = cfg.to_dict()
    jobs = _jobs(cfg)
    log.info("%s: %d jobs on %d worker(s)", cfg.kind, len(jobs), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_job, [cfg_dict] * len(jobs), jobs))
    else:
        batches = [_run_job(cfg_dict, j) for j in jobs]
    rows = [r for batch in batches for r in batch]
    rows.sort(key=lambda r: (r["cell"], r["n_beta"], r["seed"]))
    fits, summary, extras = _aggregate(cfg, rows)
    if cfg.kind == "ghz-study":
        extras["gammas"] = ghz_phases(cfg).tolist()
    return SweepResult(cfg_dict, rows, fits, summary, extras)


def ghz_study(cfg: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """Train pure (N_beta=0) and fully mixed (N_beta=N) models on noisy GHZ data."""
    if cfg.kind != "ghz-study" or cfg.target.get("type") != "ghz":
        raise ConfigError("ghz_study needs kind 'ghz-study' and a ghz target")
    return run(cfg, workers)


# -- output -------------------------------------------------------------------


def result_stem(result: SweepResult, tag: str | None = None) -> str:
    tag = tag or result.config.get("tag") or time.strftime("%Y%m%dT%H%M%S")
    return f"{result.kind}-{tag}"


def to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in result.rows:
        w.writerow({k: _csv_value(r.get(k)) for k in CSV_COLUMNS})
    return buf.getvalue()


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def emit(result: SweepResult, out_dir, formats=("csv", "json", "svg"), tag: str | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    stem = result_stem(result, tag)
    written = []
    for fmt in formats:
        path = out_dir / f"{stem}.{fmt}"
        if fmt == "csv":
            path.write_text(to_csv(result))
        elif fmt == "json":
            path.write_text(json.dumps(result.to_dict(), indent=1, sort_keys=True))
        elif fmt == "svg":
            _plot(result, path)
        else:
            raise ValueError(f"unknown output format {fmt!r}")
        written.append(path)
    return written


def load_result(path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))


def _plot(result: SweepResult, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "lpstomo"
    kind = result.kind
    fig, ax = plt.subplots(figsize=(5, 3.6))
    summary = result.summary
    if kind == "nbeta-sweep":
        for label in sorted({s["target"] for s in summary}):
            pts = sorted((s["n_beta"], s["median_f_in"]) for s in summary if s["target"] == label)
            ax.plot(*zip(*pts), marker="o", label=label)
        ax.set_xlabel("N_beta")
        ax.set_ylabel("median F_in")
    elif kind in ("nm-scaling", "noise-sweep"):
        curves = sorted({(s["target"], s["n_beta"], s["eps"]) for s in summary})
        for target, nb, eps in curves:
            pts = sorted(
                (1 / np.sqrt(s["n_m"]), s["median_f_in"])
                for s in summary
                if (s["target"], s["n_beta"], s["eps"]) == (target, nb, eps)
            )
            label = f"{target} eps={eps:g}" if kind == "noise-sweep" else f"{target} N_beta={nb}"
            ax.plot(*zip(*pts), marker="o", label=label)
        ax.set_xlabel("1/sqrt(N_m)")
        ax.set_ylabel("median F_in")
    elif kind == "ghz-study":
        rows = [r for r in result.rows if r["status"] == "ok" and "pm_probs" in r]
        if rows:
            fig.set_size_inches(8, 3.6)
            ax.remove()
            n = rows[0]["n_qubits"]
            picks = []
            for nb in sorted({r["n_beta"] for r in rows}):
                cand = [r for r in rows if r["n_beta"] == nb]
                picks.append(min(cand, key=lambda r: (r["eps"], -r["n_m"], r["seed"])))
            for k, r in enumerate(picks):
                a = fig.add_subplot(1, len(picks), k + 1)
                grid = np.asarray(r["pm_probs"]).reshape(2 ** (n // 2), 2 ** (n - n // 2))
                im = a.imshow(grid, cmap="viridis", vmin=0, vmax=max(0.5, grid.max()))
                a.set_title(f"N_beta={r['n_beta']} eps={r['eps']:g} N_m={r['n_m']}", fontsize=8)
                a.set_xlabel("last qubits (+/- index)")
                a.set_ylabel("first qubits (+/- index)")
                fig.colorbar(im, ax=a, fraction=0.046)
    else:
        pts = sorted((r["n_m"], r["f_in"]) for r in result.rows if r["status"] == "ok")
        if pts:
            ax.plot(*zip(*pts), "o")
        ax.set_xlabel("N_m")
        ax.set_ylabel("F_in")
    if fig.axes and fig.axes[0].get_legend_handles_labels()[0]:
        fig.axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
