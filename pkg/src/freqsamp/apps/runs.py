"""End-to-end runs behind the command-line subcommands.

Each ``run_*`` function takes a fully merged config dict and an output
directory, writes its artifacts there and returns a JSON-friendly summary.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from ..antialias import choose_gamma, enveloped_grid
from ..checks import CASES, run_gradcheck_suite
from ..errors import ConfigurationError
from ..grid import FrequencyGrid, make_grid
from ..system import Magnitude, Shell, grid_to_dict, system_from_dict, system_to_dict
from ..training import Dataset, LossTerm, TrainConfig, loss_spectral_flatness, loss_temporal_sparsity, train
from .aa import AaLoop, AaSpec, load_room_responses, max_magnitude_penalty
from .audio import read_wav, write_wavs
from .fdn import FDN, FdnSpec, normalize_gains
from .metrics import echo_density, eig_magnitude_distribution, write_echo_density_csv, write_eig_csv

log = logging.getLogger(__name__)

SCHEMA = "flamo-spec-1"

TRAIN_DEFAULTS = {"epochs": 300, "lr": 0.02, "optimizer": "adam", "betas": [0.9, 0.999], "eps": 1e-8,
                  "log_every": 10, "patience": None}

DEFAULTS = {
    "fdn-optim": {
        "schema": SCHEMA,
        "seed": 0,
        "sample_rate": 48000,
        "num_bins": 4801,
        "antialias_db": 60.0,
        "fdn": {"size": 6, "delays": None, "geq_resolution": "octave"},
        "loss_weights": {"flatness": 1.0, "sparsity": 0.3},
        "sparsity_on": ["b", "c", "A"],
        "train": TRAIN_DEFAULTS,
        "render": {
            "num_bins": None,
            "t60": [1.2, 1.2, 1.1, 1.0, 1.0, 0.9, 0.8, 0.7, 0.6, 0.6],
            "echo_window_ms": 20.0,
        },
    },
    "aa-optim": {
        "schema": SCHEMA,
        "seed": 0,
        "sample_rate": 16000,
        "num_bins": 4001,
        "antialias_db": 0.0,
        "aa": {"mics": 4, "louds": 4, "room_t60": 0.3, "reverb_t60": 0.1, "fir_taps": 64, "gain": 1.0,
               "room_dir": None},
        "loss_weights": {"flatness": 1.0, "max_magnitude": 0.0},
        "max_magnitude_limit": 1.0,
        "train": {**TRAIN_DEFAULTS, "epochs": 200, "lr": 0.01},
    },
    "render": {
        "schema": SCHEMA,
        "seed": 0,
        "sample_rate": 48000,
        "num_bins": 4097,
        "antialias_db": 0.0,
        "system": None,
        "system_file": None,
        "normalize": True,
    },
    "gradcheck": {
        "schema": SCHEMA,
        "seed": 0,
        "sample_rate": 48000,
        "num_bins": 4096,
        "seeds": 10,
        "cases": None,
        "tol": 1e-4,
    },
    "metrics": {
        "schema": SCHEMA,
        "seed": 0,
        "kind": "echo-density",
        "input": None,
        "window_ms": 20.0,
        "shape": "hann",
        "sample_rate": 48000,
        "num_bins": 4097,
        "antialias_db": 0.0,
        "system": None,
        "system_file": None,
    },
}


def merge_config(command: str, user: dict) -> dict:
    """Overlay ``user`` on the defaults of ``command``; unknown keys are errors."""
    if command not in DEFAULTS:
        raise ConfigurationError(f"unknown command {command!r}")
    if not isinstance(user, dict):
        raise ConfigurationError("config must be a JSON object")
    schema = user.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigurationError(f"unsupported config schema {schema!r}; expected {SCHEMA!r}")
    return _merge(copy.deepcopy(DEFAULTS[command]), user, command)


def _merge(base: dict, user: dict, where: str) -> dict:
    for key, value in user.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {where}.{key}")
        if isinstance(base[key], dict) and base[key] and isinstance(value, dict):
            base[key] = _merge(base[key], value, f"{where}.{key}")
        else:
            base[key] = value
    return base


def _train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(epochs=int(t["epochs"]), lr=float(t["lr"]), optimizer=t["optimizer"],
                       betas=tuple(t["betas"]), eps=float(t["eps"]), seed=int(cfg["seed"]),
                       log_every=int(t["log_every"]), patience=t["patience"])


def _grid(cfg: dict, num_bins=None) -> FrequencyGrid:
    base = make_grid(int(num_bins or cfg["num_bins"]), float(cfg["sample_rate"]))
    db = float(cfg.get("antialias_db") or 0.0)
    if db > 0:
        return enveloped_grid(base, choose_gamma(base.num_bins, base.sample_rate, db))
    return base


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))


def _finite_or_none(x: float):
    return None if not math.isfinite(x) else x


# --- fdn-optim --------------------------------------------------------------

def _render_fdn(fdn: FDN, cfg: dict, t60) -> tuple[FDN, np.ndarray]:
    """Copy of ``fdn`` with attenuation ``t60`` on the render grid, and its IR."""
    fs = float(cfg["sample_rate"])
    num_bins = cfg["render"]["num_bins"] or int(fs) + 1
    grid = _grid({**cfg, "antialias_db": cfg["antialias_db"] or 60.0}, num_bins)
    spec = FdnSpec(**{**fdn.spec.__dict__, "t60": t60, "delays": [float(m) for m in fdn.delay_samples()]})
    render = FDN(spec, grid, name=fdn.name)
    trained = {m.name: m for m in fdn.modules()}
    for dst in render.modules():
        if dst.name in trained:
            dst.raw = trained[dst.name].raw.copy()
    h = Shell(render).get_time_response().samples[:, 0]
    return render, h


def run_fdn_optim(cfg: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fs = float(cfg["sample_rate"])
    grid = _grid(cfg)
    f = cfg["fdn"]
    fdn = FDN(FdnSpec(size=int(f["size"]), delays=f["delays"], geq_resolution=f["geq_resolution"],
                      seed=int(cfg["seed"])), grid)
    normalize_gains(fdn)
    shell = Shell(fdn, output_layer=Magnitude())

    weights = cfg["loss_weights"]
    sources = {"b": lambda tape: fdn.input_gain.param(tape),
               "c": lambda tape: fdn.output_gain.param(tape),
               "A": lambda tape: fdn.matrix.mapped(tape)}
    unknown = set(cfg["sparsity_on"]) - set(sources)
    if unknown:
        raise ConfigurationError(f"sparsity_on accepts b, c, A; got {sorted(unknown)}")
    losses = [LossTerm("flatness", lambda o, t, tape: loss_spectral_flatness(o), float(weights["flatness"]))]
    if weights.get("sparsity", 0.0):
        losses.append(LossTerm(
            "sparsity",
            lambda o, t, tape: loss_temporal_sparsity(*(sources[k](tape) for k in cfg["sparsity_on"])),
            float(weights["sparsity"]),
        ))

    std_initial = float(np.std(np.abs(fdn.matrix_response().value[:, 0, 0])))
    render_t60 = cfg["render"]["t60"]
    initial_render, h0 = _render_fdn(fdn, cfg, render_t60)

    report = train(shell, Dataset.impulse(), _train_config(cfg), losses, out_dir=out)

    std_final = float(np.std(np.abs(fdn.matrix_response().value[:, 0, 0])))
    final_render, h1 = _render_fdn(fdn, cfg, render_t60)
    window = int(round(cfg["render"]["echo_window_ms"] * 1e-3 * fs))
    ed0 = echo_density(h0, fs, window)
    ed1 = echo_density(h1, fs, window)
    write_echo_density_csv(out / "echo_initial.csv", ed0)
    write_echo_density_csv(out / "echo_optimized.csv", ed1)
    write_wavs(out / "ir_initial", h0, fs)
    write_wavs(out / "ir_optimized", h1, fs)
    _write_json(out / "system.json", {"schema": SCHEMA, "grid": grid_to_dict(final_render.grid),
                                      "system": system_to_dict(final_render)})
    summary = {
        "status": report.status,
        "message": report.message,
        "loss_initial": report.history[0]["total"],
        "loss_final": report.history[-1]["total"],
        "std_initial": std_initial,
        "std_final": std_final,
        "std_reduction": 1.0 - std_final / std_initial,
        "echo_0.9_initial_s": _finite_or_none(ed0.first_time_above(0.9)),
        "echo_0.9_optimized_s": _finite_or_none(ed1.first_time_above(0.9)),
        "delays": [float(m) for m in fdn.delay_samples()],
    }
    _write_json(out / "summary.json", summary)
    return summary


# --- aa-optim ---------------------------------------------------------------

def run_aa_optim(cfg: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = _grid(cfg)
    a = cfg["aa"]
    room = None
    if a["room_dir"]:
        room, fs = load_room_responses(a["room_dir"], int(a["mics"]), int(a["louds"]))
        if fs != grid.sample_rate:
            raise ConfigurationError(f"room responses are at {fs} Hz, config sample_rate is {grid.sample_rate}")
    spec = AaSpec(mics=int(a["mics"]), louds=int(a["louds"]), room_t60=float(a["room_t60"]),
                  reverb_t60=float(a["reverb_t60"]), fir_taps=int(a["fir_taps"]), gain=float(a["gain"]),
                  seed=int(cfg["seed"]), room_irs=room)
    loop = AaLoop(spec, grid)
    shell = Shell(loop.system, output_layer=Magnitude())
    weights = cfg["loss_weights"]
    losses = [LossTerm("flatness", lambda o, t, tape: loss_spectral_flatness(o), float(weights["flatness"]))]
    if weights.get("max_magnitude", 0.0):
        limit = float(cfg["max_magnitude_limit"])
        losses.append(LossTerm("max_magnitude", lambda o, t, tape: max_magnitude_penalty(o, limit),
                               float(weights["max_magnitude"])))

    stats0 = eig_magnitude_distribution(loop.loop_response(), grid.freqs_hz)
    report = train(shell, Dataset.impulse(), _train_config(cfg), losses, out_dir=out)
    stats1 = eig_magnitude_distribution(loop.loop_response(), grid.freqs_hz)
    write_eig_csv(out / "eig_initial.csv", stats0)
    write_eig_csv(out / "eig_optimized.csv", stats1)
    summary = {
        "status": report.status,
        "message": report.message,
        "loss_initial": report.history[0]["total"],
        "loss_final": report.history[-1]["total"],
        "flatness_initial": report.history[0]["flatness"],
        "flatness_final": report.history[-1]["flatness"],
        "eig_iqr_initial": stats0.iqr,
        "eig_iqr_optimized": stats1.iqr,
        "eig_max_initial": stats0.overall_max,
        "eig_max_optimized": stats1.overall_max,
    }
    _write_json(out / "summary.json", summary)
    return summary


# --- render / metrics / gradcheck -------------------------------------------

def _load_system(cfg: dict, grid: FrequencyGrid):
    doc = cfg.get("system")
    if doc is None and cfg.get("system_file"):
        doc = json.loads(Path(cfg["system_file"]).read_text())
        if "system" in doc:
            doc = doc["system"]
    if doc is None:
        raise ConfigurationError("config needs 'system' or 'system_file'")
    system = system_from_dict(doc, grid)
    return system if isinstance(system, Shell) else Shell(system)


def run_render(cfg: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = _grid(cfg)
    shell = _load_system(cfg, grid)
    rows = []
    files = []
    for j in range(shell.n_in):
        h = shell.get_time_response(j)
        files += [str(p) for p in write_wavs(out / f"ir_in{j}", h, normalize=bool(cfg["normalize"]))]
        for k in range(h.samples.shape[1]):
            x = h.samples[:, k]
            rows.append([j, k, repr(float(np.max(np.abs(x)))), repr(float(np.sum(x ** 2)))])
    with open(out / "render.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input", "output", "peak", "energy"])
        writer.writerows(rows)
    return {"files": files, "channels": len(rows)}


def run_metrics(cfg: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg["kind"]
    if kind == "echo-density":
        if not cfg["input"]:
            raise ConfigurationError("echo-density needs 'input' (a WAV file)")
        x, fs = read_wav(cfg["input"])
        if x.ndim == 2:
            x = x[:, 0]
        profile = echo_density(x, fs, int(round(cfg["window_ms"] * 1e-3 * fs)), cfg["shape"])
        write_echo_density_csv(out / "echo_density.csv", profile)
        return {"echo_0.9_s": _finite_or_none(profile.first_time_above(0.9))}
    if kind == "eig":
        grid = _grid(cfg)
        shell = _load_system(cfg, grid)
        stats = eig_magnitude_distribution(shell.get_freq_response())
        write_eig_csv(out / "eig.csv", stats)
        return {"iqr": stats.iqr, "max": stats.overall_max}
    raise ConfigurationError(f"unknown metrics kind {kind!r}; use echo-density or eig")


def run_gradcheck(cfg: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = cfg["cases"]
    if cases is not None:
        unknown = set(cases) - set(CASES)
        if unknown:
            raise ConfigurationError(f"unknown gradcheck cases {sorted(unknown)}")
    base = int(cfg["seed"])
    rows = run_gradcheck_suite(int(cfg["num_bins"]), float(cfg["sample_rate"]),
                               range(base, base + int(cfg["seeds"])), cases, float(cfg["tol"]))
    with open(out / "gradcheck.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case", "seed", "max_rel_error", "passed"])
        for r in rows:
            writer.writerow([r.case, r.seed, repr(r.max_rel_error), int(r.passed)])
    failed = [f"{r.case}/{r.seed}" for r in rows if not r.passed]
    return {"checks": len(rows), "failed": failed,
            "max_rel_error": max((r.max_rel_error for r in rows), default=0.0)}


RUNNERS = {
    "fdn-optim": run_fdn_optim,
    "aa-optim": run_aa_optim,
    "render": run_render,
    "gradcheck": run_gradcheck,
    "metrics": run_metrics,
}
