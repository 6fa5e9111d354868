"""Experiment runner: offset, SINR and robustness sweeps written as CSV.

Config files are plain ``key = value`` lines; ``#`` starts a comment and
list values are comma separated.  Unknown keys are rejected.  See README
for the full key table.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .channel import LsrParams, NsddChannelSpec
from .errors import QuadratureError
from .montecarlo import TrialConfig, run_trial
from .sinr_analytic import (
    NOISE_MODELS,
    SinrConfig,
    db,
    max_sinr_offset,
    sinr_theoretical,
    sinr_upper_bound,
)
from .waveform import LatticeParams, make_gaussian_pulse

log = logging.getLogger(__name__)

MODES = ("fig1", "fig2", "fig3", "custom")
SPLITS = ("fixed_fmax", "fixed_tau_rms")


class ConfigError(ValueError):
    pass


def _default_sigma(T: float, F: float) -> float:
    return T / (math.sqrt(3) * F)


@dataclass(frozen=True)
class ExperimentConfig:
    # system
    T: float = 1e-4
    F: float = 25e3
    N: int = 40
    M: int = 20
    Ng: int = 600
    Ts: float = 1e-6
    sigma: float = _default_sigma(1e-4, 25e3)
    fc: float = 5e9  # metadata only
    # sweep
    csf_grid: tuple = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)
    snr_db: tuple = (10.0, 30.0)
    split: str = "fixed_fmax"
    f_max: float = 100.0
    tau_rms: float = 1e-6
    error_ratios: tuple = (0.5, 0.7, 0.9, 1.0, 1.1, 1.3, 1.5)
    # run
    mode: str = "fig2"
    out: str = ""
    seed: int = 0
    noise_model: str = "unit_energy"
    lattice_sum_extent: int = 3
    delay_order: int = 32
    doppler_order: int = 32
    mc: bool = True
    mc_frames: int = 20
    mc_max_frames: int = 160
    mc_ci_db: float = 0.2
    num_taps: int = 64
    num_doppler: int = 16
    jobs: int = 1

    def validate(self):
        if not self.csf_grid:
            raise ConfigError("csf_grid is empty")
        if not self.snr_db:
            raise ConfigError("snr_db is empty")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.noise_model not in NOISE_MODELS:
            raise ConfigError(f"noise_model must be one of {NOISE_MODELS}, got {self.noise_model!r}")
        if self.mode == "fig3" and not self.error_ratios:
            raise ConfigError("error_ratios is empty")
        if any(r <= 0 for r in self.error_ratios):
            raise ConfigError("error_ratios must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            self.lattice()
            make_gaussian_pulse(self.sigma, self.Ng, self.Ts)
            for G in self.csf_grid:
                self.lsr(G)
            SinrConfig(self.lattice(), self.sigma, lattice_sum_extent=self.lattice_sum_extent,
                       delay_order=self.delay_order, doppler_order=self.doppler_order,
                       noise_model=self.noise_model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def lattice(self) -> LatticeParams:
        return LatticeParams(self.T, self.F, self.N, self.M)

    def split_spread(self, G: float) -> tuple[float, float]:
        """(tau_rms, f_max) for spread factor G."""
        if self.split == "fixed_fmax":
            return G / self.f_max, self.f_max
        return self.tau_rms, G / self.tau_rms

    def lsr(self, G: float, seed: int = 0) -> LsrParams:
        tau, fmax = self.split_spread(G)
        return LsrParams(tau, fmax, num_taps=self.num_taps,
                         num_doppler_components=self.num_doppler, seed=seed)

    def sinr_config(self, snr_db: float) -> SinrConfig:
        return SinrConfig.from_snr(self.lattice(), self.sigma, snr_db,
                                   lattice_sum_extent=self.lattice_sum_extent,
                                   delay_order=self.delay_order, doppler_order=self.doppler_order,
                                   noise_model=self.noise_model)


PRESETS = {"paper-sec4": ExperimentConfig()}

_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_LISTS = {"csf_grid", "snr_db", "error_ratios"}


def _parse_value(key: str, raw: str, lineno: int):
    kind = _TYPES[key]
    try:
        if key in _LISTS:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: malformed value for {key!r}: {raw!r}") from None


def parse_config_text(text: str, base: ExperimentConfig | None = None, strict: bool = True) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            if raw not in PRESETS:
                raise ConfigError(f"line {lineno}: unknown preset {raw!r}")
            base = PRESETS[raw]
            continue
        if key not in _TYPES:
            if strict:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            log.warning("line %d: ignoring unknown key %r", lineno, key)
            continue
        values[key] = _parse_value(key, raw, lineno)
    base = base or PRESETS["paper-sec4"]
    if "sigma" not in values and ("T" in values or "F" in values):
        values["sigma"] = _default_sigma(values.get("T", base.T), values.get("F", base.F))
    return replace(base, **values)


def parse_config(path, strict: bool = True) -> ExperimentConfig:
    """Read a ``key = value`` experiment config file."""
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), strict=strict)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def format_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))


def write_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))


# --- sweeps -----------------------------------------------------------------

CONTEXT_COLUMNS = ["T", "F", "sigma", "Ts", "Ng", "N", "M", "fc", "tau_rms", "f_max",
                   "noise_model", "seed"]

FIG1_COLUMNS = ["G", "snr_db", "delta_t_closed_s", "delta_t_numeric_s", "status"] + CONTEXT_COLUMNS
FIG2_COLUMNS = (["G", "snr_db", "sinr_tpr_db", "sinr_closed_db", "sinr_ub_db",
                 "sinr_mc_tpr_db", "sinr_mc_closed_db", "sinr_mc_ub_db",
                 "delta_t_closed_s", "delta_t_numeric_s", "status", "mc_frames", "mc_symbols"]
                + CONTEXT_COLUMNS)
FIG3_COLUMNS = (["G", "snr_db", "error_ratio", "tau_rms_est", "delta_t_s", "status",
                 "sinr_db", "sinr_tpr_db"] + CONTEXT_COLUMNS)
SWEEP_COLUMNS = [c for c in FIG2_COLUMNS if not c.startswith("sinr_mc") and not c.startswith("mc_")]


def _context(cfg: ExperimentConfig, G: float) -> dict:
    tau, fmax = cfg.split_spread(G)
    return {"T": cfg.T, "F": cfg.F, "sigma": cfg.sigma, "Ts": cfg.Ts, "Ng": cfg.Ng, "N": cfg.N,
            "M": cfg.M, "fc": cfg.fc, "tau_rms": tau, "f_max": fmax,
            "noise_model": cfg.noise_model, "seed": cfg.seed}


def _grid(cfg: ExperimentConfig):
    return [(G, s) for G in sorted(cfg.csf_grid) for s in sorted(cfg.snr_db)]


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _fig1_point(args):
    cfg, G, snr = args
    lsr = cfg.lsr(G)
    scfg = cfg.sinr_config(snr)
    dt_closed, status = max_sinr_offset(cfg.sigma, lsr.tau_rms, scfg.offset_search_max)
    ub = sinr_upper_bound(lsr, scfg)
    return {"G": G, "snr_db": snr, "delta_t_closed_s": dt_closed,
            "delta_t_numeric_s": ub.delta_t, "status": status, **_context(cfg, G)}


def run_fig1(cfg: ExperimentConfig) -> list[dict]:
    """Closed-form and numerically optimal offsets for every (G, SNR)."""
    return _map(_fig1_point, [(cfg, G, s) for G, s in _grid(cfg)], cfg.jobs)


def _fig2_point(args):
    cfg, index, G, snr, with_mc = args
    lsr = cfg.lsr(G, seed=index)
    scfg = cfg.sinr_config(snr)
    dt_closed, status = max_sinr_offset(cfg.sigma, lsr.tau_rms, scfg.offset_search_max)
    ub = sinr_upper_bound(lsr, scfg)
    row = {"G": G, "snr_db": snr,
           "sinr_tpr_db": float(db(sinr_theoretical(0.0, lsr, scfg))),
           "sinr_closed_db": float(db(sinr_theoretical(dt_closed, lsr, scfg))),
           "sinr_ub_db": float(db(ub.sinr)),
           "sinr_mc_tpr_db": "", "sinr_mc_closed_db": "", "sinr_mc_ub_db": "",
           "delta_t_closed_s": dt_closed, "delta_t_numeric_s": ub.delta_t, "status": status,
           "mc_frames": "", "mc_symbols": "", **_context(cfg, G)}
    if with_mc:
        trial = TrialConfig(
            lattice=cfg.lattice(), pulse=make_gaussian_pulse(cfg.sigma, cfg.Ng, cfg.Ts),
            channel=NsddChannelSpec([lsr], snr), offsets=(0.0, dt_closed, ub.delta_t),
            num_frames=cfg.mc_frames, max_frames=cfg.mc_max_frames,
            ci_halfwidth_db=cfg.mc_ci_db, seed=cfg.seed,
        )
        tpr, closed, best = run_trial(trial)
        row.update(sinr_mc_tpr_db=tpr.sinr_db, sinr_mc_closed_db=closed.sinr_db,
                   sinr_mc_ub_db=best.sinr_db, mc_frames=tpr.n_frames, mc_symbols=tpr.n_symbols)
    return row


def run_fig2(cfg: ExperimentConfig, mc: bool | None = None) -> list[dict]:
    """Theoretical SINR of TPR, closed-form and optimal offsets, plus Monte Carlo."""
    mc = cfg.mc if mc is None else mc
    items = [(cfg, k, G, s, mc) for k, (G, s) in enumerate(_grid(cfg))]
    return _map(_fig2_point, items, cfg.jobs)


def _fig3_point(args):
    cfg, G, snr = args
    lsr = cfg.lsr(G)
    scfg = cfg.sinr_config(snr)
    tpr = float(db(sinr_theoretical(0.0, lsr, scfg)))
    rows = []
    for r in sorted(cfg.error_ratios):
        tau_est = r * lsr.tau_rms
        dt, status = max_sinr_offset(cfg.sigma, tau_est, scfg.offset_search_max)
        rows.append({"G": G, "snr_db": snr, "error_ratio": r, "tau_rms_est": tau_est,
                     "delta_t_s": dt, "status": status,
                     "sinr_db": float(db(sinr_theoretical(dt, lsr, scfg))),
                     "sinr_tpr_db": tpr, **_context(cfg, G)})
    exact = [row["sinr_db"] for row in rows if row["error_ratio"] == 1.0]
    if exact:
        for row in rows:
            if row["error_ratio"] != 1.0 and row["sinr_db"] > exact[0]:
                log.info("G=%g, SNR=%g dB: error ratio %g beats the exact tau_rms by %.4f dB",
                         G, snr, row["error_ratio"], row["sinr_db"] - exact[0])
    return rows


def run_fig3(cfg: ExperimentConfig) -> list[dict]:
    """SINR with the offset computed from a mis-estimated RMS delay spread."""
    out = _map(_fig3_point, [(cfg, G, s) for G, s in _grid(cfg)], cfg.jobs)
    return [row for rows in out for row in rows]


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Analytic-only version of the SINR sweep."""
    return [{k: row[k] for k in SWEEP_COLUMNS} for row in run_fig2(cfg, mc=False)]


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def write_csv(rows: list[dict], path, columns: list[str]):
    """Write rows atomically; nothing is created if formatting fails."""
    text = format_csv(rows, columns)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


RUNNERS = {
    "fig1": (run_fig1, FIG1_COLUMNS),
    "fig2": (run_fig2, FIG2_COLUMNS),
    "fig3": (run_fig3, FIG3_COLUMNS),
    "sweep": (run_sweep, SWEEP_COLUMNS),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmct", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(RUNNERS))
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper-sec4")
    p.add_argument("--out", help="output CSV path (default: <command>.csv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-model", choices=[m.replace("_", "-") for m in NOISE_MODELS])
    p.add_argument("--no-mc", action="store_true", help="skip Monte Carlo columns in fig2")
    p.add_argument("--jobs", type=int, help="worker processes for grid points")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PRESETS[args.preset]
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                cfg = parse_config_text(fh.read(), base=cfg)
        overrides = {"mode": "custom" if args.command == "sweep" else args.command}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.noise_model:
            overrides["noise_model"] = args.noise_model.replace("-", "_")
        if args.no_mc:
            overrides["mc"] = False
        if args.jobs is not None:
            overrides["jobs"] = args.jobs
        if args.out:
            overrides["out"] = args.out
        cfg = replace(cfg, **overrides)
        cfg.validate()
    except (ConfigError, OSError) as exc:
        print(f"hmct: configuration error: {exc}", file=sys.stderr)
        return 2

    runner, columns = RUNNERS[args.command]
    try:
        rows = runner(cfg)
    except QuadratureError as exc:
        print(f"hmct: numerical error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"hmct: validation error: {exc}", file=sys.stderr)
        return 2
    out = cfg.out or f"{args.command}.csv"
    try:
        write_csv(rows, out, columns)
    except OSError as exc:
        print(f"hmct: cannot write {out}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
