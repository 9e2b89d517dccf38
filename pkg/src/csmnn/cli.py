"""Command-line entry point: ``csmnn <stage> ...`` plus the ``all`` recipe.

Exit status is 0 on success, 1 when a stage fails at run time and 2 for
usage errors (click's convention). Every command writes only below its
``--out`` directory and records a ``manifest.json`` there.
"""
from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import click
import numpy as np

from . import __version__, analysis, pipeline
from .cells import get_cell, library_cells
from .charlib import Resolution, characterize, dataset_filename, grid_axis, read_dataset, write_dataset
from .csmsim import read_waveform, simulate, write_waveforms
from .device import CORNER_NAMES, FAMILIES, DeviceSet
from .errors import ConfigError, CsmError
from .lut import LutSet, build, read_table, write_table
from .netlist import parse_circuit, parse_stimulus
from .nn import NnSet, format_model, read_model
from .refsim import flatten, transient
from .trainer import H_CANDIDATES, TrainConfig, nnset, search_hidden_size, train_cell

MANIFEST = "manifest.json"


@dataclass
class RunManifest:
    tech: str
    corner: str
    resolution: str
    seed: int
    datasets: str = "datasets"
    models: str = "models"
    waveforms: str = "waveforms"
    reports: str = "reports"
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text())
            return cls(**data)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad manifest {path}: {exc}") from None

    def write(self, out_dir) -> Path:
        p = Path(out_dir) / MANIFEST
        p.write_text(self.to_json())
        return p


class StageError(click.ClickException):
    """A pipeline stage raised; exit status 1 with the stage named."""

    exit_code = 1

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {exc}")


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def set(self, name: str):
        self.name = name

    def __exit__(self, kind, exc, tb):
        if isinstance(exc, (CsmError, OSError)):
            raise StageError(self.name, exc) from exc
        return False


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _fmt(x: float, digits: int = 4) -> str:
    return "nan" if not np.isfinite(x) else f"{x:.{digits}f}"


# ----------------------------------------------------------------------------
# model directories: <cell>.<component>.lut / .nn


def write_models(models: dict, out_dir, kind: str) -> list:
    """``models`` maps cell -> {component: NnModel | LutTable}."""
    out = _out_dir(out_dir)
    paths = []
    for cell in sorted(models):
        for comp, m in models[cell].items():
            p = out / f"{cell}.{comp}.{kind}"
            if kind == "nn":
                p.write_text(format_model(m))
            else:
                write_table(m, p)
            paths.append(p)
    return paths


def load_models(model_dir, kind: str) -> dict:
    """Cell -> evaluator set from a directory written by ``write_models``."""
    found = {}
    for p in sorted(Path(model_dir).glob(f"*.{kind}")):
        cell, comp = p.name[: -len(kind) - 1].split(".", 1)
        found.setdefault(cell, {})[comp] = read_model(p) if kind == "nn" else read_table(p)
    if not found:
        raise ConfigError(f"no .{kind} models in {model_dir}")
    out = {}
    for cell, comps in found.items():
        _, schema = get_cell(cell)
        missing = [n for n in schema.names if n not in comps]
        if missing:
            raise ConfigError(f"{cell} models in {model_dir} lack {missing}")
        ordered = [comps[n] for n in schema.names]
        out[cell] = NnSet(schema.names, ordered) if kind == "nn" else LutSet(schema.names, ordered)
    return out


def _resolve_vdd(vdd, stimulus, tech, corner) -> float:
    if vdd:
        return float(vdd)
    if stimulus.vdd > 0:
        return stimulus.vdd
    return DeviceSet.for_corner(tech, corner).vdd


# ----------------------------------------------------------------------------
# reports


def format_train_report(cell: str, reports: dict, tried=(), status: str = "ok") -> str:
    lines = [f"# train report: {cell}", f"status: {status}"]
    if tried:
        lines.append("search: " + " ".join(f"H={h}:{e:.6f}" for h, e in tried))
    lines.append("component,hidden,final_loss,iterations,status,best_fold,test_rel_rmse,e_sim")
    for name, r in reports.items():
        lines.append(f"{name},{r.hidden},{r.final_loss:.6e},{r.iterations},{r.status},"
                     f"{r.best_fold},{r.test_rel_rmse:.6e},{_fmt(r.e_sim, 6)}")
    return "\n".join(lines) + "\n"


def format_cost(rep: analysis.CostReport) -> str:
    lines = [
        f"cell: {rep.cell}",
        f"gates: {rep.gates}",
        f"queries_per_step: {rep.queries_per_step}",
        f"lut_tier: {rep.lut_tier}",
        f"lut_cycles_per_step: {rep.lut_cycles_per_step:.3f}",
        f"nn_cpu_cycles_per_step: {rep.cpu_cycles_per_step:.3f}",
        f"nn_gpu_cycles_per_step: {rep.gpu_cycles_per_step:.3f}",
        f"a_cpu: {rep.a_cpu:.3f}",
        f"a_gpu: {rep.a_gpu:.3f}",
    ]
    lines += [f"flag: {f}" for f in rep.flags]
    return "\n".join(lines) + "\n"


TABLE_HEADER = ("tech", "corner", "h_inv", "h_nand2", "e_sim_nn", "e_sim_lut",
                "max_delay_err", "a_cpu", "a_gpu")


def table_rows(runs: list) -> list:
    rows = []
    for r in runs:
        c = r.costs["NAND2"]  # the full adder is built from NAND2 only
        rows.append((r.tech, r.corner, r.hidden.get("INV"), r.hidden.get("NAND2"),
                     r.adder_esim_nn, r.adder_esim_lut, pipeline.max_delay_err(r), c.a_cpu, c.a_gpu))
    return rows


def format_table(rows: list) -> str:
    """Corners as rows and, per technology, E_sim (%), A_CPU and A_GPU."""
    techs = list(dict.fromkeys(r[0] for r in rows))
    corners = [c for c in CORNER_NAMES if any(r[1] == c for r in rows)]
    by = {(r[0], r[1]): r for r in rows}
    head1 = f"{'':8}" + "".join(f"| {t:^26}" for t in techs)
    head2 = f"{'Corner':8}" + "".join(f"| {'E_sim%':>8}{'A_CPU':>8}{'A_GPU':>8}  " for _ in techs)
    lines = ["Full adder, NN backend vs reference", head1, head2, "-" * len(head2)]
    for c in corners:
        line = f"{c:8}"
        for t in techs:
            r = by.get((t, c))
            if r is None:
                line += f"| {'-':>8}{'-':>8}{'-':>8}  "
            else:
                line += f"| {r[4] * 100:8.3f}{r[7]:8.2f}{r[8]:8.2f}  "
        lines.append(line)
    lines += ["", "Detail", ",".join(TABLE_HEADER)]
    lines += [_csv_row(r) for r in rows]
    return "\n".join(lines) + "\n"


def _csv_row(r) -> str:
    return ",".join([r[0], r[1], str(r[2]), str(r[3]), _fmt(r[4], 6), _fmt(r[5], 6),
                     _fmt(r[6], 6), _fmt(r[7], 4), _fmt(r[8], 4)])


def format_table_csv(rows: list) -> str:
    return ",".join(TABLE_HEADER) + "\n" + "".join(_csv_row(r) + "\n" for r in rows)


# ----------------------------------------------------------------------------
# commands

TECH = click.Choice(FAMILIES)
CORNER = click.Choice(CORNER_NAMES)
RES = click.Choice(["S", "N", "C", "Soft", "Normal", "Coarse"])
CELL = click.Choice([t.name for t, _ in library_cells()])


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="csmnn")
def main():
    """Current-source-model characterization, training and simulation."""


@main.command("characterize")
@click.option("--tech", type=TECH, default="MOS-HP", show_default=True, help="Technology family.")
@click.option("--cell", type=CELL, required=True, help="Library cell to sweep.")
@click.option("--corner", type=CORNER, default="TT", show_default=True, help="PVT corner.")
@click.option("--res", type=RES, default="N", show_default=True, help="Grid resolution: Soft, Normal or Coarse.")
@click.option("--out", "--out-dir", "out", type=click.Path(file_okay=False), required=True,
              help="Directory for the dataset files and LUT tables.")
def characterize_cmd(tech, cell, corner, res, out):
    """Sweep CELL's CSM components over the voltage grid."""
    with _Stage("characterize"):
        out = _out_dir(out)
        data = characterize(cell, DeviceSet.for_corner(tech, corner), res)
        for ds in data.values():
            write_dataset(ds, out / dataset_filename(ds))
        write_models({cell: {n: build(ds) for n, ds in data.items()}}, out, "lut")
        RunManifest(tech, corner, Resolution.named(res).name, 0, datasets=".", models=".",
                    waveforms="", reports="").write(out)
    click.echo(f"{len(data)} components of {cell} written to {out}")


def _load_datasets(folder, cell: str, corner: str) -> dict:
    _, schema = get_cell(cell)
    folder = Path(folder)
    out = {}
    for name in schema.names:
        p = folder / f"{cell}_{corner}_{name}.dat"
        if not p.exists():
            raise ConfigError(f"missing dataset {p}")
        out[name] = read_dataset(p)
    return out


@main.command("train")
@click.option("--tech", type=TECH, default="MOS-HP", show_default=True,
              help="Technology family used by the search's reference benches.")
@click.option("--cell", type=CELL, required=True, help="Cell whose components are trained.")
@click.option("--corner", type=CORNER, default="TT", show_default=True, help="PVT corner of the datasets.")
@click.option("--datasets", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory holding the characterize output.")
@click.option("--search/--no-search", default=False, help="Search the hidden size instead of using --hidden.")
@click.option("--hidden", type=click.IntRange(1, 1024), default=10, show_default=True,
              help="Hidden units per network when not searching.")
@click.option("--seed", type=int, default=1, show_default=True, help="Seed for splits, folds and initialization.")
@click.option("--jobs", type=click.IntRange(1), default=os.cpu_count() or 1, show_default=True,
              help="Worker processes for component trainings.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Directory for model files and the report.")
def train_cmd(tech, cell, corner, datasets, search, hidden, seed, jobs, out):
    """Fit one network per CSM component of CELL."""
    with _Stage("train") as stage:
        out = _out_dir(out)
        data = _load_datasets(datasets, cell, corner)
        cfg = TrainConfig()
        cfg = replace(cfg, lbfgs=replace(cfg.lbfgs, seed=seed))
        if search:
            stage.set("reference")
            devices = DeviceSet.for_corner(tech, corner)
            circuit, stimuli = pipeline.bench_probes(cell, devices.vdd, seed)
            refs = pipeline.reference(circuit, stimuli, devices)
            inv_dir = Path(datasets)
            inv = (_load_datasets(inv_dir, "INV", corner) if cell != "INV" and
                   (inv_dir / f"INV_{corner}_C_o.dat").exists() else None)
            fanout = LutSet.from_datasets(inv or characterize("INV", devices, "N"))

            def probe(cand):
                models = {"INV": fanout, cell: cand}
                return pipeline.probe_esim(circuit, stimuli, refs, models, devices.vdd)

            stage.set("train")
            res = search_hidden_size(cell, data, probe, cfg, H_CANDIDATES, jobs=jobs)
            models, reports, tried, status = res.models, res.reports, res.tried, res.status
        else:
            models, reports = train_cell(data, hidden, cfg, jobs)
            tried, status = (), "ok"
        write_models({cell: models}, out, "nn")
        (out / "train_report.txt").write_text(format_train_report(cell, reports, tried, status))
        RunManifest(tech, corner, _res_name(data), seed,
                    datasets=str(datasets), models=".", waveforms="", reports=".").write(out)
    click.echo(f"{cell}: H={next(iter(models.values())).H} ({status}); models in {out}")


def _res_name(data: dict) -> str:
    step = next(iter(data.values())).step
    for name in ("S", "N", "C"):
        if abs(Resolution.named(name).step - step) < 1e-12:
            return name
    return f"{step:g}"


def _backend_models(backend, models_dir):
    return load_models(models_dir, "nn" if backend == "nn" else "lut")


@main.command("simulate")
@click.option("--circuit", type=click.Path(exists=True, dir_okay=False), required=True, help="Circuit netlist file.")
@click.option("--stim", type=click.Path(exists=True, dir_okay=False), required=True, help="Stimulus file.")
@click.option("--backend", type=click.Choice(["lut", "nn"]), default="nn", show_default=True, help="CSM evaluator.")
@click.option("--models", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory with <cell>.<component>.lut or .nn files.")
@click.option("--vdd", type=float, default=None, help="Supply; defaults to the stimulus vdd, then the tech corner.")
@click.option("--tech", type=TECH, default="MOS-HP", show_default=True, help="Fallback source of vdd.")
@click.option("--corner", type=CORNER, default="TT", show_default=True, help="Fallback source of vdd.")
@click.option("--init", type=click.Choice(["logic", "mid"]), default="logic", show_default=True,
              help="Initial node voltages.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Directory for one CSV per net.")
def simulate_cmd(circuit, stim, backend, models, vdd, tech, corner, init, out):
    """Gate-level CSM transient of CIRCUIT under STIM."""
    with _Stage("simulate"):
        c = parse_circuit(Path(circuit).read_text())
        s = parse_stimulus(Path(stim).read_text())
        v = _resolve_vdd(vdd, s, tech, corner)
        waves = simulate(c, s, _backend_models(backend, models), v, init=init)
        out = _out_dir(out)
        write_waveforms(waves, out)
        RunManifest(tech, corner, "", 0, datasets="", models=str(models), waveforms=".", reports="").write(out)
    click.echo(f"{len(waves)} waveforms written to {out}")


@main.command("reference")
@click.option("--circuit", type=click.Path(exists=True, dir_okay=False), required=True, help="Circuit netlist file.")
@click.option("--stim", type=click.Path(exists=True, dir_okay=False), required=True, help="Stimulus file.")
@click.option("--tech", type=TECH, default="MOS-HP", show_default=True, help="Technology family.")
@click.option("--corner", type=CORNER, default="TT", show_default=True, help="PVT corner.")
@click.option("--init", type=click.Choice(["logic", "mid"]), default="logic", show_default=True,
              help="Initial node voltages.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Directory for one CSV per net.")
def reference_cmd(circuit, stim, tech, corner, init, out):
    """Transistor-level reference transient of CIRCUIT under STIM."""
    with _Stage("reference"):
        c = parse_circuit(Path(circuit).read_text())
        s = parse_stimulus(Path(stim).read_text())
        waves = transient(flatten(c), s, DeviceSet.for_corner(tech, corner), init=init)
        out = _out_dir(out)
        write_waveforms(waves, out)
        RunManifest(tech, corner, "", 0, datasets="", models="", waveforms=".", reports="").write(out)
    click.echo(f"{len(waves)} waveforms written to {out}")


@main.command("compare")
@click.option("--ref", type=click.Path(exists=True, file_okay=False), required=True, help="Reference waveform directory.")
@click.option("--test", type=click.Path(exists=True, file_okay=False), required=True, help="Test waveform directory.")
@click.option("--vdd", type=float, required=True, help="Supply used to normalize E_sim.")
@click.option("--input", "inp", default=None, help="Input net for the propagation delay.")
@click.option("--output", "outp", default=None, help="Output net for the propagation delay.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Directory for compare.txt and compare.csv; stdout only when omitted.")
def compare_cmd(ref, test, vdd, inp, outp, out):
    """E_sim per shared net and, with --input/--output, the delay error."""
    with _Stage("compare"):
        names = sorted({p.stem for p in Path(ref).glob("*.csv")} & {p.stem for p in Path(test).glob("*.csv")})
        if not names:
            raise ConfigError("no waveform CSV present in both directories")
        rw = {n: read_waveform(Path(ref) / f"{n}.csv") for n in names}
        tw = {n: read_waveform(Path(test) / f"{n}.csv") for n in names}
        csv = ["net,e_sim"] + [f"{n},{analysis.e_sim(rw[n], tw[n], vdd):.6e}" for n in names]
        text = [f"{'net':12}{'e_sim %':>10}"] + [
            f"{n:12}{analysis.e_sim(rw[n], tw[n], vdd) * 100:10.4f}" for n in names]
        if inp or outp:
            if not (inp and outp):
                raise click.UsageError("--input and --output go together")
            m = analysis.compare(rw, tw, vdd, inp, outp)
            text.append(f"delay {inp}->{outp}: ref {m.delay_ref * 1e12:.3f} ps, "
                        f"test {m.delay_test * 1e12:.3f} ps, err {m.delay_err * 100:.3f}%")
            csv.append(f"delay_err,{m.delay_err:.6e}")
        if out:
            out = _out_dir(out)
            (out / "compare.txt").write_text("\n".join(text) + "\n")
            (out / "compare.csv").write_text("\n".join(csv) + "\n")
    click.echo("\n".join(text))


@main.command("cost")
@click.option("--cell", type=CELL, required=True, help="Cell to cost.")
@click.option("--backend", type=click.Choice(["lut", "nn"]), default="nn", show_default=True,
              help="lut: table accounting only; nn: also NN cycles and the speedup ratios.")
@click.option("--hw", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Hardware profile JSON; built-in defaults when omitted.")
@click.option("--res", type=RES, default="N", show_default=True, help="LUT grid resolution.")
@click.option("--vdd", type=float, default=0.7, show_default=True, help="Supply that sets the grid length.")
@click.option("--hidden", type=click.IntRange(1, 1024), default=10, show_default=True,
              help="Hidden units per component network (ignored with --models).")
@click.option("--models", type=click.Path(exists=True, file_okay=False), default=None,
              help="Take each component's hidden size from these .nn files.")
@click.option("--gates", type=click.IntRange(1), default=1, show_default=True, help="Instances of the cell.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for cost.txt; stdout only when omitted.")
def cost_cmd(cell, backend, hw, res, vdd, hidden, models, gates, out):
    """Analytic cycles per simulation step for LUT and NN evaluation."""
    with _Stage("cost"):
        prof = analysis.HwProfile.load(hw) if hw else analysis.HwProfile()
        _, schema = get_cell(cell)
        if models:
            sets = load_models(models, "nn")
            if cell not in sets:
                raise ConfigError(f"no {cell} networks in {models}")
            dims = [(m.D, m.H) for m in sets[cell].models]
        else:
            dims = [(schema.dim, hidden)] * len(schema.names)
        pts = len(grid_axis(vdd, Resolution.named(res).step))
        info = analysis.BackendInfo.for_grid(cell, schema.dim, len(schema.names), pts, dims, prof.fp_bytes)
        rep = analysis.cost_model(info, prof, 1, gates)
        if backend == "lut":
            text = (f"cell: {cell}\nlut_bytes: {info.lut_bytes}\nlut_tier: {rep.lut_tier}\n"
                    f"lut_cycles_per_step: {rep.lut_cycles_per_step:.3f}\n")
        else:
            text = format_cost(rep)
        if out:
            (_out_dir(out) / "cost.txt").write_text(text)
    click.echo(text, nl=False)


def _write_run(run, base: Path, manifest: RunManifest) -> None:
    d = _out_dir(base / run.tech / run.corner)
    manifest.write(d)
    write_models({c: dict(zip(s.names, s.tables)) for c, s in run.lut_models.items()}, d / manifest.models, "lut")
    write_models({c: s.models for c, s in run.searches.items()}, d / manifest.models, "nn")
    rep = _out_dir(d / manifest.reports)
    for cell, s in run.searches.items():
        (rep / f"train_{cell}.txt").write_text(format_train_report(cell, s.reports, s.tried, s.status))
    for cell, c in run.costs.items():
        (rep / f"cost_{cell}.txt").write_text(format_cost(c))
    lines = ["cell,bench,delay_ref_s,delay_test_s,delay_err"]
    for cell, ms in run.delays.items():
        for k, m in enumerate(ms):
            lines.append(f"{cell},{k},{m.delay_ref:.6e},{m.delay_test:.6e},{m.delay_err:.6e}")
    (rep / "delays.csv").write_text("\n".join(lines) + "\n")
    for kind, per_probe in run.adder_waves.items():
        for k, waves in enumerate(per_probe):
            write_waveforms(waves, d / manifest.waveforms / kind / f"probe{k}")


@main.command("all")
@click.option("--tech", type=TECH, multiple=True, help="Technology family; repeat for several (default MOS-HP).")
@click.option("--corner", type=CORNER, multiple=True, help="PVT corner; repeat for several (default TT).")
@click.option("--seed", type=int, default=1, show_default=True, help="Seed for probes, splits and training.")
@click.option("--res", type=RES, default="N", show_default=True, help="Characterization resolution.")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Replay tech, corner, resolution and seed from a manifest.json.")
@click.option("--jobs", type=click.IntRange(1), default=os.cpu_count() or 1, show_default=True,
              help="Worker processes for component trainings.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory for the bundle.")
def all_cmd(tech, corner, seed, res, manifest, jobs, out):
    """Full flow on the full adder and the summary report.

    For each technology and corner: characterize INV and NAND2, search the
    hidden size, simulate the full adder on the probe stimuli with both
    backends and the reference, measure delays and cost.
    """
    if manifest:
        m = RunManifest.load(manifest)
        techs, corners, res, seed = m.tech.split(","), m.corner.split(","), m.resolution, m.seed
        bad = [t for t in techs if t not in FAMILIES] + [c for c in corners if c not in CORNER_NAMES]
        if bad:
            raise click.UsageError(f"manifest names unknown technology or corner: {bad}")
    else:
        techs, corners = list(tech) or ["MOS-HP"], list(corner) or ["TT"]
    res = Resolution.named(res).name
    base = _out_dir(out)
    top = RunManifest(",".join(techs), ",".join(corners), res, seed, reports=".")
    top.write(base)
    runs = []
    for t in techs:
        for c in corners:
            with _Stage(f"{t}/{c}: start") as stage:
                def log(msg, t=t, c=c):
                    stage.set(f"{t}/{c}: {msg}")
                    click.echo(f"[{t} {c}] {msg}", err=True)

                run = pipeline.run_corner(t, c, seed, res, jobs=jobs, log=log)
                stage.set(f"{t}/{c}: write")
                _write_run(run, base, RunManifest(t, c, res, seed))
            runs.append(run)
            # the summary so far survives a later stage failure
            rows = table_rows(runs)
            (base / "report.txt").write_text(format_table(rows))
            (base / "report.csv").write_text(format_table_csv(rows))
    click.echo((base / "report.txt").read_text(), nl=False)


def run(argv=None) -> int:
    """Invoke the CLI and return its exit status instead of exiting."""
    try:
        main.main(args=argv, prog_name="csmnn", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(run())
