"""Command-line workflows: calibrate, detect, simulate, arl-theory, subset-scan.

Exit codes are 0 on success, 1 for usage errors, 2 for data errors and 3 for
numerical failures.

Randomness derives from ``--seed``: commands seed the reference/data draw
with ``[seed, 0]`` and calibration trials with ``[seed, 1]``; simulations
use :func:`corrdetect.simlab.replication_seeds` per replication.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from .calibrate import (
    CalibrationError,
    CalibrationResult,
    arl_approx,
    montecarlo_sequences,
    prechange_moments,
    signflip_sequences,
    theoretical_threshold,
    threshold_from_arl,
    threshold_from_sequences,
)
from .corrstat import build_reference
from .detectors import Detector, SubsetSpec, grid_subsets, subset_scan
from .enhance import AugmentationError
from .model import (
    ArlApproxInput,
    ConfigError,
    DegenerateWindowError,
    DetectorConfig,
    Enhancement,
    Kind,
    Variant,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
REPORT_COLUMNS = ("t", "statistic", "threshold", "alarmed", "argmax_candidate")


class DataError(ValueError):
    """Malformed or inconsistent input files."""


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _parse_float(cell: str) -> Optional[float]:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def parse_stream(text: str, name: str = "input") -> Tuple[np.ndarray, Optional[List[str]]]:
    """Parse a comma-delimited numeric table with an optional header row.

    Row and column numbers in error messages are 1-based positions in the
    file, counting the header row.

    Returns
    -------
    data : ndarray, shape (n, p)
    header : list of str or None

    Examples
    --------
    >>> parse_stream("a,b\\n1,2\\n3,4\\n")[0].shape
    (2, 2)
    """
    rows = [r for r in csv.reader(io.StringIO(text))]
    numbered = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not numbered:
        raise DataError(f"{name}: no data rows")
    header = None
    first_no, first = numbered[0]
    if all(_parse_float(c.strip()) is None for c in first):
        header = [c.strip() for c in first]
        numbered = numbered[1:]
    if not numbered:
        raise DataError(f"{name}: no data rows after the header")
    width = len(header) if header else len(numbered[0][1])
    out = np.empty((len(numbered), width))
    for k, (row_no, cells) in enumerate(numbered):
        if len(cells) != width:
            raise DataError(f"{name}: row {row_no} has {len(cells)} columns, expected {width}")
        for j, c in enumerate(cells):
            v = _parse_float(c.strip())
            if v is None:
                raise DataError(f"{name}: non-numeric cell {c.strip()!r} at (row {row_no}, "
                                f"col {j + 1})")
            out[k, j] = v
    if width < 2:
        raise DataError(f"{name}: need at least 2 columns, got {width}")
    return out, header


def read_stream(path: str) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise DataError(f"cannot read {path}: {err.strerror}") from None
    return parse_stream(text, path)[0]


def parse_subsets(text: str, p: int) -> SubsetSpec:
    """One subset per line, 1-based whitespace-separated column indices."""
    subs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            subs.append([int(tok) for tok in line.split()])
        except ValueError:
            raise DataError(f"subsets line {n}: indices must be integers") from None
    try:
        return SubsetSpec.from_one_based(subs, p)
    except ConfigError as err:
        raise DataError(f"subsets: {err}") from None


def format_subsets(spec: SubsetSpec) -> str:
    return "".join(" ".join(str(i) for i in s) + "\n" for s in spec.one_based())


@dataclass
class ReportRow:
    t: int
    statistic: float
    threshold: float
    alarmed: bool
    argmax_candidate: int


@dataclass
class RunReport:
    """Per-step detector output plus a summary block."""

    rows: List[ReportRow] = field(default_factory=list)
    summary: Dict[str, str] = field(default_factory=dict)

    @property
    def first_alarm(self) -> Optional[int]:
        return next((r.t for r in self.rows if r.alarmed), None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(REPORT_COLUMNS)
        for r in self.rows:
            wr.writerow([r.t, repr(float(r.statistic)), repr(float(r.threshold)),
                         int(r.alarmed), r.argmax_candidate])
        for k, v in self.summary.items():
            buf.write(f"# {k}={v}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunReport":
        rows, summary = [], {}
        lines = text.splitlines()
        if not lines or tuple(lines[0].split(",")) != REPORT_COLUMNS:
            raise DataError("report does not start with the expected header")
        for line in lines[1:]:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                summary[k] = v
            elif line.strip():
                t, s, b, a, c = line.split(",")
                rows.append(ReportRow(int(t), float(s), float(b), a == "1", int(c)))
        return cls(rows, summary)


# ---------------------------------------------------------------------------
# shared option handling
# ---------------------------------------------------------------------------

def _config_options(f):
    opts = [
        click.option("--kind", type=click.Choice([k.value for k in Kind]), default="sum"),
        click.option("--variant", type=click.Choice([v.value for v in Variant]),
                     default="window"),
        click.option("--w", "w", type=int, default=20, show_default=True, help="Window size."),
        click.option("--H", "H", type=int, default=100, show_default=True,
                     help="Reference size; the first H+1 reference rows are used."),
        click.option("--lag", type=int, default=1, show_default=True),
        click.option("--enhancement", type=click.Choice([e.value for e in Enhancement]),
                     default="none"),
        click.option("--k-neighbors", type=int, default=5, show_default=True),
        click.option("--mode", type=click.Choice(["full", "center", "known"]), default="full",
                     help="Correlation estimator."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _make_config(kind, variant, w, H, lag, enhancement, k_neighbors, **extra) -> DetectorConfig:
    return DetectorConfig(kind=kind, variant=variant, w=w, H=H, lag=lag,
                          enhancement=enhancement, k_neighbors=k_neighbors, **extra)


def _split_reference(data: np.ndarray, H: int, name: str):
    if data.shape[0] < H + 1:
        raise DataError(f"{name} has {data.shape[0]} rows; the reference needs H+1 = {H + 1}")
    return data[:H + 1], data[H + 1:]


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _parse_pair(value: str, what: str) -> Tuple[int, int]:
    try:
        a, b = value.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise click.BadParameter(f"{what} must look like 9x23") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Correlation change detection for large-dimensional streams."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--reference", "reference_csv", required=True,
              help="CSV of pre-change data: H+1 reference rows followed by the calibration stream.")
@_config_options
@click.option("--gamma", type=float, required=True, help="Target average run length.")
@click.option("--method", type=click.Choice(["signflip", "theory"]), default="signflip")
@click.option("--q", type=int, default=1000, show_default=True, help="Sign-flip trials.")
@click.option("--M", "M", type=int, default=None,
              help="Calibration stream length (default: all rows after the reference).")
@click.option("--source", type=click.Choice(["analytic", "empirical"]), default=None,
              help="Moment source for --method theory.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="Output calibration file (default stdout).")
def calibrate(reference_csv, kind, variant, w, H, lag, enhancement, k_neighbors, mode, gamma,
              method, q, M, source, seed, out):
    """Fit a threshold for a target run length."""
    if kind == "combined":
        raise click.UsageError("calibrate the sum and max parts separately")
    cfg = _make_config(kind, variant, w, H, lag, enhancement, k_neighbors)
    data = read_stream(reference_csv)
    ref_rows, stream = _split_reference(data, H, reference_csv)
    meta = {"kind": kind, "variant": variant, "w": str(w), "H": str(H), "lag": str(lag),
            "enhancement": enhancement, "mode": mode, "seed": str(seed)}
    if method == "theory":
        if enhancement != "none" or lag != 1:
            raise click.UsageError("--method theory covers unenhanced, unlagged statistics")
        kw = {}
        if (source or ("analytic" if kind == "sum" else "empirical")) == "empirical":
            if stream.shape[0] >= H + w + 2:
                kw["data"] = stream
            kw["rng"] = np.random.default_rng([seed, 1])
        res = theoretical_threshold(kind, variant, gamma, data.shape[1], w, H, source, **kw)
    else:
        M = stream.shape[0] if M is None else M
        if stream.shape[0] < M or M < w + 2:
            raise DataError(f"{reference_csv}: need H+1+M rows with M >= w+2 "
                            f"(have {stream.shape[0]} after the reference, M={M})")
        reference = build_reference(ref_rows, mode)
        cfg.check_dimension(reference.p)
        trials = signflip_sequences(stream[:M], reference, cfg, q, np.random.default_rng([seed, 1]))
        res = threshold_from_sequences(trials, gamma, w)
        meta.update(q=str(q), M=str(M))
    res.meta.update(meta)
    _emit(res.to_text(), out)
    d = ", ".join(f"{k}={v:.6g}" for k, v in res.diagnostics.items())
    click.echo(f"threshold={res.threshold:.6g} method={res.method} {d}", err=True)


def _load_calibrations(paths: Sequence[str]) -> Dict[str, CalibrationResult]:
    out = {}
    for path in paths:
        try:
            with open(path, encoding="utf-8") as fh:
                res = CalibrationResult.from_text(fh.read())
        except OSError as err:
            raise DataError(f"cannot read {path}: {err.strerror}") from None
        except ConfigError as err:
            raise DataError(f"{path}: {err}") from None
        out[res.meta.get("kind", "sum")] = res
    return out


@cli.command()
@click.option("--stream", "stream_csv", required=True, help="CSV of online observations.")
@click.option("--reference", "reference_csv", required=True,
              help="CSV whose first H+1 rows form the reference.")
@click.option("--calibration", "calibrations", multiple=True,
              help="Calibration file(s); one per part for the combined kind.")
@click.option("--threshold-sum", type=float, default=None)
@click.option("--threshold-max", type=float, default=None)
@_config_options
@click.option("--noise-margin", type=float, default=0.0, show_default=True)
@click.option("--subsets", "subsets_file", default=None,
              help="Subsets file; runs the Shewhart subset-scan sum statistic.")
@click.option("--continue", "keep_going", is_flag=True, help="Do not stop at the first alarm.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="Report CSV path (default stdout).")
def detect(stream_csv, reference_csv, calibrations, threshold_sum, threshold_max, kind, variant,
           w, H, lag, enhancement, k_neighbors, mode, noise_margin, subsets_file, keep_going,
           seed, out):
    """Run a detector over a stream and write a per-step report."""
    cals = _load_calibrations(calibrations)
    for part, res in cals.items():
        if part not in ("sum", "max"):
            raise DataError(f"calibration kind {part!r} is not sum or max")
        for key, val in (("w", w), ("H", H)):
            if key in res.meta and int(res.meta[key]) != val:
                raise DataError(f"calibration was fitted with {key}={res.meta[key]}, got {val}")
    b_sum = threshold_sum if threshold_sum is not None else (
        cals["sum"].threshold if "sum" in cals else None)
    b_max = threshold_max if threshold_max is not None else (
        cals["max"].threshold if "max" in cals else None)
    if subsets_file:
        kind, variant = "sum", "shewhart"
    need = {"sum": ["sum"], "max": ["max"], "combined": ["sum", "max"]}[kind]
    missing = [n for n in need if (b_sum if n == "sum" else b_max) is None]
    if missing:
        raise DataError(f"missing threshold for the {' and '.join(missing)} part")
    cfg = _make_config(kind, variant, w, H, lag, enhancement, k_neighbors,
                       threshold_sum=b_sum if b_sum is not None else np.inf,
                       threshold_max=b_max if b_max is not None else np.inf,
                       noise_margin=noise_margin)
    ref_rows, _ = _split_reference(read_stream(reference_csv), H, reference_csv)
    stream = read_stream(stream_csv)
    if stream.shape[1] != ref_rows.shape[1]:
        raise DataError(f"stream has {stream.shape[1]} columns, reference has {ref_rows.shape[1]}")
    reference = build_reference(ref_rows, mode)
    report = RunReport(summary={"kind": kind, "variant": variant, "w": str(w), "H": str(H),
                                "lag": str(lag), "enhancement": enhancement, "mode": mode,
                                "seed": str(seed)})
    if subsets_file:
        try:
            with open(subsets_file, encoding="utf-8") as fh:
                subsets = parse_subsets(fh.read(), reference.p)
        except OSError as err:
            raise DataError(f"cannot read {subsets_file}: {err.strerror}") from None
        report.summary["subsets"] = str(len(subsets))
        winner = None
        for t in range(w + 1, stream.shape[0] + 1):
            if lag > 1 and (t - (w + 1)) % lag:
                continue
            val, k = subset_scan(reference, stream[t - w - 1:t], subsets)
            alarmed = val >= cfg.threshold_sum + noise_margin
            report.rows.append(ReportRow(t, val, cfg.threshold_sum, alarmed, t - w))
            if alarmed and winner is None:
                winner = k
            if alarmed and not keep_going:
                break
        if winner is not None:
            report.summary["alarm_subset"] = str(winner)
    else:
        det = Detector(reference, cfg, np.random.default_rng([seed, 1]))
        b_report = 1.0 if kind == "combined" else cfg.threshold
        for x in stream:
            s = det.step(x)
            if not s.evaluated:
                continue
            report.rows.append(ReportRow(s.t, s.statistic, b_report, s.alarmed,
                                         s.argmax_candidate))
            if s.alarmed and not keep_going:
                break
    fa = report.first_alarm
    report.summary = {"first_alarm": "none" if fa is None else str(fa), **report.summary}
    _emit(report.to_csv(), out)


def _parse_method(label: str):
    """``cusum`` or ``<wl|st>-<sum|max|combined>[+smote|+knockoff]``."""
    if label == "cusum":
        return None
    base, _, enh = label.partition("+")
    try:
        v, k = base.split("-")
        variant = {"wl": Variant.WINDOW, "st": Variant.SHEWHART}[v]
        return Kind(k), variant, Enhancement(enh or "none")
    except (ValueError, KeyError):
        raise click.BadParameter(f"unknown method {label!r}") from None


@cli.command()
@click.option("--case", "case_id", type=click.IntRange(1, 4), default=1, show_default=True)
@click.option("--p", type=int, default=50, show_default=True)
@click.option("--r", type=float, default=0.5, show_default=True)
@click.option("--distribution", type=click.Choice(["gaussian", "t"]), default="gaussian")
@click.option("--df", type=float, default=5.0, show_default=True)
@click.option("--method", "methods", multiple=True, default=("wl-sum",), show_default=True,
              help="cusum or <wl|st>-<sum|max|combined>[+smote|+knockoff]; repeatable.")
@click.option("--gamma", "gammas", type=float, multiple=True, required=True)
@click.option("--replications", type=int, default=100, show_default=True)
@click.option("--metric", type=click.Choice(["edd", "arl", "both"]), default="edd")
@click.option("--w", "w", type=int, default=20, show_default=True)
@click.option("--H", "H", type=int, default=100, show_default=True)
@click.option("--q", type=int, default=1000, show_default=True)
@click.option("--M", "M", type=int, default=1000, show_default=True)
@click.option("--cusum-paths", type=int, default=200, show_default=True)
@click.option("--max-steps", type=int, default=100000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="Experiment CSV path (default stdout).")
def simulate(case_id, p, r, distribution, df, methods, gammas, replications, metric, w, H, q, M,
             cusum_paths, max_steps, seed, out):
    """Calibrate each method at each gamma, then estimate EDD and/or ARL."""
    from .simlab import (
        ScenarioSpec,
        cusum_factory,
        cusum_threshold,
        detector_factory,
        run_arl,
        run_edd,
    )

    parsed = [(m, _parse_method(m)) for m in methods]
    spec = ScenarioSpec.case(case_id, p, r, distribution=distribution, df=df)
    data_rng = np.random.default_rng([seed, 0])
    reference = build_reference(spec.sample(H + 1, data_rng))
    calib_stream = spec.sample(M, data_rng)
    symmetric = np.allclose(spec.R0, np.eye(p))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["gamma", "method", "threshold_sum", "threshold_max", "metric", "mean",
                 "std_error", "replications", "censored"])
    for gamma in gammas:
        for label, m in parsed:
            crng = np.random.default_rng([seed, 1])
            if m is None:
                b, _ = cusum_threshold(spec, gamma, paths=cusum_paths, rng=crng)
                factory, bs = cusum_factory(spec, b), (b, float("nan"))
            else:
                kind, variant, enh = m
                parts = ["sum", "max"] if kind is Kind.COMBINED else [kind.value]
                bs_d = {}
                for part in parts:
                    cfg = DetectorConfig(kind=part, variant=variant, w=w, H=H, enhancement=enh)
                    if symmetric:
                        trials = signflip_sequences(calib_stream, reference, cfg, q, crng)
                    else:
                        trials = montecarlo_sequences(spec.sampler(), reference, cfg, q, M, crng)
                    bs_d[part] = threshold_from_sequences(trials, gamma, w).threshold
                cfg = DetectorConfig(kind=kind, variant=variant, w=w, H=H, enhancement=enh,
                                     threshold_sum=bs_d.get("sum", np.inf),
                                     threshold_max=bs_d.get("max", np.inf))
                factory = detector_factory(reference, cfg)
                bs = (bs_d.get("sum", float("nan")), bs_d.get("max", float("nan")))
            runs = []
            if metric in ("edd", "both"):
                runs.append(run_edd(factory, spec, replications, seed, max_steps, label))
            if metric in ("arl", "both"):
                runs.append(run_arl(factory, spec, replications, max_steps, seed, label))
            for res in runs:
                wr.writerow([f"{gamma:g}", label, f"{bs[0]:.8g}", f"{bs[1]:.8g}", res.metric,
                             f"{res.mean:.6g}", f"{res.std_error:.6g}", res.replications,
                             int(res.censored.sum())])
            logger.info("gamma=%g %s done", gamma, label)
    buf.write(f"# case={case_id} p={p} r={r} distribution={distribution} w={w} H={H} "
              f"q={q} M={M} seed={seed}\n")
    _emit(buf.getvalue(), out)


@cli.command("arl-theory")
@click.option("--p", type=int, required=True)
@click.option("--w", "w", type=int, default=20, show_default=True)
@click.option("--H", "H", type=int, default=100, show_default=True)
@click.option("--kind", type=click.Choice(["sum", "max"]), default="sum")
@click.option("--variant", type=click.Choice(["window", "shewhart"]), default="window")
@click.option("--source", type=click.Choice(["analytic", "empirical"]), default=None,
              help="Default: analytic for sum, empirical for max.")
@click.option("--rho0", type=float, default=0.0, show_default=True,
              help="Common pre-change correlation for the analytic moments.")
@click.option("--n-mc", type=int, default=2000, show_default=True)
@click.option("--gamma", "gammas", type=float, multiple=True, help="Invert to thresholds.")
@click.option("--b", "bs", type=float, multiple=True, help="Evaluate run lengths.")
@click.option("--seed", type=int, default=0, show_default=True)
def arl_theory(p, w, H, kind, variant, source, rho0, n_mc, gammas, bs, seed):
    """Analytic run-length approximation in either direction."""
    from .model import MomentSpec

    if not gammas and not bs:
        raise click.UsageError("give --gamma and/or --b")
    src = source or ("analytic" if kind == "sum" else "empirical")
    kw = {"moments": MomentSpec.gaussian(rho0)} if src == "analytic" else {
        "n_mc": n_mc, "rng": np.random.default_rng([seed, 1])}
    mu, sd = prechange_moments(kind, p, w, H, source=src, variant=variant, **kw)
    click.echo(f"# kind={kind} variant={variant} p={p} w={w} H={H} source={src} "
               f"mu={mu:.8g} sigma={sd:.8g}")
    click.echo("gamma,b")
    for g in gammas:
        click.echo(f"{g:.8g},{threshold_from_arl(g, (mu, sd), w):.10g}")
    if bs:
        click.echo("b,arl")
    for b in bs:
        if not b > mu:
            raise CalibrationError(f"b={b:g} does not exceed the pre-change mean {mu:.6g}")
        click.echo(f"{b:.10g},{arl_approx(ArlApproxInput(b, mu, sd, w)):.10g}")


@cli.command("subset-scan")
@click.option("--grid", required=True, help="Grid shape ROWSxCOLS.")
@click.option("--block", required=True, help="Block shape RxC.")
@click.option("--stride", default=None, help="Strides RxC (default: block size, no overlap).")
@click.option("--reference", "reference_csv", default=None,
              help="With --window: CSV whose first H+1 rows form the reference.")
@click.option("--window", "window_csv", default=None,
              help="CSV of w+1 rows to scan; prints the maximum and winning subset.")
@click.option("--H", "H", type=int, default=None, help="Reference size (default: all rows - 1).")
@click.option("--out", default=None, help="Subsets file path (default stdout).")
def subset_scan_cmd(grid, block, stride, reference_csv, window_csv, H, out):
    """Emit grid block subsets, and optionally scan one window with them."""
    rows, cols = _parse_pair(grid, "--grid")
    br, bc = _parse_pair(block, "--block")
    sr, sc = _parse_pair(stride, "--stride") if stride else (None, None)
    spec = grid_subsets(rows, cols, br, bc, sr, sc)
    if window_csv is None:
        _emit(format_subsets(spec), out)
        return
    if reference_csv is None:
        raise click.UsageError("--window needs --reference")
    ref = read_stream(reference_csv)
    if H is not None:
        ref, _ = _split_reference(ref, H, reference_csv)
    win = read_stream(window_csv)
    for name, arr in (("reference", ref), ("window", win)):
        if arr.shape[1] != spec.p:
            raise DataError(f"{name} has {arr.shape[1]} columns, the grid has {spec.p}")
    if out is not None:
        _emit(format_subsets(spec), out)
    val, k = subset_scan(build_reference(ref), win, spec)
    click.echo(f"subsets={len(spec)} statistic={val!r} subset={k}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point with the stable exit-code contract."""
    try:
        cli.main(args=list(argv) if argv is not None else None, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (DataError, DegenerateWindowError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except (CalibrationError, AugmentationError, np.linalg.LinAlgError,
            FloatingPointError, ArithmeticError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERIC
    except ConfigError as exc:
        click.echo(f"usage error: {exc}", err=True)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
