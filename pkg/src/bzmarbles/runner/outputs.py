"""CSV statistics, event logs, PGM frames and the run manifest."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..analysis import measure_crossing
from ..errors import OutputError

__all__ = [
    "STATS_COLUMNS",
    "EVENT_COLUMNS",
    "OutputError",
    "statistics_rows",
    "event_rows",
    "compose_frame",
    "write_pgm",
    "read_pgm",
    "emit_outputs",
]

STATS_COLUMNS = ("marble_id", "x_mm", "y_mm", "diameter_mm", "oscillation_count")
EVENT_COLUMNS = (
    "kind", "marble_id", "wave_id", "onset_time_s", "half1_crossing_s", "half2_crossing_s", "origin_cell",
    "t_half1_s", "t_half2_s", "t_full_s", "partial",
    "source_marble", "target_marble", "source_wave_id", "target_wave_id", "transfer_time_s", "edge_id",
)


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else f"{x:.6f}"


def statistics_rows(log) -> list[list[str]]:
    counts = log.statistics["per_marble_counts"]
    rows = []
    for m, spec in enumerate(log.graph.marbles):
        x, y = spec.position_mm
        rows.append([_num(m), _num(x), _num(y), _num(spec.diameter_mm), _num(counts[m])])
    return rows


def event_rows(log) -> list[list[str]]:
    rows = []
    for e in log.oscillations:
        c = measure_crossing(e)
        row = dict(kind="oscillation", marble_id=e.marble_id, wave_id=e.wave_id, onset_time_s=e.onset_time_s,
                   half1_crossing_s=e.half1_crossing_s, half2_crossing_s=e.half2_crossing_s,
                   origin_cell=e.origin_cell, t_half1_s=c.t_half1_s, t_half2_s=c.t_half2_s,
                   t_full_s=c.t_full_s, partial=c.partial)
        rows.append([row["kind"]] + [_num(row.get(k)) for k in EVENT_COLUMNS[1:]])
    for t in log.transfers:
        row = dict(source_marble=t.source_marble, target_marble=t.target_marble, source_wave_id=t.source_wave_id,
                   target_wave_id=t.target_wave_id, transfer_time_s=t.transfer_time_s, edge_id=t.edge_id)
        rows.append(["transfer"] + [_num(row.get(k)) for k in EVENT_COLUMNS[1:]])
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def compose_frame(grids, v: np.ndarray, v_rest: float, v_peak: float) -> np.ndarray:
    """uint8 image of all marbles at their dish positions, rest -> 0, pulse peak -> 255.

    Pixels are one grid cell wide; background pixels read 0.
    """
    h = min(g.h_mm for g in grids)
    xy = np.concatenate([g.xy_mm for g in grids])
    x0, y1 = xy[:, 0].min(), xy[:, 1].max()
    cols = np.rint((xy[:, 0] - x0) / h).astype(np.int64)
    rows = np.rint((y1 - xy[:, 1]) / h).astype(np.int64)
    img = np.zeros((rows.max() + 1, cols.max() + 1), dtype=np.uint8)
    scaled = np.clip(np.rint((np.asarray(v, dtype=float) - v_rest) / (v_peak - v_rest) * 255.0), 0, 255)
    img[rows, cols] = scaled.astype(np.uint8)
    return img


def write_pgm(path, img: np.ndarray):
    img = np.ascontiguousarray(img, dtype=np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit_outputs(log, out_dir, *, frames: bool = True) -> dict:
    """Write statistics, events, frames and manifest into ``out_dir``; return the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}") from exc
    opts = log.config.output
    paths = {"stats_csv": out / opts.stats_csv, "events_csv": out / opts.events_csv,
             "manifest": out / opts.manifest}
    _write(paths["stats_csv"], _csv_text(STATS_COLUMNS, statistics_rows(log)))
    _write(paths["events_csv"], _csv_text(EVENT_COLUMNS, event_rows(log)))
    frame_paths = []
    if frames and log.record.frames:
        fdir = out / "frames"
        try:
            fdir.mkdir(exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create frame directory {fdir}: {exc}") from exc
        lv = log.record.levels
        for n, (t_s, v) in enumerate(log.record.frames):
            p = fdir / f"frame_{n:05d}.pgm"
            try:
                write_pgm(p, compose_frame(log.grids, v, lv.v_rest, lv.v_peak))
            except OSError as exc:
                raise OutputError(f"cannot write {p}: {exc}") from exc
            frame_paths.append(p)
    stats = log.statistics
    manifest = [
        f"config_hash: {log.config_hash}",
        f"seed: {log.seed}",
        f"build: {log.build}",
        f"scenario: {log.config.scenario}",
        f"name: {log.config.name}",
        f"duration_s: {log.config.duration_s:g}",
        f"n_marbles: {len(log.graph.marbles)}",
        f"n_edges: {len(log.graph.edges)}",
        f"n_oscillations: {stats['n_oscillations']}",
        f"n_transfers: {stats['n_transfers']}",
        f"transfer_fraction: {'' if stats['transfer_fraction'] is None else format(stats['transfer_fraction'], '.6f')}",
        f"max_pathway_length: {stats['max_pathway_length']}",
        f"n_frames: {len(frame_paths)}",
        f"statistics_csv: {paths['stats_csv'].name}",
        f"events_csv: {paths['events_csv'].name}",
        "config_json: " + json.dumps(log.config.to_dict(), sort_keys=True, separators=(",", ":")),
    ]
    _write(paths["manifest"], "\n".join(manifest) + "\n")
    paths["frames"] = frame_paths
    return paths
