"""Orchestration: instrumented training runs, offline conversion, replay.

The run loop owns the network exclusively; per step it builds the enabled
views, publishes them to the co-processing session, snapshots tensors and
view files on a cadence, evaluates filter similarity on the prune cadence and
applies prune plans only at step boundaries.  Snapshot emission and offline
conversion share one code path, so live-emitted view files and files
re-derived from snapshots are byte-identical for the same run.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time

import numpy as np

from . import data as datasets
from .config import RunConfig
from .network import Network
from .pruning import Merge, PrunePlan, apply_prune, plan_prune
from .similarity import save_heatmap_csv, similarity_report
from .snapshots import Snapshot, list_snapshots, read_snapshot, snapshot_filename, write_snapshot
from .stream import StreamSession, serve
from .tensors import batch_sum
from .views import (
    TrajectoryTrace,
    accumulate,
    append_trajectory,
    build_distribution_grid,
    build_image_grid,
    build_weight_grid,
    grid_layout,
    trajectory_polydata,
)
from .vtkio import view_filename, write_csv, write_vtp

logger = logging.getLogger(__name__)

CONVERT_VIEWS = (
    "weight_grid",
    "image_grid",
    "distribution_grid",
    "accumulated_image_grid",
    "trajectory",
    "similarity",
)


def planned_steps(n_samples: int, batch_size: int, epochs: int) -> int:
    """Training steps a run will take (partial final batches count)."""
    return epochs * math.ceil(n_samples / batch_size)


def resolve_dataset(cfg: RunConfig):
    """(train_x, train_y, test_x, test_y) per the config's dataset choice."""
    if cfg.dataset == "mnist":
        if not datasets.mnist_available(cfg.mnist_dir):
            raise FileNotFoundError(f"MNIST IDX files not found under {cfg.mnist_dir!r}")
        return datasets.load_mnist(cfg.mnist_dir, cfg.train_limit, cfg.test_limit)
    size = cfg.network.input_shape[0]
    classes = cfg.network.classes
    train = datasets.make_synthetic(cfg.synthetic_train, classes=classes, size=size, seed=cfg.seed)
    test = datasets.make_synthetic(cfg.synthetic_test, classes=classes, size=size, seed=cfg.seed + 9999)
    return train[0], train[1], test[0], test[1]


def network_summary(cfg: RunConfig, net: Network) -> dict:
    return {
        "input_shape": list(cfg.network.input_shape),
        "layers": [
            {"layer": cid, "filters": net.conv_layer(cid).filters, "window": net.conv_layer(cid).kernel.shape[0]}
            for cid in range(len(net.conv_ids))
        ],
        "views": list(cfg.views),
    }


# ---------------------------------------------------------------------------
# Shared view emission (live path and offline convert both go through this)


def snapshot_views(snap: Snapshot, view: str, traj_dims) -> list[tuple[str, int, object]]:
    """Build (view, layer, PolyData) triples for one view kind of a snapshot."""
    out = []
    if view == "trajectory":
        if "traj_points" in snap.tensors:
            out.append(("trajectory", 0, trajectory_polydata(snap.trajectory(tuple(traj_dims)))))
        return out
    for layer in snap.layer_ids:
        if view == "weight_grid":
            weights = snap.weights(layer)
            layout = grid_layout(weights.shape[2] * weights.shape[3])
            out.append((view, layer, build_weight_grid(weights, layout)))
        elif view == "image_grid":
            summed = snap.summed(layer)
            out.append((view, layer, build_image_grid(summed, grid_layout(summed.shape[2]))))
        elif view == "accumulated_image_grid":
            acc = snap.accum(layer)
            out.append((view, layer, build_image_grid(acc, grid_layout(acc.shape[2]))))
        elif view == "distribution_grid":
            summed = snap.summed(layer)
            report = snap.reports.get(layer)
            out.append((view, layer, build_distribution_grid(summed, grid_layout(summed.shape[2]), report)))
        else:
            raise ValueError(f"unknown view {view!r}")
    return out


def emit_view_files(snap: Snapshot, views, traj_dims, fmt: str, out_dir: str) -> int:
    """Write view files for one snapshot; returns number of files written."""
    written = 0
    for view in views:
        if view == "similarity":
            for layer, report in snap.reports.items():
                if report is not None:
                    save_heatmap_csv(report.matrix, os.path.join(out_dir, view_filename("similarity", layer, snap.step, "csv")))
                    written += 1
            continue
        for name, layer, pd in snapshot_views(snap, view, traj_dims):
            if fmt in ("vtp", "both"):
                write_vtp(pd, os.path.join(out_dir, view_filename(name, layer, snap.step, "vtp")), mode="binary")
                written += 1
            if fmt in ("csv", "both"):
                write_csv(pd, os.path.join(out_dir, view_filename(name, layer, snap.step, "csv")))
                written += 1
    return written


# ---------------------------------------------------------------------------
# The training run


def make_step_snapshot(step, loss, layer_ids, net, summed, accum, reports, trace) -> Snapshot:
    tensors: dict[str, np.ndarray] = {}
    for layer in layer_ids:
        conv = net.conv_layer(layer)
        tensors[f"weights_{layer}"] = conv.kernel.copy()
        tensors[f"bias_{layer}"] = conv.bias.copy()
        tensors[f"summed_{layer}"] = summed[layer]
        tensors[f"accum_{layer}"] = accum[layer]
    if trace is not None and trace.points:
        tensors["traj_points"] = np.asarray(trace.points, dtype=np.float64)
        tensors["traj_steps"] = np.asarray(trace.steps, dtype=np.float64)
    return Snapshot(step=step, loss=loss, layer_ids=list(layer_ids), tensors=tensors, reports=dict(reports))


def run(cfg: RunConfig, net: Network | None = None) -> dict:
    """Train with in-situ instrumentation; returns the run summary dict.

    A pre-built Network may be injected for experiments that need seeded or
    hand-edited weights; by default one is initialized from cfg.seed.
    """
    cfg.validate()
    train_x, train_y, test_x, test_y = resolve_dataset(cfg)
    if net is None:
        net = Network.from_spec(cfg.network, cfg.seed)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])

    layer_ids = [l for l in cfg.layers if l < len(net.conv_ids)]
    os.makedirs(cfg.out_dir, exist_ok=True)
    session: StreamSession | None = None
    if cfg.listen:
        session = serve(cfg.listen, network_summary(cfg, net), queue_groups=cfg.queue_groups)
        logger.info("streaming on %s:%d", *session.address)

    trace = TrajectoryTrace(dims=cfg.traj_dims)
    traj_active = "trajectory" in cfg.views
    if traj_active and max(cfg.traj_dims) < net.flat_weights(cfg.traj_layer).size:
        trace = append_trajectory(trace, net.conv_layer(cfg.traj_layer).kernel, 0)

    accum: dict[int, np.ndarray] = {}
    reports: dict[int, object] = {l: None for l in layer_ids}
    files_written = 0
    prunes_applied = 0
    outstanding: str | None = None

    n = train_x.shape[0]
    try:
        for _epoch in range(cfg.epochs):
            perm = shuffle_rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                loss, record = net.train_step(train_x[idx], train_y[idx], cfg.lr)
                step = net.step_counter

                summed = {l: batch_sum(record.activations[l]) for l in layer_ids}
                for l in layer_ids:
                    accum[l] = accumulate(accum[l], summed[l]) if l in accum else summed[l].copy()
                if traj_active:
                    kernel = net.conv_layer(cfg.traj_layer).kernel
                    if max(cfg.traj_dims) < kernel.size:
                        trace = append_trajectory(trace, kernel, step)

                # similarity / prune cadence
                pending_plan: PrunePlan | None = None
                proposal_body = None
                fresh_report = None
                if step % cfg.prune_interval == 0:
                    for l in layer_ids:
                        reports[l] = similarity_report(summed[l], cfg.pcc_threshold, step, l)
                    grouped = next((reports[l] for l in layer_ids if reports[l].groups), None)
                    if grouped is not None:
                        fresh_report = grouped
                    elif layer_ids:
                        fresh_report = reports[layer_ids[0]]
                    if grouped is not None and cfg.prune_mode == "auto":
                        pending_plan = plan_prune(grouped)
                    elif (
                        grouped is not None
                        and cfg.prune_mode == "interactive"
                        and session is not None
                        and session.viewer_connected()  # nobody to decide otherwise
                        and outstanding is None
                    ):
                        plan = plan_prune(grouped)
                        proposal_body = session.register_proposal(plan)
                        outstanding = proposal_body["proposal_id"]

                snap = make_step_snapshot(step, float(loss), layer_ids, net, summed, accum, reports, trace)
                if session is not None:
                    geometries = []
                    for view in cfg.views:
                        geometries.extend(snapshot_views(snap, view, cfg.traj_dims))
                    session.publish_step(step, geometries, report=fresh_report, proposal=proposal_body, loss=float(loss))

                if step % cfg.snapshot_interval == 0:
                    write_snapshot(os.path.join(cfg.out_dir, snapshot_filename(step)), snap)
                    files_written += 1
                    files_written += emit_view_files(snap, cfg.views, cfg.traj_dims, cfg.snapshot_format, cfg.out_dir)

                # step boundary: viewer commands first, then any auto plan
                if session is not None:
                    for cmd in session.poll_commands(step):
                        if cmd.action == "apply":
                            try:
                                net = apply_prune(net, cmd.plan)
                                prunes_applied += 1
                                _after_prune(cmd.plan, accum, reports)
                                session.resolve(cmd.proposal_id, "applied")
                                session.send_ack(
                                    cmd.proposal_id,
                                    applied=True,
                                    step=step,
                                    new_filter_count=net.conv_layer(cmd.plan.layer_id).filters,
                                )
                            except (ValueError, IndexError) as e:
                                session.resolve(cmd.proposal_id, "failed")
                                session.send_ack(cmd.proposal_id, applied=False, step=step, reason=str(e))
                        else:
                            session.resolve(cmd.proposal_id, "dismissed")
                            session.send_ack(cmd.proposal_id, applied=False, step=step, reason="dismissed")
                        if cmd.proposal_id == outstanding:
                            outstanding = None
                if pending_plan is not None:
                    net = apply_prune(net, pending_plan)
                    prunes_applied += 1
                    _after_prune(pending_plan, accum, reports)
                    logger.info("step %d: pruned filters %s of layer %d", step, pending_plan.removed, pending_plan.layer_id)
    finally:
        if session is not None:
            session.close()

    summary = {
        "final_accuracy": net.evaluate(test_x, test_y),
        "steps": net.step_counter,
        "prunes_applied": prunes_applied,
        "frames_sent": session.frames_sent if session else 0,
        "files_written": files_written,
        "filter_counts": net.filter_counts(),
        "dropped_groups": session.dropped_groups if session else 0,
    }
    with open(os.path.join(cfg.out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
    return summary


def _after_prune(plan: PrunePlan, accum: dict, reports: dict):
    """Keep per-layer bookkeeping consistent with the reduced filter count."""
    removed = list(plan.removed)
    if plan.layer_id in accum:
        accum[plan.layer_id] = np.delete(accum[plan.layer_id], removed, axis=2)
    reports[plan.layer_id] = None  # indices are stale after surgery


# ---------------------------------------------------------------------------
# Offline conversion


def convert(snapshot_dir: str, view: str, fmt: str, out_dir: str, traj_dims=(0, 1, 2)) -> int:
    """Re-derive view files from recorded snapshots; returns files written."""
    if view not in CONVERT_VIEWS:
        raise ValueError(f"unknown view {view!r}; choose from {CONVERT_VIEWS}")
    if fmt not in ("vtp", "csv", "both"):
        raise ValueError("format must be vtp, csv or both")
    snaps = list_snapshots(snapshot_dir)
    if not snaps:
        raise FileNotFoundError(f"no snapshots under {snapshot_dir!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = 0
    for _step, path in snaps:
        written += emit_view_files(read_snapshot(path), [view], traj_dims, fmt, out_dir)
    return written


# ---------------------------------------------------------------------------
# Replay


def replay(
    snapshot_dir: str,
    bind_address: str,
    rate: float = 10.0,
    inject_proposal: bool = False,
    wait_timeout: float = 15.0,
    views=("weight_grid", "image_grid", "distribution_grid", "trajectory"),
    traj_dims=(0, 1, 2),
) -> dict:
    """Stream recorded snapshots over the live protocol at `rate` steps/second.

    With inject_proposal=True a synthetic merge proposal (fold filter 1 into
    filter 0 of the first recorded layer) is attached to the first step; an
    "apply" command makes all subsequent frames render without the removed
    filter, mirroring what a live prune does.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    snaps = list_snapshots(snapshot_dir)
    if not snaps:
        raise FileNotFoundError(f"no snapshots under {snapshot_dir!r}")

    first = read_snapshot(snaps[0][1])
    summary = {
        "input_shape": None,
        "layers": [
            {"layer": l, "filters": int(first.weights(l).shape[3]), "window": int(first.weights(l).shape[0])}
            for l in first.layer_ids
        ],
        "views": list(views),
    }
    session = serve(bind_address, summary)
    try:
        if not session.wait_for_viewer(wait_timeout):
            return {"status": "no viewer", "steps": 0, "frames_sent": 0}

        removed_by_layer: dict[int, list[int]] = {}
        injected_plan = None
        for i, (step, path) in enumerate(snaps):
            snap = read_snapshot(path)
            _strip_filters(snap, removed_by_layer)
            proposal_body = None
            if inject_proposal and i == 0:
                layer = snap.layer_ids[0]
                injected_plan = PrunePlan(layer_id=layer, merges=(Merge(keep=0, remove=(1,)),), created_at_step=step)
                proposal_body = session.register_proposal(injected_plan)
            geometries = []
            for view in views:
                geometries.extend(snapshot_views(snap, view, traj_dims))
            report = next((snap.reports[l] for l in snap.layer_ids if snap.reports.get(l)), None)
            session.publish_step(step, geometries, report=report, proposal=proposal_body, loss=snap.loss)
            time.sleep(1.0 / rate)

            for cmd in session.poll_commands(step):
                if cmd.action == "apply":
                    removed = removed_by_layer.setdefault(cmd.plan.layer_id, [])
                    removed.extend(cmd.plan.removed)
                    new_count = int(first.weights(cmd.plan.layer_id).shape[3]) - len(removed)
                    session.resolve(cmd.proposal_id, "applied")
                    session.send_ack(cmd.proposal_id, applied=True, step=step, new_filter_count=new_count)
                else:
                    session.resolve(cmd.proposal_id, "dismissed")
                    session.send_ack(cmd.proposal_id, applied=False, step=step, reason="dismissed")
        # give the sender a moment to flush before tearing down
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline and session._groups:
            time.sleep(0.05)
        return {"status": "ok", "steps": len(snaps), "frames_sent": session.frames_sent}
    finally:
        session.close()


def _strip_filters(snap: Snapshot, removed_by_layer: dict[int, list[int]]):
    """Drop pruned filters from a snapshot's per-layer tensors (replay only)."""
    for layer, removed in removed_by_layer.items():
        if not removed or layer not in snap.layer_ids:
            continue
        snap.tensors[f"weights_{layer}"] = np.delete(snap.weights(layer), removed, axis=3)
        snap.tensors[f"bias_{layer}"] = np.delete(snap.bias(layer), removed)
        snap.tensors[f"summed_{layer}"] = np.delete(snap.summed(layer), removed, axis=2)
        snap.tensors[f"accum_{layer}"] = np.delete(snap.accum(layer), removed, axis=2)
        snap.reports[layer] = None
