import os
import threading
import time

import numpy as np
import pytest

from cnnscope.config import RunConfig
from cnnscope.network import Conv, Dense, MaxPool, Network, NetworkSpec, SoftmaxOutput
from cnnscope.runner import convert, planned_steps, replay, run
from cnnscope.snapshots import list_snapshots, read_snapshot
from cnnscope.stream import StreamClient, body_to_polydata
from cnnscope.views import polydata_equal
from cnnscope.vtkio import read_vtp


def tiny_spec() -> NetworkSpec:
    return NetworkSpec(
        layers=(Conv(4, 3), MaxPool(2), Conv(4, 3), Dense(16), SoftmaxOutput(4)),
        input_shape=(12, 12, 1),
    )


def tiny_config(out_dir, **kw) -> RunConfig:
    defaults = dict(
        dataset="synthetic",
        synthetic_train=40,
        synthetic_test=20,
        lr=0.001,
        batch_size=10,
        epochs=1,
        seed=1,
        out_dir=str(out_dir),
        snapshot_interval=2,
        prune_interval=2,
        network=tiny_spec(),
    )
    defaults.update(kw)
    return RunConfig(**defaults)


def duplicated_net(seed=1) -> Network:
    net = Network.from_spec(tiny_spec(), seed=seed)
    conv = net.conv_layer(0)
    conv.kernel[:, :, :, 1] = conv.kernel[:, :, :, 0]
    conv.bias[1] = conv.bias[0]
    return net


class TestPlannedSteps:
    def test_paper_arithmetic(self):
        assert planned_steps(55_000, 50, 5) == 5500  # 1100 steps/epoch
        assert planned_steps(55_000, 50, 40) == 44_000

    def test_partial_batches_count(self):
        assert planned_steps(45, 10, 2) == 10


class TestRun:
    def test_prune_off_constant_filters(self, tmp_path):
        summary = run(tiny_config(tmp_path / "out"))
        assert summary["filter_counts"] == [4, 4]
        assert summary["prunes_applied"] == 0
        assert summary["steps"] == 4
        assert summary["frames_sent"] == 0
        assert os.path.exists(tmp_path / "out" / "summary.json")

    def test_auto_prunes_duplicated_filters(self, tmp_path):
        cfg = tiny_config(tmp_path / "out", prune_mode="auto", prune_interval=1)
        summary = run(cfg, net=duplicated_net())
        assert summary["prunes_applied"] >= 1
        assert summary["filter_counts"][0] < 4

    def test_snapshots_written_on_cadence(self, tmp_path):
        run(tiny_config(tmp_path / "out"))
        steps = [s for s, _ in list_snapshots(str(tmp_path / "out"))]
        assert steps == [2, 4]
        snap = read_snapshot(list_snapshots(str(tmp_path / "out"))[0][1])
        assert "weights_0" in snap.tensors and "summed_0" in snap.tensors
        assert snap.tensors["traj_points"].shape[0] == 3  # init + steps 1..2

    def test_determinism_bitwise(self, tmp_path):
        cfg_a = tiny_config(tmp_path / "a", snapshot_format="both")
        cfg_b = tiny_config(tmp_path / "b", snapshot_format="both")
        run(cfg_a)
        run(cfg_b)
        files_a = sorted(os.listdir(tmp_path / "a"))
        files_b = sorted(os.listdir(tmp_path / "b"))
        assert files_a == files_b and len(files_a) > 2
        for name in files_a:
            a = open(tmp_path / "a" / name, "rb").read()
            b = open(tmp_path / "b" / name, "rb").read()
            assert a == b, f"{name} differs between identical runs"

    def test_different_seed_differs(self, tmp_path):
        run(tiny_config(tmp_path / "a"))
        run(tiny_config(tmp_path / "b", seed=2))
        sa = open(tmp_path / "a" / "summary.json").read()
        sb = open(tmp_path / "b" / "summary.json").read()
        assert sa != sb


class TestConvert:
    def test_live_and_offline_files_byte_equal(self, tmp_path):
        cfg = tiny_config(tmp_path / "live", snapshot_format="both")
        run(cfg)
        for view in cfg.views:
            convert(str(tmp_path / "live"), view, "both", str(tmp_path / "off"))
        live_views = [f for f in os.listdir(tmp_path / "live") if f.endswith((".vtp", ".csv"))]
        assert live_views
        for name in sorted(live_views):
            live = open(tmp_path / "live" / name, "rb").read()
            off = open(tmp_path / "off" / name, "rb").read()
            assert live == off, f"{name}: live vs convert mismatch"

    def test_accumulated_view_and_similarity(self, tmp_path):
        cfg = tiny_config(tmp_path / "live", prune_interval=1)  # reports at every step
        run(cfg)
        n1 = convert(str(tmp_path / "live"), "accumulated_image_grid", "vtp", str(tmp_path / "off"))
        n2 = convert(str(tmp_path / "live"), "similarity", "csv", str(tmp_path / "off"))
        assert n1 == 2  # one per snapshot
        assert n2 == 2
        heatmap = open(tmp_path / "off" / "similarity_0_00000002.csv").read().splitlines()
        assert len(heatmap) == 4 and len(heatmap[0].split(",")) == 4

    def test_unknown_view(self, tmp_path):
        run(tiny_config(tmp_path / "live"))
        with pytest.raises(ValueError, match="unknown view"):
            convert(str(tmp_path / "live"), "sparkline", "vtp", str(tmp_path / "off"))

    def test_missing_snapshots(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            convert(str(tmp_path / "empty"), "weight_grid", "vtp", str(tmp_path / "off"))


class TestReplay:
    def make_session_dir(self, tmp_path, steps=10):
        cfg = tiny_config(
            tmp_path / "rec",
            synthetic_train=steps * 10,
            snapshot_interval=1,
            prune_interval=100,
        )
        run(cfg)
        assert len(list_snapshots(str(tmp_path / "rec"))) == steps
        return str(tmp_path / "rec")

    def test_no_viewer_status(self, tmp_path):
        rec = self.make_session_dir(tmp_path, steps=3)
        result = replay(rec, "127.0.0.1:0", rate=100, wait_timeout=0.3)
        assert result["status"] == "no viewer"

    def test_replay_rate_and_fidelity(self, tmp_path, free_tcp_port):
        rec = self.make_session_dir(tmp_path, steps=10)
        addr = f"127.0.0.1:{free_tcp_port}"
        result = {}

        def serve_replay():
            result.update(replay(rec, addr, rate=5.0))

        thread = threading.Thread(target=serve_replay)
        thread.start()
        time.sleep(0.2)
        client = StreamClient(addr)
        client.hello()
        t0 = time.monotonic()
        groups = []
        while len(groups) < 10:
            group = client.read_step_group()
            if group[0]["type"] == "step_begin":
                groups.append(group)
        elapsed = time.monotonic() - t0
        thread.join(timeout=30)
        client.close()
        assert result["status"] == "ok" and result["steps"] == 10
        assert elapsed >= 10 / 5.0 - 0.5  # ~2 s at 5 steps/s

        # geometry equals the convert output for the same steps
        convert(rec, "weight_grid", "vtp", str(tmp_path / "off"))
        first_step = groups[0][0]["step"]
        geo = next(f for f in groups[0] if f["type"] == "geometry" and f["body"]["view"] == "weight_grid")
        offline = read_vtp(str(tmp_path / "off" / f"weight_grid_0_{first_step:08d}.vtp"))
        assert polydata_equal(body_to_polydata(geo["body"]), offline)

    def test_injected_proposal_apply_reduces_windows(self, tmp_path, free_tcp_port):
        rec = self.make_session_dir(tmp_path, steps=8)
        addr = f"127.0.0.1:{free_tcp_port}"
        result = {}

        def serve_replay():
            result.update(replay(rec, addr, rate=20.0, inject_proposal=True))

        thread = threading.Thread(target=serve_replay)
        thread.start()
        time.sleep(0.2)
        client = StreamClient(addr)
        client.hello()

        groups, acks = [], []
        proposal_id = None
        applied_sent = False
        while len(groups) < 8:
            group = client.read_step_group()
            if group[0]["type"] == "prune_ack":
                acks.append(group[0])
                continue
            groups.append(group)
            for frame in group:
                if frame["type"] == "prune_proposal" and not applied_sent:
                    proposal_id = frame["body"]["proposal_id"]
                    client.send_prune_command(proposal_id, "apply")
                    applied_sent = True
        thread.join(timeout=30)
        client.close()

        assert proposal_id is not None
        assert any(a["body"]["applied"] and a["body"]["new_filter_count"] == 3 for a in acks)

        def window_quads(group):
            geo = next(f for f in group if f["type"] == "geometry" and f["body"]["view"] == "weight_grid")
            return len(geo["body"]["quads"]) // 4

        assert window_quads(groups[0]) == 4 * 9  # 4 filters x 3x3 blocks
        assert window_quads(groups[-1]) == 3 * 9  # one filter folded away


class TestInteractiveRun:
    def test_viewer_applies_proposal_live(self, tmp_path, free_tcp_port):
        addr = f"127.0.0.1:{free_tcp_port}"
        cfg = tiny_config(
            tmp_path / "out",
            synthetic_train=600,  # ~60 steps so the viewer has time to act
            prune_mode="interactive",
            prune_interval=1,
            snapshot_interval=1000,
            listen=addr,
        )
        summary = {}

        def train():
            summary.update(run(cfg, net=duplicated_net()))

        thread = threading.Thread(target=train)
        thread.start()
        client = None
        deadline = time.monotonic() + 10
        while client is None:
            try:
                client = StreamClient(addr, timeout=5)
            except OSError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.05)
        client.hello()

        proposal_id = None
        ack = None
        reduced_windows = None
        try:
            while thread.is_alive() or True:
                group = client.read_step_group()
                if group[0]["type"] == "prune_ack":
                    ack = group[0]
                    continue
                for frame in group:
                    if frame["type"] == "prune_proposal" and proposal_id is None:
                        proposal_id = frame["body"]["proposal_id"]
                        client.send_prune_command(proposal_id, "apply")
                    if frame["type"] == "geometry" and frame["body"]["view"] == "weight_grid":
                        quads = len(frame["body"]["quads"]) // 4
                        if quads == 3 * 9:
                            reduced_windows = quads
                if ack is not None and reduced_windows is not None:
                    break
        except ConnectionError:
            pass  # run finished and closed the stream
        thread.join(timeout=60)
        client.close()

        assert proposal_id is not None, "no proposal was offered to the viewer"
        assert ack is not None and ack["body"]["applied"] is True
        assert reduced_windows == 27
        assert summary["prunes_applied"] == 1
        assert summary["filter_counts"][0] == 3
