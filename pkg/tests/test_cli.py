import json

import pytest

from rvos_harness.cli import main


def test_fixture_and_run(tmp_path, capsys):
    root = tmp_path / "fx"
    assert main(["fixture", "--root", str(root), "--seed", "3", "--lengths", "30,101,12,7"]) == 0
    out = tmp_path / "out"
    assert main(["run", "--config", str(root / "rvos.ini"), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["Final"] == 100.0 and report["N-acc"] == 100.0
    assert "100.00" in capsys.readouterr().out

    assert main(["eval", "--root", str(root), "--predictions", str(out / "predictions"),
                 "--out", str(tmp_path / "ev")]) == 0
    assert json.loads((tmp_path / "ev" / "report.json").read_text())["Final"] == 100.0


def test_eval_scores_triple(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"jf": 71.06, "n_acc": 100.00, "t_acc": 96.52}))
    assert main(["eval", "--scores", str(p), "--out", str(tmp_path / "r.json")]) == 0
    assert "89.19" in capsys.readouterr().out
    assert json.loads((tmp_path / "r.json").read_text())["Final"] == 89.19


def test_eval_scores_list(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps([
        {"expression_id": "a", "j": 1.0, "f": 1.0, "predicted_nonempty": True, "gt_target_present": True},
        {"expression_id": "b", "j": None, "f": None, "predicted_nonempty": True, "gt_target_present": False},
    ]))
    assert main(["eval", "--scores", str(p)]) == 0
    assert "66.67" in capsys.readouterr().out


def test_plan_length(capsys):
    assert main(["plan", "--length", "55"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert len(d["clips"]) == 10 and d["token_assignments"]["5"] == [0, 1]


def test_plan_video(fresh_fixture, capsys):
    assert main(["plan", "--root", str(fresh_fixture), "--video", "vid000", "--t-target", "10", "--n-clips", "2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["video_length"] == 120 and d["g"] == 2


def test_gate_one_null(fresh_fixture, tmp_path):
    meta = json.loads((fresh_fixture / "valid" / "meta_expressions.json").read_text())
    ids = [f"{v}/{k}" for v, e in meta["videos"].items() for k in e["expressions"]]
    a = {i: "present" for i in ids}
    b = dict(a)
    a["vid003/2"] = b["vid003/2"] = "absent"
    a["vid000/3"] = "absent"  # only one judge: stays proceed
    (tmp_path / "a.json").write_text(json.dumps(a))
    (tmp_path / "b.json").write_text(json.dumps(b))
    out = tmp_path / "gate.jsonl"
    rc = main(["gate", "--root", str(fresh_fixture), "--judge", f"a=mock:{tmp_path / 'a.json'}",
               "--judge", f"b=mock:{tmp_path / 'b.json'}", "--out", str(out)])
    assert rc == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 16
    assert [l["expression_id"] for l in lines if l["outcome"] == "null_target"] == ["vid003/2"]


def test_infer_gate_off_forced(fresh_fixture, tmp_path):
    out = tmp_path / "o"
    rc = main(["infer", "--config", str(fresh_fixture / "rvos.ini"), "--gate", "off",
               "--backend", "forced", "--out", str(out)])
    assert rc == 0
    assert not (out / "report.json").exists()
    index = json.loads((out / "predictions" / "predictions.json").read_text())
    assert not any(e["null"] for e in index["expressions"].values())


def test_render(fresh_fixture, tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(fresh_fixture / "rvos.ini"), "--out", str(out)])
    r = tmp_path / "r"
    assert main(["render", "--root", str(fresh_fixture), "--video", "vid001",
                 "--predictions", str(out / "predictions"), "--out", str(r)]) == 0
    assert len(list(r.glob("clip*_mosaic.png"))) == 10
    assert len(list((r / "overlays" / "vid001" / "0").glob("*.png"))) == 55


def test_exit_codes(fresh_fixture, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert main(["run", "--root", str(tmp_path / "nothing"), "--judge", "a=oracle",
                 "--judge", "b=oracle", "--out", str(tmp_path / "o")]) == 3
    assert main(["plan"]) == 3
    rc = main(["run", "--config", str(fresh_fixture / "rvos.ini"), "--backend", "http://127.0.0.1:9/",
               "--out", str(tmp_path / "o2")])
    assert rc == 2
