import json

import numpy as np
import pytest

from facekit import distill, faceio
from facekit.cli import main
from facekit.metrics import are
from facekit.model import ParamVector, denormalize_params, synthesize


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def structured(capsys, *argv):
    code, out, err = run(capsys, "--format", "structured", *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    d = tmp_path_factory.mktemp("assets")
    small = ["--n-vertices", 160, "--n-shape", 10, "--n-expr", 4]
    assert main([str(a) for a in ["--seed", 4, "--out", d / "m.fkm", "gen", "--kind", "model", *small]]) == 0
    assert main(["--out", str(d / "s.json"), "gen", "--kind", "spec", "--model", str(d / "m.fkm")]) == 0
    assert main([str(a) for a in ["--seed", 4, "--out", d / "ds.fka", "gen", "--kind", "dataset",
                                  "--model", d / "m.fkm", "--n-identities", 200, *small]]) == 0
    return d


def test_gen_is_deterministic(assets, tmp_path, capsys):
    code, *_ = run(capsys, "--seed", 4, "gen", "--kind", "model", "--n-vertices", 160, "--n-shape", 10,
                   "--n-expr", 4, "--out", tmp_path / "again.fkm")
    assert code == 0
    assert (tmp_path / "again.fkm").read_bytes() == (assets / "m.fkm").read_bytes()
    model = faceio.load_model(assets / "m.fkm")
    faceio.load_landmark_spec(assets / "s.json").check_model(model.n_vertices)
    ds = faceio.load_dataset(assets / "ds.fka")
    x = np.hstack([ds.params, np.ones((len(ds), 1))])
    coef, *_ = np.linalg.lstsq(x, ds.embeddings, rcond=None)
    assert np.abs(x @ coef - ds.embeddings).max() < 1e-8


def test_synth_zero_matches_mean_export(assets, tmp_path, capsys):
    assert run(capsys, "synth", "--model", assets / "m.fkm", "--zero", "--out", tmp_path / "z.obj")[0] == 0
    faceio.export_obj(faceio.load_model(assets / "m.fkm").mean_mesh(), tmp_path / "mean.obj")
    assert (tmp_path / "z.obj").read_text() == (tmp_path / "mean.obj").read_text()


def test_synth_pose_and_bad_pose(assets, tmp_path, capsys):
    assert run(capsys, "synth", "--model", assets / "m.fkm", "--zero", "--pose", "0,0.1,0,0.5,0,0",
               "--out", tmp_path / "p.obj")[0] == 0
    code, _, err = run(capsys, "synth", "--model", assets / "m.fkm", "--zero", "--pose", "1,2",
                       "--out", tmp_path / "p.obj")
    assert code == 1 and err.count("\n") == 1


def test_missing_model_file(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--model", tmp_path / "nope.fkm", "--zero", "--out", tmp_path / "x.obj")
    assert code != 0 and err.startswith("error:")


def test_unknown_flag(capsys):
    assert run(capsys, "gen", "--kind", "model", "--bogus")[0] == 1


def test_fit_recovers_params(assets, tmp_path, capsys):
    model = faceio.load_model(assets / "m.fkm")
    spec = faceio.load_landmark_spec(assets / "s.json")
    rng = np.random.default_rng(0)
    truth = ParamVector(rng.standard_normal(model.n_shape), rng.standard_normal(model.n_expr))
    faceio.save_landmarks(tmp_path / "lm", synthesize(model, truth).vertices[spec.landmarks68])
    doc = structured(capsys, "fit", "--model", assets / "m.fkm", "--spec", assets / "s.json",
                     "--landmarks", tmp_path / "lm", "--reg", 0, "--out", tmp_path / "p")
    assert np.abs(np.r_[doc["shape"], doc["expr"]] - truth.stacked()).max() < 1e-8
    assert np.array_equal(faceio.load_params(tmp_path / "p").stacked(), np.r_[doc["shape"], doc["expr"]])

    faceio.save_landmarks(tmp_path / "mean", model.mean_mesh().vertices[spec.landmarks68])
    doc = structured(capsys, "fit", "--model", assets / "m.fkm", "--spec", assets / "s.json",
                     "--landmarks", tmp_path / "mean")
    assert np.abs(np.r_[doc["shape"], doc["expr"]]).max() < 1e-10


def test_fit_rank_deficient_spec(assets, tmp_path, capsys):
    doc = json.loads((assets / "s.json").read_text())
    doc["landmarks68"] = [doc["landmarks68"][0]] * 68
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    faceio.save_landmarks(tmp_path / "lm", np.zeros((68, 3)))
    code, _, err = run(capsys, "fit", "--model", assets / "m.fkm", "--spec", tmp_path / "bad.json",
                       "--landmarks", tmp_path / "lm", "--reg", 0)
    assert code == 3 and "rank" in err


def test_eval_identity_and_scaled(assets, tmp_path, capsys):
    model = faceio.load_model(assets / "m.fkm")
    mean = model.mean_mesh()
    faceio.export_obj(mean, tmp_path / "ref.obj")
    doc = structured(capsys, "eval", "--pred", tmp_path / "ref.obj", "--ref", tmp_path / "ref.obj",
                     "--spec", assets / "s.json", "--report", tmp_path / "r.json")
    assert max(doc["are"].values()) == 0 and doc["nme"] == 0
    assert doc["holistic_rmse"] < 1e-9 and max(doc["part_rmse"].values()) < 1e-9
    faceio.load_report(tmp_path / "r.json")
    faceio.report_from_dict(doc)

    faceio.export_obj(type(mean)(mean.vertices * 1.5, mean.triangles), tmp_path / "big.obj")
    doc = structured(capsys, "eval", "--pred", tmp_path / "big.obj", "--ref", tmp_path / "ref.obj",
                     "--spec", assets / "s.json")
    assert max(doc["are"].values()) < 1e-8
    assert doc["holistic_rmse"] > 1e-3


def test_eval_er_knob(assets, tmp_path, capsys):
    model = faceio.load_model(assets / "m.fkm")
    spec = faceio.load_landmark_spec(assets / "s.json")
    k = np.zeros(model.n_shape)
    k[0] = 1.0
    wide = synthesize(model, ParamVector(k, np.zeros(model.n_expr)))
    faceio.export_obj(wide, tmp_path / "wide.obj")
    faceio.export_obj(model.mean_mesh(), tmp_path / "ref.obj")
    doc = structured(capsys, "eval", "--pred", tmp_path / "wide.obj", "--ref", tmp_path / "ref.obj",
                     "--spec", assets / "s.json")
    hand = are(faceio.import_obj(tmp_path / "wide.obj"), faceio.import_obj(tmp_path / "ref.obj"), spec)
    assert doc["are"]["ER"] > 0
    assert abs(doc["are"]["ER"] - hand["ER"]) < 1e-12


def test_kd_loss_cmd(tmp_path, capsys):
    rng = np.random.default_rng(1)
    t, s = rng.standard_normal((6, 8)), rng.standard_normal((6, 5))
    pt = ParamVector(rng.standard_normal(4), rng.standard_normal(2))
    ps = ParamVector(rng.standard_normal(4), rng.standard_normal(2))
    for name, obj in (("t.json", t), ("s.json", s)):
        faceio.save_embedding(tmp_path / name, obj)
    faceio.save_params(tmp_path / "pt", pt)
    faceio.save_params(tmp_path / "ps", ps)

    same = structured(capsys, "kd-loss", "--teacher", tmp_path / "t.json", "--student", tmp_path / "t.json",
                      "--teacher-params", tmp_path / "pt", "--student-params", tmp_path / "pt")
    assert abs(same["L_KD"]) < 1e-10 and abs(same["L_div"]) < 1e-10 and same["L_p-gt"] == 0
    params_only = structured(capsys, "kd-loss", "--teacher", tmp_path / "t.json", "--student", tmp_path / "t.json",
                             "--teacher-params", tmp_path / "pt", "--student-params", tmp_path / "ps")
    assert abs(params_only["L_KD"] - params_only["L_p-gt"]) < 1e-10
    doc = structured(capsys, "kd-loss", "--teacher", tmp_path / "t.json", "--student", tmp_path / "s.json",
                     "--teacher-params", tmp_path / "pt", "--student-params", tmp_path / "ps",
                     "--div-weight", 0.5, "--grad-out", tmp_path / "g")
    total, g_emb, _ = distill.kd_loss(t, s, pt, ps, 0.5)
    assert abs(doc["L_KD"] - total) < 1e-12
    arrays, _ = faceio.load_arrays(tmp_path / "g", "kd_grad")
    assert np.array_equal(arrays["embedding"], g_emb)


def test_kd_loss_batch_mismatch(tmp_path, capsys):
    rng = np.random.default_rng(2)
    faceio.save_embedding(tmp_path / "t.json", rng.standard_normal((4, 3)))
    faceio.save_embedding(tmp_path / "s.json", rng.standard_normal((5, 3)))
    faceio.save_params(tmp_path / "p", ParamVector(np.zeros(2), np.zeros(1)))
    code, *_ = run(capsys, "kd-loss", "--teacher", tmp_path / "t.json", "--student", tmp_path / "s.json",
                   "--teacher-params", tmp_path / "p", "--student-params", tmp_path / "p")
    assert code == 2


def test_train_and_predict(assets, tmp_path, capsys):
    doc = structured(capsys, "--seed", 1, "train", "--dataset", assets / "ds.fka", "--iters", 2000,
                     "--weights-out", tmp_path / "w")
    assert doc["final_loss"] < 1e-4 * doc["initial_loss"]
    zero = structured(capsys, "train", "--dataset", assets / "ds.fka", "--iters", 0,
                      "--weights-out", tmp_path / "w0", "--seed", 1)
    assert zero["final_loss"] == zero["initial_loss"]

    model = faceio.load_model(assets / "m.fkm")
    spec = faceio.load_landmark_spec(assets / "s.json")
    ds = faceio.load_dataset(assets / "ds.fka")
    _, p, _ = ds.sample(3)
    truth = synthesize(model, denormalize_params(p, model.param_stats))
    errors = []
    for w in ("w0", "w"):
        assert run(capsys, "predict", "--weights", tmp_path / w, "--embedding", assets / "ds.fka", "--row", 3,
                   "--model", assets / "m.fkm", "--out", tmp_path / f"{w}.obj")[0] == 0
        errors.append(are(faceio.import_obj(tmp_path / f"{w}.obj"), truth, spec)["mean"])
    assert errors[1] < errors[0]

    faceio.save_embedding(tmp_path / "one.json", ds.embeddings[3:4])
    assert run(capsys, "predict", "--weights", tmp_path / "w", "--embedding", tmp_path / "one.json",
               "--model", assets / "m.fkm", "--out", tmp_path / "one.obj")[0] == 0
    assert (tmp_path / "one.obj").read_text() == (tmp_path / "w.obj").read_text()
    assert run(capsys, "predict", "--weights", tmp_path / "w", "--embedding", tmp_path / "one.json", "--row", 5,
               "--model", assets / "m.fkm", "--out", tmp_path / "x.obj")[0] == 1


def test_audio_cmd(tmp_path, capsys):
    from facekit.audio import Waveform, write_wav

    write_wav(tmp_path / "silence.wav", Waveform(np.zeros(16000), 16000))
    doc = structured(capsys, "audio", "--in", tmp_path / "silence.wav", "--raw", "--out", tmp_path / "m")
    assert doc["frames"] == 98
    assert np.all(faceio.load_spectrogram(tmp_path / "m").frames == np.log(1e-10))

    write_wav(tmp_path / "noise.wav", Waveform(np.random.default_rng(0).uniform(-.5, .5, 16000 * 10), 16000))
    outs = []
    for i in range(2):
        run(capsys, "--seed", 7, "audio", "--in", tmp_path / "noise.wav", "--crop", "3:8", "--out", tmp_path / f"c{i}")
        outs.append((tmp_path / f"c{i}").read_bytes())
    assert outs[0] == outs[1]
    assert run(capsys, "audio", "--in", tmp_path / "silence.wav", "--crop", "3:8", "--out", tmp_path / "x")[0] == 2


def test_fit_ranks_candidates(assets, tmp_path, capsys):
    model = faceio.load_model(assets / "m.fkm")
    spec = faceio.load_landmark_spec(assets / "s.json")
    clean = model.mean_mesh().vertices[spec.landmarks68]
    rng = np.random.default_rng(5)
    for name, sigma in (("noisy", 0.05), ("clean", 0.0), ("noisier", 0.2)):
        faceio.save_landmarks(tmp_path / name, clean + sigma * rng.standard_normal(clean.shape))
    doc = structured(capsys, "fit", "--model", assets / "m.fkm", "--spec", assets / "s.json",
                     "--landmarks", tmp_path / "noisy", "--landmarks", tmp_path / "clean",
                     "--landmarks", tmp_path / "noisier", "--out", tmp_path / "best")
    assert [entry["landmarks"].rsplit("/", 1)[-1] for entry in doc["ranking"]] == ["clean", "noisy", "noisier"]
    assert np.abs(faceio.load_params(tmp_path / "best").stacked()).max() < 1e-10
