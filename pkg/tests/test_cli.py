"""Command-line interface tests (exercised through main(argv))."""

import numpy as np
import pytest

from cryoguide.cli import main
from cryoguide.forward import grid_for_model, simulate_map
from cryoguide.priors import chain_template, hinged_chain_modes
from cryoguide.structure import read_pdb, write_pdb
from cryoguide.volume import read_mrc


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared fixtures: a 30-bead chain PDB and its simulated 2 A map."""
    root = tmp_path_factory.mktemp("cli")
    model = chain_template(hinged_chain_modes()[0])
    pdb = root / "chain.pdb"
    write_pdb(model, pdb)
    assert main(["simulate-map", str(pdb), "-o", str(root / "chain.mrc"),
                 "--resolution", "2.0", "--voxel", "1.0", "--pad", "4.0"]) == 0
    return root


def base_config(workdir, outdir, extra=""):
    path = outdir / "run.cfg"
    path.write_text(
        f"map = {workdir / 'chain.mrc'}\n"
        f"outdir = {outdir / 'out'}\n"
        "n_steps = 40\n"
        "schedule_kind = custom\n"
        "t_warm = 25\n"
        "t_global = 5\n"
        "t_local = 5\n"
        "t_relax = 5\n"
        "n_samples = 2\n"
        "n_replicates = 2\n"
        "k_points = 7\n"
        "seed = 11\n"
        + extra)
    return path


class TestSimulateMap:
    def test_matches_library_call(self, workdir):
        model = read_pdb(workdir / "chain.pdb")
        grid = grid_for_model(model, 1.0, 4.0)
        want = simulate_map(model, grid, 2.0)
        got = read_mrc(workdir / "chain.mrc")
        assert got.data.shape == want.data.shape
        np.testing.assert_allclose(got.data, want.data, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(got.origin, want.origin, atol=1e-5)

    def test_nonpositive_resolution_rejected_by_parser(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate-map", str(workdir / "chain.pdb"), "-o", "x.mrc",
                  "--resolution", "0"])
        assert exc.value.code == 2
        assert "must be positive" in capsys.readouterr().err

    def test_missing_model_fails(self, workdir, tmp_path, capsys):
        rc = main(["simulate-map", str(tmp_path / "none.pdb"),
                   "-o", str(tmp_path / "x.mrc"), "--resolution", "2"])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error:")


class TestPointcloud:
    def test_explicit_k(self, workdir, tmp_path):
        out = tmp_path / "cloud.tsv"
        assert main(["pointcloud", str(workdir / "chain.mrc"),
                     "-o", str(out), "-k", "7"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "x\ty\tz\tweight"
        assert len(lines) == 8
        weights = [float(l.split("\t")[3]) for l in lines[1:]]
        assert sum(weights) == pytest.approx(1.0, abs=1e-4)

    def test_k_from_model(self, workdir, tmp_path):
        out = tmp_path / "cloud.tsv"
        assert main(["pointcloud", str(workdir / "chain.mrc"), "-o", str(out),
                     "--model", str(workdir / "chain.pdb")]) == 0
        # 30 atoms, 1 A voxels -> floor(30/4) = 7 centers
        assert len(out.read_text().splitlines()) == 8

    def test_requires_some_sizing(self, workdir, tmp_path, capsys):
        rc = main(["pointcloud", str(workdir / "chain.mrc"),
                   "-o", str(tmp_path / "c.tsv")])
        assert rc == 1
        assert "supply -k or --model" in capsys.readouterr().err


class TestScore:
    def test_identity_keyval(self, workdir, capsys):
        pdb = str(workdir / "chain.pdb")
        assert main(["score", pdb, pdb, "--keyval"]) == 0
        kv = dict(line.split("=") for line in
                  capsys.readouterr().out.strip().splitlines())
        assert float(kv["rmsd_all"]) == 0.0
        assert float(kv["tm_score"]) == 1.0
        assert kv["n_paired"] == "30"  # one CA bead per residue

    def test_with_map_and_local(self, workdir, capsys):
        pdb = str(workdir / "chain.pdb")
        assert main(["score", pdb, pdb, "--map", str(workdir / "chain.mrc"),
                     "--resolution", "2.0", "--local", "A:1:15",
                     "--keyval"]) == 0
        kv = dict(line.split("=") for line in
                  capsys.readouterr().out.strip().splitlines())
        assert float(kv["rscc"]) == pytest.approx(1.0, abs=1e-4)
        assert float(kv["rmsd_local"]) == 0.0

    def test_bad_local_spec(self, workdir, capsys):
        pdb = str(workdir / "chain.pdb")
        assert main(["score", pdb, pdb, "--local", "A:9"]) == 1
        assert "CHAIN:LO:HI" in capsys.readouterr().err


class TestAlign:
    def test_superposes_and_writes(self, workdir, tmp_path, capsys):
        model = read_pdb(workdir / "chain.pdb")
        from cryoguide.alignment import rotation_about
        r = rotation_about(np.array([0.0, 1.0, 0.2]), 40.0)
        moved = model.with_coords(model.coords() @ r.T + [8.0, -3.0, 5.0])
        mob = tmp_path / "moved.pdb"
        write_pdb(moved, mob)
        out = tmp_path / "aligned.pdb"
        assert main(["align", str(mob), str(workdir / "chain.pdb"),
                     "-o", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "rmsd:" in printed
        aligned = read_pdb(out)
        np.testing.assert_allclose(aligned.coords(), model.coords(), atol=2e-3)

    def test_count_mismatch(self, workdir, tmp_path, capsys):
        model = read_pdb(workdir / "chain.pdb")
        short = model.__class__(model.atoms[:10])
        sp = tmp_path / "short.pdb"
        write_pdb(short, sp)
        assert main(["align", str(sp), str(workdir / "chain.pdb")]) == 1
        assert "atom counts differ" in capsys.readouterr().err


class TestPrep:
    def test_threshold_dust_crop(self, workdir, tmp_path):
        out = tmp_path / "prep.mrc"
        assert main(["prep", str(workdir / "chain.mrc"), "-o", str(out),
                     "--level", "0.5", "--min-size", "2", "--crop",
                     "--pad", "2"]) == 0
        raw = read_mrc(workdir / "chain.mrc")
        prepped = read_mrc(out)
        assert prepped.data.size <= raw.data.size
        assert prepped.data.max() == pytest.approx(raw.data.max(), rel=1e-6)
        nz = prepped.data[prepped.data != 0]
        assert np.all(nz >= 0.5)

    def test_mask_model(self, workdir, tmp_path):
        out = tmp_path / "masked.mrc"
        assert main(["prep", str(workdir / "chain.mrc"), "-o", str(out),
                     "--mask-model", str(workdir / "chain.pdb"),
                     "--mask-radius", "3.0"]) == 0
        assert read_mrc(out).data.shape == read_mrc(workdir / "chain.mrc").data.shape


class TestGuide:
    def test_run_layout_and_manifest(self, workdir, tmp_path):
        cfg = base_config(workdir, tmp_path)
        assert main(["guide", "--config", str(cfg)]) == 0
        outdir = tmp_path / "out"
        for rep in (0, 1):
            for j in (0, 1):
                assert (outdir / f"rep{rep}" / f"sample{j}.pdb").exists()
        manifest = (outdir / "manifest.tsv").read_text().splitlines()
        assert manifest[0] == "replicate\tsample\tseed\tstatus\trscc\trmsd"
        assert len(manifest) == 5
        row = manifest[1].split("\t")
        assert row[:4] == ["0", "0", "11:0:0", "ok"]
        assert 0.0 < float(row[4]) <= 1.0
        assert row[5] == ""  # no reference supplied
        summary = (outdir / "summary.tsv").read_text().splitlines()
        assert summary[0].startswith("replicate\tn_ok")
        assert len(summary) == 3

    def test_manifest_reproducible_across_runs(self, workdir, tmp_path):
        cfg_a = base_config(workdir, tmp_path)
        a = tmp_path / "out"
        assert main(["guide", "--config", str(cfg_a)]) == 0
        b_dir = tmp_path / "second"
        b_dir.mkdir()
        assert main(["guide", "--config", str(cfg_a),
                     "--set", f"outdir={b_dir / 'out'}"]) == 0
        m_a = (a / "manifest.tsv").read_bytes()
        m_b = (b_dir / "out" / "manifest.tsv").read_bytes()
        assert m_a == m_b
        pdb_a = (a / "rep0" / "sample1.pdb").read_bytes()
        pdb_b = (b_dir / "out" / "rep0" / "sample1.pdb").read_bytes()
        assert pdb_a == pdb_b

    def test_parallel_matches_serial(self, workdir, tmp_path, monkeypatch):
        cfg = base_config(workdir, tmp_path)
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert main(["guide", "--config", str(cfg),
                     "--set", f"outdir={serial}"]) == 0
        monkeypatch.setenv("CRYOGUIDE_WORKERS", "2")
        assert main(["guide", "--config", str(cfg),
                     "--set", f"outdir={parallel}"]) == 0
        assert (serial / "manifest.tsv").read_bytes() == \
            (parallel / "manifest.tsv").read_bytes()
        assert (serial / "rep1" / "sample0.pdb").read_bytes() == \
            (parallel / "rep1" / "sample0.pdb").read_bytes()

    def test_zero_guidance_equals_unguided_baseline(self, workdir, tmp_path):
        zeros = ("lambda_global_start = 0\nlambda_global_end = 0\n"
                 "lambda_local = 0\nn_samples = 1\nn_replicates = 1\n")
        cfg = base_config(workdir, tmp_path, extra=zeros)
        guided_dir = tmp_path / "g"
        plain_dir = tmp_path / "u"
        assert main(["guide", "--config", str(cfg),
                     "--set", f"outdir={guided_dir}"]) == 0
        assert main(["sample", "--config", str(cfg),
                     "--set", f"outdir={plain_dir}"]) == 0
        assert (guided_dir / "rep0" / "sample0.pdb").read_bytes() == \
            (plain_dir / "rep0" / "sample0.pdb").read_bytes()

    def test_missing_map_fails(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("map = /nonexistent/m.mrc\n")
        assert main(["guide", "--config", str(cfg)]) == 1
        assert "not found" in capsys.readouterr().err

    def test_unknown_config_key(self, workdir, tmp_path, capsys):
        cfg = base_config(workdir, tmp_path)
        assert main(["guide", "--config", str(cfg),
                     "--set", "warp_speed=9"]) == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_bad_stage_sum(self, workdir, tmp_path, capsys):
        cfg = base_config(workdir, tmp_path)
        assert main(["guide", "--config", str(cfg),
                     "--set", "t_warm=99"]) == 1
        assert "stages sum" in capsys.readouterr().err


class TestSampleCommand:
    def test_runs_without_map(self, workdir, tmp_path):
        cfg = tmp_path / "u.cfg"
        cfg.write_text(f"outdir = {tmp_path / 'out'}\n"
                       "n_steps = 40\nn_samples = 2\nn_replicates = 1\n")
        assert main(["sample", "--config", str(cfg)]) == 0
        manifest = (tmp_path / "out" / "manifest.tsv").read_text().splitlines()
        assert len(manifest) == 3
        assert manifest[1].split("\t")[4] == ""  # no map -> no rscc


class TestVersion:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip()
