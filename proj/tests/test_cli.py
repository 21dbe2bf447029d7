# tests/test_cli.py

# Copyright 2026  The embalign Authors

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#  http://www.apache.org/licenses/LICENSE-2.0
#
# THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
# KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
# WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
# MERCHANTABLITY OR NON-INFRINGEMENT.
# See the Apache 2 License for the specific language governing permissions and
# limitations under the License.

"""End-to-end checks of the embalign command line tool.

Usage: test_cli.py <path-to-embalign> [unittest args]
"""

import json
import math
import pathlib
import subprocess
import sys
import tempfile
import unittest

import jsonschema

HERE = pathlib.Path(__file__).resolve().parent
SCHEMA = HERE.parent / "docs" / "attack_report.schema.json"
GOLDEN = HERE / "golden" / "identity_eval_seed7.json"
BINARY = None


def run(*args, cwd):
    return subprocess.run([BINARY, *map(str, args)], cwd=cwd, capture_output=True, text=True)


def load(path):
    with open(path) as f:
        return json.load(f)


class CliTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.dir = pathlib.Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def ok(self, *args):
        p = run(*args, cwd=self.dir)
        self.assertEqual(p.returncode, 0, msg=p.stderr)
        return p

    def synth(self, out, *extra, seed=7):
        self.ok("--seed", seed, "--out-dir", out, "synth", "--users", 50, "--dim", 32, *extra)
        return self.dir / out

    def test_synth_writes_all_files(self):
        w = self.synth("w")
        for name in ["e_attack.csv", "e_target.csv", "hidden_rotation.json", "pairing.csv",
                     "world.json"]:
            self.assertTrue((w / name).is_file(), name)
        world = load(w / "world.json")
        self.assertEqual(world["config"]["users"], 50)
        self.assertEqual(world["records"], 1000)
        rot = load(w / "hidden_rotation.json")
        self.assertEqual(rot["dim"], 32)
        self.assertAlmostEqual(rot["det"], 1.0, places=9)

    def test_synth_is_byte_identical_on_rerun(self):
        a = self.synth("a")
        b = self.synth("b")
        for f in sorted(a.iterdir()):
            if f.name == "world.json":
                wa, wb = load(f), load(b / f.name)
                wa.pop("files", None)
                wb.pop("files", None)
                self.assertEqual(wa, wb)
            else:
                self.assertEqual(f.read_bytes(), (b / f.name).read_bytes(), f.name)

    def test_synth_seed_changes_output(self):
        a = self.synth("a", seed=7)
        b = self.synth("b", seed=8)
        self.assertNotEqual((a / "e_target.csv").read_bytes(), (b / "e_target.csv").read_bytes())

    def test_binary_format_round_trips_through_align(self):
        self.ok("--seed", 7, "--format", "bin", "--out-dir", "w", "synth", "--users", 20,
                "--dim", 16)
        self.assertTrue((self.dir / "w" / "e_target.bin").is_file())
        self.ok("--out-dir", "w", "align", "--method", "procrustes-cluster",
                "--source", "w/e_attack.bin", "--target", "w/e_target.bin")

    def test_single_user_is_rejected(self):
        p = run("--out-dir", "w", "synth", "--users", 1, cwd=self.dir)
        self.assertEqual(p.returncode, 2)
        self.assertIn("users", p.stderr)

    def test_missing_file_is_io_error(self):
        p = run("align", "--method", "identity", "--source", "nope.csv", "--target", "nope.csv",
                cwd=self.dir)
        self.assertEqual(p.returncode, 1)
        self.assertIn("nope.csv", p.stderr)

    def test_malformed_csv_is_validation_error(self):
        (self.dir / "bad.csv").write_text("user_id,class_label,v0,v1\nu0,0,1.0\n")
        p = run("align", "--method", "identity", "--source", "bad.csv", "--target", "bad.csv",
                cwd=self.dir)
        self.assertEqual(p.returncode, 2)

    def test_identity_alignment_is_identity(self):
        self.synth("w")
        self.ok("--out-dir", "w", "align", "--method", "identity",
                "--source", "w/e_attack.csv", "--target", "w/e_target.csv")
        a = load(self.dir / "w" / "alignment_identity.json")
        m = a["matrix"]
        self.assertEqual(len(m), 32)
        for i, row in enumerate(m):
            for j, x in enumerate(row):
                self.assertEqual(x, 1.0 if i == j else 0.0)
        self.assertEqual(a["det"], 1.0)

    def test_wasserstein_is_deterministic(self):
        self.synth("w")
        outs = []
        for name in ["w1.json", "w2.json"]:
            self.ok("--seed", 7, "align", "--method", "wasserstein", "--source", "w/e_attack.csv",
                    "--target", "w/e_target.csv", "--output", name, "--initial-batch", 64,
                    "--stages", 3)
            outs.append((self.dir / name).read_bytes())
        self.assertEqual(outs[0], outs[1])
        a = load(self.dir / "w1.json")
        self.assertAlmostEqual(abs(a["det"]), 1.0, places=6)
        self.assertLess(a["orthogonality_error"], 1e-6)

    def test_cluster_procrustes_needs_labels(self):
        self.synth("w", "--classes", 0)
        p = run("align", "--method", "procrustes-cluster", "--source", "w/e_attack.csv",
                "--target", "w/e_target.csv", cwd=self.dir)
        self.assertEqual(p.returncode, 2)
        self.assertIn("label", p.stderr)

    def test_oracle_needs_pairing(self):
        self.synth("w")
        p = run("align", "--method", "oracle", "--source", "w/e_attack.csv",
                "--target", "w/e_target.csv", cwd=self.dir)
        self.assertEqual(p.returncode, 2)

    def test_oracle_on_linear_world_spoofs_everything(self):
        self.synth("w", "--nonlinearity", 0, "--noise-scale", 0)
        self.ok("--out-dir", "w", "align", "--method", "oracle", "--source", "w/e_attack.csv",
                "--target", "w/e_target.csv", "--pairing", "w/pairing.csv")
        self.ok("--out-dir", "w", "eval", "--target", "w/e_target.csv",
                "--attack", "w/e_attack.csv", "--rotation", "w/alignment_oracle.json",
                "--pairing", "w/pairing.csv")
        r = load(self.dir / "w" / "report.json")
        self.assertTrue(r["oracle"])
        self.assertEqual(r["sfar"]["EER"], 1.0)
        self.assertAlmostEqual(r["mean_cosine"], 1.0, places=9)

    def test_identity_eval_matches_golden_and_schema(self):
        self.synth("w")
        self.ok("--out-dir", "w", "align", "--method", "identity",
                "--source", "w/e_attack.csv", "--target", "w/e_target.csv")
        p = self.ok("--table", "--out-dir", "w", "eval", "--target", "w/e_target.csv",
                    "--attack", "w/e_attack.csv", "--rotation", "w/alignment_identity.json")
        self.assertIn("sFAR_EER", p.stdout)
        r = load(self.dir / "w" / "report.json")
        jsonschema.validate(r, load(SCHEMA))
        self.assertIn("config", r)
        golden = load(GOLDEN)
        for key, want in golden.items():
            got = r[key]
            if isinstance(want, float):
                self.assertTrue(math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-12), key)
            elif isinstance(want, dict):
                self.assertEqual(set(got), set(want), key)
                for k, v in want.items():
                    self.assertTrue(math.isclose(got[k], v, rel_tol=1e-9, abs_tol=1e-12),
                                    f"{key}[{k}]")
            else:
                self.assertEqual(got, want, key)
        self.assertLess(r["sfar"]["EER"], 0.05)

    def test_schema_rejects_broken_report(self):
        bad = load(GOLDEN)
        bad["eer"] = 1.5
        with self.assertRaises(jsonschema.ValidationError):
            jsonschema.validate(bad, load(SCHEMA))

    def test_gmm_fit(self):
        self.synth("w")
        self.ok("--out-dir", "w", "gmm-fit", "--input", "w/e_target.csv")
        g = load(self.dir / "w" / "gmm.json")
        self.assertEqual(g["K"], 10)
        self.assertEqual(len(g["components"]), 10)
        self.assertAlmostEqual(sum(c["prior"] for c in g["components"]), 1.0, places=9)
        self.assertTrue(all(min(c["var"]) > 0 for c in g["components"]))

    def experiment(self, out, *extra):
        return run("--seed", 3, "--out-dir", out, "experiment", "--users", 40, "--dim", 16,
                   "--records-per-user", 10, *extra, cwd=self.dir)

    def test_experiment_rejects_empty_method_list(self):
        (self.dir / "spec.json").write_text(json.dumps({"methods": []}))
        p = self.experiment("e", "--spec", "spec.json")
        self.assertEqual(p.returncode, 2)
        self.assertIn("method", p.stderr)

    def test_experiment_rows_and_rerun(self):
        spec = {"methods": ["identity", "oracle"], "world": {"nonlinearity": 0.0}}
        (self.dir / "spec.json").write_text(json.dumps(spec))
        p = self.experiment("e1", "--spec", "spec.json")
        self.assertEqual(p.returncode, 0, msg=p.stderr)
        p = self.experiment("e2", "--spec", "spec.json")
        self.assertEqual(p.returncode, 0, msg=p.stderr)
        a = (self.dir / "e1" / "experiment.json").read_bytes()
        b = (self.dir / "e2" / "experiment.json").read_bytes()
        self.assertEqual(a, b)
        rows = load(self.dir / "e1" / "experiment.json")["results"]
        self.assertEqual([r["report"]["method"] for r in rows], ["identity", "oracle"])
        table = (self.dir / "e1" / "experiment_table.txt").read_text()
        self.assertIn("oracle", table)

    def test_experiment_flag_overrides_spec(self):
        (self.dir / "spec.json").write_text(json.dumps({"methods": ["identity", "oracle"]}))
        p = self.experiment("e", "--spec", "spec.json", "--methods", "identity")
        self.assertEqual(p.returncode, 0, msg=p.stderr)
        rows = load(self.dir / "e" / "experiment.json")["results"]
        self.assertEqual([r["report"]["method"] for r in rows], ["identity"])


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit("usage: test_cli.py <embalign> [unittest args]")
    BINARY = str(pathlib.Path(sys.argv.pop(1)).resolve())
    unittest.main()
