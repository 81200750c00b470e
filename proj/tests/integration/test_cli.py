"""End-to-end checks of the obsv binary: exit codes, bundle files, schemas, reproducibility."""

import csv
import json
import os
import pathlib
import subprocess
import tempfile
import unittest

import jsonschema
from referencing import Registry, Resource

OBSV = pathlib.Path(os.environ["OBSV_BIN"])
ROOT = pathlib.Path(os.environ["OBSV_ROOT"])
CONFIGS = ROOT / "configs"


def load_schemas():
    schemas = {}
    for path in (ROOT / "docs").glob("*.schema.json"):
        schemas[path.name] = json.loads(path.read_text())
    registry = Registry().with_resources(
        (name, Resource.from_contents(s)) for name, s in schemas.items())
    return schemas, registry


SCHEMAS, REGISTRY = load_schemas()


def validate(doc, schema_name):
    jsonschema.Draft202012Validator(SCHEMAS[schema_name], registry=REGISTRY).validate(doc)


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run([str(OBSV), *map(str, args)], capture_output=True, text=True,
                          env=full_env, timeout=600)


def read_bundle(directory):
    return {p.name: p.read_bytes() for p in sorted(pathlib.Path(directory).iterdir())}


def deterministic(bundle):
    return {k: v for k, v in bundle.items() if k != "timing.json"}


class CliTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = pathlib.Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, name, doc):
        path = self.tmp / name
        path.write_text(json.dumps(doc) if name.endswith(".json") else doc)
        return path

    def test_version(self):
        r = run("--version")
        self.assertEqual(r.returncode, 0)
        self.assertTrue(r.stdout.strip())

    def test_select_bundle_files_and_schemas(self):
        out = self.tmp / "select"
        r = run("select", "--config", CONFIGS / "four_cstr_select.toml", "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(sorted(p.name for p in out.iterdir()),
                         ["candidate_degrees.csv", "metadata.json", "selection_summary.csv",
                          "selection_trace.json", "singular_values.csv", "timing.json"])
        trace = json.loads((out / "selection_trace.json").read_text())
        validate(trace, "selection_trace.schema.json")
        validate(json.loads((out / "metadata.json").read_text()), "metadata.schema.json")
        validate(json.loads((out / "timing.json").read_text()), "timing.schema.json")
        self.assertEqual(trace["selected"]["set"], [4, 8])
        rows = list(csv.DictReader((out / "selection_summary.csv").open()))
        self.assertEqual([int(r["m"]) for r in rows], [8, 7, 6, 5, 4, 3, 2, 1])

    def test_every_shipped_config_runs(self):
        cases = [("select", "four_cstr_select.toml"), ("select", "four_cstr_exhaustive.json"),
                 ("select", "linear_select.json"), ("select", "manifest_select.json"),
                 ("estimate", "four_cstr_estimate.toml"), ("bench", "synthetic_bench.toml")]
        for command, name in cases:
            with self.subTest(config=name):
                out = self.tmp / name
                r = run(command, "--config", CONFIGS / name, "--out", out)
                self.assertEqual(r.returncode, 0, r.stderr)
                meta = json.loads((out / "metadata.json").read_text())
                validate(meta, "metadata.schema.json")
                self.assertEqual(meta["command"], command)
                validate(json.loads((out / "timing.json").read_text()), "timing.schema.json")
                if command == "select":
                    validate(json.loads((out / "selection_trace.json").read_text()),
                             "selection_trace.schema.json")

    def test_shipped_json_configs_match_schema(self):
        for path in sorted(CONFIGS.glob("*.json")):
            with self.subTest(config=path.name):
                validate(json.loads(path.read_text()), "config.schema.json")

    def test_reruns_are_byte_identical(self):
        for command, name in [("select", "four_cstr_exhaustive.json"),
                              ("estimate", "four_cstr_estimate.toml"),
                              ("bench", "synthetic_bench.toml")]:
            with self.subTest(config=name):
                bundles = []
                for tag, threads in [("a", 1), ("b", 1), ("c", 8)]:
                    out = self.tmp / f"{name}-{tag}"
                    r = run(command, "--config", CONFIGS / name, "--out", out,
                            "--threads", threads)
                    self.assertEqual(r.returncode, 0, r.stderr)
                    bundles.append(deterministic(read_bundle(out)))
                self.assertEqual(bundles[0], bundles[1])
                self.assertEqual(bundles[0], bundles[2])

    def test_config_echo_reproduces_the_run(self):
        first = self.tmp / "first"
        self.assertEqual(run("select", "--config", CONFIGS / "linear_select.json",
                             "--out", first).returncode, 0)
        echo = json.loads((first / "metadata.json").read_text())["config"]
        validate(echo, "config.schema.json")
        path = self.write_config("echo.json", echo)
        second = self.tmp / "second"
        r = run("select", "--config", path, "--out", second)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(deterministic(read_bundle(first)), deterministic(read_bundle(second)))

    def test_seed_flag_changes_estimation(self):
        outs = []
        for seed in (5, 6):
            out = self.tmp / f"seed{seed}"
            self.assertEqual(run("estimate", "--config", CONFIGS / "four_cstr_estimate.toml",
                                 "--out", out, "--seed", seed).returncode, 0)
            outs.append((out / "estimation_comparison.csv").read_bytes())
        self.assertNotEqual(outs[0], outs[1])

    def test_estimate_table(self):
        out = self.tmp / "estimate"
        self.assertEqual(run("estimate", "--config", CONFIGS / "four_cstr_estimate.toml",
                             "--out", out).returncode, 0)
        rows = list(csv.DictReader((out / "estimation_comparison.csv").open()))
        self.assertEqual(len(rows), 16)
        self.assertEqual([int(r["rank"]) for r in rows], list(range(1, 17)))
        for r in rows:
            self.assertEqual(int(r["completed"]) + int(r["failed"]), 10)

    def test_malformed_configs_exit_2_without_output(self):
        cases = {
            "unknown.json": {"model": {"kind": "four-cstr"}, "colour": "blue"},
            "type.json": {"horizon": "ten"},
            "range.json": {"rank_tolerance": -1},
            "syntax.toml": "strategy = = \"backward\"\n",
            "kind.json": {"model": {"kind": "wwtp"}},
        }
        for name, doc in cases.items():
            with self.subTest(config=name):
                out = self.tmp / ("out-" + name)
                r = run("select", "--config", self.write_config(name, doc), "--out", out)
                self.assertEqual(r.returncode, 2, r.stderr)
                self.assertIn("config stage failed", r.stderr)
                self.assertFalse(out.exists())

    def test_missing_config_and_bad_flags(self):
        self.assertEqual(run("select", "--config", self.tmp / "nope.json").returncode, 2)
        self.assertEqual(run("select").returncode, 2)
        self.assertEqual(run("select", "--config", CONFIGS / "linear_select.json",
                             "--threads", 0).returncode, 2)
        self.assertEqual(run("frobnicate").returncode, 2)

    def test_unobservable_catalog_exits_3(self):
        doc = {"model": {"kind": "linear-benchmark", "n_states": 4, "n_sensors": 1, "seed": 1},
               "horizon": 1}
        out = self.tmp / "unobservable"
        r = run("select", "--config", self.write_config("u.json", doc), "--out", out)
        self.assertEqual(r.returncode, 3, r.stderr)
        self.assertIn("stage failed", r.stderr)
        self.assertFalse(out.exists())

    def test_exhaustive_cap_is_a_config_error(self):
        doc = {"model": {"kind": "synthetic", "n_states": 10, "n_sensors": 20, "seed": 2},
               "strategy": "exhaustive", "exhaustive_cap": 16}
        out = self.tmp / "cap"
        r = run("select", "--config", self.write_config("cap.json", doc), "--out", out)
        self.assertEqual(r.returncode, 2, r.stderr)
        self.assertFalse(out.exists())

    def test_log_level_from_environment(self):
        out = self.tmp / "quiet"
        r = run("estimate", "--config", CONFIGS / "four_cstr_estimate.toml", "--out", out,
                env={"OBSV_LOG": "off"})
        self.assertEqual(r.returncode, 0)
        self.assertEqual(r.stderr, "")
        r = run("estimate", "--config", CONFIGS / "four_cstr_estimate.toml", "--out", out)
        self.assertIn("had failed runs", r.stderr)


if __name__ == "__main__":
    unittest.main()
