#!/usr/bin/env python3
"""
Tests for the command-line interface
"""
import csv
import io
import json
import math
import os
import sys
import tempfile
import unittest

from click.testing import CliRunner

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cli import _round, cli, dispatch, sweep_reports, to_csv, to_json
from errors import InvalidInputError, NotApplicableError, NumericalError

EXIT_INVALID_INPUT = InvalidInputError.exit_code
EXIT_NOT_APPLICABLE = NotApplicableError.exit_code
EXIT_NUMERICAL = NumericalError.exit_code


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.runner = CliRunner()

    def invoke(self, *args):
        return self.runner.invoke(cli, list(args))

    def invoke_json(self, *args):
        result = self.invoke(*args)
        self.assertEqual(result.exit_code, 0, msg=result.output)
        return json.loads(result.stdout)


class TestFormatting(unittest.TestCase):
    """Rounding and serialisation helpers"""

    def test_round(self):
        """Test 12 significant digits and string non-finite values"""
        self.assertEqual(_round(math.pi), 3.14159265359)
        self.assertEqual(_round(math.inf), "inf")
        self.assertEqual(_round({"a": [1.0 / 3.0, None, True]}), {"a": [0.333333333333, None, True]})

    def test_json_key_order(self):
        """Test that keys keep insertion order"""
        text = to_json({"b": 1, "a": 2})
        self.assertLess(text.index('"b"'), text.index('"a"'))

    def test_csv_flattening(self):
        """Test that nested dictionaries become dotted columns"""
        text = to_csv([{"x": 1.0, "inner": {"y": 2.0}, "pair": [1, 2]}])
        rows = list(csv.DictReader(io.StringIO(text)))
        self.assertEqual(rows[0]["inner.y"], "2.0")
        self.assertEqual(rows[0]["pair"], "1;2")


class TestBoundsCommand(CliTestCase):
    """bounds and roots"""

    def test_bounds_json(self):
        """Test the bounds report for M = 16pi, alpha = 1"""
        data = self.invoke_json("bounds", "--mass", "50.26548245743669", "--alpha", "1", "--variance", "0.1")
        self.assertTrue(data["applicable"]["t_alpha"])
        self.assertTrue(data["applicable"]["L"])
        self.assertLessEqual(data["t_alpha"], data["t_series"])
        self.assertLessEqual(data["t_series"], data["L"])
        self.assertEqual(data["alpha"], 1.0)

    def test_bounds_csv(self):
        """Test the single-row CSV form"""
        result = self.invoke("--format", "csv", "bounds", "--mass", "50.26548245743669", "--alpha", "1",
                             "--variance", "0.1")
        self.assertEqual(result.exit_code, 0, msg=result.output)
        rows = list(csv.DictReader(io.StringIO(result.stdout)))
        self.assertEqual(len(rows), 1)
        self.assertIn("t_alpha", rows[0])
        self.assertIn("applicable.t_alpha", rows[0])

    def test_repeatable_output(self):
        """Test that identical inputs give byte-identical output"""
        args = ("bounds", "--mass", "75.39822368615503", "--alpha", "0.5", "--variance", "0.2")
        first = self.invoke(*args)
        second = self.invoke(*args)
        self.assertEqual(first.stdout, second.stdout)

    def test_subcritical_bounds(self):
        """Test that M <= 8pi exits with the not-applicable code"""
        result = self.invoke("bounds", "--mass", "25", "--alpha", "1", "--variance", "0.1")
        self.assertEqual(result.exit_code, EXIT_NOT_APPLICABLE)

    def test_roots(self):
        """Test the roots at M = 16pi"""
        data = self.invoke_json("roots", "--mass", "50.2655")
        self.assertAlmostEqual(data["y1"], 0.461, delta=5e-3)
        self.assertAlmostEqual(data["y2"], 0.315, delta=5e-3)
        self.assertAlmostEqual(data["b1"], 0.288, delta=1e-3)
        self.assertAlmostEqual(data["b2"], 0.316, delta=1e-3)
        self.assertAlmostEqual(data["y0"], 1.594, delta=2e-3)

    def test_out_file(self):
        """Test writing the report to --out"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "roots.json")
            result = self.invoke("--out", path, "roots", "--mass", "75.4")
            self.assertEqual(result.exit_code, 0, msg=result.output)
            self.assertEqual(result.stdout, "")
            with open(path, encoding="utf-8") as fh:
                self.assertIn("y1", json.load(fh))

    def test_command_level_format(self):
        """Test --format after the command name, overriding the group flag"""
        for args in (("roots", "--mass", "60", "--format", "csv"),
                     ("--format", "json", "roots", "--mass", "60", "--format", "csv")):
            result = self.invoke(*args)
            self.assertEqual(result.exit_code, 0, msg=result.output)
            rows = list(csv.DictReader(io.StringIO(result.stdout)))
            self.assertEqual(len(rows), 1)
            self.assertIn("y1", rows[0])

    def test_command_level_out(self):
        """Test --out after the command name"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "roots.csv")
            result = self.invoke("roots", "--mass", "75.4", "--format", "csv", "--out", path)
            self.assertEqual(result.exit_code, 0, msg=result.output)
            self.assertEqual(result.stdout, "")
            with open(path, encoding="utf-8") as fh:
                self.assertIn("y1", fh.readline())


class TestCriteriaCommand(CliTestCase):
    """criteria"""

    def test_subcritical_mass(self):
        """Test that criteria --mass 25 exits with code 3"""
        result = self.invoke("criteria", "--mass", "25")
        self.assertEqual(result.exit_code, EXIT_NOT_APPLICABLE)
        self.assertEqual(result.stdout, "")

    def test_thresholds(self):
        """Test gamma values at M = 16pi"""
        data = self.invoke_json("criteria", "--mass", "50.26548245743669", "--variance", "0.1")
        self.assertAlmostEqual(data["gamma_cc"], 1.0 / 16.0, places=10)
        self.assertTrue(data["satisfied"]["gamma_star"])

    def test_density_document(self):
        """Test taking the moments from a density file"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "ball.yaml")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("analytic:\n  - type: ball\n    radius: 1.0\n    amplitude: 16.0\n")
            data = self.invoke_json("criteria", "--density", path)
            self.assertAlmostEqual(data["M"], 16.0 * math.pi, places=9)
            self.assertAlmostEqual(data["variance"], 0.5, places=12)

    def test_missing_mass(self):
        """Test that neither --mass nor --density is an input error"""
        result = self.invoke("criteria")
        self.assertEqual(result.exit_code, EXIT_INVALID_INPUT)

    def test_unknown_flag(self):
        """Test that an unknown option is a usage error"""
        result = self.invoke("criteria", "--bogus", "1")
        self.assertEqual(result.exit_code, 2)


class TestOdeCommand(CliTestCase):
    """ode"""

    def test_linear_csv(self):
        """Test the envelope table for f = lambda - 1 as CSV"""
        result = self.invoke("--format", "csv", "ode", "--rate", "linear", "--slope", "1", "--intercept", "-1",
                             "--v0", "0.5", "--points", "5")
        self.assertEqual(result.exit_code, 0, msg=result.output)
        rows = list(csv.DictReader(io.StringIO(result.stdout)))
        self.assertEqual(len(rows), 5)
        self.assertEqual(list(rows[0]), ["t", "envelope", "envelope_weak", "derivative_bound_weak"])
        self.assertAlmostEqual(float(rows[0]["envelope"]), 0.5)

    def test_linear_json(self):
        """Test Theta(0) = ln 2"""
        data = self.invoke_json("ode", "--rate", "linear", "--slope", "1", "--intercept", "-1", "--v0", "0.5")
        self.assertAlmostEqual(data["T_sharp"], math.log(2.0), places=10)
        self.assertAlmostEqual(data["T_simple"], 1.0, places=12)
        self.assertEqual(len(data["envelope"]), 21)

    def test_constant_rate(self):
        """Test Theta(0) = V0 / c for a constant rate"""
        data = self.invoke_json("ode", "--rate", "constant", "--intercept", "-2", "--v0", "1")
        self.assertAlmostEqual(data["T_sharp"], 0.5, places=10)

    def test_hypothesis_violation(self):
        """Test that V0 >= lambda* exits with code 3"""
        result = self.invoke("ode", "--rate", "linear", "--slope", "1", "--intercept", "-1", "--v0", "2")
        self.assertEqual(result.exit_code, EXIT_NOT_APPLICABLE)

    def test_pks_needs_mass(self):
        """Test that --rate pks requires --mass and --alpha"""
        result = self.invoke("ode", "--v0", "0.1")
        self.assertEqual(result.exit_code, EXIT_INVALID_INPUT)


class TestSweepAndChecks(CliTestCase):
    """sweep and check-paper-values"""

    def test_sweep_order(self):
        """Test that sweep rows follow the parameter product order"""
        reports = sweep_reports([16.0 * math.pi, 24.0 * math.pi], [1.0], [0.05, 0.1])
        self.assertEqual([(r["M"], r["V2"]) for r in reports],
                         [(16.0 * math.pi, 0.05), (16.0 * math.pi, 0.1),
                          (24.0 * math.pi, 0.05), (24.0 * math.pi, 0.1)])

    def test_sweep_records_errors(self):
        """Test that a failing point is reported in place"""
        reports = sweep_reports([25.0, 16.0 * math.pi], [1.0], [0.1])
        self.assertEqual(reports[0]["error"], "SubcriticalMassError")
        self.assertNotIn("error", reports[1])

    def test_sweep_csv(self):
        """Test the sweep CSV columns"""
        result = self.invoke("--format", "csv", "sweep", "--mass", "50.27,75.4", "--alpha", "1",
                             "--variance", "0.05")
        self.assertEqual(result.exit_code, 0, msg=result.output)
        rows = list(csv.DictReader(io.StringIO(result.stdout)))
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows[0]["M"], "50.27")

    def test_sweep_bad_list(self):
        """Test that a malformed list is an input error"""
        result = self.invoke("sweep", "--mass", "a,b", "--alpha", "1", "--variance", "0.1")
        self.assertEqual(result.exit_code, EXIT_INVALID_INPUT)

    def test_check_paper_values(self):
        """Test that every published root is reproduced"""
        data = self.invoke_json("check-paper-values")
        self.assertTrue(data["passed"])
        self.assertEqual(len(data["rows"]), 9)

    def test_check_published_values_alias(self):
        """Test that the older command name still runs the same check"""
        self.assertEqual(self.invoke("check-published-values").stdout, self.invoke("check-paper-values").stdout)

    def test_specialfn_eval(self):
        """Test evaluation and inversion of g_1"""
        data = self.invoke_json("specialfn-eval", "--r", "1", "--rho", "0.5")
        self.assertIn("evaluation", data)
        self.assertIn("inverse", data)

    def test_specialfn_subnormal_rho(self):
        """Test that an inverse past the radius guard exits with the numerical code"""
        result = self.invoke("specialfn-eval", "--rho", "1e-310")
        self.assertEqual(result.exit_code, EXIT_NUMERICAL, msg=result.output)
        self.assertEqual(result.stdout, "")


class TestSimulateCommand(CliTestCase):
    """simulate"""

    def test_subcritical_simulation(self):
        """Test a short run with the envelope check skipped below critical mass"""
        with tempfile.TemporaryDirectory() as tmp:
            config = os.path.join(tmp, "sim.yaml")
            density = os.path.join(tmp, "n0.json")
            with open(config, "w", encoding="utf-8") as fh:
                fh.write("grid: {L: 4.0, nx: 32, ny: 32}\nalpha: 1.0\ndt0: 0.001\nt_end: 0.01\n"
                         "sample_interval: 0.005\n")
            with open(density, "w", encoding="utf-8") as fh:
                json.dump({"analytic": [{"type": "gaussian", "std": 0.5, "mass": 6.0}]}, fh)
            data = self.invoke_json("simulate", "--config", config, "--density", density)
        self.assertEqual(data["summary"]["terminated_by"], "t_end")
        self.assertIn("skipped", data["envelope_check"])
        self.assertEqual(list(data["trace"][0]), ["t", "mass", "I", "V", "Vprime_fd", "max_density"])


class TestDispatch(unittest.TestCase):
    """Exit codes returned without leaving the interpreter"""

    def test_success(self):
        """Test a zero exit code"""
        self.assertEqual(dispatch(["--out", os.devnull, "roots", "--mass", "60"]), 0)

    def test_usage_error(self):
        """Test that an unknown flag maps to 2"""
        self.assertEqual(dispatch(["roots", "--bogus"]), 2)

    def test_library_error(self):
        """Test that library errors map to their exit code"""
        self.assertEqual(dispatch(["roots", "--mass", "10"]), EXIT_NOT_APPLICABLE)


if __name__ == '__main__':
    unittest.main(verbosity=2)
