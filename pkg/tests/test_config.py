#!/usr/bin/env python3
"""
Tests for configuration models and document loaders
"""
import json
import os
import sys
import tempfile
import unittest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import (
    DEFAULT_TOLERANCES,
    GridSpec,
    SimConfig,
    Tolerances,
    load_density_document,
    load_sim_config,
    parse_density_document,
    parse_sim_config,
)
from errors import InvalidInputError


class TestTolerances(unittest.TestCase):
    """Shared numerical tolerances"""

    def test_defaults(self):
        """Test the default tolerance values"""
        self.assertEqual(DEFAULT_TOLERANCES.quad_rel_tol, 1e-12)
        self.assertEqual(DEFAULT_TOLERANCES.validity_threshold, 1e-2)
        self.assertEqual(DEFAULT_TOLERANCES.near_boundary_rel, 1e-10)

    def test_frozen(self):
        """Test that tolerances cannot be mutated"""
        with self.assertRaises(Exception):
            DEFAULT_TOLERANCES.quad_rel_tol = 1e-3

    def test_rejects_unknown_fields(self):
        """Test that unknown tolerance names are rejected"""
        with self.assertRaises(Exception):
            Tolerances(quad_tol=1e-3)


class TestSimConfig(unittest.TestCase):
    """Simulator settings"""

    def setUp(self):
        self.data = {"grid": {"L": 5.0, "nx": 64, "ny": 64}, "alpha": 1.0, "dt0": 1e-3, "t_end": 0.1}

    def test_defaults(self):
        """Test defaults and derived grid spacing"""
        config = parse_sim_config(self.data)
        self.assertEqual(config.cfl_safety, 0.4)
        self.assertEqual(config.blowup_density_factor, 1e3)
        self.assertEqual(config.sample_interval, 0.0)
        self.assertEqual(config.initial_smoothing, 1.0)
        self.assertAlmostEqual(config.grid.dx, 10.0 / 64)

    def test_power_of_two_grid(self):
        """Test that non power-of-two grids are rejected"""
        self.data["grid"]["nx"] = 100
        with self.assertRaises(InvalidInputError):
            parse_sim_config(self.data)

    def test_dt_ordering(self):
        """Test that dt_min must be below dt0"""
        self.data["dt_min"] = 1e-2
        with self.assertRaises(InvalidInputError):
            parse_sim_config(self.data)

    def test_nonpositive_alpha(self):
        """Test that alpha must be positive"""
        self.data["alpha"] = 0.0
        with self.assertRaises(InvalidInputError) as ctx:
            parse_sim_config(self.data)
        self.assertIn("errors", ctx.exception.detail)

    def test_direct_construction(self):
        """Test building the models without a document"""
        config = SimConfig(grid=GridSpec(L=2.0, nx=32, ny=16), alpha=0.5, dt0=1e-4, t_end=1.0)
        self.assertAlmostEqual(config.grid.dy, 0.25)


class TestDocuments(unittest.TestCase):
    """Density documents and file loading"""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        for name in os.listdir(self.temp_dir):
            os.remove(os.path.join(self.temp_dir, name))
        os.rmdir(self.temp_dir)

    def _write(self, name, text):
        path = os.path.join(self.temp_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        return path

    def test_grid_document(self):
        """Test a valid gridded density"""
        doc = parse_density_document({"grid": {"L": 1.0, "nx": 2, "ny": 2, "values": [0, 1, 2, 3]}})
        self.assertEqual(doc.grid.nx, 2)
        self.assertIsNone(doc.analytic)

    def test_grid_size_mismatch(self):
        """Test that the value count must equal nx * ny"""
        with self.assertRaises(InvalidInputError):
            parse_density_document({"grid": {"L": 1.0, "nx": 2, "ny": 2, "values": [1, 2, 3]}})

    def test_grid_negative_values(self):
        """Test that negative samples are rejected"""
        with self.assertRaises(InvalidInputError):
            parse_density_document({"grid": {"L": 1.0, "nx": 1, "ny": 2, "values": [1, -2]}})

    def test_analytic_document(self):
        """Test the discriminated union of primitives"""
        doc = parse_density_document({"analytic": [
            {"type": "ball", "radius": 1.0, "amplitude": 2.0},
            {"type": "gaussian", "center": [1.0, 0.0], "std": 0.5, "mass": 3.0},
        ]})
        self.assertEqual(doc.analytic[0].type, "ball")
        self.assertEqual(doc.analytic[0].center, [0.0, 0.0])
        self.assertEqual(doc.analytic[1].mass, 3.0)

    def test_exactly_one_kind(self):
        """Test that grid and analytic are mutually exclusive"""
        with self.assertRaises(InvalidInputError):
            parse_density_document({})
        with self.assertRaises(InvalidInputError):
            parse_density_document({
                "grid": {"L": 1.0, "nx": 1, "ny": 1, "values": [1.0]},
                "analytic": [{"type": "ball", "radius": 1.0, "amplitude": 1.0}],
            })

    def test_unknown_primitive(self):
        """Test that an unknown primitive type is rejected"""
        with self.assertRaises(InvalidInputError):
            parse_density_document({"analytic": [{"type": "cube", "side": 1.0}]})

    def test_load_json_and_yaml(self):
        """Test loading the same document from JSON and YAML files"""
        data = {"analytic": [{"type": "ball", "radius": 0.5, "amplitude": 10.0}]}
        json_path = self._write("density.json", json.dumps(data))
        yaml_path = self._write("density.yaml", "analytic:\n  - type: ball\n    radius: 0.5\n    amplitude: 10.0\n")
        self.assertEqual(load_density_document(json_path), load_density_document(yaml_path))

    def test_load_sim_config(self):
        """Test loading a YAML simulator config"""
        path = self._write("sim.yaml", "grid: {L: 4.0, nx: 32, ny: 32}\nalpha: 2.0\ndt0: 0.001\nt_end: 0.5\n")
        config = load_sim_config(path)
        self.assertEqual(config.alpha, 2.0)
        self.assertEqual(config.grid.nx, 32)

    def test_missing_file(self):
        """Test that a missing file maps to InvalidInputError"""
        with self.assertRaises(InvalidInputError):
            load_sim_config(os.path.join(self.temp_dir, "absent.yaml"))

    def test_malformed_yaml(self):
        """Test that unparsable YAML maps to InvalidInputError"""
        path = self._write("bad.yaml", "grid: [unclosed\n")
        with self.assertRaises(InvalidInputError):
            load_density_document(path)


if __name__ == '__main__':
    unittest.main(verbosity=2)
