import os
import unittest

from fastapi.testclient import TestClient

from clustershock.main import app

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "example", "datasets")

client = TestClient(app)


def csv_text(name: str) -> str:
    with open(os.path.join(DATA_DIR, name), "r", encoding="utf-8") as f:
        return f.read()


class TestCommonRouter(unittest.TestCase):
    def test_root(self):
        response = client.get("/")
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json(), {"message": "clustershock is running"})

    def test_config(self):
        body = client.get("/config").json()
        self.assertEqual(body["schema_version"], "1.0")
        self.assertIn("bootstrap_enum_cap", body)

    def test_status(self):
        self.assertEqual(client.get("/status").json()["backend"]["status"], "running")


class TestEstimateRouter(unittest.TestCase):
    def test_estimate(self):
        response = client.post("/estimate", json={"csv": csv_text("hand_fixture.csv"), "bootstrap": "enum"})
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body["rows"][0]["estimate"], 2.0)
        self.assertEqual(body["rows"][0]["p_boot"], 0.5)

    def test_column_map(self):
        payload = {
            "csv": csv_text("cluster_fixture.csv"),
            "columns": {"cluster_col": "district"},
        }
        body = client.post("/estimate", json=payload).json()
        self.assertEqual(body["reports"][0]["n_clusters"], 2)

    def test_engine_error_is_422(self):
        response = client.post("/estimate", json={"csv": csv_text("one_armed.csv")})
        self.assertEqual(response.status_code, 422)
        self.assertIn("stratum 2", response.json()["detail"])

    def test_oracles(self):
        population = {
            "strata": [
                {"y0": [0, 1, 2, 3], "y1": [1, 2, 3, 4], "n_treat": 2},
                {"y0": [0, 1, 2, 3], "y1": [1, 2, 3, 4], "n_treat": 2},
            ]
        }
        body = client.post("/oracles", json={"population": population}).json()
        self.assertAlmostEqual(body["theory"]["variances"]["v_cond"], 5 / 6, delta=1e-12)

    def test_bad_population_is_422(self):
        response = client.post("/oracles", json={"population": {"strata": []}})
        self.assertEqual(response.status_code, 422)


if __name__ == "__main__":
    unittest.main()
