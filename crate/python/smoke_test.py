"""Imports the extension module and runs each binding once."""

import math

import trajsafe

scenarios = trajsafe.generate("lead_brake", seed=3, count=12)
assert len(scenarios) == 12 and scenarios[0].horizon_steps == 8
again = trajsafe.generate("lead_brake", seed=3, count=12)
assert [s.to_toml() for s in scenarios] == [s.to_toml() for s in again]
assert trajsafe.Scenario.from_toml(scenarios[0].to_toml()).to_toml() == scenarios[0].to_toml()

corpus = trajsafe.expert_corpus(scenarios)
anchors = trajsafe.fit_anchors(corpus, k=4, seed=7)
assert anchors.k == 4 and anchors.horizon == 8
assert trajsafe.AnchorSet.from_text(anchors.to_text()).to_text() == anchors.to_text()

ev = trajsafe.evaluate(scenarios[0], anchors, "[pipeline.selection]\ntop_k = 3\n")
assert len(ev["proposals"]) == 4 and len(ev["finalists"]) == 3
chosen = next(f for f in ev["finalists"] if f["index"] == ev["selected"])
assert 0.0 <= chosen["pdms"] <= 1.0

assert math.isclose(trajsafe.pdms({"ep": 0.8}), 11 / 12, abs_tol=1e-12)
assert trajsafe.epdms({"ep": 0.5, "ec": 0.0}) == 0.71875
assert trajsafe.epdms({"nc": 0.0}, {"nc": 0.0}) == 1.0
assert trajsafe.obb_overlap((0, 0, 0, 4, 2), (3.9, 0, 0, 4, 2))
assert not trajsafe.obb_overlap((0, 0, 0, 4, 2), (4.1, 0, 0, 4, 2))
assert trajsafe.driving_score([(100.0, []), (50.0, ["red_light"])]) == 67.5

for bad in (lambda: trajsafe.generate("roundabout", 1, 1), lambda: trajsafe.fit_anchors(corpus, k=99)):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

print("smoke test ok:", trajsafe.__version__, scenarios[0])
