import pytest

from heightsculpt.field import flat_field
from heightsculpt.planning.goal import adjust_goal
from heightsculpt.planning.mpc import MPCConfig, OracleWorld, mpc_sculpt
from heightsculpt.planning.tasks import ridge_field
from heightsculpt.sim.materials import MATERIALS, TOOLS


@pytest.mark.acceptance
def test_push_smooths_ridge_better_than_pinch(foam_planner_model, pinch_model):
    start = ridge_field()
    goal = adjust_goal(flat_field(), start)
    finals = {}
    for name, model, tool in (("push", foam_planner_model, "rod"), ("pinch", pinch_model, "gripper")):
        world = OracleWorld(start, MATERIALS["foam"], TOOLS[tool], seed=0)
        log = mpc_sculpt(start, goal, model, world, MPCConfig(n_actions=10, iters=30, seed=0))
        assert log.error is None and len(log.records) == 10
        finals[name] = (log.final_loss_3d, log.final_loss_viz)
    print(f"final (L_3D, L_viz): push {finals['push']}, pinch {finals['pinch']}")
    assert finals["push"][1] < finals["pinch"][1]
