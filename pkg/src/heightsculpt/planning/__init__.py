"""Goal adjustment, planning objective, plan optimizers and the MPC loop."""
