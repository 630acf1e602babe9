from experiments.services.simulation import PropagationScenario

ROOM_SETTINGS = [
    "SCENARIO_N_APS=6",
    "SCENARIO_WIDTH=10",
    "SCENARIO_HEIGHT=8",
    "SCENARIO_SHADOWING=0",
    "SCENARIO_SENSITIVITY=-100",
    "KERNEL_REG=0.01",
    "GRID_SPACING=1",
    "RESAMPLE_N=10",
]


def small_scenario(seed: int = 0, shadowing: float = 0.0) -> PropagationScenario:
    """10 m x 8 m room with six access points off the survey grid; every point hears every AP."""
    return PropagationScenario(
        width=10.0,
        height=8.0,
        shadowing=shadowing,
        sensitivity=-100.0,
        seed=seed,
        ap_positions=((1.2, 1.1), (8.7, 0.9), (5.1, 4.2), (0.8, 7.3), (9.1, 6.8), (4.3, 0.2)),
    )
