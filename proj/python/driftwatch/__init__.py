"""Change-point detection and fault diagnosis for daily-batched streams."""
try:  # installed wheel: the extension sits inside this package
    from ._driftwatch import (  # noqa: F401
        __version__,
        fit,
        generate_scenario,
        hellinger_gauss,
        hotelling_scan,
        scenario_names,
        score_detection,
    )
except ImportError:  # in-tree builds expose the extension top level
    from _driftwatch import (  # noqa: F401
        __version__,
        fit,
        generate_scenario,
        hellinger_gauss,
        hotelling_scan,
        scenario_names,
        score_detection,
    )
