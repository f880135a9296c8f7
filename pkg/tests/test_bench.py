from semloc import _kernels
from semloc.bench import format_bench, run_bench


def test_bench_smoke():
    rows = run_bench(particles=(50,), rays=8, repeat=1)
    backends = {r["backend"] for r in rows}
    assert set(_kernels.backends()) <= backends
    assert all(r["ms"] > 0 for r in rows)
    txt = format_bench(rows)
    assert "ray update 50x8" in txt
