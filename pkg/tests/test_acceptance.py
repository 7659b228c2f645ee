"""Acceptance suite: one test per release criterion, each printing a
``[acceptance] criterion N: PASS`` line (run with ``pytest -s`` to see
them as they happen).

Criterion 5's low-band half fails by construction: the electron Zeeman
shift alone over a 1.5 mT offset is 42 MHz, so the outermost allowed
lines reach ~44 MHz at the window edges and cannot sit below 40 MHz.
The assertion is kept as stated rather than loosened; see the low-band
tests in test_spectrum.py for the attainable window (~+-1.3 mT).
"""

import contextlib
from dataclasses import replace

import numpy as np
import pytest
from conftest import nv_table

from nvgslac.carbon13 import (
    C13Placement,
    McConfig,
    build_full_hamiltonian,
    load_families,
    mc_average_spectrum,
    site_list,
)
from nvgslac.fitting import (
    FitParams,
    alignment,
    calibrate_field,
    fit_spectrum,
    model_spectrum,
    orientation,
)
from nvgslac.hamiltonian import (
    DEFAULT_CONSTANTS,
    FieldConfig,
    analytic_energies,
    build_nv_hamiltonian,
    gslac_field,
    truncated_eigensystem,
    truncated_hamiltonian,
)
from nvgslac.spectrum import MeasuredSpectrum, synthesize, track_transition
from nvgslac.spin_core import eigensolve, embed, product_basis_labels, spin_matrices
from nvgslac.transitions import (
    dipole_elements,
    intensity_matrix,
    transition_probabilities,
)

C = DEFAULT_CONSTANTS
B_GSLAC = gslac_field(C)


@contextlib.contextmanager
def criterion(number, name):
    try:
        yield
    except Exception:
        print(f"[acceptance] criterion {number} ({name}): FAIL")
        raise
    print(f"[acceptance] criterion {number} ({name}): PASS")


def test_criterion_01_gslac_position():
    with criterion(1, "anticrossing position"):
        assert abs(B_GSLAC - 102.409) <= 0.001
        # the symmetric-form 5/6 pair has its minimum gap where its own
        # mixing parameter vanishes: gamma_e B = d_g + q
        bs = np.arange(101.7, 102.8, 1e-4)
        e = analytic_energies(C, bs, kappa2_sign="plus")
        b_min = bs[np.argmin(e[:, 5] - e[:, 4])]
        assert abs(b_min - (C.d_g + C.q) / C.gamma_e) <= 0.001


def test_criterion_02_analytic_numeric_agreement():
    with criterion(2, "closed form vs numerics"):
        bs = np.linspace(0.0, 150.0, 1000)
        e_cf = np.sort(analytic_energies(C, bs)[:, :6], axis=-1)
        worst = 0.0
        for k, b in enumerate(bs):
            e_num = np.linalg.eigvalsh(truncated_hamiltonian(C, b))
            worst = max(worst, float(np.max(np.abs(e_num - e_cf[k]))))
        assert worst < 1e-6

        # full 9x9 near the anticrossing, scoped to the terms the closed
        # form contains (its tiny nitrogen Zeeman term zeroed): the
        # остаток is the m_S = +1 truncation error, bounded by 0.01 MHz
        c0 = replace(C, gamma_n14=0.0)
        near = bs[np.abs(bs - B_GSLAC) <= 2.0]
        assert near.size >= 10
        worst9 = 0.0
        for b in near:
            e_num = np.linalg.eigvalsh(build_nv_hamiltonian(c0, FieldConfig(b=b)))
            e_cf9 = np.sort(analytic_energies(C, b))
            worst9 = max(worst9, float(np.max(np.abs(e_num - e_cf9))))
        assert worst9 < 0.01


def test_criterion_03_avoided_crossing_gaps():
    with criterion(3, "avoided-crossing gaps"):
        bs = np.arange(101.5, 103.3, 1e-4)
        e = analytic_energies(C, bs)
        assert abs(np.min(e[:, 3] - e[:, 2]) - 5.40) <= 0.01
        assert abs(np.min(e[:, 5] - e[:, 4]) - 5.40) <= 0.01
        assert abs(np.min(e[:, 3] - e[:, 2]) - 2 * abs(C.a_perp)) <= 0.01


def test_criterion_04_selection_rules_and_blocks():
    with criterion(4, "selection rules and block structure"):
        # exact zeros among the unmixed levels of the closed-form model
        # whenever the nuclear projection changes
        unmixed = [(0, 1), (-1, -1), (1, 1), (1, -1), (1, 0)]
        for b in (95.0, 101.5, 102.4, 103.4):
            system = truncated_eigensystem(C, b)
            p = transition_probabilities(dipole_elements(system))
            table = intensity_matrix(p, system, beta=0.0, manifold_split=0.5, floor_rel=0.0)
            intensity = {}
            for row in table.rows:
                intensity[(row.label_from, row.label_to)] = row.intensity
            for a in unmixed:
                for bb in unmixed:
                    if a == bb or a[1] == bb[1]:
                        continue
                    i, j = system.labels.index(a), system.labels.index(bb)
                    assert p[i, j] == 0.0
                    assert intensity.get((a, bb), 0.0) == 0.0
                    assert intensity.get((bb, a), 0.0) == 0.0

        # the axial Hamiltonian commutes with the total z projection
        sz = spin_matrices(1.0).sz
        m_total = embed(sz, 0, (3, 3)) + embed(sz, 1, (3, 3))
        rng = np.random.default_rng(404)
        for b in rng.uniform(0.0, 150.0, size=50):
            h = build_nv_hamiltonian(C, FieldConfig(b=float(b)))
            assert np.linalg.norm(h @ m_total - m_total @ h) < 1e-9


def test_criterion_05_hi_frequency_window():
    with criterion(5, "high-band frequency window"):
        for b in np.linspace(101.0, 103.5, 26):
            table = nv_table(b, mode="hi")
            assert table.rows
            for row in table.rows:
                assert 5600.0 <= row.freq_mhz <= 5900.0


@pytest.mark.xfail(
    strict=True,
    reason="unattainable as stated: gamma_e * 1.5 mT = 42 MHz alone exceeds the"
    " 40 MHz bound; allowed lines reach ~44.4 MHz at the window edges",
)
def test_criterion_05_lo_frequency_window():
    with criterion(5, "low-band frequency window"):
        for b in np.linspace(B_GSLAC - 1.5, B_GSLAC + 1.5, 31):
            table = nv_table(b, mode="lo")
            assert table.rows
            for row in table.rows:
                assert 0.0 <= row.freq_mhz <= 40.0


def _synthetic_case(index):
    rng = np.random.default_rng(6000 + index)
    sign = 1.0 if index % 2 else -1.0
    beta = sign * (0.25 + 0.75 * (index // 2) / 9.0)
    b = 101.0 + 2.5 * index / 19.0
    width = 0.8 + 1.2 * ((index * 7) % 20) / 19.0
    truth = FitParams(beta=beta, b=b, width=width)
    center = C.d_g + C.gamma_e * b
    grid = np.arange(center - 12.0, center + 12.0, 0.02)
    clean = model_spectrum(truth, grid, mode="hi").values
    sigma = 0.01 * clean.max()
    values = clean + sigma * rng.standard_normal(grid.size)
    return truth, MeasuredSpectrum(grid=grid, values=values, meta={"b_mt": b}), sigma


def test_criterion_06_fit_round_trip():
    with criterion(6, "fit round trip"):
        for index in range(20):
            truth, data, sigma = _synthetic_case(index)
            b_free = abs(truth.b - B_GSLAC) > 0.5
            b_init = truth.b + (0.05 if b_free else 0.0)
            result = fit_spectrum(data, FitParams(beta=0.0, b=b_init, width=1.2), mode="hi")
            p = result.params
            assert abs(p.beta - truth.beta) <= 0.05 * abs(truth.beta), (index, truth, p)
            if b_free:
                assert abs(p.b - truth.b) <= 0.01, (index, truth, p)
            assert abs(p.width - truth.width) <= 0.05 * truth.width, (index, truth, p)
            assert result.chi2_red <= 1.2 * sigma**2, (index, result.chi2_red, sigma**2)


def test_criterion_07_polarization_formulas():
    with criterion(7, "polarization formulas"):
        assert orientation((1.0, 0.0, 0.0)) == pytest.approx(np.sqrt(1.5), abs=1e-15)
        assert alignment((1.0, 0.0, 0.0)) == pytest.approx(np.sqrt(0.5), abs=1e-15)
        assert orientation((1 / 3, 1 / 3, 1 / 3)) == pytest.approx(0.0, abs=1e-15)
        assert alignment((1 / 3, 1 / 3, 1 / 3)) == pytest.approx(0.0, abs=1e-15)
        rng = np.random.default_rng(7)
        for _ in range(100):
            pops = rng.uniform(0.0, 5.0, size=3) + 1e-9
            scale = float(rng.uniform(1e-3, 1e3))
            assert orientation(scale * pops) == pytest.approx(orientation(pops), rel=1e-9)
            assert alignment(scale * pops) == pytest.approx(alignment(pops), rel=1e-9)


def test_criterion_08_carbon13_dimensions_and_mc():
    with criterion(8, "carbon-13 dimension law and averaging"):
        families = load_families()
        field = FieldConfig(b=102.4)
        base = build_nv_hamiltonian(C, field)
        sites = site_list(families)
        for n in range(0, 5):
            h = build_full_hamiltonian(
                base, C13Placement(occupied=sites[:n]), families, field, C
            )
            assert h.shape == (9 * 2**n, 9 * 2**n)

        grid = np.arange(0.0, 40.0, 0.1)
        null = mc_average_spectrum(
            McConfig(iterations=8, occupancy=0.0, seed=2), field,
            beta=0.0, width=1.0, grid=grid, mode="lo",
        )
        base_vals = synthesize(nv_table(102.4, mode="lo"), 1.0, grid).values
        assert np.max(np.abs(null.values - base_vals)) < 1e-12

        kwargs = dict(beta=0.0, width=1.0, grid=grid, mode="lo")
        small = mc_average_spectrum(
            McConfig(iterations=100, occupancy=0.011, seed=11), field, **kwargs
        )
        large = mc_average_spectrum(
            McConfig(iterations=400, occupancy=0.011, seed=11), field, **kwargs
        )
        ratio = np.linalg.norm(small.stderr) / np.linalg.norm(large.stderr)
        assert 2.0 * 0.8 <= ratio <= 2.0 * 1.2


def test_criterion_09_forbidden_transition_enabling():
    with criterion(9, "forbidden-transition enabling"):
        families = load_families()
        field = FieldConfig(b=102.4)
        base = build_nv_hamiltonian(C, field)
        nn = families[0]
        assert nn.cos_zz < 1.0
        h = build_full_hamiltonian(
            base, C13Placement(occupied=((nn.label, 0),)), families, field, C
        )
        system = eigensolve(h, product_basis_labels(1))
        p = transition_probabilities(dipole_elements(system))
        table = intensity_matrix(p, system, beta=0.0, b_mt=102.4)
        t_max = max(row.intensity for row in table.rows)
        enabled = [
            row.intensity for row in table.rows if row.label_from[1] != row.label_to[1]
        ]
        assert enabled and max(enabled) > 1e-4 * t_max

        # without carbon at theta = 0 the (0,+1) -> (+1,0) line stays dark
        tables = [nv_table(b) for b in np.linspace(101.0, 104.0, 16)]
        points = track_transition(tables, (0, 1), (1, 0))
        assert all(intensity == 0.0 for _, _, intensity in points)


def test_criterion_10_calibration():
    with criterion(10, "field calibration"):
        rng = np.random.default_rng(10)
        currents = np.linspace(33.0, 36.0, 20)
        fields = 2.9 * currents + rng.normal(0.0, 0.005, currents.size)
        model = calibrate_field(list(zip(currents, fields)))
        assert abs(model.slope - 2.9) / 2.9 <= 0.01
