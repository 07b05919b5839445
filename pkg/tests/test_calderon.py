"""Reconstruction tests: pattern normalization, harmonic traces, basis
expansion, frequency samples, the disk integral, Simpson synthesis and the
end-to-end pipeline."""

import numpy as np
import pytest
from scipy.integrate import dblquad
from scipy.ndimage import rotate

from calderon_eit import calderon as cal
from calderon_eit import fem
from calderon_eit import phantoms as ph
from calderon_eit.grids import disk_mask


def _frame_for(mesh, patterns, phantom):
    return fem.simulate_measurements(
        mesh, ph.phantom_to_field(phantom, mesh), patterns)


class TestNormalizePatterns:
    def test_single_row_arithmetic(self):
        layout = fem.ElectrodeLayout(n_electrodes=4, width=0.02)
        pats = fem.CurrentPatternSet(
            rows=np.array([[1.0, -1.0, 0.0, 0.0],
                           [0.0, 1.0, -1.0, 0.0],
                           [0.0, 0.0, 1.0, -1.0]]), amplitude=1.0)
        frame = fem.MeasurementFrame(voltages=np.eye(3, 4) + 0j, layout=layout,
                                     amplitude=1.0)
        norm = cal.normalize_patterns(pats, frame)
        s = 1 / np.sqrt(2)
        np.testing.assert_allclose(norm.currents[0], [s, -s, 0, 0], atol=1e-15)
        np.testing.assert_allclose(norm.voltages[0], [s, 0, 0, 0], atol=1e-15)

    def test_amplitude_invariance(self, mesh32, patterns32, hom_frame):
        # Doubling the drive doubles both T and V, leaving t and v fixed.
        pats2 = fem.trig_current_patterns(32, 2 * patterns32.amplitude)
        frame2 = fem.simulate_measurements(
            mesh32, fem.uniform_field(mesh32, 1.0), pats2)
        a = cal.normalize_patterns(patterns32, hom_frame)
        b = cal.normalize_patterns(pats2, frame2)
        np.testing.assert_allclose(b.currents, a.currents, atol=1e-14)
        np.testing.assert_allclose(b.voltages, a.voltages, atol=1e-14)

    def test_trig_rows_orthonormal(self, patterns32, hom_frame):
        norm = cal.normalize_patterns(patterns32, hom_frame)
        gram = norm.currents @ norm.currents.T
        np.testing.assert_allclose(gram, np.eye(31), atol=1e-10)

    def test_zero_norm_row_rejected(self):
        layout = fem.ElectrodeLayout(n_electrodes=4, width=0.02)
        pats = fem.CurrentPatternSet(rows=np.zeros((3, 4)), amplitude=1.0)
        frame = fem.MeasurementFrame(voltages=np.zeros((3, 4)) + 0j,
                                     layout=layout, amplitude=1.0)
        with pytest.raises(cal.ExpansionError):
            cal.normalize_patterns(pats, frame)


class TestCgoTrace:
    def test_point_value(self):
        # k = (1, 0) at x = (1, 0): kperp.x = 0, so phi1 = exp(pi*i) = -1.
        val = cal.cgo_field(np.array([[1.0, 0.0]]), (1.0, 0.0), 1)[0]
        assert val == pytest.approx(-1.0, abs=1e-12)

    def test_product_identity(self, layout32):
        rng = np.random.default_rng(0)
        for _ in range(5):
            k = rng.uniform(-1.5, 1.5, 2)
            if np.hypot(*k) < 1e-6:
                continue
            p1 = cal.cgo_trace(layout32, k, 1)
            p2 = cal.cgo_trace(layout32, k, 2)
            expected = np.exp(2j * np.pi * (layout32.midpoints @ k))
            np.testing.assert_allclose(p1 * p2, expected, rtol=1e-12)

    def test_gradient_product_against_finite_differences(self):
        # Central differences approximate grad(phi1).grad(phi2); the exact
        # product is -2 pi^2 |k|^2 exp(2 pi i k.x).
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(4):
            k = rng.uniform(-1.2, 1.2, 2)
            if np.hypot(*k) < 0.2:
                continue
            x = rng.uniform(-0.6, 0.6, 2)
            grads = []
            for which in (1, 2):
                gx = (cal.cgo_field([x + [h, 0]], k, which)[0]
                      - cal.cgo_field([x - [h, 0]], k, which)[0]) / (2 * h)
                gy = (cal.cgo_field([x + [0, h]], k, which)[0]
                      - cal.cgo_field([x - [0, h]], k, which)[0]) / (2 * h)
                grads.append(np.array([gx, gy]))
            product = grads[0] @ grads[1]
            exact = (-2 * np.pi**2 * (k @ k)
                     * np.exp(2j * np.pi * (k @ x)))
            assert product == pytest.approx(exact, rel=1e-6)

    def test_zero_k_rejected(self, layout32):
        with pytest.raises(ValueError):
            cal.cgo_trace(layout32, (0.0, 0.0), 1)


class TestExpandCoefficients:
    def test_exact_basis_row(self):
        rng = np.random.default_rng(5)
        basis = rng.normal(size=(15, 16))
        coeffs = cal.expand_coefficients(basis[3], basis)
        expected = np.zeros(15)
        expected[3] = 1.0
        np.testing.assert_allclose(coeffs, expected, atol=1e-10)

    def test_orthonormal_basis_gives_inner_products(self, patterns32, hom_frame):
        t = cal.normalize_patterns(patterns32, hom_frame).currents
        trace = cal.cgo_trace(hom_frame.layout, (0.5, 0.3), 1)
        coeffs = cal.expand_coefficients(trace, t)
        np.testing.assert_allclose(coeffs, t @ trace, atol=1e-10)

    def test_residual_orthogonal_to_span(self):
        pats = fem.trig_current_patterns(16, 1.0)
        t = pats.rows / np.linalg.norm(pats.rows, axis=1, keepdims=True)
        rng = np.random.default_rng(11)
        trace = rng.normal(size=16) + 1j * rng.normal(size=16)
        coeffs = cal.expand_coefficients(trace, t)
        residual = trace - t.T @ coeffs
        assert np.abs(t @ residual).max() < 1e-10

    def test_rank_deficient_rejected(self):
        basis = np.ones((3, 8))
        with pytest.raises(cal.ExpansionError, match="rank"):
            cal.expand_coefficients(np.ones(8), basis)


class TestFrequencySamples:
    def test_identical_coefficients_give_zero(self, layout32):
        rng = np.random.default_rng(2)
        a = rng.normal(size=31)
        b = rng.normal(size=31) + 1j * rng.normal(size=31)
        gram = np.eye(31)
        val = cal.fhat_difference(a, gram, b, b, (0.4, 0.1), layout32)
        assert val == 0

    def test_null_experiment(self, mesh32, patterns32, hom_frame):
        # Two runs of the same solver produce identical frames, so the
        # difference-mode samples vanish on the whole grid.
        again = fem.simulate_measurements(mesh32, fem.uniform_field(mesh32, 1.0),
                                          patterns32)
        data = cal.scattering_transform(again, hom_frame)
        scale = np.abs(cal.domain_exponential_integral((0.3, 0.0)))
        assert np.abs(data.values).max() < 1e-6 * scale

    def test_absolute_null_on_homogeneous_data(self, hom_frame):
        # delta = 0: the measured term cancels the analytic disk integral up
        # to discretization of the electrode model.
        data = cal.scattering_transform(hom_frame, None)
        assert np.abs(data.values).max() < 0.02

    def test_difference_equals_absolute_difference(self, hom_frame, bump_frame):
        abs_g = cal.scattering_transform(bump_frame, None)
        abs_r = cal.scattering_transform(hom_frame, None)
        diff = cal.scattering_transform(bump_frame, hom_frame)
        np.testing.assert_allclose(abs_g.values - abs_r.values, diff.values,
                                   atol=1e-10)

    def test_conjugate_symmetry_for_real_admittivity(self, hom_frame, bump_frame):
        data = cal.scattering_transform(bump_frame, hom_frame)
        flipped = data.values[::-1, ::-1]  # k -> -k on the symmetric grid
        dev = np.abs(flipped - np.conj(data.values)).max()
        assert dev < 1e-9 * np.abs(data.values).max()

    def test_case_a_samples_finite(self, mesh32, patterns32):
        phantom = ph.chest_phantom_case_a(1)
        frame = _frame_for(mesh32, patterns32, phantom)
        ref = fem.simulate_measurements(mesh32, fem.uniform_field(mesh32, 0.3),
                                        patterns32)
        data = cal.scattering_transform(frame, ref, radius=1.3, background=0.3)
        assert np.all(np.isfinite(data.values))


class TestDomainExponentialIntegral:
    def test_zero_frequency_gives_disk_area(self):
        assert cal.domain_exponential_integral((0.0, 0.0)) == pytest.approx(np.pi)

    def test_against_adaptive_quadrature(self):
        k = (0.5, 0.0)

        def integrand(y, x):
            return np.cos(2 * np.pi * (k[0] * x + k[1] * y))

        ref, _ = dblquad(integrand, -1, 1,
                         lambda x: -np.sqrt(max(0.0, 1 - x**2)),
                         lambda x: np.sqrt(max(0.0, 1 - x**2)), epsabs=1e-11)
        assert cal.domain_exponential_integral(k) == pytest.approx(ref, abs=1e-8)

    def test_real_valued(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            val = cal.domain_exponential_integral(rng.uniform(-2, 2, 2))
            assert isinstance(val, float)


class TestFrequencyGrid:
    def test_even_points_rejected(self):
        with pytest.raises(ValueError):
            cal.FrequencyGrid(1.3, 32)

    def test_symmetric_and_zero_excluded(self):
        grid = cal.FrequencyGrid(1.3, 33)
        np.testing.assert_allclose(grid.axis, -grid.axis[::-1])
        assert not grid.mask[16, 16]
        assert np.array_equal(grid.mask, grid.mask[::-1, ::-1])
        pts = grid.k_points()
        assert np.hypot(pts[:, 0], pts[:, 1]).max() <= 1.3 + 1e-9


class TestInverseFourierSimpson:
    def test_zero_data_gives_zero_image(self):
        grid = cal.FrequencyGrid(1.3, 33)
        data = cal.ScatteringData(values=np.zeros((33, 33), complex), grid=grid)
        img = cal.inverse_fourier_simpson(data, grid, 16)
        assert np.all(img.values == 0)

    def test_gaussian_transform_pair(self):
        # Closed-form pair: exp(-|x|^2 / 2 s2) <-> 2 pi s2 exp(-2 pi^2 s2 |k|^2).
        # R = 1.3 captures over 99% of the spectral mass for s2 = 0.14.
        s2 = 0.14
        grid = cal.FrequencyGrid(1.3, 33)
        K1, K2 = np.meshgrid(grid.axis, grid.axis, indexing="ij")
        fhat = 2 * np.pi * s2 * np.exp(-2 * np.pi**2 * s2 * (K1**2 + K2**2))
        data = cal.ScatteringData(values=np.where(grid.mask, fhat, 0) + 0j,
                                  grid=grid)
        img = cal.inverse_fourier_simpson(data, grid, 64)
        from calderon_eit.grids import pixel_coords
        xs, ys = pixel_coords(64)
        X, Y = np.meshgrid(xs, ys)
        true = np.exp(-(X**2 + Y**2) / (2 * s2))
        err = np.linalg.norm(img.values.real - true) / np.linalg.norm(true)
        assert err < 0.02

    def test_grid_refinement_self_convergence(self):
        # Zero-DC spectrum isolates quadrature error from the excluded k=0
        # cell, whose Simpson weight changes with the grid.
        s2 = 0.25
        images = []
        for m in (33, 65):
            grid = cal.FrequencyGrid(1.3, m)
            K1, K2 = np.meshgrid(grid.axis, grid.axis, indexing="ij")
            mod2 = K1**2 + K2**2
            fhat = np.where(grid.mask, mod2 * np.exp(-2 * np.pi**2 * s2 * mod2), 0)
            data = cal.ScatteringData(values=fhat + 0j, grid=grid)
            images.append(cal.inverse_fourier_simpson(data, grid, 64).values)
        change = np.linalg.norm(images[1] - images[0]) / np.linalg.norm(images[0])
        assert change < 1e-3

    def test_tiny_resolution_rejected(self):
        grid = cal.FrequencyGrid(1.3, 33)
        data = cal.ScatteringData(values=np.zeros((33, 33), complex), grid=grid)
        with pytest.raises(ValueError):
            cal.inverse_fourier_simpson(data, grid, 4)


class TestReconstruct:
    def test_null_difference(self, hom_frame):
        img = cal.reconstruct(hom_frame, hom_frame, n=64)
        delta = img.values / img.background - 1
        assert np.abs(delta).max() < 1e-6

    def test_case_a_contrast_underestimated(self, mesh32, patterns32):
        phantom = ph.chest_phantom_case_a(0, jitter=False)
        frame = _frame_for(mesh32, patterns32, phantom)
        ref = fem.simulate_measurements(mesh32, fem.uniform_field(mesh32, 0.3),
                                        patterns32)
        img = cal.reconstruct(frame, ref, n=64, background=0.3)
        truth = ph.rasterize(phantom, 64)
        lung = truth.values.real == 0.1
        true_contrast = 0.3 - 0.1
        recon_contrast = 0.3 - img.values.real[lung].mean()
        assert 0 < recon_contrast < true_contrast

    def test_centered_inclusion_localization(self, hom_frame, bump_frame):
        img = cal.reconstruct(bump_frame, hom_frame, n=64)
        delta = img.values.real - 1.0
        r, c = np.unravel_index(np.argmax(delta), delta.shape)
        assert np.hypot(r - 31.5, c - 31.5) <= 2.0

    def test_imaginary_part_small_for_real_phantom(self, hom_frame, bump_frame):
        img = cal.reconstruct(bump_frame, hom_frame, n=64)
        delta = img.values - 1.0
        assert np.abs(delta.imag).max() < 0.05 * np.abs(delta.real).max()

    def test_rotation_equivariance(self, mesh32, patterns32, hom_frame):
        # Rotating the phantom by one electrode spacing rotates the image;
        # scipy's rotate acts in array coordinates where y points down, so
        # the physical angle enters with a minus sign.
        angle = 2 * np.pi / 32
        c0 = np.array([0.4, 0.1])
        rot = np.array([[np.cos(angle), -np.sin(angle)],
                        [np.sin(angle), np.cos(angle)]])
        images = []
        for center in (c0, rot @ c0):
            phantom = ph.Phantom(
                background=1.0,
                organs=(ph.OrganBoundary("d", ph.disc_polygon(center, 0.2, 64),
                                         1.2),), case="A")
            frame = _frame_for(mesh32, patterns32, phantom)
            images.append(cal.reconstruct(frame, hom_frame, n=64).values.real)
        turned = rotate(images[1], -np.degrees(angle), reshape=False, order=3,
                        mode="nearest")
        mask = disk_mask(64)
        a = images[0][mask] - images[0][mask].mean()
        b = turned[mask] - turned[mask].mean()
        corr = (a @ b) / np.sqrt((a @ a) * (b @ b))
        assert corr >= 0.95

    def test_blur_decreases_with_radius(self, hom_frame, bump_frame):
        supports = []
        for radius in (0.7, 1.0, 1.3):
            img = cal.reconstruct(bump_frame, hom_frame, radius=radius, n=64)
            delta = img.values.real - 1.0
            supports.append(int((delta >= 0.5 * delta.max()).sum()))
        assert supports[0] > supports[1] > supports[2]

    def test_linearization_scaling(self, mesh32, patterns32, hom_frame):
        peaks = {}
        for s in (0.5, 1.0):
            phantom = ph.Phantom(
                background=1.0,
                organs=(ph.OrganBoundary(
                    "d", ph.disc_polygon((0.0, 0.0), 0.2, 64), 1.0 + 0.1 * s),),
                case="A")
            frame = _frame_for(mesh32, patterns32, phantom)
            img = cal.reconstruct(frame, hom_frame, n=64)
            peaks[s] = (img.values.real - 1.0).max()
        assert peaks[0.5] / peaks[1.0] == pytest.approx(0.5, rel=0.15)

    def test_outside_disk_is_background(self, hom_frame, bump_frame):
        img = cal.reconstruct(bump_frame, hom_frame, n=64, background=1.0)
        assert np.all(img.values[~img.mask] == 1.0)

    def test_layout_mismatch_rejected(self, hom_frame):
        other = fem.MeasurementFrame(
            voltages=hom_frame.voltages.copy(),
            layout=fem.ElectrodeLayout(tank_radius=0.2),
            amplitude=hom_frame.amplitude)
        with pytest.raises(ValueError, match="layout"):
            cal.reconstruct(hom_frame, other)

    def test_difference_mode_requires_reference(self, hom_frame):
        with pytest.raises(ValueError):
            cal.reconstruct(hom_frame, None, mode="difference")


class TestImageIO:
    def test_round_trip(self, hom_frame, bump_frame, tmp_path):
        img = cal.reconstruct(bump_frame, hom_frame, n=32)
        path = tmp_path / "img.bin"
        cal.write_image(img, path)
        back = cal.read_image(path)
        np.testing.assert_allclose(back.values, img.values, atol=1e-6)
        assert back.mode == img.mode
        assert back.radius == img.radius
        assert back.background == img.background

    def test_truncated_payload(self, tmp_path):
        img = cal.ReconstructionImage(values=np.zeros((16, 16), complex),
                                      radius=1.3, mode="difference",
                                      background=1.0)
        path = tmp_path / "img.bin"
        cal.write_image(img, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            cal.read_image(path)
