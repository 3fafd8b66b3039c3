"""Attack-model tests: closed forms, catalogue identities, dilation behavior."""

import math

import numpy as np
import pytest

from sqcka import attacks, protocol, qmath
from sqcka.attacks import (
    CollectiveAttack,
    ConditionalChannelTable,
    DepolarizingParams,
    attack_from_tables,
    depolarizing_attack,
    depolarizing_backward_prob,
    depolarizing_forward_prob,
    depolarizing_gram,
    depolarizing_tables,
    dump_attack_file,
    eve_catalogue,
    identity_attack,
    identity_gram,
    joint_az_analytic,
    load_attack_file,
    p_ghz_analytic,
    validate_gram,
)
from sqcka.qmath import DomainError, ValidationError


class TestParams:
    def test_q_ghz(self):
        p = DepolarizingParams(0.1, 0.2, 2)
        assert p.q_ghz == pytest.approx(0.28, abs=1e-15)
        assert p.d == 4

    def test_range_checks(self):
        with pytest.raises(DomainError):
            DepolarizingParams(-0.1, 0.0, 1)
        with pytest.raises(DomainError):
            DepolarizingParams(0.0, 1.5, 1)
        with pytest.raises(DomainError):
            DepolarizingParams(0.0, 0.0, 0)


class TestConditionalProbabilities:
    def test_forward_values(self):
        p = DepolarizingParams(0.2, 0.0, 2)
        assert depolarizing_forward_prob(0, 0, p) == pytest.approx(0.85)
        assert depolarizing_forward_prob(2, 0, p) == pytest.approx(0.05)
        assert depolarizing_forward_prob(3, 1, p) == pytest.approx(0.85)

    def test_forward_noiseless_is_delta(self):
        p = DepolarizingParams(0.0, 0.3, 2)
        tab = depolarizing_tables(p).forward
        np.testing.assert_allclose(tab[0], [1, 0, 0, 0], atol=1e-15)
        np.testing.assert_allclose(tab[1], [0, 0, 0, 1], atol=1e-15)

    def test_backward_values(self):
        p = DepolarizingParams(0.0, 0.4, 1)
        assert depolarizing_backward_prob(1, 1, p) == pytest.approx(0.8)
        assert depolarizing_backward_prob(0, 1, p) == pytest.approx(0.2)

    @pytest.mark.parametrize("q,qt,n", [(0.0, 0.0, 1), (0.3, 0.6, 2), (1.0, 0.5, 3)])
    def test_rows_sum_to_one(self, q, qt, n):
        tab = depolarizing_tables(DepolarizingParams(q, qt, n))
        np.testing.assert_allclose(tab.forward.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(tab.backward.sum(axis=2), 1.0, atol=1e-12)

    def test_non_stochastic_rejected(self):
        fwd = np.array([[0.5, 0.4], [0.0, 1.0]])
        bwd = np.zeros((2, 2, 2))
        bwd[:, :, 0] = 1.0
        with pytest.raises(ValidationError):
            ConditionalChannelTable(fwd, bwd)


class TestIdentityAttack:
    def test_tables(self):
        atk = identity_attack(2)
        np.testing.assert_allclose(atk.tables.forward[0], [1, 0, 0, 0])
        np.testing.assert_allclose(atk.tables.forward[1], [0, 0, 0, 1])
        assert (atk.gram == 1.0).all()

    def test_p_ghz_through_protocol(self):
        pp = protocol.ProtocolParams(n=2)
        _, _, stats = protocol.run_round_exact(pp, identity_attack(2), 0)
        assert stats.p_ghz == pytest.approx(1.0, abs=1e-12)


class TestEveCatalogue:
    def test_noiseless(self):
        cat = eve_catalogue(DepolarizingParams(0.0, 0.0, 3))
        assert cat.norm_aaa == pytest.approx(0.5, abs=1e-15)
        assert cat.norm_aac == cat.norm_abb == cat.norm_abc == 0.0
        assert cat.cross_overlap == pytest.approx(0.5, abs=1e-15)

    def test_direct_evaluation(self):
        cat = eve_catalogue(DepolarizingParams(0.1, 0.2, 2))
        assert cat.norm_aaa == pytest.approx(0.36 + 0.26 / 8 + 0.02 / 32, abs=1e-15)

    def test_multiplicities(self):
        cat = eve_catalogue(DepolarizingParams(0.3, 0.3, 2))
        assert cat.multiplicities == {"aaa": 2, "aac": 6, "abb": 6, "abc": 18}
        assert sum(cat.multiplicities.values()) == 2 * 4 * 4

    @pytest.mark.parametrize("n", range(1, 7))
    def test_total_mass_grid(self, n):
        worst = 0.0
        for q in np.linspace(0.0, 1.0, 20):
            for qt in np.linspace(0.0, 1.0, 20):
                cat = eve_catalogue(DepolarizingParams(q, qt, n))
                worst = max(worst, abs(cat.total_mass() - 1.0))
        assert worst <= 1e-12

    def test_family_assignment(self):
        cat = eve_catalogue(DepolarizingParams(0.2, 0.1, 2))
        assert cat.family_of(0, 0, 0) == "aaa"
        assert cat.family_of(1, 3, 3) == "aaa"
        assert cat.family_of(0, 0, 2) == "aac"
        assert cat.family_of(0, 1, 1) == "abb"
        assert cat.family_of(1, 0, 2) == "abc"
        assert cat.family_of(1, 2, 3) == "abc"  # c may equal vec a


class TestPGhzAnalytic:
    def test_noiseless(self):
        assert p_ghz_analytic(DepolarizingParams(0.0, 0.0, 4)) == 1.0

    def test_reference_point(self):
        assert p_ghz_analytic(DepolarizingParams(0.1, 0.2, 2)) == \
            pytest.approx(0.755, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_fully_depolarized(self, n):
        assert p_ghz_analytic(DepolarizingParams(1.0, 0.7, n)) == \
            pytest.approx(0.5 ** (n + 1), abs=1e-12)


class TestJointAz:
    def test_modes_agree_at_zero_forward(self):
        p = DepolarizingParams(0.0, 0.2, 2)
        for c in range(4):
            for a in range(2):
                lit = joint_az_analytic(a, c, p, "paper_literal")
                cor = joint_az_analytic(a, c, p, "corrected")
                assert lit == pytest.approx(cor, abs=1e-15)
        assert joint_az_analytic(0, 1, p, "paper_literal") == pytest.approx(0.025)
        assert joint_az_analytic(0, 0, p, "paper_literal") == pytest.approx(0.425)

    def test_corrected_reference_point(self):
        p = DepolarizingParams(0.2, 0.1, 2)
        assert joint_az_analytic(0, 2, p, "corrected") == pytest.approx(0.035)
        assert joint_az_analytic(1, 3, p, "corrected") == pytest.approx(0.395)

    @pytest.mark.parametrize("mode", ["paper_literal", "corrected"])
    def test_both_modes_normalize(self, mode):
        p = DepolarizingParams(0.37, 0.58, 3)
        total = sum(joint_az_analytic(a, c, p, mode)
                    for a in range(2) for c in range(8))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_corrected_matches_dilation(self):
        p = DepolarizingParams(0.2, 0.1, 2)
        pp = protocol.ProtocolParams(n=2)
        _, _, stats = protocol.run_round_exact(pp, depolarizing_attack(p), 1)
        for a in range(2):
            for c in range(4):
                assert stats.az_joint[a, c] == \
                    pytest.approx(joint_az_analytic(a, c, p, "corrected"), abs=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(DomainError):
            joint_az_analytic(0, 0, DepolarizingParams(0.1, 0.1, 1), "guess")


class TestGramValidation:
    def test_identity_gram_valid(self):
        validate_gram(identity_gram(4), 4)

    def test_not_psd_rejected(self):
        g = np.array(identity_gram(2))
        g[0, 0, 0, 1, 1, 1] = g[1, 1, 1, 0, 0, 0] = 1.5
        with pytest.raises(ValidationError, match="PSD"):
            validate_gram(g, 2)

    def test_asymmetric_rejected(self):
        g = np.array(identity_gram(2))
        g[0, 0, 0, 1, 1, 1] = 0.3
        with pytest.raises(ValidationError, match="symmetric"):
            validate_gram(g, 2)

    def test_bad_diagonal_rejected(self):
        g = np.array(identity_gram(2))
        g[0, 0, 0, 0, 0, 0] = 0.9
        with pytest.raises(ValidationError, match="diagonal"):
            validate_gram(g, 2)

    def test_depolarizing_gram_valid(self):
        for q, qt in ((0.0, 0.0), (0.1, 0.9), (1.0, 1.0)):
            g = depolarizing_gram(DepolarizingParams(q, qt, 2))
            validate_gram(g, 4)


class TestDilation:
    @pytest.mark.parametrize("q", [0.0, 0.35, 1.0])
    def test_forward_channel_action(self, q):
        # tracing the environment after the forward unitary must give
        # (1-Q) rho + (Q/d) I on the transferring register
        n, d = 1, 2
        atk = depolarizing_attack(DepolarizingParams(q, 0.0, n))
        fwd = atk.forward_dilation
        labels = [("T", d), ("E1", d), ("E2", d), ("E3", 2)]
        lay = qmath.RegisterLayout(labels)
        rng = np.random.default_rng(13)
        amp = rng.normal(size=d) + 1j * rng.normal(size=d)
        amp /= np.linalg.norm(amp)
        rho_in = np.outer(amp, amp.conj())
        psi = qmath.tensor(qmath.StateVector(amp), qmath.StateVector(fwd.env_state))
        psi = qmath.apply_on_subsystems(fwd.unitary, psi, lay, ("T", "E1", "E3"))
        rho_out = qmath.partial_trace(qmath.density_from_state(psi), lay, ("T",))
        expected = (1 - q) * rho_in + q / d * np.eye(d)
        np.testing.assert_allclose(rho_out.entries, expected, atol=1e-12)

    def test_full_depolarization_gives_maximally_mixed(self):
        n, d = 2, 4
        atk = depolarizing_attack(DepolarizingParams(1.0, 0.0, n))
        fwd = atk.forward_dilation
        lay = qmath.RegisterLayout([("T", d), ("E1", d), ("E2", d), ("E3", 2)])
        psi = qmath.tensor(qmath.basis_state(d, 0), qmath.StateVector(fwd.env_state))
        psi = qmath.apply_on_subsystems(fwd.unitary, psi, lay, ("T", "E1", "E3"))
        rho = qmath.partial_trace(qmath.density_from_state(psi), lay, ("T",))
        np.testing.assert_allclose(rho.entries, np.eye(d) / d, atol=1e-12)

    def test_forward_conditionals_match_closed_form(self):
        p = DepolarizingParams(0.3, 0.1, 2)
        atk = depolarizing_attack(p)
        got = protocol.forward_conditionals_exact(atk)
        np.testing.assert_allclose(got, atk.tables.forward, atol=1e-12)

    def test_backward_conditionals_match_closed_form(self):
        p = DepolarizingParams(0.3, 0.45, 2)
        atk = depolarizing_attack(p)
        got = protocol.backward_conditionals_exact(atk)
        np.testing.assert_allclose(got, atk.tables.backward[0], atol=1e-12)
        np.testing.assert_allclose(got, atk.tables.backward[1], atol=1e-12)


class TestCrossFormConsistency:
    @pytest.mark.parametrize("q,qt,n", [(0.1, 0.2, 1), (0.4, 0.7, 2)])
    def test_analytic_form_reproduces_dilated_statistics(self, q, qt, n):
        p = DepolarizingParams(q, qt, n)
        dil = depolarizing_attack(p)
        ana = attack_from_tables(depolarizing_tables(p), depolarizing_gram(p))
        pp = protocol.ProtocolParams(n=n)
        for theta in (0, 1):
            _, _, s_dil = protocol.run_round_exact(pp, dil, theta)
            s_ana = protocol.round_statistics(ana, theta)
            if theta == 0:
                assert abs(s_dil.p_ghz - s_ana.p_ghz) <= 1e-10
                np.testing.assert_allclose(s_dil.ctrl_az, s_ana.ctrl_az, atol=1e-10)
                assert abs(s_dil.re_overlap - s_ana.re_overlap) <= 1e-10
            else:
                np.testing.assert_allclose(s_dil.abc_joint, s_ana.abc_joint,
                                           atol=1e-10)
                np.testing.assert_allclose(s_dil.pb, s_ana.pb, atol=1e-10)
                assert abs(s_dil.cross_overlap - s_ana.cross_overlap) <= 1e-10


class TestAttackFiles:
    def test_round_trip(self, tmp_path):
        p = DepolarizingParams(0.25, 0.4, 2)
        atk = attack_from_tables(depolarizing_tables(p), depolarizing_gram(p))
        path = tmp_path / "depol.attack"
        dump_attack_file(atk, path)
        back = load_attack_file(path)
        np.testing.assert_allclose(back.tables.forward, atk.tables.forward,
                                   atol=1e-15)
        np.testing.assert_allclose(back.tables.backward, atk.tables.backward,
                                   atol=1e-15)
        np.testing.assert_allclose(back.gram, atk.gram, atol=1e-15)

    def test_gram_defaults_to_orthonormal(self, tmp_path):
        path = tmp_path / "plain.attack"
        path.write_text(
            "FORWARD\n0 0 1.0\n0 1 0.0\n1 0 0.0\n1 1 1.0\n"
            "BACKWARD\n0 0 0 1\n0 0 1 0\n0 1 0 0\n0 1 1 1\n"
            "1 0 0 1\n1 0 1 0\n1 1 0 0\n1 1 1 1\n")
        atk = load_attack_file(path)
        np.testing.assert_allclose(atk.gram, identity_gram(2))

    def test_incomplete_forward_rejected(self, tmp_path):
        path = tmp_path / "bad.attack"
        path.write_text("FORWARD\n0 0 1.0\n1 1 1.0\n")
        with pytest.raises(ValidationError, match="FORWARD"):
            load_attack_file(path)

    def test_garbage_line_rejected(self, tmp_path):
        path = tmp_path / "bad.attack"
        path.write_text("FORWARD\n0 zero 1.0\n")
        with pytest.raises(ValidationError, match="cannot parse"):
            load_attack_file(path)

    def test_non_psd_gram_rejected(self, tmp_path):
        path = tmp_path / "bad.attack"
        path.write_text(
            "FORWARD\n0 0 1.0\n0 1 0.0\n1 0 0.0\n1 1 1.0\n"
            "BACKWARD\n0 0 0 1\n0 0 1 0\n0 1 0 0\n0 1 1 1\n"
            "1 0 0 1\n1 0 1 0\n1 1 0 0\n1 1 1 1\n"
            "GRAM\n0 0 0 1 1 1 1.5\n")
        with pytest.raises(ValidationError, match="PSD"):
            load_attack_file(path)

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "c.attack"
        path.write_text(
            "# a comment\n\nFORWARD\n0 0 1.0  # inline\n0 1 0.0\n"
            "1 0 0.0\n1 1 1.0\nBACKWARD\n0 0 0 1\n0 0 1 0\n0 1 0 0\n0 1 1 1\n"
            "1 0 0 1\n1 0 1 0\n1 1 0 0\n1 1 1 1\n")
        atk = load_attack_file(path)
        assert atk.n == 1


class TestAttackAssembly:
    def test_needs_some_form(self):
        with pytest.raises(ValidationError):
            CollectiveAttack(n=1)

    def test_n_mismatch_rejected(self):
        tab = depolarizing_tables(DepolarizingParams(0.1, 0.1, 2))
        with pytest.raises(ValidationError):
            CollectiveAttack(n=3, tables=tab, gram=identity_gram(4))
