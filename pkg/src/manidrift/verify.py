"""Randomized property checks for every module's invariants.

Each check draws from a generator seeded with the run seed, so a failure
is reproduced by re-running the same suite with the reported seed.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import bounds, drift, losses, sphere
from .prompt import PromptParams
from .trainer import make_rng

SUITES = ("sphere", "drift", "bounds", "grad")
DEFAULT_TRIALS = {"sphere": 10_000, "drift": 200, "bounds": 1000, "grad": 20}
SPHERE_DIMS = (2, 8, 64, 512)
CHUNK = 8192


@dataclass
class PropertyResult:
    suite: str
    name: str
    passed: int
    total: int
    worst: float
    seed: int
    first_failure: Optional[int] = None

    @property
    def ok(self):
        return self.passed == self.total

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        text = f"{status} {self.suite}/{self.name}: {self.passed}/{self.total} (worst {self.worst:.3e})"
        if not self.ok:
            text += f" seed={self.seed} trial={self.first_failure}"
        return text


class _Tally:
    def __init__(self, suite, name, seed, worse=max):
        self.suite, self.name, self.seed = suite, name, seed
        self.passed = self.total = 0
        self.worst = None
        self.first = None
        self._worse = worse

    def add(self, ok, values):
        ok = np.atleast_1d(np.asarray(ok, dtype=bool))
        values = np.atleast_1d(np.asarray(values, dtype=np.float64))
        if self.first is None and not ok.all():
            self.first = self.total + int(np.flatnonzero(~ok)[0])
        self.passed += int(ok.sum())
        self.total += ok.size
        if values.size:
            w = float(self._worse(values))
            self.worst = w if self.worst is None else self._worse([self.worst, w])

    def result(self):
        return PropertyResult(self.suite, self.name, self.passed, self.total,
                              self.worst if self.worst is not None else 0.0, self.seed, self.first)


def random_unit_rows(rng, n, d):
    X = rng.normal(size=(n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def random_pairs(rng, n, d, min_cos=-0.999):
    """Unit pairs with cosine above ``min_cos``; a fifth are steered near opposition."""
    A = random_unit_rows(rng, n, d)
    B = random_unit_rows(rng, n, d)
    m = n // 5
    if m:
        # mix toward -A so small margins are exercised
        t = rng.uniform(0.0, 1.0, m)[:, None]
        B[:m] = -A[:m] * t + B[:m] * (1 - t) * 0.05
        B[:m] /= np.linalg.norm(B[:m], axis=1, keepdims=True)
    while True:
        bad = np.einsum("ij,ij->i", A, B) <= min_cos
        if not bad.any():
            return A, B
        B[bad] = random_unit_rows(rng, int(bad.sum()), d)


# --------------------------------------------------------------------------
# sphere
# --------------------------------------------------------------------------


def check_sphere(trials, seed, dims=SPHERE_DIMS) -> List[PropertyResult]:
    rng = make_rng(seed)
    identity = _Tally("sphere", "sphere-identity", seed)
    contraction = _Tally("sphere", "contraction", seed, worse=min)
    alignment = _Tally("sphere", "fusion-alignment", seed)
    fixed = _Tally("sphere", "fixed-point", seed)
    symmetric = _Tally("sphere", "symmetry", seed)
    lipschitz = _Tally("sphere", "lipschitz", seed, worse=min)
    per_dim = [trials // len(dims) + (1 if i < trials % len(dims) else 0) for i in range(len(dims))]
    for d, count in zip(dims, per_dim):
        done = 0
        while done < count:
            n = min(CHUNK, count - done)
            done += n
            A, B = random_pairs(rng, n, d)
            gamma = np.einsum("ij,ij->i", A, B)
            explicit = np.einsum("ij,ij->i", A - B, A - B)
            err = np.abs(2.0 * (1.0 - gamma) - explicit)
            identity.add(err <= 1e-12, err)

            F = sphere.fuse_rows(A, B)
            gaps = 0.5 * np.einsum("ij,ij->i", B - A, B - A) - np.einsum("ij,ij->i", F - A, F - A)
            contraction.add(gaps >= -1e-12, gaps)

            aerr = np.abs(np.einsum("ij,ij->i", F, A) - sphere.fused_alignment(gamma))
            alignment.add(aerr <= 1e-10, aerr)

            ferr = np.abs(sphere.fuse_rows(A, A) - A).max(axis=1)
            fixed.add(ferr <= 1e-12, ferr)
            serr = np.abs(F - sphere.fuse_rows(B, A)).max(axis=1)
            symmetric.add(serr <= 1e-12, serr)

            # Lipschitz: frozen A, prompts B and a perturbed B2, margin = smaller of the two norms
            B2 = B + rng.normal(scale=0.1, size=B.shape)
            B2 /= np.linalg.norm(B2, axis=1, keepdims=True)
            na = np.linalg.norm(A + B, axis=1)
            nb = np.linalg.norm(A + B2, axis=1)
            ok_rows = nb > 0
            margin = np.minimum(na, nb)[ok_rows]
            F2 = sphere.fuse_rows(A[ok_rows], B2[ok_rows], kappa=0.0)
            lhs = np.linalg.norm(F[ok_rows] - F2, axis=1)
            rhs = 2.0 / margin * np.linalg.norm(B[ok_rows] - B2[ok_rows], axis=1)
            slack = rhs + 1e-12 - lhs
            lipschitz.add(slack >= 0, slack)
    return [t.result() for t in (identity, contraction, alignment, fixed, symmetric, lipschitz)]


# --------------------------------------------------------------------------
# drift
# --------------------------------------------------------------------------


def check_drift(trials, seed) -> List[PropertyResult]:
    rng = make_rng(seed)
    pyth = _Tally("drift", "pythagoras", seed)
    rrange = _Tally("drift", "ratio-range", seed)
    tail = _Tally("drift", "tail-energy", seed)
    selfz = _Tally("drift", "self-drift-zero", seed)
    perm = _Tally("drift", "permutation-invariance", seed)
    decomp = _Tally("drift", "decompose-orthogonal", seed)
    ortho = _Tally("drift", "basis-orthonormal", seed)
    for _ in range(trials):
        n = int(rng.integers(3, 60))
        d = int(rng.integers(2, 40))
        # anisotropic cloud so the spectrum has distinct gaps
        scales = np.exp(-rng.uniform(0, 3, d))
        Z = random_unit_rows(rng, n, d) * scales
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
        k = int(rng.integers(1, drift.max_rank(n, d) + 1))
        sub = drift.fit_subspace(Z, k)
        oerr = np.abs(sub.basis.T @ sub.basis - np.eye(k)).max()
        ortho.add(oerr <= 1e-8, oerr)

        H = random_unit_rows(rng, n, d)
        Hc = H - sub.centroid
        P = sub.project(H)
        err = np.abs(np.sum(P**2, axis=1) + np.sum((Hc - P) ** 2, axis=1) - np.sum(Hc**2, axis=1))
        pyth.add(err.max() <= 1e-9, err.max())

        r = drift.off_manifold_ratio(H, sub)
        rrange.add(0.0 <= r <= 1.0, r)

        rz = drift.off_manifold_ratio(Z, sub)
        terr = abs(rz - sub.tail_energy_fraction())
        tail.add(terr <= 1e-8, terr)

        dz = abs(drift.manifold_drift(Z, Z, k).delta)
        selfz.add(dz <= 1e-10, dz)

        sub2 = drift.fit_subspace(Z[rng.permutation(n)], k)
        # compare subspaces through their projectors; individual vectors may rotate inside
        # a degenerate eigenspace
        gap = sub.spectrum[k - 1] - (sub.spectrum[k] if k < sub.spectrum.size else 0.0)
        perr = np.abs(sub.projector() - sub2.projector()).max()
        perm.add(perr <= 1e-6 or gap < 1e-6, perr)

        q = int(rng.integers(1, d + 1))
        Qb, _ = np.linalg.qr(rng.normal(size=(d, q)))
        delta = rng.normal(size=d)
        parts = drift.decompose_shift(delta, Qb)
        derr = max(abs(parts.in_subspace @ parts.complement),
                   np.abs(parts.in_subspace + parts.complement - delta).max())
        decomp.add(derr <= 1e-10, derr)
    return [t.result() for t in (ortho, pyth, rrange, tail, selfz, perm, decomp)]


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------


def check_bounds(trials, seed) -> List[PropertyResult]:
    rng = make_rng(seed)
    perturb = _Tally("bounds", "logit-perturbation", seed, worse=min)
    ce_range = _Tally("bounds", "ce-range", seed, worse=min)
    ce_lip = _Tally("bounds", "ce-lipschitz", seed, worse=min)
    rad_mono = _Tally("bounds", "rademacher-monotone", seed, worse=min)
    anchors = _Tally("bounds", "anchor-eps-proj", seed, worse=min)
    gen = _Tally("bounds", "generalization-dominates", seed, worse=min)
    for _ in range(trials):
        N = int(rng.integers(1, 33))
        C = int(rng.integers(1, 9))
        d = int(rng.integers(2, 33))
        tau = float(rng.choice([0.5, 1.0, 2.0]))
        Z = random_unit_rows(rng, N, d)
        W = random_unit_rows(rng, C, d)
        Fv = sphere.normalize_rows(Z + rng.uniform(0, 2) * random_unit_rows(rng, N, d))
        Ft = sphere.normalize_rows(W + rng.uniform(0, 2) * random_unit_rows(rng, C, d))
        emp = bounds.empirical_logit_perturbation(Fv, Z, Ft, W, tau)
        l_con = losses.consistency_img(Fv, Z) + losses.consistency_txt(Ft, W)
        slack = bounds.logit_perturbation_bound(tau, C, l_con) + 1e-9 - emp
        perturb.add(slack >= 0, slack)

        y = int(rng.integers(0, C))
        ell = losses.logits(Fv[0], Ft, tau)
        phi = losses.cross_entropy(ell, y)
        B = bounds.loss_bound_B(C, tau)
        ce_range.add(-1e-9 <= phi <= B + 1e-9, min(phi + 1e-9, B + 1e-9 - phi))

        ell2 = ell + rng.normal(scale=rng.uniform(0.01, 2.0), size=C)
        lip_slack = math.sqrt(2) * np.linalg.norm(ell - ell2) + 1e-9 - abs(phi - losses.cross_entropy(ell2, y))
        ce_lip.add(lip_slack >= 0, lip_slack)

        params = bounds.BoundParams(tau=tau, num_classes=C, num_samples=N * 10, prompt_dim=int(rng.integers(1, 100)),
                                    param_radius=float(rng.uniform(0.5, 50)), lipschitz=float(rng.uniform(0.5, 5)),
                                    confidence=float(rng.uniform(0.01, 0.5)))
        # epsilon grid inside the valid regime: log argument > 1 iff 2 tau sqrt(2 C eps) < 3 L R
        eps_max = (3 * params.lipschitz * params.param_radius / (2 * tau)) ** 2 / (2 * C)
        grid = np.sort(rng.uniform(0.0, eps_max * 0.999, 8))
        grid = grid[grid > 0]
        vals = [bounds.rademacher_bound(_with_eps(params, e)) for e in grid]
        mono = min((b - a for a, b in zip(vals, vals[1:])), default=0.0)
        rad_mono.add(mono >= -1e-12, mono)

        emp_risk = float(rng.uniform(0, 3))
        e = float(grid[0]) if grid.size else 0.0
        gslack = bounds.generalization_bound(emp_risk, _with_eps(params, e)) - emp_risk
        gen.add(gslack >= 0, gslack)

        cands = [random_unit_rows(rng, int(rng.integers(1, 5)), d) for _ in range(C)]
        st = bounds.anchor_stats(W, cands)
        aslack = st.zeta_max**2 + 1e-12 - st.eps_proj
        anchors.add(aslack >= 0, aslack)
    return [t.result() for t in (perturb, ce_range, ce_lip, rad_mono, anchors, gen)]


def _with_eps(params, eps):
    from dataclasses import replace

    return replace(params, epsilon=float(eps))


# --------------------------------------------------------------------------
# gradient
# --------------------------------------------------------------------------


def finite_difference_grad(loss_fn: Callable[[np.ndarray], float], x, step=1e-5):
    """Central differences of ``loss_fn`` at ``x``, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + step
        fp = loss_fn(x)
        x[i] = old - step
        fm = loss_fn(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * step)
    return g


def random_instance(rng, N=4, C=3, d=8, param_std=0.2):
    Z = random_unit_rows(rng, N, d)
    Zt = random_unit_rows(rng, C, d)
    W = sphere.normalize_rows(Zt + 0.3 * random_unit_rows(rng, C, d))
    labels = rng.integers(0, C, N)
    params = PromptParams.random(d, param_std, rng)
    tau = float(rng.uniform(0.5, 5.0))
    return Z, Zt, W, labels, params, tau


def gradient_relative_error(Z, Zt, W, labels, params, lam, tau, step=1e-5):
    d = params.dim
    _, g = losses.grad_total(params, Z, Zt, labels, W, lam, tau)

    def total(vec):
        return losses.forward(PromptParams.from_flat(vec, d), Z, Zt, labels, W, lam, tau).loss.total

    fd = finite_difference_grad(total, params.flat(), step)
    ga = g.flat()
    return float(np.linalg.norm(ga - fd) / max(np.linalg.norm(ga), np.linalg.norm(fd), 1e-12))


def check_grad(trials, seed, lambdas=(0.0, 1.0, 12.0)) -> List[PropertyResult]:
    rng = make_rng(seed)
    tally = _Tally("grad", "finite-difference", seed)
    for t in range(trials):
        Z, Zt, W, labels, params, tau = random_instance(rng)
        lam = lambdas[t % len(lambdas)]
        err = gradient_relative_error(Z, Zt, W, labels, params, lam, tau)
        tally.add(err < 1e-5, err)
    return [tally.result()]


CHECKS = {"sphere": check_sphere, "drift": check_drift, "bounds": check_bounds, "grad": check_grad}


def run(suite="all", trials=None, seed=0) -> List[PropertyResult]:
    names = SUITES if suite == "all" else (suite,)
    out = []
    for name in names:
        n = trials if trials is not None else DEFAULT_TRIALS[name]
        out.extend(CHECKS[name](n, seed))
    return out
