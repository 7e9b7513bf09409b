"""Probability measures on the circle stored as bin weights on a uniform grid.

Inside each bin the mass is spread uniformly, so the (lifted) distribution
function is piecewise linear and pushforwards can be computed exactly from
preimages of bin boundaries.
"""
import numpy as np

from .errors import PreconditionError


class CircleMeasure:
    def __init__(self, weights, atoms=None, normalize=False):
        w = np.asarray(weights, dtype=float).copy()
        if np.any(w < -1e-15):
            raise PreconditionError("weights must be nonnegative")
        w = np.maximum(w, 0.0)
        atoms = [(float(x) % 1.0, float(m)) for x, m in (atoms or [])]
        tot = w.sum() + sum(m for _, m in atoms)
        if normalize:
            w = w / tot
            atoms = [(x, m / tot) for x, m in atoms]
        elif abs(tot - 1) > 1e-12:
            raise PreconditionError(f"total mass {tot!r} differs from 1")
        self.weights = w
        self.atoms = atoms
        self.N = len(w)
        self._cum = np.concatenate([[0.0], np.cumsum(w)])

    @property
    def grid_size(self):
        return self.N

    def total(self):
        return float(self.weights.sum() + sum(m for _, m in self.atoms))

    def cdf(self, x):
        """Lifted grid distribution function: C(x+1) = C(x) + grid mass."""
        x = np.asarray(x, dtype=float)
        k = np.floor(x)
        t = (x - k) * self.N
        i = np.minimum(np.floor(t).astype(np.int64), self.N - 1)
        frac = t - i
        return k * self._cum[-1] + self._cum[i] + frac * self.weights[i]

    def arc_mass(self, a, b):
        """Mass of the arc [a, b) (lift coordinates, 0 <= b - a <= 1)."""
        m = float(self.cdf(b) - self.cdf(a))
        for x, am in self.atoms:
            if (x - a) % 1.0 < (b - a) or (b - a) >= 1:
                m += am
        return m

    def pushforward(self, f):
        edges = np.arange(self.N + 1) / self.N
        pre = f.inv(edges)
        # keep the lifted preimages increasing from a base in [0,1)
        pre = pre - np.floor(pre[0])
        c = self.cdf(pre)
        w = np.diff(c)
        atoms = [(float(f(np.array(x))) % 1.0, m) for x, m in self.atoms]
        return CircleMeasure(w, atoms, normalize=False) if abs(w.sum() + sum(m for _, m in atoms) - 1) <= 1e-12 \
            else CircleMeasure(w, atoms, normalize=True)

    def integrate(self, psi, sub=8):
        """int psi dmu using sub-sampled bin midpoints (grid part) plus atoms."""
        N = self.N
        u = (np.arange(N * sub) + 0.5) / (N * sub)
        v = np.asarray(psi(u), dtype=float).reshape(N, sub).mean(axis=1)
        return float(v @ self.weights + sum(m * psi(np.array(x)) for x, m in self.atoms))

    def l1(self, other):
        if self.N != other.N:
            raise PreconditionError("grid sizes differ")
        return float(np.sum(np.abs(self.weights - other.weights)))

    def sample(self, rng, n):
        idx = rng.choice(self.N, size=n, p=self.weights / self.weights.sum())
        return (idx + rng.random(n)) / self.N

    def median_point(self):
        c = self._cum / self._cum[-1]
        i = int(np.searchsorted(c, 0.5)) - 1
        i = min(max(i, 0), self.N - 1)
        w = self.weights[i]
        frac = 0.5 if w == 0 else (0.5 - c[i]) / (w / self._cum[-1])
        return (i + frac) / self.N

    def smallest_arc(self, mass):
        """(center, length) of the shortest grid arc carrying at least ``mass``."""
        w = self.weights
        cum = np.concatenate([[0.0], np.cumsum(np.concatenate([w, w]))])
        lo, hi = 1, self.N
        best_i = 0
        while lo < hi:
            L = (lo + hi) // 2
            s = cum[L:L + self.N] - cum[:self.N]
            if s.max() >= mass - 1e-15:
                hi = L
            else:
                lo = L + 1
        s = cum[lo:lo + self.N] - cum[:self.N]
        best_i = int(np.argmax(s))
        return ((best_i + lo / 2) / self.N) % 1.0, lo / self.N

    def as_dict(self):
        return {"grid": self.N, "weights": self.weights.tolist(),
                "atoms": [[x, m] for x, m in self.atoms]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["weights"], d.get("atoms"))


def lebesgue(N=4096):
    return CircleMeasure(np.full(N, 1.0 / N))


def from_density(rho, N=4096, sub=8):
    u = (np.arange(N * sub) + 0.5) / (N * sub)
    w = np.asarray(rho(u), dtype=float).reshape(N, sub).mean(axis=1)
    return CircleMeasure(w, normalize=True)


def point_mass_bin(x, N=4096):
    """Grid measure concentrated on the bin containing x."""
    w = np.zeros(N)
    w[int((x % 1.0) * N) % N] = 1.0
    return CircleMeasure(w)


def invariant_measure(f, N=4096, iters=1000, mu0=None):
    """Cesaro average of the pushforwards of mu0 (Bogolioubov-Krylov)."""
    mu = mu0 or lebesgue(N)
    acc = np.zeros(N)
    for _ in range(iters):
        acc += mu.weights
        mu = mu.pushforward(f)
    return CircleMeasure(acc / iters, normalize=True)
