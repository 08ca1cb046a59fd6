"""Independent density-matrix reference for Werner-state swap and distillation.

States are built explicitly as 4x4 matrices and the operations are applied
as projections and unitaries on the joint 4-qubit space.
"""

import numpy as np

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
BELL = {
    "phi+": np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2),
    "phi-": np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2),
    "psi+": np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2),
    "psi-": np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2),
}
I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
# Pauli on the far qubit that maps each Bell outcome back to phi+
CORRECTION = {"phi+": I2, "phi-": Z, "psi+": X, "psi-": X @ Z}


def werner(f: float) -> np.ndarray:
    proj = np.outer(PHI_PLUS, PHI_PLUS.conj())
    return f * proj + (1 - f) / 3 * (np.eye(4) - proj)


def fidelity(rho: np.ndarray) -> float:
    return float(np.real(PHI_PLUS.conj() @ rho @ PHI_PLUS))


def _kron(*ms):
    out = np.array([[1]], dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def _partial_trace_middle(rho16: np.ndarray) -> np.ndarray:
    """Trace out qubits 1 and 2 of a 4-qubit (A, B1, B2, C) operator."""
    r = rho16.reshape([2] * 8)
    # indices: a b1 b2 c ; a' b1' b2' c'
    return np.einsum("abcdebcf->adef", r).reshape(4, 4)


def swap_oracle(f1: float, f2: float) -> float:
    """Swap A-B1 and B2-C by a Bell measurement on (B1, B2), averaged over
    outcomes after the Pauli correction on C."""
    rho = np.kron(werner(f1), werner(f2))
    total_p, total_f = 0.0, 0.0
    for proj, corr in _SWAP_STEPS:
        rho_ac = _partial_trace_middle(proj @ rho @ proj)
        total_p += float(np.real(np.trace(rho_ac)))
        total_f += fidelity(corr @ rho_ac @ corr.conj().T)
    return total_f / total_p


def _cnot(n: int, control: int, target: int) -> np.ndarray:
    dim = 2 ** n
    u = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        bits = [(i >> (n - 1 - k)) & 1 for k in range(n)]
        if bits[control]:
            bits[target] ^= 1
        j = sum(b << (n - 1 - k) for k, b in enumerate(bits))
        u[j, i] = 1
    return u


_BILATERAL_CNOT = _cnot(4, 0, 2) @ _cnot(4, 1, 3)
_SWAP_STEPS = [(_kron(I2, np.outer(b, b.conj()), I2), np.kron(I2, CORRECTION[name]))
               for name, b in BELL.items()]


def distill_oracle(f1: float, f2: float) -> tuple[float, float]:
    """Two-to-one distillation: bilateral CNOT from pair (A1, B1) onto pair
    (A2, B2), Z-measure the second pair, keep agreeing outcomes.

    Returns (output fidelity, success probability).
    """
    # qubit order A1 B1 A2 B2
    rho = np.kron(werner(f1), werner(f2))
    rho = _BILATERAL_CNOT @ rho @ _BILATERAL_CNOT.conj().T
    r = rho.reshape([2] * 8)
    kept = np.zeros((4, 4), dtype=complex)
    for m in (0, 1):
        kept += r[:, :, m, m, :, :, m, m].reshape(4, 4)
    p = float(np.real(np.trace(kept)))
    return fidelity(kept) / p, p


def bisect_pre_swap(f_target: float, tol: float = 1e-13) -> float:
    """Smallest f with f*f + (1-f)^2/3 >= f_target, by bisection."""
    lo, hi = 0.25, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if mid * mid + (1 - mid) ** 2 / 3 < f_target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def _werner_batch(fs: np.ndarray) -> np.ndarray:
    proj = np.outer(PHI_PLUS, PHI_PLUS.conj())
    rest = np.eye(4) - proj
    fs = np.asarray(fs, dtype=float)[:, None, None]
    return fs * proj + (1 - fs) / 3 * rest


def _kron_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    return np.einsum("nij,nkl->nikjl", a, b).reshape(n, 16, 16)


def _fidelity_batch(rho: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("i,nij,j->n", PHI_PLUS.conj(), rho, PHI_PLUS))


def swap_oracle_batch(f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    """Vectorized swap_oracle over paired arrays of fidelities."""
    rho = _kron_batch(_werner_batch(f1), _werner_batch(f2))
    total_p = np.zeros(len(rho))
    total_f = np.zeros(len(rho))
    for proj, corr in _SWAP_STEPS:
        post = proj @ rho @ proj
        r = post.reshape((-1,) + (2,) * 8)
        rho_ac = np.einsum("nabcdebcf->nadef", r).reshape(-1, 4, 4)
        total_p += np.real(np.trace(rho_ac, axis1=1, axis2=2))
        total_f += _fidelity_batch(corr @ rho_ac @ corr.conj().T)
    return total_f / total_p


def distill_oracle_batch(f1: np.ndarray, f2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized distill_oracle over paired arrays of fidelities."""
    rho = _kron_batch(_werner_batch(f1), _werner_batch(f2))
    rho = _BILATERAL_CNOT @ rho @ _BILATERAL_CNOT.conj().T
    r = rho.reshape((-1,) + (2,) * 8)
    kept = sum(r[:, :, :, m, m, :, :, m, m] for m in (0, 1)).reshape(-1, 4, 4)
    p = np.real(np.trace(kept, axis1=1, axis2=2))
    return _fidelity_batch(kept) / p, p
