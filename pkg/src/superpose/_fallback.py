"""Pure-Python/numpy implementations of the numerical kernels.

Arithmetic is performed in the same order as the compiled kernels in
``_kernels.pyx`` so that both backends produce bit-identical results.
"""
import numpy as np

ADD, SUB, MUL, DIV, VAR, CONST = 0, 1, 2, 3, 4, 5

DIV_EPS = 1e-9
CLAMP = 1e12

BACKEND = "python"


def eval_program(codes, args, X, stack_size):
    """Evaluate a prefix-encoded program on every row of ``X``.

    Parameters
    ----------
    codes : int32 array
        Opcode per node, prefix order.
    args : float64 array
        Column index (``VAR``) or literal value (``CONST``); unused for
        binary operators.
    X : (n, m) float64 array
    stack_size : int
        Upper bound on the evaluation stack, computed by the encoder.

    Returns
    -------
    (n,) float64 array
    """
    n = X.shape[0]
    stack = []
    for i in range(len(codes) - 1, -1, -1):
        code = codes[i]
        if code == VAR:
            stack.append(X[:, int(args[i])])
        elif code == CONST:
            stack.append(np.full(n, args[i]))
        else:
            a = stack.pop()
            b = stack.pop()
            if code == ADD:
                v = a + b
            elif code == SUB:
                v = a - b
            elif code == MUL:
                v = a * b
            else:
                v = np.ones(n)
                np.divide(a, b, out=v, where=np.abs(b) > DIV_EPS)
            np.clip(v, -CLAMP, CLAMP, out=v)
            stack.append(v)
    return np.array(stack[0], dtype=np.float64)


def enet_cd(G, c, lambda1, lambda2, tol, max_iters, b):
    """Cyclic coordinate descent for the elastic net in covariance form.

    Minimises ``b'Gb - 2c'b + lambda1*|b|_1 + lambda2*|b|_2^2`` in place.
    Returns the number of sweeps performed.
    """
    p = len(c)
    Gl = G.tolist()
    cl = c.tolist()
    bl = b.tolist()
    half = 0.5 * lambda1
    n_iter = 0
    for it in range(max_iters):
        max_delta = 0.0
        for j in range(p):
            row = Gl[j]
            rho = cl[j]
            for k in range(p):
                if k != j:
                    rho -= row[k] * bl[k]
            if rho > half:
                new = (rho - half) / (row[j] + lambda2)
            elif rho < -half:
                new = (rho + half) / (row[j] + lambda2)
            else:
                new = 0.0
            delta = abs(new - bl[j])
            if delta > max_delta:
                max_delta = delta
            bl[j] = new
        n_iter = it + 1
        if max_delta < tol:
            break
    b[:] = bl
    return n_iter
