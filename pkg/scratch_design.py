"""Map instance-design space: exact weight ESS via conjugate sampling."""
import numpy as np

rng = np.random.default_rng(0)

def exact_ess(y, x, i_star, N=3000):
    """Weight ESS per case using exact draws of the pilot joint posterior."""
    keep = np.arange(len(y)) != i_star
    a, s = y[keep].sum(), x[keep].sum()
    theta = rng.gamma(a, 1.0 / s, N)
    x_t = rng.gamma(y[i_star] + 1.0, 1.0 / theta)
    out = {}
    for i in range(len(y)):
        if i == i_star:
            continue
        # log w = const(theta) + (y_i - y_istar) * log(x_tilde); theta const part:
        lw = (
            y[i_star] * np.log(theta * x[i_star]) - theta * x[i_star]
            + y[i] * np.log(theta * x_t) - theta * x_t
            - (y[i_star] * np.log(theta * x_t) - theta * x_t)
            - (y[i] * np.log(theta * x[i]) - theta * x[i])
        )
        w = np.exp(lw - lw.max())
        w /= w.sum()
        out[i] = 1.0 / np.square(w).sum()
    return out

def design_stats(theta_lo, theta_hi, x_lo, x_hi, trials=300):
    worst = []
    for _ in range(trials):
        n = int(rng.integers(5, 11))
        theta = rng.uniform(theta_lo, theta_hi)
        while True:
            x = rng.uniform(x_lo, x_hi, n)
            y = rng.poisson(theta * x)
            if y.max() <= 20 and (y.sum() - y).min() >= 1:
                break
        med = np.median(x)
        i_star = int(np.argmin(np.abs(x - med)))
        worst.append(min(exact_ess(y, x, i_star).values()))
    worst = np.array(worst)
    q = np.percentile(worst, [1, 5, 25, 50])
    print(f"theta U({theta_lo},{theta_hi}) x U({x_lo},{x_hi}): "
          f"worst-case ESS pct [1,5,25,50] = {np.round(q).astype(int)}, "
          f"frac<150: {(worst<150).mean():.3f}, frac<300: {(worst<300).mean():.3f}")

design_stats(3, 6, 1, 2)
design_stats(4, 7, 1.2, 1.8)
design_stats(5, 8, 1.3, 1.7)
design_stats(2, 4, 1, 2)
design_stats(6, 9, 1.4, 1.6)
