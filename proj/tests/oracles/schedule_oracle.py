"""High-precision reference values for the diffusion schedule.

Recomputes the linear training schedule (T = 50, beta 1e-4 .. 0.035) and the
aligned timesteps of the fast sampling schedules with mpmath at 60 digits.
The printed constants are frozen into tests/test_schedule.cpp.
"""
import mpmath as mp

mp.mp.dps = 60


def linear_betas(T, lo, hi):
    lo, hi = mp.mpf(lo), mp.mpf(hi)
    return [lo + (hi - lo) * i / (T - 1) for i in range(T)]


def schedule(betas):
    abar, out = mp.mpf(1), []
    for i, b in enumerate(betas):
        prev = abar
        abar *= 1 - b
        post = (1 - prev) / (1 - abar) * b
        if i == 0:
            gamma = 1 / (2 * (1 - b))
        else:
            gamma = b * b / (2 * post * (1 - b) * (1 - abar))
        out.append(dict(beta=b, abar=abar, post=post, gamma=gamma))
    return out


def align(train, fast):
    r = [mp.sqrt(s["abar"]) for s in train]
    t_hat = []
    for s in schedule(fast):
        x = mp.sqrt(s["abar"])
        if x == r[0]:
            t_hat.append(mp.mpf(1))
            continue
        for t in range(len(r) - 1):
            if r[t + 1] <= x <= r[t]:
                t_hat.append(t + 1 + (r[t] - x) / (r[t] - r[t + 1]))
                break
        else:
            raise ValueError("outside training range")
    return t_hat


def main():
    train = schedule(linear_betas(50, "1e-4", "0.035"))
    for t in (1, 2, 10, 25, 50):
        s = train[t - 1]
        print(f"t={t:2d} abar={mp.nstr(s['abar'], 20)} post={mp.nstr(s['post'], 20)} "
              f"gamma={mp.nstr(s['gamma'], 20)}")
    fast6 = ["1e-4", "1e-3", "0.01", "0.05", "0.2", "0.35"]
    fast3 = ["0.05", "0.2", "0.35"]
    for name, betas in (("6", fast6), ("3", fast3)):
        sched = schedule([mp.mpf(b) for b in betas])
        t_hat = align(train, [mp.mpf(b) for b in betas])
        print(f"fast{name} abar_final={mp.nstr(sched[-1]['abar'], 20)} "
              f"t_hat={[mp.nstr(v, 20) for v in t_hat]}")


if __name__ == "__main__":
    main()
