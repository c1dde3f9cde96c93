//! Dormand–Prince 5(4) integration with post-step projection onto a
//! constraint manifold, uniform output grids, frozen-step replay and
//! upward zero-crossing events.

use crate::error::{Error, Result};

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> Result<[f64; N]>;

    /// Orthogonal projection back onto the constraint manifold.
    fn project(&self, _y: &mut [f64; N]) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: 0.25,
            h_min: 1e-12,
        }
    }
}

impl Tolerances {
    /// Tight setting used where trajectories are differentiated numerically
    /// or compared across independent routes.
    pub fn precise() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-13,
            ..Self::default()
        }
    }

    pub fn with_rtol(self, rtol: f64) -> Self {
        Self {
            rtol,
            atol: rtol * 1e-2,
            ..self
        }
    }

    pub fn with_h_max(self, h_max: f64) -> Self {
        Self { h_max, ..self }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Step<const N: usize> {
    y: [f64; N],
    err: [f64; N],
}

fn dp5_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> Result<Step<N>> {
    let mut k = [[0.0; N]; 7];
    k[0] = sys.rhs(t, y)?;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        if s == 6 {
            // Stage 7 is evaluated at the fifth-order solution.
            k[6] = sys.rhs(t + h, &ys)?;
            let mut err = [0.0; N];
            for i in 0..N {
                err[i] = h * E.iter().zip(k.iter()).map(|(e, kk)| e * kk[i]).sum::<f64>();
            }
            return Ok(Step { y: ys, err });
        }
        k[s] = sys.rhs(t + C[s] * h, &ys)?;
    }
    unreachable!()
}

fn error_norm<const N: usize>(
    tol: &Tolerances,
    y0: &[f64; N],
    y1: &[f64; N],
    err: &[f64; N],
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Single projected DP5 step without error control.
pub fn fixed_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> Result<[f64; N]> {
    let mut out = dp5_step(sys, t, y, h)?.y;
    sys.project(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    /// Record every accepted step.
    EveryStep,
    /// Record `n + 1` equally spaced samples; steps are clamped to land on them.
    Uniform(usize),
}

#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    /// Every accepted step boundary, for frozen-step replay.
    pub steps: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl<const N: usize> Solution<N> {
    pub fn last(&self) -> &[f64; N] {
        self.y
            .last()
            .expect("solutions hold at least the initial state")
    }
}

const MAX_STEPS: usize = 5_000_000;

/// Adaptive integration from `t0` to `t1` (either direction).
pub fn integrate<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: &[f64; N],
    t1: f64,
    tol: &Tolerances,
    output: Output,
) -> Result<Solution<N>> {
    let mut sol = Solution {
        t: vec![t0],
        y: vec![*y0],
        steps: vec![t0],
        accepted: 0,
        rejected: 0,
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let grid = match output {
        Output::Uniform(n) => {
            let n = n.max(1);
            (1..=n)
                .map(|k| {
                    if k == n {
                        t1
                    } else {
                        t0 + (t1 - t0) * k as f64 / n as f64
                    }
                })
                .collect()
        }
        Output::EveryStep => vec![t1],
    };
    let mut next_grid = 0;
    let mut t = t0;
    let mut y = *y0;
    let mut h = (0.01f64).min(tol.h_max).min(span);
    while next_grid < grid.len() {
        if sol.accepted + sol.rejected > MAX_STEPS {
            return Err(Error::StepUnderflow { t, h });
        }
        let target = grid[next_grid];
        let remaining = (target - t).abs();
        let landing = h >= remaining;
        let h_try = if landing { remaining } else { h };
        let step = dp5_step(sys, t, &y, dir * h_try)?;
        let err = error_norm(tol, &y, &step.y, &step.err);
        if err <= 1.0 || h_try <= tol.h_min {
            if !(err <= 1.0) && !err.is_finite() {
                return Err(Error::StepUnderflow { t, h: h_try });
            }
            t = if landing { target } else { t + dir * h_try };
            y = step.y;
            sys.project(&mut y);
            sol.accepted += 1;
            sol.steps.push(t);
            match output {
                Output::EveryStep => {
                    sol.t.push(t);
                    sol.y.push(y);
                }
                Output::Uniform(_) if landing => {
                    sol.t.push(t);
                    sol.y.push(y);
                }
                _ => {}
            }
            if landing {
                next_grid += 1;
            }
            // A clamped landing step keeps the current proposal.
            if !landing {
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (h_try * factor).min(tol.h_max);
            }
        } else {
            sol.rejected += 1;
            h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < tol.h_min {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    Ok(sol)
}

/// Re-run a recorded step sequence without error control. The resulting map
/// `y0 ↦ y(t_end)` is smooth in `y0`, which central differences require.
pub fn replay<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    steps: &[f64],
    y0: &[f64; N],
) -> Result<[f64; N]> {
    let mut y = *y0;
    for w in steps.windows(2) {
        y = fixed_step(sys, w[0], &y, w[1] - w[0])?;
    }
    Ok(y)
}

/// An upward zero-crossing of the event function.
#[derive(Debug, Clone, Copy)]
pub struct Crossing<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
}

/// Integrates forward (or backward, for `t_max < t0`) until the first upward
/// zero-crossing of `event` (negative before, non-negative after, in the
/// direction of integration) that satisfies `accept`. The crossing time is
/// refined by safeguarded secant/bisection on single steps from the start of
/// the bracketing step until the bracket is below `1e−14` relative.
pub fn integrate_to_event<S, Ev, Acc, const N: usize>(
    sys: &S,
    t0: f64,
    y0: &[f64; N],
    t_max: f64,
    tol: &Tolerances,
    event: Ev,
    accept: Acc,
) -> Result<Option<Crossing<N>>>
where
    S: OdeSystem<N>,
    Ev: Fn(&[f64; N]) -> f64,
    Acc: Fn(f64, &[f64; N]) -> bool,
{
    let dir = (t_max - t0).signum();
    let mut t = t0;
    let mut y = *y0;
    let mut g = event(&y);
    let mut h = (0.01f64).min(tol.h_max);
    let mut count = 0usize;
    while (t_max - t) * dir > 0.0 {
        count += 1;
        if count > MAX_STEPS {
            return Err(Error::StepUnderflow { t, h });
        }
        let h_try = h.min((t_max - t).abs());
        let step = dp5_step(sys, t, &y, dir * h_try)?;
        let err = error_norm(tol, &y, &step.y, &step.err);
        if !(err <= 1.0) && h_try > tol.h_min {
            h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < tol.h_min {
                return Err(Error::StepUnderflow { t, h });
            }
            continue;
        }
        let mut y_new = step.y;
        sys.project(&mut y_new);
        let g_new = event(&y_new);
        if g < 0.0 && g_new >= 0.0 {
            let (tc, yc) = refine_crossing(sys, t, &y, dir * h_try, g, g_new, &event)?;
            if accept(tc, &yc) {
                return Ok(Some(Crossing { t: tc, y: yc }));
            }
        }
        t += dir * h_try;
        y = y_new;
        g = g_new;
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h_try * factor).min(tol.h_max);
    }
    Ok(None)
}

fn refine_crossing<S: OdeSystem<N>, Ev: Fn(&[f64; N]) -> f64, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    h: f64,
    g0: f64,
    g1: f64,
    event: &Ev,
) -> Result<(f64, [f64; N])> {
    // Bracket in the fraction s ∈ [0, 1] of the step.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut glo, mut ghi) = (g0, g1);
    let mut best = (1.0, fixed_step(sys, t, y, h)?, g1.abs());
    let mut side = 0i32;
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        // Illinois-modified regula falsi, bisection if the secant stalls.
        let mut s = lo + (hi - lo) * (-glo) / (ghi - glo);
        if !(s > lo && s < hi) || !s.is_finite() {
            s = 0.5 * (lo + hi);
        }
        let ys = fixed_step(sys, t, y, h * s)?;
        let gs = event(&ys);
        if gs.abs() < best.2 || gs == 0.0 {
            best = (s, ys, gs.abs());
        }
        if gs == 0.0 {
            break;
        }
        if gs < 0.0 {
            lo = s;
            glo = gs;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = s;
            ghi = gs;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
    }
    Ok((t + h * best.0, best.1))
}
