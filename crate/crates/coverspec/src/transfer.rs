//! Fundamental solutions of the edge ODE and their boundary data.
//!
//! On an edge of length `ℓ` with potential `W`, the equation
//! `-h″ + W h = λ h` has a two-dimensional solution space spanned by the
//! real basis fixed by initial conditions at the traversal origin:
//!
//! ```text
//! f(0) = 1, f′(0) = 0        g(0) = 0, g′(0) = 1
//! ```
//!
//! Everything the vertex-condition machinery needs about an edge is the
//! boundary data `(f(ℓ), f′(ℓ), g(ℓ), g′(ℓ))` of this basis, one sample per
//! `(edge, orientation, λ)`. The Wronskian `f g′ − f′ g ≡ 1` is conserved by
//! the flow and doubles as the integration error metric. Traversing the
//! same edge backwards replaces `W(x)` by `W(ℓ − x)`; the two orientations
//! are linked by the identities
//!
//! ```text
//! f(ℓ) = ǧ′(ℓ),    g(ℓ) = ǧ(ℓ),    f′(ℓ) = f̌′(ℓ)
//! ```
//!
//! (checked numerically rather than assumed), so a reversed sample is a
//! view: `(g′(ℓ), f′(ℓ), g(ℓ), f(ℓ))` of the forward one.

use crate::error::{Error, Result};
use crate::graph::{EdgeView, Potential};

/// Absolute integration tolerance per unit of edge length for the sampled
/// (piecewise-linear) potential path. Chosen so that accumulated drift
/// stays well inside `WRONSKIAN_TOL` on desk-scale edges; the analytic
/// cross-check pins the realized accuracy at 1e-12.
pub const INTEGRATION_TOL_PER_UNIT: f64 = 1e-12;

/// Half-width of the `λ ≈ W` branch switch for constant potentials: below
/// this the trigonometric/hyperbolic closed forms lose digits to 0/0 and
/// the series forms of `cos(kx)` and `sin(kx)/k` in powers of `q = λ − W`
/// take over.
pub const SERIES_BRANCH_WIDTH: f64 = 1e-12;

/// Conservation tolerance for the Wronskian `f g′ − f′ g = 1`.
pub const WRONSKIAN_TOL: f64 = 1e-10;

/// Tolerance for the forward/reversed orientation identities.
pub const ORIENTATION_TOL: f64 = 1e-9;

/// Relative accuracy to which edge Dirichlet eigenvalues are bisected.
pub const ROOT_REL_TOL: f64 = 1e-11;

/// Witness threshold for a Dirichlet eigenvalue: `|g(ℓ)| < tol·max(1, |g′(ℓ)|)`.
pub const DIRICHLET_ROOT_TOL: f64 = 1e-9;

/// Traversal direction of an edge relative to its canonical orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Reversed,
}

/// Boundary data of the fundamental basis at the far end of one traversal:
/// `(f(ℓ), f′(ℓ), g(ℓ), g′(ℓ))`.
#[derive(Clone, Copy, Debug)]
pub struct TransferSample {
    pub f_l: f64,
    pub df_l: f64,
    pub g_l: f64,
    pub dg_l: f64,
}

impl TransferSample {
    /// `f g′ − f′ g`, identically 1 for exact solutions.
    pub fn wronskian(&self) -> f64 {
        self.f_l * self.dg_l - self.df_l * self.g_l
    }

    /// The sample of the opposite traversal, by the orientation identities.
    pub fn reversed_view(&self) -> TransferSample {
        TransferSample {
            f_l: self.dg_l,
            df_l: self.df_l,
            g_l: self.g_l,
            dg_l: self.f_l,
        }
    }
}

/// A solution on one edge in the fundamental basis of a chosen traversal:
/// `h = a·f + b·g`, so `h(0) = a` and `h′(0) = b`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeSolution {
    pub a: f64,
    pub b: f64,
    pub orientation: Orientation,
}

/// Fundamental matrix of the constant-potential equation at coordinate `x`,
/// as `[f, f′, g, g′]` with `q = λ − W`. Uses the series branch near
/// `q = 0`; elsewhere `f = cos(kx)` / `cosh(κx)` and `g = sin(kx)/k` /
/// `sinh(κx)/κ`. In all branches `g′ = f` and `f′ = −q·g`.
fn constant_fundamental(q: f64, x: f64) -> [f64; 4] {
    let (f, g) = if q.abs() < SERIES_BRANCH_WIDTH {
        let qx2 = q * x * x;
        (
            1.0 - qx2 / 2.0 + qx2 * qx2 / 24.0,
            x * (1.0 - qx2 / 6.0 + qx2 * qx2 / 120.0),
        )
    } else if q > 0.0 {
        let k = q.sqrt();
        ((k * x).cos(), (k * x).sin() / k)
    } else {
        let k = (-q).sqrt();
        ((k * x).cosh(), (k * x).sinh() / k)
    };
    [f, -q * g, g, f]
}

/// Multiply the propagator step `m` (fundamental matrix of one segment)
/// onto the accumulated state `[f, f′, g, g′]`, treating `(f, f′)` and
/// `(g, g′)` as the two columns being propagated.
fn propagate(state: [f64; 4], m: [f64; 4]) -> [f64; 4] {
    let [mf, mdf, mg, mdg] = m;
    [
        mf * state[0] + mg * state[1],
        mdf * state[0] + mdg * state[1],
        mf * state[2] + mg * state[3],
        mdf * state[2] + mdg * state[3],
    ]
}

/// One linear-potential piece of a traversal, in traversal coordinates.
/// `integrate` records whether the piece must go through the integrator:
/// sampled potentials always do, even on flat stretches, so that the
/// integration path and not a shortcut is what analytic cross-checks
/// validate. Constant-by-construction pieces use the closed form.
#[derive(Clone, Copy)]
struct Segment {
    x0: f64,
    x1: f64,
    w0: f64,
    w1: f64,
    integrate: bool,
}

/// Segments of one traversal of an edge. Traversing backwards mirrors the
/// coordinates (`x ↦ ℓ − x`) and swaps each piece's endpoint values.
fn segments(edge: EdgeView, orientation: Orientation) -> Vec<Segment> {
    let len = edge.len;
    let raw: Vec<Segment> = match edge.potential {
        Potential::Zero => vec![Segment {
            x0: 0.0,
            x1: len,
            w0: 0.0,
            w1: 0.0,
            integrate: false,
        }],
        Potential::Constant { value } => vec![Segment {
            x0: 0.0,
            x1: len,
            w0: *value,
            w1: *value,
            integrate: false,
        }],
        Potential::PiecewiseConstant {
            breakpoints,
            values,
        } => {
            let mut cuts = vec![0.0];
            cuts.extend_from_slice(breakpoints);
            cuts.push(len);
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| Segment {
                    x0: cuts[i],
                    x1: cuts[i + 1],
                    w0: v,
                    w1: v,
                    integrate: false,
                })
                .collect()
        }
        Potential::Sampled { grid, values } => grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| Segment {
                x0: x[0],
                x1: x[1],
                w0: v[0],
                w1: v[1],
                integrate: true,
            })
            .collect(),
    };
    match orientation {
        Orientation::Forward => raw,
        Orientation::Reversed => raw
            .into_iter()
            .rev()
            .map(|s| Segment {
                x0: len - s.x1,
                x1: len - s.x0,
                w0: s.w1,
                w1: s.w0,
                integrate: s.integrate,
            })
            .collect(),
    }
}

/// Integrate the fundamental system across one linear-potential segment
/// from `x0` to `x1`, continuing from `state`. Classic fourth-order
/// Runge-Kutta with step doubling: each step is computed once at `h` and
/// once as two steps of `h/2`; the difference drives both the local
/// Richardson correction and the step-size controller.
fn rk4_segment(
    state: [f64; 4],
    (x0, x1): (f64, f64),
    (w0, w1): (f64, f64),
    edge_id: &str,
) -> Result<[f64; 4]> {
    #[inline]
    fn rhs(x: f64, y: [f64; 4], lam_minus: impl Fn(f64) -> f64) -> [f64; 4] {
        let c = lam_minus(x);
        [y[1], c * y[0], y[3], c * y[2]]
    }
    // rhs uses W(x) − λ folded into one closure; the caller bakes λ in.
    let seg = x1 - x0;
    if seg <= 0.0 {
        return Ok(state);
    }
    let slope = (w1 - w0) / seg;
    // The closure receives the potential-minus-λ shift through `w0` having
    // already absorbed −λ (see caller).
    let coeff = move |x: f64| w0 + slope * (x - x0);

    let step_once = |x: f64, y: [f64; 4], h: f64| -> [f64; 4] {
        let k1 = rhs(x, y, coeff);
        let add = |y: [f64; 4], k: [f64; 4], s: f64| {
            [
                y[0] + s * k[0],
                y[1] + s * k[1],
                y[2] + s * k[2],
                y[3] + s * k[3],
            ]
        };
        let k2 = rhs(x + h / 2.0, add(y, k1, h / 2.0), coeff);
        let k3 = rhs(x + h / 2.0, add(y, k2, h / 2.0), coeff);
        let k4 = rhs(x + h, add(y, k3, h), coeff);
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            y[3] + h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        ]
    };

    let mut y = state;
    let mut x = x0;
    let mut h = seg / 8.0;
    let h_min = seg * 1e-13;
    while x < x1 {
        if h < h_min {
            return Err(Error::IntegrationFailure {
                edge: edge_id.to_owned(),
                x,
            });
        }
        let clamped = x + h >= x1;
        if clamped {
            h = x1 - x;
        }
        let full = step_once(x, y, h);
        let half = step_once(x, y, h / 2.0);
        let double = step_once(x + h / 2.0, half, h / 2.0);
        let mut err = 0.0f64;
        let mut scale = 1.0f64;
        for i in 0..4 {
            err = err.max((full[i] - double[i]).abs());
            scale = scale.max(y[i].abs());
        }
        err /= 15.0;
        // The full-vs-double comparison bottoms out at a few ulps of the
        // state, so the budget keeps a roundoff floor; without it a clamped
        // final step of microscopic width rejects forever.
        let budget = INTEGRATION_TOL_PER_UNIT * h + 16.0 * f64::EPSILON * scale;
        if err <= budget {
            // Local Richardson extrapolation: one order beyond RK4.
            for i in 0..4 {
                y[i] = double[i] + (double[i] - full[i]) / 15.0;
            }
            x = if clamped { x1 } else { x + h };
            let grow = if err == 0.0 {
                5.0
            } else {
                0.9 * (budget / err).powf(0.2)
            };
            h *= grow.clamp(0.2, 5.0);
        } else {
            h *= (0.9 * (budget / err).powf(0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(y)
}

/// Fundamental data `[f, f′, g, g′]` at traversal coordinate `x ∈ [0, ℓ]`.
pub fn fundamental_at(
    edge: EdgeView,
    orientation: Orientation,
    lambda: f64,
    x: f64,
) -> Result<[f64; 4]> {
    if !(0.0..=edge.len).contains(&x) {
        return Err(Error::InvalidGraph {
            reason: format!(
                "coordinate {x} outside [0, {}] on edge `{}`",
                edge.len, edge.id
            ),
        });
    }
    let mut state = [1.0, 0.0, 0.0, 1.0];
    for seg in segments(edge, orientation) {
        if x <= seg.x0 {
            break;
        }
        let stop = x.min(seg.x1);
        if seg.integrate {
            // Fold λ into the potential values once; on a partial segment
            // the endpoint value is interpolated so the slope is preserved.
            let w_stop = if stop == seg.x1 {
                seg.w1
            } else {
                seg.w0 + (seg.w1 - seg.w0) * (stop - seg.x0) / (seg.x1 - seg.x0)
            };
            state = rk4_segment(
                state,
                (seg.x0, stop),
                (seg.w0 - lambda, w_stop - lambda),
                edge.id,
            )?;
        } else {
            let m = constant_fundamental(lambda - seg.w0, stop - seg.x0);
            state = propagate(state, m);
        }
        if stop == x {
            break;
        }
    }
    Ok(state)
}

/// Boundary data of one traversal of an edge at spectral parameter `λ`.
pub fn transfer(edge: EdgeView, orientation: Orientation, lambda: f64) -> Result<TransferSample> {
    let [f_l, df_l, g_l, dg_l] = fundamental_at(edge, orientation, lambda, edge.len)?;
    Ok(TransferSample {
        f_l,
        df_l,
        g_l,
        dg_l,
    })
}

/// Value and derivative of `a·f + b·g` at traversal coordinate `x`.
pub fn evaluate(edge: EdgeView, sol: &EdgeSolution, lambda: f64, x: f64) -> Result<(f64, f64)> {
    let [f, df, g, dg] = fundamental_at(edge, sol.orientation, lambda, x)?;
    Ok((sol.a * f + sol.b * g, sol.a * df + sol.b * dg))
}

/// Compute both traversals independently and check the orientation
/// identities `f(ℓ) = ǧ′(ℓ)`, `g(ℓ) = ǧ(ℓ)`, `f′(ℓ) = f̌′(ℓ)`. Returns the
/// verdict at [`ORIENTATION_TOL`] together with the three residuals.
pub fn reverse_consistency(edge: EdgeView, lambda: f64) -> Result<(bool, [f64; 3])> {
    let fwd = transfer(edge, Orientation::Forward, lambda)?;
    let rev = transfer(edge, Orientation::Reversed, lambda)?;
    let residuals = [
        (fwd.f_l - rev.dg_l).abs(),
        (fwd.g_l - rev.g_l).abs(),
        (fwd.df_l - rev.df_l).abs(),
    ];
    Ok((residuals.iter().all(|&r| r < ORIENTATION_TOL), residuals))
}

/// All `λ` in `(a, b]` with `g_λ(ℓ) = 0`: the Dirichlet spectrum of the
/// single edge. Sturm bounds place the n-th eigenvalue inside
/// `[π²n²/ℓ² + min W, π²n²/ℓ² + max W]`, which yields both the bracketing
/// grid (consecutive roots are separated by at least `3π²/ℓ²` minus the
/// potential spread) and a count corridor the result must satisfy; a count
/// outside the corridor is reported, not repaired. Roots are simple, so
/// every root shows as a sign change, bisected to [`ROOT_REL_TOL`].
pub fn edge_dirichlet_eigenvalues(edge: EdgeView, window: (f64, f64)) -> Result<Vec<f64>> {
    let (a, b) = window;
    if !(a < b && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidWindow { a, b });
    }
    let (w_min, w_max) = edge.potential.bounds();
    let base = std::f64::consts::PI.powi(2) / (edge.len * edge.len);

    // Sturm count corridor for (a, b].
    let mut lo_count = 0usize;
    let mut hi_count = 0usize;
    let mut n = 1usize;
    loop {
        let center = base * (n * n) as f64;
        if center + w_min > b {
            break;
        }
        if center + w_min > a && center + w_max <= b {
            lo_count += 1;
        }
        if center + w_max > a {
            hi_count += 1;
        }
        n += 1;
    }
    if hi_count == 0 {
        return Ok(Vec::new());
    }

    let g_at = |lam: f64| -> Result<(f64, f64)> {
        let t = transfer(edge, Orientation::Forward, lam)?;
        Ok((t.g_l, t.dg_l))
    };

    // Bracketing grid: consecutive Sturm intervals are separated by at
    // least base·(2n+1) − spread ≥ 3·base − spread; fall back to a fine
    // fixed step if the potential spread swallows that gap.
    let spread = w_max - w_min;
    let gap = 3.0 * base - spread;
    let step = if gap > base / 2.0 {
        0.9 * gap
    } else {
        base / 4.0
    };

    let mut roots = Vec::new();
    let mut x0 = a;
    let (mut g0, _) = g_at(x0)?;
    while x0 < b {
        let x1 = (x0 + step).min(b);
        let (g1, _) = g_at(x1)?;
        // A root exactly on a grid node is recorded in the iteration where
        // it appears as x1; g0 == 0 means it was already counted (or sits
        // at the excluded left endpoint a).
        if g0 != 0.0 && (g1 == 0.0 || g0.signum() != g1.signum()) {
            let (mut lo, mut hi) = (x0, x1);
            let mut flo = g0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if hi - lo <= ROOT_REL_TOL * mid.abs().max(1.0) {
                    break;
                }
                let (gm, _) = g_at(mid)?;
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if gm.signum() == flo.signum() {
                    lo = mid;
                    flo = gm;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            let (g_r, dg_r) = g_at(root)?;
            if g_r.abs() >= DIRICHLET_ROOT_TOL * dg_r.abs().max(1.0) {
                return Err(Error::SturmCountViolation {
                    edge: edge.id.to_owned(),
                    found: roots.len(),
                    lo: lo_count,
                    hi: hi_count,
                    a,
                    b,
                });
            }
            roots.push(root);
        }
        x0 = x1;
        g0 = g1;
    }

    if roots.len() < lo_count || roots.len() > hi_count {
        return Err(Error::SturmCountViolation {
            edge: edge.id.to_owned(),
            found: roots.len(),
            lo: lo_count,
            hi: hi_count,
            a,
            b,
        });
    }
    Ok(roots)
}
