//! Adaptive Dormand–Prince 5(4) integration with continuous (dense) output
//! and zero-crossing event detection.
//!
//! An integration session runs from `t0` until the earliest event crossing
//! or `t_max`, whichever comes first. Hybrid simulations chain sessions: the
//! caller applies its jump to the returned state and starts a new session,
//! listing the classes that just fired as refractory so they do not re-fire
//! on the manifold they were placed on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Largest step the controller may take (s).
    pub max_step: f64,
    /// Time localization tolerance of event roots (s).
    pub event_tol: f64,
    /// Time after a session start during which refractory event classes are
    /// ignored (s).
    pub refractory: f64,
    /// Hard cap on accepted plus rejected steps per session.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: 1e-7,
            rel_tol: 1e-5,
            max_step: 0.01,
            event_tol: 1e-9,
            refractory: 1e-3,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let fields = [
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
            ("max_step", self.max_step),
            ("event_tol", self.event_tol),
        ];
        for (key, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err((key, format!("must be finite and > 0, got {value}")));
            }
        }
        if !(self.refractory.is_finite() && self.refractory >= 0.0) {
            return Err(("refractory", format!("must be finite and >= 0, got {}", self.refractory)));
        }
        if self.max_steps == 0 {
            return Err(("max_steps", "must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("t = {t} outside dense segment [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("invalid integration span: t0 = {t0}, t_max = {t_max}")]
    InvalidSpan { t0: f64, t_max: f64 },
}

/// Crossing direction that triggers an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Negative to non-negative.
    Rising,
    /// Positive to non-positive.
    Falling,
    Any,
}

type EventFn<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N]) -> f64 + Send + Sync + 'a>;

/// Scalar event function with a class label and a direction filter.
pub struct EventSpec<'a, K, const N: usize> {
    pub id: K,
    pub direction: Direction,
    pub func: EventFn<'a, N>,
}

impl<'a, K, const N: usize> EventSpec<'a, K, N> {
    pub fn new(
        id: K,
        direction: Direction,
        func: impl Fn(f64, &[f64; N]) -> f64 + Send + Sync + 'a,
    ) -> Self {
        EventSpec {
            id,
            direction,
            func: Box::new(func),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64; N]) -> f64 {
        (self.func)(t, x)
    }
}

impl<K: std::fmt::Debug, const N: usize> std::fmt::Debug for EventSpec<'_, K, N> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventSpec")
            .field("id", &self.id)
            .field("direction", &self.direction)
            .finish_non_exhaustive()
    }
}

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
pub struct Segment<const N: usize> {
    t0: f64,
    t1: f64,
    end: f64,
    y0: [f64; N],
    y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    pub fn start(&self) -> f64 {
        self.t0
    }

    /// End of the valid range. Shorter than the step when an event cut it.
    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn eval(&self, t: f64) -> Result<[f64; N], IntegrationError> {
        dense_eval(self, t)
    }
}

/// Evaluates the fifth-order continuous extension of a step.
///
/// Step endpoints return the step states exactly.
pub fn dense_eval<const N: usize>(seg: &Segment<N>, t: f64) -> Result<[f64; N], IntegrationError> {
    if !(t >= seg.t0 && t <= seg.end) {
        return Err(IntegrationError::OutOfRange {
            t,
            start: seg.t0,
            end: seg.end,
        });
    }
    if t == seg.t0 {
        return Ok(seg.y0);
    }
    if t == seg.t1 {
        return Ok(seg.y1);
    }
    Ok(interpolate(seg, t))
}

fn interpolate<const N: usize>(seg: &Segment<N>, t: f64) -> [f64; N] {
    let s = (t - seg.t0) / (seg.t1 - seg.t0);
    let s1 = 1.0 - s;
    let [r1, r2, r3, r4, r5] = &seg.rcont;
    std::array::from_fn(|i| r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i]))))
}

/// An event that fired, with the sign its function takes after the crossing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fired<K> {
    pub id: K,
    pub rising: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<K, const N: usize> {
    pub t: f64,
    pub state: [f64; N],
    /// Events that fired at `t` (within the localization tolerance), in the
    /// order they were supplied. Empty when the time limit was reached.
    pub fired: Vec<Fired<K>>,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason<K> {
    Event(K),
    TimeLimit,
}

impl<K: Copy + PartialEq, const N: usize> Outcome<K, N> {
    pub fn reason(&self) -> StopReason<K> {
        self.fired
            .first()
            .map_or(StopReason::TimeLimit, |f| StopReason::Event(f.id))
    }

    pub fn has_fired(&self, id: K) -> bool {
        self.fired.iter().any(|f| f.id == id)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct StepResult<const N: usize> {
    y1: [f64; N],
    k7: [f64; N],
    err: [f64; N],
    rcont5: [f64; N],
}

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
}

fn dopri_step<F, const N: usize>(rhs: &mut F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64) -> StepResult<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k2 = rhs(t + C2 * h, &combine(y, h, &[(A21, k1)]));
    let k3 = rhs(t + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = rhs(t + C4 * h, &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = rhs(
        t + C5 * h,
        &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = rhs(
        t + h,
        &combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y1 = combine(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = rhs(t + h, &y1);
    let err = std::array::from_fn(|i| {
        h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
    });
    let rcont5 = std::array::from_fn(|i| {
        h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
    });
    StepResult { y1, k7, err, rcont5 }
}

/// Advances one fixed step of size `h` without error control. Used to verify
/// the convergence order.
pub fn fixed_step<F, const N: usize>(mut rhs: F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k1 = rhs(t, y);
    dopri_step(&mut rhs, t, y, &k1, h).y1
}

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], cfg: &IntegratorConfig) -> f64 {
    let sum: f64 = (0..N)
        .map(|i| {
            let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / N as f64).sqrt()
}

fn initial_step<F, const N: usize>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    cfg: &IntegratorConfig,
    span: f64,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let scale: [f64; N] = std::array::from_fn(|i| cfg.abs_tol + cfg.rel_tol * y0[i].abs());
    let norm = |v: &[f64; N]| {
        ((0..N).map(|i| (v[i] / scale[i]).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span).min(cfg.max_step);
    let y1 = combine(y0, h0, &[(1.0, f0)]);
    let f1 = rhs(t0 + h0, &y1);
    let df: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&df) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span).min(cfg.max_step)
}

/// Per-event detection state inside a session.
struct Watch {
    /// Time before which the event is ignored.
    armed_at: f64,
    /// Last evaluated point, once armed.
    last: Option<(f64, f64)>,
}

fn crossed(direction: Direction, ga: f64, gb: f64) -> bool {
    match direction {
        Direction::Rising => ga < 0.0 && gb >= 0.0,
        Direction::Falling => ga > 0.0 && gb <= 0.0,
        Direction::Any => (ga < 0.0 && gb >= 0.0) || (ga > 0.0 && gb <= 0.0),
    }
}

/// Brackets the crossing in `[a, b]` down to `tol` by alternating regula
/// falsi and bisection. Returns the right end, where the function has
/// already changed sign.
fn localize(g: impl Fn(f64) -> f64, mut a: f64, mut ga: f64, mut b: f64, mut gb: f64, tol: f64) -> f64 {
    let negative_before = ga < 0.0;
    let after = |v: f64| if negative_before { v >= 0.0 } else { v <= 0.0 };
    let mut iter = 0usize;
    while b - a > tol && iter < 400 {
        let width = b - a;
        let mut m = if iter.is_multiple_of(2) && gb != ga {
            b - gb * (b - a) / (gb - ga)
        } else {
            0.5 * (a + b)
        };
        // Keep the probe strictly inside so the bracket always shrinks.
        let guard = 0.01 * width;
        if !(m > a + guard && m < b - guard) {
            m = 0.5 * (a + b);
        }
        let gm = g(m);
        if after(gm) {
            b = m;
            gb = gm;
        } else {
            a = m;
            ga = gm;
        }
        iter += 1;
    }
    b
}

/// Integrates `ẋ = rhs(t, x)` from `(span.0, x0)` until the earliest event
/// crossing or `span.1`.
///
/// `refractory` lists event classes that are ignored during the first
/// `cfg.refractory` seconds of the session. `observer` is called for every
/// accepted step, with the last one truncated at the event time.
pub fn integrate_until_event<K, F, const N: usize>(
    mut rhs: F,
    x0: [f64; N],
    span: (f64, f64),
    events: &[EventSpec<'_, K, N>],
    cfg: &IntegratorConfig,
    refractory: &[K],
    observer: &mut dyn FnMut(&Segment<N>),
) -> Result<Outcome<K, N>, IntegrationError>
where
    K: Copy + PartialEq,
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let (t0, t_max) = span;
    if !(t0.is_finite() && t_max.is_finite() && t_max > t0) {
        return Err(IntegrationError::InvalidSpan { t0, t_max });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFiniteState { t: t0 });
    }

    let mut watches: Vec<Watch> = Vec::with_capacity(events.len());
    let mut immediate = Vec::new();
    for ev in events {
        let cooling = cfg.refractory > 0.0 && refractory.contains(&ev.id);
        if cooling {
            watches.push(Watch {
                armed_at: t0 + cfg.refractory,
                last: None,
            });
        } else {
            let g0 = ev.eval(t0, &x0);
            if g0 == 0.0 && ev.direction == Direction::Any {
                immediate.push(Fired { id: ev.id, rising: true });
            }
            watches.push(Watch {
                armed_at: t0,
                last: Some((t0, g0)),
            });
        }
    }
    if !immediate.is_empty() {
        return Ok(Outcome {
            t: t0,
            state: x0,
            fired: immediate,
            steps: 0,
        });
    }

    let mut t = t0;
    let mut y = x0;
    let mut k1 = rhs(t, &y);
    let mut h = initial_step(&mut rhs, t, &y, &k1, cfg, t_max - t0);
    let mut steps = 0usize;
    let mut last_rejected = false;

    loop {
        if steps >= cfg.max_steps {
            return Err(IntegrationError::TooManySteps(cfg.max_steps));
        }
        steps += 1;
        let remaining = t_max - t;
        // Avoid leaving a sliver shorter than the rounding noise of t.
        let last_step = h >= remaining || remaining - h <= 1e-12 * t_max.abs().max(1.0);
        if last_step {
            h = remaining;
        }
        let step = dopri_step(&mut rhs, t, &y, &k1, h);
        let err = error_norm(&step.err, &y, &step.y1, cfg);
        if !err.is_finite() {
            // Treat as a failed step; shrink hard.
            h *= 0.1;
            last_rejected = true;
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(IntegrationError::NonFiniteState { t });
            }
            continue;
        }
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(IntegrationError::StepSizeUnderflow { t, h });
            }
            continue;
        }

        let t1 = if last_step { t_max } else { t + h };
        if step.y1.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFiniteState { t: t1 });
        }
        let rcont2: [f64; N] = std::array::from_fn(|i| step.y1[i] - y[i]);
        let mut seg = Segment {
            t0: t,
            t1,
            end: t1,
            y0: y,
            y1: step.y1,
            rcont: [
                y,
                rcont2,
                std::array::from_fn(|i| h * k1[i] - rcont2[i]),
                std::array::from_fn(|i| rcont2[i] - h * step.k7[i] - (h * k1[i] - rcont2[i])),
                step.rcont5,
            ],
        };

        // Event scan over (t, t1].
        let mut hits: Vec<(usize, f64, bool)> = Vec::new();
        for (idx, (ev, watch)) in events.iter().zip(watches.iter_mut()).enumerate() {
            if t1 < watch.armed_at {
                continue;
            }
            let (ta, ga) = match watch.last {
                Some(point) => point,
                None => {
                    let ta = watch.armed_at;
                    (ta, ev.eval(ta, &interpolate_clamped(&seg, ta)))
                }
            };
            let gb = ev.eval(t1, &step.y1);
            if crossed(ev.direction, ga, gb) {
                let root = localize(
                    |s| ev.eval(s, &interpolate_clamped(&seg, s)),
                    ta,
                    ga,
                    t1,
                    gb,
                    cfg.event_tol,
                );
                hits.push((idx, root, ga < 0.0));
            }
            watch.last = Some((t1, gb));
        }

        if !hits.is_empty() {
            let first = hits.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
            let window = first + 4.0 * cfg.event_tol;
            let fired = hits
                .iter()
                .filter(|h| h.1 <= window)
                .map(|&(idx, _, rising)| Fired {
                    id: events[idx].id,
                    rising,
                })
                .collect();
            let state = interpolate_clamped(&seg, first);
            seg.end = first;
            observer(&seg);
            return Ok(Outcome {
                t: first,
                state,
                fired,
                steps,
            });
        }

        observer(&seg);
        t = t1;
        y = step.y1;
        k1 = step.k7;
        if last_step {
            return Ok(Outcome {
                t,
                state: y,
                fired: Vec::new(),
                steps,
            });
        }
        let growth = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
        h = (h * if last_rejected { growth.min(1.0) } else { growth }).min(cfg.max_step);
        last_rejected = false;
    }
}

fn interpolate_clamped<const N: usize>(seg: &Segment<N>, t: f64) -> [f64; N] {
    if t <= seg.t0 {
        seg.y0
    } else if t >= seg.t1 {
        seg.y1
    } else {
        interpolate(seg, t)
    }
}
