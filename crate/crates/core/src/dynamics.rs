//! Fixed-step RK4 integration of smooth vector fields with scheduled state jumps.
//!
//! Jumps (hybrid events) are time-scheduled: each trigger time is snapped to the
//! nearest grid time when the run is configured, and the jump map is applied
//! right after the step that lands on that time. Both the pre- and post-jump
//! states are kept in the trajectory's event log, and the stored sample at the
//! event time is the post-jump state.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform time grid `t_k = t_start + k * dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    t_start: T,
    t_end: T,
    dt: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_start: T, t_end: T, dt: T) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && dt.is_finite()) {
            return Err(Error::Config("time grid bounds must be finite".into()));
        }
        if dt <= T::zero() {
            return Err(Error::Config(format!("dt must be > 0, got {dt}")));
        }
        if t_end <= t_start {
            return Err(Error::Config(format!(
                "t_end ({t_end}) must be greater than t_start ({t_start})"
            )));
        }
        let steps = ((t_end - t_start) / dt).round();
        let n_steps = steps
            .to_usize()
            .ok_or_else(|| Error::Config(format!("step count {steps} is not representable")))?;
        if n_steps == 0 {
            return Err(Error::Config(format!(
                "dt ({dt}) is larger than the span {}",
                t_end - t_start
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            dt,
            n_steps,
        })
    }

    pub fn t_start(&self) -> T {
        self.t_start
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Grid time of step index `k`. Computed directly, never accumulated.
    #[inline]
    pub fn time(&self, k: usize) -> T {
        self.t_start + self.dt * T::lit(k as f64)
    }

    /// Snaps `t` to the nearest grid index. Fails if the snapping distance
    /// exceeds `dt / 2`, which only happens outside `[t_start, t_end]`.
    pub fn snap(&self, t: T) -> Result<usize> {
        let half = self.dt / T::lit(2.0);
        if !t.is_finite() || t < self.t_start - half {
            return Err(Error::Config(format!(
                "event time {t} lies outside [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        let k = ((t - self.t_start) / self.dt)
            .round()
            .to_usize()
            .unwrap_or(usize::MAX);
        if k > self.n_steps || (self.time(k) - t).abs() > half {
            return Err(Error::Config(format!(
                "event time {t} lies outside [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        Ok(k)
    }
}

/// Jump map `(event index, t, pre-jump state) -> post-jump state`.
pub type JumpMap<T> = Box<dyn Fn(usize, T, &[T]) -> Vec<T> + Send + Sync>;

/// A schedule of trigger times sharing one jump map and label.
pub struct EventRule<T> {
    label: String,
    times: Vec<T>,
    jump: JumpMap<T>,
}

impl<T: Real> EventRule<T> {
    /// Rule with no triggers.
    pub fn none() -> Self {
        Self {
            label: String::new(),
            times: Vec::new(),
            jump: Box::new(|_, _, s| s.to_vec()),
        }
    }

    pub fn new(label: impl Into<String>, times: Vec<T>, jump: JumpMap<T>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("event times must be finite".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "event times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            label: label.into(),
            times,
            jump,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn apply(&self, index: usize, t: T, state: &[T]) -> Vec<T> {
        (self.jump)(index, t, state)
    }
}

impl<T: fmt::Debug> fmt::Debug for EventRule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventRule")
            .field("label", &self.label)
            .field("times", &self.times)
            .finish_non_exhaustive()
    }
}

/// A recorded jump.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    pub t: T,
    pub label: String,
    pub pre: Vec<T>,
    pub post: Vec<T>,
}

/// Time-stamped state samples plus the event log of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    columns: Vec<String>,
    times: Vec<T>,
    data: Vec<T>,
    events: Vec<Event<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            times: Vec::new(),
            data: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Appends a sample. Sample times must be strictly increasing.
    pub fn push(&mut self, t: T, state: &[T]) -> Result<()> {
        if state.len() != self.dim() {
            return Err(Error::Config(format!(
                "sample has {} components, trajectory has {}",
                state.len(),
                self.dim()
            )));
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::Config(format!(
                    "sample time {t} does not follow {last}"
                )));
            }
        }
        self.times.push(t);
        self.data.extend_from_slice(state);
        Ok(())
    }

    pub fn push_event(&mut self, event: Event<T>) {
        self.events.push(event);
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn time(&self, i: usize) -> T {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn states(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim().max(1))
    }

    /// Values of one state column across all samples.
    pub fn column(&self, index: usize) -> Vec<T> {
        self.states().map(|s| s[index]).collect()
    }

    pub fn events(&self) -> &[Event<T>] {
        &self.events
    }

    pub fn first_time(&self) -> Option<T> {
        self.times.first().copied()
    }

    pub fn last_time(&self) -> Option<T> {
        self.times.last().copied()
    }

    pub fn last_state(&self) -> Option<&[T]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// Event recorded at exactly time `t`, if any.
    pub fn event_at(&self, t: T) -> Option<&Event<T>> {
        self.events
            .binary_search_by(|e| e.t.partial_cmp(&t).expect("finite event time"))
            .ok()
            .map(|i| &self.events[i])
    }

    /// Appends a column computed from each sample (and each event's pre/post states).
    pub fn with_derived_column(mut self, name: &str, derive: impl Fn(&[T]) -> T) -> Self {
        let d = self.dim();
        let mut data = Vec::with_capacity(self.len() * (d + 1));
        for s in self.data.chunks_exact(d.max(1)) {
            data.extend_from_slice(s);
            data.push(derive(s));
        }
        for e in &mut self.events {
            let pre = derive(&e.pre);
            let post = derive(&e.post);
            e.pre.push(pre);
            e.post.push(post);
        }
        self.data = data;
        self.columns.push(name.to_owned());
        self
    }

    /// Linear interpolation of the state at each requested time. Exact at sample times.
    pub fn resample(&self, times: &[T]) -> Result<Vec<Vec<T>>> {
        let (Some(lo), Some(hi)) = (self.first_time(), self.last_time()) else {
            return Err(Error::Range("trajectory is empty".into()));
        };
        times
            .iter()
            .map(|&t| {
                if !(t >= lo && t <= hi) {
                    return Err(Error::Range(format!(
                        "time {t} outside trajectory span [{lo}, {hi}]"
                    )));
                }
                let i = self.times.partition_point(|&s| s < t);
                if self.times[i] == t {
                    return Ok(self.state(i).to_vec());
                }
                let (t0, t1) = (self.times[i - 1], self.times[i]);
                let w = (t - t0) / (t1 - t0);
                Ok(self
                    .state(i - 1)
                    .iter()
                    .zip(self.state(i))
                    .map(|(&a, &b)| a + (b - a) * w)
                    .collect())
            })
            .collect()
    }
}

/// Recording options for [`integrate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrateOptions {
    /// Record every k-th step (k >= 1). The final step and event steps are always recorded.
    pub record_stride: usize,
    /// Column names. Empty means `s0, s1, ...`.
    pub columns: Vec<String>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            record_stride: 1,
            columns: Vec::new(),
        }
    }
}

impl IntegrateOptions {
    pub fn with_columns(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            ..Self::default()
        }
    }

    pub fn stride(mut self, k: usize) -> Self {
        self.record_stride = k;
        self
    }
}

/// One classical RK4 step.
#[inline]
pub fn rk4_step<T: Real, const N: usize>(
    field: &impl Fn(T, &[T; N]) -> [T; N],
    t: T,
    y: &[T; N],
    dt: T,
) -> [T; N] {
    let half = dt / T::lit(2.0);
    let two = T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    let k1 = field(t, y);
    let k2 = field(t + half, &std::array::from_fn(|i| y[i] + half * k1[i]));
    let k3 = field(t + half, &std::array::from_fn(|i| y[i] + half * k2[i]));
    let k4 = field(t + dt, &std::array::from_fn(|i| y[i] + dt * k3[i]));
    std::array::from_fn(|i| y[i] + sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]))
}

/// Integrates `field` over `grid` with RK4, applying `events` at their snapped grid times.
pub fn integrate<T: Real, const N: usize>(
    field: impl Fn(T, &[T; N]) -> [T; N],
    init: [T; N],
    grid: &TimeGrid<T>,
    events: &EventRule<T>,
    opts: &IntegrateOptions,
) -> Result<Trajectory<T>> {
    integrate_guarded(field, init, grid, events, opts, |_, _| Ok(()))
}

/// As [`integrate`], calling `guard` on every post-step (and post-jump) state.
/// A guard error aborts the run and is returned unchanged.
pub fn integrate_guarded<T: Real, const N: usize>(
    field: impl Fn(T, &[T; N]) -> [T; N],
    init: [T; N],
    grid: &TimeGrid<T>,
    events: &EventRule<T>,
    opts: &IntegrateOptions,
    mut guard: impl FnMut(T, &[T; N]) -> Result<()>,
) -> Result<Trajectory<T>> {
    if opts.record_stride == 0 {
        return Err(Error::Config("record_stride must be >= 1".into()));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!(
            "initial state {init:?} is not finite"
        )));
    }
    let columns = if opts.columns.is_empty() {
        (0..N).map(|i| format!("s{i}")).collect()
    } else if opts.columns.len() == N {
        opts.columns.clone()
    } else {
        return Err(Error::Config(format!(
            "{} column names for a {N}-dimensional state",
            opts.columns.len()
        )));
    };

    let event_steps = events
        .times()
        .iter()
        .map(|&t| grid.snap(t))
        .collect::<Result<Vec<_>>>()?;
    if event_steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "two event times snap to the same grid step; refine dt".into(),
        ));
    }

    let n = grid.n_steps();
    let mut traj = Trajectory::new(columns);
    let cap = n / opts.record_stride + event_steps.len() + 2;
    traj.times.reserve(cap);
    traj.data.reserve(cap * N);

    let mut next_event = 0;
    let mut y = init;
    let mut apply_events = |k: usize, y: &mut [T; N], traj: &mut Trajectory<T>| -> Result<bool> {
        if next_event < event_steps.len() && event_steps[next_event] == k {
            let t = grid.time(k);
            let post = events.apply(next_event, t, y);
            let post: [T; N] = post.try_into().map_err(|v: Vec<T>| {
                Error::Config(format!(
                    "jump map returned {} components, expected {N}",
                    v.len()
                ))
            })?;
            if post.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    t: t.as_f64(),
                    last_t: t.as_f64(),
                    last_state: y.iter().map(|v| v.as_f64()).collect(),
                });
            }
            traj.push_event(Event {
                t,
                label: events.label().to_owned(),
                pre: y.to_vec(),
                post: post.to_vec(),
            });
            *y = post;
            next_event += 1;
            return Ok(true);
        }
        Ok(false)
    };

    apply_events(0, &mut y, &mut traj)?;
    guard(grid.time(0), &y)?;
    traj.push(grid.time(0), &y)?;

    for k in 1..=n {
        let t_prev = grid.time(k - 1);
        let next = rk4_step(&field, t_prev, &y, grid.dt());
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                t: grid.time(k).as_f64(),
                last_t: t_prev.as_f64(),
                last_state: y.iter().map(|v| v.as_f64()).collect(),
            });
        }
        y = next;
        let jumped = apply_events(k, &mut y, &mut traj)?;
        let t = grid.time(k);
        guard(t, &y)?;
        if jumped || k % opts.record_stride == 0 || k == n {
            traj.push(t, &y)?;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t_end: f64, dt: f64) -> TimeGrid<f64> {
        TimeGrid::new(0.0, t_end, dt).unwrap()
    }

    #[test]
    fn zero_field_is_constant() {
        let g = grid(2.0, 0.01);
        let tr = integrate(
            |_, _| [0.0],
            [5.0],
            &g,
            &EventRule::none(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(tr.len(), g.n_steps() + 1);
        assert!(tr.states().all(|s| s[0] == 5.0));
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let g = grid(1.0, 1e-3);
        let tr = integrate(
            |_, y: &[f64; 1]| [-y[0]],
            [1.0],
            &g,
            &EventRule::none(),
            &Default::default(),
        )
        .unwrap();
        let end = tr.last_state().unwrap()[0];
        let exact = (-1.0f64).exp();
        assert!(((end - exact) / exact).abs() < 1e-8);
        assert!((tr.last_time().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_jump_at_midpoint() {
        let g = grid(1.0, 0.01);
        let ev = EventRule::new("jump", vec![0.5], Box::new(|_, _, _| vec![3.0])).unwrap();
        let tr = integrate(|_, _| [0.0], [1.0], &g, &ev, &Default::default()).unwrap();
        for (t, s) in tr.times().iter().zip(tr.states()) {
            let want = if *t < 0.5 - 1e-9 { 1.0 } else { 3.0 };
            assert_eq!(s[0], want, "t = {t}");
        }
        let e = &tr.events()[0];
        assert_eq!((e.pre[0], e.post[0]), (1.0, 3.0));
        assert_eq!(tr.event_at(e.t).unwrap().label, "jump");
    }

    #[test]
    fn event_post_state_is_stored_sample_even_with_stride() {
        let g = grid(1.0, 0.01);
        let ev = EventRule::new(
            "kick",
            vec![0.33, 0.71],
            Box::new(|_, _, s: &[f64]| vec![s[0] + 1.0]),
        )
        .unwrap();
        let opts = IntegrateOptions::default().stride(7);
        let tr = integrate(|_, y: &[f64; 1]| [-0.5 * y[0]], [1.0], &g, &ev, &opts).unwrap();
        assert_eq!(tr.events().len(), 2);
        for e in tr.events() {
            let i = tr
                .times()
                .iter()
                .position(|&t| t == e.t)
                .expect("event time recorded");
            assert_eq!(tr.state(i), e.post.as_slice());
            assert_eq!(e.post[0], e.pre[0] + 1.0);
        }
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.last_time(), Some(g.time(g.n_steps())));
    }

    #[test]
    fn event_at_start_applies_to_initial_state() {
        let g = grid(1.0, 0.1);
        let ev = EventRule::new("set", vec![0.0], Box::new(|_, _, _| vec![2.0])).unwrap();
        let tr = integrate(|_, _| [0.0], [1.0], &g, &ev, &Default::default()).unwrap();
        assert_eq!(tr.state(0)[0], 2.0);
        assert_eq!(tr.events()[0].pre, vec![1.0]);
    }

    #[test]
    fn event_outside_span_is_config_error() {
        let g = grid(1.0, 0.01);
        for t in [-0.1, 1.2] {
            let ev = EventRule::new("x", vec![t], Box::new(|_, _, s: &[f64]| s.to_vec())).unwrap();
            let err = integrate(|_, _| [0.0], [1.0], &g, &ev, &Default::default()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{err:?}");
        }
    }

    #[test]
    fn event_times_must_increase() {
        let r = EventRule::<f64>::new("x", vec![0.5, 0.5], Box::new(|_, _, s| s.to_vec()));
        assert!(r.is_err());
    }

    #[test]
    fn divergence_reports_last_finite_sample() {
        let g = grid(10.0, 0.1);
        let err = integrate(
            |_, y: &[f64; 1]| [y[0] * y[0]],
            [1.0],
            &g,
            &EventRule::none(),
            &Default::default(),
        )
        .unwrap_err();
        match err {
            Error::Divergence {
                last_state,
                last_t,
                t,
            } => {
                assert!(last_state[0].is_finite());
                assert!(last_t < t);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, -0.1).is_err());
        assert!(TimeGrid::new(0.0, 0.01, 1.0).is_err());
    }

    #[test]
    fn resample_linear_and_exact() {
        let mut tr = Trajectory::new(vec!["x".into()]);
        tr.push(0.0, &[0.0]).unwrap();
        tr.push(1.0, &[2.0]).unwrap();
        assert_eq!(tr.resample(&[0.5]).unwrap(), vec![vec![1.0]]);
        assert_eq!(tr.resample(&[1.0]).unwrap(), vec![vec![2.0]]);
        assert!(matches!(tr.resample(&[1.5]), Err(Error::Range(_))));
        assert!(matches!(tr.resample(&[-0.1]), Err(Error::Range(_))));
    }

    #[test]
    fn resample_constant_and_grid_points() {
        let g = grid(1.0, 0.01);
        let c = integrate(
            |_, _| [0.0],
            [5.0],
            &g,
            &EventRule::none(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(
            c.resample(&[0.123, 0.777]).unwrap(),
            vec![vec![5.0], vec![5.0]]
        );

        let e = integrate(
            |_, y: &[f64; 1]| [-y[0]],
            [1.0],
            &g,
            &EventRule::none(),
            &Default::default(),
        )
        .unwrap();
        let picks = [3usize, 40, 99];
        let ts: Vec<f64> = picks.iter().map(|&i| e.time(i)).collect();
        let got = e.resample(&ts).unwrap();
        for (i, v) in picks.iter().zip(got) {
            assert_eq!(v.as_slice(), e.state(*i));
        }
    }

    #[test]
    fn push_rejects_non_increasing_times() {
        let mut tr = Trajectory::new(vec!["x".into()]);
        tr.push(1.0, &[0.0]).unwrap();
        assert!(tr.push(1.0, &[0.0]).is_err());
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let g = grid(3.0, 0.003);
        let run = || {
            let ev = EventRule::new(
                "k",
                vec![1.0, 2.0],
                Box::new(|_, _, s: &[f64]| vec![s[0] * 2.0, s[1]]),
            )
            .unwrap();
            integrate(
                |t, y: &[f64; 2]| [y[1], -y[0] + t.sin()],
                [1.0, 0.0],
                &g,
                &ev,
                &Default::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn works_in_single_precision() {
        let g = TimeGrid::new(0.0f32, 1.0, 1e-2).unwrap();
        let tr = integrate(
            |_, y: &[f32; 1]| [-y[0]],
            [1.0f32],
            &g,
            &EventRule::none(),
            &Default::default(),
        )
        .unwrap();
        let end = tr.last_state().unwrap()[0];
        assert!((end - (-1.0f32).exp()).abs() < 1e-5);
    }
}
