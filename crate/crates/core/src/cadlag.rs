//! Exact event-driven cadlag path algebra: drift-plus-jumps paths, running
//! minima, first-passage inverses, monotone composition, and excursion
//! extraction above the running minimum.
//!
//! Two representations are used. `JumpDriftPath` is exact: a single linear
//! drift plus finitely many jumps at sorted times, so excursion endpoints are
//! solved in closed form. `GridPath` carries a function sampled on a uniform
//! grid plus an exact jump overlay; it represents paths with a Brownian part,
//! and its excursion endpoints are resolved only to grid precision.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("time {0} outside path domain [0, {1}]")]
    OutOfDomain(f64, f64),
    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// Piecewise-linear cadlag path `t -> drift * t + sum of jumps at times <= t`
/// on `[0, horizon]`.
///
/// Paths built by the samplers never jump downwards; `new` enforces that.
/// Signed jump sizes can arise internally from compositions with a
/// downward-drifting outer path and are preserved exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpDriftPath {
    drift: f64,
    jumps: Vec<Jump>,
    /// prefix[i] = sum of the first i jump sizes
    prefix: Vec<f64>,
    horizon: f64,
}

fn merge_jumps(mut raw: Vec<Jump>) -> Vec<Jump> {
    raw.sort_unstable_by(|a, b| a.time.total_cmp(&b.time));
    let mut jumps: Vec<Jump> = Vec::with_capacity(raw.len());
    for j in raw {
        match jumps.last_mut() {
            Some(last) if last.time == j.time => last.size += j.size,
            _ => jumps.push(j),
        }
    }
    jumps.retain(|j| j.size != 0.0);
    jumps
}

impl JumpDriftPath {
    /// Builds a path from unsorted `(time, size)` pairs. Simultaneous jumps
    /// are merged by summing; zero-size jumps are dropped; sizes must be
    /// positive (sampled paths never jump downwards).
    pub fn new(drift: f64, jumps: Vec<(f64, f64)>, horizon: f64) -> Self {
        let p = Self::from_raw(drift, jumps, horizon);
        assert!(p.jumps.iter().all(|j| j.size > 0.0), "jump sizes must be positive");
        p
    }

    /// As `new` but allowing signed jump sizes.
    pub(crate) fn from_raw(drift: f64, jumps: Vec<(f64, f64)>, horizon: f64) -> Self {
        assert!(horizon >= 0.0 && horizon.is_finite());
        assert!(drift.is_finite());
        let raw: Vec<Jump> = jumps.into_iter().map(|(time, size)| Jump { time, size }).collect();
        assert!(
            raw.iter().all(|j| j.time >= 0.0 && j.time <= horizon && j.size.is_finite()),
            "jump times must lie in [0, horizon]"
        );
        let jumps = merge_jumps(raw);
        let mut prefix = Vec::with_capacity(jumps.len() + 1);
        prefix.push(0.0);
        for j in &jumps {
            prefix.push(prefix.last().unwrap() + j.size);
        }
        Self { drift, jumps, prefix, horizon }
    }

    pub fn zero(horizon: f64) -> Self {
        Self::from_raw(0.0, vec![], horizon)
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.jumps.iter().map(|j| (j.time, j.size))
    }

    pub fn n_jumps(&self) -> usize {
        self.jumps.len()
    }

    pub fn total_jump_mass(&self) -> f64 {
        *self.prefix.last().unwrap()
    }

    fn jump_sum_le(&self, t: f64) -> f64 {
        let idx = self.jumps.partition_point(|j| j.time <= t);
        self.prefix[idx]
    }

    fn jump_sum_lt(&self, t: f64) -> f64 {
        let idx = self.jumps.partition_point(|j| j.time < t);
        self.prefix[idx]
    }

    /// Right-continuous value at `t`.
    pub fn eval(&self, t: f64) -> Result<f64, PathError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(PathError::OutOfDomain(t, self.horizon));
        }
        Ok(self.drift * t + self.jump_sum_le(t))
    }

    /// Left limit at `t`; by convention the left limit at 0 is 0.
    pub fn eval_left(&self, t: f64) -> Result<f64, PathError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(PathError::OutOfDomain(t, self.horizon));
        }
        Ok(self.drift * t + self.jump_sum_lt(t))
    }

    fn value_unchecked(&self, t: f64) -> f64 {
        self.drift * t + self.jump_sum_le(t)
    }

    /// Multiplies drift and all jump sizes by `c >= 0`.
    pub fn scale_values(&self, c: f64) -> Self {
        assert!(c >= 0.0);
        Self::from_raw(
            self.drift * c,
            self.jumps.iter().map(|j| (j.time, j.size * c)).collect(),
            self.horizon,
        )
    }

    /// Restricts the path to `[0, h]` for `h <= horizon`.
    pub fn restrict(&self, h: f64) -> Self {
        assert!(h <= self.horizon);
        Self::from_raw(
            self.drift,
            self.jumps.iter().take_while(|j| j.time <= h).map(|j| (j.time, j.size)).collect(),
            h,
        )
    }

    /// The running minimum `t -> inf_{s <= t} path(s)` as a piecewise-linear
    /// monotone path (continuous whenever the path has no downward jumps).
    pub fn running_min(&self) -> PiecewiseLinear {
        let sweep = self.sweep();
        let mut segs: Vec<Segment> = Vec::new();
        let d = self.drift;
        // the min is constant on excursions, descends at rate d (when d < 0)
        // elsewhere, and can drop at a downward jump closing an excursion
        let mut t = 0.0;
        let mut m = 0.0;
        let drift_slope = if d < 0.0 { d } else { 0.0 };
        for (k, exc) in sweep.intervals.iter().enumerate() {
            if exc.0 > t {
                segs.push(Segment { t0: t, v0: m, slope: drift_slope });
            }
            segs.push(Segment { t0: exc.0, v0: sweep.floors[k], slope: 0.0 });
            t = exc.1;
            m = sweep.min_after[k];
        }
        if t < self.horizon || segs.is_empty() {
            segs.push(Segment { t0: t, v0: m, slope: drift_slope });
        }
        PiecewiseLinear { segs, horizon: self.horizon }
    }

    /// First passage `U(y) = inf{t : L(t) > y}` of `L(t) = -inf_{s<=t}`
    /// path(s)`; returns `+inf` when the level is not exceeded before the
    /// horizon.
    pub fn first_passage(&self, y: f64) -> f64 {
        assert!(y >= 0.0);
        let target = -y;
        let mut state = SweepState::new(self.drift);
        for j in &self.jumps {
            if let Some(t) = state.min_crossing(target, j.time) {
                return t;
            }
            state.apply_jump(j);
            if state.min < target {
                return j.time;
            }
        }
        if let Some(t) = state.min_crossing(target, self.horizon) {
            return t;
        }
        f64::INFINITY
    }

    /// The passage functional `y -> U(y)` of a downward-drifting path as an
    /// exact path in the level variable: drift `1/|d|` plus one jump per
    /// excursion (the plateau the excursion carves out of `L`).
    ///
    /// The domain ends at the total level budget `L(horizon)`; a trailing
    /// unfinished excursion truncates it (flagged).
    pub fn first_passage_path(&self) -> (JumpDriftPath, bool) {
        assert!(self.drift < 0.0, "passage path requires strictly negative drift");
        assert!(self.jumps.iter().all(|j| j.size > 0.0));
        let sweep = self.sweep();
        let mut jumps = Vec::with_capacity(sweep.intervals.len());
        let mut truncated = false;
        let mut budget = -sweep.final_min;
        for (k, &(l, r)) in sweep.intervals.iter().enumerate() {
            let level = -sweep.floors[k];
            if sweep.open_at_horizon && k + 1 == sweep.intervals.len() {
                budget = level;
                truncated = true;
            } else {
                jumps.push((level, r - l));
            }
        }
        (JumpDriftPath::new(1.0 / (-self.drift), jumps, budget), truncated)
    }

    /// Pointwise sum of two paths on a common horizon.
    pub fn add(&self, other: &JumpDriftPath) -> Result<JumpDriftPath, PathError> {
        if self.horizon != other.horizon {
            return Err(PathError::HorizonMismatch(self.horizon, other.horizon));
        }
        let jumps = self
            .jumps
            .iter()
            .chain(other.jumps.iter())
            .map(|j| (j.time, j.size))
            .collect();
        Ok(JumpDriftPath::from_raw(self.drift + other.drift, jumps, self.horizon))
    }

    fn sweep(&self) -> Sweep {
        let mut state = SweepState::new(self.drift);
        for j in &self.jumps {
            state.advance_to(j.time);
            state.apply_jump(j);
        }
        state.advance_to(self.horizon);
        state.finish(self.horizon)
    }

    /// Maximal intervals of `{t : path(t) > inf_{s<=t} path(s)}` with exact
    /// endpoints.
    pub fn extract_excursions(&self) -> ExcursionSet {
        let sweep = self.sweep();
        ExcursionSet {
            intervals: sweep.intervals,
            horizon: self.horizon,
            open_at_horizon: sweep.open_at_horizon,
        }
    }

    /// Writes `time,value,is_jump` rows at t = 0, event times, and the
    /// horizon.
    pub fn dump_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "time,value,is_jump")?;
        writeln!(out, "0,{},{}", self.value_unchecked(0.0), u8::from(!self.jumps.is_empty() && self.jumps[0].time == 0.0))?;
        for j in &self.jumps {
            if j.time > 0.0 {
                writeln!(out, "{},{},1", j.time, self.value_unchecked(j.time))?;
            }
        }
        writeln!(out, "{},{},0", self.horizon, self.value_unchecked(self.horizon))
    }
}

/// Event sweep shared by excursion extraction, first passage, and the
/// running minimum.
struct SweepState {
    drift: f64,
    t: f64,
    v: f64,
    min: f64,
    open: Option<(f64, f64)>, // (left endpoint, floor)
    intervals: Vec<(f64, f64)>,
    floors: Vec<f64>,
    min_after: Vec<f64>,
}

struct Sweep {
    intervals: Vec<(f64, f64)>,
    floors: Vec<f64>,
    /// running-min value right after each excursion closes
    min_after: Vec<f64>,
    open_at_horizon: bool,
    final_min: f64,
}

impl SweepState {
    fn new(drift: f64) -> Self {
        Self {
            drift,
            t: 0.0,
            v: 0.0,
            min: 0.0,
            open: None,
            intervals: vec![],
            floors: vec![],
            min_after: vec![],
        }
    }

    fn close(&mut self, l: f64, r: f64, floor: f64, value_after: f64) {
        self.intervals.push((l, r));
        self.floors.push(floor);
        self.min_after.push(value_after.min(floor));
        self.open = None;
        self.min = value_after.min(floor);
    }

    /// Advances the drift segment to `t_next`, closing an excursion if the
    /// path returns to its floor strictly inside the segment.
    fn advance_to(&mut self, t_next: f64) {
        let dt = t_next - self.t;
        if dt <= 0.0 {
            self.t = t_next;
            return;
        }
        let d = self.drift;
        match self.open {
            Some((l, floor)) => {
                let v_end = self.v + d * dt;
                if d < 0.0 && v_end <= floor {
                    let tc = self.t + (self.v - floor) / -d;
                    self.close(l, tc, floor, floor);
                    // below the floor the path keeps descending at the min
                    self.v = floor + d * (t_next - tc);
                    self.min = self.v.min(floor);
                } else {
                    self.v = v_end;
                }
            }
            None => {
                // at the minimum: descend with it, stay flat, or rise off it
                if d < 0.0 {
                    self.v += d * dt;
                    self.min = self.v;
                } else if d > 0.0 {
                    self.open = Some((self.t, self.min));
                    self.v += d * dt;
                }
            }
        }
        self.t = t_next;
    }

    /// Crossing time of the running minimum below `target` inside the drift
    /// segment ending at `t_next`, if any; used by scalar first passage.
    /// Accounts for an open excursion closing inside the segment with the
    /// minimum resuming its descent afterwards.
    fn min_crossing(&mut self, target: f64, t_next: f64) -> Option<f64> {
        let d = self.drift;
        let dt = t_next - self.t;
        if d < 0.0 && dt > 0.0 && self.min >= target {
            match self.open {
                None => {
                    let v_end = self.v + d * dt;
                    if v_end < target {
                        return Some(self.t + (self.v - target) / -d);
                    }
                }
                Some((_, floor)) => {
                    let v_end = self.v + d * dt;
                    if v_end <= floor {
                        // closes at tc, then the min descends from the floor
                        let tc = self.t + (self.v - floor) / -d;
                        let min_end = floor + d * (t_next - tc);
                        if min_end < target {
                            return Some(tc + (floor - target) / -d);
                        }
                    }
                }
            }
        }
        self.advance_to(t_next);
        None
    }

    fn apply_jump(&mut self, j: &Jump) {
        if j.size > 0.0 {
            if self.open.is_none() {
                self.open = Some((j.time, self.min));
            }
            self.v += j.size;
        } else {
            self.v += j.size;
            match self.open {
                Some((l, floor)) => {
                    if self.v <= floor {
                        let value_after = self.v;
                        self.close(l, j.time, floor, value_after);
                    }
                }
                None => self.min = self.v.min(self.min),
            }
        }
    }

    fn finish(mut self, horizon: f64) -> Sweep {
        let open_at_horizon = if let Some((l, floor)) = self.open {
            self.intervals.push((l, horizon));
            self.floors.push(floor);
            self.min_after.push(floor);
            true
        } else {
            false
        };
        Sweep {
            intervals: self.intervals,
            floors: self.floors,
            min_after: self.min_after,
            open_at_horizon,
            final_min: self.min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    t0: f64,
    v0: f64,
    slope: f64,
}

/// Right-continuous piecewise-linear path, used for running minima.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    segs: Vec<Segment>,
    horizon: f64,
}

impl PiecewiseLinear {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eval(&self, t: f64) -> Result<f64, PathError> {
        if !(0.0..=self.horizon).contains(&t) || self.segs.is_empty() {
            return Err(PathError::OutOfDomain(t, self.horizon));
        }
        let idx = self.segs.partition_point(|s| s.t0 <= t).saturating_sub(1);
        let s = self.segs[idx];
        Ok(s.v0 + s.slope * (t - s.t0))
    }
}

/// Maximal open intervals where a path strictly exceeds its running minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionSet {
    pub intervals: Vec<(f64, f64)>,
    pub horizon: f64,
    /// true when the final interval was still above the minimum at the
    /// horizon and was truncated there
    pub open_at_horizon: bool,
}

impl ExcursionSet {
    /// Excursion lengths sorted non-increasing; ties keep left-endpoint
    /// order.
    pub fn lengths_desc(&self) -> Vec<f64> {
        let mut v: Vec<(f64, f64)> = self.intervals.iter().map(|&(l, r)| (r - l, l)).collect();
        v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
        v.into_iter().map(|(len, _)| len).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|&(l, r)| r - l).sum()
    }

    /// Lebesgue measure of `[0, horizon]` minus the excursion union.
    pub fn complement_measure(&self) -> f64 {
        (self.horizon - self.total_length()).max(0.0)
    }
}

pub fn lengths_desc(e: &ExcursionSet) -> Vec<f64> {
    e.lengths_desc()
}

/// Uniform-grid path with an exact jump overlay: the value at `t` is the
/// grid value at `floor(t/h) * h` plus all overlay jumps with time `<= t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    step: f64,
    values: Vec<f64>,
    overlay: Vec<Jump>,
    overlay_prefix: Vec<f64>,
}

impl GridPath {
    pub fn new(step: f64, values: Vec<f64>, overlay: Vec<(f64, f64)>) -> Self {
        assert!(step > 0.0 && step.is_finite());
        assert!(values.len() >= 2, "grid needs at least two points");
        let horizon = step * (values.len() - 1) as f64;
        let raw: Vec<Jump> = overlay.into_iter().map(|(time, size)| Jump { time, size }).collect();
        assert!(raw.iter().all(|j| j.time >= 0.0 && j.time <= horizon && j.size > 0.0));
        let overlay = merge_jumps(raw);
        let mut overlay_prefix = Vec::with_capacity(overlay.len() + 1);
        overlay_prefix.push(0.0);
        for j in &overlay {
            overlay_prefix.push(overlay_prefix.last().unwrap() + j.size);
        }
        Self { step, values, overlay, overlay_prefix }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn overlay(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.overlay.iter().map(|j| (j.time, j.size))
    }

    fn overlay_le(&self, t: f64) -> f64 {
        let idx = self.overlay.partition_point(|j| j.time <= t);
        self.overlay_prefix[idx]
    }

    fn overlay_lt(&self, t: f64) -> f64 {
        let idx = self.overlay.partition_point(|j| j.time < t);
        self.overlay_prefix[idx]
    }

    fn grid_index(&self, t: f64) -> usize {
        ((t / self.step) as usize).min(self.values.len() - 1)
    }

    pub fn eval(&self, t: f64) -> Result<f64, PathError> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(PathError::OutOfDomain(t, self.horizon()));
        }
        Ok(self.values[self.grid_index(t)] + self.overlay_le(t))
    }

    pub fn eval_left(&self, t: f64) -> Result<f64, PathError> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(PathError::OutOfDomain(t, self.horizon()));
        }
        let k = self.grid_index(t);
        let grid_part = if t > 0.0 && (t / self.step).fract() == 0.0 && k > 0 {
            self.values[k - 1]
        } else {
            self.values[k]
        };
        Ok(grid_part + self.overlay_lt(t))
    }

    /// Pointwise sum on an identical grid; overlays are merged.
    pub fn add(&self, other: &GridPath) -> Result<GridPath, PathError> {
        if self.step != other.step || self.values.len() != other.values.len() {
            return Err(PathError::HorizonMismatch(self.horizon(), other.horizon()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        let overlay = self
            .overlay
            .iter()
            .chain(other.overlay.iter())
            .map(|j| (j.time, j.size))
            .collect();
        Ok(GridPath::new(self.step, values, overlay))
    }

    /// Grid-resolution excursion extraction: values are compared exactly at
    /// grid points and an excursion closes at the first grid point at or
    /// below the minimum it started from.
    pub fn extract_excursions(&self) -> ExcursionSet {
        let n = self.values.len();
        let mut overlay_idx = 0usize;
        let mut overlay_sum = 0.0;
        let mut value_at = |k: usize| {
            let t = self.step * k as f64;
            while overlay_idx < self.overlay.len() && self.overlay[overlay_idx].time <= t {
                overlay_sum += self.overlay[overlay_idx].size;
                overlay_idx += 1;
            }
            self.values[k] + overlay_sum
        };
        let mut m = value_at(0);
        let mut open: Option<(usize, f64)> = None;
        let mut intervals = Vec::new();
        for k in 1..n {
            let v = value_at(k);
            match open {
                Some((l, floor)) => {
                    if v <= floor {
                        intervals.push((self.step * l as f64, self.step * k as f64));
                        m = v.min(floor);
                        open = None;
                    }
                }
                None => {
                    if v > m {
                        open = Some((k - 1, m));
                    } else {
                        m = v;
                    }
                }
            }
        }
        let open_at_horizon = if let Some((l, _)) = open {
            intervals.push((self.step * l as f64, self.horizon()));
            true
        } else {
            false
        };
        ExcursionSet { intervals, horizon: self.horizon(), open_at_horizon }
    }

    pub fn dump_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "time,value,is_jump")?;
        let mut oi = 0usize;
        let mut osum = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let t = self.step * k as f64;
            let mut jumped = false;
            while oi < self.overlay.len() && self.overlay[oi].time <= t {
                osum += self.overlay[oi].size;
                oi += 1;
                jumped = true;
            }
            writeln!(out, "{},{},{}", t, v + osum, u8::from(jumped))?;
        }
        Ok(())
    }
}

/// Common view over the two path representations.
pub trait CadlagPath {
    fn horizon(&self) -> f64;
    fn value(&self, t: f64) -> f64;
    fn value_left(&self, t: f64) -> f64;
    /// Size of the genuine path discontinuity at `t` (0 if continuous
    /// there). For grid paths this is the overlay jump: the sampled
    /// function between grid points is resolution, not discontinuity.
    fn jump_at(&self, t: f64) -> f64;
    fn excursions(&self) -> ExcursionSet;
}

impl CadlagPath for JumpDriftPath {
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn value(&self, t: f64) -> f64 {
        self.eval(t).unwrap()
    }
    fn value_left(&self, t: f64) -> f64 {
        self.eval_left(t).unwrap()
    }
    fn jump_at(&self, t: f64) -> f64 {
        self.jump_sum_le(t) - self.jump_sum_lt(t)
    }
    fn excursions(&self) -> ExcursionSet {
        self.extract_excursions()
    }
}

impl CadlagPath for GridPath {
    fn horizon(&self) -> f64 {
        self.horizon()
    }
    fn value(&self, t: f64) -> f64 {
        self.eval(t).unwrap()
    }
    fn value_left(&self, t: f64) -> f64 {
        self.eval_left(t).unwrap()
    }
    fn jump_at(&self, t: f64) -> f64 {
        self.overlay_le(t) - self.overlay_lt(t)
    }
    fn excursions(&self) -> ExcursionSet {
        self.extract_excursions()
    }
}

/// Exact composition `t -> outer(inner(t))` for non-decreasing `inner`.
///
/// Output jumps sit at inner's jump times plus the preimages of outer's jump
/// times under inner. When inner's values leave outer's domain the result is
/// truncated at that time and flagged.
pub fn compose_monotone(outer: &JumpDriftPath, inner: &JumpDriftPath) -> (JumpDriftPath, bool) {
    assert!(inner.drift >= 0.0, "inner must be non-decreasing");
    assert!(inner.jumps.iter().all(|j| j.size > 0.0), "inner must be non-decreasing");
    let b = inner.drift;
    let out_drift = outer.drift * b;
    let mut jumps_out: Vec<(f64, f64)> = Vec::new();
    let mut truncated = false;
    let mut horizon = inner.horizon;

    fn emit(t: f64, size: f64, jumps_out: &mut Vec<(f64, f64)>) {
        if size != 0.0 {
            jumps_out.push((t, size));
        }
    }

    // initial value: everything outer accumulates on [0, inner(0)]
    let y0 = inner.value_unchecked(0.0);
    if y0 > outer.horizon {
        return (JumpDriftPath::from_raw(out_drift, vec![], 0.0), true);
    }
    emit(0.0, outer.value_unchecked(y0), &mut jumps_out);
    let mut y_prev = y0;
    let mut t_prev = 0.0f64;

    // outer jump pointer: first outer jump strictly beyond y_prev
    let mut oi = outer.jumps.partition_point(|j| j.time <= y_prev);

    let inner_events: Vec<(f64, f64)> = inner
        .jumps
        .iter()
        .filter(|j| j.time > 0.0)
        .map(|j| (j.time, j.size))
        .chain(std::iter::once((inner.horizon, 0.0)))
        .collect();

    'outer_loop: for &(t_next, js) in &inner_events {
        let y_seg_end = y_prev + b * (t_next - t_prev);
        // crossings strictly inside the segment: outer jumps at levels in
        // (y_prev, y_seg_end), or up to and including y_seg_end when this
        // event is the horizon sentinel (js == 0)
        if b > 0.0 {
            while oi < outer.jumps.len() {
                let s = outer.jumps[oi].time;
                let inside = s < y_seg_end || (js == 0.0 && s == y_seg_end);
                if s > outer.horizon || !inside {
                    break;
                }
                let tc = t_prev + (s - y_prev) / b;
                emit(tc, outer.jumps[oi].size, &mut jumps_out);
                oi += 1;
            }
        }
        if y_seg_end > outer.horizon {
            let tc = t_prev + (outer.horizon - y_prev) / b;
            horizon = tc;
            truncated = true;
            break 'outer_loop;
        }
        if js > 0.0 {
            let y_after = y_seg_end + js;
            if y_after > outer.horizon {
                horizon = t_next;
                truncated = true;
                break 'outer_loop;
            }
            // h(t_next-) = outer(y_seg_end-) when approached along drift,
            // outer(y_seg_end) when inner was flat
            let h_left = if b > 0.0 {
                outer.drift * y_seg_end + outer.jump_sum_lt(y_seg_end)
            } else {
                outer.value_unchecked(y_seg_end)
            };
            let h_after = outer.value_unchecked(y_after);
            emit(t_next, h_after - h_left, &mut jumps_out);
            y_prev = y_after;
            oi = outer.jumps.partition_point(|j| j.time <= y_prev);
        } else {
            y_prev = y_seg_end;
        }
        t_prev = t_next;
    }

    let path = JumpDriftPath::from_raw(
        out_drift,
        jumps_out.into_iter().filter(|&(t, _)| t <= horizon).collect(),
        horizon,
    );
    (path, truncated)
}

/// One mark triple `(l, r - l, phi(r) - phi(l-))` per excursion, in the
/// order the excursions appear.
pub fn excursion_marks(e: &ExcursionSet, phi: &impl CadlagPath) -> Vec<(f64, f64, f64)> {
    e.intervals
        .iter()
        .map(|&(l, r)| (l, r - l, phi.value(r) - phi.value_left(l)))
        .collect()
}

/// Numerical diagnostics for whether a path behaves like a "good" limit
/// path: continuity at excursion right endpoints, vanishing time at the
/// running minimum, finitely many long excursions, and non-isolated right
/// endpoints. The local-minimum and isolated-point conditions are reported
/// as nearest-neighbour gap statistics, not pass/fail.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodnessReport {
    pub n_excursions: usize,
    /// max |path(r) - path(r-)| over excursion right endpoints
    pub max_right_endpoint_jump: f64,
    /// Lebesgue measure of [0, horizon] minus the excursion union
    pub complement_measure: f64,
    /// (epsilon, count of excursions of length >= epsilon)
    pub counts_by_epsilon: Vec<(f64, usize)>,
    /// smallest nearest-neighbour gap among right endpoints
    pub min_right_gap: f64,
    /// right endpoints whose nearest neighbour is farther than `tol`
    pub isolated_right_endpoints: usize,
    pub open_at_horizon: bool,
}

pub fn goodness_report(path: &impl CadlagPath, tol: f64) -> GoodnessReport {
    let e = path.excursions();
    let horizon = path.horizon();
    let mut max_jump = 0.0f64;
    for &(_, r) in &e.intervals {
        if r < horizon {
            max_jump = max_jump.max(path.jump_at(r).abs());
        }
    }
    let eps_grid = [1e-4, 1e-3, 1e-2, 1e-1];
    let counts = eps_grid
        .iter()
        .map(|&f| {
            let eps = f * horizon;
            (eps, e.intervals.iter().filter(|&&(l, r)| r - l >= eps).count())
        })
        .collect();
    let rights: Vec<f64> = e.intervals.iter().map(|&(_, r)| r).collect();
    let mut min_gap = f64::INFINITY;
    let mut isolated = 0usize;
    for (k, &r) in rights.iter().enumerate() {
        let mut nn = f64::INFINITY;
        if k > 0 {
            nn = nn.min(r - rights[k - 1]);
        }
        if k + 1 < rights.len() {
            nn = nn.min(rights[k + 1] - r);
        }
        if nn.is_finite() {
            min_gap = min_gap.min(nn);
        }
        if nn > tol {
            isolated += 1;
        }
    }
    GoodnessReport {
        n_excursions: e.intervals.len(),
        max_right_endpoint_jump: max_jump,
        complement_measure: e.complement_measure(),
        counts_by_epsilon: counts,
        min_right_gap: min_gap,
        isolated_right_endpoints: isolated,
        open_at_horizon: e.open_at_horizon,
    }
}
