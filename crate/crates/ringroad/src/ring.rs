//! Synchronous N-vehicle simulation of the car-following map on a ring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{control, DriverView, KinematicState};
use crate::params::ModelParams;

/// Ring geometry plus the shared behavioral parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RingConfig {
    pub n_vehicles: usize,
    /// Ring circumference C [m].
    pub circumference: f64,
    pub params: ModelParams,
}

impl RingConfig {
    pub fn new(n_vehicles: usize, circumference: f64, params: ModelParams) -> Self {
        Self {
            n_vehicles,
            circumference,
            params,
        }
    }

    /// Vehicle density rho = N/C [1/m].
    pub fn density(&self) -> f64 {
        self.n_vehicles as f64 / self.circumference
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_vehicles < 2 {
            return Err(Error::InvalidParams(
                "at least two vehicles are required".into(),
            ));
        }
        let spacing = self.circumference / self.n_vehicles as f64;
        if spacing <= self.params.vehicle_length {
            return Err(Error::InvalidDensity {
                rho: self.density(),
                headway: spacing,
                vehicle_length: self.params.vehicle_length,
            });
        }
        Ok(())
    }
}

/// Full map state: 4N numbers (x, v, a, previous control input) plus the
/// step counter. Vehicle i follows vehicle i+1, indices wrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RingState {
    pub time_index: u64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub prev_control: Vec<f64>,
}

impl RingState {
    /// Center-to-center gap from vehicle `i` to its leader, in (0, C].
    pub fn gap(&self, i: usize, circumference: f64) -> f64 {
        let n = self.x.len();
        let raw = (self.x[(i + 1) % n] - self.x[i]).rem_euclid(circumference);
        if raw == 0.0 {
            circumference
        } else {
            raw
        }
    }
}

/// A temporary override of one vehicle's control input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KickSchedule {
    /// Index of the kicked vehicle (0-based).
    pub vehicle: usize,
    /// Control input applied while the kick is active [m/s^2].
    pub control_override: f64,
    /// Wall-clock start [s].
    pub start_time: f64,
    /// Wall-clock duration [s]; the kick also dies as soon as the kicked
    /// vehicle stops.
    pub duration: f64,
}

impl KickSchedule {
    /// The braking protocol used throughout: vehicle 0, u = -1 m/s^2 for
    /// 6 s from t = 0.
    pub fn default_braking() -> Self {
        Self {
            vehicle: 0,
            control_override: -1.0,
            start_time: 0.0,
            duration: 6.0,
        }
    }

    pub fn braking(strength: f64) -> Self {
        Self {
            control_override: strength,
            ..Self::default_braking()
        }
    }

    fn in_window(&self, t: u64, dt: f64) -> bool {
        let now = t as f64 * dt;
        now >= self.start_time && now < self.start_time + self.duration
    }

    /// Active this step: inside the window and the vehicle still moves
    /// forward.
    pub fn is_active(&self, t: u64, dt: f64, v_kicked: f64) -> bool {
        self.in_window(t, dt) && v_kicked > 0.0
    }
}

/// Result of one synchronous map step.
#[derive(Debug, Clone)]
pub struct Step {
    pub next: RingState,
    /// Control inputs applied during this step, kick override included.
    pub controls: Vec<f64>,
    /// True if any bumper-to-bumper gap was non-positive at the pre-step
    /// state. Never fatal; the map stays well defined.
    pub overlap: bool,
}

/// Advance the map by one step: controls for all vehicles are evaluated on
/// the time-t state first, then all kinematics update in parallel.
pub fn step(state: &RingState, cfg: &RingConfig, kick: Option<&KickSchedule>) -> Step {
    let n = cfg.n_vehicles;
    let c = cfg.circumference;
    let p = &cfg.params;

    let mut overlap = false;
    let mut controls = Vec::with_capacity(n);
    for i in 0..n {
        let gap = state.gap(i, c);
        if gap - p.vehicle_length <= 0.0 {
            overlap = true;
        }
        let view = DriverView {
            ego: KinematicState::new(state.x[i], state.v[i], state.a[i]),
            leader: KinematicState::new(
                state.x[i] + gap,
                state.v[(i + 1) % n],
                state.a[(i + 1) % n],
            ),
            gap,
        };
        controls.push(control(&view, p));
    }
    if let Some(k) = kick {
        if k.is_active(state.time_index, p.dt, state.v[k.vehicle]) {
            controls[k.vehicle] = k.control_override;
        }
    }

    let mut next = RingState {
        time_index: state.time_index + 1,
        x: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        prev_control: controls.clone(),
    };
    for i in 0..n {
        next.x.push((state.x[i] + state.v[i] * p.dt).rem_euclid(c));
        next.v.push(state.v[i] + state.a[i] * p.dt);
        next.a
            .push(p.gamma * state.a[i] + (controls[i] - p.gamma * state.prev_control[i]));
    }
    Step {
        next,
        controls,
        overlap,
    }
}

/// Equally spaced vehicles moving at `v_init`.
pub fn init_uniform(cfg: &RingConfig, v_init: f64) -> Result<RingState> {
    cfg.validate()?;
    let n = cfg.n_vehicles;
    let spacing = cfg.circumference / n as f64;
    Ok(RingState {
        time_index: 0,
        x: (0..n).map(|i| i as f64 * spacing).collect(),
        v: vec![v_init; n],
        a: vec![0.0; n],
        prev_control: vec![0.0; n],
    })
}

/// One recorded time slice of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: u64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    /// Control input computed from this frame's state.
    pub u_bar: Vec<f64>,
    pub overlap: bool,
}

/// Recorded time series of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n_vehicles: usize,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn from_frames(n_vehicles: usize, frames: Vec<Frame>) -> Self {
        Self { n_vehicles, frames }
    }

    pub fn last_t(&self) -> u64 {
        self.frames.last().map_or(0, |f| f.t)
    }

    /// True if any recorded frame saw a non-positive bumper gap.
    pub fn any_overlap(&self) -> bool {
        self.frames.iter().any(|f| f.overlap)
    }
}

/// Run the map from `state` for `steps` steps, recording every
/// `record_every`-th pre-step state together with the controls computed
/// from it.
///
/// The kick is checked per step and dies permanently once its window ends
/// or the kicked vehicle's velocity drops to zero.
pub fn run_from(
    state: RingState,
    cfg: &RingConfig,
    steps: u64,
    kick: Option<KickSchedule>,
    record_every: u64,
) -> Result<Trajectory> {
    if steps < 1 {
        return Err(Error::InvalidParams("steps must be at least 1".into()));
    }
    if record_every < 1 {
        return Err(Error::InvalidParams(
            "record_every must be at least 1".into(),
        ));
    }
    cfg.validate()?;
    if let Some(k) = kick {
        if k.vehicle >= cfg.n_vehicles {
            return Err(Error::InvalidParams(format!(
                "kick vehicle {} out of range (N = {})",
                k.vehicle, cfg.n_vehicles
            )));
        }
    }

    let mut frames = Vec::with_capacity((steps / record_every + 1) as usize);
    let mut current = state;
    let mut kick_alive = kick.is_some();
    for s in 0..steps {
        let active_kick = if kick_alive {
            let k = kick.as_ref().unwrap();
            let now = current.time_index as f64 * cfg.params.dt;
            if now >= k.start_time + k.duration
                || (k.in_window(current.time_index, cfg.params.dt)
                    && current.v[k.vehicle] <= 0.0)
            {
                kick_alive = false;
                None
            } else {
                Some(k)
            }
        } else {
            None
        };
        let out = step(&current, cfg, active_kick);
        if s % record_every == 0 {
            frames.push(Frame {
                t: current.time_index,
                x: current.x.clone(),
                v: current.v.clone(),
                a: current.a.clone(),
                u_bar: out.controls,
                overlap: out.overlap,
            });
        }
        current = out.next;
    }
    Ok(Trajectory {
        n_vehicles: cfg.n_vehicles,
        frames,
    })
}

/// Run the braking protocol: equally spaced start at v* - 1, then `kick`.
pub fn run(
    cfg: &RingConfig,
    steps: u64,
    kick: Option<KickSchedule>,
    record_every: u64,
) -> Result<Trajectory> {
    let state = init_uniform(cfg, cfg.params.v_star - 1.0)?;
    run_from(state, cfg, steps, kick, record_every)
}

/// Order parameters of a window: mean velocity spread A and mean velocity V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderParameters {
    /// mean over t of (max_i v - min_i v) [m/s].
    pub amplitude_a: f64,
    /// mean over i and t of v [m/s].
    pub mean_velocity_v: f64,
    /// Time-index window the means were taken over (inclusive).
    pub window: (u64, u64),
}

/// Compute A and V over the frames with t inside `window` (inclusive).
pub fn order_parameters(traj: &Trajectory, window: (u64, u64)) -> Result<OrderParameters> {
    let frames: Vec<&Frame> = traj
        .frames
        .iter()
        .filter(|f| f.t >= window.0 && f.t <= window.1)
        .collect();
    if frames.is_empty() {
        return Err(Error::EmptyWindow {
            start: window.0,
            end: window.1,
        });
    }
    let mut spread_sum = 0.0;
    let mut v_sum = 0.0;
    let mut v_count = 0usize;
    for f in &frames {
        let max = f.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = f.v.iter().cloned().fold(f64::INFINITY, f64::min);
        spread_sum += max - min;
        v_sum += f.v.iter().sum::<f64>();
        v_count += f.v.len();
    }
    Ok(OrderParameters {
        amplitude_a: spread_sum / frames.len() as f64,
        mean_velocity_v: v_sum / v_count as f64,
        window,
    })
}

/// Verdict of the limit-solution classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitClass {
    FreeFlow,
    StopAndGo,
    Ambiguous,
}

impl std::fmt::Display for LimitClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LimitClass::FreeFlow => "free-flow",
            LimitClass::StopAndGo => "stop-and-go",
            LimitClass::Ambiguous => "ambiguous",
        };
        f.write_str(s)
    }
}

/// Amplitude thresholds separating the limit solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyThresholds {
    /// A below this is free flow [m/s].
    pub a_free_flow: f64,
    /// A above this is a stop-and-go wave [m/s].
    pub a_stop_and_go: f64,
    /// Fraction of the trajectory discarded as transient.
    pub transient_fraction: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self {
            a_free_flow: 0.05,
            a_stop_and_go: 1.0,
            transient_fraction: 0.5,
        }
    }
}

/// Classify the post-transient window of a trajectory and report the order
/// parameters it was judged on.
pub fn classify(
    traj: &Trajectory,
    thresholds: &ClassifyThresholds,
) -> Result<(LimitClass, OrderParameters)> {
    let t_end = traj.last_t();
    let t_start = (t_end as f64 * thresholds.transient_fraction).ceil() as u64;
    let params = order_parameters(traj, (t_start, t_end))?;
    let class = if params.amplitude_a < thresholds.a_free_flow {
        LimitClass::FreeFlow
    } else if params.amplitude_a > thresholds.a_stop_and_go {
        LimitClass::StopAndGo
    } else {
        LimitClass::Ambiguous
    };
    Ok((class, params))
}
