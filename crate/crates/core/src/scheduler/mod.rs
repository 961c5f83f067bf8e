//! Per-slot scheduling: the stability-aware drift-plus-penalty scheduler and
//! five baselines behind one policy interface.

mod baselines;
mod stability_aware;

pub use baselines::{EventTriggered, EventTriggeredFdma, Ideal, Opportunistic, RoundRobin};
pub use stability_aware::StabilityAware;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::MmseResult;
use crate::numerics::{Matrix, Vector};
use crate::plant::LtiSystem;

/// Drift-penalty trade-off and cost weights of the proposed scheduler.
#[derive(Debug, Clone, Copy)]
pub struct SchedulerParams {
    /// Weight of the cost terms against queue drift.
    pub v: f64,
    /// AoI cost weight.
    pub omega_beta: f64,
    /// Power cost weight.
    pub omega_p: f64,
    /// Upper clamp of the AoI auxiliary variable.
    pub b_max: f64,
    /// Uplink power cap, linear scale.
    pub p_max_u: f64,
    /// Downlink power cap, linear scale.
    pub p_max_d: f64,
}

/// Per-system virtual queues enforcing the time-averaged constraints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueues {
    pub q_beta_u: f64,
    pub q_beta_d: f64,
    pub q_p_u: f64,
    pub q_p_d: f64,
    pub q_c_u: f64,
    pub q_c_d: f64,
    pub q_c: f64,
}

impl VirtualQueues {
    pub fn max(&self) -> f64 {
        [
            self.q_beta_u,
            self.q_beta_d,
            self.q_p_u,
            self.q_p_d,
            self.q_c_u,
            self.q_c_d,
            self.q_c,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Network-wide schedule for one slot.
///
/// Contention-based schedulers grant at most one system per direction; the
/// FDMA and ideal baselines may schedule many at once.
#[derive(Debug, Clone)]
pub struct SlotDecision {
    pub alpha_u: Vec<bool>,
    pub alpha_d: Vec<bool>,
    pub p_u: Vec<f64>,
    pub p_d: Vec<f64>,
    pub gamma_beta_u: Vec<f64>,
    pub gamma_beta_d: Vec<f64>,
    pub gamma_p_u: Vec<f64>,
    pub gamma_p_d: Vec<f64>,
}

impl SlotDecision {
    pub fn idle(m: usize) -> Self {
        Self {
            alpha_u: vec![false; m],
            alpha_d: vec![false; m],
            p_u: vec![0.0; m],
            p_d: vec![0.0; m],
            gamma_beta_u: vec![0.0; m],
            gamma_beta_d: vec![0.0; m],
            gamma_p_u: vec![0.0; m],
            gamma_p_d: vec![0.0; m],
        }
    }

    pub fn scheduled_u(&self) -> usize {
        self.alpha_u.iter().filter(|&&a| a).count()
    }

    pub fn scheduled_d(&self) -> usize {
        self.alpha_d.iter().filter(|&&a| a).count()
    }
}

/// Optimal AoI auxiliary: the clamped stationary point of the convex
/// per-slot subproblem `min Q γ − V ω log(1 + γ)` over `[1, B_max]`.
pub fn aoi_auxiliary(q_beta: f64, params: &SchedulerParams) -> f64 {
    if q_beta <= 0.0 {
        return params.b_max;
    }
    ((params.v * params.omega_beta - q_beta) / q_beta)
        .max(1.0)
        .min(params.b_max)
}

/// Optimal power auxiliary, clamped stationary point over `[0, P_max]`.
pub fn power_auxiliary(q_p: f64, p_max: f64, params: &SchedulerParams) -> f64 {
    if q_p <= 0.0 {
        return p_max;
    }
    ((params.v * params.omega_p - q_p) / q_p).max(0.0).min(p_max)
}

/// Minimum power meeting the SNR threshold over the current block, with a
/// feasibility flag against the cap. A negative power queue falls back to
/// the cap. The hair of margin keeps the success indicator from flipping on
/// rounding when the resulting SNR is compared against the threshold.
pub fn allocate_power(q_p: f64, h: &Matrix, n0: f64, snr_th: f64, p_max: f64) -> (f64, bool) {
    let gain = h.norm_squared();
    if gain <= 0.0 {
        return (p_max, false);
    }
    let required = snr_th * n0 / gain * (1.0 + 1e-9);
    let feasible = required <= p_max;
    if q_p >= 0.0 {
        (required, feasible)
    } else {
        (p_max, feasible)
    }
}

/// Realized per-system quantities a queue update consumes.
#[derive(Debug, Clone, Copy)]
pub struct QueueInputs {
    /// AoI after this slot's update, per direction.
    pub beta_u: f64,
    pub beta_d: f64,
    /// Power actually spent (alpha * P), per direction.
    pub p_hat_u: f64,
    pub p_hat_d: f64,
    pub alpha_u: bool,
    pub alpha_d: bool,
    /// Clamped stability bounds of this slot.
    pub glb_u: f64,
    pub glb_d: f64,
    pub glb_ud: f64,
    pub gamma_beta_u: f64,
    pub gamma_beta_d: f64,
    pub gamma_p_u: f64,
    pub gamma_p_d: f64,
}

/// One step of every virtual queue: `max(Q - service, 0) + arrival`.
pub fn update_queues(q: &mut VirtualQueues, inp: &QueueInputs) {
    q.q_beta_u = (q.q_beta_u - inp.gamma_beta_u).max(0.0) + inp.beta_u;
    q.q_beta_d = (q.q_beta_d - inp.gamma_beta_d).max(0.0) + inp.beta_d;
    q.q_p_u = (q.q_p_u - inp.gamma_p_u).max(0.0) + inp.p_hat_u;
    q.q_p_d = (q.q_p_d - inp.gamma_p_d).max(0.0) + inp.p_hat_d;
    q.q_c_u = (q.q_c_u - if inp.alpha_u { 1.0 } else { 0.0 }).max(0.0) + inp.glb_u;
    q.q_c_d = (q.q_c_d - if inp.alpha_d { 1.0 } else { 0.0 }).max(0.0) + inp.glb_d;
    let coupled_service = if inp.alpha_u && inp.alpha_d { 1.0 } else { 0.0 };
    q.q_c = (q.q_c - coupled_service).max(0.0) + inp.glb_ud;
}

/// Per-system terms of the assignment objective. Scheduling system `i` on
/// the uplink costs `q1[i]`, on the downlink `q2[i]`, and granting it both
/// adds the coupling credit `q3[i]`.
#[derive(Debug, Clone)]
pub struct LinkCosts {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub q3: Vec<f64>,
    pub feasible_u: Vec<bool>,
    pub feasible_d: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub ul: Option<usize>,
    pub dl: Option<usize>,
    pub objective: f64,
}

/// Minimizes the assignment objective over every feasible schedule with at
/// most one system per direction, including the empty one. Candidates are
/// compared in the order idle, uplink-only, downlink-only, coupled,
/// decoupled pair; a later candidate must strictly improve the objective,
/// so exact ties resolve to the earlier class and, within a class, to the
/// lowest system index.
pub fn assign_links(costs: &LinkCosts) -> Assignment {
    let m = costs.q1.len();
    let best_of = |vals: &[f64], feas: &[bool]| -> (Option<usize>, Option<usize>) {
        let mut best: Option<usize> = None;
        let mut second: Option<usize> = None;
        for i in 0..m {
            if !feas[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) => {
                    if vals[i] < vals[b] {
                        second = best;
                        best = Some(i);
                    } else {
                        match second {
                            None => second = Some(i),
                            Some(s) => {
                                if vals[i] < vals[s] {
                                    second = Some(i);
                                }
                            }
                        }
                    }
                }
            }
        }
        (best, second)
    };

    let (best_u, second_u) = best_of(&costs.q1, &costs.feasible_u);
    let (best_d, second_d) = best_of(&costs.q2, &costs.feasible_d);

    let mut chosen = Assignment {
        ul: None,
        dl: None,
        objective: 0.0,
    };
    let mut consider = |cand: Assignment| {
        if cand.objective < chosen.objective {
            chosen = cand;
        }
    };

    if let Some(j) = best_u {
        consider(Assignment {
            ul: Some(j),
            dl: None,
            objective: costs.q1[j],
        });
    }
    if let Some(j) = best_d {
        consider(Assignment {
            ul: None,
            dl: Some(j),
            objective: costs.q2[j],
        });
    }
    // coupled: both links to one system, collecting the coupling credit
    let mut best_coupled: Option<(usize, f64)> = None;
    for i in 0..m {
        if costs.feasible_u[i] && costs.feasible_d[i] {
            let val = costs.q1[i] + costs.q2[i] + costs.q3[i];
            if best_coupled.is_none_or(|(_, v)| val < v) {
                best_coupled = Some((i, val));
            }
        }
    }
    if let Some((j, val)) = best_coupled {
        consider(Assignment {
            ul: Some(j),
            dl: Some(j),
            objective: val,
        });
    }
    // decoupled pair of two distinct systems
    if let (Some(u), Some(d)) = (best_u, best_d) {
        let pair = if u != d {
            Some((u, d))
        } else {
            let alt_d = second_d.map(|s| (u, s, costs.q1[u] + costs.q2[s]));
            let alt_u = second_u.map(|s| (s, d, costs.q1[s] + costs.q2[d]));
            match (alt_d, alt_u) {
                (Some((au, ad, av)), Some((bu, bd, bv))) => {
                    // value ties keep the uplink argmin
                    if av <= bv {
                        Some((au, ad))
                    } else {
                        Some((bu, bd))
                    }
                }
                (Some((au, ad, _)), None) => Some((au, ad)),
                (None, Some((bu, bd, _))) => Some((bu, bd)),
                (None, None) => None,
            }
        };
        if let Some((u, d)) = pair {
            consider(Assignment {
                ul: Some(u),
                dl: Some(d),
                objective: costs.q1[u] + costs.q2[d],
            });
        }
    }
    chosen
}

/// Which scheduling policy drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    StabilityAware,
    RoundRobin,
    Opportunistic,
    EventTriggered,
    EventTriggeredFdma,
    Ideal,
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::StabilityAware => "stability_aware",
            SchedulerKind::RoundRobin => "round_robin",
            SchedulerKind::Opportunistic => "opportunistic",
            SchedulerKind::EventTriggered => "event_triggered",
            SchedulerKind::EventTriggeredFdma => "event_triggered_fdma",
            SchedulerKind::Ideal => "ideal",
        }
    }

    /// Contention-based kinds grant at most one system per direction.
    pub fn is_contention(&self) -> bool {
        !matches!(self, SchedulerKind::EventTriggeredFdma | SchedulerKind::Ideal)
    }

    pub const ALL: [SchedulerKind; 6] = [
        SchedulerKind::StabilityAware,
        SchedulerKind::RoundRobin,
        SchedulerKind::Opportunistic,
        SchedulerKind::EventTriggered,
        SchedulerKind::EventTriggeredFdma,
        SchedulerKind::Ideal,
    ];
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stability_aware" => Ok(SchedulerKind::StabilityAware),
            "round_robin" => Ok(SchedulerKind::RoundRobin),
            "opportunistic" => Ok(SchedulerKind::Opportunistic),
            "event_triggered" => Ok(SchedulerKind::EventTriggered),
            "event_triggered_fdma" => Ok(SchedulerKind::EventTriggeredFdma),
            "ideal" => Ok(SchedulerKind::Ideal),
            other => Err(Error::Config(format!(
                "unknown scheduler '{other}' (expected one of stability_aware, round_robin, \
                 opportunistic, event_triggered, event_triggered_fdma, ideal)"
            ))),
        }
    }
}

/// Everything a policy may look at before committing a slot's schedule.
pub struct SlotView<'a> {
    pub slot: i64,
    pub n0: f64,
    pub snr_th_u: f64,
    pub snr_th_d: f64,
    /// Amplitude references of the analog normalization per direction;
    /// estimation error covariances scale with their squares.
    pub amp_u: f64,
    pub amp_d: f64,
    pub systems: Vec<SystemSlotInput<'a>>,
}

pub struct SystemSlotInput<'a> {
    pub sys: &'a LtiSystem,
    pub h_u: &'a Matrix,
    pub h_d: &'a Matrix,
    /// AoI carried in from the previous slot, per direction.
    pub beta_u_prev: u32,
    pub beta_d_prev: u32,
    /// True plant state; only sensor-side triggers may use it.
    pub x_true: &'a Vector,
    pub diverged: bool,
}

/// Realized slot results fed back to the policy once communication, AoI and
/// plant updates resolved.
pub struct SlotOutcome {
    pub slot: i64,
    pub alpha_u: Vec<bool>,
    pub alpha_d: Vec<bool>,
    pub xi_u: Vec<bool>,
    pub xi_d: Vec<bool>,
    /// AoI after this slot's update.
    pub beta_u: Vec<u32>,
    pub beta_d: Vec<u32>,
    pub power_u: Vec<f64>,
    pub power_d: Vec<f64>,
    pub diverged: Vec<bool>,
}

/// A co-design policy: the slot schedule plus the controller/actuator-side
/// fallbacks used when a link does not deliver.
pub trait Policy {
    fn kind(&self) -> SchedulerKind;

    fn decide(&mut self, view: &SlotView) -> SlotDecision;

    /// State fed to the LQR when the uplink did not deliver this slot.
    fn controller_state(&self, i: usize) -> Vector;

    /// Action applied when the downlink did not deliver this slot.
    fn actuator_action(&self, i: usize) -> Vector;

    fn after_uplink(&mut self, _i: usize, _slot: i64, _xi_u: bool, _mmse: Option<&MmseResult>) {}

    fn after_action(&mut self, _i: usize, _slot: i64, _u_cmd: &Vector) {}

    fn after_downlink(&mut self, _i: usize, _slot: i64, _xi_d: bool, _mmse: Option<&MmseResult>) {}

    fn end_slot(&mut self, _outcome: &SlotOutcome) {}

    /// Virtual-queue snapshot for the records; zero for baselines.
    fn queues(&self, _i: usize) -> VirtualQueues {
        VirtualQueues::default()
    }

    /// Mean predictor variances (uplink, downlink) for the records.
    fn prediction_variances(&self, _i: usize) -> (f64, f64) {
        (0.0, 0.0)
    }
}

/// Builds the policy for a scheduler kind.
#[allow(clippy::too_many_arguments)]
pub fn build_policy(
    kind: SchedulerKind,
    m: usize,
    sys: &LtiSystem,
    params: SchedulerParams,
    gpr: crate::prediction::KernelParams,
    gpr_mode: crate::prediction::GprMode,
    gpr_window: Option<usize>,
    amp_u: f64,
    amp_d: f64,
    trigger_threshold: f64,
    master_seed: u64,
) -> Box<dyn Policy> {
    match kind {
        SchedulerKind::StabilityAware => Box::new(StabilityAware::new(
            m,
            sys,
            params,
            gpr,
            gpr_mode,
            gpr_window,
            amp_u,
            amp_d,
            master_seed,
        )),
        SchedulerKind::RoundRobin => Box::new(RoundRobin::new(m, sys, params)),
        SchedulerKind::Opportunistic => Box::new(Opportunistic::new(m, sys, params)),
        SchedulerKind::EventTriggered => {
            Box::new(EventTriggered::new(m, sys, params, trigger_threshold))
        }
        SchedulerKind::EventTriggeredFdma => {
            Box::new(EventTriggeredFdma::new(m, sys, params, trigger_threshold))
        }
        SchedulerKind::Ideal => Box::new(Ideal::new(m, sys)),
    }
}
