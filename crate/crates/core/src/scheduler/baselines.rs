//! The five scheduling baselines. None of them use the GPR banks: receivers
//! hold the last received value, except the event-triggered baseline whose
//! controller runs a Kalman filter.

use super::{Policy, SchedulerKind, SchedulerParams, SlotDecision, SlotOutcome, SlotView};
use crate::control::{self, KalmanState};
use crate::estimation::MmseResult;
use crate::numerics::{Matrix, Vector};
use crate::plant::LtiSystem;

/// Zero-order-hold receiver state shared by the baselines.
struct HeldValues {
    state: Vec<Vector>,
    action: Vec<Vector>,
}

impl HeldValues {
    fn new(m: usize, sys: &LtiSystem) -> Self {
        Self {
            state: vec![Vector::zeros(sys.state_dim()); m],
            action: vec![Vector::zeros(sys.action_dim()); m],
        }
    }
}

/// Fixed repeating order, both links, fixed transmit power.
pub struct RoundRobin {
    m: usize,
    p_max_u: f64,
    p_max_d: f64,
    held: HeldValues,
}

impl RoundRobin {
    pub fn new(m: usize, sys: &LtiSystem, params: SchedulerParams) -> Self {
        Self {
            m,
            p_max_u: params.p_max_u,
            p_max_d: params.p_max_d,
            held: HeldValues::new(m, sys),
        }
    }

    /// The system owning slot `k` in the repeating order.
    pub fn turn(slot: i64, m: usize) -> usize {
        (slot.rem_euclid(m as i64)) as usize
    }
}

impl Policy for RoundRobin {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::RoundRobin
    }

    fn decide(&mut self, view: &SlotView) -> SlotDecision {
        let mut d = SlotDecision::idle(self.m);
        let target = Self::turn(view.slot, self.m);
        if !view.systems[target].diverged {
            d.alpha_u[target] = true;
            d.alpha_d[target] = true;
            d.p_u[target] = self.p_max_u;
            d.p_d[target] = self.p_max_d;
        }
        d
    }

    fn controller_state(&self, i: usize) -> Vector {
        self.held.state[i].clone()
    }

    fn actuator_action(&self, i: usize) -> Vector {
        self.held.action[i].clone()
    }

    fn after_uplink(&mut self, i: usize, _slot: i64, xi_u: bool, mmse: Option<&MmseResult>) {
        if xi_u {
            self.held.state[i] = mmse.unwrap().estimate.clone();
        }
    }

    fn after_downlink(&mut self, i: usize, _slot: i64, xi_d: bool, mmse: Option<&MmseResult>) {
        if xi_d {
            self.held.action[i] = mmse.unwrap().estimate.clone();
        }
    }
}

/// Grants each direction to the system with the strongest channel.
pub struct Opportunistic {
    m: usize,
    p_max_u: f64,
    p_max_d: f64,
    held: HeldValues,
}

impl Opportunistic {
    pub fn new(m: usize, sys: &LtiSystem, params: SchedulerParams) -> Self {
        Self {
            m,
            p_max_u: params.p_max_u,
            p_max_d: params.p_max_d,
            held: HeldValues::new(m, sys),
        }
    }
}

impl Policy for Opportunistic {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Opportunistic
    }

    fn decide(&mut self, view: &SlotView) -> SlotDecision {
        let mut d = SlotDecision::idle(self.m);
        let argmax = |gain: &dyn Fn(usize) -> f64| -> Option<usize> {
            let mut best: Option<(usize, f64)> = None;
            for (i, input) in view.systems.iter().enumerate() {
                if input.diverged {
                    continue;
                }
                let g = gain(i);
                if best.is_none_or(|(_, b)| g > b) {
                    best = Some((i, g));
                }
            }
            best.map(|(i, _)| i)
        };
        if let Some(u) = argmax(&|i| view.systems[i].h_u.norm_squared()) {
            d.alpha_u[u] = true;
            d.p_u[u] = self.p_max_u;
        }
        if let Some(dl) = argmax(&|i| view.systems[i].h_d.norm_squared()) {
            d.alpha_d[dl] = true;
            d.p_d[dl] = self.p_max_d;
        }
        d
    }

    fn controller_state(&self, i: usize) -> Vector {
        self.held.state[i].clone()
    }

    fn actuator_action(&self, i: usize) -> Vector {
        self.held.action[i].clone()
    }

    fn after_uplink(&mut self, i: usize, _slot: i64, xi_u: bool, mmse: Option<&MmseResult>) {
        if xi_u {
            self.held.state[i] = mmse.unwrap().estimate.clone();
        }
    }

    fn after_downlink(&mut self, i: usize, _slot: i64, xi_d: bool, mmse: Option<&MmseResult>) {
        if xi_d {
            self.held.action[i] = mmse.unwrap().estimate.clone();
        }
    }
}

/// Single-winner event triggering on the Kalman-predicted state discrepancy;
/// the winner gets both links at fixed power.
pub struct EventTriggered {
    m: usize,
    p_max_u: f64,
    p_max_d: f64,
    threshold: f64,
    sys: LtiSystem,
    kf: Vec<KalmanState>,
    /// State estimate at the last reception (or the initial belief).
    reference: Vec<Vector>,
    /// The controller's belief of the action the actuator holds: the last
    /// command that was actually delivered downlink.
    believed_applied: Vec<Vector>,
    /// Command computed this slot, promoted to `believed_applied` on
    /// downlink delivery.
    last_cmd: Vec<Vector>,
    /// Time-updated filter pending this slot's measurement.
    pending: Vec<KalmanState>,
    held_action: Vec<Vector>,
    /// Until the first reception the filter has seen nothing; such systems
    /// count as maximally discrepant so the trigger can bootstrap.
    received_once: Vec<bool>,
}

impl EventTriggered {
    pub fn new(m: usize, sys: &LtiSystem, params: SchedulerParams, threshold: f64) -> Self {
        let d = sys.state_dim();
        let p = sys.action_dim();
        let init = KalmanState::new(Vector::zeros(d), Matrix::identity(d, d));
        Self {
            m,
            p_max_u: params.p_max_u,
            p_max_d: params.p_max_d,
            threshold,
            sys: sys.clone(),
            kf: vec![init.clone(); m],
            reference: vec![Vector::zeros(d); m],
            believed_applied: vec![Vector::zeros(p); m],
            last_cmd: vec![Vector::zeros(p); m],
            pending: vec![init; m],
            held_action: vec![Vector::zeros(p); m],
            received_once: vec![false; m],
        }
    }
}

impl Policy for EventTriggered {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::EventTriggered
    }

    fn decide(&mut self, view: &SlotView) -> SlotDecision {
        let mut d = SlotDecision::idle(self.m);
        let mut best: Option<(usize, f64)> = None;
        for (i, input) in view.systems.iter().enumerate() {
            let predicted = control::kalman_predict_update(
                &self.sys,
                &self.kf[i],
                &self.believed_applied[i],
                None,
            )
            .expect("time update cannot fail");
            let discrepancy = if self.received_once[i] {
                (&predicted.mean - &self.reference[i]).norm()
            } else {
                f64::MAX
            };
            self.pending[i] = predicted;
            if input.diverged {
                continue;
            }
            if discrepancy > self.threshold && best.is_none_or(|(_, b)| discrepancy > b) {
                best = Some((i, discrepancy));
            }
        }
        if let Some((winner, _)) = best {
            d.alpha_u[winner] = true;
            d.alpha_d[winner] = true;
            d.p_u[winner] = self.p_max_u;
            d.p_d[winner] = self.p_max_d;
        }
        d
    }

    fn controller_state(&self, i: usize) -> Vector {
        self.pending[i].mean.clone()
    }

    fn actuator_action(&self, i: usize) -> Vector {
        self.held_action[i].clone()
    }

    fn after_uplink(&mut self, i: usize, _slot: i64, xi_u: bool, mmse: Option<&MmseResult>) {
        if xi_u {
            let res = mmse.unwrap();
            // MMSE residual covariance is exactly the observation noise
            let updated = control::kalman_predict_update(
                &self.sys,
                &self.kf[i],
                &self.believed_applied[i],
                Some((&res.estimate, &res.error_cov)),
            )
            .expect("measurement update failed");
            self.kf[i] = updated;
            self.reference[i] = self.kf[i].mean.clone();
            self.received_once[i] = true;
        } else {
            self.kf[i] = self.pending[i].clone();
        }
    }

    fn after_action(&mut self, i: usize, _slot: i64, u_cmd: &Vector) {
        self.last_cmd[i] = u_cmd.clone();
    }

    fn after_downlink(&mut self, i: usize, _slot: i64, xi_d: bool, mmse: Option<&MmseResult>) {
        if xi_d {
            self.held_action[i] = mmse.unwrap().estimate.clone();
            self.believed_applied[i] = self.last_cmd[i].clone();
        }
    }
}

/// Sensor-side event triggering over orthogonal subchannels: every triggered
/// system transmits both directions simultaneously at fixed power.
pub struct EventTriggeredFdma {
    m: usize,
    p_max_u: f64,
    p_max_d: f64,
    threshold: f64,
    /// True state at the last delivered uplink.
    reference: Vec<Vector>,
    held: HeldValues,
}

impl EventTriggeredFdma {
    pub fn new(m: usize, sys: &LtiSystem, params: SchedulerParams, threshold: f64) -> Self {
        Self {
            m,
            p_max_u: params.p_max_u,
            p_max_d: params.p_max_d,
            threshold,
            reference: vec![Vector::zeros(sys.state_dim()); m],
            held: HeldValues::new(m, sys),
        }
    }
}

impl Policy for EventTriggeredFdma {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::EventTriggeredFdma
    }

    fn decide(&mut self, view: &SlotView) -> SlotDecision {
        let mut d = SlotDecision::idle(self.m);
        for (i, input) in view.systems.iter().enumerate() {
            if input.diverged {
                continue;
            }
            if (input.x_true - &self.reference[i]).norm() > self.threshold {
                d.alpha_u[i] = true;
                d.alpha_d[i] = true;
                d.p_u[i] = self.p_max_u;
                d.p_d[i] = self.p_max_d;
            }
        }
        d
    }

    fn controller_state(&self, i: usize) -> Vector {
        self.held.state[i].clone()
    }

    fn actuator_action(&self, i: usize) -> Vector {
        self.held.action[i].clone()
    }

    fn after_uplink(&mut self, i: usize, _slot: i64, xi_u: bool, mmse: Option<&MmseResult>) {
        if xi_u {
            self.held.state[i] = mmse.unwrap().estimate.clone();
        }
    }

    fn after_downlink(&mut self, i: usize, _slot: i64, xi_d: bool, mmse: Option<&MmseResult>) {
        if xi_d {
            self.held.action[i] = mmse.unwrap().estimate.clone();
        }
    }

    fn end_slot(&mut self, outcome: &SlotOutcome) {
        // the trigger reference refreshes once the controller actually got
        // the state, so failed transmissions keep the pressure on
        for i in 0..self.m {
            if outcome.xi_u[i] {
                self.reference[i] = self.held.state[i].clone();
            }
        }
    }
}

/// Perfect channels: every loop closes every slot. The harness bypasses the
/// channel path entirely, so the fallbacks below are never consulted.
pub struct Ideal {
    m: usize,
    state_dim: usize,
    action_dim: usize,
}

impl Ideal {
    pub fn new(m: usize, sys: &LtiSystem) -> Self {
        Self {
            m,
            state_dim: sys.state_dim(),
            action_dim: sys.action_dim(),
        }
    }
}

impl Policy for Ideal {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Ideal
    }

    fn decide(&mut self, view: &SlotView) -> SlotDecision {
        let mut d = SlotDecision::idle(self.m);
        for (i, input) in view.systems.iter().enumerate() {
            if !input.diverged {
                d.alpha_u[i] = true;
                d.alpha_d[i] = true;
            }
        }
        d
    }

    fn controller_state(&self, _i: usize) -> Vector {
        Vector::zeros(self.state_dim)
    }

    fn actuator_action(&self, _i: usize) -> Vector {
        Vector::zeros(self.action_dim)
    }
}
