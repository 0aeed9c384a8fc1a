//! Scheduling rules as pure transition functions over the queue/server state.
//!
//! Both the simulator and the Markov-chain builder drive [`decide`], so the
//! two engines cannot disagree about what a policy does.
//!
//! Queue lengths count the job in service. Preempted jobs keep their
//! remaining work (preempt-resume); that bookkeeping lives with the caller,
//! this module only chooses which queue the server attends.

use thiserror::Error;

use crate::model::{JobClass, JobRecord, PolicySpec, Threshold};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("trigger {trigger:?} is inconsistent with state {state:?}")]
    InconsistentTrigger {
        trigger: Trigger,
        state: SchedulerState,
    },
    #[error("FCFS departure needs the class of the oldest waiting job")]
    MissingArrivalOrder,
}

/// Which queue the server is attending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServerPosition {
    ServingQuery,
    ServingUpdate,
    Idle,
}

impl ServerPosition {
    pub fn serving(class: JobClass) -> Self {
        match class {
            JobClass::Update => ServerPosition::ServingUpdate,
            JobClass::Query => ServerPosition::ServingQuery,
        }
    }

    pub fn class(self) -> Option<JobClass> {
        match self {
            ServerPosition::ServingQuery => Some(JobClass::Query),
            ServerPosition::ServingUpdate => Some(JobClass::Update),
            ServerPosition::Idle => None,
        }
    }

    fn mirrored(self) -> Self {
        match self {
            ServerPosition::ServingQuery => ServerPosition::ServingUpdate,
            ServerPosition::ServingUpdate => ServerPosition::ServingQuery,
            ServerPosition::Idle => ServerPosition::Idle,
        }
    }
}

/// Queue lengths (in service included) plus server position.
///
/// `emptying` marks a commitment to exhaust the current queue before
/// switching, as the single-threshold policies require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchedulerState {
    pub n_q: u32,
    pub n_u: u32,
    pub position: ServerPosition,
    pub emptying: bool,
}

impl SchedulerState {
    pub fn len(&self, class: JobClass) -> u32 {
        match class {
            JobClass::Update => self.n_u,
            JobClass::Query => self.n_q,
        }
    }

    fn len_mut(&mut self, class: JobClass) -> &mut u32 {
        match class {
            JobClass::Update => &mut self.n_u,
            JobClass::Query => &mut self.n_q,
        }
    }

    pub fn is_consistent(&self) -> bool {
        match self.position {
            ServerPosition::Idle => self.n_q == 0 && self.n_u == 0 && !self.emptying,
            ServerPosition::ServingQuery => self.n_q >= 1,
            ServerPosition::ServingUpdate => self.n_u >= 1,
        }
    }

    /// The same state with update and query roles exchanged.
    pub fn mirrored(&self) -> Self {
        Self {
            n_q: self.n_u,
            n_u: self.n_q,
            position: self.position.mirrored(),
            emptying: self.emptying,
        }
    }

    fn serve(&mut self, class: JobClass, emptying: bool) {
        self.position = ServerPosition::serving(class);
        self.emptying = emptying;
    }

    fn idle(&mut self) {
        self.position = ServerPosition::Idle;
        self.emptying = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trigger {
    ArrivalUpdate,
    ArrivalQuery,
    DepartureUpdate,
    DepartureQuery,
}

impl Trigger {
    pub fn arrival(class: JobClass) -> Self {
        match class {
            JobClass::Update => Trigger::ArrivalUpdate,
            JobClass::Query => Trigger::ArrivalQuery,
        }
    }

    pub fn departure(class: JobClass) -> Self {
        match class {
            JobClass::Update => Trigger::DepartureUpdate,
            JobClass::Query => Trigger::DepartureQuery,
        }
    }

    pub fn class(self) -> JobClass {
        match self {
            Trigger::ArrivalUpdate | Trigger::DepartureUpdate => JobClass::Update,
            Trigger::ArrivalQuery | Trigger::DepartureQuery => JobClass::Query,
        }
    }

    pub fn is_arrival(self) -> bool {
        matches!(self, Trigger::ArrivalUpdate | Trigger::ArrivalQuery)
    }

    pub fn mirrored(self) -> Self {
        match self {
            Trigger::ArrivalUpdate => Trigger::ArrivalQuery,
            Trigger::ArrivalQuery => Trigger::ArrivalUpdate,
            Trigger::DepartureUpdate => Trigger::DepartureQuery,
            Trigger::DepartureQuery => Trigger::DepartureUpdate,
        }
    }
}

/// Empty system with an idle server.
pub fn initial_state() -> SchedulerState {
    SchedulerState {
        n_q: 0,
        n_u: 0,
        position: ServerPosition::Idle,
        emptying: false,
    }
}

/// Applies `trigger` to `state` and returns the post-event state under `policy`.
///
/// `oldest_waiting` is the class of the oldest job still waiting once the
/// trigger has been applied (the head of the merged arrival-ordered line).
/// Only FCFS departures consult it; other policies ignore it.
pub fn decide(
    policy: &PolicySpec,
    state: &SchedulerState,
    trigger: Trigger,
    oldest_waiting: Option<JobClass>,
) -> Result<SchedulerState, PolicyError> {
    let inconsistent = || PolicyError::InconsistentTrigger {
        trigger,
        state: *state,
    };
    if !state.is_consistent() {
        return Err(inconsistent());
    }

    let class = trigger.class();
    let mut next = *state;
    if trigger.is_arrival() {
        *next.len_mut(class) += 1;
    } else {
        if state.position.class() != Some(class) {
            return Err(inconsistent());
        }
        *next.len_mut(class) -= 1;
    }

    match *policy {
        PolicySpec::Fcfs => fcfs(&mut next, trigger, oldest_waiting)?,
        PolicySpec::QueryK(k) => single_threshold(&mut next, trigger, JobClass::Query, k),
        PolicySpec::UpdateK(k) => single_threshold(&mut next, trigger, JobClass::Update, k),
        PolicySpec::JointMN { update, query } => joint(&mut next, trigger, update, query),
    }
    debug_assert!(next.is_consistent(), "{policy:?} produced {next:?}");
    Ok(next)
}

fn fcfs(
    next: &mut SchedulerState,
    trigger: Trigger,
    oldest_waiting: Option<JobClass>,
) -> Result<(), PolicyError> {
    if trigger.is_arrival() {
        if next.position == ServerPosition::Idle {
            next.serve(trigger.class(), false);
        }
        return Ok(());
    }
    if next.n_q + next.n_u == 0 {
        next.idle();
        return Ok(());
    }
    match oldest_waiting {
        Some(head) if next.len(head) > 0 => {
            next.serve(head, false);
            Ok(())
        }
        _ => Err(PolicyError::MissingArrivalOrder),
    }
}

/// Query-k (`favoured` = Query) and Update-k (`favoured` = Update).
fn single_threshold(
    next: &mut SchedulerState,
    trigger: Trigger,
    favoured: JobClass,
    k: Threshold,
) {
    let other = favoured.other();
    let class = trigger.class();
    match next.position {
        ServerPosition::Idle => {
            // Only an arrival can hit an idle server.
            next.serve(class, class == favoured);
        }
        pos if pos == ServerPosition::serving(other) => {
            if trigger.is_arrival() {
                if class == favoured && k.is_reached(next.len(favoured)) {
                    next.serve(favoured, true);
                }
            } else if next.len(other) == 0 {
                if next.len(favoured) > 0 {
                    next.serve(favoured, true);
                } else {
                    next.idle();
                }
            }
        }
        _ => {
            // Serving the favoured queue: exhaust it, arrivals included.
            if !trigger.is_arrival() && next.len(favoured) == 0 {
                if next.len(other) > 0 {
                    next.serve(other, false);
                } else {
                    next.idle();
                }
            }
        }
    }
}

fn joint(next: &mut SchedulerState, trigger: Trigger, update: Threshold, query: Threshold) {
    let reached = |s: &SchedulerState, c: JobClass| match c {
        JobClass::Update => update.is_reached(s.n_u),
        JobClass::Query => query.is_reached(s.n_q),
    };
    let class = trigger.class();
    match next.position.class() {
        None => next.serve(class, false),
        Some(current) if trigger.is_arrival() => {
            // A queue reaching its threshold takes the server; when both are
            // reached the queue that just received the arrival wins.
            if current != class && reached(next, class) {
                next.serve(class, false);
            }
        }
        Some(current) => {
            let other = current.other();
            if next.len(current) == 0 {
                if next.len(other) > 0 {
                    next.serve(other, false);
                } else {
                    next.idle();
                }
            } else if reached(next, other) && !reached(next, current) {
                next.serve(other, false);
            }
        }
    }
}

/// Merged arrival-ordered service line for FCFS, as indices into `jobs`.
///
/// Simultaneous arrivals put the update first.
pub fn equivalent_fcfs_order(jobs: &[JobRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| {
        jobs[a]
            .arrival_time
            .total_cmp(&jobs[b].arrival_time)
            .then(jobs[a].class.cmp(&jobs[b].class))
    });
    order
}
