//! Event loop for one replication.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use super::aoi::AoiTracker;
use super::calendar::{Event, EventCalendar};
use super::clock::SimTime;
use super::rng::{sample_exponential, stream, StreamKind};
use super::{SimConfig, SimError};
use crate::model::{JobClass, JobRecord, ModelParams, PolicySpec, RateKind, ReplicationMetrics};
use crate::policy::{decide, initial_state, SchedulerState, ServerPosition, Trigger};

#[derive(Debug, Clone, Copy)]
struct Job {
    arrival: SimTime,
    requirement: SimTime,
    remaining: SimTime,
}

/// Server-time accounting at the horizon, in clock ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkLedger {
    pub busy: u64,
    pub arrived: u64,
    pub completed: u64,
    /// Unserved work of jobs still present at the horizon.
    pub remaining: u64,
}

/// Per-update sample used to check the peak-age decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateSample {
    /// Arrival of the preceding update (the start time for the first one).
    pub previous_arrival: f64,
    pub arrival: f64,
    pub completion: f64,
    pub peak_age: f64,
}

/// Full outcome of one replication, including raw samples.
#[derive(Debug, Clone)]
pub struct ReplicationTrace {
    pub metrics: ReplicationMetrics,
    pub completed_jobs: Vec<JobRecord>,
    pub update_samples: Vec<UpdateSample>,
    pub work: WorkLedger,
}

struct Source {
    arrivals: ChaCha8Rng,
    services: ChaCha8Rng,
    arrival_rate: f64,
    service_rate: f64,
}

impl Source {
    fn next_gap(&mut self) -> SimTime {
        SimTime::from_units(sample_exponential(self.arrival_rate, &mut self.arrivals))
    }

    fn next_requirement(&mut self) -> SimTime {
        let s = SimTime::from_units(sample_exponential(self.service_rate, &mut self.services));
        s.max(SimTime::from_ticks(1))
    }
}

fn idx(class: JobClass) -> usize {
    match class {
        JobClass::Update => 0,
        JobClass::Query => 1,
    }
}

/// Piecewise-constant level integrated over the measurement window.
#[derive(Debug, Default)]
struct LevelIntegral {
    area: f64,
}

struct Replication<'a> {
    policy: &'a PolicySpec,
    warmup: SimTime,
    horizon: SimTime,
    sources: [Source; 2],
    queues: [VecDeque<Job>; 2],
    state: SchedulerState,
    service_started: SimTime,
    calendar: EventCalendar,
    now: SimTime,
    aoi: AoiTracker,
    nq: LevelIntegral,
    nu: LevelIntegral,
    work: WorkLedger,
    response_sum: f64,
    update_time_sum: f64,
    completed: [u64; 2],
    trace: Option<(Vec<JobRecord>, Vec<UpdateSample>)>,
}

impl<'a> Replication<'a> {
    fn new(
        params: &ModelParams,
        policy: &'a PolicySpec,
        config: &SimConfig,
        rep_index: u32,
        traced: bool,
    ) -> Self {
        let rep = u64::from(rep_index);
        let source = |class: JobClass| Source {
            arrivals: stream(config.base_seed, rep, StreamKind::arrivals(class)),
            services: stream(config.base_seed, rep, StreamKind::services(class)),
            arrival_rate: params.rate(class, RateKind::Arrival),
            service_rate: params.rate(class, RateKind::Service),
        };
        let mut sources = [source(JobClass::Update), source(JobClass::Query)];
        let first_u = sources[0].next_gap();
        let first_q = sources[1].next_gap();
        let warmup = SimTime::from_units(config.warmup);
        Self {
            policy,
            warmup,
            horizon: SimTime::from_units(config.horizon),
            sources,
            queues: [VecDeque::new(), VecDeque::new()],
            state: initial_state(),
            service_started: SimTime::ZERO,
            calendar: EventCalendar::new(first_u, first_q),
            now: SimTime::ZERO,
            aoi: AoiTracker::new(0.0, warmup.as_units()),
            nq: LevelIntegral::default(),
            nu: LevelIntegral::default(),
            work: WorkLedger::default(),
            response_sum: 0.0,
            update_time_sum: 0.0,
            completed: [0, 0],
            trace: traced.then(|| (Vec::new(), Vec::new())),
        }
    }

    /// Integrates levels and busy time over `[self.now, to]`.
    fn advance(&mut self, to: SimTime) {
        if self.state.position != ServerPosition::Idle {
            self.work.busy += (to - self.now).ticks();
        }
        let from = self.now.max(self.warmup);
        if to > from {
            let dt = (to - from).as_units();
            self.nq.area += f64::from(self.state.n_q) * dt;
            self.nu.area += f64::from(self.state.n_u) * dt;
        }
        self.now = to;
    }

    fn oldest_waiting(&self) -> Option<JobClass> {
        match (self.queues[0].front(), self.queues[1].front()) {
            (None, None) => None,
            (Some(_), None) => Some(JobClass::Update),
            (None, Some(_)) => Some(JobClass::Query),
            (Some(u), Some(q)) => Some(if u.arrival <= q.arrival {
                JobClass::Update
            } else {
                JobClass::Query
            }),
        }
    }

    fn complete_head(&mut self, class: JobClass) -> Result<(), SimError> {
        let job = self.queues[idx(class)]
            .pop_front()
            .expect("completion scheduled for an empty queue");
        self.work.completed += job.requirement.ticks();
        let now = self.now.as_units();
        let arrival = job.arrival.as_units();
        let measured = self.now > self.warmup;
        if let Some((jobs, _)) = self.trace.as_mut() {
            jobs.push(JobRecord {
                class,
                arrival_time: arrival,
                service_requirement: job.requirement.as_units(),
                completion_time: Some(now),
            });
        }
        match class {
            JobClass::Query => {
                if measured {
                    self.response_sum += now - arrival;
                    self.completed[1] += 1;
                }
            }
            JobClass::Update => {
                let previous_arrival = self.aoi.freshest_generation();
                let peak = self.aoi.record_update_departure(arrival, now)?;
                if measured {
                    self.update_time_sum += now - arrival;
                    self.completed[0] += 1;
                }
                if let Some((_, samples)) = self.trace.as_mut() {
                    samples.push(UpdateSample {
                        previous_arrival,
                        arrival,
                        completion: now,
                        peak_age: peak,
                    });
                }
            }
        }
        Ok(())
    }

    fn start_service(&mut self) {
        let completion = self.state.position.class().map(|c| {
            let head = self.queues[idx(c)].front().expect("serving an empty queue");
            self.now + head.remaining
        });
        self.service_started = self.now;
        self.calendar.schedule_completion(completion);
    }

    fn step(&mut self, event: Event) -> Result<(), SimError> {
        let trigger = match event {
            Event::Arrival(class) => {
                let src = &mut self.sources[idx(class)];
                let requirement = src.next_requirement();
                let gap = src.next_gap();
                self.queues[idx(class)].push_back(Job {
                    arrival: self.now,
                    requirement,
                    remaining: requirement,
                });
                self.work.arrived += requirement.ticks();
                self.calendar.schedule_arrival(class, self.now + gap);
                Trigger::arrival(class)
            }
            Event::Completion => {
                let class = self
                    .state
                    .position
                    .class()
                    .expect("completion while idle");
                self.complete_head(class)?;
                Trigger::departure(class)
            }
        };

        let before = self.state.position;
        self.state = decide(self.policy, &self.state, trigger, self.oldest_waiting())?;
        let after = self.state.position;

        match event {
            Event::Completion => self.start_service(),
            Event::Arrival(_) if before != after => {
                if let Some(preempted) = before.class() {
                    // Preempt-resume: keep what is left of the interrupted job.
                    let served = self.now - self.service_started;
                    let head = self.queues[idx(preempted)]
                        .front_mut()
                        .expect("preempting an empty queue");
                    head.remaining = head.remaining - served;
                }
                self.start_service();
            }
            Event::Arrival(_) => {}
        }
        Ok(())
    }

    fn run(mut self) -> Result<ReplicationTrace, SimError> {
        loop {
            let (at, event) = self.calendar.peek();
            if at > self.horizon {
                break;
            }
            self.advance(at);
            self.step(event)?;
        }
        self.advance(self.horizon);

        let in_service = self.state.position.class();
        self.work.remaining = self
            .queues
            .iter()
            .enumerate()
            .flat_map(|(i, q)| q.iter().enumerate().map(move |(pos, job)| (i, pos, job)))
            .map(|(i, pos, job)| {
                let served = if pos == 0 && in_service.map(idx) == Some(i) {
                    (self.now - self.service_started).ticks()
                } else {
                    0
                };
                job.remaining.ticks() - served
            })
            .sum();

        let window = (self.horizon.max(self.warmup) - self.warmup).as_units();
        let per_window = |area: f64| (window > 0.0).then(|| area / window);
        let per_job = |sum: f64, n: u64| (n > 0).then(|| sum / n as f64);
        let metrics = ReplicationMetrics {
            mean_response_time: per_job(self.response_sum, self.completed[1]),
            mean_update_system_time: per_job(self.update_time_sum, self.completed[0]),
            mean_paoi: self.aoi.mean_paoi(),
            mean_aoi: self.aoi.mean_aoi(self.horizon.as_units()),
            mean_nq: per_window(self.nq.area),
            mean_nu: per_window(self.nu.area),
            completed_queries: self.completed[1],
            completed_updates: self.completed[0],
            window,
        };
        let (completed_jobs, update_samples) = self.trace.unwrap_or_default();
        Ok(ReplicationTrace {
            metrics,
            completed_jobs,
            update_samples,
            work: self.work,
        })
    }
}

pub(super) fn simulate(
    params: &ModelParams,
    policy: &PolicySpec,
    config: &SimConfig,
    rep_index: u32,
    traced: bool,
) -> Result<ReplicationTrace, SimError> {
    policy.validate()?;
    if rep_index >= config.replications {
        return Err(SimError::ReplicationOutOfRange {
            index: rep_index,
            replications: config.replications,
        });
    }
    Replication::new(params, policy, config, rep_index, traced).run()
}
