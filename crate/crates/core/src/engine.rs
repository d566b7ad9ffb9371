//! Deterministic discrete-event engine.
//!
//! Events execute in `(time, sequence)` order on a single thread. Every random
//! draw is keyed by entity and counter (see [`crate::rng`]), so a scenario and
//! seed always produce the same trace bytes.
//!
//! Messages are routed when their send event executes and keep that route for
//! their whole lifetime. Synchronization sessions are small state machines
//! advanced by message deliveries and timeouts.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use crate::attacks::{AttackTag, AttackSpec, NetworkView};
use crate::clock::{ClockParameters, SoftwareClock};
use crate::delay::hop_offsets;
use crate::error::EngineError;
use crate::routing::{shortest_path, Route, RouteQuery, RoutingError};
use crate::sync::{berkeley_plan, cristian_correction, estimated_offset, SyncExchange, SyncReport, SyncRequest, SyncStatus};
use crate::topology::NetworkGraph;
use crate::trace::{self, BreakdownRecord, MessageStatus, RecordKind, SyncRecord, TraceRecord};
use crate::units::{secs_to_ps, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub seed: u64,
    /// Size of every synchronization message.
    pub sync_message_bits: f64,
    /// Lost messages time out after this many baseline round trips.
    pub timeout_factor: f64,
    /// Wait used when no attack-free baseline route exists.
    pub fallback_timeout_s: f64,
    /// Time between a request arriving at a peer and its reply leaving.
    pub server_service_s: f64,
    /// Emit `attack_edge` records at window boundaries.
    pub trace_attack_edges: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sync_message_bits: 512.0,
            timeout_factor: 5.0,
            fallback_timeout_s: 1.0,
            server_service_s: 0.0,
            trace_attack_edges: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Background,
    CristianRequest { session: u64 },
    CristianReply { session: u64, t_server_ps: i64 },
    BerkeleyPoll { session: u64 },
    BerkeleyReply { session: u64, t_member_ps: i64 },
    BerkeleyCorrection { session: u64, delta_ps: i64 },
}

impl Payload {
    fn session(&self) -> Option<u64> {
        match *self {
            Payload::Background => None,
            Payload::CristianRequest { session }
            | Payload::CristianReply { session, .. }
            | Payload::BerkeleyPoll { session }
            | Payload::BerkeleyReply { session, .. }
            | Payload::BerkeleyCorrection { session, .. } => Some(session),
        }
    }

    fn phase(&self) -> &'static str {
        match self {
            Payload::Background => "background",
            Payload::CristianRequest { .. } => "request",
            Payload::CristianReply { .. } => "reply",
            Payload::BerkeleyPoll { .. } => "poll",
            Payload::BerkeleyReply { .. } => "poll_reply",
            Payload::BerkeleyCorrection { .. } => "correction",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub id: u64,
    pub source: String,
    pub destination: String,
    pub size_bits: f64,
    pub payload: Payload,
    pub send_time: SimTime,
    pub delivery_time: Option<SimTime>,
    pub route: Option<Route>,
    pub status: MessageStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncPhase {
    Start,
    Complete,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    MessageSend { message_id: u64 },
    HopArrival { message_id: u64, hop: usize, dropped: Option<AttackTag> },
    Delivery { message_id: u64 },
    Timeout { session: u64, message_id: u64 },
    SyncStep { session: u64, phase: SyncPhase },
    AttackEdge { attack: usize, starting: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time: SimTime,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.sequence).cmp(&(other.time, other.sequence))
    }
}

#[derive(Clone, Debug, Default)]
struct CristianState {
    t0_ps: i64,
    request: u64,
    request_delivered: Option<SimTime>,
    reply: Option<u64>,
    exchange: Option<SyncExchange>,
    correction_ps: Option<i64>,
}

#[derive(Clone, Debug, Default)]
struct MemberState {
    t0_ps: i64,
    poll: u64,
    poll_delivered: Option<SimTime>,
    reply: Option<u64>,
    offset_ps: Option<i64>,
    exchange: Option<SyncExchange>,
    unreachable: bool,
    correction: Option<u64>,
    applied_at: Option<SimTime>,
    correction_lost: bool,
}

impl MemberState {
    fn polled(&self) -> bool {
        self.offset_ps.is_some() || self.unreachable
    }

    fn settled(&self) -> bool {
        self.unreachable || self.correction_lost || self.applied_at.is_some()
    }
}

#[derive(Clone, Debug, Default)]
struct BerkeleyState {
    members: BTreeMap<String, MemberState>,
    averaged: bool,
    corrections_ps: BTreeMap<String, i64>,
    excluded: Vec<String>,
    coordinator_done: Option<SimTime>,
}

#[derive(Clone, Debug)]
enum SessionState {
    Pending,
    Cristian(CristianState),
    Berkeley(BerkeleyState),
}

#[derive(Clone, Debug)]
struct Session {
    request: SyncRequest,
    start: SimTime,
    messages_sent: u32,
    state: SessionState,
    /// Set once the completion event is queued; later deliveries are ignored.
    finishing: bool,
    failure: Option<String>,
    report: Option<SyncReport>,
}

pub struct Engine {
    graph: NetworkGraph,
    attacks: Vec<AttackSpec>,
    config: EngineConfig,
    clocks: BTreeMap<String, SoftwareClock<f64>>,
    queue: BinaryHeap<Reverse<Event>>,
    now: SimTime,
    next_sequence: u64,
    next_message: u64,
    messages: BTreeMap<u64, Message>,
    sessions: Vec<Session>,
    trace: Vec<TraceRecord>,
}

impl Engine {
    /// Builds an engine. `clocks` maps node ids to the parameters of the clock
    /// they run; each node gets its own noise stream.
    pub fn new(
        graph: NetworkGraph,
        clocks: BTreeMap<String, ClockParameters<f64>>,
        attacks: Vec<AttackSpec>,
        config: EngineConfig,
    ) -> Self {
        let clocks = clocks.into_iter().map(|(id, p)| (id.clone(), SoftwareClock::new(id, p, config.seed))).collect();
        let mut engine = Self {
            graph,
            attacks,
            config,
            clocks,
            queue: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_sequence: 0,
            next_message: 1,
            messages: BTreeMap::new(),
            sessions: Vec::new(),
            trace: Vec::new(),
        };
        if engine.config.trace_attack_edges {
            for i in 0..engine.attacks.len() {
                let (start, end) = (SimTime::from_secs(engine.attacks[i].start_s), SimTime::from_secs(engine.attacks[i].end_s));
                for (t, starting) in [(start, true), (end, false)] {
                    if t >= SimTime::ZERO {
                        engine.push(t, EventKind::AttackEdge { attack: i, starting });
                    }
                }
            }
        }
        engine
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn attacks(&self) -> &[AttackSpec] {
        &self.attacks
    }

    pub fn clock(&self, node: &str) -> Option<&SoftwareClock<f64>> {
        self.clocks.get(node)
    }

    pub fn clock_mut(&mut self, node: &str) -> Option<&mut SoftwareClock<f64>> {
        self.clocks.get_mut(node)
    }

    pub fn message(&self, id: u64) -> Option<&Message> {
        self.messages.get(&id)
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.messages.values()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn trace_jsonl(&self) -> String {
        trace::to_jsonl(&self.trace)
    }

    pub fn trace_digest(&self) -> String {
        trace::digest(self.trace_jsonl().as_bytes())
    }

    pub fn report(&self, session: u64) -> Option<&SyncReport> {
        self.sessions.get(session as usize).and_then(|s| s.report.as_ref())
    }

    pub fn reports(&self) -> impl Iterator<Item = &SyncReport> {
        self.sessions.iter().filter_map(|s| s.report.as_ref())
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    fn view(&self) -> NetworkView<'_> {
        NetworkView::new(&self.graph, self.config.seed, &self.attacks)
    }

    fn push(&mut self, time: SimTime, kind: EventKind) -> u64 {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Event { time, sequence, kind }));
        sequence
    }

    /// Enqueues an event; returns its sequence number.
    pub fn schedule(&mut self, time: SimTime, kind: EventKind) -> Result<u64, EngineError> {
        if time < self.now {
            return Err(EngineError::PastEvent { at: time.ps(), now: self.now.ps() });
        }
        let known = match &kind {
            EventKind::MessageSend { message_id } | EventKind::HopArrival { message_id, .. } | EventKind::Delivery { message_id } => {
                self.messages.contains_key(message_id)
            }
            EventKind::Timeout { session, message_id } => {
                (*session as usize) < self.sessions.len() && self.messages.contains_key(message_id)
            }
            EventKind::SyncStep { session, .. } => (*session as usize) < self.sessions.len(),
            EventKind::AttackEdge { attack, .. } => *attack < self.attacks.len(),
        };
        if !known {
            return Err(EngineError::UnknownReference(format!("{kind:?}")));
        }
        Ok(self.push(time, kind))
    }

    /// Queues a background message from `src` to `dst` leaving at `t`.
    pub fn send_message(&mut self, src: &str, dst: &str, size_bits: f64, t: SimTime) -> Result<u64, EngineError> {
        self.queue_message(src, dst, size_bits, t, Payload::Background)
    }

    fn queue_message(&mut self, src: &str, dst: &str, size_bits: f64, t: SimTime, payload: Payload) -> Result<u64, EngineError> {
        for id in [src, dst] {
            if !self.graph.contains(id) {
                return Err(EngineError::UnknownNode(id.to_string()));
            }
        }
        if t < self.now {
            return Err(EngineError::PastEvent { at: t.ps(), now: self.now.ps() });
        }
        let id = self.next_message;
        self.next_message += 1;
        self.messages.insert(
            id,
            Message {
                id,
                source: src.to_string(),
                destination: dst.to_string(),
                size_bits,
                payload,
                send_time: t,
                delivery_time: None,
                route: None,
                status: MessageStatus::InFlight,
            },
        );
        self.push(t, EventKind::MessageSend { message_id: id });
        Ok(id)
    }

    /// Registers a synchronization session that begins at `t`.
    pub fn start_sync(&mut self, t: SimTime, request: SyncRequest) -> Result<u64, EngineError> {
        for node in request.participants() {
            if !self.clocks.contains_key(&node) {
                return if self.graph.contains(&node) {
                    Err(EngineError::NoClock(node))
                } else {
                    Err(EngineError::UnknownNode(node))
                };
            }
        }
        request.policy().validate().map_err(|e| EngineError::Sync(e.to_string()))?;
        let id = self.sessions.len() as u64;
        self.sessions.push(Session {
            request,
            start: t,
            messages_sent: 0,
            state: SessionState::Pending,
            finishing: false,
            failure: None,
            report: None,
        });
        self.schedule(t, EventKind::SyncStep { session: id, phase: SyncPhase::Start })?;
        Ok(id)
    }

    /// Starts a session now and executes events until it completes.
    pub fn run_sync(&mut self, request: SyncRequest) -> Result<SyncReport, EngineError> {
        let id = self.start_sync(self.now, request)?;
        loop {
            if let Some(r) = self.report(id) {
                return Ok(r.clone());
            }
            if self.step().is_none() {
                return Err(EngineError::Sync(format!("session {id} stalled with an empty event queue")));
            }
        }
    }

    /// Executes the next event, if any, and returns its trace record.
    pub fn step(&mut self) -> Option<TraceRecord> {
        let Reverse(event) = self.queue.pop()?;
        debug_assert!(event.time >= self.now);
        self.now = event.time;
        let mut rec = TraceRecord::new(event.time.ps(), event.sequence, RecordKind::Timeout);
        match event.kind {
            EventKind::MessageSend { message_id } => self.on_send(message_id, &mut rec),
            EventKind::HopArrival { message_id, hop, dropped } => self.on_hop(message_id, hop, dropped, &mut rec),
            EventKind::Delivery { message_id } => self.on_delivery(message_id, &mut rec),
            EventKind::Timeout { session, message_id } => self.on_timeout(session, message_id, &mut rec),
            EventKind::SyncStep { session, phase } => self.on_sync_step(session, phase, &mut rec),
            EventKind::AttackEdge { attack, starting } => {
                rec.kind = RecordKind::AttackEdge;
                let a = &self.attacks[attack];
                rec.nodes = vec![a.target.clone()];
                rec.detail = Some(format!("{} {}", a.kind.name(), if starting { "start" } else { "end" }));
            }
        }
        self.trace.push(rec.clone());
        Some(rec)
    }

    /// Executes every event at or before `t_end`, then advances the clock to
    /// `t_end`. Returns the records emitted by this call.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<&[TraceRecord], EngineError> {
        if t_end < self.now {
            return Err(EngineError::PastTarget { target: t_end.ps(), now: self.now.ps() });
        }
        let first = self.trace.len();
        while self.queue.peek().is_some_and(|Reverse(e)| e.time <= t_end) {
            self.step();
        }
        self.now = t_end;
        Ok(&self.trace[first..])
    }

    fn read(&self, node: &str) -> i64 {
        self.clocks[node].read_ps(self.now)
    }

    fn sync_record(&self, session: u64, phase: &str) -> SyncRecord {
        SyncRecord { session, algorithm: self.sessions[session as usize].request.algorithm(), phase: phase.to_string(), report: None }
    }

    fn on_send(&mut self, id: u64, rec: &mut TraceRecord) {
        rec.kind = RecordKind::MessageSend;
        let msg = self.messages[&id].clone();
        rec.message_id = Some(id);
        rec.nodes = vec![msg.source.clone(), msg.destination.clone()];
        if let Some(s) = msg.payload.session() {
            rec.sync = Some(self.sync_record(s, msg.payload.phase()));
            self.sessions[s as usize].messages_sent += 1;
        }
        let query = RouteQuery::new(&msg.source, &msg.destination, self.now, msg.size_bits, id);
        let routed = shortest_path(&self.view(), &query);
        let route = match routed {
            Ok(r) => r,
            Err(e) => {
                let detail = match e {
                    RoutingError::NoRoute(n) => n.to_string(),
                    other => other.to_string(),
                };
                rec.status = Some(MessageStatus::Blocked);
                rec.detail = Some(detail);
                self.messages.get_mut(&id).expect("known message").status = MessageStatus::Blocked;
                self.message_lost(id);
                return;
            }
        };
        rec.status = Some(MessageStatus::InFlight);
        rec.route = route.hops.clone();
        rec.breakdown = Some(BreakdownRecord::from(&route.breakdown));
        rec.attacks = route.breakdown.attacks.clone();

        let offsets = hop_offsets(&route.hops, &route.breakdown);
        let drop = self.view().drop_point(&route.hops, self.now, id);
        let last = route.hops.len() - 1;
        let until = drop.as_ref().map_or(last, |(k, _)| *k);
        for k in 1..=until {
            let t = self.now + offsets[k];
            if k == until && drop.is_some() {
                let tag = drop.as_ref().map(|(_, tag)| tag.clone());
                self.push(t, EventKind::HopArrival { message_id: id, hop: k, dropped: tag });
            } else if k == last {
                self.push(t, EventKind::Delivery { message_id: id });
            } else {
                self.push(t, EventKind::HopArrival { message_id: id, hop: k, dropped: None });
            }
        }
        self.messages.get_mut(&id).expect("known message").route = Some(route);
    }

    fn on_hop(&mut self, id: u64, hop: usize, dropped: Option<AttackTag>, rec: &mut TraceRecord) {
        rec.kind = RecordKind::HopArrival;
        rec.message_id = Some(id);
        let msg = &self.messages[&id];
        let node = msg.route.as_ref().map(|r| r.hops[hop].clone()).unwrap_or_default();
        rec.nodes = vec![node];
        if let Some(tag) = dropped {
            rec.status = Some(MessageStatus::Dropped);
            rec.attacks = vec![tag];
            self.messages.get_mut(&id).expect("known message").status = MessageStatus::Dropped;
            self.message_lost(id);
        } else {
            rec.status = Some(MessageStatus::InFlight);
        }
    }

    /// Schedules the timeout that a lost session message eventually surfaces as.
    fn message_lost(&mut self, id: u64) {
        let msg = self.messages[&id].clone();
        let Some(session) = msg.payload.session() else { return };
        let wait = self.timeout_wait(&msg);
        let at = std::cmp::max(self.now, msg.send_time + wait);
        self.push(at, EventKind::Timeout { session, message_id: id });
    }

    fn timeout_wait(&self, msg: &Message) -> i64 {
        let base = self.view().without_attacks();
        let there = RouteQuery::new(&msg.source, &msg.destination, msg.send_time, msg.size_bits, msg.id);
        let back = RouteQuery::new(&msg.destination, &msg.source, msg.send_time, msg.size_bits, msg.id);
        match (shortest_path(&base, &there), shortest_path(&base, &back)) {
            (Ok(a), Ok(b)) => {
                let rtt = a.breakdown.total_ps + b.breakdown.total_ps;
                ((rtt as f64 * self.config.timeout_factor).round_ties_even() as i64).max(1)
            }
            _ => secs_to_ps(self.config.fallback_timeout_s).max(1),
        }
    }

    fn on_delivery(&mut self, id: u64, rec: &mut TraceRecord) {
        rec.kind = RecordKind::Delivery;
        rec.message_id = Some(id);
        rec.status = Some(MessageStatus::Delivered);
        let msg = {
            let m = self.messages.get_mut(&id).expect("known message");
            m.status = MessageStatus::Delivered;
            m.delivery_time = Some(self.now);
            m.clone()
        };
        rec.nodes = vec![msg.source.clone(), msg.destination.clone()];
        if let Some(s) = msg.payload.session() {
            rec.sync = Some(self.sync_record(s, msg.payload.phase()));
            if self.clocks.contains_key(&msg.destination) {
                rec.clock_readings_ps.insert(msg.destination.clone(), self.read(&msg.destination));
            }
        }
        match msg.payload {
            Payload::Background => {}
            Payload::CristianRequest { session } => self.cristian_request_arrived(session, &msg),
            Payload::CristianReply { session, t_server_ps } => self.cristian_reply_arrived(session, &msg, t_server_ps, rec),
            Payload::BerkeleyPoll { session } => self.berkeley_poll_arrived(session, &msg),
            Payload::BerkeleyReply { session, t_member_ps } => self.berkeley_reply_arrived(session, &msg, t_member_ps, rec),
            Payload::BerkeleyCorrection { session, delta_ps } => self.berkeley_correction_arrived(session, &msg, delta_ps, rec),
        }
    }

    fn is_live(&self, session: u64) -> bool {
        let s = &self.sessions[session as usize];
        !s.finishing && matches!(s.state, SessionState::Cristian(_) | SessionState::Berkeley(_))
    }

    fn service_time(&self) -> i64 {
        secs_to_ps(self.config.server_service_s)
    }

    fn one_way(&self, id: u64) -> i64 {
        let m = &self.messages[&id];
        m.delivery_time.map_or(0, |d| d - m.send_time)
    }

    fn on_sync_step(&mut self, session: u64, phase: SyncPhase, rec: &mut TraceRecord) {
        rec.kind = RecordKind::SyncStep;
        match phase {
            SyncPhase::Start => {
                rec.sync = Some(self.sync_record(session, "start"));
                let request = self.sessions[session as usize].request.clone();
                for p in request.participants() {
                    rec.clock_readings_ps.insert(p.clone(), self.read(&p));
                }
                rec.nodes = request.participants();
                self.begin_session(session, &request);
            }
            SyncPhase::Complete => {
                let report = self.finish_session(session);
                for p in self.sessions[session as usize].request.participants() {
                    rec.clock_readings_ps.insert(p.clone(), self.read(&p));
                }
                rec.nodes = self.sessions[session as usize].request.participants();
                let mut sr = self.sync_record(session, "complete");
                sr.report = Some(report);
                rec.sync = Some(sr);
            }
        }
    }

    fn begin_session(&mut self, session: u64, request: &SyncRequest) {
        let bits = self.config.sync_message_bits;
        match request {
            SyncRequest::Cristian { client, server, .. } => {
                let t0_ps = self.read(client);
                let request_id = self
                    .queue_message(client, server, bits, self.now, Payload::CristianRequest { session })
                    .expect("participants validated at start_sync");
                self.sessions[session as usize].state =
                    SessionState::Cristian(CristianState { t0_ps, request: request_id, ..Default::default() });
            }
            SyncRequest::Berkeley { coordinator, members, .. } => {
                let mut state = BerkeleyState::default();
                for m in request.participants().into_iter().skip(1) {
                    let t0_ps = self.read(coordinator);
                    let poll = self
                        .queue_message(coordinator, &m, bits, self.now, Payload::BerkeleyPoll { session })
                        .expect("participants validated at start_sync");
                    state.members.insert(m, MemberState { t0_ps, poll, ..Default::default() });
                }
                let empty = members.iter().all(|m| m == coordinator);
                self.sessions[session as usize].state = SessionState::Berkeley(state);
                if empty {
                    self.abort(session, "berkeley round needs at least one member besides the coordinator");
                }
            }
        }
    }

    fn abort(&mut self, session: u64, why: &str) {
        let s = &mut self.sessions[session as usize];
        s.failure = Some(why.to_string());
        s.finishing = true;
        self.push(self.now, EventKind::SyncStep { session, phase: SyncPhase::Complete });
    }

    fn cristian_request_arrived(&mut self, session: u64, msg: &Message) {
        if !self.is_live(session) {
            return;
        }
        let t_server_ps = self.read(&msg.destination);
        let at = self.now + self.service_time();
        let reply = self
            .queue_message(&msg.destination, &msg.source, self.config.sync_message_bits, at, Payload::CristianReply { session, t_server_ps })
            .expect("participants validated at start_sync");
        if let SessionState::Cristian(st) = &mut self.sessions[session as usize].state {
            st.request_delivered = Some(self.now);
            st.reply = Some(reply);
        }
    }

    fn cristian_reply_arrived(&mut self, session: u64, msg: &Message, t_server_ps: i64, rec: &mut TraceRecord) {
        if !self.is_live(session) {
            return;
        }
        let client = msg.destination.clone();
        let (t_server_ps, tags) = self.view().spoof_reply(&client, self.now, t_server_ps);
        rec.attacks.extend(tags);
        let t1_ps = self.read(&client);
        let forward = {
            let SessionState::Cristian(st) = &self.sessions[session as usize].state else { return };
            self.one_way(st.request)
        };
        let backward = self.one_way(msg.id);
        let policy = self.sessions[session as usize].request.policy();
        let SessionState::Cristian(st) = &mut self.sessions[session as usize].state else { return };
        let delta = cristian_correction(st.t0_ps, t_server_ps, t1_ps);
        st.exchange = Some(SyncExchange {
            peer: msg.source.clone(),
            t0_client_ps: st.t0_ps,
            t_server_ps,
            t1_client_ps: t1_ps,
            rtt_ps: t1_ps - st.t0_ps,
            forward_delay_ps: forward,
            backward_delay_ps: backward,
        });
        st.correction_ps = Some(delta);
        let done = self.clocks.get_mut(&client).expect("validated").apply_correction(delta, policy, self.now).expect("policy validated");
        self.sessions[session as usize].finishing = true;
        self.push(done, EventKind::SyncStep { session, phase: SyncPhase::Complete });
    }

    fn berkeley_poll_arrived(&mut self, session: u64, msg: &Message) {
        if !self.is_live(session) {
            return;
        }
        let t_member_ps = self.read(&msg.destination);
        let at = self.now + self.service_time();
        let reply = self
            .queue_message(&msg.destination, &msg.source, self.config.sync_message_bits, at, Payload::BerkeleyReply { session, t_member_ps })
            .expect("participants validated at start_sync");
        if let SessionState::Berkeley(st) = &mut self.sessions[session as usize].state {
            if let Some(m) = st.members.get_mut(&msg.destination) {
                m.poll_delivered = Some(self.now);
                m.reply = Some(reply);
            }
        }
    }

    fn berkeley_reply_arrived(&mut self, session: u64, msg: &Message, t_member_ps: i64, rec: &mut TraceRecord) {
        if !self.is_live(session) {
            return;
        }
        let coordinator = msg.destination.clone();
        let (t_member_ps, tags) = self.view().spoof_reply(&coordinator, self.now, t_member_ps);
        rec.attacks.extend(tags);
        let t1_ps = self.read(&coordinator);
        let backward = self.one_way(msg.id);
        let poll = match &self.sessions[session as usize].state {
            SessionState::Berkeley(st) => st.members.get(&msg.source).map(|m| m.poll),
            _ => None,
        };
        let Some(poll) = poll else { return };
        let forward = self.one_way(poll);
        if let SessionState::Berkeley(st) = &mut self.sessions[session as usize].state {
            let m = st.members.get_mut(&msg.source).expect("member present");
            m.offset_ps = Some(estimated_offset(m.t0_ps, t_member_ps, t1_ps));
            m.exchange = Some(SyncExchange {
                peer: msg.source.clone(),
                t0_client_ps: m.t0_ps,
                t_server_ps: t_member_ps,
                t1_client_ps: t1_ps,
                rtt_ps: t1_ps - m.t0_ps,
                forward_delay_ps: forward,
                backward_delay_ps: backward,
            });
        }
        self.berkeley_maybe_average(session, rec);
    }

    fn berkeley_maybe_average(&mut self, session: u64, rec: &mut TraceRecord) {
        let (coordinator, threshold, policy) = match &self.sessions[session as usize].request {
            SyncRequest::Berkeley { coordinator, outlier_threshold_s, policy, .. } => {
                (coordinator.clone(), outlier_threshold_s.map(secs_to_ps), *policy)
            }
            _ => return,
        };
        let offsets = {
            let SessionState::Berkeley(st) = &self.sessions[session as usize].state else { return };
            if st.averaged || !st.members.values().all(MemberState::polled) {
                return;
            }
            st.members
                .iter()
                .filter_map(|(id, m)| m.offset_ps.map(|o| (id.clone(), o)))
                .collect::<BTreeMap<_, _>>()
        };
        if offsets.is_empty() {
            self.abort(session, "fewer than 2 reachable participants");
            return;
        }
        let plan = berkeley_plan(&coordinator, &offsets, threshold);
        rec.sync = Some(self.sync_record(session, "average"));
        let own = plan.corrections_ps[&coordinator];
        let coord_done = self.clocks.get_mut(&coordinator).expect("validated").apply_correction(own, policy, self.now).expect("policy validated");
        let bits = self.config.sync_message_bits;
        let mut sends = Vec::new();
        for (member, _) in &offsets {
            let delta_ps = plan.corrections_ps[member];
            let id = self
                .queue_message(&coordinator, member, bits, self.now, Payload::BerkeleyCorrection { session, delta_ps })
                .expect("participants validated at start_sync");
            sends.push((member.clone(), id));
        }
        if let SessionState::Berkeley(st) = &mut self.sessions[session as usize].state {
            st.averaged = true;
            st.corrections_ps = plan.corrections_ps.clone();
            st.excluded = plan.excluded.clone();
            st.coordinator_done = Some(coord_done);
            for (member, id) in sends {
                st.members.get_mut(&member).expect("member present").correction = Some(id);
            }
        }
    }

    fn berkeley_correction_arrived(&mut self, session: u64, msg: &Message, delta_ps: i64, _rec: &mut TraceRecord) {
        if !self.is_live(session) {
            return;
        }
        let policy = self.sessions[session as usize].request.policy();
        let done = self.clocks.get_mut(&msg.destination).expect("validated").apply_correction(delta_ps, policy, self.now).expect("policy validated");
        if let SessionState::Berkeley(st) = &mut self.sessions[session as usize].state {
            if let Some(m) = st.members.get_mut(&msg.destination) {
                m.applied_at = Some(done);
            }
        }
        self.berkeley_maybe_finish(session);
    }

    fn berkeley_maybe_finish(&mut self, session: u64) {
        let end = {
            let SessionState::Berkeley(st) = &self.sessions[session as usize].state else { return };
            if !st.averaged || !st.members.values().all(MemberState::settled) {
                return;
            }
            st.members
                .values()
                .filter_map(|m| m.applied_at)
                .chain(st.coordinator_done)
                .max()
                .unwrap_or(self.now)
        };
        self.push(std::cmp::max(end, self.now), EventKind::SyncStep { session, phase: SyncPhase::Complete });
        self.freeze(session);
    }

    fn freeze(&mut self, session: u64) {
        self.sessions[session as usize].finishing = true;
    }

    fn on_timeout(&mut self, session: u64, id: u64, rec: &mut TraceRecord) {
        rec.kind = RecordKind::Timeout;
        rec.message_id = Some(id);
        let msg = self.messages[&id].clone();
        rec.nodes = vec![msg.source.clone(), msg.destination.clone()];
        rec.status = Some(msg.status);
        rec.sync = Some(self.sync_record(session, msg.payload.phase()));
        if !self.is_live(session) {
            return;
        }
        match msg.payload {
            Payload::CristianRequest { .. } | Payload::CristianReply { .. } => {
                self.abort(session, &format!("{} message {id} lost", msg.payload.phase()));
            }
            Payload::BerkeleyPoll { .. } | Payload::BerkeleyReply { .. } => {
                let member = if matches!(msg.payload, Payload::BerkeleyPoll { .. }) { msg.destination } else { msg.source };
                if let SessionState::Berkeley(st) = &mut self.sessions[session as usize].state {
                    if let Some(m) = st.members.get_mut(&member) {
                        m.unreachable = true;
                    }
                }
                self.berkeley_maybe_average(session, rec);
                self.berkeley_maybe_finish(session);
            }
            Payload::BerkeleyCorrection { .. } => {
                if let SessionState::Berkeley(st) = &mut self.sessions[session as usize].state {
                    if let Some(m) = st.members.get_mut(&msg.destination) {
                        m.correction_lost = true;
                    }
                }
                self.berkeley_maybe_finish(session);
            }
            Payload::Background => {}
        }
    }

    /// Builds the final report. Residuals are read now, with every correction
    /// of the session fully in effect.
    fn finish_session(&mut self, session: u64) -> SyncReport {
        let s = &self.sessions[session as usize];
        let mut report = SyncReport {
            session,
            algorithm: s.request.algorithm(),
            status: SyncStatus::Completed,
            start_ps: s.start.ps(),
            end_ps: self.now.ps(),
            corrections_ps: BTreeMap::new(),
            residuals_ps: BTreeMap::new(),
            signed_residuals_ps: BTreeMap::new(),
            messages_sent: s.messages_sent,
            exchanges: Vec::new(),
            excluded: Vec::new(),
            unreachable: Vec::new(),
            failure: s.failure.clone(),
        };
        let residual = |node: &str, reference: &str, r: &mut SyncReport| {
            let d = self.read(node) - self.read(reference);
            r.signed_residuals_ps.insert(node.to_string(), d);
            r.residuals_ps.insert(node.to_string(), d.abs());
        };
        match (&s.request, &s.state) {
            (SyncRequest::Cristian { client, server, .. }, SessionState::Cristian(st)) => {
                report.exchanges.extend(st.exchange.clone());
                if let (Some(c), None) = (st.correction_ps, &s.failure) {
                    report.corrections_ps.insert(client.clone(), c);
                    residual(client, server, &mut report);
                }
                if s.failure.is_some() {
                    report.unreachable.push(server.clone());
                }
            }
            (SyncRequest::Berkeley { coordinator, .. }, SessionState::Berkeley(st)) => {
                report.corrections_ps = st.corrections_ps.clone();
                report.excluded = st.excluded.clone();
                for (id, m) in &st.members {
                    report.exchanges.extend(m.exchange.clone());
                    if m.unreachable || m.correction_lost {
                        report.unreachable.push(id.clone());
                        if m.correction_lost {
                            report.corrections_ps.remove(id);
                        }
                    }
                }
                if s.failure.is_none() && st.averaged {
                    residual(coordinator, coordinator, &mut report);
                    for (id, m) in &st.members {
                        if m.applied_at.is_some() {
                            residual(id, coordinator, &mut report);
                        }
                    }
                }
            }
            _ => {}
        }
        if report.failure.is_some() {
            report.status = SyncStatus::Aborted;
        }
        let s = &mut self.sessions[session as usize];
        s.finishing = true;
        s.report = Some(report.clone());
        report
    }
}
