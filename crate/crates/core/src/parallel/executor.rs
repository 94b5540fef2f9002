//! Bulk-synchronous execution of worker phases on a thread pool, with ordered
//! in-process message delivery.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use super::message::{Endpoint, Message, Payload, TraceEntry};
use crate::error::{GpError, Result};

/// A message before the router has numbered it.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub dst: Endpoint,
    pub payload: Payload,
}

impl Outgoing {
    pub fn to_worker(m: usize, payload: Payload) -> Self {
        Outgoing {
            dst: Endpoint::Worker(m),
            payload,
        }
    }

    pub fn to_master(payload: Payload) -> Self {
        Outgoing {
            dst: Endpoint::Master,
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTime {
    pub name: String,
    pub time: Duration,
}

/// Counters collected while a protocol runs.
#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub wall_time: Duration,
    pub phases: Vec<PhaseTime>,
    pub messages: usize,
    /// Payload size counted as 8 bytes per `f64`.
    pub bytes: usize,
    pub threads: usize,
    pub trace: Vec<TraceEntry>,
}

impl RunStats {
    pub fn phase_time(&self, name: &str) -> Option<Duration> {
        self.phases.iter().find(|p| p.name == name).map(|p| p.time)
    }

    /// The trace as CSV text with a header line.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from(super::message::TRACE_HEADER);
        s.push('\n');
        for e in &self.trace {
            s.push_str(&e.csv_line());
            s.push('\n');
        }
        s
    }
}

pub(crate) struct Executor {
    pool: rayon::ThreadPool,
    timeout: Duration,
    /// One inbox per worker plus the master's at the end.
    inboxes: Vec<Vec<Message>>,
    next_seq: u64,
    stats: RunStats,
    started: Instant,
}

impl Executor {
    pub fn new(workers: usize, threads: usize, timeout: Duration) -> Result<Self> {
        if threads == 0 {
            return Err(GpError::invalid("thread count must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .thread_name(|i| format!("lma-worker-{i}"))
            .build()
            .map_err(|e| GpError::invalid(format!("cannot start thread pool: {e}")))?;
        Ok(Executor {
            pool,
            timeout,
            inboxes: (0..=workers).map(|_| Vec::new()).collect(),
            next_seq: 0,
            stats: RunStats {
                threads,
                ..RunStats::default()
            },
            started: Instant::now(),
        })
    }

    fn num_workers(&self) -> usize {
        self.inboxes.len() - 1
    }

    fn slot(&self, ep: Endpoint) -> usize {
        match ep {
            Endpoint::Worker(m) => m,
            Endpoint::Master => self.num_workers(),
        }
    }

    /// Runs `f` on every worker concurrently. Each call gets the messages
    /// delivered to that worker so far; its output is delivered afterwards in
    /// (worker, emission) order, so delivery never depends on scheduling.
    pub fn run_phase<W, F>(&mut self, phase: &str, workers: &mut [W], f: F) -> Result<()>
    where
        W: Send,
        F: Fn(&mut W, Vec<Message>) -> Result<Vec<Outgoing>> + Sync,
    {
        let n = workers.len();
        debug_assert_eq!(n, self.num_workers());
        let inboxes: Vec<Vec<Message>> = (0..n)
            .map(|m| std::mem::take(&mut self.inboxes[m]))
            .collect();
        let start = Instant::now();
        let deadline = start + self.timeout;
        let (tx, rx) = crossbeam_channel::unbounded::<(usize, Result<Vec<Outgoing>>)>();
        let mut results: Vec<Option<Result<Vec<Outgoing>>>> = (0..n).map(|_| None).collect();
        let mut pending: Option<Vec<usize>> = None;
        let f = &f;
        self.pool.in_place_scope(|s| {
            for ((m, w), inbox) in workers.iter_mut().enumerate().zip(inboxes) {
                let tx = tx.clone();
                s.spawn(move |_| {
                    let r = catch_unwind(AssertUnwindSafe(|| f(w, inbox))).unwrap_or_else(|p| {
                        let detail = p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".into());
                        Err(GpError::invalid(format!("panicked: {detail}")))
                    });
                    // the receiver only goes away after a timeout
                    let _ = tx.send((m, r));
                });
            }
            drop(tx);
            let mut got = 0;
            while got < n {
                match rx.recv_deadline(deadline) {
                    Ok((m, r)) => {
                        results[m] = Some(r);
                        got += 1;
                    }
                    Err(_) => {
                        pending = Some((0..n).filter(|&m| results[m].is_none()).collect());
                        break;
                    }
                }
            }
        });
        self.stats.phases.push(PhaseTime {
            name: phase.to_string(),
            time: start.elapsed(),
        });
        if let Some(workers) = pending {
            return Err(GpError::Timeout {
                phase: phase.to_string(),
                workers,
            });
        }
        let mut outputs = Vec::with_capacity(n);
        for (m, r) in results.into_iter().enumerate() {
            match r.expect("every worker reported") {
                Ok(out) => outputs.push(out),
                Err(GpError::Protocol { phase, detail }) => {
                    return Err(GpError::Protocol {
                        phase,
                        detail: format!("{detail}; recent messages: [{}]", self.trace_excerpt(5)),
                    })
                }
                Err(e) => {
                    return Err(GpError::WorkerFailed {
                        phase: phase.to_string(),
                        worker: m,
                        detail: e.to_string(),
                    })
                }
            }
        }
        for (m, out) in outputs.into_iter().enumerate() {
            self.route(phase, Endpoint::Worker(m), out)?;
        }
        Ok(())
    }

    /// Runs a master step on the calling thread.
    pub fn master_phase<F>(&mut self, phase: &str, f: F) -> Result<()>
    where
        F: FnOnce(Vec<Message>) -> Result<Vec<Outgoing>>,
    {
        let start = Instant::now();
        let slot = self.num_workers();
        let inbox = std::mem::take(&mut self.inboxes[slot]);
        let out = f(inbox)?;
        self.stats.phases.push(PhaseTime {
            name: phase.to_string(),
            time: start.elapsed(),
        });
        self.route(phase, Endpoint::Master, out)
    }

    fn route(&mut self, phase: &str, src: Endpoint, out: Vec<Outgoing>) -> Result<()> {
        for o in out {
            if let Endpoint::Worker(d) = o.dst {
                if d >= self.num_workers() {
                    return Err(GpError::Protocol {
                        phase: phase.to_string(),
                        detail: format!("{src} addressed a message to unknown worker {d}"),
                    });
                }
            }
            let seq = self.next_seq;
            self.next_seq += 1;
            let (rows, cols) = o.payload.shape();
            self.stats.trace.push(TraceEntry {
                seq,
                phase: phase.to_string(),
                kind: o.payload.kind(),
                src,
                dst: o.dst,
                rows,
                cols,
            });
            self.stats.messages += 1;
            self.stats.bytes += 8 * o.payload.len_f64();
            let slot = self.slot(o.dst);
            self.inboxes[slot].push(Message {
                seq,
                src,
                dst: o.dst,
                payload: o.payload,
            });
        }
        Ok(())
    }

    /// Last few trace lines, for error reports.
    pub fn trace_excerpt(&self, lines: usize) -> String {
        let t = &self.stats.trace;
        t[t.len().saturating_sub(lines)..]
            .iter()
            .map(TraceEntry::csv_line)
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn finish(mut self) -> RunStats {
        self.stats.wall_time = self.started.elapsed();
        self.stats
    }
}
